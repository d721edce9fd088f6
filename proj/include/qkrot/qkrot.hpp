#pragma once

#include "qkrot/analysis.hpp"
#include "qkrot/config.hpp"
#include "qkrot/ensemble.hpp"
#include "qkrot/errors.hpp"
#include "qkrot/experiment.hpp"
#include "qkrot/io.hpp"
#include "qkrot/lattice_map.hpp"
#include "qkrot/propagation.hpp"
#include "qkrot/pulse_train.hpp"
#include "qkrot/rng.hpp"
#include "qkrot/rotor_basis.hpp"
#include "qkrot/units.hpp"
