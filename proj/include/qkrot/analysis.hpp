#pragma once

// Line-shape analysis of rotational distributions P_J: fit windows,
// exponential (localized) and Gaussian (diffusive) fits in log space, shape
// classification, and energy-curve diagnostics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qkrot/errors.hpp"
#include "qkrot/rotor_basis.hpp"

namespace qkrot {

enum class LineShape { Exponential, Gaussian };

inline std::string_view to_string(LineShape s) {
  return s == LineShape::Exponential ? "exponential" : "gaussian";
}

struct FitWindow {
  int j_min = 0;
  int j_max = 0;
  int step = 2;  // lattice spacing in J

  int sites() const { return j_max < j_min ? 0 : (j_max - j_min) / step + 1; }
};

struct FitOptions {
  int j_floor = 4;                   // first fitted J is the smallest allowed J >= j_floor
  double population_threshold = 0.01;  // last fitted J still holds more than this
  int j_lim = 21;                    // finite-pulse excitation limit
  double zero_floor = 1e-12;         // populations below this are floored before the log
  bool noise_floor_mask = false;     // drop sites below noise_floor from the fit
  double noise_floor = 5e-3;
};

inline constexpr int min_fit_sites = 3;

/// J_min = smallest allowed J >= 4; J_max = min(largest J with P_J > 1%, 21).
inline FitWindow fit_window(std::span<const double> p_of_J, const RotorSpec& spec, const FitOptions& opt = {}) {
  FitWindow w;
  w.step = spec.parity == Parity::Both ? 1 : 2;
  const int top = static_cast<int>(p_of_J.size()) - 1;
  w.j_min = opt.j_floor;
  while (w.j_min <= top && !spec.allows(w.j_min)) ++w.j_min;
  int last = -1;
  for (int J = 0; J <= top; ++J)
    if (spec.allows(J) && p_of_J[static_cast<std::size_t>(J)] > opt.population_threshold) last = J;
  w.j_max = std::min(last, opt.j_lim);
  while (w.j_max >= 0 && !spec.allows(w.j_max)) --w.j_max;
  if (w.sites() < min_fit_sites) {
    throw FitError("fit window [" + std::to_string(w.j_min) + ", " + std::to_string(w.j_max) +
                   "] has fewer than 3 lattice sites");
  }
  return w;
}

struct FitResult {
  LineShape model = LineShape::Exponential;
  double center = 0.0;     // J_c
  double width = 0.0;      // J_loc or J_diff (1/e)
  double amplitude = 0.0;  // P_J at the center
  double rms_log_residual = 0.0;
  FitWindow window;
  int points = 0;
  bool floored = false;  // some populations were floored at zero_floor
  // Linearized standard errors; NaN where a parameter is not identifiable.
  double se_center = std::numeric_limits<double>::quiet_NaN();
  double se_width = std::numeric_limits<double>::quiet_NaN();
  double se_amplitude = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct LogData {
  Eigen::VectorXd J;
  Eigen::VectorXd y;  // log P_J
  bool floored = false;
};

inline LogData log_data(std::span<const double> p_of_J, const FitWindow& w, const FitOptions& opt) {
  if (w.sites() < min_fit_sites) throw FitError("fit window has fewer than 3 lattice sites");
  if (w.j_max >= static_cast<int>(p_of_J.size())) throw FitError("fit window extends past the distribution");
  std::vector<double> js, ys;
  bool floored = false;
  for (int J = w.j_min; J <= w.j_max; J += w.step) {
    double p = p_of_J[static_cast<std::size_t>(J)];
    if (opt.noise_floor_mask && p < opt.noise_floor) continue;
    if (!(p > opt.zero_floor)) {
      p = opt.zero_floor;
      floored = true;
    }
    js.push_back(J);
    ys.push_back(std::log(p));
  }
  if (static_cast<int>(js.size()) < min_fit_sites)
    throw FitError("fewer than 3 sites left in the fit window after masking");
  LogData d;
  d.J = Eigen::Map<Eigen::VectorXd>(js.data(), static_cast<Eigen::Index>(js.size()));
  d.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  d.floored = floored;
  return d;
}

struct LinearFit {
  Eigen::VectorXd coef;
  double rss;
  bool full_rank;
};

inline LinearFit least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  LinearFit f{qr.solve(y), 0.0, qr.rank() == X.cols()};
  f.rss = (y - X * f.coef).squaredNorm();
  return f;
}

struct Candidate {
  double rss;
  double center;
  double log_amp;
  double width;
};

// Lower RSS wins; within rounding, the lower center wins.
inline bool better(const Candidate& a, const Candidate& b) {
  const double tol = 1e-12 * (1.0 + std::max(a.rss, b.rss));
  if (std::abs(a.rss - b.rss) > tol) return a.rss < b.rss;
  return a.center < b.center;
}

// Standard errors from the Jacobian of the log-model at the solution.
inline void standard_errors(FitResult& r, const Eigen::MatrixXd& jac, double rss) {
  const auto n = jac.rows();
  const auto k = jac.cols();
  if (n <= k) return;
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  if (lu.rank() < k) return;
  const Eigen::MatrixXd cov = (rss / static_cast<double>(n - k)) * lu.inverse();
  r.se_amplitude = r.amplitude * std::sqrt(cov(0, 0));
  if (k == 3) {
    r.se_center = std::sqrt(cov(1, 1));
    r.se_width = std::sqrt(cov(2, 2));
  } else {
    r.se_width = std::sqrt(cov(1, 1));
  }
}

}  // namespace detail

/// Least-squares fit of log P_J = log A - |J - J_c| / J_loc over the window,
/// J_c in [0, window.j_max].
///
/// Solved exactly: for fixed sign pattern of (J - J_c) the model is linear in
/// (log A, 1/J_loc, J_c/J_loc), so each segment between lattice sites is one
/// linear problem, and the segment ends are checked with J_c held fixed. The
/// global minimum over all candidates is returned (ties go to the lower J_c;
/// a one-sided decay therefore reports J_c = 0).
inline FitResult fit_exponential(std::span<const double> p_of_J, const FitWindow& window, const FitOptions& opt = {}) {
  const detail::LogData d = detail::log_data(p_of_J, window, opt);
  const auto n = d.J.size();
  const double hi = window.j_max;

  std::vector<double> breaks{0.0, hi};
  for (Eigen::Index i = 0; i < n; ++i)
    if (d.J(i) > 0.0 && d.J(i) < hi) breaks.push_back(d.J(i));
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  std::optional<detail::Candidate> best;
  auto offer = [&](const detail::Candidate& c) {
    if (!(c.width > 0.0) || !std::isfinite(c.width)) return;
    if (!best || detail::better(c, *best)) best = c;
  };

  for (double jc : breaks) {
    Eigen::MatrixXd X(n, 2);
    X.col(0).setOnes();
    X.col(1) = -(d.J.array() - jc).abs().matrix();
    const auto f = detail::least_squares(X, d.y);
    if (f.full_rank && f.coef(1) > 0.0) offer({f.rss, jc, f.coef(0), 1.0 / f.coef(1)});
  }
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double a = breaks[s], b = breaks[s + 1];
    const double mid = 0.5 * (a + b);
    Eigen::VectorXd sigma = (d.J.array() < mid).cast<double>() * 2.0 - 1.0;
    if (sigma.minCoeff() == sigma.maxCoeff()) continue;  // one-sided: covered by the fixed-J_c candidates
    Eigen::MatrixXd X(n, 3);
    X.col(0).setOnes();
    X.col(1) = sigma.cwiseProduct(d.J);
    X.col(2) = -sigma;
    const auto f = detail::least_squares(X, d.y);
    if (!f.full_rank || !(f.coef(1) > 0.0)) continue;
    const double jc = f.coef(2) / f.coef(1);
    if (jc > a && jc < b) offer({f.rss, jc, f.coef(0), 1.0 / f.coef(1)});
  }
  if (!best) {
    throw FitError("exponential fit: no decaying solution on window [" + std::to_string(window.j_min) + ", " +
                   std::to_string(window.j_max) + "] (" + std::to_string(breaks.size()) + " breakpoints tried)");
  }

  FitResult r;
  r.model = LineShape::Exponential;
  r.center = best->center;
  r.width = best->width;
  r.amplitude = std::exp(best->log_amp);
  r.rms_log_residual = std::sqrt(best->rss / static_cast<double>(n));
  r.window = window;
  r.points = static_cast<int>(n);
  r.floored = d.floored;

  const bool two_sided = (d.J.array() < r.center).any() && (d.J.array() > r.center).any();
  const Eigen::ArrayXd dist = (d.J.array() - r.center).abs();
  if (two_sided) {
    Eigen::MatrixXd jac(n, 3);
    jac.col(0).setOnes();
    jac.col(1) = ((d.J.array() - r.center).sign() / r.width).matrix();
    jac.col(2) = (dist / (r.width * r.width)).matrix();
    detail::standard_errors(r, jac, best->rss);
  } else {
    Eigen::MatrixXd jac(n, 2);
    jac.col(0).setOnes();
    jac.col(1) = (dist / (r.width * r.width)).matrix();
    detail::standard_errors(r, jac, best->rss);
  }
  return r;
}

namespace detail {

// Best (log A, k) for y = log A - k (J - jc)^2 with jc fixed; k must be > 0.
inline std::optional<Candidate> gaussian_at(const LogData& d, double jc) {
  Eigen::MatrixXd X(d.J.size(), 2);
  X.col(0).setOnes();
  X.col(1) = -(d.J.array() - jc).square().matrix();
  const auto f = least_squares(X, d.y);
  if (!f.full_rank || !(f.coef(1) > 0.0)) return std::nullopt;
  return Candidate{f.rss, jc, f.coef(0), 1.0 / std::sqrt(f.coef(1))};
}

inline constexpr int gaussian_scan_points = 2001;
inline constexpr int golden_iterations = 100;

}  // namespace detail

/// Least-squares fit of log P_J = log A - ((J - J_c) / J_diff)^2 over the
/// window, J_c in [0, window.j_max]. The unconstrained problem is a quadratic
/// polynomial fit; when its vertex falls outside the bounds (or it opens
/// upward) J_c is profiled on a uniform grid and refined by golden section.
inline FitResult fit_gaussian(std::span<const double> p_of_J, const FitWindow& window, const FitOptions& opt = {}) {
  const detail::LogData d = detail::log_data(p_of_J, window, opt);
  const auto n = d.J.size();
  const double hi = window.j_max;

  std::optional<detail::Candidate> best;
  {
    Eigen::MatrixXd X(n, 3);
    X.col(0).setOnes();
    X.col(1) = d.J;
    X.col(2) = d.J.array().square().matrix();
    const auto f = detail::least_squares(X, d.y);
    if (f.full_rank && f.coef(2) < 0.0) {
      const double jc = -f.coef(1) / (2.0 * f.coef(2));
      if (jc >= 0.0 && jc <= hi) {
        best = detail::Candidate{f.rss, jc, f.coef(0) - f.coef(2) * jc * jc, 1.0 / std::sqrt(-f.coef(2))};
      }
    }
  }
  if (!best) {
    int best_index = -1;
    const double step = hi / (detail::gaussian_scan_points - 1);
    for (int i = 0; i < detail::gaussian_scan_points; ++i) {
      const auto c = detail::gaussian_at(d, i * step);
      if (c && (!best || detail::better(*c, *best))) {
        best = c;
        best_index = i;
      }
    }
    if (best) {
      double lo = std::max(0.0, (best_index - 1) * step);
      double up = std::min(hi, (best_index + 1) * step);
      const double g = 0.5 * (std::sqrt(5.0) - 1.0);
      auto rss_at = [&](double jc) {
        const auto c = detail::gaussian_at(d, jc);
        return c ? c->rss : std::numeric_limits<double>::infinity();
      };
      double x1 = up - g * (up - lo), x2 = lo + g * (up - lo);
      double f1 = rss_at(x1), f2 = rss_at(x2);
      for (int it = 0; it < detail::golden_iterations && up - lo > 1e-12; ++it) {
        if (f1 <= f2) {
          up = x2, x2 = x1, f2 = f1;
          x1 = up - g * (up - lo), f1 = rss_at(x1);
        } else {
          lo = x1, x1 = x2, f1 = f2;
          x2 = lo + g * (up - lo), f2 = rss_at(x2);
        }
      }
      if (const auto c = detail::gaussian_at(d, 0.5 * (lo + up)); c && detail::better(*c, *best)) best = c;
    }
  }
  if (!best) {
    throw FitError("gaussian fit: no downward-curved solution with J_c in [0, " + std::to_string(window.j_max) +
                   "] after " + std::to_string(detail::gaussian_scan_points) + " scan points");
  }

  FitResult r;
  r.model = LineShape::Gaussian;
  r.center = best->center;
  r.width = best->width;
  r.amplitude = std::exp(best->log_amp);
  r.rms_log_residual = std::sqrt(best->rss / static_cast<double>(n));
  r.window = window;
  r.points = static_cast<int>(n);
  r.floored = d.floored;
  const Eigen::ArrayXd x = d.J.array() - r.center;
  Eigen::MatrixXd jac(n, 3);
  jac.col(0).setOnes();
  jac.col(1) = (2.0 * x / (r.width * r.width)).matrix();
  jac.col(2) = (2.0 * x.square() / (r.width * r.width * r.width)).matrix();
  detail::standard_errors(r, jac, best->rss);
  return r;
}

enum class ShapeLabel { Exponential, Gaussian, Ambiguous };

inline std::string_view to_string(ShapeLabel s) {
  switch (s) {
    case ShapeLabel::Exponential: return "exponential";
    case ShapeLabel::Gaussian: return "gaussian";
    case ShapeLabel::Ambiguous: return "ambiguous";
  }
  return "?";
}

inline constexpr double shape_ratio_threshold = 1.2;
// Residuals below this count as exact when forming the ratio.
inline constexpr double residual_floor = 1e-14;

struct ShapeClassification {
  ShapeLabel label;
  double score;  // larger rms residual / smaller rms residual
  FitResult exponential;
  FitResult gaussian;
};

/// The model with the smaller rms log residual, if it beats the other by more
/// than a factor 1.2; ambiguous otherwise.
inline ShapeClassification classify_shape(std::span<const double> p_of_J, const FitWindow& window,
                                          const FitOptions& opt = {}) {
  ShapeClassification c{ShapeLabel::Ambiguous, 1.0, fit_exponential(p_of_J, window, opt),
                        fit_gaussian(p_of_J, window, opt)};
  const double re = std::max(c.exponential.rms_log_residual, residual_floor);
  const double rg = std::max(c.gaussian.rms_log_residual, residual_floor);
  c.score = std::max(re, rg) / std::min(re, rg);
  if (c.score > shape_ratio_threshold) c.label = re < rg ? ShapeLabel::Exponential : ShapeLabel::Gaussian;
  return c;
}

struct WidthTrend {
  std::vector<std::pair<double, double>> width_by_strength;  // (P, width), sorted by P
  bool strictly_increasing;
};

inline WidthTrend width_vs_strength(std::vector<std::pair<double, FitResult>> results) {
  if (results.size() < 2) throw ConfigError("width_vs_strength needs at least two fits");
  std::stable_sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  WidthTrend t{{}, true};
  for (const auto& [P, fit] : results) {
    if (!t.width_by_strength.empty() && !(fit.width > t.width_by_strength.back().second)) t.strictly_increasing = false;
    t.width_by_strength.emplace_back(P, fit.width);
  }
  return t;
}

/// (max - min) / min of energies[from..to] (inclusive).
inline double relative_variation(std::span<const double> energies, int from, int to) {
  if (from < 0 || to >= static_cast<int>(energies.size()) || from > to)
    throw ConfigError("relative_variation: kick range out of bounds");
  const auto first = energies.begin() + from;
  const auto last = energies.begin() + to + 1;
  const auto [lo, hi] = std::minmax_element(first, last);
  return (*hi - *lo) / *lo;
}

/// First kick n after which every E(m), m >= n, stays within rel_tol of the
/// final energy.
inline int saturation_kick(std::span<const double> energies, double rel_tol = 0.1) {
  if (energies.empty()) throw ConfigError("saturation_kick: empty energy curve");
  const double final = energies.back();
  int n = static_cast<int>(energies.size()) - 1;
  while (n > 0 && std::abs(energies[static_cast<std::size_t>(n - 1)] - final) <= rel_tol * std::abs(final)) --n;
  return n;
}

}  // namespace qkrot
