#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace homsim {

enum class FitStatus {
  ok,
  max_iterations, ///< stopped before meeting either tolerance
  degenerate      ///< normal equations singular beyond rescue by damping
};

/// Outcome of a damped weighted least-squares fit. On failure the last
/// iterate and its residual norm are preserved so callers can report what
/// the solver was looking at when it gave up.
struct FitReport {
  std::vector<double> params;
  std::vector<double> param_errors; ///< sqrt of covariance diagonal, chi2_red scaled
  double residual_norm = 0.0;       ///< weighted sum of squared residuals at params
  double chi2_red = 0.0;
  int n_points = 0;
  int iterations = 0;
  FitStatus status = FitStatus::ok;
  bool converged() const { return status == FitStatus::ok; }
};

struct LmOptions {
  int max_iterations = 200;
  double lambda0 = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.3;
  double lambda_max = 1e12;
  double step_tol = 1e-9;     ///< relative parameter step on an accepted iteration
  double residual_tol = 1e-12; ///< relative residual decrease on an accepted iteration
};

namespace detail {

/// In-place Cholesky solve of a small SPD system. Returns false when a
/// pivot collapses, which the caller treats as "increase damping".
inline bool cholesky_solve(std::vector<double> a, std::vector<double> g, std::size_t p,
                           std::vector<double>& out) {
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * p + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * p + k] * a[j * p + k];
      if (i == j) {
        if (!(s > 0.0) || !std::isfinite(s)) return false;
        a[i * p + i] = std::sqrt(s);
      } else {
        a[i * p + j] = s / a[j * p + j];
      }
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    double s = g[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * p + k] * g[k];
    g[i] = s / a[i * p + i];
  }
  out.assign(p, 0.0);
  for (std::size_t ii = p; ii-- > 0;) {
    double s = g[ii];
    for (std::size_t k = ii + 1; k < p; ++k) s -= a[k * p + ii] * out[k];
    out[ii] = s / a[ii * p + ii];
  }
  return true;
}

inline bool cholesky_invert(std::vector<double> a, std::size_t p, std::vector<double>& inv) {
  inv.assign(p * p, 0.0);
  std::vector<double> e(p), col;
  for (std::size_t j = 0; j < p; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    if (!cholesky_solve(a, e, p, col)) return false;
    for (std::size_t i = 0; i < p; ++i) inv[i * p + j] = col[i];
  }
  return true;
}

}  // namespace detail

/// Levenberg-Marquardt fit of y_i ~ f(x_i; theta) with weights 1/sigma_i^2.
///
/// Model must provide:
///   double eval(const std::vector<double>& theta, double x) const;
///   void jacobian(const std::vector<double>& theta, double x, double* row) const;
///
/// The accepted-step residual norm is non-increasing by construction. An
/// optional validator rejects parameter vectors outside the model domain;
/// a rejected trial step just raises the damping like a failed step.
template <class Model>
FitReport lm_fit(const Model& model, const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& sigma, std::vector<double> theta,
                 const LmOptions& opt = {},
                 const std::function<bool(const std::vector<double>&)>& valid = {}) {
  const std::size_t n = x.size(), p = theta.size();
  if (y.size() != n || sigma.size() != n)
    throw std::invalid_argument("lm_fit: x, y, sigma lengths differ");
  if (n < p) throw std::invalid_argument("lm_fit: fewer points than parameters");
  for (double s : sigma)
    if (!(s > 0.0)) throw std::invalid_argument("lm_fit: every sigma must be positive");

  FitReport rep;
  rep.n_points = static_cast<int>(n);

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / (sigma[i] * sigma[i]);

  auto ssr_of = [&](const std::vector<double>& th) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = y[i] - model.eval(th, x[i]);
      s += w[i] * r * r;
    }
    return s;
  };

  std::vector<double> jrow(p), a(p * p), g(p), step, trial(p);
  auto build_normal = [&](const std::vector<double>& th) {
    std::fill(a.begin(), a.end(), 0.0);
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      model.jacobian(th, x[i], jrow.data());
      double r = y[i] - model.eval(th, x[i]);
      for (std::size_t j = 0; j < p; ++j) {
        g[j] += w[i] * r * jrow[j];
        for (std::size_t k = 0; k <= j; ++k) a[j * p + k] += w[i] * jrow[j] * jrow[k];
      }
    }
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = j + 1; k < p; ++k) a[j * p + k] = a[k * p + j];
  };

  double ssr = ssr_of(theta);
  rep.params = theta;
  rep.residual_norm = ssr;
  if (!std::isfinite(ssr)) {
    rep.status = FitStatus::degenerate;
    return rep;
  }

  double lambda = opt.lambda0;
  int it = 0;
  // Windowed stall check: a shallow valley can shed ~1e-8 of the residual
  // per step for thousands of steps; treat that as converged.
  double window_ssr = ssr;
  int window_start = 0;
  bool done = ssr == 0.0;
  while (!done && it < opt.max_iterations) {
    ++it;
    build_normal(theta);
    bool bad_axis = false;
    for (std::size_t j = 0; j < p; ++j)
      if (!(a[j * p + j] > 0.0) || !std::isfinite(a[j * p + j])) bad_axis = true;
    if (bad_axis) {
      rep.status = FitStatus::degenerate;
      break;
    }
    // Floor for near-flat axes: pure diagonal scaling leaves a zero-curvature
    // direction unconstrained and the solve shoots off along it.
    double max_diag = 0.0;
    for (std::size_t j = 0; j < p; ++j) max_diag = std::max(max_diag, a[j * p + j]);
    const double diag_floor = 1e-10 * max_diag;
    bool accepted = false;
    while (lambda <= opt.lambda_max) {
      std::vector<double> damped = a;
      for (std::size_t j = 0; j < p; ++j)
        damped[j * p + j] = damped[j * p + j] * (1.0 + lambda) + lambda * diag_floor;
      if (!detail::cholesky_solve(damped, g, p, step)) {
        lambda *= opt.lambda_up;
        continue;
      }
      for (std::size_t j = 0; j < p; ++j) trial[j] = theta[j] + step[j];
      if (valid && !valid(trial)) {
        lambda *= opt.lambda_up;
        continue;
      }
      double trial_ssr = ssr_of(trial);
      if (std::isfinite(trial_ssr) && trial_ssr <= ssr) {
        double rel_step = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
          double rs = std::fabs(step[j]) / (std::fabs(theta[j]) + 1e-300);
          if (rs > rel_step) rel_step = rs;
        }
        double rel_drop = (ssr - trial_ssr) / (ssr > 0.0 ? ssr : 1.0);
        theta = trial;
        ssr = trial_ssr;
        double lambda_used = lambda;
        lambda = std::max(lambda * opt.lambda_down, 1e-12);
        accepted = true;
        // The step/drop tests only mean "at a minimum" when damping is low;
        // a huge lambda makes every step tiny regardless of the landscape.
        if (lambda_used <= 1.0 && (rel_step < opt.step_tol || rel_drop < opt.residual_tol))
          done = true;
        if (ssr == 0.0) done = true;
        if (it - window_start >= 40) {
          if ((window_ssr - ssr) / (ssr > 0.0 ? ssr : 1.0) < 3e-6) done = true;
          window_ssr = ssr;
          window_start = it;
        }
        break;
      }
      lambda *= opt.lambda_up;
    }
    if (!accepted && rep.status == FitStatus::ok) {
      // Damping exhausted without a descent direction.
      rep.status = FitStatus::degenerate;
      break;
    }
  }
  if (!done && rep.status == FitStatus::ok) rep.status = FitStatus::max_iterations;

  rep.params = theta;
  rep.residual_norm = ssr;
  rep.iterations = it;
  rep.chi2_red = n > p ? ssr / static_cast<double>(n - p) : 0.0;
  rep.param_errors.assign(p, std::numeric_limits<double>::quiet_NaN());
  if (rep.status == FitStatus::ok) {
    build_normal(theta);
    std::vector<double> inv;
    if (detail::cholesky_invert(a, p, inv)) {
      double scale = n > p ? rep.chi2_red : 1.0;
      for (std::size_t j = 0; j < p; ++j) rep.param_errors[j] = std::sqrt(inv[j * p + j] * scale);
    } else {
      rep.status = FitStatus::degenerate;
    }
  }
  return rep;
}

}  // namespace homsim
