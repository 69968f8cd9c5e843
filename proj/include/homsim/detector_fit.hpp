#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "homsim/detector.hpp"
#include "homsim/histogram.hpp"
#include "homsim/least_squares.hpp"

namespace homsim {

/// Detector response fit against a (usually folded) arrival-time histogram.
struct DetectorFit {
  DetectorResponseParams params;
  DetectorResponseParams param_errors; ///< same layout, standard errors
  double fwhm_ps = 0.0;                ///< width of the fitted curve
  double chi2_red = 0.0;
  double residual_norm = 0.0;
  int n_points = 0;
  int iterations = 0;
  bool converged = false;
  FitStatus status = FitStatus::ok;
};

namespace detail {

struct ResponseModel {
  double eval(const std::vector<double>& th, double t) const {
    DetectorResponseParams p{th[0], th[1], th[2], th[3], th[4]};
    return response_density(t, p);
  }
  void jacobian(const std::vector<double>& th, double t, double* row) const {
    double A = th[0], t0 = th[1], s = th[2], t1 = th[3], tau = th[4];
    if (t <= t1) {
      double z = (t - t0) / s;
      double f = A * std::exp(-0.5 * z * z);
      row[0] = f / A;
      row[1] = f * z / s;
      row[2] = f * z * z / s;
      row[3] = 0.0;
      row[4] = 0.0;
    } else {
      double z1 = (t1 - t0) / s;
      double f = A * std::exp(-0.5 * z1 * z1) * std::exp(-(t - t1) / tau);
      row[0] = f / A;
      row[1] = f * z1 / s;
      row[2] = f * z1 * z1 / s;
      row[3] = f * (1.0 / tau - z1 / s);
      row[4] = f * (t - t1) / (tau * tau);
    }
  }
};

}  // namespace detail

/// Fit the two-piece response curve to histogram counts with weights
/// 1/max(count, 1). Requires a localized peak: at least ten nonempty bins
/// and real contrast. A fit whose width swallows the whole histogram is
/// reported as degenerate rather than returned as a bogus optimum.
inline DetectorFit fit_detector_response(const Histogram& hist) {
  const std::size_t nb = hist.counts.size();
  std::size_t nonempty = 0;
  for (auto c : hist.counts) nonempty += c > 0 ? 1 : 0;
  if (nonempty < 10)
    throw std::invalid_argument("fit_detector_response: need at least 10 nonempty bins");

  std::vector<double> x(nb), y(nb), sig(nb);
  double bw = static_cast<double>(hist.bin_width_ps);
  std::size_t peak = 0;
  for (std::size_t i = 0; i < nb; ++i) {
    x[i] = static_cast<double>(hist.origin_ps) + (static_cast<double>(i) + 0.5) * bw;
    y[i] = static_cast<double>(hist.counts[i]);
    sig[i] = std::sqrt(std::max(y[i], 1.0));
    if (y[i] > y[peak]) peak = i;
  }

  // Data-driven start: peak bin for amplitude and position, half-maximum
  // crossings for the width scale.
  double a0 = y[peak];
  double t00 = x[peak];
  double half = 0.5 * a0;
  double lo = x.front(), hi = x.back();
  for (std::size_t i = 0; i + 1 <= peak && i + 1 < nb; ++i)
    if (y[i] < half && y[i + 1] >= half) lo = x[i] + (half - y[i]) * bw / (y[i + 1] - y[i]);
  for (std::size_t i = peak; i + 1 < nb; ++i)
    if (y[i] >= half && y[i + 1] < half) {
      hi = x[i] + (y[i] - half) * bw / (y[i] - y[i + 1]);
      break;
    }
  double fw0 = hi - lo;
  double full_span = x.back() - x.front() + bw;
  if (!(fw0 > 0.0) || fw0 > 0.9 * full_span) fw0 = 4.0 * bw;
  double s0 = std::max(fw0 / 2.3548, 0.25 * bw);

  auto valid = [](const std::vector<double>& th) {
    return th[0] > 0.0 && th[2] > 0.0 && th[4] > 0.0 && th[3] >= th[1];
  };
  // A TDC-coarse histogram underdetermines the junction; the solver can
  // spend O(1000) cheap iterations in that valley before the stall check
  // fires, so give it room.
  LmOptions opt;
  opt.max_iterations = 12000;

  // The junction pair makes the landscape multimodal: a start with the
  // junction too close to the peak settles into a shallow local basin, and
  // t1 - t0 = sigma with tau = sigma sits exactly on the ridge where the
  // junction position has zero gradient. Start the junction at several
  // offsets and keep the best converged candidate.
  FitReport rep;
  bool have = false;
  for (double k : {0.3, 0.6, 1.0, 1.6, 2.4}) {
    std::vector<double> theta = {a0, t00, s0, t00 + k * s0, 0.9 * s0};
    FitReport cand = lm_fit(detail::ResponseModel{}, x, y, sig, theta, opt, valid);
    bool better = !have || (cand.converged() && !rep.converged()) ||
                  (cand.converged() == rep.converged() && cand.residual_norm < rep.residual_norm);
    if (better) {
      rep = cand;
      have = true;
    }
  }

  DetectorFit out;
  out.params = {rep.params[0], rep.params[1], rep.params[2], rep.params[3], rep.params[4]};
  out.param_errors = {rep.param_errors[0], rep.param_errors[1], rep.param_errors[2],
                      rep.param_errors[3], rep.param_errors[4]};
  out.chi2_red = rep.chi2_red;
  out.residual_norm = rep.residual_norm;
  out.n_points = rep.n_points;
  out.iterations = rep.iterations;
  out.status = rep.status;
  out.converged = rep.converged();
  if (out.converged) {
    out.fwhm_ps = response_fwhm(out.params);
    if (out.fwhm_ps > full_span) {
      out.status = FitStatus::degenerate;
      out.converged = false;
    }
  }
  return out;
}

}  // namespace homsim
