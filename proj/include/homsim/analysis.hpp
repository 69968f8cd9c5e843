#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "homsim/histogram.hpp"
#include "homsim/least_squares.hpp"

namespace homsim {

/// One delay setting of a scan: raw counts plus the normalized coincidence
/// estimate. g2 and g2_err are absent when a singles count is zero.
struct ScanPoint {
  double tau_ps = 0.0;
  std::uint64_t n_pulses = 0;
  std::uint64_t n1 = 0;
  std::uint64_t n2 = 0;
  std::uint64_t n_coinc = 0;
  std::optional<double> g2;
  std::optional<double> g2_err;
};

struct CoincidenceCounts {
  std::uint64_t n1 = 0;
  std::uint64_t n2 = 0;
  std::uint64_t n_coinc = 0;
  std::uint64_t n_slots = 0;
};

/// Count singles and same-slot coincidences in two sorted per-channel
/// timestamp streams. A slot contributes one coincidence when each channel
/// has a tag in it and some pair satisfies |ta - tb| <= window_ps. Refuses
/// unsorted input rather than sorting silently. n_slots is taken from
/// total_slots when given, otherwise from the last occupied slot.
inline CoincidenceCounts count_coincidences(const std::vector<std::uint64_t>& ch1,
                                            const std::vector<std::uint64_t>& ch2,
                                            std::uint64_t slot_period_ps, std::uint64_t window_ps,
                                            std::uint64_t total_slots = 0) {
  if (slot_period_ps == 0)
    throw std::domain_error("count_coincidences: slot_period_ps must be positive");
  for (auto* v : {&ch1, &ch2})
    for (std::size_t i = 1; i < v->size(); ++i)
      if ((*v)[i] < (*v)[i - 1])
        throw std::invalid_argument("count_coincidences: stream is not sorted");

  CoincidenceCounts out;
  out.n1 = ch1.size();
  out.n2 = ch2.size();
  std::size_t i = 0, j = 0;
  while (i < ch1.size() && j < ch2.size()) {
    std::uint64_t s1 = ch1[i] / slot_period_ps;
    std::uint64_t s2 = ch2[j] / slot_period_ps;
    if (s1 < s2) {
      ++i;
    } else if (s2 < s1) {
      ++j;
    } else {
      // Same slot: check every pairing, count the slot at most once.
      std::size_t i_end = i, j_end = j;
      while (i_end < ch1.size() && ch1[i_end] / slot_period_ps == s1) ++i_end;
      while (j_end < ch2.size() && ch2[j_end] / slot_period_ps == s1) ++j_end;
      bool hit = false;
      for (std::size_t a = i; a < i_end && !hit; ++a)
        for (std::size_t b = j; b < j_end && !hit; ++b) {
          std::uint64_t d = ch1[a] > ch2[b] ? ch1[a] - ch2[b] : ch2[b] - ch1[a];
          if (d <= window_ps) hit = true;
        }
      if (hit) ++out.n_coinc;
      i = i_end;
      j = j_end;
    }
  }
  std::uint64_t derived = 0;
  if (!ch1.empty()) derived = ch1.back() / slot_period_ps + 1;
  if (!ch2.empty()) derived = std::max(derived, ch2.back() / slot_period_ps + 1);
  out.n_slots = total_slots != 0 ? total_slots : derived;
  return out;
}

struct G2Estimate {
  std::optional<double> g2;
  std::optional<double> g2_err;
};

/// Normalized coincidence estimate g2 = n_coinc * n_slots / (n1 * n2) with
/// first-order Poisson error. Zero singles leave the estimate undefined;
/// zero coincidences get a one-event error bound instead of zero error.
inline G2Estimate estimate_g2(std::uint64_t n1, std::uint64_t n2, std::uint64_t n_coinc,
                              std::uint64_t n_slots) {
  if (n_coinc > std::min(n1, n2))
    throw std::domain_error("estimate_g2: n_coinc exceeds a singles count");
  if (n1 == 0 || n2 == 0 || n_slots == 0) return {};
  double ns = static_cast<double>(n_slots);
  double g2 = static_cast<double>(n_coinc) * ns / (static_cast<double>(n1) * static_cast<double>(n2));
  double nc_eff = n_coinc > 0 ? static_cast<double>(n_coinc) : 1.0;
  double g2_eff = nc_eff * ns / (static_cast<double>(n1) * static_cast<double>(n2));
  double err = g2_eff * std::sqrt(1.0 / nc_eff + 1.0 / static_cast<double>(n1) +
                                  1.0 / static_cast<double>(n2));
  return {g2, err};
}

enum class DipFitMode { constrained, free_baseline };

/// Lorentzian dip fit result. Parameter errors are the chi2_red-scaled
/// standard errors from the normal-equations covariance.
struct DipFit {
  double visibility = 0.0;
  double visibility_err = 0.0;
  double gamma_ps = 0.0;
  double gamma_err_ps = 0.0;
  double baseline = 1.0;
  double baseline_err = 0.0;
  double center_ps = 0.0;
  double center_err_ps = 0.0;
  double chi2_red = 0.0;
  double residual_norm = 0.0;
  int n_points = 0;
  bool converged = false;
  FitStatus status = FitStatus::ok;
  bool clamped_visibility = false; ///< fitted depth was negative, reported as 0
  bool flat_data = false;          ///< no contrast in the input at all
};

namespace detail {

/// g2(tau) = b - V * (G/2)^2 / ((tau - c)^2 + (G/2)^2); theta = (V, G, c[, b]).
struct DipModel {
  bool free_baseline;
  double eval(const std::vector<double>& th, double tau) const {
    double q = 0.25 * th[1] * th[1];
    double d = tau - th[2];
    double b = free_baseline ? th[3] : 1.0;
    return b - th[0] * q / (d * d + q);
  }
  void jacobian(const std::vector<double>& th, double tau, double* row) const {
    double q = 0.25 * th[1] * th[1];
    double d = tau - th[2];
    double den = d * d + q;
    double h = q / den;
    row[0] = -h;
    row[1] = -th[0] * 0.5 * th[1] * d * d / (den * den);
    row[2] = -th[0] * 2.0 * q * d / (den * den);
    if (free_baseline) row[3] = 1.0;
  }
};

}  // namespace detail

/// Fit the interference dip. Points with undefined g2 are skipped; at
/// least five usable points with positive errors are required. Initial
/// values come from the data: baseline from the maximum, depth from the
/// minimum, center from the argmin, width from the half-depth crossings.
inline DipFit fit_dip(const std::vector<ScanPoint>& points,
                      DipFitMode mode = DipFitMode::constrained) {
  std::vector<double> tau, y, err;
  for (const auto& p : points) {
    if (!p.g2 || !p.g2_err) continue;
    if (!(*p.g2_err > 0.0))
      throw std::invalid_argument("fit_dip: every usable point needs a positive g2_err");
    tau.push_back(p.tau_ps);
    y.push_back(*p.g2);
    err.push_back(*p.g2_err);
  }
  std::size_t n = tau.size();
  if (n < 5) throw std::invalid_argument("fit_dip: need at least 5 points with defined g2");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tau[a] < tau[b]; });

  std::size_t imin = 0, imax = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (y[i] < y[imin]) imin = i;
    if (y[i] > y[imax]) imax = i;
  }
  double span = tau[order.back()] - tau[order.front()];
  DipFit out;
  out.n_points = static_cast<int>(n);
  if (y[imax] - y[imin] == 0.0) {
    out.flat_data = true;
    out.converged = true;
    out.visibility = 0.0;
    out.baseline = y[imax];
    out.center_ps = 0.5 * (tau[order.front()] + tau[order.back()]);
    return out;
  }

  double b0 = y[imax];
  double v0 = y[imax] - y[imin];
  double c0 = tau[imin];
  // Half-depth crossings scanned outward from the minimum, on tau order.
  double half = b0 - 0.5 * v0;
  double left = tau[order.front()], right = tau[order.back()];
  for (std::size_t k = 0; k + 1 < n; ++k) {
    double ta = tau[order[k]], tb = tau[order[k + 1]];
    double ya = y[order[k]], yb = y[order[k + 1]];
    if (tb <= c0 && ya >= half && yb < half) left = ta + (half - ya) * (tb - ta) / (yb - ya);
    if (ta >= c0 && ya < half && yb >= half && right == tau[order.back()])
      right = ta + (half - ya) * (tb - ta) / (yb - ya);
  }
  double g0 = right - left;
  if (!(g0 > 0.0) || g0 > span) g0 = 0.25 * span;

  std::vector<double> theta = {v0, g0, c0};
  if (mode == DipFitMode::free_baseline) theta.push_back(b0);
  detail::DipModel model{mode == DipFitMode::free_baseline};
  auto valid = [](const std::vector<double>& th) { return th[1] > 0.0; };
  FitReport rep = lm_fit(model, tau, y, err, theta, {}, valid);

  out.visibility = rep.params[0];
  out.visibility_err = rep.param_errors[0];
  out.gamma_ps = rep.params[1];
  out.gamma_err_ps = rep.param_errors[1];
  out.center_ps = rep.params[2];
  out.center_err_ps = rep.param_errors[2];
  if (mode == DipFitMode::free_baseline) {
    out.baseline = rep.params[3];
    out.baseline_err = rep.param_errors[3];
  }
  out.chi2_red = rep.chi2_red;
  out.residual_norm = rep.residual_norm;
  out.status = rep.status;
  out.converged = rep.converged();
  if (out.visibility < 0.0) {
    out.visibility = 0.0;
    out.clamped_visibility = true;
  }
  return out;
}

/// Counts backing one delay of a two-decoy blocked-port comparison.
/// cc/gates are coincidences and gates per blocking setting; s1/s2 are the
/// singles of the unblocked run, which also normalize the bound.
struct DecoyRecord {
  double tau_ps = 0.0;
  std::uint64_t gates_both = 0, cc_both = 0, s1_both = 0, s2_both = 0;
  std::uint64_t gates_blocked1 = 0, cc_blocked1 = 0;
  std::uint64_t gates_blocked2 = 0, cc_blocked2 = 0;
};

struct DecoyBound {
  double tau_ps = 0.0;
  double p_ub = 0.0;
  double p_ub_err = 0.0;
  double p_cc_both = 0.0, p_cc_blocked1 = 0.0, p_cc_blocked2 = 0.0;
  double p_d1 = 0.0, p_d2 = 0.0;
};

/// Upper bound on the same-gate two-photon coincidence probability:
/// subtract the two blocked-port coincidence rates from the unblocked one
/// and normalize by the singles. First-order Poisson errors from the
/// backing counts; zero counts are propagated with a one-event variance.
/// A negative bound is reported as such, never clamped.
inline DecoyBound decoy_upper_bound(const DecoyRecord& r) {
  if (r.gates_both == 0 || r.gates_blocked1 == 0 || r.gates_blocked2 == 0)
    throw std::domain_error("decoy_upper_bound: every setting needs a positive gate count");
  if (r.s1_both == 0 || r.s2_both == 0)
    throw std::domain_error("decoy_upper_bound: zero singles, bound undefined");
  auto frac = [](std::uint64_t a, std::uint64_t b) {
    return static_cast<double>(a) / static_cast<double>(b);
  };
  DecoyBound out;
  out.tau_ps = r.tau_ps;
  out.p_cc_both = frac(r.cc_both, r.gates_both);
  out.p_cc_blocked1 = frac(r.cc_blocked1, r.gates_blocked1);
  out.p_cc_blocked2 = frac(r.cc_blocked2, r.gates_blocked2);
  out.p_d1 = frac(r.s1_both, r.gates_both);
  out.p_d2 = frac(r.s2_both, r.gates_both);
  double den = out.p_d1 * out.p_d2;
  double num = out.p_cc_both - out.p_cc_blocked1 - out.p_cc_blocked2;
  out.p_ub = num / den;
  auto cvar = [](std::uint64_t c, std::uint64_t g) {
    double ce = c > 0 ? static_cast<double>(c) : 1.0;
    return ce / (static_cast<double>(g) * static_cast<double>(g));
  };
  double var_num = cvar(r.cc_both, r.gates_both) + cvar(r.cc_blocked1, r.gates_blocked1) +
                   cvar(r.cc_blocked2, r.gates_blocked2);
  double rel_den_sq = 1.0 / static_cast<double>(r.s1_both) + 1.0 / static_cast<double>(r.s2_both);
  out.p_ub_err = std::sqrt(var_num / (den * den) + out.p_ub * out.p_ub * rel_den_sq);
  return out;
}

}  // namespace homsim
