#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "homsim/rng.hpp"

namespace homsim {

/// Single-photon detector timing response. Gaussian rise around t0_ps that
/// switches to an exponential tail at the crossover t1_ps:
///
///   f(t) = amplitude * exp(-(t - t0)^2 / (2 sigma^2))          for t <= t1
///   f(t) = f(t1) * exp(-(t - t1) / tau_decay)                  for t >  t1
///
/// The two pieces agree at t1, so the curve is continuous. Defaults are
/// chosen so that this response, convolved with the default optical pulse
/// and the TDC bin, reproduces the bench-measured 145 ps histogram width.
struct DetectorResponseParams {
  double amplitude = 1.0;
  double t0_ps = 0.0;
  double sigma_ps = 22.5;
  double t1_ps = 22.5;
  double tau_decay_ps = 28.8;
};

/// Gated detection channel bookkeeping parameters.
struct GateParams {
  double gate_width_ps = 3500.0;
  std::uint64_t dead_time_ps = 3000000;
  std::uint32_t tdc_bin_ps = 81;
  double afterpulse_prob = 0.01;
};

/// One recorded detection event. Timestamps are absolute picoseconds,
/// already quantized to the TDC grid.
struct TimeTag {
  std::uint64_t timestamp_ps;
  std::uint8_t channel;
};

inline void validate_response(const DetectorResponseParams& p) {
  if (!(p.amplitude > 0.0)) throw std::domain_error("response: amplitude must be positive");
  if (!(p.sigma_ps >= 0.0)) throw std::domain_error("response: sigma_ps must be non-negative");
  if (!(p.tau_decay_ps >= 0.0))
    throw std::domain_error("response: tau_decay_ps must be non-negative");
  if (!(p.t1_ps >= p.t0_ps)) throw std::domain_error("response: t1_ps must be >= t0_ps");
}

inline double response_density(double t_ps, const DetectorResponseParams& p) {
  if (t_ps <= p.t1_ps) {
    double z = (t_ps - p.t0_ps) / p.sigma_ps;
    return p.amplitude * std::exp(-0.5 * z * z);
  }
  double z1 = (p.t1_ps - p.t0_ps) / p.sigma_ps;
  return p.amplitude * std::exp(-0.5 * z1 * z1) * std::exp(-(t_ps - p.t1_ps) / p.tau_decay_ps);
}

/// Unnormalized masses of the two response pieces: the truncated Gaussian
/// up to t1 and the exponential tail beyond it.
inline std::pair<double, double> response_piece_masses(const DetectorResponseParams& p) {
  double z1 = (p.t1_ps - p.t0_ps) / p.sigma_ps;
  double gauss = p.amplitude * p.sigma_ps * 2.50662827463100050242 * normal_cdf(z1);
  double tail = p.amplitude * p.tau_decay_ps * std::exp(-0.5 * z1 * z1);
  return {gauss, tail};
}

/// CDF of the normalized response, for goodness-of-fit checks.
inline double response_cdf(double t_ps, const DetectorResponseParams& p) {
  auto [mg, mt] = response_piece_masses(p);
  double m = mg + mt;
  if (!(m > 0.0) || !std::isfinite(m)) return t_ps < p.t0_ps ? 0.0 : 1.0;
  if (t_ps <= p.t1_ps) {
    double part = p.amplitude * p.sigma_ps * 2.50662827463100050242 *
                  normal_cdf((t_ps - p.t0_ps) / p.sigma_ps);
    return part / m;
  }
  return (mg + mt * (1.0 - std::exp(-(t_ps - p.t1_ps) / p.tau_decay_ps))) / m;
}

/// Full width at half maximum of the response curve, located by bisection
/// on each flank of the peak.
inline double response_fwhm(const DetectorResponseParams& p) {
  validate_response(p);
  double peak_t = p.t0_ps;
  double peak = response_density(peak_t, p);
  double half = 0.5 * peak;
  auto bisect = [&](double lo, double hi, bool rising) {
    for (int i = 0; i < 200; ++i) {
      double mid = 0.5 * (lo + hi);
      bool above = response_density(mid, p) > half;
      if (above == rising)
        hi = mid;
      else
        lo = mid;
      if (hi - lo < 1e-9) break;
    }
    return 0.5 * (lo + hi);
  };
  double left_lo = peak_t - 40.0 * std::max(p.sigma_ps, 1e-9);
  double left = bisect(left_lo, peak_t, true);
  double right_hi = peak_t;
  double span = std::max({p.sigma_ps, p.tau_decay_ps, 1e-9});
  do {
    right_hi += 4.0 * span;
  } while (response_density(right_hi, p) > half && right_hi < peak_t + 1e7);
  double right = bisect(peak_t, right_hi, false);
  return right - left;
}

/// Draw a detection delay from the normalized response. Inverse-CDF on
/// both pieces: the truncated Gaussian uses the rational inverse-CDF from
/// rng.hpp, the tail is inverted in closed form. Draw order is fixed:
/// piece selector first, position second. Degenerate widths collapse to t0.
inline double sample_jitter(const DetectorResponseParams& p, SplitMix64& rng) {
  auto [mg, mt] = response_piece_masses(p);
  double m = mg + mt;
  double u = rng.next_double();
  double v = (static_cast<double>(rng.next_u64() >> 11) + 0.5) * 0x1.0p-53; // open (0, 1)
  if (!(m > 0.0) || !std::isfinite(m)) return p.t0_ps;
  if (u * m < mg) {
    double cap = normal_cdf((p.t1_ps - p.t0_ps) / p.sigma_ps);
    return p.t0_ps + p.sigma_ps * normal_quantile(v * cap);
  }
  return p.t1_ps - p.tau_decay_ps * std::log(v);
}

/// Why a candidate click did or did not become a tag.
enum class TagDrop : std::uint8_t { accepted, outside_gate, dead };

/// Afterpulse scheduled for a later gate of the same channel.
struct PendingAfterpulse {
  std::uint64_t slot;
  double time_in_slot_ps;
};

/// Mutable per-channel detection state threaded through the event chain.
struct ChannelState {
  // Far enough in the past that the first candidate is never dead-blocked.
  std::int64_t last_accept_ps = std::numeric_limits<std::int64_t>::min() / 2;
  std::vector<PendingAfterpulse> pending;
};

struct TagOutcome {
  TagDrop drop;
  TimeTag tag{}; // valid only when drop == accepted
};

/// Run one candidate click (photon, dark, or afterpulse; any jitter already
/// applied) through gate check, dead time, TDC quantization and afterpulse
/// scheduling. Dead time is enforced on quantized timestamps, so the
/// emitted stream satisfies the >= dead_time gap invariant exactly and the
/// blanking intervals can be reconstructed from the tags alone.
inline TagOutcome process_candidate(std::uint64_t slot, double time_in_slot_ps,
                                    double rep_period_ps, const GateParams& gate,
                                    std::uint8_t channel, ChannelState& state, SplitMix64& rng) {
  if (time_in_slot_ps < 0.0 || time_in_slot_ps > gate.gate_width_ps)
    return {TagDrop::outside_gate, {}};
  double t_abs = static_cast<double>(slot) * rep_period_ps + time_in_slot_ps;
  std::uint64_t q =
      static_cast<std::uint64_t>(std::floor(t_abs / gate.tdc_bin_ps)) * gate.tdc_bin_ps;
  auto qi = static_cast<std::int64_t>(q);
  if (qi - state.last_accept_ps < static_cast<std::int64_t>(gate.dead_time_ps))
    return {TagDrop::dead, {}};
  state.last_accept_ps = qi;
  // One decision draw per accepted tag keeps the stream layout fixed.
  double u = rng.next_double();
  if (u < gate.afterpulse_prob) {
    auto rep = static_cast<std::uint64_t>(rep_period_ps);
    std::uint64_t expiry_slot = (q + gate.dead_time_ps) / rep;
    auto k = static_cast<std::uint64_t>(rng.next_double() * 10.0);
    if (k > 9) k = 9;
    double t_ap = rng.next_double() * gate.gate_width_ps;
    state.pending.push_back({expiry_slot + 1 + k, t_ap});
  }
  return {TagDrop::accepted, TimeTag{q, channel}};
}

/// Photon detection attempt: samples response jitter for a photon arriving
/// at time_in_slot_ps inside the given slot, then runs the candidate chain.
inline TagOutcome tag_event(std::uint64_t slot, double photon_time_in_slot_ps,
                            double rep_period_ps, const GateParams& gate,
                            const DetectorResponseParams& response, std::uint8_t channel,
                            ChannelState& state, SplitMix64& rng) {
  double t = photon_time_in_slot_ps + sample_jitter(response, rng);
  return process_candidate(slot, t, rep_period_ps, gate, channel, state, rng);
}

}  // namespace homsim
