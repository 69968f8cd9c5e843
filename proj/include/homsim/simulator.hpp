#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "homsim/analysis.hpp"
#include "homsim/detector.hpp"
#include "homsim/physics.hpp"
#include "homsim/rng.hpp"

namespace homsim {

enum class BlockMode { none, block1, block2 };

/// Complete description of one bench run. Defaults reproduce the reference
/// bench: 100 MHz gated operation, weak pulses, long dead time, coarse TDC.
struct ExperimentConfig {
  SourceParams source1;
  SourceParams source2;
  OverlapModel overlap;
  ChannelParams det1;
  ChannelParams det2;
  GateParams gate;
  DetectorResponseParams response;
  std::uint64_t n_pulses = 1000000;
  std::uint64_t seed = 1;
  BlockMode block = BlockMode::none;
  double emission_offset_ps = 1750.0;      ///< pulse center inside the gate
  double coincidence_window_ps = 3500.0;   ///< |t1 - t2| acceptance for a coincidence
};

inline void validate_config(const ExperimentConfig& c) {
  auto fail = [](const char* msg) { throw std::domain_error(std::string("config: ") + msg); };
  for (const SourceParams* s : {&c.source1, &c.source2}) {
    if (!(s->mu >= 0.0)) fail("mu must be non-negative");
    if (!(s->pulse_fwhm_ps >= 0.0)) fail("pulse_fwhm_ps must be non-negative");
    if (!(s->rep_period_ps >= 1.0)) fail("rep_period_ps must be at least 1 ps");
    if (s->rep_period_ps != std::floor(s->rep_period_ps))
      fail("rep_period_ps must be an integer number of ps");
  }
  if (c.source1.rep_period_ps != c.source2.rep_period_ps) fail("sources must share rep_period_ps");
  if (!(c.overlap.max_overlap >= 0.0 && c.overlap.max_overlap <= 1.0))
    fail("max_overlap outside [0, 1]");
  if (!(c.overlap.gamma_ps > 0.0)) fail("gamma_ps must be positive");
  for (const ChannelParams* d : {&c.det1, &c.det2}) {
    if (!(d->efficiency >= 0.0 && d->efficiency <= 1.0)) fail("efficiency outside [0, 1]");
    if (!(d->dark_prob >= 0.0 && d->dark_prob < 1.0)) fail("dark_prob outside [0, 1)");
  }
  if (!(c.gate.gate_width_ps > 0.0)) fail("gate_width_ps must be positive");
  if (c.gate.gate_width_ps > c.source1.rep_period_ps) fail("gate_width_ps exceeds rep_period_ps");
  if (c.gate.tdc_bin_ps == 0) fail("tdc_bin_ps must be positive");
  if (!(c.gate.afterpulse_prob >= 0.0 && c.gate.afterpulse_prob < 1.0))
    fail("afterpulse_prob outside [0, 1)");
  validate_response(c.response);
  if (c.n_pulses == 0) fail("n_pulses must be positive");
  if (!(c.emission_offset_ps >= 0.0 && c.emission_offset_ps <= c.gate.gate_width_ps))
    fail("emission_offset_ps outside the gate");
  if (!(c.coincidence_window_ps >= 0.0)) fail("coincidence_window_ps must be non-negative");
}

/// Gaussian emission time inside the slot, one uniform per draw.
inline double sample_emission_time(double fwhm_ps, double center_ps, SplitMix64& rng) {
  constexpr double kFwhmToSigma = 0.42466090014400952136; // 1 / (2 sqrt(2 ln 2))
  return center_ps + fwhm_ps * kFwhmToSigma * sample_normal(rng);
}

struct PointDiagnostics {
  std::uint64_t candidates = 0;
  std::uint64_t dropped_gate = 0;
  std::uint64_t dropped_dead = 0;
  std::uint64_t afterpulses_scheduled = 0;
};

struct PointResult {
  ScanPoint point;
  std::array<std::vector<std::uint64_t>, 2> tags; ///< per-channel quantized timestamps
  PointDiagnostics diag;
};

namespace detail {

/// Documented substream layout: point_key = substream(seed, point_index),
/// slot generator = substream(point_key, slot_index). Every draw of a slot
/// comes from its own generator, so slot outcomes are independent of how
/// many draws neighbouring slots consumed.
inline std::uint64_t point_stream_key(std::uint64_t seed, std::uint64_t point_index) {
  return SplitMix64::substream(seed, point_index).state();
}

}  // namespace detail

/// Simulate one delay setting. Per slot and channel at most one candidate
/// click exists (photon, dark, or scheduled afterpulse; earliest wins) and
/// is pushed through the gate / dead-time / TDC chain. The returned counts
/// are exactly what count_coincidences reports on the emitted streams.
///
/// Slot draw order, fixed for reproducibility: phase (only when the
/// interference amplitude is nonzero), then per channel the click test,
/// the click classification, and the candidate time draws.
inline PointResult simulate_point(const ExperimentConfig& cfg, double tau_ps,
                                  std::uint64_t point_index = 0) {
  validate_config(cfg);
  const double mu1 = cfg.block == BlockMode::block1 ? 0.0 : cfg.source1.mu;
  const double mu2 = cfg.block == BlockMode::block2 ? 0.0 : cfg.source2.mu;
  const double xi_sq = overlap_sq(tau_ps, cfg.overlap);
  const double s = 0.5 * (mu1 + mu2);
  const double amp = std::sqrt(mu1 * mu2 * xi_sq);
  const double rep = cfg.source1.rep_period_ps;
  const double gate_w = cfg.gate.gate_width_ps;
  const std::array<const ChannelParams*, 2> det{&cfg.det1, &cfg.det2};
  const std::array<const SourceParams*, 2> src{&cfg.source1, &cfg.source2};

  // exp(-eta*(s +- amp*cos(phi))) = base * swing^{-+1} when efficiencies
  // match; the general path pays a second exp.
  const bool same_eta = cfg.det1.efficiency == cfg.det2.efficiency;
  const std::array<double, 2> base{std::exp(-cfg.det1.efficiency * s),
                                   std::exp(-cfg.det2.efficiency * s)};
  const std::array<double, 2> one_minus_dark{1.0 - cfg.det1.dark_prob, 1.0 - cfg.det2.dark_prob};

  const std::uint64_t point_key = detail::point_stream_key(cfg.seed, point_index);

  PointResult res;
  res.point.tau_ps = tau_ps;
  res.point.n_pulses = cfg.n_pulses;
  {
    double p_guess = click_prob(s, cfg.det1) + click_prob(s, cfg.det2);
    auto cap = static_cast<std::size_t>(static_cast<double>(cfg.n_pulses) * 0.7 * p_guess) + 64;
    res.tags[0].reserve(cap);
    res.tags[1].reserve(cap);
  }

  std::array<ChannelState, 2> state;

  for (std::uint64_t slot = 0; slot < cfg.n_pulses; ++slot) {
    SplitMix64 rng = SplitMix64::substream(point_key, slot);
    double swing = 1.0;
    double cos_phi = 0.0;
    if (amp != 0.0) {
      double phi = 6.28318530717958647692 * rng.next_double();
      cos_phi = std::cos(phi);
      if (same_eta) swing = std::exp(-cfg.det1.efficiency * amp * cos_phi);
    }
    for (int c = 0; c < 2; ++c) {
      // Mean photons at this output for the drawn phase: s +- amp*cos(phi).
      double e_photon;
      if (amp == 0.0) {
        e_photon = base[c];
      } else if (same_eta) {
        e_photon = c == 0 ? base[0] * swing : base[1] / swing;
      } else {
        double n_c = c == 0 ? s + amp * cos_phi : s - amp * cos_phi;
        e_photon = std::exp(-det[c]->efficiency * n_c);
      }
      double q = 1.0 - e_photon;                        // photon click probability
      double p_total = 1.0 - one_minus_dark[c] * e_photon; // photon or dark
      bool have_candidate = false;
      double t_cand = 0.0;
      double u = rng.next_double();
      if (u < p_total) {
        double v = rng.next_double() * p_total;
        double p_photon_only = q * one_minus_dark[c];
        double p_dark_only = det[c]->dark_prob * (1.0 - q);
        bool photon = false, dark = false;
        if (v < p_photon_only)
          photon = true;
        else if (v < p_photon_only + p_dark_only)
          dark = true;
        else
          photon = dark = true;
        if (photon) {
          double center = cfg.emission_offset_ps + (c == 1 ? tau_ps : 0.0);
          t_cand = sample_emission_time(src[c]->pulse_fwhm_ps, center, rng) +
                   sample_jitter(cfg.response, rng);
          have_candidate = true;
        }
        if (dark) {
          double t_dark = rng.next_double() * gate_w;
          if (!have_candidate || t_dark < t_cand) t_cand = t_dark;
          have_candidate = true;
        }
      }
      // A scheduled afterpulse competes with this slot's candidate; the
      // detector fires once per gate, at the earliest cause.
      if (!state[c].pending.empty()) {
        for (std::size_t k = 0; k < state[c].pending.size(); ++k) {
          if (state[c].pending[k].slot != slot) continue;
          double t_ap = state[c].pending[k].time_in_slot_ps;
          if (!have_candidate || t_ap < t_cand) t_cand = t_ap;
          have_candidate = true;
          state[c].pending.erase(state[c].pending.begin() + static_cast<std::ptrdiff_t>(k));
          --k;
        }
      }
      if (!have_candidate) continue;
      ++res.diag.candidates;
      std::size_t pend_before = state[c].pending.size();
      TagOutcome oc = process_candidate(slot, t_cand, rep, cfg.gate,
                                        static_cast<std::uint8_t>(c), state[c], rng);
      switch (oc.drop) {
        case TagDrop::accepted:
          res.tags[c].push_back(oc.tag.timestamp_ps);
          if (state[c].pending.size() > pend_before) ++res.diag.afterpulses_scheduled;
          break;
        case TagDrop::outside_gate:
          ++res.diag.dropped_gate;
          break;
        case TagDrop::dead:
          ++res.diag.dropped_dead;
          break;
      }
    }
  }

  auto win = static_cast<std::uint64_t>(cfg.coincidence_window_ps);
  auto slot_period = static_cast<std::uint64_t>(rep);
  CoincidenceCounts cc =
      count_coincidences(res.tags[0], res.tags[1], slot_period, win, cfg.n_pulses);
  res.point.n1 = cc.n1;
  res.point.n2 = cc.n2;
  res.point.n_coinc = cc.n_coinc;
  G2Estimate est = estimate_g2(cc.n1, cc.n2, cc.n_coinc, cfg.n_pulses);
  res.point.g2 = est.g2;
  res.point.g2_err = est.g2_err;
  return res;
}

struct ScanOptions {
  int threads = 1;      ///< 0 picks the hardware concurrency
  bool keep_tags = true; ///< drop per-point streams once counted
};

/// Simulate a list of delays. Point i always uses the substream derived
/// from (seed, i), so results are byte-identical for any thread count and
/// each point matches a standalone simulate_point(cfg, delays[i], i).
inline std::vector<PointResult> simulate_scan(const ExperimentConfig& cfg,
                                              const std::vector<double>& delays,
                                              const ScanOptions& opt = {}) {
  validate_config(cfg);
  unsigned hw = std::thread::hardware_concurrency();
  unsigned n_threads = opt.threads > 0 ? static_cast<unsigned>(opt.threads) : (hw ? hw : 1);
  n_threads = std::min<unsigned>(n_threads, delays.empty() ? 1 : static_cast<unsigned>(delays.size()));

  std::vector<PointResult> results(delays.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= delays.size()) return;
      results[i] = simulate_point(cfg, delays[i], i);
      if (!opt.keep_tags) {
        results[i].tags[0] = {};
        results[i].tags[1] = {};
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return results;
}

}  // namespace homsim
