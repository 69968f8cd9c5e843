#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

namespace homsim {

/// One pulsed source feeding a beam splitter input. The global phase of
/// every pulse is randomized, so only mean photon number and timing shape
/// matter downstream.
struct SourceParams {
  double mu = 0.01;             ///< mean photon number per pulse at the splitter input
  double pulse_fwhm_ps = 100.0; ///< optical intensity FWHM; detection adds its own response
  double rep_period_ps = 10000.0;
};

/// Mode overlap of the two pulses as a function of relative delay.
/// The squared overlap follows a Lorentzian of FWHM gamma_ps, scaled by
/// max_overlap at zero delay (residual spectral or polarization mismatch).
struct OverlapModel {
  double gamma_ps = 50.0;
  double max_overlap = 0.92;
};

/// Threshold (click/no-click) detector channel.
struct ChannelParams {
  double efficiency = 0.2;
  double dark_prob = 1e-5; ///< dark click probability per gate
};

/// Squared mode overlap at delay tau. In [0, max_overlap], peaked at tau = 0,
/// half depth at |tau| = gamma/2.
inline double overlap_sq(double tau_ps, const OverlapModel& m) {
  if (!(m.max_overlap >= 0.0 && m.max_overlap <= 1.0))
    throw std::domain_error("overlap_sq: max_overlap outside [0, 1]");
  if (!(m.gamma_ps > 0.0)) throw std::domain_error("overlap_sq: gamma_ps must be positive");
  double h = 0.5 * m.gamma_ps;
  return m.max_overlap * h * h / (tau_ps * tau_ps + h * h);
}

/// Mean photon numbers behind a balanced splitter fed with two coherent
/// pulses of mean photon numbers mu1, mu2, squared overlap xi_sq and
/// relative phase phi. The interference term moves energy between the two
/// outputs; the larger output is computed first so the complement is exact
/// and n1 + n2 == mu1 + mu2 holds bit for bit.
inline std::pair<double, double> mean_photons_out(double mu1, double mu2, double xi_sq,
                                                  double phi) {
  if (!(mu1 >= 0.0) || !(mu2 >= 0.0)) throw std::domain_error("mean_photons_out: negative mu");
  if (!(xi_sq >= 0.0 && xi_sq <= 1.0))
    throw std::domain_error("mean_photons_out: xi_sq outside [0, 1]");
  double sum = mu1 + mu2;
  double s = 0.5 * sum;
  double d = std::sqrt(mu1 * mu2 * xi_sq) * std::cos(phi);
  if (d >= 0.0) {
    double n1 = s + d;
    return {n1, sum - n1};
  }
  double n2 = s - d;
  return {sum - n2, n2};
}

/// Click probability of a threshold detector seeing Poissonian light of
/// mean photon number n: p = 1 - (1 - dark) * exp(-efficiency * n).
inline double click_prob(double mean_photons, const ChannelParams& ch) {
  if (!(mean_photons >= 0.0)) throw std::domain_error("click_prob: negative mean photon number");
  if (!(ch.efficiency >= 0.0 && ch.efficiency <= 1.0))
    throw std::domain_error("click_prob: efficiency outside [0, 1]");
  if (!(ch.dark_prob >= 0.0 && ch.dark_prob < 1.0))
    throw std::domain_error("click_prob: dark_prob outside [0, 1)");
  return 1.0 - (1.0 - ch.dark_prob) * std::exp(-ch.efficiency * mean_photons);
}

inline std::pair<double, double> click_probs(double n1, double n2, const ChannelParams& ch1,
                                             const ChannelParams& ch2) {
  return {click_prob(n1, ch1), click_prob(n2, ch2)};
}

/// Per-gate detection probabilities averaged over the uniform random
/// relative phase.
struct PhaseAverage {
  double p_coinc; ///< both channels click in the same gate
  double p_d1;
  double p_d2;
};

/// Phase average of the joint and single click probabilities.
///
/// The integrand is periodic and entire in cos(phi), so the 256-node
/// equal-weight rule over [0, 2pi) converges geometrically and is exact to
/// machine precision for every physical parameter set. The node count is
/// fixed so results are bit-reproducible across runs and platforms.
inline PhaseAverage coincidence_prob(double mu1, double mu2, double xi_sq,
                                     const ChannelParams& ch1, const ChannelParams& ch2) {
  constexpr int kNodes = 256;
  constexpr double kTwoPi = 6.28318530717958647692;
  double acc_cc = 0.0, acc_1 = 0.0, acc_2 = 0.0;
  for (int k = 0; k < kNodes; ++k) {
    double phi = kTwoPi * static_cast<double>(k) / kNodes;
    auto [n1, n2] = mean_photons_out(mu1, mu2, xi_sq, phi);
    double p1 = click_prob(n1, ch1);
    double p2 = click_prob(n2, ch2);
    acc_cc += p1 * p2;
    acc_1 += p1;
    acc_2 += p2;
  }
  return {acc_cc / kNodes, acc_1 / kNodes, acc_2 / kNodes};
}

/// Parameter bundle for closed-form scans of the interference dip.
struct TheoryParams {
  double mu1 = 0.01;
  double mu2 = 0.01;
  OverlapModel overlap;
  ChannelParams ch1;
  ChannelParams ch2;
};

/// Normalized coincidence rate g2(tau) = P_coinc / (P_D1 * P_D2) for the
/// phase-averaged pair of sources. Approaches 1 at large delay and
/// 1 - overlap_sq/2 near zero delay in the weak-pulse limit.
inline double g2_theory(double tau_ps, const TheoryParams& tp) {
  PhaseAverage pa =
      coincidence_prob(tp.mu1, tp.mu2, overlap_sq(tau_ps, tp.overlap), tp.ch1, tp.ch2);
  if (!(pa.p_d1 > 0.0 && pa.p_d2 > 0.0))
    throw std::domain_error("g2_theory: singles probability is zero");
  return pa.p_coinc / (pa.p_d1 * pa.p_d2);
}

}  // namespace homsim
