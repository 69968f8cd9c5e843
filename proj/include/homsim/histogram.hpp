#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace homsim {

/// Fixed-width binning of timestamps. Bin k covers
/// [origin + k*bin_width, origin + (k+1)*bin_width).
struct Histogram {
  std::uint64_t bin_width_ps = 1;
  std::uint64_t origin_ps = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0; ///< always equals the sum of counts
};

/// Histogram a timestamp stream, optionally folding timestamps modulo
/// fold_period_ps first (origin 0 in that case). Unfolded histograms span
/// [min, max] of the data; a guard refuses absurd spans instead of
/// allocating them.
inline Histogram build_histogram(const std::vector<std::uint64_t>& timestamps,
                                 std::uint64_t bin_width_ps,
                                 std::optional<std::uint64_t> fold_period_ps = {}) {
  if (bin_width_ps == 0) throw std::domain_error("build_histogram: bin_width_ps must be positive");
  Histogram h;
  h.bin_width_ps = bin_width_ps;
  if (fold_period_ps) {
    if (*fold_period_ps == 0)
      throw std::domain_error("build_histogram: fold_period_ps must be positive");
    h.origin_ps = 0;
    h.counts.assign((*fold_period_ps + bin_width_ps - 1) / bin_width_ps, 0);
    for (std::uint64_t t : timestamps) ++h.counts[(t % *fold_period_ps) / bin_width_ps];
    h.total = timestamps.size();
    return h;
  }
  if (timestamps.empty()) return h;
  std::uint64_t lo = timestamps[0], hi = timestamps[0];
  for (std::uint64_t t : timestamps) {
    if (t < lo) lo = t;
    if (t > hi) hi = t;
  }
  h.origin_ps = (lo / bin_width_ps) * bin_width_ps;
  std::uint64_t nbins = (hi - h.origin_ps) / bin_width_ps + 1;
  if (nbins > (1ull << 26))
    throw std::domain_error("build_histogram: span too large, fold the stream first");
  h.counts.assign(nbins, 0);
  for (std::uint64_t t : timestamps) ++h.counts[(t - h.origin_ps) / bin_width_ps];
  h.total = timestamps.size();
  return h;
}

}  // namespace homsim
