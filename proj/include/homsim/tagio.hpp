#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "homsim/detector.hpp"
#include "homsim/util.hpp"

namespace homsim {

/// Binary time-tag stream. Layout, little-endian throughout:
///   "HOMT"  u8 version  u32 tdc_bin_ps  u64 rep_period_ps  records...
/// each record 9 bytes: u64 timestamp_ps, u8 channel (0 or 1). Records are
/// sorted by timestamp, channel 0 first on ties.
struct TagStream {
  std::uint32_t tdc_bin_ps = 0;
  std::uint64_t rep_period_ps = 0;
  std::vector<TimeTag> tags;

  std::array<std::vector<std::uint64_t>, 2> split_channels() const {
    std::array<std::vector<std::uint64_t>, 2> out;
    for (const TimeTag& t : tags) out[t.channel].push_back(t.timestamp_ps);
    return out;
  }
};

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline constexpr char kTagMagic[4] = {'H', 'O', 'M', 'T'};
inline constexpr std::uint8_t kTagVersion = 1;

/// Merge two per-channel streams (each already sorted) into file bytes.
inline std::string serialize_tags(std::uint32_t tdc_bin_ps, std::uint64_t rep_period_ps,
                                  const std::vector<std::uint64_t>& ch0,
                                  const std::vector<std::uint64_t>& ch1) {
  std::string out;
  out.reserve(17 + 9 * (ch0.size() + ch1.size()));
  out.append(kTagMagic, 4);
  out.push_back(static_cast<char>(kTagVersion));
  detail::put_u32(out, tdc_bin_ps);
  detail::put_u64(out, rep_period_ps);
  std::size_t i = 0, j = 0;
  auto emit = [&out](std::uint64_t t, std::uint8_t c) {
    detail::put_u64(out, t);
    out.push_back(static_cast<char>(c));
  };
  while (i < ch0.size() || j < ch1.size()) {
    bool take0;
    if (i == ch0.size())
      take0 = false;
    else if (j == ch1.size())
      take0 = true;
    else
      take0 = ch0[i] <= ch1[j]; // tie goes to channel 0
    if (take0)
      emit(ch0[i++], 0);
    else
      emit(ch1[j++], 1);
  }
  return out;
}

inline void write_tag_file(const std::filesystem::path& path, std::uint32_t tdc_bin_ps,
                           std::uint64_t rep_period_ps, const std::vector<std::uint64_t>& ch0,
                           const std::vector<std::uint64_t>& ch1) {
  atomic_write_file(path, serialize_tags(tdc_bin_ps, rep_period_ps, ch0, ch1));
}

inline TagStream parse_tags(const std::string& data, const std::string& origin = "tag data") {
  if (data.size() < 17) throw FormatError(origin + ": truncated header");
  if (data.compare(0, 4, kTagMagic, 4) != 0) throw FormatError(origin + ": bad magic");
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (p[4] != kTagVersion)
    throw FormatError(origin + ": unsupported version " + std::to_string(p[4]));
  TagStream ts;
  ts.tdc_bin_ps = detail::get_u32(p + 5);
  ts.rep_period_ps = detail::get_u64(p + 9);
  std::size_t payload = data.size() - 17;
  if (payload % 9 != 0) throw FormatError(origin + ": truncated record");
  ts.tags.reserve(payload / 9);
  const unsigned char* rec = p + 17;
  std::uint64_t prev_t = 0;
  std::uint8_t prev_c = 0;
  for (std::size_t k = 0; k < payload / 9; ++k, rec += 9) {
    TimeTag t{detail::get_u64(rec), rec[8]};
    if (t.channel > 1)
      throw FormatError(origin + ": record " + std::to_string(k) + " has channel " +
                        std::to_string(t.channel));
    if (k > 0 && (t.timestamp_ps < prev_t || (t.timestamp_ps == prev_t && t.channel < prev_c)))
      throw FormatError(origin + ": record " + std::to_string(k) + " out of order");
    prev_t = t.timestamp_ps;
    prev_c = t.channel;
    ts.tags.push_back(t);
  }
  return ts;
}

inline TagStream read_tag_file(const std::filesystem::path& path) {
  return parse_tags(read_file(path), path.string());
}

}  // namespace homsim
