#pragma once

#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "homsim/analysis.hpp"
#include "homsim/histogram.hpp"
#include "homsim/util.hpp"

namespace homsim {
namespace detail {

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::size_t end = nl;
    if (end > pos && text[end - 1] == '\r') --end;
    lines.push_back(text.substr(pos, end - pos));
    pos = nl + 1;
  }
  return lines;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    std::size_t c = line.find(',', pos);
    if (c == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, c - pos));
    pos = c + 1;
  }
}

inline double parse_double_field(const std::string& s, const std::string& origin, std::size_t row,
                                 std::size_t col) {
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw FormatError(origin + ": row " + std::to_string(row) + ", column " + std::to_string(col) +
                      ": not a number: '" + s + "'");
  return v;
}

inline std::uint64_t parse_u64_field(const std::string& s, const std::string& origin,
                                     std::size_t row, std::size_t col) {
  if (s.empty() || s[0] == '-')
    throw FormatError(origin + ": row " + std::to_string(row) + ", column " + std::to_string(col) +
                      ": not a count: '" + s + "'");
  const char* begin = s.c_str();
  char* end = nullptr;
  unsigned long long v = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw FormatError(origin + ": row " + std::to_string(row) + ", column " + std::to_string(col) +
                      ": not a count: '" + s + "'");
  return v;
}

inline std::string json_num(double v) { return fmt_g10(v); }
inline std::string json_opt(const std::optional<double>& v) {
  return v ? fmt_g10(*v) : std::string("null");
}

}  // namespace detail

inline constexpr const char* kScanCsvHeader = "tau_ps,n_pulses,n1,n2,n_coinc,g2,g2_err";

inline std::string scan_csv(const std::vector<ScanPoint>& points) {
  std::string out = kScanCsvHeader;
  out += '\n';
  for (const ScanPoint& p : points) {
    out += fmt_g10(p.tau_ps);
    out += ',';
    out += std::to_string(p.n_pulses);
    out += ',';
    out += std::to_string(p.n1);
    out += ',';
    out += std::to_string(p.n2);
    out += ',';
    out += std::to_string(p.n_coinc);
    out += ',';
    if (p.g2) out += fmt_g10(*p.g2);
    out += ',';
    if (p.g2_err) out += fmt_g10(*p.g2_err);
    out += '\n';
  }
  return out;
}

inline std::string scan_json_lines(const std::vector<ScanPoint>& points) {
  std::string out;
  for (const ScanPoint& p : points) {
    out += "{\"tau_ps\":" + detail::json_num(p.tau_ps);
    out += ",\"n_pulses\":" + std::to_string(p.n_pulses);
    out += ",\"n1\":" + std::to_string(p.n1);
    out += ",\"n2\":" + std::to_string(p.n2);
    out += ",\"n_coinc\":" + std::to_string(p.n_coinc);
    out += ",\"g2\":" + detail::json_opt(p.g2);
    out += ",\"g2_err\":" + detail::json_opt(p.g2_err);
    out += "}\n";
  }
  return out;
}

inline std::vector<ScanPoint> parse_scan_csv(const std::string& text,
                                             const std::string& origin = "scan data") {
  auto lines = detail::split_lines(text);
  if (lines.empty() || lines[0] != kScanCsvHeader)
    throw FormatError(origin + ": expected header '" + kScanCsvHeader + "'");
  std::vector<ScanPoint> points;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    auto f = detail::split_fields(lines[r]);
    if (f.size() != 7)
      throw FormatError(origin + ": row " + std::to_string(r) + ": expected 7 fields, got " +
                        std::to_string(f.size()));
    ScanPoint p;
    p.tau_ps = detail::parse_double_field(f[0], origin, r, 1);
    p.n_pulses = detail::parse_u64_field(f[1], origin, r, 2);
    p.n1 = detail::parse_u64_field(f[2], origin, r, 3);
    p.n2 = detail::parse_u64_field(f[3], origin, r, 4);
    p.n_coinc = detail::parse_u64_field(f[4], origin, r, 5);
    if (!f[5].empty()) p.g2 = detail::parse_double_field(f[5], origin, r, 6);
    if (!f[6].empty()) p.g2_err = detail::parse_double_field(f[6], origin, r, 7);
    points.push_back(p);
  }
  return points;
}

inline constexpr const char* kHistogramCsvHeader = "bin_start_ps,count";

inline std::string histogram_csv(const Histogram& h) {
  std::string out = kHistogramCsvHeader;
  out += '\n';
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out += std::to_string(h.origin_ps + static_cast<std::uint64_t>(i) * h.bin_width_ps);
    out += ',';
    out += std::to_string(h.counts[i]);
    out += '\n';
  }
  return out;
}

/// Accepts sparse files: missing bins between rows are treated as empty.
inline Histogram parse_histogram_csv(const std::string& text,
                                     const std::string& origin = "histogram data") {
  auto lines = detail::split_lines(text);
  if (lines.empty() || lines[0] != kHistogramCsvHeader)
    throw FormatError(origin + ": expected header '" + kHistogramCsvHeader + "'");
  std::vector<std::uint64_t> starts, counts;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    auto f = detail::split_fields(lines[r]);
    if (f.size() != 2)
      throw FormatError(origin + ": row " + std::to_string(r) + ": expected 2 fields, got " +
                        std::to_string(f.size()));
    starts.push_back(detail::parse_u64_field(f[0], origin, r, 1));
    counts.push_back(detail::parse_u64_field(f[1], origin, r, 2));
  }
  if (starts.size() < 2) throw FormatError(origin + ": need at least two rows to fix a bin width");
  std::uint64_t bw = 0;
  for (std::size_t i = 1; i < starts.size(); ++i) {
    if (starts[i] <= starts[i - 1])
      throw FormatError(origin + ": bin starts must be strictly increasing (row " +
                        std::to_string(i + 1) + ")");
    std::uint64_t gap = starts[i] - starts[i - 1];
    if (bw == 0 || gap < bw) bw = gap;
  }
  for (std::size_t i = 1; i < starts.size(); ++i) {
    if ((starts[i] - starts[0]) % bw != 0)
      throw FormatError(origin + ": bin starts are not on a uniform grid (row " +
                        std::to_string(i + 1) + ")");
  }
  Histogram h;
  h.bin_width_ps = bw;
  h.origin_ps = starts[0];
  h.counts.assign((starts.back() - starts[0]) / bw + 1, 0);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    h.counts[(starts[i] - starts[0]) / bw] = counts[i];
    h.total += counts[i];
  }
  return h;
}

inline std::string dip_fit_text(const DipFit& f) {
  std::string out;
  out += "visibility=" + fmt_g10(f.visibility) + "\n";
  out += "visibility_err=" + fmt_g10(f.visibility_err) + "\n";
  out += "gamma_ps=" + fmt_g10(f.gamma_ps) + "\n";
  out += "gamma_err_ps=" + fmt_g10(f.gamma_err_ps) + "\n";
  out += "baseline=" + fmt_g10(f.baseline) + "\n";
  out += "center_ps=" + fmt_g10(f.center_ps) + "\n";
  out += "chi2_red=" + fmt_g10(f.chi2_red) + "\n";
  out += "n_points=" + std::to_string(f.n_points) + "\n";
  out += std::string("converged=") + (f.converged ? "true" : "false") + "\n";
  return out;
}

inline std::string dip_fit_json(const DipFit& f) {
  std::string out = "{";
  out += "\"visibility\":" + detail::json_num(f.visibility);
  out += ",\"visibility_err\":" + detail::json_num(f.visibility_err);
  out += ",\"gamma_ps\":" + detail::json_num(f.gamma_ps);
  out += ",\"gamma_err_ps\":" + detail::json_num(f.gamma_err_ps);
  out += ",\"baseline\":" + detail::json_num(f.baseline);
  out += ",\"center_ps\":" + detail::json_num(f.center_ps);
  out += ",\"chi2_red\":" + detail::json_num(f.chi2_red);
  out += ",\"n_points\":" + std::to_string(f.n_points);
  out += std::string(",\"converged\":") + (f.converged ? "true" : "false");
  out += "}\n";
  return out;
}

inline constexpr const char* kDecoyCsvHeader =
    "tau_ps,p_ub,p_ub_err,p_cc_mumu,p_cc_0mu,p_cc_mu0,p_d1,p_d2";

inline std::string decoy_csv(const std::vector<DecoyBound>& bounds) {
  std::string out = kDecoyCsvHeader;
  out += '\n';
  for (const DecoyBound& b : bounds) {
    out += fmt_g10(b.tau_ps);
    out += ',';
    out += fmt_g10(b.p_ub);
    out += ',';
    out += fmt_g10(b.p_ub_err);
    out += ',';
    out += fmt_g10(b.p_cc_both);
    out += ',';
    out += fmt_g10(b.p_cc_blocked1);
    out += ',';
    out += fmt_g10(b.p_cc_blocked2);
    out += ',';
    out += fmt_g10(b.p_d1);
    out += ',';
    out += fmt_g10(b.p_d2);
    out += '\n';
  }
  return out;
}

inline std::string decoy_json_lines(const std::vector<DecoyBound>& bounds) {
  std::string out;
  for (const DecoyBound& b : bounds) {
    out += "{\"tau_ps\":" + detail::json_num(b.tau_ps);
    out += ",\"p_ub\":" + detail::json_num(b.p_ub);
    out += ",\"p_ub_err\":" + detail::json_num(b.p_ub_err);
    out += ",\"p_cc_mumu\":" + detail::json_num(b.p_cc_both);
    out += ",\"p_cc_0mu\":" + detail::json_num(b.p_cc_blocked1);
    out += ",\"p_cc_mu0\":" + detail::json_num(b.p_cc_blocked2);
    out += ",\"p_d1\":" + detail::json_num(b.p_d1);
    out += ",\"p_d2\":" + detail::json_num(b.p_d2);
    out += "}\n";
  }
  return out;
}

}  // namespace homsim
