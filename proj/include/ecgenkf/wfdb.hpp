#pragma once

// PhysioNet WFDB ingestion: header (.hea), format-212 signal (.dat) and MIT
// annotation (.atr) decoding, plus the plain CSV interchange format.
//
// Everything here works on in-memory buffers; see io.hpp for file access.

#include <array>
#include <charconv>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"

namespace ecgenkf::wfdb {

struct SignalSpec {
  std::string file_name;
  int format = 212;
  double gain = 200.0;  // ADC units per mV
  int adc_resolution = 12;
  int adc_zero = 0;
  int baseline = 0;
  int initial_value = 0;
  std::int16_t checksum = 0;
  bool has_checksum = false;
  std::string description;
};

struct RecordHeader {
  std::string record_name;
  std::size_t n_signals = 0;
  double fs = 250.0;
  std::size_t n_samples = 0;
  std::vector<SignalSpec> signals;
};

using AdcFrames = std::vector<std::vector<int>>;  // one vector per signal

struct AnnotatedRecord {
  RecordHeader header;
  std::vector<Signal> channels;
  RPeaks r_peaks;
};

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

[[noreturn]] inline void fail_line(std::size_t line_no, const std::string& what) {
  throw ParseError("header line " + std::to_string(line_no) + ": " + what);
}

inline bool is_beat_code(int code) {
  return (code >= 1 && code <= 13) || code == 25 || code == 34 || code == 38;
}

}  // namespace detail

/// Parses a WFDB header. Comment lines (leading '#') and blank lines are
/// skipped; line numbers in errors are 1-based over the raw text.
inline RecordHeader read_header(std::string_view text) {
  RecordHeader h;
  bool have_record_line = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto fields = detail::split_ws(line);
    if (fields.empty() || fields[0][0] == '#') {
      if (end == text.size()) break;
      continue;
    }

    if (!have_record_line) {
      have_record_line = true;
      const auto slash = fields[0].find('/');
      if (slash != std::string::npos) detail::fail_line(line_no, "multi-segment records are not supported");
      h.record_name = fields[0];
      if (fields.size() < 2 || !detail::parse_number(fields[1], h.n_signals) || h.n_signals < 1) {
        detail::fail_line(line_no, "missing or invalid signal count");
      }
      if (fields.size() >= 3) {
        std::string_view f = fields[2];
        f = f.substr(0, f.find_first_of("/("));
        if (!detail::parse_number(f, h.fs) || !(h.fs > 0.0)) detail::fail_line(line_no, "invalid sampling frequency");
      }
      if (fields.size() >= 4 && !detail::parse_number(std::string_view(fields[3]), h.n_samples)) {
        detail::fail_line(line_no, "invalid sample count");
      }
    } else {
      if (h.signals.size() == h.n_signals) detail::fail_line(line_no, "more signal lines than declared");
      if (fields.size() < 2) detail::fail_line(line_no, "signal line needs file name and format");
      SignalSpec sig;
      sig.file_name = fields[0];
      std::string_view fmt = fields[1];
      fmt = fmt.substr(0, fmt.find_first_of("x:+"));
      if (!detail::parse_number(fmt, sig.format)) detail::fail_line(line_no, "invalid format code");
      if (sig.format != 212) {
        detail::fail_line(line_no, "unsupported format " + std::to_string(sig.format) + " (only 212)");
      }
      bool baseline_given = false;
      if (fields.size() >= 3) {
        std::string_view g = fields[2];
        g = g.substr(0, g.find('/'));
        const auto paren = g.find('(');
        if (paren != std::string_view::npos) {
          const auto close = g.find(')', paren);
          if (close == std::string_view::npos ||
              !detail::parse_number(g.substr(paren + 1, close - paren - 1), sig.baseline)) {
            detail::fail_line(line_no, "invalid baseline");
          }
          baseline_given = true;
          g = g.substr(0, paren);
        }
        if (!detail::parse_number(g, sig.gain)) detail::fail_line(line_no, "invalid gain");
        if (sig.gain == 0.0) sig.gain = 200.0;
        if (sig.gain < 0.0) detail::fail_line(line_no, "negative gain");
      }
      if (fields.size() >= 4 && !detail::parse_number(std::string_view(fields[3]), sig.adc_resolution)) {
        detail::fail_line(line_no, "invalid ADC resolution");
      }
      if (fields.size() >= 5 && !detail::parse_number(std::string_view(fields[4]), sig.adc_zero)) {
        detail::fail_line(line_no, "invalid ADC zero");
      }
      if (!baseline_given) sig.baseline = sig.adc_zero;
      if (fields.size() >= 6 && !detail::parse_number(std::string_view(fields[5]), sig.initial_value)) {
        detail::fail_line(line_no, "invalid initial value");
      }
      if (fields.size() >= 7) {
        int ck = 0;
        if (!detail::parse_number(std::string_view(fields[6]), ck) || ck < -32768 || ck > 65535) {
          detail::fail_line(line_no, "invalid checksum");
        }
        sig.checksum = static_cast<std::int16_t>(static_cast<std::uint16_t>(ck & 0xFFFF));
        sig.has_checksum = true;
      }
      // fields[7] is the block size; the rest is free-text description.
      for (std::size_t i = 8; i < fields.size(); ++i) {
        if (!sig.description.empty()) sig.description += ' ';
        sig.description += fields[i];
      }
      h.signals.push_back(std::move(sig));
    }
    if (end == text.size()) break;
  }
  if (!have_record_line) throw ParseError("header line 1: missing record line");
  if (h.signals.size() != h.n_signals) {
    throw ParseError("header line " + std::to_string(line_no) + ": declared " +
                     std::to_string(h.n_signals) + " signals, found " +
                     std::to_string(h.signals.size()));
  }
  return h;
}

/// Unpacks format-212 bytes into per-signal ADC sequences. Samples are stored
/// frame-interleaved, two 12-bit two's-complement values per three bytes.
inline AdcFrames decode_212(std::span<const std::uint8_t> bytes, std::size_t n_samples,
                            std::size_t n_signals) {
  if (n_signals == 0) throw ParseError("decode_212: zero signals");
  const std::size_t total = n_samples * n_signals;
  const std::size_t needed = (total * 3 + 1) / 2;
  if (bytes.size() < needed) {
    throw ParseError("decode_212: truncated payload, need " + std::to_string(needed) +
                     " bytes, have " + std::to_string(bytes.size()));
  }
  AdcFrames out(n_signals, std::vector<int>(n_samples));
  auto sext = [](unsigned v) { return (v & 0x800U) ? static_cast<int>(v) - 0x1000 : static_cast<int>(v); };
  for (std::size_t k = 0; k < total; ++k) {
    const std::size_t base = (k / 2) * 3;
    unsigned raw = 0;
    if (k % 2 == 0) {
      raw = bytes[base] | ((bytes[base + 1] & 0x0FU) << 8U);
    } else {
      raw = bytes[base + 2] | ((bytes[base + 1] & 0xF0U) << 4U);
    }
    out[k % n_signals][k / n_signals] = sext(raw);
  }
  return out;
}

/// 16-bit two's-complement sum, the quantity stored in the header checksum field.
inline std::int16_t checksum16(std::span<const int> adc) {
  std::uint16_t acc = 0;
  for (int v : adc) acc = static_cast<std::uint16_t>(acc + static_cast<std::uint16_t>(v));
  return static_cast<std::int16_t>(acc);
}

inline std::vector<Signal> to_millivolts(const AdcFrames& adc, const RecordHeader& header) {
  if (adc.size() != header.signals.size()) throw ParseError("to_millivolts: signal count mismatch");
  std::vector<Signal> out;
  out.reserve(adc.size());
  for (std::size_t s = 0; s < adc.size(); ++s) {
    const auto& spec = header.signals[s];
    if (!(spec.gain > 0.0)) throw ParseError("to_millivolts: gain must be positive");
    std::vector<double> mv(adc[s].size());
    for (std::size_t i = 0; i < mv.size(); ++i) {
      mv[i] = (adc[s][i] - spec.baseline) / spec.gain;
    }
    out.emplace_back(std::move(mv), header.fs);
  }
  return out;
}

/// One decoded annotation; only beat codes are kept by read_annotations.
struct Annotation {
  std::int64_t sample = 0;
  int code = 0;
};

/// Decodes every annotation in an MIT-format stream (all codes).
inline std::vector<Annotation> read_all_annotations(std::span<const std::uint8_t> bytes) {
  constexpr int kNote = 22, kSkip = 59, kNum = 60, kSub = 61, kChn = 62, kAux = 63;
  std::vector<Annotation> out;
  std::int64_t t = 0;
  std::size_t off = 0;
  auto word_at = [&](std::size_t o) {
    return static_cast<unsigned>(bytes[o]) | (static_cast<unsigned>(bytes[o + 1]) << 8U);
  };
  while (off + 1 < bytes.size()) {
    const unsigned w = word_at(off);
    const int code = static_cast<int>(w >> 10U);
    const unsigned arg = w & 0x3FFU;
    if (code == 0 && arg == 0) return out;
    switch (code) {
      case kSkip: {
        if (off + 6 > bytes.size()) {
          throw ParseError("annotation SKIP truncated at byte offset " + std::to_string(off));
        }
        // 32-bit interval, high 16-bit word first, each word little-endian.
        const std::uint32_t hi = word_at(off + 2);
        const std::uint32_t lo = word_at(off + 4);
        t += static_cast<std::int32_t>((hi << 16U) | lo);
        off += 6;
        break;
      }
      case kNum:
      case kSub:
      case kChn:
        off += 2;
        break;
      case kAux: {
        const std::size_t len = arg + (arg & 1U);
        if (off + 2 + len > bytes.size()) {
          throw ParseError("annotation AUX truncated at byte offset " + std::to_string(off));
        }
        // A note at time 0 whose text starts "## " is a file-level definition
        // (time resolution, custom labels), not an annotation.
        if (!out.empty() && out.back().code == kNote && out.back().sample == 0 && arg >= 3 && bytes[off + 2] == '#' &&
            bytes[off + 3] == '#' && bytes[off + 4] == ' ') {
          out.pop_back();
        }
        off += 2 + len;
        break;
      }
      default:
        t += arg;
        if (t < 0) throw ParseError("annotation time negative at byte offset " + std::to_string(off));
        // code 0 with a nonzero interval only advances time
        if (code != 0) out.push_back({t, code});
        off += 2;
        break;
    }
  }
  if (off != bytes.size()) throw ParseError("annotation stream has trailing odd byte at offset " + std::to_string(off));
  return out;
}

/// Beat-class annotation times as R fiducials.
inline RPeaks read_annotations(std::span<const std::uint8_t> bytes, double fs) {
  std::vector<std::size_t> times;
  for (const auto& a : read_all_annotations(bytes)) {
    if (detail::is_beat_code(a.code)) times.push_back(static_cast<std::size_t>(a.sample));
  }
  return RPeaks::thinned(std::move(times), fs);
}

/// Decodes a full record and validates per-channel checksums.
inline AnnotatedRecord decode_record(std::string_view header_text, std::span<const std::uint8_t> dat,
                                     std::span<const std::uint8_t> atr) {
  AnnotatedRecord rec;
  rec.header = read_header(header_text);
  for (const auto& s : rec.header.signals) {
    if (s.file_name != rec.header.signals.front().file_name) {
      throw ParseError("signals stored in separate files are not supported");
    }
  }
  const auto adc = decode_212(dat, rec.header.n_samples, rec.header.n_signals);
  for (std::size_t s = 0; s < adc.size(); ++s) {
    const auto& spec = rec.header.signals[s];
    if (spec.has_checksum && checksum16(adc[s]) != spec.checksum) {
      throw ParseError("checksum mismatch on signal " + std::to_string(s) + ": header " +
                       std::to_string(spec.checksum) + ", data " + std::to_string(checksum16(adc[s])));
    }
  }
  rec.channels = to_millivolts(adc, rec.header);
  if (!atr.empty()) rec.r_peaks = read_annotations(atr, rec.header.fs);
  return rec;
}

// --- CSV --------------------------------------------------------------------

/// Reads "mv" or "t,mv" CSV. The header row is mandatory; row numbers in
/// errors count data rows from 1.
inline Signal read_csv(std::string_view text, double fs) {
  if (!(fs > 0.0)) throw ParseError("csv: fs must be positive");
  std::vector<double> samples;
  std::size_t pos = 0;
  bool header_seen = false;
  std::size_t column = 0;
  std::size_t row = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (line == "mv") {
        column = 0;
      } else if (line == "t,mv") {
        column = 1;
      } else {
        throw ParseError("csv: header must be \"mv\" or \"t,mv\", got \"" + std::string(line) + "\"");
      }
      continue;
    }
    ++row;
    std::string_view cell = line;
    for (std::size_t c = 0; c < column; ++c) {
      const auto comma = cell.find(',');
      if (comma == std::string_view::npos) throw ParseError("csv: row " + std::to_string(row) + ": missing column");
      cell = cell.substr(comma + 1);
    }
    cell = cell.substr(0, cell.find(','));
    double v = 0.0;
    if (!detail::parse_number(cell, v) || !std::isfinite(v)) {
      throw ParseError("csv: row " + std::to_string(row) + ": non-numeric cell \"" + std::string(cell) + "\"");
    }
    samples.push_back(v);
  }
  if (!header_seen) throw ParseError("csv: empty input");
  return {std::move(samples), fs};
}

/// Writes "t,mv" rows with 17 significant digits (exact double round trip).
inline std::string write_csv(const Signal& s) {
  std::ostringstream os;
  os << std::setprecision(17) << "t,mv\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << static_cast<double>(i) / s.fs() << ',' << s[i] << '\n';
  }
  return os.str();
}

/// Generic table writer: header row then one row per record.
inline std::string write_csv(const std::vector<std::string>& columns,
                             const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out += ',';
    out += columns[c];
  }
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) out += ',';
      out += r[c];
    }
    out += '\n';
  }
  return out;
}

}  // namespace ecgenkf::wfdb
