#pragma once

// Measurement ingestion: raw (V, I, t, i) samples to per-iteration energies,
// with per-device empty-loop baseline subtraction.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "jbe/catalog.hpp"
#include "jbe/errors.hpp"

namespace jbe {

inline constexpr std::string_view kBaselineMarker = "BASELINE";
inline constexpr std::string_view kMeasurementHeader =
    "device_id,pattern,cycle,sample_index,voltage_v,amperage_a,elapsed_s,iterations";

struct RawSample {
  std::string device;
  std::optional<PatternTriple> pattern;  // nullopt: empty-loop baseline
  std::uint32_t cycle = 0;
  std::uint32_t sample_index = 0;
  double voltage = 0.0;   // V
  double amperage = 0.0;  // A
  double elapsed = 0.0;   // s, whole loop of the cycle
  std::uint64_t iterations = 1;

  bool is_baseline() const noexcept { return !pattern.has_value(); }
};

struct MeasurementRecord {
  std::string device;
  std::optional<PatternTriple> pattern;  // nullopt: baseline record
  double energy = 0.0;                   // J per single pattern execution
  bool baseline_corrected = false;

  PatternKey key() const {
    if (!pattern) throw DataError("baseline record has no pattern key");
    return PatternKey{*pattern, device};
  }
};

// J = V * I * t, with t the per-iteration time.
inline double energy_per_iteration(const RawSample& s) {
  if (!std::isfinite(s.voltage) || !std::isfinite(s.amperage) || !std::isfinite(s.elapsed))
    throw DomainError("DomainError: non-finite sample");
  if (s.voltage <= 0.0 || s.amperage < 0.0 || s.elapsed <= 0.0 || s.iterations < 1)
    throw DomainError("DomainError: sample outside V>0, I>=0, t>0, i>=1");
  return s.voltage * s.amperage * (s.elapsed / static_cast<double>(s.iterations));
}

inline MeasurementRecord to_record(const RawSample& s) {
  return MeasurementRecord{s.device, s.pattern, energy_per_iteration(s), false};
}

// Subtracts each device's mean baseline energy from its records. Record count
// and order are preserved. Negative results are kept.
inline std::vector<MeasurementRecord> subtract_baseline(
    const std::vector<MeasurementRecord>& records,
    const std::vector<MeasurementRecord>& baselines) {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& b : baselines) {
    auto& [sum, n] = sums[b.device];
    sum += b.energy;
    ++n;
  }
  std::map<std::string, double> mean;
  for (const auto& [device, acc] : sums)
    mean[device] = acc.first / static_cast<double>(acc.second);

  std::vector<MeasurementRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto it = mean.find(r.device);
    if (it == mean.end()) throw MissingBaseline(r.device);
    MeasurementRecord c = r;
    c.energy -= it->second;
    c.baseline_corrected = true;
    out.push_back(std::move(c));
  }
  return out;
}

// Observations grouped by pattern key.
struct Dataset {
  std::map<PatternKey, std::vector<double>> observations;

  bool empty() const noexcept { return observations.empty(); }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [k, v] : observations) n += v.size();
    return n;
  }
  void add(const PatternKey& key, double energy) { observations[key].push_back(energy); }
};

inline Dataset make_dataset(const std::vector<MeasurementRecord>& records) {
  Dataset d;
  for (const auto& r : records) d.add(r.key(), r.energy);
  return d;
}

struct MeasurementFile {
  std::vector<MeasurementRecord> records;    // pattern rows, uncorrected
  std::vector<MeasurementRecord> baselines;  // BASELINE rows

  std::map<PatternKey, std::size_t> counts() const {
    std::map<PatternKey, std::size_t> c;
    for (const auto& r : records) ++c[r.key()];
    return c;
  }

  // Baseline-corrected dataset ready for inference.
  Dataset corrected() const { return make_dataset(subtract_baseline(records, baselines)); }
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline double parse_real(std::string_view s, std::size_t row, const char* field) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    throw SchemaError(row, std::string("SchemaError: ") + field + " = '" + std::string(s) +
                               "' is not a finite number");
  return v;
}

template <typename Int>
Int parse_int(std::string_view s, std::size_t row, const char* field) {
  s = trim(s);
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw SchemaError(row, std::string("SchemaError: ") + field + " = '" + std::string(s) +
                               "' is not a non-negative integer");
  return v;
}

}  // namespace detail

// Parses the measurement CSV. Row numbers in errors count the header as row 1.
inline std::vector<RawSample> read_raw_samples(std::istream& in) {
  std::string line;
  std::size_t row = 0;
  std::vector<RawSample> out;
  bool header = false;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    if (!header) {
      if (detail::trim(line) != kMeasurementHeader)
        throw SchemaError(row, "SchemaError: expected header '" +
                                   std::string(kMeasurementHeader) + "'");
      header = true;
      continue;
    }
    const auto f = detail::split_csv(line);
    if (f.size() != 8)
      throw SchemaError(row, "SchemaError: expected 8 fields, got " + std::to_string(f.size()));
    RawSample s;
    s.device = std::string(detail::trim(f[0]));
    if (s.device.empty()) throw SchemaError(row, "SchemaError: empty device_id");
    const auto pattern = detail::trim(f[1]);
    if (pattern != kBaselineMarker) {
      try {
        s.pattern = parse_descriptor(pattern);
      } catch (const IllegalTriple& e) {
        throw IllegalTriple("row " + std::to_string(row) + ": " + e.what());
      } catch (const UnknownPattern& e) {
        throw SchemaError(row, std::string("SchemaError: ") + e.what());
      }
    }
    s.cycle = detail::parse_int<std::uint32_t>(f[2], row, "cycle");
    s.sample_index = detail::parse_int<std::uint32_t>(f[3], row, "sample_index");
    s.voltage = detail::parse_real(f[4], row, "voltage_v");
    s.amperage = detail::parse_real(f[5], row, "amperage_a");
    s.elapsed = detail::parse_real(f[6], row, "elapsed_s");
    s.iterations = detail::parse_int<std::uint64_t>(f[7], row, "iterations");
    if (s.voltage <= 0.0 || s.amperage < 0.0 || s.elapsed <= 0.0 || s.iterations < 1)
      throw SchemaError(row, "SchemaError: requires voltage > 0, amperage >= 0, elapsed > 0, "
                             "iterations >= 1");
    out.push_back(std::move(s));
  }
  if (!header) throw SchemaError(row == 0 ? 1 : row, "SchemaError: missing header");
  return out;
}

inline MeasurementFile split_records(const std::vector<RawSample>& samples) {
  MeasurementFile m;
  for (const auto& s : samples) (s.is_baseline() ? m.baselines : m.records).push_back(to_record(s));
  return m;
}

inline MeasurementFile load_measurements(std::istream& in) {
  return split_records(read_raw_samples(in));
}

inline MeasurementFile load_measurements(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open measurements file '" + path + "'");
  return load_measurements(in);
}

inline void write_raw_samples(std::ostream& out, const std::vector<RawSample>& samples) {
  out << kMeasurementHeader << '\n';
  char buf[64];
  auto real = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& s : samples) {
    out << s.device << ',' << (s.pattern ? render(*s.pattern) : std::string(kBaselineMarker))
        << ',' << s.cycle << ',' << s.sample_index << ',' << real(s.voltage) << ','
        << real(s.amperage) << ',' << real(s.elapsed) << ',' << s.iterations << '\n';
  }
}

}  // namespace jbe
