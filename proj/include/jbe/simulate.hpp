#pragma once

// Synthetic measurement studies from known effects. Output uses the ingest
// CSV schema so a simulated study can be fed back through the whole pipeline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jbe/catalog.hpp"
#include "jbe/errors.hpp"
#include "jbe/ingest.hpp"
#include "jbe/model.hpp"

namespace jbe {

// Fixed encoding of a drawn energy: J = V * I * t / iterations, solved for I.
inline constexpr double kSimVoltage = 5.6;         // V
inline constexpr double kSimElapsed = 0.1006;      // s per cycle loop
inline constexpr std::uint64_t kSimIterations = 10'000'000;

struct GroundTruth {
  // effects[category][level id] in joules.
  std::array<std::map<std::string, double>, kCategoryCount> effects;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  double baseline = 0.0;  // true per-iteration energy of the empty loop

  std::map<std::string, double>& operator[](Category c) {
    return effects[static_cast<std::size_t>(c)];
  }
  const std::map<std::string, double>& operator[](Category c) const {
    return effects[static_cast<std::size_t>(c)];
  }

  // Level sets in catalog order (devices lexicographic).
  LevelSets levels() const {
    LevelSets out;
    for (std::size_t i = 0; i < kDataSizeCount; ++i) {
      const auto id = std::string(to_id(static_cast<DataSize>(i)));
      if ((*this)[Category::DataSize].count(id)) out[Category::DataSize].push_back(id);
    }
    for (std::size_t i = 0; i < kOperationCount; ++i) {
      const auto id = std::string(to_id(static_cast<Operation>(i)));
      if ((*this)[Category::Operation].count(id)) out[Category::Operation].push_back(id);
    }
    for (std::size_t i = 0; i < kDataTypeCount; ++i) {
      const auto id = std::string(to_id(static_cast<DataType>(i)));
      if ((*this)[Category::DataType].count(id)) out[Category::DataType].push_back(id);
    }
    for (const auto& [d, v] : (*this)[Category::Device]) out[Category::Device].push_back(d);
    return out;
  }

  void validate() const {
    if (!(noise_sd > 0.0) || !std::isfinite(noise_sd))
      throw DomainError("DomainError: noise_sd must be positive and finite");
    if (!std::isfinite(baseline)) throw DomainError("DomainError: baseline must be finite");
    for (Category c : kCategories) {
      if ((*this)[c].empty())
        throw DomainError("DomainError: truth has no " + std::string(greek(c)) + " levels");
      for (const auto& [id, v] : (*this)[c]) {
        if (!std::isfinite(v))
          throw DomainError("DomainError: non-finite effect " + effect_name(c, id));
        const bool known = c == Category::DataSize    ? parse_data_size(id).has_value()
                           : c == Category::Operation ? parse_operation(id).has_value()
                           : c == Category::DataType  ? parse_data_type(id).has_value()
                                                      : !id.empty();
        if (!known) throw DomainError("DomainError: unknown level " + effect_name(c, id));
      }
    }
    if (legal_keys(levels()).empty())
      throw DomainError("DomainError: truth levels admit no legal pattern");
  }

  double mu(const PatternKey& k) const {
    double m = 0.0;
    for (Category c : kCategories) m += (*this)[c].at(level_of(k, c));
    return m;
  }
};

inline nlohmann::json to_json(const GroundTruth& t) {
  nlohmann::json j;
  for (Category c : kCategories) j[std::string(greek(c))] = t[c];
  j["sigma"] = t.noise_sd;
  j["seed"] = t.seed;
  j["baseline"] = t.baseline;
  return j;
}

inline GroundTruth truth_from_json(const nlohmann::json& j) {
  GroundTruth t;
  try {
    for (Category c : kCategories)
      t[c] = j.at(std::string(greek(c))).get<std::map<std::string, double>>();
    t.noise_sd = j.at("sigma").get<double>();
    if (j.contains("seed")) t.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("baseline")) t.baseline = j.at("baseline").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("FormatError: ground truth: ") + e.what());
  }
  t.validate();
  return t;
}

inline GroundTruth load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open truth file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("FormatError: ") + e.what());
  }
  return truth_from_json(j);
}

// Effects at a model's posterior means; sigma from the model unless given.
inline GroundTruth truth_from_model(const PosteriorModel& m, std::uint64_t seed = 0) {
  GroundTruth t;
  for (Category c : kCategories) {
    for (const auto& id : m.levels[c])
      t[c][id] = m.levels.active(c) ? m.summary(effect_name(c, id)).mean : 0.0;
  }
  t.noise_sd = m.summary(std::string(kSigmaName)).mean;
  t.seed = seed;
  return t;
}

// Deterministic permutation under `seed`.
template <typename T>
std::vector<T> shuffle_schedule(std::vector<T> items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(items.begin(), items.end(), rng);
  return items;
}

struct SimulatedStudy {
  std::vector<RawSample> samples;
  std::vector<double> energies;  // drawn per-iteration energy of each sample
};

inline RawSample encode_energy(const std::string& device, std::optional<PatternTriple> pattern,
                               std::uint32_t cycle, std::uint32_t sample, double energy) {
  if (!(energy >= 0.0))
    throw DomainError("DomainError: drawn energy " + std::to_string(energy) +
                      " J is negative; raise the truth's baseline");
  RawSample s;
  s.device = device;
  s.pattern = pattern;
  s.cycle = cycle;
  s.sample_index = sample;
  s.voltage = kSimVoltage;
  s.elapsed = kSimElapsed;
  s.iterations = kSimIterations;
  s.amperage = energy * static_cast<double>(kSimIterations) / (kSimVoltage * kSimElapsed);
  return s;
}

// Every legal key of the truth's levels (plus one baseline slot) runs once
// per cycle, in a per-device, per-cycle random order; each run records
// `samples_per_cycle` samples. Raw energies are baseline + effect sum + noise.
inline SimulatedStudy simulate_study(const GroundTruth& truth, std::uint32_t cycles = 10,
                                     std::uint32_t samples_per_cycle = 5) {
  truth.validate();
  if (cycles < 1 || samples_per_cycle < 1)
    throw DomainError("DomainError: cycles and samples per cycle must be positive");
  const LevelSets levels = truth.levels();
  const auto all = legal_keys(levels);
  const auto& devices = levels[Category::Device];

  SimulatedStudy out;
  for (std::size_t d = 0; d < devices.size(); ++d) {
    std::vector<std::optional<PatternTriple>> slots{std::nullopt};
    for (const auto& k : all)
      if (k.device == devices[d]) slots.emplace_back(k.triple);
    std::seed_seq seq{static_cast<std::uint32_t>(truth.seed),
                      static_cast<std::uint32_t>(truth.seed >> 32),
                      static_cast<std::uint32_t>(d)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, truth.noise_sd);
    for (std::uint32_t cycle = 0; cycle < cycles; ++cycle) {
      const auto order = shuffle_schedule(slots, rng());
      for (const auto& slot : order) {
        const double mu = slot ? truth.mu(PatternKey{*slot, devices[d]}) : 0.0;
        for (std::uint32_t s = 0; s < samples_per_cycle; ++s) {
          const double drawn = slot ? mu + noise(rng) : 0.0;
          out.samples.push_back(encode_energy(devices[d], slot, cycle, s, truth.baseline + drawn));
          out.energies.push_back(slot ? drawn : truth.baseline);
        }
      }
    }
  }
  return out;
}

}  // namespace jbe
