#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

#include "jbe/inference.hpp"
#include "jbe/simulate.hpp"

using namespace jbe;

namespace {

const std::string kBundled = std::string(JBE_SOURCE_DIR) + "/models/appendix_a.json";

GroundTruth single_addition(double noise) {
  GroundTruth t;
  t[Category::DataSize] = {{"constant", 0.0}};
  t[Category::Operation] = {{"addition", 1e-8}};
  t[Category::DataType] = {{"int", 0.0}};
  t[Category::Device] = {{"device1", 0.0}};
  t.noise_sd = noise;
  t.seed = 17;
  t.baseline = 1e-7;
  return t;
}

GroundTruth small_truth(std::uint64_t seed) {
  auto t = load_truth(std::string(JBE_SOURCE_DIR) + "/samples/truth_small.json");
  t.seed = seed;
  return t;
}

std::map<PatternKey, std::vector<double>> by_key(const SimulatedStudy& s) {
  std::map<PatternKey, std::vector<double>> out;
  for (std::size_t i = 0; i < s.samples.size(); ++i)
    if (s.samples[i].pattern)
      out[PatternKey{*s.samples[i].pattern, s.samples[i].device}].push_back(s.energies[i]);
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string csv(const SimulatedStudy& s) {
  std::ostringstream out;
  write_raw_samples(out, s.samples);
  return out.str();
}

}  // namespace

TEST(Simulate, SingleEffectMean) {
  const auto s = simulate_study(single_addition(1e-12));
  const auto keys = by_key(s);
  ASSERT_EQ(keys.size(), 1u);
  const auto& v = keys.begin()->second;
  ASSERT_EQ(v.size(), 50u);
  EXPECT_NEAR(mean(v), 1e-8, 1e-12 * 3.0 / std::sqrt(50.0));
}

TEST(Simulate, BundledMeansReproduceNoiseSd) {
  auto t = truth_from_model(load_model(kBundled), 23);
  t.noise_sd = 1.356665e-08;
  t.baseline = 1e-6;
  const auto keys = by_key(simulate_study(t));
  ASSERT_EQ(keys.size(), 348u);
  const PatternKey add{{Operation::Addition, DataType::Int, DataSize::Constant}, "device2"};
  EXPECT_NEAR(sd(keys.at(add)), 1.356665e-08, 0.25 * 1.356665e-08);
  std::size_t within = 0;
  for (const auto& [k, v] : keys) {
    ASSERT_EQ(v.size(), 50u);
    within += std::abs(sd(v) / 1.356665e-08 - 1.0) <= 0.25;
  }
  // 25% is about 2.5 standard errors of a 50-draw sd.
  EXPECT_GE(static_cast<double>(within) / 348.0, 0.95);
}

TEST(Simulate, SameSeedByteIdentical) {
  const auto t = small_truth(7);
  EXPECT_EQ(csv(simulate_study(t)), csv(simulate_study(t)));
  EXPECT_NE(csv(simulate_study(t)), csv(simulate_study(small_truth(8))));
}

TEST(Simulate, ObservationCountPerKey) {
  const auto t = small_truth(1);
  for (auto [cycles, samples] : {std::pair{10u, 5u}, std::pair{3u, 2u}}) {
    const auto keys = by_key(simulate_study(t, cycles, samples));
    EXPECT_EQ(keys.size(), legal_keys(t.levels()).size());
    for (const auto& [k, v] : keys) EXPECT_EQ(v.size(), cycles * samples);
  }
}

TEST(Simulate, EveryKeyOncePerCycle) {
  const auto t = small_truth(2);
  const auto s = simulate_study(t);
  // Samples of one run are contiguous; count runs per (device, cycle, slot).
  std::map<std::tuple<std::string, std::uint32_t, std::string>, int> runs;
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    const auto& r = s.samples[i];
    if (r.sample_index != 0) continue;
    ++runs[{r.device, r.cycle, r.pattern ? render(*r.pattern) : "BASELINE"}];
  }
  const std::size_t per_device = legal_keys(t.levels()).size() / 2 + 1;
  EXPECT_EQ(runs.size(), 2u * 10u * per_device);
  for (const auto& [k, n] : runs) EXPECT_EQ(n, 1);
}

TEST(Simulate, CycleOrderIsRandomized) {
  const auto s = simulate_study(small_truth(3));
  std::map<std::uint32_t, std::vector<std::string>> order;
  for (const auto& r : s.samples)
    if (r.device == "device1" && r.sample_index == 0)
      order[r.cycle].push_back(r.pattern ? render(*r.pattern) : "BASELINE");
  int distinct = 0;
  for (std::uint32_t c = 1; c < 10; ++c) distinct += order[c] != order[0];
  EXPECT_GE(distinct, 8);
}

TEST(Simulate, IngestRoundTripIsExact) {
  const auto t = small_truth(4);
  const auto s = simulate_study(t);
  std::stringstream io;
  write_raw_samples(io, s.samples);
  const auto back = read_raw_samples(io);
  ASSERT_EQ(back.size(), s.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const double raw = back[i].pattern ? t.baseline + s.energies[i] : s.energies[i];
    EXPECT_NEAR(energy_per_iteration(back[i]), raw, 1e-15 * std::abs(raw) + 1e-30);
  }
  const auto d = split_records(back).corrected();
  const auto truth_keys = by_key(s);
  for (const auto& [k, v] : d.observations) {
    const auto& drawn = truth_keys.at(k);
    ASSERT_EQ(v.size(), drawn.size());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], drawn[i], 1e-20);
  }
}

TEST(Simulate, LawOfLargeNumbers) {
  auto t = small_truth(5);
  t.noise_sd = 1e-9;
  double prev = HUGE_VAL;
  for (std::uint32_t cycles : {2u, 40u, 800u}) {
    const auto keys = by_key(simulate_study(t, cycles, 5));
    double worst = 0.0;
    for (const auto& [k, v] : keys) {
      const double err = std::abs(mean(v) - t.mu(k));
      EXPECT_LE(err, 5.0 * t.noise_sd / std::sqrt(static_cast<double>(v.size())));
      worst = std::max(worst, err);
    }
    EXPECT_LT(worst, prev);
    prev = worst;
  }
}

TEST(Simulate, NegativeEnergyNeedsBaseline) {
  auto t = single_addition(1e-8);
  t.baseline = 0.0;
  t[Category::Operation]["addition"] = 0.0;
  EXPECT_THROW(simulate_study(t), DomainError);
}

TEST(Simulate, InvalidTruth) {
  auto t = single_addition(0.0);
  EXPECT_THROW(simulate_study(t), DomainError);
  t = single_addition(1e-12);
  t[Category::Operation]["plus"] = 1.0;
  EXPECT_THROW(t.validate(), DomainError);
}

TEST(Simulate, TruthJsonRoundTrip) {
  const auto t = small_truth(9);
  const auto back = truth_from_json(to_json(t));
  EXPECT_EQ(back.effects, t.effects);
  EXPECT_EQ(back.noise_sd, t.noise_sd);
  EXPECT_EQ(back.seed, t.seed);
  EXPECT_EQ(back.baseline, t.baseline);
}

TEST(Schedule, SameSeedSamePermutation) {
  const std::vector<int> keys{1, 2, 3};
  EXPECT_EQ(shuffle_schedule(keys, 0), shuffle_schedule(keys, 0));
}

TEST(Schedule, IsPermutation) {
  const std::vector<int> keys{1, 2, 3};
  auto out = shuffle_schedule(keys, 42);
  std::sort(out.begin(), out.end());
  EXPECT_EQ(out, keys);
}

TEST(Schedule, FullCatalogOncePerRound) {
  const auto keys = legal_keys(full_levels({"device1", "device2"}));
  ASSERT_EQ(keys.size(), 348u);
  for (std::uint64_t round = 0; round < 10; ++round) {
    auto out = shuffle_schedule(keys, round);
    std::map<PatternKey, int> seen;
    for (const auto& k : out) ++seen[k];
    EXPECT_EQ(seen.size(), 348u);
    for (const auto& [k, n] : seen) EXPECT_EQ(n, 1);
  }
}
