#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "jbe/inference.hpp"
#include "jbe/simulate.hpp"

using namespace jbe;

namespace {

const std::string kBundled = std::string(JBE_SOURCE_DIR) + "/models/appendix_a.json";

PatternKey key(Operation op, DataType t, DataSize s, const std::string& device) {
  return PatternKey{{op, t, s}, device};
}

// Direct Gaussian and exponential log-densities, written out.
double ln_normal(double x, double m, double s) {
  return std::log(1.0 / (s * std::sqrt(2.0 * std::numbers::pi))) -
         (x - m) * (x - m) / (2.0 * s * s);
}
double ln_expo(double x, double rate) { return std::log(rate * std::exp(-rate * x)); }

// Two operation levels, everything else single-level; one device.
struct Toy {
  ModelSpec spec;
  Dataset data;
  ParamVector theta;
  PatternKey add = key(Operation::Addition, DataType::Int, DataSize::Constant, "device1");
  PatternKey mul = key(Operation::Multiplication, DataType::Int, DataSize::Constant, "device1");

  Toy() {
    data.add(add, 0.0151);
    data.add(add, 0.0163);
    data.add(mul, 0.0190);
    spec = ModelSpec::from_dataset(data);
    theta.z[0] = {0.3};
    theta.z[1] = {-0.5, 1.2};
    theta.z[2] = {0.1};
    theta.hyper_mean = {0.0055, 0.0061, 0.0049, 0.0};
    theta.log_sd = {std::log(8e-4), std::log(1.5e-3), std::log(5e-4), 0.0};
    theta.log_sigma = std::log(2e-3);
  }
};

Dataset small_dataset(std::uint64_t seed) {
  auto t = load_truth(std::string(JBE_SOURCE_DIR) + "/samples/truth_small.json");
  t.seed = seed;
  return split_records(simulate_study(t).samples).corrected();
}

FitOptions quick(std::uint64_t seed) {
  FitOptions o;
  o.seed = seed;
  o.warmup = 300;
  o.draws = 300;
  return o;
}

}  // namespace

TEST(LogPosterior, EmptyDataIsPriorOnly) {
  Toy toy;
  const Dataset empty;
  EXPECT_DOUBLE_EQ(log_posterior(toy.theta, toy.spec, empty), log_prior(toy.theta, toy.spec));
}

TEST(LogPosterior, ObservationAtMean) {
  Toy toy;
  const Effects e = to_effects(toy.theta, toy.spec);
  const double mu = e.effect[0][0] + e.effect[1][0] + e.effect[2][0];
  Dataset one;
  one.add(toy.add, mu);
  const auto p = PreparedData::build(one, toy.spec.levels);
  EXPECT_NEAR(log_likelihood(e, p), -std::log(2e-3 * std::sqrt(2.0 * std::numbers::pi)), 1e-12);
}

TEST(LogPosterior, HandComputedToyModel) {
  Toy toy;
  const double sd_a = 8e-4, sd_b = 1.5e-3, sd_g = 5e-4, sigma = 2e-3;
  const double a = 0.0055 + sd_a * 0.3;
  const double b_add = 0.0061 + sd_b * -0.5;
  const double b_mul = 0.0061 + sd_b * 1.2;
  const double g = 0.0049 + sd_g * 0.1;
  double expected = ln_normal(0.0151, a + b_add + g, sigma) +
                    ln_normal(0.0163, a + b_add + g, sigma) +
                    ln_normal(0.0190, a + b_mul + g, sigma);
  for (double z : {0.3, -0.5, 1.2, 0.1}) expected += ln_normal(z, 0.0, 1.0);
  for (double m : {0.0055, 0.0061, 0.0049}) expected += ln_normal(m, 0.006, 0.001);
  for (double s : {sd_a, sd_b, sd_g, sigma}) expected += ln_expo(s, 1e3) + std::log(s);
  const double got = log_posterior(toy.theta, toy.spec, toy.data);
  EXPECT_NEAR(got, expected, 1e-12 * std::abs(expected));
}

TEST(LogPosterior, NonCenteredIdentity) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  const Dataset data = small_dataset(3);
  const ModelSpec spec = ModelSpec::from_dataset(data);
  for (int rep = 0; rep < 20; ++rep) {
    ParamVector theta;
    for (Category c : kCategories) {
      const auto ci = static_cast<std::size_t>(c);
      theta.z[ci].resize(spec.levels[c].size());
      for (auto& z : theta.z[ci]) z = n(rng);
      theta.hyper_mean[ci] = 1e-8 * (1.0 + 0.2 * n(rng));
      theta.log_sd[ci] = std::log(3e-9) + 0.3 * n(rng);
    }
    theta.log_sigma = std::log(2e-10) + 0.1 * n(rng);
    const Effects e = to_effects(theta, spec);
    for (Category c : kCategories) {
      const auto ci = static_cast<std::size_t>(c);
      for (std::size_t j = 0; j < theta.z[ci].size(); ++j)
        EXPECT_DOUBLE_EQ(e.effect[ci][j],
                         theta.hyper_mean[ci] + std::exp(theta.log_sd[ci]) * theta.z[ci][j]);
    }
    double centered = 0.0;
    for (const auto& [k, values] : data.observations) {
      double mu = 0.0;
      for (Category c : kCategories) {
        const auto& lv = spec.levels[c];
        const auto j = std::find(lv.begin(), lv.end(), level_of(k, c)) - lv.begin();
        mu += e.effect[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
      }
      for (double x : values) centered += ln_normal(x, mu, e.sigma);
    }
    const double got = log_likelihood(e, PreparedData::build(data, spec.levels));
    EXPECT_NEAR(got, centered, 1e-12 * std::abs(centered));
  }
}

TEST(LogPosterior, SingleDeviceFixesDeviceEffect) {
  Toy toy;
  EXPECT_FALSE(toy.spec.levels.active(Category::Device));
  const Effects e = to_effects(toy.theta, toy.spec);
  ASSERT_EQ(e.effect[3].size(), 1u);
  EXPECT_EQ(e.effect[3][0], 0.0);
  auto moved = toy.theta;
  moved.hyper_mean[3] = 5.0;
  moved.log_sd[3] = 3.0;
  EXPECT_EQ(log_posterior(moved, toy.spec, toy.data), log_posterior(toy.theta, toy.spec, toy.data));
}

TEST(LogPosterior, UnmappableKey) {
  Toy toy;
  Dataset extra = toy.data;
  extra.add(key(Operation::Division, DataType::Int, DataSize::Constant, "device1"), 0.01);
  EXPECT_THROW(log_posterior(toy.theta, toy.spec, extra), DataError);
}

TEST(Fit, SameSeedSameDraws) {
  const Dataset data = small_dataset(1);
  const auto spec = ModelSpec::from_dataset(data);
  const auto a = fit(data, spec, quick(5));
  const auto b = fit(data, spec, quick(5));
  EXPECT_EQ(a.draws, b.draws);
  const auto c = fit(data, spec, quick(6));
  EXPECT_NE(a.draws, c.draws);
}

TEST(Fit, RowOrderDoesNotMatter) {
  Dataset data = small_dataset(2);
  const auto spec = ModelSpec::from_dataset(data);
  const auto a = fit(data, spec, quick(9));
  std::mt19937_64 rng(4);
  for (auto& [k, v] : data.observations) std::shuffle(v.begin(), v.end(), rng);
  const auto b = fit(data, spec, quick(9));
  EXPECT_EQ(a.draws, b.draws);
}

TEST(Fit, SerialAndParallelAgree) {
  const Dataset data = small_dataset(2);
  const auto spec = ModelSpec::from_dataset(data);
  auto o = quick(3);
  const auto a = fit(data, spec, o);
  o.parallel = false;
  EXPECT_EQ(a.draws, fit(data, spec, o).draws);
}

TEST(Fit, RecordsMetaAndSummaries) {
  const Dataset data = small_dataset(4);
  const auto spec = ModelSpec::from_dataset(data);
  const auto m = fit(data, spec, quick(1));
  EXPECT_EQ(m.meta["chains"], 4);
  EXPECT_EQ(m.meta["total_draws"], 1200);
  EXPECT_EQ(m.meta["acceptance"].size(), 4u);
  EXPECT_TRUE(m.meta["warnings"].is_array());
  EXPECT_EQ(m.meta["observations"].get<double>(), static_cast<double>(data.size()));
  for (const auto& name : m.parameters) {
    ASSERT_EQ(m.draws.at(name).size(), 4u);
    EXPECT_EQ(m.draws.at(name)[0].size(), 300u);
    EXPECT_DOUBLE_EQ(m.summary(name).mean, summarize(m.draws.at(name)).mean);
  }
  const auto& sig = m.draws.at("sigma");
  for (const auto& ch : sig)
    for (double s : ch) EXPECT_GT(s, 0.0);
}

TEST(Fit, PosteriorConcentratesOnTruth) {
  const auto t = load_truth(std::string(JBE_SOURCE_DIR) + "/samples/truth_small.json");
  const Dataset data = small_dataset(t.seed);
  const auto m = fit(data, ModelSpec::from_dataset(data), quick(2));
  for (const auto& [k, v] : data.observations) {
    const ChainSet mu = mu_draws(m, k);
    const double sd = pooled_sd(mu);
    // sd of the key's mean estimate from the data alone is 1e-10 / sqrt(50).
    EXPECT_NEAR(pooled_mean(mu), t.mu(k), 3.0 * sd + 3.0 * 1e-10 / std::sqrt(50.0)) << render(k);
  }
  EXPECT_NEAR(m.summary("sigma").mean, 1e-10, 0.1e-10);
}

TEST(Fit, Preconditions) {
  const Dataset data = small_dataset(1);
  const auto spec = ModelSpec::from_dataset(data);
  auto o = quick(1);
  o.chains = 1;
  EXPECT_THROW(fit(data, spec, o), DomainError);
  EXPECT_THROW(fit(Dataset{}, spec, quick(1)), DataError);
  Dataset extra = data;
  extra.add(key(Operation::Division, DataType::Int, DataSize::Constant, "device1"), 1e-8);
  EXPECT_THROW(fit(extra, spec, quick(1)), DataError);
}

TEST(Fit, ModelJsonRoundTripChecksSummaries) {
  const Dataset data = small_dataset(1);
  const auto m = fit(data, ModelSpec::from_dataset(data), quick(1));
  const auto back = model_from_json(to_json(m));
  EXPECT_EQ(back.draws, m.draws);
  EXPECT_EQ(back.levels, m.levels);
  auto j = to_json(m);
  j["summaries"]["sigma"]["mean"] = j["summaries"]["sigma"]["mean"].get<double>() * 1.01;
  EXPECT_THROW(model_from_json(j), FormatError);
}

TEST(PriorPredictive, RangeAndMean) {
  const ModelSpec spec{full_levels({"device1", "device2"}), {}};
  const auto draws = prior_predictive(spec, 100000, 1);
  ASSERT_EQ(draws.size(), 100000u);
  double s = 0.0;
  std::size_t inside = 0;
  for (double x : draws) {
    ASSERT_TRUE(std::isfinite(x));
    s += x;
    inside += x >= 0.0 && x <= 0.050;
  }
  EXPECT_NEAR(s / 1e5, 4.0 * 0.006, 0.0005);
  EXPECT_GE(static_cast<double>(inside) / 1e5, 0.99);
}

TEST(PriorPredictive, SdMatchesAnalytic) {
  // Four categories: var(mean) + var(sd * z) = 1e-6 + 2e-6 each; sigma * z adds 2e-6.
  const double analytic = std::sqrt(4.0 * (1e-6 + 2e-6) + 2e-6);
  const ModelSpec spec{full_levels({"device1", "device2"}), {}};
  EXPECT_NEAR(prior_predictive_moments(spec).second, analytic, 1e-15);
  const auto draws = prior_predictive(spec, 100000, 2);
  double m = 0.0, ss = 0.0;
  for (double x : draws) m += x;
  m /= 1e5;
  for (double x : draws) ss += (x - m) * (x - m);
  EXPECT_NEAR(std::sqrt(ss / (1e5 - 1.0)), analytic, 0.05 * analytic);
}

TEST(PriorPredictive, EmptyAndDeterministic) {
  const ModelSpec spec{full_levels({"device1", "device2"}), {}};
  EXPECT_TRUE(prior_predictive(spec, 0, 1).empty());
  EXPECT_EQ(prior_predictive(spec, 100, 4), prior_predictive(spec, 100, 4));
}

TEST(PosteriorMeanMu, DegenerateDraws) {
  PosteriorModel m;
  m.levels[Category::DataSize] = {"constant"};
  m.levels[Category::Operation] = {"addition"};
  m.levels[Category::DataType] = {"int"};
  m.levels[Category::Device] = {"device1", "device2"};
  const double values[] = {1.0, 2.0, 3.0, 4.0};
  for (Category c : kCategories)
    m.draws[effect_name(c, m.levels[c][0])] =
        ChainSet(2, Chain(10, values[static_cast<std::size_t>(c)]));
  m.draws[effect_name(Category::Device, "device2")] = ChainSet(2, Chain(10, 0.0));
  EXPECT_DOUBLE_EQ(
      posterior_mean_mu(m, key(Operation::Addition, DataType::Int, DataSize::Constant, "device1")),
      10.0);
}

TEST(PosteriorMeanMu, BundledAdditionQuadruple) {
  const auto m = load_model(kBundled);
  const double expected = 2.954780e-08 + 9.716775e-11 + 5.287443e-11 + 5.074944e-11;
  EXPECT_NEAR(expected, 2.974859162e-08, 1e-20);
  const double got =
      posterior_mean_mu(m, key(Operation::Addition, DataType::Int, DataSize::Constant, "device2"));
  EXPECT_NEAR(got, 2.974859162e-08, 1e-12 * 2.974859162e-08);
}

TEST(PosteriorMeanMu, UnknownDevice) {
  const auto m = load_model(kBundled);
  EXPECT_THROW(
      posterior_mean_mu(m, key(Operation::Addition, DataType::Int, DataSize::Constant, "device9")),
      UnknownLevel);
}
