#include <gtest/gtest.h>

#include <sstream>
#include <string>

#include "jbe/diagnostics.hpp"
#include "jbe/simulate.hpp"

using namespace jbe;

namespace {

const std::string kBundled = std::string(JBE_SOURCE_DIR) + "/models/appendix_a.json";

struct PublishedRow {
  const char* description;
  const char* mean;
  const char* mcse;
  const char* sd;
  const char* ess;
  const char* rhat;
};

const PublishedRow kRows[] = {
#include "published_rows.inc"
};

PosteriorModel gate_model(double rhat, double ess, std::optional<double> total) {
  PosteriorModel m;
  m.levels[Category::Device] = {"device1"};
  m.parameters = {"sigma"};
  m.summaries["sigma"] = ParamSummary{1e-8, 1e-10, 1e-12, ess, rhat};
  if (total) m.meta["total_draws"] = *total;
  return m;
}

Dataset simulate_from(const PosteriorModel& model, std::uint64_t seed) {
  auto t = truth_from_model(model, seed);
  t.baseline = 1e-6;
  return split_records(simulate_study(t).samples).corrected();
}

}  // namespace

TEST(Report, BundledRowsReproducePublishedValues) {
  const auto rep = diagnose(load_model(kBundled));
  ASSERT_EQ(rep.rows.size(), std::size(kRows));
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& r = rep.rows[i];
    const auto& p = kRows[i];
    EXPECT_EQ(r.description, p.description) << r.name;
    EXPECT_EQ(format_sci(r.summary.mean), p.mean) << r.name;
    EXPECT_EQ(format_sci(r.summary.mcse), p.mcse) << r.name;
    EXPECT_EQ(format_sci(r.summary.sd), p.sd) << r.name;
    EXPECT_EQ(format_fixed(r.summary.ess, 3), p.ess) << r.name;
    EXPECT_EQ(format_fixed(r.summary.rhat, 7), p.rhat) << r.name;
  }
}

TEST(Report, BundledTableLine) {
  const std::string table = render_table(diagnose(load_model(kBundled)));
  EXPECT_NE(table.find("6.777943e-09  4.226145e-12  3.882128e-10      8438.222  1.0006578"),
            std::string::npos);
  EXPECT_NE(table.find("overall: pass"), std::string::npos);
}

TEST(Report, BundledGatesWithoutDrawCount) {
  const auto rep = diagnose(load_model(kBundled));
  EXPECT_FALSE(rep.total_draws.has_value());
  for (const auto& r : rep.rows) {
    EXPECT_TRUE(r.rhat_ok) << r.name;
    EXPECT_TRUE(r.ess_ok) << r.name;
    EXPECT_FALSE(r.ess_ratio.has_value());
  }
  EXPECT_TRUE(rep.all_pass());
}

TEST(Report, AdditionMcseRatio) {
  const auto rep = diagnose(load_model(kBundled));
  for (const auto& r : rep.rows) {
    if (r.name != "beta[addition]") continue;
    EXPECT_EQ(r.mcse_ratio(), 4.513539e-12 / 2.954780e-08);
    EXPECT_NEAR(r.mcse_ratio(), 1.5e-4, 0.05e-4);
    return;
  }
  FAIL() << "no addition row";
}

TEST(Gates, Thresholds) {
  EXPECT_TRUE(diagnose(gate_model(1.0099, 401.0, 4000.0)).all_pass());
  EXPECT_FALSE(diagnose(gate_model(1.01, 401.0, 4000.0)).all_pass());
  EXPECT_FALSE(diagnose(gate_model(1.0, 400.0, 4000.0)).all_pass());
  // ESS/N must exceed 1e-4.
  EXPECT_FALSE(diagnose(gate_model(1.0, 401.0, 5e6)).all_pass());
  EXPECT_TRUE(diagnose(gate_model(1.0, 401.0, 3e6)).all_pass());
  EXPECT_TRUE(diagnose(gate_model(1.0, 401.0, std::nullopt)).all_pass());
}

TEST(Gates, FlagsNameTheFailingGate) {
  const auto rep = diagnose(gate_model(1.2, 300.0, 4000.0));
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_FALSE(rep.rows[0].rhat_ok);
  EXPECT_FALSE(rep.rows[0].ess_ok);
  EXPECT_TRUE(rep.rows[0].ratio_ok);
  const std::string t = render_table(rep);
  EXPECT_NE(t.find("rhat:FAIL ess:FAIL ess/n:ok"), std::string::npos);
  EXPECT_NE(t.find("overall: FAIL"), std::string::npos);
  const auto j = to_json(rep);
  EXPECT_FALSE(j["pass"].get<bool>());
  EXPECT_EQ(j["parameters"][0]["ess_ratio"].get<double>(), 300.0 / 4000.0);
}

TEST(Ppc, SelfSimulatedDataRarelyFlagged) {
  const auto model = load_model(kBundled);
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto data = simulate_from(model, seed);
    ASSERT_EQ(data.observations.size(), 348u);
    const auto misfits = posterior_predictive_check(model, data, 0.99);
    EXPECT_LE(static_cast<double>(misfits.size()) / 348.0, 0.02);
  }
}

TEST(Ppc, ShiftedKeyIsTheOnlyMisfit) {
  const auto model = load_model(kBundled);
  const double sigma = 1.356665e-08;
  // Every key observed symmetrically around its posterior mean.
  Dataset data;
  for (const auto& k : legal_keys(model.levels)) {
    const double mu = posterior_mean_mu(model, k);
    for (int i = 0; i < 25; ++i) {
      data.add(k, mu - sigma);
      data.add(k, mu + sigma);
    }
  }
  const PatternKey shifted{{Operation::Multiplication, DataType::Long, DataSize::Load},
                           "device1"};
  ASSERT_TRUE(data.observations.count(shifted));
  EXPECT_TRUE(posterior_predictive_check(model, data, 0.99).empty());
  for (auto& v : data.observations.at(shifted)) v += 10.0 * sigma;
  const auto misfits = posterior_predictive_check(model, data, 0.99);
  ASSERT_EQ(misfits.size(), 1u);
  EXPECT_EQ(misfits[0].key, shifted);
  EXPECT_GT(misfits[0].observed_mean, misfits[0].upper);
}

TEST(Ppc, EmptyData) {
  EXPECT_TRUE(posterior_predictive_check(load_model(kBundled), Dataset{}).empty());
}

TEST(Ppc, LevelMustBeAProbability) {
  EXPECT_THROW(posterior_predictive_check(load_model(kBundled), Dataset{}, 1.0), DomainError);
}

TEST(Ppc, FittedModelWithDraws) {
  auto t = load_truth(std::string(JBE_SOURCE_DIR) + "/samples/truth_small.json");
  const auto data = split_records(simulate_study(t).samples).corrected();
  FitOptions o;
  o.seed = 3;
  o.warmup = 300;
  o.draws = 300;
  const auto m = fit(data, ModelSpec::from_dataset(data), o);
  EXPECT_LE(posterior_predictive_check(m, data).size(), 1u);
  const auto rep = diagnose(m);
  ASSERT_TRUE(rep.total_draws.has_value());
  EXPECT_EQ(*rep.total_draws, 1200.0);
  for (const auto& r : rep.rows) {
    EXPECT_GE(r.summary.mcse, 0.0);
    EXPECT_LE(r.summary.ess, 1.5 * 1200.0);
  }
}
