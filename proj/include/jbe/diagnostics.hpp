#pragma once

// Convergence report over a fitted or bundled model, and the posterior
// predictive misfit check.

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jbe/gaussian.hpp"
#include "jbe/inference.hpp"
#include "jbe/ingest.hpp"
#include "jbe/model.hpp"
#include "jbe/stats.hpp"

namespace jbe {

struct ParamDiagnostics {
  std::string name;
  std::string category;     // display group
  std::string description;  // display row label
  ParamSummary summary;
  std::optional<double> ess_ratio;  // ESS / N when N is known
  bool rhat_ok = false;
  bool ess_ok = false;
  bool ratio_ok = false;  // true when N is unknown

  bool pass() const noexcept { return rhat_ok && ess_ok && ratio_ok; }
  // |MCSE / mean|; infinite for a zero mean.
  double mcse_ratio() const {
    return summary.mean == 0.0 ? HUGE_VAL : std::abs(summary.mcse / summary.mean);
  }
};

struct DiagnosticsReport {
  std::vector<ParamDiagnostics> rows;
  std::optional<double> total_draws;

  bool all_pass() const {
    for (const auto& r : rows)
      if (!r.pass()) return false;
    return true;
  }
};

namespace detail {

// Category label and row label for a parameter name.
inline std::pair<std::string, std::string> describe(const LevelSets& levels,
                                                    const std::string& name) {
  if (name == kSigmaName) return {"Model's Std. dev.", "sigma"};
  for (Category c : kCategories) {
    const std::string g(greek(c));
    if (name == g + "_mean") return {std::string(category_display(c)), "hyper-mean"};
    if (name == g + "_sd") return {std::string(category_display(c)), "hyper-sd"};
    if (name.rfind(g + "[", 0) == 0 && name.back() == ']') {
      const std::string id = name.substr(g.size() + 1, name.size() - g.size() - 2);
      return {std::string(category_display(c)), level_display(c, id)};
    }
  }
  (void)levels;
  return {"", name};
}

}  // namespace detail

// Gates: R-hat < 1.01, ESS > 400 and ESS/N > 1e-4 (the last only when N is
// known).
inline DiagnosticsReport diagnose(const PosteriorModel& model) {
  DiagnosticsReport rep;
  rep.total_draws = model.total_draws();
  for (const auto& name : model.parameters) {
    ParamDiagnostics d;
    d.name = name;
    std::tie(d.category, d.description) = detail::describe(model.levels, name);
    d.summary = model.summary(name);
    d.rhat_ok = d.summary.rhat < kRhatGate;
    d.ess_ok = d.summary.ess > kEssGate;
    if (rep.total_draws && *rep.total_draws > 0.0) {
      d.ess_ratio = d.summary.ess / *rep.total_draws;
      d.ratio_ok = *d.ess_ratio > kEssRatioGate;
    } else {
      d.ratio_ok = true;
    }
    rep.rows.push_back(std::move(d));
  }
  return rep;
}

inline std::string format_sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

inline std::string format_fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Columns: parameter, category, description, mean, MCSE, sd, ESS, R-hat,
// ESS/N, gate flags.
inline std::string render_table(const DiagnosticsReport& rep) {
  std::string out;
  char line[512];
  std::snprintf(line, sizeof line, "%-40s %-18s %-44s %-13s %-13s %-13s %12s %10s %10s %s\n",
                "parameter", "category", "description", "mean", "mcse", "sd", "ess", "rhat",
                "ess/n", "gates");
  out += line;
  for (const auto& r : rep.rows) {
    const std::string ratio = r.ess_ratio ? format_fixed(*r.ess_ratio, 4) : "n/a";
    std::string gates;
    gates += r.rhat_ok ? "rhat:ok " : "rhat:FAIL ";
    gates += r.ess_ok ? "ess:ok " : "ess:FAIL ";
    gates += !r.ess_ratio ? "ess/n:n/a" : (r.ratio_ok ? "ess/n:ok" : "ess/n:FAIL");
    std::snprintf(line, sizeof line, "%-40s %-18s %-44s %-13s %-13s %-13s %12s %10s %10s %s\n",
                  r.name.c_str(), r.category.c_str(), r.description.c_str(),
                  format_sci(r.summary.mean).c_str(), format_sci(r.summary.mcse).c_str(),
                  format_sci(r.summary.sd).c_str(), format_fixed(r.summary.ess, 3).c_str(),
                  format_fixed(r.summary.rhat, 7).c_str(), ratio.c_str(), gates.c_str());
    out += line;
  }
  out += rep.all_pass() ? "overall: pass\n" : "overall: FAIL\n";
  return out;
}

inline nlohmann::json to_json(const DiagnosticsReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    nlohmann::json j{{"parameter", r.name},
                     {"category", r.category},
                     {"description", r.description},
                     {"mean", r.summary.mean},
                     {"mcse", r.summary.mcse},
                     {"sd", r.summary.sd},
                     {"ess", r.summary.ess},
                     {"rhat", r.summary.rhat},
                     {"rhat_ok", r.rhat_ok},
                     {"ess_ok", r.ess_ok},
                     {"ess_ratio_ok", r.ratio_ok},
                     {"pass", r.pass()}};
    j["ess_ratio"] = r.ess_ratio ? nlohmann::json(*r.ess_ratio) : nlohmann::json(nullptr);
    rows.push_back(std::move(j));
  }
  nlohmann::json out{{"parameters", rows}, {"pass", rep.all_pass()}};
  out["total_draws"] = rep.total_draws ? nlohmann::json(*rep.total_draws) : nlohmann::json(nullptr);
  return out;
}

struct Misfit {
  PatternKey key;
  double observed_mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Predictive distribution of a key's sample mean over n observations:
// Normal(E[mu], Var[mu] + E[sigma^2] / n). With summaries only, Var[mu] is the
// sum of the effect variances.
inline GaussianDist predictive_mean_dist(const PosteriorModel& model, const PatternKey& key,
                                         double n) {
  double e_mu = 0.0, var_mu = 0.0, e_sigma2 = 0.0;
  if (model.has_draws()) {
    const ChainSet mu = mu_draws(model, key);
    e_mu = pooled_mean(mu);
    const double s = pooled_sd(mu);
    var_mu = s * s;
    const auto& sig = model.draws.at(std::string(kSigmaName));
    double acc = 0.0, cnt = 0.0;
    for (const auto& ch : sig)
      for (double x : ch) {
        acc += x * x;
        cnt += 1.0;
      }
    e_sigma2 = acc / cnt;
  } else {
    const auto idx = key_indices(model.levels, key);
    for (Category c : kCategories) {
      if (!model.levels.active(c)) continue;
      const auto& s =
          model.summary(effect_name(c, model.levels[c][idx[static_cast<std::size_t>(c)]]));
      e_mu += s.mean;
      var_mu += s.sd * s.sd;
    }
    const auto& s = model.summary(std::string(kSigmaName));
    e_sigma2 = s.mean * s.mean + s.sd * s.sd;
  }
  return GaussianDist{e_mu, std::sqrt(var_mu + e_sigma2 / n)};
}

// Keys whose observed mean falls outside the central `level` interval of
// predictive_mean_dist.
inline std::vector<Misfit> posterior_predictive_check(const PosteriorModel& model,
                                                      const Dataset& data, double level = 0.99) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("DomainError: level must lie in (0, 1)");
  std::vector<Misfit> out;
  const double tail = 0.5 * (1.0 - level);
  for (const auto& [key, values] : data.observations) {
    if (values.empty()) continue;
    double s = 0.0;
    for (double v : values) s += v;
    const double mean = s / static_cast<double>(values.size());
    const GaussianDist d = predictive_mean_dist(model, key, static_cast<double>(values.size()));
    const double lo = d.quantile(tail);
    const double hi = d.quantile(1.0 - tail);
    if (mean < lo || mean > hi) out.push_back(Misfit{key, mean, lo, hi});
  }
  return out;
}

}  // namespace jbe
