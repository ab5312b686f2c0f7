#pragma once

// Program-level energy predictions: per-statement Gaussians from a model,
// summed over a manifest of pattern keys with repeat counts.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jbe/catalog.hpp"
#include "jbe/errors.hpp"
#include "jbe/gaussian.hpp"
#include "jbe/inference.hpp"
#include "jbe/model.hpp"
#include "jbe/stats.hpp"

namespace jbe {

inline const std::vector<double> kDefaultQuantiles{0.5, 0.95, 0.99};

// Normal(posterior mean of mu, posterior mean of sigma).
inline GaussianDist statement_dist(const PosteriorModel& model, const PatternKey& key) {
  return GaussianDist{posterior_mean_mu(model, key), model.summary(std::string(kSigmaName)).mean};
}

// Sum of Gaussians. `cov`, when given, is an n x n matrix whose off-diagonal
// entries are the pairwise covariances; its diagonal is ignored.
inline GaussianDist convolve(const std::vector<GaussianDist>& dists,
                             const std::optional<std::vector<std::vector<double>>>& cov = {}) {
  const std::size_t n = dists.size();
  if (cov) {
    if (cov->size() != n)
      throw CovarianceDimensionMismatch("CovarianceDimensionMismatch: " +
                                        std::to_string(cov->size()) + " rows for " +
                                        std::to_string(n) + " distributions");
    for (const auto& row : *cov)
      if (row.size() != n)
        throw CovarianceDimensionMismatch("CovarianceDimensionMismatch: row of length " +
                                          std::to_string(row.size()) + ", expected " +
                                          std::to_string(n));
  }
  double mean = 0.0, var = 0.0;
  for (const auto& d : dists) {
    if (!(d.sd >= 0.0)) throw DomainError("DomainError: negative sd in convolution");
    mean += d.mean;
    var += d.sd * d.sd;
  }
  if (cov)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) var += 2.0 * (*cov)[i][j];
  if (var < 0.0) throw DomainError("DomainError: covariance makes the total variance negative");
  return GaussianDist{mean, std::sqrt(var)};
}

// Manifest lines: `<count> <operation>:<dtype>:<dsize>[@<device>]`. Blank
// lines and `#` comments are skipped; repeated keys accumulate. A missing
// device takes `default_device`.
inline ProgramManifest parse_manifest(std::istream& in,
                                      const std::optional<std::string>& default_device = {}) {
  ProgramManifest m;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string count_text, key_text, extra;
    if (!(ls >> count_text)) continue;
    auto fail = [&](const std::string& why) {
      return FormatError("FormatError: manifest line " + std::to_string(no) + ": " + why);
    };
    if (!(ls >> key_text)) throw fail("expected '<count> <operation>:<dtype>:<dsize>@<device>'");
    if (ls >> extra) throw fail("unexpected trailing text '" + extra + "'");
    long long count = 0;
    const auto [ptr, ec] =
        std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
    if (ec != std::errc{} || ptr != count_text.data() + count_text.size() || count < 1)
      throw fail("count '" + count_text + "' is not a positive integer");
    PatternKey key;
    try {
      if (key_text.find('@') == std::string::npos) {
        if (!default_device) throw fail("key '" + key_text + "' names no device");
        key = PatternKey{parse_descriptor(key_text), *default_device};
      } else {
        key = parse_key(key_text);
      }
    } catch (const UnknownPattern& e) {
      throw fail(e.what());
    }
    m.entries[key] += count;
  }
  return m;
}

inline ProgramManifest load_manifest(const std::string& path,
                                     const std::optional<std::string>& default_device = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path + "'");
  return parse_manifest(in, default_device);
}

enum class CovarianceMode { Independent, Empirical };

struct PredictionResult {
  GaussianDist dist;
  std::map<double, double> quantiles;  // probability -> joules
  struct Contribution {
    PatternKey key;
    long long count = 0;
    GaussianDist statement;
    double mean = 0.0;  // count * statement mean
  };
  std::vector<Contribution> contributions;
  CovarianceMode covariance = CovarianceMode::Independent;
};

// Every repeat of a key is an independent Normal(mu_k, sigma) statement. In
// empirical mode the statements' means additionally covary as their
// posterior mu draws do; summed over all statement pairs this adds
// Var(sum_k c_k mu_k) - sum_k c_k Var(mu_k). Empirical mode needs draws and
// falls back to independence without them.
inline PredictionResult predict_program(const PosteriorModel& model,
                                        const ProgramManifest& manifest,
                                        const std::vector<double>& quantiles = kDefaultQuantiles,
                                        CovarianceMode mode = CovarianceMode::Independent) {
  if (manifest.empty()) throw EmptyManifest("EmptyManifest: manifest has no statements");
  for (double p : quantiles)
    if (!(p > 0.0 && p < 1.0)) throw DomainError("DomainError: quantiles must lie in (0, 1)");
  PredictionResult r;
  r.covariance = mode == CovarianceMode::Empirical && model.has_draws()
                     ? CovarianceMode::Empirical
                     : CovarianceMode::Independent;
  double mean = 0.0, var = 0.0;
  std::optional<ChainSet> weighted;  // draws of sum_k c_k mu_k
  double var_sum = 0.0;              // sum_k c_k Var(mu_k)
  for (const auto& [key, count] : manifest.entries) {
    if (count < 1) throw DomainError("DomainError: manifest counts must be positive");
    PredictionResult::Contribution c;
    c.key = key;
    c.count = count;
    c.statement = statement_dist(model, key);
    c.mean = static_cast<double>(count) * c.statement.mean;
    mean += c.mean;
    var += static_cast<double>(count) * c.statement.variance();
    if (r.covariance == CovarianceMode::Empirical) {
      const ChainSet mu = mu_draws(model, key);
      const double s = pooled_sd(mu);
      var_sum += static_cast<double>(count) * s * s;
      if (!weighted) {
        weighted = mu;
        for (auto& ch : *weighted)
          for (auto& x : ch) x *= static_cast<double>(count);
      } else {
        for (std::size_t i = 0; i < mu.size(); ++i)
          for (std::size_t j = 0; j < mu[i].size(); ++j)
            (*weighted)[i][j] += static_cast<double>(count) * mu[i][j];
      }
    }
    r.contributions.push_back(std::move(c));
  }
  if (weighted) {
    const double s = pooled_sd(*weighted);
    var += s * s - var_sum;
    if (var < 0.0) var = 0.0;
  }
  r.dist = GaussianDist{mean, std::sqrt(var)};
  for (double p : quantiles) r.quantiles[p] = r.dist.sd > 0.0 ? r.dist.quantile(p) : r.dist.mean;
  return r;
}

inline nlohmann::json to_json(const PredictionResult& r) {
  nlohmann::json q = nlohmann::json::array();
  for (const auto& [p, v] : r.quantiles) q.push_back({{"p", p}, {"joules", v}});
  nlohmann::json contrib = nlohmann::json::array();
  for (const auto& c : r.contributions)
    contrib.push_back({{"key", render(c.key)},
                       {"count", c.count},
                       {"statement_mean", c.statement.mean},
                       {"statement_sd", c.statement.sd},
                       {"mean", c.mean}});
  return {{"mean", r.dist.mean},
          {"sd", r.dist.sd},
          {"covariance", r.covariance == CovarianceMode::Empirical ? "empirical" : "independent"},
          {"quantiles", q},
          {"contributions", contrib}};
}

}  // namespace jbe
