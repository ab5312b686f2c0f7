#pragma once

// Hierarchical four-factor energy model:
//
//   J ~ Normal(mu, sigma),  mu = alpha[size] + beta[op] + gamma[type] + delta[device]
//   effect_j = mean_c + sd_c * z_j,  z_j ~ Normal(0, 1)      (non-centered)
//   mean_c ~ Normal(0.006, 0.001),   sd_c, sigma ~ Exponential(1e3)
//
// sampled by adaptive random-walk Metropolis-within-Gibbs. Besides the
// per-block moves (one per level, hyper-mean, log-sd and log-sigma) every
// sweep makes three kinds of likelihood-preserving moves that walk along the
// directions the data cannot pin down: recentering (mean_c and z_c shift
// against each other), rescaling (sd_c and z_c scale against each other),
// contrasts (two categories' means shift in opposite directions) and swaps
// (two categories exchange which of them carries the offset between the
// summed hyper-means and the data).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jbe/catalog.hpp"
#include "jbe/errors.hpp"
#include "jbe/ingest.hpp"
#include "jbe/model.hpp"
#include "jbe/stats.hpp"

namespace jbe {

struct Priors {
  double hyper_mean_loc = 0.006;    // J
  double hyper_mean_scale = 0.001;  // J
  double rate_sigma = 1e3;
  double rate_category_sd = 1e3;
};

struct ModelSpec {
  LevelSets levels;
  Priors priors;

  static ModelSpec from_dataset(const Dataset& data) {
    std::vector<PatternKey> keys;
    for (const auto& [k, v] : data.observations) keys.push_back(k);
    return ModelSpec{levels_of(keys), {}};
  }

  void validate() const {
    if (!(priors.rate_sigma > 0.0) || !(priors.rate_category_sd > 0.0) ||
        !(priors.hyper_mean_scale > 0.0))
      throw DomainError("DomainError: prior rates and scales must be positive");
    for (Category c : kCategories)
      if (levels[c].empty())
        throw DomainError("DomainError: empty level set for " + std::string(category_display(c)));
  }
};

// Unconstrained, non-centered parameter vector. Inactive categories (a
// single-device model's device factor) have empty z and are ignored.
struct ParamVector {
  std::array<std::vector<double>, kCategoryCount> z;
  std::array<double, kCategoryCount> hyper_mean{};
  std::array<double, kCategoryCount> log_sd{};
  double log_sigma = 0.0;
};

// Level effects on the joule scale.
struct Effects {
  std::array<std::vector<double>, kCategoryCount> effect;
  double sigma = 0.0;
};

inline Effects to_effects(const ParamVector& theta, const ModelSpec& spec) {
  Effects e;
  for (Category c : kCategories) {
    const auto ci = static_cast<std::size_t>(c);
    if (!spec.levels.active(c)) {
      e.effect[ci].assign(spec.levels[c].size(), 0.0);
      continue;
    }
    const double sd = std::exp(theta.log_sd[ci]);
    e.effect[ci].resize(theta.z[ci].size());
    for (std::size_t j = 0; j < theta.z[ci].size(); ++j)
      e.effect[ci][j] = theta.hyper_mean[ci] + sd * theta.z[ci][j];
  }
  e.sigma = std::exp(theta.log_sigma);
  return e;
}

// Per-key sufficient statistics. Observations are sorted before summation so
// the statistics do not depend on row order.
struct PreparedData {
  struct Key {
    PatternKey key;
    std::array<std::size_t, kCategoryCount> idx{};
    double n = 0.0;
    double mean = 0.0;
    double ss = 0.0;  // sum of squared deviations from mean
  };
  std::vector<Key> keys;
  double total = 0.0;

  static PreparedData build(const Dataset& data, const LevelSets& levels) {
    PreparedData p;
    for (const auto& [key, values] : data.observations) {
      if (values.empty()) continue;
      Key k;
      k.key = key;
      try {
        k.idx = key_indices(levels, key);
      } catch (const UnknownLevel& e) {
        throw DataError(std::string("DataError: ") + e.what());
      }
      std::vector<double> v = values;
      std::sort(v.begin(), v.end());
      double s = 0.0;
      for (double x : v) {
        if (!std::isfinite(x)) throw DataError("DataError: non-finite energy for " + render(key));
        s += x;
      }
      k.n = static_cast<double>(v.size());
      k.mean = s / k.n;
      for (double x : v) k.ss += (x - k.mean) * (x - k.mean);
      p.total += k.n;
      p.keys.push_back(std::move(k));
    }
    return p;
  }
};

namespace detail {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double log_normal(double x, double mu, double sd) {
  const double r = (x - mu) / sd;
  return -0.5 * r * r - std::log(sd) - kLogSqrt2Pi;
}

inline double log_exponential(double x, double rate) { return std::log(rate) - rate * x; }

inline double key_mu(const PreparedData::Key& k, const Effects& e) {
  double mu = 0.0;
  for (std::size_t c = 0; c < kCategoryCount; ++c) mu += e.effect[c][k.idx[c]];
  return mu;
}

}  // namespace detail

// sum_i log Normal(J_i | mu_key, sigma) on centered effects.
inline double log_likelihood(const Effects& e, const PreparedData& data) {
  const double inv2var = 0.5 / (e.sigma * e.sigma);
  double ll = -data.total * (std::log(e.sigma) + detail::kLogSqrt2Pi);
  for (const auto& k : data.keys) {
    const double d = k.mean - detail::key_mu(k, e);
    ll -= (k.ss + k.n * d * d) * inv2var;
  }
  return ll;
}

// Log prior of the non-centered vector, including the log-Jacobian of the
// log-transformed scales.
inline double log_prior(const ParamVector& theta, const ModelSpec& spec) {
  const auto& pr = spec.priors;
  double lp = 0.0;
  for (Category c : kCategories) {
    if (!spec.levels.active(c)) continue;
    const auto ci = static_cast<std::size_t>(c);
    for (double z : theta.z[ci]) lp += -0.5 * z * z - detail::kLogSqrt2Pi;
    lp += detail::log_normal(theta.hyper_mean[ci], pr.hyper_mean_loc, pr.hyper_mean_scale);
    lp += detail::log_exponential(std::exp(theta.log_sd[ci]), pr.rate_category_sd) +
          theta.log_sd[ci];
  }
  lp += detail::log_exponential(std::exp(theta.log_sigma), pr.rate_sigma) + theta.log_sigma;
  return lp;
}

inline double log_posterior(const ParamVector& theta, const ModelSpec& spec,
                            const PreparedData& data) {
  return log_likelihood(to_effects(theta, spec), data) + log_prior(theta, spec);
}

inline double log_posterior(const ParamVector& theta, const ModelSpec& spec,
                            const Dataset& data) {
  return log_posterior(theta, spec, PreparedData::build(data, spec.levels));
}

struct FitOptions {
  int chains = 4;
  int warmup = 1000;
  int draws = 1000;
  std::uint64_t seed = 0;
  // Gibbs sweeps between stored draws (thinning). Warmup counts iterations,
  // not sweeps, too.
  int sweeps_per_draw = 10;
  double target_accept = 0.3;
  bool parallel = true;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string dataset_digest(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ULL;
  char buf[32];
  for (const auto& [key, values] : data.observations) {
    h = fnv1a(render(key), h);
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    for (double x : v) {
      std::snprintf(buf, sizeof buf, "%a;", x);
      h = fnv1a(buf, h);
    }
  }
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// One-dimensional adaptive proposal scale. Robbins-Monro on log step toward
// the target acceptance during warmup, frozen afterwards.
struct StepSize {
  double log_step = 0.0;
  std::uint64_t attempts = 0;
  std::uint64_t accepted = 0;
  std::uint64_t post_attempts = 0;
  std::uint64_t post_accepted = 0;

  double step() const { return std::exp(log_step); }

  void record(bool accept, bool adapting, double target) {
    if (adapting) {
      ++attempts;
      accepted += accept;
      const double eta = std::min(1.0, 3.0 / std::sqrt(static_cast<double>(attempts)));
      log_step += eta * ((accept ? 1.0 : 0.0) - target);
    } else {
      ++post_attempts;
      post_accepted += accept;
    }
  }
};

class ChainSampler {
 public:
  ChainSampler(const ModelSpec& spec, const PreparedData& data, const FitOptions& opt,
               std::uint64_t seed)
      : spec_(&spec), data_(&data), opt_(opt), rng_(seed) {
    for (Category c : kCategories) active_[idx(c)] = spec.levels.active(c);
    // Keys touched by each level.
    for (Category c : kCategories) by_level_[idx(c)].resize(spec.levels[c].size());
    for (std::size_t k = 0; k < data.keys.size(); ++k)
      for (std::size_t c = 0; c < kCategoryCount; ++c) by_level_[c][data.keys[k].idx[c]].push_back(k);
    init();
  }

  // Runs warmup + draws; returns draws[iteration] as centered vectors in the
  // order of `names`.
  std::vector<std::vector<double>> run(const std::vector<std::string>& names) {
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(opt_.draws));
    for (int it = 0; it < opt_.warmup + opt_.draws; ++it) {
      const bool adapting = it < opt_.warmup;
      for (int s = 0; s < opt_.sweeps_per_draw; ++s) sweep(adapting);
      if (!adapting) out.push_back(snapshot(names));
    }
    return out;
  }

  double acceptance(const char* family) const {
    std::uint64_t a = 0, n = 0;
    auto add = [&](const StepSize& s) {
      a += s.post_accepted;
      n += s.post_attempts;
    };
    const std::string f(family);
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      if (f == "effect")
        for (const auto& s : effect_steps_[c]) add(s);
      if (f == "hyper_mean") add(hyper_steps_[c]);
      if (f == "log_sd") add(logsd_steps_[c]);
      if (f == "recenter") add(recenter_steps_[c]);
      if (f == "rescale") add(rescale_steps_[c]);
    }
    if (f == "log_sigma") add(sigma_step_);
    if (f == "swap") add(swap_stats_);
    if (f == "contrast")
      for (const auto& s : contrast_steps_) add(s);
    return n == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(n);
  }

  std::uint64_t nonfinite() const noexcept { return nonfinite_; }

 private:
  static std::size_t idx(Category c) { return static_cast<std::size_t>(c); }

  void init() {
    std::normal_distribution<double> jitter(0.0, 0.1);
    const double start_log_sd = std::log(1e-3);
    for (Category c : kCategories) {
      const auto ci = idx(c);
      if (!active_[ci]) continue;
      theta_.z[ci].resize(spec_->levels[c].size());
      for (auto& z : theta_.z[ci]) z = jitter(rng_);
      theta_.hyper_mean[ci] = spec_->priors.hyper_mean_loc;
      theta_.log_sd[ci] = start_log_sd;
    }
    theta_.log_sigma = start_log_sd;
    // Starting proposal scales from the raw data spread; adaptation takes
    // them the rest of the way.
    double spread = 0.0;
    {
      double s = 0.0, ss = 0.0, n = 0.0;
      for (const auto& k : data_->keys) {
        s += k.n * k.mean;
        n += k.n;
      }
      const double m = n > 0 ? s / n : 0.0;
      for (const auto& k : data_->keys) ss += k.ss + k.n * (k.mean - m) * (k.mean - m);
      spread = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    }
    if (!(spread > 0.0)) spread = spec_->priors.hyper_mean_scale;
    for (Category c : kCategories) {
      const auto ci = idx(c);
      effect_steps_[ci].assign(spec_->levels[c].size(), StepSize{});
      for (std::size_t j = 0; j < spec_->levels[c].size(); ++j) {
        double n = 0.0;
        for (std::size_t k : by_level_[ci][j]) n += data_->keys[k].n;
        effect_steps_[ci][j].log_step = std::log(spread / std::sqrt(std::max(n, 1.0)));
      }
      hyper_steps_[ci].log_step = std::log(spread / std::sqrt(std::max(data_->total, 1.0)));
      logsd_steps_[ci].log_step = std::log(0.1);
      recenter_steps_[ci].log_step = std::log(1e-4);
      rescale_steps_[ci].log_step = std::log(0.5);
    }
    sigma_step_.log_step = std::log(0.1);
    for (auto& s : contrast_steps_) s.log_step = std::log(spec_->priors.hyper_mean_scale);
    refresh();
  }

  // Recomputes the cached effects, per-key means and densities from theta.
  void refresh() {
    effects_ = to_effects(theta_, *spec_);
    key_mu_.resize(data_->keys.size());
    for (std::size_t k = 0; k < data_->keys.size(); ++k)
      key_mu_[k] = key_mu(data_->keys[k], effects_);
    loglik_ = log_likelihood(effects_, *data_);
    logprior_ = log_prior(theta_, *spec_);
  }

  bool metropolis(double log_ratio) {
    if (!std::isfinite(log_ratio)) {
      ++nonfinite_;
      return false;
    }
    if (log_ratio >= 0.0) return true;
    return std::log(unif_(rng_)) < log_ratio;
  }

  // Full-state proposal: `mutate` edits theta and returns the log-Jacobian;
  // the move is then accepted or theta restored.
  template <typename Mutate>
  bool propose(Mutate&& mutate) {
    const ParamVector saved = theta_;
    const double before = loglik_ + logprior_;
    const double log_jacobian = mutate();
    const Effects e = to_effects(theta_, *spec_);
    const double ll = log_likelihood(e, *data_);
    const double lp = log_prior(theta_, *spec_);
    const bool accept = metropolis(ll + lp + log_jacobian - before);
    if (accept) {
      effects_ = e;
      for (std::size_t k = 0; k < data_->keys.size(); ++k)
        key_mu_[k] = key_mu(data_->keys[k], effects_);
      loglik_ = ll;
      logprior_ = lp;
    } else {
      theta_ = saved;
    }
    return accept;
  }

  template <typename Mutate>
  void full_move(StepSize& step, bool adapting, Mutate&& mutate) {
    const double u = step.step() * normal_(rng_);
    const bool accept = propose([&] { return mutate(u); });
    step.record(accept, adapting, opt_.target_accept);
  }

  // Exchanges the (log sd, mean z) pairs of categories a and b and rescales
  // each residual z - mean(z) by the ratio of old to new sd. Category level
  // offsets sd * mean(z) trade places, so every key's mean is unchanged. The
  // map is an involution with Jacobian (sd_a / sd_b)^(n_a - n_b).
  void swap_move(std::size_t a, std::size_t b, bool adapting) {
    const bool accept = propose([&] {
      auto& za = theta_.z[a];
      auto& zb = theta_.z[b];
      const double na = static_cast<double>(za.size());
      const double nb = static_cast<double>(zb.size());
      const double ma = std::accumulate(za.begin(), za.end(), 0.0) / na;
      const double mb = std::accumulate(zb.begin(), zb.end(), 0.0) / nb;
      const double ratio = std::exp(theta_.log_sd[a] - theta_.log_sd[b]);  // sd_a / sd_b
      for (auto& z : za) z = mb + (z - ma) * ratio;
      for (auto& z : zb) z = ma + (z - mb) / ratio;
      const double log_ratio = theta_.log_sd[a] - theta_.log_sd[b];
      std::swap(theta_.log_sd[a], theta_.log_sd[b]);
      return (na - nb) * log_ratio;
    });
    if (!adapting) swap_stats_.record(accept, false, opt_.target_accept);
  }

  // Single-level update in joule units; only the keys of that level change.
  void effect_move(std::size_t c, std::size_t j, bool adapting) {
    StepSize& step = effect_steps_[c][j];
    const double sd = std::exp(theta_.log_sd[c]);
    const double delta = step.step() * normal_(rng_);
    const double z_old = theta_.z[c][j];
    const double z_new = z_old + delta / sd;
    const double shift = theta_.hyper_mean[c] + sd * z_new - effects_.effect[c][j];
    const double inv2var = 0.5 / (effects_.sigma * effects_.sigma);
    double dll = 0.0;
    for (std::size_t k : by_level_[c][j]) {
      const auto& key = data_->keys[k];
      const double d_old = key.mean - key_mu_[k];
      const double d_new = d_old - shift;
      dll -= key.n * (d_new * d_new - d_old * d_old) * inv2var;
    }
    const double dlp = -0.5 * (z_new * z_new - z_old * z_old);
    const bool accept = metropolis(dll + dlp);
    if (accept) {
      theta_.z[c][j] = z_new;
      effects_.effect[c][j] += shift;
      for (std::size_t k : by_level_[c][j]) key_mu_[k] += shift;
      loglik_ += dll;
      logprior_ += dlp;
    }
    step.record(accept, adapting, opt_.target_accept);
  }

  void sweep(bool adapting) {
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      if (!active_[c]) continue;
      for (std::size_t j = 0; j < theta_.z[c].size(); ++j) effect_move(c, j, adapting);
    }
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      if (!active_[c]) continue;
      const double n = static_cast<double>(theta_.z[c].size());
      full_move(hyper_steps_[c], adapting, [&](double u) {
        theta_.hyper_mean[c] += u;
        return 0.0;
      });
      full_move(logsd_steps_[c], adapting, [&](double u) {
        theta_.log_sd[c] += u;
        return 0.0;
      });
      // mean_c + u, z_c - u / sd_c: effects unchanged.
      full_move(recenter_steps_[c], adapting, [&](double u) {
        const double sd = std::exp(theta_.log_sd[c]);
        theta_.hyper_mean[c] += u;
        for (auto& z : theta_.z[c]) z -= u / sd;
        return 0.0;
      });
      // sd_c * e^u, z_c * e^-u: effects unchanged; Jacobian e^(-n u).
      full_move(rescale_steps_[c], adapting, [&](double u) {
        theta_.log_sd[c] += u;
        const double f = std::exp(-u);
        for (auto& z : theta_.z[c]) z *= f;
        return -n * u;
      });
    }
    full_move(sigma_step_, adapting, [&](double u) {
      theta_.log_sigma += u;
      return 0.0;
    });
    std::size_t p = 0;
    for (std::size_t a = 0; a < kCategoryCount; ++a) {
      for (std::size_t b = a + 1; b < kCategoryCount; ++b, ++p) {
        if (!active_[a] || !active_[b]) continue;
        full_move(contrast_steps_[p], adapting, [&](double u) {
          theta_.hyper_mean[a] += u;
          theta_.hyper_mean[b] -= u;
          return 0.0;
        });
      }
    }
    // Attempted with probability 1/2: an always-accepted involution would
    // only alternate between mirrored states.
    for (std::size_t a = 0; a < kCategoryCount; ++a)
      for (std::size_t b = a + 1; b < kCategoryCount; ++b)
        if (active_[a] && active_[b] && coin_(rng_)) swap_move(a, b, adapting);
    refresh();
  }

  std::vector<double> snapshot(const std::vector<std::string>& names) const {
    std::vector<double> v;
    v.reserve(names.size());
    v.push_back(effects_.sigma);
    for (Category c : kCategories) {
      if (!active_[idx(c)]) continue;
      for (double e : effects_.effect[idx(c)]) v.push_back(e);
    }
    for (Category c : kCategories) {
      if (!active_[idx(c)]) continue;
      v.push_back(theta_.hyper_mean[idx(c)]);
      v.push_back(std::exp(theta_.log_sd[idx(c)]));
    }
    return v;
  }

  const ModelSpec* spec_;
  const PreparedData* data_;
  FitOptions opt_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::bernoulli_distribution coin_{0.5};

  std::array<bool, kCategoryCount> active_{};
  std::array<std::vector<std::vector<std::size_t>>, kCategoryCount> by_level_;
  ParamVector theta_;
  Effects effects_;
  std::vector<double> key_mu_;
  double loglik_ = 0.0;
  double logprior_ = 0.0;

  std::array<std::vector<StepSize>, kCategoryCount> effect_steps_;
  std::array<StepSize, kCategoryCount> hyper_steps_{};
  std::array<StepSize, kCategoryCount> logsd_steps_{};
  std::array<StepSize, kCategoryCount> recenter_steps_{};
  std::array<StepSize, kCategoryCount> rescale_steps_{};
  std::array<StepSize, 6> contrast_steps_{};
  StepSize sigma_step_{};
  StepSize swap_stats_{};  // counters only; the swap has no scale
  std::uint64_t nonfinite_ = 0;
};

}  // namespace detail

inline constexpr double kRhatGate = 1.01;
inline constexpr double kEssGate = 400.0;
inline constexpr double kEssRatioGate = 1e-4;

// Fits the model. Convergence problems are reported as "NonConvergence"
// entries in meta["warnings"], not thrown.
inline PosteriorModel fit(const Dataset& data, const ModelSpec& spec, const FitOptions& opt) {
  spec.validate();
  if (opt.chains < 2)
    throw DomainError("DomainError: split R-hat needs at least 2 chains");
  if (opt.warmup < 1 || opt.draws < 4 || opt.sweeps_per_draw < 1)
    throw DomainError("DomainError: warmup >= 1, draws >= 4 and sweeps >= 1 required");
  const PreparedData prepared = PreparedData::build(data, spec.levels);
  if (prepared.keys.empty()) throw DataError("DataError: empty dataset");

  const std::vector<std::string> names = parameter_names(spec.levels, true);
  const auto n_chains = static_cast<std::size_t>(opt.chains);

  struct ChainResult {
    std::vector<std::vector<double>> draws;
    std::map<std::string, double> acceptance;
    std::uint64_t nonfinite = 0;
  };
  auto run_chain = [&](std::size_t chain) {
    detail::ChainSampler sampler(spec, prepared, opt, opt.seed + chain);
    ChainResult r;
    r.draws = sampler.run(names);
    for (const char* f :
         {"effect", "hyper_mean", "log_sd", "log_sigma", "recenter", "rescale", "contrast",
          "swap"})
      r.acceptance[f] = sampler.acceptance(f);
    r.nonfinite = sampler.nonfinite();
    return r;
  };

  std::vector<ChainResult> results(n_chains);
  if (opt.parallel && n_chains > 1) {
    std::vector<std::future<ChainResult>> futures;
    for (std::size_t c = 0; c < n_chains; ++c)
      futures.push_back(std::async(std::launch::async, run_chain, c));
    for (std::size_t c = 0; c < n_chains; ++c) results[c] = futures[c].get();
  } else {
    for (std::size_t c = 0; c < n_chains; ++c) results[c] = run_chain(c);
  }

  PosteriorModel model;
  model.levels = spec.levels;
  model.parameters = names;
  for (std::size_t p = 0; p < names.size(); ++p) {
    ChainSet chains(n_chains);
    for (std::size_t c = 0; c < n_chains; ++c) {
      chains[c].reserve(results[c].draws.size());
      for (const auto& d : results[c].draws) chains[c].push_back(d[p]);
    }
    model.summaries[names[p]] = summarize(chains);
    model.draws[names[p]] = std::move(chains);
  }

  nlohmann::json meta;
  meta["seed"] = opt.seed;
  meta["chains"] = opt.chains;
  meta["warmup"] = opt.warmup;
  meta["draws"] = opt.draws;
  meta["sweeps_per_draw"] = opt.sweeps_per_draw;
  meta["total_draws"] = opt.chains * opt.draws;
  meta["observations"] = prepared.total;
  meta["dataset_digest"] = detail::dataset_digest(data);
  meta["priors"] = {{"hyper_mean_loc", spec.priors.hyper_mean_loc},
                    {"hyper_mean_scale", spec.priors.hyper_mean_scale},
                    {"rate_sigma", spec.priors.rate_sigma},
                    {"rate_category_sd", spec.priors.rate_category_sd}};
  nlohmann::json acc = nlohmann::json::array();
  std::uint64_t nonfinite = 0;
  for (const auto& r : results) {
    acc.push_back(r.acceptance);
    nonfinite += r.nonfinite;
  }
  meta["acceptance"] = acc;
  meta["nonfinite_rejections"] = nonfinite;

  nlohmann::json warnings = nlohmann::json::array();
  const double total = static_cast<double>(opt.chains) * opt.draws;
  for (const auto& name : names) {
    const auto& s = model.summaries[name];
    if (!(s.rhat < kRhatGate) || !(s.ess > kEssGate) || !(s.ess / total > kEssRatioGate)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "NonConvergence: %s (R-hat %.4f, ESS %.1f)", name.c_str(),
                    s.rhat, s.ess);
      warnings.push_back(buf);
    }
  }
  meta["warnings"] = warnings;
  model.meta = meta;
  return model;
}

inline bool has_nonconvergence(const PosteriorModel& m) {
  return m.meta.contains("warnings") && m.meta["warnings"].is_array() &&
         !m.meta["warnings"].empty();
}

// Energies drawn from the prior: hyperparameters, then the four level
// effects of a uniformly chosen legal key, then sigma, then J.
inline std::vector<double> prior_predictive(const ModelSpec& spec, std::size_t n,
                                            std::uint64_t seed) {
  spec.validate();
  std::vector<double> out;
  if (n == 0) return out;
  const auto keys = legal_keys(spec.levels);
  if (keys.empty()) throw DomainError("DomainError: no legal keys over the spec's levels");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> sd_prior(spec.priors.rate_category_sd);
  std::exponential_distribution<double> sigma_prior(spec.priors.rate_sigma);
  std::uniform_int_distribution<std::size_t> pick(0, keys.size() - 1);
  const auto& pr = spec.priors;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (Category c : kCategories) {
      if (!spec.levels.active(c)) continue;
      const double mean = pr.hyper_mean_loc + pr.hyper_mean_scale * normal(rng);
      const double sd = sd_prior(rng);
      mu += mean + sd * normal(rng);
    }
    (void)pick(rng);  // key choice; effects are exchangeable across levels
    const double sigma = sigma_prior(rng);
    out.push_back(mu + sigma * normal(rng));
  }
  return out;
}

// Analytic prior predictive moments: mean = k * loc, var = k * (scale^2 +
// 2 / rate_c^2) + 2 / rate_sigma^2 over the k active categories.
inline std::pair<double, double> prior_predictive_moments(const ModelSpec& spec) {
  const auto& pr = spec.priors;
  double k = 0.0;
  for (Category c : kCategories) k += spec.levels.active(c) ? 1.0 : 0.0;
  const double var = k * (pr.hyper_mean_scale * pr.hyper_mean_scale +
                          2.0 / (pr.rate_category_sd * pr.rate_category_sd)) +
                     2.0 / (pr.rate_sigma * pr.rate_sigma);
  return {k * pr.hyper_mean_loc, std::sqrt(var)};
}

// Draws of mu for one key, one chain set per model (requires draws).
inline ChainSet mu_draws(const PosteriorModel& model, const PatternKey& key) {
  const auto idx = key_indices(model.levels, key);
  ChainSet out;
  bool first = true;
  for (Category c : kCategories) {
    if (!model.levels.active(c)) continue;
    const auto name = effect_name(c, model.levels[c][idx[static_cast<std::size_t>(c)]]);
    const auto it = model.draws.find(name);
    if (it == model.draws.end()) throw UnknownLevel("UnknownLevel: no draws for " + name);
    if (first) {
      out = it->second;
      first = false;
      continue;
    }
    for (std::size_t ch = 0; ch < out.size(); ++ch)
      for (std::size_t i = 0; i < out[ch].size(); ++i) out[ch][i] += it->second[ch][i];
  }
  return out;
}

// Posterior mean of alpha + beta + gamma + delta for the key.
inline double posterior_mean_mu(const PosteriorModel& model, const PatternKey& key) {
  if (model.has_draws()) return pooled_mean(mu_draws(model, key));
  const auto idx = key_indices(model.levels, key);
  double mu = 0.0;
  for (Category c : kCategories) {
    if (!model.levels.active(c)) continue;
    mu += model.summary(effect_name(c, model.levels[c][idx[static_cast<std::size_t>(c)]])).mean;
  }
  return mu;
}

}  // namespace jbe
