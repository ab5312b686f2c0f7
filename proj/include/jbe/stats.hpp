#pragma once

// Convergence statistics over multi-chain draws of one scalar parameter:
// split R-hat, effective sample size and Monte Carlo standard error.
//
// Chains are split in half before either statistic is computed, so a single
// long chain behaves like two chains of half the length. No rank
// normalization is applied.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "jbe/errors.hpp"

namespace jbe {

using Chain = std::vector<double>;
using ChainSet = std::vector<Chain>;

struct ParamSummary {
  double mean = 0.0;
  double sd = 0.0;
  double mcse = 0.0;
  double ess = 0.0;
  double rhat = 0.0;
};

namespace detail {

inline void check_chains(const ChainSet& chains, std::size_t min_chains) {
  if (chains.size() < min_chains)
    throw DomainError("DomainError: need at least " + std::to_string(min_chains) + " chains");
  for (const auto& c : chains) {
    if (c.size() < 4) throw DomainError("DomainError: need at least 4 draws per chain");
    if (c.size() != chains.front().size())
      throw DomainError("DomainError: chains must have equal length");
    for (double x : c)
      if (!std::isfinite(x)) throw DomainError("DomainError: non-finite draw");
  }
}

// Halves every chain; the middle draw of an odd-length chain is dropped.
inline ChainSet split_halves(const ChainSet& chains) {
  ChainSet out;
  out.reserve(chains.size() * 2);
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

inline double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Unbiased sample variance.
inline double var_of(std::span<const double> x, double m) {
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

struct ChainMoments {
  std::vector<double> means;
  std::vector<double> vars;
  double within = 0.0;    // W
  double var_plus = 0.0;  // pooled posterior variance estimate
  std::size_t n = 0;
};

inline ChainMoments moments(const ChainSet& split) {
  ChainMoments m;
  m.n = split.front().size();
  for (const auto& c : split) {
    const double mu = mean_of(c);
    m.means.push_back(mu);
    m.vars.push_back(var_of(c, mu));
  }
  const double n = static_cast<double>(m.n);
  m.within = mean_of(m.vars);
  const double between_over_n = split.size() > 1 ? var_of(m.means, mean_of(m.means)) : 0.0;
  m.var_plus = m.within * (n - 1.0) / n + between_over_n;
  if (!(m.var_plus > 0.0)) throw DegenerateChains("DegenerateChains: zero total variance");
  return m;
}

}  // namespace detail

// Potential scale reduction on split chains: sqrt(var_plus / W).
inline double split_rhat(const ChainSet& chains) {
  detail::check_chains(chains, 2);
  const auto m = detail::moments(detail::split_halves(chains));
  if (m.within <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(m.var_plus / m.within);
}

// Effective sample size from Geyer's initial monotone sequence of the
// multi-chain autocorrelation estimate. Capped at 1.5 x total draws.
inline double ess(const ChainSet& chains) {
  detail::check_chains(chains, 1);
  const ChainSet split = detail::split_halves(chains);
  const auto mom = detail::moments(split);
  const std::size_t n = mom.n;
  const double m = static_cast<double>(split.size());

  auto mean_acov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t j = 0; j < split.size(); ++j) {
      const auto& c = split[j];
      const double mu = mom.means[j];
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += (c[i] - mu) * (c[i + lag] - mu);
      total += s / static_cast<double>(n);
    }
    return total / m;
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (mom.within - mean_acov(lag)) / mom.var_plus; };

  std::vector<double> r(n, 0.0);
  r[0] = 1.0;
  double even = 1.0;
  double odd = rho(1);
  r[1] = odd;
  std::size_t s = 1;
  while (s + 4 < n && even + odd > 0.0) {
    even = rho(s + 1);
    odd = rho(s + 2);
    if (even + odd >= 0.0) {
      r[s + 1] = even;
      r[s + 2] = odd;
    }
    s += 2;
  }
  const std::size_t max_s = s;
  if (even > 0.0 && max_s + 1 < n) r[max_s + 1] = even;
  for (std::size_t k = 1; k + 3 <= max_s; k += 2) {
    if (r[k + 1] + r[k + 2] > r[k - 1] + r[k]) {
      r[k + 1] = (r[k - 1] + r[k]) / 2.0;
      r[k + 2] = r[k + 1];
    }
  }
  const double total = m * static_cast<double>(n);
  double tau = -1.0 + r[max_s + 1 < n ? max_s + 1 : n - 1];
  for (std::size_t k = 0; k < max_s; ++k) tau += 2.0 * r[k];
  const double cap = 1.5 * total;
  if (!(tau > 0.0)) return cap;
  return std::min(total / tau, cap);
}

inline double pooled_mean(const ChainSet& chains) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& c : chains) {
    s += std::accumulate(c.begin(), c.end(), 0.0);
    n += c.size();
  }
  return s / static_cast<double>(n);
}

inline double pooled_sd(const ChainSet& chains) {
  const double mu = pooled_mean(chains);
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& c : chains) {
    for (double x : c) ss += (x - mu) * (x - mu);
    n += c.size();
  }
  return std::sqrt(ss / static_cast<double>(n - 1));
}

// sd / sqrt(ESS).
inline double mcse(const ChainSet& chains) { return pooled_sd(chains) / std::sqrt(ess(chains)); }

inline ParamSummary summarize(const ChainSet& chains) {
  ParamSummary s;
  s.mean = pooled_mean(chains);
  s.sd = pooled_sd(chains);
  s.ess = ess(chains);
  s.mcse = s.sd / std::sqrt(s.ess);
  s.rhat = split_rhat(chains);
  return s;
}

}  // namespace jbe
