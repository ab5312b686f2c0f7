#pragma once

// Category structure of the four-factor energy model and the fitted
// posterior container, with its JSON representation.
//
// Parameter naming: "sigma" for the observation sd, "<greek>[<level>]" for
// level effects (alpha = data size, beta = operation, gamma = data type,
// delta = device), "<greek>_mean" / "<greek>_sd" for category hyperparameters.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jbe/catalog.hpp"
#include "jbe/errors.hpp"
#include "jbe/stats.hpp"

namespace jbe {

enum class Category : std::uint8_t { DataSize = 0, Operation = 1, DataType = 2, Device = 3 };
inline constexpr std::size_t kCategoryCount = 4;
inline constexpr std::array<Category, kCategoryCount> kCategories{
    Category::DataSize, Category::Operation, Category::DataType, Category::Device};

inline std::string_view greek(Category c) {
  constexpr std::array<std::string_view, kCategoryCount> names{"alpha", "beta", "gamma", "delta"};
  return names[static_cast<std::size_t>(c)];
}

inline std::string_view category_display(Category c) {
  constexpr std::array<std::string_view, kCategoryCount> names{"Data size", "Operation",
                                                               "Data type", "Device"};
  return names[static_cast<std::size_t>(c)];
}

inline std::string effect_name(Category c, std::string_view level) {
  return std::string(greek(c)) + "[" + std::string(level) + "]";
}
inline std::string hyper_mean_name(Category c) { return std::string(greek(c)) + "_mean"; }
inline std::string hyper_sd_name(Category c) { return std::string(greek(c)) + "_sd"; }
inline constexpr std::string_view kSigmaName = "sigma";

// Level identifier of a key within a category.
inline std::string level_of(const PatternKey& k, Category c) {
  switch (c) {
    case Category::DataSize: return std::string(to_id(k.triple.dsize));
    case Category::Operation: return std::string(to_id(k.triple.operation));
    case Category::DataType: return std::string(to_id(k.triple.dtype));
    case Category::Device: return k.device;
  }
  return {};
}

// "device2" -> "Device 2"; other ids through the catalog display names.
inline std::string level_display(Category c, const std::string& id) {
  switch (c) {
    case Category::DataSize:
      if (auto s = parse_data_size(id)) return std::string(display_name(*s));
      break;
    case Category::Operation:
      if (auto o = parse_operation(id)) return std::string(display_name(*o));
      break;
    case Category::DataType:
      if (auto t = parse_data_type(id)) return std::string(display_name(*t));
      break;
    case Category::Device:
      if (id.rfind("device", 0) == 0 && id.size() > 6) return "Device " + id.substr(6);
      break;
  }
  return id;
}

struct LevelSets {
  std::array<std::vector<std::string>, kCategoryCount> levels;

  const std::vector<std::string>& operator[](Category c) const {
    return levels[static_cast<std::size_t>(c)];
  }
  std::vector<std::string>& operator[](Category c) { return levels[static_cast<std::size_t>(c)]; }

  std::optional<std::size_t> index(Category c, std::string_view id) const {
    const auto& v = (*this)[c];
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] == id) return i;
    return std::nullopt;
  }

  // Single-device models carry no device effect.
  bool device_active() const { return (*this)[Category::Device].size() > 1; }

  bool active(Category c) const { return c != Category::Device || device_active(); }

  friend bool operator==(const LevelSets&, const LevelSets&) = default;
};

// Levels used by a set of keys: catalog order for the pattern categories,
// lexicographic order for devices.
template <typename KeyRange>
LevelSets levels_of(const KeyRange& keys) {
  LevelSets out;
  std::array<bool, kDataSizeCount> sizes{};
  std::array<bool, kOperationCount> ops{};
  std::array<bool, kDataTypeCount> types{};
  std::vector<std::string> devices;
  for (const PatternKey& k : keys) {
    sizes[static_cast<std::size_t>(k.triple.dsize)] = true;
    ops[static_cast<std::size_t>(k.triple.operation)] = true;
    types[static_cast<std::size_t>(k.triple.dtype)] = true;
    devices.push_back(k.device);
  }
  for (std::size_t i = 0; i < kDataSizeCount; ++i)
    if (sizes[i]) out[Category::DataSize].emplace_back(to_id(static_cast<DataSize>(i)));
  for (std::size_t i = 0; i < kOperationCount; ++i)
    if (ops[i]) out[Category::Operation].emplace_back(to_id(static_cast<Operation>(i)));
  for (std::size_t i = 0; i < kDataTypeCount; ++i)
    if (types[i]) out[Category::DataType].emplace_back(to_id(static_cast<DataType>(i)));
  std::sort(devices.begin(), devices.end());
  devices.erase(std::unique(devices.begin(), devices.end()), devices.end());
  out[Category::Device] = std::move(devices);
  return out;
}

// Every catalog level, with the given devices.
inline LevelSets full_levels(std::vector<std::string> devices) {
  std::vector<PatternKey> keys;
  for (const auto& t : list_catalog())
    for (const auto& d : devices) keys.push_back(PatternKey{t, d});
  return levels_of(keys);
}

// Per-category level indices of a key. Throws UnknownLevel naming the missing
// level.
inline std::array<std::size_t, kCategoryCount> key_indices(const LevelSets& levels,
                                                           const PatternKey& key) {
  std::array<std::size_t, kCategoryCount> idx{};
  for (Category c : kCategories) {
    const std::string id = level_of(key, c);
    const auto i = levels.index(c, id);
    if (!i)
      throw UnknownLevel("UnknownLevel: " + std::string(category_display(c)) + " level '" + id +
                         "' (key " + render(key) + ")");
    idx[static_cast<std::size_t>(c)] = *i;
  }
  return idx;
}

// All catalog-legal keys over a level structure.
inline std::vector<PatternKey> legal_keys(const LevelSets& levels) {
  std::vector<PatternKey> keys;
  for (const auto& t : list_catalog()) {
    if (!levels.index(Category::DataSize, to_id(t.dsize)) ||
        !levels.index(Category::Operation, to_id(t.operation)) ||
        !levels.index(Category::DataType, to_id(t.dtype)))
      continue;
    for (const auto& d : levels[Category::Device]) keys.push_back(PatternKey{t, d});
  }
  return keys;
}

// Fitted (or bundled) posterior. `draws` is empty for summary-only models.
struct PosteriorModel {
  LevelSets levels;
  std::vector<std::string> parameters;  // display order
  std::map<std::string, ParamSummary> summaries;
  // draws[parameter][chain][iteration], centered scale, joules.
  std::map<std::string, ChainSet> draws;
  nlohmann::json meta = nlohmann::json::object();

  bool has_draws() const noexcept { return !draws.empty(); }

  const ParamSummary& summary(const std::string& name) const {
    const auto it = summaries.find(name);
    if (it == summaries.end()) throw UnknownLevel("UnknownLevel: no parameter '" + name + "'");
    return it->second;
  }

  // Total post-warmup draws behind the summaries, when known.
  std::optional<double> total_draws() const {
    if (has_draws()) {
      const auto& cs = draws.begin()->second;
      double n = 0.0;
      for (const auto& c : cs) n += static_cast<double>(c.size());
      return n;
    }
    if (meta.contains("total_draws") && meta["total_draws"].is_number())
      return meta["total_draws"].get<double>();
    return std::nullopt;
  }
};

// Ordered parameter list for a level structure: sigma, then effects by
// category, then (optionally) hyperparameters.
inline std::vector<std::string> parameter_names(const LevelSets& levels, bool with_hyper) {
  std::vector<std::string> names{std::string(kSigmaName)};
  for (Category c : kCategories) {
    if (!levels.active(c)) continue;
    for (const auto& l : levels[c]) names.push_back(effect_name(c, l));
  }
  if (with_hyper) {
    for (Category c : kCategories) {
      if (!levels.active(c)) continue;
      names.push_back(hyper_mean_name(c));
      names.push_back(hyper_sd_name(c));
    }
  }
  return names;
}

inline nlohmann::json to_json(const PosteriorModel& m) {
  using nlohmann::json;
  json j;
  json levels = json::object();
  for (Category c : kCategories) levels[std::string(greek(c))] = m.levels[c];
  j["levels"] = levels;
  j["parameters"] = m.parameters;
  json summaries = json::object();
  for (const auto& name : m.parameters) {
    const auto& s = m.summaries.at(name);
    summaries[name] = {{"mean", s.mean}, {"sd", s.sd}, {"mcse", s.mcse}, {"ess", s.ess},
                       {"rhat", s.rhat}};
  }
  j["summaries"] = summaries;
  if (m.has_draws()) {
    json draws = json::object();
    for (const auto& [name, chains] : m.draws) draws[name] = chains;
    j["draws"] = draws;
  }
  j["meta"] = m.meta;
  return j;
}

namespace detail {
inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300});
}
}  // namespace detail

// Parses a model document. When draws are present the stored summaries must
// be recomputable from them.
inline PosteriorModel model_from_json(const nlohmann::json& j) {
  PosteriorModel m;
  try {
    for (Category c : kCategories) {
      const std::string key(greek(c));
      if (j.at("levels").contains(key))
        m.levels[c] = j.at("levels").at(key).get<std::vector<std::string>>();
    }
    if (m.levels[Category::Device].empty())
      throw FormatError("FormatError: model has no device levels");
    for (const auto& [name, s] : j.at("summaries").items()) {
      m.summaries[name] = ParamSummary{s.at("mean").get<double>(), s.at("sd").get<double>(),
                                       s.at("mcse").get<double>(), s.at("ess").get<double>(),
                                       s.at("rhat").get<double>()};
    }
    if (j.contains("parameters"))
      m.parameters = j.at("parameters").get<std::vector<std::string>>();
    else
      for (const auto& [name, s] : m.summaries) m.parameters.push_back(name);
    if (j.contains("draws") && !j.at("draws").is_null())
      for (const auto& [name, chains] : j.at("draws").items())
        m.draws[name] = chains.get<ChainSet>();
    if (j.contains("meta")) m.meta = j.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("FormatError: ") + e.what());
  }
  for (const auto& name : m.parameters)
    if (!m.summaries.count(name)) throw FormatError("FormatError: no summary for '" + name + "'");
  if (!m.summaries.count(std::string(kSigmaName)))
    throw FormatError("FormatError: model has no 'sigma' summary");
  for (const auto& [name, chains] : m.draws) {
    const auto it = m.summaries.find(name);
    if (it == m.summaries.end()) throw FormatError("FormatError: draws without summary: " + name);
    const ParamSummary re = summarize(chains);
    const ParamSummary& st = it->second;
    constexpr double tol = 1e-9;
    if (!detail::close_rel(re.mean, st.mean, tol) || !detail::close_rel(re.sd, st.sd, tol) ||
        !detail::close_rel(re.mcse, st.mcse, tol) || !detail::close_rel(re.ess, st.ess, tol) ||
        !detail::close_rel(re.rhat, st.rhat, tol))
      throw FormatError("FormatError: summary of '" + name + "' does not match its draws");
  }
  return m;
}

inline PosteriorModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("FormatError: ") + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const PosteriorModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file '" + path + "'");
  out << to_json(m).dump(1) << '\n';
}

}  // namespace jbe
