// jbe: command-line front end for the bytecode energy model.
//
// Exit codes: 0 success, 1 error (message on stderr), 2 convergence gates not
// met (fit, diagnose).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "jbe/jbe.hpp"

namespace {

constexpr int kExitError = 1;
constexpr int kExitNonConvergence = 2;

std::string sci(double v) { return jbe::format_sci(v); }

std::vector<double> parse_quantiles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double p = 0.0;
    try {
      p = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size())
      throw jbe::DomainError("DomainError: bad quantile '" + item + "'");
    out.push_back(p);
  }
  if (out.empty()) throw jbe::DomainError("DomainError: empty quantile list");
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> lines;
  std::string line;
  if (path.empty() || path == "-") {
    while (std::getline(std::cin, line)) lines.push_back(line);
    return lines;
  }
  std::ifstream in(path);
  if (!in) throw jbe::Error("cannot open '" + path + "'");
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw jbe::Error("cannot write '" + path + "'");
  out << text;
}

// ---- catalog ---------------------------------------------------------------

int cmd_catalog(bool json) {
  const auto& entries = jbe::Catalog::instance().entries();
  if (json) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries)
      arr.push_back({{"descriptor", jbe::render(e.triple)},
                     {"family", jbe::display_name(jbe::info(e.triple.operation).family)},
                     {"signature", e.signature}});
    std::cout << arr.dump(1) << '\n';
    return 0;
  }
  std::printf("%-48s %-46s %s\n", "descriptor", "family", "signature");
  for (const auto& e : entries) {
    std::string sig;
    for (const auto& m : e.signature) sig += (sig.empty() ? "" : " ") + m;
    std::printf("%-48s %-46s %s\n", jbe::render(e.triple).c_str(),
                std::string(jbe::display_name(jbe::info(e.triple.operation).family)).c_str(),
                sig.empty() ? "(descriptor only)" : sig.c_str());
  }
  std::printf("%zu patterns\n", entries.size());
  return 0;
}

// ---- classify --------------------------------------------------------------

struct ClassifyArgs {
  std::string program;
  std::string out;
  std::string device;
  bool json = false;
};

int cmd_classify(const ClassifyArgs& a) {
  std::vector<std::string> lines;
  for (auto& l : read_lines(a.program))
    if (!jbe::detail::trim(l).empty()) lines.push_back(l);
  std::vector<jbe::PatternTriple> triples;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      triples.push_back(jbe::classify_statement(lines[i]));
    } catch (const jbe::UnknownPattern& e) {
      throw jbe::UnknownPattern("line " + std::to_string(i + 1) + ": " + e.what());
    } catch (const jbe::AmbiguousPattern& e) {
      throw jbe::AmbiguousPattern("line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (a.json) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : triples) arr.push_back(jbe::render(t));
    std::cout << arr.dump() << '\n';
  } else {
    for (const auto& t : triples) std::cout << jbe::render(t) << '\n';
  }
  if (!a.out.empty()) {
    if (a.device.empty()) throw jbe::Error("classify --out needs --device to form pattern keys");
    jbe::ProgramManifest m;
    for (const auto& t : triples) ++m.entries[jbe::PatternKey{t, a.device}];
    std::string text;
    for (const auto& [k, n] : m.entries) text += std::to_string(n) + " " + jbe::render(k) + "\n";
    write_text(a.out, text);
  }
  return 0;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string truth;
  std::string out;
  std::uint32_t cycles = 10;
  std::uint32_t samples = 5;
  std::optional<std::uint64_t> seed;
  std::optional<double> baseline;
};

int cmd_simulate(const SimulateArgs& a) {
  jbe::GroundTruth t = jbe::load_truth(a.truth);
  if (a.seed) t.seed = *a.seed;
  if (a.baseline) t.baseline = *a.baseline;
  const auto study = jbe::simulate_study(t, a.cycles, a.samples);
  std::ostringstream os;
  jbe::write_raw_samples(os, study.samples);
  write_text(a.out, os.str());
  return 0;
}

// ---- fit -------------------------------------------------------------------

struct FitArgs {
  std::string measurements;
  std::string out;
  int chains = 4;
  int warmup = 1000;
  int draws = 1000;
  int thin = 10;
  std::uint64_t seed = 0;
  bool json = false;
};

int print_report(const jbe::DiagnosticsReport& rep, bool json,
                 const std::vector<jbe::Misfit>* misfits) {
  if (json) {
    nlohmann::json j = jbe::to_json(rep);
    if (misfits) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& m : *misfits)
        arr.push_back({{"key", jbe::render(m.key)},
                       {"observed_mean", m.observed_mean},
                       {"lower", m.lower},
                       {"upper", m.upper}});
      j["misfits"] = arr;
    }
    std::cout << j.dump(1) << '\n';
  } else {
    std::cout << jbe::render_table(rep);
    if (misfits) {
      std::cout << "misfits: " << misfits->size() << '\n';
      for (const auto& m : *misfits)
        std::cout << "  " << jbe::render(m.key) << " observed " << sci(m.observed_mean)
                  << " outside [" << sci(m.lower) << ", " << sci(m.upper) << "]\n";
    }
  }
  return rep.all_pass() ? 0 : kExitNonConvergence;
}

int cmd_fit(const FitArgs& a) {
  if (a.chains < 2) throw jbe::DomainError("DomainError: --chains must be >= 2 (split R-hat)");
  const jbe::Dataset data = jbe::load_measurements(a.measurements).corrected();
  const jbe::ModelSpec spec = jbe::ModelSpec::from_dataset(data);
  jbe::FitOptions opt;
  opt.chains = a.chains;
  opt.warmup = a.warmup;
  opt.draws = a.draws;
  opt.seed = a.seed;
  opt.sweeps_per_draw = a.thin;
  const jbe::PosteriorModel model = jbe::fit(data, spec, opt);
  jbe::save_model(model, a.out);
  for (const auto& w : model.meta["warnings"]) std::cerr << w.get<std::string>() << '\n';
  const auto rep = jbe::diagnose(model);
  const int code = print_report(rep, a.json, nullptr);
  return jbe::has_nonconvergence(model) ? kExitNonConvergence : code;
}

// ---- diagnose --------------------------------------------------------------

struct DiagnoseArgs {
  std::string model;
  std::string measurements;
  double level = 0.99;
  bool json = false;
};

int cmd_diagnose(const DiagnoseArgs& a) {
  const jbe::PosteriorModel model = jbe::load_model(a.model);
  const auto rep = jbe::diagnose(model);
  if (a.measurements.empty()) return print_report(rep, a.json, nullptr);
  const jbe::Dataset data = jbe::load_measurements(a.measurements).corrected();
  const auto misfits = jbe::posterior_predictive_check(model, data, a.level);
  return print_report(rep, a.json, &misfits);
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string program;
  std::string quantiles = "0.5,0.95,0.99";
  std::string device;
  std::string covariance = "independent";
  bool json = false;
};

int cmd_predict(const PredictArgs& a) {
  const jbe::PosteriorModel model = jbe::load_model(a.model);
  const auto manifest = jbe::load_manifest(
      a.program, a.device.empty() ? std::nullopt : std::optional<std::string>(a.device));
  const auto mode =
      a.covariance == "empirical" ? jbe::CovarianceMode::Empirical : jbe::CovarianceMode::Independent;
  const auto r = jbe::predict_program(model, manifest, parse_quantiles(a.quantiles), mode);
  if (a.json) {
    std::cout << jbe::to_json(r).dump(1) << '\n';
    return 0;
  }
  std::printf("mean  %s J  (%.6f uJ)\n", sci(r.dist.mean).c_str(), r.dist.mean * 1e6);
  std::printf("sd    %s J  (%.6f uJ)\n", sci(r.dist.sd).c_str(), r.dist.sd * 1e6);
  std::printf("covariance %s\n",
              r.covariance == jbe::CovarianceMode::Empirical ? "empirical" : "independent");
  std::printf("%-8s %-14s %s\n", "p", "joules", "uJ");
  for (const auto& [p, v] : r.quantiles)
    std::printf("%-8g %-14s %.6f\n", p, sci(v).c_str(), v * 1e6);
  std::printf("%-56s %8s %-14s %-14s %s\n", "key", "count", "stmt_mean", "stmt_sd", "contribution");
  for (const auto& c : r.contributions)
    std::printf("%-56s %8lld %-14s %-14s %s\n", jbe::render(c.key).c_str(), c.count,
                sci(c.statement.mean).c_str(), sci(c.statement.sd).c_str(), sci(c.mean).c_str());
  return 0;
}

// ---- prior-check -----------------------------------------------------------

int cmd_prior_check(std::size_t n, std::uint64_t seed, bool json) {
  jbe::ModelSpec spec{jbe::full_levels({"device1", "device2"}), {}};
  const auto draws = jbe::prior_predictive(spec, n, seed);
  double sum = 0.0, inside = 0.0;
  for (double x : draws) {
    sum += x;
    if (x >= 0.0 && x <= 0.05) inside += 1.0;
  }
  const double mean = draws.empty() ? 0.0 : sum / static_cast<double>(draws.size());
  double ss = 0.0;
  for (double x : draws) ss += (x - mean) * (x - mean);
  const double sd = draws.size() > 1 ? std::sqrt(ss / static_cast<double>(draws.size() - 1)) : 0.0;
  const auto [amean, asd] = jbe::prior_predictive_moments(spec);
  const double frac = draws.empty() ? 0.0 : inside / static_cast<double>(draws.size());
  if (json) {
    std::cout << nlohmann::json{{"n", n},
                                {"seed", seed},
                                {"mean", mean},
                                {"sd", sd},
                                {"analytic_mean", amean},
                                {"analytic_sd", asd},
                                {"fraction_in_0_50mJ", frac}}
                     .dump(1)
              << '\n';
    return 0;
  }
  std::printf("draws                 %zu\n", n);
  std::printf("mean                  %.6f mJ (analytic %.6f mJ)\n", mean * 1e3, amean * 1e3);
  std::printf("sd                    %.6f mJ (analytic %.6f mJ)\n", sd * 1e3, asd * 1e3);
  std::printf("fraction in [0,50] mJ %.5f\n", frac);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bytecode energy model: measurement ingestion, Bayesian fitting, diagnostics and "
               "program energy prediction"};
  app.require_subcommand(1);

  bool json = false;

  auto* catalog = app.add_subcommand("catalog", "List the bytecode pattern catalog");
  catalog->add_flag("--json", json, "JSON output");

  ClassifyArgs ca;
  auto* classify = app.add_subcommand(
      "classify", "Classify statements (mnemonic sequences or descriptors, one per line)");
  classify->add_option("--program", ca.program, "Statement file (default: stdin)");
  classify->add_option("--out", ca.out, "Also write a manifest of pattern keys");
  classify->add_option("--device", ca.device, "Device for manifest keys");
  classify->add_flag("--json", ca.json, "JSON output");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Simulate a measurement study from known effects");
  simulate->add_option("--truth", sa.truth, "Ground-truth JSON")->required();
  simulate->add_option("--out", sa.out, "Output CSV (default: stdout)");
  simulate->add_option("--cycles", sa.cycles, "Cycles per pattern")->capture_default_str();
  simulate->add_option("--samples", sa.samples, "Samples per cycle")->capture_default_str();
  simulate->add_option("--seed", sa.seed, "Override the truth file's seed");
  simulate->add_option("--baseline", sa.baseline, "Override the true baseline energy (J)");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit the hierarchical model to a measurement CSV");
  fit->add_option("--measurements", fa.measurements, "Measurement CSV")->required();
  fit->add_option("--out", fa.out, "Output model JSON")->required();
  fit->add_option("--chains", fa.chains, "Chains (>= 2)")->capture_default_str();
  fit->add_option("--warmup", fa.warmup, "Warmup iterations per chain")->capture_default_str();
  fit->add_option("--draws", fa.draws, "Stored draws per chain")->capture_default_str();
  fit->add_option("--thin", fa.thin, "Sweeps per stored draw")->capture_default_str();
  fit->add_option("--seed", fa.seed, "Seed (chain c uses seed + c)")->capture_default_str();
  fit->add_flag("--json", fa.json, "JSON diagnostics");

  DiagnoseArgs da;
  auto* diagnose = app.add_subcommand("diagnose", "Convergence table and predictive check");
  diagnose->add_option("model,--model", da.model, "Model JSON");
  diagnose->add_option("--measurements", da.measurements,
                       "Measurement CSV for the posterior predictive check");
  diagnose->add_option("--level", da.level, "Predictive interval level")->capture_default_str();
  diagnose->add_flag("--json", da.json, "JSON output");

  PredictArgs pa;
  auto* predict = app.add_subcommand(
      "predict",
      "Predict a program's energy distribution from a manifest. Summary-only models (such as the "
      "bundled one) carry no draws and always use independence between statements");
  predict->add_option("--model", pa.model, "Model JSON")->required();
  predict->add_option("--program", pa.program, "Manifest: '<count> op:type:size@device' lines")
      ->required();
  predict->add_option("--quantiles", pa.quantiles, "Comma-separated probabilities")
      ->capture_default_str();
  predict->add_option("--device", pa.device, "Device for manifest keys without '@device'");
  predict->add_option("--covariance", pa.covariance, "independent | empirical")
      ->check(CLI::IsMember({"independent", "empirical"}))
      ->capture_default_str();
  predict->add_flag("--json", pa.json, "JSON output");

  std::size_t prior_n = 100000;
  std::uint64_t prior_seed = 0;
  auto* prior = app.add_subcommand("prior-check", "Prior predictive energy range");
  prior->add_option("--n", prior_n, "Number of draws")->capture_default_str();
  prior->add_option("--seed", prior_seed, "Seed")->capture_default_str();
  prior->add_flag("--json", json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*catalog) return cmd_catalog(json);
    if (*classify) return cmd_classify(ca);
    if (*simulate) return cmd_simulate(sa);
    if (*fit) return cmd_fit(fa);
    if (*diagnose) {
      if (da.model.empty()) throw jbe::Error("diagnose needs a model file");
      return cmd_diagnose(da);
    }
    if (*predict) return cmd_predict(pa);
    if (*prior) return cmd_prior_check(prior_n, prior_seed, json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
