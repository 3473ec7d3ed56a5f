#include "dbart/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <fstream>
#include <iostream>
#include <set>

#include "dbart/errors.hpp"
#include "dbart/io.hpp"

#ifndef DBART_VERSION
#define DBART_VERSION "0.0.0"
#endif

namespace dbart::cli {

namespace fs = std::filesystem;

std::string version() { return DBART_VERSION; }

namespace {

// Reads keys of one section and rejects unknown ones.
class Section {
 public:
  Section(const KeyValues& kv, std::string name) : name_(std::move(name)) {
    const std::string prefix = name_ + ".";
    for (const auto& [k, v] : kv) {
      if (k.rfind(prefix, 0) == 0) values_[k.substr(prefix.size())] = v;
    }
    if (values_.empty()) throw ConfigError("cli", "config has no [" + name_ + "] section");
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key) {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) throw ConfigError("cli", "missing key '" + name_ + "." + key + "'");
    return it->second;
  }
  std::string str(const std::string& key, const std::string& fallback) { return has(key) ? str(key) : fallback; }

  double real(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    double v = 0.0;
    const std::string text = str(key);
    if (!io::parse_double(text, v)) throw ConfigError("cli", "key '" + name_ + "." + key + "' is not a number: " + text);
    return v;
  }
  double real(const std::string& key) {
    str(key);
    return real(key, 0.0);
  }

  long integer(const std::string& key, long fallback, long lo, long hi) {
    if (!has(key)) return fallback;
    const std::string text = str(key);
    long v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) {
      throw ConfigError("cli", "key '" + name_ + "." + key + "' is not an integer: " + text);
    }
    if (v < lo || v > hi) {
      throw ConfigError("cli", "key '" + name_ + "." + key + "' = " + text + " is outside [" + std::to_string(lo) +
                                   ", " + std::to_string(hi) + "]");
    }
    return v;
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const std::string text = str(key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) {
      throw ConfigError("cli", "key '" + name_ + "." + key + "' is not an unsigned integer: " + text);
    }
    return v;
  }

  std::vector<std::string> list(const std::string& key) {
    std::vector<std::string> out;
    if (!has(key)) return out;
    for (auto& item : io::split(str(key), ',')) {
      auto t = io::trim(item);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  // Every key must have been consumed.
  void finish() const {
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) throw ConfigError("cli", "unknown key '" + name_ + "." + k + "'");
    }
  }

 private:
  std::string name_;
  KeyValues values_;
  std::set<std::string> used_;
};

void read_sampler(Section& s, PipelineSettings& p, bool with_level) {
  SamplerConfig& c = p.sampler;
  c.q = static_cast<int>(s.integer("q", 1, 1, 5));
  c.m = static_cast<int>(s.integer("m", 20, 1, 1000));
  c.n_iter = static_cast<int>(s.integer("n_iter", 5000, 2, 100000000));
  c.n_burn = static_cast<int>(s.integer("n_burn", 500, 0, 100000000));
  c.thin = static_cast<int>(s.integer("thin", 1, 1, 1000000));
  c.delta_multiplier = s.real("delta_multiplier", 0.1);
  c.k = s.real("k", 2.0);
  c.alpha = s.real("alpha", 0.95);
  c.beta = s.real("beta", 2.0);
  c.max_depth = static_cast<int>(s.integer("max_depth", 10, 1, 64));
  p.bw_iter = static_cast<int>(s.integer("bw_iter", 1000, 2, 100000000));
  p.bw_burn = static_cast<int>(s.integer("bw_burn", 500, 0, 100000000));
  p.grid_size = static_cast<int>(s.integer("grid_size", 6, 1, 1000));
  p.lp_q = static_cast<int>(s.integer("lp_q", 1, 0, 5));
  if (with_level) {
    p.level = s.real("level", 0.95);
    if (!(p.level > 0.0 && p.level < 1.0)) throw ConfigError("cli", "level must be in (0, 1)");
  }
  c.validate();
  if (p.bw_iter <= p.bw_burn) throw ConfigError("cli", "need bw_iter > bw_burn");
}

void write_sampler(KeyValues& kv, const PipelineSettings& p, bool with_level) {
  const SamplerConfig& c = p.sampler;
  kv["q"] = std::to_string(c.q);
  kv["m"] = std::to_string(c.m);
  kv["n_iter"] = std::to_string(c.n_iter);
  kv["n_burn"] = std::to_string(c.n_burn);
  kv["thin"] = std::to_string(c.thin);
  kv["delta_multiplier"] = io::format_double(c.delta_multiplier);
  kv["k"] = io::format_double(c.k);
  kv["alpha"] = io::format_double(c.alpha);
  kv["beta"] = io::format_double(c.beta);
  kv["max_depth"] = std::to_string(c.max_depth);
  kv["bw_iter"] = std::to_string(p.bw_iter);
  kv["bw_burn"] = std::to_string(p.bw_burn);
  kv["grid_size"] = std::to_string(p.grid_size);
  kv["lp_q"] = std::to_string(p.lp_q);
  if (with_level) kv["level"] = io::format_double(p.level);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

fs::path prepare_out(const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw ConfigError("cli", "cannot create output directory '" + out_dir.string() + "'");
  return out_dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cli", "cannot write '" + path.string() + "'");
  return out;
}

void write_manifest(const fs::path& path, const std::string& command, const std::string& section,
                    const KeyValues& keys, const KeyValues& derived) {
  auto out = open_out(path);
  out << "# dbart " << version() << " " << command << "\n";
  out << "# Rerun with: dbart " << command << " --config manifest.txt\n";
  for (const auto& [k, v] : derived) out << "# derived." << k << " = " << v << "\n";
  out << "[" << section << "]\n";
  for (const auto& [k, v] : keys) out << k << " = " << v << "\n";
}

void write_scores(const fs::path& path, const ScoreReport& report) {
  auto out = open_out(path);
  out << "candidate,score,feasible\n";
  for (std::size_t l = 0; l < report.candidates.size(); ++l) {
    out << io::format_double(report.candidates[l]) << ',' << io::format_double(report.scores[l]) << ','
        << (report.feasible[l] ? 1 : 0) << '\n';
  }
}

Dataset load(const FitSpec& spec) {
  if (!fs::exists(spec.data)) throw ConfigError("cli", "data file '" + spec.data.string() + "' does not exist");
  return load_dataset(spec.data, spec.schema);
}

}  // namespace

FitSpec parse_fit(const KeyValues& kv, const std::string& section, const fs::path& base_dir,
                  const Overrides& overrides) {
  Section s(kv, section);
  FitSpec spec;
  fs::path data = s.str("data");
  if (data.is_relative()) data = base_dir / data;
  spec.data = fs::weakly_canonical(data);
  if (!fs::exists(spec.data)) throw ConfigError("cli", "data file '" + spec.data.string() + "' does not exist");

  spec.schema.outcome = s.str("outcome");
  spec.schema.running = s.str("running");
  spec.schema.cutoff = s.real("cutoff", 0.0);
  const auto categorical = s.list("categorical");
  const std::set<std::string> cat_set(categorical.begin(), categorical.end());
  const auto covariates = s.list("covariates");
  if (covariates.empty()) throw ConfigError("cli", "key '" + section + ".covariates' lists no columns");
  for (const auto& c : categorical) {
    if (std::find(covariates.begin(), covariates.end(), c) == covariates.end()) {
      throw ConfigError("cli", "categorical column '" + c + "' is not listed in covariates");
    }
  }
  for (const auto& name : covariates) {
    CovariateSpec cov;
    cov.name = name;
    if (cat_set.count(name)) {
      cov.kind = CovariateSpec::Kind::Categorical;
      cov.levels = s.list("levels." + name);
      if (cov.levels.size() < 2) throw ConfigError("cli", "categorical column '" + name + "' needs levels." + name);
      cov.reference = s.str("reference." + name, cov.levels.back());
    }
    spec.schema.covariates.push_back(std::move(cov));
  }

  const bool with_level = section == "fit";
  read_sampler(s, spec.settings, with_level);
  spec.seed = s.u64("seed", 1);
  s.finish();
  if (overrides.seed) spec.seed = *overrides.seed;
  spec.settings.sampler.seed = spec.seed;
  spec.settings.sampler.stream = 0;
  spec.settings.threads = std::max(overrides.threads, 1);
  return spec;
}

KeyValues fit_keys(const FitSpec& spec, bool with_level) {
  KeyValues kv;
  kv["data"] = spec.data.string();
  kv["outcome"] = spec.schema.outcome;
  kv["running"] = spec.schema.running;
  kv["cutoff"] = io::format_double(spec.schema.cutoff);
  std::vector<std::string> covs, cats;
  for (const auto& c : spec.schema.covariates) {
    covs.push_back(c.name);
    if (c.kind == CovariateSpec::Kind::Categorical) {
      cats.push_back(c.name);
      kv["levels." + c.name] = join(c.levels);
      kv["reference." + c.name] = c.reference;
    }
  }
  kv["covariates"] = join(covs);
  if (!cats.empty()) kv["categorical"] = join(cats);
  write_sampler(kv, spec.settings, with_level);
  kv["seed"] = std::to_string(spec.seed);
  return kv;
}

SimulateSpec parse_simulate(const KeyValues& kv, const fs::path& /*base_dir*/, const Overrides& overrides) {
  Section s(kv, "simulate");
  SimulateSpec spec;
  ExperimentSpec& e = spec.experiment;
  const std::string scenario = s.str("scenario");
  if (scenario == "scenario1") {
    e.scenario = 1;
    const std::string c = s.str("case", "small");
    if (c == "small") {
      e.variability = Variability::Small;
    } else if (c == "large") {
      e.variability = Variability::Large;
    } else {
      throw ConfigError("cli", "unknown scenario 1 case '" + c + "' (expected small or large)");
    }
  } else if (scenario == "scenario2") {
    e.scenario = 2;
    e.rho = s.real("rho", 0.0);
  } else {
    throw ConfigError("cli", "unknown scenario '" + scenario + "' (expected scenario1 or scenario2)");
  }
  e.sigma2 = s.real("sigma2");
  e.replications = static_cast<int>(s.integer("replications", 15, 1, 100000));
  e.n = static_cast<int>(s.integer("n", 0, 0, 100000000));
  e.methods.clear();
  for (const auto& m : s.list("methods")) e.methods.push_back(parse_method(m));
  if (e.methods.empty()) e.methods = {Method::DirectBart, Method::Lp};
  e.calibration_draws = s.integer("calibration_draws", 1000000, 100000, 1000000000);
  e.calibration_seed = s.u64("calibration_seed", 20240601);

  // q defaults per scenario (2 in scenario 1, 1 in scenario 2).
  const int q_default = e.scenario == 1 ? 2 : 1;
  const bool q_given = s.has("q");
  read_sampler(s, e.pipeline, true);
  if (!q_given) e.pipeline.sampler.q = q_default;
  spec.seed = s.u64("seed", 1);
  s.finish();
  if (overrides.seed) spec.seed = *overrides.seed;
  e.base_seed = spec.seed;
  e.pipeline.sampler.stream = 0;
  e.validate();
  return spec;
}

KeyValues simulate_keys(const SimulateSpec& spec) {
  const ExperimentSpec& e = spec.experiment;
  KeyValues kv;
  kv["scenario"] = e.scenario == 1 ? "scenario1" : "scenario2";
  if (e.scenario == 1) {
    kv["case"] = e.variability == Variability::Small ? "small" : "large";
  } else {
    kv["rho"] = io::format_double(e.rho);
  }
  kv["sigma2"] = io::format_double(e.sigma2);
  kv["replications"] = std::to_string(e.replications);
  if (e.n > 0) kv["n"] = std::to_string(e.n);
  std::vector<std::string> methods;
  for (Method m : e.methods) methods.push_back(method_name(m));
  kv["methods"] = join(methods);
  kv["calibration_draws"] = std::to_string(e.calibration_draws);
  kv["calibration_seed"] = std::to_string(e.calibration_seed);
  write_sampler(kv, e.pipeline, true);
  kv["seed"] = std::to_string(spec.seed);
  return kv;
}

void cmd_fit(const FitSpec& spec, const fs::path& out_dir) {
  const Dataset ds = load(spec);
  prepare_out(out_dir);
  const DirectBartFit fit = fit_direct_bart(ds, spec.settings, ds.z());

  {
    auto out = open_out(out_dir / "cate_summary.csv");
    out << "id,tau_mean,lower,upper\n";
    for (Index i = 0; i < ds.n(); ++i) {
      out << i << ',' << io::format_double(fit.summary.mean[i]) << ',' << io::format_double(fit.summary.lower[i])
          << ',' << io::format_double(fit.summary.upper[i]) << '\n';
    }
  }
  write_scores(out_dir / "bandwidth_scores.csv", fit.bandwidth);

  KeyValues derived;
  derived["lp_bandwidth"] = io::format_double(fit.lp.h_lp);
  derived["selected_bandwidth"] = io::format_double(fit.bandwidth.selected);
  derived["evaluation_size"] = std::to_string(fit.bandwidth.s);
  derived["retained_draws"] = std::to_string(fit.draws.draws());
  derived["n"] = std::to_string(ds.n());
  derived["d"] = std::to_string(ds.d());
  write_manifest(out_dir / "manifest.txt", "fit", "fit", fit_keys(spec, true), derived);
}

void cmd_bandwidth(const FitSpec& spec, const fs::path& out_dir) {
  const Dataset ds = load(spec);
  prepare_out(out_dir);
  LpFit lp;
  const ScoreReport report = select_direct_bart_bandwidth(ds, spec.settings, &lp);
  write_scores(out_dir / "bandwidth_scores.csv", report);
}

void cmd_simulate(const SimulateSpec& spec, const fs::path& out_dir, int threads) {
  prepare_out(out_dir);
  const MetricsTable table = run_experiment(spec.experiment, threads);
  write_metrics_csv(out_dir / "metrics.csv", table);
  write_replications_csv(out_dir / "replications.csv", table);
  write_calibration_csv(out_dir / "calibration.csv", table.calibration);
  KeyValues derived;
  int failed = 0;
  for (const auto& r : table.rows) failed += r.failed;
  derived["failed_method_replications"] = std::to_string(failed);
  write_manifest(out_dir / "manifest.txt", "simulate", "simulate", simulate_keys(spec), derived);
}

int run(int argc, char** argv) {
  CLI::App app{"Direct-BART: CATE estimation in sharp regression discontinuity designs"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", threads, "worker cap")->check(CLI::Range(1, 1024));
  };
  auto* fit = app.add_subcommand("fit", "bandwidth selection + full chain, per-unit CATE summary");
  auto* bandwidth = app.add_subcommand("bandwidth", "Hyvarinen bandwidth scores only");
  auto* simulate = app.add_subcommand("simulate", "replication experiment on a simulated scenario");
  for (auto* sub : {fit, bandwidth, simulate}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const fs::path cfg = fs::absolute(config_path);
    const KeyValues kv = io::read_key_values(cfg);
    const Overrides ov{seed, threads};
    if (fit->parsed()) {
      cmd_fit(parse_fit(kv, "fit", cfg.parent_path(), ov), out_dir);
    } else if (bandwidth->parsed()) {
      cmd_bandwidth(parse_fit(kv, "bandwidth", cfg.parent_path(), ov), out_dir);
    } else {
      cmd_simulate(parse_simulate(kv, cfg.parent_path(), ov), out_dir, threads);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

}  // namespace dbart::cli
