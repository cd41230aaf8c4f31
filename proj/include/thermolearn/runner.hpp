// Copyright 2026 The thermolearn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef THERMOLEARN_RUNNER_HPP
#define THERMOLEARN_RUNNER_HPP

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermolearn/classifier.hpp"
#include "thermolearn/config.hpp"
#include "thermolearn/csv.hpp"
#include "thermolearn/data.hpp"
#include "thermolearn/errors.hpp"
#include "thermolearn/info.hpp"
#include "thermolearn/model.hpp"
#include "thermolearn/noise.hpp"
#include "thermolearn/numeric.hpp"
#include "thermolearn/optimizer.hpp"
#include "thermolearn/parallel.hpp"
#include "thermolearn/sampler.hpp"
#include "thermolearn/thermo.hpp"

#ifndef THERMOLEARN_GIT_DESCRIBE
#define THERMOLEARN_GIT_DESCRIBE "unknown"
#endif

namespace thermolearn::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDivergence = 3, kIoError = 4 };

struct Preset {
  std::string command;
  std::string text;
};

// Every preset is a complete config; --config files are layered on top.
inline const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> table{
      {"two_state",
       {"train", R"(schema_version = 1
task = two_state
task.init_theta = 0
dataset.source = synthetic
dataset.target_theta = 1.0986122886681098
dataset.n = 1000
dataset.seed = 11
sgd.learning_rate = 0.1
sgd.steps = 200
sgd.batch_size = 10
sgd.seed = 5
snapshots = geometric
)"}},
      {"spin_grid",
       {"train", R"(schema_version = 1
task = spin_grid
task.m = 4
task.init_theta = 0, 0, 0, 0, 0, 0, 0, 0
dataset.source = synthetic
dataset.target_theta = 0.4, -0.2, 0.1, 0.3, 0.5, -0.3, 0.2, 0.4
dataset.n = 2000
dataset.seed = 12
sgd.learning_rate = 0.05
sgd.steps = 300
sgd.batch_size = 20
sgd.seed = 6
snapshots = geometric
)"}},
      {"mlp_energy",
       {"train", R"(schema_version = 1
task = mlp_energy
task.m = 4
task.hidden = 8
task.init_std = 0.5
task.init_seed = 3
dataset.source = synthetic_target
dataset.target_model = spin_grid
dataset.target_theta = 0.4, -0.2, 0.1, 0.3, 0.5, -0.3, 0.2, 0.4
dataset.n = 2000
dataset.seed = 12
sgd.learning_rate = 0.05
sgd.steps = 300
sgd.batch_size = 20
sgd.seed = 6
snapshots = geometric
)"}},
      {"ensemble_two_state",
       {"ensemble", R"(schema_version = 1
task = two_state
task.init_theta = 0
task.init_std = 0.1
dataset.source = synthetic
dataset.target_theta = 1.0986122886681098
dataset.n = 1000
dataset.seed = 11
sgd.learning_rate = 0.1
sgd.steps = 100
sgd.batch_size = 1
ensemble.trials = 8
ensemble.base_seed = 21
snapshots = geometric
)"}},
      {"clausius",
       {"ensemble", R"(schema_version = 1
task = two_state
task.init_theta = 0
task.init_std = 0.1
dataset.source = synthetic
dataset.target_theta = 1.0986122886681098
dataset.n = 1000
dataset.seed = 11
sgd.learning_rate = 0.1
sgd.steps = 300
sgd.batch_size = 1
ensemble.trials = 500
ensemble.base_seed = 31
ensemble.write_logs = 0
snapshots = geometric
)"}},
      {"noise_desk",
       {"noise", R"(schema_version = 1
noise.mode = classifier
dataset.source = synthetic_classes
dataset.n = 1000
dataset.classes = 10
dataset.rows = 28
dataset.cols = 28
dataset.seed = 41
noise.batch_sizes = 1, 10, 100
noise.trials = 10
noise.hidden = 64, 64, 64
noise.steps = 200
noise.learning_rate = 0.05
noise.tracked = 4096
noise.max_lag = 20
noise.seed = 43
)"}},
      {"noise_paper",
       {"noise", R"(schema_version = 1
noise.mode = classifier
dataset.source = idx
dataset.images = data/train-images-idx3-ubyte
dataset.labels = data/train-labels-idx1-ubyte
noise.batch_sizes = 1, 10, 100
noise.trials = 50
noise.hidden = 200, 200, 200
noise.steps = 1000
noise.learning_rate = 0.05
noise.tracked = 4096
noise.max_lag = 20
noise.seed = 43
)"}},
      {"fdt_ou",
       {"noise", R"(schema_version = 1
noise.mode = ou
noise.stiffness = 1
noise.variance = 2
sgd.learning_rate = 0.01
sgd.steps = 1000000
noise.bins = 50
noise.seed = 51
)"}},
      {"equilibrium_two_state",
       {"noise", R"(schema_version = 1
noise.mode = nll
task = two_state
task.init_theta = 1.0986122886681098
dataset.source = synthetic
dataset.target_theta = 1.0986122886681098
dataset.n = 1000
dataset.seed = 11
sgd.learning_rate = 0.01
sgd.steps = 1000000
sgd.batch_size = 1
noise.bins = 50
noise.seed = 53
)"}},
      {"tau_sweep",
       {"tau-sweep", R"(schema_version = 1
task = spin_grid
task.m = 4
task.init_theta = 0, 0, 0, 0, 0, 0, 0, 0
dataset.source = synthetic
dataset.target_theta = 0.8, -0.4, 0.2, 0.6, 1.0, -0.6, 0.4, 0.8
dataset.n = 2000
dataset.seed = 12
sgd.learning_rate = 0.2
sgd.steps = 10
sgd.batch_size = 20
tau.taus = 1, 16, 256, 4096
tau.seeds = 20
tau.replicas = 128
tau.base_seed = 61
)"}},
      {"reversibility",
       {"reversibility", R"(schema_version = 1
task = spin_grid
task.m = 4
task.init_theta = 0, 0, 0, 0, 0, 0, 0, 0
dataset.source = synthetic
dataset.target_theta = 0.4, -0.2, 0.1, 0.3, 0.5, -0.3, 0.2, 0.4
dataset.n = 2000
dataset.seed = 12
sgd.learning_rate = 0.01
sgd.steps = 1000
sgd.batch_size = 10
sgd.seed = 7
rev.rates = 0.0001, 0.001, 0.01
rev.hidden = 8
rev.init_std = 0.5
rev.seed = 71
)"}},
      {"dpi",
       {"dpi", R"(schema_version = 1
dpi.chains = 1000
dpi.max_alphabet = 6
dpi.seed = 81
)"}},
  };
  return table;
}

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "task", "task.m", "task.features", "task.hidden", "task.init_theta", "task.init_std", "task.init_seed",
      "dataset.source", "dataset.path", "dataset.images", "dataset.labels", "dataset.n", "dataset.seed",
      "dataset.target_theta", "dataset.target_model", "dataset.classes", "dataset.rows", "dataset.cols",
      "sgd.learning_rate", "sgd.alpha", "sgd.steps", "sgd.batch_size", "sgd.seed",
      "chain.tau", "chain.proposal", "chain.seed",
      "ensemble.trials", "ensemble.base_seed", "ensemble.write_logs",
      "snapshots", "outputs", "threads",
      "noise.mode", "noise.batch_sizes", "noise.trials", "noise.hidden", "noise.steps", "noise.learning_rate",
      "noise.tracked", "noise.max_lag", "noise.trace_trials", "noise.seed", "noise.bins", "noise.kB_override",
      "noise.stiffness", "noise.variance", "noise.start",
      "tau.taus", "tau.seeds", "tau.replicas", "tau.base_seed",
      "rev.rates", "rev.hidden", "rev.init_std", "rev.seed",
      "dpi.chains", "dpi.max_alphabet", "dpi.seed"};
  return keys;
}

struct Invocation {
  std::string command;
  std::optional<std::string> config_path;
  std::optional<std::string> preset;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

struct RunContext {
  std::string command;
  Config cfg;
  fs::path out;
  std::size_t threads = 1;
  std::ostream* log = nullptr;
};

// ---------------------------------------------------------------------------
// Config interpretation.

namespace detail {

inline std::vector<std::size_t> to_sizes(const std::vector<std::uint64_t>& v) { return {v.begin(), v.end()}; }

inline SgdConfig sgd_config(const Config& c) {
  SgdConfig s;
  s.learning_rate = c.real("sgd.learning_rate", s.learning_rate);
  s.alpha = c.real("sgd.alpha", s.alpha);
  s.steps = c.count("sgd.steps", s.steps);
  try {
    s.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError("sgd", e.what());
  }
  return s;
}

inline std::size_t batch_size(const Config& c) {
  const auto b = c.count("sgd.batch_size", 1);
  if (b == 0) throw ConfigError("sgd.batch_size", "must be >= 1");
  return b;
}

/// Model structure of `task` with the given parameters.
inline Ppm task_model(const Config& c, const std::string& kind, std::optional<std::vector<double>> theta) {
  auto sized = [&](std::size_t dim) {
    if (!theta) return std::vector<double>(dim, 0.0);
    if (theta->size() != dim)
      throw ConfigError("task.init_theta", "expected " + std::to_string(dim) + " values, got " +
                                               std::to_string(theta->size()));
    return *theta;
  };
  try {
    if (kind == "two_state" || kind == "spin_grid") {
      const StateSpace space = kind == "two_state" ? StateSpace::two_state()
                                                   : StateSpace::spin_grid(static_cast<int>(c.count("task.m")));
      std::vector<Feature> fs;
      if (c.has("task.features")) {
        for (const auto& f : c.strings("task.features")) fs.push_back(Feature::parse(f));
      } else {
        fs = kind == "two_state" ? Ppm::two_state(0.0).features() : Ppm::spin_grid_features(space.arity());
      }
      return Ppm::linear(space, fs, sized(fs.size()));
    }
    if (kind == "mlp_energy") {
      const int m = static_cast<int>(c.count("task.m"));
      std::vector<int> layers{m};
      for (auto h : c.counts("task.hidden", {8})) layers.push_back(static_cast<int>(h));
      layers.push_back(1);
      std::size_t dim = 0;
      for (std::size_t l = 0; l + 1 < layers.size(); ++l)
        dim += static_cast<std::size_t>(layers[l + 1]) * static_cast<std::size_t>(layers[l] + 1);
      return Ppm::mlp(StateSpace::spin_grid(m), layers, sized(dim));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("task", e.what());
  }
  throw ConfigError("task", "unknown task '" + kind + "'");
}

/// Initial model of trial k: task.init_theta plus N(0, init_std^2) noise.
inline Ppm initial_model(const Config& c, std::size_t trial, Seed base_seed) {
  const std::string kind = c.str("task");
  auto model = task_model(c, kind, c.has("task.init_theta") ? std::optional(c.reals("task.init_theta")) : std::nullopt);
  const double sd = c.real("task.init_std", kind == "mlp_energy" ? 0.5 : 0.0);
  if (sd < 0.0) throw ConfigError("task.init_std", "must be >= 0");
  if (sd == 0.0) return model;
  auto theta = model.theta();
  Rng rng(derive_seed(c.count("task.init_seed", base_seed), trial));
  for (auto& v : theta) v += sd * rng.normal();
  return model.with_theta(std::move(theta));
}

inline std::shared_ptr<const Dataset> state_dataset(const Config& c) {
  const std::string src = c.str("dataset.source");
  if (src == "manifest") {
    const std::string path = c.str("dataset.path");
    std::ifstream in(path);
    if (!in) throw IoError("cannot read dataset manifest " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("dataset.path", std::string("malformed manifest: ") + e.what());
    }
    return std::make_shared<const Dataset>(dataset_from_manifest(j));
  }
  if (src == "synthetic" || src == "synthetic_target") {
    const std::string kind = src == "synthetic" ? c.str("task") : c.str("dataset.target_model");
    const auto target = task_model(c, kind == "mlp_energy" ? "spin_grid" : kind, std::nullopt)
                            .with_theta(c.reals("dataset.target_theta"));
    return std::make_shared<const Dataset>(make_synthetic(target, c.count("dataset.n", 1000), c.count("dataset.seed", 1)));
  }
  throw ConfigError("dataset.source", "unknown or unsupported source '" + src + "' for this task");
}

inline std::shared_ptr<const Dataset> labeled_dataset(const Config& c) {
  const std::string src = c.str("dataset.source");
  if (src == "idx") {
    auto d = load_idx(c.str("dataset.images"), c.str("dataset.labels"));
    const auto n = c.count("dataset.n", d.size());
    return std::make_shared<const Dataset>(n < d.size() ? d.head(n) : d);
  }
  if (src == "synthetic_classes") {
    const Seed seed = c.count("dataset.seed", 1);
    const auto sc = make_synthetic_classes(c.count("dataset.n", 1000), static_cast<int>(c.count("dataset.classes", 10)),
                                           static_cast<std::uint32_t>(c.count("dataset.rows", 28)),
                                           static_cast<std::uint32_t>(c.count("dataset.cols", 28)), seed);
    return std::make_shared<const Dataset>(to_dataset(sc, seed));
  }
  throw ConfigError("dataset.source", "unknown or unsupported source '" + src + "' for the classifier");
}

inline std::vector<std::size_t> snapshot_grid(const Config& c, std::size_t steps) {
  const std::string mode = c.str("snapshots", "geometric");
  if (mode == "geometric") return geometric_grid(steps);
  if (mode == "all") {
    std::vector<std::size_t> g(steps + 1);
    for (std::size_t t = 0; t <= steps; ++t) g[t] = t;
    return g;
  }
  if (mode.rfind("every:", 0) == 0) {
    Config one;
    one.set("snapshots", mode.substr(6));
    const auto every = one.count("snapshots");
    if (every == 0) throw ConfigError("snapshots", "every:N needs N >= 1");
    std::set<std::size_t> g{0, steps};
    for (std::size_t t = 0; t <= steps; t += every) g.insert(t);
    return {g.begin(), g.end()};
  }
  throw ConfigError("snapshots", "expected geometric, all, or every:N");
}

inline std::vector<Ppm> model_path(const Ppm& model0, const TrajectoryLog& log) {
  std::vector<Ppm> path;
  for (auto& th : log.thetas()) path.push_back(model0.with_theta(std::move(th)));
  return path;
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  return f;
}

inline void write_text(const fs::path& p, const std::string& text) {
  auto f = open_out(p);
  f << text;
  if (!f) throw IoError("write failed for " + p.string());
}

inline void write_ledger_csv(const fs::path& p, const ThermoLedger& ledger) {
  auto f = open_out(p);
  CsvWriter w(f, {"t", "W", "Q", "dE", "dS_cond", "ep_cond", "W_cum", "Q_cum", "ep_cum"});
  for (const auto& row : ledger_rows(ledger)) {
    std::vector<std::string> cells{std::to_string(static_cast<long>(row[0]))};
    for (std::size_t i = 1; i < row.size(); ++i) cells.push_back(format_double(row[i]));
    w.row_strings(cells);
  }
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Seed primary_seed(const Config& c) {
  for (const char* k : {"ensemble.base_seed", "noise.seed", "tau.base_seed", "rev.seed", "dpi.seed", "sgd.seed"})
    if (c.has(k)) return c.count(k);
  return 0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each writes into ctx.out; only CSVs and JSON-lines logs are part
// of the reproducibility contract (manifest.json and wallclock.json carry
// times).

inline void cmd_train(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto sgd = detail::sgd_config(c);
  const auto data = detail::state_dataset(c);
  const auto model0 = detail::initial_model(c, 0, c.count("sgd.seed", 1));
  const auto grid = detail::snapshot_grid(c, sgd.steps);
  BatchStream stream(data, detail::batch_size(c), c.count("sgd.seed", 1));
  // with a chain section the same SGD path is driven through the lagged sampler
  std::optional<BipartiteRun> lagged;
  if (c.has("chain.tau")) {
    ChainConfig chain{c.count("chain.tau"), default_proposal(model0.space()), c.count("chain.seed", 1)};
    const std::string prop = c.str("chain.proposal", "");
    if (prop == "single_flip") chain.proposal = Proposal::single_flip;
    else if (prop == "uniform") chain.proposal = Proposal::uniform;
    else if (!prop.empty()) throw ConfigError("chain.proposal", "expected single_flip or uniform, got " + prop);
    try {
      chain.validate(model0.space());
    } catch (const InvalidParameter& e) {
      throw ConfigError("chain.tau", e.what());
    }
    lagged = run_bipartite(PpmObjective(model0, data), stream, sgd, chain, 0);
  }
  const auto log = lagged ? lagged->log : train(PpmObjective(model0, data), stream, sgd);

  {
    auto f = detail::open_out(ctx.out / "trajectory.jsonl");
    write_trajectory_jsonl(f, log, grid);
  }
  const auto path = detail::model_path(model0, log);
  const double init_std = c.real("task.init_std", 0.0);
  const auto ledger =
      accumulate(path, init_std > 0.0 ? std::optional(gaussian_entropy(model0.dim(), init_std)) : std::nullopt);
  detail::write_ledger_csv(ctx.out / "ledger.csv", ledger);
  {
    auto f = detail::open_out(ctx.out / "info.csv");
    CsvWriter w(f, {"t", "loss_full", "model_entropy", "kl_data_model"});
    const auto data_dist = ExactDist::from_probs(model0.space(), empirical_probs(*data, model0.space().size()));
    for (std::size_t t : grid) {
      const auto obj = PpmObjective(path[t], data);
      const auto d = exact_dist(path[t]);
      w.row(t, obj.full_loss(), entropy(d), kl(data_dist, d));
    }
  }
  nlohmann::json summary = ledger_summary(ledger);
  summary["theta_final"] = path.back().theta();
  if (lagged) {
    auto f = detail::open_out(ctx.out / "samples.csv");
    CsvWriter w(f, {"t", "x", "phi_x"});
    for (std::size_t t = 0; t < lagged->coarse_samples.size(); ++t)
      w.row(t, lagged->coarse_samples[t], path[t].energy(lagged->coarse_samples[t]));
    summary["stochastic_heat"] = stochastic_heat(lagged->coarse_samples, path);
  }
  detail::write_text(ctx.out / "summary.json", summary.dump(2) + "\n");
  {
    nlohmann::json man = manifest_json(*data);
    detail::write_text(ctx.out / "dataset.json", man.dump(2) + "\n");
  }
}

struct ClausiusRow {
  std::size_t trials = 0;
  double s_theta_init = std::numeric_limits<double>::quiet_NaN();
  double s_knn_initial = std::numeric_limits<double>::quiet_NaN();
  double s_knn_final = std::numeric_limits<double>::quiet_NaN();
  double delta_s_knn = std::numeric_limits<double>::quiet_NaN();
  double minus_heat_mean = 0.0;
  double gap = std::numeric_limits<double>::quiet_NaN();
  bool sign_agree = false;
  double m_info_clausius_mean = std::numeric_limits<double>::quiet_NaN();
  bool unreliable = true;
};

inline void cmd_ensemble(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto sgd = detail::sgd_config(c);
  const auto data = detail::state_dataset(c);
  const std::size_t trials = c.count("ensemble.trials", 1);
  if (trials == 0) throw ConfigError("ensemble.trials", "must be >= 1");
  const Seed base = c.count("ensemble.base_seed", 1);
  const auto grid = detail::snapshot_grid(c, sgd.steps);
  const std::size_t batch = detail::batch_size(c);
  const double init_std = c.real("task.init_std", 0.0);
  const std::optional<double> s_init =
      init_std > 0.0 ? std::optional(gaussian_entropy(detail::initial_model(c, 0, base).dim(), init_std)) : std::nullopt;
  const bool write_logs = c.count("ensemble.write_logs", 1) != 0;
  if (write_logs) fs::create_directories(ctx.out / "trajectories");

  std::vector<std::vector<Ppm>> snaps(trials);
  std::vector<ThermoLedger> ledgers(trials);
  std::vector<std::vector<double>> theta_first(trials), theta_last(trials);
  std::vector<Seed> seeds(trials);
  parallel_for(trials, ctx.threads, [&](std::size_t k) {
    seeds[k] = derive_seed(base, k);
    const auto model0 = detail::initial_model(c, k, base);
    BatchStream stream(data, batch, derive_seed(seeds[k], 1));
    const auto log = train(PpmObjective(model0, data), stream, sgd);
    const auto path = detail::model_path(model0, log);
    for (std::size_t t : grid) snaps[k].push_back(path[t]);
    ledgers[k] = accumulate(path, s_init);
    theta_first[k] = path.front().theta();
    theta_last[k] = path.back().theta();
    if (write_logs) {
      std::ostringstream name;
      name << "trial_" << std::setw(4) << std::setfill('0') << k << ".jsonl";
      auto f = detail::open_out(ctx.out / "trajectories" / name.str());
      write_trajectory_jsonl(f, log, grid);
    }
  });

  const EnsembleRun run(grid, std::move(snaps), seeds);
  {
    auto f = detail::open_out(ctx.out / "ensemble_ledger.csv");
    CsvWriter w(f, {"trial", "seed", "work_total", "heat_total", "ep_cond_total", "first_law_residual",
                    "m_info_clausius"});
    for (std::size_t k = 0; k < trials; ++k)
      w.row(k, seeds[k], ledgers[k].work_total, ledgers[k].heat_total, ledgers[k].ep_cond_total,
            ledgers[k].first_law_residual, ledgers[k].m_info_clausius);
  }
  {
    auto f = detail::open_out(ctx.out / "info.csv");
    CsvWriter w(f, {"t", "I_XTheta", "l_info_mean", "l_info_std", "ignorance_ep", "delta_I"});
    for (std::size_t t : grid) {
      const auto rep = ignorance_ep(run, 0, t, ledgers);
      w.row(t, rep.l_info_ensemble, mean(rep.l_info_conditional),
            trials > 1 ? sample_std(rep.l_info_conditional) : 0.0, rep.ignorance_ep, rep.delta_i);
    }
  }
  ClausiusRow cl;
  cl.trials = trials;
  std::vector<double> heats(trials), minfo(trials);
  for (std::size_t k = 0; k < trials; ++k) {
    heats[k] = ledgers[k].heat_total;
    minfo[k] = ledgers[k].m_info_clausius;
  }
  cl.minus_heat_mean = -mean(heats);
  if (s_init) {
    cl.s_theta_init = *s_init;
    cl.m_info_clausius_mean = mean(minfo);
  }
  if (trials >= 50) {
    const auto e0 = theta_entropy_estimate(theta_first, EntropyMethod::knn);
    const auto e1 = theta_entropy_estimate(theta_last, EntropyMethod::knn);
    cl.s_knn_initial = e0.value;
    cl.s_knn_final = e1.value;
    cl.delta_s_knn = e1.value - e0.value;
    cl.gap = cl.delta_s_knn - cl.minus_heat_mean;
    cl.sign_agree = std::isfinite(cl.delta_s_knn) && (cl.delta_s_knn > 0.0) == (cl.minus_heat_mean > 0.0);
    cl.unreliable = e0.unreliable || e1.unreliable;
  }
  {
    auto f = detail::open_out(ctx.out / "clausius.csv");
    CsvWriter w(f, {"trials", "s_theta_init", "s_knn_initial", "s_knn_final", "delta_s_knn", "minus_heat_mean", "gap",
                    "sign_agree", "m_info_clausius_mean", "estimator_unreliable"});
    w.row(cl.trials, cl.s_theta_init, cl.s_knn_initial, cl.s_knn_final, cl.delta_s_knn, cl.minus_heat_mean, cl.gap,
          static_cast<int>(cl.sign_agree), cl.m_info_clausius_mean, static_cast<int>(cl.unreliable));
  }
}

inline void write_equilibrium(const RunContext& ctx, const EquilibriumCheck& eq, double predicted_var) {
  {
    auto f = detail::open_out(ctx.out / "equilibrium.csv");
    const std::size_t dim = eq.bin_edges.size();
    std::vector<std::string> cols{"cell"};
    for (std::size_t i = 0; i < dim; ++i) cols.push_back("center_" + std::to_string(i));
    cols.push_back("empirical");
    cols.push_back("predicted");
    CsvWriter w(f, cols);
    const std::size_t bins = eq.bin_edges[0].size() - 1;
    for (std::size_t cell = 0; cell < eq.theta_hist.size(); ++cell) {
      std::vector<std::string> row{std::to_string(cell)};
      std::vector<std::size_t> idx(dim);
      std::size_t rem = cell;
      for (std::size_t i = dim; i-- > 0;) {
        idx[i] = rem % bins;
        rem /= bins;
      }
      for (std::size_t i = 0; i < dim; ++i)
        row.push_back(format_double(0.5 * (eq.bin_edges[i][idx[i]] + eq.bin_edges[i][idx[i] + 1])));
      row.push_back(format_double(eq.theta_hist[cell]));
      row.push_back(format_double(eq.predicted[cell]));
      w.row_strings(row);
    }
  }
  auto f = detail::open_out(ctx.out / "equilibrium_summary.csv");
  CsvWriter w(f, {"kB", "theta_mean", "theta_var", "predicted_var", "tv_gap", "kept_steps"});
  w.row(eq.kB, eq.theta_mean[0], eq.theta_var[0], predicted_var, eq.tv_gap, eq.kept);
}

inline void cmd_noise(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const std::string mode = c.str("noise.mode", "classifier");
  if (mode == "ou" || mode == "nll") {
    const auto sgd = detail::sgd_config(c);
    LongRunConfig lr;
    lr.sgd = sgd;
    lr.seed = c.count("noise.seed", 1);
    lr.bins = c.count("noise.bins", 50);
    if (c.has("noise.kB_override")) lr.kB_override = c.real("noise.kB_override");
    if (mode == "ou") {
      QuadraticTask task;
      task.stiffness = c.real("noise.stiffness", 1.0);
      task.noise_variance = c.real("noise.variance", 2.0);
      task.start = c.reals("noise.start", {0.0});
      if (!(task.stiffness > 0.0)) throw ConfigError("noise.stiffness", "must be > 0");
      if (!(task.noise_variance >= 0.0)) throw ConfigError("noise.variance", "must be >= 0");
      const auto eq = equilibrium_check(task, lr);
      write_equilibrium(ctx, eq, eq.kB / task.stiffness);
    } else {
      const auto data = detail::state_dataset(c);
      const PpmNllTask task(detail::initial_model(c, 0, lr.seed), data, detail::batch_size(c));
      const auto eq = equilibrium_check(task, lr);
      write_equilibrium(ctx, eq, std::numeric_limits<double>::quiet_NaN());
    }
    return;
  }
  if (mode != "classifier") throw ConfigError("noise.mode", "expected classifier, ou, or nll");

  Fig3Config fc;
  fc.batch_sizes = detail::to_sizes(c.counts("noise.batch_sizes", {1, 10, 100}));
  fc.trials = c.count("noise.trials", fc.trials);
  fc.steps = c.count("noise.steps", fc.steps);
  fc.hidden.clear();
  for (auto h : c.counts("noise.hidden", {200, 200, 200})) fc.hidden.push_back(static_cast<int>(h));
  fc.learning_rate = c.real("noise.learning_rate", fc.learning_rate);
  fc.tracked_components = c.count("noise.tracked", fc.tracked_components);
  fc.max_lag = c.count("noise.max_lag", fc.max_lag);
  fc.trace_trials = c.count("noise.trace_trials", fc.trace_trials);
  fc.seed = c.count("noise.seed", fc.seed);
  fc.threads = ctx.threads;
  if (fc.trials == 0) throw ConfigError("noise.trials", "must be >= 1");
  if (fc.steps < 2) throw ConfigError("noise.steps", "must be >= 2");
  for (auto b : fc.batch_sizes)
    if (b == 0) throw ConfigError("noise.batch_sizes", "batch sizes must be >= 1");
  const auto data = detail::labeled_dataset(c);
  const auto res = fig3_experiment(fc, data);

  auto var_f = detail::open_out(ctx.out / "noise_variance.csv");
  auto ac_f = detail::open_out(ctx.out / "autocorr.csv");
  auto acc_f = detail::open_out(ctx.out / "accuracy.csv");
  auto tr_f = detail::open_out(ctx.out / "traces.csv");
  auto sum_f = detail::open_out(ctx.out / "noise_summary.csv");
  auto lay_f = detail::open_out(ctx.out / "layer_kB.csv");
  CsvWriter var_w(var_f, {"batch_size", "t", "variance_avg"});
  CsvWriter ac_w(ac_f, {"batch_size", "ref_t", "lag", "value", "window_normalized"});
  CsvWriter acc_w(acc_f, {"batch_size", "t", "acc_mean", "acc_var"});
  CsvWriter tr_w(tr_f, {"batch_size", "trial", "t", "theta_value"});
  CsvWriter sum_w(sum_f, {"batch_size", "kB", "stationary", "max_drift_magnitude", "trial_variance_mean",
                          "trial_variance_se", "final_acc_mean", "final_acc_var", "trace_index", "tracked_components",
                          "dim"});
  CsvWriter lay_w(lay_f, {"batch_size", "layer", "kB"});
  for (const auto& sc : res.scenarios) {
    const auto& st = sc.stats;
    for (std::size_t i = 0; i < st.times.size(); ++i) var_w.row(sc.batch_size, st.times[i], st.variance_avg[i]);
    for (const auto& [lag, v] : st.autocorr) {
      const auto w = st.autocorr_window.find(lag);
      ac_w.row(sc.batch_size, st.ref_t, lag, v,
               w == st.autocorr_window.end() ? std::numeric_limits<double>::quiet_NaN() : w->second);
    }
    for (std::size_t t = 0; t < sc.acc_mean.size(); ++t) acc_w.row(sc.batch_size, t, sc.acc_mean[t], sc.acc_var[t]);
    for (std::size_t k = 0; k < sc.traces.size(); ++k)
      for (std::size_t t = 0; t < sc.traces[k].size(); ++t) tr_w.row(sc.batch_size, k, t, sc.traces[k][t]);
    const double tv_mean = mean(st.trial_variance);
    const double tv_se = st.trial_variance.size() > 1
                             ? sample_std(st.trial_variance) / std::sqrt(static_cast<double>(st.trial_variance.size()))
                             : 0.0;
    sum_w.row(sc.batch_size, st.kB_estimate, static_cast<int>(st.stationary), st.max_drift_magnitude, tv_mean, tv_se,
              sc.acc_mean.back(), sc.acc_var.back(), sc.trace_index, std::min(fc.tracked_components, res.dim), res.dim);
    for (std::size_t l = 0; l < st.per_layer_kB.size(); ++l) lay_w.row(sc.batch_size, l, st.per_layer_kB[l]);
  }
}

inline void cmd_tau_sweep(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  TauSweepTask task;
  task.model0 = detail::initial_model(c, 0, c.count("tau.base_seed", 1));
  task.data = detail::state_dataset(c);
  task.sgd = detail::sgd_config(c);
  task.batch_size = detail::batch_size(c);
  task.seeds = c.count("tau.seeds", task.seeds);
  task.replicas = c.count("tau.replicas", task.replicas);
  task.base_seed = c.count("tau.base_seed", 1);
  task.threads = ctx.threads;
  const auto taus = detail::to_sizes(c.counts("tau.taus", {1, 16, 256, 4096}));
  for (auto t : taus)
    if (t == 0) throw ConfigError("tau.taus", "tau must be >= 1");
  for (std::size_t i = 1; i < taus.size(); ++i)
    if (taus[i] <= taus[i - 1]) throw ConfigError("tau.taus", "must be strictly ascending");
  if (task.seeds == 0 || task.replicas == 0) throw ConfigError("tau", "seeds and replicas must be >= 1");
  const auto res = tau_sweep(task, taus);
  {
    auto f = detail::open_out(ctx.out / "tau_sweep.csv");
    CsvWriter w(f, {"tau", "tv_mean", "tv_std", "ep_bound"});
    for (std::size_t i = 0; i < taus.size(); ++i) w.row(taus[i], res.tv_mean[i], res.tv_std[i], res.ep_bound[i]);
  }
  {
    std::vector<double> tx(taus.begin(), taus.end());
    auto f = detail::open_out(ctx.out / "tau_trend.csv");
    CsvWriter w(f, {"spearman_tv_vs_tau", "trend_non_increasing"});
    const double rho = taus.size() > 1 ? spearman(tx, res.tv_mean) : 0.0;
    w.row(rho, static_cast<int>(rho <= 0.0));
  }
  nlohmann::json wc = nlohmann::json::array();
  for (std::size_t i = 0; i < taus.size(); ++i)
    wc.push_back({{"tau", taus[i]}, {"wallclock_s_per_update", res.wallclock_per_step[i]}});
  detail::write_text(ctx.out / "wallclock.json", wc.dump(2) + "\n");
}

/// Forward/backward discrepancy statistics of one run.
struct ReversibilityStats {
  double max_discrepancy = 0.0;  // max_t r * |g(theta_after) - g(theta_before)|, the exact value of |theta_dagger - theta|
  double max_raw = 0.0;          // max_t |theta_dagger - theta| evaluated in floating point
  double max_rounding = 0.0;     // rounding allowance for the raw evaluation
  std::size_t steps = 0;
};

template <Trainable Objective>
ReversibilityStats reversibility_run(Objective obj, BatchStream& stream, const SgdConfig& sgd) {
  ReversibilityStats st;
  st.steps = sgd.steps;
  const double r = sgd.learning_rate;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t t = 0; t < sgd.steps; ++t) {
    const auto ids = stream.next_batch();
    const auto rec = sgd_step(obj, ids, sgd, static_cast<long>(t + 1));
    auto after = obj.with_theta(rec.theta_after);
    const auto g_after = after.batch_gradient(ids);
    const auto theta_dagger = backward_sgd_step(after, ids, sgd);
    std::vector<double> exact(g_after.size()), raw(g_after.size());
    double bound = 0.0;
    for (std::size_t i = 0; i < g_after.size(); ++i) {
      exact[i] = r * (g_after[i] - rec.grad_batch[i]);
      raw[i] = theta_dagger[i] - rec.theta_before[i];
      bound = std::max(bound, 2.0 * eps * (std::abs(rec.theta_before[i]) + std::abs(rec.theta_after[i]) +
                                           std::abs(r * g_after[i]) + std::abs(r * rec.grad_batch[i])));
    }
    st.max_discrepancy = std::max(st.max_discrepancy, l2_norm(exact));
    st.max_raw = std::max(st.max_raw, l2_norm(raw));
    st.max_rounding = std::max(st.max_rounding, std::sqrt(static_cast<double>(g_after.size())) * bound);
    obj = std::move(after);
  }
  return st;
}

inline void cmd_reversibility(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto sgd0 = detail::sgd_config(c);
  const auto data = detail::state_dataset(c);
  const auto batch = detail::batch_size(c);
  const Seed batch_seed = c.count("sgd.seed", 1);
  const auto rates = c.reals("rev.rates", {1e-4, 1e-3, 1e-2});
  const auto model0 = detail::initial_model(c, 0, batch_seed);
  if (model0.form() != EnergyForm::linear_features)
    throw ConfigError("task", "the frozen-moments surrogate needs a linear-feature task");

  // mlp energy on the same state space
  std::vector<int> layers{static_cast<int>(model0.space().encoding_dim())};
  for (auto h : c.counts("rev.hidden", {8})) layers.push_back(static_cast<int>(h));
  layers.push_back(1);
  std::vector<double> mlp_theta(ClassifierObjective::param_count(layers));
  Rng init(c.count("rev.seed", 1));
  const double sd = c.real("rev.init_std", 0.5);
  for (auto& v : mlp_theta) v = sd * init.normal();
  const auto mlp0 = Ppm::mlp(model0.space(), layers, mlp_theta);

  auto f = detail::open_out(ctx.out / "reversibility.csv");
  CsvWriter w(f, {"model", "learning_rate", "steps", "max_discrepancy", "max_raw_discrepancy", "max_rounding_bound"});
  std::vector<double> mlp_disc;
  {
    BatchStream stream(data, batch, batch_seed);
    const auto st = reversibility_run(FrozenMomentsObjective(model0, model0, data), stream, sgd0);
    w.row("frozen_moments", sgd0.learning_rate, st.steps, st.max_discrepancy, st.max_raw, st.max_rounding);
  }
  for (double r : rates) {
    SgdConfig s = sgd0;
    s.learning_rate = r;
    try {
      s.validate();
    } catch (const InvalidParameter& e) {
      throw ConfigError("rev.rates", e.what());
    }
    BatchStream stream(data, batch, batch_seed);
    const auto st = reversibility_run(PpmObjective(mlp0, data), stream, s);
    w.row("mlp_energy", r, st.steps, st.max_discrepancy, st.max_raw, st.max_rounding);
    mlp_disc.push_back(st.max_discrepancy);
  }
  auto g = detail::open_out(ctx.out / "reversibility_trend.csv");
  CsvWriter tw(g, {"spearman_discrepancy_vs_rate"});
  tw.row(rates.size() > 1 ? spearman(rates, mlp_disc) : 0.0);
}

inline void cmd_dpi(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const std::size_t n = c.count("dpi.chains", 1000);
  const std::size_t amax = c.count("dpi.max_alphabet", 6);
  if (amax < 2 || amax > 64) throw ConfigError("dpi.max_alphabet", "must be in [2, 64]");
  Rng rng(c.count("dpi.seed", 1));
  auto f = detail::open_out(ctx.out / "dpi.csv");
  CsvWriter w(f, {"chain", "nb", "nt", "nx", "i_b_theta", "i_b_x", "holds"});
  std::size_t holding = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t nb = 2 + rng.below(amax - 1), nt = 2 + rng.below(amax - 1), nx = 2 + rng.below(amax - 1);
    const auto r = dpi_check(random_chain(rng, nb, nt, nx));
    holding += r.holds ? 1 : 0;
    min_gap = std::min(min_gap, r.i_b_theta - r.i_b_x);
    w.row(i, nb, nt, nx, r.i_b_theta, r.i_b_x, static_cast<int>(r.holds));
  }
  auto g = detail::open_out(ctx.out / "dpi_summary.csv");
  CsvWriter sw(g, {"chains", "holding", "min_gap"});
  sw.row(n, holding, n == 0 ? 0.0 : min_gap);
}

/// Prints every CSV of a run directory; unknown schema versions are rejected.
inline void cmd_report(const RunContext& ctx) {
  if (!fs::is_directory(ctx.out)) throw IoError("no run directory at " + ctx.out.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(ctx.out))
    if (e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ostream& out = *ctx.log;
  if (fs::exists(ctx.out / "manifest.json")) {
    std::ifstream m(ctx.out / "manifest.json");
    nlohmann::json j;
    m >> j;
    out << "run: " << j.value("command", "?") << " preset=" << j.value("preset", "") << " seed=" << j.value("seed", 0)
        << " git=" << j.value("git_describe", "?") << "\n";
  }
  for (const auto& p : files) {
    std::ifstream in(p);
    const auto t = read_csv(in);
    out << p.filename().string() << ": " << t.rows.size() << " rows [";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
    out << "]\n";
    if (t.rows.size() <= 4)
      for (const auto& r : t.rows) {
        out << "  ";
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? " " : "") << t.columns[i] << "=" << r[i];
        out << "\n";
      }
  }
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> v{"train", "ensemble", "noise", "tau-sweep", "reversibility", "dpi", "report"};
  return v;
}

/// Resolves config layers, prepares the run directory and dispatches.
/// Returns the process exit code; diagnostics go to `err`.
inline int execute(const Invocation& inv, std::ostream& out, std::ostream& err) {
  try {
    if (std::find(commands().begin(), commands().end(), inv.command) == commands().end())
      throw ConfigError("command", "unknown command '" + inv.command + "'");
    Config cfg;
    if (inv.preset) {
      const auto it = presets().find(*inv.preset);
      if (it == presets().end()) throw ConfigError("preset", "unknown preset '" + *inv.preset + "'");
      if (inv.command != "report" && it->second.command != inv.command)
        throw ConfigError("preset", "preset '" + *inv.preset + "' belongs to command " + it->second.command);
      cfg = Config::parse(it->second.text, "preset " + *inv.preset);
    }
    if (inv.config_path) cfg = cfg.merged(Config::load(*inv.config_path));
    if (inv.command != "report") {
      if (!inv.preset && !inv.config_path) throw ConfigError("config", "either --config or --preset is required");
      cfg.validate_keys(known_keys());
    }

    RunContext ctx;
    ctx.command = inv.command;
    ctx.cfg = cfg;
    ctx.log = &out;
    std::string out_dir = cfg.str("outputs", "runs/" + inv.command + (inv.preset ? "-" + *inv.preset : ""));
    if (const char* env = std::getenv("THERMOLEARN_OUT"); env != nullptr && *env != '\0') out_dir = env;
    if (inv.out) out_dir = *inv.out;
    ctx.out = out_dir;
    ctx.threads = cfg.count("threads", 1);
    if (const char* env = std::getenv("THERMOLEARN_THREADS"); env != nullptr && *env != '\0') {
      Config e;
      e.set("THERMOLEARN_THREADS", env);
      ctx.threads = e.count("THERMOLEARN_THREADS");
    }
    if (inv.threads) ctx.threads = *inv.threads;
    if (ctx.threads == 0) throw ConfigError("threads", "must be >= 1");

    if (inv.command == "report") {
      cmd_report(ctx);
      return kOk;
    }
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw IoError("cannot create run directory " + ctx.out.string() + ": " + ec.message());
    detail::write_text(ctx.out / "config.txt", cfg.canonical());
    nlohmann::json manifest{{"command", inv.command},
                            {"preset", inv.preset.value_or("")},
                            {"seed", detail::primary_seed(cfg)},
                            {"git_describe", THERMOLEARN_GIT_DESCRIBE},
                            {"timestamp", detail::utc_timestamp()},
                            {"threads", ctx.threads}};
    detail::write_text(ctx.out / "manifest.json", manifest.dump(2) + "\n");

    if (inv.command == "train") cmd_train(ctx);
    else if (inv.command == "ensemble") cmd_ensemble(ctx);
    else if (inv.command == "noise") cmd_noise(ctx);
    else if (inv.command == "tau-sweep") cmd_tau_sweep(ctx);
    else if (inv.command == "reversibility") cmd_reversibility(ctx);
    else if (inv.command == "dpi") cmd_dpi(ctx);
    out << "wrote " << ctx.out.string() << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const FormatError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const InvalidParameter& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CapacityError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace thermolearn::cli

#endif  // THERMOLEARN_RUNNER_HPP
