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

// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "thermolearn.hpp"

using namespace thermolearn;
namespace fs = std::filesystem;

namespace {

const double kLn3 = std::log(3.0);

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // wall-clock limit; 0 means none
  std::function<Outcome()> run;
};

std::string num(double v) { return format_double(v); }

CsvTable table(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("missing " + p.string());
  return read_csv(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_preset(const std::string& preset, const fs::path& out, std::size_t threads) {
  const auto& p = cli::presets().at(preset);
  std::ostringstream o, e;
  fs::remove_all(out);
  const int code = cli::execute(cli::Invocation{p.command, std::nullopt, preset, out.string(), threads}, o, e);
  if (code != cli::kOk) std::cerr << preset << ": " << e.str();
  return code;
}

// Randomized protocols: a random start and five random increments.
std::vector<std::vector<Ppm>> protocol_set(std::size_t count, Seed seed) {
  Rng rng(seed);
  const int ms[] = {1, 2, 4, 6};  // 1 stands for two_state
  std::vector<std::vector<Ppm>> out;
  for (std::size_t k = 0; k < count; ++k) {
    const int m = ms[k % 4];
    const std::size_t dim = m == 1 ? 1 : Ppm::spin_grid_features(m).size();
    std::vector<double> th(dim);
    for (auto& v : th) v = rng.normal();
    auto make = [&](std::vector<double> t) { return m == 1 ? Ppm::two_state(t[0]) : Ppm::spin_grid(m, std::move(t)); };
    std::vector<Ppm> traj{make(th)};
    const double scale = 0.05 + rng.uniform();
    for (int s = 0; s < 5; ++s) {
      for (auto& v : th) v += scale * rng.normal();
      traj.push_back(make(th));
    }
    out.push_back(std::move(traj));
  }
  return out;
}

Outcome first_law() {
  double worst = 0.0;
  for (const auto& traj : protocol_set(1000, 101)) {
    LedgerBuilder b(traj.front());
    for (std::size_t i = 1; i < traj.size(); ++i) {
      const auto& s = b.push(traj[i]);
      worst = std::max(worst, std::abs(s.d_energy - (s.work + s.heat)));
    }
  }
  return {worst <= 1e-10, "max residual " + num(worst)};
}

Outcome ep_equals_kl() {
  double worst = 0.0, lowest = INFINITY;
  for (const auto& traj : protocol_set(1000, 101)) {
    const auto l = accumulate(traj);
    for (std::size_t i = 0; i < l.steps.size(); ++i) {
      worst = std::max(worst, std::abs(l.steps[i].ep_cond - kl(exact_dist(traj[i]), exact_dist(traj[i + 1]))));
      lowest = std::min(lowest, l.steps[i].ep_cond);
    }
  }
  return {worst <= 1e-10 && lowest >= -1e-12, "max |ep-KL| " + num(worst) + ", min ep " + num(lowest)};
}

Outcome quasi_static() {
  std::vector<double> eps;
  for (int k = 1; k <= 256; k *= 2) {
    std::vector<Ppm> traj;
    for (int i = 0; i <= k; ++i) traj.push_back(Ppm::two_state(kLn3 * i / k));
    eps.push_back(accumulate(traj).ep_cond_total);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < eps.size(); ++i) monotone = monotone && eps[i] <= eps[i - 1];
  const bool k1 = std::abs(eps.front() - 0.1438) < 1e-4;
  return {monotone && k1 && eps.back() <= 1e-3,
          "EP(k=1) " + num(eps.front()) + ", EP(k=256) " + num(eps.back()) + (monotone ? ", non-increasing" : ", NOT monotone")};
}

Outcome ignorance_identity() {
  Rng rng(404);
  double worst = 0.0;
  int ensembles = 0;
  for (std::size_t k = 2; k <= 8; ++k) {
    for (int m : {1, 2, 3, 4}) {
      std::vector<std::size_t> times;
      for (std::size_t t = 0; t <= 8; ++t) times.push_back(t);
      const std::size_t dim = m == 1 ? 1 : Ppm::spin_grid_features(m).size();
      std::vector<double> start(dim);
      for (auto& v : start) v = rng.normal();
      std::vector<std::vector<Ppm>> snaps;
      std::vector<ThermoLedger> ledgers;
      for (std::size_t trial = 0; trial < k; ++trial) {
        auto th = start;
        std::vector<Ppm> traj;
        for (std::size_t t = 0; t <= 8; ++t) {
          traj.push_back(m == 1 ? Ppm::two_state(th[0]) : Ppm::spin_grid(m, th));
          for (auto& v : th) v += 0.4 * rng.normal();
        }
        ledgers.push_back(accumulate(traj));
        snaps.push_back(std::move(traj));
      }
      const EnsembleRun run(times, snaps);
      try {
        const auto r = ignorance_ep(run, 1, 8, ledgers);
        for (std::size_t i = 0; i < k; ++i)
          worst = std::max(worst, std::abs(r.ignorance_ep_trials[i] - r.delta_i_trials[i]));
      } catch (const ConsistencyError& e) {
        return {false, e.what()};
      }
      ++ensembles;
    }
  }
  return {worst <= 1e-9, std::to_string(ensembles) + " ensembles, max gap " + num(worst)};
}

Outcome dpi() {
  Rng rng(505);
  int holding = 0;
  double min_gap = INFINITY;
  for (int i = 0; i < 1000; ++i) {
    const auto j = random_chain(rng, 2 + rng.below(5), 2 + rng.below(5), 2 + rng.below(5));
    const auto r = dpi_check(j);
    holding += r.i_b_theta >= r.i_b_x - 1e-12 ? 1 : 0;
    min_gap = std::min(min_gap, r.i_b_theta - r.i_b_x);
  }
  return {holding == 1000, std::to_string(holding) + "/1000 hold, min gap " + num(min_gap)};
}

Outcome stochastic_heat_mc() {
  const std::vector<Ppm> models{Ppm::two_state(0.0), Ppm::two_state(kLn3)};
  const double exact = accumulate(models).heat_total;
  const std::size_t n = 100000;
  const auto x0 = sample_exact(models[0], n, 606);
  const auto x1 = sample_exact(models[1], n, 607);
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = stochastic_heat(std::vector<State>{x0[i], x1[i]}, models);
  const double m = mean(q);
  const double se = sample_std(q) / std::sqrt(static_cast<double>(n));
  return {std::abs(m - exact) <= 3.0 * se,
          "MC " + num(m) + " vs exact " + num(exact) + " (" + num(std::abs(m - exact) / se) + " SE)"};
}

Outcome fdt_ou() {
  LongRunConfig cfg;
  cfg.sgd = SgdConfig{0.01, 1.0, 1000000};
  cfg.seed = 707;
  const QuadraticTask task;  // stiffness 1, noise variance 2
  const auto eq = equilibrium_check(task, cfg);
  const double predicted = eq.kB / task.stiffness;
  const double rel = std::abs(eq.theta_var[0] - predicted) / predicted;
  return {rel <= 0.2, "kB " + num(eq.kB) + ", Var(theta) " + num(eq.theta_var[0]) + ", rel err " + num(rel)};
}

Outcome noise_program(const fs::path& runs) {
  const auto dir = runs / "noise_desk";
  if (run_preset("noise_desk", dir, 1) != cli::kOk) return {false, "noise_desk run failed"};
  const auto s = table(dir / "noise_summary.csv");
  std::map<int, std::pair<double, double>> level;
  for (std::size_t r = 0; r < s.rows.size(); ++r)
    level[static_cast<int>(s.number(r, "batch_size"))] = {s.number(r, "trial_variance_mean"), s.number(r, "trial_variance_se")};
  auto separated = [&](int a, int b) {
    const auto [ma, sa] = level.at(a);
    const auto [mb, sb] = level.at(b);
    return ma - mb > 3.0 * std::hypot(sa, sb);
  };
  const bool ordering = separated(1, 10) && separated(10, 100);

  // white-noise fixture with the program's shape
  const auto fixture = white_noise_fixture(10, 200, 4096, 1.0, 808);
  bool fixture_ok = true;
  for (long lag = 1; lag <= 20; ++lag)
    fixture_ok = fixture_ok && std::abs(tcf(fixture, 100, lag)) <= 5.0 * tcf_stderr(fixture, 100, lag);

  const auto ac = table(dir / "autocorr.csv");
  double worst_decay = 0.0;
  for (std::size_t r = 0; r < ac.rows.size(); ++r)
    if (ac.number(r, "lag") >= 1) worst_decay = std::max(worst_decay, std::abs(ac.number(r, "window_normalized")));
  const bool decays = worst_decay <= 0.2;

  const auto acc = table(dir / "accuracy.csv");
  bool acc_reported = !acc.rows.empty();
  for (std::size_t r = 0; r < acc.rows.size(); ++r) acc_reported = acc_reported && std::isfinite(acc.number(r, "acc_var"));

  std::ostringstream d;
  d << "var b=1/10/100 " << num(level[1].first) << "/" << num(level[10].first) << "/" << num(level[100].first)
    << (ordering ? " (3σ-separated)" : " (NOT separated)") << "; fixture " << (fixture_ok ? "white" : "NOT white")
    << "; max |normalized autocorr| at lag>=1 " << num(worst_decay) << "; accuracy variance "
    << (acc_reported ? "reported" : "MISSING");
  return {ordering && fixture_ok && decays && acc_reported, d.str()};
}

Outcome reversibility(const fs::path& runs) {
  const auto dir = runs / "reversibility";
  if (run_preset("reversibility", dir, 1) != cli::kOk) return {false, "reversibility run failed"};
  const auto t = table(dir / "reversibility.csv");
  bool frozen_ok = false;
  std::string detail;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r][t.column("model")] != "frozen_moments") continue;
    const double exact = t.number(r, "max_discrepancy");
    const double raw = t.number(r, "max_raw_discrepancy");
    frozen_ok = exact == 0.0 && raw <= t.number(r, "max_rounding_bound") && t.number(r, "steps") >= 1000;
    detail = "frozen max " + num(exact) + " (raw " + num(raw) + ")";
  }
  const double rho = table(dir / "reversibility_trend.csv").number(0, "spearman_discrepancy_vs_rate");
  return {frozen_ok && rho >= 0.9, detail + ", mlp Spearman " + num(rho)};
}

Outcome clausius(const fs::path& runs) {
  const auto dir = runs / "clausius";
  if (run_preset("clausius", dir, 1) != cli::kOk) return {false, "clausius run failed"};
  const auto t = table(dir / "clausius.csv");
  const double ds = t.number(0, "delta_s_knn"), mq = t.number(0, "minus_heat_mean"), gap = t.number(0, "gap");
  const bool emitted = std::isfinite(ds) && std::isfinite(mq) && std::isfinite(gap) && t.number(0, "trials") >= 500;
  return {emitted && t.number(0, "sign_agree") == 1.0,
          "dS_knn " + num(ds) + ", -Q " + num(mq) + ", gap " + num(gap)};
}

std::map<std::string, std::string> csv_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

Outcome determinism(const fs::path& runs) {
  std::vector<std::string> compared, skipped, differing;
  std::size_t files = 0;
  for (const auto& [name, preset] : cli::presets()) {
    if (preset.command == "noise" && preset.text.find("dataset.source = idx") != std::string::npos &&
        !fs::exists("data/train-images-idx3-ubyte")) {
      skipped.push_back(name);
      continue;
    }
    // long presets already ran single-threaded above
    fs::path first = runs / name;
    const bool reuse = fs::exists(first / "manifest.json") && (name == "noise_desk" || name == "clausius" || name == "reversibility");
    if (!reuse) {
      first = runs / "det" / (name + "-t1");
      if (run_preset(name, first, 1) != cli::kOk) return {false, name + " failed at 1 thread"};
    }
    const auto second = runs / "det" / (name + "-t2");
    if (run_preset(name, second, 2) != cli::kOk) return {false, name + " failed at 2 threads"};
    const auto a = csv_bytes(first), b = csv_bytes(second);
    if (a != b || a.empty()) differing.push_back(name);
    files += a.size();
    compared.push_back(name);
  }
  std::string d = std::to_string(compared.size()) + " presets, " + std::to_string(files) + " CSVs identical across 1 and 2 threads";
  if (!differing.empty()) {
    d = "differing:";
    for (const auto& n : differing) d += " " + n;
  }
  for (const auto& n : skipped) d += "; skipped " + n + " (IDX files absent)";
  return {differing.empty() && !compared.empty(), d};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermolearn acceptance run"};
  std::string runs_dir = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--runs", runs_dir, "scratch directory for CLI runs");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  const fs::path runs = runs_dir;
  fs::create_directories(runs);

  const std::vector<Criterion> criteria{
      {1, "first-law identity", 10, first_law},
      {2, "conditional EP equals KL, non-negative", 10, ep_equals_kl},
      {3, "quasi-static limit", 5, quasi_static},
      {4, "ignorance-EP identity", 5, ignorance_identity},
      {5, "data processing inequality", 30, dpi},
      {6, "stochastic heat consistency", 30, stochastic_heat_mc},
      {7, "FDT on quadratic task", 60, fdt_ou},
      {8, "noise program (desk scale)", 900, [&] { return noise_program(runs); }},
      {9, "reversibility", 60, [&] { return reversibility(runs); }},
      {10, "Clausius diagnostic", 300, [&] { return clausius(runs); }},
      {11, "determinism across reruns and thread counts", 0, [&] { return determinism(runs); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget_s == 0 || secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::ostringstream t;
    t.setf(std::ios::fixed);
    t.precision(2);
    t << secs << "s";
    if (c.budget_s > 0) t << " of " << c.budget_s << "s";
    std::cout << "criterion " << c.id << ": " << (pass ? "PASS" : "FAIL") << "  " << c.name << "  [" << o.detail
              << "; " << t.str() << (in_time ? "" : ", over budget") << "]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
