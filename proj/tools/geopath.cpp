/*
 * Copyright 2026 The geopath Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line driver: simulate, infer, evaluate, sweep, export-plotdata.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>

#include <omp.h>

#include "CLI11.hpp"
#include "geopath/errors.hpp"
#include "geopath/io.hpp"

namespace {

using namespace geopath;
namespace fs = std::filesystem;

enum Exit { ok = 0, usage = 2, numeric = 3, partial = 4 };

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool verbose = false;
};

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void note(const Common& c, const std::string& msg) {
  if (c.verbose) std::cerr << "geopath: " << msg << '\n';
}

io::RunConfig load(const Common& c) {
  io::RunConfig cfg = io::load_config(c.config);
  if (c.seed) {
    cfg.system.seed = *c.seed;
    cfg.em.seed = *c.seed;
  }
  return cfg;
}

// --out wins; otherwise the configured directory, placed under $GEOPATH_OUT
// when that is set and the directory is relative.
fs::path output_dir(const Common& c, const io::RunConfig& cfg) {
  if (!c.out.empty()) return c.out;
  fs::path d = cfg.output.dir;
  if (const char* root = std::getenv("GEOPATH_OUT"); root && *root && d.is_relative())
    return fs::path(root) / d;
  return d;
}

io::Manifest manifest(const std::string& command, const io::RunConfig& cfg) {
  io::Manifest m;
  m.command = command;
  m.version = io::version();
  m.config = io::config_string(cfg);
  return m;
}

sde::Trajectory simulate(const io::RunConfig& cfg) {
  const long n = std::lround(cfg.system.T / cfg.system.dt);
  return sde::euler_maruyama_simulate(cfg.system_model(), cfg.system.x0, cfg.system.dt, n,
                                      cfg.system.seed);
}

eval::EvaluationGrid grid_for(const io::RunConfig& cfg, const sde::ObservationSet& obs) {
  return eval::make_grid(obs.states, cfg.eval.grid_n, cfg.eval.grid_pad, cfg.eval.bandwidth);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& c) {
  const io::RunConfig cfg = load(c);
  const fs::path dir = output_dir(c, cfg);
  Timer t;
  const auto traj = simulate(cfg);
  const auto obs = sde::subsample_observations(traj, cfg.system.tau_steps);
  io::write_trajectory(dir / "trajectory.csv", traj);
  io::write_observations(dir / "observations.csv", obs);
  io::write_file_atomic(dir / "config.ini", io::config_string(cfg));
  auto m = manifest("simulate", cfg);
  m.entries = {{"steps", std::to_string(traj.n_steps())},
               {"observations", std::to_string(obs.size())}};
  m.outputs = {"trajectory.csv", "observations.csv", "config.ini"};
  m.timings = {{"simulate", t.seconds()}};
  io::write_manifest(dir, m);
  note(c, "wrote " + dir.string());
  return ok;
}

int cmd_infer(const Common& c) {
  const io::RunConfig cfg = load(c);
  const fs::path dir = output_dir(c, cfg);
  auto m = manifest("infer", cfg);
  Timer total;

  sde::ObservationSet obs;
  if (cfg.data.observations) {
    obs = io::read_observations(*cfg.data.observations, cfg.system.dt, cfg.system.tau_steps);
  } else {
    obs = sde::subsample_observations(simulate(cfg), cfg.system.tau_steps);
  }
  io::write_observations(dir / "observations.csv", obs);
  io::write_file_atomic(dir / "config.ini", io::config_string(cfg));
  m.outputs = {"observations.csv", "config.ini"};

  const em::EMConfig ecfg = cfg.em_config();
  const auto grid = grid_for(cfg, obs);
  const auto truth = sde::van_der_pol_drift(cfg.system.mu);
  note(c, "running EM on " + std::to_string(obs.size()) + " observations");
  const em::EMHistory hist = em::run_em(obs, ecfg);

  if (hist.schedule) {
    io::write_geodesics(dir / "geodesics.csv", *hist.schedule);
    m.outputs.push_back("geodesics.csv");
  }
  Matrix history(static_cast<Eigen::Index>(hist.states.size()), 3);
  for (const auto& s : hist.states) {
    const fs::path it = dir / ("iter_" + std::to_string(s.iteration));
    io::save_drift(it, s.drift);
    Matrix field(grid.points.rows(), 4);
    field.leftCols(2) = grid.points;
    field.rightCols(2) = s.drift.evaluate(grid.points);
    io::write_csv(it / "field.csv", {"x1", "x2", "f1", "f2"}, field);
    for (const char* f : {"centers.csv", "coefficients.csv", "drift_meta.txt", "field.csv"})
      m.outputs.push_back("iter_" + std::to_string(s.iteration) + "/" + f);
    history.row(s.iteration) << s.iteration, s.free_energy,
        static_cast<double>(s.failures.size());
    for (const auto& f : s.failures)
      m.failures.push_back("iteration " + std::to_string(s.iteration) + " interval " +
                           std::to_string(f.interval) + ": " + f.reason);
    m.timings.emplace_back("iteration_" + std::to_string(s.iteration), s.runtime_s);
    note(c, "iteration " + std::to_string(s.iteration) + " wrmse vs truth " +
                io::format_number(eval::wrmse(s.drift, truth, grid)));
  }
  io::write_csv(dir / "history.csv", {"iteration", "free_energy", "failed_intervals"}, history);
  m.outputs.push_back("history.csv");

  // Bridges are regenerated from the stored drifts; the per-interval seeds
  // make them identical to the ones the E-step used.
  if (cfg.output.write_bridges && hist.states.size() > 1) {
    const long rows = static_cast<long>(obs.size() - 1) * ecfg.bridge_samples *
                      std::lround(obs.tau() / ecfg.dt_control.value_or(obs.dt));
    for (std::size_t i = 1; i < hist.states.size(); ++i) {
      const std::string tag = "iter_" + std::to_string(i);
      if (rows > cfg.output.max_bridge_rows) {
        m.entries.emplace_back(tag + "_bridges", "skipped (" + std::to_string(rows) + " rows)");
        continue;
      }
      const auto e = em::e_step(hist.states[i - 1].drift, obs,
                                hist.schedule ? &*hist.schedule : nullptr, ecfg,
                                static_cast<int>(i), true);
      for (std::size_t k = 0; k < e.segments.size(); ++k) {
        const std::string base = tag + "/bridges/segment_" + std::to_string(k);
        io::write_bridge(dir / (base + "_states.csv"), dir / (base + "_drifts.csv"),
                         e.segments[k]);
        m.outputs.push_back(base + "_states.csv");
        m.outputs.push_back(base + "_drifts.csv");
      }
    }
  }

  m.entries.emplace_back("iterations", std::to_string(hist.states.size() - 1));
  m.entries.emplace_back("augmentation", em::to_string(ecfg.augmentation));
  if (hist.error) m.failures.push_back("stopped: " + *hist.error);
  m.timings.emplace_back("total", total.seconds());
  io::write_manifest(dir, m);
  if (hist.error) {
    std::cerr << "geopath: EM stopped early: " << *hist.error << '\n';
    return numeric;
  }
  return ok;
}

std::vector<int> iterations_in(const fs::path& run) {
  std::vector<int> its;
  for (const auto& e : fs::directory_iterator(run)) {
    const std::string name = e.path().filename().string();
    if (e.is_directory() && name.rfind("iter_", 0) == 0) {
      try {
        its.push_back(std::stoi(name.substr(5)));
      } catch (const std::exception&) {
      }
    }
  }
  std::sort(its.begin(), its.end());
  return its;
}

int cmd_evaluate(const Common& c, const std::string& run, const std::string& truth_run) {
  if (!fs::is_directory(run)) {
    std::cerr << "geopath: run directory '" << run << "' does not exist\n";
    return usage;
  }
  Common cc = c;
  if (cc.config.empty()) cc.config = (fs::path(run) / "config.ini").string();
  const io::RunConfig cfg = load(cc);
  const auto obs = io::read_observations(fs::path(run) / "observations.csv", cfg.system.dt,
                                         cfg.system.tau_steps);
  const auto grid = grid_for(cfg, obs);
  const std::vector<int> its = iterations_in(run);
  if (its.empty()) {
    std::cerr << "geopath: no iter_N directories in '" << run << "'\n";
    return usage;
  }
  if (!truth_run.empty() && !fs::is_directory(truth_run)) {
    std::cerr << "geopath: truth run '" << truth_run << "' does not exist\n";
    return usage;
  }
  Matrix rows(static_cast<Eigen::Index>(its.size()), 2);
  for (std::size_t i = 0; i < its.size(); ++i) {
    const std::string name = "iter_" + std::to_string(its[i]);
    const auto est = io::load_drift(fs::path(run) / name);
    VectorField truth = sde::van_der_pol_drift(cfg.system.mu);
    if (!truth_run.empty()) truth = io::load_drift(fs::path(truth_run) / name).as_function();
    rows.row(static_cast<Eigen::Index>(i)) << its[i], eval::wrmse(est, truth, grid);
  }
  const fs::path out = c.out.empty() ? fs::path(run) : fs::path(c.out);
  io::write_csv(out / "metrics.csv", {"iteration", "wrmse"}, rows);
  note(c, "wrote " + (out / "metrics.csv").string());
  return ok;
}

int cmd_sweep(const Common& c) {
  const io::RunConfig cfg = load(c);
  if (!cfg.sweep) throw ConfigError("sweep: config has no [sweep] section");
  const fs::path dir = output_dir(c, cfg);
  Timer t;
  const auto res = eval::run_scenario(io::scenario_spec(cfg));
  std::ostringstream csv;
  eval::write_results_csv(csv, res);
  io::write_file_atomic(dir / "results.csv", csv.str());
  io::write_file_atomic(dir / "config.ini", io::config_string(cfg));
  auto m = manifest("sweep", cfg);
  m.entries = {{"cells", std::to_string(res.cells.size())},
               {"rows", std::to_string(res.rows.size())}};
  m.outputs = {"results.csv", "config.ini"};
  for (const auto& cell : res.cells) {
    const std::string tag = std::string(eval::to_string(cell.method)) + " sigma " +
                            io::format_number(cell.sigma) + " tau_steps " +
                            std::to_string(cell.tau_steps) + " T " +
                            io::format_number(cell.T) + " seed " + std::to_string(cell.seed);
    if (cell.failure) m.failures.push_back(tag + ": " + *cell.failure);
    if (cell.history.error) m.failures.push_back(tag + ": " + *cell.history.error);
  }
  m.timings = {{"sweep", t.seconds()}};
  io::write_manifest(dir, m);
  return res.complete() ? ok : partial;
}

// ---------------------------------------------------------------------------
// Plot data

struct ResultsRow {
  std::string method;
  double sigma;
  int tau_steps;
  double T;
  std::uint64_t seed;
  int iteration;
  double wrmse;
};

std::vector<ResultsRow> read_results(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read results file " + path.string());
  std::string line;
  std::getline(is, line);
  if (line.rfind("scenario,method,sigma,tau_steps,T,seed,iteration,wrmse", 0) != 0)
    throw ConfigError(path.string() + ": not a results table");
  std::vector<ResultsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string x;
    while (std::getline(ss, x, ',')) f.push_back(x);
    if (f.size() < 8) throw ConfigError(path.string() + ": short row");
    rows.push_back({f[1], io::parse_number(f[2], "sigma"), std::stoi(f[3]),
                    io::parse_number(f[4], "T"), std::stoull(f[5]), std::stoi(f[6]),
                    io::parse_number(f[7], "wrmse")});
  }
  return rows;
}

// Mean and sample standard deviation.
std::pair<double, double> mean_sd(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
  return s + '\n';
}

int export_results_panel(const std::string& panel, const fs::path& input, const fs::path& out,
                         const std::string& method) {
  const auto rows = read_results(input);
  std::string text;
  if (panel == "fig2e") {
    text = csv_line({"iteration", "wrmse", "seed"});
    for (const auto& r : rows)
      if (r.method == method)
        text += csv_line({std::to_string(r.iteration), io::format_number(r.wrmse),
                          std::to_string(r.seed)});
  } else {
    // Final iteration of each cell, aggregated over seeds.
    std::map<std::tuple<std::string, double, int, double, std::uint64_t>, ResultsRow> last;
    for (const auto& r : rows) {
      auto key = std::make_tuple(r.method, r.sigma, r.tau_steps, r.T, r.seed);
      auto it = last.find(key);
      if (it == last.end() || it->second.iteration < r.iteration) last[key] = r;
    }
    std::map<std::tuple<std::string, double, int, double>, std::vector<double>> groups;
    for (const auto& [k, r] : last)
      groups[{r.method, r.sigma, r.tau_steps, r.T}].push_back(r.wrmse);
    text = csv_line({"method", "sigma", "tau_steps", "T", "n_seeds", "mean_wrmse", "sd_wrmse"});
    for (const auto& [k, v] : groups) {
      const auto [mu, sd] = mean_sd(v);
      text += csv_line({std::get<0>(k), io::format_number(std::get<1>(k)),
                        std::to_string(std::get<2>(k)), io::format_number(std::get<3>(k)),
                        std::to_string(v.size()), io::format_number(mu), io::format_number(sd)});
    }
  }
  io::write_file_atomic(out / (panel + ".csv"), text);
  return ok;
}

int export_fields(const Common& c, const fs::path& run, const fs::path& out) {
  if (!fs::is_directory(run)) {
    std::cerr << "geopath: run directory '" << run.string() << "' does not exist\n";
    return usage;
  }
  Common cc = c;
  if (cc.config.empty()) cc.config = (run / "config.ini").string();
  const io::RunConfig cfg = load(cc);
  const auto obs =
      io::read_observations(run / "observations.csv", cfg.system.dt, cfg.system.tau_steps);
  const auto grid = grid_for(cfg, obs);
  const auto truth = sde::van_der_pol_drift(cfg.system.mu);
  for (int it : iterations_in(run)) {
    const auto est = io::load_drift(run / ("iter_" + std::to_string(it)));
    const auto ang = eval::angle_field(est.as_function(), truth, grid.points);
    const Points fe = est.evaluate(grid.points), ft = truth(grid.points);
    Matrix m(grid.points.rows(), 10);
    for (Eigen::Index g = 0; g < m.rows(); ++g)
      m.row(g) << grid.points(g, 0), grid.points(g, 1), grid.weights(g), fe(g, 0), fe(g, 1),
          ft(g, 0), ft(g, 1), ang.estimated(g), ang.truth(g), ang.valid[g] ? 1.0 : 0.0;
    io::write_csv(out / ("fig2_field_iter_" + std::to_string(it) + ".csv"),
                  {"x1", "x2", "weight", "f1", "f2", "f1_true", "f2_true", "angle",
                   "angle_true", "valid"},
                  m);
  }
  return ok;
}

int export_fig1(const Common& c, const fs::path& out) {
  if (c.config.empty()) throw ConfigError("panel fig1 needs --config");
  const io::RunConfig cfg = load(c);
  const auto cmp = eval::compare_bridges(io::comparison_spec(cfg));
  std::string text = csv_line({"strategy", "t", "sample", "x1", "x2"});
  const std::vector<std::pair<std::string, const bridge::BridgeSegment*>> segs{
      {"reference", &cmp.reference},
      {"geometric", &cmp.geometric},
      {"ou", &cmp.ou},
      {"brownian", &cmp.brownian}};
  for (const auto& [name, seg] : segs)
    for (double t : cmp.times) {
      const auto i = static_cast<std::size_t>(std::lround(t / seg->dt));
      const Points& s = seg->states[i];
      for (Eigen::Index j = 0; j < s.rows(); ++j)
        text += csv_line({name, io::format_number(t), std::to_string(j),
                          io::format_number(s(j, 0)), io::format_number(s(j, 1))});
    }
  io::write_file_atomic(out / "fig1_marginals.csv", text);
  std::string d = csv_line({"strategy", "distance"});
  d += csv_line({"geometric", io::format_number(cmp.d_geometric)});
  d += csv_line({"ou", io::format_number(cmp.d_ou)});
  d += csv_line({"brownian", io::format_number(cmp.d_brownian)});
  io::write_file_atomic(out / "fig1_distances.csv", d);
  std::string e = csv_line({"point", "x1", "x2"});
  e += csv_line({"start", io::format_number(cmp.start(0)), io::format_number(cmp.start(1))});
  e += csv_line({"end", io::format_number(cmp.end(0)), io::format_number(cmp.end(1))});
  io::write_file_atomic(out / "fig1_endpoints.csv", e);
  return ok;
}

int cmd_export(const Common& c, const std::string& panel, const std::string& input,
               const std::string& method) {
  static const std::set<std::string> results_panels{"fig2e", "fig2d", "fig3"};
  const fs::path out = c.out.empty() ? fs::path(".") : fs::path(c.out);
  if (results_panels.count(panel)) {
    if (input.empty()) throw ConfigError("panel " + panel + " needs --input results.csv");
    return export_results_panel(panel, input, out, method);
  }
  if (panel == "fig2") {
    if (input.empty()) throw ConfigError("panel fig2 needs --input run directory");
    return export_fields(c, input, out);
  }
  if (panel == "fig1") return export_fig1(c, out);
  std::cerr << "geopath: unknown panel '" << panel
            << "' (expected fig1, fig2, fig2d, fig2e or fig3)\n";
  return usage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drift inference for SDEs from sparse observations"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&c](CLI::App* s, bool need_config) {
    auto* o = s->add_option("--config", c.config, "INI configuration file");
    if (need_config) o->required()->check(CLI::ExistingFile);
    s->add_option("--out", c.out, "output directory (default: config output.dir)");
    s->add_option("--seed", c.seed, "override the simulation and EM seeds");
    s->add_option("--threads", c.threads, "cap on worker threads")->check(CLI::NonNegativeNumber);
    s->add_flag("--verbose,-v", c.verbose, "progress messages on stderr");
  };
  auto* sim = app.add_subcommand("simulate", "simulate the system and subsample it");
  add_common(sim, true);
  auto* inf = app.add_subcommand("infer", "run EM drift inference");
  add_common(inf, true);
  auto* ev = app.add_subcommand("evaluate", "wRMSE of every iteration of a run");
  add_common(ev, false);
  std::string run, truth_run;
  ev->add_option("--run", run, "run directory")->required();
  ev->add_option("--truth-run", truth_run, "compare against this run's fields instead");
  auto* sw = app.add_subcommand("sweep", "run a scenario sweep");
  add_common(sw, true);
  auto* ex = app.add_subcommand("export-plotdata", "long-format tables per figure panel");
  add_common(ex, false);
  std::string panel, input, method = "geometric";
  ex->add_option("--panel", panel, "fig1, fig2, fig2d, fig2e or fig3")->required();
  ex->add_option("--input", input, "results.csv or run directory");
  ex->add_option("--method", method, "method shown in fig2e")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : usage;
  }
  if (c.threads > 0) omp_set_num_threads(c.threads);

  try {
    if (*sim) return cmd_simulate(c);
    if (*inf) return cmd_infer(c);
    if (*ev) return cmd_evaluate(c, run, truth_run);
    if (*sw) return cmd_sweep(c);
    if (*ex) return cmd_export(c, panel, input, method);
  } catch (const ConfigError& e) {
    std::cerr << "geopath: config error: " << e.what() << '\n';
    return usage;
  } catch (const Error& e) {
    std::cerr << "geopath: " << e.what() << '\n';
    return numeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "geopath: " << e.what() << '\n';
    return usage;
  }
  return usage;
}
