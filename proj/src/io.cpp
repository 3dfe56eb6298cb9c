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

#include "geopath/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "geopath/errors.hpp"

namespace geopath::io {

namespace pt = boost::property_tree;

const char* version() { return "1.0.0"; }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

namespace {

// Shortest representation that reads back to the same double.
std::string short_number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

template <class Int>
Int parse_int(const std::string& s, const std::string& what) {
  Int v{};
  const std::string t = trim(s);
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
    throw ConfigError(what + ": expected an integer, got '" + s + "'");
  return v;
}

}  // namespace

double parse_number(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  double v = 0.0;
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
    throw ConfigError(what + ": expected a number, got '" + s + "'");
  return v;
}

// ---------------------------------------------------------------------------
// CSV

Eigen::Index CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error("csv: missing column '" + name + "'");
  return static_cast<Eigen::Index>(it - header.begin());
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp.string());
    os << contents;
    if (!os.flush()) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string csv_string(const std::vector<std::string>& header, const Matrix& rows) {
  std::string s;
  for (std::size_t c = 0; c < header.size(); ++c) s += (c ? "," : "") + header[c];
  s += '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      if (c) s += ',';
      s += format_number(rows(i, c));
    }
    s += '\n';
  }
  return s;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const Matrix& rows) {
  if (static_cast<Eigen::Index>(header.size()) != rows.cols())
    throw InvalidParameter("csv: header does not match column count");
  write_file_atomic(path, csv_string(header, rows));
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw Error(path.string() + ": empty file");
  t.header = split(trim(line), ',');
  std::vector<std::vector<double>> rows;
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(trim(line), ',');
    if (cells.size() != t.header.size())
      throw Error(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    std::vector<double> r;
    for (auto& c : cells) {
      try {
        r.push_back(parse_number(c, path.string() + ":" + std::to_string(lineno)));
      } catch (const ConfigError& e) {
        throw Error(e.what());
      }
    }
    rows.push_back(std::move(r));
  }
  t.data.resize(static_cast<Eigen::Index>(rows.size()),
                static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.data(i, j) = rows[i][j];
  return t;
}

namespace {
std::vector<std::string> state_header(const std::string& first, int d,
                                      const std::string& prefix = "x") {
  std::vector<std::string> h{first};
  for (int j = 1; j <= d; ++j) h.push_back(prefix + std::to_string(j));
  return h;
}
}  // namespace

void write_trajectory(const fs::path& path, const sde::Trajectory& traj) {
  Matrix m(traj.states.rows(), traj.dim() + 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = traj.dt * static_cast<double>(i);
  m.rightCols(traj.dim()) = traj.states;
  write_csv(path, state_header("t", traj.dim()), m);
}

void write_observations(const fs::path& path, const sde::ObservationSet& obs) {
  Matrix m(obs.size(), obs.dim() + 1);
  m.col(0) = obs.times;
  m.rightCols(obs.dim()) = obs.states;
  write_csv(path, state_header("t", obs.dim()), m);
}

sde::ObservationSet read_observations(const fs::path& path, double dt, int tau_steps) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 2 || t.header[0] != "t")
    throw Error(path.string() + ": expected columns t,x1..");
  sde::ObservationSet obs;
  obs.dt = dt;
  obs.tau_steps = tau_steps;
  obs.times = t.data.col(0);
  obs.states = t.data.rightCols(t.data.cols() - 1);
  const double tau = obs.tau();
  for (Eigen::Index i = 1; i < obs.times.size(); ++i)
    if (std::abs(obs.times(i) - obs.times(i - 1) - tau) > 1e-9 * std::max(1.0, tau))
      throw Error(path.string() + ": observation times are not spaced by tau_steps * dt");
  obs.validate();
  return obs;
}

// ---------------------------------------------------------------------------
// Drift fields

namespace {
std::string join(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_number(v(i));
  return s;
}

Vector parse_vector(const std::string& s, const std::string& what) {
  const auto items = split(s, ',');
  Vector v(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) v(i) = parse_number(items[i], what);
  return v;
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}
}  // namespace

void save_drift(const fs::path& dir, const gp::DriftField& f) {
  const int d = f.dim();
  std::vector<std::string> hx, hc;
  for (int j = 1; j <= d; ++j) {
    hx.push_back("x" + std::to_string(j));
    hc.push_back("f" + std::to_string(j));
  }
  write_csv(dir / "centers.csv", hx, f.centers);
  write_csv(dir / "coefficients.csv", hc, f.coefficients);
  std::ostringstream os;
  os << "kind = " << (f.kind == gp::DriftField::Kind::dense ? "dense" : "sparse") << '\n'
     << "dim = " << d << '\n'
     << "lengthscales = " << join(f.kernel.lengthscales) << '\n'
     << "signal_variance = " << format_number(f.kernel.signal_variance) << '\n'
     << "jitter = " << format_number(f.jitter) << '\n'
     << "sigma = " << join(f.sigma) << '\n'
     << "dt = " << format_number(f.dt) << '\n';
  write_file_atomic(dir / "drift_meta.txt", os.str());
}

gp::DriftField load_drift(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("missing drift directory " + dir.string());
  auto kv = read_key_values(dir / "drift_meta.txt");
  auto need = [&](const char* k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw Error((dir / "drift_meta.txt").string() + ": missing " + k);
    return it->second;
  };
  gp::DriftField f;
  const std::string kind = need("kind");
  if (kind != "dense" && kind != "sparse") throw Error("drift_meta: bad kind '" + kind + "'");
  f.kind = kind == "dense" ? gp::DriftField::Kind::dense : gp::DriftField::Kind::sparse;
  f.kernel.lengthscales = parse_vector(need("lengthscales"), "lengthscales");
  f.kernel.signal_variance = parse_number(need("signal_variance"), "signal_variance");
  f.jitter = parse_number(need("jitter"), "jitter");
  f.sigma = parse_vector(need("sigma"), "sigma");
  f.dt = parse_number(need("dt"), "dt");
  f.centers = read_csv(dir / "centers.csv").data;
  f.coefficients = read_csv(dir / "coefficients.csv").data;
  const int d = f.kernel.dim();
  if (f.centers.cols() != d || f.coefficients.cols() != d ||
      f.centers.rows() != f.coefficients.rows())
    throw Error(dir.string() + ": inconsistent drift files");
  return f;
}

void write_geodesics(const fs::path& path, const geometry::GeodesicSchedule& schedule) {
  std::vector<Matrix> blocks;
  Eigen::Index rows = 0;
  int d = 0;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const Points& nodes = schedule.interval(k).curve.nodes;
    d = static_cast<int>(nodes.cols());
    Matrix b(nodes.rows(), 3 + d);
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
      b(i, 0) = static_cast<double>(k);
      b(i, 1) = static_cast<double>(i);
      b(i, 2) = static_cast<double>(i) / static_cast<double>(nodes.rows() - 1);
    }
    b.rightCols(d) = nodes;
    rows += b.rows();
    blocks.push_back(std::move(b));
  }
  Matrix all(rows, 3 + d);
  Eigen::Index r = 0;
  for (auto& b : blocks) {
    all.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  std::vector<std::string> h{"interval", "k", "t_prime"};
  for (int j = 1; j <= d; ++j) h.push_back("x" + std::to_string(j));
  write_csv(path, h, all);
}

void write_bridge(const fs::path& states_path, const fs::path& drifts_path,
                  const bridge::BridgeSegment& seg) {
  const Eigen::Index S = seg.samples(), n = seg.steps();
  const int d = seg.dim();
  Matrix xs(S * (n + 1), 2 + d), gs(S * n, 2 + d);
  for (Eigen::Index j = 0; j < S; ++j) {
    for (Eigen::Index i = 0; i <= n; ++i) {
      const Eigen::Index r = j * (n + 1) + i;
      xs(r, 0) = static_cast<double>(j);
      xs(r, 1) = seg.times(i);
      xs.row(r).tail(d) = seg.states[i].row(j);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = j * n + i;
      gs(r, 0) = static_cast<double>(j);
      gs(r, 1) = seg.times(i);
      gs.row(r).tail(d) = seg.drifts[i].row(j);
    }
  }
  auto hs = state_header("sample", d);
  auto hg = state_header("sample", d, "g");
  hs.insert(hs.begin() + 1, "t");
  hg.insert(hg.begin() + 1, "t");
  write_csv(states_path, hs, xs);
  write_csv(drifts_path, hg, gs);
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

// Tracks which keys were read so leftovers can be reported as unknown.
class Reader {
 public:
  explicit Reader(const pt::ptree& root) : root_(root) {
    static const std::set<std::string> sections{"system", "kernel", "em", "geometry", "eval",
                                                "data", "output", "sweep", "comparison"};
    for (const auto& [name, sec] : root_) {
      if (sec.empty() && !sec.data().empty())
        throw ConfigError("key '" + name + "' outside of any section");
      if (!sections.count(name)) throw ConfigError("unknown section [" + name + "]");
    }
  }

  bool has_section(const std::string& s) const { return root_.find(s) != root_.not_found(); }

  std::optional<std::string> get(const std::string& sec, const std::string& key) {
    used_.insert(sec + "." + key);
    auto s = root_.find(sec);
    if (s == root_.not_found()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.not_found()) return std::nullopt;
    return trim(k->second.data());
  }

  void number(const std::string& sec, const std::string& key, double& out) {
    if (auto v = get(sec, key)) out = parse_number(*v, name(sec, key));
  }
  template <class Int>
  void integer(const std::string& sec, const std::string& key, Int& out) {
    if (auto v = get(sec, key)) out = parse_int<Int>(*v, name(sec, key));
  }
  void boolean(const std::string& sec, const std::string& key, bool& out) {
    if (auto v = get(sec, key)) {
      if (*v == "true" || *v == "1") out = true;
      else if (*v == "false" || *v == "0") out = false;
      else throw ConfigError(name(sec, key) + ": expected true or false, got '" + *v + "'");
    }
  }
  // "auto" or empty leaves the optional unset.
  void optional_number(const std::string& sec, const std::string& key,
                       std::optional<double>& out) {
    if (auto v = get(sec, key)) {
      if (v->empty() || *v == "auto") out.reset();
      else out = parse_number(*v, name(sec, key));
    }
  }
  void vector(const std::string& sec, const std::string& key, Vector& out) {
    if (auto v = get(sec, key)) out = parse_vector(*v, name(sec, key));
  }
  template <class T, class F>
  void list(const std::string& sec, const std::string& key, std::vector<T>& out, F conv) {
    if (auto v = get(sec, key)) {
      out.clear();
      if (v->empty()) return;
      for (const auto& item : split(*v, ',')) out.push_back(conv(item, name(sec, key)));
    }
  }

  void check_unused() const {
    for (const auto& [sec, tree] : root_)
      for (const auto& [key, val] : tree)
        if (!used_.count(sec + "." + key))
          throw ConfigError("unknown key '" + key + "' in [" + sec + "]");
  }

  static std::string name(const std::string& sec, const std::string& key) {
    return sec + "." + key;
  }

 private:
  const pt::ptree& root_;
  std::set<std::string> used_;
};

std::string direction_string(const std::optional<geometry::Direction>& d) {
  if (!d) return "auto";
  return *d == geometry::Direction::ccw ? "ccw" : "cw";
}

std::optional<geometry::Direction> parse_direction(const std::string& s,
                                                   const std::string& what) {
  if (s == "auto" || s.empty()) return std::nullopt;
  if (s == "ccw") return geometry::Direction::ccw;
  if (s == "cw") return geometry::Direction::cw;
  throw ConfigError(what + ": expected auto, ccw or cw, got '" + s + "'");
}

std::string short_join(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + short_number(v(i));
  return s;
}

template <class T, class F>
std::string join_list(const std::vector<T>& v, F f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + f(v[i]);
  return s;
}

// Wraps errors from the module validators so they surface as config errors.
template <class F>
void check(F f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidParameter& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  const auto& s = system;
  if (!(s.mu > 0.0)) throw ConfigError("system.mu must be > 0");
  if (!(s.sigma > 0.0)) throw ConfigError("system.sigma must be > 0");
  if (!(s.dt > 0.0)) throw ConfigError("system.dt must be > 0");
  if (!(s.T > 0.0)) throw ConfigError("system.T must be > 0");
  if (s.T / s.dt > 1e9) throw ConfigError("system.T / system.dt is too large");
  if (s.x0.size() != 2) throw ConfigError("system.x0 must have two entries");
  if (!s.x0.allFinite()) throw ConfigError("system.x0 must be finite");
  if (s.tau_steps < 1) throw ConfigError("system.tau_steps must be >= 1");
  if (static_cast<double>(s.tau_steps) * s.dt > s.T)
    throw ConfigError("system.tau_steps * system.dt exceeds system.T");
  if (kernel.lengthscales.size() != 2)
    throw ConfigError("kernel.lengthscale needs one or two entries");
  check([&] { kernel.validate(2); });
  check([&] { em_config().validate(2); });
  if (em.metric.sigma_m && !(*em.metric.sigma_m > 0.0))
    throw ConfigError("geometry.sigma_m must be > 0");
  if (!(em.metric.epsilon > 0.0)) throw ConfigError("geometry.epsilon must be > 0");
  if (em.metric.n_nodes < 3) throw ConfigError("geometry.n_nodes must be >= 3");
  if (em.metric.solver.max_iterations < 1)
    throw ConfigError("geometry.max_iterations must be >= 1");
  if (!(em.metric.solver.relative_tolerance > 0.0))
    throw ConfigError("geometry.relative_tolerance must be > 0");
  if (em.metric.solver.graph_neighbours < 1)
    throw ConfigError("geometry.graph_neighbours must be >= 1");
  if (!(em.metric.solver.graph_switch_ratio >= 1.0))
    throw ConfigError("geometry.graph_switch_ratio must be >= 1");
  if (eval.grid_n < 2) throw ConfigError("eval.grid_n must be >= 2");
  if (!(eval.grid_pad >= 0.0)) throw ConfigError("eval.grid_pad must be >= 0");
  if (eval.bandwidth && !(*eval.bandwidth > 0.0))
    throw ConfigError("eval.bandwidth must be > 0");
  if (output.dir.empty()) throw ConfigError("output.dir must not be empty");
  if (output.max_bridge_rows < 0) throw ConfigError("output.max_bridge_rows must be >= 0");
  const auto& c = comparison;
  if (c.interval && *c.interval < 0) throw ConfigError("comparison.interval must be >= 0");
  if (!(c.beta >= 0.0)) throw ConfigError("comparison.beta must be >= 0");
  if (c.samples < 1) throw ConfigError("comparison.samples must be >= 1");
  if (c.n_slices < 1) throw ConfigError("comparison.n_slices must be >= 1");
  if (c.n_projections < 1) throw ConfigError("comparison.n_projections must be >= 1");
  if (!(c.reference_tolerance > 0.0))
    throw ConfigError("comparison.reference_tolerance must be > 0");
  if (sweep) check([&] { scenario_spec(*this).validate(); });
}

em::EMConfig RunConfig::em_config() const {
  em::EMConfig c = em;
  c.kernel = kernel;
  c.sigma = Vector::Constant(2, system.sigma);
  return c;
}

sde::SdeSystem RunConfig::system_model() const {
  return sde::SdeSystem(2, sde::van_der_pol_drift(system.mu),
                        Vector::Constant(2, system.sigma));
}

RunConfig parse_config(std::istream& in) {
  // '#' comments are accepted next to the ';' comments of the INI reader.
  std::ostringstream text;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    text << (t.rfind('#', 0) == 0 ? ";" + t : line) << '\n';
  }
  pt::ptree tree;
  try {
    std::istringstream is(text.str());
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  Reader r(tree);
  RunConfig c;
  auto& s = c.system;
  r.number("system", "mu", s.mu);
  r.number("system", "sigma", s.sigma);
  r.number("system", "dt", s.dt);
  r.number("system", "T", s.T);
  r.vector("system", "x0", s.x0);
  r.integer("system", "tau_steps", s.tau_steps);
  r.integer("system", "seed", s.seed);

  Vector ls = c.kernel.lengthscales;
  r.vector("kernel", "lengthscale", ls);
  if (ls.size() == 1) ls = Vector::Constant(2, ls(0));
  c.kernel.lengthscales = ls;
  r.number("kernel", "signal_variance", c.kernel.signal_variance);

  auto& e = c.em;
  r.integer("em", "max_iterations", e.max_iterations);
  if (auto v = r.get("em", "augmentation")) check([&] {
      e.augmentation = em::augmentation_from_string(*v);
    });
  r.number("em", "beta", e.beta);
  r.integer("em", "particles", e.particles);
  r.integer("em", "score_inducing", e.score_inducing);
  r.integer("em", "mstep_inducing", e.mstep_inducing);
  r.integer("em", "bridge_samples", e.bridge_samples);
  r.optional_number("em", "dt_control", e.dt_control);
  r.number("em", "endpoint_tolerance", e.endpoint_tolerance);
  r.number("em", "max_miss_rate", e.max_miss_rate);
  r.integer("em", "max_mstep_points", e.max_mstep_points);
  if (auto v = r.get("em", "dynamics")) {
    if (*v == "deterministic") e.dynamics = bridge::FlowDynamics::deterministic;
    else if (*v == "stochastic") e.dynamics = bridge::FlowDynamics::stochastic;
    else throw ConfigError("em.dynamics: expected deterministic or stochastic, got '" + *v + "'");
  }
  r.integer("em", "backward_substeps", e.backward_substeps);
  r.integer("em", "seed", e.seed);

  auto& m = e.metric;
  r.optional_number("geometry", "sigma_m", m.sigma_m);
  r.number("geometry", "epsilon", m.epsilon);
  r.integer("geometry", "n_nodes", m.n_nodes);
  r.integer("geometry", "max_iterations", m.solver.max_iterations);
  r.number("geometry", "relative_tolerance", m.solver.relative_tolerance);
  r.integer("geometry", "graph_neighbours", m.solver.graph_neighbours);
  r.number("geometry", "graph_switch_ratio", m.solver.graph_switch_ratio);
  if (auto v = r.get("geometry", "direction"))
    e.direction = parse_direction(*v, "geometry.direction");

  r.integer("eval", "grid_n", c.eval.grid_n);
  r.number("eval", "grid_pad", c.eval.grid_pad);
  r.optional_number("eval", "bandwidth", c.eval.bandwidth);

  if (auto v = r.get("data", "observations")) {
    if (v->empty()) c.data.observations.reset();
    else c.data.observations = *v;
  }

  if (auto v = r.get("output", "dir")) c.output.dir = *v;
  r.boolean("output", "write_bridges", c.output.write_bridges);
  r.integer("output", "max_bridge_rows", c.output.max_bridge_rows);

  if (r.has_section("sweep")) {
    SweepConfig w;
    if (auto v = r.get("sweep", "id")) w.id = *v;
    auto num = [](const std::string& x, const std::string& what) { return parse_number(x, what); };
    r.list("sweep", "sigmas", w.sigmas, num);
    r.list("sweep", "tau_steps", w.tau_steps, parse_int<int>);
    r.list("sweep", "durations", w.durations, num);
    r.list("sweep", "seeds", w.seeds, parse_int<std::uint64_t>);
    r.list("sweep", "methods", w.methods, [](const std::string& x, const std::string& what) {
      try {
        return eval::method_from_string(x);
      } catch (const InvalidParameter& err) {
        throw ConfigError(what + ": " + err.what());
      }
    });
    c.sweep = w;
  }

  auto& k = c.comparison;
  if (auto v = r.get("comparison", "interval")) {
    if (v->empty() || *v == "auto") k.interval.reset();
    else k.interval = parse_int<long>(*v, "comparison.interval");
  }
  r.number("comparison", "beta", k.beta);
  r.integer("comparison", "samples", k.samples);
  r.integer("comparison", "n_slices", k.n_slices);
  r.integer("comparison", "n_projections", k.n_projections);
  r.number("comparison", "reference_tolerance", k.reference_tolerance);

  r.check_unused();
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config " + path.string());
  return parse_config(is);
}

void write_config(std::ostream& o, const RunConfig& c) {
  auto opt = [](const std::optional<double>& v) { return v ? short_number(*v) : "auto"; };
  const auto& s = c.system;
  o << "[system]\n"
    << "mu = " << short_number(s.mu) << '\n'
    << "sigma = " << short_number(s.sigma) << '\n'
    << "dt = " << short_number(s.dt) << '\n'
    << "T = " << short_number(s.T) << '\n'
    << "x0 = " << short_join(s.x0) << '\n'
    << "tau_steps = " << s.tau_steps << '\n'
    << "seed = " << s.seed << "\n\n";
  o << "[kernel]\n"
    << "lengthscale = " << short_join(c.kernel.lengthscales) << '\n'
    << "signal_variance = " << short_number(c.kernel.signal_variance) << "\n\n";
  const auto& e = c.em;
  o << "[em]\n"
    << "max_iterations = " << e.max_iterations << '\n'
    << "augmentation = " << em::to_string(e.augmentation) << '\n'
    << "beta = " << short_number(e.beta) << '\n'
    << "particles = " << e.particles << '\n'
    << "score_inducing = " << e.score_inducing << '\n'
    << "mstep_inducing = " << e.mstep_inducing << '\n'
    << "bridge_samples = " << e.bridge_samples << '\n'
    << "dt_control = " << opt(e.dt_control) << '\n'
    << "endpoint_tolerance = " << short_number(e.endpoint_tolerance) << '\n'
    << "max_miss_rate = " << short_number(e.max_miss_rate) << '\n'
    << "max_mstep_points = " << e.max_mstep_points << '\n'
    << "dynamics = "
    << (e.dynamics == bridge::FlowDynamics::deterministic ? "deterministic" : "stochastic")
    << '\n'
    << "backward_substeps = " << e.backward_substeps << '\n'
    << "seed = " << e.seed << "\n\n";
  const auto& m = e.metric;
  o << "[geometry]\n"
    << "sigma_m = " << opt(m.sigma_m) << '\n'
    << "epsilon = " << short_number(m.epsilon) << '\n'
    << "n_nodes = " << m.n_nodes << '\n'
    << "max_iterations = " << m.solver.max_iterations << '\n'
    << "relative_tolerance = " << short_number(m.solver.relative_tolerance) << '\n'
    << "graph_neighbours = " << m.solver.graph_neighbours << '\n'
    << "graph_switch_ratio = " << short_number(m.solver.graph_switch_ratio) << '\n'
    << "direction = " << direction_string(e.direction) << "\n\n";
  o << "[eval]\n"
    << "grid_n = " << c.eval.grid_n << '\n'
    << "grid_pad = " << short_number(c.eval.grid_pad) << '\n'
    << "bandwidth = " << opt(c.eval.bandwidth) << "\n\n";
  o << "[data]\n"
    << "observations = " << c.data.observations.value_or("") << "\n\n";
  o << "[output]\n"
    << "dir = " << c.output.dir << '\n'
    << "write_bridges = " << (c.output.write_bridges ? "true" : "false") << '\n'
    << "max_bridge_rows = " << c.output.max_bridge_rows << "\n\n";
  if (c.sweep) {
    const auto& w = *c.sweep;
    auto num = [](double v) { return short_number(v); };
    auto str = [](auto v) { return std::to_string(v); };
    o << "[sweep]\n"
      << "id = " << w.id << '\n'
      << "sigmas = " << join_list(w.sigmas, num) << '\n'
      << "tau_steps = " << join_list(w.tau_steps, str) << '\n'
      << "durations = " << join_list(w.durations, num) << '\n'
      << "seeds = " << join_list(w.seeds, str) << '\n'
      << "methods = "
      << join_list(w.methods, [](eval::Method x) { return std::string(eval::to_string(x)); })
      << "\n\n";
  }
  const auto& k = c.comparison;
  o << "[comparison]\n"
    << "interval = " << (k.interval ? std::to_string(*k.interval) : "auto") << '\n'
    << "beta = " << short_number(k.beta) << '\n'
    << "samples = " << k.samples << '\n'
    << "n_slices = " << k.n_slices << '\n'
    << "n_projections = " << k.n_projections << '\n'
    << "reference_tolerance = " << short_number(k.reference_tolerance) << '\n';
}

std::string config_string(const RunConfig& cfg) {
  std::ostringstream os;
  write_config(os, cfg);
  return os.str();
}

eval::ScenarioSpec scenario_spec(const RunConfig& cfg) {
  if (!cfg.sweep) throw ConfigError("config has no [sweep] section");
  const auto& w = *cfg.sweep;
  eval::ScenarioSpec s;
  s.id = w.id;
  s.mu = cfg.system.mu;
  s.dt = cfg.system.dt;
  s.x0 = cfg.system.x0;
  s.sigmas = w.sigmas;
  s.tau_steps = w.tau_steps;
  s.durations = w.durations;
  s.seeds = w.seeds;
  s.methods = w.methods;
  s.em = cfg.em_config();
  s.grid_n = cfg.eval.grid_n;
  s.grid_pad = cfg.eval.grid_pad;
  return s;
}

eval::BridgeComparisonSpec comparison_spec(const RunConfig& cfg) {
  eval::BridgeComparisonSpec s;
  s.mu = cfg.system.mu;
  s.sigma = cfg.system.sigma;
  s.dt = cfg.system.dt;
  s.tau_steps = cfg.system.tau_steps;
  s.T = cfg.system.T;
  s.x0 = cfg.system.x0;
  s.interval = cfg.comparison.interval;
  s.beta = cfg.comparison.beta;
  s.kernel = cfg.kernel;
  s.particles = cfg.em.particles;
  s.score_inducing = cfg.em.score_inducing;
  s.samples = cfg.comparison.samples;
  s.n_slices = cfg.comparison.n_slices;
  s.n_projections = cfg.comparison.n_projections;
  s.metric = cfg.em.metric;
  s.direction = cfg.em.direction;
  s.reference.tolerance = cfg.comparison.reference_tolerance;
  s.seed = cfg.system.seed;
  return s;
}

// ---------------------------------------------------------------------------

std::string Manifest::to_string() const {
  std::ostringstream os;
  os << "command = " << command << '\n' << "version = " << version << '\n';
  for (const auto& [k, v] : entries) os << k << " = " << v << '\n';
  os << "outputs = " << outputs.size() << '\n';
  for (const auto& f : outputs) os << "output = " << f << '\n';
  os << "failures = " << failures.size() << '\n';
  for (const auto& f : failures) os << "failure = " << f << '\n';
  os << "\n# config snapshot\n" << config;
  return os.str();
}

void write_manifest(const fs::path& dir, const Manifest& m) {
  std::ostringstream t;
  for (const auto& [k, v] : m.timings) t << k << " = " << format_number(v) << '\n';
  write_file_atomic(dir / "timings.txt", t.str());
  write_file_atomic(dir / "manifest.txt", m.to_string());
}

}  // namespace geopath::io
