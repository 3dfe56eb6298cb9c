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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "geopath/em.hpp"
#include "geopath/eval.hpp"
#include "geopath/gp_drift.hpp"
#include "geopath/sde.hpp"

namespace geopath::io {

namespace fs = std::filesystem;

/// 17 significant digits, '.' decimal point, independent of the locale.
std::string format_number(double v);

/// Parses a full string as a double; throws ConfigError naming `what`.
double parse_number(const std::string& s, const std::string& what);

struct CsvTable {
  std::vector<std::string> header;
  Matrix data;

  Eigen::Index column(const std::string& name) const;  // throws if missing
};

/// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const fs::path& path, const std::string& contents);

std::string csv_string(const std::vector<std::string>& header, const Matrix& rows);
void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const Matrix& rows);
/// Numeric CSV with one header line. Throws Error on malformed input.
CsvTable read_csv(const fs::path& path);

/// `t,x1..xd`.
void write_trajectory(const fs::path& path, const sde::Trajectory& traj);
void write_observations(const fs::path& path, const sde::ObservationSet& obs);
/// Reads `t,x1..xd`; the spacing of t must be tau_steps * dt.
sde::ObservationSet read_observations(const fs::path& path, double dt, int tau_steps);

/// `centers.csv`, `coefficients.csv`, `drift_meta.txt` inside `dir`.
void save_drift(const fs::path& dir, const gp::DriftField& field);
gp::DriftField load_drift(const fs::path& dir);

/// `interval,k,t_prime,x1..xd`, one row per geodesic node.
void write_geodesics(const fs::path& path, const geometry::GeodesicSchedule& schedule);

/// Bridge states `sample,t,x1..` and effective drifts `sample,t,g1..`.
void write_bridge(const fs::path& states_path, const fs::path& drifts_path,
                  const bridge::BridgeSegment& segment);

// ---------------------------------------------------------------------------
// Run configuration

struct SystemConfig {
  double mu = 2.0;
  double sigma = 0.25;
  double dt = 0.01;
  double T = 500.0;
  Vector x0 = (Vector(2) << 1.81, -1.41).finished();
  int tau_steps = 80;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  int grid_n = 30;
  double grid_pad = 0.1;
  std::optional<double> bandwidth;  // Silverman when unset
};

struct DataConfig {
  std::optional<std::string> observations;  // CSV; simulated when unset
};

struct OutputConfig {
  std::string dir = "runs/default";
  bool write_bridges = false;
  /// Bridge files are skipped for an iteration whose total row count would
  /// exceed this.
  long max_bridge_rows = 200000;
};

struct SweepConfig {
  std::string id = "sweep";
  std::vector<double> sigmas;
  std::vector<int> tau_steps;
  std::vector<double> durations;
  std::vector<std::uint64_t> seeds;
  std::vector<eval::Method> methods;
};

struct ComparisonConfig {
  std::optional<long> interval;
  double beta = 1.0;
  int samples = 500;
  int n_slices = 7;
  int n_projections = 32;
  double reference_tolerance = 0.1;
};

struct RunConfig {
  SystemConfig system;
  KernelSpec kernel = KernelSpec::isotropic(2, 1.5, 10.0);
  em::EMConfig em;  // sigma and kernel are taken from [system] and [kernel]
  EvalConfig eval;
  DataConfig data;
  OutputConfig output;
  std::optional<SweepConfig> sweep;
  ComparisonConfig comparison;

  /// Range checks; throws ConfigError naming the offending key.
  void validate() const;
  /// EM settings with sigma, kernel, geometry and seed filled in.
  em::EMConfig em_config() const;
  sde::SdeSystem system_model() const;
};

/// Sections [system] [kernel] [em] [geometry] [eval] [data] [output] [sweep]
/// [comparison]; unknown sections or keys are rejected.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const fs::path& path);
/// Every key, in a form parse_config reads back to an identical config.
void write_config(std::ostream& out, const RunConfig& cfg);
std::string config_string(const RunConfig& cfg);

eval::ScenarioSpec scenario_spec(const RunConfig& cfg);
eval::BridgeComparisonSpec comparison_spec(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Run manifest

struct Manifest {
  std::string command;
  std::string version;
  std::string config;  // serialized config snapshot
  std::vector<std::pair<std::string, std::string>> entries;  // ordered
  std::vector<std::string> outputs;
  std::vector<std::string> failures;
  /// Wall-clock timings live apart from everything else so the rest of the
  /// file is reproducible.
  std::vector<std::pair<std::string, double>> timings;

  std::string to_string() const;
};

/// `manifest.txt` (atomic) plus `timings.txt`.
void write_manifest(const fs::path& dir, const Manifest& m);

/// Version string compiled into the tools.
const char* version();

}  // namespace geopath::io
