// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "phred/basis.hpp"
#include "phred/bounds.hpp"
#include "phred/deim.hpp"
#include "phred/integrate.hpp"
#include "phred/models.hpp"
#include "phred/reduce.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace phred {

struct InputSpec {
  std::string name;           // label used in output tables
  std::string type = "const"; // const | sine | gaussian
  double value = 0.1;
  double amplitude = 0.1;
  double omega = 1.0;
  double phase = 0.0;
  GaussianPulse pulse;
  Index port = 0;
};

enum class Method { Pod, H2eps, Hybrid, PodDeim, H2epsDeim };
const char* to_string(Method m);
Method parse_method(const std::string& s);
bool is_deim(Method m);

struct RunConfig {
  std::string model = "ladder";
  LadderParams ladder;
  TodaParams toda;

  InputSpec training;
  std::vector<InputSpec> tests;

  TimeSpan span{0.0, 3.0};
  IntegratorConfig integrator;

  Method method = Method::Pod;
  Index r = 6;
  Index r_pod = 0;
  Index r_h2 = 0;
  Index m = 0;
  Index stride = 1;
  std::string metric = "hessian";  // identity | hessian
  H2Options h2;

  bool timing = true;
  int timing_repeats = 5;
  bool write_states = true;
  std::string basis_dir;

  BoundOptions bounds;

  std::vector<Method> sweep_methods;
  std::vector<Index> sweep_r;
  std::vector<Index> sweep_m;
  std::vector<std::pair<Index, Index>> sweep_splits;

  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Parses a JSON document; every problem is reported as Error(Config).
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
/// Method-specific checks (m for DEIM methods, r_pod + r_h2 = r for hybrid).
void validate_config(const RunConfig& cfg);

NlphSystem build_model(const RunConfig& cfg);
InputFn build_input(const InputSpec& spec, Index ports);

struct ReductionOutcome {
  ReducedSystem reduced;
  ReductionBasis basis;
  std::optional<DeimModel> deim;
  std::optional<HamiltonianSplit> split;
  std::optional<IterationLog> h2_log;
  StructureReport structure;
};

/// Builds the reduced model selected by cfg.method (and cfg.r / cfg.m).
/// Errors are re-raised with the failing stage attached.
ReductionOutcome run_reduction(const RunConfig& cfg, const NlphSystem& sys,
                               const SnapshotSet& snapshots);

/// Metric used for state errors and bounds.
WeightedMetric make_metric(const RunConfig& cfg, const NlphSystem& sys);

/// Full-precision, locale-independent scientific formatting.
std::string format_number(double v);

void cmd_simulate(const RunConfig& cfg);
void cmd_reduce(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_bounds(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg);

/// Writes/reads a dense matrix as CSV with full precision.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& M);
Matrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace phred
