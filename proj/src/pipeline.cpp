// SPDX-License-Identifier: Apache-2.0
#include "phred/pipeline.hpp"

#include "phred/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

namespace phred {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(Method m) {
  switch (m) {
    case Method::Pod: return "pod";
    case Method::H2eps: return "h2eps";
    case Method::Hybrid: return "hybrid";
    case Method::PodDeim: return "pod-deim";
    case Method::H2epsDeim: return "h2eps-deim";
  }
  return "pod";
}

Method parse_method(const std::string& s) {
  if (s == "pod") return Method::Pod;
  if (s == "h2eps") return Method::H2eps;
  if (s == "hybrid") return Method::Hybrid;
  if (s == "pod-deim") return Method::PodDeim;
  if (s == "h2eps-deim") return Method::H2epsDeim;
  throw Error(ErrorCode::Config, fmt::format("unknown method '{}'", s));
}

bool is_deim(Method m) { return m == Method::PodDeim || m == Method::H2epsDeim; }

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, fmt::format("{}.{}: {}", where, key, e.what()));
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::Config, fmt::format("{} must be an object", where));
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw Error(ErrorCode::Config, fmt::format("unknown key {}.{}", where, it.key()));
  }
}

InputSpec parse_input(const json& j, const std::string& where, const std::string& default_name) {
  InputSpec in;
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    in.name = name;
    if (name == "const_0p1") {
      in.type = "const";
      in.value = 0.1;
    } else if (name == "sin_0p1") {
      in.type = "sine";
      in.amplitude = 0.1;
      in.omega = 1.0;
    } else if (name == "gaussian") {
      in.type = "gaussian";
    } else if (name == "sinusoid_ladder") {
      in.type = "sine";
      in.amplitude = 1.0;
      in.omega = 2.0;
    } else {
      throw Error(ErrorCode::Config, fmt::format("{}: unknown standard input '{}'", where, name));
    }
    return in;
  }
  reject_unknown(j,
                 {"name", "type", "value", "amplitude", "omega", "phase", "magnitude", "sigma",
                  "center", "window", "port"},
                 where);
  in.type = get_or<std::string>(j, "type", "const", where);
  in.name = get_or<std::string>(j, "name", default_name.empty() ? in.type : default_name, where);
  in.value = get_or(j, "value", in.value, where);
  in.amplitude = get_or(j, "amplitude", in.amplitude, where);
  in.omega = get_or(j, "omega", in.omega, where);
  in.phase = get_or(j, "phase", in.phase, where);
  in.pulse.magnitude = get_or(j, "magnitude", in.pulse.magnitude, where);
  in.pulse.sigma = get_or(j, "sigma", in.pulse.sigma, where);
  in.pulse.window = get_or(j, "window", in.pulse.window, where);
  in.pulse.center = get_or(j, "center", 0.5 * in.pulse.window, where);
  in.port = get_or<Index>(j, "port", 0, where);
  if (in.type != "const" && in.type != "sine" && in.type != "gaussian")
    throw Error(ErrorCode::Config, fmt::format("{}: unknown input type '{}'", where, in.type));
  if (in.type == "gaussian" && !(in.pulse.sigma > 0.0))
    throw Error(ErrorCode::Config, fmt::format("{}: sigma must be positive", where));
  return in;
}

LipschitzMethod parse_lipschitz(const std::string& s) {
  if (s == "sampled-pairs") return LipschitzMethod::SampledPairs;
  if (s == "hessian-sup") return LipschitzMethod::HessianSup;
  if (s == "exact-linear") return LipschitzMethod::ExactLinear;
  throw Error(ErrorCode::Config, fmt::format("unknown Lipschitz method '{}'", s));
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Config, fmt::format("config is not valid JSON: {}", e.what()));
  }
  reject_unknown(root,
                 {"model", "time", "inputs", "reduction", "h2", "timing", "bounds", "sweep",
                  "output", "seed", "out", "threads", "basis_dir"},
                 "config");
  RunConfig cfg;

  if (root.contains("model")) {
    const json& m = root["model"];
    reject_unknown(m, {"type", "stages", "L0", "C0", "V0", "R0", "G0", "particles", "damping"},
                   "model");
    cfg.model = get_or<std::string>(m, "type", "ladder", "model");
    cfg.ladder.stages = get_or(m, "stages", cfg.ladder.stages, "model");
    cfg.ladder.L0 = get_or(m, "L0", cfg.ladder.L0, "model");
    cfg.ladder.C0 = get_or(m, "C0", cfg.ladder.C0, "model");
    cfg.ladder.V0 = get_or(m, "V0", cfg.ladder.V0, "model");
    cfg.ladder.R0 = get_or(m, "R0", cfg.ladder.R0, "model");
    cfg.ladder.G0 = get_or(m, "G0", cfg.ladder.G0, "model");
    cfg.toda.particles = get_or(m, "particles", cfg.toda.particles, "model");
    if (m.contains("damping")) {
      if (m["damping"].is_number())
        cfg.toda.damping.assign(cfg.toda.particles, m["damping"].get<double>());
      else
        cfg.toda.damping = get_or<std::vector<double>>(m, "damping", {}, "model");
    }
  }
  if (cfg.model != "ladder" && cfg.model != "toda")
    throw Error(ErrorCode::Config, fmt::format("unknown model '{}'", cfg.model));

  // Model-dependent defaults.
  if (cfg.model == "ladder") {
    cfg.training = parse_input(json("gaussian"), "inputs.training", "");
    cfg.tests = {parse_input(json("sinusoid_ladder"), "inputs.test", "")};
    cfg.span = {0.0, 3.0};
    cfg.integrator.dt = 0.005;
  } else {
    cfg.training = parse_input(json("const_0p1"), "inputs.training", "");
    cfg.tests = {parse_input(json("sin_0p1"), "inputs.test", "")};
    cfg.span = {0.0, 50.0};
    cfg.integrator.dt = 0.1;
  }

  if (root.contains("time")) {
    const json& t = root["time"];
    reject_unknown(t, {"t0", "t1", "dt", "scheme", "newton_tol", "newton_max_iter"}, "time");
    cfg.span.t0 = get_or(t, "t0", cfg.span.t0, "time");
    cfg.span.t1 = get_or(t, "t1", cfg.span.t1, "time");
    cfg.integrator.dt = get_or(t, "dt", cfg.integrator.dt, "time");
    const auto scheme = get_or<std::string>(t, "scheme", "midpoint", "time");
    if (scheme == "midpoint" || scheme == "implicit-midpoint")
      cfg.integrator.scheme = Scheme::ImplicitMidpoint;
    else if (scheme == "rk4")
      cfg.integrator.scheme = Scheme::Rk4;
    else
      throw Error(ErrorCode::Config, fmt::format("unknown scheme '{}'", scheme));
    cfg.integrator.newton_tol = get_or(t, "newton_tol", cfg.integrator.newton_tol, "time");
    cfg.integrator.newton_max_iter =
        get_or(t, "newton_max_iter", cfg.integrator.newton_max_iter, "time");
  }

  if (root.contains("inputs")) {
    const json& in = root["inputs"];
    reject_unknown(in, {"training", "test"}, "inputs");
    if (in.contains("training")) cfg.training = parse_input(in["training"], "inputs.training", "");
    if (in.contains("test")) {
      cfg.tests.clear();
      const json& t = in["test"];
      if (t.is_array()) {
        for (std::size_t i = 0; i < t.size(); ++i)
          cfg.tests.push_back(parse_input(t[i], fmt::format("inputs.test[{}]", i), ""));
      } else {
        cfg.tests.push_back(parse_input(t, "inputs.test", ""));
      }
    }
  }
  if (cfg.training.name.empty()) cfg.training.name = "training";

  if (root.contains("reduction")) {
    const json& r = root["reduction"];
    reject_unknown(r, {"method", "r", "r_pod", "r_h2", "m", "stride", "metric"}, "reduction");
    cfg.method = parse_method(get_or<std::string>(r, "method", "pod", "reduction"));
    cfg.r = get_or<Index>(r, "r", cfg.r, "reduction");
    cfg.r_pod = get_or<Index>(r, "r_pod", 0, "reduction");
    cfg.r_h2 = get_or<Index>(r, "r_h2", 0, "reduction");
    cfg.m = get_or<Index>(r, "m", 0, "reduction");
    cfg.stride = get_or<Index>(r, "stride", 1, "reduction");
    cfg.metric = get_or<std::string>(r, "metric", "hessian", "reduction");
  }
  if (root.contains("h2")) {
    const json& h = root["h2"];
    reject_unknown(h, {"max_iter", "shift_tol"}, "h2");
    cfg.h2.max_iter = get_or(h, "max_iter", cfg.h2.max_iter, "h2");
    cfg.h2.shift_tol = get_or(h, "shift_tol", cfg.h2.shift_tol, "h2");
  }
  if (root.contains("timing")) {
    const json& t = root["timing"];
    reject_unknown(t, {"enabled", "repeats"}, "timing");
    cfg.timing = get_or(t, "enabled", cfg.timing, "timing");
    cfg.timing_repeats = get_or(t, "repeats", cfg.timing_repeats, "timing");
  }
  if (root.contains("bounds")) {
    const json& b = root["bounds"];
    reject_unknown(b, {"method", "cloud_copies", "cloud_rel"}, "bounds");
    cfg.bounds.method = parse_lipschitz(get_or<std::string>(b, "method", "hessian-sup", "bounds"));
    cfg.bounds.cloud_copies = get_or(b, "cloud_copies", cfg.bounds.cloud_copies, "bounds");
    cfg.bounds.cloud_rel = get_or(b, "cloud_rel", cfg.bounds.cloud_rel, "bounds");
  }
  if (root.contains("sweep")) {
    const json& s = root["sweep"];
    reject_unknown(s, {"methods", "r", "m", "splits"}, "sweep");
    for (const auto& name : get_or<std::vector<std::string>>(s, "methods", {}, "sweep"))
      cfg.sweep_methods.push_back(parse_method(name));
    cfg.sweep_r = get_or<std::vector<Index>>(s, "r", {}, "sweep");
    cfg.sweep_m = get_or<std::vector<Index>>(s, "m", {}, "sweep");
    for (const auto& pr : get_or<std::vector<std::vector<Index>>>(s, "splits", {}, "sweep")) {
      if (pr.size() != 2)
        throw Error(ErrorCode::Config, "sweep.splits entries must be [r_pod, r_h2] pairs");
      cfg.sweep_splits.emplace_back(pr[0], pr[1]);
    }
  }
  if (root.contains("output")) {
    const json& o = root["output"];
    reject_unknown(o, {"states"}, "output");
    cfg.write_states = get_or(o, "states", cfg.write_states, "output");
  }
  cfg.seed = get_or<std::uint64_t>(root, "seed", cfg.seed, "config");
  cfg.out_dir = get_or<std::string>(root, "out", cfg.out_dir, "config");
  cfg.threads = get_or(root, "threads", cfg.threads, "config");
  cfg.basis_dir = get_or<std::string>(root, "basis_dir", cfg.basis_dir, "config");
  cfg.bounds.seed = cfg.seed;
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate_config(const RunConfig& cfg) {
  if (!(cfg.integrator.dt > 0.0)) throw Error(ErrorCode::Config, "time.dt must be positive");
  if (!(cfg.span.t1 > cfg.span.t0)) throw Error(ErrorCode::Config, "time.t1 must exceed time.t0");
  if (cfg.r < 1) throw Error(ErrorCode::Config, "reduction.r must be positive");
  if (cfg.stride < 1) throw Error(ErrorCode::Config, "reduction.stride must be positive");
  if (cfg.metric != "identity" && cfg.metric != "hessian")
    throw Error(ErrorCode::Config, fmt::format("unknown metric '{}'", cfg.metric));
  if (is_deim(cfg.method) && cfg.m < 1)
    throw Error(ErrorCode::Config,
                fmt::format("method {} requires reduction.m >= 1", to_string(cfg.method)));
  if (cfg.method == Method::Hybrid) {
    if (cfg.r_pod < 1 || cfg.r_h2 < 1)
      throw Error(ErrorCode::Config, "hybrid requires reduction.r_pod and reduction.r_h2 >= 1");
    if (cfg.r_pod + cfg.r_h2 != cfg.r)
      throw Error(ErrorCode::Config,
                  fmt::format("hybrid split r_pod + r_h2 = {} + {} does not equal r = {}",
                              cfg.r_pod, cfg.r_h2, cfg.r));
  }
  if (cfg.timing_repeats < 1) throw Error(ErrorCode::Config, "timing.repeats must be positive");
  if (cfg.threads < 1) throw Error(ErrorCode::Config, "threads must be positive");
}

NlphSystem build_model(const RunConfig& cfg) {
  if (cfg.model == "ladder") return ladder_network(cfg.ladder);
  return toda_lattice(cfg.toda);
}

InputFn build_input(const InputSpec& spec, Index ports) {
  SignalFn s;
  if (spec.type == "const")
    s = constant_signal(spec.value);
  else if (spec.type == "sine")
    s = sinusoid(spec.amplitude, spec.omega, spec.phase);
  else
    s = gaussian_pulse(spec.pulse);
  return on_port(std::move(s), ports, spec.port);
}

WeightedMetric make_metric(const RunConfig& cfg, const NlphSystem& sys) {
  if (cfg.metric == "identity") return WeightedMetric::identity(sys.dim());
  return linearize(sys).metric;
}

// ---------------------------------------------------------------------------
// Reduction

namespace {

template <class Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw e.with_stage(stage);
  }
}

SparseMatrix split_weight(const RunConfig& cfg, const NlphSystem& sys) {
  if (cfg.metric == "identity") {
    SparseMatrix I(sys.dim(), sys.dim());
    I.setIdentity();
    return I;
  }
  return linearize(sys).Q;
}

StructureReport reduced_structure(const ReducedSystem& red) {
  return validate_matrices(red.Jr(), red.Rr(), red.Br());
}

}  // namespace

ReductionOutcome run_reduction(const RunConfig& cfg, const NlphSystem& sys,
                               const SnapshotSet& snapshots) {
  validate_config(cfg);
  ReductionOutcome out;
  auto h2 = [&](Index r) {
    const LinearPhModel lin = staged("linearize", [&] { return linearize(sys); });
    H2Result res = staged("basis:h2eps", [&] { return h2eps_ph_bases(lin, r, cfg.h2); });
    out.h2_log = res.log;
    return res.basis;
  };
  switch (cfg.method) {
    case Method::Pod:
      out.basis = staged("basis:pod", [&] { return pod_ph_bases(snapshots, cfg.r); });
      break;
    case Method::H2eps:
      out.basis = h2(cfg.r);
      break;
    case Method::Hybrid: {
      const ReductionBasis pod = staged("basis:pod", [&] { return pod_ph_bases(snapshots, cfg.r_pod); });
      const ReductionBasis hb = h2(cfg.r_h2);
      out.basis = staged("basis:hybrid", [&] { return hybrid_bases(pod, hb); });
      break;
    }
    case Method::PodDeim: {
      HamiltonianSplit split = staged("split", [&] { return build_split(sys, split_weight(cfg, sys)); });
      DeimReduced d = staged("deim", [&] { return pod_deim_ph(sys, snapshots, cfg.r, cfg.m, split); });
      out.reduced = std::move(d.reduced);
      out.basis = std::move(d.basis);
      out.deim = std::move(d.model);
      out.split = std::move(split);
      break;
    }
    case Method::H2epsDeim: {
      HamiltonianSplit split = staged("split", [&] { return build_split(sys, split_weight(cfg, sys)); });
      out.basis = h2(cfg.r);
      out.basis = staged("basis:h2eps", [&] { return normalize_basis(out.basis, split.metric); });
      const Matrix G = snapshots.has_remainder()
                           ? snapshots.G
                           : Matrix(snapshots.F - split.metric.apply(snapshots.X));
      DeimModel model =
          staged("deim", [&] { return deim_basis_from_snapshots(G, cfg.m, split.metric); });
      out.reduced = staged("deim", [&] { return deim_reduce(sys, split, out.basis, model); });
      out.deim = std::move(model);
      out.split = std::move(split);
      break;
    }
  }
  if (!is_deim(cfg.method))
    out.reduced = staged("projection", [&] { return project_ph(sys, out.basis); });
  out.structure = reduced_structure(out.reduced);
  return out;
}

// ---------------------------------------------------------------------------
// Output helpers

std::string format_number(double v) { return fmt::format("{:.17e}", v); }

void write_matrix_csv(const fs::path& path, const Matrix& M) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
  std::string line;
  for (Index i = 0; i < M.rows(); ++i) {
    line.clear();
    for (Index j = 0; j < M.cols(); ++j) {
      if (j) line += ',';
      line += format_number(M(i, j));
    }
    line += '\n';
    out << line;
  }
}

Matrix read_matrix_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot read '{}'", path.string()));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorCode::Io, fmt::format("bad number '{}' in '{}'", cell, path.string()));
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(ErrorCode::Io, fmt::format("ragged rows in '{}'", path.string()));
    rows.push_back(std::move(row));
  }
  Matrix M(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
  for (Index i = 0; i < M.rows(); ++i)
    for (Index j = 0; j < M.cols(); ++j) M(i, j) = rows[i][j];
  return M;
}

namespace {

fs::path prepare_out(const RunConfig& cfg) {
  fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw Error(ErrorCode::Io, fmt::format("cannot create output directory '{}': {}",
                                           dir.string(), ec.message()));
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
  out << text;
}

json structure_json(const StructureReport& s, const ReductionBasis& b) {
  return json{{"pass", s.pass()},
              {"skew_defect", s.skew_defect},
              {"symmetry_defect", s.symmetry_defect},
              {"min_eig_R", s.min_eig_R},
              {"norm_R", s.norm_R},
              {"biorthogonality_defect", b.biorthogonality_defect()},
              {"sigma_min_WtV_before", b.sigma_min_before},
              {"r", b.rank()},
              {"provenance", to_string(b.provenance)},
              {"warnings", b.warnings}};
}

std::vector<InputSpec> all_inputs(const RunConfig& cfg) {
  std::vector<InputSpec> v{cfg.training};
  v.insert(v.end(), cfg.tests.begin(), cfg.tests.end());
  return v;
}

template <class Fn>
double median_time(int repeats, Fn&& fn) {
  fn();  // warm-up
  std::vector<double> t;
  for (int i = 0; i < repeats; ++i) {
    const auto a = std::chrono::steady_clock::now();
    fn();
    const auto b = std::chrono::steady_clock::now();
    t.push_back(std::chrono::duration<double>(b - a).count());
  }
  std::sort(t.begin(), t.end());
  const std::size_t n = t.size();
  return n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

struct Context {
  NlphSystem sys;
  WeightedMetric metric;
  Trajectory training;
  SnapshotSet snapshots;
};

Context make_context(const RunConfig& cfg) {
  Context c{build_model(cfg), {}, {}, {}};
  c.metric = staged("metric", [&] { return make_metric(cfg, c.sys); });
  const InputFn u = build_input(cfg.training, c.sys.ports());
  c.training = staged("simulate", [&] { return simulate(c.sys, u, cfg.span, cfg.integrator); });
  const WeightedMetric split = cfg.metric == "identity" ? WeightedMetric::identity(c.sys.dim())
                                                         : linearize(c.sys).metric;
  c.snapshots = staged("snapshots", [&] {
    return snapshots_from_trajectory(c.sys, c.training, cfg.stride, &split);
  });
  return c;
}

ReductionOutcome load_reduction(const RunConfig& cfg, const NlphSystem& sys) {
  const fs::path dir(cfg.basis_dir);
  ReductionOutcome out;
  out.basis.V = read_matrix_csv(dir / "V.csv");
  out.basis.W = read_matrix_csv(dir / "W.csv");
  if (out.basis.V.rows() != sys.dim() || out.basis.W.rows() != sys.dim() ||
      out.basis.V.cols() != out.basis.W.cols())
    throw Error(ErrorCode::Config, "stored basis does not match the configured model");
  switch (cfg.method) {
    case Method::Pod:
    case Method::PodDeim: out.basis.provenance = Provenance::Pod; break;
    case Method::H2eps:
    case Method::H2epsDeim: out.basis.provenance = Provenance::H2eps; break;
    case Method::Hybrid: out.basis.provenance = Provenance::Hybrid; break;
  }
  if (is_deim(cfg.method)) {
    HamiltonianSplit split = build_split(sys, split_weight(cfg, sys));
    DeimModel model = staged("deim", [&] { return make_deim_model(read_matrix_csv(dir / "U.csv")); });
    out.reduced = deim_reduce(sys, split, out.basis, model);
    out.deim = std::move(model);
    out.split = std::move(split);
  } else {
    out.reduced = project_ph(sys, out.basis);
  }
  out.structure = reduced_structure(out.reduced);
  return out;
}

struct ErrorRow {
  std::string method;
  Index r = 0, r_pod = 0, r_h2 = 0, m = 0;
  std::string input;
  ErrorMetrics metrics;
  double t_full = NAN, t_red = NAN;
  std::string status = "ok";
};

std::string error_row_csv(const ErrorRow& row, bool with_split) {
  std::string s = row.method + "," + std::to_string(row.r) + ",";
  if (with_split) s += std::to_string(row.r_pod) + "," + std::to_string(row.r_h2) + ",";
  s += std::to_string(row.m) + "," + row.input + ",";
  const bool ok = row.status == "ok";
  auto num = [&](double v) { return ok ? format_number(v) : std::string("nan"); };
  s += num(row.metrics.avg_rel_output_error) + "," + num(row.metrics.avg_rel_state_error) + "," +
       num(row.metrics.l2_output_error) + "," + num(row.metrics.l2_state_error_q) + ",";
  s += format_number(row.t_full) + "," + format_number(row.t_red) + "," +
       format_number(row.t_full / row.t_red);
  if (with_split) s += "," + row.status;
  return s + "\n";
}

constexpr const char* kErrorHeader =
    "method,r,m,input,avg_rel_output_error,avg_rel_state_error,L2_output_err,L2_state_err_Q,"
    "wall_time_full_s,wall_time_reduced_s,speedup\n";
constexpr const char* kSweepHeader =
    "method,r,r_pod,r_h2,m,input,avg_rel_output_error,avg_rel_state_error,L2_output_err,"
    "L2_state_err_Q,wall_time_full_s,wall_time_reduced_s,speedup,status\n";

std::string trajectory_csv(const Trajectory& tr, bool states) {
  std::string s = "t";
  for (Index j = 0; j < tr.inputs.cols(); ++j) s += fmt::format(",u{}", j);
  for (Index j = 0; j < tr.outputs.cols(); ++j) s += fmt::format(",y{}", j);
  if (states)
    for (Index j = 0; j < tr.states.cols(); ++j) s += fmt::format(",x{}", j);
  s += '\n';
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const Index i = static_cast<Index>(k);
    s += format_number(tr.times[k]);
    for (Index j = 0; j < tr.inputs.cols(); ++j) s += "," + format_number(tr.inputs(i, j));
    for (Index j = 0; j < tr.outputs.cols(); ++j) s += "," + format_number(tr.outputs(i, j));
    if (states)
      for (Index j = 0; j < tr.states.cols(); ++j) s += "," + format_number(tr.states(i, j));
    s += '\n';
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

void cmd_simulate(const RunConfig& cfg) {
  validate_config(cfg);
  const fs::path dir = prepare_out(cfg);
  const NlphSystem sys = build_model(cfg);
  const StructureReport rep = validate_structure(sys);
  json summary{{"model", sys.name}, {"n", sys.dim()}, {"structure_pass", rep.pass()}};
  for (const InputSpec& in : all_inputs(cfg)) {
    const Trajectory tr =
        staged("simulate", [&] { return simulate(sys, build_input(in, sys.ports()), cfg.span, cfg.integrator); });
    write_text(dir / fmt::format("trajectory_{}.csv", in.name), trajectory_csv(tr, cfg.write_states));
    summary["runs"][in.name] = {{"steps", tr.steps()},
                                {"dissipation_margin", dissipation_margin(tr, sys)},
                                {"H_final", sys.hamiltonian(tr.state(tr.steps()))}};
  }
  write_text(dir / "simulate.json", summary.dump(2) + "\n");
}

void cmd_reduce(const RunConfig& cfg) {
  validate_config(cfg);
  const fs::path dir = prepare_out(cfg);
  const Context c = make_context(cfg);
  const ReductionOutcome red = run_reduction(cfg, c.sys, c.snapshots);
  write_matrix_csv(dir / "V.csv", red.basis.V);
  write_matrix_csv(dir / "W.csv", red.basis.W);
  json s = structure_json(red.structure, red.basis);
  s["method"] = to_string(cfg.method);
  if (red.deim) {
    write_matrix_csv(dir / "U.csv", red.deim->U);
    std::string idx = "index\n";
    for (Index i : red.deim->indices) idx += std::to_string(i) + "\n";
    write_text(dir / "deim_indices.csv", idx);
    s["deim"] = {{"m", red.deim->size()},
                 {"growth", red.deim->growth},
                 {"condition", red.deim->condition}};
  }
  if (red.h2_log) {
    std::string log = "iteration,index,re,im,change\n";
    for (std::size_t it = 0; it < red.h2_log->shifts.size(); ++it)
      for (std::size_t i = 0; i < red.h2_log->shifts[it].size(); ++i)
        log += fmt::format("{},{},{},{},{}\n", it + 1, i,
                           format_number(red.h2_log->shifts[it][i].real()),
                           format_number(red.h2_log->shifts[it][i].imag()),
                           format_number(red.h2_log->changes[it]));
    write_text(dir / "h2_log.csv", log);
    s["h2"] = {{"iterations", red.h2_log->iterations},
               {"converged", red.h2_log->converged},
               {"warnings", red.h2_log->warnings}};
  }
  write_text(dir / "structure.json", s.dump(2) + "\n");
  if (!red.structure.pass())
    throw Error(ErrorCode::Structure, "reduced system failed the structure check", "projection");
}

void cmd_evaluate(const RunConfig& cfg) {
  validate_config(cfg);
  const fs::path dir = prepare_out(cfg);
  NlphSystem sys = build_model(cfg);
  ReductionOutcome red;
  if (!cfg.basis_dir.empty()) {
    red = load_reduction(cfg, sys);
  } else {
    const Context c = make_context(cfg);
    red = run_reduction(cfg, c.sys, c.snapshots);
  }
  const WeightedMetric metric = make_metric(cfg, sys);
  std::string csv = kErrorHeader;
  json summary{{"method", to_string(cfg.method)},
               {"r", red.basis.rank()},
               {"m", red.deim ? red.deim->size() : 0},
               {"structure", structure_json(red.structure, red.basis)}};
  for (const InputSpec& in : all_inputs(cfg)) {
    const InputFn u = build_input(in, sys.ports());
    Trajectory full, rt;
    const Vector xr0 = init_reduced_state(red.basis, Vector::Zero(sys.dim()));
    ErrorRow row;
    row.method = to_string(cfg.method);
    row.r = red.basis.rank();
    row.m = red.deim ? red.deim->size() : 0;
    row.input = in.name;
    auto run_full = [&] { full = simulate(sys, u, cfg.span, cfg.integrator); };
    auto run_red = [&] { rt = simulate_reduced(red.reduced, u, cfg.span, cfg.integrator, xr0); };
    staged("simulate", [&] {
      if (cfg.timing) {
        row.t_full = median_time(cfg.timing_repeats, run_full);
        row.t_red = median_time(cfg.timing_repeats, run_red);
      } else {
        run_full();
        run_red();
      }
    });
    row.metrics = error_metrics(full, rt, red.basis.V, metric);
    csv += error_row_csv(row, false);
    summary["inputs"][in.name] = {
        {"avg_rel_output_error", row.metrics.avg_rel_output_error},
        {"avg_rel_state_error", row.metrics.avg_rel_state_error},
        {"dissipation_margin_full", dissipation_margin(full, sys)},
        {"dissipation_margin_reduced", dissipation_margin(rt, red.reduced.system)},
        {"wall_time_full_s", row.t_full},
        {"wall_time_reduced_s", row.t_red}};
  }
  write_text(dir / "errors.csv", csv);
  write_text(dir / "summary.json", summary.dump(2) + "\n");
}

void cmd_bounds(const RunConfig& cfg) {
  validate_config(cfg);
  const fs::path dir = prepare_out(cfg);
  const Context c = make_context(cfg);
  const ReductionOutcome red = run_reduction(cfg, c.sys, c.snapshots);
  const InputFn u = build_input(cfg.training, c.sys.ports());
  const Vector xr0 = init_reduced_state(red.basis, Vector::Zero(c.sys.dim()));
  BoundOptions bo = cfg.bounds;
  bo.seed = cfg.seed;

  const ReducedSystem exact = is_deim(cfg.method) ? project_ph(c.sys, red.basis) : red.reduced;
  const Trajectory rt_exact = staged("simulate", [&] {
    return simulate_reduced(exact, u, cfg.span, cfg.integrator, xr0);
  });
  const BoundReport b = staged("bounds", [&] {
    return projection_bound_report(c.sys, red.basis, c.metric, c.training, rt_exact, bo);
  });
  json out{{"method", to_string(cfg.method)},
           {"r", red.basis.rank()},
           {"T", b.T},
           {"projection",
            {{"eps_x2", b.eps_x2},
             {"eps_F2", b.eps_F2},
             {"alpha", {{"value", b.alpha}, {"method", b.alpha_method}}},
             {"lipschitz_F", {{"value", b.lipschitz_F}, {"method", b.lipschitz_method}}},
             {"beta", b.beta},
             {"gamma", b.gamma},
             {"delta", b.delta},
             {"proj_norm_Q", b.proj_norm},
             {"proj_transpose_norm_Q", b.proj_transpose_norm},
             {"c_alpha", b.c_alpha},
             {"C_alpha", b.C_alpha},
             {"C_x", b.Cx},
             {"C_F", b.CF},
             {"C_0", b.C0},
             {"C_x_hat", b.Cx_hat},
             {"C_F_hat", b.CF_hat},
             {"C_0_hat", b.C0_hat},
             {"initial_deviation2", b.initial_deviation2},
             {"state_bound", b.state_bound},
             {"state_measured", b.measured_state},
             {"output_bound", b.output_bound},
             {"output_measured", b.measured_output},
             {"state_holds", b.state_holds()},
             {"output_holds", b.output_holds()}}}};
  if (is_deim(cfg.method)) {
    const Trajectory rt_deim = staged("simulate", [&] {
      return simulate_reduced(red.reduced, u, cfg.span, cfg.integrator, xr0);
    });
    const DeimBoundReport d = staged("bounds", [&] {
      return deim_reduction_bound(c.sys, *red.split, red.basis, *red.deim, red.reduced, rt_exact,
                                  rt_deim, bo);
    });
    const DeimLemmaReport lem = deim_lemma_bound(*red.deim, red.split->metric, c.snapshots.G);
    json dj{{"m", red.deim->size()},
            {"eps_h", d.eps_h},
            {"rho_min", d.rho_min},
            {"alpha", d.alpha},
            {"beta", d.beta},
            {"gamma", d.gamma},
            {"delta", d.delta},
            {"method", d.method},
            {"state_violations", d.state_violations},
            {"output_violations", d.output_violations},
            {"lemma_projector_norm_Q", lem.projector_q_norm},
            {"lemma_violations", lem.violations}};
    std::string series = "t,state_bound,state_measured,output_bound,output_measured\n";
    for (std::size_t k = 0; k < d.times.size(); ++k) {
      const Index i = static_cast<Index>(k);
      series += format_number(d.times[k]) + "," + format_number(d.state_bound(i)) + "," +
                format_number(d.measured_state(i)) + "," + format_number(d.output_bound(i)) + "," +
                format_number(d.measured_output(i)) + "\n";
    }
    write_text(dir / "deim_bound_series.csv", series);
    out["deim"] = dj;
  }
  write_text(dir / "bounds.json", out.dump(2) + "\n");
}

void cmd_sweep(const RunConfig& cfg) {
  validate_config(cfg);
  const fs::path dir = prepare_out(cfg);
  const Context c = make_context(cfg);
  const std::vector<InputSpec> inputs = all_inputs(cfg);

  std::vector<Trajectory> full(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    full[i] = i == 0 ? c.training
                     : staged("simulate", [&] {
                         return simulate(c.sys, build_input(inputs[i], c.sys.ports()), cfg.span,
                                         cfg.integrator);
                       });

  // Cross product of methods x r (x m for DEIM); hybrid uses the splits.
  std::vector<RunConfig> points;
  const std::vector<Method> methods =
      cfg.sweep_methods.empty() ? std::vector<Method>{cfg.method} : cfg.sweep_methods;
  const std::vector<Index> rs = cfg.sweep_r.empty() ? std::vector<Index>{cfg.r} : cfg.sweep_r;
  for (Method meth : methods) {
    if (meth == Method::Hybrid) {
      auto splits = cfg.sweep_splits;
      if (splits.empty()) splits.emplace_back(cfg.r_pod, cfg.r_h2);
      for (const auto& [a, b] : splits) {
        RunConfig p = cfg;
        p.method = meth;
        p.r_pod = a;
        p.r_h2 = b;
        p.r = a + b;
        points.push_back(p);
      }
      continue;
    }
    for (Index r : rs) {
      if (is_deim(meth)) {
        const std::vector<Index> ms = cfg.sweep_m.empty() ? std::vector<Index>{cfg.m} : cfg.sweep_m;
        for (Index m : ms) {
          RunConfig p = cfg;
          p.method = meth;
          p.r = r;
          p.m = m;
          points.push_back(p);
        }
      } else {
        RunConfig p = cfg;
        p.method = meth;
        p.r = r;
        p.m = 0;
        points.push_back(p);
      }
    }
  }
  for (const RunConfig& p : points) validate_config(p);

  std::vector<std::vector<ErrorRow>> rows(points.size());
  std::vector<std::optional<ReductionOutcome>> reductions(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < points.size(); i = next.fetch_add(1)) {
      const RunConfig& p = points[i];
      auto make_row = [&](const InputSpec& in) {
        ErrorRow row;
        row.method = to_string(p.method);
        row.r = p.r;
        row.r_pod = p.method == Method::Hybrid ? p.r_pod : 0;
        row.r_h2 = p.method == Method::Hybrid ? p.r_h2 : 0;
        row.m = is_deim(p.method) ? p.m : 0;
        row.input = in.name;
        return row;
      };
      try {
        ReductionOutcome red = run_reduction(p, c.sys, c.snapshots);
        const Vector xr0 = init_reduced_state(red.basis, Vector::Zero(c.sys.dim()));
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          ErrorRow row = make_row(inputs[k]);
          row.r = red.basis.rank();
          try {
            const Trajectory rt = simulate_reduced(red.reduced, build_input(inputs[k], c.sys.ports()),
                                                   p.span, p.integrator, xr0);
            row.metrics = error_metrics(full[k], rt, red.basis.V, c.metric);
          } catch (const Error& e) {
            row.status = to_string(e.code());
          }
          rows[i].push_back(row);
        }
        reductions[i] = std::move(red);
      } catch (const Error& e) {
        spdlog::warn("sweep point {} ({} r={}) failed: {}", i, to_string(p.method), p.r, e.what());
        for (const InputSpec& in : inputs) {
          ErrorRow row = make_row(in);
          row.status = to_string(e.code());
          rows[i].push_back(row);
        }
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(points.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::string csv = kSweepHeader;
  for (const auto& pr : rows)
    for (const ErrorRow& row : pr) csv += error_row_csv(row, true);
  write_text(dir / "sweep.csv", csv);

  if (cfg.timing) {
    // Timings run on one worker after the parallel phase; kept apart from
    // sweep.csv so that file stays reproducible.
    std::string tcsv = "method,r,r_pod,r_h2,m,input,wall_time_full_s,wall_time_reduced_s,speedup\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!reductions[i]) continue;
      const ReductionOutcome& red = *reductions[i];
      const Vector xr0 = init_reduced_state(red.basis, Vector::Zero(c.sys.dim()));
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const InputFn u = build_input(inputs[k], c.sys.ports());
        double tf = NAN, tr = NAN;
        try {
          tf = median_time(cfg.timing_repeats, [&] { simulate(c.sys, u, cfg.span, cfg.integrator); });
          tr = median_time(cfg.timing_repeats, [&] {
            simulate_reduced(red.reduced, u, cfg.span, cfg.integrator, xr0);
          });
        } catch (const Error&) {
        }
        const ErrorRow& row = rows[i][k];
        tcsv += fmt::format("{},{},{},{},{},{},{},{},{}\n", row.method, row.r, row.r_pod, row.r_h2,
                            row.m, row.input, format_number(tf), format_number(tr),
                            format_number(tf / tr));
      }
    }
    write_text(dir / "sweep_timings.csv", tcsv);
  }
}

}  // namespace phred
