// Command-line front end.  Every subcommand takes one JSON config plus a few
// overrides, validates it fully (reporting every problem at once, not just
// the first), and writes fixed-name artifacts plus a manifest tying the
// outputs to the exact input bytes.  Nothing here depends on wall-clock
// state, so rerunning a command reproduces the artifacts byte for byte.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rdmrecon/analysis.hpp"
#include "rdmrecon/basis.hpp"
#include "rdmrecon/constraints.hpp"
#include "rdmrecon/datalab.hpp"
#include "rdmrecon/integrals.hpp"
#include "rdmrecon/io_util.hpp"
#include "rdmrecon/operators.hpp"
#include "rdmrecon/solver.hpp"
#include "rdmrecon/types.hpp"

namespace {

using nlohmann::json;
using namespace rdmrecon;

constexpr const char* kToolVersion = "rdmrecon 1.0.0";

struct Ctx {
  json cfg;
  std::string out = ".";
  bool dry_run = false;
  int log_every = 0;
  Exec exec = Exec::Parallel;
  std::optional<std::uint64_t> seed_override;

  std::string config_sha;
  std::vector<std::string> problems;
  std::vector<std::pair<std::string, std::string>> inputs;  // (label, path)
  std::vector<std::string> artifacts;
  std::uint64_t seed_used = 0;
};

std::string file_sha(const std::string& path) {
  auto bytes = read_binary_file(path);
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// ---------------------------------------------------------------------------
// Config access.  Getters record problems instead of throwing so a single
// validation pass can list everything that is wrong.
// ---------------------------------------------------------------------------

void check_keys(Ctx& c, const json& obj, const std::string& where,
                const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items())
    if (allowed.find(key) == allowed.end())
      c.problems.push_back(where + ": unknown key '" + key + "'");
}

std::string input_file(Ctx& c, const char* key, bool required) {
  if (!c.cfg.contains(key)) {
    if (required) c.problems.push_back(std::string("missing required key '") + key + "'");
    return "";
  }
  if (!c.cfg[key].is_string()) {
    c.problems.push_back(std::string("'") + key + "' must be a file path string");
    return "";
  }
  std::string path = c.cfg[key].get<std::string>();
  if (!std::filesystem::exists(path)) {
    c.problems.push_back(std::string("'") + key + "': file not found: " + path);
    return "";
  }
  c.inputs.emplace_back(key, path);
  return path;
}

double get_number(Ctx& c, const json& obj, const std::string& where, const char* key,
                  bool required, double fallback) {
  if (!obj.contains(key)) {
    if (required) c.problems.push_back(where + ": missing '" + key + "'");
    return fallback;
  }
  if (!obj[key].is_number()) {
    c.problems.push_back(where + ": '" + key + "' must be a number");
    return fallback;
  }
  return obj[key].get<double>();
}

long get_integer(Ctx& c, const json& obj, const std::string& where, const char* key,
                 bool required, long fallback) {
  if (!obj.contains(key)) {
    if (required) c.problems.push_back(where + ": missing '" + key + "'");
    return fallback;
  }
  if (!obj[key].is_number_integer()) {
    c.problems.push_back(where + ": '" + key + "' must be an integer");
    return fallback;
  }
  return obj[key].get<long>();
}

Vec3 get_vec3(Ctx& c, const json& obj, const std::string& where, const char* key,
              const Vec3& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj[key];
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
      !v[2].is_number()) {
    c.problems.push_back(where + ": '" + key + "' must be a list of three numbers");
    return fallback;
  }
  return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

// Direct lattice file: {"a": [...], "b": [...], "c": [...]}, columns in bohr.
Mat3 load_cell_matrix(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  Mat3 cell;
  const char* keys[3] = {"a", "b", "c"};
  for (int k = 0; k < 3; ++k) {
    if (!j.contains(keys[k]) || !j[keys[k]].is_array() || j[keys[k]].size() != 3)
      throw Error(path + ": expected lattice vector '" + keys[k] + "' with three components");
    for (int d = 0; d < 3; ++d) cell(d, k) = j[keys[k]].at(d).get<double>();
  }
  return cell;
}

Weighting parse_weighting(Ctx& c) {
  std::string w = c.cfg.value("weighting", "inverse_variance");
  if (w == "inverse_variance") return Weighting::InverseVariance;
  if (w == "unweighted") return Weighting::Unweighted;
  c.problems.push_back("'weighting' must be 'inverse_variance' or 'unweighted'");
  return Weighting::InverseVariance;
}

SolverSettings solver_settings(Ctx& c) {
  SolverSettings st;
  if (c.cfg.contains("solver")) {
    const json& s = c.cfg["solver"];
    if (!s.is_object()) {
      c.problems.push_back("'solver' must be an object");
      return st;
    }
    check_keys(c, s, "solver",
               {"max_iterations", "polish_iterations", "primal_tol", "stall_tol", "rho"});
    st.max_iterations = get_integer(c, s, "solver", "max_iterations", false, st.max_iterations);
    st.polish_iterations =
        get_integer(c, s, "solver", "polish_iterations", false, st.polish_iterations);
    st.primal_tol = get_number(c, s, "solver", "primal_tol", false, st.primal_tol);
    st.stall_tol = get_number(c, s, "solver", "stall_tol", false, st.stall_tol);
    st.rho = get_number(c, s, "solver", "rho", false, st.rho);
    if (st.max_iterations <= 0) c.problems.push_back("solver: 'max_iterations' must be positive");
    if (!(st.rho > 0.0)) c.problems.push_back("solver: 'rho' must be positive");
  }
  st.log_every = c.log_every;
  if (c.log_every > 0)
    st.log = [](const std::string& s) { std::cerr << "[solver] " << s << "\n"; };
  return st;
}

int finish_validation(Ctx& c) {
  if (c.problems.empty()) return 0;
  std::cerr << "config: " << c.problems.size() << " problem(s)\n";
  for (const auto& p : c.problems) std::cerr << "  - " << p << "\n";
  return 2;
}

bool plan_or_go(Ctx& c, const std::string& command) {
  if (!c.dry_run) {
    std::filesystem::create_directories(c.out);
    return true;
  }
  std::cout << "[plan] command " << command << "\n";
  for (const auto& [label, path] : c.inputs)
    std::cout << "[plan] read " << label << " " << path << "\n";
  for (const auto& name : c.artifacts) std::cout << "[plan] write " << c.out << "/" << name << "\n";
  std::cout << "[plan] config ok\n";
  return false;
}

void write_manifest(Ctx& c, const std::string& command) {
  json m;
  m["tool"] = kToolVersion;
  m["command"] = command;
  m["config_sha256"] = c.config_sha;
  json inputs = json::object();
  for (const auto& [label, path] : c.inputs)
    inputs[label] = {{"path", path}, {"sha256", file_sha(path)}};
  m["inputs"] = inputs;
  m["seed"] = c.seed_used;
  std::sort(c.artifacts.begin(), c.artifacts.end());
  m["artifacts"] = c.artifacts;
  write_text_file(c.out + "/manifest.json", m.dump(2) + "\n");
  std::cerr << "[cli] wrote " << c.out << "/manifest.json\n";
}

void emit(Ctx& c, const std::string& name, const std::string& text) {
  write_text_file(c.out + "/" + name, text);
  std::cerr << "[cli] wrote " << c.out << "/" << name << "\n";
}

// Loads everything reconstruct-flavoured commands share.
struct Problem {
  BasisSet basis;
  LowdinTransform lt;
  DataSet data;
  CellImages images;
  std::optional<ThermalModel> thermal;
  ConstraintSet constraints;
  Weighting weighting = Weighting::InverseVariance;
};

// Validation halves of the shared block (run before heavy work).
struct ProblemSpec {
  std::string geometry, basis, dataset, images, thermal, symmetry, core;
  long n_electrons = 0;
  Weighting weighting = Weighting::InverseVariance;
};

ProblemSpec problem_spec(Ctx& c) {
  ProblemSpec s;
  s.geometry = input_file(c, "geometry", true);
  s.basis = input_file(c, "basis", true);
  s.dataset = input_file(c, "dataset", true);
  s.images = input_file(c, "images", false);
  s.thermal = input_file(c, "thermal", false);
  s.symmetry = input_file(c, "symmetry", false);
  s.core = input_file(c, "core", false);
  s.n_electrons = get_integer(c, c.cfg, "config", "n_electrons", true, 0);
  if (c.cfg.contains("n_electrons") && (s.n_electrons <= 0 || s.n_electrons % 2 != 0))
    c.problems.push_back("'n_electrons' must be a positive even integer");
  s.weighting = parse_weighting(c);
  return s;
}

Problem load_problem(const ProblemSpec& s) {
  Problem p{BasisSet::load(s.geometry, s.basis), {}, {}, {}, {}, {}, s.weighting};
  p.lt = lowdin(overlap_matrix(p.basis, Exec::Serial));
  p.data = read_dataset(s.dataset);
  if (s.images.empty()) {
    p.images.rotations = {Mat3::Identity()};
    p.images.translations = {Vec3::Zero()};
  } else {
    p.images = load_cell_images(s.images);
  }
  if (!s.thermal.empty())
    p.thermal = load_thermal_model(s.thermal, static_cast<int>(p.basis.atoms().size()));
  std::optional<CoreSpace> core;
  if (!s.core.empty()) core = load_core(s.core, p.basis, p.lt);
  std::optional<SymmetryAdaptation> sym;
  if (!s.symmetry.empty())
    sym = symmetry_adapt(p.basis, p.lt, load_symmetry_ops(s.symmetry, p.basis));
  p.constraints = assemble_constraints(static_cast<int>(s.n_electrons), p.basis.size(),
                                       std::move(core), std::move(sym));
  return p;
}

json feasibility_json(const FeasibilityReport& r) {
  return {{"min_eigenvalue", r.min_eigenvalue}, {"max_eigenvalue", r.max_eigenvalue},
          {"trace_gap", r.trace_gap},           {"off_block_mass", r.off_block_mass},
          {"core_violation", r.core_violation}, {"feasible", r.feasible}};
}

const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::IterationLimit: return "iteration_limit";
    default: return "infeasible";
  }
}

json matrix_json(const MatX& A) {
  json arr = json::array();
  for (int r = 0; r < A.rows(); ++r)
    for (int col = 0; col < A.cols(); ++col) arr.push_back(A(r, col));
  return arr;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int run_gen_data(Ctx& c) {
  check_keys(c, c.cfg, "config",
             {"config_version", "geometry", "basis", "reference", "images", "thermal", "cell",
              "sf", "dcp", "noise"});
  std::string geometry = input_file(c, "geometry", true);
  std::string basis_path = input_file(c, "basis", true);
  std::string reference = input_file(c, "reference", true);
  std::string images_path = input_file(c, "images", false);
  std::string thermal_path = input_file(c, "thermal", false);

  bool want_sf = c.cfg.contains("sf");
  bool want_dcp = c.cfg.contains("dcp");
  if (!want_sf && !want_dcp)
    c.problems.push_back("need at least one of 'sf' and 'dcp' generation blocks");

  double stol_max = 0.0;
  std::string cell_path;
  if (want_sf) {
    check_keys(c, c.cfg["sf"], "sf", {"stol_max"});
    stol_max = get_number(c, c.cfg["sf"], "sf", "stol_max", true, 0.0);
    if (c.cfg["sf"].contains("stol_max") && !(stol_max > 0.0))
      c.problems.push_back("sf: 'stol_max' must be positive");
    cell_path = input_file(c, "cell", true);
  } else if (c.cfg.contains("cell")) {
    c.problems.push_back("'cell' is only meaningful together with an 'sf' block");
  }

  double q_max = 0.0, dq = 0.0;
  long n_dirs = 8;
  if (want_dcp) {
    check_keys(c, c.cfg["dcp"], "dcp", {"q_max", "dq", "directions"});
    q_max = get_number(c, c.cfg["dcp"], "dcp", "q_max", true, 0.0);
    dq = get_number(c, c.cfg["dcp"], "dcp", "dq", true, 0.0);
    n_dirs = get_integer(c, c.cfg["dcp"], "dcp", "directions", false, 8);
    if (c.cfg["dcp"].contains("q_max") && !(q_max > 0.0))
      c.problems.push_back("dcp: 'q_max' must be positive");
    if (c.cfg["dcp"].contains("dq") && !(dq > 0.0))
      c.problems.push_back("dcp: 'dq' must be positive");
    if (n_dirs < 1 || n_dirs > 8)
      c.problems.push_back("dcp: 'directions' must be between 1 and 8");
  }

  double noise_level = 0.0;
  std::uint64_t noise_seed = 0;
  if (c.cfg.contains("noise")) {
    check_keys(c, c.cfg["noise"], "noise", {"level", "seed"});
    noise_level = get_number(c, c.cfg["noise"], "noise", "level", true, 0.0);
    noise_seed = static_cast<std::uint64_t>(get_integer(c, c.cfg["noise"], "noise", "seed",
                                                        false, 0));
    if (noise_level < 0.0) c.problems.push_back("noise: 'level' must be non-negative");
  }
  if (c.seed_override) noise_seed = *c.seed_override;
  c.seed_used = noise_seed;

  c.artifacts = {"dataset.txt"};
  if (int rc = finish_validation(c)) return rc;
  if (!plan_or_go(c, "gen-data")) return 0;

  BasisSet basis = BasisSet::load(geometry, basis_path);
  LowdinTransform lt = lowdin(overlap_matrix(basis, Exec::Serial));
  PopulationMatrix ref = load_population(reference, basis, lt);
  CellImages images;
  if (images_path.empty()) {
    images.rotations = {Mat3::Identity()};
    images.translations = {Vec3::Zero()};
  } else {
    images = load_cell_images(images_path);
  }
  std::optional<ThermalModel> thermal;
  if (!thermal_path.empty())
    thermal = load_thermal_model(thermal_path, static_cast<int>(basis.atoms().size()));
  const ThermalModel* tm = thermal ? &*thermal : nullptr;

  DataSet ds;
  if (want_sf) {
    Mat3 cell = load_cell_matrix(cell_path);
    ds = generate_sf(basis, ref.P, images, cell, stol_max, tm, c.exec);
    std::cerr << "[cli] generated " << ds.obs.size() << " structure factors (stol <= "
              << stol_max << ")\n";
  }
  if (want_dcp) {
    auto dirs = standard_directions();
    dirs.resize(static_cast<std::size_t>(n_dirs));
    DataSet dcp = generate_dcp(basis, ref.P, dirs, q_max, dq, c.exec);
    std::cerr << "[cli] generated " << dcp.obs.size() << " compton samples (" << n_dirs
              << " directions)\n";
    ds = want_sf ? merge(ds, dcp) : std::move(dcp);
  }
  ds.prov.reference = short_hash(read_text_file(reference));
  ds = add_noise(ds, noise_level, noise_seed);

  write_dataset(c.out + "/dataset.txt", ds);
  std::cerr << "[cli] wrote " << c.out << "/dataset.txt (" << ds.obs.size() << " records)\n";
  write_manifest(c, "gen-data");
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

int solve_and_save(Ctx& c, const std::string& command, const Problem& p,
                   const SolverSettings& st) {
  auto ops = build_operators(p.basis, p.images, p.data, p.thermal ? &*p.thermal : nullptr, c.exec);
  Objective obj = make_objective(p.data, ops, p.weighting);
  Solution sol = solve(obj, p.constraints, p.lt, st);
  std::cerr << "[cli] solve finished: status " << status_name(sol.status) << ", objective "
            << format_double(sol.objective) << ", " << sol.iterations << " iterations\n";
  std::cerr << "[cli] feasibility: " << sol.feasibility.summary() << "\n";

  json out;
  out["status"] = status_name(sol.status);
  out["objective"] = sol.objective;
  out["chi2_sf"] = sol.chi2_sf;
  out["chi2_dcp"] = sol.chi2_dcp;
  out["chi2_total"] = sol.chi2_total;
  out["iterations"] = sol.iterations;
  out["accepted_iterates"] = sol.accepted_objectives.size();
  out["feasibility"] = feasibility_json(sol.feasibility);
  out["n_sf"] = p.data.count(OperatorKind::StructureFactor);
  out["n_dcp"] = p.data.count(OperatorKind::ComptonProfile);
  emit(c, "solution.json", out.dump(2) + "\n");

  if (sol.status == SolveStatus::Infeasible) {
    std::cerr << "error: the constraint set admits no solution\n";
    write_manifest(c, command);
    return 3;
  }
  save_population(c.out + "/P.json", PopulationMatrix::from_ao(sol.P, p.lt, p.basis.hash()));
  std::cerr << "[cli] wrote " << c.out << "/P.json\n";
  write_manifest(c, command);
  return 0;
}

int run_reconstruct(Ctx& c) {
  check_keys(c, c.cfg, "config",
             {"config_version", "geometry", "basis", "dataset", "images", "thermal", "symmetry",
              "core", "n_electrons", "weighting", "solver"});
  ProblemSpec spec = problem_spec(c);
  SolverSettings st = solver_settings(c);
  c.artifacts = {"solution.json", "P.json"};
  if (int rc = finish_validation(c)) return rc;
  if (!plan_or_go(c, "reconstruct")) return 0;
  Problem p = load_problem(spec);
  return solve_and_save(c, "reconstruct", p, st);
}

// ---------------------------------------------------------------------------
// resample
// ---------------------------------------------------------------------------

int run_resample(Ctx& c) {
  check_keys(c, c.cfg, "config",
             {"config_version", "geometry", "basis", "dataset", "images", "thermal", "symmetry",
              "core", "n_electrons", "weighting", "solver", "resample"});
  ProblemSpec spec = problem_spec(c);
  SolverSettings st = solver_settings(c);
  long replicates = 0;
  double level = 0.0;
  std::uint64_t base_seed = 0;
  if (!c.cfg.contains("resample")) {
    c.problems.push_back("missing required key 'resample'");
  } else {
    const json& r = c.cfg["resample"];
    check_keys(c, r, "resample", {"replicates", "noise_level", "base_seed"});
    replicates = get_integer(c, r, "resample", "replicates", true, 0);
    level = get_number(c, r, "resample", "noise_level", true, 0.0);
    base_seed = static_cast<std::uint64_t>(get_integer(c, r, "resample", "base_seed", false, 0));
    if (c.cfg["resample"].contains("replicates") && replicates < 2)
      c.problems.push_back("resample: 'replicates' must be at least 2");
    if (c.cfg["resample"].contains("noise_level") && !(level > 0.0))
      c.problems.push_back("resample: 'noise_level' must be positive");
  }
  if (c.seed_override) base_seed = *c.seed_override;
  c.seed_used = base_seed;
  c.artifacts = {"resample.json"};
  if (int rc = finish_validation(c)) return rc;
  if (!plan_or_go(c, "resample")) return 0;

  Problem p = load_problem(spec);
  ResampleResult rr =
      resample(p.data, level, base_seed, static_cast<int>(replicates), p.basis, p.images,
               p.thermal ? &*p.thermal : nullptr, p.constraints, p.lt, st, p.weighting, c.exec);
  std::cerr << "[cli] resample finished: " << rr.replicates << " replicates, " << rr.failures
            << " failures\n";

  json out;
  out["replicates"] = rr.replicates;
  out["failures"] = rr.failures;
  out["noise_level"] = level;
  out["base_seed"] = base_seed;
  out["M"] = rr.mean_P.rows();
  out["chi2"] = rr.chi2;
  out["mean_P"] = matrix_json(rr.mean_P);
  out["std_P"] = matrix_json(rr.std_P);
  out["mean_P_perp"] = matrix_json(rr.mean_P_perp);
  out["std_P_perp"] = matrix_json(rr.std_P_perp);
  emit(c, "resample.json", out.dump(2) + "\n");
  write_manifest(c, "resample");
  return 0;
}

// ---------------------------------------------------------------------------
// adp-fit
// ---------------------------------------------------------------------------

int run_adp_fit(Ctx& c) {
  check_keys(c, c.cfg, "config",
             {"config_version", "geometry", "basis", "dataset", "reference", "images", "initial",
              "stol_min", "adp"});
  std::string geometry = input_file(c, "geometry", true);
  std::string basis_path = input_file(c, "basis", true);
  std::string dataset = input_file(c, "dataset", true);
  std::string reference = input_file(c, "reference", true);
  std::string images_path = input_file(c, "images", false);
  std::string initial_path = input_file(c, "initial", false);
  double stol_min = get_number(c, c.cfg, "config", "stol_min", false, 0.0);
  if (stol_min < 0.0) c.problems.push_back("'stol_min' must be non-negative");
  AdpSettings as;
  if (c.cfg.contains("adp")) {
    const json& a = c.cfg["adp"];
    check_keys(c, a, "adp", {"max_iterations", "weighting"});
    as.max_iterations =
        static_cast<int>(get_integer(c, a, "adp", "max_iterations", false, as.max_iterations));
    std::string w = a.value("weighting", "unweighted");
    if (w == "inverse_variance")
      as.weighting = Weighting::InverseVariance;
    else if (w != "unweighted")
      c.problems.push_back("adp: 'weighting' must be 'inverse_variance' or 'unweighted'");
  }
  c.artifacts = {"adp.json", "adp_fit.json"};
  if (int rc = finish_validation(c)) return rc;
  if (!plan_or_go(c, "adp-fit")) return 0;

  BasisSet basis = BasisSet::load(geometry, basis_path);
  LowdinTransform lt = lowdin(overlap_matrix(basis, Exec::Serial));
  PopulationMatrix ref = load_population(reference, basis, lt);
  CellImages images;
  if (images_path.empty()) {
    images.rotations = {Mat3::Identity()};
    images.translations = {Vec3::Zero()};
  } else {
    images = load_cell_images(images_path);
  }
  DataSet ds = read_dataset(dataset);
  DataSet high;
  high.lattice = ds.lattice;
  high.prov = ds.prov;
  for (const auto& o : ds.obs) {
    if (o.kind != OperatorKind::StructureFactor) continue;
    if (scattering_vector_from_hkl(ds.lattice, o.hkl).stol > stol_min) high.obs.push_back(o);
  }
  std::cerr << "[cli] fitting displacement tensors against " << high.obs.size()
            << " reflections above stol " << stol_min << "\n";

  const int natoms = static_cast<int>(basis.atoms().size());
  ThermalModel start;
  if (initial_path.empty()) {
    start.enabled = true;
    start.displacement.assign(natoms, 0.01 * Mat3::Identity());
  } else {
    start = load_thermal_model(initial_path, natoms);
  }

  AdpResult res = refine_adps(basis, images, high, ref.P, start, as);
  std::cerr << "[cli] refinement " << (res.converged ? "converged" : "did not converge")
            << " after " << res.iterations << " iterations, chi2 "
            << format_double(res.chi2) << "\n";

  save_thermal_model(c.out + "/adp.json", res.model);
  std::cerr << "[cli] wrote " << c.out << "/adp.json\n";
  json fit;
  fit["chi2"] = res.chi2;
  fit["iterations"] = res.iterations;
  fit["converged"] = res.converged;
  fit["n_sf_used"] = high.obs.size();
  fit["stol_min"] = stol_min;
  emit(c, "adp_fit.json", fit.dump(2) + "\n");
  write_manifest(c, "adp-fit");
  return res.converged ? 0 : 4;
}

// ---------------------------------------------------------------------------
// scan-cutoff
// ---------------------------------------------------------------------------

int run_scan_cutoff(Ctx& c) {
  check_keys(c, c.cfg, "config",
             {"config_version", "geometry", "basis", "dataset", "images", "thermal", "symmetry",
              "core", "n_electrons", "weighting", "solver", "scan"});
  ProblemSpec spec = problem_spec(c);
  SolverSettings st = solver_settings(c);
  std::vector<double> cutoffs;
  if (!c.cfg.contains("scan") || !c.cfg["scan"].is_object()) {
    c.problems.push_back("missing required key 'scan'");
  } else {
    check_keys(c, c.cfg["scan"], "scan", {"cutoffs"});
    const json& cs = c.cfg["scan"].value("cutoffs", json());
    if (!cs.is_array() || cs.empty()) {
      c.problems.push_back("scan: 'cutoffs' must be a non-empty list of numbers");
    } else {
      for (const auto& v : cs) {
        if (!v.is_number() || !(v.get<double>() > 0.0)) {
          c.problems.push_back("scan: cutoffs must all be positive numbers");
          break;
        }
        cutoffs.push_back(v.get<double>());
      }
    }
  }
  c.artifacts = {"energy_scan.csv"};
  if (int rc = finish_validation(c)) return rc;
  if (!plan_or_go(c, "scan-cutoff")) return 0;

  Problem p = load_problem(spec);
  auto rows = scan_cutoff(p.basis, p.lt, p.constraints, p.data, p.images,
                          p.thermal ? &*p.thermal : nullptr, cutoffs, st, p.weighting);
  for (const auto& r : rows)
    std::cerr << "[cli] cutoff " << r.cutoff << ": " << r.n_sf << " reflections, energy "
              << format_double(r.energy.total) << ", virial "
              << format_double(r.energy.virial_ratio) << "\n";
  write_scan_csv(c.out + "/energy_scan.csv", rows);
  std::cerr << "[cli] wrote " << c.out << "/energy_scan.csv\n";
  write_manifest(c, "scan-cutoff");
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

int run_analyze(Ctx& c) {
  check_keys(c, c.cfg, "config",
             {"config_version", "geometry", "basis", "population", "promolecule", "path", "plane",
              "dcp"});
  std::string geometry = input_file(c, "geometry", true);
  std::string basis_path = input_file(c, "basis", true);
  std::string population = input_file(c, "population", true);
  std::string promolecule = input_file(c, "promolecule", false);

  PathSpec path;
  bool want_path = c.cfg.contains("path");
  if (want_path) {
    const json& pj = c.cfg["path"];
    check_keys(c, pj, "path", {"waypoints", "points"});
    path.points = static_cast<int>(get_integer(c, pj, "path", "points", false, 64));
    const json& wp = pj.value("waypoints", json());
    if (!wp.is_array() || wp.size() < 2) {
      c.problems.push_back("path: 'waypoints' must list at least two points");
    } else {
      for (const auto& w : wp) {
        if (!w.is_array() || w.size() != 3) {
          c.problems.push_back("path: each waypoint must be a list of three numbers");
          break;
        }
        path.waypoints.push_back(Vec3(w[0].get<double>(), w[1].get<double>(), w[2].get<double>()));
      }
    }
    if (path.points < 2) c.problems.push_back("path: 'points' must be at least 2");
  }

  GridSpec plane;
  bool want_plane = c.cfg.contains("plane");
  if (want_plane) {
    const json& gj = c.cfg["plane"];
    check_keys(c, gj, "plane", {"origin", "e1", "e2", "len1", "len2", "n1", "n2"});
    plane.origin = get_vec3(c, gj, "plane", "origin", Vec3::Zero());
    plane.e1 = get_vec3(c, gj, "plane", "e1", Vec3::UnitX());
    plane.e2 = get_vec3(c, gj, "plane", "e2", Vec3::UnitY());
    plane.len1 = get_number(c, gj, "plane", "len1", true, 1.0);
    plane.len2 = get_number(c, gj, "plane", "len2", true, 1.0);
    plane.n1 = static_cast<int>(get_integer(c, gj, "plane", "n1", false, 64));
    plane.n2 = static_cast<int>(get_integer(c, gj, "plane", "n2", false, 64));
    if (!(plane.len1 > 0.0) || !(plane.len2 > 0.0))
      c.problems.push_back("plane: 'len1' and 'len2' must be positive");
    if (plane.n1 < 2 || plane.n2 < 2)
      c.problems.push_back("plane: 'n1' and 'n2' must be at least 2");
  }

  double q_max = 0.0, dq = 0.0;
  long n_dirs = 8;
  bool want_dcp = c.cfg.contains("dcp");
  if (want_dcp) {
    check_keys(c, c.cfg["dcp"], "dcp", {"q_max", "dq", "directions"});
    q_max = get_number(c, c.cfg["dcp"], "dcp", "q_max", true, 0.0);
    dq = get_number(c, c.cfg["dcp"], "dcp", "dq", true, 0.0);
    n_dirs = get_integer(c, c.cfg["dcp"], "dcp", "directions", false, 8);
    if (c.cfg["dcp"].contains("q_max") && !(q_max > 0.0))
      c.problems.push_back("dcp: 'q_max' must be positive");
    if (c.cfg["dcp"].contains("dq") && !(dq > 0.0))
      c.problems.push_back("dcp: 'dq' must be positive");
    if (n_dirs < 1 || n_dirs > 8)
      c.problems.push_back("dcp: 'directions' must be between 1 and 8");
  }

  c.artifacts = {"report.json"};
  if (want_path) {
    c.artifacts.push_back("rdm_map.csv");
    c.artifacts.push_back("rdm_map.svg");
  }
  if (want_plane) {
    c.artifacts.push_back("density.csv");
    c.artifacts.push_back("density.svg");
    if (!promolecule.empty()) {
      c.artifacts.push_back("deformation.csv");
      c.artifacts.push_back("deformation.svg");
    }
  }
  if (want_dcp) {
    c.artifacts.push_back("dcp_curves.csv");
    if (n_dirs >= 2) c.artifacts.push_back("dcp_anisotropy.csv");
  }
  if (int rc = finish_validation(c)) return rc;
  if (!plan_or_go(c, "analyze")) return 0;

  BasisSet basis = BasisSet::load(geometry, basis_path);
  LowdinTransform lt = lowdin(overlap_matrix(basis, Exec::Serial));
  PopulationMatrix pm = load_population(population, basis, lt);

  json report;
  report["electron_count"] = pm.N;
  EnergyReport er = mean_field_energy(pm.P, basis);
  report["energy"] = {{"kinetic", er.kinetic},
                      {"nuclear_attraction", er.nuclear_attraction},
                      {"two_electron", er.two_electron},
                      {"nuclear_repulsion", er.nuclear_repulsion},
                      {"total", er.total},
                      {"virial_ratio", er.virial_ratio}};
  std::cerr << "[cli] mean-field energy " << format_double(er.total) << ", virial "
            << format_double(er.virial_ratio) << "\n";

  if (!promolecule.empty()) {
    PopulationMatrix pro = load_population(promolecule, basis, lt);
    report["deformation_charge"] = deformation_charge(pm.P, pro.P, basis);
    if (want_plane) {
      Grid2D def = deformation_map(pm.P, pro.P, basis, plane, c.exec);
      write_grid_csv(c.out + "/deformation.csv", def);
      write_grid_svg(c.out + "/deformation.svg", def);
      std::cerr << "[cli] wrote " << c.out << "/deformation.{csv,svg}\n";
    }
  }

  if (want_path) {
    Grid2D map = rdm_map(pm.P, basis, path, c.exec);
    write_grid_csv(c.out + "/rdm_map.csv", map);
    write_grid_svg(c.out + "/rdm_map.svg", map);
    std::cerr << "[cli] wrote " << c.out << "/rdm_map.{csv,svg}\n";
  }
  if (want_plane) {
    Grid2D den = density_map(pm.P, basis, plane, c.exec);
    write_grid_csv(c.out + "/density.csv", den);
    write_grid_svg(c.out + "/density.svg", den);
    std::cerr << "[cli] wrote " << c.out << "/density.{csv,svg}\n";
  }
  if (want_dcp) {
    auto dirs = standard_directions();
    dirs.resize(static_cast<std::size_t>(n_dirs));
    auto qs = momentum_grid(q_max, dq);
    VecX qv = Eigen::Map<const VecX>(qs.data(), static_cast<long>(qs.size()));
    json integrals = json::array();
    std::ostringstream curves;
    curves << "q";
    std::vector<VecX> J(dirs.size());
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      J[d] = dcp_curve(pm.P, basis, dirs[d], qs, c.exec);
      curves << ",J" << d;
      // profiles are even in q, so the full-line integral folds in half
      double integral = dq * (2.0 * J[d].tail(J[d].size() - 1).sum() + J[d][0]);
      integrals.push_back({{"direction", {dirs[d][0], dirs[d][1], dirs[d][2]}},
                           {"integral", integral}});
    }
    curves << '\n';
    for (std::size_t k = 0; k < qs.size(); ++k) {
      curves << format_double(qs[k]);
      for (const auto& j : J) curves << ',' << format_double(j[static_cast<long>(k)]);
      curves << '\n';
    }
    emit(c, "dcp_curves.csv", curves.str());
    report["dcp_integrals"] = integrals;
    if (dirs.size() >= 2) {
      VecX aniso = J[1] - J[0];
      write_curve_csv(c.out + "/dcp_anisotropy.csv", "q", "dJ", qv, aniso);
      std::cerr << "[cli] wrote " << c.out << "/dcp_anisotropy.csv\n";
    }
  }

  emit(c, "report.json", report.dump(2) + "\n");
  write_manifest(c, "analyze");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reconstruction of N-representable one-electron density matrices "
               "from structure factors and directional Compton profiles"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  struct SubOpts {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool dry_run = false;
    bool serial = false;
    int log_every = 0;
  };

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate synthetic structure factors and Compton profiles"},
      {"reconstruct", "solve for the population matrix that fits a data set"},
      {"resample", "noise-replicate solves with element-wise spread statistics"},
      {"adp-fit", "refine displacement tensors against structure factors"},
      {"scan-cutoff", "reconstruct under increasing resolution cutoffs"},
      {"analyze", "maps, profiles, energies, and sum checks for a population matrix"}};

  std::vector<SubOpts> opts(commands.size());
  std::vector<CLI::App*> subs;
  for (std::size_t k = 0; k < commands.size(); ++k) {
    CLI::App* sub = app.add_subcommand(commands[k].first, commands[k].second);
    SubOpts& o = opts[k];
    sub->add_option("config", o.config, "JSON configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (default: current)");
    sub->add_option("--seed", o.seed, "override the seed in the config")
        ->each([&o](const std::string&) { o.seed_given = true; });
    sub->add_flag("--dry-run", o.dry_run, "validate and print the plan without running");
    sub->add_flag("--serial", o.serial, "disable parallel kernels");
    sub->add_option("--log-every", o.log_every, "log solver progress every K iterations");
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  std::size_t which = 0;
  for (; which < subs.size(); ++which)
    if (subs[which]->parsed()) break;
  const SubOpts& o = opts[which];

  Ctx c;
  c.out = o.out;
  c.dry_run = o.dry_run;
  c.log_every = o.log_every;
  c.exec = o.serial ? Exec::Serial : Exec::Parallel;
  if (o.seed_given) c.seed_override = o.seed;

  try {
    std::string text = read_text_file(o.config);
    c.config_sha = sha256_hex(text);
    try {
      c.cfg = json::parse(text);
    } catch (const json::exception& e) {
      std::cerr << "config: " << o.config << ": invalid JSON: " << e.what() << "\n";
      return 2;
    }
    if (!c.cfg.is_object()) {
      std::cerr << "config: " << o.config << ": top level must be an object\n";
      return 2;
    }
    if (c.cfg.value("config_version", 0) != 1)
      c.problems.push_back("'config_version' must be present and equal to 1");

    const std::string& name = commands[which].first;
    if (name == "gen-data") return run_gen_data(c);
    if (name == "reconstruct") return run_reconstruct(c);
    if (name == "resample") return run_resample(c);
    if (name == "adp-fit") return run_adp_fit(c);
    if (name == "scan-cutoff") return run_scan_cutoff(c);
    return run_analyze(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
