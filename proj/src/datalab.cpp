#include "rdmrecon/datalab.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "rdmrecon/io_util.hpp"

namespace rdmrecon {

int DataSet::count(OperatorKind kind) const {
  int n = 0;
  for (const auto& o : obs)
    if (o.kind == kind) ++n;
  return n;
}

std::vector<Vec3> standard_directions() {
  static const int raw[8][3] = {{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {2, 1, 0},
                                {2, 1, 1}, {3, 1, 0}, {3, 1, 1}, {3, 2, 1}};
  std::vector<Vec3> dirs;
  dirs.reserve(8);
  for (const auto& r : raw) dirs.push_back(Vec3(r[0], r[1], r[2]).normalized());
  return dirs;
}

std::vector<double> momentum_grid(double q_max, double dq) {
  if (!(q_max > 0.0) || !(dq > 0.0)) throw Error("momentum grid: q_max and dq must be positive");
  std::vector<double> q;
  for (int k = 0;; ++k) {
    double v = k * dq;
    if (v > q_max + 1e-12) break;
    q.push_back(v);
  }
  return q;
}

cdouble predicted_value(const ScatteringOperator& op, const MatX& P_ao) {
  return cdouble(op.matrix.real().cwiseProduct(P_ao).sum(),
                 op.matrix.imag().cwiseProduct(P_ao).sum());
}

DataSet generate_sf(const BasisSet& basis, const MatX& P_ao, const CellImages& images,
                    const Mat3& lattice, double stol_max, const ThermalModel* thermal,
                    Exec exec) {
  if (P_ao.rows() != basis.size() || P_ao.cols() != basis.size())
    throw Error("generate_sf: population matrix does not match the basis");
  auto grid = hkl_grid(lattice, stol_max);
  auto ops = sf_operator_batch(basis, images, grid, thermal, exec);
  DataSet ds;
  ds.lattice = lattice;
  ds.prov.temperature = (thermal != nullptr && thermal->enabled) ? "thermal" : "static";
  ds.obs.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    Observation& o = ds.obs[k];
    o.kind = OperatorKind::StructureFactor;
    o.hkl = *grid[k].hkl;
    o.clean = predicted_value(ops[k], P_ao);
    o.value = o.clean;
    o.sigma = 1.0;
  }
  return ds;
}

DataSet generate_dcp(const BasisSet& basis, const MatX& P_ao, const std::vector<Vec3>& directions,
                     double q_max, double dq, Exec exec) {
  if (P_ao.rows() != basis.size() || P_ao.cols() != basis.size())
    throw Error("generate_dcp: population matrix does not match the basis");
  if (directions.empty()) throw Error("generate_dcp: no directions given");
  auto qs = momentum_grid(q_max, dq);
  std::vector<ComptonPoint> pts;
  pts.reserve(directions.size() * qs.size());
  for (const auto& d : directions) {
    if (std::abs(d.norm() - 1.0) > 1e-10)
      throw Error("generate_dcp: directions must be unit vectors");
    for (double q : qs) pts.push_back({d, q});
  }
  auto ops = dcp_operator_batch(basis, pts, exec);
  DataSet ds;
  ds.prov.temperature = "static";
  ds.obs.resize(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    Observation& o = ds.obs[k];
    o.kind = OperatorKind::ComptonProfile;
    o.u = pts[k].u;
    o.q = pts[k].q;
    o.clean = cdouble(predicted_value(ops[k], P_ao).real(), 0.0);
    o.value = o.clean;
    o.sigma = 1.0;
  }
  return ds;
}

DataSet merge(const DataSet& a, const DataSet& b) {
  DataSet out = a;
  bool a_sf = a.count(OperatorKind::StructureFactor) > 0;
  bool b_sf = b.count(OperatorKind::StructureFactor) > 0;
  if (a_sf && b_sf && (a.lattice - b.lattice).norm() > 1e-12)
    throw Error("merge: data sets carry different lattices");
  if (!a_sf && b_sf) out.lattice = b.lattice;
  out.obs.insert(out.obs.end(), b.obs.begin(), b.obs.end());
  if (a.prov.reference != b.prov.reference && !a.prov.reference.empty() &&
      !b.prov.reference.empty())
    throw Error("merge: data sets come from different reference matrices");
  if (out.prov.reference.empty()) out.prov.reference = b.prov.reference;
  return out;
}

namespace {

// Box-Muller on explicit 53-bit draws; std::normal_distribution is
// implementation-defined, which would make data sets non-portable.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}
  double next() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    double u1 = ((rng_() >> 11) + 1.0) * 0x1p-53;  // in (0, 1]
    double u2 = (rng_() >> 11) * 0x1p-53;          // in [0, 1)
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    have_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

 private:
  std::mt19937_64 rng_;
  bool have_ = false;
  double spare_ = 0.0;
};

}  // namespace

DataSet add_noise(const DataSet& ds, double level, std::uint64_t seed) {
  if (level < 0.0) throw Error("add_noise: noise level must be non-negative");
  DataSet out = ds;
  out.prov.noise_level = level;
  out.prov.seed = seed;
  if (level == 0.0) {
    for (auto& o : out.obs) {
      o.value = o.clean;
      o.sigma = 1.0;
    }
    return out;
  }
  NormalStream normal(seed);
  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  for (auto& o : out.obs) {
    double amp = std::abs(o.clean);
    // avoid zero sigmas downstream; records with exactly vanishing clean
    // values carry no noise but keep a tiny positive width
    double sigma = std::max(level * amp, 1e-30);
    if (o.kind == OperatorKind::StructureFactor) {
      double g1 = normal.next();
      double g2 = normal.next();
      o.value = o.clean + sigma * inv_rt2 * cdouble(g1, g2);
    } else {
      double g1 = normal.next();
      o.value = o.clean + cdouble(sigma * g1, 0.0);
    }
    o.sigma = sigma;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain-text data set format: '#key: value' headers, one record per line,
// and a trailing '#sha256:' digest of everything above it.
// ---------------------------------------------------------------------------

void write_dataset(const std::string& path, const DataSet& ds) {
  std::ostringstream body;
  body << "#format: 1\n";
  body << "#reference: " << (ds.prov.reference.empty() ? "-" : ds.prov.reference) << '\n';
  body << "#temperature: " << (ds.prov.temperature.empty() ? "-" : ds.prov.temperature) << '\n';
  body << "#noise: " << format_double(ds.prov.noise_level) << '\n';
  body << "#seed: " << ds.prov.seed << '\n';
  for (int d = 0; d < 3; ++d) {
    body << "#lattice_" << static_cast<char>('a' + d) << ':';
    for (int r = 0; r < 3; ++r) body << ' ' << format_double(ds.lattice(r, d));
    body << '\n';
  }
  for (const auto& o : ds.obs) {
    if (o.kind == OperatorKind::StructureFactor) {
      body << "SF " << o.hkl[0] << ' ' << o.hkl[1] << ' ' << o.hkl[2] << ' '
           << format_double(o.value.real()) << ' ' << format_double(o.value.imag()) << ' '
           << format_double(o.sigma) << ' ' << format_double(o.clean.real()) << ' '
           << format_double(o.clean.imag()) << '\n';
    } else {
      body << "DCP " << format_double(o.u[0]) << ' ' << format_double(o.u[1]) << ' '
           << format_double(o.u[2]) << ' ' << format_double(o.q) << ' '
           << format_double(o.value.real()) << ' ' << format_double(o.sigma) << ' '
           << format_double(o.clean.real()) << '\n';
    }
  }
  std::string text = body.str();
  text += "#sha256: " + sha256_hex(text) + '\n';
  write_text_file(path, text);
}

DataSet read_dataset(const std::string& path) {
  std::string text = read_text_file(path);
  // split off and verify the trailing digest line
  auto digest_pos = text.rfind("#sha256: ");
  if (digest_pos == std::string::npos)
    throw Error(path + ": missing trailing #sha256 line (file truncated?)");
  std::string body = text.substr(0, digest_pos);
  std::string digest_line = text.substr(digest_pos);
  auto fields = split_fields(digest_line);
  if (fields.size() != 2 || fields[1].size() != 64)
    throw Error(path + ": malformed #sha256 line");
  if (sha256_hex(body) != fields[1])
    throw Error(path + ": checksum mismatch; the file was modified or truncated");

  DataSet ds;
  auto lines = split_lines(body);
  bool format_seen = false;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string& line = lines[n];
    std::string where = path + ":" + std::to_string(n + 1);
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto f = split_fields(line.substr(1));
      if (f.empty()) continue;
      const std::string& key = f[0];
      if (key == "format:") {
        if (f.size() != 2 || f[1] != "1")
          throw Error(where + ": unsupported format version");
        format_seen = true;
      } else if (key == "reference:") {
        if (f.size() >= 2 && f[1] != "-") ds.prov.reference = f[1];
      } else if (key == "temperature:") {
        if (f.size() >= 2 && f[1] != "-") ds.prov.temperature = f[1];
      } else if (key == "noise:") {
        if (f.size() >= 2) ds.prov.noise_level = parse_double(f[1], where);
      } else if (key == "seed:") {
        if (f.size() >= 2) ds.prov.seed = static_cast<std::uint64_t>(
            std::strtoull(f[1].c_str(), nullptr, 10));
      } else if (key.rfind("lattice_", 0) == 0) {
        if (f.size() != 4) throw Error(where + ": lattice line needs three numbers");
        int col = key[8] - 'a';
        if (col < 0 || col > 2) throw Error(where + ": unknown lattice column");
        for (int r = 0; r < 3; ++r) ds.lattice(r, col) = parse_double(f[r + 1], where);
      }
      continue;
    }
    auto f = split_fields(line);
    if (f.empty()) continue;
    Observation o;
    if (f[0] == "SF") {
      if (f.size() != 9 && f.size() != 7)
        throw Error(where + ": SF record needs 6 or 8 fields after the tag");
      o.kind = OperatorKind::StructureFactor;
      for (int d = 0; d < 3; ++d) o.hkl[d] = static_cast<int>(parse_long(f[1 + d], where));
      o.value = cdouble(parse_double(f[4], where), parse_double(f[5], where));
      o.sigma = parse_double(f[6], where);
      o.clean = (f.size() == 9)
                    ? cdouble(parse_double(f[7], where), parse_double(f[8], where))
                    : o.value;
    } else if (f[0] == "DCP") {
      if (f.size() != 8 && f.size() != 7)
        throw Error(where + ": DCP record needs 6 or 7 fields after the tag");
      o.kind = OperatorKind::ComptonProfile;
      for (int d = 0; d < 3; ++d) o.u[d] = parse_double(f[1 + d], where);
      o.q = parse_double(f[4], where);
      o.value = cdouble(parse_double(f[5], where), 0.0);
      o.sigma = parse_double(f[6], where);
      o.clean = (f.size() == 8) ? cdouble(parse_double(f[7], where), 0.0) : o.value;
      // keep the parsed components verbatim so a write/read cycle is
      // bit-stable; renormalizing here would nudge the last bit
      if (std::abs(o.u.norm() - 1.0) > 1e-8)
        throw Error(where + ": DCP direction is not a unit vector");
    } else {
      throw Error(where + ": unknown record tag '" + f[0] + "'");
    }
    if (!(o.sigma > 0.0)) throw Error(where + ": sigma must be positive");
    ds.obs.push_back(o);
  }
  if (!format_seen) throw Error(path + ": missing '#format:' header");
  if (ds.count(OperatorKind::StructureFactor) > 0 && std::abs(ds.lattice.determinant()) < 1e-12)
    throw Error(path + ": SF records present but no usable lattice header");
  return ds;
}

std::vector<ScatteringOperator> build_operators(const BasisSet& basis, const CellImages& images,
                                                const DataSet& ds, const ThermalModel* thermal,
                                                Exec exec) {
  std::vector<ScatteringOperator> ops(ds.obs.size());
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (std::size_t k = 0; k < ds.obs.size(); ++k) {
    const Observation& o = ds.obs[k];
    if (o.kind == OperatorKind::StructureFactor) {
      ScatteringVector sv = scattering_vector_from_hkl(ds.lattice, o.hkl);
      ops[k] = sf_operator_cell(basis, images, sv, thermal);
    } else {
      ops[k] = dcp_operator(basis, {o.u, o.q});
    }
  }
  return ops;
}

Objective make_objective(const DataSet& ds, const std::vector<ScatteringOperator>& ops,
                         Weighting weighting) {
  if (ds.obs.size() != ops.size())
    throw Error("make_objective: operator count does not match the data set");
  Objective obj;
  obj.weighting = weighting;
  obj.terms.reserve(ds.obs.size());
  for (std::size_t k = 0; k < ds.obs.size(); ++k) {
    Objective::Term t;
    t.kind = ds.obs[k].kind;
    if (t.kind != ops[k].kind)
      throw Error("make_objective: operator/observation kind mismatch at record " +
                  std::to_string(k));
    t.op = ops[k].matrix;
    t.y = ds.obs[k].value;
    t.sigma = ds.obs[k].sigma;
    obj.terms.push_back(std::move(t));
  }
  return obj;
}

ResampleResult resample(const DataSet& clean, double noise_level, std::uint64_t base_seed,
                        int replicates, const BasisSet& basis, const CellImages& images,
                        const ThermalModel* thermal, const ConstraintSet& constraints,
                        const LowdinTransform& lowdin, const SolverSettings& settings,
                        Weighting weighting, Exec exec) {
  if (replicates <= 1) throw Error("resample: need at least two replicates");
  const int m = basis.size();
  // operators do not depend on the noise draw; build once
  auto ops = build_operators(basis, images, clean, thermal, exec);
  std::vector<MatX> ps(replicates), ps_perp(replicates);
  std::vector<double> chi2(replicates, -1.0);
  std::vector<int> ok(replicates, 0);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int r = 0; r < replicates; ++r) {
    DataSet noisy = add_noise(clean, noise_level, base_seed + static_cast<std::uint64_t>(r));
    Objective obj = make_objective(noisy, ops, weighting);
    try {
      Solution sol = solve(obj, constraints, lowdin, settings);
      if (sol.status != SolveStatus::Infeasible && sol.feasibility.feasible) {
        ps[r] = sol.P;
        ps_perp[r] = sol.P_perp;
        chi2[r] = sol.chi2_total;
        ok[r] = 1;
      }
    } catch (const Error&) {
      ok[r] = 0;
    }
  }
  ResampleResult res;
  res.replicates = replicates;
  res.mean_P = MatX::Zero(m, m);
  res.mean_P_perp = MatX::Zero(m, m);
  int n_ok = 0;
  for (int r = 0; r < replicates; ++r) {
    if (!ok[r]) {
      ++res.failures;
      continue;
    }
    res.mean_P += ps[r];
    res.mean_P_perp += ps_perp[r];
    res.chi2.push_back(chi2[r]);
    ++n_ok;
  }
  if (n_ok < 2) throw Error("resample: fewer than two replicates solved successfully");
  res.mean_P /= n_ok;
  res.mean_P_perp /= n_ok;
  MatX var_P = MatX::Zero(m, m), var_perp = MatX::Zero(m, m);
  for (int r = 0; r < replicates; ++r) {
    if (!ok[r]) continue;
    var_P += (ps[r] - res.mean_P).cwiseAbs2();
    var_perp += (ps_perp[r] - res.mean_P_perp).cwiseAbs2();
  }
  res.std_P = (var_P / (n_ok - 1)).cwiseSqrt();
  res.std_P_perp = (var_perp / (n_ok - 1)).cwiseSqrt();
  return res;
}

}  // namespace rdmrecon
