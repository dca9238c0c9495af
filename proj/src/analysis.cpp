#include "rdmrecon/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "rdmrecon/io_util.hpp"
#include "rdmrecon/solver.hpp"

namespace rdmrecon {

PathSamples sample_path(const PathSpec& spec) {
  if (spec.waypoints.size() < 2) throw Error("path: need at least two waypoints");
  if (spec.points < 2) throw Error("path: need at least two samples");
  std::vector<double> cum{0.0};
  for (std::size_t k = 1; k < spec.waypoints.size(); ++k)
    cum.push_back(cum.back() + (spec.waypoints[k] - spec.waypoints[k - 1]).norm());
  double total = cum.back();
  if (total <= 0.0) throw Error("path: zero total length");
  PathSamples out;
  out.positions.resize(spec.points);
  out.arc.resize(spec.points);
  for (int i = 0; i < spec.points; ++i) {
    double s = total * i / (spec.points - 1);
    auto it = std::upper_bound(cum.begin(), cum.end(), s);
    std::size_t seg = std::min<std::size_t>(cum.size() - 2, it - cum.begin() - 1);
    double seg_len = cum[seg + 1] - cum[seg];
    double f = seg_len > 0.0 ? (s - cum[seg]) / seg_len : 0.0;
    out.positions[i] = spec.waypoints[seg] + f * (spec.waypoints[seg + 1] - spec.waypoints[seg]);
    out.arc[i] = s;
  }
  return out;
}

Grid2D rdm_map(const MatX& P_ao, const BasisSet& basis, const PathSpec& path, Exec exec) {
  PathSamples s = sample_path(path);
  MatX phi = basis.evaluate(s.positions, exec);  // M x n
  Grid2D g;
  g.x = s.arc;
  g.y = s.arc;
  g.values = phi.transpose() * P_ao * phi;
  return g;
}

VecX density_on_points(const MatX& P_ao, const BasisSet& basis, const std::vector<Vec3>& points,
                       Exec exec) {
  MatX phi = basis.evaluate(points, exec);
  VecX out(points.size());
  for (int k = 0; k < out.size(); ++k) out[k] = phi.col(k).dot(P_ao * phi.col(k));
  return out;
}

VecX momentum_density_on_points(const MatX& P_ao, const BasisSet& basis,
                                const std::vector<Vec3>& points, Exec exec) {
  MatXc v = basis.evaluate_momentum(points, exec);
  VecX out(points.size());
  const double norm = std::pow(2.0 * kPi, -3);
  MatXc Pc = P_ao.cast<cdouble>();
  for (int k = 0; k < out.size(); ++k)
    out[k] = norm * (v.col(k).adjoint() * Pc * v.col(k))(0, 0).real();
  return out;
}

namespace {

std::vector<Vec3> grid_points(const GridSpec& spec, VecX& xs, VecX& ys) {
  if (spec.n1 < 2 || spec.n2 < 2) throw Error("grid: need at least 2 samples per axis");
  if (std::abs(spec.e1.norm() - 1.0) > 1e-10 || std::abs(spec.e2.norm() - 1.0) > 1e-10)
    throw Error("grid: axes must be unit vectors");
  xs.resize(spec.n1);
  ys.resize(spec.n2);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(spec.n1) * spec.n2);
  for (int i = 0; i < spec.n1; ++i) xs[i] = spec.len1 * i / (spec.n1 - 1);
  for (int j = 0; j < spec.n2; ++j) ys[j] = spec.len2 * j / (spec.n2 - 1);
  for (int i = 0; i < spec.n1; ++i)
    for (int j = 0; j < spec.n2; ++j)
      pts.push_back(spec.origin + xs[i] * spec.e1 + ys[j] * spec.e2);
  return pts;
}

}  // namespace

Grid2D density_map(const MatX& P_ao, const BasisSet& basis, const GridSpec& grid, Exec exec) {
  Grid2D g;
  auto pts = grid_points(grid, g.x, g.y);
  VecX d = density_on_points(P_ao, basis, pts, exec);
  g.values.resize(grid.n1, grid.n2);
  for (int i = 0; i < grid.n1; ++i)
    for (int j = 0; j < grid.n2; ++j) g.values(i, j) = d[i * grid.n2 + j];
  return g;
}

Grid2D deformation_map(const MatX& P_ao, const MatX& P_promolecule, const BasisSet& basis,
                       const GridSpec& grid, Exec exec) {
  if (P_promolecule.rows() != P_ao.rows() || P_promolecule.cols() != P_ao.cols())
    throw Error("deformation map: promolecule matrix dimension mismatch");
  return density_map(P_ao - P_promolecule, basis, grid, exec);
}

double deformation_charge(const MatX& P_ao, const MatX& P_promolecule, const BasisSet& basis) {
  MatX S = overlap_matrix(basis);
  return (S.cwiseProduct(P_ao - P_promolecule)).sum();
}

VecX dcp_curve(const MatX& P_ao, const BasisSet& basis, const Vec3& direction,
               const std::vector<double>& qs, Exec exec) {
  Vec3 u = direction;
  double n = u.norm();
  if (n < 1e-12) throw Error("dcp curve: zero direction");
  u /= n;
  std::vector<ComptonPoint> pts;
  pts.reserve(qs.size());
  for (double q : qs) pts.push_back({u, q});
  auto ops = dcp_operator_batch(basis, pts, exec);
  VecX out(qs.size());
  for (std::size_t k = 0; k < qs.size(); ++k)
    out[k] = ops[k].matrix.real().cwiseProduct(P_ao).sum();
  return out;
}

VecX dcp_anisotropy(const MatX& P_ao, const BasisSet& basis, const Vec3& u1, const Vec3& u2,
                    const std::vector<double>& qs, Exec exec) {
  return dcp_curve(P_ao, basis, u1, qs, exec) - dcp_curve(P_ao, basis, u2, qs, exec);
}

double kinetic_energy(const MatX& P_ao, const BasisSet& basis) {
  return kinetic_matrix(basis).cwiseProduct(P_ao).sum();
}

EnergyReport mean_field_energy(const MatX& P_ao, const BasisSet& basis, const EriTensor* eri) {
  const int m = basis.size();
  if (P_ao.rows() != m || P_ao.cols() != m)
    throw Error("energy: population matrix does not match the basis");
  EnergyReport rep;
  rep.kinetic = kinetic_energy(P_ao, basis);
  rep.nuclear_attraction = nuclear_attraction_matrix(basis).cwiseProduct(P_ao).sum();
  EriTensor local;
  if (eri == nullptr) {
    local = eri_tensor(basis);
    eri = &local;
  }
  if (eri->size() != m) throw Error("energy: two-electron tensor dimension mismatch");
  // closed-shell J - K/2 contracted twice with P
  double e2 = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (P_ao(i, j) == 0.0) continue;
      double acc = 0.0;
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l)
          acc += P_ao(k, l) * ((*eri)(i, j, k, l) - 0.5 * (*eri)(i, l, k, j));
      e2 += P_ao(i, j) * acc;
    }
  rep.two_electron = 0.5 * e2;
  rep.nuclear_repulsion = nuclear_repulsion_energy(basis);
  rep.total = rep.kinetic + rep.nuclear_attraction + rep.two_electron + rep.nuclear_repulsion;
  double v = rep.nuclear_attraction + rep.two_electron + rep.nuclear_repulsion;
  if (std::abs(rep.kinetic) < 1e-14) throw Error("energy: vanishing kinetic energy");
  rep.virial_ratio = -v / (2.0 * rep.kinetic);
  return rep;
}

// ---------------------------------------------------------------------------
// ADP refinement.  The model for each reflection splits into a
// thermal-independent two-center part and per-(image, atom) one-center
// partial traces; only the latter feel the displacement tensors, so they are
// precomputed once and the Gauss-Newton iterations touch nothing heavier
// than small dense algebra.
// ---------------------------------------------------------------------------

namespace {

struct AdpWorkspace {
  // per observation: fixed part and q vectors per image
  std::vector<cdouble> fixed;                 // [obs]
  std::vector<std::vector<Vec3>> q_img;       // [obs][image]
  std::vector<std::vector<cdouble>> phase;    // [obs][image] exp(-i q . t_m)
  // partial one-center traces: [obs][image][atom]
  std::vector<std::vector<std::vector<cdouble>>> partial;
  std::vector<double> weight;                 // [obs]
  std::vector<cdouble> target;                // [obs]
};

// Pack/unpack the six unique components of a symmetric tensor.
void tensor_to_params(const Mat3& b, double* p) {
  p[0] = b(0, 0);
  p[1] = b(1, 1);
  p[2] = b(2, 2);
  p[3] = b(0, 1);
  p[4] = b(0, 2);
  p[5] = b(1, 2);
}

Mat3 params_to_tensor(const double* p) {
  Mat3 b;
  b << p[0], p[3], p[4], p[3], p[1], p[5], p[4], p[5], p[2];
  return b;
}

double dw_exponent_coeff(const Vec3& q, int comp) {
  switch (comp) {
    case 0: return q[0] * q[0];
    case 1: return q[1] * q[1];
    case 2: return q[2] * q[2];
    case 3: return 2.0 * q[0] * q[1];
    case 4: return 2.0 * q[0] * q[2];
    default: return 2.0 * q[1] * q[2];
  }
}

Mat3 project_psd3(const Mat3& b) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (b + b.transpose()));
  Eigen::Vector3d ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

AdpResult refine_adps(const BasisSet& basis, const CellImages& images, const DataSet& sf_data,
                      const MatX& P_ao, const ThermalModel& initial, const AdpSettings& settings) {
  images.validate();
  const int natoms = static_cast<int>(basis.atoms().size());
  initial.validate(natoms);
  if (!initial.enabled) throw Error("adp refinement: initial model must be enabled");
  const int m = basis.size();
  if (P_ao.rows() != m) throw Error("adp refinement: population matrix dimension mismatch");

  std::vector<const Observation*> sf;
  for (const auto& o : sf_data.obs)
    if (o.kind == OperatorKind::StructureFactor) sf.push_back(&o);
  if (sf.empty()) throw Error("adp refinement: no structure-factor records");
  const int nobs = static_cast<int>(sf.size());
  const int nimg = images.count();

  AdpWorkspace ws;
  ws.fixed.assign(nobs, cdouble(0.0, 0.0));
  ws.q_img.assign(nobs, std::vector<Vec3>(nimg));
  ws.phase.assign(nobs, std::vector<cdouble>(nimg));
  ws.partial.assign(nobs, std::vector<std::vector<cdouble>>(nimg, std::vector<cdouble>(natoms)));
  ws.weight.resize(nobs);
  ws.target.resize(nobs);

  const auto& funcs = basis.functions();
#pragma omp parallel for schedule(dynamic)
  for (int o = 0; o < nobs; ++o) {
    ScatteringVector sv = scattering_vector_from_hkl(sf_data.lattice, sf[o]->hkl);
    ws.target[o] = sf[o]->value;
    ws.weight[o] = settings.weighting == Weighting::InverseVariance
                       ? 1.0 / (sf[o]->sigma * sf[o]->sigma)
                       : 1.0;
    for (int im = 0; im < nimg; ++im) {
      Vec3 qm = images.rotations[im].transpose() * sv.q;
      ws.q_img[o][im] = qm;
      ws.phase[o][im] = std::exp(cdouble(0.0, -sv.q.dot(images.translations[im])));
      ScatteringOperator op = sf_operator(basis, {qm, std::nullopt, sv.stol}, nullptr);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          cdouble contrib = op.matrix(i, j) * P_ao(i, j) * ws.phase[o][im];
          if (funcs[i].atom == funcs[j].atom)
            ws.partial[o][im][funcs[i].atom] += contrib;
          else
            ws.fixed[o] += contrib;
        }
    }
  }

  const int nparam = 6 * natoms;
  VecX params(nparam);
  for (int a = 0; a < natoms; ++a) tensor_to_params(initial.displacement[a], params.data() + 6 * a);

  auto model_residuals = [&](const VecX& p, VecX& resid, MatX* jac) {
    resid.resize(2 * nobs);
    if (jac != nullptr) jac->setZero(2 * nobs, nparam);
    std::vector<Mat3> tensors(natoms);
    for (int a = 0; a < natoms; ++a) tensors[a] = params_to_tensor(p.data() + 6 * a);
#pragma omp parallel for schedule(static)
    for (int o = 0; o < nobs; ++o) {
      cdouble f = ws.fixed[o];
      for (int im = 0; im < nimg; ++im)
        for (int a = 0; a < natoms; ++a) {
          const Vec3& qm = ws.q_img[o][im];
          double damp = std::exp(-qm.dot(tensors[a] * qm));
          f += damp * ws.partial[o][im][a];
          if (jac != nullptr) {
            for (int c = 0; c < 6; ++c) {
              cdouble d = -dw_exponent_coeff(qm, c) * damp * ws.partial[o][im][a];
              (*jac)(2 * o, 6 * a + c) += std::sqrt(ws.weight[o]) * d.real();
              (*jac)(2 * o + 1, 6 * a + c) += std::sqrt(ws.weight[o]) * d.imag();
            }
          }
        }
      cdouble r = f - ws.target[o];
      double sw = std::sqrt(ws.weight[o]);
      resid[2 * o] = sw * r.real();
      resid[2 * o + 1] = sw * r.imag();
    }
    // serial reduction keeps the value independent of the thread count
    return resid.squaredNorm();
  };

  AdpResult result;
  VecX resid;
  MatX jac;
  double chi2 = model_residuals(params, resid, &jac);
  double lambda = settings.initial_damping;
  bool converged = false;
  int it = 0;
  for (it = 0; it < settings.max_iterations; ++it) {
    VecX grad = 2.0 * jac.transpose() * resid;
    if (grad.norm() <= settings.gradient_tol * std::max(1.0, chi2)) {
      converged = true;
      break;
    }
    MatX jtj = jac.transpose() * jac;
    bool stepped = false;
    for (int tries = 0; tries < 24; ++tries) {
      MatX damped = jtj;
      damped.diagonal().array() += lambda * (jtj.diagonal().array().abs() + 1e-12);
      VecX delta = damped.ldlt().solve(-jac.transpose() * resid);
      VecX cand = params + delta;
      // keep tensors physical
      for (int a = 0; a < natoms; ++a) {
        Mat3 b = project_psd3(params_to_tensor(cand.data() + 6 * a));
        tensor_to_params(b, cand.data() + 6 * a);
      }
      VecX cand_resid;
      double cand_chi2 = model_residuals(cand, cand_resid, nullptr);
      if (cand_chi2 < chi2) {
        params = cand;
        lambda = std::max(lambda / 3.0, 1e-12);
        chi2 = model_residuals(params, resid, &jac);
        stepped = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!stepped) break;  // damping exhausted; gradient check above decides
  }
  result.model.enabled = true;
  result.model.displacement.resize(natoms);
  for (int a = 0; a < natoms; ++a)
    result.model.displacement[a] = project_psd3(params_to_tensor(params.data() + 6 * a));
  result.chi2 = chi2;
  result.iterations = it;
  result.converged = converged || chi2 <= 1e-20;
  return result;
}

std::vector<CutoffScanRow> scan_cutoff(const BasisSet& basis, const LowdinTransform& lowdin,
                                       const ConstraintSet& constraints, const DataSet& data,
                                       const CellImages& images, const ThermalModel* thermal,
                                       const std::vector<double>& cutoffs,
                                       const SolverSettings& settings, Weighting weighting,
                                       const EriTensor* eri) {
  if (cutoffs.empty()) throw Error("cutoff scan: no cutoffs given");
  EriTensor local;
  if (eri == nullptr) {
    local = eri_tensor(basis);
    eri = &local;
  }
  std::vector<CutoffScanRow> rows;
  for (double cutoff : cutoffs) {
    DataSet subset;
    subset.lattice = data.lattice;
    subset.prov = data.prov;
    for (const auto& o : data.obs) {
      if (o.kind == OperatorKind::StructureFactor) {
        double stol = scattering_vector_from_hkl(data.lattice, o.hkl).stol;
        if (stol <= cutoff + 1e-12) subset.obs.push_back(o);
      } else {
        subset.obs.push_back(o);
      }
    }
    auto ops = build_operators(basis, images, subset, thermal);
    Objective obj = make_objective(subset, ops, weighting);
    Solution sol = solve(obj, constraints, lowdin, settings);
    CutoffScanRow row;
    row.cutoff = cutoff;
    row.n_sf = subset.count(OperatorKind::StructureFactor);
    row.chi2_sf = sol.chi2_sf;
    row.chi2_dcp = sol.chi2_dcp;
    row.energy = mean_field_energy(sol.P, basis, eri);
    row.P = sol.P;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Text artifacts.
// ---------------------------------------------------------------------------

void write_grid_csv(const std::string& path, const Grid2D& grid) {
  std::ostringstream ss;
  ss << "x\\y";
  for (int j = 0; j < grid.y.size(); ++j) ss << ',' << format_double(grid.y[j]);
  ss << '\n';
  for (int i = 0; i < grid.x.size(); ++i) {
    ss << format_double(grid.x[i]);
    for (int j = 0; j < grid.y.size(); ++j) ss << ',' << format_double(grid.values(i, j));
    ss << '\n';
  }
  write_text_file(path, ss.str());
}

void write_curve_csv(const std::string& path, const std::string& xname, const std::string& yname,
                     const VecX& x, const VecX& y) {
  if (x.size() != y.size()) throw Error("curve csv: length mismatch");
  std::ostringstream ss;
  ss << xname << ',' << yname << '\n';
  for (int i = 0; i < x.size(); ++i)
    ss << format_double(x[i]) << ',' << format_double(y[i]) << '\n';
  write_text_file(path, ss.str());
}

void write_scan_csv(const std::string& path, const std::vector<CutoffScanRow>& rows) {
  std::ostringstream ss;
  ss << "cutoff,n_sf,chi2_sf,chi2_dcp,kinetic,nuclear_attraction,two_electron,"
        "nuclear_repulsion,total,virial_ratio\n";
  for (const auto& r : rows) {
    ss << format_double(r.cutoff) << ',' << r.n_sf << ',' << format_double(r.chi2_sf) << ','
       << format_double(r.chi2_dcp) << ',' << format_double(r.energy.kinetic) << ','
       << format_double(r.energy.nuclear_attraction) << ','
       << format_double(r.energy.two_electron) << ','
       << format_double(r.energy.nuclear_repulsion) << ',' << format_double(r.energy.total)
       << ',' << format_double(r.energy.virial_ratio) << '\n';
  }
  write_text_file(path, ss.str());
}

// ---------------------------------------------------------------------------
// Minimal marching-squares contour plot.
// ---------------------------------------------------------------------------

namespace {

struct Segment {
  double x0, y0, x1, y1;
};

void marching_squares(const Grid2D& g, double level, std::vector<Segment>& segs) {
  for (int i = 0; i + 1 < g.x.size(); ++i)
    for (int j = 0; j + 1 < g.y.size(); ++j) {
      double v00 = g.values(i, j) - level;
      double v10 = g.values(i + 1, j) - level;
      double v01 = g.values(i, j + 1) - level;
      double v11 = g.values(i + 1, j + 1) - level;
      auto cross = [](double a, double b) { return (a < 0.0) != (b < 0.0); };
      std::vector<std::pair<double, double>> pts;
      // lerp along each crossed edge
      if (cross(v00, v10))
        pts.push_back({g.x[i] + (g.x[i + 1] - g.x[i]) * v00 / (v00 - v10), g.y[j]});
      if (cross(v01, v11))
        pts.push_back({g.x[i] + (g.x[i + 1] - g.x[i]) * v01 / (v01 - v11), g.y[j + 1]});
      if (cross(v00, v01))
        pts.push_back({g.x[i], g.y[j] + (g.y[j + 1] - g.y[j]) * v00 / (v00 - v01)});
      if (cross(v10, v11))
        pts.push_back({g.x[i + 1], g.y[j] + (g.y[j + 1] - g.y[j]) * v10 / (v10 - v11)});
      if (pts.size() == 2)
        segs.push_back({pts[0].first, pts[0].second, pts[1].first, pts[1].second});
      else if (pts.size() == 4) {  // saddle: connect pairwise in order
        segs.push_back({pts[0].first, pts[0].second, pts[2].first, pts[2].second});
        segs.push_back({pts[1].first, pts[1].second, pts[3].first, pts[3].second});
      }
    }
}

}  // namespace

void write_grid_svg(const std::string& path, const Grid2D& grid,
                    const std::vector<double>& levels_in) {
  std::vector<double> levels = levels_in;
  if (levels.empty()) {
    for (int k = 0; k < 8; ++k) {
      double v = 0.01 * std::pow(2.0, k);
      levels.push_back(v);
      levels.push_back(-v);
    }
  }
  const double w = 640.0, h = 640.0, margin = 40.0;
  double x0 = grid.x.minCoeff(), x1 = grid.x.maxCoeff();
  double y0 = grid.y.minCoeff(), y1 = grid.y.maxCoeff();
  auto sx = [&](double x) { return margin + (x - x0) / std::max(1e-300, x1 - x0) * (w - 2 * margin); };
  auto sy = [&](double y) { return h - margin - (y - y0) / std::max(1e-300, y1 - y0) * (h - 2 * margin); };
  std::ostringstream ss;
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  ss << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  ss << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << w - 2 * margin
     << "\" height=\"" << h - 2 * margin << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double level : levels) {
    std::vector<Segment> segs;
    marching_squares(grid, level, segs);
    if (segs.empty()) continue;
    const char* color = level >= 0.0 ? "#1f4e9c" : "#b02020";
    const char* dash = level >= 0.0 ? "" : " stroke-dasharray=\"4 3\"";
    ss << "<g stroke=\"" << color << "\" stroke-width=\"1\" fill=\"none\"" << dash << ">\n";
    for (const auto& s : segs)
      ss << "<line x1=\"" << sx(s.x0) << "\" y1=\"" << sy(s.y0) << "\" x2=\"" << sx(s.x1)
         << "\" y2=\"" << sy(s.y1) << "\"/>\n";
    ss << "</g>\n";
  }
  ss << "</svg>\n";
  write_text_file(path, ss.str());
}

// ---------------------------------------------------------------------------
// Population-matrix files.
// ---------------------------------------------------------------------------

void save_population(const std::string& path, const PopulationMatrix& pm) {
  nlohmann::json j;
  j["basis_hash"] = pm.basis_hash;
  j["N"] = pm.N;
  j["M"] = static_cast<int>(pm.P.rows());
  nlohmann::json arr = nlohmann::json::array();
  for (int r = 0; r < pm.P.rows(); ++r)
    for (int c = 0; c < pm.P.cols(); ++c) arr.push_back(pm.P(r, c));
  j["P"] = std::move(arr);
  write_text_file(path, j.dump() + "\n");
}

PopulationMatrix load_population(const std::string& path, const BasisSet& basis,
                                 const LowdinTransform& lowdin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  std::string want = j.value("basis_hash", "");
  if (want != basis.hash())
    throw Error(path + ": population matrix was built for basis " + want +
                ", current basis is " + basis.hash());
  const int m = j.value("M", 0);
  if (m != basis.size()) throw Error(path + ": dimension does not match the basis");
  const auto& arr = j.at("P");
  if (!arr.is_array() || static_cast<int>(arr.size()) != m * m)
    throw Error(path + ": expected " + std::to_string(m * m) + " matrix entries");
  MatX P(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) P(r, c) = arr.at(r * m + c).get<double>();
  return PopulationMatrix::from_ao(P, lowdin, basis.hash());
}

}  // namespace rdmrecon
