#include "rdmrecon/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <sstream>

#include "rdmrecon/io_util.hpp"

namespace rdmrecon {

MatX project_psd(const MatX& A) {
  MatX sym = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<MatX> es(sym);
  if (es.info() != Eigen::Success) throw Error("project_psd: eigendecomposition failed");
  VecX ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

VecX svec(const MatX& A) {
  const int m = static_cast<int>(A.rows());
  VecX v(m * (m + 1) / 2);
  const double rt2 = std::sqrt(2.0);
  int k = 0;
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < j; ++i) v[k++] = rt2 * A(i, j);
    v[k++] = A(j, j);
  }
  return v;
}

MatX unsvec(const VecX& v, int m) {
  if (v.size() != m * (m + 1) / 2) throw Error("unsvec: length does not match dimension");
  MatX A(m, m);
  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  int k = 0;
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < j; ++i) {
      double x = v[k++] * inv_rt2;
      A(i, j) = x;
      A(j, i) = x;
    }
    A(j, j) = v[k++];
  }
  return A;
}

// ---------------------------------------------------------------------------
// Joint eigenvalue projection: given all eigenvalues of the block matrices,
// find theta such that sum_i clip(lambda_i - theta, 0, 2) = target.  The sum
// is continuous, piecewise linear and non-increasing in theta, so bisection
// followed by an exact solve on the identified free set is robust.
// ---------------------------------------------------------------------------

namespace {

double clip_sum(const VecX& ev, double theta) {
  double s = 0.0;
  for (int i = 0; i < ev.size(); ++i) s += std::clamp(ev[i] - theta, 0.0, 2.0);
  return s;
}

double solve_shift(const VecX& ev, double target) {
  const int n = static_cast<int>(ev.size());
  if (target < -1e-9 || target > 2.0 * n + 1e-9)
    throw Error("projection: trace target " + format_double(target) + " is outside [0, " +
                format_double(2.0 * n) + "]");
  double lo = ev.minCoeff() - 3.0, hi = ev.maxCoeff() + 1.0;
  for (int it = 0; it < 120; ++it) {
    double mid = 0.5 * (lo + hi);
    if (clip_sum(ev, mid) >= target)
      lo = mid;
    else
      hi = mid;
  }
  double theta = 0.5 * (lo + hi);
  // exact solve on the free set identified by the bisection
  for (int pass = 0; pass < 4; ++pass) {
    int nfree = 0, ncapped = 0;
    double sum_free = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = ev[i] - theta;
      if (d >= 2.0) {
        ++ncapped;
      } else if (d > 0.0) {
        ++nfree;
        sum_free += ev[i];
      }
    }
    if (nfree == 0) break;
    double exact = (sum_free - (target - 2.0 * ncapped)) / nfree;
    if (std::abs(exact - theta) < 1e-15 * (1.0 + std::abs(theta))) {
      theta = exact;
      break;
    }
    theta = exact;
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Reduced problem: symmetry blocks with the frozen-core span removed.  The
// optimization variable is the stacked svec of one symmetric matrix per
// block; the frozen part contributes a constant to every predicted value.
// ---------------------------------------------------------------------------

struct ReducedSpace {
  std::vector<MatX> V;           // M x m_b orthonormal column blocks
  std::vector<int> dims;         // m_b
  std::vector<int> svec_offset;  // start of each block inside x
  int total_dim = 0;             // length of x
  int total_cols = 0;            // sum m_b
  double trace_target = 0.0;     // N minus frozen electrons
  MatX core_part;                // fixed Lowdin-basis contribution
  bool has_core = false;
};

ReducedSpace build_space(const ConstraintSet& cs) {
  const int m = cs.M;
  ReducedSpace rs;
  rs.core_part = MatX::Zero(m, m);
  double n_eff = cs.N;
  MatX C;
  if (cs.core) {
    C = cs.core->C;
    rs.core_part = cs.core->projector();
    rs.has_core = true;
    n_eff -= cs.core->electrons();
  }
  std::vector<std::pair<int, int>> spans;  // (offset, size) in the Lowdin basis
  MatX U;
  if (cs.symmetry) {
    U = cs.symmetry->U;
    int off = 0;
    for (const auto& [label, size] : cs.symmetry->blocks) {
      spans.emplace_back(off, size);
      off += size;
    }
  } else {
    U = MatX::Identity(m, m);
    spans.emplace_back(0, m);
  }
  for (const auto& [off, size] : spans) {
    MatX Ub = U.middleCols(off, size);
    MatX Vb;
    if (rs.has_core) {
      MatX Cb = Ub.transpose() * C;  // core directions expressed in this block
      Eigen::JacobiSVD<MatX> svd(Cb, Eigen::ComputeFullU);
      int rank = 0;
      for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > 1e-8) ++rank;
      if (rank == size) continue;  // block fully frozen
      Vb = Ub * svd.matrixU().rightCols(size - rank);
    } else {
      Vb = Ub;
    }
    rs.svec_offset.push_back(rs.total_dim);
    rs.dims.push_back(static_cast<int>(Vb.cols()));
    rs.total_dim += static_cast<int>(Vb.cols() * (Vb.cols() + 1)) / 2;
    rs.total_cols += static_cast<int>(Vb.cols());
    rs.V.push_back(std::move(Vb));
  }
  rs.trace_target = n_eff;
  return rs;
}

VecX space_svec(const ReducedSpace& rs, const MatX& P_perp) {
  VecX x(rs.total_dim);
  for (std::size_t b = 0; b < rs.V.size(); ++b) {
    MatX Xb = rs.V[b].transpose() * P_perp * rs.V[b];
    Xb = 0.5 * (Xb + Xb.transpose().eval());
    x.segment(rs.svec_offset[b], Xb.rows() * (Xb.rows() + 1) / 2) = svec(Xb);
  }
  return x;
}

MatX space_unsvec(const ReducedSpace& rs, const VecX& x) {
  MatX P = rs.core_part;
  for (std::size_t b = 0; b < rs.V.size(); ++b) {
    int mb = rs.dims[b];
    MatX Xb = unsvec(x.segment(rs.svec_offset[b], mb * (mb + 1) / 2), mb);
    P.noalias() += rs.V[b] * Xb * rs.V[b].transpose();
  }
  return P;
}

// Exact Euclidean projection of x onto {each block in [0, 2I], joint trace}.
VecX project_space(const ReducedSpace& rs, const VecX& x) {
  std::vector<Eigen::SelfAdjointEigenSolver<MatX>> eigs(rs.V.size());
  VecX all_ev(rs.total_cols);
  int evoff = 0;
  for (std::size_t b = 0; b < rs.V.size(); ++b) {
    int mb = rs.dims[b];
    MatX Xb = unsvec(x.segment(rs.svec_offset[b], mb * (mb + 1) / 2), mb);
    eigs[b].compute(Xb);
    if (eigs[b].info() != Eigen::Success)
      throw Error("projection: block eigendecomposition failed");
    all_ev.segment(evoff, mb) = eigs[b].eigenvalues();
    evoff += mb;
  }
  double theta = solve_shift(all_ev, rs.trace_target);
  VecX out(rs.total_dim);
  evoff = 0;
  for (std::size_t b = 0; b < rs.V.size(); ++b) {
    int mb = rs.dims[b];
    VecX ev = all_ev.segment(evoff, mb);
    evoff += mb;
    for (int i = 0; i < mb; ++i) ev[i] = std::clamp(ev[i] - theta, 0.0, 2.0);
    MatX Xb = eigs[b].eigenvectors() * ev.asDiagonal() * eigs[b].eigenvectors().transpose();
    out.segment(rs.svec_offset[b], mb * (mb + 1) / 2) = svec(0.5 * (Xb + Xb.transpose().eval()));
  }
  return out;
}

struct DataRows {
  MatX G;   // n_rows x dim
  VecX y;   // targets with the frozen-core contribution removed
  VecX w;   // per-row weights
};

DataRows build_rows(const Objective& obj, const ReducedSpace& rs, const LowdinTransform& lowdin,
                    int m) {
  long n_rows = 0;
  for (const auto& t : obj.terms)
    n_rows += (t.kind == OperatorKind::StructureFactor) ? 2 : 1;
  DataRows rows;
  rows.G.resize(n_rows, rs.total_dim);
  rows.y.resize(n_rows);
  rows.w.resize(n_rows);
  const MatXc Xc = lowdin.X.cast<cdouble>();
  const MatXc core_c = rs.core_part.cast<cdouble>();
  long r = 0;
  for (const auto& t : obj.terms) {
    if (t.op.rows() != m || t.op.cols() != m)
      throw Error("objective: operator dimension mismatch");
    if (!(t.sigma > 0.0)) throw Error("objective: sigma must be positive");
    const double w =
        (obj.weighting == Weighting::InverseVariance) ? 1.0 / (t.sigma * t.sigma) : 1.0;
    MatXc op_perp = Xc * t.op * Xc;
    cdouble shift(0.0, 0.0);
    if (rs.has_core) shift = op_perp.cwiseProduct(core_c.transpose()).sum();
    auto emit = [&](const MatX& part, double target) {
      for (std::size_t b = 0; b < rs.V.size(); ++b) {
        MatX Ab = rs.V[b].transpose() * part * rs.V[b];
        Ab = 0.5 * (Ab + Ab.transpose().eval());
        rows.G.row(r).segment(rs.svec_offset[b], Ab.rows() * (Ab.rows() + 1) / 2) =
            svec(Ab).transpose();
      }
      rows.y[r] = target;
      rows.w[r] = w;
      ++r;
    };
    if (t.kind == OperatorKind::StructureFactor) {
      emit(op_perp.real(), (t.y - shift).real());
      emit(op_perp.imag(), (t.y - shift).imag());
    } else {
      emit(op_perp.real(), (t.y - shift).real());
    }
  }
  return rows;
}

double power_iteration_norm(const MatX& H) {
  const int n = static_cast<int>(H.rows());
  VecX v = VecX::Ones(n) / std::sqrt(static_cast<double>(n));
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    VecX w = H * v;
    double nw = w.norm();
    if (nw < 1e-300) return 0.0;
    v = w / nw;
    double next = v.dot(H * v);
    if (std::abs(next - lambda) < 1e-10 * std::max(1.0, std::abs(next))) return next;
    lambda = next;
  }
  return lambda;
}

}  // namespace

MatX project_feasible(const MatX& P_perp, const ConstraintSet& cs) {
  if (P_perp.rows() != cs.M || P_perp.cols() != cs.M)
    throw Error("project_feasible: dimension mismatch");
  if (cs.N < -1e-9 || cs.N > 2.0 * cs.M + 1e-9)
    throw Error("project_feasible: constraint set is empty (N outside [0, 2M])");
  ReducedSpace rs = build_space(cs);
  if (rs.trace_target < -1e-9 || rs.trace_target > 2.0 * rs.total_cols + 1e-9)
    throw Error("project_feasible: constraint set is empty after removing the frozen core");
  VecX x = space_svec(rs, 0.5 * (P_perp + P_perp.transpose()));
  return space_unsvec(rs, project_space(rs, x));
}

MisfitBreakdown misfit(const Objective& obj, const MatX& P_ao) {
  MisfitBreakdown out;
  for (const auto& t : obj.terms) {
    // P is symmetric, so tr(O P) contracts elementwise
    cdouble pred(t.op.real().cwiseProduct(P_ao).sum(), t.op.imag().cwiseProduct(P_ao).sum());
    double r2 = std::norm(pred - t.y) / (t.sigma * t.sigma);
    if (t.kind == OperatorKind::StructureFactor)
      out.sf += r2;
    else
      out.dcp += r2;
  }
  out.total = out.sf + out.dcp;
  return out;
}

// ---------------------------------------------------------------------------
// Operator-splitting solve.  The smooth part is the quadratic data misfit,
// handled through a cached Cholesky factor of (2 G^T W G + rho I); the
// nonsmooth part is the indicator of the feasible set, handled by the exact
// spectral projection above.  Every z iterate is feasible; the best one seen
// is polished by a monotone projected-gradient tail, so the reported
// objective trace is non-increasing by construction.
// ---------------------------------------------------------------------------

Solution solve(const Objective& obj, const ConstraintSet& cs, const LowdinTransform& lowdin,
               const SolverSettings& settings) {
  const auto t_start = std::chrono::steady_clock::now();
  const int m = cs.M;
  if (lowdin.S.rows() != m) throw Error("solve: Lowdin transform dimension mismatch");
  auto log = [&](const std::string& s) {
    if (settings.log) settings.log(s);
  };

  Solution sol;
  ReducedSpace rs;
  bool feasible_set = cs.N >= -1e-9 && cs.N <= 2.0 * m + 1e-9;
  if (feasible_set) {
    rs = build_space(cs);
    feasible_set = rs.trace_target >= -1e-9 && rs.trace_target <= 2.0 * rs.total_cols + 1e-9;
  }
  if (!feasible_set) {
    sol.status = SolveStatus::Infeasible;
    sol.P_perp = MatX::Zero(m, m);
    sol.P = MatX::Zero(m, m);
    sol.feasibility.feasible = false;
    sol.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    log("solve: constraint set is infeasible");
    return sol;
  }

  DataRows rows = build_rows(obj, rs, lowdin, m);
  const int dim = rs.total_dim;

  auto finish = [&](const VecX& x_best, double f_best, long iters, SolveStatus status,
                    std::vector<double> trace) -> Solution& {
    sol.status = status;
    sol.P_perp = space_unsvec(rs, x_best);
    sol.P_perp = 0.5 * (sol.P_perp + sol.P_perp.transpose().eval());
    sol.P = lowdin.X * sol.P_perp * lowdin.X;
    sol.P = 0.5 * (sol.P + sol.P.transpose().eval());
    sol.objective = f_best;
    MisfitBreakdown chi = misfit(obj, sol.P);
    sol.chi2_sf = chi.sf;
    sol.chi2_dcp = chi.dcp;
    sol.chi2_total = chi.total;
    sol.feasibility = check_feasibility(sol.P_perp, cs);
    sol.iterations = iters;
    sol.accepted_objectives = std::move(trace);
    sol.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return sol;
  };

  // start from the maximally mixed feasible point
  VecX x0;
  {
    MatX Pinit = MatX::Identity(m, m) * (cs.N / m);
    x0 = project_space(rs, space_svec(rs, Pinit));
  }

  if (rows.G.rows() == 0) return finish(x0, 0.0, 0, SolveStatus::Optimal, {0.0});

  auto objective_at = [&](const VecX& x) {
    VecX r = rows.G * x - rows.y;
    return r.dot(rows.w.asDiagonal() * r);
  };
  auto gradient_at = [&](const VecX& x) {
    VecX r = rows.w.asDiagonal() * (rows.G * x - rows.y);
    return VecX(2.0 * rows.G.transpose() * r);
  };

  const MatX H = 2.0 * rows.G.transpose() * rows.w.asDiagonal() * rows.G;
  const VecX b = 2.0 * rows.G.transpose() * (rows.w.asDiagonal() * rows.y);

  double rho = settings.rho;
  Eigen::LLT<MatX> llt;
  auto refactor = [&]() {
    MatX Hrho = H;
    Hrho.diagonal().array() += rho;
    llt.compute(Hrho);
    if (llt.info() != Eigen::Success) throw Error("solve: Cholesky factorization failed");
  };
  refactor();

  VecX z = x0, u = VecX::Zero(dim), x = x0;
  VecX z_best = z;
  double f_best = objective_at(z);
  std::vector<double> trace{f_best};
  std::deque<double> window{f_best};
  const double primal_tol = settings.primal_tol * m;
  long it = 0;
  SolveStatus status = SolveStatus::IterationLimit;
  for (it = 1; it <= settings.max_iterations; ++it) {
    x = llt.solve(b + rho * (z - u));
    VecX z_prev = z;
    z = project_space(rs, x + u);
    u += x - z;
    double f_z = objective_at(z);
    if (f_z < f_best) {
      f_best = f_z;
      z_best = z;
      trace.push_back(f_best);
    }
    window.push_back(f_best);
    if (static_cast<int>(window.size()) > settings.stall_window + 1) window.pop_front();
    double r_primal = (x - z).norm();
    double r_dual = rho * (z - z_prev).norm();
    if (settings.log_every > 0 && it % settings.log_every == 0) {
      std::ostringstream ss;
      ss << "iter " << it << " objective " << f_best << " primal " << r_primal << " dual "
         << r_dual << " rho " << rho;
      log(ss.str());
    }
    if (r_primal <= primal_tol && r_dual <= primal_tol) {
      status = SolveStatus::Optimal;
      break;
    }
    if (static_cast<int>(window.size()) == settings.stall_window + 1 &&
        window.front() - window.back() <= settings.stall_tol * std::max(1.0, window.back())) {
      status = SolveStatus::Optimal;
      break;
    }
    if (it % 25 == 0) {
      if (r_primal > 10.0 * r_dual && rho < 1e8) {
        rho *= 2.0;
        u /= 2.0;
        refactor();
      } else if (r_dual > 10.0 * r_primal && rho > 1e-8) {
        rho /= 2.0;
        u *= 2.0;
        refactor();
      }
    }
  }
  if (it > settings.max_iterations) it = settings.max_iterations;

  // monotone projected-gradient tail from the best feasible iterate
  VecX xp = z_best;
  double fp = f_best;
  double lip = 2.0 * power_iteration_norm(0.5 * H);  // H is already 2 G^T W G
  if (lip <= 0.0) lip = 1.0;
  double step = 1.0 / lip;
  int stall = 0;
  for (long k = 0; k < settings.polish_iterations; ++k) {
    VecX g = gradient_at(xp);
    VecX cand = project_space(rs, xp - step * g);
    double fc = objective_at(cand);
    int halvings = 0;
    while (fc > fp && halvings < 40) {
      step *= 0.5;
      cand = project_space(rs, xp - step * g);
      fc = objective_at(cand);
      ++halvings;
    }
    double improvement = fp - fc;
    if (fc < fp) {
      xp = cand;
      fp = fc;
      trace.push_back(fp);
    }
    if (improvement <= 1e-16 * std::max(1.0, fp)) {
      if (++stall > 10) break;
    } else {
      stall = 0;
    }
    if (halvings == 0) step = std::min(step * 1.5, 1e6 / std::max(lip, 1e-12));
  }
  if (fp < f_best) {
    f_best = fp;
    z_best = xp;
  }
  {
    std::ostringstream ss;
    ss << "solve: " << (status == SolveStatus::Optimal ? "converged" : "hit iteration limit")
       << " after " << it << " iterations, objective " << format_double(f_best);
    log(ss.str());
  }
  return finish(z_best, f_best, it, status, std::move(trace));
}

}  // namespace rdmrecon
