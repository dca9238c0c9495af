#include "rdmrecon/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rdmrecon/io_util.hpp"

namespace rdmrecon {

PopulationMatrix PopulationMatrix::from_ao(const MatX& P, const LowdinTransform& t,
                                           const std::string& basis_hash) {
  if (P.rows() != P.cols() || P.rows() != t.S.rows())
    throw Error("population matrix: dimension mismatch with overlap");
  if ((P - P.transpose()).norm() > 1e-8 * (1.0 + P.norm()))
    throw Error("population matrix: input is not symmetric");
  PopulationMatrix out;
  out.P = 0.5 * (P + P.transpose());
  out.P_perp = t.Shalf * out.P * t.Shalf;
  out.P_perp = 0.5 * (out.P_perp + out.P_perp.transpose().eval());
  out.N = out.P_perp.trace();
  out.basis_hash = basis_hash;
  return out;
}

PopulationMatrix PopulationMatrix::from_lowdin(const MatX& P_perp, const LowdinTransform& t,
                                               const std::string& basis_hash) {
  if (P_perp.rows() != P_perp.cols() || P_perp.rows() != t.S.rows())
    throw Error("population matrix: dimension mismatch with overlap");
  PopulationMatrix out;
  out.P_perp = 0.5 * (P_perp + P_perp.transpose());
  out.P = t.X * out.P_perp * t.X;
  out.P = 0.5 * (out.P + out.P.transpose().eval());
  out.N = out.P_perp.trace();
  out.basis_hash = basis_hash;
  return out;
}

CoreSpace build_core(const MatX& C_ao, const LowdinTransform& t) {
  if (C_ao.rows() != t.S.rows()) throw Error("core orbitals: row count must match basis size");
  if (C_ao.cols() == 0) throw Error("core orbitals: no columns given");
  MatX C = t.Shalf * C_ao;
  // Orthonormality should hold already if the orbitals came from a sane
  // calculation; re-orthonormalize to clean up round-off but reject genuinely
  // non-orthogonal input.
  MatX gram = C.transpose() * C;
  if ((gram - MatX::Identity(C.cols(), C.cols())).norm() > 1e-6)
    throw Error("core orbitals: columns are not orthonormal under the overlap metric");
  Eigen::HouseholderQR<MatX> qr(C);
  MatX Q = qr.householderQ() * MatX::Identity(C.rows(), C.cols());
  // keep the original orientation (QR can flip column signs)
  for (int c = 0; c < Q.cols(); ++c)
    if (Q.col(c).dot(C.col(c)) < 0.0) Q.col(c) = -Q.col(c);
  CoreSpace out;
  out.C = Q;
  out.n_orbitals = static_cast<int>(Q.cols());
  return out;
}

CoreSpace load_core(const std::string& path, const BasisSet& basis, const LowdinTransform& t) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  std::string want = j.value("basis_hash", "");
  if (want != basis.hash())
    throw Error(path + ": core orbitals were built for basis " + want + ", current basis is " +
                basis.hash());
  const int ncore = j.value("n_core", 0);
  if (ncore <= 0) throw Error(path + ": n_core must be positive");
  const auto& coef = j.at("coefficients");
  const int m = basis.size();
  if (!coef.is_array() || static_cast<int>(coef.size()) != m * ncore)
    throw Error(path + ": expected " + std::to_string(m * ncore) + " coefficients");
  MatX C(m, ncore);
  for (int c = 0; c < ncore; ++c)
    for (int r = 0; r < m; ++r) C(r, c) = coef.at(c * m + r).get<double>();
  return build_core(C, t);
}

// ---------------------------------------------------------------------------
// Symmetry.
// ---------------------------------------------------------------------------

std::vector<SymmetryOp> load_symmetry_ops(const std::string& path, const BasisSet& basis) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  if (!j.contains("operations") || !j.at("operations").is_array() || j.at("operations").empty())
    throw Error(path + ": expected a non-empty 'operations' list");
  std::vector<SymmetryOp> ops;
  const int natoms = static_cast<int>(basis.atoms().size());
  for (const auto& jo : j.at("operations")) {
    SymmetryOp op;
    const auto& jr = jo.at("R");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) op.R(r, c) = jr.at(r).at(c).get<double>();
    for (const auto& jp : jo.at("perm")) op.perm.push_back(jp.get<int>());
    if (static_cast<int>(op.perm.size()) != natoms)
      throw Error(path + ": permutation length != atom count");
    ops.push_back(std::move(op));
  }
  return ops;
}

namespace {

// Representation matrix of one operation in the AO basis: s functions map by
// atom permutation, p functions additionally mix through the rotation.
MatX rep_matrix(const BasisSet& basis, const SymmetryOp& op) {
  const int natoms = static_cast<int>(basis.atoms().size());
  if ((op.R.transpose() * op.R - Mat3::Identity()).norm() > 1e-10)
    throw Error("symmetry operation: rotation is not orthogonal");
  std::vector<int> seen(natoms, 0);
  for (int a = 0; a < natoms; ++a) {
    int b = op.perm[a];
    if (b < 0 || b >= natoms) throw Error("symmetry operation: permutation index out of range");
    if (seen[b]++) throw Error("symmetry operation: permutation is not a bijection");
    if (basis.atoms()[a].element != basis.atoms()[b].element)
      throw Error("symmetry operation: permutation maps between different elements");
    if ((op.R * basis.atoms()[a].position - basis.atoms()[b].position).norm() > 1e-8)
      throw Error("symmetry operation: rotation does not map atom " + std::to_string(a) +
                  " onto atom " + std::to_string(op.perm[a]));
  }
  // first function index of each shell, and the per-atom shell lists
  const auto& shells = basis.shells();
  std::vector<int> shell_first(shells.size());
  {
    int idx = 0;
    for (std::size_t s = 0; s < shells.size(); ++s) {
      shell_first[s] = idx;
      idx += shells[s].l == 0 ? 1 : 3;
    }
  }
  std::vector<std::vector<int>> atom_shells(natoms);
  for (std::size_t s = 0; s < shells.size(); ++s) atom_shells[shells[s].atom].push_back(s);
  auto shells_match = [&](const Shell& a, const Shell& b) {
    if (a.l != b.l || a.primitives.size() != b.primitives.size()) return false;
    for (std::size_t k = 0; k < a.primitives.size(); ++k)
      if (std::abs(a.primitives[k].exponent - b.primitives[k].exponent) > 1e-12 ||
          std::abs(a.primitives[k].coeff - b.primitives[k].coeff) > 1e-12)
        return false;
    return true;
  };
  const int m = basis.size();
  MatX D = MatX::Zero(m, m);
  for (int a = 0; a < natoms; ++a) {
    const auto& src = atom_shells[a];
    const auto& dst = atom_shells[op.perm[a]];
    if (src.size() != dst.size())
      throw Error("symmetry operation: atoms " + std::to_string(a) + " and " +
                  std::to_string(op.perm[a]) + " carry different shell sets");
    for (std::size_t k = 0; k < src.size(); ++k) {
      const Shell& ss = shells[src[k]];
      const Shell& sd = shells[dst[k]];
      if (!shells_match(ss, sd))
        throw Error("symmetry operation: shell mismatch between equivalent atoms " +
                    std::to_string(a) + " and " + std::to_string(op.perm[a]));
      if (ss.l == 0) {
        D(shell_first[dst[k]], shell_first[src[k]]) = 1.0;
      } else {
        // image of p_w is sum_v R(v,w) p_v on the image atom
        for (int w = 0; w < 3; ++w)
          for (int v = 0; v < 3; ++v)
            D(shell_first[dst[k]] + v, shell_first[src[k]] + w) = op.R(v, w);
      }
    }
  }
  return D;
}

std::string char_key(const VecX& chars) {
  // quantize characters so equal-irrep clusters compare equal
  std::ostringstream ss;
  for (int i = 0; i < chars.size(); ++i) {
    long q = std::lround(chars[i] * 1e6);
    if (q == 0) q = 0;  // normalize -0
    ss << q << ',';
  }
  return ss.str();
}

}  // namespace

double SymmetryAdaptation::off_block_mass(const MatX& A_lowdin) const {
  // zero out the declared blocks and measure what is left; summing the
  // off-block entries directly avoids the cancellation floor a
  // difference-of-squares would have
  MatX B = U.transpose() * A_lowdin * U;
  int off = 0;
  for (const auto& [label, size] : blocks) {
    B.block(off, off, size, size).setZero();
    off += size;
  }
  return B.norm();
}

SymmetryAdaptation symmetry_adapt(const BasisSet& basis, const LowdinTransform& t,
                                  const std::vector<SymmetryOp>& ops) {
  if (ops.empty()) throw Error("symmetry adaptation: empty operation list");
  const int m = basis.size();
  // AO representation, then conjugate into the Lowdin basis where it is
  // orthogonal.
  std::vector<MatX> reps;
  reps.reserve(ops.size());
  for (const auto& op : ops) {
    MatX D = rep_matrix(basis, op);
    if ((D.transpose() * t.S * D - t.S).norm() > 1e-8 * t.S.norm())
      throw Error("symmetry adaptation: operation does not preserve the overlap matrix");
    reps.push_back(t.Shalf * D * t.X);
  }
  // group-closure sanity: products must stay inside the list
  for (const auto& a : reps)
    for (const auto& b : reps) {
      MatX ab = a * b;
      bool found = false;
      for (const auto& c : reps)
        if ((ab - c).norm() < 1e-6 * std::sqrt(static_cast<double>(m))) {
          found = true;
          break;
        }
      if (!found) throw Error("symmetry adaptation: operations are not closed under composition");
    }

  // Average a generic symmetric matrix over the group; its eigenspaces are
  // unions of irrep copies.  A handful of deterministic seeds guards against
  // an unlucky draw producing accidental degeneracies.
  for (std::uint64_t seed = 7; seed < 12; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    MatX K(m, m);
    for (int r = 0; r < m; ++r)
      for (int c = r; c < m; ++c) {
        double v = unif(rng);
        K(r, c) = v;
        K(c, r) = v;
      }
    MatX avg = MatX::Zero(m, m);
    for (const auto& d : reps) avg += d * K * d.transpose();
    avg /= static_cast<double>(reps.size());
    avg = 0.5 * (avg + avg.transpose().eval());
    Eigen::SelfAdjointEigenSolver<MatX> es(avg);
    if (es.info() != Eigen::Success) continue;
    const VecX& ev = es.eigenvalues();
    // cluster eigenvalues by gaps
    std::vector<std::pair<int, int>> clusters;  // [first, last)
    double scale = std::max(1.0, std::abs(ev[m - 1]) + std::abs(ev[0]));
    int start = 0;
    for (int i = 1; i <= m; ++i) {
      if (i == m || ev[i] - ev[i - 1] > 1e-7 * scale) {
        clusters.emplace_back(start, i);
        start = i;
      }
    }
    // character vector of each cluster
    std::vector<VecX> chars(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      auto [f, l] = clusters[c];
      MatX Uc = es.eigenvectors().middleCols(f, l - f);
      VecX ch(reps.size());
      for (std::size_t g = 0; g < reps.size(); ++g)
        ch[g] = (Uc.transpose() * reps[g] * Uc).trace();
      chars[c] = ch;
    }
    // merge clusters with equal characters (copies of the same irrep),
    // normalizing the character to a single copy via the cluster dimension
    std::vector<std::string> keys(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      auto [f, l] = clusters[c];
      VecX per_copy = chars[c];
      // each cluster is dim * (copies of one irrep); the identity character
      // gives dim(cluster) = n_copies * dim(irrep).  Characters are compared
      // per cluster column, normalized by cluster size so different copy
      // counts of the same irrep still match.
      per_copy /= static_cast<double>(l - f);
      keys[c] = char_key(per_copy);
    }
    std::vector<std::string> order;  // distinct keys in first-appearance order
    for (const auto& k : keys)
      if (std::find(order.begin(), order.end(), k) == order.end()) order.push_back(k);
    SymmetryAdaptation adapt;
    adapt.U.resize(m, m);
    int col = 0;
    int label_idx = 0;
    for (const auto& key : order) {
      int width = 0;
      for (std::size_t c = 0; c < clusters.size(); ++c)
        if (keys[c] == key) {
          auto [f, l] = clusters[c];
          adapt.U.middleCols(col + width, l - f) = es.eigenvectors().middleCols(f, l - f);
          width += l - f;
        }
      adapt.blocks.emplace_back("irrep" + std::to_string(++label_idx), width);
      col += width;
    }
    // verify: every representation matrix must be block diagonal in U
    double worst = 0.0;
    for (const auto& d : reps) worst = std::max(worst, adapt.off_block_mass(d));
    if (worst < 1e-10 * std::sqrt(static_cast<double>(m))) return adapt;
  }
  throw Error("symmetry adaptation: failed to find a stable block structure (degenerate "
              "group average); check the operation list");
}

// ---------------------------------------------------------------------------
// Constraint assembly and feasibility checking.
// ---------------------------------------------------------------------------

ConstraintSet nrep_constraints(int n_electrons, int m_basis) {
  return assemble_constraints(n_electrons, m_basis, std::nullopt, std::nullopt);
}

ConstraintSet assemble_constraints(int n_electrons, int m_basis, std::optional<CoreSpace> core,
                                   std::optional<SymmetryAdaptation> symmetry) {
  if (n_electrons <= 0) throw Error("constraints: electron count must be positive");
  if (n_electrons % 2 != 0)
    throw Error("constraints: only closed-shell (even) electron counts are supported");
  if (m_basis <= 0) throw Error("constraints: empty basis");
  if (n_electrons > 2 * m_basis)
    throw Error("constraints: " + std::to_string(n_electrons) + " electrons cannot fit in " +
                std::to_string(m_basis) + " orbitals (N > 2M)");
  ConstraintSet cs;
  cs.N = n_electrons;
  cs.M = m_basis;
  if (core) {
    if (core->C.rows() != m_basis) throw Error("constraints: core dimension mismatch");
    if (core->electrons() > n_electrons)
      throw Error("constraints: core holds more electrons than the total count");
    cs.core = std::move(core);
  }
  if (symmetry) {
    if (symmetry->U.rows() != m_basis) throw Error("constraints: symmetry dimension mismatch");
    cs.symmetry = std::move(symmetry);
  }
  if (cs.core && cs.symmetry) {
    // frozen orbitals must live inside single symmetry blocks, otherwise the
    // two constraints contradict each other
    MatX proj = cs.core->projector();
    double mass = cs.symmetry->off_block_mass(proj);
    if (mass > 1e-8 * proj.norm())
      throw Error("constraints: core orbitals are not symmetry-pure (off-block mass " +
                  format_double(mass) + "); refusing to combine core and symmetry");
  }
  return cs;
}

std::string FeasibilityReport::summary() const {
  std::ostringstream ss;
  ss << (feasible ? "feasible" : "INFEASIBLE") << " (eigenvalues in ["
     << format_double(min_eigenvalue) << ", " << format_double(max_eigenvalue)
     << "], trace gap " << format_double(trace_gap) << ", off-block "
     << format_double(off_block_mass) << ", core violation " << format_double(core_violation)
     << ")";
  return ss.str();
}

FeasibilityReport check_feasibility(const MatX& P_perp, const ConstraintSet& cs) {
  if (P_perp.rows() != cs.M || P_perp.cols() != cs.M)
    throw Error("feasibility check: dimension mismatch");
  FeasibilityReport rep;
  Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (P_perp + P_perp.transpose()));
  rep.min_eigenvalue = es.eigenvalues().minCoeff();
  rep.max_eigenvalue = es.eigenvalues().maxCoeff();
  rep.trace_gap = std::abs(P_perp.trace() - cs.N);
  rep.off_block_mass = cs.symmetry ? cs.symmetry->off_block_mass(P_perp) : 0.0;
  if (cs.core) {
    MatX resid = (P_perp - cs.core->projector()) * cs.core->C;
    rep.core_violation = resid.norm();
  }
  rep.feasible = rep.min_eigenvalue >= -cs.eig_tol && rep.max_eigenvalue <= 2.0 + cs.eig_tol &&
                 rep.trace_gap <= cs.trace_tol * std::max(1.0, cs.N) &&
                 rep.off_block_mass <= cs.block_tol * std::max(1.0, P_perp.norm()) &&
                 rep.core_violation <= cs.core_tol;
  return rep;
}

}  // namespace rdmrecon
