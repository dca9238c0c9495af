#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rdmrecon/basis.hpp"
#include "rdmrecon/types.hpp"

namespace rdmrecon {

// Spin-summed one-electron reduced density matrix in the AO basis together
// with its symmetrically-orthogonalized form P_perp = S^{1/2} P S^{1/2}.
// All representability statements are about P_perp.
struct PopulationMatrix {
  MatX P;       // AO basis
  MatX P_perp;  // Lowdin basis
  double N = 0.0;
  std::string basis_hash;

  static PopulationMatrix from_ao(const MatX& P, const LowdinTransform& t,
                                  const std::string& basis_hash);
  static PopulationMatrix from_lowdin(const MatX& P_perp, const LowdinTransform& t,
                                      const std::string& basis_hash);
};

// Doubly-occupied frozen orbitals.  `C` holds orthonormal orbital columns in
// the Lowdin basis; the frozen contribution to P_perp is 2 C C^T.
struct CoreSpace {
  MatX C;
  int n_orbitals = 0;
  double electrons() const { return 2.0 * n_orbitals; }
  MatX projector() const { return 2.0 * C * C.transpose(); }
};

// Build from orbital coefficients given in the AO basis (the usual form for
// orbitals imported from an electronic-structure code): C_perp = S^{1/2} C_ao,
// re-orthonormalized and checked.
CoreSpace build_core(const MatX& C_ao, const LowdinTransform& t);

// Core-orbital file: JSON {"basis_hash": ..., "n_core": k,
// "coefficients": [column-major M*k AO coefficients]}.
CoreSpace load_core(const std::string& path, const BasisSet& basis, const LowdinTransform& t);

// One point-group operation acting on the AO basis: spatial rotation R plus
// the permutation it induces on atoms (perm[a] = index of the image atom).
struct SymmetryOp {
  Mat3 R;
  std::vector<int> perm;
};

std::vector<SymmetryOp> load_symmetry_ops(const std::string& path, const BasisSet& basis);

// Orthogonal change of basis (acting on the Lowdin representation) that
// simultaneously block-diagonalizes the whole group action.  `blocks` lists
// (label, size) in column order of `U`.
struct SymmetryAdaptation {
  MatX U;
  std::vector<std::pair<std::string, int>> blocks;

  int block_count() const { return static_cast<int>(blocks.size()); }
  // Frobenius mass outside the declared diagonal blocks of U^T A U.
  double off_block_mass(const MatX& A_lowdin) const;
};

// Builds the adaptation by diagonalizing the group average of a random
// symmetric matrix (a generic element of the commutant); deterministic for a
// given basis and operation list.
SymmetryAdaptation symmetry_adapt(const BasisSet& basis, const LowdinTransform& t,
                                  const std::vector<SymmetryOp>& ops);

// The constraint set the solver enforces on P_perp:
//   0 <= P_perp <= 2, tr P_perp = N, optional frozen core, optional symmetry
//   block structure.
struct ConstraintSet {
  double N = 0.0;
  int M = 0;
  std::optional<CoreSpace> core;
  std::optional<SymmetryAdaptation> symmetry;

  // report tolerances
  double eig_tol = 1e-8;
  double trace_tol = 1e-8;
  double block_tol = 1e-8;
  double core_tol = 1e-6;
};

// Plain ensemble constraints without core/symmetry.
ConstraintSet nrep_constraints(int n_electrons, int m_basis);

// Full assembly with validation: N even and positive, core must fit inside N,
// core orbitals must be symmetry-pure when both options are present.
ConstraintSet assemble_constraints(int n_electrons, int m_basis,
                                   std::optional<CoreSpace> core,
                                   std::optional<SymmetryAdaptation> symmetry);

struct FeasibilityReport {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double trace_gap = 0.0;        // |tr P_perp - N|
  double off_block_mass = 0.0;   // symmetry violation
  double core_violation = 0.0;   // || (P_perp - P_core) C ||_F
  bool feasible = false;

  std::string summary() const;
};

FeasibilityReport check_feasibility(const MatX& P_perp, const ConstraintSet& constraints);

}  // namespace rdmrecon
