#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rdmrecon/constraints.hpp"
#include "rdmrecon/operators.hpp"
#include "rdmrecon/types.hpp"

namespace rdmrecon {

enum class Weighting { Unweighted, InverseVariance };

// Least-squares data term: sum_i w_i |tr(O_i P) - y_i|^2 over observation
// matrices in the AO basis.  Structure-factor terms are complex (both parts
// enter the residual); Compton terms are real.
struct Objective {
  struct Term {
    OperatorKind kind = OperatorKind::StructureFactor;
    MatXc op;        // AO-basis observable matrix
    cdouble y;       // measured value
    double sigma = 1.0;
  };
  std::vector<Term> terms;
  Weighting weighting = Weighting::Unweighted;
};

struct SolverSettings {
  long max_iterations = 200000;
  double primal_tol = 1e-9;        // scaled by the basis dimension
  double stall_tol = 1e-12;        // relative objective change ...
  int stall_window = 50;           // ... over this many iterations
  double rho = 1.0;                // initial penalty parameter
  long polish_iterations = 4000;   // monotone projected-gradient tail
  int log_every = 0;               // 0 = quiet
  std::function<void(const std::string&)> log;
};

enum class SolveStatus { Optimal, IterationLimit, Infeasible };

struct Solution {
  SolveStatus status = SolveStatus::Optimal;
  MatX P;        // AO basis
  MatX P_perp;   // Lowdin basis
  double objective = 0.0;    // minimized weighted misfit
  double chi2_sf = 0.0;      // sum over SF terms of |resid|^2 / sigma^2
  double chi2_dcp = 0.0;
  double chi2_total = 0.0;
  FeasibilityReport feasibility;
  long iterations = 0;
  double wall_time_s = 0.0;
  // objective at each accepted (feasible, improving) iterate; non-increasing
  std::vector<double> accepted_objectives;
};

// Eigenvalue clipping to the PSD cone.
MatX project_psd(const MatX& A);

// Exact Euclidean projection of a symmetric matrix onto the constraint set:
// eigenvalues are shifted and clipped to [0, 2] with the shift chosen so the
// trace matches N (joint over symmetry blocks); core directions are pinned.
// Throws Error when the set is empty (e.g. N > 2M).
MatX project_feasible(const MatX& P_perp, const ConstraintSet& constraints);

// Packs the upper triangle with sqrt(2)-scaled off-diagonals, so that
// dot(svec(A), svec(B)) = tr(A B) for symmetric A, B.
VecX svec(const MatX& A);
MatX unsvec(const VecX& v, int m);

Solution solve(const Objective& objective, const ConstraintSet& constraints,
               const LowdinTransform& lowdin, const SolverSettings& settings = {});

// Weighted misfit of a given population matrix against the objective,
// split per observation family: (sf, dcp, total).
struct MisfitBreakdown {
  double sf = 0.0;
  double dcp = 0.0;
  double total = 0.0;
};
MisfitBreakdown misfit(const Objective& objective, const MatX& P_ao);

}  // namespace rdmrecon
