#pragma once

#include <string>
#include <vector>

#include "rdmrecon/constraints.hpp"
#include "rdmrecon/datalab.hpp"
#include "rdmrecon/integrals.hpp"
#include "rdmrecon/operators.hpp"
#include "rdmrecon/types.hpp"

namespace rdmrecon {

// Piecewise-linear path through real space, resampled at `points` positions
// equally spaced in arc length.
struct PathSpec {
  std::vector<Vec3> waypoints;
  int points = 64;
};

struct PathSamples {
  std::vector<Vec3> positions;
  VecX arc;  // arc length of each sample, bohr
};

PathSamples sample_path(const PathSpec& spec);

// Rectangular patch of a plane: origin + s*e1 + t*e2, s in [0, len1] with n1
// samples, t likewise.
struct GridSpec {
  Vec3 origin = Vec3::Zero();
  Vec3 e1 = Vec3::UnitX();
  Vec3 e2 = Vec3::UnitY();
  double len1 = 1.0, len2 = 1.0;
  int n1 = 64, n2 = 64;
};

struct Grid2D {
  VecX x;  // n1 coordinates along e1
  VecX y;  // n2 coordinates along e2
  MatX values;  // values(i, j) at (x[i], y[j])
};

// Gamma(r, r') on path x path.
Grid2D rdm_map(const MatX& P_ao, const BasisSet& basis, const PathSpec& path,
               Exec exec = Exec::Parallel);

VecX density_on_points(const MatX& P_ao, const BasisSet& basis, const std::vector<Vec3>& points,
                       Exec exec = Exec::Parallel);
VecX momentum_density_on_points(const MatX& P_ao, const BasisSet& basis,
                                const std::vector<Vec3>& points, Exec exec = Exec::Parallel);

Grid2D density_map(const MatX& P_ao, const BasisSet& basis, const GridSpec& grid,
                   Exec exec = Exec::Parallel);

// Difference against a reference (promolecule) population matrix on the same
// basis.
Grid2D deformation_map(const MatX& P_ao, const MatX& P_promolecule, const BasisSet& basis,
                       const GridSpec& grid, Exec exec = Exec::Parallel);

// Integrated deformation charge tr(S (P - P_pro)); zero for two matrices
// describing the same electron count.
double deformation_charge(const MatX& P_ao, const MatX& P_promolecule, const BasisSet& basis);

VecX dcp_curve(const MatX& P_ao, const BasisSet& basis, const Vec3& direction,
               const std::vector<double>& qs, Exec exec = Exec::Parallel);

// J_u1(q) - J_u2(q) on a common grid.
VecX dcp_anisotropy(const MatX& P_ao, const BasisSet& basis, const Vec3& u1, const Vec3& u2,
                    const std::vector<double>& qs, Exec exec = Exec::Parallel);

double kinetic_energy(const MatX& P_ao, const BasisSet& basis);

struct EnergyReport {
  double kinetic = 0.0;
  double nuclear_attraction = 0.0;
  double two_electron = 0.0;      // closed-shell Coulomb minus half exchange
  double nuclear_repulsion = 0.0;
  double total = 0.0;
  double virial_ratio = 0.0;      // -(V_ne + V_ee + V_nn) / (2 T)
};

// Mean-field (idempotent-reference) energy functional of a population
// matrix; the two-electron tensor can be passed in when already available.
EnergyReport mean_field_energy(const MatX& P_ao, const BasisSet& basis,
                               const EriTensor* eri = nullptr);

// Anisotropic displacement refinement against structure factors at fixed P:
// damped Gauss-Newton on the six tensor components per atom, with a PSD
// projection after every step.
struct AdpSettings {
  int max_iterations = 200;
  double gradient_tol = 1e-8;
  double initial_damping = 1e-3;
  Weighting weighting = Weighting::Unweighted;
};

struct AdpResult {
  ThermalModel model;
  double chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
};

AdpResult refine_adps(const BasisSet& basis, const CellImages& images, const DataSet& sf_data,
                      const MatX& P_ao, const ThermalModel& initial,
                      const AdpSettings& settings = {});

// Reconstruction quality versus SF resolution: each row solves with the SF
// subset below the cutoff (plus all Compton records) and evaluates energies.
struct CutoffScanRow {
  double cutoff = 0.0;  // sin(theta)/lambda, 1/angstrom
  int n_sf = 0;
  double chi2_sf = 0.0;
  double chi2_dcp = 0.0;
  EnergyReport energy;
  MatX P;
};

std::vector<CutoffScanRow> scan_cutoff(const BasisSet& basis, const LowdinTransform& lowdin,
                                       const ConstraintSet& constraints, const DataSet& data,
                                       const CellImages& images, const ThermalModel* thermal,
                                       const std::vector<double>& cutoffs,
                                       const SolverSettings& settings,
                                       Weighting weighting = Weighting::Unweighted,
                                       const EriTensor* eri = nullptr);

// Plain-text artifacts.
void write_grid_csv(const std::string& path, const Grid2D& grid);
void write_curve_csv(const std::string& path, const std::string& xname,
                     const std::string& yname, const VecX& x, const VecX& y);
void write_scan_csv(const std::string& path, const std::vector<CutoffScanRow>& rows);

// Contour rendering (marching squares) with a +/- geometric level ladder;
// positive contours solid, negative dashed.
void write_grid_svg(const std::string& path, const Grid2D& grid,
                    const std::vector<double>& levels = {});

// Population-matrix file (JSON + row-major payload).
void save_population(const std::string& path, const PopulationMatrix& pm);
PopulationMatrix load_population(const std::string& path, const BasisSet& basis,
                                 const LowdinTransform& lowdin);

}  // namespace rdmrecon
