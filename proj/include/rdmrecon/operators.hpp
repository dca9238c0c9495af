#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rdmrecon/basis.hpp"
#include "rdmrecon/types.hpp"

namespace rdmrecon {

// A reciprocal-space point.  When it comes from a reflection the Miller
// indices are kept so datasets can be written in (h k l) form; sin(theta)/
// lambda is stored in 1/angstrom, the usual crystallographic unit, while q
// itself is in 1/bohr.
struct ScatteringVector {
  Vec3 q = Vec3::Zero();
  std::optional<Eigen::Vector3i> hkl;
  double stol = 0.0;  // sin(theta)/lambda in 1/angstrom
};

// Columns of `cell` are the direct lattice vectors a, b, c in bohr.
ScatteringVector scattering_vector_from_hkl(const Mat3& cell, const Eigen::Vector3i& hkl);

// One directional Compton-profile sample: unit direction u, momentum q (a.u.).
struct ComptonPoint {
  Vec3 u = Vec3::UnitX();
  double q = 0.0;
};

// Per-atom anisotropic mean-square displacement tensors B (bohr^2); the
// Debye-Waller factor multiplies one-center matrix elements by
// exp(-q^T B_a q) and leaves two-center elements untouched.
struct ThermalModel {
  std::vector<Mat3> displacement;
  bool enabled = false;

  void validate(int natoms) const;  // symmetric + PSD + count check
};

// Rigid-body copies of the reference fragment inside one unit cell:
// x -> R x + t for each image (the identity must be included explicitly).
struct CellImages {
  std::vector<Mat3> rotations;
  std::vector<Vec3> translations;

  int count() const { return static_cast<int>(rotations.size()); }
  void validate() const;
};

enum class OperatorKind { StructureFactor, ComptonProfile };

// A one-electron observable matrix in the AO basis: the predicted value is
// tr(O P).  Structure-factor matrices are complex symmetric with
// F(-q) = conj(F(q)); Compton matrices are real symmetric (stored in the
// real part).
struct ScatteringOperator {
  OperatorKind kind = OperatorKind::StructureFactor;
  MatXc matrix;
  ScatteringVector sf_meta;  // valid when kind == StructureFactor
  ComptonPoint dcp_meta;     // valid when kind == ComptonProfile
  bool thermal = false;

  MatX real_matrix() const { return matrix.real(); }
};

ScatteringOperator sf_operator(const BasisSet& basis, const ScatteringVector& sv,
                               const ThermalModel* thermal = nullptr);

// Sum over cell images m of exp(-i q . t_m) F(R_m^T q), with the
// displacement tensors rotated along: equivalent to evaluating each image's
// own Debye-Waller factor.
ScatteringOperator sf_operator_cell(const BasisSet& basis, const CellImages& images,
                                    const ScatteringVector& sv,
                                    const ThermalModel* thermal = nullptr);

ScatteringOperator dcp_operator(const BasisSet& basis, const ComptonPoint& point);

// All symmetry-unique reflections (one per Friedel pair, q != 0) with
// sin(theta)/lambda <= stol_max (1/angstrom), sorted by (stol, h, k, l).
std::vector<ScatteringVector> hkl_grid(const Mat3& cell, double stol_max);

std::vector<ScatteringOperator> sf_operator_batch(const BasisSet& basis, const CellImages& images,
                                                  const std::vector<ScatteringVector>& svs,
                                                  const ThermalModel* thermal = nullptr,
                                                  Exec exec = Exec::Parallel);

std::vector<ScatteringOperator> dcp_operator_batch(const BasisSet& basis,
                                                   const std::vector<ComptonPoint>& points,
                                                   Exec exec = Exec::Parallel);

// Binary cache of an operator batch, keyed by the basis digest; loading
// verifies digest, dimensions and a payload checksum.
void save_operators(const std::string& path, const std::string& basis_hash,
                    const std::vector<ScatteringOperator>& ops);
std::vector<ScatteringOperator> load_operators(const std::string& path,
                                               const std::string& basis_hash);

// Files: symmetry images as JSON {"images": [{"R": [[...]x3], "t": [...]}]},
// thermal model as JSON {"displacement": [[[...]x3], ...]} in bohr^2.
CellImages load_cell_images(const std::string& path);
ThermalModel load_thermal_model(const std::string& path, int natoms);
void save_thermal_model(const std::string& path, const ThermalModel& model);

}  // namespace rdmrecon
