#pragma once

#include <array>
#include <string>
#include <vector>

#include "rdmrecon/types.hpp"

namespace rdmrecon {

struct Atom {
  std::string element;
  int charge = 0;  // nuclear charge Z
  Vec3 position = Vec3::Zero();  // bohr
};

struct Primitive {
  double exponent = 0.0;
  double coeff = 0.0;  // contraction coefficient times primitive norm, rescaled to unit self-overlap
};

// A contracted Cartesian Gaussian shell (s or p) attached to one atom.
struct Shell {
  int atom = -1;
  int l = 0;  // 0 = s, 1 = p
  std::vector<Primitive> primitives;
};

// Flattened view of one basis function: p shells expand to x, y, z in order.
struct BasisFunction {
  int shell = -1;
  int atom = -1;
  std::array<int, 3> powers{0, 0, 0};
  Vec3 center = Vec3::Zero();
};

class BasisSet {
 public:
  // Geometry file: 'units: angstrom|bohr' header followed by 'element x y z'
  // lines.  Basis file: JSON map element -> list of {"l": "s"|"p",
  // "prim": [[exponent, coefficient], ...]}.
  static BasisSet load(const std::string& geometry_path, const std::string& basis_path);

  // Assemble from already-parsed pieces; raw contraction coefficients are
  // normalized here so every contracted function has unit self-overlap.
  static BasisSet build(std::vector<Atom> atoms, std::vector<Shell> raw_shells);

  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Shell>& shells() const { return shells_; }
  const std::vector<BasisFunction>& functions() const { return functions_; }
  int size() const { return static_cast<int>(functions_.size()); }
  int electron_count() const;  // sum of nuclear charges (neutral system)

  // Digest of geometry + shells; written into caches and reference files so
  // mismatched inputs are detected instead of silently misused.
  const std::string& hash() const { return hash_; }

  // phi_i(r) for each function at each point: M x npoints.
  MatX evaluate(const std::vector<Vec3>& points, Exec exec = Exec::Parallel) const;

  // Fourier transforms g^_i(p) at each momentum-space point: M x npoints.
  MatXc evaluate_momentum(const std::vector<Vec3>& points, Exec exec = Exec::Parallel) const;

 private:
  std::vector<Atom> atoms_;
  std::vector<Shell> shells_;
  std::vector<BasisFunction> functions_;
  std::string hash_;
};

std::vector<Atom> parse_geometry(const std::string& text, const std::string& origin);
std::vector<Shell> parse_basis_json(const std::string& text, const std::vector<Atom>& atoms,
                                    const std::string& origin);

int element_charge(const std::string& symbol);

// Symmetric-orthogonalization data for one basis.
struct LowdinTransform {
  MatX S;       // overlap matrix
  MatX X;       // S^{-1/2}
  MatX Shalf;   // S^{+1/2}
  double condition = 0.0;      // eigenvalue ratio of S
  double min_eigenvalue = 0.0;
};

// Spectral S^{+/-1/2}; throws if S has an eigenvalue below `tol` (the basis
// would be numerically linearly dependent and the inverse square root
// meaningless).
LowdinTransform lowdin(const MatX& S, double tol = 1e-10);

}  // namespace rdmrecon
