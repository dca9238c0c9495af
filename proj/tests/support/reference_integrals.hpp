#pragma once

#include "rdmrecon/basis.hpp"
#include "rdmrecon/types.hpp"

// Quadrature-based reference values for the integral families.  These
// deliberately avoid the Hermite/Boys machinery of the production code: the
// only structure they exploit is that a Cartesian Gaussian factorizes over
// dimensions, plus the Gaussian integral representation of 1/r.  They are
// slow and exist only to pin down expected values in tests.

namespace oracle {

double overlap_ref(const rdmrecon::BasisSet& basis, int i, int j);
double kinetic_ref(const rdmrecon::BasisSet& basis, int i, int j);
// all nuclei, charges included (matches the production matrix element)
double nuclear_ref(const rdmrecon::BasisSet& basis, int i, int j);
double eri_ref(const rdmrecon::BasisSet& basis, int i, int j, int k, int l);
rdmrecon::cdouble sf_ref(const rdmrecon::BasisSet& basis, int i, int j, const rdmrecon::Vec3& q);
// real part of the Compton matrix element
double dcp_ref(const rdmrecon::BasisSet& basis, int i, int j, const rdmrecon::Vec3& u, double q);

}  // namespace oracle
