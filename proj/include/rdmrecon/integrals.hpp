#pragma once

#include <vector>

#include "rdmrecon/basis.hpp"
#include "rdmrecon/types.hpp"

namespace rdmrecon {

// Boys function F_m(x) = \int_0^1 t^{2m} exp(-x t^2) dt, m = 0..mmax inclusive.
void boys(int mmax, double x, double* out);
double boys(int m, double x);

MatX overlap_matrix(const BasisSet& basis, Exec exec = Exec::Parallel);
MatX kinetic_matrix(const BasisSet& basis, Exec exec = Exec::Parallel);

// Sum over all nuclei of -Z_a <i| 1/|r - R_a| |j>.
MatX nuclear_attraction_matrix(const BasisSet& basis, Exec exec = Exec::Parallel);

double nuclear_repulsion_energy(const BasisSet& basis);

// Dense two-electron integrals in chemists' notation (ij|kl); at the matrix
// sizes this toolkit targets (M <= ~60) the full tensor is the simplest
// correct storage.
class EriTensor {
 public:
  EriTensor() = default;
  EriTensor(int m) : m_(m), data_(static_cast<std::size_t>(m) * m * m * m, 0.0) {}
  double operator()(int i, int j, int k, int l) const {
    return data_[idx(i, j, k, l)];
  }
  double& at(int i, int j, int k, int l) { return data_[idx(i, j, k, l)]; }
  int size() const { return m_; }

 private:
  std::size_t idx(int i, int j, int k, int l) const {
    return ((static_cast<std::size_t>(i) * m_ + j) * m_ + k) * m_ + l;
  }
  int m_ = 0;
  std::vector<double> data_;
};

// Single element (ij|kl); used by tests and spot checks.
double eri_element(const BasisSet& basis, int i, int j, int k, int l);

EriTensor eri_tensor(const BasisSet& basis, Exec exec = Exec::Parallel);

}  // namespace rdmrecon
