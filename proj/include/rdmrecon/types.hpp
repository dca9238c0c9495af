#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rdmrecon {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using MatXc = Eigen::MatrixXcd;
using cdouble = std::complex<double>;

// Atomic units everywhere; geometry files may be given in angstrom.
inline constexpr double kAngstromPerBohr = 0.529177210903;
inline constexpr double kBohrPerAngstrom = 1.0 / kAngstromPerBohr;
inline constexpr double kPi = 3.14159265358979323846;

// All recoverable failures (bad input files, inconsistent dimensions,
// infeasible constraint sets, ...) are reported through this type so the
// CLI can turn them into clean diagnostics instead of stack traces.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Execution policy for kernels that exist in both a plain serial form and
// an OpenMP form.  The serial form is the reference: tests require the two
// to agree bitwise, which the parallel implementations guarantee by
// reducing in a fixed chunk order.
enum class Exec { Serial, Parallel };

}  // namespace rdmrecon
