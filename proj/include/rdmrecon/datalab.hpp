#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rdmrecon/constraints.hpp"
#include "rdmrecon/operators.hpp"
#include "rdmrecon/solver.hpp"
#include "rdmrecon/types.hpp"

namespace rdmrecon {

// One synthetic measurement.  Structure factors keep their Miller indices
// (the lattice lives in the data set header); Compton samples keep their
// direction and momentum.  `clean` is the noise-free value the record was
// derived from, carried along so downstream error analysis never has to
// regenerate it.
struct Observation {
  OperatorKind kind = OperatorKind::StructureFactor;
  Eigen::Vector3i hkl = Eigen::Vector3i::Zero();
  Vec3 u = Vec3::Zero();
  double q = 0.0;
  cdouble value{0.0, 0.0};
  double sigma = 1.0;
  cdouble clean{0.0, 0.0};
};

struct Provenance {
  std::string reference;     // digest of the generating population matrix
  std::string temperature;   // label, e.g. "static" or "50K"
  double noise_level = 0.0;
  std::uint64_t seed = 0;
};

struct DataSet {
  Mat3 lattice = Mat3::Zero();  // columns a, b, c in bohr; zero if no SF records
  Provenance prov;
  std::vector<Observation> obs;

  int count(OperatorKind kind) const;
};

// Standard high-symmetry direction set used for Compton sampling.
std::vector<Vec3> standard_directions();

// q = 0, dq, ..., q_max inclusive.
std::vector<double> momentum_grid(double q_max, double dq);

cdouble predicted_value(const ScatteringOperator& op, const MatX& P_ao);

DataSet generate_sf(const BasisSet& basis, const MatX& P_ao, const CellImages& images,
                    const Mat3& lattice, double stol_max, const ThermalModel* thermal = nullptr,
                    Exec exec = Exec::Parallel);

DataSet generate_dcp(const BasisSet& basis, const MatX& P_ao, const std::vector<Vec3>& directions,
                     double q_max, double dq, Exec exec = Exec::Parallel);

DataSet merge(const DataSet& a, const DataSet& b);

// Gaussian noise with standard deviation level * |clean value|, applied per
// record (split evenly between real and imaginary parts for complex values);
// sigma is stored alongside.  level = 0 returns the clean values with unit
// sigma.  The generator is a fixed Box-Muller transform over mt19937_64 so
// the stream is identical across platforms.
DataSet add_noise(const DataSet& ds, double level, std::uint64_t seed);

void write_dataset(const std::string& path, const DataSet& ds);
DataSet read_dataset(const std::string& path);

// Operators for every record of a data set, in record order.
std::vector<ScatteringOperator> build_operators(const BasisSet& basis, const CellImages& images,
                                                const DataSet& ds,
                                                const ThermalModel* thermal = nullptr,
                                                Exec exec = Exec::Parallel);

Objective make_objective(const DataSet& ds, const std::vector<ScatteringOperator>& ops,
                         Weighting weighting = Weighting::Unweighted);

// Noise resampling: k replicates of (noise -> solve), element-wise mean and
// sample standard deviation of the recovered matrices.
struct ResampleResult {
  MatX mean_P;
  MatX std_P;
  MatX mean_P_perp;
  MatX std_P_perp;
  std::vector<double> chi2;  // fitted misfit per successful replicate
  int replicates = 0;
  int failures = 0;
};

ResampleResult resample(const DataSet& clean, double noise_level, std::uint64_t base_seed,
                        int replicates, const BasisSet& basis, const CellImages& images,
                        const ThermalModel* thermal, const ConstraintSet& constraints,
                        const LowdinTransform& lowdin, const SolverSettings& settings,
                        Weighting weighting = Weighting::Unweighted,
                        Exec exec = Exec::Parallel);

}  // namespace rdmrecon
