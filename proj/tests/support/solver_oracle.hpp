#pragma once

#include <cstdint>
#include <random>

#include "rdmrecon/constraints.hpp"
#include "rdmrecon/solver.hpp"

// Random solver instances plus an independent optimizer to compare against.
namespace oracle {

rdmrecon::MatX random_symmetric(int m, std::mt19937_64& rng, double scale = 1.0);

// An identity-overlap "basis" stand-in for solver-only tests: with S = I the
// AO and orthogonal representations coincide and everything is easy to reason
// about.
rdmrecon::LowdinTransform identity_lowdin(int m);

struct RandomInstance {
  rdmrecon::Objective objective;
  rdmrecon::ConstraintSet constraints;
  rdmrecon::LowdinTransform lowdin;
  rdmrecon::MatX P_true;
};

RandomInstance random_instance(int m, int n_electrons, std::uint64_t seed, double noise,
                               bool with_core = false);

// Accelerated projected-gradient oracle: a deliberately different algorithm
// from the production solver, converging to the same optimum.
double fista_oracle(const rdmrecon::Objective& obj, const rdmrecon::ConstraintSet& cons,
                    long iters);

}  // namespace oracle
