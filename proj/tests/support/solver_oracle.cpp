#include "support/solver_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using namespace rdmrecon;

MatX random_symmetric(int m, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  MatX a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = n(rng);
  return 0.5 * (a + a.transpose()).eval();
}

LowdinTransform identity_lowdin(int m) {
  LowdinTransform lt;
  lt.S = MatX::Identity(m, m);
  lt.X = MatX::Identity(m, m);
  lt.Shalf = MatX::Identity(m, m);
  lt.condition = 1.0;
  lt.min_eigenvalue = 1.0;
  return lt;
}

RandomInstance random_instance(int m, int n_electrons, std::uint64_t seed, double noise,
                               bool with_core) {
  std::mt19937_64 rng(seed);
  RandomInstance inst;
  inst.lowdin = identity_lowdin(m);
  std::optional<CoreSpace> core;
  if (with_core) {
    MatX c = random_symmetric(m, rng).col(0);
    c /= c.norm();
    core = build_core(c, inst.lowdin);
  }
  inst.constraints = assemble_constraints(n_electrons, m, core, std::nullopt);
  inst.P_true = project_feasible(random_symmetric(m, rng, 1.5), inst.constraints);

  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> usig(0.5, 2.0);
  auto add_term = [&](OperatorKind kind) {
    Objective::Term t;
    t.kind = kind;
    MatX re = random_symmetric(m, rng);
    MatX im = kind == OperatorKind::StructureFactor ? random_symmetric(m, rng) : MatX::Zero(m, m);
    t.op = re.cast<cdouble>() + cdouble(0, 1) * im.cast<cdouble>();
    cdouble clean = (t.op.cwiseProduct(inst.P_true.cast<cdouble>())).sum();
    t.sigma = usig(rng);
    t.y = clean + noise * t.sigma * cdouble(n01(rng), kind == OperatorKind::StructureFactor
                                                          ? n01(rng)
                                                          : 0.0);
    inst.objective.terms.push_back(std::move(t));
  };
  for (int k = 0; k < 3 * m; ++k) add_term(OperatorKind::StructureFactor);
  for (int k = 0; k < 2 * m; ++k) add_term(OperatorKind::ComptonProfile);
  inst.objective.weighting = Weighting::InverseVariance;
  return inst;
}

double fista_oracle(const Objective& obj, const ConstraintSet& cons, long iters) {
  const int m = cons.M;
  struct RealTerm {
    MatX a;
    double y;
    double w;
  };
  std::vector<RealTerm> terms;
  for (const auto& t : obj.terms) {
    double w = obj.weighting == Weighting::InverseVariance ? 1.0 / (t.sigma * t.sigma) : 1.0;
    terms.push_back({t.op.real(), t.y.real(), w});
    if (t.kind == OperatorKind::StructureFactor) terms.push_back({t.op.imag(), t.y.imag(), w});
  }
  auto value = [&](const MatX& P) {
    double f = 0.0;
    for (const auto& t : terms) {
      double r = (t.a.cwiseProduct(P)).sum() - t.y;
      f += t.w * r * r;
    }
    return f;
  };
  auto grad = [&](const MatX& P) {
    MatX g = MatX::Zero(m, m);
    for (const auto& t : terms) {
      double r = (t.a.cwiseProduct(P)).sum() - t.y;
      g += 2.0 * t.w * r * t.a;
    }
    return g;
  };
  double lips = 0.0;
  for (const auto& t : terms) lips += 2.0 * t.w * t.a.squaredNorm();
  const double step = 1.0 / lips;

  MatX x = project_feasible(MatX::Identity(m, m) * cons.N / m, cons);
  MatX x_prev = x, y = x;
  double tk = 1.0;
  double best = value(x);
  for (long k = 0; k < iters; ++k) {
    x = project_feasible(y - step * grad(y), cons);
    double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    y = x + ((tk - 1.0) / tn) * (x - x_prev);
    x_prev = x;
    tk = tn;
    best = std::min(best, value(x));
  }
  return best;
}

}  // namespace oracle
