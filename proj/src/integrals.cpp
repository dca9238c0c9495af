#include "rdmrecon/integrals.hpp"

#include <cmath>

namespace rdmrecon {

// ---------------------------------------------------------------------------
// Boys function.
//
// Small/moderate x: the confluent-hypergeometric style series
//   F_m(x) = exp(-x)/(2m+1) * sum_k x^k / prod_{j<=k} (m + 3/2 + j - 1)
// has all-positive terms, so no cancellation.  Large x: the asymptotic form
// (2m-1)!!/2^{m+1} sqrt(pi / x^{2m+1}) is accurate to well below 1e-16 once
// x > 35.  Lower orders follow by downward recursion, which is stable.
// ---------------------------------------------------------------------------

namespace {

double boys_series(int m, double x) {
  double term = 1.0 / (2.0 * m + 1.0);
  double sum = term;
  for (int k = 1; k < 200; ++k) {
    term *= x / (m + 0.5 + k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return std::exp(-x) * sum;
}

double boys_asymptotic(int m, double x) {
  double df = 1.0;  // (2m-1)!!
  for (int k = 2 * m - 1; k > 1; k -= 2) df *= k;
  return df / std::pow(2.0, m + 1) * std::sqrt(kPi / std::pow(x, 2 * m + 1));
}

}  // namespace

void boys(int mmax, double x, double* out) {
  if (x < 35.0) {
    out[mmax] = boys_series(mmax, x);
  } else {
    out[mmax] = boys_asymptotic(mmax, x);
  }
  double ex = std::exp(-x);
  for (int m = mmax - 1; m >= 0; --m) out[m] = (2.0 * x * out[m + 1] + ex) / (2.0 * m + 1.0);
}

double boys(int m, double x) {
  std::vector<double> buf(m + 1);
  boys(m, x, buf.data());
  return buf[m];
}

// ---------------------------------------------------------------------------
// McMurchie-Davidson machinery.  With only s and p shells the Cartesian
// angular momenta never exceed 1, but the kinetic-energy recursion needs the
// second index raised by two, so the Hermite expansion table is built for
// i, j <= 3 once per primitive pair and dimension.
// ---------------------------------------------------------------------------

namespace detail {

struct ETable {
  // e[i][j][t] for one dimension
  double e[4][4][7];
};

// Hermite expansion coefficients for the product of x^i exp(-a (x-Ax)^2) and
// x^j exp(-b (x-Bx)^2) about the composite center.
void build_etable(double a, double b, double ab, ETable& tab) {
  const double p = a + b;
  const double mu = a * b / p;
  const double pa = -b * ab / p;  // Px - Ax
  const double pb = a * ab / p;   // Px - Bx
  for (auto& plane : tab.e)
    for (auto& row : plane)
      for (double& v : row) v = 0.0;
  tab.e[0][0][0] = std::exp(-mu * ab * ab);
  // raise i at j = 0
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t <= i + 1; ++t) {
      double v = 0.0;
      if (t > 0) v += tab.e[i][0][t - 1] / (2.0 * p);
      v += pa * tab.e[i][0][t];
      v += (t + 1.0) * tab.e[i][0][t + 1];
      tab.e[i + 1][0][t] = v;
    }
  // raise j at every i
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int t = 0; t <= i + j + 1; ++t) {
        double v = 0.0;
        if (t > 0) v += tab.e[i][j][t - 1] / (2.0 * p);
        v += pb * tab.e[i][j][t];
        v += (t + 1.0) * tab.e[i][j][t + 1];
        tab.e[i][j + 1][t] = v;
      }
}

// Hermite Coulomb integrals R_{tuv} = R^0_{tuv}(rho, PC) for t+u+v <= tmax.
// Built by the standard auxiliary-index recursion seeded with Boys values.
struct RTable {
  double r[5][5][5];
};

void build_rtable(double rho, const Vec3& pc, int tmax, RTable& out) {
  double x = rho * pc.squaredNorm();
  double f[13];
  boys(tmax, x, f);
  // work[n][t][u][v]
  static thread_local double work[13][5][5][5];
  for (int n = 0; n <= tmax; ++n) work[n][0][0][0] = std::pow(-2.0 * rho, n) * f[n];
  for (int total = 1; total <= tmax; ++total) {
    for (int t = 0; t <= total; ++t)
      for (int u = 0; u + t <= total; ++u) {
        int v = total - t - u;
        for (int n = 0; n + total <= tmax; ++n) {
          double val = 0.0;
          if (t > 0) {
            val = pc[0] * work[n + 1][t - 1][u][v];
            if (t > 1) val += (t - 1.0) * work[n + 1][t - 2][u][v];
          } else if (u > 0) {
            val = pc[1] * work[n + 1][t][u - 1][v];
            if (u > 1) val += (u - 1.0) * work[n + 1][t][u - 2][v];
          } else {
            val = pc[2] * work[n + 1][t][u][v - 1];
            if (v > 1) val += (v - 1.0) * work[n + 1][t][u][v - 2];
          }
          work[n][t][u][v] = val;
        }
      }
  }
  for (int t = 0; t <= tmax; ++t)
    for (int u = 0; u + t <= tmax; ++u)
      for (int v = 0; v + t + u <= tmax; ++v) out.r[t][u][v] = work[0][t][u][v];
}

}  // namespace detail

namespace {

using detail::ETable;
using detail::RTable;

// 1-D overlap from the Hermite table: S_ij = E^{ij}_0 sqrt(pi/p).
double s1d(const ETable& t, int i, int j, double p) {
  return t.e[i][j][0] * std::sqrt(kPi / p);
}

// 1-D kinetic piece -1/2 d^2/dx^2 acting on the ket.
double k1d(const ETable& t, int i, int j, double p, double b) {
  double v = -2.0 * b * b * s1d(t, i, j + 2, p) + b * (2.0 * j + 1.0) * s1d(t, i, j, p);
  if (j >= 2) v -= 0.5 * j * (j - 1.0) * s1d(t, i, j - 2, p);
  return v;
}

struct PairGeometry {
  ETable ex, ey, ez;
  double p;
  Vec3 centerP;
};

void build_pair(double a, const Vec3& A, double b, const Vec3& B, PairGeometry& g) {
  g.p = a + b;
  g.centerP = (a * A + b * B) / g.p;
  detail::build_etable(a, b, A[0] - B[0], g.ex);
  detail::build_etable(a, b, A[1] - B[1], g.ey);
  detail::build_etable(a, b, A[2] - B[2], g.ez);
}

const ETable& dim_table(const PairGeometry& g, int d) {
  return d == 0 ? g.ex : (d == 1 ? g.ey : g.ez);
}

template <typename F>
double pair_contracted(const BasisSet& basis, int i, int j, F&& primitive_value) {
  const auto& fi = basis.functions()[i];
  const auto& fj = basis.functions()[j];
  const auto& si = basis.shells()[fi.shell];
  const auto& sj = basis.shells()[fj.shell];
  double acc = 0.0;
  PairGeometry g;
  for (const auto& pa : si.primitives)
    for (const auto& pb : sj.primitives) {
      build_pair(pa.exponent, fi.center, pb.exponent, fj.center, g);
      acc += pa.coeff * pb.coeff * primitive_value(pa.exponent, pb.exponent, g, fi, fj);
    }
  return acc;
}

}  // namespace

MatX overlap_matrix(const BasisSet& basis, Exec exec) {
  const int m = basis.size();
  MatX out(m, m);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      double v = pair_contracted(
          basis, i, j,
          [](double, double, const PairGeometry& g, const BasisFunction& fi,
             const BasisFunction& fj) {
            double prod = 1.0;
            for (int d = 0; d < 3; ++d)
              prod *= s1d(dim_table(g, d), fi.powers[d], fj.powers[d], g.p);
            return prod;
          });
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

MatX kinetic_matrix(const BasisSet& basis, Exec exec) {
  const int m = basis.size();
  MatX out(m, m);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      double v = pair_contracted(
          basis, i, j,
          [](double, double b, const PairGeometry& g, const BasisFunction& fi,
             const BasisFunction& fj) {
            double s[3], k[3];
            for (int d = 0; d < 3; ++d) {
              const ETable& t = dim_table(g, d);
              s[d] = s1d(t, fi.powers[d], fj.powers[d], g.p);
              k[d] = k1d(t, fi.powers[d], fj.powers[d], g.p, b);
            }
            return k[0] * s[1] * s[2] + s[0] * k[1] * s[2] + s[0] * s[1] * k[2];
          });
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

MatX nuclear_attraction_matrix(const BasisSet& basis, Exec exec) {
  const int m = basis.size();
  MatX out(m, m);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      double v = pair_contracted(
          basis, i, j,
          [&basis](double, double, const PairGeometry& g, const BasisFunction& fi,
                   const BasisFunction& fj) {
            double total = 0.0;
            const int tmax = fi.powers[0] + fi.powers[1] + fi.powers[2] + fj.powers[0] +
                             fj.powers[1] + fj.powers[2];
            RTable rt;
            for (const auto& atom : basis.atoms()) {
              detail::build_rtable(g.p, g.centerP - atom.position, tmax, rt);
              double sum = 0.0;
              for (int t = 0; t <= fi.powers[0] + fj.powers[0]; ++t)
                for (int u = 0; u <= fi.powers[1] + fj.powers[1]; ++u)
                  for (int w = 0; w <= fi.powers[2] + fj.powers[2]; ++w)
                    sum += g.ex.e[fi.powers[0]][fj.powers[0]][t] *
                           g.ey.e[fi.powers[1]][fj.powers[1]][u] *
                           g.ez.e[fi.powers[2]][fj.powers[2]][w] * rt.r[t][u][w];
              total += -atom.charge * sum;
            }
            return 2.0 * kPi / g.p * total;
          });
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

double nuclear_repulsion_energy(const BasisSet& basis) {
  const auto& atoms = basis.atoms();
  double e = 0.0;
  for (std::size_t a = 0; a < atoms.size(); ++a)
    for (std::size_t b = a + 1; b < atoms.size(); ++b) {
      double r = (atoms[a].position - atoms[b].position).norm();
      if (r < 1e-12) throw Error("nuclear repulsion: coincident atoms");
      e += atoms[a].charge * atoms[b].charge / r;
    }
  return e;
}

namespace {

double eri_primitive_pairs(const PairGeometry& gab, const PairGeometry& gcd,
                           const BasisFunction& fi, const BasisFunction& fj,
                           const BasisFunction& fk, const BasisFunction& fl) {
  const double p = gab.p, q = gcd.p;
  const double rho = p * q / (p + q);
  const int tmax = fi.powers[0] + fi.powers[1] + fi.powers[2] + fj.powers[0] + fj.powers[1] +
                   fj.powers[2] + fk.powers[0] + fk.powers[1] + fk.powers[2] + fl.powers[0] +
                   fl.powers[1] + fl.powers[2];
  RTable rt;
  detail::build_rtable(rho, gab.centerP - gcd.centerP, tmax, rt);
  double sum = 0.0;
  for (int t = 0; t <= fi.powers[0] + fj.powers[0]; ++t)
    for (int u = 0; u <= fi.powers[1] + fj.powers[1]; ++u)
      for (int w = 0; w <= fi.powers[2] + fj.powers[2]; ++w) {
        double eab = gab.ex.e[fi.powers[0]][fj.powers[0]][t] *
                     gab.ey.e[fi.powers[1]][fj.powers[1]][u] *
                     gab.ez.e[fi.powers[2]][fj.powers[2]][w];
        if (eab == 0.0) continue;
        for (int tt = 0; tt <= fk.powers[0] + fl.powers[0]; ++tt)
          for (int uu = 0; uu <= fk.powers[1] + fl.powers[1]; ++uu)
            for (int ww = 0; ww <= fk.powers[2] + fl.powers[2]; ++ww) {
              double ecd = gcd.ex.e[fk.powers[0]][fl.powers[0]][tt] *
                           gcd.ey.e[fk.powers[1]][fl.powers[1]][uu] *
                           gcd.ez.e[fk.powers[2]][fl.powers[2]][ww];
              if (ecd == 0.0) continue;
              double sign = ((tt + uu + ww) % 2 == 0) ? 1.0 : -1.0;
              sum += eab * ecd * sign * rt.r[t + tt][u + uu][w + ww];
            }
      }
  return 2.0 * std::pow(kPi, 2.5) / (p * q * std::sqrt(p + q)) * sum;
}

}  // namespace

double eri_element(const BasisSet& basis, int i, int j, int k, int l) {
  const auto& fs = basis.functions();
  const auto& fi = fs[i];
  const auto& fj = fs[j];
  const auto& fk = fs[k];
  const auto& fl = fs[l];
  const auto& si = basis.shells()[fi.shell];
  const auto& sj = basis.shells()[fj.shell];
  const auto& sk = basis.shells()[fk.shell];
  const auto& sl = basis.shells()[fl.shell];
  double acc = 0.0;
  PairGeometry gab, gcd;
  for (const auto& pa : si.primitives)
    for (const auto& pb : sj.primitives) {
      build_pair(pa.exponent, fi.center, pb.exponent, fj.center, gab);
      const double dab = pa.coeff * pb.coeff;
      for (const auto& pc : sk.primitives)
        for (const auto& pd : sl.primitives) {
          build_pair(pc.exponent, fk.center, pd.exponent, fl.center, gcd);
          acc += dab * pc.coeff * pd.coeff * eri_primitive_pairs(gab, gcd, fi, fj, fk, fl);
        }
    }
  return acc;
}

EriTensor eri_tensor(const BasisSet& basis, Exec exec) {
  const int m = basis.size();
  EriTensor t(m);
  // Unique (ij) pairs with i <= j; quartets with ij <= kl fill the other
  // seven permutations by symmetry.
  const int npairs = m * (m + 1) / 2;
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int ij = 0; ij < npairs; ++ij) {
    // unrank: ij -> (i, j), i <= j
    int i = 0;
    int rem = ij;
    while (rem >= m - i) {
      rem -= m - i;
      ++i;
    }
    int j = i + rem;
    for (int kl = ij; kl < npairs; ++kl) {
      int k = 0;
      int rem2 = kl;
      while (rem2 >= m - k) {
        rem2 -= m - k;
        ++k;
      }
      int l = k + rem2;
      double v = eri_element(basis, i, j, k, l);
      t.at(i, j, k, l) = v;
      t.at(j, i, k, l) = v;
      t.at(i, j, l, k) = v;
      t.at(j, i, l, k) = v;
      t.at(k, l, i, j) = v;
      t.at(l, k, i, j) = v;
      t.at(k, l, j, i) = v;
      t.at(l, k, j, i) = v;
    }
  }
  return t;
}

}  // namespace rdmrecon
