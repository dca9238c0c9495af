#include "rdmrecon/basis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "rdmrecon/integrals.hpp"
#include "rdmrecon/io_util.hpp"

namespace rdmrecon {

int element_charge(const std::string& symbol) {
  static const std::map<std::string, int> table = {
      {"H", 1},  {"He", 2}, {"Li", 3},  {"Be", 4},  {"B", 5},   {"C", 6},
      {"N", 7},  {"O", 8},  {"F", 9},   {"Ne", 10}, {"Na", 11}, {"Mg", 12},
      {"Al", 13}, {"Si", 14}, {"P", 15}, {"S", 16},  {"Cl", 17}, {"Ar", 18}};
  auto it = table.find(symbol);
  if (it == table.end()) throw Error("unknown element symbol: '" + symbol + "'");
  return it->second;
}

std::vector<Atom> parse_geometry(const std::string& text, const std::string& origin) {
  auto lines = split_lines(text);
  double to_bohr = 0.0;
  std::vector<Atom> atoms;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string& line = lines[n];
    std::string where = origin + ":" + std::to_string(n + 1);
    auto hash_pos = line.find('#');
    std::string body = hash_pos == std::string::npos ? line : line.substr(0, hash_pos);
    auto fields = split_fields(body);
    if (fields.empty()) continue;
    if (fields[0] == "units:" || fields[0] == "units") {
      std::string unit = fields.size() >= 2 ? fields.back() : "";
      if (unit == "angstrom")
        to_bohr = kBohrPerAngstrom;
      else if (unit == "bohr")
        to_bohr = 1.0;
      else
        throw Error(where + ": units must be 'angstrom' or 'bohr', got '" + unit + "'");
      continue;
    }
    if (to_bohr == 0.0) throw Error(where + ": geometry must start with a 'units:' line");
    if (fields.size() != 4)
      throw Error(where + ": expected 'element x y z', got " + std::to_string(fields.size()) +
                  " fields");
    Atom a;
    a.element = fields[0];
    a.charge = element_charge(a.element);
    for (int d = 0; d < 3; ++d)
      a.position[d] = to_bohr * parse_double(fields[d + 1], where);
    atoms.push_back(std::move(a));
  }
  if (atoms.empty()) throw Error(origin + ": no atoms found");
  return atoms;
}

std::vector<Shell> parse_basis_json(const std::string& text, const std::vector<Atom>& atoms,
                                    const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(origin + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(origin + ": top level must be an object keyed by element");
  std::vector<Shell> shells;
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    const std::string& el = atoms[a].element;
    if (!j.contains(el)) throw Error(origin + ": no basis entry for element '" + el + "'");
    const auto& entry = j.at(el);
    if (!entry.is_array() || entry.empty())
      throw Error(origin + ": entry for '" + el + "' must be a non-empty list of shells");
    for (const auto& js : entry) {
      Shell s;
      s.atom = static_cast<int>(a);
      std::string l = js.value("l", "");
      if (l == "s")
        s.l = 0;
      else if (l == "p")
        s.l = 1;
      else
        throw Error(origin + ": shell 'l' must be \"s\" or \"p\" (element '" + el + "')");
      if (!js.contains("prim") || !js.at("prim").is_array() || js.at("prim").empty())
        throw Error(origin + ": shell for '" + el + "' needs a non-empty 'prim' list");
      for (const auto& jp : js.at("prim")) {
        if (!jp.is_array() || jp.size() != 2)
          throw Error(origin + ": each primitive must be [exponent, coefficient]");
        Primitive p;
        p.exponent = jp.at(0).get<double>();
        p.coeff = jp.at(1).get<double>();
        if (!(p.exponent > 0.0))
          throw Error(origin + ": primitive exponents must be positive (element '" + el + "')");
        s.primitives.push_back(p);
      }
      shells.push_back(std::move(s));
    }
  }
  return shells;
}

namespace {

double double_factorial(int n) {
  double v = 1.0;
  for (int k = n; k > 1; k -= 2) v *= k;
  return v;
}

// Norm of a single Cartesian primitive with powers summing to l.
double primitive_norm(double alpha, int l) {
  double base = std::pow(2.0 * alpha / kPi, 0.75);
  // for l = 1 the double factorial is 1, so this is just (4a)^(l/2)
  return base * std::pow(4.0 * alpha, 0.5 * l) / std::sqrt(double_factorial(2 * l - 1));
}

// Self-overlap of a contracted shell whose coefficients already include the
// primitive norms; uses the closed-form 1-D Gaussian moments.
double shell_self_overlap(const Shell& s) {
  double acc = 0.0;
  for (const auto& pa : s.primitives)
    for (const auto& pb : s.primitives) {
      double p = pa.exponent + pb.exponent;
      double s00 = std::pow(kPi / p, 1.5);
      double val = (s.l == 0) ? s00 : s00 * 0.5 / p;  // <x|x> adds a 1/(2p) moment
      acc += pa.coeff * pb.coeff * val;
    }
  return acc;
}

}  // namespace

BasisSet BasisSet::build(std::vector<Atom> atoms, std::vector<Shell> raw_shells) {
  BasisSet b;
  b.atoms_ = std::move(atoms);
  b.shells_ = std::move(raw_shells);
  for (auto& s : b.shells_) {
    if (s.atom < 0 || s.atom >= static_cast<int>(b.atoms_.size()))
      throw Error("shell refers to atom index " + std::to_string(s.atom) + " out of range");
    if (s.l != 0 && s.l != 1) throw Error("only s and p shells are supported");
    for (auto& p : s.primitives) p.coeff *= primitive_norm(p.exponent, s.l);
    double self = shell_self_overlap(s);
    if (!(self > 0.0)) throw Error("contracted shell has non-positive self-overlap");
    double scale = 1.0 / std::sqrt(self);
    for (auto& p : s.primitives) p.coeff *= scale;
  }
  // Flatten to Cartesian functions, p shells in x, y, z order.
  for (std::size_t si = 0; si < b.shells_.size(); ++si) {
    const Shell& s = b.shells_[si];
    int nfun = (s.l == 0) ? 1 : 3;
    for (int c = 0; c < nfun; ++c) {
      BasisFunction f;
      f.shell = static_cast<int>(si);
      f.atom = s.atom;
      f.center = b.atoms_[s.atom].position;
      if (s.l == 1) f.powers[c] = 1;
      b.functions_.push_back(f);
    }
  }
  // Canonical serialization -> digest.
  std::ostringstream ss;
  for (const auto& a : b.atoms_) {
    ss << "atom " << a.element << ' ' << a.charge;
    for (int d = 0; d < 3; ++d) ss << ' ' << format_double(a.position[d]);
    ss << '\n';
  }
  for (const auto& s : b.shells_) {
    ss << "shell " << s.atom << ' ' << s.l;
    for (const auto& p : s.primitives)
      ss << ' ' << format_double(p.exponent) << ' ' << format_double(p.coeff);
    ss << '\n';
  }
  b.hash_ = short_hash(ss.str());
  return b;
}

BasisSet BasisSet::load(const std::string& geometry_path, const std::string& basis_path) {
  auto atoms = parse_geometry(read_text_file(geometry_path), geometry_path);
  auto shells = parse_basis_json(read_text_file(basis_path), atoms, basis_path);
  return build(std::move(atoms), std::move(shells));
}

int BasisSet::electron_count() const {
  int n = 0;
  for (const auto& a : atoms_) n += a.charge;
  return n;
}

MatX BasisSet::evaluate(const std::vector<Vec3>& points, Exec exec) const {
  const int m = size();
  const int np = static_cast<int>(points.size());
  MatX out(m, np);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (int k = 0; k < np; ++k) {
    for (int i = 0; i < m; ++i) {
      const BasisFunction& f = functions_[i];
      const Shell& s = shells_[f.shell];
      Vec3 r = points[k] - f.center;
      double poly = 1.0;
      for (int d = 0; d < 3; ++d)
        if (f.powers[d] == 1) poly *= r[d];
      double r2 = r.squaredNorm();
      double v = 0.0;
      for (const auto& p : s.primitives) v += p.coeff * std::exp(-p.exponent * r2);
      out(i, k) = poly * v;
    }
  }
  return out;
}

MatXc BasisSet::evaluate_momentum(const std::vector<Vec3>& points, Exec exec) const {
  const int m = size();
  const int np = static_cast<int>(points.size());
  MatXc out(m, np);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (int k = 0; k < np; ++k) {
    const Vec3& p = points[k];
    for (int i = 0; i < m; ++i) {
      const BasisFunction& f = functions_[i];
      const Shell& s = shells_[f.shell];
      cdouble phase = std::exp(cdouble(0.0, -p.dot(f.center)));
      cdouble v(0.0, 0.0);
      for (const auto& pr : s.primitives) {
        double a = pr.exponent;
        // 1-D transforms of x^n exp(-a x^2): n=0 -> sqrt(pi/a) exp(-s^2/4a),
        // n=1 -> (-is/2a) times that.
        cdouble prod(1.0, 0.0);
        for (int d = 0; d < 3; ++d) {
          double sd = p[d];
          double d0 = std::sqrt(kPi / a) * std::exp(-sd * sd / (4.0 * a));
          prod *= (f.powers[d] == 0) ? cdouble(d0, 0.0) : cdouble(0.0, -sd / (2.0 * a) * d0);
        }
        v += pr.coeff * prod;
      }
      out(i, k) = phase * v;
    }
  }
  return out;
}

LowdinTransform lowdin(const MatX& S, double tol) {
  if (S.rows() != S.cols()) throw Error("lowdin: overlap matrix must be square");
  Eigen::SelfAdjointEigenSolver<MatX> es(S);
  if (es.info() != Eigen::Success) throw Error("lowdin: eigendecomposition failed");
  const VecX& ev = es.eigenvalues();
  double lo = ev.minCoeff(), hi = ev.maxCoeff();
  if (lo < tol)
    throw Error("lowdin: overlap matrix is near-singular (min eigenvalue " +
                format_double(lo) + " < tol " + format_double(tol) +
                "); the basis is numerically linearly dependent");
  LowdinTransform t;
  t.S = S;
  t.min_eigenvalue = lo;
  t.condition = hi / lo;
  VecX inv_sqrt = ev.array().rsqrt();
  VecX sqrt_ev = ev.array().sqrt();
  t.X = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
  t.Shalf = es.eigenvectors() * sqrt_ev.asDiagonal() * es.eigenvectors().transpose();
  return t;
}

}  // namespace rdmrecon
