// Generates the shipped water fixture: a virial-calibrated geometry, a small
// reconstruction basis plus a richer data-generation basis, restricted
// mean-field reference populations in both, the oxygen core orbital, C2v
// symmetry operations, a spherical-atom promolecule, displacement tensors and
// a synthetic unit cell.  Deterministic: no clocks, no RNG.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdmrecon/analysis.hpp"
#include "rdmrecon/basis.hpp"
#include "rdmrecon/constraints.hpp"
#include "rdmrecon/integrals.hpp"
#include "rdmrecon/io_util.hpp"
#include "rdmrecon/operators.hpp"
#include "rdmrecon/types.hpp"

using namespace rdmrecon;
using nlohmann::json;

namespace {

struct ScfResult {
  MatX C;      // AO coefficients, columns ordered by orbital energy
  VecX eps;    // orbital energies
  MatX P;      // population matrix (sums occupations)
  double energy = 0.0;        // total, hartree
  double kinetic = 0.0;       // tr(P T)
  double virial = 0.0;        // -V / 2T
};

// Plain restricted SCF with fixed (possibly fractional) occupations.  The
// spin-traced two-electron functional matches the one the analysis module
// reports: E2 = 1/2 sum P P [(ij|kl) - 1/2 (il|kj)].
ScfResult scf(const BasisSet& basis, const std::vector<double>& occ) {
  const int m = basis.size();
  const int nocc = static_cast<int>(occ.size());
  const MatX S = overlap_matrix(basis);
  const MatX T = kinetic_matrix(basis);
  const MatX V = nuclear_attraction_matrix(basis);
  const MatX Hcore = T + V;
  const EriTensor eri = eri_tensor(basis);
  const LowdinTransform lt = lowdin(S);
  const double vnn = nuclear_repulsion_energy(basis);

  VecX occv(nocc);
  for (int k = 0; k < nocc; ++k) occv[k] = occ[k];

  MatX P = MatX::Zero(m, m);
  MatX F = Hcore;
  double energy = 0.0;
  ScfResult out;
  for (int it = 0; it < 500; ++it) {
    MatX Fp = lt.X.transpose() * F * lt.X;
    Eigen::SelfAdjointEigenSolver<MatX> es(Fp);
    MatX C = lt.X * es.eigenvectors();
    MatX Pnew = C.leftCols(nocc) * occv.asDiagonal() * C.leftCols(nocc).transpose();
    if (it > 0 && it < 12) Pnew = 0.5 * Pnew + 0.5 * P;  // damp early oscillations
    double dp = (Pnew - P).norm();
    P = Pnew;

    MatX G = MatX::Zero(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j <= i; ++j) {
        double g = 0.0;
        for (int k = 0; k < m; ++k)
          for (int l = 0; l < m; ++l) g += P(k, l) * (eri(i, j, k, l) - 0.5 * eri(i, l, k, j));
        G(i, j) = g;
        G(j, i) = g;
      }
    F = Hcore + G;
    double enew = (P.cwiseProduct(Hcore)).sum() + 0.5 * (P.cwiseProduct(G)).sum() + vnn;
    bool settled = it > 1 && std::abs(enew - energy) < 1e-12 && dp < 1e-10;
    energy = enew;
    if (settled || it == 499) {
      out.C = C;
      out.eps = es.eigenvalues();
      break;
    }
  }
  out.P = P;
  out.energy = energy;
  out.kinetic = (P.cwiseProduct(T)).sum();
  out.virial = -(energy - out.kinetic) / (2.0 * out.kinetic);
  return out;
}

std::string geometry_text(const std::vector<Vec3>& pos) {
  std::string text = "units: bohr\n";
  const char* sym[3] = {"O", "H", "H"};
  for (int a = 0; a < 3; ++a)
    text += std::string(sym[a]) + " " + format_double(pos[a][0]) + " " + format_double(pos[a][1]) +
            " " + format_double(pos[a][2]) + "\n";
  return text;
}

json shell_json(const char* l, std::vector<std::pair<double, double>> prim) {
  json sh;
  sh["l"] = l;
  json arr = json::array();
  for (auto& p : prim) arr.push_back({p.first, p.second});
  sh["prim"] = std::move(arr);
  return sh;
}

// Minimal-style reconstruction basis: three-primitive 1s/2s/2p on oxygen,
// three-primitive 1s on hydrogen.
std::string model_basis_text(double s2) {
  json j;
  j["O"] = json::array({
      shell_json("s", {{130.70932 * s2, 0.15432897}, {23.808861 * s2, 0.53532814},
                       {6.4436083 * s2, 0.44463454}}),
      shell_json("s", {{5.0331513 * s2, -0.09996723}, {1.1695961 * s2, 0.39951283},
                       {0.3803890 * s2, 0.70011547}}),
      shell_json("p", {{5.0331513 * s2, 0.15591627}, {1.1695961 * s2, 0.60768372},
                       {0.3803890 * s2, 0.39195739}}),
  });
  j["H"] = json::array({
      shell_json("s", {{3.42525091 * s2, 0.15432897}, {0.62391373 * s2, 0.53532814},
                       {0.16885540 * s2, 0.44463454}}),
  });
  return j.dump(1);
}

// Split-valence generation basis with hydrogen polarization; much more room
// to move than the reconstruction basis, so model bias is a real effect.
std::string rich_basis_text(double s2) {
  json j;
  j["O"] = json::array({
      shell_json("s", {{5484.6717 * s2, 0.0018311}, {825.23495 * s2, 0.0139501},
                       {188.04696 * s2, 0.0684451}, {52.9645 * s2, 0.2327143},
                       {16.89757 * s2, 0.470193}, {5.7996353 * s2, 0.3585209}}),
      shell_json("s", {{15.539616 * s2, -0.1107775}, {3.5999336 * s2, -0.1480263},
                       {1.01376175 * s2, 1.130767}}),
      shell_json("s", {{0.2700058 * s2, 1.0}}),
      shell_json("p", {{15.539616 * s2, 0.0708743}, {3.5999336 * s2, 0.3397528},
                       {1.01376175 * s2, 0.7271586}}),
      shell_json("p", {{0.2700058 * s2, 1.0}}),
  });
  j["H"] = json::array({
      shell_json("s", {{18.7311370 * s2, 0.03349460}, {2.8253937 * s2, 0.23472695},
                       {0.6401217 * s2, 0.81375733}}),
      shell_json("s", {{0.1612778 * s2, 1.0}}),
      shell_json("p", {{1.1 * s2, 1.0}}),
  });
  return j.dump(1);
}

BasisSet build_from_text(const std::string& geom, const std::string& basis_json) {
  auto atoms = parse_geometry(geom, "fixture geometry");
  auto shells = parse_basis_json(basis_json, atoms, "fixture basis");
  return BasisSet::build(std::move(atoms), std::move(shells));
}

void save_population_json(const std::string& path, const BasisSet& basis, const MatX& P,
                          double N) {
  json j;
  j["basis_hash"] = basis.hash();
  j["N"] = N;
  j["M"] = basis.size();
  json arr = json::array();
  for (int r = 0; r < P.rows(); ++r)
    for (int c = 0; c < P.cols(); ++c) arr.push_back(P(r, c));
  j["P"] = std::move(arr);
  write_text_file(path, j.dump() + "\n");
}

void save_core_json(const std::string& path, const BasisSet& basis, const MatX& C) {
  json j;
  j["basis_hash"] = basis.hash();
  j["n_core"] = static_cast<int>(C.cols());
  json arr = json::array();
  for (int c = 0; c < C.cols(); ++c)
    for (int r = 0; r < C.rows(); ++r) arr.push_back(C(r, c));
  j["coefficients"] = std::move(arr);
  write_text_file(path, j.dump() + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: make_fixtures <output-dir>\n");
    return 1;
  }
  const std::string dir = argv[1];

  // experimental-ish start: r(OH) 0.9572 A, angle 104.52 deg, C2 axis on z,
  // molecule in the x = 0 plane
  std::vector<Vec3> pos = {
      Vec3(0.0, 0.0, 0.1173) * kBohrPerAngstrom,
      Vec3(0.0, 0.7572, -0.4692) * kBohrPerAngstrom,
      Vec3(0.0, -0.7572, -0.4692) * kBohrPerAngstrom,
  };
  const std::vector<double> water_occ(5, 2.0);

  // Calibrate the reconstruction basis: uniform coordinate scale 1/s and
  // exponent scale s^2 leave the wavefunction family closed, and the energy
  // along that family is E(s) = s^2 T + s V, minimized exactly where the
  // virial ratio is one.
  double s2 = 1.0;
  ScfResult model_scf;
  BasisSet model;
  for (int round = 0; round < 12; ++round) {
    model = build_from_text(geometry_text(pos), model_basis_text(s2));
    model_scf = scf(model, water_occ);
    double s = model_scf.virial;
    if (std::abs(s - 1.0) < 5e-11) break;
    for (auto& r : pos) r /= s;
    s2 *= s * s;
  }
  std::printf("model  E = %.10f  virial = %.10f  M = %d  hash = %s\n", model_scf.energy,
              model_scf.virial, model.size(), model.hash().c_str());

  // The generation basis keeps that geometry; only its own exponent scale is
  // tuned, by a parabolic refinement of E(scale).
  double lo = 0.90, hi = 1.10;
  for (int it = 0; it < 24; ++it) {
    double a = lo + (hi - lo) / 3.0, b = hi - (hi - lo) / 3.0;
    double ea = scf(build_from_text(geometry_text(pos), rich_basis_text(a)), water_occ).energy;
    double eb = scf(build_from_text(geometry_text(pos), rich_basis_text(b)), water_occ).energy;
    if (ea < eb)
      hi = b;
    else
      lo = a;
  }
  const double rich_s2 = 0.5 * (lo + hi);
  BasisSet rich = build_from_text(geometry_text(pos), rich_basis_text(rich_s2));
  ScfResult rich_scf = scf(rich, water_occ);
  std::printf("rich   E = %.10f  virial = %.10f  M = %d  hash = %s\n", rich_scf.energy,
              rich_scf.virial, rich.size(), rich.hash().c_str());

  write_text_file(dir + "/geometry.txt", geometry_text(pos));
  write_text_file(dir + "/basis.model.json", model_basis_text(s2) + "\n");
  write_text_file(dir + "/basis.rich.json", rich_basis_text(rich_s2) + "\n");
  save_population_json(dir + "/P.model.json", model, model_scf.P, 10.0);
  save_population_json(dir + "/P.rich.json", rich, rich_scf.P, 10.0);
  save_core_json(dir + "/core.model.json", model, model_scf.C.leftCols(1));
  save_core_json(dir + "/core.rich.json", rich, rich_scf.C.leftCols(1));

  // Spherically averaged neutral atoms in the reconstruction basis, assembled
  // block-diagonally: the promolecule reference for deformation maps.
  {
    const int m = model.size();
    MatX Ppro = MatX::Zero(m, m);
    std::string o_geom = "units: bohr\nO 0 0 0\n";
    std::string h_geom = "units: bohr\nH 0 0 0\n";
    BasisSet o_atom = build_from_text(o_geom, model_basis_text(s2));
    BasisSet h_atom = build_from_text(h_geom, model_basis_text(s2));
    ScfResult o_scf = scf(o_atom, {2.0, 2.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0});
    ScfResult h_scf = scf(h_atom, {1.0});
    Ppro.block(0, 0, 5, 5) = o_scf.P;
    Ppro(5, 5) = h_scf.P(0, 0);
    Ppro(6, 6) = h_scf.P(0, 0);
    save_population_json(dir + "/promolecule.model.json", model, Ppro, 10.0);
    std::printf("promol O E = %.10f, H E = %.10f\n", o_scf.energy, h_scf.energy);
  }

  // C2v operation list with the two hydrogens swapping under C2 and the
  // perpendicular mirror.
  {
    json ops = json::array();
    auto push = [&ops](std::array<double, 3> diag, std::vector<int> perm) {
      json op;
      op["R"] = {{diag[0], 0.0, 0.0}, {0.0, diag[1], 0.0}, {0.0, 0.0, diag[2]}};
      op["perm"] = perm;
      ops.push_back(std::move(op));
    };
    push({1, 1, 1}, {0, 1, 2});     // E
    push({-1, -1, 1}, {0, 2, 1});   // C2 about z
    push({-1, 1, 1}, {0, 1, 2});    // mirror in the molecular (yz) plane
    push({1, -1, 1}, {0, 2, 1});    // perpendicular mirror
    json j;
    j["operations"] = std::move(ops);
    write_text_file(dir + "/symmetry.json", j.dump(1) + "\n");
  }

  // Site-symmetry-consistent displacement tensors, bohr^2: diagonal on the
  // axis atom, a yz cross term on the hydrogens with mirrored sign.
  {
    ThermalModel tm;
    tm.enabled = true;
    Mat3 bo = Vec3(0.020, 0.028, 0.024).asDiagonal();
    Mat3 bh1;
    bh1 << 0.035, 0.0, 0.0, 0.0, 0.030, 0.006, 0.0, 0.006, 0.040;
    Mat3 bh2 = bh1;
    bh2(1, 2) = -0.006;
    bh2(2, 1) = -0.006;
    tm.displacement = {bo, bh1, bh2};
    tm.validate(3);
    save_thermal_model(dir + "/adp.json", tm);
  }

  // Synthetic orthorhombic box and its image lists (one molecule per cell,
  // plus a variant with a half-cell translated copy for interference tests).
  {
    json cell;
    cell["a"] = {10.0, 0.0, 0.0};
    cell["b"] = {0.0, 11.0, 0.0};
    cell["c"] = {0.0, 0.0, 9.5};
    write_text_file(dir + "/cell.json", cell.dump(1) + "\n");

    json one;
    one["images"] = json::array();
    one["images"].push_back(
        {{"R", {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}, {"t", {0.0, 0.0, 0.0}}});
    write_text_file(dir + "/images.p1.json", one.dump(1) + "\n");

    json two = one;
    two["images"].push_back(
        {{"R", {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}, {"t", {5.0, 5.5, 4.75}}});
    write_text_file(dir + "/images.two.json", two.dump(1) + "\n");
  }

  std::printf("fixtures written to %s\n", dir.c_str());
  return 0;
}
