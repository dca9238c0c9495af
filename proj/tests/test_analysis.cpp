#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "rdmrecon/analysis.hpp"
#include "rdmrecon/basis.hpp"
#include "rdmrecon/datalab.hpp"
#include "rdmrecon/integrals.hpp"
#include "rdmrecon/io_util.hpp"
#include "rdmrecon/solver.hpp"
#include "support/fixture_paths.hpp"

using namespace rdmrecon;

namespace {

struct WaterSetup {
  BasisSet basis;
  LowdinTransform lt;
  PopulationMatrix ref;
  CellImages images;
  Mat3 lattice;
};

WaterSetup water() {
  WaterSetup w{BasisSet::load(testpaths::fixture("water/geometry.txt"),
                              testpaths::fixture("water/basis.model.json")),
               {},
               {},
               load_cell_images(testpaths::fixture("water/images.p1.json")),
               Vec3(10.0, 11.0, 9.5).asDiagonal()};
  w.lt = lowdin(overlap_matrix(w.basis, Exec::Serial));
  w.ref = load_population(testpaths::fixture("water/P.model.json"), w.basis, w.lt);
  return w;
}

BasisSet single_s(double exponent, const std::string& label = "H", int z = 1) {
  std::vector<Atom> atoms{{label, z, Vec3::Zero()}};
  std::vector<Shell> shells;
  shells.push_back({0, 0, {{exponent, 1.0}}});
  return BasisSet::build(std::move(atoms), std::move(shells));
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

}  // namespace

TEST_CASE("path sampling is uniform in arc length") {
  PathSpec spec;
  spec.waypoints = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 2, 0)};
  spec.points = 7;
  PathSamples s = sample_path(spec);
  REQUIRE(s.positions.size() == 7);
  REQUIRE(s.arc.size() == 7);
  CHECK(s.arc[0] == 0.0);
  CHECK(s.arc[6] == doctest::Approx(3.0).epsilon(1e-14));
  for (int i = 0; i < 7; ++i) CHECK(s.arc[i] == doctest::Approx(0.5 * i).epsilon(1e-14));
  CHECK((s.positions.front() - spec.waypoints.front()).norm() == 0.0);
  CHECK((s.positions.back() - spec.waypoints.back()).norm() < 1e-14);
  // the sample landing on the kink is the kink
  CHECK((s.positions[2] - Vec3(1, 0, 0)).norm() < 1e-14);
  // consecutive samples are 0.5 apart along the polyline
  for (int i = 1; i < 7; ++i) CHECK((s.positions[i] - s.positions[i - 1]).norm() ==
                                    doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(sample_path({{Vec3(0, 0, 0)}, 4}), Error);
  CHECK_THROWS_AS(sample_path({{Vec3(0, 0, 0), Vec3(1, 0, 0)}, 1}), Error);
  CHECK_THROWS_AS(sample_path({{Vec3(1, 2, 3), Vec3(1, 2, 3)}, 4}), Error);
}

TEST_CASE("rdm map is symmetric and carries the density on its diagonal") {
  WaterSetup w = water();
  const auto& atoms = w.basis.atoms();
  PathSpec spec;
  spec.waypoints = {atoms[1].position, atoms[0].position, atoms[2].position};
  spec.points = 24;
  Grid2D g = rdm_map(w.ref.P, w.basis, spec);
  REQUIRE(g.values.rows() == 24);
  REQUIRE(g.values.cols() == 24);
  CHECK(g.x == g.y);
  CHECK((g.values - g.values.transpose()).cwiseAbs().maxCoeff() < 1e-12);

  PathSamples s = sample_path(spec);
  VecX rho = density_on_points(w.ref.P, w.basis, s.positions);
  for (int i = 0; i < 24; ++i) {
    CHECK(std::abs(g.values(i, i) - rho[i]) < 1e-12);
    CHECK(rho[i] >= 0.0);  // the population matrix is PSD
  }
  // the density peaks on the heavy atom, not between the bonds
  int oxygen_idx = 12;  // midpoint of the two-leg path
  CHECK(rho[oxygen_idx] == rho.maxCoeff());
}

TEST_CASE("momentum density matches the closed form for a single gaussian") {
  const double alpha = 0.8;
  BasisSet b = single_s(alpha);
  MatX P(1, 1);
  P << 2.0;
  const double peak = 2.0 * std::pow(2.0 * kPi * alpha, -1.5);

  std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(0.3, -0.4, 0.5), Vec3(-0.5, 0.3, 0.4),
                        Vec3(1.9, 0.0, 0.0)};
  VecX n = momentum_density_on_points(P, b, pts);
  CHECK(n[0] == doctest::Approx(peak).epsilon(1e-12));
  CHECK(n[1] == doctest::Approx(peak * std::exp(-0.5 / (2.0 * alpha))).epsilon(1e-12));
  // isotropic: same |p| in a different direction gives the same value
  CHECK(n[2] == doctest::Approx(n[1]).epsilon(1e-13));
  CHECK(n[3] == doctest::Approx(peak * std::exp(-1.9 * 1.9 / (2.0 * alpha))).epsilon(1e-12));

  // the momentum density integrates to the electron count
  const double h = 0.25, lim = 5.0;
  std::vector<Vec3> grid;
  for (double x = -lim; x <= lim + 1e-12; x += h)
    for (double y = -lim; y <= lim + 1e-12; y += h)
      for (double z = -lim; z <= lim + 1e-12; z += h) grid.push_back(Vec3(x, y, z));
  VecX vals = momentum_density_on_points(P, b, grid);
  CHECK(vals.sum() * h * h * h == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("mean-field energies reproduce the stored reference values") {
  WaterSetup w = water();
  EnergyReport rep = mean_field_energy(w.ref.P, w.basis);
  CHECK(rep.total == doctest::Approx(-74.9635317615).epsilon(1e-9));
  CHECK(rep.virial_ratio == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(rep.kinetic > 0.0);
  CHECK(rep.nuclear_attraction < 0.0);
  CHECK(rep.two_electron > 0.0);
  CHECK(rep.nuclear_repulsion > 0.0);
  CHECK(rep.total == rep.kinetic + rep.nuclear_attraction + rep.two_electron +
                         rep.nuclear_repulsion);

  // passing a precomputed two-electron tensor changes nothing
  EriTensor eri = eri_tensor(w.basis);
  EnergyReport rep2 = mean_field_energy(w.ref.P, w.basis, &eri);
  CHECK(rep2.total == rep.total);
  CHECK(rep2.two_electron == rep.two_electron);

  BasisSet rich = BasisSet::load(testpaths::fixture("water/geometry.txt"),
                                 testpaths::fixture("water/basis.rich.json"));
  LowdinTransform rlt = lowdin(overlap_matrix(rich, Exec::Serial));
  PopulationMatrix rref = load_population(testpaths::fixture("water/P.rich.json"), rich, rlt);
  EnergyReport rrep = mean_field_energy(rref.P, rich);
  CHECK(rrep.total == doctest::Approx(-76.0121050107).epsilon(1e-9));
  CHECK(rrep.virial_ratio == doctest::Approx(1.0003119432).epsilon(1e-8));

  CHECK_THROWS_AS(mean_field_energy(MatX::Identity(3, 3), w.basis), Error);
  CHECK_THROWS_AS(mean_field_energy(rref.P, rich, &eri), Error);  // tensor size mismatch
}

TEST_CASE("energy pieces collapse to closed forms for one doubly occupied gaussian") {
  const double alpha = 0.9;
  BasisSet b = single_s(alpha);
  MatX P(1, 1);
  P << 2.0;
  CHECK(kinetic_energy(P, b) == doctest::Approx(3.0 * alpha).epsilon(1e-13));

  EnergyReport rep = mean_field_energy(P, b);
  // ((ii|ii) - (ii|ii)/2) contracted twice with a lone occupation of 2 leaves
  // exactly one self-repulsion
  EriTensor eri = eri_tensor(b);
  CHECK(rep.two_electron == doctest::Approx(eri(0, 0, 0, 0)).epsilon(1e-13));
  CHECK(rep.two_electron == doctest::Approx(2.0 * std::sqrt(alpha / kPi)).epsilon(1e-12));
  CHECK(rep.nuclear_attraction ==
        doctest::Approx(-4.0 * std::sqrt(2.0 * alpha / kPi)).epsilon(1e-12));
  CHECK(rep.nuclear_repulsion == 0.0);
}

TEST_CASE("virial ratio is one at the variational exponent") {
  // helium-like: scan the exponent of a lone s gaussian; scaling invariance
  // makes the virial ratio exactly one where the energy is stationary
  auto energy_at = [](double alpha) {
    BasisSet b = single_s(alpha, "He", 2);
    MatX P(1, 1);
    P << 2.0;
    return mean_field_energy(P, b);
  };
  double lo = 0.3, hi = 3.0;
  for (int it = 0; it < 120; ++it) {
    double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    if (energy_at(m1).total < energy_at(m2).total)
      hi = m2;
    else
      lo = m1;
  }
  double alpha_star = 0.5 * (lo + hi);
  EnergyReport rep = energy_at(alpha_star);
  CHECK(alpha_star == doctest::Approx(0.7669).epsilon(2e-4));
  // the bracket stalls once energy differences hit roundoff, so the located
  // minimum sits O(sqrt(eps)) away from the exact one
  CHECK(rep.virial_ratio == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rep.total < 0.0);
}

TEST_CASE("deformation tools count displaced charge") {
  WaterSetup w = water();
  PopulationMatrix pro =
      load_population(testpaths::fixture("water/promolecule.model.json"), w.basis, w.lt);
  // molecule and promolecule hold the same ten electrons
  CHECK(std::abs(deformation_charge(w.ref.P, pro.P, w.basis)) < 1e-8);
  // scaling the reference down by 10% exposes one electron
  CHECK(deformation_charge(w.ref.P, 0.9 * w.ref.P, w.basis) ==
        doctest::Approx(1.0).epsilon(1e-10));

  GridSpec grid;
  grid.origin = Vec3(0.0, -2.5, -2.0);
  grid.e1 = Vec3::UnitY();
  grid.e2 = Vec3::UnitZ();
  grid.len1 = 5.0;
  grid.len2 = 4.5;
  grid.n1 = 21;
  grid.n2 = 19;
  Grid2D def = deformation_map(w.ref.P, pro.P, w.basis, grid);
  Grid2D mol = density_map(w.ref.P, w.basis, grid);
  Grid2D ref = density_map(pro.P, w.basis, grid);
  CHECK((def.values - (mol.values - ref.values)).cwiseAbs().maxCoeff() < 1e-12);
  // bond formation moves charge around: both signs show up in the plane
  CHECK(def.values.minCoeff() < 0.0);
  CHECK(def.values.maxCoeff() > 0.0);

  CHECK_THROWS_AS(deformation_map(w.ref.P, MatX::Identity(3, 3), w.basis, grid), Error);
  GridSpec bad = grid;
  bad.e1 = Vec3(0, 2, 0);
  CHECK_THROWS_AS(density_map(w.ref.P, w.basis, bad), Error);
}

TEST_CASE("directional compton curves integrate to the electron count") {
  WaterSetup w = water();
  const double dq = 0.05, q_max = 50.0;
  auto qs = momentum_grid(q_max, dq);
  for (const Vec3& u : {Vec3(1, 0, 0), Vec3(1, 1, 1).normalized()}) {
    VecX J = dcp_curve(w.ref.P, w.basis, u, qs);
    CHECK(J[0] > 0.0);
    // profiles are even in q: integrate one half and fold
    double integral = dq * (2.0 * J.tail(J.size() - 1).sum() + J[0]);
    CHECK(integral == doctest::Approx(10.0).epsilon(1e-3));
  }
  VecX d = dcp_anisotropy(w.ref.P, w.basis, Vec3(1, 0, 0), Vec3(0, 0, 1), momentum_grid(3.0, 0.5));
  VecX j1 = dcp_curve(w.ref.P, w.basis, Vec3(1, 0, 0), momentum_grid(3.0, 0.5));
  VecX j2 = dcp_curve(w.ref.P, w.basis, Vec3(0, 0, 1), momentum_grid(3.0, 0.5));
  CHECK(d == j1 - j2);
  VecX zero = dcp_anisotropy(w.ref.P, w.basis, Vec3(0, 1, 0), Vec3(0, 1, 0), {0.0, 1.0});
  CHECK(zero.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(dcp_curve(w.ref.P, w.basis, Vec3::Zero(), {0.0}), Error);
}

TEST_CASE("adp refinement recovers the generating tensors from clean data") {
  WaterSetup w = water();
  ThermalModel truth = load_thermal_model(testpaths::fixture("water/adp.json"), 3);
  DataSet sf = generate_sf(w.basis, w.ref.P, w.images, w.lattice, 0.8, &truth);
  REQUIRE(sf.count(OperatorKind::StructureFactor) > 200);

  ThermalModel start;
  start.enabled = true;
  for (const Mat3& b : truth.displacement)
    start.displacement.push_back(0.5 * b + 0.01 * Mat3::Identity());

  AdpResult res = refine_adps(w.basis, w.images, sf, w.ref.P, start);
  CHECK(res.converged);
  CHECK(res.chi2 < 1e-12);
  REQUIRE(res.model.displacement.size() == 3);
  for (int a = 0; a < 3; ++a)
    CHECK((res.model.displacement[a] - truth.displacement[a]).cwiseAbs().maxCoeff() < 1e-6);

  // refusal paths: no SF records, disabled start, wrong matrix size
  DataSet dcp_only = generate_dcp(w.basis, w.ref.P, {Vec3(1, 0, 0)}, 1.0, 0.5);
  CHECK_THROWS_AS(refine_adps(w.basis, w.images, dcp_only, w.ref.P, start), Error);
  ThermalModel off;
  off.displacement = start.displacement;
  CHECK_THROWS_AS(refine_adps(w.basis, w.images, sf, w.ref.P, off), Error);
  CHECK_THROWS_AS(refine_adps(w.basis, w.images, sf, MatX::Identity(3, 3), start), Error);
}

TEST_CASE("cutoff scan rows track their data subsets") {
  WaterSetup w = water();
  DataSet sf = generate_sf(w.basis, w.ref.P, w.images, w.lattice, 0.55);
  DataSet dcp = generate_dcp(w.basis, w.ref.P, standard_directions(), 2.0, 0.4);
  DataSet data = merge(sf, dcp);
  ConstraintSet cons = nrep_constraints(10, 7);
  SolverSettings st;

  std::vector<double> cutoffs{0.35, 0.55};
  auto rows = scan_cutoff(w.basis, w.lt, cons, data, w.images, nullptr, cutoffs, st,
                          Weighting::Unweighted);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].cutoff == 0.35);
  CHECK(rows[1].cutoff == 0.55);
  CHECK(rows[0].n_sf < rows[1].n_sf);
  CHECK(rows[1].n_sf == sf.count(OperatorKind::StructureFactor));
  int below = 0;
  for (const auto& o : sf.obs)
    if (scattering_vector_from_hkl(w.lattice, o.hkl).stol <= 0.35 + 1e-12) ++below;
  CHECK(rows[0].n_sf == below);

  for (const auto& r : rows) {
    CHECK(r.P.rows() == 7);
    CHECK(r.chi2_sf + r.chi2_dcp < 1e-6);  // clean data admits the truth
    CHECK(r.energy.total == doctest::Approx(-74.9635317615).epsilon(1e-4));
  }
  // with the truth feasible at both cutoffs the scan is flat
  CHECK(std::abs(rows[0].energy.total - rows[1].energy.total) < 5e-3);

  CHECK_THROWS_AS(scan_cutoff(w.basis, w.lt, cons, data, w.images, nullptr, {}, st), Error);
}

TEST_CASE("csv and svg artifacts are well formed") {
  WaterSetup w = water();
  std::string dir = testpaths::fresh_temp_dir("analysis_artifacts");

  GridSpec grid;
  grid.origin = Vec3(0.0, -2.5, -2.0);
  grid.e1 = Vec3::UnitY();
  grid.e2 = Vec3::UnitZ();
  grid.len1 = 5.0;
  grid.len2 = 4.5;
  grid.n1 = 21;
  grid.n2 = 19;
  Grid2D den = density_map(w.ref.P, w.basis, grid);

  write_grid_csv(dir + "/density.csv", den);
  std::string csv = read_text_file(dir + "/density.csv");
  REQUIRE(count_lines(csv) == 22);
  std::stringstream ss(csv);
  std::string header, first;
  std::getline(ss, header);
  std::getline(ss, first);
  auto hf = split_csv(header);
  auto ff = split_csv(first);
  REQUIRE(hf.size() == 20);
  REQUIRE(ff.size() == 20);
  CHECK(hf[0] == "x\\y");
  CHECK(std::stod(ff[0]) == den.x[0]);
  CHECK(std::stod(ff[1]) == den.values(0, 0));  // full-precision round trip

  VecX xs = VecX::LinSpaced(5, 0.0, 1.0);
  VecX ys = xs.array().square();
  write_curve_csv(dir + "/curve.csv", "q", "J", xs, ys);
  std::string curve = read_text_file(dir + "/curve.csv");
  CHECK(count_lines(curve) == 6);
  CHECK(curve.rfind("q,J\n", 0) == 0);
  CHECK_THROWS_AS(write_curve_csv(dir + "/bad.csv", "x", "y", xs, ys.head(3)), Error);

  std::vector<CutoffScanRow> rows(2);
  rows[0].cutoff = 0.4;
  rows[0].n_sf = 11;
  rows[1].cutoff = 0.9;
  rows[1].n_sf = 42;
  write_scan_csv(dir + "/scan.csv", rows);
  std::string scan = read_text_file(dir + "/scan.csv");
  REQUIRE(count_lines(scan) == 3);
  std::stringstream sc(scan);
  std::string line;
  while (std::getline(sc, line)) CHECK(split_csv(line).size() == 10);

  PopulationMatrix pro =
      load_population(testpaths::fixture("water/promolecule.model.json"), w.basis, w.lt);
  Grid2D def = deformation_map(w.ref.P, pro.P, w.basis, grid);
  REQUIRE(def.values.maxCoeff() > 0.0);
  REQUIRE(def.values.minCoeff() < 0.0);
  write_grid_svg(dir + "/deformation.svg", def,
                 {0.5 * def.values.maxCoeff(), 0.8 * def.values.minCoeff()});
  std::string svg = read_text_file(dir + "/deformation.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<line") != std::string::npos);
  CHECK(svg.find("#1f4e9c") != std::string::npos);   // solid positive contour
  CHECK(svg.find("#b02020") != std::string::npos);   // dashed negative contour
  CHECK(svg.find("stroke-dasharray") != std::string::npos);

  write_grid_svg(dir + "/density.svg", den);  // default level ladder
  std::string dsvg = read_text_file(dir + "/density.svg");
  CHECK(dsvg.find("<line") != std::string::npos);
}

TEST_CASE("population files round trip") {
  WaterSetup w = water();
  std::string dir = testpaths::fresh_temp_dir("population_files");
  save_population(dir + "/P.json", w.ref);
  PopulationMatrix back = load_population(dir + "/P.json", w.basis, w.lt);
  CHECK(back.P == w.ref.P);
  CHECK(back.N == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(back.basis_hash == w.basis.hash());

  PopulationMatrix bent = w.ref;
  bent.basis_hash = "0000000000000000";
  save_population(dir + "/bent.json", bent);
  CHECK_THROWS_AS(load_population(dir + "/bent.json", w.basis, w.lt), Error);
  write_text_file(dir + "/garbage.json", "{not json");
  CHECK_THROWS_AS(load_population(dir + "/garbage.json", w.basis, w.lt), Error);
  CHECK_THROWS_AS(load_population(dir + "/absent.json", w.basis, w.lt), Error);
}

TEST_CASE("analysis maps agree between serial and parallel execution") {
  WaterSetup w = water();
  const auto& atoms = w.basis.atoms();
  PathSpec spec;
  spec.waypoints = {atoms[1].position, atoms[0].position, atoms[2].position};
  spec.points = 17;
  Grid2D a = rdm_map(w.ref.P, w.basis, spec, Exec::Serial);
  Grid2D b = rdm_map(w.ref.P, w.basis, spec, Exec::Parallel);
  CHECK(a.values == b.values);

  GridSpec grid;
  grid.origin = Vec3(0.0, -2.0, -1.5);
  grid.e1 = Vec3::UnitY();
  grid.e2 = Vec3::UnitZ();
  grid.len1 = 4.0;
  grid.len2 = 3.0;
  grid.n1 = 13;
  grid.n2 = 11;
  CHECK(density_map(w.ref.P, w.basis, grid, Exec::Serial).values ==
        density_map(w.ref.P, w.basis, grid, Exec::Parallel).values);

  std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(0.4, -0.2, 0.9), Vec3(-1.2, 0.3, 0.1)};
  CHECK(momentum_density_on_points(w.ref.P, w.basis, pts, Exec::Serial) ==
        momentum_density_on_points(w.ref.P, w.basis, pts, Exec::Parallel));

  auto qs = momentum_grid(2.0, 0.25);
  CHECK(dcp_curve(w.ref.P, w.basis, Vec3(0, 1, 0), qs, Exec::Serial) ==
        dcp_curve(w.ref.P, w.basis, Vec3(0, 1, 0), qs, Exec::Parallel));
}
