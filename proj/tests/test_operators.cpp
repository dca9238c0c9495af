#include <doctest.h>

#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <set>

#include "rdmrecon/basis.hpp"
#include "rdmrecon/integrals.hpp"
#include "rdmrecon/io_util.hpp"
#include "rdmrecon/operators.hpp"
#include "support/fixture_paths.hpp"
#include "support/reference_integrals.hpp"

using namespace rdmrecon;

namespace {

// Two atoms, contracted s + p shells, nothing aligned with an axis.
BasisSet two_atom_sp() {
  std::vector<Atom> atoms{{"O", 8, Vec3(0.1, -0.2, 0.05)}, {"H", 1, Vec3(0.9, 0.8, -1.1)}};
  std::vector<Shell> shells;
  shells.push_back({0, 0, {{5.0, 0.7}, {0.9, 0.4}}});
  shells.push_back({0, 1, {{0.7, 1.0}}});
  shells.push_back({1, 0, {{0.45, 1.0}}});
  shells.push_back({1, 1, {{0.3, 1.0}}});
  return BasisSet::build(std::move(atoms), std::move(shells));
}

BasisSet single_s(double exponent) {
  std::vector<Atom> atoms{{"H", 1, Vec3::Zero()}};
  std::vector<Shell> shells;
  shells.push_back({0, 0, {{exponent, 1.0}}});
  return BasisSet::build(std::move(atoms), std::move(shells));
}

ScatteringVector plain_q(const Vec3& q) {
  ScatteringVector sv;
  sv.q = q;
  return sv;
}

CellImages identity_images() {
  CellImages im;
  im.rotations = {Mat3::Identity()};
  im.translations = {Vec3::Zero()};
  return im;
}

}  // namespace

TEST_CASE("structure factor matrices match quadrature") {
  BasisSet b = two_atom_sp();
  const std::vector<Vec3> qs = {Vec3(0.4, -0.7, 1.1), Vec3(2.3, 0.0, -0.6), Vec3(0.0, 0.0, 3.0),
                                Vec3(1.7, 2.2, 0.9)};
  for (const Vec3& q : qs) {
    ScatteringOperator op = sf_operator(b, plain_q(q));
    REQUIRE(op.kind == OperatorKind::StructureFactor);
    for (int i = 0; i < b.size(); ++i)
      for (int j = i; j < b.size(); ++j) {
        cdouble ref = oracle::sf_ref(b, i, j, q);
        CHECK(op.matrix(i, j).real() == doctest::Approx(ref.real()).epsilon(1e-9));
        CHECK(op.matrix(i, j).imag() == doctest::Approx(ref.imag()).epsilon(1e-9));
        // complex symmetric, not Hermitian
        CHECK(op.matrix(i, j) == op.matrix(j, i));
      }
  }
}

TEST_CASE("structure factor at q = 0 reduces to the overlap") {
  BasisSet b = two_atom_sp();
  ScatteringOperator op = sf_operator(b, plain_q(Vec3::Zero()));
  MatX S = overlap_matrix(b, Exec::Serial);
  CHECK((op.matrix.real() - S).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(op.matrix.imag().cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("opposite reflections are conjugate") {
  BasisSet b = two_atom_sp();
  Vec3 q(1.3, -0.8, 0.45);
  MatXc plus = sf_operator(b, plain_q(q)).matrix;
  MatXc minus = sf_operator(b, plain_q(-q)).matrix;
  CHECK((minus - plus.conjugate()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("compton profile matrices match quadrature") {
  BasisSet b = two_atom_sp();
  std::vector<Vec3> dirs = {Vec3(1, 0, 0), Vec3(1, 1, 0).normalized(),
                            Vec3(0.3, -0.4, 0.866).normalized()};
  for (const Vec3& u : dirs)
    for (double q : {0.0, 0.35, 1.2, 2.8}) {
      ScatteringOperator op = dcp_operator(b, {u, q});
      REQUIRE(op.kind == OperatorKind::ComptonProfile);
      CHECK(op.matrix.imag().cwiseAbs().maxCoeff() == 0.0);
      for (int i = 0; i < b.size(); ++i)
        for (int j = i; j < b.size(); ++j) {
          double ref = oracle::dcp_ref(b, i, j, u, q);
          CHECK(op.matrix(i, j).real() == doctest::Approx(ref).epsilon(1e-9));
          CHECK(op.matrix(i, j) == op.matrix(j, i));
        }
    }
}

TEST_CASE("compton profile of a single gaussian has the textbook shape") {
  const double alpha = 0.8;
  BasisSet b = single_s(alpha);
  // peak height 1 / sqrt(2 pi alpha)
  double j0 = dcp_operator(b, {Vec3(0, 0, 1), 0.0}).matrix(0, 0).real();
  CHECK(j0 == doctest::Approx(1.0 / std::sqrt(2.0 * kPi * alpha)).epsilon(1e-12));
  // an s function scatters isotropically
  double ja = dcp_operator(b, {Vec3(1, 0, 0), 0.7}).matrix(0, 0).real();
  double jb = dcp_operator(b, {Vec3(0.6, -0.8, 0.0).normalized(), 0.7}).matrix(0, 0).real();
  CHECK(ja == doctest::Approx(jb).epsilon(1e-13));
  // profile integrates to the function's norm
  double riemann = 0.0, dq = 0.02;
  for (double q = -10.0; q <= 10.0; q += dq)
    riemann += dq * dcp_operator(b, {Vec3(0, 0, 1), q}).matrix(0, 0).real();
  CHECK(riemann == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("reflection grids are bounded, unique and ordered") {
  Mat3 cell = Vec3(10.0, 11.5, 9.0).asDiagonal();
  cell(0, 1) = 0.8;  // a little obliquity so nothing is axis-aligned
  const double cutoff = 0.55;
  auto grid = hkl_grid(cell, cutoff);
  REQUIRE(grid.size() > 50);

  std::set<std::array<int, 3>> seen;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const auto& sv = grid[n];
    REQUIRE(sv.hkl.has_value());
    const auto& h = *sv.hkl;
    CHECK(sv.stol <= cutoff + 1e-12);
    CHECK(sv.stol > 0.0);
    // q and stol consistent with the lattice
    Vec3 gv = cell.inverse().transpose() * h.cast<double>();
    CHECK((sv.q - 2.0 * kPi * gv).norm() < 1e-12);
    CHECK(sv.stol == doctest::Approx(0.5 * gv.norm() * kBohrPerAngstrom).epsilon(1e-12));
    // strict (stol, hkl) ordering implies uniqueness
    if (n > 0) {
      const auto& prev = grid[n - 1];
      bool ordered = prev.stol < sv.stol ||
                     (prev.stol == sv.stol &&
                      std::lexicographical_compare(prev.hkl->data(), prev.hkl->data() + 3,
                                                   h.data(), h.data() + 3));
      CHECK(ordered);
    }
    seen.insert({h[0], h[1], h[2]});
  }
  // one representative per Friedel pair, and never the origin
  for (const auto& h : seen) {
    CHECK(!(h[0] == 0 && h[1] == 0 && h[2] == 0));
    CHECK(seen.count({-h[0], -h[1], -h[2]}) == 0);
  }
  // recount with an independent, deliberately oversized brute-force scan
  double stol_bohr = cutoff * kAngstromPerBohr;
  int bmax = static_cast<int>(2.0 * stol_bohr * 12.5) + 2;
  std::size_t expect = 0;
  for (int h = 0; h <= bmax; ++h)
    for (int k = -bmax; k <= bmax; ++k)
      for (int l = -bmax; l <= bmax; ++l) {
        if (h == 0 && k < 0) continue;
        if (h == 0 && k == 0 && l <= 0) continue;
        Vec3 gv = cell.inverse().transpose() * Vec3(h, k, l);
        if (0.5 * gv.norm() * kBohrPerAngstrom <= cutoff + 1e-12) ++expect;
      }
  CHECK(grid.size() == expect);

  CHECK_THROWS_AS(hkl_grid(Mat3::Zero(), 0.5), Error);
  CHECK_THROWS_AS(hkl_grid(cell, 0.0), Error);
}

TEST_CASE("cell images compose through the translation phase") {
  BasisSet b = two_atom_sp();
  ScatteringVector sv = plain_q(Vec3(0.9, -0.3, 0.7));

  ScatteringOperator single = sf_operator(b, sv);
  ScatteringOperator same = sf_operator_cell(b, identity_images(), sv);
  CHECK((same.matrix - single.matrix).cwiseAbs().maxCoeff() == 0.0);

  Vec3 t(3.1, 0.0, -2.2);
  CellImages two;
  two.rotations = {Mat3::Identity(), Mat3::Identity()};
  two.translations = {Vec3::Zero(), t};
  ScatteringOperator pair = sf_operator_cell(b, two, sv);
  cdouble phase = cdouble(1.0, 0.0) + std::exp(cdouble(0.0, -sv.q.dot(t)));
  CHECK((pair.matrix - phase * single.matrix).cwiseAbs().maxCoeff() < 1e-13);

  CellImages bad;
  bad.rotations = {Mat3::Identity()};
  CHECK_THROWS_AS(bad.validate(), Error);
  CellImages empty;
  CHECK_THROWS_AS(empty.validate(), Error);
  CellImages skewed;
  skewed.rotations = {2.0 * Mat3::Identity()};
  skewed.translations = {Vec3::Zero()};
  CHECK_THROWS_AS(skewed.validate(), Error);
}

TEST_CASE("displacement smearing touches only one-center elements") {
  BasisSet b = two_atom_sp();
  ThermalModel tm;
  tm.enabled = true;
  Mat3 b0;
  b0 << 0.03, 0.005, 0.0, 0.005, 0.02, 0.004, 0.0, 0.004, 0.05;
  tm.displacement = {b0, 0.04 * Mat3::Identity()};
  tm.validate(2);

  ScatteringVector sv = plain_q(Vec3(1.1, -0.6, 0.8));
  MatXc plain = sf_operator(b, sv).matrix;
  ScatteringOperator smeared = sf_operator(b, sv, &tm);
  CHECK(smeared.thermal);

  double w0 = std::exp(-sv.q.dot(tm.displacement[0] * sv.q));
  double w1 = std::exp(-sv.q.dot(tm.displacement[1] * sv.q));
  for (int i = 0; i < b.size(); ++i)
    for (int j = 0; j < b.size(); ++j) {
      int ai = b.functions()[i].atom, aj = b.functions()[j].atom;
      cdouble expect = plain(i, j);
      if (ai == aj) expect *= (ai == 0 ? w0 : w1);
      CHECK(std::abs(smeared.matrix(i, j) - expect) < 1e-14);
    }

  ThermalModel off;
  off.enabled = true;
  off.displacement = {Mat3::Zero(), Mat3::Zero()};
  MatXc frozen = sf_operator(b, sv, &off).matrix;
  CHECK((frozen - plain).cwiseAbs().maxCoeff() == 0.0);

  ThermalModel bad;
  bad.enabled = true;
  bad.displacement = {b0};
  CHECK_THROWS_AS(bad.validate(2), Error);
  Mat3 asym = b0;
  asym(0, 1) += 1e-3;
  bad.displacement = {asym, b0};
  CHECK_THROWS_AS(bad.validate(2), Error);
  Mat3 indefinite = b0;
  indefinite(2, 2) = -0.05;
  bad.displacement = {indefinite, b0};
  CHECK_THROWS_AS(bad.validate(2), Error);
}

TEST_CASE("operator batches agree between serial and parallel") {
  BasisSet b = two_atom_sp();
  Mat3 cell = Vec3(9.0, 10.0, 11.0).asDiagonal();
  auto grid = hkl_grid(cell, 0.45);
  ThermalModel tm;
  tm.enabled = true;
  tm.displacement = {0.03 * Mat3::Identity(), 0.02 * Mat3::Identity()};

  auto ser = sf_operator_batch(b, identity_images(), grid, &tm, Exec::Serial);
  auto par = sf_operator_batch(b, identity_images(), grid, &tm, Exec::Parallel);
  REQUIRE(ser.size() == grid.size());
  REQUIRE(par.size() == grid.size());
  for (std::size_t n = 0; n < ser.size(); ++n) {
    CHECK(ser[n].matrix == par[n].matrix);
    CHECK(ser[n].sf_meta.q == grid[n].q);
  }

  std::vector<ComptonPoint> pts;
  for (double q = 0.0; q < 3.0; q += 0.17) pts.push_back({Vec3(1, 2, 2).normalized(), q});
  auto dser = dcp_operator_batch(b, pts, Exec::Serial);
  auto dpar = dcp_operator_batch(b, pts, Exec::Parallel);
  REQUIRE(dser.size() == pts.size());
  for (std::size_t n = 0; n < dser.size(); ++n) {
    CHECK(dser[n].matrix == dpar[n].matrix);
    CHECK(dser[n].dcp_meta.q == pts[n].q);
  }
}

TEST_CASE("operator caches round-trip and reject corruption") {
  BasisSet b = two_atom_sp();
  Mat3 cell = Vec3(10.0, 10.0, 10.0).asDiagonal();
  auto grid = hkl_grid(cell, 0.35);
  auto ops = sf_operator_batch(b, identity_images(), grid, nullptr, Exec::Serial);
  std::vector<ComptonPoint> pts = {{Vec3(1, 0, 0), 0.4}, {Vec3(0, 1, 0), 1.1}};
  auto dops = dcp_operator_batch(b, pts, Exec::Serial);
  ops.insert(ops.end(), dops.begin(), dops.end());

  std::string dir = testpaths::fresh_temp_dir("opcache");
  std::string path = dir + "/ops.bin";
  save_operators(path, b.hash(), ops);

  auto back = load_operators(path, b.hash());
  REQUIRE(back.size() == ops.size());
  for (std::size_t n = 0; n < ops.size(); ++n) {
    CHECK(back[n].kind == ops[n].kind);
    CHECK(back[n].thermal == ops[n].thermal);
    CHECK(back[n].matrix == ops[n].matrix);
    if (ops[n].kind == OperatorKind::StructureFactor) {
      CHECK(back[n].sf_meta.q == ops[n].sf_meta.q);
      CHECK(back[n].sf_meta.stol == ops[n].sf_meta.stol);
      REQUIRE(back[n].sf_meta.hkl.has_value() == ops[n].sf_meta.hkl.has_value());
      if (ops[n].sf_meta.hkl) CHECK(*back[n].sf_meta.hkl == *ops[n].sf_meta.hkl);
    } else {
      CHECK(back[n].dcp_meta.u == ops[n].dcp_meta.u);
      CHECK(back[n].dcp_meta.q == ops[n].dcp_meta.q);
    }
  }

  CHECK_THROWS_AS(load_operators(path, "0123456789abcdef"), Error);

  std::vector<std::uint8_t> blob = read_binary_file(path);
  std::vector<std::uint8_t> flipped = blob;
  flipped[flipped.size() / 2] ^= 0x5a;
  write_binary_file(dir + "/bad.bin", flipped.data(), flipped.size());
  CHECK_THROWS_AS(load_operators(dir + "/bad.bin", b.hash()), Error);

  write_binary_file(dir + "/short.bin", blob.data(), blob.size() / 3);
  CHECK_THROWS_AS(load_operators(dir + "/short.bin", b.hash()), Error);

  CHECK_THROWS_AS(load_operators(dir + "/missing.bin", b.hash()), Error);
}

TEST_CASE("image and displacement files load with validation") {
  std::string dir = testpaths::fresh_temp_dir("opfiles");
  {
    std::ofstream out(dir + "/images.json");
    out << R"({"images": [{"R": [[1,0,0],[0,1,0],[0,0,1]], "t": [0,0,0]},)"
        << R"({"R": [[-1,0,0],[0,-1,0],[0,0,1]], "t": [0.5, 0.5, 0]}]})";
  }
  CellImages im = load_cell_images(dir + "/images.json");
  REQUIRE(im.count() == 2);
  CHECK(im.rotations[1](0, 0) == -1.0);
  CHECK(im.translations[1][0] == 0.5);

  {
    std::ofstream out(dir + "/adp.json");
    out << R"({"displacement": [[[0.03,0,0],[0,0.03,0],[0,0,0.03]],)"
        << R"([[0.02,0.001,0],[0.001,0.02,0],[0,0,0.02]]]})";
  }
  ThermalModel tm = load_thermal_model(dir + "/adp.json", 2);
  CHECK(tm.enabled);
  CHECK(tm.displacement[1](0, 1) == 0.001);
  CHECK_THROWS_AS(load_thermal_model(dir + "/adp.json", 3), Error);

  std::string round = dir + "/adp2.json";
  save_thermal_model(round, tm);
  ThermalModel tm2 = load_thermal_model(round, 2);
  CHECK(tm2.displacement[0] == tm.displacement[0]);
  CHECK(tm2.displacement[1] == tm.displacement[1]);

  write_text_file(dir + "/broken.json", "{\"images\": [{\"R\": 3}]}");
  CHECK_THROWS_AS(load_cell_images(dir + "/broken.json"), Error);
}
