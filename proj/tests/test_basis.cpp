#include <doctest.h>

#include <cmath>
#include <fstream>

#include "rdmrecon/basis.hpp"
#include "rdmrecon/integrals.hpp"
#include "rdmrecon/io_util.hpp"
#include "support/fixture_paths.hpp"
#include "support/reference_integrals.hpp"

using namespace rdmrecon;

namespace {

BasisSet two_center_sp() {
  std::vector<Atom> atoms{{"H", 1, Vec3(0.0, 0.0, 0.0)}, {"H", 1, Vec3(0.0, 0.0, 1.4)}};
  std::vector<Shell> shells;
  shells.push_back({0, 0, {{1.3, 0.6}, {0.25, 0.5}}});
  shells.push_back({0, 1, {{0.8, 1.0}}});
  shells.push_back({1, 0, {{0.9, 1.0}}});
  return BasisSet::build(std::move(atoms), std::move(shells));
}

}  // namespace

TEST_CASE("geometry parsing handles units and bad input") {
  auto atoms = parse_geometry("units: angstrom\nO 0 0 0\nH 0 0 0.9572\n", "mem");
  REQUIRE(atoms.size() == 2);
  CHECK(atoms[0].charge == 8);
  // angstrom -> bohr conversion
  CHECK(atoms[1].position[2] == doctest::Approx(0.9572 * kBohrPerAngstrom).epsilon(1e-12));

  auto bohr = parse_geometry("units: bohr\nO 0 0 0\nH 0 0 1.8\n", "mem");
  CHECK(bohr[1].position[2] == doctest::Approx(1.8));

  CHECK_THROWS_AS(parse_geometry("O 0 0 0\n", "mem"), Error);              // no units line
  CHECK_THROWS_AS(parse_geometry("units: parsec\nO 0 0 0\n", "mem"), Error);
  CHECK_THROWS_AS(parse_geometry("units: bohr\nXx 0 0 0\n", "mem"), Error);  // unknown element
  CHECK_THROWS_AS(parse_geometry("units: bohr\nO 0 0\n", "mem"), Error);   // missing coordinate
  CHECK_THROWS_AS(parse_geometry("units: bohr\nO 0 0 zero\n", "mem"), Error);
  CHECK_THROWS_AS(parse_geometry("units: bohr\n", "mem"), Error);          // no atoms
}

TEST_CASE("basis JSON parsing validates shape") {
  std::vector<Atom> atoms{{"H", 1, Vec3::Zero()}};
  auto shells = parse_basis_json(R"({"H": [{"l": "s", "prim": [[1.0, 1.0]]}]})", atoms, "mem");
  REQUIRE(shells.size() == 1);
  CHECK(shells[0].l == 0);
  CHECK(shells[0].primitives.size() == 1);

  CHECK_THROWS_AS(parse_basis_json("[1,2]", atoms, "mem"), Error);
  CHECK_THROWS_AS(parse_basis_json(R"({"He": []})", atoms, "mem"), Error);  // missing element
  CHECK_THROWS_AS(parse_basis_json(R"({"H": []})", atoms, "mem"), Error);   // empty shell list
  CHECK_THROWS_AS(parse_basis_json(R"({"H": [{"l": "d", "prim": [[1, 1]]}]})", atoms, "mem"),
                  Error);
  CHECK_THROWS_AS(parse_basis_json(R"({"H": [{"l": "s", "prim": [[-1, 1]]}]})", atoms, "mem"),
                  Error);
  CHECK_THROWS_AS(parse_basis_json(R"({"H": [{"l": "s", "prim": [[1]]}]})", atoms, "mem"), Error);
  CHECK_THROWS_AS(parse_basis_json("{not json", atoms, "mem"), Error);
}

TEST_CASE("contracted functions are normalized to unit self-overlap") {
  BasisSet b = two_center_sp();
  REQUIRE(b.size() == 5);  // s + (px,py,pz) + s
  MatX S = overlap_matrix(b);
  for (int i = 0; i < b.size(); ++i) CHECK(S(i, i) == doctest::Approx(1.0).epsilon(1e-12));
  // p shell flattens in x, y, z order
  CHECK(b.functions()[1].powers == std::array<int, 3>{1, 0, 0});
  CHECK(b.functions()[2].powers == std::array<int, 3>{0, 1, 0});
  CHECK(b.functions()[3].powers == std::array<int, 3>{0, 0, 1});
}

TEST_CASE("basis digest tracks geometry and shell content") {
  BasisSet a = two_center_sp();
  BasisSet b = two_center_sp();
  CHECK(a.hash() == b.hash());
  std::vector<Atom> atoms{{"H", 1, Vec3(0.0, 0.0, 0.0)}, {"H", 1, Vec3(0.0, 0.0, 1.5)}};
  std::vector<Shell> shells;
  shells.push_back({0, 0, {{1.3, 0.6}, {0.25, 0.5}}});
  shells.push_back({0, 1, {{0.8, 1.0}}});
  shells.push_back({1, 0, {{0.9, 1.0}}});
  BasisSet c = BasisSet::build(std::move(atoms), std::move(shells));
  CHECK(a.hash() != c.hash());
  CHECK(a.hash().size() == 16);
}

TEST_CASE("load round-trips through files") {
  std::string dir = testpaths::fresh_temp_dir("basis_load");
  write_text_file(dir + "/geom.txt", "units: bohr\nH 0 0 0\nH 0 0 1.4\n");
  write_text_file(dir + "/basis.json",
                  R"({"H": [{"l": "s", "prim": [[1.3, 0.6], [0.25, 0.5]]}]})");
  BasisSet b = BasisSet::load(dir + "/geom.txt", dir + "/basis.json");
  CHECK(b.size() == 2);
  CHECK(b.electron_count() == 2);
  CHECK(b.functions()[1].center[2] == doctest::Approx(1.4));
}

TEST_CASE("orbital evaluation matches the primitive definition") {
  // single-primitive shells have closed-form normalized values
  std::vector<Atom> atoms{{"H", 1, Vec3(0.0, 0.0, 0.0)}};
  std::vector<Shell> shells;
  const double a_s = 0.7, a_p = 1.1;
  shells.push_back({0, 0, {{a_s, 1.0}}});
  shells.push_back({0, 1, {{a_p, 1.0}}});
  BasisSet b = BasisSet::build(std::move(atoms), std::move(shells));
  Vec3 r(0.3, -0.4, 0.5);
  MatX vals = b.evaluate({r}, Exec::Serial);
  double ns = std::pow(2.0 * a_s / kPi, 0.75);
  double np = std::pow(2.0 * a_p / kPi, 0.75) * 2.0 * std::sqrt(a_p);
  CHECK(vals(0, 0) == doctest::Approx(ns * std::exp(-a_s * r.squaredNorm())).epsilon(1e-13));
  CHECK(vals(1, 0) ==
        doctest::Approx(np * r[0] * std::exp(-a_p * r.squaredNorm())).epsilon(1e-13));
  CHECK(vals(3, 0) ==
        doctest::Approx(np * r[2] * std::exp(-a_p * r.squaredNorm())).epsilon(1e-13));

  // serial and parallel paths agree bitwise on a bigger batch
  BasisSet big = two_center_sp();
  std::vector<Vec3> pts;
  for (int k = 0; k < 200; ++k)
    pts.push_back(Vec3(0.05 * k - 3.0, 0.02 * k - 2.0, 0.03 * k - 1.0));
  MatX ser = big.evaluate(pts, Exec::Serial);
  MatX par = big.evaluate(pts, Exec::Parallel);
  CHECK((par - ser).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lowdin transform inverts the overlap") {
  BasisSet b = two_center_sp();
  MatX S = overlap_matrix(b);
  LowdinTransform t = lowdin(S);
  int m = b.size();
  CHECK((t.X * S * t.X - MatX::Identity(m, m)).norm() < 1e-12);
  CHECK((t.Shalf * t.X - MatX::Identity(m, m)).norm() < 1e-12);
  CHECK((t.Shalf * t.Shalf - S).norm() < 1e-12);
  CHECK(t.condition >= 1.0);
  CHECK(t.min_eigenvalue > 0.0);

  // near-singular overlap must be rejected, not silently inverted
  MatX bad = MatX::Identity(2, 2);
  bad(0, 1) = bad(1, 0) = 1.0 - 1e-13;
  CHECK_THROWS_AS(lowdin(bad), Error);
}
