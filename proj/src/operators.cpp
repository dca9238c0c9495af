#include "rdmrecon/operators.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "rdmrecon/io_util.hpp"

namespace rdmrecon {

void ThermalModel::validate(int natoms) const {
  if (!enabled) return;
  if (static_cast<int>(displacement.size()) != natoms)
    throw Error("thermal model: expected " + std::to_string(natoms) + " tensors, got " +
                std::to_string(displacement.size()));
  for (std::size_t a = 0; a < displacement.size(); ++a) {
    const Mat3& b = displacement[a];
    if ((b - b.transpose()).norm() > 1e-10)
      throw Error("thermal model: tensor " + std::to_string(a) + " is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> es(b);
    if (es.eigenvalues().minCoeff() < -1e-12)
      throw Error("thermal model: tensor " + std::to_string(a) + " is not positive semidefinite");
  }
}

void CellImages::validate() const {
  if (rotations.empty()) throw Error("cell images: at least the identity image is required");
  if (rotations.size() != translations.size())
    throw Error("cell images: rotation/translation count mismatch");
  bool has_identity = false;
  for (std::size_t m = 0; m < rotations.size(); ++m) {
    const Mat3& r = rotations[m];
    if ((r.transpose() * r - Mat3::Identity()).norm() > 1e-10)
      throw Error("cell images: rotation " + std::to_string(m) + " is not orthogonal");
    if ((r - Mat3::Identity()).norm() < 1e-12 && translations[m].norm() < 1e-12)
      has_identity = true;
  }
  if (!has_identity) throw Error("cell images: identity image missing");
}

ScatteringVector scattering_vector_from_hkl(const Mat3& cell, const Eigen::Vector3i& hkl) {
  if (std::abs(cell.determinant()) < 1e-12) throw Error("lattice matrix is singular");
  Vec3 h = hkl.cast<double>();
  // Reciprocal vectors (without 2pi) are the rows of cell^{-1}.
  Vec3 gv = cell.inverse().transpose() * h;
  ScatteringVector sv;
  sv.q = 2.0 * kPi * gv;
  sv.hkl = hkl;
  sv.stol = 0.5 * gv.norm() * kBohrPerAngstrom;  // |g|/2 converted to 1/angstrom
  return sv;
}

std::vector<ScatteringVector> hkl_grid(const Mat3& cell, double stol_max) {
  if (!(stol_max > 0.0)) throw Error("hkl grid: cutoff must be positive");
  if (std::abs(cell.determinant()) < 1e-12) throw Error("lattice matrix is singular");
  // |h| = |g . a| <= |g| |a| = 2 stol |a|, so per-index bounds follow from
  // the direct cell lengths.
  double stol_bohr = stol_max * kAngstromPerBohr;  // to 1/bohr
  Eigen::Vector3i bound;
  for (int d = 0; d < 3; ++d)
    bound[d] = static_cast<int>(std::floor(2.0 * stol_bohr * cell.col(d).norm() + 1e-9));
  std::vector<ScatteringVector> out;
  for (int h = -bound[0]; h <= bound[0]; ++h)
    for (int k = -bound[1]; k <= bound[1]; ++k)
      for (int l = -bound[2]; l <= bound[2]; ++l) {
        // one representative per Friedel pair; skip the origin
        if (h < 0) continue;
        if (h == 0 && k < 0) continue;
        if (h == 0 && k == 0 && l <= 0) continue;
        ScatteringVector sv = scattering_vector_from_hkl(cell, {h, k, l});
        if (sv.stol <= stol_max + 1e-12) out.push_back(sv);
      }
  std::sort(out.begin(), out.end(), [](const ScatteringVector& a, const ScatteringVector& b) {
    if (a.stol != b.stol) return a.stol < b.stol;
    const auto& ha = *a.hkl;
    const auto& hb = *b.hkl;
    return std::lexicographical_compare(ha.data(), ha.data() + 3, hb.data(), hb.data() + 3);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Structure-factor matrix.  For a primitive pair the Fourier transform of the
// charge distribution is
//   (pi/p)^{3/2} exp(-q^2/4p) exp(-i q.P) prod_d

//       sum_t E^{ij}_t (-i q_d)^t,
// obtained by transforming the Hermite expansion term by term.
// ---------------------------------------------------------------------------

namespace {

// Minimal 1-D Hermite expansion for i, j <= 1 (three coefficients).
struct E1D {
  double e[2][2][3];
};

void build_e1d(double a, double b, double ab, E1D& t) {
  const double p = a + b;
  const double mu = a * b / p;
  const double pa = -b * ab / p;
  const double pb = a * ab / p;
  std::memset(t.e, 0, sizeof(t.e));
  t.e[0][0][0] = std::exp(-mu * ab * ab);
  t.e[1][0][0] = pa * t.e[0][0][0];
  t.e[1][0][1] = t.e[0][0][0] / (2.0 * p);
  for (int i = 0; i <= 1; ++i)
    for (int tt = 0; tt <= i + 1; ++tt) {
      double v = 0.0;
      if (tt > 0) v += t.e[i][0][tt - 1] / (2.0 * p);
      v += pb * t.e[i][0][tt];
      if (tt + 1 <= i) v += (tt + 1.0) * t.e[i][0][tt + 1];
      t.e[i][1][tt] = v;
    }
}

cdouble sf_element(const BasisSet& basis, int i, int j, const Vec3& q) {
  const auto& fi = basis.functions()[i];
  const auto& fj = basis.functions()[j];
  const auto& si = basis.shells()[fi.shell];
  const auto& sj = basis.shells()[fj.shell];
  const double q2 = q.squaredNorm();
  cdouble acc(0.0, 0.0);
  E1D ex, ey, ez;
  for (const auto& pa : si.primitives)
    for (const auto& pb : sj.primitives) {
      const double p = pa.exponent + pb.exponent;
      const Vec3 P = (pa.exponent * fi.center + pb.exponent * fj.center) / p;
      build_e1d(pa.exponent, pb.exponent, fi.center[0] - fj.center[0], ex);
      build_e1d(pa.exponent, pb.exponent, fi.center[1] - fj.center[1], ey);
      build_e1d(pa.exponent, pb.exponent, fi.center[2] - fj.center[2], ez);
      cdouble prod(1.0, 0.0);
      const E1D* tabs[3] = {&ex, &ey, &ez};
      for (int d = 0; d < 3; ++d) {
        const auto& e = tabs[d]->e[fi.powers[d]][fj.powers[d]];
        cdouble miq(0.0, -q[d]);  // (-i q_d)
        cdouble s(e[0], 0.0);
        cdouble pw = miq;
        for (int tt = 1; tt <= fi.powers[d] + fj.powers[d]; ++tt) {
          s += e[tt] * pw;
          pw *= miq;
        }
        prod *= s;
      }
      cdouble phase = std::exp(cdouble(0.0, -q.dot(P)));
      acc += pa.coeff * pb.coeff * std::pow(kPi / p, 1.5) * std::exp(-q2 / (4.0 * p)) * phase *
             prod;
    }
  return acc;
}

MatXc sf_matrix(const BasisSet& basis, const Vec3& q, const ThermalModel* thermal) {
  const int m = basis.size();
  MatXc out(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      cdouble v = sf_element(basis, i, j, q);
      if (thermal != nullptr && thermal->enabled) {
        int ai = basis.functions()[i].atom;
        int aj = basis.functions()[j].atom;
        // Debye-Waller damping applies to one-center products only; the
        // two-center terms are left unchanged.
        if (ai == aj) v *= std::exp(-q.dot(thermal->displacement[ai] * q));
      }
      out(i, j) = v;
      out(j, i) = v;  // complex symmetric (real basis functions)
    }
  return out;
}

}  // namespace

ScatteringOperator sf_operator(const BasisSet& basis, const ScatteringVector& sv,
                               const ThermalModel* thermal) {
  if (thermal != nullptr) thermal->validate(static_cast<int>(basis.atoms().size()));
  ScatteringOperator op;
  op.kind = OperatorKind::StructureFactor;
  op.sf_meta = sv;
  op.thermal = thermal != nullptr && thermal->enabled;
  op.matrix = sf_matrix(basis, sv.q, thermal);
  return op;
}

ScatteringOperator sf_operator_cell(const BasisSet& basis, const CellImages& images,
                                    const ScatteringVector& sv, const ThermalModel* thermal) {
  images.validate();
  if (thermal != nullptr) thermal->validate(static_cast<int>(basis.atoms().size()));
  const int m = basis.size();
  MatXc total = MatXc::Zero(m, m);
  for (int im = 0; im < images.count(); ++im) {
    Vec3 qm = images.rotations[im].transpose() * sv.q;
    cdouble phase = std::exp(cdouble(0.0, -sv.q.dot(images.translations[im])));
    total += phase * sf_matrix(basis, qm, thermal);
  }
  ScatteringOperator op;
  op.kind = OperatorKind::StructureFactor;
  op.sf_meta = sv;
  op.thermal = thermal != nullptr && thermal->enabled;
  op.matrix = std::move(total);
  return op;
}

// ---------------------------------------------------------------------------
// Directional Compton profile matrix.  Projecting the momentum-space product
// conj(g^_i) g^_j onto the plane p.u = q gives, per primitive pair with
// d = A - B, mu = ab/(a+b), dperp = d - (u.d) u:
//   base = pi mu / (2 (ab)^{3/2}) exp(-mu |dperp|^2 - q^2/(4 mu)) e^{i q u.d}
// and each p function multiplies in a derivative factor
//   L_w = -2 mu dperp_w + i q u_w
// (with sign -1 and 1/(2b) for the ket side, and a cross term
//   -2 mu (delta_wv - u_w u_v) when both sides are p).
// The real part is the observable matrix; the imaginary part is odd under
// i <-> j and cancels against the symmetrization.
// ---------------------------------------------------------------------------

namespace {

cdouble dcp_element(const BasisSet& basis, int i, int j, const Vec3& u, double q) {
  const auto& fi = basis.functions()[i];
  const auto& fj = basis.functions()[j];
  const auto& si = basis.shells()[fi.shell];
  const auto& sj = basis.shells()[fj.shell];
  const Vec3 d = fi.center - fj.center;
  const double t0 = u.dot(d);
  const Vec3 dperp = d - t0 * u;
  int wi = -1, wj = -1;  // cartesian component if p function
  for (int c = 0; c < 3; ++c) {
    if (fi.powers[c] == 1) wi = c;
    if (fj.powers[c] == 1) wj = c;
  }
  cdouble acc(0.0, 0.0);
  for (const auto& pa : si.primitives)
    for (const auto& pb : sj.primitives) {
      const double a = pa.exponent, b = pb.exponent;
      const double mu = a * b / (a + b);
      cdouble base = kPi * mu / (2.0 * std::pow(a * b, 1.5)) *
                     std::exp(-mu * dperp.squaredNorm() - q * q / (4.0 * mu)) *
                     std::exp(cdouble(0.0, q * t0));
      cdouble val;
      if (wi < 0 && wj < 0) {
        val = base;
      } else if (wi >= 0 && wj < 0) {
        cdouble L(-2.0 * mu * dperp[wi], q * u[wi]);
        val = base * L / (2.0 * a);
      } else if (wi < 0 && wj >= 0) {
        cdouble L(-2.0 * mu * dperp[wj], q * u[wj]);
        val = -base * L / (2.0 * b);
      } else {
        cdouble Li(-2.0 * mu * dperp[wi], q * u[wi]);
        cdouble Lj(-2.0 * mu * dperp[wj], q * u[wj]);
        double delta = (wi == wj) ? 1.0 : 0.0;
        val = -base / (4.0 * a * b) * (Li * Lj - 2.0 * mu * (delta - u[wi] * u[wj]));
      }
      acc += pa.coeff * pb.coeff * val;
    }
  return acc;
}

}  // namespace

ScatteringOperator dcp_operator(const BasisSet& basis, const ComptonPoint& point) {
  if (std::abs(point.u.norm() - 1.0) > 1e-10)
    throw Error("compton operator: direction must be a unit vector");
  const int m = basis.size();
  MatXc out(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      double v = dcp_element(basis, i, j, point.u, point.q).real();
      out(i, j) = v;
      out(j, i) = v;
    }
  ScatteringOperator op;
  op.kind = OperatorKind::ComptonProfile;
  op.dcp_meta = point;
  op.matrix = std::move(out);
  return op;
}

std::vector<ScatteringOperator> sf_operator_batch(const BasisSet& basis, const CellImages& images,
                                                  const std::vector<ScatteringVector>& svs,
                                                  const ThermalModel* thermal, Exec exec) {
  images.validate();
  if (thermal != nullptr) thermal->validate(static_cast<int>(basis.atoms().size()));
  std::vector<ScatteringOperator> ops(svs.size());
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (std::size_t k = 0; k < svs.size(); ++k)
    ops[k] = sf_operator_cell(basis, images, svs[k], thermal);
  return ops;
}

std::vector<ScatteringOperator> dcp_operator_batch(const BasisSet& basis,
                                                   const std::vector<ComptonPoint>& points,
                                                   Exec exec) {
  std::vector<ScatteringOperator> ops(points.size());
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (std::size_t k = 0; k < points.size(); ++k) ops[k] = dcp_operator(basis, points[k]);
  return ops;
}

// ---------------------------------------------------------------------------
// Operator cache.
// ---------------------------------------------------------------------------

namespace {

constexpr char kCacheMagic[8] = {'R', 'D', 'M', 'O', 'P', 'C', '0', '1'};

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& buf, std::size_t& off, const std::string& path) {
  if (off + sizeof(T) > buf.size()) throw Error("operator cache truncated: " + path);
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_operators(const std::string& path, const std::string& basis_hash,
                    const std::vector<ScatteringOperator>& ops) {
  if (basis_hash.size() != 16) throw Error("operator cache: basis hash must be 16 hex chars");
  std::string buf;
  buf.append(kCacheMagic, sizeof(kCacheMagic));
  buf.append(basis_hash);
  const std::uint32_t count = static_cast<std::uint32_t>(ops.size());
  const std::uint32_t m = ops.empty() ? 0 : static_cast<std::uint32_t>(ops[0].matrix.rows());
  put(buf, count);
  put(buf, m);
  for (const auto& op : ops) {
    if (op.matrix.rows() != m || op.matrix.cols() != m)
      throw Error("operator cache: inconsistent matrix sizes in batch");
    put(buf, static_cast<std::uint8_t>(op.kind == OperatorKind::StructureFactor ? 0 : 1));
    put(buf, static_cast<std::uint8_t>(op.thermal ? 1 : 0));
    if (op.kind == OperatorKind::StructureFactor) {
      put(buf, static_cast<std::uint8_t>(op.sf_meta.hkl.has_value() ? 1 : 0));
      Eigen::Vector3i hkl = op.sf_meta.hkl.value_or(Eigen::Vector3i::Zero());
      for (int d = 0; d < 3; ++d) put(buf, static_cast<std::int32_t>(hkl[d]));
      for (int d = 0; d < 3; ++d) put(buf, op.sf_meta.q[d]);
      put(buf, op.sf_meta.stol);
      for (std::uint32_t r = 0; r < m; ++r)
        for (std::uint32_t c = 0; c < m; ++c) {
          put(buf, op.matrix(r, c).real());
          put(buf, op.matrix(r, c).imag());
        }
    } else {
      for (int d = 0; d < 3; ++d) put(buf, op.dcp_meta.u[d]);
      put(buf, op.dcp_meta.q);
      for (std::uint32_t r = 0; r < m; ++r)
        for (std::uint32_t c = 0; c < m; ++c) put(buf, op.matrix(r, c).real());
    }
  }
  // trailing digest of everything before it
  buf += sha256_hex(buf);
  write_binary_file(path, buf.data(), buf.size());
}

std::vector<ScatteringOperator> load_operators(const std::string& path,
                                               const std::string& basis_hash) {
  auto buf = read_binary_file(path);
  if (buf.size() < sizeof(kCacheMagic) + 16 + 64)
    throw Error("operator cache truncated: " + path);
  if (std::memcmp(buf.data(), kCacheMagic, sizeof(kCacheMagic)) != 0)
    throw Error("operator cache: bad magic in " + path);
  std::string body(reinterpret_cast<const char*>(buf.data()), buf.size() - 64);
  std::string stored(reinterpret_cast<const char*>(buf.data() + buf.size() - 64), 64);
  if (sha256_hex(body) != stored)
    throw Error("operator cache: checksum mismatch in " + path + " (file corrupted)");
  std::size_t off = sizeof(kCacheMagic);
  std::string file_hash(reinterpret_cast<const char*>(buf.data() + off), 16);
  off += 16;
  if (file_hash != basis_hash)
    throw Error("operator cache: basis digest mismatch (cache " + file_hash + ", basis " +
                basis_hash + ")");
  const auto count = take<std::uint32_t>(buf, off, path);
  const auto m = take<std::uint32_t>(buf, off, path);
  std::vector<ScatteringOperator> ops;
  ops.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    ScatteringOperator op;
    const auto kind = take<std::uint8_t>(buf, off, path);
    op.kind = kind == 0 ? OperatorKind::StructureFactor : OperatorKind::ComptonProfile;
    op.thermal = take<std::uint8_t>(buf, off, path) != 0;
    op.matrix.resize(m, m);
    if (op.kind == OperatorKind::StructureFactor) {
      const bool has_hkl = take<std::uint8_t>(buf, off, path) != 0;
      Eigen::Vector3i hkl;
      for (int d = 0; d < 3; ++d) hkl[d] = take<std::int32_t>(buf, off, path);
      if (has_hkl) op.sf_meta.hkl = hkl;
      for (int d = 0; d < 3; ++d) op.sf_meta.q[d] = take<double>(buf, off, path);
      op.sf_meta.stol = take<double>(buf, off, path);
      for (std::uint32_t r = 0; r < m; ++r)
        for (std::uint32_t c = 0; c < m; ++c) {
          double re = take<double>(buf, off, path);
          double im = take<double>(buf, off, path);
          op.matrix(r, c) = cdouble(re, im);
        }
    } else {
      for (int d = 0; d < 3; ++d) op.dcp_meta.u[d] = take<double>(buf, off, path);
      op.dcp_meta.q = take<double>(buf, off, path);
      for (std::uint32_t r = 0; r < m; ++r)
        for (std::uint32_t c = 0; c < m; ++c)
          op.matrix(r, c) = cdouble(take<double>(buf, off, path), 0.0);
    }
    ops.push_back(std::move(op));
  }
  return ops;
}

// ---------------------------------------------------------------------------
// JSON side files.
// ---------------------------------------------------------------------------

namespace {

Mat3 mat3_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw Error(what + ": expected a 3x3 matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) throw Error(what + ": expected a 3x3 matrix");
    for (int c = 0; c < 3; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Vec3 vec3_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw Error(what + ": expected a 3-vector");
  Vec3 v;
  for (int d = 0; d < 3; ++d) v[d] = j[d].get<double>();
  return v;
}

}  // namespace

CellImages load_cell_images(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  if (!j.contains("images") || !j.at("images").is_array())
    throw Error(path + ": expected an 'images' list");
  CellImages out;
  for (const auto& ji : j.at("images")) {
    out.rotations.push_back(mat3_from_json(ji.at("R"), path + ": image R"));
    out.translations.push_back(vec3_from_json(ji.at("t"), path + ": image t"));
  }
  out.validate();
  return out;
}

ThermalModel load_thermal_model(const std::string& path, int natoms) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  if (!j.contains("displacement") || !j.at("displacement").is_array())
    throw Error(path + ": expected a 'displacement' list of 3x3 tensors");
  ThermalModel model;
  model.enabled = true;
  for (const auto& jt : j.at("displacement"))
    model.displacement.push_back(mat3_from_json(jt, path + ": displacement"));
  model.validate(natoms);
  return model;
}

void save_thermal_model(const std::string& path, const ThermalModel& model) {
  nlohmann::json j;
  j["displacement"] = nlohmann::json::array();
  for (const auto& b : model.displacement) {
    nlohmann::json jt = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < 3; ++c) row.push_back(b(r, c));
      jt.push_back(row);
    }
    j["displacement"].push_back(jt);
  }
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace rdmrecon
