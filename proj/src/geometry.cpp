#include "pq/geometry.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace pq {

using json = nlohmann::json;

Chart Chart::standard(int m) {
  if (m < 2) throw Error("chart dimension 4m must be at least 8");
  Chart c;
  c.m = m;
  c.coords.reserve(4 * m);
  for (int i = 1; i <= 2 * m; ++i) c.coords.push_back("x" + std::to_string(i));
  for (int i = 1; i <= 2 * m; ++i) c.coords.push_back("y" + std::to_string(i));
  return c;
}

Point Chart::point(std::vector<double> v) const {
  if (static_cast<int>(v.size()) != dim())
    throw Error("point dimension does not match chart");
  return Point(name(), std::move(v));
}

Eigen::VectorXd VectorField::eval(const Point& p) const {
  EvalCache cache(p);
  return eval(cache);
}

Eigen::VectorXd VectorField::eval(EvalCache& cache) const {
  Eigen::VectorXd out(comp.size());
  for (std::size_t i = 0; i < comp.size(); ++i) out[i] = cache(comp[i]);
  return out;
}

VectorField VectorField::zero(const Chart& c) {
  return {c, std::vector<ScalarExpr>(c.dim(), ScalarExpr::constant(0.0))};
}

VectorField VectorField::coordinate(const Chart& c, int k) {
  VectorField X = zero(c);
  X.comp[k] = ScalarExpr::constant(1.0);
  return X;
}

VectorField VectorField::constant(const Chart& c, const Eigen::VectorXd& v) {
  VectorField X = zero(c);
  for (int i = 0; i < c.dim(); ++i) X.comp[i] = ScalarExpr::constant(v[i]);
  return X;
}

Eigen::VectorXd OneForm::eval(const Point& p) const {
  EvalCache cache(p);
  Eigen::VectorXd out(comp.size());
  for (std::size_t i = 0; i < comp.size(); ++i) out[i] = cache(comp[i]);
  return out;
}

OneForm OneForm::zero(const Chart& c) {
  return {c, std::vector<ScalarExpr>(c.dim(), ScalarExpr::constant(0.0))};
}

OneForm OneForm::constant(const Chart& c, const Eigen::VectorXd& v) {
  OneForm a = zero(c);
  for (int i = 0; i < c.dim(); ++i) a.comp[i] = ScalarExpr::constant(v[i]);
  return a;
}

Eigen::MatrixXd EndomorphismField::eval(const Point& p) const {
  EvalCache cache(p);
  return eval(cache);
}

Eigen::MatrixXd EndomorphismField::eval(EvalCache& cache) const {
  const int n = chart.dim();
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = cache(at(i, j));
  return M;
}

VectorField EndomorphismField::apply(const VectorField& X) const {
  const int n = chart.dim();
  VectorField out = VectorField::zero(chart);
  for (int i = 0; i < n; ++i) {
    ScalarExpr s = ScalarExpr::constant(0.0);
    for (int j = 0; j < n; ++j) s = s + at(i, j) * X.comp[j];
    out.comp[i] = s;
  }
  return out;
}

EndomorphismField EndomorphismField::zero(const Chart& c) {
  return {c, std::vector<ScalarExpr>(static_cast<std::size_t>(c.dim()) * c.dim(),
                                     ScalarExpr::constant(0.0))};
}

EndomorphismField EndomorphismField::identity(const Chart& c) {
  EndomorphismField I = zero(c);
  for (int i = 0; i < c.dim(); ++i) I.at(i, i) = ScalarExpr::constant(1.0);
  return I;
}

EndomorphismField EndomorphismField::constant(const Chart& c, const Eigen::MatrixXd& M) {
  EndomorphismField A = zero(c);
  for (int i = 0; i < c.dim(); ++i)
    for (int j = 0; j < c.dim(); ++j) A.at(i, j) = ScalarExpr::constant(M(i, j));
  return A;
}

EndomorphismField operator*(const EndomorphismField& A, const EndomorphismField& B) {
  const int n = A.chart.dim();
  EndomorphismField C = EndomorphismField::zero(A.chart);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      ScalarExpr s = ScalarExpr::constant(0.0);
      for (int k = 0; k < n; ++k) s = s + A.at(i, k) * B.at(k, j);
      C.at(i, j) = s;
    }
  return C;
}

EndomorphismField operator+(const EndomorphismField& A, const EndomorphismField& B) {
  EndomorphismField C = A;
  for (std::size_t i = 0; i < C.e.size(); ++i) C.e[i] = C.e[i] + B.e[i];
  return C;
}

EndomorphismField operator-(const EndomorphismField& A, const EndomorphismField& B) {
  EndomorphismField C = A;
  for (std::size_t i = 0; i < C.e.size(); ++i) C.e[i] = C.e[i] - B.e[i];
  return C;
}

EndomorphismField operator*(const ScalarExpr& s, const EndomorphismField& A) {
  EndomorphismField C = A;
  for (auto& entry : C.e) entry = s * entry;
  return C;
}

namespace {

// det of the submatrix of the first popcount(mask) rows of `rows` and the
// columns in `mask`, built bottom-up so the DAG is shared across minors.
std::vector<ScalarExpr> subset_determinants(const EndomorphismField& G,
                                            const std::vector<int>& rows) {
  const int n = G.chart.dim();
  const int nrows = static_cast<int>(rows.size());
  std::vector<ScalarExpr> D(std::size_t(1) << n, ScalarExpr::constant(0.0));
  D[0] = ScalarExpr::constant(1.0);
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    int p = std::popcount(mask);
    if (p > nrows) continue;
    ScalarExpr acc = ScalarExpr::constant(0.0);
    int pos = 0;
    for (int j = 0; j < n; ++j) {
      if (!(mask & (1u << j))) continue;
      ScalarExpr term = G.at(rows[p - 1], j) * D[mask & ~(1u << j)];
      acc = ((p - 1 + pos) % 2 == 0) ? acc + term : acc - term;
      ++pos;
    }
    D[mask] = acc;
  }
  return D;
}

}  // namespace

ScalarExpr symbolic_determinant(const EndomorphismField& G) {
  const int n = G.chart.dim();
  if (n > 12) throw Error("symbolic determinant not supported beyond n = 12");
  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = i;
  return subset_determinants(G, rows)[(std::size_t(1) << n) - 1];
}

EndomorphismField symbolic_inverse(const EndomorphismField& G) {
  const int n = G.chart.dim();
  if (n > 12) throw Error("symbolic inverse not supported beyond n = 12");
  ScalarExpr det = symbolic_determinant(G);
  EndomorphismField inv = EndomorphismField::zero(G.chart);
  const unsigned full = (1u << n) - 1;
  for (int i = 0; i < n; ++i) {
    std::vector<int> rows;
    rows.reserve(n - 1);
    for (int r = 0; r < n; ++r)
      if (r != i) rows.push_back(r);
    std::vector<ScalarExpr> D = subset_determinants(G, rows);
    for (int j = 0; j < n; ++j) {
      ScalarExpr minor = D[full & ~(1u << j)];
      ScalarExpr cof = ((i + j) % 2 == 0) ? minor : -minor;
      inv.at(j, i) = cof / det;  // adjugate transposes the cofactor matrix
    }
  }
  return inv;
}

StructureElement StructureElement::constant(double a1, double a2, double a3) {
  return {{ScalarExpr::constant(a1), ScalarExpr::constant(a2), ScalarExpr::constant(a3)}};
}

Eigen::Vector3d StructureElement::eval(const Point& p) const {
  EvalCache cache(p);
  return Eigen::Vector3d(cache(a[0]), cache(a[1]), cache(a[2]));
}

double structure_metric(const StructureElement& u, const StructureElement& v,
                        const Point& p) {
  return lorentz_dot(u.eval(p), v.eval(p));
}

double lorentz_dot(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return -a(0) * b(0) + a(1) * b(1) + a(2) * b(2);
}

Eigen::Vector3d lorentz_cross(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return {-(a(1) * b(2) - a(2) * b(1)), a(2) * b(0) - a(0) * b(2),
          a(0) * b(1) - a(1) * b(0)};
}

EndomorphismField element_field(const PqStructure& H, const StructureElement& u) {
  return u.a[0] * H.J1() + (u.a[1] * H.J2() + u.a[2] * H.J3());
}

BasisCheck admissible_basis_check(const PqStructure& H, const std::vector<Point>& samples,
                                  double tol) {
  if (samples.empty()) throw Error("admissible_basis_check needs at least one sample");
  const int n = H.chart.dim();
  const Eigen::MatrixXd Id = Eigen::MatrixXd::Identity(n, n);
  BasisCheck out;
  out.tol = tol;
  const char* names[] = {"J1^2 + Id",    "J2^2 - Id",    "J3^2 - Id",
                         "J1J2 + J2J1",  "J1J3 + J3J1",  "J2J3 + J3J2",
                         "J3 - J1*J2",   "trace J2",     "trace J3"};
  for (const char* name : names) out.items.push_back({name, 0.0, 0});
  for (std::size_t s = 0; s < samples.size(); ++s) {
    EvalCache cache(samples[s]);
    Eigen::MatrixXd J1 = H.J1().eval(cache);
    Eigen::MatrixXd J2 = H.J2().eval(cache);
    Eigen::MatrixXd J3 = H.J3().eval(cache);
    double r[9] = {(J1 * J1 + Id).cwiseAbs().maxCoeff(),
                   (J2 * J2 - Id).cwiseAbs().maxCoeff(),
                   (J3 * J3 - Id).cwiseAbs().maxCoeff(),
                   (J1 * J2 + J2 * J1).cwiseAbs().maxCoeff(),
                   (J1 * J3 + J3 * J1).cwiseAbs().maxCoeff(),
                   (J2 * J3 + J3 * J2).cwiseAbs().maxCoeff(),
                   (J3 - J1 * J2).cwiseAbs().maxCoeff(),
                   std::abs(J2.trace()),
                   std::abs(J3.trace())};
    for (int i = 0; i < 9; ++i) {
      if (r[i] > out.items[i].residual) {
        out.items[i].residual = r[i];
        out.items[i].sample = static_cast<int>(s);
      }
      out.max_violation = std::max(out.max_violation, r[i]);
    }
  }
  return out;
}

PqStructure flat_model(int m) {
  Chart c = Chart::standard(m);
  const int n2 = 2 * m;
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n2, n2);
  for (int b = 0; b < m; ++b) {
    R(2 * b, 2 * b + 1) = -1.0;
    R(2 * b + 1, 2 * b) = 1.0;
  }
  Eigen::MatrixXd J1 = Eigen::MatrixXd::Zero(4 * m, 4 * m);
  Eigen::MatrixXd J2 = Eigen::MatrixXd::Zero(4 * m, 4 * m);
  Eigen::MatrixXd J3 = Eigen::MatrixXd::Zero(4 * m, 4 * m);
  J1.topLeftCorner(n2, n2) = R;
  J1.bottomRightCorner(n2, n2) = -R;
  J2.topRightCorner(n2, n2) = Eigen::MatrixXd::Identity(n2, n2);
  J2.bottomLeftCorner(n2, n2) = Eigen::MatrixXd::Identity(n2, n2);
  J3.topRightCorner(n2, n2) = R;
  J3.bottomLeftCorner(n2, n2) = -R;
  return {c,
          {EndomorphismField::constant(c, J1), EndomorphismField::constant(c, J2),
           EndomorphismField::constant(c, J3)}};
}

PqStructure conjugate_structure(const PqStructure& H, const EndomorphismField& G) {
  return conjugate_structure(H, G, symbolic_inverse(G));
}

PqStructure conjugate_structure(const PqStructure& H, const EndomorphismField& G,
                                const EndomorphismField& Ginv) {
  return {H.chart, {G * H.J1() * Ginv, G * H.J2() * Ginv, G * H.J3() * Ginv}};
}

std::vector<ScalarExpr> propo_f(int m, const std::string& h) {
  if (!function_registered(h)) throw Error("unregistered function: " + h);
  Chart c = Chart::standard(m);
  ScalarExpr Sx = ScalarExpr::constant(0.0), Sy = ScalarExpr::constant(0.0);
  for (int j = 2; j <= 2 * m; ++j) {
    Sx = Sx + c.var(c.x_index(j)).pow(2);
    Sy = Sy + c.var(c.y_index(j)).pow(2);
  }
  std::vector<ScalarExpr> f;
  f.push_back(apply_function(h, Sx / Sy));
  for (int i = 2; i <= 2 * m; ++i)
    f.push_back(c.var(c.x_index(i)) * Sy / (c.var(c.y_index(i)) * Sx));
  return f;
}

PqStructure propo_structure(int m, const std::string& h) {
  Chart c = Chart::standard(m);
  std::vector<ScalarExpr> f = propo_f(m, h);
  EndomorphismField J1 = EndomorphismField::zero(c);
  EndomorphismField J2 = EndomorphismField::zero(c);
  EndomorphismField J3 = EndomorphismField::zero(c);
  const ScalarExpr one = ScalarExpr::constant(1.0);
  for (int i = 1; i <= 2 * m; ++i) {
    const int xi = c.x_index(i), yi = c.y_index(i);
    J1.at(yi, xi) = f[i - 1];
    J1.at(xi, yi) = -(one / f[i - 1]);
    J2.at(xi, xi) = one;
    J2.at(yi, yi) = -one;
    J3.at(yi, xi) = f[i - 1];
    J3.at(xi, yi) = one / f[i - 1];
  }
  return {c, {J1, J2, J3}};
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Low-degree polynomial with small coefficients in the chart coordinates.
ScalarExpr small_poly(const Chart& c, std::mt19937_64& rng, double scale) {
  std::uniform_int_distribution<int> pick(0, c.dim() - 1);
  ScalarExpr p = ScalarExpr::constant(uniform(rng, -scale, scale));
  p = p + ScalarExpr::constant(uniform(rng, -scale, scale)) * c.var(pick(rng));
  if (rng() % 2 == 0)
    p = p + ScalarExpr::constant(uniform(rng, -scale, scale)) * c.var(pick(rng)) *
                c.var(pick(rng));
  return p;
}

}  // namespace

EndomorphismField random_unit_triangular(const Chart& c, std::uint64_t seed, int terms) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, c.dim() - 1);
  EndomorphismField G = EndomorphismField::identity(c);
  for (int t = 0; t < terms; ++t) {
    int i = pick(rng), j = pick(rng);
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    G.at(i, j) = G.at(i, j) + small_poly(c, rng, 0.3);
  }
  return G;
}

PqStructure conjugated_flat_structure(int m, std::uint64_t seed, CommuteWith commute) {
  PqStructure flat = flat_model(m);
  const Chart& c = flat.chart;
  const int n2 = 2 * m;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  switch (commute) {
    case CommuteWith::None:
      return conjugate_structure(flat, random_unit_triangular(c, seed, 6));
    case CommuteWith::J1: {
      // G = Id + f K with K = [[0,B],[0,0]] and B anti-commuting with the
      // rotation block, so G commutes with J1; K^2 = 0 gives the exact inverse.
      std::uniform_int_distribution<int> pickx(0, n2 - 1);
      ScalarExpr f = ScalarExpr::constant(uniform(rng, -0.3, 0.3)) * c.var(pickx(rng)) +
                     ScalarExpr::constant(uniform(rng, -0.3, 0.3)) * c.var(pickx(rng));
      EndomorphismField K = EndomorphismField::zero(c);
      for (int b = 0; b < m; ++b) {
        double s3 = uniform(rng, -0.6, 0.6), s1 = uniform(rng, -0.6, 0.6);
        // 2x2 block s3*diag(1,-1) + s1*offdiag(1,1) anti-commutes with r.
        K.at(2 * b, n2 + 2 * b) = ScalarExpr::constant(s3);
        K.at(2 * b + 1, n2 + 2 * b + 1) = ScalarExpr::constant(-s3);
        K.at(2 * b, n2 + 2 * b + 1) = ScalarExpr::constant(s1);
        K.at(2 * b + 1, n2 + 2 * b) = ScalarExpr::constant(s1);
      }
      EndomorphismField G = EndomorphismField::identity(c) + f * K;
      EndomorphismField Ginv = EndomorphismField::identity(c) - f * K;
      PqStructure out = conjugate_structure(flat, G, Ginv);
      out.J[0] = flat.J1();  // G commutes with J1, keep it exactly constant
      return out;
    }
    case CommuteWith::J2: {
      // G = blockdiag(I + C, I + C) with C strictly upper commutes with the
      // x/y swap J2.
      std::uniform_int_distribution<int> pick(0, n2 - 1);
      EndomorphismField G = EndomorphismField::identity(c);
      for (int t = 0; t < 4; ++t) {
        int i = pick(rng), j = pick(rng);
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        ScalarExpr p = small_poly(c, rng, 0.3);
        G.at(i, j) = G.at(i, j) + p;
        G.at(n2 + i, n2 + j) = G.at(n2 + i, n2 + j) + p;
      }
      PqStructure out = conjugate_structure(flat, G);
      out.J[1] = flat.J2();  // G commutes with J2
      return out;
    }
  }
  throw Error("unreachable");
}

PqStructure pullback_flat_structure(int m, std::uint64_t seed) {
  PqStructure flat = flat_model(m);
  const Chart& c = flat.chart;
  const int n = c.dim();
  std::mt19937_64 rng(seed ^ 0xbf58476d1ce4e5b9ull);
  // phi_i = z_i + poly(z_{>i}), so the Jacobian is unit upper triangular.
  std::vector<ScalarExpr> phi(n);
  for (int i = 0; i < n; ++i) phi[i] = c.var(i);
  for (int t = 0; t < 4; ++t) {
    int i = std::uniform_int_distribution<int>(0, n - 2)(rng);
    int a = std::uniform_int_distribution<int>(i + 1, n - 1)(rng);
    int b = std::uniform_int_distribution<int>(i + 1, n - 1)(rng);
    phi[i] = phi[i] + ScalarExpr::constant(uniform(rng, -0.25, 0.25)) * c.var(a) * c.var(b);
  }
  EndomorphismField Dphi = EndomorphismField::zero(c);
  for (int k = 0; k < n; ++k) {
    DiffCache dk(c.coords[k]);
    for (int i = 0; i < n; ++i) Dphi.at(i, k) = dk(phi[i]);
  }
  // Pullback of a constant tensor: J'(z) = Dphi(z)^{-1} J Dphi(z).
  return conjugate_structure(flat, symbolic_inverse(Dphi), Dphi);
}

namespace {

using ExprMat3 = std::array<std::array<ScalarExpr, 3>, 3>;

ExprMat3 mat3_mul(const ExprMat3& A, const ExprMat3& B) {
  ExprMat3 C;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      ScalarExpr s = ScalarExpr::constant(0.0);
      for (int k = 0; k < 3; ++k) s = s + A[i][k] * B[k][j];
      C[i][j] = s;
    }
  return C;
}

ExprMat3 mat3_identity() {
  ExprMat3 I;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) I[i][j] = ScalarExpr::constant(i == j ? 1.0 : 0.0);
  return I;
}

}  // namespace

PqStructure rotated_admissible_basis(const PqStructure& H, std::uint64_t seed) {
  const Chart& c = H.chart;
  std::mt19937_64 rng(seed ^ 0x94d049bb133111ebull);
  std::uniform_int_distribution<int> pick(0, c.dim() - 1);
  auto small_t = [&]() {
    return ScalarExpr::constant(uniform(rng, -0.12, 0.12)) +
           ScalarExpr::constant(uniform(rng, -0.12, 0.12)) * c.var(pick(rng));
  };
  const ScalarExpr one = ScalarExpr::constant(1.0);
  const ScalarExpr two = ScalarExpr::constant(2.0);

  // Rational rotation in the (J2, J3) plane.
  ScalarExpr t = small_t();
  ScalarExpr den = one + t.pow(2);
  ScalarExpr cth = (one - t.pow(2)) / den, sth = two * t / den;
  ExprMat3 rot = mat3_identity();
  rot[1][1] = cth;
  rot[2][1] = sth;
  rot[1][2] = -sth;
  rot[2][2] = cth;

  // Rational boost in the (J1, J2) plane.
  t = small_t();
  den = one - t.pow(2);
  ScalarExpr ch = (one + t.pow(2)) / den, sh = two * t / den;
  ExprMat3 b12 = mat3_identity();
  b12[0][0] = ch;
  b12[1][0] = sh;
  b12[0][1] = sh;
  b12[1][1] = ch;

  // Rational boost in the (J1, J3) plane.
  t = small_t();
  den = one - t.pow(2);
  ch = (one + t.pow(2)) / den;
  sh = two * t / den;
  ExprMat3 b13 = mat3_identity();
  b13[0][0] = ch;
  b13[2][0] = sh;
  b13[0][2] = sh;
  b13[2][2] = ch;

  ExprMat3 R = mat3_mul(b12, mat3_mul(rot, b13));
  PqStructure out;
  out.chart = c;
  for (int i = 0; i < 3; ++i) {
    EndomorphismField Ji = R[0][i] * H.J[0];
    Ji = Ji + R[1][i] * H.J[1];
    Ji = Ji + R[2][i] * H.J[2];
    out.J[i] = Ji;
  }
  return out;
}

std::string structure_to_json(const PqStructure& H) {
  json j;
  j["dim"] = H.chart.dim();
  j["coords"] = H.chart.coords;
  const char* keys[] = {"J1", "J2", "J3"};
  for (int i = 0; i < 3; ++i) {
    json rows = json::array();
    for (int r = 0; r < H.chart.dim(); ++r) {
      json row = json::array();
      for (int col = 0; col < H.chart.dim(); ++col)
        row.push_back(to_string(H.J[i].at(r, col)));
      rows.push_back(row);
    }
    j[keys[i]] = rows;
  }
  return j.dump(1);
}

static PqStructure structure_from_parsed(const json& j);

PqStructure structure_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("structure json: ") + e.what());
  }
  return structure_from_parsed(j);
}

static PqStructure structure_from_parsed(const json& j) try {
  int dim = j.at("dim").get<int>();
  if (dim % 4 != 0 || dim < 8) throw Error("structure dimension must be 4m >= 8");
  Chart c = Chart::standard(dim / 4);
  if (j.contains("coords")) {
    auto coords = j.at("coords").get<std::vector<std::string>>();
    if (static_cast<int>(coords.size()) != dim)
      throw Error("coords length does not match dim");
    c.coords = coords;
  }
  PqStructure H;
  H.chart = c;
  const char* keys[] = {"J1", "J2", "J3"};
  for (int i = 0; i < 3; ++i) {
    const json& rows = j.at(keys[i]);
    if (static_cast<int>(rows.size()) != dim) throw Error("matrix row count mismatch");
    EndomorphismField F = EndomorphismField::zero(c);
    for (int r = 0; r < dim; ++r) {
      const json& row = rows.at(r);
      if (static_cast<int>(row.size()) != dim) throw Error("matrix column count mismatch");
      for (int col = 0; col < dim; ++col)
        F.at(r, col) = parse_expr(row.at(col).get<std::string>(), c.coords);
    }
    H.J[i] = F;
  }
  return H;
} catch (const json::exception& e) {
  throw Error(std::string("structure json: ") + e.what());
}

void save_structure(const PqStructure& H, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << structure_to_json(H) << "\n";
}

PqStructure load_structure(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return structure_from_json(ss.str());
}

StructureJets::StructureJets(const PqStructure& H) : H_(H) {
  const int n = H.chart.dim();
  for (int i = 0; i < 3; ++i)
    d_[i].resize(static_cast<std::size_t>(n) * n * n, ScalarExpr::constant(0.0));
  for (int k = 0; k < n; ++k) {
    DiffCache dk(H.chart.coords[k]);
    for (int i = 0; i < 3; ++i)
      for (int r = 0; r < n; ++r)
        for (int col = 0; col < n; ++col)
          d_[i][(static_cast<std::size_t>(k) * n + r) * n + col] = dk(H.J[i].at(r, col));
  }
}

StructureJets::Values StructureJets::at(const Point& p) const {
  const int n = H_.chart.dim();
  EvalCache cache(p);
  Values out;
  for (int i = 0; i < 3; ++i) {
    out.J[i] = H_.J[i].eval(cache);
    out.dJ[i].resize(n);
    for (int k = 0; k < n; ++k) {
      Eigen::MatrixXd M(n, n);
      for (int r = 0; r < n; ++r)
        for (int col = 0; col < n; ++col)
          M(r, col) = cache(d_[i][(static_cast<std::size_t>(k) * n + r) * n + col]);
      out.dJ[i][k] = M;
    }
  }
  return out;
}

std::vector<Point> sample_box(const Chart& c, double lo, double hi, int count,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Point> out;
  out.reserve(count);
  for (int s = 0; s < count; ++s) {
    std::vector<double> v(c.dim());
    for (double& x : v) x = dist(rng);
    out.push_back(c.point(std::move(v)));
  }
  return out;
}

std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> tangent_pairs(int n, int count,
                                                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> out;
  out.reserve(count);
  for (int s = 0; s < count; ++s) {
    Eigen::VectorXd X(n), Y(n);
    for (int i = 0; i < n; ++i) X[i] = dist(rng);
    for (int i = 0; i < n; ++i) Y[i] = dist(rng);
    out.emplace_back(std::move(X), std::move(Y));
  }
  return out;
}

}  // namespace pq
