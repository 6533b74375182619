#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "cbdlab/weights.hpp"
#include "helpers.hpp"

using namespace cbdlab;
using Catch::Approx;
using testutil::random_gf;
using testutil::random_positive;

namespace {

Grid line_grid(std::int64_t N = 16) { return Grid(1, {0.0, 0.0}, 1.0, N); }

// ---- oracles, written before the module was exercised -------------------------

// Every cube of the sweep family, as an inclusive cell range per axis.
struct CubeCells {
  std::int64_t x0, x1, y0, y1;  // half-open
};

std::vector<CubeCells> oracle_cubes(const Grid& g, bool all_cubes) {
  std::vector<CubeCells> out;
  for (std::int64_t m = 1; m <= g.N; m *= 2) {
    std::int64_t step = all_cubes ? 1 : m;
    if (g.d == 1) {
      for (std::int64_t ox = 0; ox + m <= g.N; ox += step)
        out.push_back({ox, ox + m, 0, 1});
    } else {
      for (std::int64_t oy = 0; oy + m <= g.N; oy += step)
        for (std::int64_t ox = 0; ox + m <= g.N; ox += step)
          out.push_back({ox, ox + m, oy, oy + m});
    }
  }
  return out;
}

// Scalar A_t characteristic straight from the classical formula
// avg_Q(w) * (avg_Q(w^{-1/(t-1)}))^{t-1}, maximized over the cube family.
double oracle_scalar_at(const Grid& g, const std::vector<double>& w, double t,
                        bool all_cubes = false) {
  double best = 0.0;
  for (const CubeCells& q : oracle_cubes(g, all_cubes)) {
    double sum = 0.0, dual = 0.0;
    std::int64_t cnt = 0;
    for (std::int64_t iy = q.y0; iy < q.y1; ++iy)
      for (std::int64_t ix = q.x0; ix < q.x1; ++ix) {
        double v = w[std::size_t(g.cell_id(ix, iy))];
        sum += v;
        dual += std::pow(v, -1.0 / (t - 1.0));
        ++cnt;
      }
    best = std::max(best, sum / double(cnt) * std::pow(dual / double(cnt), t - 1.0));
  }
  return best;
}

// Diagonal-weight characteristic with a free inner exponent e, evaluated
// directly: the operator norm of a product of diagonal matrices is the
// largest |w_j(x)/w_j(y)|^{1/t} over the diagonal.
double oracle_diag_at(const Grid& g, const std::vector<std::vector<double>>& comp, double t,
                      double e) {
  double best = 0.0;
  for (const CubeCells& q : oracle_cubes(g, false)) {
    std::vector<std::int64_t> ids;
    for (std::int64_t iy = q.y0; iy < q.y1; ++iy)
      for (std::int64_t ix = q.x0; ix < q.x1; ++ix) ids.push_back(g.cell_id(ix, iy));
    double outer = 0.0;
    for (std::int64_t x : ids) {
      double inner = 0.0;
      for (std::int64_t y : ids) {
        double nrm = 0.0;
        for (const auto& w : comp)
          nrm = std::max(nrm, std::pow(w[std::size_t(x)] / w[std::size_t(y)], 1.0 / t));
        inner += std::pow(nrm, e);
      }
      outer += std::pow(inner / double(ids.size()), t / e);
    }
    best = std::max(best, outer / double(ids.size()));
  }
  return best;
}

// Weighted norm of f against a diagonal weight, built from per-component
// scalar arithmetic only.
double oracle_diag_norm(const GridFunction& f, const std::vector<std::vector<double>>& comp,
                        double t) {
  double acc = 0.0;
  for (std::int64_t id = 0; id < f.grid.cell_count(); ++id) {
    double s2 = 0.0;
    for (int j = 0; j < f.n; ++j) {
      double scaled = std::pow(comp[std::size_t(j)][std::size_t(id)], 1.0 / t) *
                      std::abs(f.at(id, j));
      s2 += scaled * scaled;
    }
    acc += std::pow(std::sqrt(s2), t);
  }
  return std::pow(acc * f.grid.cell_volume(), 1.0 / t);
}

// ---- generators ----------------------------------------------------------------

ScalarWeightProfile profile_from(const Grid& g, const std::vector<double>& vals) {
  GridFunction w(g, 1);
  for (std::int64_t id = 0; id < g.cell_count(); ++id)
    w.at(id, 0) = cplx(vals[std::size_t(id)], 0.0);
  return ScalarWeightProfile(w);
}

MatrixWeight random_pd_weight(const Grid& g, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Mat> cells;
  for (std::int64_t id = 0; id < g.cell_count(); ++id) {
    Mat a(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) a(r, c) = rng.next_cgaussian();
    cells.push_back(Mat(a * a.adjoint() + 0.1 * Mat::Identity(n, n)));
  }
  return MatrixWeight(g, cells);
}

std::vector<std::vector<double>> random_diag(const Grid& g, int n, std::uint64_t seed) {
  Rng rng(seed);
  auto comp = std::vector<std::vector<double>>(std::size_t(n));
  for (auto& w : comp) {
    w.resize(std::size_t(g.cell_count()));
    for (auto& v : w) v = std::exp(rng.uniform(-1.5, 1.5));
  }
  return comp;
}

MatrixWeight diag_weight(const Grid& g, const std::vector<std::vector<double>>& comp) {
  int n = int(comp.size());
  std::vector<Mat> cells;
  for (std::int64_t id = 0; id < g.cell_count(); ++id) {
    Mat m = Mat::Zero(n, n);
    for (int j = 0; j < n; ++j) m(j, j) = cplx(comp[std::size_t(j)][std::size_t(id)], 0.0);
    cells.push_back(m);
  }
  return MatrixWeight(g, cells);
}

}  // namespace

TEST_CASE("constant weights have unit characteristic") {
  Mat c(2, 2);
  c << cplx(2.0, 0.0), cplx(0.0, 1.0), cplx(0.0, -1.0), cplx(3.0, 0.0);
  Grid g = line_grid(16);
  MatrixWeight W(g, std::vector<Mat>(std::size_t(g.cell_count()), c));
  CHECK(matrix_at_constant(W, 2.0) == Approx(1.0).margin(1e-12));
  CHECK(matrix_at_constant(W, 5.0, AtMode::kMixed, 10.0 / 3.0) == Approx(1.0).margin(1e-12));
  CHECK(matrix_at_constant(W, 2.0, AtMode::kClassical, 0.0, true) == Approx(1.0).margin(1e-12));

  Grid g2(2, {0.0, 0.0}, 1.0, 8);
  MatrixWeight W2 = identity_weight(g2, 1);
  CHECK(matrix_at_constant(W2, 3.0) == Approx(1.0).margin(1e-12));

  CHECK_THROWS_WITH(matrix_at_constant(W, 1.0), "integrability exponent must be > 1");
  CHECK_THROWS_WITH(matrix_at_constant(W, 2.0, AtMode::kMixed, 0.0),
                    "mixed inner exponent must be positive");
}

TEST_CASE("scalar weights reduce to the classical formula") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Grid g = line_grid(32);
    Rng rng(900 + seed);
    std::vector<double> w(std::size_t(g.cell_count()));
    for (auto& v : w) v = std::exp(rng.uniform(-2.0, 2.0));
    MatrixWeight W = scalar_weight(profile_from(g, w));
    for (double t : {2.0, 2.5, 5.0}) {
      double got = matrix_at_constant(W, t);
      double want = oracle_scalar_at(g, w, t);
      CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, want));
    }
    double gota = matrix_at_constant(W, 2.0, AtMode::kClassical, 0.0, true);
    double wanta = oracle_scalar_at(g, w, 2.0, true);
    CHECK(std::abs(gota - wanta) <= 1e-10 * std::max(1.0, wanta));
    CHECK(gota >= matrix_at_constant(W, 2.0) - 1e-12);  // larger cube family
  }
  Grid g2(2, {-1.0, -1.0}, 2.0, 8);
  Rng rng(77);
  std::vector<double> w(std::size_t(g2.cell_count()));
  for (auto& v : w) v = std::exp(rng.uniform(-1.0, 1.0));
  MatrixWeight W = scalar_weight(profile_from(g2, w));
  double got = matrix_at_constant(W, 2.0);
  double want = oracle_scalar_at(g2, w, 2.0);
  CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, want));
}

TEST_CASE("mixed constants sit below the classical comparison point") {
  // q = 2, t = 5: inner exponent a = t q'/(t - q') = 10/3, comparison
  // characteristic taken at t/q' = 2.5. Both sides are also pinned against
  // the direct diagonal computation, so the ordering is not self-referential.
  Grid g = line_grid(16);
  const double t = 5.0, a = 10.0 / 3.0, tq = 2.5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto comp = random_diag(g, 2, 3000 + seed);
    MatrixWeight W = diag_weight(g, comp);
    double mixed = matrix_at_constant(W, t, AtMode::kMixed, a);
    double classical = matrix_at_constant(W, tq);
    double mixed_want = oracle_diag_at(g, comp, t, a);
    double classical_want = oracle_diag_at(g, comp, tq, tq / (tq - 1.0));
    CHECK(std::abs(mixed - mixed_want) <= 1e-10 * std::max(1.0, mixed_want));
    CHECK(std::abs(classical - classical_want) <= 1e-10 * std::max(1.0, classical_want));
    CHECK(mixed <= classical * (1.0 + 1e-12) + 1e-12);
  }
}

TEST_CASE("characteristic is unitarily invariant and never below one") {
  Grid g = line_grid(16);
  Mat u(2, 2);
  double th = 0.7;
  u << cplx(std::cos(th), 0.0), cplx(0.0, std::sin(th)), cplx(0.0, std::sin(th)),
      cplx(std::cos(th), 0.0);
  REQUIRE((u * u.adjoint() - Mat::Identity(2, 2)).norm() < 1e-14);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    MatrixWeight W = random_pd_weight(g, 2, 500 + seed);
    std::vector<Mat> conj;
    for (std::int64_t id = 0; id < g.cell_count(); ++id)
      conj.push_back(Mat(u.adjoint() * W.cell(id) * u));
    MatrixWeight Wc(g, conj);
    for (double t : {2.0, 3.0}) {
      double lhs = matrix_at_constant(W, t);
      double rhs = matrix_at_constant(Wc, t);
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, lhs));
      CHECK(lhs >= 1.0 - 1e-12);
    }
    double ml = matrix_at_constant(W, 5.0, AtMode::kMixed, 10.0 / 3.0);
    double mr = matrix_at_constant(Wc, 5.0, AtMode::kMixed, 10.0 / 3.0);
    CHECK(std::abs(ml - mr) <= 1e-10 * std::max(1.0, ml));
    CHECK(ml >= 1.0 - 1e-12);
  }
}

TEST_CASE("weighted norms match their scalar reductions") {
  Grid g = line_grid(32);
  GridFunction f = random_gf(g, 2, 42);

  SECTION("identity weight gives the plain norm") {
    MatrixWeight I = identity_weight(g, 2);
    double plain = 0.0;
    for (std::int64_t id = 0; id < g.cell_count(); ++id) {
      double s2 = std::norm(f.at(id, 0)) + std::norm(f.at(id, 1));
      plain += std::pow(s2, 1.5);  // t = 3: |f|^3 = (|f|^2)^{3/2}
    }
    plain = std::pow(plain * g.cell_volume(), 1.0 / 3.0);
    CHECK(weighted_norm(f, I, 3.0) == Approx(plain).epsilon(1e-12));
  }

  SECTION("scaling the weight scales the norm by c^{1/t}") {
    MatrixWeight W = random_pd_weight(g, 2, 9);
    std::vector<Mat> scaled;
    for (std::int64_t id = 0; id < g.cell_count(); ++id)
      scaled.push_back(Mat(3.7 * W.cell(id)));
    MatrixWeight Wc(g, scaled);
    double t = 2.5;
    CHECK(weighted_norm(f, Wc, t) ==
          Approx(std::pow(3.7, 1.0 / t) * weighted_norm(f, W, t)).epsilon(1e-10));
  }

  SECTION("diagonal weights against the per-component oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto comp = random_diag(g, 2, 100 + seed);
      MatrixWeight W = diag_weight(g, comp);
      GridFunction h = random_gf(g, 2, 200 + seed);
      for (double t : {1.0, 2.0, 4.0})
        CHECK(weighted_norm(h, W, t) == Approx(oracle_diag_norm(h, comp, t)).epsilon(1e-12));
    }
  }

  SECTION("t-th power is additive over disjoint supports") {
    MatrixWeight W = random_pd_weight(g, 2, 11);
    GridFunction left(g, 2), right(g, 2);
    for (std::int64_t id = 0; id < g.cell_count(); ++id)
      for (int j = 0; j < 2; ++j)
        (id < g.N / 2 ? left : right).at(id, j) = f.at(id, j);
    double t = 3.0;
    double whole = std::pow(weighted_norm(f, W, t), t);
    double parts = std::pow(weighted_norm(left, W, t), t) +
                   std::pow(weighted_norm(right, W, t), t);
    CHECK(whole == Approx(parts).epsilon(1e-12));
  }

  SECTION("shape and exponent errors") {
    MatrixWeight W = identity_weight(g, 2);
    CHECK_THROWS_WITH(weighted_norm(random_gf(g, 1, 1), W, 2.0), "shape mismatch");
    CHECK_THROWS_WITH(weighted_norm(f, W, 0.5), "integrability exponent must be >= 1");
    Grid other = line_grid(16);
    CHECK_THROWS_WITH(weighted_norm(random_gf(other, 2, 1), W, 2.0), "shape mismatch");
  }
}

TEST_CASE("audit exponent table") {
  CHECK(audit_exponent(AuditOperator::kTOmega, 2.0, kInf) == Approx(2.5));
  CHECK(audit_exponent(AuditOperator::kTOmega, 3.0, kInf) ==
        Approx(1.0 + 0.5 - 1.0 / 3.0 + 0.5));
  CHECK(audit_exponent(AuditOperator::kCommutator, 2.0, kInf) == Approx(3.5));
  CHECK(audit_exponent(AuditOperator::kBochnerRiesz, 2.0, kInf) == Approx(2.5));
  CHECK(audit_exponent(AuditOperator::kBochnerRiesz, 2.0, 2.0) == Approx(2.5));
  CHECK(audit_exponent(AuditOperator::kTOmega, 5.0, 2.0) == Approx(1.0 + 2.0 / 15.0));
  CHECK(audit_exponent(AuditOperator::kCommutator, 5.0, 2.0) ==
        Approx(1.0 + 2.0 / 15.0 + 1.0));
  CHECK_THROWS_WITH(audit_exponent(AuditOperator::kTOmega, 1.5, 2.0),
                    "audit requires t > q/(q-1)");
  CHECK_THROWS_WITH(audit_exponent(AuditOperator::kTOmega, 1.0, kInf),
                    "integrability exponent must be > 1");
}

TEST_CASE("audit identity member anchors the curve") {
  Grid g = line_grid(32);
  WeightAuditConfig cfg;
  cfg.op = AuditOperator::kTOmega;
  cfg.t = 2.0;
  cfg.family = 4;
  cfg.trials = 2;
  cfg.wiggle = 0.0;  // pure power family; the characteristic grows with alpha
  cfg.seed = 5;
  WeightAuditResult res = weighted_bound_audit(g, 1, cfg);
  REQUIRE(res.points.size() == 4);
  CHECK(res.exponent == Approx(2.5));
  CHECK(res.points[0].weight_constant == Approx(1.0).margin(1e-9));
  CHECK(res.points[0].predicted_bound == Approx(res.fitted_constant));
  CHECK(res.fitted_constant > 0.0);
  CHECK(res.max_ratio >= res.fitted_constant);
  for (std::size_t k = 1; k < res.points.size(); ++k) {
    CHECK(res.points[k].family_param > res.points[k - 1].family_param);
    CHECK(res.points[k].weight_constant >= res.points[k - 1].weight_constant - 1e-9);
  }
  CHECK(res.ok);
}

TEST_CASE("commutator audit with constant symbol is identically zero") {
  Grid g = line_grid(32);
  GridFunction b(g, 1);
  for (std::int64_t id = 0; id < g.cell_count(); ++id) b.at(id, 0) = cplx(2.0, 0.0);
  WeightAuditConfig cfg;
  cfg.op = AuditOperator::kCommutator;
  cfg.family = 3;
  cfg.trials = 2;
  cfg.seed = 8;
  WeightAuditResult res = weighted_bound_audit(g, 1, cfg, &b);
  for (const auto& p : res.points) CHECK(p.observed_ratio == 0.0);
  CHECK(res.max_ratio == 0.0);
  CHECK(res.ok);
}

TEST_CASE("one-sided audits hold across operators") {
  Grid g = line_grid(32);

  SECTION("commutator with a random symbol") {
    WeightAuditConfig cfg;
    cfg.op = AuditOperator::kCommutator;
    cfg.family = 4;
    cfg.trials = 2;
    cfg.seed = 21;
    WeightAuditResult res = weighted_bound_audit(g, 1, cfg);
    CHECK(res.exponent == Approx(3.5));
    CHECK(res.ok);
    CHECK(res.max_ratio > 0.0);
  }

  SECTION("rough-kernel operator at finite q uses the mixed constant") {
    WeightAuditConfig cfg;
    cfg.op = AuditOperator::kTOmega;
    cfg.t = 5.0;
    cfg.q = 2.0;
    cfg.family = 4;
    cfg.trials = 2;
    cfg.seed = 22;
    WeightAuditResult res = weighted_bound_audit(g, 1, cfg);
    CHECK(res.exponent == Approx(1.0 + 2.0 / 15.0));
    CHECK(res.ok);
  }

  SECTION("matrix-valued trial functions") {
    WeightAuditConfig cfg;
    cfg.family = 3;
    cfg.trials = 2;
    cfg.seed = 23;
    WeightAuditResult res = weighted_bound_audit(g, 2, cfg);
    CHECK(res.ok);
  }

  SECTION("frequency multiplier") {
    WeightAuditConfig cfg;
    cfg.op = AuditOperator::kBochnerRiesz;
    cfg.delta = 0.0;
    cfg.cutoff = 6.0;
    cfg.family = 3;
    cfg.trials = 2;
    cfg.seed = 24;
    WeightAuditResult res = weighted_bound_audit(g, 1, cfg);
    CHECK(res.exponent == Approx(2.5));
    CHECK(res.ok);
  }
}

TEST_CASE("audit csv shape") {
  Grid g = line_grid(16);
  WeightAuditConfig cfg;
  cfg.family = 3;
  cfg.trials = 1;
  WeightAuditResult res = weighted_bound_audit(g, 1, cfg);
  std::string csv = audit_csv(res);
  CHECK(csv.rfind("family_param,weight_constant,observed_ratio,predicted_bound\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("reverse Holder constant") {
  Grid g = line_grid(16);
  SECTION("the flat weight scores exactly one at every exponent") {
    ScalarWeightProfile one = profile_from(g, std::vector<double>(std::size_t(g.N), 1.0));
    for (double s : {1.5, 2.0, 4.0})
      CHECK(reverse_holder(one, s) == Approx(1.0).margin(1e-14));
  }
  SECTION("a two-cell computation done by hand") {
    Grid g2 = line_grid(2);
    ScalarWeightProfile w = profile_from(g2, {1.0, 3.0});
    // singleton cubes give 1; the full cube gives sqrt((1+9)/2) / 2
    CHECK(reverse_holder(w, 2.0) == Approx(std::sqrt(5.0) / 2.0));
  }
  SECTION("never below one, exponent validated") {
    ScalarWeightProfile w = profile_from(g, random_positive(g.N, 31));
    CHECK(reverse_holder(w, 3.0) >= 1.0 - 1e-12);
    CHECK_THROWS_WITH(reverse_holder(w, 1.0), "reverse Holder exponent must be > 1");
  }
}

TEST_CASE("scalar weight quantities") {
  Grid g = line_grid(32);
  auto muv = random_positive(g.N, 61, 0.5, 3.0);
  ScalarWeightProfile mu = profile_from(g, muv);
  GridFunction b = random_gf(g, 1, 62);

  SECTION("equal weights and exponents give the flat Bloom weight") {
    ScalarWeightQuantities out = scalar_weight_quantities(mu, mu, 2.0, 2.0, 4.0, b);
    CHECK(out.alpha == 0.0);
    CHECK(out.tau == kInf);
    CHECK_FALSE(out.sharp_branch);
    for (std::int64_t id = 0; id < g.cell_count(); ++id)
      CHECK(std::abs(out.nu.at(id, 0) - cplx(1.0, 0.0)) <= 1e-12);
  }

  SECTION("constant symbols zero out every oscillation quantity") {
    GridFunction c(g, 1);
    for (std::int64_t id = 0; id < g.cell_count(); ++id) c.at(id, 0) = cplx(1.5, 0.5);
    ScalarWeightProfile lam = profile_from(g, random_positive(g.N, 63, 0.5, 3.0));
    ScalarWeightQuantities bmo = scalar_weight_quantities(mu, lam, 2.0, 3.0, 4.0, c);
    CHECK(bmo.bmo_alpha_nu <= 1e-12);
    CHECK(bmo.sharp_max_norm <= 1e-12);
    ScalarWeightQuantities sharp = scalar_weight_quantities(mu, lam, 3.0, 2.0, 4.0, c);
    CHECK(sharp.sharp_branch);
    CHECK(sharp.bmo_alpha_nu <= 1e-12);
    CHECK(sharp.sharp_max_norm <= 1e-12);
  }

  SECTION("nonconstant symbols score strictly positive") {
    ScalarWeightProfile lam = profile_from(g, random_positive(g.N, 64, 0.5, 3.0));
    ScalarWeightQuantities out = scalar_weight_quantities(mu, lam, 3.0, 2.0, 4.0, b);
    CHECK(out.bmo_alpha_nu > 1e-12);
    CHECK(out.sharp_max_norm > 1e-12);
    CHECK(out.tau == Approx(-1.0 / (1.0 / 3.0 - 1.0 / 2.0)));  // 6
    CHECK(out.rh_mu >= 1.0 - 1e-12);
    CHECK(out.rh_lambda >= 1.0 - 1e-12);
  }

  SECTION("branch selection") {
    ScalarWeightProfile lam = profile_from(g, random_positive(g.N, 65, 0.5, 3.0));
    ScalarWeightQuantities low = scalar_weight_quantities(mu, lam, 2.0, 3.0, 4.0, b);
    CHECK_FALSE(low.sharp_branch);
    CHECK(low.tau == kInf);
    CHECK(low.sharp_max_norm == 0.0);
    ScalarWeightQuantities forced =
        scalar_weight_quantities(mu, lam, 3.0, 2.0, 4.0, b, BloomBranch::kBmo);
    CHECK_FALSE(forced.sharp_branch);
    CHECK_THROWS_WITH(
        scalar_weight_quantities(mu, lam, 2.0, 2.0, 4.0, b, BloomBranch::kSharpMaximal),
        "sharp branch undefined at alpha = 0");
    CHECK_THROWS_WITH(
        scalar_weight_quantities(mu, lam, 2.0, 3.0, 4.0, b, BloomBranch::kSharpMaximal),
        "sharp branch requires u >= v");
  }

  SECTION("input validation") {
    ScalarWeightProfile lam = profile_from(g, random_positive(g.N, 66, 0.5, 3.0));
    CHECK_THROWS_WITH(scalar_weight_quantities(mu, lam, 1.0, 2.0, 4.0, b),
                      "exponents must lie strictly between 1 and q");
    CHECK_THROWS_WITH(scalar_weight_quantities(mu, lam, 2.0, 4.0, 4.0, b),
                      "exponents must lie strictly between 1 and q");
    CHECK_THROWS_WITH(scalar_weight_quantities(mu, lam, 2.0, 2.0, 1.0, b),
                      "integrability exponent must be > 1");
    CHECK_THROWS_WITH(scalar_weight_quantities(mu, lam, 2.0, 2.0, 4.0, random_gf(g, 2, 1)),
                      "symbol must be scalar");
    Grid other = line_grid(16);
    ScalarWeightProfile small = profile_from(other, random_positive(other.N, 67, 0.5, 3.0));
    CHECK_THROWS_WITH(scalar_weight_quantities(mu, small, 2.0, 2.0, 4.0, b),
                      "shape mismatch");
  }
}

TEST_CASE("matrix weight construction") {
  Grid g = line_grid(4);
  SECTION("rejects non-Hermitian cells") {
    std::vector<Mat> cells(4, Mat::Identity(2, 2));
    cells[2](0, 1) = cplx(1.0, 0.0);  // asymmetric corner
    CHECK_THROWS_WITH(MatrixWeight(g, cells), "cell matrix must be Hermitian");
  }
  SECTION("rejects shape violations") {
    CHECK_THROWS_WITH(MatrixWeight(g, std::vector<Mat>(3, Mat::Identity(2, 2))),
                      "shape mismatch");
    std::vector<Mat> ragged(4, Mat::Identity(2, 2));
    ragged[1] = Mat::Identity(3, 3);
    CHECK_THROWS_WITH(MatrixWeight(g, ragged), "shape mismatch");
  }
  SECTION("eigenvalue floor is enforced") {
    Mat tiny = Mat::Zero(2, 2);
    tiny(0, 0) = cplx(1e-14, 0.0);
    tiny(1, 1) = cplx(1.0, 0.0);
    MatrixWeight W(g, std::vector<Mat>(4, tiny));
    for (std::int64_t id = 0; id < 4; ++id) {
      Eigen::SelfAdjointEigenSolver<Mat> es(W.cell(id));
      CHECK(es.eigenvalues().minCoeff() >= kEigenFloor * (1.0 - 1e-9));
    }
    // W^{1/t} W^{-1/t} = I exactly in the stored eigenbasis
    Mat prod = W.power(0, 0.5) * W.power(0, -0.5);
    CHECK((prod - Mat::Identity(2, 2)).norm() <= 1e-12);
  }
  SECTION("scalar profile validation") {
    GridFunction neg(g, 1);
    for (std::int64_t id = 0; id < 4; ++id) neg.at(id, 0) = cplx(-1.0, 0.0);
    CHECK_THROWS_WITH(ScalarWeightProfile(neg), "weight must be positive");
    GridFunction imag(g, 1);
    for (std::int64_t id = 0; id < 4; ++id) imag.at(id, 0) = cplx(1.0, 0.1);
    CHECK_THROWS_WITH(ScalarWeightProfile(imag), "weight must be real");
    CHECK_THROWS_WITH(ScalarWeightProfile(random_gf(g, 2, 1)), "weight must be scalar");
  }
}

TEST_CASE("weight serialization round trip") {
  Grid g = line_grid(8);
  MatrixWeight W = random_pd_weight(g, 2, 321);
  std::string path = "weights_roundtrip.bin";
  save_matrix_weight(path, W);
  MatrixWeight R = load_matrix_weight(path);
  REQUIRE(R.n == W.n);
  REQUIRE(R.grid.same_as(W.grid));
  for (std::int64_t id = 0; id < g.cell_count(); ++id) {
    CHECK((R.cell(id) - W.cell(id)).norm() <= 1e-12);
    CHECK((R.power(id, -1.0 / 3.0) - W.power(id, -1.0 / 3.0)).norm() <= 1e-10);
  }

  SECTION("truncated block is reported") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size() - 16));
    out.close();
    CHECK_THROWS_WITH(load_matrix_weight(path), "weight file truncated");
  }

  SECTION("corrupt header is reported") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "not json at all\n";
    out.close();
    CHECK_THROWS_WITH(load_matrix_weight(path), "weight file header corrupt");
  }

  SECTION("missing file is reported") {
    CHECK_THROWS_WITH(load_matrix_weight("no_such_weight_file.bin"),
                      "cannot open weight file");
  }

  std::remove(path.c_str());
}
