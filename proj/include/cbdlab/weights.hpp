#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbdlab/convexbody.hpp"
#include "cbdlab/grid.hpp"
#include "cbdlab/kernels.hpp"

namespace cbdlab {

// Matrix and scalar weight classes, weighted norms, and the inequality
// audits built on them. All cube suprema run over grid-aligned dyadic
// cubes by default; the `all_cubes` switch adds every integer translate
// that fits inside the box. The two suprema differ by a bounded factor
// and the dyadic one is an order of magnitude cheaper, which is why it
// is the default.

inline constexpr double kEigenFloor = 1e-10;

// ---- weight types ---------------------------------------------------------------

// Hermitian positive definite n x n matrix per grid cell. Eigenvalues are
// clamped to kEigenFloor at construction; every fractional power W^{p} is
// taken through the stored per-cell eigendecomposition, so W^{1/t} and
// W^{-1/t} share one eigenbasis exactly.
struct MatrixWeight {
  Grid grid;
  int n = 0;
  std::vector<Mat> basis;               // per-cell unitary of eigenvectors
  std::vector<Eigen::VectorXd> eigvals; // per-cell eigenvalues, >= kEigenFloor

  MatrixWeight() = default;

  MatrixWeight(const Grid& g, const std::vector<Mat>& cells) : grid(g) {
    if (std::int64_t(cells.size()) != g.cell_count()) throw Error("shape mismatch");
    if (cells.empty()) throw Error("shape mismatch");
    n = int(cells.front().rows());
    if (n < 1) throw Error("weight dimension must be positive");
    basis.reserve(cells.size());
    eigvals.reserve(cells.size());
    for (const Mat& raw : cells) {
      if (raw.rows() != n || raw.cols() != n) throw Error("shape mismatch");
      double drift = (raw - raw.adjoint()).norm();
      if (drift > 1e-8 * std::max(1.0, raw.norm())) throw Error("cell matrix must be Hermitian");
      Mat sym = 0.5 * (raw + raw.adjoint());
      Eigen::SelfAdjointEigenSolver<Mat> es(sym);
      Eigen::VectorXd ev = es.eigenvalues();
      for (int i = 0; i < n; ++i) ev(i) = std::max(ev(i), kEigenFloor);
      basis.push_back(es.eigenvectors());
      eigvals.push_back(std::move(ev));
    }
  }

  // W(id)^p, any real p; exact inverse pairing W^{p} W^{-p} = I in the
  // shared eigenbasis.
  Mat power(std::int64_t id, double p) const {
    const Mat& u = basis[std::size_t(id)];
    const Eigen::VectorXd& ev = eigvals[std::size_t(id)];
    Eigen::VectorXd powed(n);
    for (int i = 0; i < n; ++i) powed(i) = std::pow(ev(i), p);
    return u * powed.asDiagonal() * u.adjoint();
  }

  Mat cell(std::int64_t id) const { return power(id, 1.0); }
};

inline MatrixWeight identity_weight(const Grid& g, int n) {
  std::vector<Mat> cells(std::size_t(g.cell_count()), Mat::Identity(n, n));
  return MatrixWeight(g, cells);
}

// Positive scalar weight per cell. Stores the raw real values alongside the
// grid function so cube sweeps avoid repeated complex unpacking.
struct ScalarWeightProfile {
  GridFunction w;
  std::vector<double> vals;  // derived cache: w at each cell, real, positive

  ScalarWeightProfile() = default;

  explicit ScalarWeightProfile(const GridFunction& w_) : w(w_) {
    if (w.n != 1) throw Error("weight must be scalar");
    vals.resize(std::size_t(w.grid.cell_count()));
    for (std::int64_t id = 0; id < w.grid.cell_count(); ++id) {
      cplx z = w.at(id, 0);
      if (z.imag() != 0.0) throw Error("weight must be real");
      if (!(z.real() > 0.0)) throw Error("weight must be positive");
      vals[std::size_t(id)] = z.real();
    }
  }
};

inline MatrixWeight scalar_weight(const ScalarWeightProfile& p) {
  std::vector<Mat> cells;
  cells.reserve(p.vals.size());
  for (double v : p.vals) {
    Mat m(1, 1);
    m(0, 0) = cplx(v, 0.0);
    cells.push_back(m);
  }
  return MatrixWeight(p.w.grid, cells);
}

namespace detail {

// Visits cube windows: dyadic-aligned by default, every inside translate
// with all_cubes. Cubes are never clipped; a cube is a cube.
template <class F>
inline void sweep_cubes(const Grid& g, bool all_cubes, F&& fn) {
  for (std::int64_t m = 1; m <= g.N; m <<= 1) {
    const std::int64_t step = all_cubes ? 1 : m;
    const std::int64_t ylim = g.d == 2 ? g.N - m : 0;
    const std::int64_t ystep = g.d == 2 ? step : 1;
    for (std::int64_t oy = 0; oy <= ylim; oy += ystep)
      for (std::int64_t ox = 0; ox + m <= g.N; ox += step) {
        CellWindow w;
        w.x0 = ox;
        w.x1 = ox + m;
        w.y0 = g.d == 2 ? oy : 0;
        w.y1 = g.d == 2 ? oy + m : 1;
        fn(w);
      }
  }
}

inline double op_norm(const Mat& m) {
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

}  // namespace detail

// ---- the matrix A_t characteristic ----------------------------------------------

enum class AtMode { kClassical, kMixed };

// max over cubes Q of avg_{x in Q} ( avg_{y in Q} |W^{1/t}(x) W^{-1/t}(y)|_op^e )^{t/e}
// with inner exponent e = t' classically and e = a in mixed mode. The single
// invariant worth stating: the x = y pair contributes exactly 1, so the
// constant can never dip below 1 on any cube containing one cell.
inline double matrix_at_constant(const MatrixWeight& W, double t,
                                 AtMode mode = AtMode::kClassical, double a = 0.0,
                                 bool all_cubes = false) {
  if (!(t > 1.0)) throw Error("integrability exponent must be > 1");
  double e = t / (t - 1.0);
  if (mode == AtMode::kMixed) {
    if (!(a > 0.0)) throw Error("mixed inner exponent must be positive");
    e = a;
  }
  const Grid& g = W.grid;
  const std::int64_t nc = g.cell_count();
  std::vector<Mat> pos, neg;
  pos.reserve(std::size_t(nc));
  neg.reserve(std::size_t(nc));
  for (std::int64_t id = 0; id < nc; ++id) {
    pos.push_back(W.power(id, 1.0 / t));
    neg.push_back(W.power(id, -1.0 / t));
  }
  double best = 0.0;
  detail::sweep_cubes(g, all_cubes, [&](const CellWindow& w) {
    std::vector<std::int64_t> ids;
    ids.reserve(std::size_t(w.count()));
    for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
      for (std::int64_t ix = w.x0; ix < w.x1; ++ix) ids.push_back(g.cell_id(ix, iy));
    const double inv = 1.0 / double(ids.size());
    Kahan outer;
    for (std::int64_t x : ids) {
      Kahan inner;
      for (std::int64_t y : ids)
        inner.add(std::pow(detail::op_norm(pos[std::size_t(x)] * neg[std::size_t(y)]), e));
      outer.add(std::pow(inner.sum() * inv, t / e));
    }
    best = std::max(best, outer.sum() * inv);
  });
  return best;
}

// ---- weighted norms --------------------------------------------------------------

// ( sum_cells |W^{1/t}(x) f(x)|_2^t vol )^{1/t}
inline double weighted_norm(const GridFunction& f, const MatrixWeight& W, double t) {
  if (!(t >= 1.0)) throw Error("integrability exponent must be >= 1");
  if (f.n != W.n || !f.grid.same_as(W.grid)) throw Error("shape mismatch");
  const Grid& g = f.grid;
  Kahan acc;
  Vec v(f.n);
  for (std::int64_t id = 0; id < g.cell_count(); ++id) {
    for (int i = 0; i < f.n; ++i) v(i) = f.at(id, i);
    acc.add(std::pow((W.power(id, 1.0 / t) * v).norm(), t));
  }
  return std::pow(acc.sum() * g.cell_volume(), 1.0 / t);
}

// ---- weighted bound audits --------------------------------------------------------

enum class AuditOperator { kTOmega, kBochnerRiesz, kCommutator };

// Predicted growth exponent of the operator norm in the weight constant.
// Finite q reads the constant in mixed mode with a = t q'/(t - q'); q = inf
// and the multiplier operator read it classically.
inline double audit_exponent(AuditOperator op, double t, double q) {
  if (!(t > 1.0)) throw Error("integrability exponent must be > 1");
  const bool finite_q = std::isfinite(q);
  if (finite_q && !(q > 1.0)) throw Error("integrability exponent must be > 1");
  const double classical =
      1.0 + 1.0 / (t - 1.0) - 1.0 / t + std::min(1.0, 1.0 / (t - 1.0));
  if (op == AuditOperator::kBochnerRiesz) return classical;
  if (!finite_q) {
    if (op == AuditOperator::kCommutator) return 2.0 + 2.0 / (t - 1.0) - 1.0 / t;
    return classical;
  }
  const double qp = q / (q - 1.0);
  if (!(t > qp)) throw Error("audit requires t > q/(q-1)");
  double base = 1.0 + qp / (t * (t - qp));
  if (op == AuditOperator::kCommutator) base += std::max(1.0, qp / (t - qp));
  return base;
}

struct WeightAuditConfig {
  AuditOperator op = AuditOperator::kTOmega;
  double t = 2.0;
  double q = kInf;         // angular integrability entering the predicted exponent
  int family = 5;          // members along the power-weight ray; member 0 is W = I
  int trials = 3;          // random test functions, shared across members
  double alpha_max = 0.6;  // strongest power-weight exponent in the family
  double wiggle = 0.25;    // log-Lipschitz perturbation amplitude at the far end
  double delta = 0.0;      // multiplier order (kBochnerRiesz only)
  double cutoff = 8.0;     // multiplier cutoff frequency (kBochnerRiesz only)
  std::uint64_t seed = 1;
};

struct WeightAuditPoint {
  double family_param = 0.0;
  double weight_constant = 0.0;
  double observed_ratio = 0.0;
  double predicted_bound = 0.0;
};

struct WeightAuditResult {
  std::vector<WeightAuditPoint> points;
  double exponent = 0.0;         // predicted power of the weight constant
  double fitted_constant = 0.0;  // observed ratio at the identity member
  double max_ratio = 0.0;
  bool ok = false;  // every observed ratio at or below fitted * constant^exponent
};

namespace detail {

// Family member k: diagonal power weight diag_j r(x)^{alpha_k s_j} around the
// box center, modulated by exp(eps_k g_j(x)) with g_j a fixed smooth random
// profile (bounded derivative, hence log-Lipschitz). Member 0 has alpha_0 =
// eps_0 = 0 and is exactly the identity; the whole family shares one g.
struct AuditFamilyShape {
  int n = 1;
  std::vector<double> amp;    // n * 3 cosine amplitudes
  std::vector<double> phase;  // n * 3 phases
};

inline AuditFamilyShape audit_family_shape(int n, Rng& rng) {
  AuditFamilyShape s;
  s.n = n;
  s.amp.resize(std::size_t(n) * 3);
  s.phase.resize(std::size_t(n) * 3);
  const double two_pi = 2.0 * std::acos(-1.0);
  for (std::size_t i = 0; i < s.amp.size(); ++i) {
    s.amp[i] = rng.uniform(-1.0, 1.0);
    s.phase[i] = rng.uniform(0.0, two_pi);
  }
  return s;
}

inline MatrixWeight audit_family_weight(const Grid& g, const AuditFamilyShape& shape,
                                        double alpha, double eps) {
  const double two_pi = 2.0 * std::acos(-1.0);
  std::array<double, 2> x0{g.box_origin[0] + 0.5 * g.box_side,
                           g.box_origin[1] + 0.5 * g.box_side};
  std::vector<Mat> cells;
  cells.reserve(std::size_t(g.cell_count()));
  for (std::int64_t id = 0; id < g.cell_count(); ++id) {
    auto c = g.cell_center(id);
    double rx = c[0] - x0[0], ry = g.d == 2 ? c[1] - x0[1] : 0.0;
    double r = std::sqrt(rx * rx + ry * ry);
    double frac = (c[0] - g.box_origin[0]) / g.box_side;
    if (g.d == 2) frac += (c[1] - g.box_origin[1]) / g.box_side;
    Mat m = Mat::Zero(shape.n, shape.n);
    for (int j = 0; j < shape.n; ++j) {
      double sgn = (j % 2 == 0) ? 1.0 : -1.0;
      double wig = 0.0;
      for (int k = 0; k < 3; ++k) {
        std::size_t idx = std::size_t(j) * 3 + std::size_t(k);
        wig += shape.amp[idx] / double(k + 1) * std::cos(two_pi * double(k + 1) * frac +
                                                         shape.phase[idx]);
      }
      double val = (alpha == 0.0 && eps == 0.0)
                       ? 1.0
                       : std::pow(r, alpha * sgn) * std::exp(eps * wig);
      m(j, j) = cplx(val, 0.0);
    }
    cells.push_back(m);
  }
  return MatrixWeight(g, cells);
}

}  // namespace detail

// One-sided audit: the theory gives upper bounds only, so the check is that
// every observed ratio sits below C * constant^exponent with C fitted at the
// identity member (where the constant is 1 and the predicted value is C
// itself). Test functions and the commutator symbol are drawn once and
// reused across the family; the operator does not depend on the weight, so
// its output per trial is computed once.
inline WeightAuditResult weighted_bound_audit(const Grid& g, int n, const WeightAuditConfig& cfg,
                                              const GridFunction* symbol = nullptr) {
  if (n < 1) throw Error("weight dimension must be positive");
  if (cfg.family < 1) throw Error("family must have at least one member");
  if (cfg.trials < 1) throw Error("at least one trial required");
  if (cfg.alpha_max < 0.0) throw Error("family exponent must be nonnegative");
  WeightAuditResult res;
  res.exponent = audit_exponent(cfg.op, cfg.t, cfg.q);
  const bool mixed = cfg.op != AuditOperator::kBochnerRiesz && std::isfinite(cfg.q);
  double a = 0.0;
  if (mixed) {
    double qp = cfg.q / (cfg.q - 1.0);
    a = cfg.t * qp / (cfg.t - qp);
  }

  Rng rng(cfg.seed);
  detail::AuditFamilyShape shape = detail::audit_family_shape(n, rng);

  double qeff = std::isfinite(cfg.q) ? cfg.q : 2.0;
  KernelSpec ks;
  ks.omega = g.d == 1 ? omega_sign(qeff)
                      : OmegaSpec(2, {cplx(1.0), cplx(-1.0), cplx(1.0), cplx(-1.0)}, qeff);
  ks.mu = -g.J;
  ks.nu = 0;

  GridFunction b(g, 1);
  if (cfg.op == AuditOperator::kCommutator) {
    if (symbol != nullptr) {
      if (symbol->n != 1) throw Error("symbol must be scalar");
      if (!symbol->grid.same_as(g)) throw Error("shape mismatch");
      b = *symbol;
    } else {
      for (std::int64_t id = 0; id < g.cell_count(); ++id) b.at(id, 0) = rng.next_cgaussian();
    }
  }

  std::vector<GridFunction> fs, ops;
  fs.reserve(std::size_t(cfg.trials));
  ops.reserve(std::size_t(cfg.trials));
  for (int i = 0; i < cfg.trials; ++i) {
    GridFunction f(g, n);
    for (int comp = 0; comp < n; ++comp)
      for (std::int64_t id = 0; id < g.cell_count(); ++id)
        f.at(id, comp) = rng.next_cgaussian();
    switch (cfg.op) {
      case AuditOperator::kTOmega:
        ops.push_back(t_omega(ks, f));
        break;
      case AuditOperator::kBochnerRiesz:
        ops.push_back(bochner_riesz(f, cfg.delta, cfg.cutoff));
        break;
      case AuditOperator::kCommutator:
        ops.push_back(commutator(ks, b, f));
        break;
    }
    fs.push_back(std::move(f));
  }

  res.points.resize(std::size_t(cfg.family));
  for (int k = 0; k < cfg.family; ++k) {
    double sfrac = cfg.family == 1 ? 0.0 : double(k) / double(cfg.family - 1);
    double alpha = cfg.alpha_max * sfrac;
    double eps = cfg.wiggle * sfrac;
    MatrixWeight W = detail::audit_family_weight(g, shape, alpha, eps);
    double constant = mixed ? matrix_at_constant(W, cfg.t, AtMode::kMixed, a)
                            : matrix_at_constant(W, cfg.t);
    if (constant < 1.0 - 1e-9) throw Error("weight constant below one");
    double ratio = 0.0;
    for (int i = 0; i < cfg.trials; ++i) {
      double den = weighted_norm(fs[std::size_t(i)], W, cfg.t);
      if (den == 0.0) continue;
      ratio = std::max(ratio, weighted_norm(ops[std::size_t(i)], W, cfg.t) / den);
    }
    res.points[std::size_t(k)].family_param = alpha;
    res.points[std::size_t(k)].weight_constant = constant;
    res.points[std::size_t(k)].observed_ratio = ratio;
    res.max_ratio = std::max(res.max_ratio, ratio);
  }
  res.fitted_constant = res.points.front().observed_ratio;
  res.ok = true;
  for (auto& p : res.points) {
    p.predicted_bound = res.fitted_constant * std::pow(p.weight_constant, res.exponent);
    if (p.observed_ratio > p.predicted_bound * (1.0 + 1e-9)) res.ok = false;
  }
  return res;
}

inline std::string audit_csv(const WeightAuditResult& res) {
  std::string out = "family_param,weight_constant,observed_ratio,predicted_bound\n";
  char line[256];
  for (const WeightAuditPoint& p : res.points) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", p.family_param,
                  p.weight_constant, p.observed_ratio, p.predicted_bound);
    out += line;
  }
  return out;
}

// ---- scalar weight quantities ------------------------------------------------------

// sup over cubes of (avg w^s)^{1/s} / (avg w)
inline double reverse_holder(const ScalarWeightProfile& w, double s, bool all_cubes = false) {
  if (!(s > 1.0)) throw Error("reverse Holder exponent must be > 1");
  const Grid& g = w.w.grid;
  double best = 0.0;
  detail::sweep_cubes(g, all_cubes, [&](const CellWindow& win) {
    Kahan plain, pw;
    for (std::int64_t iy = win.y0; iy < win.y1; ++iy)
      for (std::int64_t ix = win.x0; ix < win.x1; ++ix) {
        double v = w.vals[std::size_t(g.cell_id(ix, iy))];
        plain.add(v);
        pw.add(std::pow(v, s));
      }
    double inv = 1.0 / double(win.count());
    best = std::max(best, std::pow(pw.sum() * inv, 1.0 / s) / (plain.sum() * inv));
  });
  return best;
}

enum class BloomBranch { kAuto, kBmo, kSharpMaximal };

struct ScalarWeightQuantities {
  double alpha = 0.0;  // 1/u - 1/v
  double tau = kInf;   // -1/alpha on the sharp branch; infinity elsewhere
  bool sharp_branch = false;
  GridFunction nu;            // Bloom weight, solved cellwise from nu^{1+alpha} = mu^{1/u} lambda^{-1/v}
  double rh_mu = 0.0;         // reverse Holder constant of mu at exponent q/(q-u)
  double rh_lambda = 0.0;     // reverse Holder constant of lambda at exponent q/(q-v)
  double bmo_alpha_nu = 0.0;  // sup_Q nu(Q)^{-(1+alpha)} int_Q |b - <b>_Q|
  double sharp_max_norm = 0.0;
};

// The two-weight setup: mu, lambda with exponents u, v in (1, q). The norm
// of the symbol splits by the sign of alpha: the fractional BMO seminorm
// covers u <= v, the sharp maximal function in L^tau(nu) covers u >= v, and
// at u = v only the BMO branch exists because tau = -1/alpha is undefined.
inline ScalarWeightQuantities scalar_weight_quantities(const ScalarWeightProfile& mu,
                                                       const ScalarWeightProfile& lambda,
                                                       double u, double v, double q,
                                                       const GridFunction& b,
                                                       BloomBranch branch = BloomBranch::kAuto,
                                                       bool all_cubes = false) {
  if (!(q > 1.0)) throw Error("integrability exponent must be > 1");
  if (!(u > 1.0 && u < q) || !(v > 1.0 && v < q))
    throw Error("exponents must lie strictly between 1 and q");
  if (!mu.w.grid.same_as(lambda.w.grid)) throw Error("shape mismatch");
  if (b.n != 1) throw Error("symbol must be scalar");
  if (!b.grid.same_as(mu.w.grid)) throw Error("shape mismatch");

  const Grid& g = mu.w.grid;
  ScalarWeightQuantities out;
  out.alpha = 1.0 / u - 1.0 / v;
  bool want_sharp = branch == BloomBranch::kSharpMaximal ||
                    (branch == BloomBranch::kAuto && u > v);
  if (branch == BloomBranch::kSharpMaximal) {
    if (u == v) throw Error("sharp branch undefined at alpha = 0");
    if (u < v) throw Error("sharp branch requires u >= v");
  }

  out.nu = GridFunction(g, 1);
  std::vector<double> nuv(std::size_t(g.cell_count()));
  for (std::int64_t id = 0; id < g.cell_count(); ++id) {
    double raw = std::pow(mu.vals[std::size_t(id)], 1.0 / u) *
                 std::pow(lambda.vals[std::size_t(id)], -1.0 / v);
    double val = std::pow(raw, 1.0 / (1.0 + out.alpha));
    nuv[std::size_t(id)] = val;
    out.nu.at(id, 0) = cplx(val, 0.0);
  }

  out.rh_mu = reverse_holder(mu, q / (q - u), all_cubes);
  out.rh_lambda = reverse_holder(lambda, q / (q - v), all_cubes);

  const double vol = g.cell_volume();
  std::vector<double> sharp(std::size_t(g.cell_count()), 0.0);
  detail::sweep_cubes(g, all_cubes, [&](const CellWindow& win) {
    KahanC mean;
    Kahan numass;
    for (std::int64_t iy = win.y0; iy < win.y1; ++iy)
      for (std::int64_t ix = win.x0; ix < win.x1; ++ix) {
        std::int64_t id = g.cell_id(ix, iy);
        mean.add(b.at(id, 0));
        numass.add(nuv[std::size_t(id)]);
      }
    cplx avg = mean.sum() / double(win.count());
    Kahan osc;
    for (std::int64_t iy = win.y0; iy < win.y1; ++iy)
      for (std::int64_t ix = win.x0; ix < win.x1; ++ix)
        osc.add(std::abs(b.at(g.cell_id(ix, iy), 0) - avg));
    double oscint = osc.sum() * vol;
    double numeasure = numass.sum() * vol;
    out.bmo_alpha_nu = std::max(out.bmo_alpha_nu,
                                oscint / std::pow(numeasure, 1.0 + out.alpha));
    if (want_sharp) {
      double ratio = oscint / numeasure;
      for (std::int64_t iy = win.y0; iy < win.y1; ++iy)
        for (std::int64_t ix = win.x0; ix < win.x1; ++ix) {
          std::size_t id = std::size_t(g.cell_id(ix, iy));
          sharp[id] = std::max(sharp[id], ratio);
        }
    }
  });

  if (want_sharp) {
    out.sharp_branch = true;
    out.tau = -1.0 / out.alpha;
    Kahan acc;
    for (std::size_t id = 0; id < sharp.size(); ++id)
      acc.add(std::pow(sharp[id], out.tau) * nuv[id]);
    out.sharp_max_norm = std::pow(acc.sum() * vol, 1.0 / out.tau);
  }
  return out;
}

// ---- serialization ----------------------------------------------------------------

// One JSON header line, then host-endian doubles: per cell, row-major,
// real part then imaginary part of each entry.
inline void save_matrix_weight(const std::string& path, const MatrixWeight& W) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open weight file");
  nlohmann::json j;
  j["format"] = "cbdlab-weight";
  j["version"] = kLibraryVersion;
  j["d"] = W.grid.d;
  j["N"] = W.grid.N;
  j["box_origin"] = {W.grid.box_origin[0], W.grid.box_origin[1]};
  j["box_side"] = W.grid.box_side;
  j["n"] = W.n;
  std::string header = j.dump();
  header += '\n';
  f.write(header.data(), std::streamsize(header.size()));
  std::vector<double> block;
  block.reserve(std::size_t(W.grid.cell_count()) * std::size_t(W.n) * std::size_t(W.n) * 2);
  for (std::int64_t id = 0; id < W.grid.cell_count(); ++id) {
    Mat m = W.cell(id);
    for (int r = 0; r < W.n; ++r)
      for (int c = 0; c < W.n; ++c) {
        block.push_back(m(r, c).real());
        block.push_back(m(r, c).imag());
      }
  }
  f.write(reinterpret_cast<const char*>(block.data()),
          std::streamsize(block.size() * sizeof(double)));
  if (!f) throw Error("cannot write weight file");
}

inline MatrixWeight load_matrix_weight(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open weight file");
  std::string header;
  if (!std::getline(f, header)) throw Error("weight file header corrupt");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const std::exception&) {
    throw Error("weight file header corrupt");
  }
  if (!j.contains("format") || j["format"] != "cbdlab-weight")
    throw Error("weight file header corrupt");
  Grid g(j.at("d").get<int>(),
         {j.at("box_origin")[0].get<double>(), j.at("box_origin")[1].get<double>()},
         j.at("box_side").get<double>(), j.at("N").get<std::int64_t>());
  int n = j.at("n").get<int>();
  if (n < 1) throw Error("weight file header corrupt");
  std::size_t need = std::size_t(g.cell_count()) * std::size_t(n) * std::size_t(n) * 2;
  std::vector<double> block(need);
  f.read(reinterpret_cast<char*>(block.data()), std::streamsize(need * sizeof(double)));
  if (std::size_t(f.gcount()) != need * sizeof(double)) throw Error("weight file truncated");
  std::vector<Mat> cells;
  cells.reserve(std::size_t(g.cell_count()));
  std::size_t pos = 0;
  for (std::int64_t id = 0; id < g.cell_count(); ++id) {
    Mat m(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        m(r, c) = cplx(block[pos], block[pos + 1]);
        pos += 2;
      }
    cells.push_back(m);
  }
  return MatrixWeight(g, cells);
}

}  // namespace cbdlab
