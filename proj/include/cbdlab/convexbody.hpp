#pragma once

#include <Eigen/Dense>

#include <fstream>
#include <vector>

#include "cbdlab/grid.hpp"

namespace cbdlab {

using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;

// The L^p convex body of f over Q: all points (avg_Q f_i conj(phi))_i with
// phi in the unit ball of the normalized-L^{p'} dual norm. Bodies are kept as
// support oracles; the duality identity support(v) = || f.v ||_{Lp-avg(Q)} is
// the evaluation rule.
struct BodyHandle {
  GridFunction f;
  CubeRegion Q;
  double p = 2.0;

  BodyHandle(GridFunction f_, CubeRegion Q_, double p_)
      : f(std::move(f_)), Q(Q_), p(p_) {
    if (!(p >= 1.0)) throw Error("integrability exponent must be >= 1");
    if (window_of_region(f.grid, Q).empty()) throw Error("degenerate region");
  }

  int n() const { return f.n; }
};

// f(x).v = sum_i f_i(x) conj(v_i), the scalarization entering every support
// evaluation
inline cplx scalarize_at(const GridFunction& f, std::int64_t cell, const Vec& v) {
  cplx s = 0.0;
  for (int i = 0; i < f.n; ++i) s += f.at(cell, i) * std::conj(v[i]);
  return s;
}

inline double support(const BodyHandle& b, const Vec& v) {
  if (v.size() != b.n()) throw Error("shape mismatch");
  CellWindow w = window_of_region(b.f.grid, b.Q);
  Kahan acc;
  double mx = 0.0;
  for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
    for (std::int64_t ix = w.x0; ix < w.x1; ++ix) {
      double a = std::abs(scalarize_at(b.f, b.f.grid.cell_id(ix, iy), v));
      if (b.p == kInf)
        mx = std::max(mx, a);
      else
        acc.add(std::pow(a, b.p));
    }
  if (b.p == kInf) return mx;
  return std::pow(acc.sum() / double(w.count()), 1.0 / b.p);
}

// normalized dual norm of a scalar function over Q: exponent p' = p/(p-1)
inline double dual_norm(const GridFunction& phi, const CubeRegion& Q, double p) {
  double pprime = p == 1.0 ? kInf : p / (p - 1.0);
  return lp_average(phi, Q, pprime, 0);
}

// Hoelder equality witness: a valid dual phi with member(phi).v = support(v).
// phi = sign(u) (|u|/||u||_p)^{p-1} for u = f.v; at p=1 the pure phase.
inline GridFunction extremal_dual(const BodyHandle& b, const Vec& v) {
  CellWindow w = window_of_region(b.f.grid, b.Q);
  GridFunction phi(b.f.grid, 1);
  double nrm = support(b, v);
  if (nrm == 0.0) return phi;
  for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
    for (std::int64_t ix = w.x0; ix < w.x1; ++ix) {
      std::int64_t id = b.f.grid.cell_id(ix, iy);
      cplx u = scalarize_at(b.f, id, v);
      double au = std::abs(u);
      if (au == 0.0) continue;
      cplx phase = u / au;
      phi.at(id, 0) = b.p == 1.0 ? phase : phase * std::pow(au / nrm, b.p - 1.0);
    }
  return phi;
}

inline Vec member_point(const BodyHandle& b, const GridFunction& phi) {
  if (!phi.grid.same_as(b.f.grid) || phi.n != 1) throw Error("shape mismatch");
  if (dual_norm(phi, b.Q, b.p) > 1.0 + 1e-12) throw Error("dual-norm violation");
  CellWindow w = window_of_region(b.f.grid, b.Q);
  Vec a = Vec::Zero(b.n());
  for (int i = 0; i < b.n(); ++i) {
    KahanC acc;
    for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
      for (std::int64_t ix = w.x0; ix < w.x1; ++ix) {
        std::int64_t id = b.f.grid.cell_id(ix, iy);
        acc.add(b.f.at(id, i) * std::conj(phi.at(id, 0)));
      }
    a[i] = acc.sum() / double(w.count());
  }
  return a;
}

// Gram matrix G_ij = avg_Q f_i conj(f_j); Hermitian PSD
inline Mat gram_matrix(const GridFunction& f, const CubeRegion& Q) {
  CellWindow w = window_of_region(f.grid, Q);
  if (w.empty()) throw Error("degenerate region");
  Mat G = Mat::Zero(f.n, f.n);
  for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
    for (std::int64_t ix = w.x0; ix < w.x1; ++ix) {
      std::int64_t id = f.grid.cell_id(ix, iy);
      for (int i = 0; i < f.n; ++i)
        for (int j = 0; j < f.n; ++j) G(i, j) += f.at(id, i) * std::conj(f.at(id, j));
    }
  G /= double(w.count());
  return (G + G.adjoint().eval()) / 2.0;
}

// p=2 bodies are ellipsoids {Au : |u| <= 1} with A the PSD square root of the
// Gram matrix
inline Mat ellipsoid_form(const BodyHandle& b) {
  if (b.p != 2.0) throw Error("ellipsoid form requires p = 2");
  Mat G = gram_matrix(b.f, b.Q);
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
         es.eigenvectors().adjoint();
}

struct DiskRadius {
  double c = 0.0;
  double gap_estimate = 0.0;  // restart dispersion (alternating) or 0
};

enum class DotMethod { kExact2, kAlternating, kSampling };

inline Vec random_unit_direction(Rng& rng, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.next_cgaussian();
  double nn = v.norm();
  if (nn == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / nn;
}

// Minkowski dot: the product set K1.K2 in C is a closed disk; its radius is
// sup |a.b|. exact2 is the sigma_max closed form for p=2 pairs; alternating
// performs coordinate-ascent with exact one-sided maximization by duality;
// sampling draws a random first-side dual and responds exactly on the second
// side, giving a certified lower bound.
inline DiskRadius minkowski_dot(const BodyHandle& b1, const BodyHandle& b2, DotMethod method,
                                int samples = 100000, std::uint64_t seed = 1) {
  if (b1.n() != b2.n()) throw Error("shape mismatch");
  const int n = b1.n();
  DiskRadius out;

  if (method == DotMethod::kExact2) {
    if (b1.p != 2.0 || b2.p != 2.0) throw Error("exact2 requires p = 2");
    Mat A1 = ellipsoid_form(b1), A2 = ellipsoid_form(b2);
    Eigen::JacobiSVD<Mat> svd(A2.adjoint() * A1);
    out.c = svd.singularValues()[0];
    return out;
  }

  // one ascent pass: b in K2 from phi2; then exact maximization alternately
  auto ascend = [&](Vec w0, int rounds, double tol) {
    GridFunction phi2 = extremal_dual(b2, w0);
    Vec bb = member_point(b2, phi2);
    double val = 0.0;
    for (int r = 0; r < rounds; ++r) {
      double v1 = support(b1, bb);
      if (v1 == 0.0) return 0.0;
      Vec a = member_point(b1, extremal_dual(b1, bb));
      double v2 = support(b2, a);
      bb = member_point(b2, extremal_dual(b2, a));
      if (std::abs(v2 - val) <= tol * std::max(1e-300, v2)) {
        val = v2;
        break;
      }
      val = v2;
    }
    return val;
  };

  if (method == DotMethod::kAlternating) {
    Rng rng(seed);
    double best = 0.0, worst = kInf;
    for (int restart = 0; restart < 8; ++restart) {
      double v = ascend(random_unit_direction(rng, n), 50, 1e-8);
      best = std::max(best, v);
      worst = std::min(worst, v);
    }
    out.c = best;
    out.gap_estimate = best - worst;
    return out;
  }

  Rng rng(seed);
  double best = 0.0;
  for (int s = 0; s < samples; ++s) {
    Vec w = random_unit_direction(rng, n);
    GridFunction phi1 = extremal_dual(b1, w);
    Vec a = member_point(b1, phi1);
    // exact second-side response: sup_b |a.b| = support of K2 at a
    best = std::max(best, support(b2, a));
  }
  out.c = best;
  return out;
}

// masked-body inclusion: support dominance over sampled directions
inline bool inclusion_check(const BodyHandle& masked, const BodyHandle& full, int directions,
                            std::uint64_t seed = 7) {
  if (masked.n() != full.n() || masked.p != full.p) throw Error("shape mismatch");
  if (masked.Q.side != full.Q.side || masked.Q.center != full.Q.center)
    throw Error("shape mismatch");
  Rng rng(seed);
  for (int k = 0; k < directions; ++k) {
    Vec v = random_unit_direction(rng, masked.n());
    if (support(masked, v) > support(full, v) + 1e-12) return false;
  }
  return true;
}

inline BodyHandle project_body(const BodyHandle& b, const Mat& P) {
  if (P.rows() != b.n() || P.cols() != b.n()) throw Error("shape mismatch");
  if ((P - P.adjoint()).norm() > 1e-12 * (1.0 + P.norm()) ||
      (P * P - P).norm() > 1e-12 * (1.0 + P.norm()))
    throw Error("not an orthogonal projection");
  GridFunction pf(b.f.grid, b.n());
  for (std::int64_t id = 0; id < b.f.grid.cell_count(); ++id) {
    Vec x(b.n());
    for (int i = 0; i < b.n(); ++i) x[i] = b.f.at(id, i);
    Vec y = P * x;
    for (int i = 0; i < b.n(); ++i) pf.at(id, i) = y[i];
  }
  return BodyHandle(std::move(pf), b.Q, b.p);
}

// CSV export of a sampled support profile: one row per direction,
// re/im direction components then the support value
inline void support_profile_csv(const BodyHandle& b, int directions, std::uint64_t seed,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open file for writing: " + path);
  out << "# support profile";
  for (int i = 0; i < b.n(); ++i) out << ",v" << i << "_re,v" << i << "_im";
  out << ",support\n";
  Rng rng(seed);
  out.precision(17);
  for (int k = 0; k < directions; ++k) {
    Vec v = random_unit_direction(rng, b.n());
    out << k;
    for (int i = 0; i < b.n(); ++i) out << ',' << v[i].real() << ',' << v[i].imag();
    out << ',' << support(b, v) << '\n';
  }
}

}  // namespace cbdlab
