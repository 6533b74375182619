#pragma once

#include <Eigen/Dense>

#include <vector>

#include <nlohmann/json.hpp>

#include "cbdlab/convexbody.hpp"

namespace cbdlab {

// ---- John ellipsoid ----------------------------------------------------------
// Maximum-volume Hermitian-PSD ellipsoid {Au : |u| <= 1} inscribed into a
// support-oracle body: maximize logdet A subject to |A u_k| <= support(u_k)
// over a direction net, with constraint generation against the true support
// afterwards. The barrier objective is concave, so damped Newton on the
// Hermitian parameters converges globally for each barrier weight.

struct JohnResult {
  Mat A;              // Hermitian PSD
  double sandwich = 0.0;  // max_k support(u_k)/|A u_k| over the final net
  int directions = 0;
};

namespace detail {

// Hermitian matrix <-> real parameter vector (diag, then re/im off-diag)
inline int herm_param_count(int n) { return n * n; }

inline Mat herm_from_params(const Eigen::VectorXd& th, int n) {
  Mat A = Mat::Zero(n, n);
  int k = 0;
  for (int i = 0; i < n; ++i) A(i, i) = th[k++];
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      A(i, j) = cplx(th[k], th[k + 1]);
      A(j, i) = std::conj(A(i, j));
      k += 2;
    }
  return A;
}

inline Eigen::VectorXd herm_to_params(const Mat& A) {
  int n = int(A.rows());
  Eigen::VectorXd th(herm_param_count(n));
  int k = 0;
  for (int i = 0; i < n; ++i) th[k++] = A(i, i).real();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      th[k] = A(i, j).real();
      th[k + 1] = A(i, j).imag();
      k += 2;
    }
  return th;
}

struct BarrierEval {
  bool feasible = false;
  double value = -kInf;
};

inline BarrierEval barrier_value(const Mat& A, const std::vector<Vec>& dirs,
                                 const std::vector<double>& h, double t) {
  BarrierEval ev;
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success) return ev;
  double logdet = 0.0;
  for (int i = 0; i < A.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i).real());
  double val = t * logdet;
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    double s = h[k] * h[k] - (A * dirs[k]).squaredNorm();
    if (s <= 0.0) return ev;
    val += std::log(s);
  }
  ev.feasible = true;
  ev.value = val;
  return ev;
}

// analytic gradient of the barrier in the Hermitian inner product
inline Eigen::VectorXd barrier_grad(const Mat& A, const std::vector<Vec>& dirs,
                                    const std::vector<double>& h, double t) {
  int n = int(A.rows());
  Mat G = t * A.inverse();
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    Vec m = A * dirs[k];
    double s = h[k] * h[k] - m.squaredNorm();
    G -= (m * dirs[k].adjoint() + dirs[k] * m.adjoint()) / s;
  }
  Eigen::VectorXd g(herm_param_count(n));
  int k = 0;
  for (int i = 0; i < n; ++i) g[k++] = G(i, i).real();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      g[k] = 2.0 * G(i, j).real();
      g[k + 1] = 2.0 * G(i, j).imag();
      k += 2;
    }
  return g;
}

// damped Newton for one barrier weight; Hessian by central differences of the
// analytic gradient
inline Mat barrier_solve(Mat A, const std::vector<Vec>& dirs, const std::vector<double>& h,
                         double t, double scale) {
  const int n = int(A.rows());
  const int P = herm_param_count(n);
  for (int tries = 0; tries < 200 && !barrier_value(A, dirs, h, t).feasible; ++tries) A *= 0.999;
  if (!barrier_value(A, dirs, h, t).feasible) throw Error("infeasible solver state");
  Eigen::VectorXd th = herm_to_params(A);
  for (int iter = 0; iter < 60; ++iter) {
    Mat Ac = herm_from_params(th, n);
    Eigen::VectorXd g = barrier_grad(Ac, dirs, h, t);
    // the finite-difference step must stay well inside the barrier: the
    // nearest constraint is min slack / (2 h) away in matrix norm
    double smin = kInf;
    for (std::size_t k = 0; k < dirs.size(); ++k)
      smin = std::min(smin, h[k] * h[k] - (Ac * dirs[k]).squaredNorm());
    double fd = std::min(1e-6 * scale, 0.05 * smin / scale);
    Eigen::MatrixXd H(P, P);
    for (int j = 0; j < P; ++j) {
      Eigen::VectorXd tp = th, tm = th;
      tp[j] += fd;
      tm[j] -= fd;
      H.col(j) = (barrier_grad(herm_from_params(tp, n), dirs, h, t) -
                  barrier_grad(herm_from_params(tm, n), dirs, h, t)) /
                 (2.0 * fd);
    }
    H = (H + H.transpose().eval()) / 2.0;
    Eigen::VectorXd step = -H.ldlt().solve(g);
    if (!step.allFinite()) step = g * (scale * scale / (1.0 + g.norm()));
    double base = barrier_value(Ac, dirs, h, t).value;
    double alpha = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 40; ++bt) {
      BarrierEval ev = barrier_value(herm_from_params(th + alpha * step, n), dirs, h, t);
      if (ev.feasible && ev.value > base) {
        th += alpha * step;
        moved = true;
        break;
      }
      alpha /= 2.0;
    }
    if (!moved || alpha * step.norm() < 1e-14 * scale) break;
  }
  return herm_from_params(th, n);
}

// worst containment ratio |Au| / support(u) over the unit sphere; exact
// generalized eigenproblem for p = 2, projected numeric ascent otherwise
inline std::pair<double, Vec> worst_ratio(const Mat& A, const BodyHandle& body,
                                          const std::vector<Vec>& dirs, std::uint64_t seed) {
  const int n = int(A.rows());
  if (body.p == 2.0) {
    Mat G = gram_matrix(body.f, body.Q);
    double reg = 1e-14 * G.trace().real() / double(n);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(Mat(A * A), Mat(G + reg * Mat::Identity(n, n)));
    Eigen::VectorXd ev = ges.eigenvalues();
    Eigen::Index arg = 0;
    ev.maxCoeff(&arg);
    Vec u = ges.eigenvectors().col(arg);
    u.normalize();
    double s = support(body, u);
    return {s > 0.0 ? (A * u).norm() / s : 0.0, u};
  }
  auto ratio = [&](const Vec& u) {
    double s = support(body, u);
    return s > 0.0 ? (A * u).norm() / s : 0.0;
  };
  Rng rng(seed);
  Vec best = dirs.empty() ? random_unit_direction(rng, n) : dirs[0];
  double bestr = ratio(best);
  for (const Vec& u : dirs) {
    double r = ratio(u);
    if (r > bestr) {
      bestr = r;
      best = u;
    }
  }
  for (int probe = 0; probe < 512; ++probe) {
    Vec u = random_unit_direction(rng, n);
    double r = ratio(u);
    if (r > bestr) {
      bestr = r;
      best = u;
    }
  }
  double step = 0.1;
  for (int it = 0; it < 200 && step > 1e-10; ++it) {
    bool improved = false;
    for (int j = 0; j < 2 * n; ++j) {
      for (double sgn : {1.0, -1.0}) {
        Vec u = best;
        cplx delta = (j % 2 == 0) ? cplx(sgn * step, 0.0) : cplx(0.0, sgn * step);
        u[j / 2] += delta;
        u.normalize();
        double r = ratio(u);
        if (r > bestr) {
          bestr = r;
          best = u;
          improved = true;
        }
      }
    }
    if (!improved) step /= 2.0;
  }
  return {bestr, best};
}

}  // namespace detail

inline std::vector<Vec> direction_net(int n, int directions, std::uint64_t seed = 0xC0FFEE) {
  std::vector<Vec> dirs;
  dirs.reserve(std::size_t(directions));
  if (n == 1) {
    for (int k = 0; k < directions; ++k) {
      Vec v(1);
      double a = 2.0 * 3.14159265358979323846 * double(k) / double(directions);
      v[0] = cplx(std::cos(a), std::sin(a));
      dirs.push_back(v);
    }
    return dirs;
  }
  Rng rng(seed + std::uint64_t(n));
  for (int k = 0; k < directions; ++k) dirs.push_back(random_unit_direction(rng, n));
  return dirs;
}

inline int default_directions(int n) { return n == 1 ? 32 : (n == 2 ? 500 : 800); }

inline JohnResult john_ellipsoid(const BodyHandle& body, int directions = 0, double tol = 0.02) {
  const int n = body.n();
  if (directions <= 0) directions = default_directions(n);

  // rank screen: coordinate supports, then the pointwise Gram spectrum
  {
    double mx = 0.0;
    std::vector<double> coord(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Vec e = Vec::Zero(n);
      e[i] = 1.0;
      coord[std::size_t(i)] = support(body, e);
      mx = std::max(mx, coord[std::size_t(i)]);
    }
    if (mx == 0.0) throw Error("project first");
    for (double c : coord)
      if (c < 1e-12 * mx) throw Error("project first");
    Mat S = gram_matrix(body.f, body.Q);
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    if (es.eigenvalues()[0] < 1e-12 * es.eigenvalues()[n - 1]) throw Error("project first");
  }

  std::vector<Vec> dirs = direction_net(n, directions);
  std::vector<double> h;
  h.reserve(dirs.size());
  double hmin = kInf, hmax = 0.0;
  for (const Vec& u : dirs) {
    double s = support(body, u);
    h.push_back(s);
    hmin = std::min(hmin, s);
    hmax = std::max(hmax, s);
  }
  if (!(hmin > 1e-12 * hmax)) throw Error("project first");

  // start just inside the feasible set
  Mat A = (hmin * (1.0 - 1e-3)) * Mat::Identity(n, n);
  double scale = hmin;

  double t0 = 1.0;  // warm restarts skip the low-weight part of the path
  for (int outer = 0; outer < 15; ++outer) {
    for (double t = t0; t < 2e12; t *= 10.0) A = detail::barrier_solve(A, dirs, h, t, scale);
    t0 = 1e8;
    auto [rho, worst] = detail::worst_ratio(A, body, dirs, 0x9e3779b9 + std::uint64_t(outer));
    if (!(rho > 1.0 + 5e-9)) break;
    A /= rho * (1.0 + 1e-7);
    dirs.push_back(worst);
    h.push_back(support(body, worst));
  }

  JohnResult res;
  res.A = A;
  res.directions = int(dirs.size());
  double sw = 0.0;
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    double denom = (A * dirs[k]).norm();
    if (denom > 0.0) sw = std::max(sw, h[k] / denom);
  }
  // reported, not enforced: the net certifies containment, the sandwich
  // factor is the body's own geometry; callers compare it against
  // sqrt(n)*(1+tol)
  res.sandwich = sw;
  (void)tol;
  return res;
}

// ---- coordinate decomposition -------------------------------------------------

struct Decomposition {
  int n = 1;        // ambient dimension
  int r = 1;        // reduced dimension (rank of the pointwise span)
  Mat V;            // n x r orthonormal span basis
  Mat R;            // r x r, inverse of the John form in reduced coordinates
  Mat A;            // John form itself
  double sandwich = 0.0;
  CubeRegion region;  // the 3Q window all norms live on
  double p1 = 1.0, p2 = 1.0;
  std::vector<GridFunction> f_coords, g_coords;  // r scalar functions each
};

// span basis of the pointwise values of f over the window
inline Mat span_basis(const GridFunction& f, const CubeRegion& Q) {
  CellWindow w = window_of_region(f.grid, Q);
  if (w.empty()) throw Error("degenerate region");
  Mat S = Mat::Zero(f.n, f.n);
  for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
    for (std::int64_t ix = w.x0; ix < w.x1; ++ix) {
      std::int64_t id = f.grid.cell_id(ix, iy);
      Vec x(f.n);
      for (int i = 0; i < f.n; ++i) x[i] = f.at(id, i);
      S += x * x.adjoint();
    }
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  double lmax = es.eigenvalues()[f.n - 1];
  if (!(lmax > 0.0)) throw Error("project first");
  int r = 0;
  for (int i = 0; i < f.n; ++i)
    if (es.eigenvalues()[i] > 1e-12 * lmax) ++r;
  Mat V(f.n, r);
  for (int k = 0; k < r; ++k) V.col(k) = es.eigenvectors().col(f.n - r + k);
  return V;
}

inline GridFunction apply_matrix(const GridFunction& f, const Mat& M) {
  // componentwise x -> Mx at every cell; M is rows x f.n
  GridFunction out(f.grid, int(M.rows()));
  for (std::int64_t id = 0; id < f.grid.cell_count(); ++id) {
    Vec x(f.n);
    for (int i = 0; i < f.n; ++i) x[i] = f.at(id, i);
    Vec y = M * x;
    for (int i = 0; i < M.rows(); ++i) out.at(id, i) = y[i];
  }
  return out;
}

inline Decomposition decompose(const GridFunction& f, const GridFunction& g, const CubeRegion& Q,
                               double p1, double p2, int directions = 0) {
  if (!f.grid.same_as(g.grid) || f.n != g.n) throw Error("shape mismatch");
  Decomposition dec;
  dec.n = f.n;
  dec.p1 = p1;
  dec.p2 = p2;
  dec.region = Q.dilated(double(kLocalDilate));

  Mat V = span_basis(f, dec.region);
  dec.r = int(V.cols());
  dec.V = V;

  GridFunction ft = apply_matrix(f, Mat(V.adjoint()));
  GridFunction gt = apply_matrix(g, Mat(V.adjoint()));

  BodyHandle reduced_body(ft, dec.region, p1);
  JohnResult john = john_ellipsoid(reduced_body, directions);
  dec.A = john.A;
  dec.sandwich = john.sandwich;
  dec.R = john.A.inverse();

  // R is the inverse of the Hermitian John form, so the dual factor is A itself
  GridFunction fr = apply_matrix(ft, dec.R);
  GridFunction gr = apply_matrix(gt, dec.A);
  for (int i = 0; i < dec.r; ++i) {
    GridFunction fc(f.grid, 1), gc(f.grid, 1);
    for (std::int64_t id = 0; id < f.grid.cell_count(); ++id) {
      fc.at(id, 0) = fr.at(id, i);
      gc.at(id, 0) = gr.at(id, i);
    }
    dec.f_coords.push_back(std::move(fc));
    dec.g_coords.push_back(std::move(gc));
  }

  // pairing preservation on the window; outside it the span projection may
  // drop a component of f
  CellWindow w = window_of_region(f.grid, dec.region);
  double scale = 0.0, err = 0.0;
  for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
    for (std::int64_t ix = w.x0; ix < w.x1; ++ix) {
      std::int64_t id = f.grid.cell_id(ix, iy);
      cplx direct(0.0, 0.0), viacoords(0.0, 0.0);
      for (int i = 0; i < f.n; ++i) direct += f.at(id, i) * std::conj(g.at(id, i));
      for (int i = 0; i < dec.r; ++i)
        viacoords +=
            dec.f_coords[std::size_t(i)].at(id, 0) * std::conj(dec.g_coords[std::size_t(i)].at(id, 0));
      scale = std::max(scale, std::abs(direct));
      err = std::max(err, std::abs(direct - viacoords));
    }
  if (err > 1e-12 * (1.0 + scale)) throw Error("pairing preservation violated");
  return dec;
}

struct Th1Report {
  double lhs = 0.0;
  double rhs = 0.0;
  double dot = 0.0;
  double ratio = 0.0;  // lhs / dot
  bool ok = false;
};

// sum_i ||f_i|| ||g_i|| <= r^{3/2} * (minkowski dot of the two bodies), with
// the reduced rank r in the constant and the dot taken on reduced bodies
inline Th1Report th1_check(const Decomposition& dec, const BodyHandle& b1, const BodyHandle& b2,
                           double slack = -1.0) {
  Th1Report rep;
  Kahan lhs;
  for (int i = 0; i < dec.r; ++i)
    lhs.add(lp_average(dec.f_coords[std::size_t(i)], dec.region, dec.p1, 0) *
            lp_average(dec.g_coords[std::size_t(i)], dec.region, dec.p2, 0));
  rep.lhs = lhs.sum();

  bool exact = b1.p == 2.0 && b2.p == 2.0;
  DiskRadius dot = minkowski_dot(b1, b2, exact ? DotMethod::kExact2 : DotMethod::kAlternating);
  rep.dot = dot.c;
  rep.rhs = std::pow(double(dec.r), 1.5) * dot.c;
  rep.ratio = dot.c > 0.0 ? rep.lhs / dot.c : (rep.lhs > 0.0 ? kInf : 0.0);
  if (slack < 0.0) slack = exact ? 1e-9 : 0.05;
  rep.ok = rep.lhs <= rep.rhs * (1.0 + slack) + 1e-300;
  return rep;
}

inline nlohmann::json to_json(const JohnResult& jr) {
  nlohmann::json j;
  int n = int(jr.A.rows());
  j["n"] = n;
  j["sandwich"] = jr.sandwich;
  j["directions"] = jr.directions;
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < n; ++k) row.push_back({jr.A(i, k).real(), jr.A(i, k).imag()});
    rows.push_back(row);
  }
  j["A"] = rows;
  return j;
}

}  // namespace cbdlab
