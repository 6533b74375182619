#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "cbdlab/common.hpp"

namespace cbdlab {

// Uniform grid over a box in R^d, d in {1,2}. N cells per side, N = 2^J.
// Cells are indexed x-fastest: id = ix + N*iy.
struct Grid {
  int d = 1;
  std::array<double, 2> box_origin{0.0, 0.0};
  double box_side = 1.0;
  std::int64_t N = 2;
  int J = 1;

  Grid() = default;
  Grid(int d_, std::array<double, 2> origin, double side, std::int64_t N_)
      : d(d_), box_origin(origin), box_side(side), N(N_) {
    if (d != 1 && d != 2) throw Error("grid dimension must be 1 or 2");
    if (!(box_side > 0.0)) throw Error("box side must be positive");
    if (N < 2 || (N & (N - 1)) != 0) throw Error("cells per side must be a power of two >= 2");
    J = 0;
    for (std::int64_t m = N; m > 1; m >>= 1) ++J;
  }

  std::int64_t cell_count() const { return d == 1 ? N : N * N; }
  double cell_side() const { return box_side / double(N); }
  double cell_volume() const { return d == 1 ? cell_side() : cell_side() * cell_side(); }

  std::int64_t cell_id(std::int64_t ix, std::int64_t iy = 0) const { return ix + N * iy; }
  std::int64_t cell_ix(std::int64_t id) const { return id % N; }
  std::int64_t cell_iy(std::int64_t id) const { return id / N; }

  std::array<double, 2> cell_center(std::int64_t id) const {
    double h = cell_side();
    std::array<double, 2> c{box_origin[0] + (double(cell_ix(id)) + 0.5) * h, 0.0};
    if (d == 2) c[1] = box_origin[1] + (double(cell_iy(id)) + 0.5) * h;
    return c;
  }

  bool same_as(const Grid& o) const {
    return d == o.d && N == o.N && box_side == o.box_side &&
           box_origin[0] == o.box_origin[0] && box_origin[1] == o.box_origin[1];
  }
};

// Axis-aligned cube given by center and side, in box coordinates.
// Realizes Q and its dilates 3Q, 7L, 9L, L-hat. Membership of a cell is
// decided by its center point; for odd dilates of lattice-aligned cubes the
// boundary always lands on cell edges, so the test is unambiguous.
struct CubeRegion {
  std::array<double, 2> center{0.0, 0.0};
  double side = 1.0;

  CubeRegion() = default;
  CubeRegion(std::array<double, 2> c, double s) : center(c), side(s) {
    if (!(s > 0.0)) throw Error("cube side must be positive");
  }

  CubeRegion dilated(double lambda) const { return CubeRegion(center, side * lambda); }
};

// Half-open integer cell window [x0,x1) x [y0,y1), already clipped to the box.
struct CellWindow {
  std::int64_t x0 = 0, x1 = 0, y0 = 0, y1 = 1;
  bool empty() const { return x0 >= x1 || y0 >= y1; }
  std::int64_t count() const { return empty() ? 0 : (x1 - x0) * (y1 - y0); }
};

inline CellWindow window_of_region(const Grid& g, const CubeRegion& Q) {
  double h = g.cell_side();
  CellWindow w;
  auto axis = [&](double o, double c) -> std::pair<std::int64_t, std::int64_t> {
    double lo = (c - Q.side / 2.0 - o) / h - 0.5;
    double hi = (c + Q.side / 2.0 - o) / h - 0.5;
    auto k0 = (std::int64_t)std::ceil(lo);
    auto k1 = (std::int64_t)std::floor(hi) + 1;  // half-open
    k0 = std::max<std::int64_t>(k0, 0);
    k1 = std::min<std::int64_t>(k1, g.N);
    return {k0, std::max(k0, k1)};
  };
  std::tie(w.x0, w.x1) = axis(g.box_origin[0], Q.center[0]);
  if (g.d == 2) {
    std::tie(w.y0, w.y1) = axis(g.box_origin[1], Q.center[1]);
  }
  return w;
}

inline std::vector<std::int64_t> cells_in_region(const Grid& g, const CubeRegion& Q) {
  CellWindow w = window_of_region(g, Q);
  std::vector<std::int64_t> out;
  out.reserve(std::size_t(w.count()));
  for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
    for (std::int64_t ix = w.x0; ix < w.x1; ++ix) out.push_back(g.cell_id(ix, iy));
  return out;
}

// C^n-valued function sampled at cell centers. Storage is component-major:
// values[comp * cell_count + cell].
struct GridFunction {
  Grid grid;
  int n = 1;
  std::vector<cplx> values;

  GridFunction() = default;
  GridFunction(const Grid& g, int n_) : grid(g), n(n_) {
    if (n < 1) throw Error("vector dimension must be >= 1");
    values.assign(std::size_t(n) * std::size_t(g.cell_count()), cplx(0.0, 0.0));
  }

  cplx& at(std::int64_t cell, int comp) {
    return values[std::size_t(comp) * std::size_t(grid.cell_count()) + std::size_t(cell)];
  }
  cplx at(std::int64_t cell, int comp) const {
    return values[std::size_t(comp) * std::size_t(grid.cell_count()) + std::size_t(cell)];
  }

  // pointwise Euclidean norm |f(x)| on C^n
  double abs_at(std::int64_t cell) const {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::norm(at(cell, i));
    return std::sqrt(s);
  }

  bool all_finite() const {
    for (const cplx& v : values)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }
};

namespace detail {

// Shared accumulation core so that lp_average and the maximal sweeps agree
// bitwise on identical windows.
inline double window_lp(const GridFunction& f, const CellWindow& w, double p, int comp) {
  if (w.empty()) throw Error("degenerate region");
  Kahan acc;
  double mx = 0.0;
  for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
    for (std::int64_t ix = w.x0; ix < w.x1; ++ix) {
      std::int64_t id = f.grid.cell_id(ix, iy);
      double a = comp < 0 ? f.abs_at(id) : std::abs(f.at(id, comp));
      if (p == kInf) {
        mx = std::max(mx, a);
      } else {
        acc.add(std::pow(a, p));
      }
    }
  if (p == kInf) return mx;
  return std::pow(acc.sum() / double(w.count()), 1.0 / p);
}

}  // namespace detail

inline double lp_average(const GridFunction& f, const CubeRegion& Q, double p, int comp = -1) {
  if (!(p >= 1.0)) throw Error("integrability exponent must be >= 1");
  CellWindow w = window_of_region(f.grid, Q);
  if (w.empty()) throw Error("degenerate region");
  return detail::window_lp(f, w, p, comp);
}

enum class SweepMode { kAllCubes, kDyadic };

// M_p f at cell centers; sup over the swept cube family containing the point.
inline GridFunction maximal_fn(const GridFunction& f, double p, SweepMode mode) {
  if (!(p >= 1.0)) throw Error("integrability exponent must be >= 1");
  const Grid& g = f.grid;
  GridFunction out(g, 1);
  std::vector<double> best(std::size_t(g.cell_count()), 0.0);

  auto fold_window = [&](const CellWindow& w) {
    if (w.empty()) return;
    double v = detail::window_lp(f, w, p, -1);
    for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
      for (std::int64_t ix = w.x0; ix < w.x1; ++ix) {
        std::size_t id = std::size_t(g.cell_id(ix, iy));
        best[id] = std::max(best[id], v);
      }
  };

  for (int k = 0; k <= g.J; ++k) {
    std::int64_t m = std::int64_t(1) << k;
    if (mode == SweepMode::kDyadic) {
      for (std::int64_t ay = 0; ay < (g.d == 2 ? g.N : m); ay += m)
        for (std::int64_t ax = 0; ax < g.N; ax += m) {
          CellWindow w{ax, ax + m, 0, 1};
          if (g.d == 2) {
            w.y0 = ay;
            w.y1 = ay + m;
          }
          fold_window(w);
        }
    } else {
      // every integer offset whose window meets the box
      std::int64_t alo = 1 - m, ahi = g.N - 1;
      for (std::int64_t ay = (g.d == 2 ? alo : 0); ay <= (g.d == 2 ? ahi : 0); ++ay)
        for (std::int64_t ax = alo; ax <= ahi; ++ax) {
          CellWindow w;
          w.x0 = std::max<std::int64_t>(ax, 0);
          w.x1 = std::min<std::int64_t>(ax + m, g.N);
          if (g.d == 2) {
            w.y0 = std::max<std::int64_t>(ay, 0);
            w.y1 = std::min<std::int64_t>(ay + m, g.N);
          }
          fold_window(w);
        }
    }
  }
  for (std::int64_t id = 0; id < g.cell_count(); ++id) out.at(id, 0) = best[std::size_t(id)];
  return out;
}

inline GridFunction restrict_to(const GridFunction& f, const CubeRegion& S) {
  GridFunction out = f;
  CellWindow w = window_of_region(f.grid, S);
  const Grid& g = f.grid;
  for (std::int64_t id = 0; id < g.cell_count(); ++id) {
    std::int64_t ix = g.cell_ix(id), iy = g.cell_iy(id);
    bool inside = ix >= w.x0 && ix < w.x1 && iy >= w.y0 && iy < w.y1;
    if (!inside)
      for (int i = 0; i < f.n; ++i) out.at(id, i) = cplx(0.0, 0.0);
  }
  return out;
}

inline GridFunction restrict_to(const GridFunction& f, const std::vector<bool>& mask) {
  if (std::int64_t(mask.size()) != f.grid.cell_count()) throw Error("shape mismatch");
  GridFunction out = f;
  for (std::int64_t id = 0; id < f.grid.cell_count(); ++id)
    if (!mask[std::size_t(id)])
      for (int i = 0; i < f.n; ++i) out.at(id, i) = cplx(0.0, 0.0);
  return out;
}

// <f,g> = integral of f . conj(g), extended componentwise.
inline cplx pairing(const GridFunction& f, const GridFunction& g) {
  if (!f.grid.same_as(g.grid) || f.n != g.n) throw Error("shape mismatch");
  KahanC acc;
  for (int i = 0; i < f.n; ++i)
    for (std::int64_t id = 0; id < f.grid.cell_count(); ++id)
      acc.add(f.at(id, i) * std::conj(g.at(id, i)));
  return acc.sum() * f.grid.cell_volume();
}

}  // namespace cbdlab
