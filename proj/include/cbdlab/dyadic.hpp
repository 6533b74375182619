#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbdlab/grid.hpp"

namespace cbdlab {

// Dyadic cube of the ambient lattice. Scale convention: the unit of length is
// the box side, so the whole box is the cube with s = 0 and a grid cell has
// s = -J. side = 2^s box units = 2^{s+J} cells. coords are in units of the
// cube's own side; lattice_shift is a physical offset of the whole lattice and
// must be cell-aligned.
struct DyadicCube {
  int s = 0;
  std::array<std::int64_t, 2> coords{0, 0};
  std::array<double, 2> lattice_shift{0.0, 0.0};
};

namespace detail {

inline std::array<std::int64_t, 2> shift_cells(const Grid& g,
                                               const std::array<double, 2>& shift) {
  std::array<std::int64_t, 2> sc{0, 0};
  double h = g.cell_side();
  for (int ax = 0; ax < g.d; ++ax) {
    double k = shift[ax] / h;
    double r = std::round(k);
    if (std::abs(k - r) > 1e-9) throw Error("unaligned lattice shift");
    sc[ax] = (std::int64_t)r;
  }
  return sc;
}

}  // namespace detail

// closed-open integer interval box in half-cell units, [lo, hi) per axis
struct IBox {
  std::array<std::int64_t, 2> lo{0, 0};
  std::array<std::int64_t, 2> hi{0, 1};
};

inline std::int64_t side_cells(const Grid& g, const DyadicCube& Q) {
  if (Q.s < -g.J || Q.s > 0) throw Error("cube scale outside lattice range");
  return std::int64_t(1) << (Q.s + g.J);
}

// cell index window [x0,x1) x [y0,y1) of the cube, before any box clipping
inline CellWindow cube_cells(const Grid& g, const DyadicCube& Q) {
  std::int64_t m = side_cells(g, Q);
  auto sc = detail::shift_cells(g, Q.lattice_shift);
  CellWindow w;
  w.x0 = Q.coords[0] * m + sc[0];
  w.x1 = w.x0 + m;
  if (g.d == 2) {
    w.y0 = Q.coords[1] * m + sc[1];
    w.y1 = w.y0 + m;
  }
  return w;
}

inline void validate_cube(const Grid& g, const DyadicCube& Q) {
  CellWindow w = cube_cells(g, Q);
  if (w.x0 < 0 || w.x1 > g.N || (g.d == 2 && (w.y0 < 0 || w.y1 > g.N)))
    throw Error("cube outside the ambient box");
}

// lambda-fold dilate of the cube as an exact interval box in half-cell units;
// lambda2 is 2*lambda so odd and even dilates both stay integral
inline IBox dilate_ibox(const Grid& g, const DyadicCube& Q, std::int64_t lambda2) {
  CellWindow w = cube_cells(g, Q);
  std::int64_t m = side_cells(g, Q);
  IBox b;
  // center in half-units: 2*x0 + m per axis; half-extent lambda2*m/2
  b.lo[0] = 2 * w.x0 + m - (lambda2 * m) / 2;
  b.hi[0] = 2 * w.x0 + m + (lambda2 * m) / 2;
  if (g.d == 2) {
    b.lo[1] = 2 * w.y0 + m - (lambda2 * m) / 2;
    b.hi[1] = 2 * w.y0 + m + (lambda2 * m) / 2;
  }
  return b;
}

inline bool iboxes_intersect(const Grid& g, const IBox& a, const IBox& b) {
  for (int ax = 0; ax < g.d; ++ax)
    if (!(a.lo[ax] < b.hi[ax] && b.lo[ax] < a.hi[ax])) return false;
  return true;
}

inline bool ibox_contains(const Grid& g, const IBox& outer, const IBox& inner) {
  for (int ax = 0; ax < g.d; ++ax)
    if (!(outer.lo[ax] <= inner.lo[ax] && inner.hi[ax] <= outer.hi[ax])) return false;
  return true;
}

inline std::vector<DyadicCube> children(const Grid& g, const DyadicCube& Q) {
  if (Q.s <= -g.J) throw Error("no children below cell scale");
  std::vector<DyadicCube> out;
  int count = g.d == 1 ? 2 : 4;
  for (int k = 0; k < count; ++k) {
    DyadicCube c = Q;
    c.s = Q.s - 1;
    c.coords[0] = 2 * Q.coords[0] + (k & 1);
    if (g.d == 2) c.coords[1] = 2 * Q.coords[1] + (k >> 1);
    out.push_back(c);
  }
  return out;
}

inline DyadicCube parent(const Grid& g, const DyadicCube& Q) {
  if (Q.s >= 0) throw Error("parent above top scale");
  DyadicCube p = Q;
  p.s = Q.s + 1;
  p.coords[0] = floor_div(Q.coords[0], 2);
  if (g.d == 2) p.coords[1] = floor_div(Q.coords[1], 2);
  return p;
}

inline CubeRegion region_of(const Grid& g, const DyadicCube& Q) {
  CellWindow w = cube_cells(g, Q);
  std::int64_t m = side_cells(g, Q);
  double h = g.cell_side();
  CubeRegion r;
  r.side = double(m) * h;
  r.center[0] = g.box_origin[0] + (double(w.x0) + double(m) / 2.0) * h;
  r.center[1] = g.d == 2 ? g.box_origin[1] + (double(w.y0) + double(m) / 2.0) * h : 0.0;
  return r;
}

inline CubeRegion dilate(const Grid& g, const DyadicCube& Q, double lambda) {
  if (!(lambda > 0.0)) throw Error("dilation factor must be positive");
  return region_of(g, Q).dilated(lambda);
}

struct StoppingCollection {
  DyadicCube top;
  std::vector<DyadicCube> members;
};

struct StoppingReport {
  bool ok = true;                 // every axiom, nesting included
  bool ok_excluding_nesting = true;
  std::vector<std::pair<int, int>> disjoint_violations;
  std::vector<int> containment_violations;
  std::vector<std::pair<int, int>> separation_violations;
  std::vector<int> nesting_violations;
};

// Exhaustive exact-arithmetic check of the stopping collection axioms:
// members pairwise disjoint, contained in 3*top, the two-scale separation
// property, and the nesting of 9L inside the shadow for members meeting 2*top.
inline StoppingReport verify_stopping(const Grid& g, const StoppingCollection& c) {
  StoppingReport rep;
  const auto& ms = c.members;
  validate_cube(g, c.top);
  for (const auto& L : ms) validate_cube(g, L);

  std::vector<IBox> box1(ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) box1[i] = dilate_ibox(g, ms[i], 2);

  for (std::size_t i = 0; i < ms.size(); ++i)
    for (std::size_t j = i + 1; j < ms.size(); ++j)
      if (iboxes_intersect(g, box1[i], box1[j]))
        rep.disjoint_violations.emplace_back(int(i), int(j));

  IBox top3 = dilate_ibox(g, c.top, 2 * kLocalDilate);
  for (std::size_t i = 0; i < ms.size(); ++i)
    if (!ibox_contains(g, top3, box1[i])) rep.containment_violations.push_back(int(i));

  for (std::size_t i = 0; i < ms.size(); ++i)
    for (std::size_t j = 0; j < ms.size(); ++j) {
      if (i >= j) continue;
      if (std::abs(ms[i].s - ms[j].s) < kScaleSeparation) continue;
      IBox a = dilate_ibox(g, ms[i], 2 * kSeparationDilate);
      IBox b = dilate_ibox(g, ms[j], 2 * kSeparationDilate);
      if (iboxes_intersect(g, a, b)) rep.separation_violations.emplace_back(int(i), int(j));
    }

  // nesting: for members whose 3L meets 2*top, 9L must sit inside the shadow
  std::vector<bool> sh(std::size_t(g.cell_count()), false);
  for (const auto& L : ms) {
    CellWindow w = cube_cells(g, L);
    for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
      for (std::int64_t ix = w.x0; ix < w.x1; ++ix) sh[std::size_t(g.cell_id(ix, iy))] = true;
  }
  IBox top2 = dilate_ibox(g, c.top, 4);
  IBox full;
  full.lo = {0, 0};
  full.hi = {2 * g.N, g.d == 2 ? 2 * g.N : 1};
  for (std::size_t i = 0; i < ms.size(); ++i) {
    IBox l3 = dilate_ibox(g, ms[i], 2 * kLocalDilate);
    if (!iboxes_intersect(g, l3, top2)) continue;
    IBox l9 = dilate_ibox(g, ms[i], 2 * kNestingDilate);
    bool inside = ibox_contains(g, full, l9);
    if (inside) {
      // every cell meeting 9L with positive overlap must be a shadow cell
      std::array<std::int64_t, 2> k0{0, 0}, k1{0, 1};
      for (int ax = 0; ax < g.d; ++ax) {
        k0[ax] = floor_div(l9.lo[ax], 2);
        if (2 * k0[ax] + 2 <= l9.lo[ax]) ++k0[ax];
        k1[ax] = floor_div(l9.hi[ax] - 1, 2) + 1;
      }
      for (std::int64_t ky = k0[1]; ky < (g.d == 2 ? k1[1] : 1) && inside; ++ky)
        for (std::int64_t kx = k0[0]; kx < k1[0] && inside; ++kx)
          inside = sh[std::size_t(g.cell_id(kx, ky))];
    }
    if (!inside) rep.nesting_violations.push_back(int(i));
  }

  rep.ok_excluding_nesting = rep.disjoint_violations.empty() &&
                             rep.containment_violations.empty() &&
                             rep.separation_violations.empty();
  rep.ok = rep.ok_excluding_nesting && rep.nesting_violations.empty();
  return rep;
}

inline std::vector<bool> shadow(const Grid& g, const StoppingCollection& c) {
  std::vector<bool> sh(std::size_t(g.cell_count()), false);
  for (const auto& L : c.members) {
    CellWindow w = cube_cells(g, L);
    for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
      for (std::int64_t ix = w.x0; ix < w.x1; ++ix) sh[std::size_t(g.cell_id(ix, iy))] = true;
  }
  return sh;
}

// Maximal lattice cubes L whose dilate-fold dilation is geometrically inside
// the region covered by the mask. Maximal: no satisfying strict ancestor.
inline std::vector<DyadicCube> maximal_cubes(const Grid& g, const std::vector<bool>& mask,
                                             std::array<double, 2> lattice_shift = {0.0, 0.0},
                                             int dilate_factor = kNestingDilate) {
  if (std::int64_t(mask.size()) != g.cell_count()) throw Error("shape mismatch");
  auto sc = detail::shift_cells(g, lattice_shift);
  IBox full;
  full.lo = {0, 0};
  full.hi = {2 * g.N, g.d == 2 ? 2 * g.N : 1};

  auto satisfies = [&](const DyadicCube& L) {
    IBox l9 = dilate_ibox(g, L, 2 * std::int64_t(dilate_factor));
    if (!ibox_contains(g, full, l9)) return false;
    std::array<std::int64_t, 2> k0{0, 0}, k1{0, 1};
    for (int ax = 0; ax < g.d; ++ax) {
      k0[ax] = floor_div(l9.lo[ax], 2);
      if (2 * k0[ax] + 2 <= l9.lo[ax]) ++k0[ax];
      k1[ax] = floor_div(l9.hi[ax] - 1, 2) + 1;
    }
    for (std::int64_t ky = k0[1]; ky < (g.d == 2 ? k1[1] : 1); ++ky)
      for (std::int64_t kx = k0[0]; kx < k1[0]; ++kx)
        if (!mask[std::size_t(g.cell_id(kx, ky))]) return false;
    return true;
  };

  // enumerate all in-box lattice cubes per scale
  std::vector<DyadicCube> all;
  for (int s = -g.J; s <= 0; ++s) {
    std::int64_t m = std::int64_t(1) << (s + g.J);
    // coords c with 0 <= c*m + shift and (c+1)*m + shift <= N
    auto crange = [&](std::int64_t sh_) {
      std::int64_t clo = ceil_div(-sh_, m);
      std::int64_t chi = floor_div(g.N - sh_, m) - 1;
      return std::pair<std::int64_t, std::int64_t>(clo, chi);
    };
    auto [xlo, xhi] = crange(sc[0]);
    auto [ylo, yhi] = g.d == 2 ? crange(sc[1]) : std::pair<std::int64_t, std::int64_t>(0, 0);
    for (std::int64_t cy = ylo; cy <= yhi; ++cy)
      for (std::int64_t cx = xlo; cx <= xhi; ++cx) {
        DyadicCube L;
        L.s = s;
        L.coords = {cx, cy};
        L.lattice_shift = lattice_shift;
        if (satisfies(L)) all.push_back(L);
      }
  }
  // keep cubes with no satisfying strict ancestor
  auto has_satisfying_ancestor = [&](DyadicCube L) {
    while (L.s < 0) {
      bool in_box = true;
      DyadicCube p = parent(g, L);
      try {
        validate_cube(g, p);
      } catch (const Error&) {
        in_box = false;
      }
      if (!in_box) return false;
      if (satisfies(p)) return true;
      L = p;
    }
    return false;
  };
  std::vector<DyadicCube> out;
  for (const auto& L : all)
    if (!has_satisfying_ancestor(L)) out.push_back(L);
  return out;
}

// ---- sparse verification ----------------------------------------------------

struct SparseVerifyResult {
  bool ok = false;
  double greedy_eta = 0.0;
  double best_eta = 0.0;  // exact value when the exact solver ran, else greedy
  bool exact_ran = false;
  bool flow_ran = false;  // unrestricted assignment decided the requested eta
  std::vector<std::vector<std::int64_t>> witness;  // cells per cube
};

namespace detail {

// Dinic max-flow on a small graph; capacities are cell counts.
struct Dinic {
  struct Edge {
    int to;
    std::int64_t cap;
    int rev;
  };
  std::vector<std::vector<Edge>> adj;
  std::vector<int> level, iter;

  explicit Dinic(int n) : adj(n) {}

  void add_edge(int a, int b, std::int64_t cap) {
    adj[a].push_back({b, cap, int(adj[b].size())});
    adj[b].push_back({a, 0, int(adj[a].size()) - 1});
  }

  bool bfs(int s, int t) {
    level.assign(adj.size(), -1);
    std::vector<int> q{s};
    level[s] = 0;
    for (std::size_t qi = 0; qi < q.size(); ++qi) {
      int v = q[qi];
      for (const Edge& e : adj[v])
        if (e.cap > 0 && level[e.to] < 0) {
          level[e.to] = level[v] + 1;
          q.push_back(e.to);
        }
    }
    return level[t] >= 0;
  }

  std::int64_t dfs(int v, int t, std::int64_t f) {
    if (v == t) return f;
    for (int& i = iter[v]; i < int(adj[v].size()); ++i) {
      Edge& e = adj[v][i];
      if (e.cap > 0 && level[v] < level[e.to]) {
        std::int64_t d = dfs(e.to, t, std::min(f, e.cap));
        if (d > 0) {
          e.cap -= d;
          adj[e.to][e.rev].cap += d;
          return d;
        }
      }
    }
    return 0;
  }

  std::int64_t max_flow(int s, int t) {
    std::int64_t flow = 0;
    while (bfs(s, t)) {
      iter.assign(adj.size(), 0);
      std::int64_t f;
      while ((f = dfs(s, t, std::int64_t(1) << 62)) > 0) flow += f;
    }
    return flow;
  }
};

inline CellWindow aligned_window(const Grid& g, const CubeRegion& Q) {
  double h = g.cell_side();
  for (int ax = 0; ax < g.d; ++ax)
    for (double edge : {Q.center[ax] - Q.side / 2.0, Q.center[ax] + Q.side / 2.0}) {
      double k = (edge - g.box_origin[ax]) / h;
      if (std::abs(k - std::round(k)) > 1e-9) throw Error("unaligned cube");
    }
  return window_of_region(g, Q);
}

}  // namespace detail

// Witness search runs in up to three passes. Greedy and the exact solver
// share the recursion's own witness shape: the witness of Q may only use
// cells of Q that lie in no strictly smaller listed cube (E(Q) = Q minus the
// union of smaller selected cubes). Greedy splits equal-size overlaps by
// list order, the exact solver optimizes that split by max-flow, and on
// laminar families the two coincide (greedy_eta, best_eta). Overlapping
// dilated collections can defeat that shape outright, a cube's region
// blanketed by sibling dilates while disjoint witnesses still exist inside
// the undilated cores; so when both restricted passes fall short of the
// requested eta, an unrestricted max-flow assignment (any cell may serve any
// cube covering it) decides cell-exact feasibility at that eta. ok reports
// the final verdict, witness the realized assignment; flow_ran marks the
// unrestricted pass, and the two eta fields keep their restricted meaning.
inline SparseVerifyResult verify_sparse(const Grid& g, const std::vector<CubeRegion>& cubes,
                                        double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw Error("eta must lie in (0,1]");
  SparseVerifyResult res;
  const int C = int(cubes.size());
  if (C == 0) {
    res.ok = true;
    res.greedy_eta = res.best_eta = 1.0;
    return res;
  }

  std::vector<CellWindow> wins(C);
  std::vector<std::int64_t> count(C);
  for (int i = 0; i < C; ++i) {
    wins[i] = detail::aligned_window(g, cubes[i]);
    count[i] = wins[i].count();
    if (count[i] == 0) throw Error("degenerate region");
  }

  auto in_win = [](const CellWindow& w, std::int64_t ix, std::int64_t iy) {
    return ix >= w.x0 && ix < w.x1 && iy >= w.y0 && iy < w.y1;
  };

  // eligibility: cell -> cubes containing it and not blocked by a strictly
  // smaller listed cube containing it
  std::vector<std::vector<int>> eligible_cells(C);  // per cube, cell ids
  std::vector<std::int64_t> cell_ids;
  std::vector<std::vector<int>> cell_elig;  // aligned with cell_ids
  {
    std::vector<int> touching;
    for (std::int64_t id = 0; id < g.cell_count(); ++id) {
      std::int64_t ix = g.cell_ix(id), iy = g.cell_iy(id);
      touching.clear();
      std::int64_t smallest = std::int64_t(1) << 62;
      for (int i = 0; i < C; ++i)
        if (in_win(wins[i], ix, iy)) {
          touching.push_back(i);
          smallest = std::min(smallest, count[i]);
        }
      if (touching.empty()) continue;
      std::vector<int> elig;
      for (int i : touching)
        if (count[i] == smallest) elig.push_back(i);
      cell_ids.push_back(id);
      cell_elig.push_back(elig);
      for (int i : elig) eligible_cells[std::size_t(i)].push_back(int(cell_ids.size()) - 1);
    }
  }

  // greedy: each cell goes to its first eligible cube in list order
  std::vector<std::vector<std::int64_t>> greedy_witness(C);
  for (std::size_t k = 0; k < cell_ids.size(); ++k)
    greedy_witness[std::size_t(cell_elig[k][0])].push_back(cell_ids[k]);
  double greta = 1.0;
  for (int i = 0; i < C; ++i)
    greta = std::min(greta, double(greedy_witness[std::size_t(i)].size()) / double(count[i]));
  res.greedy_eta = greta;

  if (greta >= eta) {
    res.best_eta = greta;
    res.witness = std::move(greedy_witness);
    res.ok = true;
    return res;
  }

  struct Group {
    std::vector<int> elig;
    std::vector<std::int64_t> ids;
  };
  // max-flow feasibility for per-cube cell demands, cells grouped by signature
  auto flow_feasible = [&](const std::vector<Group>& gs, const std::vector<std::int64_t>& dem,
                           std::vector<std::vector<std::int64_t>>* wit) {
    const int NG = int(gs.size());
    detail::Dinic net(NG + C + 2);
    int src = NG + C, snk = NG + C + 1;
    std::int64_t total = 0;
    for (int i = 0; i < C; ++i) {
      net.add_edge(NG + i, snk, dem[std::size_t(i)]);
      total += dem[std::size_t(i)];
    }
    for (int gi = 0; gi < NG; ++gi) {
      net.add_edge(src, gi, std::int64_t(gs[std::size_t(gi)].ids.size()));
      for (int i : gs[std::size_t(gi)].elig) net.add_edge(gi, NG + i, std::int64_t(1) << 60);
    }
    if (net.max_flow(src, snk) != total) return false;
    if (wit) {
      wit->assign(std::size_t(C), {});
      for (int gi = 0; gi < NG; ++gi) {
        std::size_t used = 0;
        for (const auto& e : net.adj[std::size_t(gi)]) {
          if (e.to < NG || e.to >= NG + C) continue;
          std::int64_t sent = net.adj[std::size_t(e.to)][std::size_t(e.rev)].cap;
          for (std::int64_t t = 0; t < sent; ++t)
            (*wit)[std::size_t(e.to - NG)].push_back(gs[std::size_t(gi)].ids[used++]);
        }
      }
    }
    return true;
  };

  res.best_eta = greta;
  res.witness = std::move(greedy_witness);

  if (C <= 12) {
    // exact restricted pass: binary search over candidate etas k/c_i
    res.exact_ran = true;
    std::vector<Group> groups;
    {
      std::vector<std::pair<std::vector<int>, std::size_t>> keyed;
      for (std::size_t k = 0; k < cell_ids.size(); ++k) keyed.push_back({cell_elig[k], k});
      std::sort(keyed.begin(), keyed.end());
      for (auto& [key, k] : keyed) {
        if (groups.empty() || groups.back().elig != key) groups.push_back({key, {}});
        groups.back().ids.push_back(cell_ids[k]);
      }
    }

    // feasibility for eta = num/den, demands ceil(num*c_i/den)
    auto feasible = [&](std::int64_t num, std::int64_t den,
                        std::vector<std::vector<std::int64_t>>* wit) {
      std::vector<std::int64_t> dem(std::size_t(C), 0);
      for (int i = 0; i < C; ++i) dem[std::size_t(i)] = ceil_div(num * count[i], den);
      return flow_feasible(groups, dem, wit);
    };

    // candidate eta values
    std::vector<std::pair<std::int64_t, std::int64_t>> cand;  // num/den reduced
    for (int i = 0; i < C; ++i)
      for (std::int64_t k = 1; k <= count[i]; ++k) {
        std::int64_t gcd = std::gcd(k, count[i]);
        cand.emplace_back(k / gcd, count[i] / gcd);
      }
    std::sort(cand.begin(), cand.end(), [](auto a, auto b) {
      return a.first * b.second < b.first * a.second;
    });
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

    int lo = -1, hi = int(cand.size());  // cand[<=lo] feasible
    // eta=0 trivially feasible; find the largest feasible candidate
    while (hi - lo > 1) {
      int mid = (lo + hi) / 2;
      if (feasible(cand[std::size_t(mid)].first, cand[std::size_t(mid)].second, nullptr))
        lo = mid;
      else
        hi = mid;
    }
    if (lo >= 0) {
      std::vector<std::vector<std::int64_t>> wit;
      feasible(cand[std::size_t(lo)].first, cand[std::size_t(lo)].second, &wit);
      res.best_eta = double(cand[std::size_t(lo)].first) / double(cand[std::size_t(lo)].second);
      res.witness = std::move(wit);
      res.ok = res.best_eta >= eta - 1e-12;
      if (res.ok) return res;
    }
  }

  // both restricted shapes fell short; decide the requested eta exactly with
  // an unrestricted assignment, any cell serving any cube that covers it
  std::vector<Group> fgroups;
  {
    std::vector<std::pair<std::vector<int>, std::int64_t>> keyed;
    for (std::int64_t id = 0; id < g.cell_count(); ++id) {
      std::int64_t ix = g.cell_ix(id), iy = g.cell_iy(id);
      std::vector<int> cover;
      for (int i = 0; i < C; ++i)
        if (in_win(wins[i], ix, iy)) cover.push_back(i);
      if (!cover.empty()) keyed.push_back({std::move(cover), id});
    }
    std::sort(keyed.begin(), keyed.end());
    for (auto& [key, id] : keyed) {
      if (fgroups.empty() || fgroups.back().elig != key) fgroups.push_back({key, {}});
      fgroups.back().ids.push_back(id);
    }
  }
  res.flow_ran = true;
  std::vector<std::int64_t> dem(std::size_t(C), 0);
  for (int i = 0; i < C; ++i)
    dem[std::size_t(i)] = std::int64_t(std::ceil(eta * double(count[i]) - 1e-9));
  std::vector<std::vector<std::int64_t>> wit;
  if (flow_feasible(fgroups, dem, &wit)) {
    res.ok = true;
    res.witness = std::move(wit);
  }
  return res;
}

// ---- serialization ----------------------------------------------------------

inline nlohmann::json to_json(const DyadicCube& Q, int d) {
  nlohmann::json j;
  j["s"] = Q.s;
  j["coords"] = d == 1 ? nlohmann::json::array({Q.coords[0]})
                       : nlohmann::json::array({Q.coords[0], Q.coords[1]});
  return j;
}

inline DyadicCube cube_from_json(const nlohmann::json& j, int d,
                                 std::array<double, 2> lattice_shift = {0.0, 0.0}) {
  DyadicCube Q;
  Q.s = j.at("s").get<int>();
  Q.coords[0] = j.at("coords").at(0).get<std::int64_t>();
  if (d == 2) Q.coords[1] = j.at("coords").at(1).get<std::int64_t>();
  Q.lattice_shift = lattice_shift;
  return Q;
}

inline nlohmann::json to_json(const Grid& g, const StoppingCollection& c) {
  nlohmann::json j;
  j["top"] = to_json(c.top, g.d);
  j["members"] = nlohmann::json::array();
  for (const auto& L : c.members) j["members"].push_back(to_json(L, g.d));
  j["lattice_shift"] = g.d == 1
                           ? nlohmann::json::array({c.top.lattice_shift[0]})
                           : nlohmann::json::array({c.top.lattice_shift[0], c.top.lattice_shift[1]});
  return j;
}

inline nlohmann::json to_json(const StoppingReport& r) {
  nlohmann::json j;
  j["ok"] = r.ok;
  j["ok_excluding_nesting"] = r.ok_excluding_nesting;
  auto pairs = [](const std::vector<std::pair<int, int>>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (auto [i, k] : v) a.push_back({i, k});
    return a;
  };
  j["violations"]["disjoint"] = pairs(r.disjoint_violations);
  j["violations"]["containment"] = r.containment_violations;
  j["violations"]["separation"] = pairs(r.separation_violations);
  j["violations"]["nesting"] = r.nesting_violations;
  return j;
}

}  // namespace cbdlab
