#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

#include "cbdlab/dyadic.hpp"

namespace cbdlab {

// Rough kernels and their smooth annular slices. All lengths are read in
// box-side units: the top dyadic cube has scale 0 and a grid cell scale -J,
// matching the lattice convention.

// ---- angular part --------------------------------------------------------------

struct OmegaSpec {
  int d = 1;
  // d=1: two values at the directions +1, -1; d=2: M samples at angles 2*pi*j/M
  std::vector<cplx> values;
  double q = 2.0;  // declared integrability exponent of the sphere samples

  OmegaSpec() = default;
  OmegaSpec(int d_, std::vector<cplx> v, double q_) : d(d_), values(std::move(v)), q(q_) {
    if (d != 1 && d != 2) throw Error("dimension must be 1 or 2");
    if (d == 1 && values.size() != 2) throw Error("two directional samples required");
    if (d == 2 && values.empty()) throw Error("empty angular sample set");
    if (!(q > 1.0)) throw Error("integrability exponent must be > 1");
    cplx mean(0.0, 0.0);
    for (const cplx& z : values) mean += z;
    mean /= double(values.size());
    for (cplx& z : values) z -= mean;  // zero average against the uniform quadrature
  }

  int M() const { return int(values.size()); }

  // nearest-sample lookup in the direction of z, |z| > 0. Ties round via
  // floor(.+1/2), which commutes with half-turns for even M, so the
  // reflected kernel pairs exactly with the adjoint.
  cplx at(double zx, double zy) const {
    if (d == 1) return zx > 0.0 ? values[0] : values[1];
    double a = std::atan2(zy, zx);
    double step = 2.0 * 3.14159265358979323846 / double(M());
    long j = long(std::floor(a / step + 0.5)) % long(M());
    if (j < 0) j += M();
    return values[std::size_t(j)];
  }
};

inline OmegaSpec omega_sign(double q = 2.0) { return OmegaSpec(1, {cplx(1.0), cplx(-1.0)}, q); }

// conj(Omega(-x)); exact index reflection when M is even, nearest resampling
// otherwise
inline OmegaSpec omega_star(const OmegaSpec& o) {
  if (o.d == 1) return OmegaSpec(1, {std::conj(o.values[1]), std::conj(o.values[0])}, o.q);
  std::vector<cplx> v(o.values.size());
  double step = 2.0 * 3.14159265358979323846 / double(o.M());
  for (int j = 0; j < o.M(); ++j) {
    if (o.M() % 2 == 0) {
      v[std::size_t(j)] = std::conj(o.values[std::size_t((j + o.M() / 2) % o.M())]);
    } else {
      double a = double(j) * step + 3.14159265358979323846;
      v[std::size_t(j)] = std::conj(o.at(std::cos(a), std::sin(a)));
    }
  }
  return OmegaSpec(2, std::move(v), o.q);
}

// ---- radial cutoff -------------------------------------------------------------

namespace detail {

inline double smooth_h(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }

// smooth step: 0 for t <= 0, 1 for t >= 1
inline double smooth_step(double t) {
  double a = smooth_h(t), b = smooth_h(1.0 - t);
  return a / (a + b);
}

}  // namespace detail

// 1 on [0,1/2], 0 on [1,inf), smooth in between
inline double psi_cutoff(double r) {
  if (r <= 0.5) return 1.0;
  if (r >= 1.0) return 0.0;
  return detail::smooth_step(2.0 - 2.0 * r);
}

// radial profile of phi(z) = |z|^{-d} (psi(|z|) - psi(2|z|)), supported in (1/4, 1)
inline double phi_radial(double r, int d) {
  if (r <= 0.25 || r >= 1.0) return 0.0;
  double num = psi_cutoff(r) - psi_cutoff(2.0 * r);
  return num / (d == 1 ? r : r * r);
}

// ---- kernel slices -------------------------------------------------------------

struct KernelSpec {
  OmegaSpec omega;
  int mu = 0, nu = 0;  // scales (mu, nu] enter the truncated form
};

// K_s(x,y) = Omega((x-y)/|x-y|) 2^{-sd} phi(2^{-s}(x-y))
inline cplx kernel_value(const KernelSpec& spec, std::array<double, 2> x, std::array<double, 2> y,
                         int s) {
  double zx = x[0] - y[0], zy = x[1] - y[1];
  double r = std::sqrt(zx * zx + zy * zy);
  if (r == 0.0) return cplx(0.0, 0.0);
  double w = std::ldexp(r, -s);
  double rad = phi_radial(w, spec.omega.d);
  if (rad == 0.0) return cplx(0.0, 0.0);
  return spec.omega.at(zx, zy) * std::ldexp(rad, -s * spec.omega.d);
}

namespace detail {

struct KernelOffset {
  std::int64_t dx = 0, dy = 0;
  cplx val;
};

// all cell offsets with a nonzero kernel value at scale s, value included
inline std::vector<KernelOffset> scale_table(const Grid& g, const KernelSpec& spec, int s) {
  std::vector<KernelOffset> out;
  double h = 1.0 / double(g.N);
  std::int64_t R = std::min<std::int64_t>(
      g.N - 1, std::int64_t(std::ceil(std::ldexp(1.0, s) * double(g.N))) + 1);
  std::int64_t Ry = g.d == 2 ? R : 0;
  for (std::int64_t dy = -Ry; dy <= Ry; ++dy)
    for (std::int64_t dx = -R; dx <= R; ++dx) {
      double zx = double(dx) * h, zy = double(dy) * h;
      double r = std::sqrt(zx * zx + zy * zy);
      if (r == 0.0) continue;
      double w = std::ldexp(r, -s);
      double rad = phi_radial(w, g.d);
      if (rad == 0.0) continue;
      out.push_back({dx, dy, spec.omega.at(zx, zy) * std::ldexp(rad, -s * g.d)});
    }
  return out;
}

// sum_{lo < s <= hi} sum K_s(x,y) <h1(y), h2(x)> over masked cells, cell
// measure included; null masks mean the whole grid
inline cplx form_sum(const KernelSpec& spec, const GridFunction& h1, const GridFunction& h2,
                     const std::vector<std::uint8_t>* m1, const std::vector<std::uint8_t>* m2,
                     int lo, int hi) {
  const Grid& g = h1.grid;
  std::vector<std::int64_t> xs;
  for (std::int64_t id = 0; id < g.cell_count(); ++id)
    if (!m2 || (*m2)[std::size_t(id)]) xs.push_back(id);
  KahanC acc;
  for (int s = lo + 1; s <= hi; ++s) {
    auto table = scale_table(g, spec, s);
    if (table.empty()) continue;
    for (const KernelOffset& off : table)
      for (std::int64_t x : xs) {
        std::int64_t xi = x % g.N, yi = g.d == 2 ? x / g.N : 0;
        std::int64_t ui = xi - off.dx, vi = yi - off.dy;
        if (ui < 0 || ui >= g.N || (g.d == 2 && (vi < 0 || vi >= g.N))) continue;
        std::int64_t y = g.cell_id(ui, vi);
        if (m1 && !(*m1)[std::size_t(y)]) continue;
        cplx dot(0.0, 0.0);
        for (int i = 0; i < h1.n; ++i) dot += h1.at(y, i) * std::conj(h2.at(x, i));
        acc.add(off.val * dot);
      }
  }
  double vol = std::pow(1.0 / double(g.N), g.d);
  return acc.sum() * vol * vol;
}

inline std::vector<std::uint8_t> cube_mask(const Grid& g, const DyadicCube& Q) {
  CellWindow w = cube_cells(g, Q);
  std::vector<std::uint8_t> m(std::size_t(g.cell_count()), 0);
  for (std::int64_t iy = std::max<std::int64_t>(0, w.y0); iy < std::min(g.d == 2 ? g.N : 1, w.y1);
       ++iy)
    for (std::int64_t ix = std::max<std::int64_t>(0, w.x0); ix < std::min(g.N, w.x1); ++ix)
      m[std::size_t(g.cell_id(ix, iy))] = 1;
  return m;
}

inline std::vector<std::uint8_t> dilated_mask(const Grid& g, const DyadicCube& Q, int lambda) {
  IBox b = dilate_ibox(g, Q, 2 * lambda);  // half-cell units, edges cell-aligned here
  std::vector<std::uint8_t> m(std::size_t(g.cell_count()), 0);
  std::int64_t x0 = std::max<std::int64_t>(0, b.lo[0] / 2), x1 = std::min(g.N, b.hi[0] / 2);
  std::int64_t y0 = 0, y1 = 1;
  if (g.d == 2) {
    y0 = std::max<std::int64_t>(0, b.lo[1] / 2);
    y1 = std::min(g.N, b.hi[1] / 2);
  }
  for (std::int64_t iy = y0; iy < y1; ++iy)
    for (std::int64_t ix = x0; ix < x1; ++ix) m[std::size_t(g.cell_id(ix, iy))] = 1;
  return m;
}

}  // namespace detail

// ---- truncated forms -----------------------------------------------------------

struct FormSpec {
  KernelSpec kernel;
  std::optional<DyadicCube> cube;              // localized form over cube
  std::optional<StoppingCollection> stopping;  // stopping form; top is the cube
};

// localized: Lambda_{Q} = Lambda_mu^{min(s_Q, nu)}(h1 1_Q, h2 1_3Q)
inline cplx localized_form(const KernelSpec& k, const DyadicCube& Q, const GridFunction& h1,
                           const GridFunction& h2) {
  const Grid& g = h1.grid;
  validate_cube(g, Q);
  auto m1 = detail::cube_mask(g, Q);
  auto m2 = detail::dilated_mask(g, Q, kLocalDilate);
  return detail::form_sum(k, h1, h2, &m1, &m2, k.mu, std::min(Q.s, k.nu));
}

inline cplx form_eval(const FormSpec& spec, const GridFunction& h1, const GridFunction& h2) {
  if (!h1.grid.same_as(h2.grid) || h1.n != h2.n) throw Error("shape mismatch");
  if (spec.stopping) {
    const StoppingCollection& c = *spec.stopping;
    cplx out = localized_form(spec.kernel, c.top, h1, h2);
    IBox topbox = dilate_ibox(h1.grid, c.top, 2);
    for (const DyadicCube& L : c.members) {
      IBox lb = dilate_ibox(h1.grid, L, 2);
      if (L.s < c.top.s && ibox_contains(h1.grid, topbox, lb))
        out -= localized_form(spec.kernel, L, h1, h2);
    }
    return out;
  }
  if (spec.cube) return localized_form(spec.kernel, *spec.cube, h1, h2);
  return detail::form_sum(spec.kernel, h1, h2, nullptr, nullptr, spec.kernel.mu, spec.kernel.nu);
}

// ---- the shifted representation of the stopping form ---------------------------

struct Rep1Report {
  cplx lhs, rhs;
  double gap = 0.0;
};

// lhs: the stopping form applied to b = sum of the per-cube pieces.
// rhs: sum_{j>=1} of the unlocalized forms pairing the scale-(s-j) layer of b
// with h at scale s. Pieces must be supported on their own cubes.
inline Rep1Report rep1_check(const FormSpec& spec, const std::vector<GridFunction>& pieces,
                             const GridFunction& h) {
  if (!spec.stopping) throw Error("stopping collection required");
  const StoppingCollection& c = *spec.stopping;
  if (pieces.size() != c.members.size()) throw Error("b not decomposable over the stopping collection");
  const Grid& g = h.grid;

  GridFunction b(g, h.n);
  std::map<int, GridFunction> layer;  // scale -> sum of pieces at that scale
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const GridFunction& p = pieces[k];
    if (!p.grid.same_as(g) || p.n != h.n) throw Error("shape mismatch");
    auto inside = detail::cube_mask(g, c.members[k]);
    for (std::int64_t id = 0; id < g.cell_count(); ++id)
      for (int i = 0; i < p.n; ++i) {
        if (p.at(id, i) != cplx(0.0, 0.0) && !inside[std::size_t(id)])
          throw Error("b not decomposable over the stopping collection");
      }
    auto it = layer.find(c.members[k].s);
    if (it == layer.end()) it = layer.emplace(c.members[k].s, GridFunction(g, h.n)).first;
    for (std::int64_t id = 0; id < g.cell_count(); ++id)
      for (int i = 0; i < p.n; ++i) {
        b.at(id, i) += p.at(id, i);
        it->second.at(id, i) += p.at(id, i);
      }
  }

  Rep1Report rep;
  rep.lhs = form_eval(spec, b, h);

  KahanC acc;
  int cap = std::min(c.top.s, spec.kernel.nu);
  for (const auto& [sigma, bs] : layer) {
    int lo = std::max(spec.kernel.mu, sigma);
    if (lo < cap) acc.add(detail::form_sum(spec.kernel, bs, h, nullptr, nullptr, lo, cap));
  }
  rep.rhs = acc.sum();
  rep.gap = std::abs(rep.lhs - rep.rhs);
  return rep;
}

// ---- the operator, its maximal truncation, commutators -------------------------

inline GridFunction t_omega(const KernelSpec& spec, const GridFunction& f) {
  const Grid& g = f.grid;
  GridFunction out(g, f.n);
  double vol = std::pow(1.0 / double(g.N), g.d);
  for (int s = spec.mu + 1; s <= spec.nu; ++s) {
    auto table = detail::scale_table(g, spec, s);
    for (const detail::KernelOffset& off : table)
      for (std::int64_t x = 0; x < g.cell_count(); ++x) {
        std::int64_t xi = x % g.N, yi = g.d == 2 ? x / g.N : 0;
        std::int64_t ui = xi - off.dx, vi = yi - off.dy;
        if (ui < 0 || ui >= g.N || (g.d == 2 && (vi < 0 || vi >= g.N))) continue;
        std::int64_t y = g.cell_id(ui, vi);
        for (int i = 0; i < f.n; ++i) out.at(x, i) += off.val * f.at(y, i) * vol;
      }
  }
  return out;
}

// max over lower cutoffs sigma in [mu, nu) of |sum_{sigma < s <= nu} K_s * f|
inline GridFunction max_truncation(const KernelSpec& spec, const GridFunction& f) {
  const Grid& g = f.grid;
  GridFunction acc(g, f.n), best(g, 1);
  double vol = std::pow(1.0 / double(g.N), g.d);
  for (int s = spec.nu; s > spec.mu; --s) {
    auto table = detail::scale_table(g, spec, s);
    for (const detail::KernelOffset& off : table)
      for (std::int64_t x = 0; x < g.cell_count(); ++x) {
        std::int64_t xi = x % g.N, yi = g.d == 2 ? x / g.N : 0;
        std::int64_t ui = xi - off.dx, vi = yi - off.dy;
        if (ui < 0 || ui >= g.N || (g.d == 2 && (vi < 0 || vi >= g.N))) continue;
        std::int64_t y = g.cell_id(ui, vi);
        for (int i = 0; i < f.n; ++i) acc.at(x, i) += off.val * f.at(y, i) * vol;
      }
    for (std::int64_t x = 0; x < g.cell_count(); ++x) {
      double mag = acc.abs_at(x);
      if (mag > best.at(x, 0).real()) best.at(x, 0) = mag;
    }
  }
  return best;
}

inline GridFunction commutator(const KernelSpec& spec, const GridFunction& b,
                               const GridFunction& f) {
  if (b.n != 1) throw Error("symbol must be scalar");
  if (!b.grid.same_as(f.grid)) throw Error("shape mismatch");
  GridFunction bf(f.grid, f.n);
  for (std::int64_t id = 0; id < f.grid.cell_count(); ++id)
    for (int i = 0; i < f.n; ++i) bf.at(id, i) = b.at(id, 0) * f.at(id, i);
  GridFunction lhs = t_omega(spec, bf), rhs = t_omega(spec, f);
  for (std::int64_t id = 0; id < f.grid.cell_count(); ++id)
    for (int i = 0; i < f.n; ++i) lhs.at(id, i) -= b.at(id, 0) * rhs.at(id, i);
  return lhs;
}

// ---- size quantities of the angular part ---------------------------------------

struct OmegaNorms {
  double lq = 0.0;
  double lorentz_log_bracket = 0.0;
  double lorentz_log_norm = 0.0;
};

namespace detail {

// antiderivative of log(e + t)
inline double logint(double t) { return (std::exp(1.0) + t) * std::log(std::exp(1.0) + t) - t; }

// q * integral of log(e+t) * dist(t)^{1/q} dt for the piecewise-constant
// distribution of |Omega| / lambda
inline double log_bracket(const std::vector<double>& absv, double weight, double q,
                          double lambda) {
  std::vector<double> a = absv;
  std::sort(a.begin(), a.end());
  double acc = 0.0, prev = 0.0;
  std::size_t j = 0;
  while (j < a.size()) {
    std::size_t j0 = j;  // tie group [j0, j)
    while (j < a.size() && a[j] == a[j0]) ++j;
    double level = a[j0] / lambda;
    if (level > prev) {
      double mass = weight * double(a.size() - j0);  // measure of {|v| > t} below this level
      acc += std::pow(mass, 1.0 / q) * (logint(level) - logint(prev));
      prev = level;
    }
  }
  return q * acc;
}

}  // namespace detail

inline OmegaNorms omega_norms(const OmegaSpec& omega, double q) {
  if (!(q > 1.0) || !std::isfinite(q)) throw Error("integrability exponent must be in (1, inf)");
  OmegaNorms out;
  double weight = omega.d == 1 ? 1.0 : 2.0 * 3.14159265358979323846 / double(omega.M());
  std::vector<double> absv;
  absv.reserve(omega.values.size());
  double total = 0.0;
  for (const cplx& z : omega.values) {
    absv.push_back(std::abs(z));
    total += weight * std::pow(std::abs(z), q);
  }
  out.lq = std::pow(total, 1.0 / q);
  out.lorentz_log_bracket = detail::log_bracket(absv, weight, q, 1.0);
  if (out.lorentz_log_bracket == 0.0) return out;

  double hi = 1.0;
  while (detail::log_bracket(absv, weight, q, hi) > 1.0) hi *= 2.0;
  double lo = hi;
  while (detail::log_bracket(absv, weight, q, lo) <= 1.0) lo /= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-8 * hi; ++it) {
    double mid = (lo + hi) / 2.0;
    (detail::log_bracket(absv, weight, q, mid) <= 1.0 ? hi : lo) = mid;
  }
  out.lorentz_log_norm = hi;
  return out;
}

// sup over scales and grid points of 2^{sd/q'} (||K_s(x,.)||_q + ||K_s(.,x)||_q)
inline double kq_constant(const KernelSpec& spec, const Grid& g, double q) {
  if (!(q > 1.0) || !std::isfinite(q)) throw Error("integrability exponent must be in (1, inf)");
  double qp = q / (q - 1.0);
  double vol = std::pow(1.0 / double(g.N), g.d);
  double sup = 0.0;
  for (int s = spec.mu + 1; s <= spec.nu; ++s) {
    auto table = detail::scale_table(g, spec, s);
    if (table.empty()) continue;
    double factor = std::pow(2.0, double(s) * double(g.d) / qp);
    for (std::int64_t x = 0; x < g.cell_count(); ++x) {
      std::int64_t xi = x % g.N, yi = g.d == 2 ? x / g.N : 0;
      double row = 0.0, col = 0.0;
      for (const detail::KernelOffset& off : table) {
        std::int64_t ui = xi - off.dx, vi = yi - off.dy;
        if (ui >= 0 && ui < g.N && (g.d == 1 || (vi >= 0 && vi < g.N)))
          row += std::pow(std::abs(off.val), q) * vol;
        std::int64_t ai = xi + off.dx, bi = yi + off.dy;
        if (ai >= 0 && ai < g.N && (g.d == 1 || (bi >= 0 && bi < g.N)))
          col += std::pow(std::abs(off.val), q) * vol;
      }
      sup = std::max(sup, factor * (std::pow(row, 1.0 / q) + std::pow(col, 1.0 / q)));
    }
  }
  return sup;
}

// ---- Bochner-Riesz means -------------------------------------------------------

namespace detail {

inline void fft_pass(std::vector<cplx>& data, bool inverse) {
  Eigen::FFT<double> fft;
  std::vector<cplx> out(data.size());
  if (inverse)
    fft.inv(out, data);
  else
    fft.fwd(out, data);
  data.swap(out);
}

// in-place multidimensional transform of one component plane
inline void fft_grid(const Grid& g, std::vector<cplx>& plane, bool inverse) {
  if (g.d == 1) {
    fft_pass(plane, inverse);
    return;
  }
  std::vector<cplx> line(std::size_t(g.N));
  for (std::int64_t r = 0; r < g.N; ++r) {
    std::copy_n(plane.begin() + r * g.N, g.N, line.begin());
    fft_pass(line, inverse);
    std::copy_n(line.begin(), g.N, plane.begin() + r * g.N);
  }
  for (std::int64_t cidx = 0; cidx < g.N; ++cidx) {
    for (std::int64_t r = 0; r < g.N; ++r) line[std::size_t(r)] = plane[std::size_t(r * g.N + cidx)];
    fft_pass(line, inverse);
    for (std::int64_t r = 0; r < g.N; ++r) plane[std::size_t(r * g.N + cidx)] = line[std::size_t(r)];
  }
}

inline std::int64_t signed_freq(std::int64_t idx, std::int64_t N) {
  return idx < N / 2 ? idx : idx - N;
}

}  // namespace detail

// multiplier (1 - |k|^2 / cutoff^2)_+^delta on the periodic spectrum; the
// delta = 0 power is the sharp indicator of |k| < cutoff
inline GridFunction bochner_riesz(const GridFunction& f, double delta, double cutoff_freq) {
  if (delta < 0.0) throw Error("order must be nonnegative");
  if (!(cutoff_freq > 0.0)) throw Error("cutoff must be positive");
  const Grid& g = f.grid;
  GridFunction out(g, f.n);
  std::vector<cplx> plane(std::size_t(g.cell_count()));
  for (int i = 0; i < f.n; ++i) {
    for (std::int64_t id = 0; id < g.cell_count(); ++id) plane[std::size_t(id)] = f.at(id, i);
    detail::fft_grid(g, plane, false);
    for (std::int64_t id = 0; id < g.cell_count(); ++id) {
      std::int64_t kx = detail::signed_freq(id % g.N, g.N);
      std::int64_t ky = g.d == 2 ? detail::signed_freq(id / g.N, g.N) : 0;
      double ks = double(kx * kx + ky * ky);
      double arg = 1.0 - ks / (cutoff_freq * cutoff_freq);
      double m = arg > 0.0 ? (delta == 0.0 ? 1.0 : std::pow(arg, delta)) : 0.0;
      plane[std::size_t(id)] *= m;
    }
    detail::fft_grid(g, plane, true);
    for (std::int64_t id = 0; id < g.cell_count(); ++id) out.at(id, i) = plane[std::size_t(id)];
  }
  return out;
}

// sup over grid-aligned cubes Q containing x of the L^exponent average over Q
// of the mean applied to f masked to the complement of 3Q
inline GridFunction grand_max_truncation(const GridFunction& f, double exponent, double delta,
                                         double cutoff_freq) {
  if (!(exponent > 0.0)) throw Error("integrability exponent must be positive");
  const Grid& g = f.grid;
  GridFunction best(g, 1);
  for (std::int64_t m = 1; m <= g.N; m *= 2) {
    std::int64_t off0 = 1 - m;
    std::int64_t offy_hi = g.d == 2 ? g.N - 1 : 0;
    for (std::int64_t oy = g.d == 2 ? off0 : 0; oy <= offy_hi; ++oy)
      for (std::int64_t ox = off0; ox <= g.N - 1; ++ox) {
        std::int64_t qx0 = std::max<std::int64_t>(0, ox), qx1 = std::min(g.N, ox + m);
        std::int64_t qy0 = 0, qy1 = 1;
        if (g.d == 2) {
          qy0 = std::max<std::int64_t>(0, oy);
          qy1 = std::min(g.N, oy + m);
        }
        if (qx0 >= qx1 || qy0 >= qy1) continue;
        GridFunction masked = f;  // zero out 3Q, keep the exterior
        std::int64_t tx0 = std::max<std::int64_t>(0, ox - m), tx1 = std::min(g.N, ox + 2 * m);
        std::int64_t ty0 = 0, ty1 = 1;
        if (g.d == 2) {
          ty0 = std::max<std::int64_t>(0, oy - m);
          ty1 = std::min(g.N, oy + 2 * m);
        }
        for (std::int64_t iy = ty0; iy < ty1; ++iy)
          for (std::int64_t ix = tx0; ix < tx1; ++ix)
            for (int i = 0; i < f.n; ++i) masked.at(g.cell_id(ix, iy), i) = 0.0;
        GridFunction Bm = bochner_riesz(masked, delta, cutoff_freq);
        Kahan avg;
        for (std::int64_t iy = qy0; iy < qy1; ++iy)
          for (std::int64_t ix = qx0; ix < qx1; ++ix)
            avg.add(std::pow(Bm.abs_at(g.cell_id(ix, iy)), exponent));
        double cells = double((qx1 - qx0) * (qy1 - qy0));
        double val = std::pow(avg.sum() / cells, 1.0 / exponent);
        for (std::int64_t iy = qy0; iy < qy1; ++iy)
          for (std::int64_t ix = qx0; ix < qx1; ++ix) {
            std::int64_t id = g.cell_id(ix, iy);
            if (val > best.at(id, 0).real()) best.at(id, 0) = val;
          }
      }
  }
  return best;
}

// ---- config parsing ------------------------------------------------------------

inline cplx parse_sample(const nlohmann::json& e) {
  if (e.is_number()) return cplx(e.get<double>(), 0.0);
  if (e.is_array() && e.size() == 2) return cplx(e[0].get<double>(), e[1].get<double>());
  throw Error("sample entries must be numbers or [re, im] pairs");
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
  int d = j.at("d").get<int>();
  double q = j.contains("q") ? j.at("q").get<double>() : 2.0;
  const nlohmann::json& om = j.at("omega");
  std::string kind = om.at("kind").get<std::string>();
  std::vector<cplx> values;
  if (kind == "sign") {
    if (d != 1) throw Error("sign kind requires d = 1");
    values = {cplx(1.0), cplx(-1.0)};
  } else if (kind == "samples") {
    for (const auto& e : om.at("values")) values.push_back(parse_sample(e));
  } else {
    throw Error("unknown omega kind");
  }
  if (j.contains("M") && d == 2 && j.at("M").get<int>() != int(values.size()))
    throw Error("angular sample count mismatch");
  KernelSpec spec;
  spec.omega = OmegaSpec(d, std::move(values), q);
  spec.mu = j.at("mu").get<int>();
  spec.nu = j.at("nu").get<int>();
  return spec;
}

inline nlohmann::json to_json(const KernelSpec& spec) {
  nlohmann::json vals = nlohmann::json::array();
  for (const cplx& z : spec.omega.values) vals.push_back({z.real(), z.imag()});
  return nlohmann::json{{"d", spec.omega.d},
                        {"omega", {{"kind", "samples"}, {"values", vals}}},
                        {"q", spec.omega.q},
                        {"mu", spec.mu},
                        {"nu", spec.nu},
                        {"M", spec.omega.M()}};
}

// CSV rows "angle,re,im"; samples are taken in row order as the uniform
// angular grid, comment lines start with '#'
inline OmegaSpec omega_from_csv(const std::string& path, int d, double q) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<cplx> values;
  std::string line;
  double prev_angle = -kInf;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    double a = 0.0, re = 0.0, im = 0.0;
    char c1 = 0, c2 = 0;
    if (!(row >> a >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',')
      throw Error("malformed sample row: " + line);
    if (a <= prev_angle) throw Error("angles must increase");
    prev_angle = a;
    values.push_back(cplx(re, im));
  }
  return OmegaSpec(d, std::move(values), q);
}

}  // namespace cbdlab
