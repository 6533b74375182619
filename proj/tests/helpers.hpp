#pragma once

#include <vector>

#include "cbdlab/grid.hpp"

namespace testutil {

using cbdlab::cplx;
using cbdlab::Grid;
using cbdlab::GridFunction;

inline GridFunction random_gf(const Grid& g, int n, std::uint64_t seed, double amp = 1.0) {
  cbdlab::Rng rng(seed);
  GridFunction f(g, n);
  for (auto& v : f.values) v = amp * rng.next_cgaussian();
  return f;
}

// real-valued positive samples, handy for weight-like data
inline std::vector<double> random_positive(std::int64_t count, std::uint64_t seed,
                                           double lo = 0.1, double hi = 4.0) {
  cbdlab::Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(count));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace testutil
