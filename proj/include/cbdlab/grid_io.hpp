#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cbdlab/grid.hpp"

namespace cbdlab {

static_assert(std::endian::native == std::endian::little,
              "serialized layout is little-endian");

// One JSON header line, then raw float64 pairs (re, im) per cell, cell-major
// within each component plane, component planes in order. Round-trip is exact:
// payload doubles are copied bitwise and the header uses shortest round-trip
// decimal representation.
inline void save_grid_function(const GridFunction& f, const std::string& path) {
  if (!f.all_finite()) throw Error("grid function has non-finite entries");
  nlohmann::json hdr;
  hdr["d"] = f.grid.d;
  hdr["N"] = f.grid.N;
  hdr["n"] = f.n;
  hdr["box_origin"] = f.grid.d == 1
                          ? nlohmann::json::array({f.grid.box_origin[0]})
                          : nlohmann::json::array({f.grid.box_origin[0], f.grid.box_origin[1]});
  hdr["box_side"] = f.grid.box_side;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open file for writing: " + path);
  out << hdr.dump() << '\n';
  std::vector<char> buf(f.values.size() * 16);
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    double re = f.values[k].real(), im = f.values[k].imag();
    std::memcpy(buf.data() + 16 * k, &re, 8);
    std::memcpy(buf.data() + 16 * k + 8, &im, 8);
  }
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw Error("write failed: " + path);
}

inline GridFunction load_grid_function(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("missing header line: " + path);
  nlohmann::json hdr = nlohmann::json::parse(line);
  int d = hdr.at("d").get<int>();
  std::int64_t N = hdr.at("N").get<std::int64_t>();
  int n = hdr.at("n").get<int>();
  auto orig = hdr.at("box_origin");
  std::array<double, 2> origin{orig.at(0).get<double>(), 0.0};
  if (d == 2) origin[1] = orig.at(1).get<double>();
  double side = hdr.at("box_side").get<double>();
  GridFunction f(Grid(d, origin, side, N), n);
  std::vector<char> buf(f.values.size() * 16);
  in.read(buf.data(), std::streamsize(buf.size()));
  if (in.gcount() != std::streamsize(buf.size())) throw Error("truncated payload: " + path);
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    double re, im;
    std::memcpy(&re, buf.data() + 16 * k, 8);
    std::memcpy(&im, buf.data() + 16 * k + 8, 8);
    f.values[k] = cplx(re, im);
  }
  if (!f.all_finite()) throw Error("grid function has non-finite entries");
  return f;
}

}  // namespace cbdlab
