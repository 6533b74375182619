// Config-driven experiment runner. Reads a JSON config, executes one of the
// named experiment kinds against the library, and emits a JSON report plus a
// CSV table. Exit codes: 0 all invariants hold, 1 a measured invariant
// failed (the report names it), 2 config or usage errors (nothing written).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbdlab/domination.hpp"
#include "cbdlab/weights.hpp"

using nlohmann::json;
using namespace cbdlab;

namespace {

// Config problems are a separate failure class: they exit 2 and must never
// leave partial output behind.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
  Rng r(seed ^ (0x9e3779b97f4a7c15ull * (k + 1)));
  return r.next_u64();
}

int thread_count() {
  const char* env = std::getenv("CBDLAB_THREADS");
  if (env == nullptr) return 1;
  int v = std::atoi(env);
  return v < 1 ? 1 : v;
}

// Trials are independent given their seed stream; results land in indexed
// slots so the assembly order never depends on the thread count.
template <class F>
void parallel_trials(int trials, F&& fn) {
  int threads = std::min(thread_count(), trials < 1 ? 1 : trials);
  if (threads <= 1) {
    for (int k = 0; k < trials; ++k) fn(k);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w]() {
      for (int k = w; k < trials; k += threads) fn(k);
    });
  for (auto& t : pool) t.join();
}

// ---- config schema ---------------------------------------------------------------

const std::vector<std::string> kKinds = {"domination", "th1",     "john", "weights",
                                         "bochner",    "norms",   "rep1"};

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& scope) {
  if (!j.is_object()) throw ConfigError(scope + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("unknown config key: " + scope + "." + it.key());
  }
}

double num_at(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError("config key " + key + " must be a number");
  return j.at(key).get<double>();
}

struct ExperimentConfig {
  std::string kind;
  Grid grid;
  KernelSpec ks;         // only meaningful when uses_kernel
  bool uses_kernel = false;
  double Theta = 2.0, p1 = 2.0, p2 = 2.0;
  double t = 2.0, q = kInf;
  double gamma = 0.0, beta = 8.0;  // multiplier order and cutoff frequency
  double u = 3.0, v = 2.0;  // u > v by default so the sharp branch is live
  int n = 1;
  std::string branch = "auto";  // norms kind: auto | bmo | sharp
  int trials = 0;
  std::uint64_t seed = 1;
  std::string out;
  json resolved;  // the exact configuration the run used, embedded in reports
};

int default_trials(const std::string& kind) {
  if (kind == "rep1") return 50;
  if (kind == "th1") return 50;
  if (kind == "weights") return 3;  // trial functions per audit family member
  return 20;
}

json default_kernel(const Grid& g, const std::string& kind) {
  json k;
  k["d"] = g.d;
  if (g.d == 1) {
    k["omega"] = {{"kind", "sign"}};
  } else {
    // twelve-point third-harmonic profile; mean-zero on the angular grid
    json vals = json::array();
    const double two_pi = 2.0 * std::acos(-1.0);
    for (int j = 0; j < 12; ++j) vals.push_back(std::cos(3.0 * two_pi * double(j) / 12.0));
    k["omega"] = {{"kind", "samples"}, {"values", vals}};
  }
  k["q"] = 2.0;
  k["mu"] = -g.J - 1;
  k["nu"] = kind == "rep1" ? -1 : 0;
  return k;
}

ExperimentConfig parse_config(const json& root) {
  check_keys(root, {"kind", "grid", "kernel", "params", "trials", "seed", "out"}, "config");
  ExperimentConfig C;

  if (!root.contains("kind") || !root.at("kind").is_string())
    throw ConfigError("config requires a string \"kind\"");
  C.kind = root.at("kind").get<std::string>();
  if (std::find(kKinds.begin(), kKinds.end(), C.kind) == kKinds.end())
    throw ConfigError("unknown experiment kind: " + C.kind);

  json gj = root.value("grid", json::object());
  check_keys(gj, {"d", "N", "origin", "side"}, "grid");
  int d = int(num_at(gj, "d", 1));
  std::int64_t N = std::int64_t(num_at(gj, "N", 64));
  std::array<double, 2> origin{0.0, 0.0};
  if (gj.contains("origin")) {
    const json& o = gj.at("origin");
    if (!o.is_array() || o.size() != 2) throw ConfigError("grid.origin must be [x, y]");
    origin = {o[0].get<double>(), o[1].get<double>()};
  }
  double side = num_at(gj, "side", 1.0);
  try {
    C.grid = Grid(d, origin, side, N);
  } catch (const Error& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }

  json pj = root.value("params", json::object());
  check_keys(pj, {"Theta", "p1", "p2", "t", "q", "gamma", "beta", "u", "v", "n", "branch"},
             "params");
  C.Theta = num_at(pj, "Theta", C.Theta);
  C.p1 = num_at(pj, "p1", C.p1);
  C.p2 = num_at(pj, "p2", C.p2);
  C.t = num_at(pj, "t", C.t);
  C.q = num_at(pj, "q", C.q);
  C.gamma = num_at(pj, "gamma", C.kind == "bochner" || C.kind == "weights" ? 0.0 : 1.0);
  C.beta = num_at(pj, "beta", C.kind == "bochner" || C.kind == "weights" ? 8.0 : 1.0);
  C.u = num_at(pj, "u", C.u);
  C.v = num_at(pj, "v", C.v);
  C.n = int(num_at(pj, "n", C.kind == "domination" || C.kind == "th1" || C.kind == "john" ||
                                   C.kind == "rep1"
                               ? 2
                               : 1));
  if (C.n < 1) throw ConfigError("params.n must be at least 1");
  if (pj.contains("branch")) {
    if (!pj.at("branch").is_string()) throw ConfigError("params.branch must be a string");
    C.branch = pj.at("branch").get<std::string>();
    if (C.branch != "auto" && C.branch != "bmo" && C.branch != "sharp")
      throw ConfigError("params.branch must be auto, bmo, or sharp");
  }

  if (root.contains("trials")) {
    if (!root.at("trials").is_number_integer() || root.at("trials").get<int>() < 1)
      throw ConfigError("trials must be a positive integer");
    C.trials = root.at("trials").get<int>();
  } else {
    C.trials = default_trials(C.kind);
  }
  if (root.contains("seed")) {
    if (!root.at("seed").is_number_unsigned() && !root.at("seed").is_number_integer())
      throw ConfigError("seed must be an integer");
    C.seed = root.at("seed").get<std::uint64_t>();
  }
  if (root.contains("out")) {
    if (!root.at("out").is_string()) throw ConfigError("out must be a string");
    C.out = root.at("out").get<std::string>();
  }
  if (C.out.empty()) C.out = C.kind + "_report";

  C.uses_kernel = C.kind == "rep1" || C.kind == "domination";
  json kj = root.value("kernel", json::object());
  check_keys(kj, {"d", "omega", "q", "mu", "nu", "M"}, "kernel");
  if (kj.contains("omega")) check_keys(kj.at("omega"), {"kind", "values"}, "kernel.omega");
  json kernel_resolved = default_kernel(C.grid, C.kind);
  for (auto it = kj.begin(); it != kj.end(); ++it) kernel_resolved[it.key()] = it.value();
  if (C.uses_kernel) {
    try {
      C.ks = kernel_from_json(kernel_resolved);
    } catch (const Error& e) {
      throw ConfigError(std::string("kernel: ") + e.what());
    }
    if (C.ks.omega.d != C.grid.d) throw ConfigError("kernel dimension must match the grid");
  } else if (root.contains("kernel")) {
    throw ConfigError("kernel section is only used by the rep1 and domination kinds");
  }

  // the resolved config is what reports embed and what the config hash covers
  C.resolved = json{{"kind", C.kind},
                    {"grid",
                     {{"d", C.grid.d},
                      {"N", C.grid.N},
                      {"origin", {C.grid.box_origin[0], C.grid.box_origin[1]}},
                      {"side", C.grid.box_side}}},
                    {"trials", C.trials},
                    {"seed", C.seed},
                    {"out", C.out}};
  if (C.uses_kernel) C.resolved["kernel"] = kernel_resolved;
  json params;
  if (C.kind == "domination") {
    params = {{"Theta", C.Theta}, {"p1", C.p1}, {"p2", C.p2}, {"n", C.n}};
  } else if (C.kind == "rep1") {
    params = {{"n", C.n}};
  } else if (C.kind == "john") {
    params = {{"n", C.n}, {"p1", C.p1}};
  } else if (C.kind == "th1") {
    params = {{"n", C.n}, {"p1", C.p1}, {"p2", C.p2}};
  } else if (C.kind == "weights") {
    params = {{"t", C.t},         {"q", std::isfinite(C.q) ? json(C.q) : json()},
              {"n", C.n},         {"gamma", C.gamma},
              {"beta", C.beta}};
  } else if (C.kind == "bochner") {
    params = {{"p1", C.p1}, {"gamma", C.gamma}, {"beta", C.beta}, {"n", C.n}};
  } else if (C.kind == "norms") {
    params = {{"u", C.u}, {"v", C.v}, {"q", std::isfinite(C.q) ? json(C.q) : json(4.0)},
              {"branch", C.branch}};
  }
  C.resolved["params"] = params;
  return C;
}

// ---- execution -------------------------------------------------------------------

struct Invariant {
  std::string name;
  bool ok = false;
  double value = 0.0;
};

struct RunOutput {
  json summary;
  std::string csv;
  std::vector<Invariant> invariants;
};

GridFunction seeded_gf(const Grid& g, int n, std::uint64_t seed) {
  Rng rng(seed);
  GridFunction f(g, n);
  for (auto& z : f.values) z = rng.next_cgaussian();
  return f;
}

GridFunction masked_to_cube(const Grid& g, const GridFunction& f, const DyadicCube& Q) {
  GridFunction out(g, f.n);
  CellWindow w = cube_cells(g, Q);
  for (std::int64_t iy = w.y0; iy < w.y1; ++iy)
    for (std::int64_t ix = w.x0; ix < w.x1; ++ix) {
      std::int64_t id = g.cell_id(ix, iy);
      for (int i = 0; i < f.n; ++i) out.at(id, i) = f.at(id, i);
    }
  return out;
}

RunOutput run_rep1(const ExperimentConfig& C) {
  const Grid& g = C.grid;
  DyadicCube top{0, {0, 0}, {0.0, 0.0}};
  FormSpec spec;
  spec.kernel = C.ks;

  struct Row {
    int members = 0;
    cplx lhs;
    double gap = 0.0, rel = 0.0;
  };
  std::vector<Row> rows(std::size_t(C.trials));
  parallel_trials(C.trials, [&](int k) {
    Rng rng(mix_seed(C.seed, std::uint64_t(k)));
    std::vector<bool> mask(std::size_t(g.cell_count()), false);
    for (auto&& e : mask) e = rng.next_double() < 0.35;
    StoppingCollection c;
    c.top = top;
    // maximal masked cubes; dilate factor 1 asks only that the cube itself be
    // covered, which is all the layer identity needs
    for (const DyadicCube& L : maximal_cubes(g, mask, {0.0, 0.0}, 1))
      if (L.s < top.s) c.members.push_back(L);
    std::vector<GridFunction> pieces;
    pieces.reserve(c.members.size());
    for (std::size_t i = 0; i < c.members.size(); ++i)
      pieces.push_back(
          masked_to_cube(g, seeded_gf(g, C.n, mix_seed(C.seed, 7000 + 10 * k + i)), c.members[i]));
    GridFunction h = seeded_gf(g, C.n, mix_seed(C.seed, 9000 + std::uint64_t(k)));
    FormSpec local = spec;
    local.stopping = c;
    Rep1Report rep = rep1_check(local, pieces, h);
    Row& r = rows[std::size_t(k)];
    r.members = int(c.members.size());
    r.lhs = rep.lhs;
    r.gap = rep.gap;
    r.rel = rep.gap / (1.0 + std::abs(rep.lhs));
  });

  RunOutput out;
  out.csv = "trial,members,lhs_re,lhs_im,gap,rel_gap\n";
  double max_rel = 0.0, max_gap = 0.0;
  for (int k = 0; k < C.trials; ++k) {
    const Row& r = rows[std::size_t(k)];
    out.csv += std::to_string(k) + "," + std::to_string(r.members) + "," + fmt(r.lhs.real()) +
               "," + fmt(r.lhs.imag()) + "," + fmt(r.gap) + "," + fmt(r.rel) + "\n";
    max_rel = std::max(max_rel, r.rel);
    max_gap = std::max(max_gap, r.gap);
  }
  out.invariants.push_back({"rep1 ledger gap", max_rel <= 1e-10, max_rel});
  out.summary = {{"trials", C.trials}, {"max_gap", max_gap}, {"max_rel_gap", max_rel}};
  return out;
}

RunOutput run_domination(const ExperimentConfig& C) {
  const Grid& g = C.grid;
  DyadicCube Q0{0, {0, 0}, {0.0, 0.0}};
  FormSpec spec;
  spec.kernel = C.ks;

  std::vector<DominationResult> results(std::size_t(C.trials));
  std::vector<std::uint64_t> seeds(std::size_t(C.trials));
  parallel_trials(C.trials, [&](int k) {
    std::uint64_t sk = mix_seed(C.seed, std::uint64_t(k));
    seeds[std::size_t(k)] = sk;
    GridFunction f = seeded_gf(g, C.n, mix_seed(sk, 1));
    GridFunction h = seeded_gf(g, C.n, mix_seed(sk, 2));
    // spikes so the stopping recursion has something to isolate
    Rng spikes(mix_seed(sk, 4));
    for (int sp = 0; sp < 3; ++sp) {
      std::int64_t id = std::int64_t(spikes.next_below(std::uint64_t(g.cell_count())));
      double amp = 20.0 * std::exp(std::abs(spikes.next_gaussian()));
      f.at(id, 0) = cplx(amp, 0.0);
      if (sp == 0) {
        id = std::int64_t(spikes.next_below(std::uint64_t(g.cell_count())));
        h.at(id, 0) = cplx(amp, 0.0);
      }
    }
    DominationConfig cfg;
    cfg.p1 = C.p1;
    cfg.p2 = C.p2;
    cfg.Theta = C.Theta;
    cfg.seed = mix_seed(sk, 3);
    results[std::size_t(k)] = build_sparse(f, h, Q0, spec, cfg);
  });

  RunOutput out;
  out.csv =
      "trial,seed,levels,lhs,rhs,ratio,ledger_gap,eta,max_packing,level1_fill,verify_ok,flow_"
      "ran\n";
  double max_gap_rel = 0.0;
  bool all_verified = true, depth_ok = true, finite_ok = true;
  std::vector<double> ratios, fills;
  const std::size_t depth_budget = std::size_t(Q0.s - C.ks.mu);
  json fills_json = json::array(), ratios_json = json::array();
  for (int k = 0; k < C.trials; ++k) {
    const DominationResult& r = results[std::size_t(k)];
    double fill = 0.0;
    if (r.levels.size() > 1)
      for (const DyadicCube& L : r.levels[1])
        fill += std::pow(std::exp2(double(L.s - Q0.s)), g.d);
    out.csv += std::to_string(k) + "," + std::to_string(seeds[std::size_t(k)]) + "," +
               std::to_string(r.levels.size()) + "," + fmt(r.lhs) + "," + fmt(r.rhs) + "," +
               fmt(r.ratio) + "," + fmt(r.ledger_gap) + "," + fmt(r.eta) + "," +
               fmt(r.max_packing_ratio) + "," + fmt(fill) + "," +
               (r.verify.ok ? "1" : "0") + "," + (r.verify.flow_ran ? "1" : "0") + "\n";
    max_gap_rel = std::max(max_gap_rel, r.ledger_gap / (1.0 + std::abs(r.lhs)));
    all_verified = all_verified && r.verify.ok;
    depth_ok = depth_ok && r.levels.size() <= depth_budget;
    finite_ok = finite_ok && std::isfinite(r.ratio);
    ratios.push_back(r.ratio);
    fills.push_back(fill);
    ratios_json.push_back(r.ratio);
    fills_json.push_back(fill);
  }
  std::vector<double> sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  double median = sorted.empty() ? 0.0 : sorted[sorted.size() / 2];
  double maxr = sorted.empty() ? 0.0 : sorted.back();

  out.invariants.push_back({"stopping ledger telescoping", max_gap_rel <= 1e-10, max_gap_rel});
  out.invariants.push_back({"sparse verifier", all_verified, all_verified ? 1.0 : 0.0});
  out.invariants.push_back({"recursion depth", depth_ok, double(depth_budget)});
  out.invariants.push_back({"finite ratio", finite_ok, maxr});
  out.summary = {{"trials", C.trials},        {"max_ratio", maxr},
                 {"median_ratio", median},    {"max_ledger_gap", max_gap_rel},
                 {"ratios", ratios_json},     {"level1_fill", fills_json}};
  return out;
}

RunOutput run_john(const ExperimentConfig& C) {
  const Grid& g = C.grid;
  CubeRegion whole({g.box_origin[0] + g.box_side / 2.0,
                    g.d == 2 ? g.box_origin[1] + g.box_side / 2.0 : 0.0},
                   g.box_side);

  struct Row {
    double sandwich = 0.0, containment = 0.0;
    int directions = 0;
  };
  std::vector<Row> rows(std::size_t(C.trials));
  parallel_trials(C.trials, [&](int k) {
    std::uint64_t sk = mix_seed(C.seed, 2000 + std::uint64_t(k));
    BodyHandle body(seeded_gf(g, C.n, sk), whole, C.p1);
    JohnResult jr = john_ellipsoid(body);
    double lo = kInf;
    for (const Vec& v : direction_net(C.n, default_directions(C.n), mix_seed(sk, 5))) {
      double av = (jr.A * v).norm();
      if (av <= 0.0) continue;
      lo = std::min(lo, support(body, v) / av);
    }
    rows[std::size_t(k)] = {jr.sandwich, lo, jr.directions};
  });

  RunOutput out;
  out.csv = "trial,n,sandwich,containment_min,directions\n";
  double worst_hi = 0.0, worst_lo = kInf;
  for (int k = 0; k < C.trials; ++k) {
    const Row& r = rows[std::size_t(k)];
    out.csv += std::to_string(k) + "," + std::to_string(C.n) + "," + fmt(r.sandwich) + "," +
               fmt(r.containment) + "," + std::to_string(r.directions) + "\n";
    worst_hi = std::max(worst_hi, r.sandwich);
    worst_lo = std::min(worst_lo, r.containment);
  }
  double cap = std::sqrt(double(C.n)) * 1.02;
  out.invariants.push_back({"ellipsoid containment", worst_lo >= 1.0 - 1e-9, worst_lo});
  out.invariants.push_back({"sandwich upper bound", worst_hi <= cap, worst_hi});
  out.summary = {{"trials", C.trials}, {"worst_sandwich", worst_hi},
                 {"worst_containment", worst_lo}, {"cap", cap}};
  return out;
}

RunOutput run_th1(const ExperimentConfig& C) {
  const Grid& g = C.grid;

  struct Row {
    int r = 0;
    double lhs = 0.0, rhs = 0.0, dot = 0.0;
    bool ok = false;
  };
  std::vector<Row> rows(std::size_t(C.trials));
  parallel_trials(C.trials, [&](int k) {
    std::uint64_t sk = mix_seed(C.seed, 3000 + std::uint64_t(k));
    Rng rng(sk);
    // a dyadic cube at least four cells wide, anywhere in the box
    int smin = -(g.J - 2);
    int s = smin + int(rng.next_below(std::uint64_t(-smin + 1)));
    std::int64_t count = std::int64_t(1) << (-s);
    std::array<std::int64_t, 2> coords{std::int64_t(rng.next_below(std::uint64_t(count))), 0};
    if (g.d == 2) coords[1] = std::int64_t(rng.next_below(std::uint64_t(count)));
    CubeRegion Q = region_of(g, DyadicCube{s, coords, {0.0, 0.0}});
    GridFunction f = seeded_gf(g, C.n, mix_seed(sk, 1));
    GridFunction h = seeded_gf(g, C.n, mix_seed(sk, 2));
    Decomposition dec = decompose(f, h, Q, C.p1, C.p2);
    BodyHandle b1(f, dec.region, C.p1), b2(h, dec.region, C.p2);
    Th1Report rep = th1_check(dec, b1, b2);
    rows[std::size_t(k)] = {dec.r, rep.lhs, rep.rhs, rep.dot, rep.ok};
  });

  RunOutput out;
  out.csv = "trial,rank,lhs,rhs,dot,ok\n";
  bool all_ok = true;
  double worst = 0.0;
  for (int k = 0; k < C.trials; ++k) {
    const Row& r = rows[std::size_t(k)];
    out.csv += std::to_string(k) + "," + std::to_string(r.r) + "," + fmt(r.lhs) + "," +
               fmt(r.rhs) + "," + fmt(r.dot) + "," + (r.ok ? "1" : "0") + "\n";
    all_ok = all_ok && r.ok;
    if (r.rhs > 0.0) worst = std::max(worst, r.lhs / r.rhs);
  }
  out.invariants.push_back({"testing inequality", all_ok, worst});
  out.summary = {{"trials", C.trials}, {"worst_fill", worst}};
  return out;
}

RunOutput run_weights(const ExperimentConfig& C) {
  const Grid& g = C.grid;
  RunOutput out;
  out.csv = "op,family_param,weight_constant,observed_ratio,predicted_bound\n";

  double ident = matrix_at_constant(identity_weight(g, C.n), C.t);
  out.invariants.push_back(
      {"identity characteristic", std::abs(ident - 1.0) <= 1e-10, ident});

  struct OpSpec {
    AuditOperator op;
    const char* name;
  };
  const OpSpec ops[] = {{AuditOperator::kTOmega, "t_omega"},
                        {AuditOperator::kBochnerRiesz, "bochner_riesz"},
                        {AuditOperator::kCommutator, "commutator"}};
  json per_op = json::object();
  for (std::size_t i = 0; i < 3; ++i) {
    WeightAuditConfig cfg;
    cfg.op = ops[i].op;
    cfg.t = C.t;
    cfg.q = ops[i].op == AuditOperator::kBochnerRiesz ? kInf : C.q;
    cfg.trials = C.trials;
    cfg.delta = C.gamma;
    cfg.cutoff = C.beta;
    cfg.seed = mix_seed(C.seed, 4000 + i);
    WeightAuditResult res = weighted_bound_audit(g, C.n, cfg);
    for (const WeightAuditPoint& p : res.points)
      out.csv += std::string(ops[i].name) + "," + fmt(p.family_param) + "," +
                 fmt(p.weight_constant) + "," + fmt(p.observed_ratio) + "," +
                 fmt(p.predicted_bound) + "\n";
    out.invariants.push_back(
        {std::string("one-sided audit (") + ops[i].name + ")", res.ok, res.max_ratio});
    per_op[ops[i].name] = {{"exponent", res.exponent},
                           {"fitted_constant", res.fitted_constant},
                           {"max_ratio", res.max_ratio},
                           {"ok", res.ok}};
  }
  out.summary = {{"identity_characteristic", ident}, {"audits", per_op}};
  return out;
}

RunOutput run_bochner(const ExperimentConfig& C) {
  const Grid& g = C.grid;

  GridFunction ones(g, 1);
  for (auto& z : ones.values) z = cplx(1.0, 0.0);
  GridFunction bc = bochner_riesz(ones, C.gamma, C.beta);
  double const_drift = 0.0;
  for (std::int64_t id = 0; id < g.cell_count(); ++id)
    const_drift = std::max(const_drift, std::abs(bc.at(id, 0) - cplx(1.0, 0.0)));

  struct Row {
    double annihilation = 0.0, margin = kInf;
  };
  std::vector<Row> rows(std::size_t(C.trials));
  parallel_trials(C.trials, [&](int k) {
    std::uint64_t sk = mix_seed(C.seed, 4000 + std::uint64_t(k));
    GridFunction f = seeded_gf(g, 1, sk);
    double scale = 0.0;
    for (std::int64_t id = 0; id < g.cell_count(); ++id)
      scale = std::max(scale, f.abs_at(id));

    // the part of the spectrum at or beyond the cutoff must be annihilated
    GridFunction inside = bochner_riesz(f, 0.0, C.beta);
    GridFunction outside(g, 1);
    for (std::int64_t id = 0; id < g.cell_count(); ++id)
      outside.at(id, 0) = f.at(id, 0) - inside.at(id, 0);
    GridFunction killed = bochner_riesz(outside, C.gamma, C.beta);
    double resid = 0.0;
    for (std::int64_t id = 0; id < g.cell_count(); ++id)
      resid = std::max(resid, killed.abs_at(id));
    rows[std::size_t(k)].annihilation = resid / std::max(1.0, scale);

    // sup dominance of the grand maximal function, spot-checked on a few
    // cubes with the same exterior masking the sweep applies
    GridFunction gm = grand_max_truncation(f, C.p1, C.gamma, C.beta);
    Rng rng(mix_seed(sk, 9));
    double margin = kInf;
    for (int probe = 0; probe < 6; ++probe) {
      std::int64_t m = std::int64_t(1) << rng.next_below(std::uint64_t(g.J + 1));
      std::int64_t ox = (1 - m) + std::int64_t(rng.next_below(std::uint64_t(g.N + m - 1)));
      std::int64_t oy = g.d == 2 ? (1 - m) + std::int64_t(rng.next_below(std::uint64_t(g.N + m - 1))) : 0;
      std::int64_t qx0 = std::max<std::int64_t>(0, ox), qx1 = std::min(g.N, ox + m);
      std::int64_t qy0 = g.d == 2 ? std::max<std::int64_t>(0, oy) : 0;
      std::int64_t qy1 = g.d == 2 ? std::min(g.N, oy + m) : 1;
      if (qx0 >= qx1 || qy0 >= qy1) continue;
      GridFunction masked = f;
      std::int64_t tx0 = std::max<std::int64_t>(0, ox - m), tx1 = std::min(g.N, ox + 2 * m);
      std::int64_t ty0 = g.d == 2 ? std::max<std::int64_t>(0, oy - m) : 0;
      std::int64_t ty1 = g.d == 2 ? std::min(g.N, oy + 2 * m) : 1;
      for (std::int64_t iy = ty0; iy < ty1; ++iy)
        for (std::int64_t ix = tx0; ix < tx1; ++ix) masked.at(g.cell_id(ix, iy), 0) = 0.0;
      GridFunction Bm = bochner_riesz(masked, C.gamma, C.beta);
      Kahan avg;
      for (std::int64_t iy = qy0; iy < qy1; ++iy)
        for (std::int64_t ix = qx0; ix < qx1; ++ix)
          avg.add(std::pow(Bm.abs_at(g.cell_id(ix, iy)), C.p1));
      double val = std::pow(avg.sum() / double((qx1 - qx0) * (qy1 - qy0)), 1.0 / C.p1);
      for (std::int64_t iy = qy0; iy < qy1; ++iy)
        for (std::int64_t ix = qx0; ix < qx1; ++ix)
          margin = std::min(margin, gm.at(g.cell_id(ix, iy), 0).real() - val);
    }
    rows[std::size_t(k)].margin = margin;
  });

  RunOutput out;
  out.csv = "trial,annihilation_resid,dominance_margin\n";
  double worst_resid = 0.0, worst_margin = kInf;
  for (int k = 0; k < C.trials; ++k) {
    const Row& r = rows[std::size_t(k)];
    out.csv += std::to_string(k) + "," + fmt(r.annihilation) + "," + fmt(r.margin) + "\n";
    worst_resid = std::max(worst_resid, r.annihilation);
    worst_margin = std::min(worst_margin, r.margin);
  }
  out.invariants.push_back({"spectral annihilation", worst_resid <= 1e-10, worst_resid});
  out.invariants.push_back({"constant preservation", const_drift <= 1e-10, const_drift});
  out.invariants.push_back({"maximal dominance", worst_margin >= -1e-12, worst_margin});
  out.summary = {{"trials", C.trials},
                 {"worst_annihilation", worst_resid},
                 {"constant_drift", const_drift},
                 {"worst_dominance_margin", worst_margin}};
  return out;
}

RunOutput run_norms(const ExperimentConfig& C) {
  const Grid& g = C.grid;
  double q = std::isfinite(C.q) ? C.q : 4.0;
  BloomBranch branch = C.branch == "bmo"
                           ? BloomBranch::kBmo
                           : (C.branch == "sharp" ? BloomBranch::kSharpMaximal
                                                  : BloomBranch::kAuto);

  struct Row {
    ScalarWeightQuantities qs;
  };
  std::vector<Row> rows(std::size_t(C.trials));
  parallel_trials(C.trials, [&](int k) {
    std::uint64_t sk = mix_seed(C.seed, 5000 + std::uint64_t(k));
    Rng rng(sk);
    GridFunction mu(g, 1), lam(g, 1);
    for (std::int64_t id = 0; id < g.cell_count(); ++id) {
      mu.at(id, 0) = cplx(std::exp(rng.uniform(-1.5, 1.5)), 0.0);
      lam.at(id, 0) = cplx(std::exp(rng.uniform(-1.5, 1.5)), 0.0);
    }
    GridFunction b = seeded_gf(g, 1, mix_seed(sk, 3));
    rows[std::size_t(k)].qs = scalar_weight_quantities(
        ScalarWeightProfile(mu), ScalarWeightProfile(lam), C.u, C.v, q, b, branch);
  });

  RunOutput out;
  out.csv = "trial,alpha,tau,rh_mu,rh_lambda,bmo_alpha_nu,sharp_max_norm,sharp_branch\n";
  double min_rh = kInf;
  for (int k = 0; k < C.trials; ++k) {
    const ScalarWeightQuantities& qs = rows[std::size_t(k)].qs;
    out.csv += std::to_string(k) + "," + fmt(qs.alpha) + "," + fmt(qs.tau) + "," +
               fmt(qs.rh_mu) + "," + fmt(qs.rh_lambda) + "," + fmt(qs.bmo_alpha_nu) + "," +
               fmt(qs.sharp_max_norm) + "," + (qs.sharp_branch ? "1" : "0") + "\n";
    min_rh = std::min(min_rh, std::min(qs.rh_mu, qs.rh_lambda));
  }
  out.invariants.push_back({"reverse Holder lower bound", min_rh >= 1.0 - 1e-12, min_rh});
  out.summary = {{"trials", C.trials}, {"min_reverse_holder", min_rh}};
  return out;
}

RunOutput execute(const ExperimentConfig& C) {
  if (C.kind == "rep1") return run_rep1(C);
  if (C.kind == "domination") return run_domination(C);
  if (C.kind == "john") return run_john(C);
  if (C.kind == "th1") return run_th1(C);
  if (C.kind == "weights") return run_weights(C);
  if (C.kind == "bochner") return run_bochner(C);
  return run_norms(C);
}

// ---- reporting -------------------------------------------------------------------

std::string iso_now() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// the output path names the files, not the experiment, so it stays out of the hash
std::string hash_hex(const json& resolved) {
  json keyed = resolved;
  keyed.erase("out");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                (unsigned long long)fnv1a(keyed.dump()));
  return buf;
}

json report_json(const ExperimentConfig& C, const RunOutput& r) {
  json inv = json::array();
  json failed = json::array();
  for (const Invariant& i : r.invariants) {
    inv.push_back({{"name", i.name}, {"ok", i.ok}, {"value", i.value}});
    if (!i.ok) failed.push_back(i.name);
  }
  json j;
  j["header"] = {{"generated_at", iso_now()},
                 {"version", kLibraryVersion},
                 {"cutoff_id", kCutoffId},
                 {"config_hash", hash_hex(C.resolved)}};
  j["config"] = C.resolved;
  j["results"] = r.summary;
  j["invariants"] = inv;
  j["failed_invariants"] = failed;
  return j;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open output file " + path);
  f.write(body.data(), std::streamsize(body.size()));
  if (!f) throw ConfigError("cannot write output file " + path);
}

int finish(const ExperimentConfig& C, const RunOutput& r, bool write_files,
           const std::string& prefix) {
  if (write_files) {
    write_file(prefix + ".json", report_json(C, r).dump(2) + "\n");
    write_file(prefix + ".csv", r.csv);
    std::cout << "report: " << prefix << ".json\n";
    std::cout << "table: " << prefix << ".csv\n";
  }
  bool all_ok = true;
  for (const Invariant& i : r.invariants) {
    std::cout << "invariant " << i.name << ": " << (i.ok ? "pass" : "FAIL") << " ("
              << fmt(i.value) << ")\n";
    all_ok = all_ok && i.ok;
  }
  if (!all_ok) {
    for (const Invariant& i : r.invariants)
      if (!i.ok) std::cerr << "invariant failed: " << i.name << "\n";
    return 1;
  }
  return 0;
}

json load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(f);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

// ---- sweep -----------------------------------------------------------------------

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      vals.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("sweep value is not a number: " + item);
    }
  }
  if (vals.empty()) throw ConfigError("empty sweep value list");
  return vals;
}

int do_sweep(const json& root, const std::string& axis, const std::vector<double>& values) {
  const std::vector<std::string> sweepable = {"Theta", "p1", "p2", "t", "q",
                                              "gamma", "beta", "u", "v", "n"};
  if (std::find(sweepable.begin(), sweepable.end(), axis) == sweepable.end())
    throw ConfigError("unknown sweep axis: " + axis);

  std::string merged_csv;
  json per_value = json::array();
  std::vector<Invariant> invariants;
  ExperimentConfig first;
  std::vector<std::vector<double>> fills;  // domination Theta sweep: level1 fill per trial
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    json patched = root;
    if (!patched.contains("params") || !patched["params"].is_object())
      patched["params"] = json::object();
    patched["params"][axis] = values[vi];
    ExperimentConfig C = parse_config(patched);
    if (vi == 0) first = C;
    RunOutput r = execute(C);

    std::stringstream body(r.csv);
    std::string line;
    bool header = true;
    while (std::getline(body, line)) {
      if (line.empty()) continue;
      if (header) {
        if (vi == 0) merged_csv = axis + "," + line + "\n";
        header = false;
        continue;
      }
      merged_csv += fmt(values[vi]) + "," + line + "\n";
    }
    for (const Invariant& i : r.invariants)
      invariants.push_back({i.name + " [" + axis + "=" + fmt(values[vi]) + "]", i.ok, i.value});
    per_value.push_back({{"value", values[vi]}, {"results", r.summary}});
    if (C.kind == "domination" && axis == "Theta" && r.summary.contains("level1_fill"))
      fills.push_back(r.summary["level1_fill"].get<std::vector<double>>());
  }

  // with a shared base seed the instances coincide across values, so the
  // first-level fill must shrink as the threshold exponent grows
  if (!fills.empty()) {
    std::vector<std::size_t> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    bool mono = true;
    double worst = 0.0;
    for (std::size_t oi = 1; oi < order.size(); ++oi)
      for (std::size_t trial = 0; trial < fills[order[oi]].size(); ++trial) {
        double step = fills[order[oi]][trial] - fills[order[oi - 1]][trial];
        worst = std::max(worst, step);
        if (step > 1e-12) mono = false;
      }
    invariants.push_back({"packing monotone in threshold", mono, worst});
  }

  std::string prefix = first.out + "_sweep";
  json j;
  j["header"] = {{"generated_at", iso_now()},
                 {"version", kLibraryVersion},
                 {"cutoff_id", kCutoffId},
                 {"config_hash", hash_hex(first.resolved)}};
  j["axis"] = axis;
  j["values"] = values;
  j["per_value"] = per_value;
  json inv = json::array();
  bool all_ok = true;
  for (const Invariant& i : invariants) {
    inv.push_back({{"name", i.name}, {"ok", i.ok}, {"value", i.value}});
    all_ok = all_ok && i.ok;
  }
  j["invariants"] = inv;
  write_file(prefix + ".json", j.dump(2) + "\n");
  write_file(prefix + ".csv", merged_csv);
  std::cout << "report: " << prefix << ".json\n";
  std::cout << "table: " << prefix << ".csv\n";
  for (const Invariant& i : invariants) {
    std::cout << "invariant " << i.name << ": " << (i.ok ? "pass" : "FAIL") << " ("
              << fmt(i.value) << ")\n";
    if (!i.ok) std::cerr << "invariant failed: " << i.name << "\n";
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cbdlab experiment runner"};
  app.require_subcommand(1);

  std::string run_cfg, run_cfg_flag, run_out;
  CLI::App* run = app.add_subcommand("run", "execute one experiment from a JSON config");
  run->add_option("config_file", run_cfg, "config file");
  run->add_option("--config", run_cfg_flag, "config file");
  run->add_option("--out", run_out, "output path prefix override");

  std::string sweep_cfg, sweep_cfg_flag, sweep_axis, sweep_values;
  CLI::App* sweep = app.add_subcommand("sweep", "repeat a run across parameter values");
  sweep->add_option("config_file", sweep_cfg, "config file");
  sweep->add_option("--config", sweep_cfg_flag, "config file");
  sweep->add_option("--axis", sweep_axis, "parameter to vary")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();

  std::string val_cfg, val_cfg_flag;
  CLI::App* validate = app.add_subcommand("validate", "run the invariants without writing files");
  validate->add_option("config_file", val_cfg, "config file");
  validate->add_option("--config", val_cfg_flag, "config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto pick = [](const std::string& pos, const std::string& flag) {
    if (!pos.empty() && !flag.empty() && pos != flag)
      throw ConfigError("config file given twice");
    if (pos.empty() && flag.empty()) throw ConfigError("no config file given");
    return pos.empty() ? flag : pos;
  };

  try {
    if (run->parsed()) {
      json root = load_config(pick(run_cfg, run_cfg_flag));
      if (!run_out.empty()) root["out"] = run_out;
      ExperimentConfig C = parse_config(root);
      RunOutput r = execute(C);
      return finish(C, r, true, C.out);
    }
    if (sweep->parsed()) {
      json root = load_config(pick(sweep_cfg, sweep_cfg_flag));
      return do_sweep(root, sweep_axis, parse_values(sweep_values));
    }
    json root = load_config(pick(val_cfg, val_cfg_flag));
    ExperimentConfig C = parse_config(root);
    RunOutput r = execute(C);
    return finish(C, r, false, C.out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
