#include "gapkit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "gapkit/decomp.hpp"
#include "gapkit/gaps.hpp"
#include "gapkit/pressure.hpp"
#include "gapkit/random.hpp"
#include "gapkit/shadowspec.hpp"
#include "gapkit/symlab.hpp"
#include "gapkit/systems.hpp"

namespace gapkit::cli {

using nlohmann::json;

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json point_json(const TorusPoint& p) { return p.to_vector(); }

/// Read access to one parameter object with JSON-pointer error paths.
class Params {
 public:
  explicit Params(const json& doc, std::string at = "") : doc_(doc), at_(std::move(at)) {
    if (!doc_.is_object()) throw SchemaError(at_.empty() ? "/" : at_, "expected an object");
  }

  bool has(const std::string& key) const { return doc_.contains(key) && !doc_[key].is_null(); }
  std::string at(const std::string& key) const { return at_ + "/" + key; }
  const json& doc() const { return doc_; }

  const json& node(const std::string& key) const {
    if (!has(key)) throw SchemaError(at(key), "required field is missing");
    return doc_[key];
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw SchemaError(at(key), "required field is missing");
    }
    if (!doc_[key].is_number()) throw SchemaError(at(key), "expected a number");
    return doc_[key].get<double>();
  }

  double positive(const std::string& key, std::optional<double> fallback = std::nullopt) const {
    double v = number(key, fallback);
    if (!(v > 0.0)) throw SchemaError(at(key), "must be positive");
    return v;
  }

  std::size_t count(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw SchemaError(at(key), "required field is missing");
    }
    const auto& v = doc_[key];
    if (!v.is_number_integer() || v.get<long long>() < 0) throw SchemaError(at(key), "expected a non-negative integer");
    return v.get<std::size_t>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw SchemaError(at(key), "required field is missing");
    }
    if (!doc_[key].is_string()) throw SchemaError(at(key), "expected a string");
    return doc_[key].get<std::string>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!doc_[key].is_boolean()) throw SchemaError(at(key), "expected a boolean");
    return doc_[key].get<bool>();
  }

  Params child(const std::string& key) const { return Params(node(key), at(key)); }

 private:
  const json& doc_;
  std::string at_;
};

template <class F>
auto schema_guard(const std::string& at, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw SchemaError(at, e.what());
  }
}

std::vector<double> read_numbers(const json& doc, const std::string& at, std::optional<std::size_t> size = {}) {
  if (!doc.is_array()) throw SchemaError(at, "expected an array of numbers");
  if (size && doc.size() != *size) throw SchemaError(at, "expected " + std::to_string(*size) + " entries");
  std::vector<double> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (!doc[i].is_number()) throw SchemaError(at + "/" + std::to_string(i), "expected a number");
    out.push_back(doc[i].get<double>());
  }
  return out;
}

TorusPoint read_point(const json& doc, std::size_t dim, const std::string& at) {
  return TorusPoint(read_numbers(doc, at, dim));
}

std::vector<TorusPoint> read_points(const json& doc, std::size_t dim, const std::string& at) {
  if (!doc.is_array()) throw SchemaError(at, "expected an array of points");
  std::vector<TorusPoint> out;
  for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(read_point(doc[i], dim, at + "/" + std::to_string(i)));
  return out;
}

DynSystem read_system(const Params& p) {
  json doc = p.node("system");
  if (p.has("rho") && doc.is_object() && doc.contains("kind") && doc["kind"] != "linear" && doc["kind"] != "external")
    doc["rho"] = p.number("rho");
  try {
    return system_from_json(doc);
  } catch (const SchemaError& e) {
    throw SchemaError(p.at("system") + e.pointer(), std::string(e.what()).substr(e.pointer().size() + 2));
  }
}

SFT read_sft(const Params& p) {
  if (p.has("sft")) return sft_from_json(p.node("sft"), p.at("sft"));
  if (p.has("transition")) return sft_from_json(p.doc(), "");
  throw SchemaError(p.at("sft"), "required field is missing");
}

LocallyConstantPotential read_sft_potential(const Params& p, int m) {
  if (p.has("sft") && p.node("sft").is_object() && p.node("sft").contains("weights"))
    return potential_from_json(p.node("sft"), m, p.at("sft"));
  return potential_from_json(p.doc(), m, "");
}

/// Zero ball of radius 0.9 rho at the fixed point unless `lambda` is given.
LambdaFunction read_lambda(const Params& p, const DynSystem& system) {
  if (!p.has("lambda")) {
    double rho = p.has("rho") ? p.positive("rho") : system.rho();
    if (!(rho > 0.0)) throw SchemaError(p.at("lambda"), "required unless a radius rho is known");
    return LambdaFunction::ball_complement(system.fixed_point(), 0.9 * rho);
  }
  Params l = p.child("lambda");
  std::string kind = l.string("kind");
  if (kind == "constant") return LambdaFunction::constant(l.number("value"));
  if (kind == "ball-complement") {
    TorusPoint c = l.has("center") ? read_point(l.node("center"), system.dimension(), l.at("center"))
                                   : system.fixed_point();
    return schema_guard(l.at("radius"), [&] {
      return LambdaFunction::ball_complement(c, l.positive("radius"), l.number("height", 1.0));
    });
  }
  throw SchemaError(l.at("kind"), "unknown lambda kind '" + kind + "'");
}

json lambda_json(const LambdaFunction& lambda) {
  json j = {{"label", lambda.label}, {"supremum", lambda.sup_bound}};
  if (lambda.zero_ball) j["zeroBall"] = {{"center", point_json(lambda.zero_ball->center)},
                                         {"radius", lambda.zero_ball->radius}};
  return j;
}

Potential read_potential(const Params& p, const std::shared_ptr<const DynSystem>& system,
                         const std::string& fallback = "constant") {
  if (!p.has("potential")) {
    if (fallback == "cosine") return Potential::cosine(0, 1.0);
    return Potential::constant(0.0);
  }
  Params q = p.child("potential");
  std::string kind = q.string("kind");
  if (kind == "constant") return Potential::constant(q.number("value", 0.0));
  if (kind == "cosine") {
    std::size_t coord = q.count("coord", 0);
    if (coord >= system->dimension()) throw SchemaError(q.at("coord"), "coordinate out of range");
    return Potential::cosine(coord, q.number("amplitude", 1.0));
  }
  if (kind == "geometric") return Potential::geometric(system, q.number("scale", 1.0));
  throw SchemaError(q.at("kind"), "unknown potential kind '" + kind + "'");
}

PoolSpec read_pool(const Params& p, const DynSystem& system, std::uint64_t seed) {
  PoolSpec spec;
  spec.kind = PoolKind::Random;
  spec.size = 20000;
  spec.seed = seed;
  if (!p.has("pool")) return spec;
  Params q = p.child("pool");
  spec.kind = schema_guard(q.at("kind"), [&] { return parse_pool_kind(q.string("kind", "random")); });
  spec.size = q.count("size", spec.size);
  spec.seed = q.has("seed") ? q.count("seed") : seed;
  spec.leaf_length = q.number("leafLength", spec.leaf_length);
  spec.pitch = q.number("pitch", 0.0);
  if (q.has("leafBase")) spec.leaf_base = read_point(q.node("leafBase"), system.dimension(), q.at("leafBase"));
  if (q.has("points")) spec.points = read_points(q.node("points"), system.dimension(), q.at("points"));
  return spec;
}

SegmentCollection read_collection(const Params& p, const DynSystem& system) {
  if (!p.has("collection")) return SegmentCollection::all();
  Params c = p.child("collection");
  std::string kind = c.string("kind", "all");
  if (kind == "all") return SegmentCollection::all();
  LambdaFunction lambda = read_lambda(p, system);
  double eta = c.positive("eta");
  if (kind == "bad") return SegmentCollection::bad(system, lambda, eta);
  if (kind == "good") {
    auto mode = schema_guard(c.at("mode"), [&] { return parse_decomposition_mode(c.string("mode", "two-sided")); });
    return SegmentCollection::good(system, lambda, eta, mode);
  }
  throw SchemaError(c.at("kind"), "unknown collection kind '" + kind + "'");
}

std::vector<OrbitSegment> read_segments(const Params& p, const DynSystem& system, std::uint64_t seed,
                                        std::size_t default_count, std::size_t default_n) {
  std::vector<OrbitSegment> segs;
  if (p.has("segments")) {
    const json& list = p.node("segments");
    if (!list.is_array() || list.empty()) throw SchemaError(p.at("segments"), "expected a non-empty array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Params s(list[i], p.at("segments") + "/" + std::to_string(i));
      segs.push_back({read_point(s.node("base"), system.dimension(), s.at("base")), s.count("n")});
    }
    return segs;
  }
  std::size_t count = default_count, n = default_n;
  if (p.has("random")) {
    Params r = p.child("random");
    count = r.count("count", count);
    n = r.count("n", n);
  }
  auto rng = make_stream(seed, 0);
  for (std::size_t i = 0; i < count; ++i) segs.push_back({random_point(rng, system.dimension()), n});
  return segs;
}

Rational read_rational(const Params& p, const std::string& key, const Rational& fallback) {
  if (!p.has(key)) return fallback;
  const json& v = p.node(key);
  if (v.is_number_integer()) return Rational(v.get<long long>());
  if (v.is_number()) return Rational(v.get<double>());
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    auto slash = s.find('/');
    try {
      if (slash == std::string::npos) return Rational(BigInt(s));
      BigInt num(s.substr(0, slash)), den(s.substr(slash + 1));
      if (den == 0) throw SchemaError(p.at(key), "zero denominator");
      return Rational(num, den);
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception&) {
      throw SchemaError(p.at(key), "expected a fraction such as \"1/2\"");
    }
  }
  throw SchemaError(p.at(key), "expected a number or a fraction string");
}

std::vector<bool> read_mask(const Params& p, const std::string& key, int m) {
  const json& list = p.node(key);
  if (!list.is_array()) throw SchemaError(p.at(key), "expected an array of symbols");
  std::vector<bool> mask(static_cast<std::size_t>(m), false);
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i].is_number_integer() || list[i].get<int>() < 0 || list[i].get<int>() >= m)
      throw SchemaError(p.at(key) + "/" + std::to_string(i), "symbol out of range");
    mask[list[i].get<std::size_t>()] = true;
  }
  return mask;
}

Word read_word(const json& doc, int m, const std::string& at) {
  if (!doc.is_array()) throw SchemaError(at, "expected an array of symbols");
  Word w;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (!doc[i].is_number_integer() || doc[i].get<int>() < 0 || doc[i].get<int>() >= m)
      throw SchemaError(at + "/" + std::to_string(i), "symbol out of range");
    w.push_back(doc[i].get<int>());
  }
  return w;
}

bool grid_is_exact(const json& doc) {
  if (doc.is_string()) return true;
  if (doc.is_array()) return std::any_of(doc.begin(), doc.end(), [](const json& e) { return grid_is_exact(e); });
  return false;
}

template <class Scalar>
Scalar read_scalar(const json& v, const std::string& at) {
  if constexpr (std::is_same_v<Scalar, double>) {
    if (!v.is_number()) throw SchemaError(at, "expected a number");
    return v.get<double>();
  } else {
    const json box = {{"v", v}};
    try {
      return read_rational(Params(box), "v", Rational(0));
    } catch (const SchemaError&) {
      throw SchemaError(at, "expected a fraction such as \"1/3\"");
    }
  }
}

template <class Scalar>
Grid<Scalar> read_grid(const json& doc, const std::string& at) {
  if (!doc.is_array() || doc.empty()) throw SchemaError(at, "expected a square matrix");
  Grid<Scalar> g;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string row_at = at + "/" + std::to_string(i);
    if (!doc[i].is_array() || doc[i].size() != doc.size()) throw SchemaError(row_at, "matrix must be square");
    std::vector<Scalar> row;
    for (std::size_t j = 0; j < doc[i].size(); ++j)
      row.push_back(read_scalar<Scalar>(doc[i][j], row_at + "/" + std::to_string(j)));
    g.push_back(std::move(row));
  }
  return g;
}

/// {"Q": matrix, "k": order of the rotation factor} or {"phases": [matrices]}.
template <class Scalar>
CyclicMarkov<Scalar> read_cyclic(const Params& p) {
  if (p.has("phases")) {
    const json& list = p.node("phases");
    if (!list.is_array() || list.empty()) throw SchemaError(p.at("phases"), "expected a non-empty array");
    std::vector<Grid<Scalar>> phases;
    for (std::size_t i = 0; i < list.size(); ++i)
      phases.push_back(read_grid<Scalar>(list[i], p.at("phases") + "/" + std::to_string(i)));
    return schema_guard(p.at("phases"), [&] { return make_cyclic<Scalar>(std::move(phases)); });
  }
  auto Q = read_grid<Scalar>(p.node("Q"), p.at("Q"));
  std::size_t k = p.count("k", 1);
  if (k == 0) throw SchemaError(p.at("k"), "must be at least 1");
  return schema_guard(p.at("Q"), [&] { return product_form(make_markov<Scalar>(std::move(Q)), k); });
}

bool chain_is_exact(const Params& p) {
  return (p.has("Q") && grid_is_exact(p.node("Q"))) || (p.has("phases") && grid_is_exact(p.node("phases")));
}

int verdict_status(GapVerdict v) { return v == GapVerdict::Verified ? kSuccess : kInconclusive; }

// ---------------------------------------------------------------------------
// Commands

CommandOutput cmd_decompose(const Params& p, std::uint64_t seed, unsigned) {
  CommandOutput out;
  auto mode = schema_guard(p.at("mode"), [&] { return parse_decomposition_mode(p.string("mode", "two-sided")); });
  double eta = p.positive("eta");
  out.tolerances = {{"comparison", "fma(-eta, k, S_k) < 0"}};

  if (p.has("word")) {
    std::vector<double> lambda = read_numbers(p.node("lambda"), p.at("lambda"));
    Word w = read_word(p.node("word"), static_cast<int>(lambda.size()), p.at("word"));
    auto values = symbol_values(w, lambda);
    auto r = decompose_values<double>(std::span<const double>(values), eta, mode);
    out.result = {{"backend", "symbolic"}, {"p", r.p}, {"g", r.g}, {"s", r.s}, {"eta", eta},
                  {"mode", to_string(mode)}, {"degenerate", r.degenerate}};
    return out;
  }

  DynSystem system = read_system(p);
  LambdaFunction lambda = read_lambda(p, system);
  auto segs = read_segments(p, system, seed, 1000, 50);
  json rows = json::array();
  std::size_t mismatches = 0, bad = 0, good = 0;
  for (const auto& seg : segs) {
    auto r = decompose(system, lambda, eta, seg, mode);
    // Independent re-classification of the good part.
    OrbitSegment middle{system.apply(seg.base, static_cast<long long>(r.p)), r.g};
    auto c = classify_segment(system, lambda, eta, middle);
    bool ok = r.g == 0 || (mode == DecompositionMode::TwoSided         ? c.in_good_two_sided
                           : mode == DecompositionMode::OneSidedPrefix ? c.in_good_prefix
                                                                       : c.in_good_suffix);
    mismatches += ok ? 0 : 1;
    bad += classify_segment(system, lambda, eta, seg).in_bad ? 1 : 0;
    good += r.p == 0 && r.s == 0 ? 1 : 0;
    if (p.has("segments")) rows.push_back({{"base", point_json(seg.base)}, {"n", seg.n}, {"p", r.p}, {"g", r.g}, {"s", r.s}});
  }
  out.result = {{"backend", "torus"},
                {"system", system_to_json(system)},
                {"lambda", lambda_json(lambda)},
                {"eta", eta},
                {"mode", to_string(mode)},
                {"segments", segs.size()},
                {"inBad", bad},
                {"alreadyGood", good},
                {"recertificationMismatches", mismatches}};
  if (!rows.empty()) out.result["decompositions"] = rows;
  return out;
}

CommandOutput cmd_pressure(const Params& p, std::uint64_t seed, unsigned jobs) {
  CommandOutput out;
  std::size_t n_min = p.count("nMin", 8), n_max = p.count("nMax", 14);
  if (n_min > n_max) throw SchemaError(p.at("nMin"), "must not exceed nMax");
  out.csv_header = {"epsilon", "n", "logPartitionSum", "setSize"};
  auto add_rows = [&](const PressureEstimate& e) {
    for (std::size_t i = 0; i < e.log_partition_sums.size(); ++i)
      out.csv_rows.push_back({e.eps, e.n_min + i, finite_or_null(e.log_partition_sums[i]), e.set_sizes[i]});
  };

  if (p.has("sft") || p.has("transition")) {
    SFT sft = read_sft(p);
    auto phi = read_sft_potential(p, sft.alphabet_size());
    double eps = p.positive("eps", 0.5);
    auto e = symbolic_pressure_estimate(sft, phi, eps, n_min, n_max);
    auto exact = sft_pressure(sft, phi);
    add_rows(e);
    out.result = {{"backend", "symbolic"}, {"estimate", e.to_json()}, {"exact", finite_or_null(exact.value)}};
    out.tolerances = {{"fit", "ordinary least squares"}};
    return out;
  }

  auto system = std::make_shared<const DynSystem>(read_system(p));
  auto C = read_collection(p, *system);
  auto phi = read_potential(p, system);
  PoolSpec pool = read_pool(p, *system, seed);
  std::vector<double> ladder;
  if (p.has("epsLadder")) ladder = read_numbers(p.node("epsLadder"), p.at("epsLadder"));
  else ladder = {p.positive("eps", 0.02)};
  if (ladder.empty()) throw SchemaError(p.at("epsLadder"), "expected at least one value");
  auto result = pressure_ladder(*system, C, phi, ladder, n_min, n_max, pool, jobs);
  json estimates = json::array();
  for (const auto& e : result.estimates) {
    estimates.push_back(e.to_json());
    add_rows(e);
  }
  out.result = {{"backend", "torus"},          {"system", system_to_json(*system)},
                {"collection", C.label},        {"potential", phi.label},
                {"pool", pool.to_json()},       {"estimates", estimates},
                {"monotone", result.monotone},  {"warnings", result.warnings}};
  out.tolerances = {{"separation", "torus sup-distance >= eps, fixed-point exact"}};
  return out;
}

CommandOutput cmd_gap_measure(const Params& p, std::uint64_t seed, unsigned jobs) {
  CommandOutput out;
  DynSystem system = read_system(p);
  LambdaFunction lambda = read_lambda(p, system);
  MeasureEstimateOptions o;
  o.samples = p.count("samples", o.samples);
  o.orbit_length = p.count("orbitLength", o.orbit_length);
  o.stderr_factor = p.number("stderrFactor", o.stderr_factor);
  o.semiconj_tol = p.positive("semiconjTol", o.semiconj_tol);
  o.seed = seed;
  o.jobs = jobs;
  auto report = schema_guard(p.at("samples"), [&] { return measure_estimate_gap(system, lambda, o); });
  out.result = report.to_json();
  out.tolerances = report.tolerances;
  out.status = verdict_status(report.verdict);
  return out;
}

CommandOutput cmd_gap_interweave(const Params& p, std::uint64_t, unsigned) {
  CommandOutput out;
  SFT X = (p.has("sft") || p.has("transition")) ? read_sft(p) : SFT::full_shift(2);
  std::vector<bool> in_A(static_cast<std::size_t>(X.alphabet_size()), false);
  if (p.has("A")) in_A = read_mask(p, "A", X.alphabet_size());
  else in_A[0] = true;
  InterweaveSpec spec{X, in_A, 0.25, 0, 4, 8, Rational(1, 2), std::nullopt, std::nullopt, 2'000'000, 20'000};
  spec.eps = p.positive("eps", spec.eps);
  spec.tau = p.count("tau", spec.tau);
  spec.T = p.count("T", spec.T);
  spec.N = p.count("N", spec.N);
  spec.alpha = read_rational(p, "alpha", spec.alpha);
  if (p.has("y")) spec.y = static_cast<int>(p.count("y"));
  if (p.has("C")) spec.C = p.positive("C");
  spec.construct_budget = p.count("constructBudget", spec.construct_budget);
  spec.pairwise_limit = p.count("pairwiseLimit", spec.pairwise_limit);
  auto res = schema_guard(p.at("T"), [&] { return interweave_bound(spec); });
  out.result = {{"run", res.run.to_json()}, {"report", res.report.to_json()}};
  out.tolerances = res.report.tolerances;
  out.status = verdict_status(res.report.verdict);
  return out;
}

CommandOutput cmd_gap_radius(const Params& p, std::uint64_t seed, unsigned) {
  CommandOutput out;
  double p_full, p_A;
  json extra = json::object();
  if (p.has("pFull")) {
    p_full = p.number("pFull");
    p_A = p.number("pA");
  } else {
    SFT X = read_sft(p);
    auto phi = read_sft_potential(p, X.alphabet_size());
    SFT A = X.restrict_to(read_mask(p, "A", X.alphabet_size()));
    p_full = sft_pressure(X, phi).value;
    p_A = sft_pressure(A, phi).value;
    if (p_full > p_A) {
      // Random symbol weights inside the radius keep the gap.
      double radius = perturbation_radius(p_full, p_A);
      std::size_t trials = p.count("trials", 0);
      auto rng = make_stream(seed, 0);
      std::size_t kept = 0;
      double worst = INFINITY;
      for (std::size_t i = 0; i < trials; ++i) {
        LocallyConstantPotential psi = phi;
        for (auto& w : psi.symbol) w += uniform(rng, -radius, radius) * (1.0 - 1e-9);
        double gap = sft_pressure(X, psi).value - sft_pressure(A, psi).value;
        worst = std::min(worst, gap);
        kept += gap > 0.0 ? 1 : 0;
      }
      extra = {{"trials", trials}, {"gapKept", kept}, {"smallestGap", finite_or_null(worst)}};
    }
  }
  auto report = perturbation_report(p_full, p_A);
  out.result = report.to_json();
  if (!extra.empty()) out.result["perturbations"] = extra;
  out.tolerances = report.tolerances;
  out.status = verdict_status(report.verdict);
  return out;
}

CommandOutput cmd_shadow(const Params& p, std::uint64_t seed, unsigned) {
  CommandOutput out;
  DynSystem system = read_system(p);
  auto split = schema_guard(p.at("system"), [&] { return HyperbolicSplitting::of(system); });
  const std::size_t d = system.dimension();
  std::vector<TorusPoint> points;
  if (p.has("points")) {
    points = read_points(p.node("points"), d, p.at("points"));
  } else {
    TorusPoint x = p.has("base") ? read_point(p.node("base"), d, p.at("base")) : TorusPoint::origin(d);
    std::size_t n = p.count("n", 10);
    double noise = p.number("noise", 1e-4);
    auto rng = make_stream(seed, 0);
    for (std::size_t i = 0; i < n; ++i) {
      points.push_back(x);
      std::vector<double> kick(d);
      for (auto& k : kick) k = uniform(rng, -noise, noise);
      x = translate(split.model().forward(x), kick);
    }
  }
  if (points.empty()) throw SchemaError(p.at("points"), "expected at least one point");
  double tol = p.positive("tol", 1e-12);
  out.tolerances = {{"residual", tol}, {"threshold", 0.25}};
  auto pseudo = PseudoOrbit::measure(split.model(), points);
  json base = {{"KA", split.shadow_constant()}, {"contraction", split.contraction()},
               {"jumpBound", pseudo.jump_bound}, {"length", points.size()}};
  try {
    auto r = shadow(split, pseudo, tol);
    base["shadowable"] = true;
    base["y"] = point_json(r.y);
    base["error"] = r.error;
    base["bound"] = r.bound;
    base["residual"] = r.residual;
    base["recomputedError"] = orbit_error(split.model(), r.y, points);
  } catch (const ShadowingError& e) {
    base["shadowable"] = false;
    base["factor"] = e.contraction_factor();
    out.status = kInconclusive;
  }
  out.result = base;
  return out;
}

CommandOutput cmd_semiconj(const Params& p, std::uint64_t seed, unsigned jobs) {
  CommandOutput out;
  DynSystem system = read_system(p);
  double tol = p.positive("tol", 1e-10);
  std::size_t samples = p.count("samples", 1000);
  out.tolerances = {{"window", tol}, {"threshold", 0.25}};
  try {
    Semiconjugacy pi(system, tol, p.count("window", 0));
    auto check = check_semiconjugacy(pi, samples, seed, jobs);
    out.result = {{"system", system_to_json(system)},
                  {"window", pi.window()},
                  {"KA", pi.splitting().shadow_constant()},
                  {"c0", pi.c0_distance()},
                  {"delta", pi.delta_bound()},
                  {"samples", check.samples},
                  {"maxResidual", check.max_residual},
                  {"maxDisplacement", check.max_displacement},
                  {"maxExcess", finite_or_null(check.max_excess)}};
    if (p.has("points")) {
      json values = json::array();
      for (const auto& x : read_points(p.node("points"), system.dimension(), p.at("points"))) {
        auto v = pi(x);
        values.push_back({{"x", point_json(x)}, {"pi", point_json(v.pi)}, {"displacement", v.displacement}});
      }
      out.result["values"] = values;
    }
  } catch (const ShadowingError& e) {
    out.result = {{"system", system_to_json(system)}, {"shadowable", false}, {"factor", e.contraction_factor()}};
    out.status = kInconclusive;
  } catch (const InvalidArgument& e) {
    throw SchemaError(p.at("system"), e.what());
  }
  return out;
}

CommandOutput cmd_glue(const Params& p, std::uint64_t seed, unsigned) {
  CommandOutput out;
  if (p.has("sft") || p.has("transition")) {
    SFT sft = read_sft(p);
    const json& list = p.node("words");
    if (!list.is_array()) throw SchemaError(p.at("words"), "expected an array of words");
    std::vector<Word> words;
    for (std::size_t i = 0; i < list.size(); ++i)
      words.push_back(read_word(list[i], sft.alphabet_size(), p.at("words") + "/" + std::to_string(i)));
    std::size_t tau = p.count("tau");
    Word w = schema_guard(p.at("words"), [&] { return symbolic_glue(sft, words, tau); });
    out.result = {{"backend", "symbolic"}, {"tau", tau}, {"word", w}, {"allowed", sft.word_allowed(w)}};
    return out;
  }
  DynSystem system = read_system(p);
  auto segs = read_segments(p, system, seed, 3, 10);
  double delta = p.positive("delta", 0.05);
  std::size_t max_tau = p.count("maxTau", 100);
  out.tolerances = {{"delta", delta}};
  auto g = schema_guard(p.at("system"), [&] { return spec_glue(system, segs, delta, max_tau); });
  auto verified = verify_glue(system, g, segs);
  out.result = {{"backend", "torus"},
                {"system", system_to_json(system)},
                {"segments", segs.size()},
                {"y", point_json(g.y)},
                {"tau", g.tau},
                {"starts", g.starts},
                {"segmentErrors", g.segment_errors},
                {"verifiedErrors", verified},
                {"maxError", *std::max_element(verified.begin(), verified.end())}};
  return out;
}

CommandOutput cmd_probe_ne(const Params& p, std::uint64_t seed, unsigned jobs) {
  CommandOutput out;
  DynSystem system = read_system(p);
  double eps = p.positive("eps", 0.1);
  std::size_t K = p.count("K", 30), samples = p.count("samples", 50000);
  double floor = p.positive("floor", 1e-9);
  out.tolerances = {{"floor", floor}};
  auto r = expansivity_probe(system, eps, K, samples, seed, floor, jobs);
  std::size_t shown = std::min(r.pairs.size(), p.count("maxPairsReported", 100));
  json pairs = json::array();
  for (std::size_t i = 0; i < shown; ++i) pairs.push_back({point_json(r.pairs[i].first), point_json(r.pairs[i].second)});
  out.result = {{"system", system_to_json(system)},
                {"eps", eps},
                {"K", K},
                {"samples", samples},
                {"pairsTested", 2 * samples},
                {"candidates", r.pairs.size()},
                {"certified", certify_ne_pairs(system, r)},
                {"pairs", pairs}};
  return out;
}

CommandOutput cmd_probe_bowen(const Params& p, std::uint64_t seed, unsigned jobs) {
  CommandOutput out;
  auto system = std::make_shared<const DynSystem>(read_system(p));
  auto phi = read_potential(p, system, "cosine");
  LambdaFunction lambda = p.has("lambda") || p.has("rho") ? read_lambda(p, *system) : LambdaFunction::constant(1.0);
  double eta = p.positive("eta", 1.0), eps = p.positive("eps", 0.05);
  std::size_t n_min = p.count("nMin", 5), n_max = p.count("nMax", 25), samples = p.count("samples", 2000);
  if (n_min > n_max) throw SchemaError(p.at("nMin"), "must not exceed nMax");
  auto t = bowen_probe(*system, phi, lambda, eta, eps, n_min, n_max, samples, seed, jobs);
  json rows = json::array();
  out.csv_header = {"n", "maxGap", "pairs"};
  for (const auto& r : t.rows) {
    rows.push_back({{"n", r.n}, {"maxGap", r.max_gap}, {"pairs", r.pairs}});
    out.csv_rows.push_back({r.n, r.max_gap, r.pairs});
  }
  out.result = {{"system", system_to_json(*system)}, {"potential", phi.label}, {"lambda", lambda_json(lambda)},
                {"eta", eta}, {"eps", eps}, {"rows", rows}, {"slope", finite_or_null(t.slope)},
                {"stderr", finite_or_null(t.stderr_slope)}, {"diagnostic", t.diagnostic}};
  out.tolerances = {{"bowenBall", eps}};
  return out;
}

json pressure_json(const SftPressure& r) {
  json comps = json::array();
  for (double v : r.component_values) comps.push_back(finite_or_null(v));
  return {{"value", finite_or_null(r.value)}, {"lower", finite_or_null(r.lower)}, {"upper", finite_or_null(r.upper)},
          {"method", r.method}, {"reducible", r.reducible}, {"components", comps}, {"warnings", r.warnings}};
}

CommandOutput cmd_sft_pressure(const Params& p, std::uint64_t, unsigned) {
  CommandOutput out;
  SFT sft = read_sft(p);
  auto phi = read_sft_potential(p, sft.alphabet_size());
  out.result = pressure_json(sft_pressure(sft, phi));
  out.result["sft"] = sft.to_json();
  out.tolerances = {{"spectralRadius", 1e-12}};
  return out;
}

CommandOutput cmd_sft_binfty(const Params& p, std::uint64_t, unsigned) {
  CommandOutput out;
  SFT sft = read_sft(p);
  auto phi = read_sft_potential(p, sft.alphabet_size());
  auto lambda = read_numbers(p.node("lambda"), p.at("lambda"), static_cast<std::size_t>(sft.alphabet_size()));
  auto b = exact_B_infinity(sft, lambda, phi);
  auto cert = certify_spectral_gap(sft, b.subshift);
  double h_full = sft_entropy(sft).value;
  out.result = {{"zeroSymbols", b.zero_symbols},
                {"empty", b.empty},
                {"entropy", finite_or_null(b.entropy)},
                {"pressure", pressure_json(b.pressure)},
                {"fullEntropy", finite_or_null(h_full)},
                {"fullPressure", pressure_json(sft_pressure(sft, phi))},
                {"strictEntropyGap", cert.certified},
                {"certificate", {{"fullLower", cert.full_lower.str()}, {"subUpper", cert.sub_upper.str()}}}};
  out.tolerances = {{"certificate", "exact rational"}};
  return out;
}

template <class Scalar>
json joining_json(const Params& p, JoiningKind kind) {
  auto mu = read_cyclic<Scalar>(p.child("mu"));
  auto nu = p.has("nu") ? read_cyclic<Scalar>(p.child("nu")) : mu;
  auto j = schema_guard(p.at("kind"), [&] { return build_joining(kind, mu, nu); });
  auto cert = certify_marginals(j, 1e-12);
  double h = joining_entropy(j), h_mu = markov_entropy(j.first), h_nu = markov_entropy(j.second);
  return {{"kind", to_string(kind)}, {"exact", std::is_same_v<Scalar, Rational>},
          {"entropy", h}, {"hMu", h_mu}, {"hNu", h_nu},
          {"productDefect", h - (h_mu + h_nu)}, {"upperBoundHolds", h <= h_mu + h_nu + 1e-12},
          {"marginalsOk", cert.ok}, {"marginalDeviation", cert.max_deviation}, {"states", j.joint.size()}};
}

CommandOutput cmd_sft_joining(const Params& p, std::uint64_t, unsigned) {
  CommandOutput out;
  auto kind = schema_guard(p.at("kind"), [&] { return parse_joining_kind(p.string("kind", "product")); });
  if (kind == JoiningKind::Coupling) throw SchemaError(p.at("kind"), "random couplings are not a CLI joining");
  bool exact = chain_is_exact(p.child("mu")) || (p.has("nu") && chain_is_exact(p.child("nu")));
  out.result = exact ? joining_json<Rational>(p, kind) : joining_json<double>(p, kind);
  out.tolerances = {{"marginals", exact ? 0.0 : 1e-12}, {"entropyInequality", 1e-12}};
  return out;
}

CommandOutput cmd_sft_fiber(const Params& p, std::uint64_t, unsigned) {
  CommandOutput out;
  auto xi = schema_guard(p.at("partition"), [&] { return parse_fiber_partition(p.string("partition", "markov")); });
  FiberEntropy f;
  if (chain_is_exact(p)) f = fiber_entropy_check(read_cyclic<Rational>(p), xi);
  else f = fiber_entropy_check(read_cyclic<double>(p), xi);
  out.result = {{"partition", to_string(xi)}, {"lhs", f.lhs}, {"rhs", f.rhs}, {"difference", f.lhs - f.rhs}};
  out.tolerances = {{"identity", 1e-9}};
  return out;
}

// ---------------------------------------------------------------------------
// Report bundle

json load_config_file(const std::string& path);

std::vector<std::pair<std::string, json>> default_bundle() {
  json cat = {{"kind", "linear"}, {"matrix", {{2, 1}, {1, 1}}}};
  json mane = {{"kind", "perturbed-linear"}, {"matrix", {{2, 1}, {1, 1}}}, {"fixedPoint", {0.0, 0.0}},
               {"rho", 0.05}, {"profile", {{"theta", 1.2}, {"target", "unstable"}}}};
  json golden = {{"m", 2}, {"transition", {{1, 1}, {1, 0}}}};
  return {
      {"sft pressure", golden},
      {"sft binfty", {{"sft", golden}, {"lambda", {0.0, 1.0}}}},
      {"sft joining", {{"kind", "rel-independent"}, {"mu", json::parse(R"({"Q": [["1/3", "2/3"], ["1/2", "1/2"]], "k": 2})")}}},
      {"gap interweave", {{"T", 4}, {"N", 8}, {"alpha", "1/2"}}},
      {"gap radius", {{"sft", {{"m", 2}, {"transition", {{1, 1}, {1, 1}}}}}, {"A", {0}}, {"trials", 50}}},
      {"gap measure", {{"system", mane}, {"samples", 4000}, {"orbitLength", 50}}},
      {"decompose", {{"system", cat}, {"lambda", {{"kind", "ball-complement"}, {"radius", 0.1}}}, {"eta", 0.5},
                     {"random", {{"count", 2000}, {"n", 40}}}}},
      {"pressure", {{"system", cat}, {"eps", 0.05}, {"nMin", 4}, {"nMax", 8},
                    {"pool", {{"kind", "leaf"}, {"leafLength", 0.02}}}}},
      {"shadow", {{"system", cat}, {"base", {0.1, 0.2}}, {"n", 12}, {"noise", 1e-4}}},
      {"semiconj", {{"system", mane}, {"samples", 200}}},
      {"glue", {{"system", cat}, {"delta", 0.05}}},
      {"probe ne", {{"system", cat}, {"samples", 5000}}},
      {"probe bowen", {{"system", cat}, {"samples", 500}, {"nMin", 5}, {"nMax", 15}}},
  };
}

CommandOutput cmd_report_bundle(const Params& p, std::uint64_t seed, unsigned jobs) {
  CommandOutput out;
  std::vector<std::pair<std::string, json>> entries;
  if (p.has("entries")) {
    const json& list = p.node("entries");
    if (!list.is_array()) throw SchemaError(p.at("entries"), "expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Params e(list[i], p.at("entries") + "/" + std::to_string(i));
      std::string c = e.string("command");
      if (c == "report bundle") throw SchemaError(e.at("command"), "bundles do not nest");
      entries.emplace_back(c, e.has("params") ? e.node("params") : json::object());
    }
  } else {
    entries = default_bundle();
  }
  json reports = json::array();
  int status = kSuccess;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [command, params] = entries[i];
    std::uint64_t entry_seed = splitmix64(seed + i);
    CommandOutput o;
    try {
      o = execute(command, params, entry_seed, jobs);
    } catch (const SchemaError& e) {
      throw SchemaError(p.at("entries") + "/" + std::to_string(i) + "/params" + e.pointer(),
                        std::string(e.what()).substr(e.pointer().size() + 2));
    }
    status = std::max(status, o.status);
    reports.push_back(make_report(command, params, entry_seed, o));
  }
  out.result = {{"entries", reports}, {"count", reports.size()}};
  out.status = status;
  return out;
}

using Handler = CommandOutput (*)(const Params&, std::uint64_t, unsigned);

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table = {
      {"decompose", cmd_decompose},       {"pressure", cmd_pressure},
      {"gap measure", cmd_gap_measure},   {"gap interweave", cmd_gap_interweave},
      {"gap radius", cmd_gap_radius},     {"shadow", cmd_shadow},
      {"semiconj", cmd_semiconj},         {"glue", cmd_glue},
      {"probe ne", cmd_probe_ne},         {"probe bowen", cmd_probe_bowen},
      {"sft pressure", cmd_sft_pressure}, {"sft binfty", cmd_sft_binfty},
      {"sft joining", cmd_sft_joining},   {"sft fiber", cmd_sft_fiber},
      {"report bundle", cmd_report_bundle},
  };
  return table;
}

json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("/", source + " is not valid JSON: " + e.what());
  }
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

/// A string "system" or "sft" names a file next to the config.
void inline_references(json& params, const std::filesystem::path& dir) {
  for (const char* key : {"system", "sft"}) {
    if (!params.contains(key) || !params[key].is_string()) continue;
    std::filesystem::path ref = params[key].get<std::string>();
    if (ref.is_relative() && !std::filesystem::exists(ref)) ref = dir / ref;
    params[key] = load_config_file(ref.string());
  }
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, _] : handlers()) v.push_back(name);
    return v;
  }();
  return names;
}

CommandOutput execute(const std::string& command, const json& params, std::uint64_t seed, unsigned jobs) {
  auto it = handlers().find(command);
  if (it == handlers().end()) throw InvalidArgument("unknown command '" + command + "'");
  json resolved = params.is_null() ? json::object() : params;
  inline_references(resolved, std::filesystem::current_path());
  return it->second(Params(resolved), seed, std::max(1u, jobs));
}

json make_report(const std::string& command, const json& params, std::uint64_t seed, const CommandOutput& output) {
  return {{"tool", kToolName},
          {"version", kToolVersion},
          {"command", command},
          {"config", {{"command", command}, {"seed", seed}, {"params", params}}},
          {"tolerances", output.tolerances},
          {"status", output.status},
          {"result", output.result}};
}

std::string render_report(const json& report) { return report.dump(2) + "\n"; }

std::string render_csv(const CommandOutput& output) {
  std::ostringstream os;
  for (std::size_t i = 0; i < output.csv_header.size(); ++i) os << (i ? "," : "") << output.csv_header[i];
  os << "\n";
  for (const auto& row : output.csv_rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << (row[i].is_null() ? "" : row[i].dump());
    os << "\n";
  }
  return os.str();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pressure-gap experiments on toral maps and subshifts of finite type", kToolName};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  struct Options {
    std::uint64_t seed = 0;
    unsigned jobs = default_jobs();
    std::string out_path, csv_path, config_path, inline_json, system_path, sft_text;
    std::vector<std::string> sets;
    std::map<std::string, double> numbers;
    std::map<std::string, std::size_t> counts;
    std::string alpha;
  } opt;

  std::map<CLI::App*, std::string> leaf_names;
  auto add_leaf = [&](CLI::App* parent, const std::string& name, const std::string& help,
                      const std::string& full) {
    CLI::App* c = parent->add_subcommand(name, help);
    leaf_names[c] = full;
    c->add_option("--seed", opt.seed, "64-bit seed");
    c->add_option("--jobs", opt.jobs, "worker threads (output does not depend on it)")->check(CLI::PositiveNumber);
    c->add_option("--out", opt.out_path, "write the JSON report here instead of stdout");
    c->add_option("--csv", opt.csv_path, "write the plot series as CSV");
    c->add_option("--config", opt.config_path, "JSON parameter file");
    c->add_option("--inline", opt.inline_json, "JSON parameters merged over --config");
    c->add_option("--system", opt.system_path, "system descriptor file");
    c->add_option("--sft", opt.sft_text, "SFT file or inline JSON");
    c->add_option("--set", opt.sets, "key=value override, value parsed as JSON when possible");
    for (const char* key : {"rho", "eps", "eta", "delta"})
      c->add_option(std::string("--") + key, opt.numbers[key]);
    for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
             {"--samples", "samples"}, {"--K", "K"}, {"--T", "T"}, {"--N", "N"}, {"--tau", "tau"},
             {"--n-min", "nMin"}, {"--n-max", "nMax"}})
      c->add_option(flag, opt.counts[key]);
    c->add_option("--alpha", opt.alpha, "fraction such as 1/2");
    return c;
  };

  add_leaf(&app, "decompose", "lambda-decomposition of orbit segments or words", "decompose");
  add_leaf(&app, "pressure", "pressure estimate from separated sets", "pressure");
  add_leaf(&app, "shadow", "shadow a pseudo-orbit of a hyperbolic linear map", "shadow");
  add_leaf(&app, "semiconj", "semiconjugacy to the linear model", "semiconj");
  add_leaf(&app, "glue", "specification gluing of orbit segments", "glue");
  CLI::App* gap = app.add_subcommand("gap", "pressure-gap certificates")->require_subcommand(1);
  add_leaf(gap, "measure", "measure-estimate route", "gap measure");
  add_leaf(gap, "interweave", "interweaving count on a subshift", "gap interweave");
  add_leaf(gap, "radius", "perturbation radius of a pressure gap", "gap radius");
  CLI::App* probe = app.add_subcommand("probe", "expansivity and Bowen probes")->require_subcommand(1);
  add_leaf(probe, "ne", "non-expansive pair search", "probe ne");
  add_leaf(probe, "bowen", "Bowen distortion table", "probe bowen");
  CLI::App* sft = app.add_subcommand("sft", "exact subshift computations")->require_subcommand(1);
  add_leaf(sft, "pressure", "pressure of a locally constant potential", "sft pressure");
  add_leaf(sft, "binfty", "B-infinity and the strict entropy gap", "sft binfty");
  add_leaf(sft, "joining", "joinings of Markov measures", "sft joining");
  add_leaf(sft, "fiber", "fiber entropy identity", "sft fiber");
  CLI::App* report = app.add_subcommand("report", "report bundles")->require_subcommand(1);
  add_leaf(report, "bundle", "run a bundle of commands", "report bundle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, q;
    int code = app.exit(e, o, q);
    out << o.str();
    err << q.str();
    return code == 0 ? kSuccess : kFailure;
  }

  CLI::App* leaf = nullptr;
  for (const auto& [app_ptr, name] : leaf_names)
    if (app_ptr->parsed()) leaf = app_ptr;
  const std::string command = leaf_names.at(leaf);

  try {
    json params = json::object();
    std::filesystem::path base_dir = std::filesystem::current_path();
    if (!opt.config_path.empty()) {
      params = load_config_file(opt.config_path);
      if (!params.is_object()) throw SchemaError("/", "config must be an object");
      base_dir = std::filesystem::absolute(opt.config_path).parent_path();
      inline_references(params, base_dir);
    }
    if (!opt.inline_json.empty()) {
      json extra = parse_json_text(opt.inline_json, "--inline");
      if (!extra.is_object()) throw SchemaError("/", "--inline must be an object");
      params.merge_patch(extra);
    }
    if (!opt.system_path.empty()) params["system"] = load_config_file(opt.system_path);
    if (!opt.sft_text.empty()) {
      auto first = opt.sft_text.find_first_not_of(" \t\n");
      params["sft"] = first != std::string::npos && opt.sft_text[first] == '{'
                          ? parse_json_text(opt.sft_text, "--sft")
                          : load_config_file(opt.sft_text);
    }
    for (const auto& [key, value] : opt.numbers)
      if (leaf->count("--" + key)) params[key] = value;
    for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
             {"--samples", "samples"}, {"--K", "K"}, {"--T", "T"}, {"--N", "N"}, {"--tau", "tau"},
             {"--n-min", "nMin"}, {"--n-max", "nMax"}})
      if (leaf->count(flag)) params[key] = opt.counts[key];
    if (leaf->count("--alpha")) params["alpha"] = opt.alpha;
    for (const auto& s : opt.sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw SchemaError("/", "--set expects key=value, got '" + s + "'");
      std::string key = s.substr(0, eq), value = s.substr(eq + 1);
      json v = json::parse(value, nullptr, false);
      params[key] = v.is_discarded() ? json(value) : v;
    }
    inline_references(params, base_dir);

    CommandOutput output = execute(command, params, opt.seed, opt.jobs);
    std::string text = render_report(make_report(command, params, opt.seed, output));
    if (opt.out_path.empty()) {
      out << text;
    } else {
      std::ofstream f(opt.out_path, std::ios::binary);
      if (!f) throw Error("cannot write " + opt.out_path);
      f << text;
    }
    if (!opt.csv_path.empty()) {
      if (output.csv_header.empty()) throw InvalidArgument("command '" + command + "' has no CSV series");
      std::ofstream f(opt.csv_path, std::ios::binary);
      if (!f) throw Error("cannot write " + opt.csv_path);
      f << render_csv(output);
    }
    return output.status;
  } catch (const SchemaError& e) {
    err << "schema error at " << e.pointer() << ": " << std::string(e.what()).substr(e.pointer().size() + 2)
        << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace gapkit::cli
