#include "gapkit/gaps.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "gapkit/random.hpp"

namespace gapkit {

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double log_big(const BigInt& v) {
  if (v <= 0) return -INFINITY;
  std::size_t bits = boost::multiprecision::msb(v);
  if (bits < 63) return std::log(static_cast<double>(v.convert_to<unsigned long long>()));
  std::size_t shift = bits - 62;
  BigInt top = v >> shift;
  return std::log(static_cast<double>(top.convert_to<unsigned long long>())) +
         static_cast<double>(shift) * std::log(2.0);
}

std::string big_string(const BigInt& v) { return v.str(); }

bool linear_kind(const DynSystem& s) {
  if (s.kind() == SystemKind::Linear) return true;
  if (s.kind() == SystemKind::External && !s.factors().empty())
    return std::all_of(s.factors().begin(), s.factors().end(), linear_kind);
  return false;
}

}  // namespace

std::string to_string(GapVerdict v) {
  switch (v) {
    case GapVerdict::Verified: return "gap-verified";
    case GapVerdict::NotVerified: return "gap-not-verified";
    case GapVerdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

GapVerdict parse_gap_verdict(const std::string& name) {
  if (name == "gap-verified") return GapVerdict::Verified;
  if (name == "gap-not-verified") return GapVerdict::NotVerified;
  if (name == "inconclusive") return GapVerdict::Inconclusive;
  throw InvalidArgument("unknown verdict: " + name);
}

nlohmann::json GapReport::to_json() const {
  return {{"method", method},       {"inputs", inputs},         {"estimates", estimates},
          {"tolerances", tolerances}, {"verdict", to_string(verdict)}, {"notes", notes}};
}

// ---------------------------------------------------------------------------
// Measure estimate

GapReport measure_estimate_gap(const DynSystem& system, const LambdaFunction& lambda,
                               const MeasureEstimateOptions& options) {
  if (options.samples < 2 || options.orbit_length == 0)
    throw InvalidArgument("measure estimate needs at least two orbits of positive length");
  GapReport r;
  r.method = "measure-estimate";
  r.inputs = {{"system", system_to_json(system)},
              {"lambda", lambda.label},
              {"samples", options.samples},
              {"orbitLength", options.orbit_length},
              {"seed", options.seed}};
  r.tolerances = {{"stderrFactor", options.stderr_factor}, {"threshold", 0.5}};
  if (lambda.zero_ball)
    r.inputs["zeroBall"] = {{"center", lambda.zero_ball->center.to_vector()}, {"radius", lambda.zero_ball->radius}};

  const bool linear = linear_kind(system);
  const bool perturbed = system.kind() == SystemKind::PerturbedLinear;
  if (!linear && !perturbed) {
    r.verdict = GapVerdict::Inconclusive;
    r.notes.push_back("no equilibrium-state sampler for system kind " + to_string(system.kind()));
    return r;
  }

  // Haar is invariant for the linear base, so orbit averages are unbiased.
  const DynSystem base = linear ? system : system.linear_base();
  const std::size_t d = system.dimension();
  std::vector<double> averages(options.samples);
  parallel_for(options.samples, options.jobs, [&](std::size_t i) {
    auto rng = make_stream(options.seed, i);
    TorusPoint x = random_point(rng, d);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < options.orbit_length; ++k) {
      if (lambda(x) == 0.0) ++hits;
      x = base.forward(x);
    }
    averages[i] = static_cast<double>(hits) / static_cast<double>(options.orbit_length);
  });
  double mean = 0.0;
  for (double a : averages) mean += a;
  mean /= static_cast<double>(options.samples);
  double var = 0.0;
  for (double a : averages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(options.samples - 1);
  double se = std::sqrt(var / static_cast<double>(options.samples));
  r.estimates["haarEstimate"] = mean;
  r.estimates["stderr"] = se;
  if (lambda.zero_ball) r.estimates["haarExact"] = std::min(1.0, std::pow(2 * lambda.zero_ball->radius, double(d)));

  double chosen = mean, margin = options.stderr_factor * se;
  if (perturbed) {
    if (!lambda.zero_ball) {
      r.estimates["chosenEstimate"] = nullptr;
      r.verdict = GapVerdict::Inconclusive;
      r.notes.push_back("pushforward bound needs a ball-shaped zero set");
      return r;
    }
    double delta = 0.0;
    try {
      Semiconjugacy pi(system, options.semiconj_tol);
      delta = pi.delta_bound();
      r.estimates["c0Distance"] = pi.c0_distance();
      r.estimates["shadowConstant"] = pi.splitting().shadow_constant();
    } catch (const ShadowingError& e) {
      r.verdict = GapVerdict::Inconclusive;
      r.notes.push_back(std::string("semiconjugacy unavailable: ") + e.what());
      return r;
    }
    double radius = lambda.zero_ball->radius;
    chosen = std::min(1.0, std::pow(2 * (radius + delta), static_cast<double>(d)));
    margin = 0.0;
    r.estimates["delta"] = delta;
    r.estimates["pushforwardBound"] = chosen;
    r.notes.push_back("chosen estimate is the Haar measure of the closed ball of radius r + delta");
  }
  r.estimates["chosenEstimate"] = chosen;
  r.verdict = chosen + margin < 0.5 ? GapVerdict::Verified : GapVerdict::NotVerified;
  return r;
}

// ---------------------------------------------------------------------------
// Interweaving

std::vector<std::size_t> interweave_blocks(const std::vector<std::size_t>& js, std::size_t T, std::size_t N,
                                           std::size_t tau) {
  const std::size_t link = 2 * tau + 1;
  std::vector<std::size_t> k;
  if (js.empty()) return {N * T};
  k.push_back(js.front() * T);
  for (std::size_t i = 1; i < js.size(); ++i) k.push_back((js[i] - js[i - 1]) * T - link);
  k.push_back((N - js.back()) * T - link);
  return k;
}

nlohmann::json InterweaveRun::to_json() const {
  nlohmann::json j = {{"T", T},
                      {"N", N},
                      {"tau", tau},
                      {"alpha", alpha.str()},
                      {"alphaN", alpha_n},
                      {"eps", eps},
                      {"y", y},
                      {"hA", h_A},
                      {"hX", h_X},
                      {"C", C},
                      {"CMeasured", C_measured},
                      {"interweaveSets", big_string(interweave_sets)},
                      {"unionCount", big_string(union_count)},
                      {"productIdentity", product_identity},
                      {"separatedSorted", separated_sorted},
                      {"binomialRegime", binomial_regime},
                      {"empiricalBound", finite_or_null(empirical)},
                      {"finiteRhs", finite_or_null(finite_rhs)},
                      {"asymptoticRhs", finite_or_null(asymptotic_rhs)},
                      {"alphaThreshold", alpha_threshold},
                      {"alphaBelowThreshold", alpha_below_threshold}};
  j["constructed"] = constructed ? nlohmann::json(*constructed) : nlohmann::json(nullptr);
  j["separatedPairwise"] = separated_pairwise ? nlohmann::json(*separated_pairwise) : nlohmann::json(nullptr);
  return j;
}

namespace {

/// Next k-subset of {1, ..., n} in lexicographic order.
bool next_combination(std::vector<std::size_t>& c, std::size_t n) {
  const std::size_t k = c.size();
  for (std::size_t i = k; i-- > 0;) {
    if (c[i] < n - (k - 1 - i)) {
      ++c[i];
      for (std::size_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
      return true;
    }
  }
  return false;
}

/// sum over interweaving sets of prod count(k_i), by DP over the last chosen time.
BigInt union_count_dp(std::size_t N, std::size_t T, std::size_t tau, std::size_t m,
                      const std::function<BigInt(std::size_t)>& count) {
  const std::size_t link = 2 * tau + 1;
  if (m == 0) return count(N * T);
  // F[c][j]: c times chosen, the last at j T.
  std::vector<std::vector<BigInt>> F(m + 1, std::vector<BigInt>(N, BigInt(0)));
  for (std::size_t j = 1; j < N; ++j) F[1][j] = count(j * T);
  for (std::size_t c = 2; c <= m; ++c)
    for (std::size_t j = 1; j < N; ++j)
      for (std::size_t jp = 1; jp < j; ++jp)
        if (F[c - 1][jp] != 0) F[c][j] += F[c - 1][jp] * count((j - jp) * T - link);
  BigInt total = 0;
  for (std::size_t j = 1; j < N; ++j)
    if (F[m][j] != 0) total += F[m][j] * count((N - j) * T - link);
  return total;
}

}  // namespace

InterweaveResult interweave_bound(const InterweaveSpec& spec) {
  const SFT& X = spec.X;
  const int m = X.alphabet_size();
  if (spec.in_A.size() != static_cast<std::size_t>(m)) throw InvalidArgument("interweave: A mask size mismatch");
  if (spec.T == 0 || spec.T <= 2 * spec.tau + 1) throw InvalidArgument("interweave: need T > 2 tau + 1");
  if (spec.N < 1) throw InvalidArgument("interweave: N must be positive");
  Rational an = spec.alpha * spec.N;
  if (spec.alpha <= 0 || spec.alpha > 1 || denominator(an) != 1)
    throw InvalidArgument("interweave: alpha N must be a positive integer");
  const auto alpha_n = static_cast<std::size_t>(numerator(an));
  if (alpha_n < 1 || alpha_n > spec.N) throw InvalidArgument("interweave: alpha N out of range");
  const std::size_t ms = alpha_n - 1;

  InterweaveResult out;
  InterweaveRun& run = out.run;
  GapReport& rep = out.report;
  run.T = spec.T;
  run.N = spec.N;
  run.tau = spec.tau;
  run.alpha = spec.alpha;
  run.alpha_n = alpha_n;
  run.eps = spec.eps;
  rep.method = "interweave";
  rep.tolerances = {{"exact", 1e-9}};
  rep.inputs = {{"X", X.to_json()}, {"A", spec.in_A}, {"eps", spec.eps}, {"tau", spec.tau},
                {"T", spec.T},      {"N", spec.N},    {"alpha", spec.alpha.str()}};

  SFT A0 = X.restrict_to(spec.in_A);
  auto in_play = A0.symbols_in_play();
  std::vector<bool> keep(static_cast<std::size_t>(m), false);
  for (int a : in_play) keep[static_cast<std::size_t>(a)] = true;
  SFT A = A0.restrict_to(keep);
  if (in_play.empty()) throw InvalidArgument("interweave: A is empty");
  auto x_play = X.symbols_in_play();
  if (x_play.size() == in_play.size()) throw InvalidArgument("interweave: A is not a proper subsystem");

  // A symbol outside A is at distance 1 from A; the proof needs 3 eps below it.
  std::optional<int> y = spec.y;
  if (!y) {
    for (int a : x_play)
      if (!keep[static_cast<std::size_t>(a)]) {
        y = a;
        break;
      }
  }
  if (!(spec.eps > 0.0 && 3 * spec.eps < 1.0) || !y || keep[static_cast<std::size_t>(*y)] ||
      std::find(x_play.begin(), x_play.end(), *y) == x_play.end()) {
    rep.verdict = GapVerdict::Inconclusive;
    rep.notes.push_back("no gluing symbol y with d(y, A) > 3 eps");
    rep.estimates = run.to_json();
    return out;
  }
  run.y = *y;
  run.h_A = sft_entropy(A).value;
  run.h_X = sft_entropy(X).value;

  std::map<std::size_t, BigInt> count_cache;
  auto count = [&](std::size_t k) -> BigInt {
    auto it = count_cache.find(k);
    if (it != count_cache.end()) return it->second;
    // Length-1 paths include dropped symbols; only the symbols of A count.
    return count_cache[k] = k == 1 ? BigInt(in_play.size()) : count_words(A, k);
  };
  const std::size_t NT = spec.N * spec.T;
  if (spec.C) {
    run.C = *spec.C;
  } else {
    double logC = INFINITY;
    for (std::size_t k = 1; k <= NT; ++k) logC = std::min(logC, log_big(count(k)) - static_cast<double>(k) * run.h_A);
    run.C = std::exp(logC);
    run.C_measured = true;
  }

  run.interweave_sets = union_count_dp(spec.N, spec.T, spec.tau, ms, [](std::size_t) { return BigInt(1); });
  run.union_count = union_count_dp(spec.N, spec.T, spec.tau, ms, count);
  run.binomial_regime = spec.N <= 24 ? "exact" : "lower-bound";

  // Explicit construction.
  if (spec.N <= 24 && run.union_count <= spec.construct_budget) {
    std::map<std::size_t, std::vector<Word>> blocks_cache;
    auto words_of = [&](std::size_t k) -> const std::vector<Word>& {
      auto it = blocks_cache.find(k);
      if (it != blocks_cache.end()) return it->second;
      auto words = enumerate_words(A, k, spec.construct_budget);
      std::erase_if(words, [&](const Word& w) { return !keep[static_cast<std::size_t>(w.front())]; });
      return blocks_cache[k] = std::move(words);
    };
    const Word y_word = {*y};
    std::vector<Word> all;
    std::vector<std::size_t> js(ms);
    for (std::size_t i = 0; i < ms; ++i) js[i] = i + 1;
    bool more = ms == 0 || spec.N - 1 >= ms;
    while (more) {
      auto ks = interweave_blocks(js, spec.T, spec.N, spec.tau);
      std::vector<const std::vector<Word>*> sets;
      BigInt expect = 1;
      for (auto k : ks) {
        sets.push_back(&words_of(k));
        expect *= sets.back()->size();
      }
      std::vector<std::size_t> idx(ks.size(), 0);
      std::set<Word> mine;
      bool done = std::any_of(sets.begin(), sets.end(), [](auto* s) { return s->empty(); });
      while (!done) {
        std::vector<Word> parts;
        for (std::size_t i = 0; i < ks.size(); ++i) {
          if (i > 0) parts.push_back(y_word);
          parts.push_back((*sets[i])[idx[i]]);
        }
        Word w = symbolic_glue(X, parts, spec.tau);
        if (w.size() != NT) throw ConsistencyError("interweaved word has the wrong length");
        mine.insert(w);
        all.push_back(std::move(w));
        std::size_t c = 0;
        while (c < idx.size() && ++idx[c] == sets[c]->size()) idx[c++] = 0;
        done = c == idx.size();
      }
      if (BigInt(mine.size()) != expect) run.product_identity = false;
      more = ms > 0 && next_combination(js, spec.N - 1);
    }
    run.constructed = all.size();
    if (all.size() <= spec.pairwise_limit) {
      bool ok = true;
      for (std::size_t i = 0; i < all.size() && ok; ++i)
        for (std::size_t j = i + 1; j < all.size() && ok; ++j) ok = all[i] != all[j];
      run.separated_pairwise = ok;
    }
    std::sort(all.begin(), all.end());
    run.separated_sorted = std::adjacent_find(all.begin(), all.end()) == all.end();
    if (BigInt(all.size()) != run.union_count) throw ConsistencyError("constructed union disagrees with the count");
  } else {
    rep.notes.push_back("union too large to construct; count from the exact formula only");
  }

  const double T = static_cast<double>(spec.T), N = static_cast<double>(spec.N);
  const double a = static_cast<double>(spec.alpha);
  const double link = static_cast<double>(2 * spec.tau + 1);
  const double aN = static_cast<double>(alpha_n);
  run.empirical = log_big(run.union_count) / (N * T);
  run.finite_rhs = (aN * std::log(run.C) + std::log(a) + N * T * run.h_A - (aN - 1) * link * run.h_A -
                    N * a * std::log(a)) /
                   (N * T);
  run.asymptotic_rhs = run.h_A - a * link * run.h_A / T - a * std::log(a) / T + a * std::log(run.C) / T;
  run.alpha_threshold = run.C * std::exp(-link * run.h_A);
  run.alpha_below_threshold = a < run.alpha_threshold;

  bool certified = !run.constructed || (run.separated_sorted && run.separated_pairwise.value_or(true) &&
                                        run.product_identity);
  if (!certified) {
    rep.verdict = GapVerdict::Inconclusive;
    rep.notes.push_back("separation or product certificate failed");
  } else {
    rep.verdict = run.empirical > run.h_A + 1e-9 ? GapVerdict::Verified : GapVerdict::NotVerified;
  }
  if (run.empirical < run.finite_rhs - 1e-9) rep.notes.push_back("empirical bound below the finite-N bound");
  if (run.empirical < run.asymptotic_rhs) rep.notes.push_back("asymptotic bound not yet reached at this N");
  rep.estimates = run.to_json();
  return out;
}

// ---------------------------------------------------------------------------
// Perturbation radius and product report

double perturbation_radius(double p_full, double p_A) {
  if (!(p_full > p_A)) throw InvalidArgument("perturbation radius needs P_full > P_A");
  return (p_full - p_A) / 2;
}

GapReport perturbation_report(double p_full, double p_A) {
  GapReport r;
  r.method = "perturbation";
  r.inputs = {{"pFull", finite_or_null(p_full)}, {"pA", finite_or_null(p_A)}};
  r.estimates["radius"] = perturbation_radius(p_full, p_A);
  r.verdict = GapVerdict::Verified;
  r.notes.push_back("any psi with 2 |phi - psi| below P_full - P_A keeps the gap, up to constant shifts");
  return r;
}

BaseCrossCheck symbolic_cross_check(const SFT& sft, const std::vector<double>& lambda,
                                    const LocallyConstantPotential& phi) {
  auto b = exact_B_infinity(sft, lambda, phi);
  BaseCrossCheck c;
  c.p_binf = b.empty ? -INFINITY : b.pressure.value;
  c.p_all = sft_pressure(sft, phi).value;
  c.tolerance = 1e-9;
  c.source = "exact-symbolic";
  return c;
}

BaseCrossCheck torus_cross_check(const DynSystem& system, const LambdaFunction& lambda, const Potential& phi,
                                 const TorusCrossCheckOptions& o) {
  auto pool = build_pool(system, o.pool, o.eps, o.n_max);
  pool.push_back(system.fixed_point());
  auto zero = [lambda](const TorusPoint& x) { return lambda(x) == 0.0; };
  auto binf_pool = b_infinity_sample(system, lambda, o.K + o.n_max, pool, o.jobs);
  BaseCrossCheck c;
  c.source = "separated-sets";
  auto all = pressure_estimate(system, SegmentCollection::all(), phi, o.eps, o.n_min, o.n_max, pool, o.jobs);
  c.p_all = all.slope;
  double se = all.stderr_slope;
  if (binf_pool.empty()) {
    c.p_binf = -INFINITY;
  } else {
    auto b = pressure_estimate(system, SegmentCollection::in_set(system, zero, o.K, "B_inf"), phi, o.eps, o.n_min,
                               o.n_max, binf_pool, o.jobs);
    c.p_binf = b.slope;
    se += b.stderr_slope;
  }
  c.tolerance = 2 * se;
  return c;
}

GapReport product_gap_report(const std::vector<GapReport>& base_reports,
                             const std::optional<BaseCrossCheck>& cross_check) {
  GapReport r;
  r.method = "product";
  nlohmann::json methods = nlohmann::json::array();
  bool verified = false;
  for (const auto& b : base_reports) {
    methods.push_back({{"method", b.method}, {"verdict", to_string(b.verdict)}});
    verified = verified || b.verdict == GapVerdict::Verified;
  }
  r.inputs["reports"] = methods;
  if (base_reports.empty()) r.notes.push_back("no base method ran");
  if (!verified) {
    r.verdict = GapVerdict::Inconclusive;
    r.estimates["baseGapAsserted"] = false;
    return r;
  }
  r.estimates["baseGapAsserted"] = true;
  r.verdict = GapVerdict::Verified;
  if (cross_check) {
    r.estimates["crossCheck"] = {{"pBinf", finite_or_null(cross_check->p_binf)},
                                 {"pAll", finite_or_null(cross_check->p_all)},
                                 {"tolerance", cross_check->tolerance},
                                 {"source", cross_check->source}};
    bool consistent = cross_check->p_binf < cross_check->p_all - cross_check->tolerance;
    r.estimates["crossCheck"]["consistent"] = consistent;
    if (!consistent) {
      r.verdict = GapVerdict::Inconclusive;
      r.notes.push_back("direct base estimate does not separate P(B_inf) from P(all)");
    }
  } else {
    r.notes.push_back("no direct cross-check supplied");
  }
  return r;
}

std::size_t product_membership_violations(const DynSystem& system, const LambdaFunction& lambda, std::size_t K,
                                          const std::vector<TorusPoint>& points) {
  const std::size_t d = system.dimension();
  auto prod = DynSystem::product(system, system);
  auto lam2 = product_lambda(lambda, d);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size(); ++j) {
      TorusPoint z = TorusPoint::concat(points[i], points[j]);
      bool ok = true;
      for (long long k = -static_cast<long long>(K); k <= static_cast<long long>(K) && ok; ++k)
        ok = lam2(prod.apply(z, k)) == 0.0;
      if (!ok) ++bad;
    }
  }
  return bad;
}

}  // namespace gapkit
