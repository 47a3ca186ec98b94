#include "doctest.h"

#include <cmath>

#include "gapkit/gaps.hpp"
#include "gapkit/random.hpp"
#include "support/fixtures.hpp"

using namespace gapkit;
using gapkit::testing::cat_map;

namespace {

BigInt binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  BigInt r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

BigInt power(BigInt b, std::size_t e) {
  BigInt r = 1;
  for (std::size_t i = 0; i < e; ++i) r *= b;
  return r;
}

InterweaveSpec two_shift_spec(std::size_t T, std::size_t N, Rational alpha, std::size_t tau = 0) {
  InterweaveSpec s{SFT::full_shift(2), {true, false}};
  s.T = T;
  s.N = N;
  s.alpha = alpha;
  s.tau = tau;
  return s;
}

}  // namespace

TEST_CASE("verdict names") {
  for (auto v : {GapVerdict::Verified, GapVerdict::NotVerified, GapVerdict::Inconclusive})
    CHECK(parse_gap_verdict(to_string(v)) == v);
  CHECK(to_string(GapVerdict::Verified) == "gap-verified");
  CHECK_THROWS_AS(parse_gap_verdict("maybe"), InvalidArgument);
}

TEST_CASE("measure estimate on the cat map") {
  auto f = cat_map();
  auto ball = LambdaFunction::ball_complement(TorusPoint::origin(2), 0.045);
  MeasureEstimateOptions opt;
  opt.samples = 20000;
  opt.orbit_length = 50;
  opt.seed = 17;
  auto r = measure_estimate_gap(f, ball, opt);
  double mu = r.estimates["haarEstimate"], se = r.estimates["stderr"];
  CHECK(std::fabs(mu - 0.0081) <= 3 * se);
  CHECK(double(r.estimates["haarExact"]) == doctest::Approx(0.0081).epsilon(1e-12));
  CHECK(r.verdict == GapVerdict::Verified);

  auto never = measure_estimate_gap(f, LambdaFunction::constant(1.0), opt);
  CHECK(double(never.estimates["haarEstimate"]) == 0.0);
  CHECK(never.verdict == GapVerdict::Verified);
  auto always = measure_estimate_gap(f, LambdaFunction::constant(0.0), opt);
  CHECK(double(always.estimates["haarEstimate"]) == 1.0);
  CHECK(always.verdict == GapVerdict::NotVerified);

  // Shrinking the zero set never loses a verified gap.
  opt.samples = 2000;
  bool seen = false;
  for (double radius : {0.45, 0.4, 0.36, 0.35, 0.34, 0.3, 0.2, 0.1}) {
    auto v = measure_estimate_gap(f, LambdaFunction::ball_complement(TorusPoint::origin(2), radius), opt).verdict;
    if (seen) CHECK(v == GapVerdict::Verified);
    seen = seen || v == GapVerdict::Verified;
  }
  CHECK(seen);
}

TEST_CASE("measure estimate on perturbed systems") {
  auto g = gapkit::testing::mane2d();
  auto ball = LambdaFunction::ball_complement(TorusPoint::origin(2), 0.045);
  MeasureEstimateOptions opt;
  opt.seed = 3;
  auto r = measure_estimate_gap(g, ball, opt);
  REQUIRE(r.verdict == GapVerdict::Verified);
  double mu = r.estimates["haarEstimate"], se = r.estimates["stderr"];
  CHECK(std::fabs(mu - 0.0081) <= 3 * se);
  double delta = r.estimates["delta"];
  CHECK(delta > 0.0);
  CHECK(double(r.estimates["chosenEstimate"]) == doctest::Approx(std::pow(2 * (0.045 + delta), 2)).epsilon(1e-12));

  CHECK(measure_estimate_gap(gapkit::testing::katok2d(), ball, opt).verdict == GapVerdict::Inconclusive);
  auto odd = LambdaFunction{[](const TorusPoint& x) { return x[0] < 0.01 ? 0.0 : 1.0; }, 1.0, std::nullopt, "strip"};
  CHECK(measure_estimate_gap(g, odd, opt).verdict == GapVerdict::Inconclusive);
}

TEST_CASE("interweaving on the full 2-shift") {
  for (std::size_t T : {4u, 6u}) {
    for (std::size_t N : {4u, 8u, 12u}) {
      for (Rational a : {Rational(1, 4), Rational(1, 2)}) {
        auto res = interweave_bound(two_shift_spec(T, N, a));
        const auto& run = res.run;
        auto m = static_cast<std::size_t>(numerator(Rational(a * N))) - 1;
        CHECK(run.union_count == binomial(N - 1, m));
        CHECK(run.interweave_sets == binomial(N - 1, m));
        REQUIRE(run.constructed.has_value());
        CHECK(BigInt(*run.constructed) == run.union_count);
        CHECK(run.separated_sorted);
        CHECK(run.separated_pairwise.value_or(false));
        CHECK(run.product_identity);
        CHECK(run.h_A == 0.0);
        CHECK(run.C == 1.0);
        CHECK(run.empirical >= run.finite_rhs - 1e-9);
        if (m > 0) CHECK(res.report.verdict == GapVerdict::Verified);
        CHECK(run.empirical <= std::log(2.0));
      }
    }
  }
  // The asymptotic bound is not a finite-N bound.
  auto small = interweave_bound(two_shift_spec(4, 4, Rational(1, 2))).run;
  CHECK(small.empirical == doctest::Approx(std::log(3.0) / 16).epsilon(1e-12));
  CHECK(small.asymptotic_rhs > small.empirical);

  // A gap of one symbol on each side of every visit.
  auto gapped = interweave_bound(two_shift_spec(4, 8, Rational(1, 2), 1)).run;
  CHECK(gapped.union_count == binomial(7, 3));
  CHECK(gapped.separated_sorted);

  // alpha N = 1: a single A-block with nothing to interweave.
  auto single = interweave_bound(two_shift_spec(4, 8, Rational(1, 8)));
  CHECK(single.run.union_count == 1);
  CHECK(single.report.verdict == GapVerdict::NotVerified);

  CHECK_THROWS_AS(interweave_bound(two_shift_spec(4, 6, Rational(1, 4))), InvalidArgument);
  CHECK_THROWS_AS(interweave_bound(two_shift_spec(3, 8, Rational(1, 2), 1)), InvalidArgument);
  auto coarse = two_shift_spec(4, 8, Rational(1, 2));
  coarse.eps = 0.4;
  CHECK(interweave_bound(coarse).report.verdict == GapVerdict::Inconclusive);
}

TEST_CASE("interweaving with entropy in A") {
  // Full 3-shift, A = words over {0, 1}, y = 2: every block is free in {0, 1}.
  for (std::size_t N : {4u, 8u}) {
    InterweaveSpec s{SFT::full_shift(3), {true, true, false}};
    s.T = 3;
    s.N = N;
    s.alpha = Rational(1, 2);
    s.construct_budget = 3'000'000;
    auto res = interweave_bound(s);
    std::size_t m = N / 2 - 1;
    CHECK(res.run.union_count == binomial(N - 1, m) * power(2, N * 3 - m));
    CHECK(res.run.h_A == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(res.run.C == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(res.run.empirical >= res.run.finite_rhs - 1e-9);
    if (res.run.constructed) CHECK(res.run.separated_sorted);
    CHECK(res.report.verdict == GapVerdict::Verified);
  }

  // Golden mean, A = {0}: the fixed point, visits to 1 kept isolated.
  for (std::size_t T : {4u, 6u}) {
    InterweaveSpec s{SFT::golden_mean(), {true, false}};
    s.T = T;
    s.N = 8;
    s.alpha = Rational(1, 2);
    auto res = interweave_bound(s);
    CHECK(res.run.union_count == binomial(7, 3));
    CHECK(res.run.empirical >= res.run.finite_rhs - 1e-9);
    CHECK(res.run.separated_sorted);
  }
}

TEST_CASE("perturbation radius") {
  CHECK(perturbation_radius(std::log(2.0), 0.0) == doctest::Approx(std::log(2.0) / 2));
  CHECK(perturbation_radius(1.7, 1.1) == doctest::Approx(0.3));
  CHECK_THROWS_AS(perturbation_radius(0.2, 0.2), InvalidArgument);
  CHECK_THROWS_AS(perturbation_radius(0.1, 0.3), InvalidArgument);

  auto full = SFT::full_shift(2);
  double radius = perturbation_radius(std::log(2.0), 0.0);
  SFT A = full.restrict_to({true, false});
  auto rng = make_stream(8, 0);
  for (int i = 0; i < 50; ++i) {
    LocallyConstantPotential psi{{uniform(rng, -radius, radius), uniform(rng, -radius, radius)}, {}};
    CHECK(sft_pressure(A, psi).value < sft_pressure(full, psi).value);
  }
  CHECK(perturbation_report(std::log(2.0), 0.0).verdict == GapVerdict::Verified);
}

TEST_CASE("product gap report") {
  CHECK(product_gap_report({}).verdict == GapVerdict::Inconclusive);
  GapReport not_verified;
  not_verified.method = "measure-estimate";
  not_verified.verdict = GapVerdict::NotVerified;
  CHECK(product_gap_report({not_verified}).verdict == GapVerdict::Inconclusive);

  GapReport verified = not_verified;
  verified.verdict = GapVerdict::Verified;
  auto symbolic = symbolic_cross_check(SFT::full_shift(2), {0.0, 1.0}, LocallyConstantPotential::zero(2));
  CHECK(symbolic.p_binf == 0.0);
  CHECK(symbolic.p_all == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  auto ok = product_gap_report({verified}, symbolic);
  CHECK(ok.verdict == GapVerdict::Verified);
  CHECK(ok.estimates["baseGapAsserted"] == true);

  BaseCrossCheck bad{0.7, 0.69, 0.0, "test"};
  CHECK(product_gap_report({verified}, bad).verdict == GapVerdict::Inconclusive);

  // The cat-map Mane model end to end.
  auto g = gapkit::testing::mane2d();
  auto ball = LambdaFunction::ball_complement(TorusPoint::origin(2), 0.045);
  auto base = measure_estimate_gap(g, ball, {});
  TorusCrossCheckOptions o;
  o.pool.size = 20000;
  auto cross = torus_cross_check(g, ball, Potential::constant(0.0), o);
  CHECK(cross.p_binf == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cross.p_all > 0.5);
  CHECK(product_gap_report({base}, cross).verdict == GapVerdict::Verified);
}

TEST_CASE("product measures land in the product B infinity") {
  auto f = cat_map();
  auto lambda = LambdaFunction::ball_complement(TorusPoint::origin(2), 0.05);
  auto pool = build_pool(f, {PoolKind::Random, 5000, 2}, 0.05, 1);
  pool.push_back(TorusPoint::origin(2));
  auto binf = b_infinity_sample(f, lambda, 15, pool);
  REQUIRE(!binf.empty());
  CHECK(product_membership_violations(f, lambda, 15, binf) == 0);
}
