#include "doctest.h"

#include "gapkit/decomp.hpp"
#include "gapkit/random.hpp"
#include "support/decomp_oracle.hpp"
#include "support/fixtures.hpp"
#include "support/words.hpp"

using namespace gapkit;
using gapkit::testing::ExactEta;

namespace {

std::vector<double> chi1(const Word& w) { return symbol_values<double>(w, {0.0, 1.0}); }

std::vector<std::int64_t> to_int(const Word& w, const std::vector<std::int64_t>& weights) {
  std::vector<std::int64_t> out;
  for (int a : w) out.push_back(weights[static_cast<std::size_t>(a)]);
  return out;
}

bool same(const DecompositionResult& a, const DecompositionResult& b) {
  return a.p == b.p && a.g == b.g && a.s == b.s && a.degenerate == b.degenerate;
}

}  // namespace

TEST_CASE("birkhoff averages") {
  const Word w = {0, 0, 1, 1};
  auto sums = detail::prefix_sums<double>(chi1(w));
  CHECK(birkhoff_average(sums, 0, 4) == 0.5);
  CHECK(birkhoff_average(sums, 0, 1) == 0.0);
  CHECK(birkhoff_average(sums, 3, 4) == 1.0);
  CHECK_THROWS_AS(birkhoff_average(sums, 2, 2), InvalidArgument);

  auto f = gapkit::testing::cat_map();
  auto c = Potential::constant(0.7);
  OrbitSegment seg{TorusPoint{0.1, 0.3}, 9};
  CHECK(birkhoff_average(f, c, seg, 2, 7) == doctest::Approx(0.7));
  auto cosine = Potential::cosine(0);
  CHECK(birkhoff_average(f, cosine, seg, 0, 1) == doctest::Approx(cosine(seg.base)));
}

TEST_CASE("classification examples") {
  auto one = classify_values<double>(std::vector<double>(6, 1.0), 0.5);
  CHECK(!one.in_bad);
  CHECK(one.in_good_two_sided);
  auto zero = classify_values<double>(std::vector<double>(6, 0.0), 0.5);
  CHECK(zero.in_bad);
  CHECK(!zero.in_good_two_sided);

  auto c = classify_values<double>(chi1({0, 0, 1, 1}), 0.5);
  CHECK(!c.in_bad);
  CHECK(!c.in_good_two_sided);
  CHECK(!c.in_good_prefix);
  CHECK(c.in_good_suffix);
  CHECK(c.min_initial_avg == 0.0);
  CHECK(c.min_terminal_avg == 0.5);

  auto empty = classify_values<double>(std::vector<double>{}, 0.5);
  CHECK(empty.degenerate);
  CHECK(!empty.in_bad);
  CHECK(empty.in_good_two_sided);
}

TEST_CASE("decomposition examples") {
  for (std::size_t n : {1u, 5u, 17u}) {
    auto r1 = decompose_values<double>(std::vector<double>(n, 1.0), 0.5, DecompositionMode::TwoSided);
    CHECK((r1.p == 0 && r1.g == n && r1.s == 0));
    auto r0 = decompose_values<double>(std::vector<double>(n, 0.0), 0.5, DecompositionMode::TwoSided);
    CHECK((r0.p == n && r0.g == 0 && r0.s == 0));
  }
  // Initial averages of 0011 are 0, 0, 1/3, 1/2; the oracle picks the split.
  const Word w = {0, 0, 1, 1};
  for (auto mode : {DecompositionMode::TwoSided, DecompositionMode::OneSidedPrefix,
                    DecompositionMode::OneSidedSuffix}) {
    auto got = decompose_values<double>(chi1(w), 0.5, mode);
    auto want = gapkit::testing::oracle_decompose(to_int(w, {0, 1}), 1, ExactEta{1, 2}, mode);
    CHECK(same(got, want));
  }
  auto two = decompose_values<double>(chi1(w), 0.5, DecompositionMode::TwoSided);
  CHECK(two.p == 3);
  CHECK(two.g == 1);
  CHECK(two.s == 0);

  auto empty = decompose_values<double>(std::vector<double>{}, 0.5, DecompositionMode::TwoSided);
  CHECK(empty.degenerate);
  CHECK(empty.p + empty.g + empty.s == 0);
  CHECK_THROWS_AS(decompose_values<double>(chi1(w), 0.0, DecompositionMode::TwoSided), InvalidArgument);
}

TEST_CASE("ties at eta are good") {
  // 1010: every initial average is >= 1/2.
  auto c = classify_values<double>(chi1({1, 0, 1, 0}), 0.5);
  CHECK(c.in_good_prefix);
  CHECK(!c.in_bad);
  auto r = decompose_values<double>(chi1({1, 0, 1, 0}), 0.5, DecompositionMode::OneSidedPrefix);
  CHECK(r.p == 0);
}

TEST_CASE("mode shapes") {
  auto rng = make_stream(2, 0);
  for (int t = 0; t < 2000; ++t) {
    std::size_t n = rng() % 30;
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(rng() % 4) / 4.0;
    auto pre = decompose_values<double>(v, 0.375, DecompositionMode::OneSidedPrefix);
    auto suf = decompose_values<double>(v, 0.375, DecompositionMode::OneSidedSuffix);
    auto two = decompose_values<double>(v, 0.375, DecompositionMode::TwoSided);
    CHECK(pre.s == 0);
    CHECK(suf.p == 0);
    CHECK(pre.p + pre.g + pre.s == n);
    CHECK(suf.p + suf.g + suf.s == n);
    CHECK(two.p + two.g + two.s == n);
    CHECK(two.p == pre.p);
  }
}

TEST_CASE("suffix mode mirrors prefix mode") {
  auto rng = make_stream(3, 0);
  for (int t = 0; t < 2000; ++t) {
    std::size_t n = 1 + rng() % 25;
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(rng() % 3) / 2.0;
    std::vector<double> rev(v.rbegin(), v.rend());
    auto a = decompose_values<double>(v, 0.5, DecompositionMode::OneSidedSuffix);
    auto b = decompose_values<double>(rev, 0.5, DecompositionMode::OneSidedPrefix);
    CHECK(a.s == b.p);
    CHECK(a.g == b.g);
  }
}

TEST_CASE("exact oracle agreement on short words") {
  const std::vector<std::vector<int>> full2 = {{1, 1}, {1, 1}};
  const std::vector<ExactEta> etas = {{1, 2}, {1, 4}, {3, 4}, {3, 8}};
  std::size_t checked = 0;
  gapkit::testing::for_each_word(full2, 12, [&](const Word& w) {
    auto iv = to_int(w, {0, 1});
    auto dv = chi1(w);
    for (auto eta : etas) {
      double e = static_cast<double>(eta.a) / static_cast<double>(eta.b);
      auto c = classify_values<double>(dv, e);
      auto oc = gapkit::testing::oracle_classify(iv, 1, eta);
      REQUIRE(c.in_bad == oc.in_bad);
      REQUIRE(c.in_good_two_sided == oc.good_two_sided);
      REQUIRE(c.in_good_prefix == oc.good_prefix);
      REQUIRE(c.in_good_suffix == oc.good_suffix);
      for (auto mode : {DecompositionMode::TwoSided, DecompositionMode::OneSidedPrefix,
                        DecompositionMode::OneSidedSuffix}) {
        REQUIRE(same(decompose_values<double>(dv, e, mode), gapkit::testing::oracle_decompose(iv, 1, eta, mode)));
        ++checked;
      }
    }
  });
  CHECK(checked == 3 * 4 * ((1u << 13) - 2));
}

TEST_CASE("rational arithmetic handles non-dyadic thresholds") {
  const std::vector<std::vector<int>> t3 = {{1, 1, 0}, {0, 1, 1}, {1, 0, 1}};
  const Rational third(1, 3);
  gapkit::testing::for_each_word(t3, 10, [&](const Word& w) {
    auto rv = symbol_values<Rational>(w, {Rational(0), Rational(1, 2), Rational(1)});
    auto iv = to_int(w, {0, 1, 2});
    for (auto mode : {DecompositionMode::TwoSided, DecompositionMode::OneSidedSuffix}) {
      auto got = decompose_values<Rational>(rv, third, mode);
      REQUIRE(same(got, gapkit::testing::oracle_decompose(iv, 2, ExactEta{1, 3}, mode)));
    }
  });
}

TEST_CASE("torus segments are decomposed soundly") {
  auto f = gapkit::testing::mane2d();
  auto lambda = LambdaFunction::ball_complement(f.fixed_point(), 0.9 * f.rho());
  auto rng = make_stream(4, 0);
  for (int t = 0; t < 2000; ++t) {
    // Start near p so that zero values actually occur.
    std::vector<double> c = {0.2 * uniform01(rng) - 0.1, 0.2 * uniform01(rng) - 0.1};
    OrbitSegment seg{TorusPoint(c), static_cast<std::size_t>(rng() % 40)};
    double eta = 0.25 + 0.5 * uniform01(rng);
    for (auto mode : {DecompositionMode::TwoSided, DecompositionMode::OneSidedPrefix}) {
      auto r = decompose(f, lambda, eta, seg, mode);
      REQUIRE(r.p + r.g + r.s == seg.n);
    }
    auto cls = classify_segment(f, lambda, eta, seg);
    if (seg.n > 0) REQUIRE(cls.min_initial_avg >= 0.0);
  }
}

TEST_CASE("product system and product lambda") {
  auto a = gapkit::testing::cat_map();
  auto b = gapkit::testing::mane2d();
  auto prod = DynSystem::product(a, b);
  CHECK(prod.dimension() == 4);
  auto rng = make_stream(6, 0);
  for (int i = 0; i < 10000; ++i) {
    auto x = random_point(rng, 2), y = random_point(rng, 2);
    auto z = prod.forward(TorusPoint::concat(x, y));
    REQUIRE(z == TorusPoint::concat(a.forward(x), b.forward(y)));
  }
  TorusPoint u{0.1, 0.2}, v{0.3, 0.9}, w{0.35, 0.1};
  CHECK(torus_distance(TorusPoint::concat(u, v), TorusPoint::concat(u, w)) == torus_distance(v, w));

  ProfileParams id;
  id.identity = true;
  auto s = make_slowdown_system(a, TorusPoint::origin(2), 0.1, id);
  auto lin = DynSystem::product(a, a);
  auto idprod = DynSystem::product(s, s);
  for (int i = 0; i < 1000; ++i) {
    auto x = random_point(rng, 4);
    REQUIRE(idprod.forward(x) == lin.forward(x));
  }

  auto lambda = LambdaFunction::ball_complement(TorusPoint::origin(2), 0.2, 1.0);
  auto lt = product_lambda(lambda, 2);
  CHECK(lt.sup_bound == 1.0);
  for (int i = 0; i < 10000; ++i) {
    auto x = random_point(rng, 2), y = random_point(rng, 2);
    bool zero = lambda(x) == 0.0 || lambda(y) == 0.0;
    REQUIRE((lt(TorusPoint::concat(x, y)) == 0.0) == zero);
  }
  auto ones = product_lambda(LambdaFunction::constant(1.0), 2);
  CHECK(ones(TorusPoint{0.1, 0.2, 0.3, 0.4}) == 1.0);
}

TEST_CASE("product lift inclusion") {
  auto f = gapkit::testing::cat_map();
  auto prod = DynSystem::product(f, f);
  auto lambda = LambdaFunction::ball_complement(TorusPoint::origin(2), 0.3, 1.5);
  auto lt = product_lambda(lambda, 2);
  auto rng = make_stream(7, 0);
  int good = 0;
  for (int i = 0; i < 3000; ++i) {
    auto x = random_point(rng, 2), y = random_point(rng, 2);
    std::size_t n = 1 + rng() % 20;
    double eta = 1.0;
    auto big = classify_segment(prod, lt, eta, {TorusPoint::concat(x, y), n});
    if (!big.in_good_two_sided) continue;
    ++good;
    double e = eta / lambda.sup_bound;
    REQUIRE(classify_segment(f, lambda, e, {x, n}).in_good_two_sided);
    REQUIRE(classify_segment(f, lambda, e, {y, n}).in_good_two_sided);
  }
  CHECK(good > 100);
}
