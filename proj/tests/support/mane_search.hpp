#pragma once

// Bounded brute-force search for a 3x3 integer matrix suitable as a Mane
// base: det = 1, three distinct positive irrational real eigenvalues with
// exactly one of modulus > 1. Among admissible matrices the one whose middle
// eigenvalue is closest to 1 wins; ties go to the lexicographically first.
// Entries in [-2, 2] admit no such matrix (a trace of at least 6 is needed), so
// the default bound is 3.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>

#include "gapkit/systems.hpp"

namespace gapkit::testing {

struct ManeCandidate {
  IntMatrix matrix;
  std::array<double, 3> eigenvalues;  // decreasing
};

inline long long det3(const std::array<int, 9>& a) {
  return static_cast<long long>(a[0]) * (a[4] * a[8] - a[5] * a[7]) -
         static_cast<long long>(a[1]) * (a[3] * a[8] - a[5] * a[6]) +
         static_cast<long long>(a[2]) * (a[3] * a[7] - a[4] * a[6]);
}

/// Real roots of x^3 + b x^2 + c x + d when all three are real and distinct.
inline std::optional<std::array<double, 3>> cubic_real_roots(double b, double c, double d) {
  double disc = 18 * b * c * d - 4 * b * b * b * d + b * b * c * c - 4 * c * c * c - 27 * d * d;
  if (disc <= 0) return std::nullopt;
  double p = c - b * b / 3.0;
  double q = 2 * b * b * b / 27.0 - b * c / 3.0 + d;
  double r = 2.0 * std::sqrt(-p / 3.0);
  double phi = std::acos(std::clamp(3.0 * q / (p * r), -1.0, 1.0));
  std::array<double, 3> roots;
  for (int k = 0; k < 3; ++k) roots[k] = r * std::cos((phi - 2.0 * M_PI * k) / 3.0) - b / 3.0;
  // Polish against the integer polynomial.
  for (auto& x : roots)
    for (int it = 0; it < 3; ++it) {
      double f = ((x + b) * x + c) * x + d;
      double df = (3 * x + 2 * b) * x + c;
      if (df != 0) x -= f / df;
    }
  std::sort(roots.begin(), roots.end(), std::greater<>());
  return roots;
}

inline std::optional<ManeCandidate> search_mane_matrix(int bound = 3) {
  std::optional<ManeCandidate> best;
  double best_score = INFINITY;
  std::array<int, 9> a{};
  const int span = 2 * bound + 1;
  long long total = 1;
  for (int i = 0; i < 9; ++i) total *= span;
  for (long long code = 0; code < total; ++code) {
    long long c = code;
    for (int i = 8; i >= 0; --i) {
      a[i] = static_cast<int>(c % span) - bound;
      c /= span;
    }
    if (det3(a) != 1) continue;
    long long tr = a[0] + a[4] + a[8];
    long long minors = static_cast<long long>(a[0]) * a[4] - a[1] * a[3] + static_cast<long long>(a[0]) * a[8] -
                       a[2] * a[6] + static_cast<long long>(a[4]) * a[8] - a[5] * a[7];
    // chi(x) = x^3 - tr x^2 + minors x - 1; rational roots could only be +-1.
    if (1 - tr + minors - 1 == 0) continue;
    if (-1 - tr - minors - 1 == 0) continue;
    auto roots = cubic_real_roots(-static_cast<double>(tr), static_cast<double>(minors), -1.0);
    if (!roots) continue;
    auto [l1, l2, l3] = *roots;
    if (!(l3 > 0.0)) continue;
    if (!(l1 > 1.0 && l2 < 1.0)) continue;
    double score = std::fabs(std::log(l2));
    if (score < best_score - 1e-15) {
      best_score = score;
      IntMatrix m(3, 3);
      for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = a[i];
      best = ManeCandidate{m, *roots};
    }
  }
  return best;
}

}  // namespace gapkit::testing
