#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gapkit/systems.hpp"

namespace gapkit {

using Rational = boost::multiprecision::cpp_rational;

enum class DecompositionMode { TwoSided, OneSidedPrefix, OneSidedSuffix };

std::string to_string(DecompositionMode mode);
DecompositionMode parse_decomposition_mode(const std::string& name);

/// The segment (x, n): x, f x, ..., f^{n-1} x.
struct OrbitSegment {
  TorusPoint base;
  std::size_t n = 0;
};

/// Partial sums along a segment; entry 0 is 0 and entry k sums the first k terms.
struct BirkhoffStats {
  std::vector<double> lambda_sums;
  std::vector<double> phi_sums;
};

struct Classification {
  bool in_bad = false;
  bool in_good_two_sided = true;
  bool in_good_prefix = true;
  bool in_good_suffix = true;
  double min_initial_avg = 0.0;
  double min_terminal_avg = 0.0;
  bool degenerate = false;  // n == 0
};

struct DecompositionResult {
  std::size_t p = 0;
  std::size_t g = 0;
  std::size_t s = 0;
  double eta = 0.0;
  DecompositionMode mode = DecompositionMode::TwoSided;
  bool degenerate = false;
};

namespace detail {

inline double to_double(double v) { return v; }
inline double to_double(const Rational& v) { return static_cast<double>(v); }

/// sum/k < eta without dividing.
inline bool below(double sum, double eta, std::size_t k) {
  return std::fma(-eta, static_cast<double>(k), sum) < 0.0;
}
inline bool below(const Rational& sum, const Rational& eta, std::size_t k) { return sum < eta * k; }

template <class Scalar>
std::vector<Scalar> prefix_sums(std::span<const Scalar> values) {
  std::vector<Scalar> out(values.size() + 1, Scalar(0));
  for (std::size_t i = 0; i < values.size(); ++i) out[i + 1] = out[i] + values[i];
  return out;
}

}  // namespace detail

/// Classification of the segment whose lambda-values are `values`.
template <class Scalar>
Classification classify_values(std::span<const Scalar> values, const Scalar& eta) {
  Classification c;
  const std::size_t n = values.size();
  if (n == 0) {
    c.degenerate = true;
    return c;
  }
  auto sums = detail::prefix_sums(values);
  const Scalar& total = sums[n];
  c.in_bad = detail::below(total, eta, n);
  double min_init = INFINITY, min_term = INFINITY;
  for (std::size_t k = 1; k <= n; ++k) {
    Scalar head = sums[k];
    Scalar tail = total - sums[n - k];
    if (detail::below(head, eta, k)) c.in_good_prefix = false;
    if (detail::below(tail, eta, k)) c.in_good_suffix = false;
    min_init = std::min(min_init, detail::to_double(head) / static_cast<double>(k));
    min_term = std::min(min_term, detail::to_double(tail) / static_cast<double>(k));
  }
  c.in_good_two_sided = c.in_good_prefix && c.in_good_suffix;
  c.min_initial_avg = min_init;
  c.min_terminal_avg = min_term;
  return c;
}

/// Largest k <= limit with the first k values averaging below eta; 0 if none.
template <class Scalar>
std::size_t longest_bad_prefix(const std::vector<Scalar>& sums, std::size_t offset, std::size_t limit,
                               const Scalar& eta) {
  std::size_t best = 0;
  for (std::size_t k = 1; k <= limit; ++k)
    if (detail::below(Scalar(sums[offset + k] - sums[offset]), eta, k)) best = k;
  return best;
}

/// Largest k <= limit with the k values ending at `end` averaging below eta.
template <class Scalar>
std::size_t longest_bad_suffix(const std::vector<Scalar>& sums, std::size_t end, std::size_t limit,
                               const Scalar& eta) {
  std::size_t best = 0;
  for (std::size_t k = 1; k <= limit; ++k)
    if (detail::below(Scalar(sums[end] - sums[end - k]), eta, k)) best = k;
  return best;
}

/// lambda-decomposition of the value sequence. The good part is re-classified
/// and a failure raises ConsistencyError.
template <class Scalar>
DecompositionResult decompose_values(std::span<const Scalar> values, const Scalar& eta,
                                     DecompositionMode mode) {
  if (!(eta > Scalar(0))) throw InvalidArgument("eta must be positive");
  DecompositionResult r;
  r.eta = detail::to_double(eta);
  r.mode = mode;
  const std::size_t n = values.size();
  if (n == 0) {
    r.degenerate = true;
    return r;
  }
  auto sums = detail::prefix_sums(values);
  switch (mode) {
    case DecompositionMode::TwoSided:
      r.p = longest_bad_prefix(sums, 0, n, eta);
      r.s = longest_bad_suffix(sums, n, n - r.p, eta);
      break;
    case DecompositionMode::OneSidedPrefix:
      r.p = longest_bad_prefix(sums, 0, n, eta);
      break;
    case DecompositionMode::OneSidedSuffix:
      r.s = longest_bad_suffix(sums, n, n, eta);
      break;
  }
  r.g = n - r.p - r.s;

  auto middle = classify_values(values.subspan(r.p, r.g), eta);
  bool ok = mode == DecompositionMode::TwoSided         ? middle.in_good_two_sided
            : mode == DecompositionMode::OneSidedPrefix ? middle.in_good_prefix
                                                        : middle.in_good_suffix;
  if (r.p > 0 && !classify_values(values.subspan(0, r.p), eta).in_bad) ok = false;
  if (r.s > 0 && !classify_values(values.subspan(n - r.s, r.s), eta).in_bad) ok = false;
  if (!ok) throw ConsistencyError("decomposition failed its certificate");
  return r;
}

// ---------------------------------------------------------------------------
// Torus segments

/// lambda(f^i x) for i < n.
std::vector<double> lambda_values(const DynSystem& system, const LambdaFunction& lambda,
                                  const OrbitSegment& seg);

BirkhoffStats birkhoff_stats(const DynSystem& system, const OrbitSegment& seg, const LambdaFunction& lambda,
                             const Potential* phi = nullptr);

/// Mean of the summand over the window [a, b) from prefix sums.
double birkhoff_average(std::span<const double> prefix_sums, std::size_t a, std::size_t b);

/// (1/(b-a)) sum_{i=a}^{b-1} phi(f^i x).
double birkhoff_average(const DynSystem& system, const Potential& phi, const OrbitSegment& seg,
                        std::size_t a, std::size_t b);

Classification classify_segment(const DynSystem& system, const LambdaFunction& lambda, double eta,
                                const OrbitSegment& seg);

DecompositionResult decompose(const DynSystem& system, const LambdaFunction& lambda, double eta,
                              const OrbitSegment& seg, DecompositionMode mode);

/// The product lift (x, y) -> lambda(x) lambda(y) on T^d x T^d.
LambdaFunction product_lambda(const LambdaFunction& lambda, std::size_t split);

// ---------------------------------------------------------------------------
// Symbolic segments

using Word = std::vector<int>;

/// Per-symbol weights read along a word.
template <class Scalar>
std::vector<Scalar> symbol_values(const Word& word, const std::vector<Scalar>& per_symbol) {
  std::vector<Scalar> out;
  out.reserve(word.size());
  for (int a : word) {
    if (a < 0 || static_cast<std::size_t>(a) >= per_symbol.size())
      throw InvalidArgument("symbol out of range");
    out.push_back(per_symbol[static_cast<std::size_t>(a)]);
  }
  return out;
}

}  // namespace gapkit
