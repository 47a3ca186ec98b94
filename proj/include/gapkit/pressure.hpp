#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gapkit/decomp.hpp"
#include "gapkit/symlab.hpp"
#include "gapkit/systems.hpp"

namespace gapkit {

/// Raised when a pressure fit has too little data.
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// A collection of orbit segments given by a pure predicate.
struct SegmentCollection {
  std::function<bool(const OrbitSegment&)> predicate;
  std::string label;

  bool contains(const OrbitSegment& seg) const { return predicate(seg); }

  static SegmentCollection all();
  static SegmentCollection bad(const DynSystem& system, const LambdaFunction& lambda, double eta);
  static SegmentCollection good(const DynSystem& system, const LambdaFunction& lambda, double eta,
                                DecompositionMode mode = DecompositionMode::TwoSided);
  /// Segments whose points f^i x, -K <= i < n + K, all satisfy `in_set`.
  static SegmentCollection in_set(const DynSystem& system, std::function<bool(const TorusPoint&)> in_set,
                                  std::size_t K, std::string name = "A");
  static SegmentCollection custom(std::function<bool(const OrbitSegment&)> predicate, std::string label);
};

enum class PoolKind { Grid, Random, Leaf, Explicit };
std::string to_string(PoolKind kind);
PoolKind parse_pool_kind(const std::string& name);

/// Candidate points for separated-set construction.
///  grid:     lattice of pitch eps/3 on every axis
///  random:   `size` uniform points from `seed`
///  leaf:     1-D lattice along the unstable direction of the linear base through
///            `leaf_base` (default: its fixed point), length `leaf_length`, pitch
///            eps * lambda_u^{-(n_max-1)} / 3 unless `pitch` is set
///  explicit: `points`
struct PoolSpec {
  PoolKind kind = PoolKind::Grid;
  std::size_t size = 0;
  std::uint64_t seed = 0;
  double leaf_length = 0.02;
  double pitch = 0.0;
  std::optional<TorusPoint> leaf_base;
  std::vector<TorusPoint> points;
  std::size_t max_points = 50'000'000;

  nlohmann::json to_json() const;
};

std::vector<TorusPoint> build_pool(const DynSystem& system, const PoolSpec& spec, double eps, std::size_t n_max);

struct SeparatedSet {
  std::size_t n = 0;
  double eps = 0.0;
  std::vector<TorusPoint> points;
  std::vector<double> weights;  // Birkhoff sums S_n phi
  std::size_t candidates = 0;   // pool points inside the collection
};

/// Greedy weighted (n, eps)-separated set: candidates in C_n sorted by weight
/// (descending, ties by coordinates) and admitted when separated from every
/// point admitted so far. Maximal within the pool.
SeparatedSet max_separated_set(const DynSystem& system, const SegmentCollection& C, std::size_t n, double eps,
                               const Potential& phi, const std::vector<TorusPoint>& pool, unsigned jobs = 1);

/// log sum exp(S_n phi) over the set; -inf when empty.
double log_partition_sum(const std::vector<double>& weights);
double partition_sum(const DynSystem& system, const SegmentCollection& C, std::size_t n, double eps,
                     const Potential& phi, const std::vector<TorusPoint>& pool, unsigned jobs = 1);

struct SeparationCertificate {
  bool ok = true;
  std::size_t pairs_checked = 0;
  std::optional<std::pair<std::size_t, std::size_t>> offending;
};

/// Independent all-pairs check on freshly computed orbits.
SeparationCertificate certify_separated(const DynSystem& system, const SeparatedSet& set);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = a + b x.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct PressureEstimate {
  double eps = 0.0;
  std::size_t n_min = 0;
  std::size_t n_max = 0;
  std::vector<double> log_partition_sums;  // index n - n_min
  std::vector<std::size_t> set_sizes;
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  bool empty = false;  // every partition sum is -inf; slope is -inf

  nlohmann::json to_json() const;
};

/// Slope of log Lambda_n against n over [n_min, n_max].
PressureEstimate pressure_estimate(const DynSystem& system, const SegmentCollection& C, const Potential& phi,
                                   double eps, std::size_t n_min, std::size_t n_max,
                                   const std::vector<TorusPoint>& pool, unsigned jobs = 1);

struct PressureLadder {
  std::vector<PressureEstimate> estimates;  // in the order of the requested eps values
  /// log Lambda_n nonincreasing in eps at every n.
  bool monotone = true;
  std::vector<std::string> warnings;
};

/// One pool (built at the finest eps) shared across the ladder.
PressureLadder pressure_ladder(const DynSystem& system, const SegmentCollection& C, const Potential& phi,
                               const std::vector<double>& eps_values, std::size_t n_min, std::size_t n_max,
                               const PoolSpec& pool, unsigned jobs = 1);

inline const std::vector<double> kDefaultEpsLadder = {0.1, 0.05, 0.02};

/// Pool points x with lambda(f^k x) = 0 for every |k| <= K.
std::vector<TorusPoint> b_infinity_sample(const DynSystem& system, const LambdaFunction& lambda, std::size_t K,
                                          const std::vector<TorusPoint>& pool, unsigned jobs = 1);

// ---------------------------------------------------------------------------
// Symbolic mirror. The metric is d(x, y) = [x_0 != y_0], so the Bowen distance
// of two n-words is 1 when they differ and 0 otherwise.

struct SymbolicSeparatedSet {
  std::size_t n = 0;
  double eps = 0.0;
  std::vector<Word> words;
  std::vector<double> weights;
};

SymbolicSeparatedSet symbolic_separated_set(const SFT& sft, std::size_t n, double eps,
                                            const LocallyConstantPotential& phi,
                                            const std::function<bool(const Word&)>& in_collection = {});

PressureEstimate symbolic_pressure_estimate(const SFT& sft, const LocallyConstantPotential& phi, double eps,
                                            std::size_t n_min, std::size_t n_max,
                                            const std::function<bool(const Word&)>& in_collection = {});

/// Words of length 2K + 1 using only symbols where lambda vanishes.
std::vector<Word> symbolic_b_infinity_sample(const SFT& sft, const std::vector<double>& lambda, std::size_t K);

}  // namespace gapkit
