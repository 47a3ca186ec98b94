#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"

#include "gapkit/decomp.hpp"
#include "gapkit/pressure.hpp"
#include "gapkit/systems.hpp"

namespace gapkit {

/// Raised when a pseudo-orbit is too rough for the hyperbolic splitting.
class ShadowingError : public Error {
 public:
  ShadowingError(const std::string& what, double factor) : Error(what), factor_(factor) {}
  /// K_A times the jump bound; shadowing requires it below 1/4.
  double contraction_factor() const { return factor_; }

 private:
  double factor_;
};

struct PseudoOrbit {
  std::vector<TorusPoint> points;
  double jump_bound = 0.0;  // max d(A x_i, x_{i+1}) for the model it was measured against

  static PseudoOrbit measure(const DynSystem& model, std::vector<TorusPoint> points);
};

using QuadVector = std::array<Quad, kMaxDimension>;

/// Spectral splitting of a hyperbolic linear model, refined to quad precision.
/// Products of linear systems split blockwise.
class HyperbolicSplitting {
 public:
  static HyperbolicSplitting of(const DynSystem& system);

  std::size_t dimension() const { return dim_; }
  /// K_A = sum_j |row_j(P^-1)|_1 g_j |p_j|_inf with g_j = 1/|1 - |mu_j||.
  double shadow_constant() const { return shadow_constant_; }
  /// max over blocks of max(|mu_s|, 1/|mu_u|).
  double contraction() const { return contraction_; }
  double condition_number() const { return condition_; }
  /// The pure linear model (no translation part).
  const DynSystem& model() const { return model_; }

  /// Corrections v_0..v_{L-1} with v_{i+1} = A v_i - e_i, stable parts started
  /// at zero from the left and unstable parts from the right.
  std::vector<QuadVector> corrections(const std::vector<QuadVector>& jumps) const;

 private:
  struct Block {
    std::size_t offset = 0;
    std::size_t dim = 0;
    std::vector<Quad> P;     // row-major, columns are eigenvectors
    std::vector<Quad> Pinv;  // row-major
    std::vector<Quad> mu;
  };
  HyperbolicSplitting() : model_(DynSystem::linear(IntMatrix::Identity(1, 1))) {}

  std::vector<Block> blocks_;
  std::size_t dim_ = 0;
  double shadow_constant_ = 0.0;
  double contraction_ = 0.0;
  double condition_ = 1.0;
  DynSystem model_;
};

struct ShadowResult {
  TorusPoint y;                // shadows points[0]
  std::vector<double> errors;  // d(A^i y, x_i) from the correction sequence
  double error = 0.0;          // max of errors
  double jump_bound = 0.0;
  double bound = 0.0;          // K_A * jump_bound
  double residual = 0.0;       // max d(A y_i, y_{i+1}) of the corrected sequence
  std::vector<TorusPoint> corrected;  // y_i = x_i + v_i
};

/// y whose A-orbit shadows the pseudo-orbit. Throws ShadowingError when
/// K_A * jump >= 1/4 and ConsistencyError when the residual exceeds tol.
ShadowResult shadow(const HyperbolicSplitting& split, const PseudoOrbit& pseudo, double tol = 1e-12);

/// sup_i d(A^i y, x_i) by direct iteration of the model.
double orbit_error(const DynSystem& model, const TorusPoint& y, const std::vector<TorusPoint>& points);

/// sup d(g x, A x) against the pure linear base A, over a grid of the
/// modified ball plus random samples. Products take the max over factors.
double estimate_c0_distance(const DynSystem& g, std::uint64_t seed, std::size_t samples = 20000);

struct SemiconjugacyValue {
  TorusPoint pi;
  double displacement = 0.0;  // d(x, pi(x))
};

/// pi(x): the A-orbit shadowing the g-orbit of x over [-N, N].
class Semiconjugacy {
 public:
  /// window = 0 picks N with contraction^N < tol.
  explicit Semiconjugacy(const DynSystem& g, double tol = 1e-10, std::size_t window = 0);

  SemiconjugacyValue operator()(const TorusPoint& x) const;
  /// K_A times the measured jump of the g-orbit window at x.
  double orbit_bound(const TorusPoint& x) const;

  const DynSystem& system() const { return g_; }
  const HyperbolicSplitting& splitting() const { return split_; }
  std::size_t window() const { return window_; }
  double tolerance() const { return tol_; }
  /// K_A * c0 estimate: the shadowing distance bound delta.
  double delta_bound() const { return delta_; }
  double c0_distance() const { return c0_; }

 private:
  DynSystem g_;
  HyperbolicSplitting split_;
  double tol_;
  std::size_t window_;
  double c0_ = 0.0;
  double delta_ = 0.0;
};

struct SemiconjugacyCheck {
  double max_residual = 0.0;      // sup d(A pi(x), pi(g x))
  double max_displacement = 0.0;  // sup d(x, pi(x))
  double max_excess = -INFINITY;  // sup of d(x, pi(x)) - K_A * jump over the window
  std::size_t samples = 0;
};

SemiconjugacyCheck check_semiconjugacy(const Semiconjugacy& pi, std::size_t samples, std::uint64_t seed,
                                       unsigned jobs = 1);

struct GlueResult {
  TorusPoint y;
  std::size_t tau = 0;
  std::vector<std::size_t> starts;       // time at which segment i is shadowed
  std::vector<double> segment_errors;    // certified by direct orbit evaluation
  double requested_delta = 0.0;
};

/// Shadows the segments in order with gaps of tau steps; tau is the smallest
/// value in [0, max_tau] meeting delta. Linear (hyperbolic) systems only.
GlueResult spec_glue(const DynSystem& system, const std::vector<OrbitSegment>& segments, double delta,
                     std::size_t max_tau = 100);

/// Direct re-evaluation of a glue result against its segments.
std::vector<double> verify_glue(const DynSystem& system, const GlueResult& glue,
                                const std::vector<OrbitSegment>& segments);

struct NEProbeResult {
  double eps = 0.0;
  std::size_t K = 0;
  std::size_t samples = 0;
  double floor = 0.0;
  std::vector<std::pair<TorusPoint, TorusPoint>> pairs;  // closed under swapping
};

/// Pairs at distance in [floor, eps) that stay eps-close for every |k| <= K.
NEProbeResult expansivity_probe(const DynSystem& system, double eps, std::size_t K, std::size_t samples,
                                std::uint64_t seed, double floor = 1e-9, unsigned jobs = 1);

/// Re-checks every reported pair with independently computed orbits.
bool certify_ne_pairs(const DynSystem& system, const NEProbeResult& result);

/// Each product candidate has a coordinate pair that is a candidate of the base.
bool ne_product_structure(const DynSystem& base, const NEProbeResult& product_result);

struct BowenRow {
  std::size_t n = 0;
  double max_gap = 0.0;
  std::size_t pairs = 0;
};

struct BowenTable {
  std::vector<BowenRow> rows;
  double slope = 0.0;
  double stderr_slope = 0.0;
  std::string diagnostic;
};

/// max |S_n phi(x) - S_n phi(y)| over pairs with (x, n) in G(eta) and y in the
/// Bowen ball B_n(x, eps), y found along the stable direction at x.
BowenTable bowen_probe(const DynSystem& system, const Potential& phi, const LambdaFunction& lambda, double eta,
                       double eps, std::size_t n_min, std::size_t n_max, std::size_t samples, std::uint64_t seed,
                       unsigned jobs = 1);

}  // namespace gapkit
