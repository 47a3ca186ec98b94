#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gapkit/pressure.hpp"
#include "gapkit/shadowspec.hpp"
#include "gapkit/symlab.hpp"
#include "gapkit/systems.hpp"

namespace gapkit {

enum class GapVerdict { Verified, NotVerified, Inconclusive };
std::string to_string(GapVerdict v);
GapVerdict parse_gap_verdict(const std::string& name);

struct GapReport {
  std::string method;  // measure-estimate, interweave, perturbation, product
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json estimates = nlohmann::json::object();
  nlohmann::json tolerances = nlohmann::json::object();
  GapVerdict verdict = GapVerdict::Inconclusive;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Measure estimate

struct MeasureEstimateOptions {
  std::size_t samples = 20000;      // orbits
  std::size_t orbit_length = 50;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  double stderr_factor = 2.0;       // verdict margin in standard errors
  double semiconj_tol = 1e-9;
};

/// Haar Monte Carlo estimate of mu(lambda^-1(0)) along orbits of the linear base.
/// For perturbed-linear systems with a ball-shaped zero set the chosen
/// estimate is the pushforward bound (2(r + delta))^d with delta the
/// shadowing distance of the semiconjugacy.
GapReport measure_estimate_gap(const DynSystem& system, const LambdaFunction& lambda,
                               const MeasureEstimateOptions& options = {});

// ---------------------------------------------------------------------------
// Interweaving

struct InterweaveSpec {
  SFT X;
  std::vector<bool> in_A;     // symbols of the subsystem A (a sub-SFT of X)
  double eps = 0.25;          // must satisfy 3 eps < 1 in the symbol metric
  std::size_t tau = 0;
  std::size_t T = 4;
  std::size_t N = 8;
  Rational alpha = Rational(1, 2);
  std::optional<int> y;       // gluing symbol outside A; smallest one by default
  std::optional<double> C;    // measured when absent
  std::size_t construct_budget = 2'000'000;  // words built explicitly
  std::size_t pairwise_limit = 20'000;       // all-pairs certificate up to this size
};

struct InterweaveRun {
  std::size_t T = 0, N = 0, tau = 0, alpha_n = 0;
  Rational alpha;
  double eps = 0.0;
  int y = -1;
  double h_A = 0.0;
  double h_X = 0.0;
  double C = 0.0;
  bool C_measured = false;
  BigInt interweave_sets;          // number of admissible sets I
  BigInt union_count;              // exact, by dynamic programming over I
  std::optional<std::size_t> constructed;  // words actually built, when within budget
  bool product_identity = true;    // #E_I = prod #E_{k_i} on every constructed I
  bool separated_sorted = false;   // distinct words: the sort certificate
  std::optional<bool> separated_pairwise;
  std::string binomial_regime;     // "exact" or "lower-bound"
  double empirical = 0.0;          // (1/NT) log #union
  double finite_rhs = 0.0;         // the finite-N lower bound shown in the count argument
  double asymptotic_rhs = 0.0;     // h(A) - a(2t+1)h(A)/T - a log a / T + a log C / T
  double alpha_threshold = 0.0;    // C exp(-(2 tau + 1) h(A))
  bool alpha_below_threshold = false;

  nlohmann::json to_json() const;
};

struct InterweaveResult {
  InterweaveRun run;
  GapReport report;
};

/// Builds every interweaved set E_I on the symbolic backend, certifies the
/// union is (NT, eps)-separated and compares its growth with the bound.
InterweaveResult interweave_bound(const InterweaveSpec& spec);

/// Block lengths k_1..k_{alpha N} for interweaving multiples j_1 < ... of T.
std::vector<std::size_t> interweave_blocks(const std::vector<std::size_t>& js, std::size_t T, std::size_t N,
                                           std::size_t tau);

// ---------------------------------------------------------------------------
// Perturbation radius and product report

/// (P_full - P_A) / 2; InvalidArgument unless P_full > P_A.
double perturbation_radius(double p_full, double p_A);
GapReport perturbation_report(double p_full, double p_A);

/// Direct base comparison P(B_infinity) vs P(all) used to cross-check a product gap.
struct BaseCrossCheck {
  double p_binf = 0.0;
  double p_all = 0.0;
  double tolerance = 0.0;
  std::string source;  // "exact-symbolic" or "separated-sets"
};

BaseCrossCheck symbolic_cross_check(const SFT& sft, const std::vector<double>& lambda,
                                    const LocallyConstantPotential& phi);

struct TorusCrossCheckOptions {
  double eps = 0.05;
  std::size_t n_min = 2, n_max = 8;
  std::size_t K = 20;                 // B_infinity tested on [-K, n + K)
  PoolSpec pool = [] {
    PoolSpec p;
    p.kind = PoolKind::Random;
    p.size = 40000;
    p.seed = 1;
    return p;
  }();
  unsigned jobs = 1;
};

BaseCrossCheck torus_cross_check(const DynSystem& system, const LambdaFunction& lambda, const Potential& phi,
                                 const TorusCrossCheckOptions& options = {});

/// A product gap certified by one of the base reports implies the base gap;
/// the cross-check must agree or the verdict drops to inconclusive.
GapReport product_gap_report(const std::vector<GapReport>& base_reports,
                             const std::optional<BaseCrossCheck>& cross_check = std::nullopt);

/// x, y in B_infinity (sampled from the pool) give (x, y) in the product B_infinity
/// of lambda(x) lambda(y). Returns the number of violations.
std::size_t product_membership_violations(const DynSystem& system, const LambdaFunction& lambda, std::size_t K,
                                          const std::vector<TorusPoint>& b_infinity_points);

}  // namespace gapkit
