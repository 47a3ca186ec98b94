#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "gapkit/decomp.hpp"
#include "gapkit/torus.hpp"

namespace gapkit {

using BigInt = boost::multiprecision::cpp_int;
using Matrix01 = std::vector<std::vector<int>>;

template <class Scalar>
using Grid = std::vector<std::vector<Scalar>>;

/// Subshift of finite type on symbols 0..m-1.
class SFT {
 public:
  explicit SFT(Matrix01 transition);
  static SFT full_shift(int m);
  static SFT golden_mean();

  int alphabet_size() const { return m_; }
  const Matrix01& transition() const { return t_; }
  bool allowed(int a, int b) const { return t_[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] != 0; }
  bool word_allowed(const Word& w) const;

  /// Strongly connected components that carry at least one cycle.
  std::vector<std::vector<int>> components() const;
  bool is_irreducible() const;
  /// Symbols that lie on some cycle, i.e. occur in a bi-infinite sequence.
  std::vector<int> symbols_in_play() const;
  bool empty() const { return symbols_in_play().empty(); }

  /// Same alphabet with every transition touching a dropped symbol removed.
  SFT restrict_to(const std::vector<bool>& keep) const;

  nlohmann::json to_json() const;

 private:
  int m_;
  Matrix01 t_;
};

/// Kronecker product on pair symbols a * m2 + b.
SFT product_sft(const SFT& a, const SFT& b);

/// phi(x) = symbol[x_0] + edge[x_0][x_1]; edge may be empty.
struct LocallyConstantPotential {
  std::vector<double> symbol;
  Grid<double> edge;

  static LocallyConstantPotential zero(int m) { return {std::vector<double>(static_cast<std::size_t>(m), 0.0), {}}; }
  bool is_zero() const;
  double birkhoff_sum(const Word& w) const;
};

LocallyConstantPotential product_potential(const LocallyConstantPotential& phi, int m);

struct SftPressure {
  double value = 0.0;          // -inf for an empty subshift
  double lower = 0.0;          // log Collatz-Wielandt bounds from the final iterate
  double upper = 0.0;
  std::string method;          // "characteristic-polynomial" or "power-iteration"
  bool reducible = false;
  std::vector<double> component_values;
  std::vector<std::string> warnings;
};

/// log spectral radius of M_ij = t_ij exp(symbol_j + edge_ij).
SftPressure sft_pressure(const SFT& sft, const LocallyConstantPotential& phi);
SftPressure sft_entropy(const SFT& sft);

/// Characteristic polynomial of a small integer matrix, highest degree first.
std::vector<BigInt> characteristic_polynomial(const Grid<long long>& m);

struct BInfinity {
  SFT subshift;
  std::vector<int> zero_symbols;
  bool empty = true;
  double entropy = -INFINITY;
  SftPressure pressure;
};

/// B_infinity for a per-symbol lambda: the subshift on the zero symbols.
BInfinity exact_B_infinity(const SFT& sft, const std::vector<double>& lambda,
                           const std::optional<LocallyConstantPotential>& phi = std::nullopt);

/// Exact certificate that rho(sub) < rho(full) via rational Collatz-Wielandt vectors.
struct SpectralGapCertificate {
  bool certified = false;
  Rational full_lower;  // <= rho(full)
  Rational sub_upper;   // >= rho(sub)
};
SpectralGapCertificate certify_spectral_gap(const SFT& full, const SFT& sub);

// ---------------------------------------------------------------------------
// Markov measures

template <class Scalar>
struct MarkovChain {
  Grid<Scalar> Q;
  std::vector<Scalar> v;
  std::size_t size() const { return Q.size(); }
};

using MarkovMeasure = MarkovChain<double>;
using ExactMarkov = MarkovChain<Rational>;

/// Unique stationary vector of an irreducible stochastic matrix.
template <class Scalar>
std::vector<Scalar> stationary_vector(const Grid<Scalar>& Q);

template <class Scalar>
MarkovChain<Scalar> make_markov(Grid<Scalar> Q);

/// Rows stochastic, v stationary, support inside `support` when given.
/// Exact for Rational; tolerance `tol` for double.
template <class Scalar>
void validate_markov(const MarkovChain<Scalar>& chain, const SFT* support = nullptr, double tol = 1e-12);

template <class Scalar>
double markov_entropy(const MarkovChain<Scalar>& chain);

MarkovMeasure bernoulli(const std::vector<double>& p);
ExactMarkov bernoulli_exact(const std::vector<Rational>& p);
MarkovMeasure random_markov(std::mt19937_64& rng, int m, double zero_probability = 0.0);

/// SFT x Z_k skew product: state (a, r) moves to (b, r+1 mod k) with
/// probability phases[r][a][b]. k = 1 is a plain Markov chain.
template <class Scalar>
struct CyclicMarkov {
  std::vector<Grid<Scalar>> phases;
  std::vector<std::vector<Scalar>> marginals;  // pi_r, pi_{r+1} = pi_r Q^{(r)}

  std::size_t k() const { return phases.size(); }
  std::size_t m() const { return phases.front().size(); }
  /// States a * k + r.
  MarkovChain<Scalar> flatten() const;
};

template <class Scalar>
CyclicMarkov<Scalar> make_cyclic(std::vector<Grid<Scalar>> phases);
/// mu x (uniform rotation of Z_k).
template <class Scalar>
CyclicMarkov<Scalar> product_form(const MarkovChain<Scalar>& mu, std::size_t k);

enum class JoiningKind { Product, RelativelyIndependent, Diagonal, Coupling };
std::string to_string(JoiningKind kind);
JoiningKind parse_joining_kind(const std::string& name);

/// A joint Markov chain on pair states s1 * n2 + s2 together with its marginals.
template <class Scalar>
struct FiniteJoining {
  JoiningKind kind = JoiningKind::Product;
  MarkovChain<Scalar> joint;
  MarkovChain<Scalar> first;
  MarkovChain<Scalar> second;
};

template <class Scalar>
FiniteJoining<Scalar> build_joining(JoiningKind kind, const CyclicMarkov<Scalar>& mu,
                                    const CyclicMarkov<Scalar>& nu);

/// Random coupling of two chains: rowwise mixture of the north-west-corner
/// and independent couplings with a random weight.
FiniteJoining<double> random_coupling(const MarkovMeasure& mu, const MarkovMeasure& nu, std::mt19937_64& rng);

struct MarginalCertificate {
  bool ok = false;
  double max_deviation = 0.0;  // 0 exactly for rational chains that pass
};

/// Lumpability of the joint chain onto each coordinate and equality of the
/// projected stationary vector with each marginal's.
template <class Scalar>
MarginalCertificate certify_marginals(const FiniteJoining<Scalar>& j, double tol = 1e-12);

template <class Scalar>
double joining_entropy(const FiniteJoining<Scalar>& j) {
  return markov_entropy(j.joint);
}

enum class FiberPartition { Markov, Factor, Joint };
std::string to_string(FiberPartition p);
FiberPartition parse_fiber_partition(const std::string& name);

struct FiberEntropy {
  double lhs = 0.0;  // conditional block-entropy increment given the rotation factor
  double rhs = 0.0;  // phase-averaged fiber entropy
};

template <class Scalar>
FiberEntropy fiber_entropy_check(const CyclicMarkov<Scalar>& system, FiberPartition xi);

/// Gibbs-Markov equilibrium state of a locally constant potential on an irreducible SFT.
MarkovMeasure equilibrium_state(const SFT& sft, const LocallyConstantPotential& phi);
/// h(chain) + integral of phi.
double free_energy(const MarkovMeasure& chain, const LocallyConstantPotential& phi);

// ---------------------------------------------------------------------------
// Words

/// Every allowed word of length n in lexicographic order; throws past `budget`.
std::vector<Word> enumerate_words(const SFT& sft, std::size_t n, std::size_t budget = 20'000'000);
BigInt count_words(const SFT& sft, std::size_t n);

/// Concatenates the words with connecting filler paths of exactly `tau`
/// symbols between consecutive words.
Word symbolic_glue(const SFT& sft, const std::vector<Word>& words, std::size_t tau);

SFT sft_from_json(const nlohmann::json& doc, const std::string& at = "");
LocallyConstantPotential potential_from_json(const nlohmann::json& doc, int m, const std::string& at = "");

}  // namespace gapkit
