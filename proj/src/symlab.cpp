#include "gapkit/symlab.hpp"

#include "gapkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include <Eigen/Dense>

namespace gapkit {

namespace {

using detail::to_double;

bool is_zero(double v) { return v == 0.0; }
bool is_zero(const Rational& v) { return v == 0; }

template <class Scalar>
Grid<Scalar> zeros(std::size_t r, std::size_t c) {
  return Grid<Scalar>(r, std::vector<Scalar>(c, Scalar(0)));
}

// Perron data of a non-negative square matrix restricted to an irreducible
// index set, by shifted power iteration with Collatz-Wielandt bounds.
struct Perron {
  double rho = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<double> right;
  std::vector<double> left;
  bool converged = false;
};

Eigen::MatrixXd dense(const Grid<double>& m, const std::vector<int>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = m[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]
                   [static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
  return out;
}

Eigen::VectorXd power_vector(const Eigen::MatrixXd& b, double& lower, double& upper, bool& converged) {
  const Eigen::Index n = b.rows();
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  converged = false;
  const long max_iter = 2'000'000;
  for (long it = 0; it < max_iter; ++it) {
    Eigen::VectorXd y = b * x;
    lower = INFINITY;
    upper = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double r = y(i) / x(i);
      lower = std::min(lower, r);
      upper = std::max(upper, r);
    }
    x = y / y.maxCoeff();
    if (upper - lower <= 1e-15 * upper) {
      converged = true;
      break;
    }
  }
  return x;
}

Perron perron(const Eigen::MatrixXd& m) {
  Perron out;
  const Eigen::Index n = m.rows();
  // Shift by half an initial estimate: the shifted matrix is primitive on an
  // irreducible block and its Perron root is rho + c.
  double estimate = 0.0;
  {
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
    for (Eigen::Index i = 0; i < n; ++i) estimate = std::max(estimate, es.eigenvalues()(i).real());
  }
  if (!(estimate > 0.0)) estimate = m.rowwise().sum().maxCoeff();
  const double c = 0.5 * estimate;
  Eigen::MatrixXd b = m + c * Eigen::MatrixXd::Identity(n, n);
  double lo = 0, hi = 0, lo_t = 0, hi_t = 0;
  bool conv_r = false, conv_l = false;
  Eigen::VectorXd r = power_vector(b, lo, hi, conv_r);
  Eigen::VectorXd l = power_vector(b.transpose(), lo_t, hi_t, conv_l);
  out.lower = lo - c;
  out.upper = hi - c;
  out.rho = 0.5 * (lo + hi) - c;
  out.converged = conv_r && conv_l;
  out.right.assign(r.data(), r.data() + n);
  out.left.assign(l.data(), l.data() + n);
  return out;
}

Grid<double> weighted_matrix(const SFT& sft, const LocallyConstantPotential& phi) {
  const auto m = static_cast<std::size_t>(sft.alphabet_size());
  if (phi.symbol.size() != m) throw InvalidArgument("potential has the wrong number of symbol weights");
  if (!phi.edge.empty() && phi.edge.size() != m) throw InvalidArgument("edge weights have the wrong shape");
  Grid<double> out = zeros<double>(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (!sft.allowed(static_cast<int>(i), static_cast<int>(j))) continue;
      double w = phi.symbol[j] + (phi.edge.empty() ? 0.0 : phi.edge[i][j]);
      if (!std::isfinite(w)) throw InvalidArgument("potential weights must be finite");
      out[i][j] = std::exp(w);
    }
  return out;
}

long double eval_poly(const std::vector<BigInt>& c, long double x) {
  long double acc = 0;
  for (const auto& a : c) acc = acc * x + static_cast<long double>(a);
  return acc;
}

// Largest real root of a monic integer polynomial inside [lo, hi] with a sign change.
std::optional<double> largest_root(const std::vector<BigInt>& c, long double lo, long double hi) {
  long double flo = eval_poly(c, lo), fhi = eval_poly(c, hi);
  if (flo == 0) return static_cast<double>(lo);
  if (fhi == 0) return static_cast<double>(hi);
  if ((flo < 0) == (fhi < 0)) return std::nullopt;
  for (int it = 0; it < 200; ++it) {
    long double mid = 0.5L * (lo + hi);
    long double fm = eval_poly(c, mid);
    if (fm == 0) return static_cast<double>(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return static_cast<double>(0.5L * (lo + hi));
}

}  // namespace

// ---------------------------------------------------------------------------
// SFT

SFT::SFT(Matrix01 transition) : m_(static_cast<int>(transition.size())), t_(std::move(transition)) {
  if (m_ < 1) throw InvalidArgument("alphabet must be non-empty");
  for (const auto& row : t_) {
    if (row.size() != t_.size()) throw InvalidArgument("transition matrix must be square");
    for (int v : row)
      if (v != 0 && v != 1) throw InvalidArgument("transition entries must be 0 or 1");
  }
}

SFT SFT::full_shift(int m) {
  return SFT(Matrix01(static_cast<std::size_t>(m), std::vector<int>(static_cast<std::size_t>(m), 1)));
}

SFT SFT::golden_mean() { return SFT({{1, 1}, {1, 0}}); }

bool SFT::word_allowed(const Word& w) const {
  for (int a : w)
    if (a < 0 || a >= m_) return false;
  for (std::size_t i = 0; i + 1 < w.size(); ++i)
    if (!allowed(w[i], w[i + 1])) return false;
  return true;
}

std::vector<std::vector<int>> SFT::components() const {
  // Tarjan's algorithm, iterative over an explicit stack.
  const int n = m_;
  std::vector<int> index(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
  std::vector<char> on_stack(static_cast<std::size_t>(n), 0);
  std::vector<int> stack;
  std::vector<std::vector<int>> out;
  int counter = 0;
  std::function<void(int)> visit = [&](int v) {
    auto vi = static_cast<std::size_t>(v);
    index[vi] = low[vi] = counter++;
    stack.push_back(v);
    on_stack[vi] = 1;
    for (int w = 0; w < n; ++w) {
      if (!allowed(v, w)) continue;
      auto wi = static_cast<std::size_t>(w);
      if (index[wi] < 0) {
        visit(w);
        low[vi] = std::min(low[vi], low[wi]);
      } else if (on_stack[wi]) {
        low[vi] = std::min(low[vi], index[wi]);
      }
    }
    if (low[vi] == index[vi]) {
      std::vector<int> comp;
      int w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[static_cast<std::size_t>(w)] = 0;
        comp.push_back(w);
      } while (w != v);
      std::sort(comp.begin(), comp.end());
      bool cyclic = comp.size() > 1 || allowed(comp[0], comp[0]);
      if (cyclic) out.push_back(comp);
    }
  };
  for (int v = 0; v < n; ++v)
    if (index[static_cast<std::size_t>(v)] < 0) visit(v);
  std::sort(out.begin(), out.end());
  return out;
}

bool SFT::is_irreducible() const {
  auto comps = components();
  return comps.size() == 1 && static_cast<int>(comps[0].size()) == m_;
}

std::vector<int> SFT::symbols_in_play() const {
  // A symbol occurs in a bi-infinite sequence iff it lies on a path between cycles.
  auto comps = components();
  std::vector<char> on_cycle(static_cast<std::size_t>(m_), 0);
  for (const auto& c : comps)
    for (int a : c) on_cycle[static_cast<std::size_t>(a)] = 1;
  auto reach = [&](bool forward) {
    std::vector<char> seen = on_cycle;
    std::vector<int> frontier;
    for (int a = 0; a < m_; ++a)
      if (seen[static_cast<std::size_t>(a)]) frontier.push_back(a);
    while (!frontier.empty()) {
      int a = frontier.back();
      frontier.pop_back();
      for (int b = 0; b < m_; ++b) {
        bool edge = forward ? allowed(a, b) : allowed(b, a);
        if (edge && !seen[static_cast<std::size_t>(b)]) {
          seen[static_cast<std::size_t>(b)] = 1;
          frontier.push_back(b);
        }
      }
    }
    return seen;
  };
  auto after = reach(true), before = reach(false);
  std::vector<int> out;
  for (int a = 0; a < m_; ++a)
    if (after[static_cast<std::size_t>(a)] && before[static_cast<std::size_t>(a)]) out.push_back(a);
  return out;
}

SFT SFT::restrict_to(const std::vector<bool>& keep) const {
  if (keep.size() != static_cast<std::size_t>(m_)) throw InvalidArgument("restriction mask has the wrong size");
  Matrix01 t = t_;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t.size(); ++j)
      if (!keep[i] || !keep[j]) t[i][j] = 0;
  return SFT(std::move(t));
}

nlohmann::json SFT::to_json() const { return {{"m", m_}, {"transition", t_}}; }

SFT product_sft(const SFT& a, const SFT& b) {
  const auto ma = static_cast<std::size_t>(a.alphabet_size()), mb = static_cast<std::size_t>(b.alphabet_size());
  Matrix01 t(ma * mb, std::vector<int>(ma * mb, 0));
  for (std::size_t i = 0; i < ma; ++i)
    for (std::size_t j = 0; j < mb; ++j)
      for (std::size_t k = 0; k < ma; ++k)
        for (std::size_t l = 0; l < mb; ++l)
          t[i * mb + j][k * mb + l] = a.transition()[i][k] * b.transition()[j][l];
  return SFT(std::move(t));
}

bool LocallyConstantPotential::is_zero() const {
  for (double w : symbol)
    if (w != 0.0) return false;
  for (const auto& row : edge)
    for (double w : row)
      if (w != 0.0) return false;
  return true;
}

double LocallyConstantPotential::birkhoff_sum(const Word& w) const {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s += symbol[static_cast<std::size_t>(w[i])];
    if (!edge.empty() && i + 1 < w.size())
      s += edge[static_cast<std::size_t>(w[i])][static_cast<std::size_t>(w[i + 1])];
  }
  return s;
}

LocallyConstantPotential product_potential(const LocallyConstantPotential& phi, int m) {
  const auto mm = static_cast<std::size_t>(m);
  LocallyConstantPotential out;
  out.symbol.assign(mm * mm, 0.0);
  for (std::size_t a = 0; a < mm; ++a)
    for (std::size_t b = 0; b < mm; ++b) out.symbol[a * mm + b] = phi.symbol[a] + phi.symbol[b];
  if (!phi.edge.empty()) {
    out.edge = zeros<double>(mm * mm, mm * mm);
    for (std::size_t a = 0; a < mm; ++a)
      for (std::size_t b = 0; b < mm; ++b)
        for (std::size_t c = 0; c < mm; ++c)
          for (std::size_t d = 0; d < mm; ++d) out.edge[a * mm + b][c * mm + d] = phi.edge[a][c] + phi.edge[b][d];
  }
  return out;
}

std::vector<BigInt> characteristic_polynomial(const Grid<long long>& a) {
  // Faddeev-LeVerrier: M_k = A M_{k-1} + c_{n-k+1} I, c_{n-k} = -tr(A M_k) / k.
  const std::size_t n = a.size();
  Grid<BigInt> A = zeros<BigInt>(n, n), M = zeros<BigInt>(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) A[i][j] = a[i][j];
  std::vector<BigInt> c(n + 1, 0);
  c[0] = 1;
  for (std::size_t k = 1; k <= n; ++k) {
    Grid<BigInt> next = zeros<BigInt>(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        BigInt s = 0;
        for (std::size_t l = 0; l < n; ++l) s += A[i][l] * M[l][j];
        next[i][j] = s + (i == j ? c[k - 1] : BigInt(0));
      }
    M = next;
    BigInt tr = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < n; ++l) tr += A[i][l] * M[l][i];
    c[k] = -tr / static_cast<long long>(k);
  }
  return c;
}

SftPressure sft_pressure(const SFT& sft, const LocallyConstantPotential& phi) {
  SftPressure out;
  Grid<double> w = weighted_matrix(sft, phi);
  auto comps = sft.components();
  out.reducible = !sft.is_irreducible();
  if (comps.empty()) {
    out.value = out.lower = out.upper = -INFINITY;
    out.method = "empty";
    out.warnings.push_back("subshift is empty");
    return out;
  }
  if (out.reducible) out.warnings.push_back("transition matrix is reducible; maximum over components");
  out.method = "power-iteration";
  double best = -INFINITY;
  for (const auto& comp : comps) {
    Perron p = perron(dense(w, comp));
    if (!p.converged) out.warnings.push_back("power iteration hit its iteration cap");
    double v = std::log(p.rho);
    out.component_values.push_back(v);
    if (v > best) {
      best = v;
      out.value = v;
      out.lower = std::log(p.lower);
      out.upper = std::log(p.upper);
    }
  }

  if (sft.alphabet_size() <= 4 && phi.is_zero()) {
    Grid<long long> t = zeros<long long>(static_cast<std::size_t>(sft.alphabet_size()),
                                         static_cast<std::size_t>(sft.alphabet_size()));
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t j = 0; j < t.size(); ++j) t[i][j] = sft.transition()[i][j];
    auto chi = characteristic_polynomial(t);
    double rho = std::exp(out.value);
    auto root = largest_root(chi, static_cast<long double>(rho) - 1e-9L, static_cast<long double>(rho) + 1e-9L);
    if (root && *root > 0) {
      if (std::fabs(std::log(*root) - out.value) > 1e-12)
        out.warnings.push_back("characteristic polynomial and power iteration disagree beyond 1e-12");
      out.value = std::log(*root);
      out.method = "characteristic-polynomial";
    }
  }
  return out;
}

SftPressure sft_entropy(const SFT& sft) { return sft_pressure(sft, LocallyConstantPotential::zero(sft.alphabet_size())); }

BInfinity exact_B_infinity(const SFT& sft, const std::vector<double>& lambda,
                           const std::optional<LocallyConstantPotential>& phi) {
  if (lambda.size() != static_cast<std::size_t>(sft.alphabet_size()))
    throw InvalidArgument("lambda needs one value per symbol");
  std::vector<bool> keep(lambda.size());
  BInfinity out{sft.restrict_to(std::vector<bool>(lambda.size(), false)), {}, true, -INFINITY, {}};
  for (std::size_t a = 0; a < lambda.size(); ++a) {
    if (!(lambda[a] >= 0.0)) throw InvalidArgument("lambda must be non-negative");
    keep[a] = lambda[a] == 0.0;
    if (keep[a]) out.zero_symbols.push_back(static_cast<int>(a));
  }
  out.subshift = sft.restrict_to(keep);
  out.empty = out.subshift.empty();
  out.pressure = sft_pressure(out.subshift, phi ? *phi : LocallyConstantPotential::zero(sft.alphabet_size()));
  out.entropy = sft_entropy(out.subshift).value;
  return out;
}

namespace {

std::vector<Rational> rationalize(const std::vector<double>& x) {
  std::vector<Rational> out;
  const double scale = 0x1p40;
  for (double v : x) {
    auto num = static_cast<long long>(std::llround(v * scale));
    if (num < 1) num = 1;
    out.emplace_back(BigInt(num), BigInt(1) << 40);
  }
  return out;
}

Rational ratio_bound(const Matrix01& t, const std::vector<int>& idx, const std::vector<Rational>& x, bool lower) {
  Rational best;
  bool first = true;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    Rational s = 0;
    for (std::size_t j = 0; j < idx.size(); ++j)
      if (t[static_cast<std::size_t>(idx[i])][static_cast<std::size_t>(idx[j])]) s += x[j];
    Rational r = s / x[i];
    if (first || (lower ? r < best : r > best)) best = r;
    first = false;
  }
  return best;
}

}  // namespace

SpectralGapCertificate certify_spectral_gap(const SFT& full, const SFT& sub) {
  SpectralGapCertificate cert;
  const int m = full.alphabet_size();
  auto comps = full.components();
  if (comps.empty()) return cert;
  Grid<double> tf = zeros<double>(static_cast<std::size_t>(m), static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) tf[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = full.allowed(i, j);

  // Lower bound from the dominant irreducible block of the full shift.
  std::vector<int> dom;
  double best = -1;
  for (const auto& c : comps) {
    Perron p = perron(dense(tf, c));
    if (p.rho > best) {
      best = p.rho;
      dom = c;
    }
  }
  Perron pf = perron(dense(tf, dom));
  cert.full_lower = ratio_bound(full.transition(), dom, rationalize(pf.right), true);

  std::vector<int> all(static_cast<std::size_t>(sub.alphabet_size()));
  std::iota(all.begin(), all.end(), 0);
  if (sub.empty()) {
    cert.sub_upper = 0;
    cert.certified = cert.full_lower > 0;
    return cert;
  }
  for (double delta : {1e-6, 1e-9, 1e-12}) {
    Grid<double> ts = zeros<double>(all.size(), all.size());
    for (std::size_t i = 0; i < all.size(); ++i)
      for (std::size_t j = 0; j < all.size(); ++j)
        ts[i][j] = sub.allowed(static_cast<int>(i), static_cast<int>(j)) + delta;
    Perron ps = perron(dense(ts, all));
    cert.sub_upper = ratio_bound(sub.transition(), all, rationalize(ps.right), false);
    if (cert.sub_upper < cert.full_lower) {
      cert.certified = true;
      break;
    }
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Markov chains

template <class Scalar>
std::vector<Scalar> stationary_vector(const Grid<Scalar>& Q) {
  const std::size_t n = Q.size();
  // Rows of (Q^T - I) with the last equation replaced by sum(v) = 1.
  Grid<Scalar> a = zeros<Scalar>(n, n + 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i][j] = Q[j][i] - (i == j ? Scalar(1) : Scalar(0));
  for (std::size_t j = 0; j < n; ++j) a[n - 1][j] = 1;
  a[n - 1][n] = 1;
  // Gaussian elimination with partial pivoting (largest magnitude for doubles).
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = n;
    double best = 0;
    for (std::size_t r = col; r < n; ++r) {
      double mag = std::fabs(to_double(a[r][col]));
      if (!is_zero(a[r][col]) && (piv == n || mag > best)) {
        piv = r;
        best = mag;
      }
    }
    if (piv == n) throw InvalidArgument("stationary vector is not unique (reducible chain)");
    std::swap(a[piv], a[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col || is_zero(a[r][col])) continue;
      Scalar f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= n; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<Scalar> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a[i][n] / a[i][i];
  return v;
}

template <class Scalar>
MarkovChain<Scalar> make_markov(Grid<Scalar> Q) {
  MarkovChain<Scalar> c;
  c.v = stationary_vector(Q);
  c.Q = std::move(Q);
  validate_markov(c);
  return c;
}

template <class Scalar>
void validate_markov(const MarkovChain<Scalar>& chain, const SFT* support, double tol) {
  const std::size_t n = chain.Q.size();
  if (n == 0 || chain.v.size() != n) throw InvalidArgument("markov chain has inconsistent sizes");
  auto close = [&](const Scalar& a, const Scalar& b) {
    if constexpr (std::is_same_v<Scalar, Rational>) {
      return a == b;
    } else {
      return std::fabs(a - b) <= tol;
    }
  };
  Scalar vs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (chain.Q[i].size() != n) throw InvalidArgument("transition matrix must be square");
    Scalar row = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (chain.Q[i][j] < Scalar(0)) throw InvalidArgument("negative transition probability");
      if (support && !is_zero(chain.Q[i][j]) && !support->allowed(static_cast<int>(i), static_cast<int>(j)))
        throw InvalidArgument("transition probability outside the SFT support");
      row += chain.Q[i][j];
    }
    if (!close(row, Scalar(1))) throw InvalidArgument("transition rows must sum to 1");
    if (chain.v[i] < Scalar(0)) throw InvalidArgument("stationary vector must be non-negative");
    vs += chain.v[i];
  }
  if (!close(vs, Scalar(1))) throw InvalidArgument("stationary vector must sum to 1");
  for (std::size_t j = 0; j < n; ++j) {
    Scalar s = 0;
    for (std::size_t i = 0; i < n; ++i) s += chain.v[i] * chain.Q[i][j];
    if (!close(s, chain.v[j])) throw InvalidArgument("vector is not stationary for the chain");
  }
}

template <class Scalar>
double markov_entropy(const MarkovChain<Scalar>& chain) {
  double h = 0.0;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    double vi = to_double(chain.v[i]);
    if (vi == 0.0) continue;
    for (const auto& q : chain.Q[i]) {
      double p = to_double(q);
      if (p > 0.0) h -= vi * p * std::log(p);
    }
  }
  return h;
}

MarkovMeasure bernoulli(const std::vector<double>& p) {
  MarkovMeasure c;
  c.Q.assign(p.size(), p);
  c.v = p;
  validate_markov(c);
  return c;
}

ExactMarkov bernoulli_exact(const std::vector<Rational>& p) {
  ExactMarkov c;
  c.Q.assign(p.size(), p);
  c.v = p;
  validate_markov(c);
  return c;
}

MarkovMeasure random_markov(std::mt19937_64& rng, int m, double zero_probability) {
  const auto n = static_cast<std::size_t>(m);
  Grid<double> Q = zeros<double>(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      bool keep = (j == (i + 1) % n) || uniform01(rng) >= zero_probability;
      Q[i][j] = keep ? 0.05 + uniform01(rng) : 0.0;
      s += Q[i][j];
    }
    for (auto& q : Q[i]) q /= s;
  }
  return make_markov(std::move(Q));
}

template <class Scalar>
MarkovChain<Scalar> CyclicMarkov<Scalar>::flatten() const {
  const std::size_t kk = k(), mm = m();
  MarkovChain<Scalar> c;
  c.Q = zeros<Scalar>(mm * kk, mm * kk);
  c.v.assign(mm * kk, Scalar(0));
  for (std::size_t r = 0; r < kk; ++r)
    for (std::size_t a = 0; a < mm; ++a) {
      for (std::size_t b = 0; b < mm; ++b) c.Q[a * kk + r][b * kk + (r + 1) % kk] = phases[r][a][b];
      c.v[a * kk + r] = marginals[r][a] / Scalar(static_cast<long long>(kk));
    }
  return c;
}

template <class Scalar>
CyclicMarkov<Scalar> make_cyclic(std::vector<Grid<Scalar>> phases) {
  if (phases.empty()) throw InvalidArgument("at least one phase is required");
  const std::size_t m = phases.front().size();
  for (const auto& p : phases)
    if (p.size() != m) throw InvalidArgument("phases must share the alphabet");
  // pi_0 is stationary for the product over one period.
  Grid<Scalar> prod = phases[0];
  for (std::size_t r = 1; r < phases.size(); ++r) {
    Grid<Scalar> next = zeros<Scalar>(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t l = 0; l < m; ++l)
        if (!is_zero(prod[i][l]))
          for (std::size_t j = 0; j < m; ++j) next[i][j] += prod[i][l] * phases[r][l][j];
    prod = next;
  }
  CyclicMarkov<Scalar> c;
  c.phases = std::move(phases);
  c.marginals.push_back(stationary_vector(prod));
  for (std::size_t r = 0; r + 1 < c.phases.size(); ++r) {
    std::vector<Scalar> next(m, Scalar(0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) next[j] += c.marginals[r][i] * c.phases[r][i][j];
    c.marginals.push_back(next);
  }
  validate_markov(c.flatten());
  return c;
}

template <class Scalar>
CyclicMarkov<Scalar> product_form(const MarkovChain<Scalar>& mu, std::size_t k) {
  if (k == 0) throw InvalidArgument("rotation order must be positive");
  CyclicMarkov<Scalar> c;
  c.phases.assign(k, mu.Q);
  c.marginals.assign(k, mu.v);
  return c;
}

std::string to_string(JoiningKind kind) {
  switch (kind) {
    case JoiningKind::Product: return "product";
    case JoiningKind::RelativelyIndependent: return "rel-independent";
    case JoiningKind::Diagonal: return "diagonal";
    case JoiningKind::Coupling: return "coupling";
  }
  return "unknown";
}

JoiningKind parse_joining_kind(const std::string& name) {
  if (name == "product") return JoiningKind::Product;
  if (name == "rel-independent") return JoiningKind::RelativelyIndependent;
  if (name == "diagonal") return JoiningKind::Diagonal;
  if (name == "coupling") return JoiningKind::Coupling;
  throw InvalidArgument("unknown joining kind '" + name + "'");
}

namespace {

template <class Scalar>
Grid<Scalar> product_rows(const Grid<Scalar>& a, const Grid<Scalar>& b) {
  const std::size_t na = a.size(), nb = b.size();
  Grid<Scalar> out = zeros<Scalar>(na * nb, na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      for (std::size_t k = 0; k < na; ++k) {
        if (is_zero(a[i][k])) continue;
        for (std::size_t l = 0; l < nb; ++l) out[i * nb + j][k * nb + l] = a[i][k] * b[j][l];
      }
  return out;
}

}  // namespace

template <class Scalar>
FiniteJoining<Scalar> build_joining(JoiningKind kind, const CyclicMarkov<Scalar>& mu,
                                    const CyclicMarkov<Scalar>& nu) {
  FiniteJoining<Scalar> j;
  j.kind = kind;
  j.first = mu.flatten();
  j.second = nu.flatten();
  const std::size_t n1 = j.first.size(), n2 = j.second.size();
  j.joint.Q = product_rows(j.first.Q, j.second.Q);
  j.joint.v.assign(n1 * n2, Scalar(0));
  switch (kind) {
    case JoiningKind::Product:
      for (std::size_t s = 0; s < n1; ++s)
        for (std::size_t t = 0; t < n2; ++t) j.joint.v[s * n2 + t] = j.first.v[s] * j.second.v[t];
      break;
    case JoiningKind::RelativelyIndependent: {
      // Product transitions preserve synchronised phases; the joining lives
      // on that closed class with fibre measures multiplied phase by phase.
      if (mu.k() != nu.k()) throw InvalidArgument("relatively independent joining needs a common rotation factor");
      const std::size_t k = mu.k();
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t a = 0; a < mu.m(); ++a)
          for (std::size_t b = 0; b < nu.m(); ++b)
            j.joint.v[(a * k + r) * n2 + (b * k + r)] =
                mu.marginals[r][a] * nu.marginals[r][b] / Scalar(static_cast<long long>(k));
      break;
    }
    case JoiningKind::Diagonal: {
      if (j.first.Q != j.second.Q) throw InvalidArgument("diagonal joining needs identical chains");
      for (std::size_t s = 0; s < n1; ++s) {
        for (auto& q : j.joint.Q[s * n2 + s]) q = 0;
        for (std::size_t t = 0; t < n1; ++t) j.joint.Q[s * n2 + s][t * n2 + t] = j.first.Q[s][t];
        j.joint.v[s * n2 + s] = j.first.v[s];
      }
      break;
    }
    case JoiningKind::Coupling:
      throw InvalidArgument("coupling joinings are built by random_coupling");
  }
  validate_markov(j.joint);
  return j;
}

FiniteJoining<double> random_coupling(const MarkovMeasure& mu, const MarkovMeasure& nu, std::mt19937_64& rng) {
  const std::size_t n1 = mu.size(), n2 = nu.size();
  const double t = uniform01(rng);
  FiniteJoining<double> j;
  j.kind = JoiningKind::Coupling;
  j.first = mu;
  j.second = nu;
  j.joint.Q = zeros<double>(n1 * n2, n1 * n2);
  for (std::size_t a = 0; a < n1; ++a)
    for (std::size_t b = 0; b < n2; ++b) {
      auto& row = j.joint.Q[a * n2 + b];
      std::vector<double> p = mu.Q[a], q = nu.Q[b];
      std::size_t i = 0, k = 0;
      while (i < n1 && k < n2) {
        double c = std::min(p[i], q[k]);
        row[i * n2 + k] += t * c;
        p[i] -= c;
        q[k] -= c;
        if (p[i] <= q[k]) ++i;
        else ++k;
      }
      for (std::size_t x = 0; x < n1; ++x)
        for (std::size_t y = 0; y < n2; ++y) row[x * n2 + y] += (1.0 - t) * mu.Q[a][x] * nu.Q[b][y];
    }
  // Stationary vector by the lazy chain started at the product measure.
  std::vector<double> v(n1 * n2);
  for (std::size_t a = 0; a < n1; ++a)
    for (std::size_t b = 0; b < n2; ++b) v[a * n2 + b] = mu.v[a] * nu.v[b];
  for (int it = 0; it < 200000; ++it) {
    std::vector<double> next(v.size(), 0.0);
    for (std::size_t s = 0; s < v.size(); ++s) {
      next[s] += 0.5 * v[s];
      if (v[s] == 0.0) continue;
      for (std::size_t u = 0; u < v.size(); ++u) next[u] += 0.5 * v[s] * j.joint.Q[s][u];
    }
    double diff = 0;
    for (std::size_t s = 0; s < v.size(); ++s) diff = std::max(diff, std::fabs(next[s] - v[s]));
    v = std::move(next);
    if (diff < 1e-17) break;
  }
  j.joint.v = v;
  validate_markov(j.joint, nullptr, 1e-11);
  return j;
}

template <class Scalar>
MarginalCertificate certify_marginals(const FiniteJoining<Scalar>& j, double tol) {
  MarginalCertificate cert;
  const std::size_t n1 = j.first.size(), n2 = j.second.size();
  double dev = 0.0;
  bool exact_ok = true;
  auto account = [&](const Scalar& a, const Scalar& b) {
    if (a != b) exact_ok = false;
    dev = std::max(dev, std::fabs(to_double(a) - to_double(b)));
  };
  for (std::size_t s1 = 0; s1 < n1; ++s1)
    for (std::size_t s2 = 0; s2 < n2; ++s2) {
      const auto& row = j.joint.Q[s1 * n2 + s2];
      for (std::size_t t1 = 0; t1 < n1; ++t1) {
        Scalar sum = 0;
        for (std::size_t t2 = 0; t2 < n2; ++t2) sum += row[t1 * n2 + t2];
        account(sum, j.first.Q[s1][t1]);
      }
      for (std::size_t t2 = 0; t2 < n2; ++t2) {
        Scalar sum = 0;
        for (std::size_t t1 = 0; t1 < n1; ++t1) sum += row[t1 * n2 + t2];
        account(sum, j.second.Q[s2][t2]);
      }
    }
  for (std::size_t s1 = 0; s1 < n1; ++s1) {
    Scalar sum = 0;
    for (std::size_t s2 = 0; s2 < n2; ++s2) sum += j.joint.v[s1 * n2 + s2];
    account(sum, j.first.v[s1]);
  }
  for (std::size_t s2 = 0; s2 < n2; ++s2) {
    Scalar sum = 0;
    for (std::size_t s1 = 0; s1 < n1; ++s1) sum += j.joint.v[s1 * n2 + s2];
    account(sum, j.second.v[s2]);
  }
  cert.max_deviation = dev;
  if constexpr (std::is_same_v<Scalar, Rational>) {
    cert.ok = exact_ok;
  } else {
    cert.ok = dev <= tol;
  }
  return cert;
}

std::string to_string(FiberPartition p) {
  switch (p) {
    case FiberPartition::Markov: return "markov";
    case FiberPartition::Factor: return "factor";
    case FiberPartition::Joint: return "joint";
  }
  return "unknown";
}

FiberPartition parse_fiber_partition(const std::string& name) {
  if (name == "markov") return FiberPartition::Markov;
  if (name == "factor") return FiberPartition::Factor;
  if (name == "joint") return FiberPartition::Joint;
  throw InvalidArgument("unknown partition '" + name + "'");
}

template <class Scalar>
FiberEntropy fiber_entropy_check(const CyclicMarkov<Scalar>& system, FiberPartition xi) {
  const std::size_t k = system.k(), m = system.m();
  auto flat = system.flatten();
  auto label = [&](std::size_t state) -> int {
    switch (xi) {
      case FiberPartition::Markov: return static_cast<int>(state / k);
      case FiberPartition::Factor: return static_cast<int>(state % k);
      case FiberPartition::Joint: return static_cast<int>(state);
    }
    return 0;
  };
  // H(xi_0 .. xi_{L-1} | r_0 = r) by enumerating every path of L states.
  auto block_entropy = [&](std::size_t r, std::size_t len) {
    std::map<Word, double> mass;
    Word labels;
    std::function<void(std::size_t, double)> walk = [&](std::size_t state, double p) {
      labels.push_back(label(state));
      if (labels.size() == len) {
        mass[labels] += p;
      } else {
        for (std::size_t t = 0; t < flat.size(); ++t) {
          double q = to_double(flat.Q[state][t]);
          if (q > 0.0) walk(t, p * q);
        }
      }
      labels.pop_back();
    };
    for (std::size_t a = 0; a < m; ++a) {
      double p = to_double(system.marginals[r][a]);
      if (p > 0.0) walk(a * k + r, p);
    }
    double h = 0.0;
    for (const auto& [w, p] : mass)
      if (p > 0.0) h -= p * std::log(p);
    return h;
  };
  FiberEntropy out;
  const std::size_t n = 2;
  for (std::size_t r = 0; r < k; ++r)
    out.lhs += (block_entropy(r, n + k) - block_entropy(r, n)) / static_cast<double>(k * k);
  if (xi != FiberPartition::Factor) {
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t a = 0; a < m; ++a) {
        double pa = to_double(system.marginals[r][a]);
        for (std::size_t b = 0; b < m; ++b) {
          double q = to_double(system.phases[r][a][b]);
          if (q > 0.0) out.rhs -= pa * q * std::log(q) / static_cast<double>(k);
        }
      }
  }
  return out;
}

MarkovMeasure equilibrium_state(const SFT& sft, const LocallyConstantPotential& phi) {
  if (!sft.is_irreducible()) throw InvalidArgument("equilibrium state needs an irreducible SFT");
  Grid<double> w = weighted_matrix(sft, phi);
  std::vector<int> all(w.size());
  std::iota(all.begin(), all.end(), 0);
  Perron p = perron(dense(w, all));
  const std::size_t n = w.size();
  MarkovMeasure c;
  c.Q = zeros<double>(n, n);
  c.v.assign(n, 0.0);
  double norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      c.Q[i][j] = w[i][j] * p.right[j] / (p.rho * p.right[i]);
      row += c.Q[i][j];
    }
    for (auto& q : c.Q[i]) q /= row;  // removes the last ulp of eigenvector error
    c.v[i] = p.left[i] * p.right[i];
    norm += c.v[i];
  }
  for (auto& x : c.v) x /= norm;
  validate_markov(c, &sft, 1e-12);
  return c;
}

double free_energy(const MarkovMeasure& chain, const LocallyConstantPotential& phi) {
  double integral = 0.0;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    integral += chain.v[i] * phi.symbol[i];
    if (!phi.edge.empty())
      for (std::size_t j = 0; j < chain.size(); ++j) integral += chain.v[i] * chain.Q[i][j] * phi.edge[i][j];
  }
  return markov_entropy(chain) + integral;
}

// ---------------------------------------------------------------------------
// Words

std::vector<Word> enumerate_words(const SFT& sft, std::size_t n, std::size_t budget) {
  std::vector<Word> out;
  if (n == 0) {
    out.emplace_back();
    return out;
  }
  Word w;
  std::function<void()> grow = [&] {
    if (w.size() == n) {
      if (out.size() >= budget) throw InvalidArgument("word enumeration exceeds its budget");
      out.push_back(w);
      return;
    }
    for (int b = 0; b < sft.alphabet_size(); ++b) {
      if (!w.empty() && !sft.allowed(w.back(), b)) continue;
      w.push_back(b);
      grow();
      w.pop_back();
    }
  };
  grow();
  return out;
}

BigInt count_words(const SFT& sft, std::size_t n) {
  if (n == 0) return 1;
  const auto m = static_cast<std::size_t>(sft.alphabet_size());
  std::vector<BigInt> ending(m, 1);
  for (std::size_t step = 1; step < n; ++step) {
    std::vector<BigInt> next(m, 0);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        if (sft.allowed(static_cast<int>(a), static_cast<int>(b))) next[b] += ending[a];
    ending = std::move(next);
  }
  BigInt total = 0;
  for (const auto& e : ending) total += e;
  return total;
}

Word symbolic_glue(const SFT& sft, const std::vector<Word>& words, std::size_t tau) {
  Word out;
  for (const auto& w : words) {
    if (w.empty()) throw InvalidArgument("cannot glue an empty word");
    if (!sft.word_allowed(w)) throw InvalidArgument("input word is not allowed");
    if (out.empty()) {
      out = w;
      continue;
    }
    const int m = sft.alphabet_size();
    // reach[t][a]: a can be the t-th filler symbol (t = tau means w[0]).
    std::vector<std::vector<char>> reach(tau + 1, std::vector<char>(static_cast<std::size_t>(m), 0));
    for (int a = 0; a < m; ++a)
      reach[0][static_cast<std::size_t>(a)] = tau == 0 ? (a == w[0] && sft.allowed(out.back(), a))
                                                        : sft.allowed(out.back(), a);
    for (std::size_t t = 1; t <= tau; ++t)
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
          if (reach[t - 1][static_cast<std::size_t>(a)] && sft.allowed(a, b) && (t < tau || b == w[0]))
            reach[t][static_cast<std::size_t>(b)] = 1;
    if (!reach[tau][static_cast<std::size_t>(w[0])])
      throw InvalidArgument("no connecting path of length " + std::to_string(tau));
    Word filler(tau);
    int target = w[0];
    for (std::size_t t = tau; t-- > 0;) {
      // Smallest predecessor at layer t that reaches `target`.
      for (int a = 0; a < m; ++a)
        if (reach[t][static_cast<std::size_t>(a)] && sft.allowed(a, target)) {
          filler[t] = a;
          target = a;
          break;
        }
    }
    out.insert(out.end(), filler.begin(), filler.end());
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

SFT sft_from_json(const nlohmann::json& doc, const std::string& at) {
  if (!doc.is_object()) throw SchemaError(at.empty() ? "/" : at, "SFT must be an object");
  if (!doc.contains("transition")) throw SchemaError(at + "/transition", "required field is missing");
  const auto& t = doc["transition"];
  if (!t.is_array() || t.empty()) throw SchemaError(at + "/transition", "expected a non-empty array of rows");
  Matrix01 m;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::string row_at = at + "/transition/" + std::to_string(i);
    if (!t[i].is_array() || t[i].size() != t.size()) throw SchemaError(row_at, "transition must be square");
    std::vector<int> row;
    for (std::size_t j = 0; j < t[i].size(); ++j) {
      const auto& v = t[i][j];
      if (!v.is_number_integer() || (v != 0 && v != 1))
        throw SchemaError(row_at + "/" + std::to_string(j), "expected 0 or 1");
      row.push_back(v.get<int>());
    }
    m.push_back(row);
  }
  if (doc.contains("m") && (!doc["m"].is_number_integer() || doc["m"].get<std::size_t>() != m.size()))
    throw SchemaError(at + "/m", "does not match the transition size");
  return SFT(std::move(m));
}

LocallyConstantPotential potential_from_json(const nlohmann::json& doc, int m, const std::string& at) {
  auto phi = LocallyConstantPotential::zero(m);
  if (!doc.is_object() || !doc.contains("weights")) return phi;
  const auto& w = doc["weights"];
  if (!w.is_array() || w.size() != static_cast<std::size_t>(m))
    throw SchemaError(at + "/weights", "expected one weight per symbol");
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!w[i].is_number()) throw SchemaError(at + "/weights/" + std::to_string(i), "expected a number");
    phi.symbol[i] = w[i].get<double>();
  }
  return phi;
}

// ---------------------------------------------------------------------------
// Explicit instantiations

#define GAPKIT_INSTANTIATE(S)                                                                      \
  template std::vector<S> stationary_vector<S>(const Grid<S>&);                                    \
  template MarkovChain<S> make_markov<S>(Grid<S>);                                                 \
  template void validate_markov<S>(const MarkovChain<S>&, const SFT*, double);                     \
  template double markov_entropy<S>(const MarkovChain<S>&);                                        \
  template struct CyclicMarkov<S>;                                                                 \
  template CyclicMarkov<S> make_cyclic<S>(std::vector<Grid<S>>);                                   \
  template CyclicMarkov<S> product_form<S>(const MarkovChain<S>&, std::size_t);                    \
  template FiniteJoining<S> build_joining<S>(JoiningKind, const CyclicMarkov<S>&, const CyclicMarkov<S>&); \
  template MarginalCertificate certify_marginals<S>(const FiniteJoining<S>&, double);              \
  template FiberEntropy fiber_entropy_check<S>(const CyclicMarkov<S>&, FiberPartition);

GAPKIT_INSTANTIATE(double)
GAPKIT_INSTANTIATE(Rational)

#undef GAPKIT_INSTANTIATE

}  // namespace gapkit
