#include "gapkit/shadowspec.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gapkit/random.hpp"

namespace gapkit {

namespace {

Quad qabs(Quad v) { return v < 0 ? -v : v; }

const Quad kQuadFromFixed = static_cast<Quad>(kFixedToUnit);
const Quad kQuadToFixed = static_cast<Quad>(kUnitToFixed);

/// Lifted difference a - b in quad precision.
Quad quad_delta(Fixed a, Fixed b) { return static_cast<Quad>(static_cast<SignedFixed>(a - b)) * kQuadFromFixed; }

/// v mod 1 as a fixed-point displacement.
Fixed quad_offset(Quad v) {
  v -= static_cast<Quad>(static_cast<long long>(v));
  if (v >= Quad(0.5)) v -= 1;
  if (v < Quad(-0.5)) v += 1;
  Quad scaled = v * kQuadToFixed;
  auto r = static_cast<SignedFixed>(scaled >= 0 ? scaled + Quad(0.5) : scaled - Quad(0.5));
  return static_cast<Fixed>(r);
}

TorusPoint displace(const TorusPoint& x, const QuadVector& v) {
  std::array<Fixed, kMaxDimension> q{};
  for (std::size_t i = 0; i < x.dim(); ++i) q[i] = x.fixed(i) + quad_offset(v[i]);
  return TorusPoint::from_fixed(std::span<const Fixed>(q.data(), x.dim()));
}

Quad sup_norm(const QuadVector& v, std::size_t d) {
  Quad m = 0;
  for (std::size_t i = 0; i < d; ++i) m = std::max(m, qabs(v[i]));
  return m;
}

/// Solves M z = b in place (row-major n x n); throws on a zero pivot.
std::vector<Quad> quad_solve(std::vector<Quad> M, std::vector<Quad> b, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (qabs(M[r * n + c]) > qabs(M[piv * n + c])) piv = r;
    if (M[piv * n + c] == 0) throw InvalidArgument("singular matrix in quad solve");
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(M[c * n + k], M[piv * n + k]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      Quad f = M[r * n + c] / M[c * n + c];
      if (f == 0) continue;
      for (std::size_t k = c; k < n; ++k) M[r * n + k] -= f * M[c * n + k];
      b[r] -= f * b[c];
    }
  }
  std::vector<Quad> z(n);
  for (std::size_t i = n; i-- > 0;) {
    Quad s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= M[i * n + k] * z[k];
    z[i] = s / M[i * n + i];
  }
  return z;
}

std::vector<Quad> quad_inverse(const std::vector<Quad>& M, std::size_t n) {
  std::vector<Quad> inv(n * n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<Quad> e(n, Quad(0));
    e[c] = 1;
    auto col = quad_solve(M, e, n);
    for (std::size_t r = 0; r < n; ++r) inv[r * n + c] = col[r];
  }
  return inv;
}

bool is_pure_linear(const DynSystem& s) {
  if (s.kind() == SystemKind::Linear)
    return std::all_of(s.offset().begin(), s.offset().end(), [](double c) { return c == 0.0; });
  if (s.kind() == SystemKind::External && !s.factors().empty())
    return std::all_of(s.factors().begin(), s.factors().end(), is_pure_linear);
  return false;
}

void collect_leaves(const DynSystem& s, std::vector<DynSystem>& out) {
  if (s.kind() == SystemKind::External && !s.factors().empty()) {
    for (const auto& f : s.factors()) collect_leaves(f, out);
  } else {
    out.push_back(s);
  }
}

DynSystem pure_model(const DynSystem& s) { return DynSystem::linear(s.linear_base().matrix()); }

std::vector<QuadVector> measure_jumps(const DynSystem& model, const std::vector<TorusPoint>& pts, Quad& sup) {
  const std::size_t d = model.dimension();
  std::vector<QuadVector> jumps(pts.empty() ? 0 : pts.size() - 1);
  sup = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    TorusPoint ax = model.forward(pts[i]);
    for (std::size_t c = 0; c < d; ++c) jumps[i][c] = quad_delta(pts[i + 1].fixed(c), ax.fixed(c));
    sup = std::max(sup, sup_norm(jumps[i], d));
  }
  return jumps;
}

struct Corrected {
  std::vector<QuadVector> v;
  std::vector<TorusPoint> y;
};

Corrected correct(const HyperbolicSplitting& split, const std::vector<TorusPoint>& pts,
                  const std::vector<QuadVector>& jumps) {
  Corrected out;
  out.v = split.corrections(jumps);
  out.y.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out.y.push_back(displace(pts[i], out.v[i]));
  return out;
}

}  // namespace

PseudoOrbit PseudoOrbit::measure(const DynSystem& model, std::vector<TorusPoint> points) {
  PseudoOrbit p;
  Quad sup = 0;
  measure_jumps(model, points, sup);
  p.points = std::move(points);
  p.jump_bound = static_cast<double>(sup);
  return p;
}

HyperbolicSplitting HyperbolicSplitting::of(const DynSystem& system) {
  HyperbolicSplitting h;
  h.model_ = pure_model(system);
  h.dim_ = system.dimension();
  std::vector<DynSystem> leaves;
  collect_leaves(system, leaves);
  std::size_t offset = 0;
  h.contraction_ = 0.0;
  h.shadow_constant_ = 0.0;
  h.condition_ = 1.0;
  for (const auto& leaf : leaves) {
    const IntMatrix A = leaf.linear_base().matrix();
    const std::size_t n = static_cast<std::size_t>(A.rows());
    Eigen::EigenSolver<Eigen::MatrixXd> es(A.cast<double>());
    std::vector<double> guesses;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      auto ev = es.eigenvalues()[i];
      if (std::fabs(ev.imag()) > 1e-9 * std::max(1.0, std::abs(ev)))
        throw InvalidArgument("hyperbolic splitting needs real eigenvalues");
      if (std::fabs(std::fabs(ev.real()) - 1.0) < 1e-9) throw InvalidArgument("matrix is not hyperbolic");
      guesses.push_back(ev.real());
    }
    std::sort(guesses.begin(), guesses.end(), [](double a, double b) { return std::fabs(a) > std::fabs(b); });
    for (std::size_t i = 0; i + 1 < n; ++i)
      if (std::fabs(guesses[i] - guesses[i + 1]) < 1e-8)
        throw InvalidArgument("repeated eigenvalue inside one block; split the system as a product");

    Block b;
    b.offset = offset;
    b.dim = n;
    b.P.assign(n * n, Quad(0));
    std::vector<Quad> Aq(n * n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) Aq[r * n + c] = static_cast<Quad>(A(r, c));
    for (std::size_t j = 0; j < n; ++j) {
      // Inverse iteration with a fixed double-precision shift.
      Quad shift = static_cast<Quad>(guesses[j]);
      std::vector<Quad> M = Aq;
      for (std::size_t i = 0; i < n; ++i) M[i * n + i] -= shift;
      std::vector<Quad> v(n, Quad(1));
      for (std::size_t i = 0; i < n; ++i) v[i] += static_cast<Quad>(0.1 * static_cast<double>(i + 1));
      for (int it = 0; it < 8; ++it) {
        v = quad_solve(M, v, n);
        Quad m = 0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < n; ++i)
          if (qabs(v[i]) > m) m = qabs(v[i]), arg = i;
        Quad s = v[arg];
        for (auto& x : v) x /= s;
      }
      // mu from the largest component of A v.
      std::size_t arg = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (qabs(v[i]) > qabs(v[arg])) arg = i;
      Quad av = 0;
      for (std::size_t k = 0; k < n; ++k) av += Aq[arg * n + k] * v[k];
      b.mu.push_back(av / v[arg]);
      for (std::size_t i = 0; i < n; ++i) b.P[i * n + j] = v[i];
    }
    b.Pinv = quad_inverse(b.P, n);

    double k_block = 0.0, p_norm = 0.0, pinv_norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double mu = std::fabs(static_cast<double>(b.mu[j]));
      double row = 0.0, col = 0.0, prow = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        row += std::fabs(static_cast<double>(b.Pinv[j * n + k]));
        col = std::max(col, std::fabs(static_cast<double>(b.P[k * n + j])));
        prow += std::fabs(static_cast<double>(b.P[j * n + k]));
      }
      k_block += row * col / std::fabs(1.0 - mu);
      h.contraction_ = std::max(h.contraction_, mu < 1.0 ? mu : 1.0 / mu);
      pinv_norm = std::max(pinv_norm, row);
      p_norm = std::max(p_norm, prow);
    }
    h.shadow_constant_ = std::max(h.shadow_constant_, k_block);
    h.condition_ = std::max(h.condition_, p_norm * pinv_norm);
    h.blocks_.push_back(std::move(b));
    offset += n;
  }
  if (offset != h.dim_) throw ConsistencyError("block dimensions do not add up");
  return h;
}

std::vector<QuadVector> HyperbolicSplitting::corrections(const std::vector<QuadVector>& jumps) const {
  const std::size_t L = jumps.size() + 1;
  std::vector<QuadVector> v(L, QuadVector{});
  std::vector<Quad> c(L);
  for (const auto& b : blocks_) {
    for (std::size_t j = 0; j < b.dim; ++j) {
      const Quad mu = b.mu[j];
      auto eps = [&](std::size_t i) {
        Quad s = 0;
        for (std::size_t k = 0; k < b.dim; ++k) s += b.Pinv[j * b.dim + k] * jumps[i][b.offset + k];
        return s;
      };
      if (qabs(mu) < 1) {
        c[0] = 0;
        for (std::size_t i = 0; i + 1 < L; ++i) c[i + 1] = mu * c[i] - eps(i);
      } else {
        c[L - 1] = 0;
        for (std::size_t i = L - 1; i-- > 0;) c[i] = (c[i + 1] + eps(i)) / mu;
      }
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t r = 0; r < b.dim; ++r) v[i][b.offset + r] += b.P[r * b.dim + j] * c[i];
    }
  }
  return v;
}

ShadowResult shadow(const HyperbolicSplitting& split, const PseudoOrbit& pseudo, double tol) {
  if (pseudo.points.empty()) throw InvalidArgument("shadow: empty pseudo-orbit");
  const DynSystem& A = split.model();
  if (pseudo.points.front().dim() != A.dimension()) throw InvalidArgument("shadow: dimension mismatch");
  Quad sup = 0;
  auto jumps = measure_jumps(A, pseudo.points, sup);
  ShadowResult r;
  r.jump_bound = static_cast<double>(sup);
  r.bound = split.shadow_constant() * r.jump_bound;
  if (r.bound >= 0.25) {
    std::ostringstream msg;
    msg << "pseudo-orbit too rough to shadow: K_A * jump = " << r.bound << " >= 0.25";
    throw ShadowingError(msg.str(), r.bound);
  }
  auto fixed = correct(split, pseudo.points, jumps);
  const std::size_t d = A.dimension();
  for (const auto& v : fixed.v) {
    r.errors.push_back(static_cast<double>(sup_norm(v, d)));
    r.error = std::max(r.error, r.errors.back());
  }
  for (std::size_t i = 0; i + 1 < fixed.y.size(); ++i)
    r.residual = std::max(r.residual, torus_distance(A.forward(fixed.y[i]), fixed.y[i + 1]));
  if (r.residual > tol) {
    std::ostringstream msg;
    msg << "shadowing residual " << r.residual << " exceeds tolerance " << tol;
    throw ConsistencyError(msg.str());
  }
  r.y = fixed.y.front();
  r.corrected = std::move(fixed.y);
  return r;
}

double orbit_error(const DynSystem& model, const TorusPoint& y, const std::vector<TorusPoint>& points) {
  double e = 0.0;
  TorusPoint z = y;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i > 0) z = model.apply_linear(z);
    e = std::max(e, torus_distance(z, points[i]));
  }
  return e;
}

double estimate_c0_distance(const DynSystem& g, std::uint64_t seed, std::size_t samples) {
  if (g.kind() == SystemKind::External && !g.factors().empty()) {
    double m = 0.0;
    for (std::size_t i = 0; i < g.factors().size(); ++i)
      m = std::max(m, estimate_c0_distance(g.factors()[i], splitmix64(seed + i), samples));
    return m;
  }
  const DynSystem A = pure_model(g);
  const std::size_t d = g.dimension();
  double m = 0.0;
  auto probe = [&](const TorusPoint& x) { m = std::max(m, torus_distance(g.forward(x), A.forward(x))); };
  auto rng = make_stream(seed, 0xC0);
  for (std::size_t s = 0; s < samples; ++s) probe(random_point(rng, d));
  if (g.rho() > 0.0) {
    const std::size_t per_axis = d <= 2 ? 81 : d == 3 ? 25 : 7;
    std::vector<std::size_t> idx(d, 0);
    std::vector<double> v(d);
    while (true) {
      for (std::size_t c = 0; c < d; ++c)
        v[c] = g.rho() * (2.0 * static_cast<double>(idx[c]) / static_cast<double>(per_axis - 1) - 1.0);
      probe(translate(g.fixed_point(), v));
      std::size_t c = 0;
      while (c < d && ++idx[c] == per_axis) idx[c++] = 0;
      if (c == d) break;
    }
    for (std::size_t s = 0; s < samples; ++s) {
      for (std::size_t c = 0; c < d; ++c) v[c] = uniform(rng, -g.rho(), g.rho());
      probe(translate(g.fixed_point(), v));
    }
  }
  return m;
}

Semiconjugacy::Semiconjugacy(const DynSystem& g, double tol, std::size_t window)
    : g_(g), split_(HyperbolicSplitting::of(g)), tol_(tol), window_(window) {
  if (!(tol > 0.0)) throw InvalidArgument("semiconjugacy tolerance must be positive");
  if (window_ == 0) {
    double theta = split_.contraction();
    window_ = std::max<std::size_t>(10, static_cast<std::size_t>(std::ceil(std::log(tol) / std::log(theta))) + 5);
  }
  c0_ = estimate_c0_distance(g, 0x5E41C0ULL);
  delta_ = split_.shadow_constant() * c0_;
  if (delta_ >= 0.25) {
    std::ostringstream msg;
    msg << "system too far from its linear model: K_A * d_C0 = " << delta_;
    throw ShadowingError(msg.str(), delta_);
  }
}

namespace {

std::vector<TorusPoint> window_orbit(const DynSystem& g, const TorusPoint& x, std::size_t N) {
  std::vector<TorusPoint> pts(2 * N + 1);
  pts[N] = x;
  for (std::size_t k = 1; k <= N; ++k) {
    pts[N + k] = g.forward(pts[N + k - 1]);
    pts[N - k] = g.inverse(pts[N - k + 1]);
  }
  return pts;
}

}  // namespace

SemiconjugacyValue Semiconjugacy::operator()(const TorusPoint& x) const {
  auto pts = window_orbit(g_, x, window_);
  Quad sup = 0;
  auto jumps = measure_jumps(split_.model(), pts, sup);
  if (split_.shadow_constant() * static_cast<double>(sup) >= 0.25) {
    double f = split_.shadow_constant() * static_cast<double>(sup);
    throw ShadowingError("g-orbit window too rough to shadow", f);
  }
  auto v = split_.corrections(jumps);
  SemiconjugacyValue out;
  out.pi = displace(x, v[window_]);
  out.displacement = torus_distance(x, out.pi);
  return out;
}

double Semiconjugacy::orbit_bound(const TorusPoint& x) const {
  auto pts = window_orbit(g_, x, window_);
  Quad sup = 0;
  measure_jumps(split_.model(), pts, sup);
  return split_.shadow_constant() * static_cast<double>(sup);
}

SemiconjugacyCheck check_semiconjugacy(const Semiconjugacy& pi, std::size_t samples, std::uint64_t seed,
                                       unsigned jobs) {
  struct Row {
    double residual = 0, displacement = 0, excess = 0;
  };
  std::vector<Row> rows(samples);
  const DynSystem& A = pi.splitting().model();
  const std::size_t d = pi.system().dimension();
  parallel_for(samples, jobs, [&](std::size_t i) {
    auto rng = make_stream(seed, i);
    TorusPoint x = random_point(rng, d);
    auto px = pi(x);
    auto pgx = pi(pi.system().forward(x));
    rows[i].residual = torus_distance(A.forward(px.pi), pgx.pi);
    rows[i].displacement = px.displacement;
    rows[i].excess = px.displacement - pi.orbit_bound(x);
  });
  SemiconjugacyCheck c;
  c.samples = samples;
  for (const auto& r : rows) {
    c.max_residual = std::max(c.max_residual, r.residual);
    c.max_displacement = std::max(c.max_displacement, r.displacement);
    c.max_excess = std::max(c.max_excess, r.excess);
  }
  return c;
}

GlueResult spec_glue(const DynSystem& system, const std::vector<OrbitSegment>& segments, double delta,
                     std::size_t max_tau) {
  if (segments.empty()) throw InvalidArgument("spec_glue: no segments");
  if (!(delta > 0.0)) throw InvalidArgument("spec_glue: delta must be positive");
  for (const auto& s : segments)
    if (s.n == 0 || s.base.dim() != system.dimension()) throw InvalidArgument("spec_glue: bad segment");
  if (!is_pure_linear(system))
    throw InvalidArgument("spec_glue supports hyperbolic linear systems and their products only");
  auto split = HyperbolicSplitting::of(system);

  double best = INFINITY;
  std::size_t best_tau = 0;
  for (std::size_t tau = 0; tau <= max_tau; ++tau) {
    if (segments.size() == 1 && tau > 0) break;
    const std::size_t ahead = (tau + 1) / 2, behind = tau / 2;
    std::vector<TorusPoint> pts;
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const auto& s = segments[i];
      const bool first = i == 0, last = i + 1 == segments.size();
      std::size_t pre = first ? 0 : behind;
      std::size_t post = last ? 0 : ahead;
      TorusPoint z = system.apply(s.base, -static_cast<long long>(pre));
      starts.push_back(pts.size() + pre);
      for (std::size_t k = 0; k < pre + s.n + post; ++k) {
        pts.push_back(z);
        z = system.forward(z);
      }
    }
    Quad sup = 0;
    auto jumps = measure_jumps(system, pts, sup);
    auto fixed = correct(split, pts, jumps);
    GlueResult g;
    g.y = fixed.y.front();
    g.tau = tau;
    g.starts = std::move(starts);
    g.requested_delta = delta;
    g.segment_errors = verify_glue(system, g, segments);
    double worst = *std::max_element(g.segment_errors.begin(), g.segment_errors.end());
    if (worst < best) best = worst, best_tau = tau;
    if (worst <= delta) return g;
  }
  std::ostringstream msg;
  msg << "no gap up to " << max_tau << " shadows within " << delta << "; best " << best << " at tau = " << best_tau;
  throw Error(msg.str());
}

std::vector<double> verify_glue(const DynSystem& system, const GlueResult& glue,
                                const std::vector<OrbitSegment>& segments) {
  if (glue.starts.size() != segments.size()) throw InvalidArgument("verify_glue: segment count mismatch");
  std::vector<double> errors;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    TorusPoint z = system.apply(glue.y, static_cast<long long>(glue.starts[i]));
    TorusPoint x = segments[i].base;
    double e = 0.0;
    for (std::size_t k = 0; k < segments[i].n; ++k) {
      e = std::max(e, torus_distance(z, x));
      z = system.forward(z);
      x = system.forward(x);
    }
    errors.push_back(e);
  }
  return errors;
}

namespace {

/// d(f^k x, f^k y) < eps for every |k| <= K, iterating step by step.
bool stays_close(const DynSystem& f, const TorusPoint& x, const TorusPoint& y, double eps, std::size_t K) {
  if (!(torus_distance(x, y) < eps)) return false;
  TorusPoint a = x, b = y;
  for (std::size_t k = 0; k < K; ++k) {
    a = f.forward(a);
    b = f.forward(b);
    if (!(torus_distance(a, b) < eps)) return false;
  }
  a = x, b = y;
  for (std::size_t k = 0; k < K; ++k) {
    a = f.inverse(a);
    b = f.inverse(b);
    if (!(torus_distance(a, b) < eps)) return false;
  }
  return true;
}

}  // namespace

NEProbeResult expansivity_probe(const DynSystem& system, double eps, std::size_t K, std::size_t samples,
                                std::uint64_t seed, double floor, unsigned jobs) {
  if (!(eps > 0.0) || !(floor >= 0.0) || !(floor < eps)) throw InvalidArgument("expansivity_probe: need 0 <= floor < eps");
  const std::size_t d = system.dimension();
  std::vector<std::optional<std::pair<TorusPoint, TorusPoint>>> hits(samples);
  parallel_for(samples, jobs, [&](std::size_t i) {
    auto rng = make_stream(seed, i);
    TorusPoint x = random_point(rng, d);
    std::vector<double> v(d);
    TorusPoint y;
    double sep = 0.0;
    do {
      for (auto& c : v) c = uniform(rng, -eps, eps);
      y = translate(x, v);
      sep = torus_distance(x, y);
    } while (sep < floor || !(sep < eps));
    if (stays_close(system, x, y, eps, K)) hits[i] = std::make_pair(x, y);
  });
  NEProbeResult r;
  r.eps = eps;
  r.K = K;
  r.samples = samples;
  r.floor = floor;
  for (const auto& h : hits) {
    if (!h) continue;
    r.pairs.push_back(*h);
    r.pairs.emplace_back(h->second, h->first);
  }
  return r;
}

bool certify_ne_pairs(const DynSystem& system, const NEProbeResult& result) {
  for (const auto& [x, y] : result.pairs) {
    if (torus_distance(x, y) < result.floor) return false;
    for (long long k = -static_cast<long long>(result.K); k <= static_cast<long long>(result.K); ++k)
      if (!(torus_distance(system.apply(x, k), system.apply(y, k)) < result.eps)) return false;
  }
  return true;
}

bool ne_product_structure(const DynSystem& base, const NEProbeResult& product_result) {
  const std::size_t d = base.dimension();
  for (const auto& [a, b] : product_result.pairs) {
    if (a.dim() != 2 * d) throw InvalidArgument("ne_product_structure: not a product point");
    bool found = false;
    for (std::size_t off : {std::size_t{0}, d}) {
      TorusPoint x = a.slice(off, d), y = b.slice(off, d);
      if (x == y) continue;
      if (stays_close(base, x, y, product_result.eps, product_result.K)) found = true;
    }
    if (!found) return false;
  }
  return true;
}

BowenTable bowen_probe(const DynSystem& system, const Potential& phi, const LambdaFunction& lambda, double eta,
                       double eps, std::size_t n_min, std::size_t n_max, std::size_t samples, std::uint64_t seed,
                       unsigned jobs) {
  if (n_min == 0 || n_max < n_min) throw InvalidArgument("bowen_probe: bad n range");
  if (!(eps > 0.0)) throw InvalidArgument("bowen_probe: eps must be positive");
  const std::size_t d = system.dimension();
  const std::size_t rows_n = n_max - n_min + 1;
  // gap[i][n - n_min], negative when the sample does not contribute at n.
  std::vector<std::vector<double>> gaps(samples, std::vector<double>(rows_n, -1.0));
  parallel_for(samples, jobs, [&](std::size_t i) {
    auto rng = make_stream(seed, i);
    TorusPoint x = random_point(rng, d);
    Eigen::VectorXd dir = stable_direction(system, x);
    double scale = dir.cwiseAbs().maxCoeff();
    double t = uniform(rng, -eps, eps) / scale;
    auto xs = system.orbit(x, n_max);
    std::vector<double> sx(n_max + 1, 0.0);
    for (std::size_t k = 0; k < n_max; ++k) sx[k + 1] = sx[k] + phi(xs[k]);
    std::vector<double> lam(n_max);
    for (std::size_t k = 0; k < n_max; ++k) lam[k] = lambda(xs[k]);
    for (int attempt = 0; attempt < 30; ++attempt, t *= 0.5) {
      std::vector<double> v(d);
      for (std::size_t c = 0; c < d; ++c) v[c] = t * dir[static_cast<Eigen::Index>(c)];
      auto ys = system.orbit(translate(x, v), n_max);
      // Keep the partner only while it stays in the Bowen ball.
      double sy = 0.0;
      bool inside = true;
      for (std::size_t k = 0; k < n_max && inside; ++k) {
        if (torus_distance(xs[k], ys[k]) > eps) {
          inside = false;
          break;
        }
        sy += phi(ys[k]);
        std::size_t n = k + 1;
        if (n < n_min) continue;
        auto cls = classify_values(std::span<const double>(lam.data(), n), eta);
        if (!cls.in_good_two_sided) continue;
        gaps[i][n - n_min] = std::fabs(sx[n] - sy);
      }
      if (inside) break;
      std::fill(gaps[i].begin(), gaps[i].end(), -1.0);
    }
  });
  BowenTable table;
  std::vector<double> xs, ys;
  for (std::size_t j = 0; j < rows_n; ++j) {
    BowenRow row;
    row.n = n_min + j;
    for (std::size_t i = 0; i < samples; ++i) {
      if (gaps[i][j] < 0) continue;
      ++row.pairs;
      row.max_gap = std::max(row.max_gap, gaps[i][j]);
    }
    if (row.pairs == 0) continue;
    table.rows.push_back(row);
    xs.push_back(static_cast<double>(row.n));
    ys.push_back(row.max_gap);
  }
  if (table.rows.empty()) {
    table.diagnostic = "no G(eta) segments among the samples";
    table.slope = NAN;
    table.stderr_slope = NAN;
    return table;
  }
  if (table.rows.size() < 3) {
    table.diagnostic = "too few lengths with G(eta) segments to fit a slope";
    table.slope = NAN;
    table.stderr_slope = NAN;
    return table;
  }
  auto fit = fit_line(xs, ys);
  table.slope = fit.slope;
  table.stderr_slope = fit.stderr_slope;
  return table;
}

}  // namespace gapkit
