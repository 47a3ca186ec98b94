#include "gapkit/pressure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "gapkit/random.hpp"

namespace gapkit {

// ---------------------------------------------------------------------------
// Collections

SegmentCollection SegmentCollection::all() {
  return {[](const OrbitSegment&) { return true; }, "all"};
}

SegmentCollection SegmentCollection::bad(const DynSystem& system, const LambdaFunction& lambda, double eta) {
  return {[system, lambda, eta](const OrbitSegment& seg) {
            return seg.n > 0 && classify_segment(system, lambda, eta, seg).in_bad;
          },
          "bad(" + std::to_string(eta) + ")"};
}

SegmentCollection SegmentCollection::good(const DynSystem& system, const LambdaFunction& lambda, double eta,
                                          DecompositionMode mode) {
  return {[system, lambda, eta, mode](const OrbitSegment& seg) {
            if (seg.n == 0) return false;
            auto c = classify_segment(system, lambda, eta, seg);
            switch (mode) {
              case DecompositionMode::TwoSided: return c.in_good_two_sided;
              case DecompositionMode::OneSidedPrefix: return c.in_good_prefix;
              case DecompositionMode::OneSidedSuffix: return c.in_good_suffix;
            }
            return false;
          },
          "good(" + std::to_string(eta) + ")"};
}

SegmentCollection SegmentCollection::in_set(const DynSystem& system, std::function<bool(const TorusPoint&)> in_set,
                                            std::size_t K, std::string name) {
  return {[system, in_set, K](const OrbitSegment& seg) {
            TorusPoint x = system.apply(seg.base, -static_cast<long long>(K));
            for (std::size_t i = 0; i < seg.n + 2 * K; ++i) {
              if (!in_set(x)) return false;
              x = system.forward(x);
            }
            return true;
          },
          "inSet(" + name + "," + std::to_string(K) + ")"};
}

SegmentCollection SegmentCollection::custom(std::function<bool(const OrbitSegment&)> predicate, std::string label) {
  return {std::move(predicate), std::move(label)};
}

// ---------------------------------------------------------------------------
// Pools

std::string to_string(PoolKind kind) {
  switch (kind) {
    case PoolKind::Grid: return "grid";
    case PoolKind::Random: return "random";
    case PoolKind::Leaf: return "leaf";
    case PoolKind::Explicit: return "explicit";
  }
  return "unknown";
}

PoolKind parse_pool_kind(const std::string& name) {
  if (name == "grid") return PoolKind::Grid;
  if (name == "random") return PoolKind::Random;
  if (name == "leaf") return PoolKind::Leaf;
  if (name == "explicit") return PoolKind::Explicit;
  throw InvalidArgument("unknown pool kind '" + name + "'");
}

nlohmann::json PoolSpec::to_json() const {
  nlohmann::json out{{"kind", to_string(kind)}};
  switch (kind) {
    case PoolKind::Grid: break;
    case PoolKind::Random:
      out["size"] = size;
      out["seed"] = seed;
      break;
    case PoolKind::Leaf:
      out["leafLength"] = leaf_length;
      if (pitch > 0) out["pitch"] = pitch;
      if (leaf_base) out["leafBase"] = leaf_base->to_vector();
      break;
    case PoolKind::Explicit: out["size"] = points.size(); break;
  }
  return out;
}

std::vector<TorusPoint> build_pool(const DynSystem& system, const PoolSpec& spec, double eps, std::size_t n_max) {
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  const std::size_t d = system.dimension();
  std::vector<TorusPoint> pool;
  switch (spec.kind) {
    case PoolKind::Grid: {
      const auto m = static_cast<std::size_t>(std::ceil(3.0 / eps));
      double total = std::pow(static_cast<double>(m), static_cast<double>(d));
      if (total > static_cast<double>(spec.max_points)) throw InvalidArgument("grid pool exceeds its point budget");
      pool.reserve(static_cast<std::size_t>(total));
      std::vector<std::size_t> idx(d, 0);
      std::vector<double> c(d);
      for (;;) {
        for (std::size_t i = 0; i < d; ++i) c[i] = static_cast<double>(idx[i]) / static_cast<double>(m);
        pool.emplace_back(c);
        std::size_t i = 0;
        while (i < d && ++idx[i] == m) idx[i++] = 0;
        if (i == d) break;
      }
      break;
    }
    case PoolKind::Random: {
      if (spec.size == 0) throw InvalidArgument("random pool needs a positive size");
      pool.reserve(spec.size);
      auto rng = make_stream(spec.seed, 0x600Dull);
      for (std::size_t i = 0; i < spec.size; ++i) pool.push_back(random_point(rng, d));
      break;
    }
    case PoolKind::Leaf: {
      const auto& spec_a = system.linear_base().spectrum();
      const double lu = std::fabs(spec_a.eigenvalues.front());
      if (!(lu > 1.0)) throw InvalidArgument("leaf pool needs an expanding direction");
      double pitch = spec.pitch > 0 ? spec.pitch
                                    : eps * std::pow(lu, -static_cast<double>(n_max > 0 ? n_max - 1 : 0)) / 3.0;
      double count = std::floor(spec.leaf_length / pitch) + 1;
      if (count > static_cast<double>(spec.max_points)) throw InvalidArgument("leaf pool exceeds its point budget");
      TorusPoint base = spec.leaf_base ? *spec.leaf_base : system.fixed_point();
      if (base.dim() != d) throw InvalidArgument("leaf base has the wrong dimension");
      Eigen::VectorXd u = spec_a.basis.col(0);
      auto total = static_cast<std::size_t>(count);
      pool.reserve(total);
      std::vector<double> v(d);
      for (std::size_t i = 0; i < total; ++i) {
        double s = -0.5 * spec.leaf_length + static_cast<double>(i) * pitch;
        for (std::size_t j = 0; j < d; ++j) v[j] = s * u(static_cast<Eigen::Index>(j));
        pool.push_back(translate(base, v));
      }
      break;
    }
    case PoolKind::Explicit:
      for (const auto& p : spec.points)
        if (p.dim() != d) throw InvalidArgument("pool point has the wrong dimension");
      pool = spec.points;
      break;
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Separated sets

namespace {

// Smallest fixed gap g with fixed_to_double(g) >= eps, so that comparisons in
// fixed units agree exactly with torus_distance(...) >= eps. Torus distances
// never exceed 1/2, so a larger eps separates nothing.
Fixed fixed_threshold(double eps) {
  if (eps > 0.5) return ~static_cast<Fixed>(0);
  Fixed lo = 0, hi = static_cast<Fixed>(1) << 127;
  while (lo < hi) {
    Fixed mid = lo + (hi - lo) / 2;
    if (fixed_to_double(mid) >= eps) hi = mid;
    else lo = mid + 1;
  }
  return lo;
}

// Sup distance of two stored iterates, in fixed units.
Fixed sup_gap(const Fixed* a, const Fixed* b, std::size_t d) {
  Fixed g = 0;
  for (std::size_t i = 0; i < d; ++i) g = std::max(g, fixed_abs(a[i] - b[i]));
  return g;
}

class CellIndex {
 public:
  CellIndex(double eps, std::size_t d) : d_(d) {
    cells_ = eps >= 1.0 ? 1 : static_cast<std::uint64_t>(std::floor(1.0 / eps));
    if (cells_ < 1) cells_ = 1;
  }

  void cell_of(const Fixed* x, std::vector<std::uint64_t>& out) const {
    out.resize(d_);
    for (std::size_t i = 0; i < d_; ++i) {
      auto hi = static_cast<std::uint64_t>(x[i] >> 64);
      out[i] = static_cast<std::uint64_t>((static_cast<unsigned __int128>(hi) * cells_) >> 64);
    }
  }

  std::uint64_t key(const std::vector<std::uint64_t>& cell) const {
    std::uint64_t h = 0x12345;
    for (auto c : cell) h = splitmix64(h ^ c);
    return h;
  }

  /// Keys of every cell within one step of `cell` on each axis, deduplicated.
  void neighbours(const std::vector<std::uint64_t>& cell, std::vector<std::uint64_t>& keys) const {
    keys.clear();
    const std::uint64_t span = std::min<std::uint64_t>(cells_, 3);
    std::vector<std::uint64_t> off(d_, 0), probe(d_);
    for (;;) {
      for (std::size_t i = 0; i < d_; ++i) probe[i] = (cell[i] + cells_ - 1 + off[i]) % cells_;
      keys.push_back(key(probe));
      std::size_t i = 0;
      while (i < d_ && ++off[i] == span) off[i++] = 0;
      if (i == d_) break;
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  }

 private:
  std::size_t d_;
  std::uint64_t cells_;
};

void fill_orbit(const DynSystem& system, const TorusPoint& x, std::size_t n, std::vector<Fixed>& out) {
  const std::size_t d = system.dimension();
  out.resize(n * d);
  TorusPoint y = x;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < d; ++i) out[k * d + i] = y.fixed(i);
    if (k + 1 < n) y = system.forward(y);
  }
}

double birkhoff_sum(const DynSystem& system, const Potential& phi, const TorusPoint& x, std::size_t n) {
  if (phi.constant_value) return static_cast<double>(n) * *phi.constant_value;
  double s = 0.0;
  TorusPoint y = x;
  for (std::size_t k = 0; k < n; ++k) {
    s += phi(y);
    if (k + 1 < n) y = system.forward(y);
  }
  return s;
}

}  // namespace

SeparatedSet max_separated_set(const DynSystem& system, const SegmentCollection& C, std::size_t n, double eps,
                               const Potential& phi, const std::vector<TorusPoint>& pool, unsigned jobs) {
  if (n == 0) throw InvalidArgument("segment length must be positive");
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  SeparatedSet out;
  out.n = n;
  out.eps = eps;
  const std::size_t d = system.dimension();

  std::vector<char> inside(pool.size(), 0);
  std::vector<double> weight(pool.size(), 0.0);
  parallel_for(pool.size(), jobs, [&](std::size_t i) {
    OrbitSegment seg{pool[i], n};
    if (!C.contains(seg)) return;
    inside[i] = 1;
    weight[i] = birkhoff_sum(system, phi, pool[i], n);
  });
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (inside[i]) order.push_back(i);
  out.candidates = order.size();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (weight[a] != weight[b]) return weight[a] > weight[b];
    if (pool[a] < pool[b]) return true;
    if (pool[b] < pool[a]) return false;
    return a < b;
  });

  // Two points are (n, eps)-close only if their last iterates share or
  // neighbour a cell of width >= eps.
  const Fixed thr = fixed_threshold(eps);
  CellIndex index(eps, d);
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
  std::vector<Fixed> admitted;  // n * d per admitted point
  std::vector<Fixed> orbit;
  std::vector<std::uint64_t> cell, keys;
  for (std::size_t idx : order) {
    fill_orbit(system, pool[idx], n, orbit);
    const Fixed* last = orbit.data() + (n - 1) * d;
    index.cell_of(last, cell);
    index.neighbours(cell, keys);
    bool separated = true;
    for (auto key : keys) {
      auto it = buckets.find(key);
      if (it == buckets.end()) continue;
      for (std::uint32_t j : it->second) {
        const Fixed* other = admitted.data() + static_cast<std::size_t>(j) * n * d;
        bool apart = false;
        for (std::size_t k = n; k-- > 0;)
          if (sup_gap(orbit.data() + k * d, other + k * d, d) >= thr) {
            apart = true;
            break;
          }
        if (!apart) {
          separated = false;
          break;
        }
      }
      if (!separated) break;
    }
    if (!separated) continue;
    auto id = static_cast<std::uint32_t>(out.points.size());
    buckets[index.key(cell)].push_back(id);
    admitted.insert(admitted.end(), orbit.begin(), orbit.end());
    out.points.push_back(pool[idx]);
    out.weights.push_back(weight[idx]);
  }
  return out;
}

double log_partition_sum(const std::vector<double>& weights) {
  if (weights.empty()) return -INFINITY;
  double m = *std::max_element(weights.begin(), weights.end());
  double s = 0.0;
  for (double w : weights) s += std::exp(w - m);
  return m + std::log(s);
}

double partition_sum(const DynSystem& system, const SegmentCollection& C, std::size_t n, double eps,
                     const Potential& phi, const std::vector<TorusPoint>& pool, unsigned jobs) {
  return log_partition_sum(max_separated_set(system, C, n, eps, phi, pool, jobs).weights);
}

SeparationCertificate certify_separated(const DynSystem& system, const SeparatedSet& set) {
  SeparationCertificate cert;
  std::vector<std::vector<TorusPoint>> orbits;
  orbits.reserve(set.points.size());
  for (const auto& p : set.points) orbits.push_back(system.orbit(p, set.n));
  for (std::size_t i = 0; i < orbits.size(); ++i)
    for (std::size_t j = i + 1; j < orbits.size(); ++j) {
      ++cert.pairs_checked;
      bool apart = false;
      for (std::size_t k = 0; k < set.n && !apart; ++k)
        apart = torus_distance(orbits[i][k], orbits[j][k]) >= set.eps;
      if (!apart) {
        cert.ok = false;
        cert.offending = std::make_pair(i, j);
        return cert;
      }
    }
  return cert;
}

// ---------------------------------------------------------------------------
// Fits and estimates

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw EstimationError("line fit needs at least two points");
  LinearFit f;
  f.points = x.size();
  const double k = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / k;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / k;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw EstimationError("line fit needs distinct abscissae");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double ssr = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double r = y[i] - f.intercept - f.slope * x[i];
      ssr += r * r;
    }
    f.stderr_slope = std::sqrt(ssr / (k - 2) / sxx);
  }
  return f;
}

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

void fit_estimate(PressureEstimate& est) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < est.log_partition_sums.size(); ++i)
    if (std::isfinite(est.log_partition_sums[i])) {
      xs.push_back(static_cast<double>(est.n_min + i));
      ys.push_back(est.log_partition_sums[i]);
    }
  if (xs.empty()) {
    est.empty = true;
    est.slope = -INFINITY;
    est.intercept = -INFINITY;
    return;
  }
  if (xs.size() < 2) throw EstimationError("fewer than two finite partition sums");
  auto f = fit_line(xs, ys);
  est.slope = f.slope;
  est.intercept = f.intercept;
  est.stderr_slope = f.stderr_slope;
}

void check_range(std::size_t n_min, std::size_t n_max) {
  if (n_min == 0 || n_max < n_min + 4) throw InvalidArgument("n range must span at least 5 lengths");
}

}  // namespace

nlohmann::json PressureEstimate::to_json() const {
  nlohmann::json sums = nlohmann::json::array();
  for (double v : log_partition_sums) sums.push_back(finite_or_null(v));
  return {{"epsilon", eps},
          {"nRange", {n_min, n_max}},
          {"logPartitionSums", sums},
          {"setSizes", set_sizes},
          {"slope", finite_or_null(slope)},
          {"intercept", finite_or_null(intercept)},
          {"stderr", stderr_slope},
          {"empty", empty}};
}

PressureEstimate pressure_estimate(const DynSystem& system, const SegmentCollection& C, const Potential& phi,
                                   double eps, std::size_t n_min, std::size_t n_max,
                                   const std::vector<TorusPoint>& pool, unsigned jobs) {
  check_range(n_min, n_max);
  if (pool.empty()) throw InvalidArgument("candidate pool is empty");
  PressureEstimate est;
  est.eps = eps;
  est.n_min = n_min;
  est.n_max = n_max;
  const std::size_t count = n_max - n_min + 1;
  est.log_partition_sums.assign(count, -INFINITY);
  est.set_sizes.assign(count, 0);
  // One job per length; the greedy pass inside a job is sequential.
  parallel_for(count, jobs, [&](std::size_t i) {
    auto set = max_separated_set(system, C, n_min + i, eps, phi, pool, 1);
    est.log_partition_sums[i] = log_partition_sum(set.weights);
    est.set_sizes[i] = set.points.size();
  });
  fit_estimate(est);
  return est;
}

PressureLadder pressure_ladder(const DynSystem& system, const SegmentCollection& C, const Potential& phi,
                               const std::vector<double>& eps_values, std::size_t n_min, std::size_t n_max,
                               const PoolSpec& pool_spec, unsigned jobs) {
  if (eps_values.empty()) throw InvalidArgument("eps ladder is empty");
  double finest = *std::min_element(eps_values.begin(), eps_values.end());
  auto pool = build_pool(system, pool_spec, finest, n_max);
  PressureLadder ladder;
  for (double eps : eps_values) ladder.estimates.push_back(pressure_estimate(system, C, phi, eps, n_min, n_max, pool, jobs));
  for (std::size_t a = 0; a < eps_values.size(); ++a)
    for (std::size_t b = 0; b < eps_values.size(); ++b) {
      if (!(eps_values[a] > eps_values[b])) continue;
      for (std::size_t i = 0; i < ladder.estimates[a].log_partition_sums.size(); ++i) {
        double coarse = ladder.estimates[a].log_partition_sums[i];
        double fine = ladder.estimates[b].log_partition_sums[i];
        if (coarse > fine + 1e-12) {
          ladder.monotone = false;
          ladder.warnings.push_back("log partition sum increased with eps at n = " +
                                    std::to_string(n_min + i));
        }
      }
    }
  return ladder;
}

std::vector<TorusPoint> b_infinity_sample(const DynSystem& system, const LambdaFunction& lambda, std::size_t K,
                                          const std::vector<TorusPoint>& pool, unsigned jobs) {
  if (K == 0) throw InvalidArgument("iteration depth must be at least 1");
  std::vector<char> keep(pool.size(), 0);
  parallel_for(pool.size(), jobs, [&](std::size_t i) {
    if (lambda(pool[i]) != 0.0) return;
    TorusPoint f = pool[i], b = pool[i];
    for (std::size_t k = 0; k < K; ++k) {
      f = system.forward(f);
      b = system.inverse(b);
      if (lambda(f) != 0.0 || lambda(b) != 0.0) return;
    }
    keep[i] = 1;
  });
  std::vector<TorusPoint> out;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (keep[i]) out.push_back(pool[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Symbolic mirror

SymbolicSeparatedSet symbolic_separated_set(const SFT& sft, std::size_t n, double eps,
                                            const LocallyConstantPotential& phi,
                                            const std::function<bool(const Word&)>& in_collection) {
  if (n == 0) throw InvalidArgument("segment length must be positive");
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  SymbolicSeparatedSet out;
  out.n = n;
  out.eps = eps;
  std::vector<std::pair<double, Word>> cands;
  for (auto& w : enumerate_words(sft, n)) {
    if (in_collection && !in_collection(w)) continue;
    double s = phi.birkhoff_sum(w);
    cands.emplace_back(s, std::move(w));
  }
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  // Distinct words are at Bowen distance 1, so every candidate is admitted
  // when eps <= 1 and only the first one otherwise.
  for (auto& [s, w] : cands) {
    if (eps > 1.0 && !out.words.empty()) break;
    out.words.push_back(std::move(w));
    out.weights.push_back(s);
  }
  return out;
}

PressureEstimate symbolic_pressure_estimate(const SFT& sft, const LocallyConstantPotential& phi, double eps,
                                            std::size_t n_min, std::size_t n_max,
                                            const std::function<bool(const Word&)>& in_collection) {
  check_range(n_min, n_max);
  PressureEstimate est;
  est.eps = eps;
  est.n_min = n_min;
  est.n_max = n_max;
  for (std::size_t n = n_min; n <= n_max; ++n) {
    auto set = symbolic_separated_set(sft, n, eps, phi, in_collection);
    est.log_partition_sums.push_back(log_partition_sum(set.weights));
    est.set_sizes.push_back(set.words.size());
  }
  fit_estimate(est);
  return est;
}

std::vector<Word> symbolic_b_infinity_sample(const SFT& sft, const std::vector<double>& lambda, std::size_t K) {
  if (lambda.size() != static_cast<std::size_t>(sft.alphabet_size()))
    throw InvalidArgument("lambda needs one value per symbol");
  std::vector<bool> keep(lambda.size());
  for (std::size_t a = 0; a < lambda.size(); ++a) keep[a] = lambda[a] == 0.0;
  std::vector<Word> out;
  for (auto& w : enumerate_words(sft.restrict_to(keep), 2 * K + 1))
    if (std::all_of(w.begin(), w.end(), [&](int a) { return keep[static_cast<std::size_t>(a)]; }))
      out.push_back(std::move(w));
  return out;
}

}  // namespace gapkit
