#pragma once

#include <cstdint>
#include <exception>
#include <random>
#include <thread>
#include <vector>

#include "gapkit/torus.hpp"

namespace gapkit {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent generator for stream `stream` of a run seeded with `seed`.
/// Streams are keyed by work index, never by thread, so results do not
/// depend on the worker count.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(stream + 0x51ED2701ULL)));
}

/// Uniform double in [0,1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline TorusPoint random_point(std::mt19937_64& rng, std::size_t dim) {
  std::vector<double> c(dim);
  for (auto& v : c) v = uniform01(rng);
  return TorusPoint(c);
}

inline unsigned default_jobs() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// Runs body(i) for i in [0, count) on up to `jobs` threads, contiguous
/// blocks per thread. Callers write into pre-sized per-index slots.
template <class Body>
void parallel_for(std::size_t count, unsigned jobs, Body&& body) {
  if (jobs <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(jobs, count);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> failures(workers);
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t lo = count * w / workers, hi = count * (w + 1) / workers;
    pool.emplace_back([lo, hi, w, &body, &failures] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace gapkit
