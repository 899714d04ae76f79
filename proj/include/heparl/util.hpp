#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace heparl {

// FNV-1a 64-bit, used for dataset/config fingerprints in manifests.
inline uint64_t fnv1a(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ULL) {
  uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a(std::span<const double> values) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    char buf[sizeof(double)];
    std::memcpy(buf, &v, sizeof(double));
    h = fnv1a(std::string_view(buf, sizeof(double)), h);
  }
  return h;
}

inline std::string hex64(uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// Stable per-stream seed derivation (splitmix64 finalizer).
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Hand-rolled variate helpers: the standard distributions are
// implementation-defined, and bit-reproducibility of generated cohorts
// matters more here than textbook samplers.
template <typename Rng>
double rand_u01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

template <typename Rng>
double rand_uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_u01(rng);
}

template <typename Rng>
double rand_normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  const double u1 = std::max(rand_u01(rng), 1e-300);
  const double u2 = rand_u01(rng);
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  return mean + stddev * z;
}

template <typename Rng>
int rand_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  const auto span = static_cast<uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(rng() % span);
}

template <typename Rng>
int rand_poisson(Rng& rng, double lambda) {
  if (lambda <= 0.0) return 0;
  const double limit = std::exp(-lambda);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rand_u01(rng);
  } while (p > limit);
  return k - 1;
}

template <typename Rng>
bool rand_bernoulli(Rng& rng, double p) {
  return rand_u01(rng) < p;
}

// Runs fn(i) for i in [0, n). Results must be written to index-owned slots so
// the outcome is identical for any worker count; the first exception thrown
// by any worker is rethrown.
template <typename Fn>
void parallel_for(size_t n, int jobs, Fn&& fn) {
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (jobs == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (size_t i = static_cast<size_t>(w); i < n; i += static_cast<size_t>(jobs)) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace heparl
