#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace estbad {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Data that parses but violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Requested poison budget exceeds the candidate pool.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// Sample label incompatible with the dirty/clean setting.
class SettingError : public Error {
 public:
  using Error::Error;
};

// Rewrite service unreachable after retries.
class ServiceError : public Error {
 public:
  using Error::Error;
};

// Rewrite never produced the trigger word.
class ContainmentError : public Error {
 public:
  using Error::Error;
};

// Operation invoked before required calibration/training.
class StateError : public Error {
 public:
  using Error::Error;
};

// Deterministic generator (splitmix64). Identical sequences on every
// platform; std distributions are avoided on purpose.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // First k elements of a seeded permutation of [0, n).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(idx);
    if (k < n) idx.resize(k);
    return idx;
  }

  // Stream derivation: substream seeds keyed by (seed, salt) or sample id.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    Rng r(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
    return r.next();
  }
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix(mix(a, b), c);
  }

 private:
  std::uint64_t state_;
};

// Process-wide worker count, owned by the CLI (--threads). Default 1.
int worker_threads();
void set_worker_threads(int n);

// Index-sharded loop. Results must be written to preallocated slots so the
// outcome is identical for any thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

// Same sharding with an explicit worker cap (in-flight limit for I/O loops).
void parallel_for_cap(std::size_t count, int cap,
                      const std::function<void(std::size_t)>& fn);

}  // namespace estbad
