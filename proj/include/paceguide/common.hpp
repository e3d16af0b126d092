#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace paceguide {

// Double precision throughout: sampling and checkpoint reload are required to
// be exactly reproducible, and the gradient tests run against central finite
// differences at tight tolerances.
using Real = double;
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using Vec3 = Eigen::Matrix<Real, 3, 1>;
using Mat3 = Eigen::Matrix<Real, 3, 3>;

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct RangeError : std::runtime_error {
  explicit RangeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// splitmix64; used to derive independent child seeds from a master seed so
// that per-sequence / per-step streams are stable regardless of scheduling.
uint64_t mix_seed(uint64_t seed, uint64_t stream);
uint64_t mix_seed(uint64_t seed, uint64_t stream, uint64_t index);

// FNV-1a over raw bytes; stable across platforms.
uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull);

/// Deterministic RNG with portable output. std::mt19937_64 has a fixed
/// bit-stream everywhere; the uniform/normal transforms below avoid
/// std::uniform_real_distribution etc., whose output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  Real uniform() { return Real(gen_() >> 11) * 0x1.0p-53; }
  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [lo, hi] via rejection.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Standard normal, Box-Muller with a cached spare.
  Real normal();
  Real normal(Real mean, Real stddev) { return mean + stddev * normal(); }

  Mat normal_mat(Eigen::Index rows, Eigen::Index cols);
  Vec normal_vec(Eigen::Index n);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  Real spare_ = 0;
};

/// Runs fn(i) for i in [0, n) on up to max_threads workers. Results must not
/// depend on the thread assignment; work is split into contiguous chunks so
/// any per-thread accumulation has a fixed order.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn, int max_threads = 0);

/// Worker count used by parallel_for when max_threads == 0. Reads
/// PACEGUIDE_THREADS if set, else hardware concurrency.
int default_thread_count();

bool all_finite(const Mat& m);

}  // namespace paceguide
