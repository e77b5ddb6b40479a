#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace missnet {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399;  // 1/sqrt(2*pi)
inline constexpr double kLog2Pi = 1.8378770664093454836;         // log(2*pi)
inline constexpr double kSqrt2 = 1.4142135623730950488;

// Raised by train() when the loss stops being finite. Carries the epoch
// where divergence was detected.
class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(int epoch, const std::string& message)
      : std::runtime_error(message), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// splitmix64-based mixing; derives independent stream seeds from a base
// seed plus salts (fold index, row index, ...).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt_a, std::uint64_t salt_b = 0);

// Deterministic RNG. Wraps mt19937_64 with fixed bit-to-double conversions
// so sequences do not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }
  double uniform01();                     // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // N(0, 1)
  int uniform_int(int n);                 // {0, ..., n-1}
  bool bernoulli(double p);
  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(uniform_int(i + 1))]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

double log_sum_exp(std::span<const double> v);

// Max-subtracted softmax.
void softmax_into(std::span<const double> logits, std::span<double> out);
std::vector<double> softmax(std::span<const double> logits);

bool all_finite(std::span<const double> v);

}  // namespace missnet
