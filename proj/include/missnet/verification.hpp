#pragma once

#include <cstdint>
#include <vector>

#include "missnet/density_gmm.hpp"
#include "missnet/gen_activations.hpp"

namespace missnet {

struct OracleConfig {
  int samples = 1'000'000;
  std::uint64_t seed = 0;
  double k_std_errors = 4.0;  // acceptance band
};

struct McResult {
  double mean = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo estimate of the expected activation: draws completions from
// the conditional, applies the classical activation, and averages. This is
// the brute-force oracle for the analytic expected responses; it shares no
// kernels with them.
McResult mc_expected_activation_relu(const ReluUnit& unit, const ConditionalGmm& cond,
                                     const MissingPoint& point, int n, std::uint64_t seed);
McResult mc_expected_activation_rbf(const RbfUnit& unit, const ConditionalGmm& cond,
                                    const MissingPoint& point, int n, std::uint64_t seed);

struct DistinguishResult {
  double max_gap = 0.0;
  bool certified = false;  // gap > 1e-6: the mixtures are provably distinct
  std::vector<double> witness_w;
  double witness_b = 0.0;
};

// Numeric witness for the identification property: probes random unit-norm
// weights and biases in [-3, 3] and reports the largest response gap.
// Never reports equality: a small gap is only "inconclusive".
DistinguishResult distinguish_measures(const GmmParams& a, const GmmParams& b, int trials,
                                       std::uint64_t seed);

struct BenchResult {
  double generalized_ns_per_point = 0.0;
  double classical_ns_per_point = 0.0;
  double ratio = 0.0;
};

// Median wall-clock per point of a generalized first layer (conditional +
// t expected ReLUs) against a classical dense-ReLU layer at matched (D, t).
BenchResult bench_layer_cost(int d, int k, int t, int trials, std::uint64_t seed = 1);

}  // namespace missnet
