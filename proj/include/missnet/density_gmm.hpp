#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace missnet {

class DatasetWithMask;

inline constexpr double kDefaultGamma = 1e-6;
inline constexpr double kVarianceFloor = 1e-6;

// Diagonal-covariance Gaussian mixture in the unconstrained training
// parameterization: softmax(logits) gives the mixture weights, exp(log_vars)
// the per-coordinate variances.
struct GmmParams {
  int k = 0;
  int d = 0;
  double gamma = kDefaultGamma;
  std::vector<double> logits;    // k
  std::vector<double> means;     // k*d, row-major by component
  std::vector<double> log_vars;  // k*d

  static GmmParams create(int k, int d, double gamma = kDefaultGamma);

  double mean(int i, int j) const { return means[static_cast<std::size_t>(i) * d + j]; }
  double variance(int i, int j) const;
  std::span<const double> component_means(int i) const;
  std::vector<double> component_variances(int i) const;
  std::vector<double> weights() const;  // softmax(logits)

  // Clamps exp(log_vars) to the variance floor.
  void floor_variances(double floor = kVarianceFloor);

  void validate() const;  // throws std::invalid_argument

  nlohmann::ordered_json to_json() const;
  static GmmParams from_json(const nlohmann::json& j);
};

// A data point with an explicit missingness mask (true = missing). Values at
// missing coordinates are placeholders and are never read.
struct MissingPoint {
  std::vector<double> values;
  std::vector<std::uint8_t> mask;

  int dim() const { return static_cast<int>(values.size()); }
  bool is_missing(int j) const { return mask[static_cast<std::size_t>(j)] != 0; }
  int n_missing() const;
  bool complete() const { return n_missing() == 0; }
  std::vector<int> missing_indices() const;

  static MissingPoint complete_point(std::vector<double> v);

  void validate() const;
};

// The regularized conditional density F^gamma_S of a mixture restricted to
// the affine subspace of a missing point: per-component responsibilities
// plus means/variances over the missing coordinates only.
struct ConditionalGmm {
  bool degenerate_complete = false;  // |J| = 0: no mixture data carried
  int k = 0;
  std::vector<int> missing_idx;          // J, ascending
  std::vector<std::uint8_t> mask;        // copy of the point's mask
  std::vector<double> resp;              // k, sums to 1
  std::vector<double> means_missing;     // k*|J|
  std::vector<double> vars_missing;      // k*|J|
  double log_norm = 0.0;                 // log sum_i p_i * C^gamma_i

  int n_missing() const { return static_cast<int>(missing_idx.size()); }
  double mean_at(int i, int jj) const {
    return means_missing[static_cast<std::size_t>(i) * missing_idx.size() + jj];
  }
  double var_at(int i, int jj) const {
    return vars_missing[static_cast<std::size_t>(i) * missing_idx.size() + jj];
  }
};

// log C^gamma for a single component: the Gaussian mass factor over the
// observed coordinates. Empty observed set gives 0 (empty product).
double log_component_coeff(std::span<const double> mean, std::span<const double> var,
                           const MissingPoint& point, double gamma);

// F^gamma_S for the mixture; uses gmm.gamma.
ConditionalGmm conditional(const GmmParams& gmm, const MissingPoint& point);
// Same with an explicit regularization value.
ConditionalGmm conditional_with_gamma(const GmmParams& gmm, const MissingPoint& point,
                                      double gamma);

// Conditional at each gamma in ascending order; exposes the sweep between
// the exact conditional (gamma -> 0) and the marginal (gamma -> inf).
std::vector<ConditionalGmm> conditional_limits(const GmmParams& gmm, const MissingPoint& point,
                                               std::span<const double> gammas);

// Draws one completion: observed coordinates untouched, missing coordinates
// sampled from the conditional mixture. Deterministic for a fixed seed.
std::vector<double> sample_completion(const ConditionalGmm& cond, const MissingPoint& point,
                                      std::uint64_t seed);

// Diagonal-GMM fit by EM on mean-imputed data; deterministic per seed.
GmmParams em_fit(const DatasetWithMask& data, int k, std::uint64_t seed, int max_iter = 100,
                 double tol = 1e-8, double gamma = kDefaultGamma);

}  // namespace missnet
