#pragma once

#include <span>
#include <utility>
#include <vector>

#include "missnet/density_gmm.hpp"

namespace missnet {

// Below this threshold on s^2 = w^T Sigma w a ReLU component is treated as
// degenerate and its term collapses to max(mu, 0).
inline constexpr double kDegenerateVarEps = 1e-12;

struct ReluUnit {
  std::vector<double> w;
  double b = 0.0;
};

struct RbfUnit {
  std::vector<double> c;               // center
  std::vector<double> log_gamma_diag;  // exp() gives the diagonal of Gamma
};

// Gradients of an expected activation. Unit fields depend on the unit kind
// (ReLU: d_weights/d_bias; RBF: d_weights = d/d center, d_log_widths).
// Density fields follow the ConditionalGmm layout: d_means/d_vars cover the
// missing coordinates only, row-major by component; missing_idx mirrors the
// conditional's index list.
struct ActivationGradients {
  std::vector<double> d_weights;     // D
  double d_bias = 0.0;
  std::vector<double> d_log_widths;  // D (RBF only)
  std::vector<double> d_resp;        // k
  std::vector<double> d_means;       // k*|J|
  std::vector<double> d_vars;        // k*|J|
  std::vector<int> missing_idx;

  // Scatters d_means/d_vars into a full k x D matrix; observed coordinates
  // stay exactly zero.
  std::vector<double> means_grad_full(int d) const;
  std::vector<double> vars_grad_full(int d) const;
};

// NR(w) = E[max(X, 0)] for X ~ N(w, 1).
double nr(double w);
// dNR/dw = Phi(w), the standard normal CDF.
double nr_deriv(double w);

// Expected ReLU response over the conditional mixture. Degenerate-complete
// conditionals reduce to the classical activation max(w^T x + b, 0).
double relu_expected(const ReluUnit& unit, const ConditionalGmm& cond, const MissingPoint& point);
std::pair<double, ActivationGradients> relu_expected_grad(const ReluUnit& unit,
                                                          const ConditionalGmm& cond,
                                                          const MissingPoint& point);

// Expected RBF response N(c, Gamma) over the conditional mixture; computed
// in log domain per component.
double rbf_expected(const RbfUnit& unit, const ConditionalGmm& cond, const MissingPoint& point);
std::pair<double, ActivationGradients> rbf_expected_grad(const RbfUnit& unit,
                                                         const ConditionalGmm& cond,
                                                         const MissingPoint& point);

namespace detail {

// Conditional-side gradient accumulator shared by the per-unit kernels.
struct CondGradAccum {
  std::vector<double> d_resp;   // k
  std::vector<double> d_means;  // k*|J|
  std::vector<double> d_vars;   // k*|J|
  void init(int k, int m) {
    d_resp.assign(static_cast<std::size_t>(k), 0.0);
    d_means.assign(static_cast<std::size_t>(k) * m, 0.0);
    d_vars.assign(static_cast<std::size_t>(k) * m, 0.0);
  }
};

// Span-based kernels used by both the public ops and the network layers.
// The *_grad variants scale every contribution by `upstream` and accumulate
// into the provided buffers.
double relu_expected_span(std::span<const double> w, double b, const ConditionalGmm& cond,
                          const MissingPoint& point);
double relu_expected_grad_span(std::span<const double> w, double b, const ConditionalGmm& cond,
                               const MissingPoint& point, double upstream,
                               std::span<double> d_w, double& d_b, CondGradAccum& dcond);
double rbf_expected_span(std::span<const double> c, std::span<const double> log_gamma,
                         const ConditionalGmm& cond, const MissingPoint& point);
double rbf_expected_grad_span(std::span<const double> c, std::span<const double> log_gamma,
                              const ConditionalGmm& cond, const MissingPoint& point,
                              double upstream, std::span<double> d_c,
                              std::span<double> d_log_gamma, CondGradAccum& dcond);

}  // namespace detail

}  // namespace missnet
