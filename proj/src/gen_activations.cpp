#include "missnet/gen_activations.hpp"

#include <cmath>
#include <stdexcept>

#include "missnet/common.hpp"
#include "missnet/special.hpp"

namespace missnet {

double nr(double w) { return normal_pdf(w) + w * normal_cdf(w); }

double nr_deriv(double w) { return normal_cdf(w); }

std::vector<double> ActivationGradients::means_grad_full(int d) const {
  std::vector<double> out(d_resp.size() * static_cast<std::size_t>(d), 0.0);
  const std::size_t m = missing_idx.size();
  for (std::size_t i = 0; i < d_resp.size(); ++i) {
    for (std::size_t jj = 0; jj < m; ++jj) {
      out[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(missing_idx[jj])] =
          d_means[i * m + jj];
    }
  }
  return out;
}

std::vector<double> ActivationGradients::vars_grad_full(int d) const {
  std::vector<double> out(d_resp.size() * static_cast<std::size_t>(d), 0.0);
  const std::size_t m = missing_idx.size();
  for (std::size_t i = 0; i < d_resp.size(); ++i) {
    for (std::size_t jj = 0; jj < m; ++jj) {
      out[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(missing_idx[jj])] =
          d_vars[i * m + jj];
    }
  }
  return out;
}

namespace {

void check_relu_shapes(std::span<const double> w, const ConditionalGmm& cond,
                       const MissingPoint& point) {
  if (static_cast<int>(w.size()) != point.dim())
    throw std::invalid_argument("relu_expected: weight/point dimension mismatch");
  if (!cond.degenerate_complete && cond.mask != point.mask)
    throw std::invalid_argument("relu_expected: conditional does not match the point");
}

void check_rbf_shapes(std::span<const double> c, std::span<const double> log_gamma,
                      const ConditionalGmm& cond, const MissingPoint& point) {
  if (static_cast<int>(c.size()) != point.dim() || log_gamma.size() != c.size())
    throw std::invalid_argument("rbf_expected: center/point dimension mismatch");
  if (!cond.degenerate_complete && cond.mask != point.mask)
    throw std::invalid_argument("rbf_expected: conditional does not match the point");
}

double classical_relu(std::span<const double> w, double b, std::span<const double> x) {
  double z = b;
  for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
  return z > 0.0 ? z : 0.0;
}

}  // namespace

namespace detail {

double relu_expected_span(std::span<const double> w, double b, const ConditionalGmm& cond,
                          const MissingPoint& point) {
  check_relu_shapes(w, cond, point);
  if (cond.degenerate_complete) return classical_relu(w, b, point.values);

  const int m = cond.n_missing();
  double obs_dot = b;
  for (int j = 0; j < point.dim(); ++j) {
    if (!point.is_missing(j)) obs_dot += w[static_cast<std::size_t>(j)] * point.values[static_cast<std::size_t>(j)];
  }
  double out = 0.0;
  for (int i = 0; i < cond.k; ++i) {
    double mu = obs_dot;
    double s2 = 0.0;
    for (int jj = 0; jj < m; ++jj) {
      const double wj = w[static_cast<std::size_t>(cond.missing_idx[static_cast<std::size_t>(jj)])];
      mu += wj * cond.mean_at(i, jj);
      s2 += cond.var_at(i, jj) * wj * wj;
    }
    double term;
    if (s2 < kDegenerateVarEps) {
      term = mu > 0.0 ? mu : 0.0;
    } else {
      const double s = std::sqrt(s2);
      term = s * nr(mu / s);
    }
    out += cond.resp[static_cast<std::size_t>(i)] * term;
  }
  return out;
}

double relu_expected_grad_span(std::span<const double> w, double b, const ConditionalGmm& cond,
                               const MissingPoint& point, double upstream, std::span<double> d_w,
                               double& d_b, CondGradAccum& dcond) {
  check_relu_shapes(w, cond, point);
  if (cond.degenerate_complete) {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * point.values[j];
    if (z > 0.0) {
      for (std::size_t j = 0; j < w.size(); ++j) d_w[j] += upstream * point.values[j];
      d_b += upstream;
      return z;
    }
    return 0.0;
  }

  const int m = cond.n_missing();
  double obs_dot = b;
  for (int j = 0; j < point.dim(); ++j) {
    if (!point.is_missing(j)) obs_dot += w[static_cast<std::size_t>(j)] * point.values[static_cast<std::size_t>(j)];
  }
  double out = 0.0;
  for (int i = 0; i < cond.k; ++i) {
    const double ri = cond.resp[static_cast<std::size_t>(i)];
    double mu = obs_dot;
    double s2 = 0.0;
    for (int jj = 0; jj < m; ++jj) {
      const double wj = w[static_cast<std::size_t>(cond.missing_idx[static_cast<std::size_t>(jj)])];
      mu += wj * cond.mean_at(i, jj);
      s2 += cond.var_at(i, jj) * wj * wj;
    }
    double term, dmu, ds;  // d term / d mu, d term / d s
    double s = 0.0;
    const bool degen = s2 < kDegenerateVarEps;
    if (degen) {
      term = mu > 0.0 ? mu : 0.0;
      dmu = mu > 0.0 ? 1.0 : 0.0;
      ds = 0.0;
    } else {
      s = std::sqrt(s2);
      const double u = mu / s;
      term = s * nr(u);
      dmu = normal_cdf(u);   // NR'(u)
      ds = normal_pdf(u);    // NR(u) - u*NR'(u)
    }
    out += ri * term;

    const double g_mu = upstream * ri * dmu;
    const double g_s = upstream * ri * ds;
    // mu depends on w everywhere and on b.
    for (int j = 0; j < point.dim(); ++j) {
      if (!point.is_missing(j))
        d_w[static_cast<std::size_t>(j)] += g_mu * point.values[static_cast<std::size_t>(j)];
    }
    d_b += g_mu;
    for (int jj = 0; jj < m; ++jj) {
      const int j = cond.missing_idx[static_cast<std::size_t>(jj)];
      const double wj = w[static_cast<std::size_t>(j)];
      d_w[static_cast<std::size_t>(j)] += g_mu * cond.mean_at(i, jj);
      dcond.d_means[static_cast<std::size_t>(i) * m + jj] += g_mu * wj;
      if (!degen) {
        // s = sqrt(sum sigma_ij w_j^2)
        d_w[static_cast<std::size_t>(j)] += g_s * cond.var_at(i, jj) * wj / s;
        dcond.d_vars[static_cast<std::size_t>(i) * m + jj] += g_s * wj * wj / (2.0 * s);
      }
    }
    dcond.d_resp[static_cast<std::size_t>(i)] += upstream * term;
  }
  return out;
}

double rbf_expected_span(std::span<const double> c, std::span<const double> log_gamma,
                         const ConditionalGmm& cond, const MissingPoint& point) {
  check_rbf_shapes(c, log_gamma, cond, point);
  const int d = point.dim();
  const int m = cond.degenerate_complete ? 0 : cond.n_missing();

  // Observed coordinates contribute with zero component variance.
  double obs_log = 0.0;
  for (int j = 0; j < d; ++j) {
    if (cond.degenerate_complete || !point.is_missing(j)) {
      const double gj = std::exp(log_gamma[static_cast<std::size_t>(j)]);
      const double diff = point.values[static_cast<std::size_t>(j)] - c[static_cast<std::size_t>(j)];
      obs_log += -0.5 * (kLog2Pi + std::log(gj)) - 0.5 * diff * diff / gj;
    }
  }
  if (cond.degenerate_complete) return std::exp(obs_log);

  double out = 0.0;
  for (int i = 0; i < cond.k; ++i) {
    double lg = obs_log;
    for (int jj = 0; jj < m; ++jj) {
      const int j = cond.missing_idx[static_cast<std::size_t>(jj)];
      const double gj = std::exp(log_gamma[static_cast<std::size_t>(j)]);
      const double denom = gj + cond.var_at(i, jj);
      const double diff = cond.mean_at(i, jj) - c[static_cast<std::size_t>(j)];
      lg += -0.5 * (kLog2Pi + std::log(denom)) - 0.5 * diff * diff / denom;
    }
    out += cond.resp[static_cast<std::size_t>(i)] * std::exp(lg);
  }
  return out;
}

double rbf_expected_grad_span(std::span<const double> c, std::span<const double> log_gamma,
                              const ConditionalGmm& cond, const MissingPoint& point,
                              double upstream, std::span<double> d_c,
                              std::span<double> d_log_gamma, CondGradAccum& dcond) {
  check_rbf_shapes(c, log_gamma, cond, point);
  const int d = point.dim();

  if (cond.degenerate_complete) {
    double lg = 0.0;
    for (int j = 0; j < d; ++j) {
      const double gj = std::exp(log_gamma[static_cast<std::size_t>(j)]);
      const double diff = point.values[static_cast<std::size_t>(j)] - c[static_cast<std::size_t>(j)];
      lg += -0.5 * (kLog2Pi + std::log(gj)) - 0.5 * diff * diff / gj;
    }
    const double val = std::exp(lg);
    const double gv = upstream * val;
    for (int j = 0; j < d; ++j) {
      const double gj = std::exp(log_gamma[static_cast<std::size_t>(j)]);
      const double diff = point.values[static_cast<std::size_t>(j)] - c[static_cast<std::size_t>(j)];
      d_c[static_cast<std::size_t>(j)] += gv * diff / gj;
      // d/d log gj = gj * d/d gj
      d_log_gamma[static_cast<std::size_t>(j)] +=
          gv * gj * (-0.5 / gj + 0.5 * diff * diff / (gj * gj));
    }
    return val;
  }

  const int m = cond.n_missing();
  double obs_log = 0.0;
  for (int j = 0; j < d; ++j) {
    if (!point.is_missing(j)) {
      const double gj = std::exp(log_gamma[static_cast<std::size_t>(j)]);
      const double diff = point.values[static_cast<std::size_t>(j)] - c[static_cast<std::size_t>(j)];
      obs_log += -0.5 * (kLog2Pi + std::log(gj)) - 0.5 * diff * diff / gj;
    }
  }

  double out = 0.0;
  std::vector<double> term(static_cast<std::size_t>(cond.k));
  for (int i = 0; i < cond.k; ++i) {
    double lg = obs_log;
    for (int jj = 0; jj < m; ++jj) {
      const int j = cond.missing_idx[static_cast<std::size_t>(jj)];
      const double gj = std::exp(log_gamma[static_cast<std::size_t>(j)]);
      const double denom = gj + cond.var_at(i, jj);
      const double diff = cond.mean_at(i, jj) - c[static_cast<std::size_t>(j)];
      lg += -0.5 * (kLog2Pi + std::log(denom)) - 0.5 * diff * diff / denom;
    }
    term[static_cast<std::size_t>(i)] = std::exp(lg);
    out += cond.resp[static_cast<std::size_t>(i)] * term[static_cast<std::size_t>(i)];
  }

  for (int i = 0; i < cond.k; ++i) {
    const double gt = upstream * cond.resp[static_cast<std::size_t>(i)] * term[static_cast<std::size_t>(i)];
    dcond.d_resp[static_cast<std::size_t>(i)] += upstream * term[static_cast<std::size_t>(i)];
    if (gt == 0.0) continue;
    for (int j = 0; j < d; ++j) {
      const double gj = std::exp(log_gamma[static_cast<std::size_t>(j)]);
      if (!point.is_missing(j)) {
        const double diff = point.values[static_cast<std::size_t>(j)] - c[static_cast<std::size_t>(j)];
        d_c[static_cast<std::size_t>(j)] += gt * diff / gj;
        d_log_gamma[static_cast<std::size_t>(j)] +=
            gt * gj * (-0.5 / gj + 0.5 * diff * diff / (gj * gj));
      }
    }
    for (int jj = 0; jj < m; ++jj) {
      const int j = cond.missing_idx[static_cast<std::size_t>(jj)];
      const double gj = std::exp(log_gamma[static_cast<std::size_t>(j)]);
      const double denom = gj + cond.var_at(i, jj);
      const double diff = cond.mean_at(i, jj) - c[static_cast<std::size_t>(j)];
      const double d_denom = -0.5 / denom + 0.5 * diff * diff / (denom * denom);
      d_c[static_cast<std::size_t>(j)] += gt * diff / denom;
      d_log_gamma[static_cast<std::size_t>(j)] += gt * gj * d_denom;
      dcond.d_means[static_cast<std::size_t>(i) * m + jj] += gt * (-diff / denom);
      dcond.d_vars[static_cast<std::size_t>(i) * m + jj] += gt * d_denom;
    }
  }
  return out;
}

}  // namespace detail

double relu_expected(const ReluUnit& unit, const ConditionalGmm& cond, const MissingPoint& point) {
  return detail::relu_expected_span(unit.w, unit.b, cond, point);
}

std::pair<double, ActivationGradients> relu_expected_grad(const ReluUnit& unit,
                                                          const ConditionalGmm& cond,
                                                          const MissingPoint& point) {
  ActivationGradients g;
  g.d_weights.assign(unit.w.size(), 0.0);
  g.missing_idx = cond.missing_idx;
  detail::CondGradAccum dcond;
  dcond.init(cond.k, cond.n_missing());
  const double val = detail::relu_expected_grad_span(unit.w, unit.b, cond, point, 1.0,
                                                     g.d_weights, g.d_bias, dcond);
  g.d_resp = std::move(dcond.d_resp);
  g.d_means = std::move(dcond.d_means);
  g.d_vars = std::move(dcond.d_vars);
  return {val, std::move(g)};
}

double rbf_expected(const RbfUnit& unit, const ConditionalGmm& cond, const MissingPoint& point) {
  return detail::rbf_expected_span(unit.c, unit.log_gamma_diag, cond, point);
}

std::pair<double, ActivationGradients> rbf_expected_grad(const RbfUnit& unit,
                                                         const ConditionalGmm& cond,
                                                         const MissingPoint& point) {
  ActivationGradients g;
  g.d_weights.assign(unit.c.size(), 0.0);
  g.d_log_widths.assign(unit.c.size(), 0.0);
  g.missing_idx = cond.missing_idx;
  detail::CondGradAccum dcond;
  dcond.init(cond.k, cond.n_missing());
  const double val = detail::rbf_expected_grad_span(unit.c, unit.log_gamma_diag, cond, point, 1.0,
                                                    g.d_weights, g.d_log_widths, dcond);
  g.d_resp = std::move(dcond.d_resp);
  g.d_means = std::move(dcond.d_means);
  g.d_vars = std::move(dcond.d_vars);
  return {val, std::move(g)};
}

}  // namespace missnet
