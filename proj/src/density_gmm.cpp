#include "missnet/density_gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "missnet/common.hpp"
#include "missnet/data_io.hpp"

namespace missnet {

GmmParams GmmParams::create(int k, int d, double gamma) {
  if (k < 1 || d < 1) throw std::invalid_argument("GmmParams: k and d must be positive");
  GmmParams g;
  g.k = k;
  g.d = d;
  g.gamma = gamma;
  g.logits.assign(static_cast<std::size_t>(k), 0.0);
  g.means.assign(static_cast<std::size_t>(k) * d, 0.0);
  g.log_vars.assign(static_cast<std::size_t>(k) * d, 0.0);
  return g;
}

double GmmParams::variance(int i, int j) const {
  return std::exp(log_vars[static_cast<std::size_t>(i) * d + j]);
}

std::span<const double> GmmParams::component_means(int i) const {
  return {means.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)};
}

std::vector<double> GmmParams::component_variances(int i) const {
  std::vector<double> v(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] = variance(i, j);
  return v;
}

std::vector<double> GmmParams::weights() const { return softmax(logits); }

void GmmParams::floor_variances(double floor) {
  const double lf = std::log(floor);
  for (auto& lv : log_vars) lv = std::max(lv, lf);
}

void GmmParams::validate() const {
  if (k < 1 || d < 1) throw std::invalid_argument("GmmParams: k and d must be positive");
  if (static_cast<int>(logits.size()) != k ||
      logits.size() * static_cast<std::size_t>(d) != means.size() ||
      means.size() != log_vars.size())
    throw std::invalid_argument("GmmParams: inconsistent shapes");
  if (!(gamma >= 0.0)) throw std::invalid_argument("GmmParams: gamma must be >= 0");
  if (!all_finite(logits) || !all_finite(means) || !all_finite(log_vars))
    throw std::invalid_argument("GmmParams: non-finite parameters");
  for (std::size_t i = 0; i < log_vars.size(); ++i) {
    const double v = std::exp(log_vars[i]);
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument("GmmParams: variance out of range");
  }
}

nlohmann::ordered_json GmmParams::to_json() const {
  nlohmann::ordered_json j;
  j["k"] = k;
  j["d"] = d;
  j["gamma"] = gamma;
  j["logits"] = logits;
  nlohmann::ordered_json m = nlohmann::ordered_json::array();
  nlohmann::ordered_json lv = nlohmann::ordered_json::array();
  for (int i = 0; i < k; ++i) {
    m.push_back(std::vector<double>(means.begin() + static_cast<std::size_t>(i) * d,
                                    means.begin() + static_cast<std::size_t>(i + 1) * d));
    lv.push_back(std::vector<double>(log_vars.begin() + static_cast<std::size_t>(i) * d,
                                     log_vars.begin() + static_cast<std::size_t>(i + 1) * d));
  }
  j["means"] = std::move(m);
  j["log_vars"] = std::move(lv);
  return j;
}

GmmParams GmmParams::from_json(const nlohmann::json& j) {
  GmmParams g;
  g.k = j.at("k").get<int>();
  g.d = j.at("d").get<int>();
  g.gamma = j.at("gamma").get<double>();
  g.logits = j.at("logits").get<std::vector<double>>();
  for (const auto& row : j.at("means")) {
    for (const auto& v : row) g.means.push_back(v.get<double>());
  }
  for (const auto& row : j.at("log_vars")) {
    for (const auto& v : row) g.log_vars.push_back(v.get<double>());
  }
  g.validate();
  return g;
}

int MissingPoint::n_missing() const {
  int c = 0;
  for (auto m : mask) c += (m != 0);
  return c;
}

std::vector<int> MissingPoint::missing_indices() const {
  std::vector<int> idx;
  for (int j = 0; j < dim(); ++j) {
    if (mask[static_cast<std::size_t>(j)]) idx.push_back(j);
  }
  return idx;
}

MissingPoint MissingPoint::complete_point(std::vector<double> v) {
  MissingPoint p;
  p.mask.assign(v.size(), 0);
  p.values = std::move(v);
  return p;
}

void MissingPoint::validate() const {
  if (values.size() != mask.size())
    throw std::invalid_argument("MissingPoint: mask length differs from values");
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (!mask[j] && !std::isfinite(values[j]))
      throw std::invalid_argument("MissingPoint: non-finite observed value");
  }
}

double log_component_coeff(std::span<const double> mean, std::span<const double> var,
                           const MissingPoint& point, double gamma) {
  const int d = point.dim();
  if (static_cast<int>(mean.size()) != d || static_cast<int>(var.size()) != d)
    throw std::invalid_argument("log_component_coeff: shape mismatch");
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    throw std::invalid_argument("log_component_coeff: gamma must be finite and >= 0");
  double acc = 0.0;
  for (int l = 0; l < d; ++l) {
    if (point.is_missing(l)) continue;
    const double m = mean[static_cast<std::size_t>(l)];
    const double s = var[static_cast<std::size_t>(l)];
    const double x = point.values[static_cast<std::size_t>(l)];
    if (!std::isfinite(m) || !std::isfinite(s) || !(s > 0.0))
      throw std::invalid_argument("log_component_coeff: non-finite or non-positive input");
    const double denom = gamma + s;
    const double diff = m - x;
    acc += -0.5 * (kLog2Pi + std::log(denom)) - 0.5 * diff * diff / denom;
  }
  return acc;
}

ConditionalGmm conditional_with_gamma(const GmmParams& gmm, const MissingPoint& point,
                                      double gamma) {
  gmm.validate();
  point.validate();
  if (point.dim() != gmm.d) throw std::invalid_argument("conditional: dimension mismatch");

  ConditionalGmm cond;
  cond.mask = point.mask;
  cond.missing_idx = point.missing_indices();
  cond.k = gmm.k;
  if (cond.missing_idx.empty()) {
    cond.degenerate_complete = true;
    cond.k = 0;
    return cond;
  }

  const int m = cond.n_missing();
  std::vector<double> log_q(static_cast<std::size_t>(gmm.k));
  const double logits_lse = log_sum_exp(gmm.logits);
  for (int i = 0; i < gmm.k; ++i) {
    const double log_p = gmm.logits[static_cast<std::size_t>(i)] - logits_lse;
    const auto vars = gmm.component_variances(i);
    log_q[static_cast<std::size_t>(i)] =
        log_p + log_component_coeff(gmm.component_means(i), vars, point, gamma);
  }
  cond.log_norm = log_sum_exp(log_q);
  if (!std::isfinite(cond.log_norm))
    throw std::runtime_error("conditional: all component masses vanished");
  cond.resp = softmax(log_q);

  cond.means_missing.resize(static_cast<std::size_t>(gmm.k) * m);
  cond.vars_missing.resize(static_cast<std::size_t>(gmm.k) * m);
  for (int i = 0; i < gmm.k; ++i) {
    for (int jj = 0; jj < m; ++jj) {
      const int j = cond.missing_idx[static_cast<std::size_t>(jj)];
      cond.means_missing[static_cast<std::size_t>(i) * m + jj] = gmm.mean(i, j);
      cond.vars_missing[static_cast<std::size_t>(i) * m + jj] = gmm.variance(i, j);
    }
  }
  return cond;
}

ConditionalGmm conditional(const GmmParams& gmm, const MissingPoint& point) {
  return conditional_with_gamma(gmm, point, gmm.gamma);
}

std::vector<ConditionalGmm> conditional_limits(const GmmParams& gmm, const MissingPoint& point,
                                               std::span<const double> gammas) {
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    if (!(gammas[i] >= 0.0)) throw std::invalid_argument("conditional_limits: gamma < 0");
    if (i > 0 && gammas[i] < gammas[i - 1])
      throw std::invalid_argument("conditional_limits: gammas must be ascending");
  }
  std::vector<ConditionalGmm> out;
  out.reserve(gammas.size());
  for (double g : gammas) out.push_back(conditional_with_gamma(gmm, point, g));
  return out;
}

std::vector<double> sample_completion(const ConditionalGmm& cond, const MissingPoint& point,
                                      std::uint64_t seed) {
  std::vector<double> x = point.values;
  if (cond.degenerate_complete) return x;
  Rng rng(mix_seed(seed, 0x73616d70ULL));  // "samp"
  // Component choice by inverse CDF over resp.
  const double u = rng.uniform01();
  int comp = cond.k - 1;
  double acc = 0.0;
  for (int i = 0; i < cond.k; ++i) {
    acc += cond.resp[static_cast<std::size_t>(i)];
    if (u < acc) {
      comp = i;
      break;
    }
  }
  const int m = cond.n_missing();
  for (int jj = 0; jj < m; ++jj) {
    const int j = cond.missing_idx[static_cast<std::size_t>(jj)];
    const double mean = cond.mean_at(comp, jj);
    const double sd = std::sqrt(cond.var_at(comp, jj));
    x[static_cast<std::size_t>(j)] = mean + sd * rng.normal();
  }
  return x;
}

namespace {

// Column means over observed cells; 0 for fully-missing columns.
std::vector<double> observed_column_means(const DatasetWithMask& data) {
  std::vector<double> mean(static_cast<std::size_t>(data.d), 0.0);
  std::vector<std::size_t> cnt(static_cast<std::size_t>(data.d), 0);
  for (int i = 0; i < data.n; ++i) {
    for (int j = 0; j < data.d; ++j) {
      if (data.is_missing(i, j)) continue;
      mean[static_cast<std::size_t>(j)] += data.value(i, j);
      ++cnt[static_cast<std::size_t>(j)];
    }
  }
  for (int j = 0; j < data.d; ++j) {
    if (cnt[static_cast<std::size_t>(j)] > 0)
      mean[static_cast<std::size_t>(j)] /= static_cast<double>(cnt[static_cast<std::size_t>(j)]);
  }
  return mean;
}

}  // namespace

GmmParams em_fit(const DatasetWithMask& data, int k, std::uint64_t seed, int max_iter, double tol,
                 double gamma) {
  if (k < 1) throw std::invalid_argument("em_fit: k must be >= 1");
  if (data.n == 0) throw std::invalid_argument("em_fit: empty data");
  if (k > data.n) throw std::invalid_argument("em_fit: k exceeds row count");

  const int n = data.n;
  const int d = data.d;

  // Mean-imputed working copy.
  const auto col_mean = observed_column_means(data);
  std::vector<double> rows(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      rows[static_cast<std::size_t>(i) * d + j] =
          data.is_missing(i, j) ? col_mean[static_cast<std::size_t>(j)] : data.value(i, j);
    }
  }
  auto row = [&](int i) { return rows.data() + static_cast<std::size_t>(i) * d; };

  GmmParams g = GmmParams::create(k, d, gamma);

  // k-means++ style seeding, then a few Lloyd iterations.
  Rng rng(mix_seed(seed, 0x656d666974ULL));  // "emfit"
  std::vector<int> centers;
  centers.push_back(rng.uniform_int(n));
  std::vector<double> dist2(static_cast<std::size_t>(n), 0.0);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c : centers) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
          const double diff = row(i)[j] - row(c)[j];
          s += diff * diff;
        }
        best = std::min(best, s);
      }
      dist2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    int pick;
    if (total <= 0.0) {
      pick = rng.uniform_int(n);
    } else {
      double u = rng.uniform01() * total;
      pick = n - 1;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += dist2[static_cast<std::size_t>(i)];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pick);
  }
  std::vector<double> mu(static_cast<std::size_t>(k) * d);
  for (int c = 0; c < k; ++c) {
    for (int j = 0; j < d; ++j)
      mu[static_cast<std::size_t>(c) * d + j] = row(centers[static_cast<std::size_t>(c)])[j];
  }
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 10; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int bc = 0;
      for (int c = 0; c < k; ++c) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
          const double diff = row(i)[j] - mu[static_cast<std::size_t>(c) * d + j];
          s += diff * diff;
        }
        if (s < best) {
          best = s;
          bc = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != bc) {
        assign[static_cast<std::size_t>(i)] = bc;
        changed = true;
      }
    }
    std::vector<double> sum(static_cast<std::size_t>(k) * d, 0.0);
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int c = assign[static_cast<std::size_t>(i)];
      ++cnt[static_cast<std::size_t>(c)];
      for (int j = 0; j < d; ++j) sum[static_cast<std::size_t>(c) * d + j] += row(i)[j];
    }
    for (int c = 0; c < k; ++c) {
      if (cnt[static_cast<std::size_t>(c)] == 0) continue;
      for (int j = 0; j < d; ++j)
        mu[static_cast<std::size_t>(c) * d + j] =
            sum[static_cast<std::size_t>(c) * d + j] / cnt[static_cast<std::size_t>(c)];
    }
    if (!changed) break;
  }

  // Initial parameters from the k-means partition.
  std::vector<double> weights(static_cast<std::size_t>(k), 0.0);
  std::vector<double> var(static_cast<std::size_t>(k) * d, 0.0);
  {
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) ++cnt[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    // Global variance fallback for tiny clusters.
    std::vector<double> gvar(static_cast<std::size_t>(d), 0.0), gmean(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) gmean[static_cast<std::size_t>(j)] += row(i)[j];
    for (int j = 0; j < d; ++j) gmean[static_cast<std::size_t>(j)] /= n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        const double diff = row(i)[j] - gmean[static_cast<std::size_t>(j)];
        gvar[static_cast<std::size_t>(j)] += diff * diff / n;
      }
    for (int i = 0; i < n; ++i) {
      const int c = assign[static_cast<std::size_t>(i)];
      for (int j = 0; j < d; ++j) {
        const double diff = row(i)[j] - mu[static_cast<std::size_t>(c) * d + j];
        var[static_cast<std::size_t>(c) * d + j] += diff * diff;
      }
    }
    for (int c = 0; c < k; ++c) {
      weights[static_cast<std::size_t>(c)] =
          std::max(static_cast<double>(cnt[static_cast<std::size_t>(c)]), 1.0) / n;
      for (int j = 0; j < d; ++j) {
        double v = cnt[static_cast<std::size_t>(c)] > 1
                       ? var[static_cast<std::size_t>(c) * d + j] / cnt[static_cast<std::size_t>(c)]
                       : gvar[static_cast<std::size_t>(j)];
        var[static_cast<std::size_t>(c) * d + j] = std::max(v, kVarianceFloor);
      }
    }
  }

  // EM on the imputed rows.
  std::vector<double> log_w(static_cast<std::size_t>(k));
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  for (int c = 0; c < k; ++c)
    log_w[static_cast<std::size_t>(c)] = std::log(weights[static_cast<std::size_t>(c)] / wsum);

  std::vector<double> log_resp(static_cast<std::size_t>(n) * k);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iter; ++iter) {
    // E step.
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < k; ++c) {
        double lp = log_w[static_cast<std::size_t>(c)];
        for (int j = 0; j < d; ++j) {
          const double v = var[static_cast<std::size_t>(c) * d + j];
          const double diff = row(i)[j] - mu[static_cast<std::size_t>(c) * d + j];
          lp += -0.5 * (kLog2Pi + std::log(v)) - 0.5 * diff * diff / v;
        }
        log_resp[static_cast<std::size_t>(i) * k + c] = lp;
      }
      const double lse = log_sum_exp(
          {log_resp.data() + static_cast<std::size_t>(i) * k, static_cast<std::size_t>(k)});
      ll += lse;
      for (int c = 0; c < k; ++c) log_resp[static_cast<std::size_t>(i) * k + c] -= lse;
    }
    // M step.
    for (int c = 0; c < k; ++c) {
      double nk = 0.0;
      std::vector<double> msum(static_cast<std::size_t>(d), 0.0);
      for (int i = 0; i < n; ++i) {
        const double r = std::exp(log_resp[static_cast<std::size_t>(i) * k + c]);
        nk += r;
        for (int j = 0; j < d; ++j) msum[static_cast<std::size_t>(j)] += r * row(i)[j];
      }
      nk = std::max(nk, 1e-12);
      for (int j = 0; j < d; ++j)
        mu[static_cast<std::size_t>(c) * d + j] = msum[static_cast<std::size_t>(j)] / nk;
      std::vector<double> vsum(static_cast<std::size_t>(d), 0.0);
      for (int i = 0; i < n; ++i) {
        const double r = std::exp(log_resp[static_cast<std::size_t>(i) * k + c]);
        for (int j = 0; j < d; ++j) {
          const double diff = row(i)[j] - mu[static_cast<std::size_t>(c) * d + j];
          vsum[static_cast<std::size_t>(j)] += r * diff * diff;
        }
      }
      for (int j = 0; j < d; ++j)
        var[static_cast<std::size_t>(c) * d + j] =
            std::max(vsum[static_cast<std::size_t>(j)] / nk, kVarianceFloor);
      log_w[static_cast<std::size_t>(c)] = std::log(nk / n);
    }
    if (std::isfinite(prev_ll) && std::abs(ll - prev_ll) < tol * (1.0 + std::abs(ll))) {
      prev_ll = ll;
      break;
    }
    prev_ll = ll;
  }

  for (int c = 0; c < k; ++c) {
    g.logits[static_cast<std::size_t>(c)] = log_w[static_cast<std::size_t>(c)];
    for (int j = 0; j < d; ++j) {
      g.means[static_cast<std::size_t>(c) * d + j] = mu[static_cast<std::size_t>(c) * d + j];
      g.log_vars[static_cast<std::size_t>(c) * d + j] =
          std::log(var[static_cast<std::size_t>(c) * d + j]);
    }
  }
  g.validate();
  return g;
}

}  // namespace missnet
