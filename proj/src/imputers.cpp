#include "missnet/imputers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "missnet/common.hpp"

namespace missnet {

ImputerKind imputer_kind_from_string(const std::string& s) {
  if (s == "mean") return ImputerKind::Mean;
  if (s == "knn") return ImputerKind::Knn;
  if (s == "dropout") return ImputerKind::InputDropout;
  if (s == "gmm-sample") return ImputerKind::GmmSample;
  throw std::invalid_argument("unknown imputer kind: " + s);
}

std::string to_string(ImputerKind kind) {
  switch (kind) {
    case ImputerKind::Mean: return "mean";
    case ImputerKind::Knn: return "knn";
    case ImputerKind::InputDropout: return "dropout";
    case ImputerKind::GmmSample: return "gmm-sample";
  }
  return "?";
}

Imputer Imputer::fit(const ImputerConfig& cfg, const DatasetWithMask& train) {
  train.validate();
  if (train.n == 0) throw std::invalid_argument("imputer fit: empty training data");
  Imputer imp;
  imp.cfg_ = cfg;
  imp.d_ = train.d;

  // Column means over observed entries; needed by mean, knn fallback and
  // gmm's EM initialization.
  imp.column_means_.assign(static_cast<std::size_t>(train.d), 0.0);
  std::vector<std::size_t> cnt(static_cast<std::size_t>(train.d), 0);
  for (int i = 0; i < train.n; ++i) {
    for (int j = 0; j < train.d; ++j) {
      if (train.is_missing(i, j)) continue;
      imp.column_means_[static_cast<std::size_t>(j)] += train.value(i, j);
      ++cnt[static_cast<std::size_t>(j)];
    }
  }
  if (cfg.kind != ImputerKind::InputDropout) {
    for (int j = 0; j < train.d; ++j) {
      if (cnt[static_cast<std::size_t>(j)] == 0)
        throw std::invalid_argument("imputer fit: column " + std::to_string(j) +
                                    " has no observed training value");
      imp.column_means_[static_cast<std::size_t>(j)] /= static_cast<double>(cnt[static_cast<std::size_t>(j)]);
    }
  } else {
    for (int j = 0; j < train.d; ++j) {
      if (cnt[static_cast<std::size_t>(j)] > 0)
        imp.column_means_[static_cast<std::size_t>(j)] /= static_cast<double>(cnt[static_cast<std::size_t>(j)]);
    }
  }

  switch (cfg.kind) {
    case ImputerKind::Mean:
      break;
    case ImputerKind::Knn:
      if (cfg.knn_k < 1) throw std::invalid_argument("imputer fit: knn K must be >= 1");
      imp.train_values_ = train.values;
      imp.train_mask_ = train.mask;
      imp.train_n_ = train.n;
      break;
    case ImputerKind::InputDropout: {
      imp.rate_ = cfg.dropout_rate.value_or(train.missing_fraction());
      if (imp.rate_ < 0.0 || imp.rate_ >= 1.0)
        throw std::invalid_argument("imputer fit: dropout rate must be in [0, 1)");
      break;
    }
    case ImputerKind::GmmSample:
      // gamma = 0: sampling follows the exact conditional.
      imp.gmm_ = em_fit(train, cfg.gmm_k, cfg.seed, /*max_iter=*/100, /*tol=*/1e-8, /*gamma=*/0.0);
      break;
  }
  return imp;
}

std::vector<double> Imputer::transform_mean(const MissingPoint& p) const {
  std::vector<double> out = p.values;
  for (int j = 0; j < p.dim(); ++j) {
    if (p.is_missing(j)) out[static_cast<std::size_t>(j)] = column_means_[static_cast<std::size_t>(j)];
  }
  return out;
}

std::vector<double> Imputer::transform_knn(const MissingPoint& p, bool* used_fallback) const {
  std::vector<double> out = p.values;
  // Euclidean distance over mutually observed features, normalized by the
  // number of shared features; ties broken by lowest training-row index.
  std::vector<std::pair<double, int>> dist;
  dist.reserve(static_cast<std::size_t>(train_n_));
  for (int r = 0; r < train_n_; ++r) {
    double acc = 0.0;
    int shared = 0;
    const auto off = static_cast<std::size_t>(r) * d_;
    for (int j = 0; j < d_; ++j) {
      if (p.is_missing(j) || train_mask_[off + static_cast<std::size_t>(j)]) continue;
      const double diff = p.values[static_cast<std::size_t>(j)] - train_values_[off + static_cast<std::size_t>(j)];
      acc += diff * diff;
      ++shared;
    }
    if (shared == 0) continue;
    dist.emplace_back(acc / shared, r);
  }
  if (dist.empty()) {
    if (used_fallback != nullptr) *used_fallback = true;
    return transform_mean(p);
  }
  if (used_fallback != nullptr) *used_fallback = false;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg_.knn_k), dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  for (int j = 0; j < p.dim(); ++j) {
    if (!p.is_missing(j)) continue;
    double sum = 0.0;
    int n = 0;
    for (std::size_t t = 0; t < k; ++t) {
      const int r = dist[t].second;
      const auto off = static_cast<std::size_t>(r) * d_;
      if (train_mask_[off + static_cast<std::size_t>(j)]) continue;
      sum += train_values_[off + static_cast<std::size_t>(j)];
      ++n;
    }
    out[static_cast<std::size_t>(j)] =
        n > 0 ? sum / n : column_means_[static_cast<std::size_t>(j)];
  }
  return out;
}

std::vector<double> Imputer::transform_dropout(const MissingPoint& p) const {
  std::vector<double> out(p.values.size(), 0.0);
  const double scale = 1.0 / (1.0 - rate_);
  for (int j = 0; j < p.dim(); ++j) {
    if (!p.is_missing(j)) out[static_cast<std::size_t>(j)] = p.values[static_cast<std::size_t>(j)] * scale;
  }
  return out;
}

std::vector<double> Imputer::transform_gmm(const MissingPoint& p, std::uint64_t salt) const {
  const ConditionalGmm cond = conditional_with_gamma(gmm_, p, 0.0);
  return sample_completion(cond, p, mix_seed(cfg_.seed, 0x676d6d73ULL, salt));  // "gmms"
}

std::vector<double> Imputer::transform(const MissingPoint& point, std::uint64_t salt,
                                       bool* used_fallback) const {
  point.validate();
  if (point.dim() != d_) throw std::invalid_argument("imputer transform: dimension mismatch");
  if (used_fallback != nullptr) *used_fallback = false;
  // Complete points pass through unchanged for every strategy; the dropout
  // rescale compensates drops, and none happened here.
  if (point.complete()) return point.values;
  switch (cfg_.kind) {
    case ImputerKind::Mean: return transform_mean(point);
    case ImputerKind::Knn: return transform_knn(point, used_fallback);
    case ImputerKind::InputDropout: return transform_dropout(point);
    case ImputerKind::GmmSample: return transform_gmm(point, salt);
  }
  throw std::invalid_argument("imputer transform: unknown kind");
}

DatasetWithMask Imputer::transform_dataset(const DatasetWithMask& data, int* fallback_rows) const {
  DatasetWithMask out = data;
  int fallbacks = 0;
  for (int i = 0; i < data.n; ++i) {
    bool fb = false;
    const auto filled = transform(data.row_point(i), static_cast<std::uint64_t>(i), &fb);
    fallbacks += fb ? 1 : 0;
    std::copy(filled.begin(), filled.end(), out.values.begin() + static_cast<std::size_t>(i) * data.d);
  }
  std::fill(out.mask.begin(), out.mask.end(), 0);
  if (fallback_rows != nullptr) *fallback_rows = fallbacks;
  return out;
}

}  // namespace missnet
