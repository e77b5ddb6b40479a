#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "missnet/data_io.hpp"
#include "missnet/density_gmm.hpp"

namespace missnet {

enum class ImputerKind { Mean, Knn, InputDropout, GmmSample };

ImputerKind imputer_kind_from_string(const std::string& s);
std::string to_string(ImputerKind kind);

struct ImputerConfig {
  ImputerKind kind = ImputerKind::Mean;
  int knn_k = 5;
  std::optional<double> dropout_rate;  // default: training missingness fraction
  int gmm_k = 3;
  std::uint64_t seed = 0;
};

// A fitted completion strategy. Immutable after fit; transform is pure.
class Imputer {
 public:
  static Imputer fit(const ImputerConfig& cfg, const DatasetWithMask& train);

  // Observed coordinates are preserved exactly. `salt` keys the per-point
  // RNG stream for gmm-sample (row index when imputing a dataset).
  // `used_fallback` reports a knn column-mean fallback.
  std::vector<double> transform(const MissingPoint& point, std::uint64_t salt = 0,
                                bool* used_fallback = nullptr) const;

  // Imputes every row (salt = row index); the result carries an all-false
  // mask. fallback_rows counts knn column-mean fallbacks.
  DatasetWithMask transform_dataset(const DatasetWithMask& data,
                                    int* fallback_rows = nullptr) const;

  ImputerKind kind() const { return cfg_.kind; }
  double dropout_rate() const { return rate_; }
  const GmmParams& gmm() const { return gmm_; }

 private:
  ImputerConfig cfg_;
  std::vector<double> column_means_;
  double rate_ = 0.0;  // dropout
  // knn keeps the training matrix.
  std::vector<double> train_values_;
  std::vector<std::uint8_t> train_mask_;
  int train_n_ = 0;
  int d_ = 0;
  GmmParams gmm_;

  std::vector<double> transform_mean(const MissingPoint& p) const;
  std::vector<double> transform_knn(const MissingPoint& p, bool* used_fallback) const;
  std::vector<double> transform_dropout(const MissingPoint& p) const;
  std::vector<double> transform_gmm(const MissingPoint& p, std::uint64_t salt) const;
};

}  // namespace missnet
