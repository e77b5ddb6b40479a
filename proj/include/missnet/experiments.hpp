#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "missnet/data_io.hpp"
#include "missnet/imputers.hpp"
#include "missnet/nn_core.hpp"

namespace missnet::exp {

struct DatasetSpec {
  std::string kind;  // csv | idx | json | toy-four-gaussians | synthetic-classify | synthetic-images
  std::string path;
  std::string labels_path;  // idx
  CsvOptions csv;
  std::string normalize = "none";  // none | minmax01 | zscore
  // synthetic / toy generators
  int n = 0;
  int d = 0;
  int classes = 2;
  // optional deterministic subsampling (idx / csv)
  int subsample_train = 0;
  int subsample_test = 0;
  double test_fraction = 0.25;  // used when the experiment needs a holdout split
};

struct DensitySpec {
  std::vector<int> k_candidates = {2, 3, 5};
  double gamma = kDefaultGamma;
  int em_max_iter = 50;
};

struct CvSpec {
  int outer_folds = 5;
  int inner_folds = 5;
  bool stratified = true;
};

struct ArchitectureSpec {
  std::vector<int> hidden = {128, 128, 128};         // mlp-classify
  std::vector<int> rbf_units_candidates = {25, 50, 75, 100};
  std::vector<int> ae_hidden = {256, 128, 64, 128, 256};
  std::string ae_activation = "sigmoid";  // hidden/output units after the first layer
};

struct ExperimentConfig {
  std::string experiment;  // autoencoder | mlp-classify | rbfn-classify | toy-density
  DatasetSpec dataset;
  MaskPolicy mask;
  std::string method = "generalized";  // generalized | mean | knn | dropout | gmm-sample
  ArchitectureSpec architecture;
  TrainConfig train;
  DensitySpec density;
  CvSpec cv;
  ImputerConfig imputer;
  std::string out;
  std::uint64_t seed = 0;
  int dump_images = 0;  // autoencoder: PGM dumps of the first test images

  void validate() const;  // throws ConfigError
  nlohmann::ordered_json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path);
};

using FoldMetrics = std::map<std::string, double>;

struct MetricsReport {
  std::string experiment;
  std::string method;
  std::uint64_t seed = 0;
  std::string library_version;
  nlohmann::ordered_json config_echo;
  std::vector<FoldMetrics> folds;
  FoldMetrics aggregate;  // mean of folds, key by key
  nlohmann::ordered_json extras;  // chosen hyperparameters, density snapshots, ...
  double wall_clock_sec = 0.0;

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

MetricsReport run_autoencoder(const ExperimentConfig& cfg);
MetricsReport run_mlp_classify(const ExperimentConfig& cfg);
MetricsReport run_rbfn_classify(const ExperimentConfig& cfg);
MetricsReport run_toy_density(const ExperimentConfig& cfg);
MetricsReport run(const ExperimentConfig& cfg);  // dispatches on cfg.experiment

// Writes the JSON report (stable key order) and prints a metric table.
void emit_report(const MetricsReport& report, const std::string& path);

// Loads + normalizes + masks per the config. Masking depends only on the
// dataset and mask seeds, so every method sees the same incomplete data.
DatasetWithMask prepare_dataset(const ExperimentConfig& cfg);

// Toy four-Gaussian generator (two classes, two components each; the first
// attribute is dropped with probability 1/2 where x1 < 0).
DatasetWithMask make_four_gaussians(int n, std::uint64_t seed);

void write_pgm(const std::string& path, std::span<const double> pixels, int h, int w);

}  // namespace missnet::exp
