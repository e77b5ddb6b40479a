#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "missnet/data_io.hpp"
#include "missnet/density_gmm.hpp"
#include "missnet/gen_activations.hpp"

namespace missnet {

enum class LayerKind { GeneralizedRelu, GeneralizedRbf, Dense };
enum class Activation { Relu, Sigmoid, Linear, Softmax };
enum class LossKind { MaskedMse, CrossEntropy };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int width = 0;
  Activation activation = Activation::Relu;  // dense layers only
};

struct Layer {
  LayerSpec spec;
  int in_dim = 0;
  std::vector<double> W;           // width*in_dim (dense weights / RBF centers)
  std::vector<double> b;           // width (dense bias; empty for RBF)
  std::vector<double> log_widths;  // width*in_dim (RBF only)
};

class NetworkModel {
 public:
  int input_dim = 0;
  LossKind loss = LossKind::MaskedMse;
  std::vector<Layer> layers;
  std::optional<GmmParams> density;  // required iff layer 0 is generalized

  int output_dim() const { return layers.empty() ? input_dim : layers.back().spec.width; }
  bool generalized_input() const {
    return !layers.empty() && layers.front().spec.kind != LayerKind::Dense;
  }
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static NetworkModel from_json(const nlohmann::json& j);
};

// Builds a network with He/Xavier-style uniform fan-in init, seeded.
NetworkModel make_network(int input_dim, std::span<const LayerSpec> specs, LossKind loss,
                          std::optional<GmmParams> density, std::uint64_t seed);

// RBF-layer init: centers drawn from training rows (missing entries filled
// with column means), widths |N(0,1)| clamped to the variance floor.
void init_rbf_layer_from_data(NetworkModel& model, const DatasetWithMask& data,
                              std::uint64_t seed);

std::vector<double> forward(const NetworkModel& model, const MissingPoint& point);

// Mean squared error over observed coordinates only; 0 when none.
double loss_masked_mse(std::span<const double> pred, const MissingPoint& target);
// -log softmax(logits)[label], max-subtracted.
double loss_cross_entropy(std::span<const double> logits, int label);

struct ModelGradients {
  struct LayerGrad {
    std::vector<double> W;
    std::vector<double> b;
    std::vector<double> log_widths;
  };
  std::vector<LayerGrad> layers;
  std::vector<double> d_logits;    // density
  std::vector<double> d_means;     // k*d
  std::vector<double> d_log_vars;  // k*d

  void init_like(const NetworkModel& model);
  void scale(double s);
};

struct Batch {
  const DatasetWithMask* data = nullptr;
  std::vector<int> rows;
};

struct BackwardResult {
  double loss = 0.0;  // mean over the batch
  ModelGradients grads;
};

// Exact reverse-mode gradients of the mean batch loss for all layer
// parameters and, through the conditional, the density parameters.
BackwardResult backward(const NetworkModel& model, const Batch& batch);

struct TrainConfig {
  enum class Optimizer { Sgd, Adam };
  Optimizer optimizer = Optimizer::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 0;
  double gmm_lr_scale = 1.0;  // multiplier on the density learning rate
  std::optional<int> early_stop_patience;
  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_metric;  // accuracy for CE, loss for masked MSE
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
};

// Deterministic for a fixed seed; refloors density variances after every
// step; throws TrainingDivergedError when the loss stops being finite.
TrainResult train(NetworkModel& model, const DatasetWithMask& data, const TrainConfig& cfg,
                  const DatasetWithMask* validation = nullptr);

int predict_class(const NetworkModel& model, const MissingPoint& point);
double accuracy(const NetworkModel& model, const DatasetWithMask& data);
double mean_loss(const NetworkModel& model, const DatasetWithMask& data);

void save_model(const NetworkModel& model, const std::string& path);
NetworkModel load_model(const std::string& path);

}  // namespace missnet
