#include "missnet/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "missnet/common.hpp"
#include "missnet/special.hpp"

namespace missnet {

namespace {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::GeneralizedRelu: return "generalized-relu";
    case LayerKind::GeneralizedRbf: return "generalized-rbf";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& s) {
  if (s == "generalized-relu") return LayerKind::GeneralizedRelu;
  if (s == "generalized-rbf") return LayerKind::GeneralizedRbf;
  if (s == "dense") return LayerKind::Dense;
  throw std::invalid_argument("unknown layer kind: " + s);
}

const char* act_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Linear: return "linear";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

Activation act_from_name(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "linear") return Activation::Linear;
  if (s == "softmax") return Activation::Softmax;
  throw std::invalid_argument("unknown activation: " + s);
}

const char* loss_name(LossKind l) {
  return l == LossKind::MaskedMse ? "masked-mse" : "cross-entropy";
}

LossKind loss_from_name(const std::string& s) {
  if (s == "masked-mse") return LossKind::MaskedMse;
  if (s == "cross-entropy") return LossKind::CrossEntropy;
  throw std::invalid_argument("unknown loss: " + s);
}

// z = W x + b for one layer; W row-major width x in_dim.
void dense_affine(const Layer& layer, std::span<const double> x, std::span<double> z) {
  const int width = layer.spec.width;
  const int in = layer.in_dim;
  for (int u = 0; u < width; ++u) {
    const double* wrow = layer.W.data() + static_cast<std::size_t>(u) * in;
    double acc = layer.b[static_cast<std::size_t>(u)];
    for (int j = 0; j < in; ++j) acc += wrow[j] * x[static_cast<std::size_t>(j)];
    z[static_cast<std::size_t>(u)] = acc;
  }
}

void apply_activation(Activation act, std::span<const double> z, std::span<double> a) {
  switch (act) {
    case Activation::Relu:
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
      return;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = 1.0 / (1.0 + std::exp(-z[i]));
      return;
    case Activation::Linear:
      std::copy(z.begin(), z.end(), a.begin());
      return;
    case Activation::Softmax:
      softmax_into(z, a);
      return;
  }
}

struct ForwardTrace {
  std::vector<std::vector<double>> z;  // pre-activation per layer (layer 0 generalized: outputs)
  std::vector<std::vector<double>> a;  // post-activation per layer
  ConditionalGmm cond;                 // layer-0 conditional for incomplete points
  bool generalized_path = false;       // layer 0 went through the expected-activation path
};

void forward_trace(const NetworkModel& model, const MissingPoint& point, ForwardTrace& t) {
  const auto n_layers = model.layers.size();
  t.z.resize(n_layers);
  t.a.resize(n_layers);
  t.generalized_path = false;

  for (std::size_t li = 0; li < n_layers; ++li) {
    const Layer& layer = model.layers[li];
    const int width = layer.spec.width;
    t.z[li].assign(static_cast<std::size_t>(width), 0.0);
    t.a[li].assign(static_cast<std::size_t>(width), 0.0);
    std::span<const double> input =
        li == 0 ? std::span<const double>(point.values) : std::span<const double>(t.a[li - 1]);

    if (li == 0 && layer.spec.kind != LayerKind::Dense) {
      const bool complete = point.complete();
      if (layer.spec.kind == LayerKind::GeneralizedRelu) {
        if (complete) {
          // Complete points take the classical dense path, bit for bit.
          dense_affine(layer, input, t.z[li]);
          apply_activation(Activation::Relu, t.z[li], t.a[li]);
        } else {
          t.cond = conditional(*model.density, point);
          t.generalized_path = true;
          for (int u = 0; u < width; ++u) {
            std::span<const double> wrow{layer.W.data() + static_cast<std::size_t>(u) * layer.in_dim,
                                         static_cast<std::size_t>(layer.in_dim)};
            t.a[li][static_cast<std::size_t>(u)] = detail::relu_expected_span(
                wrow, layer.b[static_cast<std::size_t>(u)], t.cond, point);
          }
          t.z[li] = t.a[li];
        }
      } else {  // GeneralizedRbf
        if (!complete) {
          t.cond = conditional(*model.density, point);
          t.generalized_path = true;
        } else {
          t.cond = ConditionalGmm{};
          t.cond.degenerate_complete = true;
          t.cond.mask = point.mask;
        }
        for (int u = 0; u < width; ++u) {
          std::span<const double> crow{layer.W.data() + static_cast<std::size_t>(u) * layer.in_dim,
                                       static_cast<std::size_t>(layer.in_dim)};
          std::span<const double> lwrow{
              layer.log_widths.data() + static_cast<std::size_t>(u) * layer.in_dim,
              static_cast<std::size_t>(layer.in_dim)};
          t.a[li][static_cast<std::size_t>(u)] =
              detail::rbf_expected_span(crow, lwrow, t.cond, point);
        }
        t.z[li] = t.a[li];
      }
      continue;
    }

    dense_affine(layer, input, t.z[li]);
    apply_activation(layer.spec.activation, t.z[li], t.a[li]);
  }
}

}  // namespace

void NetworkModel::validate() const {
  if (input_dim < 1) throw std::invalid_argument("network: input_dim must be positive");
  if (layers.empty()) throw std::invalid_argument("network: no layers");
  int in = input_dim;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Layer& layer = layers[li];
    if (layer.spec.width < 1) throw std::invalid_argument("network: non-positive layer width");
    if (layer.in_dim != in) throw std::invalid_argument("network: incompatible layer widths");
    if (layer.spec.kind != LayerKind::Dense && li != 0)
      throw std::invalid_argument("network: generalized layers allowed only at position 0");
    if (layer.spec.activation == Activation::Softmax && li + 1 != layers.size())
      throw std::invalid_argument("network: softmax only at the last layer");
    const auto expected_w = static_cast<std::size_t>(layer.spec.width) * layer.in_dim;
    if (layer.W.size() != expected_w) throw std::invalid_argument("network: weight shape mismatch");
    if (layer.spec.kind == LayerKind::GeneralizedRbf) {
      if (layer.log_widths.size() != expected_w)
        throw std::invalid_argument("network: rbf width shape mismatch");
    } else if (layer.b.size() != static_cast<std::size_t>(layer.spec.width)) {
      throw std::invalid_argument("network: bias shape mismatch");
    }
    in = layer.spec.width;
  }
  if (generalized_input()) {
    if (!density) throw std::invalid_argument("network: generalized input layer needs a density");
    density->validate();
    if (density->d != input_dim)
      throw std::invalid_argument("network: density dimension mismatch");
  }
  if (loss == LossKind::CrossEntropy) {
    const auto last = layers.back().spec.activation;
    if (last != Activation::Softmax && last != Activation::Linear)
      throw std::invalid_argument("network: cross-entropy needs softmax or linear output");
  } else if (layers.back().spec.activation == Activation::Softmax) {
    throw std::invalid_argument("network: softmax output requires cross-entropy loss");
  }
}

NetworkModel make_network(int input_dim, std::span<const LayerSpec> specs, LossKind loss,
                          std::optional<GmmParams> density, std::uint64_t seed) {
  NetworkModel model;
  model.input_dim = input_dim;
  model.loss = loss;
  model.density = std::move(density);
  int in = input_dim;
  for (std::size_t li = 0; li < specs.size(); ++li) {
    Layer layer;
    layer.spec = specs[li];
    layer.in_dim = in;
    const auto n_w = static_cast<std::size_t>(layer.spec.width) * in;
    layer.W.assign(n_w, 0.0);
    Rng rng(mix_seed(seed, 0x696e6974ULL, li));  // "init"
    if (layer.spec.kind == LayerKind::GeneralizedRbf) {
      layer.log_widths.assign(n_w, 0.0);
      // Centers spread around the origin until data-driven init replaces them.
      for (auto& w : layer.W) w = rng.normal();
    } else {
      layer.b.assign(static_cast<std::size_t>(layer.spec.width), 0.0);
      const bool relu_like = layer.spec.kind == LayerKind::GeneralizedRelu ||
                             layer.spec.activation == Activation::Relu;
      const double limit = relu_like ? std::sqrt(6.0 / in)
                                     : std::sqrt(6.0 / (in + layer.spec.width));
      for (auto& w : layer.W) w = rng.uniform(-limit, limit);
    }
    in = layer.spec.width;
    model.layers.push_back(std::move(layer));
  }
  model.validate();
  return model;
}

void init_rbf_layer_from_data(NetworkModel& model, const DatasetWithMask& data,
                              std::uint64_t seed) {
  if (model.layers.empty() || model.layers[0].spec.kind != LayerKind::GeneralizedRbf)
    throw std::invalid_argument("init_rbf_layer_from_data: layer 0 is not generalized-rbf");
  Layer& layer = model.layers[0];
  if (data.d != layer.in_dim) throw std::invalid_argument("init_rbf_layer_from_data: dim mismatch");
  // Column means fill missing entries of the sampled center rows.
  std::vector<double> col_mean(static_cast<std::size_t>(data.d), 0.0);
  std::vector<int> cnt(static_cast<std::size_t>(data.d), 0);
  for (int i = 0; i < data.n; ++i)
    for (int j = 0; j < data.d; ++j)
      if (!data.is_missing(i, j)) {
        col_mean[static_cast<std::size_t>(j)] += data.value(i, j);
        ++cnt[static_cast<std::size_t>(j)];
      }
  for (int j = 0; j < data.d; ++j)
    if (cnt[static_cast<std::size_t>(j)] > 0) col_mean[static_cast<std::size_t>(j)] /= cnt[static_cast<std::size_t>(j)];

  Rng rng(mix_seed(seed, 0x72626669ULL));  // "rbfi"
  for (int u = 0; u < layer.spec.width; ++u) {
    const int r = rng.uniform_int(data.n);
    for (int j = 0; j < data.d; ++j) {
      layer.W[static_cast<std::size_t>(u) * data.d + j] =
          data.is_missing(r, j) ? col_mean[static_cast<std::size_t>(j)] : data.value(r, j);
    }
    for (int j = 0; j < data.d; ++j) {
      // |N(0,1)| draw, clamped away from zero.
      const double v = std::max(std::fabs(rng.normal()), kVarianceFloor);
      layer.log_widths[static_cast<std::size_t>(u) * data.d + j] = std::log(v);
    }
  }
}

std::vector<double> forward(const NetworkModel& model, const MissingPoint& point) {
  if (point.dim() != model.input_dim) throw std::invalid_argument("forward: dimension mismatch");
  point.validate();
  ForwardTrace t;
  forward_trace(model, point, t);
  return t.a.back();
}

double loss_masked_mse(std::span<const double> pred, const MissingPoint& target) {
  if (static_cast<int>(pred.size()) != target.dim())
    throw std::invalid_argument("loss_masked_mse: shape mismatch");
  double acc = 0.0;
  int n_obs = 0;
  for (int j = 0; j < target.dim(); ++j) {
    if (target.is_missing(j)) continue;
    const double diff = pred[static_cast<std::size_t>(j)] - target.values[static_cast<std::size_t>(j)];
    acc += diff * diff;
    ++n_obs;
  }
  return n_obs == 0 ? 0.0 : acc / n_obs;
}

double loss_cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw std::invalid_argument("loss_cross_entropy: label out of range");
  const double lse = log_sum_exp(logits);
  return lse - logits[static_cast<std::size_t>(label)];
}

void ModelGradients::init_like(const NetworkModel& model) {
  layers.assign(model.layers.size(), LayerGrad{});
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    layers[li].W.assign(model.layers[li].W.size(), 0.0);
    layers[li].b.assign(model.layers[li].b.size(), 0.0);
    layers[li].log_widths.assign(model.layers[li].log_widths.size(), 0.0);
  }
  if (model.density) {
    d_logits.assign(model.density->logits.size(), 0.0);
    d_means.assign(model.density->means.size(), 0.0);
    d_log_vars.assign(model.density->log_vars.size(), 0.0);
  }
}

void ModelGradients::scale(double s) {
  for (auto& lg : layers) {
    for (auto& v : lg.W) v *= s;
    for (auto& v : lg.b) v *= s;
    for (auto& v : lg.log_widths) v *= s;
  }
  for (auto& v : d_logits) v *= s;
  for (auto& v : d_means) v *= s;
  for (auto& v : d_log_vars) v *= s;
}

namespace {

// Chains conditional-side gradients to the unconstrained density parameters:
// through the responsibilities (softmax over log p_i + log C_i) to the
// logits and to means/vars at observed coordinates, plus the direct terms at
// missing coordinates. log-var gradients pick up the exp() factor.
void chain_density_grads(const GmmParams& gmm, const MissingPoint& point,
                         const ConditionalGmm& cond, const detail::CondGradAccum& dcond,
                         ModelGradients& grads) {
  const int k = gmm.k;
  const int m = cond.n_missing();
  double weighted = 0.0;
  for (int i = 0; i < k; ++i)
    weighted += cond.resp[static_cast<std::size_t>(i)] * dcond.d_resp[static_cast<std::size_t>(i)];
  std::vector<double> d_theta(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    d_theta[static_cast<std::size_t>(i)] = cond.resp[static_cast<std::size_t>(i)] *
                                           (dcond.d_resp[static_cast<std::size_t>(i)] - weighted);
  }
  // The softmax-of-logits Jacobian collapses because sum_i d_theta_i = 0.
  for (int i = 0; i < k; ++i) grads.d_logits[static_cast<std::size_t>(i)] += d_theta[static_cast<std::size_t>(i)];

  for (int i = 0; i < k; ++i) {
    const double dt = d_theta[static_cast<std::size_t>(i)];
    if (dt != 0.0) {
      for (int l = 0; l < gmm.d; ++l) {
        if (point.is_missing(l)) continue;
        const double sigma = gmm.variance(i, l);
        const double denom = gmm.gamma + sigma;
        const double diff = gmm.mean(i, l) - point.values[static_cast<std::size_t>(l)];
        grads.d_means[static_cast<std::size_t>(i) * gmm.d + l] += dt * (-diff / denom);
        grads.d_log_vars[static_cast<std::size_t>(i) * gmm.d + l] +=
            dt * (-0.5 / denom + 0.5 * diff * diff / (denom * denom)) * sigma;
      }
    }
    for (int jj = 0; jj < m; ++jj) {
      const int j = cond.missing_idx[static_cast<std::size_t>(jj)];
      grads.d_means[static_cast<std::size_t>(i) * gmm.d + j] +=
          dcond.d_means[static_cast<std::size_t>(i) * m + jj];
      grads.d_log_vars[static_cast<std::size_t>(i) * gmm.d + j] +=
          dcond.d_vars[static_cast<std::size_t>(i) * m + jj] * cond.var_at(i, jj);
    }
  }
}

// Converts dL/d(post-activation) to dL/d(pre-activation) in place.
void gate_activation(Activation act, std::span<const double> z, std::span<const double> a,
                     std::span<double> delta) {
  switch (act) {
    case Activation::Relu:
      for (std::size_t u = 0; u < delta.size(); ++u) delta[u] = z[u] > 0.0 ? delta[u] : 0.0;
      return;
    case Activation::Sigmoid:
      for (std::size_t u = 0; u < delta.size(); ++u) delta[u] *= a[u] * (1.0 - a[u]);
      return;
    case Activation::Linear:
      return;
    case Activation::Softmax:
      throw std::invalid_argument("softmax gradient is fused with cross-entropy");
  }
}

void backward_point(const NetworkModel& model, const MissingPoint& point, int label,
                    ModelGradients& grads, double& loss_acc) {
  ForwardTrace t;
  forward_trace(model, point, t);
  const auto n_layers = model.layers.size();
  const auto& out = t.a.back();
  const auto& z_out = t.z.back();

  // delta arriving at each layer is dL/d(post-activation); the cross-entropy
  // case fuses the softmax and starts from dL/dz of the last layer.
  std::vector<double> delta(out.size(), 0.0);
  bool delta_is_pre = false;
  if (model.loss == LossKind::MaskedMse) {
    loss_acc += loss_masked_mse(out, point);
    const int n_obs = point.dim() - point.n_missing();
    if (n_obs > 0) {
      for (int j = 0; j < point.dim(); ++j) {
        if (point.is_missing(j)) continue;
        delta[static_cast<std::size_t>(j)] =
            2.0 * (out[static_cast<std::size_t>(j)] - point.values[static_cast<std::size_t>(j)]) / n_obs;
      }
    }
  } else {
    loss_acc += loss_cross_entropy(z_out, label);
    softmax_into(z_out, delta);
    delta[static_cast<std::size_t>(label)] -= 1.0;
    delta_is_pre = true;
  }

  // Dense layers, last down to layer 1.
  for (std::size_t li = n_layers; li-- > 1;) {
    const Layer& layer = model.layers[li];
    auto& lg = grads.layers[li];
    const auto& input = t.a[li - 1];
    const int width = layer.spec.width;
    const int in = layer.in_dim;
    if (!delta_is_pre) gate_activation(layer.spec.activation, t.z[li], t.a[li], delta);
    delta_is_pre = false;
    std::vector<double> delta_prev(static_cast<std::size_t>(in), 0.0);
    for (int u = 0; u < width; ++u) {
      const double du = delta[static_cast<std::size_t>(u)];
      lg.b[static_cast<std::size_t>(u)] += du;
      double* gw = lg.W.data() + static_cast<std::size_t>(u) * in;
      const double* wrow = layer.W.data() + static_cast<std::size_t>(u) * in;
      for (int j = 0; j < in; ++j) {
        gw[j] += du * input[static_cast<std::size_t>(j)];
        delta_prev[static_cast<std::size_t>(j)] += du * wrow[j];
      }
    }
    delta = std::move(delta_prev);
  }

  // Layer 0; delta = dL/d(layer-0 output).
  const Layer& layer0 = model.layers[0];
  auto& lg0 = grads.layers[0];
  const int width0 = layer0.spec.width;
  const int in0 = layer0.in_dim;

  if (layer0.spec.kind == LayerKind::Dense ||
      (layer0.spec.kind == LayerKind::GeneralizedRelu && !t.generalized_path)) {
    // Classical dense path (also the reduction path of generalized-relu).
    const Activation act =
        layer0.spec.kind == LayerKind::Dense ? layer0.spec.activation : Activation::Relu;
    if (!delta_is_pre) gate_activation(act, t.z[0], t.a[0], delta);
    for (int u = 0; u < width0; ++u) {
      const double du = delta[static_cast<std::size_t>(u)];
      lg0.b[static_cast<std::size_t>(u)] += du;
      double* gw = lg0.W.data() + static_cast<std::size_t>(u) * in0;
      for (int j = 0; j < in0; ++j) gw[j] += du * point.values[static_cast<std::size_t>(j)];
    }
    return;
  }

  if (layer0.spec.kind == LayerKind::GeneralizedRelu) {
    detail::CondGradAccum dcond;
    dcond.init(t.cond.k, t.cond.n_missing());
    for (int u = 0; u < width0; ++u) {
      const double du = delta[static_cast<std::size_t>(u)];
      std::span<const double> wrow{layer0.W.data() + static_cast<std::size_t>(u) * in0,
                                   static_cast<std::size_t>(in0)};
      std::span<double> gw{lg0.W.data() + static_cast<std::size_t>(u) * in0,
                           static_cast<std::size_t>(in0)};
      detail::relu_expected_grad_span(wrow, layer0.b[static_cast<std::size_t>(u)], t.cond, point,
                                      du, gw, lg0.b[static_cast<std::size_t>(u)], dcond);
    }
    chain_density_grads(*model.density, point, t.cond, dcond, grads);
    return;
  }

  // GeneralizedRbf: one kernel handles both complete and incomplete points.
  detail::CondGradAccum dcond;
  dcond.init(t.cond.k, t.cond.degenerate_complete ? 0 : t.cond.n_missing());
  for (int u = 0; u < width0; ++u) {
    const double du = delta[static_cast<std::size_t>(u)];
    std::span<const double> crow{layer0.W.data() + static_cast<std::size_t>(u) * in0,
                                 static_cast<std::size_t>(in0)};
    std::span<const double> lwrow{layer0.log_widths.data() + static_cast<std::size_t>(u) * in0,
                                  static_cast<std::size_t>(in0)};
    std::span<double> gc{lg0.W.data() + static_cast<std::size_t>(u) * in0,
                         static_cast<std::size_t>(in0)};
    std::span<double> glw{lg0.log_widths.data() + static_cast<std::size_t>(u) * in0,
                          static_cast<std::size_t>(in0)};
    detail::rbf_expected_grad_span(crow, lwrow, t.cond, point, du, gc, glw, dcond);
  }
  if (t.generalized_path) chain_density_grads(*model.density, point, t.cond, dcond, grads);
}

}  // namespace

BackwardResult backward(const NetworkModel& model, const Batch& batch) {
  if (batch.data == nullptr || batch.rows.empty())
    throw std::invalid_argument("backward: empty batch");
  model.validate();
  BackwardResult res;
  res.grads.init_like(model);
  double loss_acc = 0.0;
  for (int r : batch.rows) {
    const MissingPoint p = batch.data->row_point(r);
    const int label = batch.data->has_labels() ? batch.data->labels[static_cast<std::size_t>(r)] : -1;
    if (model.loss == LossKind::CrossEntropy && label < 0)
      throw std::invalid_argument("backward: cross-entropy needs labels");
    backward_point(model, p, label, res.grads, loss_acc);
  }
  const double inv = 1.0 / static_cast<double>(batch.rows.size());
  res.grads.scale(inv);
  res.loss = loss_acc * inv;
  return res;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be positive");
  if (gmm_lr_scale < 0.0) throw std::invalid_argument("train: gmm_lr_scale must be >= 0");
}

namespace {

struct AdamState {
  std::vector<double> m, v;
  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

struct Optimizer {
  const TrainConfig* cfg = nullptr;
  long long t = 0;
  std::vector<AdamState> states;
  std::size_t cursor = 0;
  bool finite = true;

  void begin_step() {
    ++t;
    cursor = 0;
  }

  void apply(std::span<double> params, std::span<const double> grads, double lr) {
    if (cfg->optimizer == TrainConfig::Optimizer::Sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= lr * grads[i];
        finite = finite && std::isfinite(params[i]);
      }
      return;
    }
    if (cursor >= states.size()) states.emplace_back();
    AdamState& st = states[cursor++];
    if (st.m.size() != params.size()) st.init(params.size());
    const double b1 = cfg->beta1, b2 = cfg->beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m[i] = b1 * st.m[i] + (1.0 - b1) * grads[i];
      st.v[i] = b2 * st.v[i] + (1.0 - b2) * grads[i] * grads[i];
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + cfg->epsilon);
      finite = finite && std::isfinite(params[i]);
    }
  }
};

}  // namespace

TrainResult train(NetworkModel& model, const DatasetWithMask& data, const TrainConfig& cfg,
                  const DatasetWithMask* validation) {
  cfg.validate();
  model.validate();
  if (data.n == 0) throw std::invalid_argument("train: empty dataset");
  if (data.d != model.input_dim) throw std::invalid_argument("train: dimension mismatch");
  if (model.loss == LossKind::CrossEntropy && !data.has_labels())
    throw std::invalid_argument("train: cross-entropy needs labels");

  TrainResult result;
  Optimizer opt;
  opt.cfg = &cfg;

  Rng shuffle_rng(mix_seed(cfg.seed, 0x73687566ULL));  // "shuf"
  std::vector<int> order(static_cast<std::size_t>(data.n));
  for (int i = 0; i < data.n; ++i) order[static_cast<std::size_t>(i)] = i;

  double best_val = 0.0;
  bool have_best = false;
  int since_best = 0;
  const bool higher_better = model.loss == LossKind::CrossEntropy;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    Batch batch;
    batch.data = &data;
    for (int start = 0; start < data.n; start += cfg.batch_size) {
      const int end = std::min(start + cfg.batch_size, data.n);
      batch.rows.assign(order.begin() + start, order.begin() + end);
      BackwardResult res = backward(model, batch);
      if (!std::isfinite(res.loss))
        throw TrainingDivergedError(epoch, "training diverged (non-finite loss) at epoch " +
                                               std::to_string(epoch));
      epoch_loss += res.loss * static_cast<double>(batch.rows.size());

      opt.begin_step();
      const double lr = cfg.learning_rate;
      for (std::size_t li = 0; li < model.layers.size(); ++li) {
        opt.apply(model.layers[li].W, res.grads.layers[li].W, lr);
        if (!model.layers[li].b.empty()) opt.apply(model.layers[li].b, res.grads.layers[li].b, lr);
        if (!model.layers[li].log_widths.empty())
          opt.apply(model.layers[li].log_widths, res.grads.layers[li].log_widths, lr);
      }
      if (model.density) {
        const double dlr = lr * cfg.gmm_lr_scale;
        opt.apply(model.density->logits, res.grads.d_logits, dlr);
        opt.apply(model.density->means, res.grads.d_means, dlr);
        opt.apply(model.density->log_vars, res.grads.d_log_vars, dlr);
        model.density->floor_variances();
      }
      if (!opt.finite)
        throw TrainingDivergedError(epoch, "training diverged (non-finite parameters) at epoch " +
                                               std::to_string(epoch));
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = epoch_loss / static_cast<double>(data.n);
    if (validation != nullptr) {
      em.val_metric = higher_better ? accuracy(model, *validation) : mean_loss(model, *validation);
      if (cfg.early_stop_patience) {
        const double v = *em.val_metric;
        const bool improved = !have_best || (higher_better ? v > best_val : v < best_val);
        if (improved) {
          best_val = v;
          have_best = true;
          since_best = 0;
        } else if (++since_best >= *cfg.early_stop_patience) {
          result.epochs.push_back(em);
          break;
        }
      }
    }
    result.epochs.push_back(em);
  }
  return result;
}

int predict_class(const NetworkModel& model, const MissingPoint& point) {
  const auto out = forward(model, point);
  return static_cast<int>(std::max_element(out.begin(), out.end()) - out.begin());
}

double accuracy(const NetworkModel& model, const DatasetWithMask& data) {
  if (!data.has_labels()) throw std::invalid_argument("accuracy: dataset has no labels");
  int correct = 0;
  for (int i = 0; i < data.n; ++i) {
    if (predict_class(model, data.row_point(i)) == data.labels[static_cast<std::size_t>(i)])
      ++correct;
  }
  return data.n == 0 ? 0.0 : static_cast<double>(correct) / data.n;
}

double mean_loss(const NetworkModel& model, const DatasetWithMask& data) {
  double acc = 0.0;
  for (int i = 0; i < data.n; ++i) {
    const MissingPoint p = data.row_point(i);
    const auto out = forward(model, p);
    if (model.loss == LossKind::MaskedMse) {
      acc += loss_masked_mse(out, p);
    } else {
      // forward applies softmax; recompute from logits for stability.
      ForwardTrace t;
      forward_trace(model, p, t);
      acc += loss_cross_entropy(t.z.back(), data.labels[static_cast<std::size_t>(i)]);
    }
  }
  return data.n == 0 ? 0.0 : acc / data.n;
}

nlohmann::ordered_json NetworkModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "missnet-model";
  j["input_dim"] = input_dim;
  j["loss"] = loss_name(loss);
  nlohmann::ordered_json layers_j = nlohmann::ordered_json::array();
  for (const auto& layer : layers) {
    nlohmann::ordered_json lj;
    lj["kind"] = kind_name(layer.spec.kind);
    lj["width"] = layer.spec.width;
    lj["activation"] = act_name(layer.spec.activation);
    lj["in_dim"] = layer.in_dim;
    lj["W"] = layer.W;
    lj["b"] = layer.b;
    lj["log_widths"] = layer.log_widths;
    layers_j.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers_j);
  j["density"] = density ? density->to_json() : nlohmann::ordered_json(nullptr);
  return j;
}

NetworkModel NetworkModel::from_json(const nlohmann::json& j) {
  NetworkModel model;
  model.input_dim = j.at("input_dim").get<int>();
  model.loss = loss_from_name(j.at("loss").get<std::string>());
  for (const auto& lj : j.at("layers")) {
    Layer layer;
    layer.spec.kind = kind_from_name(lj.at("kind").get<std::string>());
    layer.spec.width = lj.at("width").get<int>();
    layer.spec.activation = act_from_name(lj.at("activation").get<std::string>());
    layer.in_dim = lj.at("in_dim").get<int>();
    layer.W = lj.at("W").get<std::vector<double>>();
    layer.b = lj.at("b").get<std::vector<double>>();
    layer.log_widths = lj.at("log_widths").get<std::vector<double>>();
    model.layers.push_back(std::move(layer));
  }
  if (!j.at("density").is_null()) model.density = GmmParams::from_json(j.at("density"));
  model.validate();
  return model;
}

void save_model(const NetworkModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  out << model.to_json().dump(2) << "\n";
}

NetworkModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  nlohmann::json j;
  in >> j;
  return NetworkModel::from_json(j);
}

}  // namespace missnet
