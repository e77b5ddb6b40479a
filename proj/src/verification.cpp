#include "missnet/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "missnet/common.hpp"
#include "missnet/gen_activations.hpp"

namespace missnet {

namespace {

// Direct conditional sampler + classical activations. Kept separate from the
// analytic expected-response kernels on purpose: this is the oracle side.
struct CondSampler {
  const ConditionalGmm* cond;
  const MissingPoint* point;
  Rng rng;

  CondSampler(const ConditionalGmm& c, const MissingPoint& p, std::uint64_t seed)
      : cond(&c), point(&p), rng(mix_seed(seed, 0x6f7261636cULL)) {}  // "oracl"

  void draw(std::vector<double>& x) {
    x = point->values;
    if (cond->degenerate_complete) return;
    const double u = rng.uniform01();
    int comp = cond->k - 1;
    double acc = 0.0;
    for (int i = 0; i < cond->k; ++i) {
      acc += cond->resp[static_cast<std::size_t>(i)];
      if (u < acc) {
        comp = i;
        break;
      }
    }
    for (int jj = 0; jj < cond->n_missing(); ++jj) {
      const int j = cond->missing_idx[static_cast<std::size_t>(jj)];
      x[static_cast<std::size_t>(j)] =
          cond->mean_at(comp, jj) + std::sqrt(cond->var_at(comp, jj)) * rng.normal();
    }
  }
};

McResult run_mc(CondSampler& sampler, int n, const std::function<double(const std::vector<double>&)>& f) {
  if (n < 10'000) throw std::invalid_argument("mc_expected_activation: need at least 10^4 samples");
  std::vector<double> x;
  double sum = 0.0, sum2 = 0.0;
  for (int s = 0; s < n; ++s) {
    sampler.draw(x);
    const double v = f(x);
    sum += v;
    sum2 += v * v;
  }
  McResult out;
  out.mean = sum / n;
  const double var = std::max(sum2 / n - out.mean * out.mean, 0.0);
  out.std_error = std::sqrt(var / n);
  return out;
}

}  // namespace

McResult mc_expected_activation_relu(const ReluUnit& unit, const ConditionalGmm& cond,
                                     const MissingPoint& point, int n, std::uint64_t seed) {
  CondSampler sampler(cond, point, seed);
  return run_mc(sampler, n, [&](const std::vector<double>& x) {
    double z = unit.b;
    for (std::size_t j = 0; j < x.size(); ++j) z += unit.w[j] * x[j];
    return z > 0.0 ? z : 0.0;
  });
}

McResult mc_expected_activation_rbf(const RbfUnit& unit, const ConditionalGmm& cond,
                                    const MissingPoint& point, int n, std::uint64_t seed) {
  CondSampler sampler(cond, point, seed);
  return run_mc(sampler, n, [&](const std::vector<double>& x) {
    double lg = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double gj = std::exp(unit.log_gamma_diag[j]);
      const double diff = x[j] - unit.c[j];
      lg += -0.5 * (kLog2Pi + std::log(gj)) - 0.5 * diff * diff / gj;
    }
    return std::exp(lg);
  });
}

namespace {

// Full-space generalized ReLU response of a nondegenerate diagonal mixture.
double mixture_relu_response(const GmmParams& g, std::span<const double> w, double b) {
  const auto weights = g.weights();
  double out = 0.0;
  for (int i = 0; i < g.k; ++i) {
    double mu = b;
    double s2 = 0.0;
    for (int j = 0; j < g.d; ++j) {
      mu += w[static_cast<std::size_t>(j)] * g.mean(i, j);
      s2 += g.variance(i, j) * w[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(j)];
    }
    double term;
    if (s2 < kDegenerateVarEps) {
      term = mu > 0.0 ? mu : 0.0;
    } else {
      const double s = std::sqrt(s2);
      term = s * nr(mu / s);
    }
    out += weights[static_cast<std::size_t>(i)] * term;
  }
  return out;
}

}  // namespace

DistinguishResult distinguish_measures(const GmmParams& a, const GmmParams& b, int trials,
                                       std::uint64_t seed) {
  a.validate();
  b.validate();
  if (a.d != b.d) throw std::invalid_argument("distinguish_measures: dimension mismatch");
  DistinguishResult res;
  Rng rng(mix_seed(seed, 0x77697477ULL));  // "witw"
  std::vector<double> w(static_cast<std::size_t>(a.d));
  for (int t = 0; t < trials; ++t) {
    double norm = 0.0;
    for (auto& wj : w) {
      wj = rng.normal();
      norm += wj * wj;
    }
    norm = std::sqrt(norm);
    if (norm <= 0.0) continue;
    for (auto& wj : w) wj /= norm;
    const double bias = rng.uniform(-3.0, 3.0);
    const double gap = std::fabs(mixture_relu_response(a, w, bias) - mixture_relu_response(b, w, bias));
    if (gap > res.max_gap) {
      res.max_gap = gap;
      res.witness_w = w;
      res.witness_b = bias;
    }
  }
  res.certified = res.max_gap > 1e-6;
  return res;
}

BenchResult bench_layer_cost(int d, int k, int t, int trials, std::uint64_t seed) {
  if (trials < 100) throw std::invalid_argument("bench_layer_cost: need at least 100 trials");
  if (d < 2 || k < 1 || t < 1) throw std::invalid_argument("bench_layer_cost: bad shape");

  Rng rng(mix_seed(seed, 0x62656e63ULL));  // "benc"
  GmmParams g = GmmParams::create(k, d);
  for (auto& m : g.means) m = rng.normal();
  for (auto& lv : g.log_vars) lv = rng.uniform(-1.0, 0.5);
  for (auto& l : g.logits) l = rng.uniform(-0.5, 0.5);

  // Half the coordinates missing.
  MissingPoint point;
  point.values.resize(static_cast<std::size_t>(d));
  point.mask.assign(static_cast<std::size_t>(d), 0);
  for (int j = 0; j < d; ++j) {
    point.values[static_cast<std::size_t>(j)] = rng.normal();
    if (j % 2 == 1) {
      point.mask[static_cast<std::size_t>(j)] = 1;
      point.values[static_cast<std::size_t>(j)] = 0.0;
    }
  }
  MissingPoint complete = MissingPoint::complete_point(point.values);

  std::vector<std::vector<double>> units(static_cast<std::size_t>(t));
  std::vector<double> biases(static_cast<std::size_t>(t));
  for (int u = 0; u < t; ++u) {
    units[static_cast<std::size_t>(u)].resize(static_cast<std::size_t>(d));
    for (auto& w : units[static_cast<std::size_t>(u)]) w = rng.normal();
    biases[static_cast<std::size_t>(u)] = rng.normal();
  }

  // Inner repetitions keep each timed region well above clock resolution.
  const int reps = std::max(1, 200'000 / (t * d));
  volatile double sink = 0.0;  // keeps the work alive
  auto time_generalized = [&]() {
    const auto t0 = std::chrono::steady_clock::now();
    double acc = 0.0;
    for (int r = 0; r < reps; ++r) {
      const ConditionalGmm cond = conditional(g, point);
      for (int u = 0; u < t; ++u) {
        acc += detail::relu_expected_span(units[static_cast<std::size_t>(u)],
                                          biases[static_cast<std::size_t>(u)], cond, point);
      }
    }
    sink = sink + acc;
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::nano>(t1 - t0).count() / reps;
  };
  auto time_classical = [&]() {
    const auto t0 = std::chrono::steady_clock::now();
    double acc = 0.0;
    for (int r = 0; r < reps; ++r) {
      for (int u = 0; u < t; ++u) {
        double z = biases[static_cast<std::size_t>(u)];
        const auto& w = units[static_cast<std::size_t>(u)];
        for (int j = 0; j < d; ++j)
          z += w[static_cast<std::size_t>(j)] * complete.values[static_cast<std::size_t>(j)];
        acc += z > 0.0 ? z : 0.0;
      }
    }
    sink = sink + acc;
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::nano>(t1 - t0).count() / reps;
  };

  for (int warm = 0; warm < 10; ++warm) {
    time_generalized();
    time_classical();
  }
  std::vector<double> gen_ns(static_cast<std::size_t>(trials));
  std::vector<double> cls_ns(static_cast<std::size_t>(trials));
  for (int i = 0; i < trials; ++i) gen_ns[static_cast<std::size_t>(i)] = time_generalized();
  for (int i = 0; i < trials; ++i) cls_ns[static_cast<std::size_t>(i)] = time_classical();
  auto median = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  BenchResult out;
  out.generalized_ns_per_point = median(gen_ns);
  out.classical_ns_per_point = median(cls_ns);
  out.ratio = out.generalized_ns_per_point / std::max(out.classical_ns_per_point, 1.0);
  return out;
}

}  // namespace missnet
