#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "raydf/types.hpp"

namespace raydf::nn {

enum class Activation : std::uint8_t { Sine = 0, Linear = 1, Sigmoid = 2 };

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One dense layer. Sine layers compute sin(omega * (W x + b)).
template <typename Scalar>
struct Layer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out
  Activation act = Activation::Linear;
  Scalar omega = Scalar(1);
};

template <typename Scalar>
struct Mlp {
  std::vector<Layer<Scalar>> layers;

  int input_dim() const { return (int)layers.front().weight.cols(); }
  int output_dim() const { return (int)layers.back().weight.rows(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }
};

using MlpF = Mlp<float>;

namespace detail {

template <typename Scalar>
Matrix<Scalar> apply_activation(const Layer<Scalar>& layer,
                                const Matrix<Scalar>& z) {
  switch (layer.act) {
    case Activation::Sine:
      return (layer.omega * z.array()).sin();
    case Activation::Linear:
      return z;
    case Activation::Sigmoid:
      return (Scalar(1) / (Scalar(1) + (-z.array()).exp()));
  }
  return z;
}

// dA/dZ evaluated at pre-activation z.
template <typename Scalar>
Matrix<Scalar> activation_grad(const Layer<Scalar>& layer,
                               const Matrix<Scalar>& z) {
  switch (layer.act) {
    case Activation::Sine:
      return layer.omega * (layer.omega * z.array()).cos();
    case Activation::Linear:
      return Matrix<Scalar>::Ones(z.rows(), z.cols());
    case Activation::Sigmoid: {
      Matrix<Scalar> s = apply_activation(layer, z);
      return (s.array() * (Scalar(1) - s.array()));
    }
  }
  return Matrix<Scalar>::Ones(z.rows(), z.cols());
}

}  // namespace detail

/// Per-layer pre-activations plus the input, kept for the backward pass.
template <typename Scalar>
struct ForwardCache {
  Matrix<Scalar> input;
  std::vector<Matrix<Scalar>> pre;   // z_l = W_l a_{l-1} + b_l
  std::vector<Matrix<Scalar>> post;  // a_l = act(z_l)
};

/// Batched forward pass; columns are samples.
template <typename Scalar>
Matrix<Scalar> forward(const Mlp<Scalar>& net, const Matrix<Scalar>& input) {
  if (input.rows() != net.input_dim())
    throw shape_error("forward: input width does not match first layer");
  Matrix<Scalar> a = input;
  for (const auto& layer : net.layers) {
    Matrix<Scalar> z = (layer.weight * a).colwise() + layer.bias;
    a = detail::apply_activation(layer, z);
  }
  return a;
}

template <typename Scalar>
ForwardCache<Scalar> forward_cached(const Mlp<Scalar>& net,
                                    const Matrix<Scalar>& input) {
  if (input.rows() != net.input_dim())
    throw shape_error("forward: input width does not match first layer");
  ForwardCache<Scalar> cache;
  cache.input = input;
  const Matrix<Scalar>* a = &cache.input;
  for (const auto& layer : net.layers) {
    cache.pre.push_back((layer.weight * (*a)).colwise() + layer.bias);
    cache.post.push_back(detail::apply_activation(layer, cache.pre.back()));
    a = &cache.post.back();
  }
  return cache;
}

template <typename Scalar>
struct Gradients {
  std::vector<Matrix<Scalar>> weight;
  std::vector<Vector<Scalar>> bias;
  Matrix<Scalar> input;  // dL/d(input), same shape as the batch
};

/// Exact reverse-mode gradients of the cached forward pass under upstream
/// dL/d(output).
template <typename Scalar>
Gradients<Scalar> backward(const Mlp<Scalar>& net,
                           const ForwardCache<Scalar>& cache,
                           const Matrix<Scalar>& upstream) {
  const int L = (int)net.layers.size();
  if (upstream.rows() != net.output_dim() ||
      upstream.cols() != cache.input.cols())
    throw shape_error("backward: upstream shape mismatch");
  Gradients<Scalar> g;
  g.weight.resize(L);
  g.bias.resize(L);
  Matrix<Scalar> delta = upstream;
  for (int l = L - 1; l >= 0; --l) {
    delta = delta.cwiseProduct(
        detail::activation_grad(net.layers[l], cache.pre[l]));
    const Matrix<Scalar>& below = l == 0 ? cache.input : cache.post[l - 1];
    g.weight[l].noalias() = delta * below.transpose();
    g.bias[l] = delta.rowwise().sum();
    if (l > 0)
      delta = (net.layers[l].weight.transpose() * delta).eval();
    else
      g.input.noalias() = net.layers[l].weight.transpose() * delta;
  }
  return g;
}

template <typename Scalar>
struct AdamState {
  long step = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
  std::vector<Matrix<Scalar>> m_w, v_w;
  std::vector<Vector<Scalar>> m_b, v_b;

  static AdamState zeros_like(const Mlp<Scalar>& net) {
    AdamState s;
    for (const auto& l : net.layers) {
      s.m_w.push_back(Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()));
      s.v_w.push_back(Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()));
      s.m_b.push_back(Vector<Scalar>::Zero(l.bias.size()));
      s.v_b.push_back(Vector<Scalar>::Zero(l.bias.size()));
    }
    return s;
  }
};

/// Standard Adam with bias correction. Throws on non-finite gradients.
template <typename Scalar>
void adam_step(Mlp<Scalar>& net, const Gradients<Scalar>& grads,
               AdamState<Scalar>& state, Scalar lr) {
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    if (!grads.weight[l].allFinite() || !grads.bias[l].allFinite())
      throw std::runtime_error("NonFiniteGradient");
  state.step += 1;
  const Scalar b1 = state.beta1, b2 = state.beta2;
  const Scalar c1 =
      Scalar(1) - Scalar(std::pow((double)b1, (double)state.step));
  const Scalar c2 =
      Scalar(1) - Scalar(std::pow((double)b2, (double)state.step));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
      m = b1 * m + (Scalar(1) - b1) * g;
      v = (b2 * v.array() + (Scalar(1) - b2) * g.array().square()).matrix();
      param.array() -=
          lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
    };
    update(net.layers[l].weight, state.m_w[l], state.v_w[l], grads.weight[l]);
    update(net.layers[l].bias, state.m_b[l], state.v_b[l], grads.bias[l]);
  }
}

// ---------------------------------------------------------------------------
// learning-rate schedules

struct LrSchedule {
  enum class Kind { Cosine, Cyclic } kind = Kind::Cosine;
  double lr_init = 1e-5;   // cosine start
  double lr_final = 1e-8;  // cosine end
  double lr_max = 1e-4;    // cyclic peak
  double cyclic_div = 25.0;
  long total_steps = 1;

  static LrSchedule cosine(double init, double final_, long total) {
    return {Kind::Cosine, init, final_, 0.0, 25.0, total};
  }
  static LrSchedule cyclic(double max, long total) {
    return {Kind::Cyclic, 0.0, 0.0, max, 25.0, total};
  }
};

double lr_at(const LrSchedule& schedule, long step);

// ---------------------------------------------------------------------------
// losses: mean-reduced value (float64 accumulation) + exact gradient

template <typename Scalar>
struct LossResult {
  double value = 0.0;
  Matrix<Scalar> grad;  // dL/d(pred)
};

template <typename Scalar>
LossResult<Scalar> l1_loss(const Matrix<Scalar>& pred,
                           const Matrix<Scalar>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw shape_error("l1_loss: shape mismatch");
  const double n = (double)pred.size();
  LossResult<Scalar> r;
  r.value = (pred - target).template cast<double>().array().abs().sum() / n;
  r.grad = ((pred.array() > target.array()).template cast<Scalar>() -
            (pred.array() < target.array()).template cast<Scalar>()) /
           Scalar(n);
  return r;
}

template <typename Scalar>
LossResult<Scalar> l2_loss(const Matrix<Scalar>& pred,
                           const Matrix<Scalar>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw shape_error("l2_loss: shape mismatch");
  const double n = (double)pred.size();
  LossResult<Scalar> r;
  r.value =
      (pred - target).template cast<double>().array().square().sum() / n;
  r.grad = Scalar(2) * (pred - target) / Scalar(n);
  return r;
}

template <typename Scalar>
LossResult<Scalar> bce_loss(const Matrix<Scalar>& pred,
                            const Matrix<Scalar>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw shape_error("bce_loss: shape mismatch");
  if ((pred.array() < Scalar(0)).any() || (pred.array() > Scalar(1)).any())
    throw std::domain_error("bce_loss: prediction outside (0, 1)");
  const Scalar eps = Scalar(1e-7);
  Matrix<Scalar> p = pred.array().max(eps).min(Scalar(1) - eps);
  const double n = (double)pred.size();
  LossResult<Scalar> r;
  const auto pd = p.template cast<double>().array();
  const auto td = target.template cast<double>().array();
  r.value = -(td * pd.log() + (1.0 - td) * (1.0 - pd).log()).sum() / n;
  r.grad = ((-target.array() / p.array() +
             (Scalar(1) - target.array()) / (Scalar(1) - p.array())) /
            Scalar(n));
  return r;
}

// ---------------------------------------------------------------------------

/// SIREN initialization: first layer U(-1/fan_in, 1/fan_in), later layers
/// U(+-sqrt(6/fan_in)/omega0); all hidden layers sine, last layer
/// `output_act`.
template <typename Scalar>
Mlp<Scalar> init_siren(const std::vector<int>& layer_sizes, Scalar omega0,
                       std::uint64_t rng_seed,
                       Activation output_act = Activation::Linear) {
  if (layer_sizes.size() < 2)
    throw shape_error("init_siren: need at least two layer sizes");
  std::mt19937_64 rng(rng_seed);
  Mlp<Scalar> net;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const bool first = l == 0;
    const bool last = l + 2 == layer_sizes.size();
    const double bound =
        first ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / (double)omega0;
    std::uniform_real_distribution<double> uni(-bound, bound);
    Layer<Scalar> layer;
    layer.weight.resize(fan_out, fan_in);
    layer.bias = Vector<Scalar>::Zero(fan_out);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c)
        layer.weight(r, c) = Scalar(uni(rng));
    layer.act = last ? output_act : Activation::Sine;
    layer.omega = last ? Scalar(1) : omega0;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

// Checkpoint format "RAYW" (float32 on disk); optional Adam state block.
void save_checkpoint(const std::string& path, const MlpF& net,
                     const AdamState<float>* state = nullptr);
MlpF load_checkpoint(const std::string& path,
                     AdamState<float>* state = nullptr);

}  // namespace raydf::nn
