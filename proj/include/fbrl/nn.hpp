#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fbrl/errors.hpp"
#include "fbrl/rng.hpp"

namespace fbrl {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matf = MatX<float>;
using Vecf = VecX<float>;
using Matd = MatX<double>;
using Vecd = VecX<double>;

enum class Activation { kRelu, kTanh, kLinear };

// Dense feed-forward network with analytically coded gradients. Templated on
// the scalar so training runs in float while gradient checks instantiate the
// same code at double precision. Batches are row-major conceptually: one row
// per sample, layer maps (n x in) -> (n x out) via y = act(x W^T + b).
template <typename S>
struct DenseLayerT {
  MatX<S> weight;  // (out x in)
  VecX<S> bias;    // (out)
  Activation act = Activation::kLinear;
};

template <typename S>
struct DenseNetT {
  std::string name;
  std::vector<DenseLayerT<S>> layers;

  Eigen::Index input_width() const { return layers.front().weight.cols(); }
  Eigen::Index output_width() const { return layers.back().weight.rows(); }

  Eigen::Index param_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }
};

using DenseNet = DenseNetT<float>;

template <typename S>
inline void apply_activation(Activation act, MatX<S>& m) {
  switch (act) {
    case Activation::kRelu:
      m = m.cwiseMax(S(0));
      break;
    case Activation::kTanh:
      m = m.array().tanh().matrix();
      break;
    case Activation::kLinear:
      break;
  }
}

// Derivative of the activation given pre-activation z and output y.
// relu subgradient at 0 is 0.
template <typename S>
inline MatX<S> activation_grad(Activation act, const MatX<S>& pre,
                               const MatX<S>& out) {
  switch (act) {
    case Activation::kRelu:
      return (pre.array() > S(0)).template cast<S>().matrix();
    case Activation::kTanh:
      return (S(1) - out.array().square()).matrix();
    case Activation::kLinear:
      return MatX<S>::Ones(pre.rows(), pre.cols());
  }
  return MatX<S>();
}

// Weights uniform in +-1/sqrt(fan_in), zero bias. Draw order is fixed
// (layer by layer, column-major over the weight storage) so initialization
// is reproducible from the rng state alone.
template <typename S>
DenseNetT<S> make_mlp(std::string name, Eigen::Index input,
                      const std::vector<int>& hidden, Eigen::Index output,
                      Activation hidden_act, Activation output_act, Rng& rng) {
  DenseNetT<S> net;
  net.name = std::move(name);
  std::vector<Eigen::Index> widths;
  widths.push_back(input);
  for (int h : hidden) widths.push_back(h);
  widths.push_back(output);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseLayerT<S> layer;
    layer.weight.resize(widths[i + 1], widths[i]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[i]));
    for (Eigen::Index k = 0; k < layer.weight.size(); ++k) {
      layer.weight.data()[k] = static_cast<S>(rng.uniform(-bound, bound));
    }
    layer.bias = VecX<S>::Zero(widths[i + 1]);
    layer.act = (i + 2 == widths.size()) ? output_act : hidden_act;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

// Activations cached by a forward pass, consumed by net_backward.
// act[0] is the input; act[i+1] / pre[i] belong to layer i.
template <typename S>
struct ForwardCacheT {
  std::vector<MatX<S>> pre;
  std::vector<MatX<S>> act;
};

using ForwardCache = ForwardCacheT<float>;

template <typename S>
MatX<S> net_forward(const DenseNetT<S>& net, const MatX<S>& x,
                    ForwardCacheT<S>* cache = nullptr) {
  if (x.cols() != net.input_width()) {
    throw ConfigError("net_forward: input width " + std::to_string(x.cols()) +
                      " does not match " + net.name + " input width " +
                      std::to_string(net.input_width()));
  }
  if (cache != nullptr) {
    cache->pre.clear();
    cache->act.clear();
    cache->act.push_back(x);
  }
  MatX<S> h = x;
  for (const auto& layer : net.layers) {
    MatX<S> pre = h * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    if (cache != nullptr) cache->pre.push_back(pre);
    apply_activation(layer.act, pre);
    h = std::move(pre);
    if (cache != nullptr) cache->act.push_back(h);
  }
  return h;
}

template <typename S>
struct NetGradsT {
  std::vector<MatX<S>> dweight;
  std::vector<VecX<S>> dbias;
};

using NetGrads = NetGradsT<float>;

template <typename S>
NetGradsT<S> make_zero_grads(const DenseNetT<S>& net) {
  NetGradsT<S> g;
  for (const auto& l : net.layers) {
    g.dweight.push_back(MatX<S>::Zero(l.weight.rows(), l.weight.cols()));
    g.dbias.push_back(VecX<S>::Zero(l.bias.size()));
  }
  return g;
}

// Backward pass through the cached activations. Accumulates parameter
// gradients into `grads` when non-null and returns the input gradient.
template <typename S>
MatX<S> net_backward(const DenseNetT<S>& net, const ForwardCacheT<S>& cache,
                     const MatX<S>& output_grad, NetGradsT<S>* grads) {
  if (cache.pre.size() != net.layers.size()) {
    throw ConfigError("net_backward: cache does not match " + net.name);
  }
  MatX<S> delta = output_grad;
  for (int i = static_cast<int>(net.layers.size()) - 1; i >= 0; --i) {
    const auto& layer = net.layers[static_cast<std::size_t>(i)];
    delta = delta.cwiseProduct(
        activation_grad<S>(layer.act, cache.pre[i], cache.act[i + 1]));
    if (grads != nullptr) {
      grads->dweight[i].noalias() += delta.transpose() * cache.act[i];
      grads->dbias[i] += delta.colwise().sum().transpose();
    }
    delta = delta * layer.weight;
  }
  return delta;
}

// ---------------------------------------------------------------------------
// Adam

template <typename S>
struct AdamStateT {
  std::vector<MatX<S>> mw, vw;
  std::vector<VecX<S>> mb, vb;
  std::int64_t t = 0;
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
};

using AdamState = AdamStateT<float>;

template <typename S>
AdamStateT<S> make_adam(const DenseNetT<S>& net) {
  AdamStateT<S> st;
  for (const auto& l : net.layers) {
    st.mw.push_back(MatX<S>::Zero(l.weight.rows(), l.weight.cols()));
    st.vw.push_back(MatX<S>::Zero(l.weight.rows(), l.weight.cols()));
    st.mb.push_back(VecX<S>::Zero(l.bias.size()));
    st.vb.push_back(VecX<S>::Zero(l.bias.size()));
  }
  return st;
}

namespace detail {
template <typename S, typename Arr>
void adam_update(Arr& p, Arr& m, Arr& v, const Arr& g, S lr, S b1, S b2, S eps,
                 std::int64_t t) {
  m = b1 * m + (S(1) - b1) * g;
  v = (b2 * v.array() + (S(1) - b2) * g.array().square()).matrix();
  const S c1 = S(1) / (S(1) - static_cast<S>(std::pow(double(b1), double(t))));
  const S c2 = S(1) / (S(1) - static_cast<S>(std::pow(double(b2), double(t))));
  p.array() -= lr * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
}
}  // namespace detail

// One bias-corrected Adam step over every layer of `net`.
template <typename S>
void adam_step(AdamStateT<S>& state, DenseNetT<S>& net,
               const NetGradsT<S>& grads, S lr) {
  if (!(lr > S(0))) throw ConfigError("adam_step: lr must be positive");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!grads.dweight[i].allFinite() || !grads.dbias[i].allFinite()) {
      throw TrainingError("adam_step: non-finite gradient for " + net.name +
                          "/layer" + std::to_string(i));
    }
  }
  ++state.t;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    detail::adam_update(net.layers[i].weight, state.mw[i], state.vw[i],
                        grads.dweight[i], lr, state.beta1, state.beta2,
                        state.eps, state.t);
    detail::adam_update(net.layers[i].bias, state.mb[i], state.vb[i],
                        grads.dbias[i], lr, state.beta1, state.beta2, state.eps,
                        state.t);
  }
}

// target <- tau * online + (1 - tau) * target, elementwise.
template <typename S>
void soft_update(DenseNetT<S>& target, const DenseNetT<S>& online, S tau) {
  if (target.layers.size() != online.layers.size()) {
    throw ConfigError("soft_update: layer count mismatch for " + target.name);
  }
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    auto& t = target.layers[i];
    const auto& o = online.layers[i];
    if (t.weight.rows() != o.weight.rows() ||
        t.weight.cols() != o.weight.cols()) {
      throw ConfigError("soft_update: shape mismatch for " + target.name);
    }
    t.weight = tau * o.weight + (S(1) - tau) * t.weight;
    t.bias = tau * o.bias + (S(1) - tau) * t.bias;
  }
}

// ---------------------------------------------------------------------------
// Parameter flattening (checkpoints, gradient checks)

template <typename S>
void flatten_params(const DenseNetT<S>& net, std::vector<S>& out) {
  for (const auto& l : net.layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
}

template <typename S>
void unflatten_params(DenseNetT<S>& net, const std::vector<S>& flat,
                      std::size_t& pos) {
  for (auto& l : net.layers) {
    std::copy(flat.begin() + pos, flat.begin() + pos + l.weight.size(),
              l.weight.data());
    pos += l.weight.size();
    std::copy(flat.begin() + pos, flat.begin() + pos + l.bias.size(),
              l.bias.data());
    pos += l.bias.size();
  }
}

template <typename S>
void flatten_grads(const NetGradsT<S>& g, std::vector<S>& out) {
  for (std::size_t i = 0; i < g.dweight.size(); ++i) {
    out.insert(out.end(), g.dweight[i].data(),
               g.dweight[i].data() + g.dweight[i].size());
    out.insert(out.end(), g.dbias[i].data(),
               g.dbias[i].data() + g.dbias[i].size());
  }
}

template <typename Src, typename Dst>
DenseNetT<Dst> cast_net(const DenseNetT<Src>& net) {
  DenseNetT<Dst> out;
  out.name = net.name;
  for (const auto& l : net.layers) {
    DenseLayerT<Dst> layer;
    layer.weight = l.weight.template cast<Dst>();
    layer.bias = l.bias.template cast<Dst>();
    layer.act = l.act;
    out.layers.push_back(std::move(layer));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checker (64-bit)

struct GradReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool pass = false;
};

struct GradCheckTarget {
  // Deterministic loss and its analytic gradient over a flat parameter
  // vector. Any stop-gradient quantities must be baked into the closure so
  // both views differentiate the same function.
  std::function<double(const std::vector<double>&)> loss;
  std::function<std::vector<double>(const std::vector<double>&)> analytic_grad;
};

// Central differences with per-parameter step h = 1e-5 * max(1, |p|).
// Relative error uses denominator max(|analytic|, |fd|, 1e-6) so near-zero
// gradients are compared at a matching absolute scale.
inline GradReport grad_check(const GradCheckTarget& target,
                             std::vector<double> params, double tol) {
  GradReport report;
  const std::vector<double> analytic = target.analytic_grad(params);
  report.checked = params.size();
  bool finite = true;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(params[i]));
    const double saved = params[i];
    params[i] = saved + h;
    const double up = target.loss(params);
    params[i] = saved - h;
    const double down = target.loss(params);
    params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    if (!std::isfinite(fd) || !std::isfinite(analytic[i])) {
      finite = false;
      report.max_rel_error = std::numeric_limits<double>::infinity();
      report.worst_index = i;
      continue;
    }
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(fd), 1e-6});
    const double rel = std::abs(analytic[i] - fd) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.pass = finite && report.max_rel_error < tol;
  return report;
}

}  // namespace fbrl
