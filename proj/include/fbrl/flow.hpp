#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "fbrl/nn.hpp"
#include "fbrl/rng.hpp"

namespace fbrl {

// RealNVP-style affine coupling stack with a standard Gaussian base.
// Layer l freezes the coordinates where mask = 1 and transforms the rest:
//   y = mask .* x + (1 - mask) .* (x .* exp(s(mask .* x)) + t(mask .* x))
// with tanh-bounded scale outputs, so every layer is invertible in closed
// form and log|det J| is the sum of active scale outputs. For 2-D inputs
// the alternating checkerboard and channel masks coincide with plain
// coordinate alternation, which is what the constructor builds.
template <typename S>
struct CouplingLayerT {
  DenseNetT<S> scale;  // final activation tanh
  DenseNetT<S> shift;  // final activation linear
  VecX<S> mask;        // 1 = pass-through coordinate
};

template <typename S>
struct FlowModelT {
  std::vector<CouplingLayerT<S>> layers;
  VecX<S> whiten_mean;   // applied to raw inputs before the stack
  VecX<S> whiten_scale;  // strictly positive
  bool fitted = false;
  int dim = 0;
  int hidden = 64;
};

using FlowModel = FlowModelT<float>;

struct FlowFitParams {
  double lr = 1e-3;
  int batch_size = 256;
  int epochs = 30;
};

// Scale/shift subnets start at zero output so the stack begins as the
// identity map.
template <typename S>
FlowModelT<S> make_flow(int dim, int num_layers, int hidden, Rng& rng) {
  FlowModelT<S> flow;
  flow.dim = dim;
  flow.hidden = hidden;
  flow.whiten_mean = VecX<S>::Zero(dim);
  flow.whiten_scale = VecX<S>::Ones(dim);
  for (int l = 0; l < num_layers; ++l) {
    CouplingLayerT<S> layer;
    layer.scale = make_mlp<S>("flow/scale" + std::to_string(l), dim, {hidden},
                              dim, Activation::kRelu, Activation::kTanh, rng);
    layer.shift =
        make_mlp<S>("flow/shift" + std::to_string(l), dim, {hidden}, dim,
                    Activation::kRelu, Activation::kLinear, rng);
    layer.scale.layers.back().weight.setZero();
    layer.scale.layers.back().bias.setZero();
    layer.shift.layers.back().weight.setZero();
    layer.shift.layers.back().bias.setZero();
    layer.mask = VecX<S>::Zero(dim);
    for (int j = 0; j < dim; ++j) {
      layer.mask[j] = ((j + l) % 2 == 0) ? S(1) : S(0);
    }
    flow.layers.push_back(std::move(layer));
  }
  return flow;
}

template <typename S>
struct FlowForwardResult {
  MatX<S> u;         // (n x dim)
  VecX<S> log_det;   // (n)
};

// Per-layer caches kept for the NLL backward pass.
template <typename S>
struct FlowCacheT {
  std::vector<MatX<S>> x_in;          // input to each layer
  std::vector<MatX<S>> s_raw;         // scale-net outputs
  std::vector<ForwardCacheT<S>> scale_cache;
  std::vector<ForwardCacheT<S>> shift_cache;
};

// Coupling stack only; callers feed whitened coordinates.
template <typename S>
FlowForwardResult<S> flow_forward(const FlowModelT<S>& flow, const MatX<S>& x,
                                  FlowCacheT<S>* cache = nullptr) {
  if (!x.allFinite()) throw NumericError("flow_forward: non-finite input");
  FlowForwardResult<S> out;
  out.log_det = VecX<S>::Zero(x.rows());
  MatX<S> h = x;
  for (const auto& layer : flow.layers) {
    const MatX<S> masked =
        h.array().rowwise() * layer.mask.transpose().array();
    ForwardCacheT<S> sc, tc;
    const MatX<S> s_raw =
        net_forward(layer.scale, masked, cache != nullptr ? &sc : nullptr);
    const MatX<S> t_raw =
        net_forward(layer.shift, masked, cache != nullptr ? &tc : nullptr);
    if (cache != nullptr) {
      cache->x_in.push_back(h);
      cache->s_raw.push_back(s_raw);
      cache->scale_cache.push_back(std::move(sc));
      cache->shift_cache.push_back(std::move(tc));
    }
    const auto active = (VecX<S>::Ones(flow.dim) - layer.mask).transpose();
    MatX<S> transformed =
        (h.array() * s_raw.array().exp() + t_raw.array()).matrix();
    h = masked +
        (transformed.array().rowwise() * active.array()).matrix();
    out.log_det += (s_raw.array().rowwise() * active.array())
                       .matrix()
                       .rowwise()
                       .sum();
  }
  out.u = std::move(h);
  return out;
}

// Exact inverse: layers unwound in reverse order.
template <typename S>
MatX<S> flow_inverse(const FlowModelT<S>& flow, const MatX<S>& u) {
  MatX<S> h = u;
  for (auto it = flow.layers.rbegin(); it != flow.layers.rend(); ++it) {
    const auto& layer = *it;
    const MatX<S> masked =
        h.array().rowwise() * layer.mask.transpose().array();
    const MatX<S> s_raw = net_forward(layer.scale, masked);
    const MatX<S> t_raw = net_forward(layer.shift, masked);
    const auto active = (VecX<S>::Ones(flow.dim) - layer.mask).transpose();
    MatX<S> restored =
        ((h.array() - t_raw.array()) * (-s_raw.array()).exp()).matrix();
    h = masked + (restored.array().rowwise() * active.array()).matrix();
  }
  return h;
}

// log q(x) for raw inputs: whitening, base Gaussian and the accumulated
// Jacobian terms, including the whitening correction.
template <typename S>
VecX<S> log_density(const FlowModelT<S>& flow, const MatX<S>& x_raw) {
  MatX<S> xw = (x_raw.rowwise() - flow.whiten_mean.transpose()).array()
                   .rowwise() /
               flow.whiten_scale.transpose().array();
  const FlowForwardResult<S> fwd = flow_forward(flow, xw);
  const S log2pi = static_cast<S>(std::log(2.0 * std::numbers::pi));
  S whiten_logdet = S(0);
  for (int j = 0; j < flow.dim; ++j) {
    whiten_logdet -= std::log(flow.whiten_scale[j]);
  }
  VecX<S> out =
      (-S(0.5) * fwd.u.array().square().rowwise().sum() -
       S(0.5) * S(flow.dim) * log2pi)
          .matrix();
  out += fwd.log_det;
  out.array() += whiten_logdet;
  return out;
}

template <typename S>
struct FlowGrads {
  std::vector<NetGradsT<S>> scale;
  std::vector<NetGradsT<S>> shift;
};

template <typename S>
FlowGrads<S> make_flow_grads(const FlowModelT<S>& flow) {
  FlowGrads<S> g;
  for (const auto& layer : flow.layers) {
    g.scale.push_back(make_zero_grads(layer.scale));
    g.shift.push_back(make_zero_grads(layer.shift));
  }
  return g;
}

// Mean negative log-likelihood over whitened inputs plus its gradient with
// respect to the subnet parameters. The whitening constant is excluded: it
// does not depend on the parameters.
template <typename S>
double flow_nll(const FlowModelT<S>& flow, const MatX<S>& xw,
                FlowGrads<S>* grads) {
  const auto n = xw.rows();
  FlowCacheT<S> cache;
  const FlowForwardResult<S> fwd =
      flow_forward(flow, xw, grads != nullptr ? &cache : nullptr);
  const S log2pi = static_cast<S>(std::log(2.0 * std::numbers::pi));
  double nll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    nll += 0.5 * static_cast<double>(fwd.u.row(i).squaredNorm()) +
           0.5 * flow.dim * static_cast<double>(log2pi) -
           static_cast<double>(fwd.log_det[i]);
  }
  nll /= static_cast<double>(n);
  if (grads == nullptr) return nll;

  const S inv_n = S(1) / static_cast<S>(n);
  // dL/du = u / n; each layer's log-det contributes -1/n per active scale.
  MatX<S> dy = fwd.u * inv_n;
  for (int l = static_cast<int>(flow.layers.size()) - 1; l >= 0; --l) {
    const auto& layer = flow.layers[static_cast<std::size_t>(l)];
    const MatX<S>& x = cache.x_in[l];
    const MatX<S>& s_raw = cache.s_raw[l];
    const auto active =
        (VecX<S>::Ones(flow.dim) - layer.mask).transpose();
    const MatX<S> exp_s = s_raw.array().exp().matrix();

    MatX<S> dy_active =
        (dy.array().rowwise() * active.array()).matrix();
    MatX<S> ds =
        (dy_active.array() * x.array() * exp_s.array()).matrix();
    ds.array().rowwise() -= active.array() * inv_n;  // -log_det term
    ds = (ds.array().rowwise() * active.array()).matrix();
    MatX<S> dt = dy_active;

    MatX<S> dmasked_s =
        net_backward(layer.scale, cache.scale_cache[l], ds,
                     grads != nullptr ? &grads->scale[l] : nullptr);
    MatX<S> dmasked_t =
        net_backward(layer.shift, cache.shift_cache[l], dt,
                     grads != nullptr ? &grads->shift[l] : nullptr);

    MatX<S> dx =
        (dy_active.array() * exp_s.array()).matrix();  // active coords
    MatX<S> dx_masked =
        ((dy + dmasked_s + dmasked_t).array().rowwise() *
         layer.mask.transpose().array())
            .matrix();
    dy = dx_masked +
         (dx.array().rowwise() * active.array()).matrix();
  }
  return nll;
}

// Maximum-likelihood fit on raw samples. Refits from scratch on every call:
// fresh identity-initialized subnets, fresh optimizer, fresh whitening
// statistics. Deterministic given the seed. Returns the per-epoch mean NLL
// (in nats, whitening correction included). A non-finite minibatch aborts
// the fit with the parameters from before that minibatch retained.
std::vector<double> flow_fit(FlowModel& flow, const Matf& samples_raw,
                             const FlowFitParams& params, std::uint64_t seed);

}  // namespace fbrl
