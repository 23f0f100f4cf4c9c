#include "fbrl/flow.hpp"

#include <algorithm>
#include <cmath>

#include "fbrl/errors.hpp"

namespace fbrl {

std::vector<double> flow_fit(FlowModel& flow, const Matf& samples_raw,
                             const FlowFitParams& params, std::uint64_t seed) {
  if (samples_raw.rows() < 1) {
    throw ConfigError("flow_fit: need at least one sample");
  }
  Rng rng(seed);
  const int dim = flow.dim;
  const auto n = samples_raw.rows();

  // Whitening statistics from the training set, std floored for stability.
  flow.whiten_mean = samples_raw.colwise().mean().transpose();
  Vecf var = Vecf::Zero(dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vecf diff = samples_raw.row(i).transpose() - flow.whiten_mean;
    var += diff.cwiseProduct(diff);
  }
  var /= static_cast<float>(n);
  flow.whiten_scale = var.cwiseSqrt().cwiseMax(1e-3f);

  Matf xw = (samples_raw.rowwise() - flow.whiten_mean.transpose()).array()
                .rowwise() /
            flow.whiten_scale.transpose().array();

  // From-scratch re-init: identity stack, fresh Adam state.
  const int num_layers = static_cast<int>(flow.layers.size());
  FlowModel fresh = make_flow<float>(dim, num_layers, flow.hidden, rng);
  fresh.whiten_mean = flow.whiten_mean;
  fresh.whiten_scale = flow.whiten_scale;
  flow.layers = std::move(fresh.layers);

  std::vector<AdamState> adam_scale, adam_shift;
  for (const auto& layer : flow.layers) {
    adam_scale.push_back(make_adam(layer.scale));
    adam_shift.push_back(make_adam(layer.shift));
  }

  double whiten_logdet = 0.0;
  for (int j = 0; j < dim; ++j) {
    whiten_logdet += std::log(static_cast<double>(flow.whiten_scale[j]));
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> trace;
  const auto lr = static_cast<float>(params.lr);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    // Fisher-Yates shuffle from the fit rng.
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.bounded(i));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_nll = 0.0;
    std::size_t rows_done = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t count = std::min<std::size_t>(
          static_cast<std::size_t>(params.batch_size), order.size() - start);
      Matf batch(static_cast<Eigen::Index>(count), dim);
      for (std::size_t i = 0; i < count; ++i) {
        batch.row(static_cast<Eigen::Index>(i)) =
            xw.row(static_cast<Eigen::Index>(order[start + i]));
      }
      std::vector<DenseNet> backup_scale, backup_shift;
      backup_scale.reserve(flow.layers.size());
      backup_shift.reserve(flow.layers.size());
      for (const auto& layer : flow.layers) {
        backup_scale.push_back(layer.scale);
        backup_shift.push_back(layer.shift);
      }
      FlowGrads<float> grads = make_flow_grads(flow);
      double nll = 0.0;
      bool ok = true;
      try {
        nll = flow_nll(flow, batch, &grads);
        if (!std::isfinite(nll)) ok = false;
        if (ok) {
          for (std::size_t l = 0; l < flow.layers.size(); ++l) {
            adam_step(adam_scale[l], flow.layers[l].scale, grads.scale[l], lr);
            adam_step(adam_shift[l], flow.layers[l].shift, grads.shift[l], lr);
          }
        }
      } catch (const Error&) {
        ok = false;
      }
      if (!ok) {
        for (std::size_t l = 0; l < flow.layers.size(); ++l) {
          flow.layers[l].scale = backup_scale[l];
          flow.layers[l].shift = backup_shift[l];
        }
        flow.fitted = true;
        return trace;  // abort, last good parameters retained
      }
      epoch_nll += nll * static_cast<double>(count);
      rows_done += count;
    }
    trace.push_back(epoch_nll / static_cast<double>(rows_done) +
                    whiten_logdet);
  }
  flow.fitted = true;
  return trace;
}

}  // namespace fbrl
