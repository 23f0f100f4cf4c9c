#include "fbrl/fb_model.hpp"

#include <cmath>

#include "fbrl/errors.hpp"

namespace fbrl {

namespace {
inline float clipf(float v, float lo, float hi) {
  return std::min(std::max(v, lo), hi);
}
}  // namespace

float q_value(const FbModel& model, const EnvState& s, const Action& a,
              const Vecf& z, const EnvParams& params) {
  Matf xf(1, model.dims.obs_dim + model.dims.act_dim + model.dims.d);
  xf << observation(s, params).transpose(), a.accel.transpose(), z.transpose();
  const Matf f1 = net_forward(model.online.f1, xf);
  const Matf f2 = net_forward(model.online.f2, xf);
  return std::min(f1.row(0).dot(z.transpose()), f2.row(0).dot(z.transpose()));
}

Action policy_action(const FbModel& model, const EnvState& s, const Vecf& z,
                     float noise_scale, Rng& rng, const EnvParams& params) {
  Matf xa(1, model.dims.obs_dim + model.dims.d);
  xa << observation(s, params).transpose(), z.transpose();
  const Matf out = net_forward(model.online.actor, xa);
  Action act;
  for (int k = 0; k < kActDim; ++k) {
    float a = out(0, k);
    if (noise_scale > 0.0f) {
      a += noise_scale * rng.gaussianf();
    }
    act.accel[k] = clipf(a, -1.0f, 1.0f);
  }
  return act;
}

Matf target_policy_actions(const FbModel& model, const Matf& obs_next,
                           const Matf& z, float noise, float noise_clip,
                           Rng& rng) {
  const Eigen::Index n = obs_next.rows();
  Matf xa(n, obs_next.cols() + z.cols());
  xa << obs_next, z;
  Matf actions = net_forward(model.target.actor, xa);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < actions.cols(); ++k) {
      float eps = clipf(noise * rng.gaussianf(), -noise_clip, noise_clip);
      actions(i, k) = clipf(actions(i, k) + eps, -1.0f, 1.0f);
    }
  }
  return actions;
}

LatentZ infer_task_embedding(const FbModel& model, const Matf& phi,
                             const Vecf& rewards) {
  if (phi.rows() < 1 || phi.rows() != rewards.size()) {
    throw UsageError("infer_task_embedding: need matching non-empty samples");
  }
  const int d = model.dims.d;
  Vecd accum = Vecd::Zero(d);
  // Chunked evaluation keeps peak memory flat for large sample sets.
  const Eigen::Index chunk = 8192;
  for (Eigen::Index start = 0; start < phi.rows(); start += chunk) {
    const Eigen::Index count = std::min(chunk, phi.rows() - start);
    const Matf b = net_forward(model.online.b,
                               Matf(phi.middleRows(start, count)));
    for (Eigen::Index i = 0; i < count; ++i) {
      accum += static_cast<double>(rewards[start + i]) *
               b.row(i).transpose().cast<double>();
    }
  }
  accum /= static_cast<double>(phi.rows());
  const double norm = accum.norm();
  // Rewards can be astronomically small on hard tasks; the direction is
  // still well defined in 64-bit. Only a vanishing embedding is degenerate.
  if (!(norm > 1e-300)) {
    throw DegenerateTaskError(
        "infer_task_embedding: reward embedding has zero norm");
  }
  LatentZ out;
  out.z = (std::sqrt(static_cast<double>(d)) / norm * accum).cast<float>();
  out.source = ZSource::kInferred;
  return out;
}

}  // namespace fbrl
