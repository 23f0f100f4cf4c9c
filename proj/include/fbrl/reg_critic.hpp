#pragma once

#include "fbrl/env.hpp"
#include "fbrl/nn.hpp"

namespace fbrl {

// Behavior-regularizer critic: twin scalar networks on (s, a) estimating
// the discounted return of the regularization reward, with target copies.
// Consumed min-twin by the regularized actor loss.
template <typename S>
struct RegCriticT {
  DenseNetT<S> q1, q2;
  DenseNetT<S> q1_target, q2_target;
};

using RegCritic = RegCriticT<float>;

template <typename S>
RegCriticT<S> make_reg_critic(int obs_dim, int act_dim,
                              const std::vector<int>& hidden, Rng& rng) {
  RegCriticT<S> c;
  c.q1 = make_mlp<S>("qreg1", obs_dim + act_dim, hidden, 1, Activation::kRelu,
                     Activation::kLinear, rng);
  c.q2 = make_mlp<S>("qreg2", obs_dim + act_dim, hidden, 1, Activation::kRelu,
                     Activation::kLinear, rng);
  c.q1_target = c.q1;
  c.q2_target = c.q2;
  c.q1_target.name = "qreg1_target";
  c.q2_target.name = "qreg2_target";
  return c;
}

template <typename S>
S q_reg(const RegCriticT<S>& critic, const MatX<S>& obs_act_row) {
  const MatX<S> v1 = net_forward(critic.q1, obs_act_row);
  const MatX<S> v2 = net_forward(critic.q2, obs_act_row);
  return std::min(v1(0, 0), v2(0, 0));
}

inline float q_reg(const RegCritic& critic, const EnvState& s, const Action& a,
                   const EnvParams& params = {}) {
  Matf x(1, kObsDim + kActDim);
  x << observation(s, params).transpose(), a.accel.transpose();
  return q_reg<float>(critic, x);
}

// Standard TD loss against the shared target r_reg + gamma * min-twin
// target value at (s', a'), a' from the smoothed target policy. Both twins
// regress on the same target; the target path carries no gradient.
template <typename S>
double reg_critic_loss(const RegCriticT<S>& critic, const MatX<S>& obs,
                       const MatX<S>& act, const VecX<S>& reg_reward,
                       const MatX<S>& obs_next, const MatX<S>& act_next,
                       S gamma, NetGradsT<S>* g1, NetGradsT<S>* g2) {
  const Eigen::Index n = obs.rows();
  const S inv_n = S(1) / static_cast<S>(n);

  MatX<S> xq(n, obs.cols() + act.cols());
  xq << obs, act;
  MatX<S> xq_next(n, obs.cols() + act.cols());
  xq_next << obs_next, act_next;

  ForwardCacheT<S> cache1, cache2;
  const VecX<S> v1 = net_forward(critic.q1, xq, &cache1).col(0);
  const VecX<S> v2 = net_forward(critic.q2, xq, &cache2).col(0);
  const VecX<S> t1 = net_forward(critic.q1_target, xq_next).col(0);
  const VecX<S> t2 = net_forward(critic.q2_target, xq_next).col(0);
  const VecX<S> target = reg_reward + gamma * t1.cwiseMin(t2);

  const VecX<S> d1 = v1 - target;
  const VecX<S> d2 = v2 - target;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    loss += static_cast<double>(d1[i]) * static_cast<double>(d1[i]) +
            static_cast<double>(d2[i]) * static_cast<double>(d2[i]);
  }
  loss /= 2.0 * static_cast<double>(n);
  if (!std::isfinite(loss)) {
    throw TrainingError("reg_critic_loss: non-finite loss");
  }
  if (g1 != nullptr) {
    net_backward(critic.q1, cache1, MatX<S>(inv_n * d1), g1);
  }
  if (g2 != nullptr) {
    net_backward(critic.q2, cache2, MatX<S>(inv_n * d2), g2);
  }
  return loss;
}

}  // namespace fbrl
