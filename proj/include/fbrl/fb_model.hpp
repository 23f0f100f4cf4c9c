#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "fbrl/env.hpp"
#include "fbrl/nn.hpp"
#include "fbrl/rng.hpp"

namespace fbrl {

enum class ZSource { kUniform, kGoal, kInferred };

// Task embedding on the radius-sqrt(d) hypersphere.
struct LatentZ {
  Vecf z;
  ZSource source = ZSource::kUniform;
};

struct FbDims {
  int obs_dim = kObsDim;
  int act_dim = kActDim;
  int proj_dim = kProjDim;
  int d = 16;
  std::vector<int> f_hidden = {64, 64};
  std::vector<int> b_hidden = {64, 64};
  std::vector<int> actor_hidden = {64, 64};
};

// Forward-backward representation: twin forward maps F1, F2 on (s, a, z),
// backward map B on the behavior projection phi(s), a tanh-bounded actor on
// (s, z), and target copies of all four. Twin aggregation is min throughout.
template <typename S>
struct FbNetsT {
  DenseNetT<S> f1, f2, b, actor;
};

template <typename S>
struct FbModelT {
  FbNetsT<S> online;
  FbNetsT<S> target;
  FbDims dims;
};

using FbNets = FbNetsT<float>;
using FbModel = FbModelT<float>;

template <typename S>
FbModelT<S> make_fb_model(const FbDims& dims, Rng& rng) {
  FbModelT<S> m;
  m.dims = dims;
  const int f_in = dims.obs_dim + dims.act_dim + dims.d;
  m.online.f1 = make_mlp<S>("f1", f_in, dims.f_hidden, dims.d,
                            Activation::kRelu, Activation::kLinear, rng);
  m.online.f2 = make_mlp<S>("f2", f_in, dims.f_hidden, dims.d,
                            Activation::kRelu, Activation::kLinear, rng);
  m.online.b = make_mlp<S>("b", dims.proj_dim, dims.b_hidden, dims.d,
                           Activation::kRelu, Activation::kLinear, rng);
  m.online.actor =
      make_mlp<S>("actor", dims.obs_dim + dims.d, dims.actor_hidden,
                  dims.act_dim, Activation::kRelu, Activation::kTanh, rng);
  m.target = m.online;
  m.target.f1.name = "f1_target";
  m.target.f2.name = "f2_target";
  m.target.b.name = "b_target";
  m.target.actor.name = "actor_target";
  return m;
}

// Gaussian draws renormalized to ||z|| = sqrt(d). Row-major draw order.
template <typename S>
MatX<S> sample_uniform_sphere(int d, Eigen::Index count, Rng& rng) {
  MatX<S> z(count, d);
  const S radius = static_cast<S>(std::sqrt(static_cast<double>(d)));
  for (Eigen::Index i = 0; i < count; ++i) {
    S norm = S(0);
    do {
      for (int j = 0; j < d; ++j) z(i, j) = static_cast<S>(rng.gaussian());
      norm = z.row(i).norm();
    } while (!(norm > S(0)));
    z.row(i) *= radius / norm;
  }
  return z;
}

struct FbLossCoeffs {
  double gamma = 0.98;
  double ortho_coef = 100.0;
  double fz_coef = 0.1;
  double sigma_ridge = 1e-5;
};

// One training batch in network coordinates. act_next holds the smoothed
// target-policy actions a' so the loss itself is deterministic.
template <typename S>
struct FbBatchT {
  MatX<S> obs;       // (n x obs_dim)          s
  MatX<S> act;       // (n x act_dim)          a
  MatX<S> obs_next;  // (n x obs_dim)          s'
  MatX<S> act_next;  // (n x act_dim)          a' ~ target policy at (s', z)
  MatX<S> phi_next;  // (n x proj_dim)         phi(s')
  MatX<S> phi_plus;  // (n x proj_dim)         phi(s+)
  MatX<S> z;         // (n x d)
  VecX<S> reg_reward;  // (n)
};

using FbBatch = FbBatchT<float>;

struct FbLossTerms {
  double main = 0.0;
  double ortho = 0.0;
  double fz = 0.0;
  double total = 0.0;
};

template <typename S>
struct FbLossGradsT {
  NetGradsT<S> f1, f2, b;
};

// Stop-gradient islands that depend on online parameters. When frozen terms
// are supplied the loss uses them verbatim, which lets finite-difference
// checks differentiate exactly the function the analytic gradients describe.
// Left empty, they are recomputed from the current parameters (the training
// path), which yields the same values at the base point.
template <typename S>
struct FbFrozenT {
  VecX<S> fz_reward;      // B(s')^T Sigma_B^{-1} z per row
  MatX<S> ortho_anchor;   // detached B(s+) rows for the diagonal term
};

// Orthonormality penalty on a batch of embeddings:
//   mean_{i != j} (e_i^T e_j)^2 - 2 mean_i e_i^T sg(e_i)
// The diagonal term differentiates against the detached anchor (defaults to
// the embeddings themselves). Returns the value; accumulates d/de into
// `grad` when non-null.
template <typename S>
double ortho_loss(const MatX<S>& e, const MatX<S>* anchor = nullptr,
                  MatX<S>* grad = nullptr) {
  const Eigen::Index n = e.rows();
  if (n < 1) throw UsageError("ortho_loss: empty batch");
  const MatX<S>& a = (anchor != nullptr) ? *anchor : e;
  const MatX<S> gram = e * e.transpose();
  double off = 0.0, diag = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      off += static_cast<double>(gram(i, j)) * static_cast<double>(gram(i, j));
    }
    diag += static_cast<double>(e.row(i).dot(a.row(i)));
  }
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1);
  const double value =
      (n > 1 ? off / pairs : 0.0) - 2.0 * diag / static_cast<double>(n);
  if (grad != nullptr) {
    const S inv_n = S(1) / static_cast<S>(n);
    if (n > 1) {
      MatX<S> gram0 = gram;
      gram0.diagonal().setZero();
      grad->noalias() += (S(4) / static_cast<S>(pairs)) * (gram0 * e);
    }
    *grad -= S(2) * inv_n * a;
  }
  return value;
}

// Contrastive TD loss plus orthonormality and Fz regularizers:
//   main  = mean_{k,i} (F_k(s,a,z)^T B(s+) - gamma * min_j Fbar_j^T Bbar(s+))^2
//           - 2 * mean_{k,i} F_k(s,a,z)^T B(s')
//   ortho = mean_{i != j} (B_i^T B_j)^2 - 2 * mean_i B_i^T sg(B_i)   on B(s+)
//   fz    = mean_{k,i} (F_k^T z - sg(r_z) - gamma * min_j Fbar_j^T z)^2 / ...
// with r_z = B(s')^T Sigma_B^{-1} z and Sigma_B the ridge-regularized batch
// covariance of B(s+). Squared terms are averaged over rows and the two
// parallel F networks; target paths carry no gradient.
template <typename S>
FbLossTerms fb_loss(const FbModelT<S>& model, const FbBatchT<S>& batch,
                    const FbLossCoeffs& coeffs, FbLossGradsT<S>* grads,
                    const FbFrozenT<S>* frozen = nullptr,
                    FbFrozenT<S>* frozen_out = nullptr);

// -(1/n) sum_i [ min_k F_k(s, pi(s,z), z)^T z + lambda_reg * q_reg_i ] where
// q_reg_i are min-twin regularizer critic values evaluated at the actor's
// action, with their action-gradients supplied by the caller (zero when
// lambda_reg = 0). Returns the loss; accumulates actor parameter gradients.
template <typename S>
double actor_loss_with_qreg(const FbModelT<S>& model, const MatX<S>& obs,
                            const MatX<S>& z, S lambda_reg,
                            const DenseNetT<S>* qreg1,
                            const DenseNetT<S>* qreg2,
                            NetGradsT<S>* actor_grads);

// min-twin FB value F(s,a,z)^T z for a single state-action.
float q_value(const FbModel& model, const EnvState& s, const Action& a,
              const Vecf& z, const EnvParams& params = {});

// Deterministic tanh-bounded actor output plus Gaussian exploration noise of
// scale noise_scale, clipped to the action box. noise_scale = 0 at
// evaluation.
Action policy_action(const FbModel& model, const EnvState& s, const Vecf& z,
                     float noise_scale, Rng& rng, const EnvParams& params = {});

// Batched target-policy actions with TD3 smoothing: clip(pi_target(s', z) +
// clip(eps, +-noise_clip), +-1), eps ~ N(0, noise^2). Row-major noise order.
Matf target_policy_actions(const FbModel& model, const Matf& obs_next,
                           const Matf& z, float noise, float noise_clip,
                           Rng& rng);

// Zero-shot task inference z_r = mean_i B(phi_i) r_i, renormalized to the
// sqrt(d) sphere. Throws DegenerateTaskError when the mean embedding
// vanishes.
LatentZ infer_task_embedding(const FbModel& model, const Matf& phi,
                             const Vecf& rewards);

// ---------------------------------------------------------------------------
// Template definitions

template <typename S>
FbLossTerms fb_loss(const FbModelT<S>& model, const FbBatchT<S>& batch,
                    const FbLossCoeffs& coeffs, FbLossGradsT<S>* grads,
                    const FbFrozenT<S>* frozen, FbFrozenT<S>* frozen_out) {
  const Eigen::Index n = batch.obs.rows();
  const int d = model.dims.d;
  const S gamma = static_cast<S>(coeffs.gamma);
  const S inv_n = S(1) / static_cast<S>(n);

  MatX<S> xf(n, batch.obs.cols() + batch.act.cols() + d);
  xf << batch.obs, batch.act, batch.z;
  MatX<S> xf_next(n, xf.cols());
  xf_next << batch.obs_next, batch.act_next, batch.z;

  ForwardCacheT<S> cache_f1, cache_f2, cache_b_plus, cache_b_next;
  const MatX<S> f1 = net_forward(model.online.f1, xf, &cache_f1);
  const MatX<S> f2 = net_forward(model.online.f2, xf, &cache_f2);
  const MatX<S> b_plus =
      net_forward(model.online.b, batch.phi_plus, &cache_b_plus);
  const MatX<S> b_next =
      net_forward(model.online.b, batch.phi_next, &cache_b_next);
  // Target paths: values only, never differentiated.
  const MatX<S> f1t = net_forward(model.target.f1, xf_next);
  const MatX<S> f2t = net_forward(model.target.f2, xf_next);
  const MatX<S> bt_plus = net_forward(model.target.b, batch.phi_plus);

  const VecX<S> m1 = (f1.array() * b_plus.array()).rowwise().sum();
  const VecX<S> m2 = (f2.array() * b_plus.array()).rowwise().sum();
  const VecX<S> m1t = (f1t.array() * bt_plus.array()).rowwise().sum();
  const VecX<S> m2t = (f2t.array() * bt_plus.array()).rowwise().sum();
  const VecX<S> td_target = gamma * m1t.cwiseMin(m2t);
  const VecX<S> diff1 = m1 - td_target;
  const VecX<S> diff2 = m2 - td_target;
  const VecX<S> next1 = (f1.array() * b_next.array()).rowwise().sum();
  const VecX<S> next2 = (f2.array() * b_next.array()).rowwise().sum();

  FbLossTerms terms;
  double sq = 0.0, cross = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sq += static_cast<double>(diff1[i]) * static_cast<double>(diff1[i]) +
          static_cast<double>(diff2[i]) * static_cast<double>(diff2[i]);
    cross += static_cast<double>(next1[i]) + static_cast<double>(next2[i]);
  }
  terms.main = sq / (2.0 * static_cast<double>(n)) -
               cross / static_cast<double>(n);

  // Orthonormality regularizer on the B(s+) embeddings.
  const MatX<S>& anchor =
      (frozen != nullptr && frozen->ortho_anchor.size() > 0)
          ? frozen->ortho_anchor
          : b_plus;
  MatX<S> ortho_grad = MatX<S>::Zero(n, d);
  terms.ortho = ortho_loss<S>(b_plus, &anchor,
                              grads != nullptr ? &ortho_grad : nullptr);

  // Fz regularizer: scalar TD on F^T z with the stop-grad reward
  // r_z = B(s')^T Sigma_B^{-1} z, Sigma_B from the B(s+) batch.
  VecX<S> fz_reward;
  if (frozen != nullptr && frozen->fz_reward.size() > 0) {
    fz_reward = frozen->fz_reward;
  } else {
    MatX<S> sigma_b = (b_plus.transpose() * b_plus) * inv_n;
    sigma_b.diagonal().array() += static_cast<S>(coeffs.sigma_ridge);
    const MatX<S> solved =
        sigma_b.ldlt().solve(batch.z.transpose());  // (d x n)
    fz_reward = (b_next.array() * solved.transpose().array()).rowwise().sum();
  }
  if (frozen_out != nullptr) {
    frozen_out->fz_reward = fz_reward;
    frozen_out->ortho_anchor = b_plus;
  }
  const VecX<S> qz1 = (f1.array() * batch.z.array()).rowwise().sum();
  const VecX<S> qz2 = (f2.array() * batch.z.array()).rowwise().sum();
  const VecX<S> qz1t = (f1t.array() * batch.z.array()).rowwise().sum();
  const VecX<S> qz2t = (f2t.array() * batch.z.array()).rowwise().sum();
  const VecX<S> fz_target = fz_reward + gamma * qz1t.cwiseMin(qz2t);
  const VecX<S> fzd1 = qz1 - fz_target;
  const VecX<S> fzd2 = qz2 - fz_target;
  double fz_sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    fz_sq += static_cast<double>(fzd1[i]) * static_cast<double>(fzd1[i]) +
             static_cast<double>(fzd2[i]) * static_cast<double>(fzd2[i]);
  }
  terms.fz = fz_sq / (2.0 * static_cast<double>(n));

  terms.total =
      terms.main + coeffs.ortho_coef * terms.ortho + coeffs.fz_coef * terms.fz;
  if (!std::isfinite(terms.total)) {
    std::string which = !std::isfinite(terms.main)    ? "main"
                        : !std::isfinite(terms.ortho) ? "ortho"
                                                      : "fz";
    throw TrainingError("fb_loss: non-finite " + which + " term");
  }
  if (grads == nullptr) return terms;

  const S ortho_c = static_cast<S>(coeffs.ortho_coef);
  const S fz_c = static_cast<S>(coeffs.fz_coef);

  // dL/dF_k = (1/n) (diff_k B(s+) - B(s')) + (fz_c/n) (qz_k - target) z.
  MatX<S> df1 = inv_n * (diff1.asDiagonal() * b_plus - b_next) +
                (fz_c * inv_n) * (fzd1.asDiagonal() * batch.z);
  MatX<S> df2 = inv_n * (diff2.asDiagonal() * b_plus - b_next) +
                (fz_c * inv_n) * (fzd2.asDiagonal() * batch.z);

  // dL/dB(s+): main squared term plus the weighted ortho gradient.
  MatX<S> db_plus =
      inv_n * (diff1.asDiagonal() * f1 + diff2.asDiagonal() * f2);
  db_plus += ortho_c * ortho_grad;

  // dL/dB(s') from the -2 mean cross term (both twins).
  MatX<S> db_next = -inv_n * (f1 + f2);

  net_backward(model.online.f1, cache_f1, df1, &grads->f1);
  net_backward(model.online.f2, cache_f2, df2, &grads->f2);
  net_backward(model.online.b, cache_b_plus, db_plus, &grads->b);
  net_backward(model.online.b, cache_b_next, db_next, &grads->b);
  return terms;
}

template <typename S>
double actor_loss_with_qreg(const FbModelT<S>& model, const MatX<S>& obs,
                            const MatX<S>& z, S lambda_reg,
                            const DenseNetT<S>* qreg1,
                            const DenseNetT<S>* qreg2,
                            NetGradsT<S>* actor_grads) {
  const Eigen::Index n = obs.rows();
  const S inv_n = S(1) / static_cast<S>(n);

  MatX<S> xa(n, obs.cols() + z.cols());
  xa << obs, z;
  ForwardCacheT<S> cache_a;
  const MatX<S> actions = net_forward(model.online.actor, xa, &cache_a);

  MatX<S> xf(n, obs.cols() + actions.cols() + z.cols());
  xf << obs, actions, z;
  ForwardCacheT<S> cache_f1, cache_f2;
  const MatX<S> f1 = net_forward(model.online.f1, xf, &cache_f1);
  const MatX<S> f2 = net_forward(model.online.f2, xf, &cache_f2);
  const VecX<S> q1 = (f1.array() * z.array()).rowwise().sum();
  const VecX<S> q2 = (f2.array() * z.array()).rowwise().sum();

  double value = 0.0;
  MatX<S> df1 = MatX<S>::Zero(n, model.dims.d);
  MatX<S> df2 = MatX<S>::Zero(n, model.dims.d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (q1[i] <= q2[i]) {
      value += static_cast<double>(q1[i]);
      df1.row(i) = -inv_n * z.row(i);
    } else {
      value += static_cast<double>(q2[i]);
      df2.row(i) = -inv_n * z.row(i);
    }
  }

  MatX<S> dxf = net_backward(model.online.f1, cache_f1, df1,
                              static_cast<NetGradsT<S>*>(nullptr));
  dxf += net_backward(model.online.f2, cache_f2, df2,
                static_cast<NetGradsT<S>*>(nullptr));
  MatX<S> dactions =
      dxf.block(0, obs.cols(), n, actions.cols());

  if (lambda_reg != S(0) && qreg1 != nullptr && qreg2 != nullptr) {
    MatX<S> xq(n, obs.cols() + actions.cols());
    xq << obs, actions;
    ForwardCacheT<S> cache_q1, cache_q2;
    const VecX<S> r1 = net_forward(*qreg1, xq, &cache_q1).col(0);
    const VecX<S> r2 = net_forward(*qreg2, xq, &cache_q2).col(0);
    MatX<S> dq1 = MatX<S>::Zero(n, 1);
    MatX<S> dq2 = MatX<S>::Zero(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (r1[i] <= r2[i]) {
        value += static_cast<double>(lambda_reg) * static_cast<double>(r1[i]);
        dq1(i, 0) = -lambda_reg * inv_n;
      } else {
        value += static_cast<double>(lambda_reg) * static_cast<double>(r2[i]);
        dq2(i, 0) = -lambda_reg * inv_n;
      }
    }
    MatX<S> dxq = net_backward(*qreg1, cache_q1, dq1,
                              static_cast<NetGradsT<S>*>(nullptr));
    dxq += net_backward(*qreg2, cache_q2, dq2,
                static_cast<NetGradsT<S>*>(nullptr));
    dactions += dxq.block(0, obs.cols(), n, actions.cols());
  }

  const double loss = -value / static_cast<double>(n);
  if (!std::isfinite(loss)) throw TrainingError("actor_loss: non-finite");
  if (actor_grads != nullptr) {
    net_backward(model.online.actor, cache_a, dactions, actor_grads);
  }
  return loss;
}

}  // namespace fbrl
