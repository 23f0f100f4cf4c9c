#include "fbrl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fbrl/checkpoint.hpp"
#include "fbrl/errors.hpp"

namespace fbrl {

namespace fs = std::filesystem;

namespace {

std::vector<int> to_int(const std::vector<std::int64_t>& v) {
  std::vector<int> out;
  out.reserve(v.size());
  for (auto x : v) out.push_back(static_cast<int>(x));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

FbDims dims_from_config(const RunConfig& cfg) {
  FbDims dims;
  dims.d = static_cast<int>(cfg.d);
  dims.f_hidden = to_int(cfg.f_hidden);
  dims.b_hidden = to_int(cfg.b_hidden);
  dims.actor_hidden = to_int(cfg.actor_hidden);
  return dims;
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg) : Trainer(cfg, nullptr) {}

Trainer::Trainer(const RunConfig& cfg_in, const std::string* checkpoint_dir)
    : cfg_(cfg_in),
      buffer_(1, 1, 0)  // re-seated below once the config is validated
{
  validate_config(cfg_);
  env_ = cfg_.env_params();
  mode_ = cfg_.parsed_mode();
  expl_ = cfg_.exploration_config();
  coeffs_.gamma = cfg_.gamma;
  coeffs_.ortho_coef = cfg_.ortho_coef;
  coeffs_.fz_coef = cfg_.fz_coef;
  coeffs_.sigma_ridge = cfg_.sigma_ridge;

  Rng master(cfg_.seed);
  Rng init_rng = master.split();
  model_ = make_fb_model<float>(dims_from_config(cfg_), init_rng);
  critic_ = make_reg_critic<float>(kObsDim, kActDim, to_int(cfg_.qreg_hidden),
                                   init_rng);
  flow_ = make_flow<float>(kProjDim, static_cast<int>(cfg_.flow_layers),
                           static_cast<int>(cfg_.flow_hidden), init_rng);
  rollout_rng_ = master.split();
  explorer_rng_ = master.split();
  noise_rng_ = master.split();
  flow_seed_rng_ = master.split();
  buffer_ = ReplayBuffer(static_cast<std::size_t>(cfg_.buffer_capacity),
                         static_cast<std::size_t>(cfg_.goal_buffer_capacity),
                         master.next_u64(), env_);

  adam_f1_ = make_adam(model_.online.f1);
  adam_f2_ = make_adam(model_.online.f2);
  adam_b_ = make_adam(model_.online.b);
  adam_actor_ = make_adam(model_.online.actor);
  adam_q1_ = make_adam(critic_.q1);
  adam_q2_ = make_adam(critic_.q2);

  workers_.resize(static_cast<std::size_t>(cfg_.workers));
  for (auto& w : workers_) {
    w.env_rng = master.split();
    w.state = env_reset(w.env_rng);
    w.episode = static_cast<std::uint32_t>(episode_counter_++);
    w.z = Vecf::Zero(model_.dims.d);
  }
  z_age_ = cfg_.z_refresh_interval;  // force assignment on the first round

  if (checkpoint_dir != nullptr) {
    const TensorReader reader(*checkpoint_dir);
    reader.read_net("f1", model_.online.f1);
    reader.read_net("f2", model_.online.f2);
    reader.read_net("b", model_.online.b);
    reader.read_net("actor", model_.online.actor);
    reader.read_net("f1_target", model_.target.f1);
    reader.read_net("f2_target", model_.target.f2);
    reader.read_net("b_target", model_.target.b);
    reader.read_net("actor_target", model_.target.actor);
    reader.read_net("qreg1", critic_.q1);
    reader.read_net("qreg2", critic_.q2);
    reader.read_net("qreg1_target", critic_.q1_target);
    reader.read_net("qreg2_target", critic_.q2_target);
    for (std::size_t l = 0; l < flow_.layers.size(); ++l) {
      reader.read_net("flow/scale" + std::to_string(l), flow_.layers[l].scale);
      reader.read_net("flow/shift" + std::to_string(l), flow_.layers[l].shift);
    }
    {
      const auto mean = reader.read_f32("flow/whiten_mean");
      const auto scale = reader.read_f32("flow/whiten_scale");
      for (int j = 0; j < flow_.dim; ++j) {
        flow_.whiten_mean[j] = mean[static_cast<std::size_t>(j)];
        flow_.whiten_scale[j] = scale[static_cast<std::size_t>(j)];
      }
      flow_.fitted = reader.read_scalar_i64("flow/fitted") != 0;
    }
    reader.read_adam("adam/f1", adam_f1_);
    reader.read_adam("adam/f2", adam_f2_);
    reader.read_adam("adam/b", adam_b_);
    reader.read_adam("adam/actor", adam_actor_);
    reader.read_adam("adam/qreg1", adam_q1_);
    reader.read_adam("adam/qreg2", adam_q2_);
    reader.read_rng("rng/rollout", rollout_rng_);
    reader.read_rng("rng/explorer", explorer_rng_);
    reader.read_rng("rng/noise", noise_rng_);
    reader.read_rng("rng/flowseed", flow_seed_rng_);

    const auto wenv = reader.read_f32("workers/env");
    const auto wstep = reader.read_i64("workers/step");
    const auto wepisode = reader.read_i64("workers/episode");
    const auto wz = reader.read_f32("workers/z");
    for (std::size_t i = 0; i < workers_.size(); ++i) {
      auto& w = workers_[i];
      const std::size_t base = i * 6;
      w.state.pos << wenv[base + 0], wenv[base + 1];
      w.state.vel << wenv[base + 2], wenv[base + 3];
      w.state.prev_action << wenv[base + 4], wenv[base + 5];
      w.state.step = static_cast<int>(wstep[i]);
      w.episode = static_cast<std::uint32_t>(wepisode[i]);
      for (int j = 0; j < model_.dims.d; ++j) {
        w.z[j] = wz[i * static_cast<std::size_t>(model_.dims.d) +
                    static_cast<std::size_t>(j)];
      }
      reader.read_rng("workers/rng" + std::to_string(i), w.env_rng);
    }

    const auto counters = reader.read_i64("trainer/counters");
    global_steps_ = counters[0];
    grad_steps_total_ = counters[1];
    episode_counter_ = counters[2];
    z_age_ = counters[3];
    last_checkpoint_step_ = counters[4];
    rows_emitted_ = counters[5];
    flow_fallback_logged_ = counters[6] != 0;
    const auto acc = reader.read_f64("trainer/accum");
    accum_.fb_main = acc[0];
    accum_.fb_ortho = acc[1];
    accum_.fb_fz = acc[2];
    accum_.actor = acc[3];
    accum_.qreg = acc[4];
    accum_.action_rate = acc[5];
    const auto acc_n = reader.read_i64("trainer/accum_counts");
    accum_.fb_count = acc_n[0];
    accum_.actor_count = acc_n[1];
    accum_.qreg_count = acc_n[2];
    accum_.action_count = acc_n[3];
    last_flow_nll_ = reader.read_scalar_f64("trainer/last_flow_nll");

    buffer_.load((fs::path(*checkpoint_dir) / "buffer.bin").string());
    buffer_.goals().load(
        (fs::path(*checkpoint_dir) / "goalbuffer.bin").string());
  }
}

std::unique_ptr<Trainer> Trainer::resume(const std::string& checkpoint_dir) {
  std::ifstream in(fs::path(checkpoint_dir) / "config.txt");
  if (!in) {
    throw MissingArtifactError("no config.txt in checkpoint " +
                               checkpoint_dir);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config_text(ss.str());
  return std::unique_ptr<Trainer>(new Trainer(cfg, &checkpoint_dir));
}

std::string Trainer::metrics_header() {
  return "step,mode,seed,fb_main,fb_ortho,fb_fz,actor_loss,regcritic_loss,"
         "flow_nll,behavior_entropy,mean_action_rate";
}

std::string Trainer::metrics_csv() const {
  std::string out = metrics_header() + "\n";
  for (const auto& row : rows_) {
    out += row;
    out += '\n';
  }
  return out;
}

Matf Trainer::goal_pool() {
  auto pool = buffer_.sample_goal_states(
      static_cast<std::size_t>(cfg_.candidate_pool));
  if (!pool.has_value()) return Matf(0, kProjDim);
  return std::move(*pool);
}

void Trainer::refresh_worker_z() {
  const Matf pool = goal_pool();
  const ZBatch zb =
      sample_exploration_z(model_, flow_, pool, expl_,
                           static_cast<Eigen::Index>(workers_.size()),
                           explorer_rng_);
  if (zb.used_uniform_fallback && !flow_fallback_logged_) {
    if (log_ != nullptr) {
      *log_ << "[trainer] flow not fitted yet; exploration goals drawn with "
               "uniform weights\n";
    }
    flow_fallback_logged_ = true;
  }
  for (std::size_t i = 0; i < workers_.size(); ++i) {
    workers_[i].z = zb.z.row(static_cast<Eigen::Index>(i)).transpose();
  }
  z_age_ = 0;
}

void Trainer::rollout_round() {
  for (std::int64_t t = 0; t < cfg_.steps_between_updates; ++t) {
    if (global_steps_ >= cfg_.total_steps) return;
    if (z_age_ >= cfg_.z_refresh_interval) refresh_worker_z();
    for (auto& w : workers_) {
      if (global_steps_ >= cfg_.total_steps) return;
      Action a;
      if (global_steps_ < cfg_.init_random_steps) {
        a.accel.x() = static_cast<float>(rollout_rng_.uniform(-1.0, 1.0));
        a.accel.y() = static_cast<float>(rollout_rng_.uniform(-1.0, 1.0));
      } else {
        a = policy_action(model_, w.state, w.z,
                          static_cast<float>(cfg_.explore_noise), rollout_rng_,
                          env_);
      }
      const StepResult r = env_step(w.state, a, env_);
      const float rr = reg_reward(r.state, a, w.state.prev_action);
      buffer_.append(Transition{w.state, a, r.state, rr, r.done, w.episode});
      accum_.action_rate += -static_cast<double>(rr);
      ++accum_.action_count;
      w.state = r.state;
      if (r.done) {
        w.state = env_reset(w.env_rng);
        w.episode = static_cast<std::uint32_t>(episode_counter_++);
      }
      ++global_steps_;
      if (global_steps_ % cfg_.flow_refresh_interval == 0) {
        refit_flow();
        emit_metrics_row();
      }
    }
    ++z_age_;
  }
}

FbBatch Trainer::assemble_batch(const FbIndexBatch& idx, const Matf& z) {
  const auto n = static_cast<Eigen::Index>(idx.idx.size());
  FbBatch batch;
  batch.obs.resize(n, kObsDim);
  batch.act.resize(n, kActDim);
  batch.obs_next.resize(n, kObsDim);
  batch.phi_next.resize(n, kProjDim);
  batch.phi_plus.resize(n, kProjDim);
  batch.reg_reward.resize(n);
  batch.z = z;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = buffer_.at(idx.idx[static_cast<std::size_t>(i)]);
    batch.obs.row(i) = observation(t.s, env_).transpose();
    batch.act.row(i) = t.a.accel.transpose();
    batch.obs_next.row(i) = observation(t.s_next, env_).transpose();
    batch.phi_next.row(i) = project(t.s_next).transpose();
    batch.reg_reward[i] = t.reg_reward;
    const Transition& tp =
        buffer_.at(idx.plus_idx[static_cast<std::size_t>(i)]);
    batch.phi_plus.row(i) = project(tp.s_next).transpose();
  }
  return batch;
}

void Trainer::update_agent(std::int64_t grad_steps) {
  if (!buffer_.ready(static_cast<std::size_t>(cfg_.batch_size))) return;
  for (std::int64_t g = 0; g < grad_steps; ++g) {
    const auto idx =
        buffer_.sample_fb_batch(static_cast<std::size_t>(cfg_.batch_size));
    const Matf pool = goal_pool();
    const ZBatch zb = select_training_z(model_, flow_, pool, expl_,
                                        static_cast<Eigen::Index>(
                                            cfg_.batch_size),
                                        explorer_rng_);
    FbBatch batch = assemble_batch(*idx, zb.z);
    batch.act_next = target_policy_actions(
        model_, batch.obs_next, batch.z,
        static_cast<float>(cfg_.smoothing_noise),
        static_cast<float>(cfg_.smoothing_clip), noise_rng_);

    FbLossGradsT<float> grads{make_zero_grads(model_.online.f1),
                              make_zero_grads(model_.online.f2),
                              make_zero_grads(model_.online.b)};
    const FbLossTerms terms = fb_loss(model_, batch, coeffs_, &grads);
    adam_step(adam_f1_, model_.online.f1, grads.f1,
              static_cast<float>(cfg_.lr_f));
    adam_step(adam_f2_, model_.online.f2, grads.f2,
              static_cast<float>(cfg_.lr_f));
    adam_step(adam_b_, model_.online.b, grads.b,
              static_cast<float>(cfg_.lr_b));
    accum_.fb_main += terms.main;
    accum_.fb_ortho += terms.ortho;
    accum_.fb_fz += terms.fz;
    ++accum_.fb_count;

    if (mode_ != Mode::kFB) {
      NetGrads g1 = make_zero_grads(critic_.q1);
      NetGrads g2 = make_zero_grads(critic_.q2);
      const double ql = reg_critic_loss(
          critic_, batch.obs, batch.act, batch.reg_reward, batch.obs_next,
          batch.act_next, static_cast<float>(cfg_.gamma), &g1, &g2);
      adam_step(adam_q1_, critic_.q1, g1, static_cast<float>(cfg_.lr_qreg));
      adam_step(adam_q2_, critic_.q2, g2, static_cast<float>(cfg_.lr_qreg));
      accum_.qreg += ql;
      ++accum_.qreg_count;
    }

    ++grad_steps_total_;
    if (grad_steps_total_ % cfg_.policy_delay == 0) {
      NetGrads ag = make_zero_grads(model_.online.actor);
      const bool with_critic = mode_ != Mode::kFB && cfg_.lambda_reg > 0.0;
      const double al = actor_loss_with_qreg(
          model_, batch.obs, batch.z, static_cast<float>(cfg_.lambda_reg),
          with_critic ? &critic_.q1 : nullptr,
          with_critic ? &critic_.q2 : nullptr, &ag);
      adam_step(adam_actor_, model_.online.actor, ag,
                static_cast<float>(cfg_.lr_actor));
      accum_.actor += al;
      ++accum_.actor_count;

      soft_update(model_.target.f1, model_.online.f1,
                  static_cast<float>(cfg_.tau_f));
      soft_update(model_.target.f2, model_.online.f2,
                  static_cast<float>(cfg_.tau_f));
      soft_update(model_.target.b, model_.online.b,
                  static_cast<float>(cfg_.tau_b));
      soft_update(model_.target.actor, model_.online.actor,
                  static_cast<float>(cfg_.tau_actor));
      if (mode_ != Mode::kFB) {
        soft_update(critic_.q1_target, critic_.q1,
                    static_cast<float>(cfg_.tau_qreg));
        soft_update(critic_.q2_target, critic_.q2,
                    static_cast<float>(cfg_.tau_qreg));
      }
    }
  }
}

void Trainer::refit_flow() {
  const Matf snapshot = buffer_.goals().snapshot();
  if (snapshot.rows() < 1) return;
  FlowFitParams params;
  params.lr = cfg_.flow_lr;
  params.batch_size = static_cast<int>(cfg_.flow_batch);
  params.epochs = static_cast<int>(cfg_.flow_epochs);
  const std::vector<double> trace =
      flow_fit(flow_, snapshot, params, flow_seed_rng_.next_u64());
  if (!trace.empty()) last_flow_nll_ = trace.back();
}

void Trainer::emit_metrics_row() {
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  double entropy = nan;
  if (buffer_.size() > 0) {
    GridSpec grid;
    grid.lo = -cfg_.env_v_max;
    grid.hi = cfg_.env_v_max;
    grid.bins = static_cast<int>(cfg_.entropy_bins);
    entropy = behavior_entropy(
                  buffer_.recent_projections(
                      static_cast<std::size_t>(cfg_.entropy_window)),
                  grid)
                  .entropy;
  }
  auto mean = [](double sum, std::int64_t n) {
    return n > 0 ? sum / static_cast<double>(n)
                 : std::numeric_limits<double>::quiet_NaN();
  };
  std::ostringstream row;
  row << global_steps_ << ',' << cfg_.mode << ',' << cfg_.seed << ','
      << fmt(mean(accum_.fb_main, accum_.fb_count)) << ','
      << fmt(mean(accum_.fb_ortho, accum_.fb_count)) << ','
      << fmt(mean(accum_.fb_fz, accum_.fb_count)) << ','
      << fmt(mean(accum_.actor, accum_.actor_count)) << ','
      << fmt(mean(accum_.qreg, accum_.qreg_count)) << ','
      << fmt(last_flow_nll_) << ',' << fmt(entropy) << ','
      << fmt(mean(accum_.action_rate, accum_.action_count));
  rows_.push_back(row.str());
  ++rows_emitted_;
  accum_ = Accum{};
}

void Trainer::save_checkpoint(const std::string& dir) const {
  TensorWriter writer;
  writer.add_net("f1", model_.online.f1);
  writer.add_net("f2", model_.online.f2);
  writer.add_net("b", model_.online.b);
  writer.add_net("actor", model_.online.actor);
  writer.add_net("f1_target", model_.target.f1);
  writer.add_net("f2_target", model_.target.f2);
  writer.add_net("b_target", model_.target.b);
  writer.add_net("actor_target", model_.target.actor);
  writer.add_net("qreg1", critic_.q1);
  writer.add_net("qreg2", critic_.q2);
  writer.add_net("qreg1_target", critic_.q1_target);
  writer.add_net("qreg2_target", critic_.q2_target);
  for (std::size_t l = 0; l < flow_.layers.size(); ++l) {
    writer.add_net("flow/scale" + std::to_string(l), flow_.layers[l].scale);
    writer.add_net("flow/shift" + std::to_string(l), flow_.layers[l].shift);
  }
  writer.add_f32("flow/whiten_mean", flow_.whiten_mean.data(), {flow_.dim});
  writer.add_f32("flow/whiten_scale", flow_.whiten_scale.data(), {flow_.dim});
  writer.add_scalar_i64("flow/fitted", flow_.fitted ? 1 : 0);
  writer.add_adam("adam/f1", adam_f1_);
  writer.add_adam("adam/f2", adam_f2_);
  writer.add_adam("adam/b", adam_b_);
  writer.add_adam("adam/actor", adam_actor_);
  writer.add_adam("adam/qreg1", adam_q1_);
  writer.add_adam("adam/qreg2", adam_q2_);
  writer.add_rng("rng/rollout", rollout_rng_);
  writer.add_rng("rng/explorer", explorer_rng_);
  writer.add_rng("rng/noise", noise_rng_);
  writer.add_rng("rng/flowseed", flow_seed_rng_);

  const auto num_workers = workers_.size();
  std::vector<float> wenv(num_workers * 6);
  std::vector<std::int64_t> wstep(num_workers), wepisode(num_workers);
  std::vector<float> wz(num_workers * static_cast<std::size_t>(model_.dims.d));
  for (std::size_t i = 0; i < num_workers; ++i) {
    const auto& w = workers_[i];
    wenv[i * 6 + 0] = w.state.pos.x();
    wenv[i * 6 + 1] = w.state.pos.y();
    wenv[i * 6 + 2] = w.state.vel.x();
    wenv[i * 6 + 3] = w.state.vel.y();
    wenv[i * 6 + 4] = w.state.prev_action.x();
    wenv[i * 6 + 5] = w.state.prev_action.y();
    wstep[i] = w.state.step;
    wepisode[i] = w.episode;
    for (int j = 0; j < model_.dims.d; ++j) {
      wz[i * static_cast<std::size_t>(model_.dims.d) +
         static_cast<std::size_t>(j)] = w.z[j];
    }
  }
  writer.add_f32("workers/env", wenv.data(),
                 {static_cast<std::int64_t>(num_workers), 6});
  writer.add_i64("workers/step", wstep.data(),
                 {static_cast<std::int64_t>(num_workers)});
  writer.add_i64("workers/episode", wepisode.data(),
                 {static_cast<std::int64_t>(num_workers)});
  writer.add_f32("workers/z", wz.data(),
                 {static_cast<std::int64_t>(num_workers), model_.dims.d});
  for (std::size_t i = 0; i < num_workers; ++i) {
    writer.add_rng("workers/rng" + std::to_string(i), workers_[i].env_rng);
  }

  const std::int64_t counters[] = {
      global_steps_,     grad_steps_total_,   episode_counter_, z_age_,
      last_checkpoint_step_, rows_emitted_,
      flow_fallback_logged_ ? std::int64_t(1) : std::int64_t(0)};
  writer.add_i64("trainer/counters", counters, {7});
  const double acc[] = {accum_.fb_main, accum_.fb_ortho, accum_.fb_fz,
                        accum_.actor,   accum_.qreg,     accum_.action_rate};
  writer.add_f64("trainer/accum", acc, {6});
  const std::int64_t acc_n[] = {accum_.fb_count, accum_.actor_count,
                                accum_.qreg_count, accum_.action_count};
  writer.add_i64("trainer/accum_counts", acc_n, {4});
  writer.add_scalar_f64("trainer/last_flow_nll", last_flow_nll_);

  const fs::path target(dir);
  const fs::path tmp(dir + ".tmp");
  std::error_code ec;
  fs::remove_all(tmp, ec);
  writer.write_into(tmp.string());
  std::ofstream cfg_out(tmp / "config.txt", std::ios::trunc);
  cfg_out << dump_config(cfg_);
  cfg_out.close();
  buffer_.save((tmp / "buffer.bin").string());
  buffer_.goals().save((tmp / "goalbuffer.bin").string());
  fs::remove_all(target, ec);
  fs::rename(tmp, target);
}

TrainArtifacts Trainer::train() {
  TrainArtifacts artifacts;
  fs::create_directories(cfg_.run_dir);
  atomic_write_text((fs::path(cfg_.run_dir) / "config.txt").string(),
                    dump_config(cfg_));

  try {
    while (global_steps_ < cfg_.total_steps) {
      rollout_round();
      update_agent(cfg_.grad_steps_per_update);
      if (global_steps_ - last_checkpoint_step_ >= cfg_.checkpoint_interval &&
          global_steps_ < cfg_.total_steps) {
        last_checkpoint_step_ = global_steps_;
        save_checkpoint((fs::path(cfg_.run_dir) /
                         ("checkpoint_step" + std::to_string(global_steps_)))
                            .string());
      }
    }
  } catch (const TrainingError& err) {
    artifacts.diverged = true;
    artifacts.diagnostic = err.what();
    if (log_ != nullptr) {
      *log_ << "[trainer] aborting on numeric failure: " << err.what() << "\n";
    }
  }

  const std::string metrics_path =
      (fs::path(cfg_.run_dir) / "metrics.csv").string();
  atomic_write_text(metrics_path, metrics_csv());
  const std::string final_dir =
      (fs::path(cfg_.run_dir) / "checkpoint").string();
  save_checkpoint(final_dir);
  artifacts.checkpoint_dir = final_dir;
  artifacts.metrics_path = metrics_path;
  return artifacts;
}

LoadedAgent load_agent(const std::string& checkpoint_dir) {
  std::ifstream in(fs::path(checkpoint_dir) / "config.txt");
  if (!in) {
    throw MissingArtifactError("no config.txt in checkpoint " +
                               checkpoint_dir);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  LoadedAgent agent;
  agent.cfg = parse_config_text(ss.str());
  validate_config(agent.cfg);

  Rng dummy(0);
  agent.model = make_fb_model<float>(dims_from_config(agent.cfg), dummy);
  agent.critic = make_reg_critic<float>(
      kObsDim, kActDim, to_int(agent.cfg.qreg_hidden), dummy);
  agent.flow = make_flow<float>(kProjDim,
                                static_cast<int>(agent.cfg.flow_layers),
                                static_cast<int>(agent.cfg.flow_hidden),
                                dummy);
  const TensorReader reader(checkpoint_dir);
  reader.read_net("f1", agent.model.online.f1);
  reader.read_net("f2", agent.model.online.f2);
  reader.read_net("b", agent.model.online.b);
  reader.read_net("actor", agent.model.online.actor);
  reader.read_net("f1_target", agent.model.target.f1);
  reader.read_net("f2_target", agent.model.target.f2);
  reader.read_net("b_target", agent.model.target.b);
  reader.read_net("actor_target", agent.model.target.actor);
  reader.read_net("qreg1", agent.critic.q1);
  reader.read_net("qreg2", agent.critic.q2);
  reader.read_net("qreg1_target", agent.critic.q1_target);
  reader.read_net("qreg2_target", agent.critic.q2_target);
  for (std::size_t l = 0; l < agent.flow.layers.size(); ++l) {
    reader.read_net("flow/scale" + std::to_string(l),
                    agent.flow.layers[l].scale);
    reader.read_net("flow/shift" + std::to_string(l),
                    agent.flow.layers[l].shift);
  }
  const auto mean = reader.read_f32("flow/whiten_mean");
  const auto scale = reader.read_f32("flow/whiten_scale");
  for (int j = 0; j < agent.flow.dim; ++j) {
    agent.flow.whiten_mean[j] = mean[static_cast<std::size_t>(j)];
    agent.flow.whiten_scale[j] = scale[static_cast<std::size_t>(j)];
  }
  agent.flow.fitted = reader.read_scalar_i64("flow/fitted") != 0;
  return agent;
}

}  // namespace fbrl
