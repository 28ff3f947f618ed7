#include "raceam/td3.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "raceam/io_util.hpp"

namespace raceam {

void Td3Config::validate() const {
  if (gamma < 0.0 || gamma > 1.0) throw ValidationError("td3: gamma must be in [0,1]");
  if (lr_actor <= 0.0 || lr_critic <= 0.0) throw ValidationError("td3: learning rates must be > 0");
  if (tau <= 0.0 || tau > 1.0) throw ValidationError("td3: tau must be in (0,1]");
  if (batch_size < 1) throw ValidationError("td3: batch size must be >= 1");
  if (buffer_capacity < static_cast<std::size_t>(batch_size)) {
    throw ValidationError("td3: buffer capacity below batch size");
  }
  if (policy_delay < 1) throw ValidationError("td3: policy delay must be >= 1");
  if (sigma_explore < 0.0 || sigma_target < 0.0 || noise_clip < 0.0) {
    throw ValidationError("td3: noise parameters must be >= 0");
  }
  if (hidden.empty()) throw ValidationError("td3: need at least one hidden layer");
  for (int h : hidden) {
    if (h < 1) throw ValidationError("td3: hidden sizes must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ValidationError("replay buffer: capacity must be > 0");
  data_.reserve(std::min<std::size_t>(capacity_, 1 << 20));
}

void ReplayBuffer::add(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::mt19937_64& rng,
                                                      std::size_t n) const {
  if (n > data_.size()) throw std::invalid_argument("replay buffer: sample larger than size");
  // Floyd's algorithm: uniform without replacement within the batch.
  std::vector<std::size_t> out;
  out.reserve(n);
  std::unordered_set<std::size_t> seen;
  for (std::size_t j = data_.size() - n; j < data_.size(); ++j) {
    std::uniform_int_distribution<std::size_t> d(0, j);
    std::size_t t = d(rng);
    if (!seen.insert(t).second) {
      seen.insert(j);
      out.push_back(j);
    } else {
      out.push_back(t);
    }
  }
  return out;
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& idx) const {
  if (idx.empty()) throw std::invalid_argument("replay buffer: empty batch");
  const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
  const Eigen::Index o = data_[idx[0]].obs.size();
  const Eigen::Index a = data_[idx[0]].action.size();
  Batch b;
  b.obs.resize(o, n);
  b.action.resize(a, n);
  b.reward.resize(n);
  b.next_obs.resize(o, n);
  b.done.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = data_[idx[static_cast<std::size_t>(i)]];
    b.obs.col(i) = t.obs;
    b.action.col(i) = t.action;
    b.reward(i) = t.reward;
    b.next_obs.col(i) = t.next_obs;
    b.done(i) = t.done ? 1.0 : 0.0;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Agent

namespace {

std::vector<int> net_dims(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> d;
  d.push_back(in);
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(out);
  return d;
}

Eigen::MatrixXd stack(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act) {
  Eigen::MatrixXd x(obs.rows() + act.rows(), obs.cols());
  x.topRows(obs.rows()) = obs;
  x.bottomRows(act.rows()) = act;
  return x;
}

constexpr double kActorFinalScale = 0.01;

}  // namespace

Td3Agent::Td3Agent(Td3Config config) : config_(std::move(config)) {}

Td3Agent::Td3Agent(int obs_dim, int act_dim, Td3Config config, std::uint64_t seed)
    : obs_dim_(obs_dim), act_dim_(act_dim), config_(std::move(config)), rng_(seed) {
  config_.validate();
  if (obs_dim_ < 1 || act_dim_ < 1) throw ValidationError("td3: invalid network dims");
  actor_ = Mlp(net_dims(obs_dim_, config_.hidden, act_dim_), Activation::kRelu,
               Activation::kTanh);
  critic1_ = Mlp(net_dims(obs_dim_ + act_dim_, config_.hidden, 1), Activation::kRelu,
                 Activation::kLinear);
  critic2_ = critic1_;
  actor_.init(rng_, kActorFinalScale);
  critic1_.init(rng_);
  critic2_.init(rng_);
  actor_target_ = actor_;
  critic1_t_ = critic1_;
  critic2_t_ = critic2_;
  opt_actor_ = Adam(actor_, config_.lr_actor);
  opt_c1_ = Adam(critic1_, config_.lr_critic);
  opt_c2_ = Adam(critic2_, config_.lr_critic);
}

Eigen::VectorXd Td3Agent::act(const Eigen::VectorXd& obs) const {
  return actor_.forward(obs);
}

Eigen::VectorXd Td3Agent::act_explore(const Eigen::VectorXd& obs) {
  Eigen::VectorXd a = actor_.forward(obs);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a(i) = std::clamp(a(i) + config_.sigma_explore * gaussian(rng_), -1.0, 1.0);
  }
  return a;
}

Eigen::VectorXd Td3Agent::act_random() {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd a(act_dim_);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = u(rng_);
  return a;
}

Eigen::VectorXd Td3Agent::compute_targets(const Batch& batch) {
  Eigen::MatrixXd a_next = actor_target_.forward(batch.next_obs);
  for (Eigen::Index j = 0; j < a_next.cols(); ++j) {
    for (Eigen::Index i = 0; i < a_next.rows(); ++i) {
      double eps = std::clamp(config_.sigma_target * gaussian(rng_), -config_.noise_clip,
                              config_.noise_clip);
      a_next(i, j) = std::clamp(a_next(i, j) + eps, -1.0, 1.0);
    }
  }
  Eigen::MatrixXd x = stack(batch.next_obs, a_next);
  Eigen::RowVectorXd q1 = critic1_t_.forward(x);
  Eigen::RowVectorXd q2 = critic2_t_.forward(x);
  Eigen::VectorXd y(batch.reward.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    y(i) = batch.reward(i) +
           config_.gamma * (1.0 - batch.done(i)) * std::min(q1(i), q2(i));
  }
  return y;
}

std::pair<double, double> Td3Agent::critic_update(const Batch& batch,
                                                  const Eigen::VectorXd& y) {
  Eigen::MatrixXd x = stack(batch.obs, batch.action);
  const double n = static_cast<double>(batch.reward.size());
  double losses[2];
  Mlp* critics[2] = {&critic1_, &critic2_};
  Adam* opts[2] = {&opt_c1_, &opt_c2_};
  for (int k = 0; k < 2; ++k) {
    Mlp::Workspace ws;
    const Eigen::MatrixXd& q = critics[k]->forward(x, ws);
    Eigen::RowVectorXd err = q.row(0) - y.transpose();
    losses[k] = err.squaredNorm() / n;
    if (!std::isfinite(losses[k])) throw std::runtime_error("td3: non-finite critic loss");
    Mlp::Gradients g = critics[k]->make_gradients();
    Eigen::MatrixXd out_grad = (2.0 / n) * err;
    critics[k]->backward(ws, out_grad, &g);
    opts[k]->step(*critics[k], g);
  }
  return {losses[0], losses[1]};
}

double Td3Agent::actor_update(const Batch& batch) {
  const double n = static_cast<double>(batch.obs.cols());
  Mlp::Workspace ws_a;
  const Eigen::MatrixXd& a = actor_.forward(batch.obs, ws_a);
  Eigen::MatrixXd x = stack(batch.obs, a);
  Mlp::Workspace ws_c;
  const Eigen::MatrixXd& q = critic1_.forward(x, ws_c);
  double mean_q = q.row(0).mean();
  if (!std::isfinite(mean_q)) throw std::runtime_error("td3: non-finite actor objective");
  // Ascend mean Q: minimize -mean(Q). Critic parameters stay frozen; only
  // the input gradient flows back through it.
  Eigen::MatrixXd out_grad = Eigen::MatrixXd::Constant(1, batch.obs.cols(), -1.0 / n);
  Eigen::MatrixXd dx = critic1_.backward(ws_c, out_grad, nullptr);
  Eigen::MatrixXd da = dx.bottomRows(act_dim_);
  Mlp::Gradients g = actor_.make_gradients();
  actor_.backward(ws_a, da, &g);
  opt_actor_.step(actor_, g);
  return mean_q;
}

void Td3Agent::update_targets() {
  soft_update(actor_target_, actor_, config_.tau);
  soft_update(critic1_t_, critic1_, config_.tau);
  soft_update(critic2_t_, critic2_, config_.tau);
}

std::pair<double, double> Td3Agent::train_step(const ReplayBuffer& buffer) {
  std::vector<std::size_t> idx =
      buffer.sample_indices(rng_, static_cast<std::size_t>(config_.batch_size));
  Batch batch = buffer.gather(idx);
  Eigen::VectorXd y = compute_targets(batch);
  std::pair<double, double> losses = critic_update(batch, y);
  ++learn_steps_;
  if (learn_steps_ % static_cast<std::uint64_t>(config_.policy_delay) == 0) {
    actor_update(batch);
    update_targets();
  }
  return losses;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'T', 'D', '3', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

void append_net(std::string& out, const Mlp& net) {
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Eigen::MatrixXd& w = net.weights()[l];
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) append_f64(out, w(i, j));
    const Eigen::VectorXd& b = net.biases()[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) append_f64(out, b(i));
  }
}

void read_net(BinReader& r, Mlp& net) {
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    Eigen::MatrixXd& w = net.weights()[l];
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = r.f64();
    Eigen::VectorXd& b = net.biases()[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = r.f64();
  }
}

void append_adam(std::string& out, const Adam& opt) {
  append_u64(out, static_cast<std::uint64_t>(opt.t));
  auto put_mats = [&out](const std::vector<Eigen::MatrixXd>& ms) {
    for (const auto& m : ms)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) append_f64(out, m(i, j));
  };
  auto put_vecs = [&out](const std::vector<Eigen::VectorXd>& vs) {
    for (const auto& v : vs)
      for (Eigen::Index i = 0; i < v.size(); ++i) append_f64(out, v(i));
  };
  put_mats(opt.m_w);
  put_mats(opt.v_w);
  put_vecs(opt.m_b);
  put_vecs(opt.v_b);
}

void read_adam(BinReader& r, Adam& opt) {
  opt.t = static_cast<std::int64_t>(r.u64());
  auto get_mats = [&r](std::vector<Eigen::MatrixXd>& ms) {
    for (auto& m : ms)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = r.f64();
  };
  auto get_vecs = [&r](std::vector<Eigen::VectorXd>& vs) {
    for (auto& v : vs)
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
  };
  get_mats(opt.m_w);
  get_mats(opt.v_w);
  get_vecs(opt.m_b);
  get_vecs(opt.v_b);
}

}  // namespace

void Td3Agent::save(const std::filesystem::path& path) const {
  std::string out;
  append_bytes(out, kCheckpointMagic, 4);
  append_u32(out, kCheckpointVersion);
  append_u32(out, static_cast<std::uint32_t>(obs_dim_));
  append_u32(out, static_cast<std::uint32_t>(act_dim_));
  append_u32(out, static_cast<std::uint32_t>(config_.hidden.size()));
  for (int h : config_.hidden) append_u32(out, static_cast<std::uint32_t>(h));
  append_net(out, actor_);
  append_net(out, actor_target_);
  append_net(out, critic1_);
  append_net(out, critic2_);
  append_net(out, critic1_t_);
  append_net(out, critic2_t_);
  append_adam(out, opt_actor_);
  append_adam(out, opt_c1_);
  append_adam(out, opt_c2_);
  append_u64(out, iteration_);
  append_u64(out, learn_steps_);
  std::ostringstream rng_state;
  rng_state << rng_;
  append_u64(out, rng_state.str().size());
  append_bytes(out, rng_state.str().data(), rng_state.str().size());
  atomic_write(path, out);
}

Td3Agent Td3Agent::load(const std::filesystem::path& path) {
  std::string buf = read_file(path);
  BinReader r(buf);
  char magic[4];
  if (buf.size() < 4) throw ValidationError("checkpoint: truncated file");
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw ValidationError("checkpoint: bad magic");
  }
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw ValidationError("checkpoint: unsupported version");
  Td3Config cfg;
  int obs_dim = static_cast<int>(r.u32());
  int act_dim = static_cast<int>(r.u32());
  std::uint32_t n_hidden = r.u32();
  if (n_hidden == 0 || n_hidden > 16) throw ValidationError("checkpoint: bad hidden layout");
  cfg.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) cfg.hidden.push_back(static_cast<int>(r.u32()));
  Td3Agent agent(obs_dim, act_dim, cfg, /*seed=*/0);
  read_net(r, agent.actor_);
  read_net(r, agent.actor_target_);
  read_net(r, agent.critic1_);
  read_net(r, agent.critic2_);
  read_net(r, agent.critic1_t_);
  read_net(r, agent.critic2_t_);
  read_adam(r, agent.opt_actor_);
  read_adam(r, agent.opt_c1_);
  read_adam(r, agent.opt_c2_);
  agent.iteration_ = r.u64();
  agent.learn_steps_ = r.u64();
  std::uint64_t rng_len = r.u64();
  if (rng_len != r.remaining()) throw ValidationError("checkpoint: size mismatch");
  std::string rng_state(rng_len, '\0');
  r.bytes(rng_state.data(), rng_len);
  std::istringstream(rng_state) >> agent.rng_;
  return agent;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate(const Td3Agent& agent, RaceEnv& env, int episodes, std::uint64_t seed,
                    double speed_min, double speed_max) {
  if (episodes < 1) throw std::invalid_argument("evaluate: need at least one episode");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> speed_dist(speed_min, speed_max);
  EvalReport report;
  for (int e = 0; e < episodes; ++e) {
    double speed = speed_dist(rng);
    Observation obs = env.reset_at(env.track().finish_s(), speed);
    EvalEpisode ep;
    double first_cross = -1.0;
    while (!env.done() && env.steps() < env.config().max_steps) {
      StepResult res = env.step(agent.act(obs));
      obs = res.obs;
      ep.reward += res.reward;
      if (res.info.friction_violation) ++ep.violations;
      if (res.info.lap.crossed_finish && res.info.lap.direction > 0) {
        ++ep.laps;
        if (ep.laps == 1) {
          first_cross = env.time();
        } else if (ep.laps == 2) {
          ep.flying_lap = env.time() - first_cross;
        }
      }
    }
    ep.success = ep.laps >= 2;
    if (ep.success) {
      report.success_rate += 1.0;
      if (report.best_flying_lap == 0.0 || ep.flying_lap < report.best_flying_lap) {
        report.best_flying_lap = ep.flying_lap;
      }
    }
    report.mean_reward += ep.reward;
    report.violations += ep.violations;
    report.episodes.push_back(ep);
  }
  report.success_rate /= episodes;
  report.mean_reward /= episodes;
  return report;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(Td3Agent& agent, RaceEnv& env, const TrainOptions& opts) {
  namespace fs = std::filesystem;
  if (opts.out_dir.empty()) throw std::invalid_argument("train: output dir required");
  fs::create_directories(opts.out_dir);
  const Td3Config& cfg = agent.config();

  ReplayBuffer buffer(cfg.buffer_capacity);
  std::string metrics = "iteration,episode,reward,loss_c1,loss_c2,violations_cum,lap_time,success\n";
  auto metrics_row = [&metrics](std::uint64_t it, std::uint64_t ep, double reward,
                                double lc1, double lc2, std::uint64_t viol, double lap,
                                double success) {
    metrics += std::to_string(it) + ',' + std::to_string(ep) + ',' + format_double(reward) +
               ',' + format_double(lc1) + ',' + format_double(lc2) + ',' +
               std::to_string(viol) + ',' + format_double(lap) + ',' +
               format_double(success) + '\n';
  };
  const fs::path metrics_path = opts.out_dir / "metrics.csv";
  const fs::path ckpt_path = opts.out_dir / "checkpoint.bin";

  TrainResult result;
  Observation obs = env.reset();
  double episode_reward = 0.0;
  double last_lap = 0.0;
  double lap_cross_time = -1.0;
  double loss_c1 = 0.0, loss_c2 = 0.0;

  // A separate env instance keeps evaluation from disturbing the training
  // episode or the training RNG stream.
  EpisodeConfig eval_cfg = env.config();
  eval_cfg.seed = opts.eval_seed;

  for (std::uint64_t it = 1; it <= opts.iterations; ++it) {
    Eigen::VectorXd a = it <= cfg.warmup_steps ? agent.act_random() : agent.act_explore(obs);
    StepResult res = env.step(a);
    buffer.add({obs, Eigen::Vector2d(a(0), a(1)), res.reward, res.obs, res.done});
    obs = res.obs;
    episode_reward += res.reward;
    if (res.info.friction_violation) ++result.violations;
    if (res.info.lap.crossed_finish && res.info.lap.direction > 0) {
      if (lap_cross_time >= 0.0) last_lap = env.time() - lap_cross_time;
      lap_cross_time = env.time();
    }

    if (it > cfg.warmup_steps) {
      std::tie(loss_c1, loss_c2) = agent.train_step(buffer);
    }
    agent.set_iteration(it);

    if (res.done) {
      ++result.episodes;
      metrics_row(it, result.episodes, episode_reward, loss_c1, loss_c2, result.violations,
                  last_lap, 0.0);
      obs = env.reset();
      episode_reward = 0.0;
      last_lap = 0.0;
      lap_cross_time = -1.0;
    }

    if (cfg.eval_interval > 0 && it % cfg.eval_interval == 0) {
      RaceEnv eval_env(env.track(), env.params(), eval_cfg, env.table());
      // In-training checks start from rest; the full speed sweep is for
      // standalone evaluation.
      EvalReport rep =
          evaluate(agent, eval_env, cfg.eval_episodes, opts.eval_seed + it, 0.0, 0.0);
      result.last_eval_success_rate = rep.success_rate;
      metrics_row(it, result.episodes, rep.mean_reward, loss_c1, loss_c2, result.violations,
                  rep.best_flying_lap, rep.success_rate);
      agent.save(ckpt_path);
      atomic_write(metrics_path, metrics);
      if (opts.verbose) {
        std::fprintf(stderr,
                     "iter %llu  episodes %llu  eval success %.2f  best lap %.2f  "
                     "violations %llu\n",
                     static_cast<unsigned long long>(it),
                     static_cast<unsigned long long>(result.episodes), rep.success_rate,
                     rep.best_flying_lap, static_cast<unsigned long long>(result.violations));
      }
    }
  }
  result.iterations = opts.iterations;
  agent.save(ckpt_path);
  atomic_write(metrics_path, metrics);
  return result;
}

}  // namespace raceam
