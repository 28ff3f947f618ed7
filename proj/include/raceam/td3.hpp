#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "raceam/env.hpp"
#include "raceam/mlp.hpp"

namespace raceam {

struct Td3Config {
  double gamma = 0.99;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double tau = 0.005;  // target soft-update rate
  int batch_size = 256;
  std::size_t buffer_capacity = 1'000'000;
  double sigma_explore = 0.1;
  double sigma_target = 0.2;
  double noise_clip = 0.5;
  int policy_delay = 2;
  std::uint64_t warmup_steps = 5000;  // uniform random actions, no learning
  std::uint64_t eval_interval = 10000;
  int eval_episodes = 3;
  std::vector<int> hidden = {256, 256};

  void validate() const;  // throws ValidationError
};

struct Transition {
  Eigen::VectorXd obs;
  Eigen::Vector2d action;
  double reward = 0.0;
  Eigen::VectorXd next_obs;
  bool done = false;
};

/// Batch of transitions in column-major matrix form.
struct Batch {
  Eigen::MatrixXd obs;       // O x N
  Eigen::MatrixXd action;    // A x N
  Eigen::VectorXd reward;    // N
  Eigen::MatrixXd next_obs;  // O x N
  Eigen::VectorXd done;      // N, 0 or 1
};

/// Fixed-capacity ring buffer; oldest transitions are overwritten first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }

  /// Uniform sample of `n` distinct indices (Floyd's algorithm).
  std::vector<std::size_t> sample_indices(std::mt19937_64& rng, std::size_t n) const;
  Batch gather(const std::vector<std::size_t>& idx) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

/// Twin-delayed deep deterministic policy gradient agent: one actor and two
/// critics, each with a soft-updated target copy.
class Td3Agent {
 public:
  Td3Agent(int obs_dim, int act_dim, Td3Config config, std::uint64_t seed);

  Eigen::VectorXd act(const Eigen::VectorXd& obs) const;  // noise-free
  Eigen::VectorXd act_explore(const Eigen::VectorXd& obs);
  Eigen::VectorXd act_random();  // warm-up: uniform in [-1,1]^A

  Eigen::VectorXd compute_targets(const Batch& batch);
  std::pair<double, double> critic_update(const Batch& batch, const Eigen::VectorXd& y);
  double actor_update(const Batch& batch);
  void update_targets();

  /// One full TD3 iteration on a sampled batch; returns (loss_c1, loss_c2).
  std::pair<double, double> train_step(const ReplayBuffer& buffer);

  void save(const std::filesystem::path& path) const;
  static Td3Agent load(const std::filesystem::path& path);

  const Td3Config& config() const { return config_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  std::uint64_t iteration() const { return iteration_; }
  void set_iteration(std::uint64_t it) { iteration_ = it; }
  std::uint64_t learn_steps() const { return learn_steps_; }
  std::mt19937_64& rng() { return rng_; }

  Mlp& actor() { return actor_; }
  Mlp& actor_target() { return actor_target_; }
  Mlp& critic(int i) { return i == 0 ? critic1_ : critic2_; }
  Mlp& critic_target(int i) { return i == 0 ? critic1_t_ : critic2_t_; }

 private:
  Td3Agent(Td3Config config);  // uninitialized shell for load()

  int obs_dim_ = 0;
  int act_dim_ = 0;
  Td3Config config_;
  std::uint64_t iteration_ = 0;    // environment steps taken by train()
  std::uint64_t learn_steps_ = 0;  // gradient iterations (drives the delay)
  std::mt19937_64 rng_;

  Mlp actor_, actor_target_;
  Mlp critic1_, critic2_, critic1_t_, critic2_t_;
  Adam opt_actor_, opt_c1_, opt_c2_;
};

struct EvalEpisode {
  bool success = false;
  int laps = 0;
  double flying_lap = 0.0;  // seconds; 0 when fewer than two laps
  double reward = 0.0;
  std::uint64_t violations = 0;
};

struct EvalReport {
  std::vector<EvalEpisode> episodes;
  double success_rate = 0.0;
  double best_flying_lap = 0.0;  // 0 when no episode completed two laps
  double mean_reward = 0.0;
  std::uint64_t violations = 0;
};

/// Deterministic-policy evaluation: episodes start on the finish line with a
/// per-episode initial speed drawn from `seed`; success means finishing at
/// least two forward laps, and the second lap's duration is the flying lap.
EvalReport evaluate(const Td3Agent& agent, RaceEnv& env, int episodes, std::uint64_t seed,
                    double speed_min = 0.0, double speed_max = 30.0);

struct TrainOptions {
  std::uint64_t iterations = 300000;
  std::filesystem::path out_dir;
  bool verbose = true;
  std::uint64_t eval_seed = 1;
};

struct TrainResult {
  std::uint64_t iterations = 0;
  std::uint64_t episodes = 0;
  std::uint64_t violations = 0;  // cumulative friction-violation steps
  double last_eval_success_rate = 0.0;
};

/// TD3-AM training loop. Writes `metrics.csv` and periodic `checkpoint.bin`
/// snapshots into out_dir; environment steps count as iterations, and
/// learning starts after the warm-up period.
TrainResult train(Td3Agent& agent, RaceEnv& env, const TrainOptions& opts);

}  // namespace raceam
