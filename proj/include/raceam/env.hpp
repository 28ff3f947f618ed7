#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "raceam/boundary.hpp"
#include "raceam/track.hpp"
#include "raceam/vehicle.hpp"

namespace raceam {

using Observation = Eigen::VectorXd;

enum class ConstraintMode { kActionMap, kPenalty, kNone };

struct EpisodeConfig {
  int max_steps = 10000;
  double init_speed_min = 0.0;
  double init_speed_max = 30.0;
  ConstraintMode mode = ConstraintMode::kActionMap;
  std::uint64_t seed = 0;
  double dt = kDefaultDt;
  int check_horizon = kDefaultHorizon;  // friction-check horizon at each step
  bool conservative_margin = true;      // min-of-8 lookup in map_action
  double v_norm = 30.0;                 // observation scale for v_x
  double omega_norm = 3.0;              // observation scale for yaw rate
  std::vector<double> fo_distances;     // empty -> default schedule
};

struct StepInfo {
  ControlInput applied;            // real control after mapping/clamping
  Eigen::Vector2d virtual_action;  // clamped network action
  double f_xy = 0.0;               // max |F_xy| over the step's RK4 substates
  bool friction_violation = false;
  bool off_track = false;
  bool wrong_way = false;
  LapEvent lap;
  TrackPose pose;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// The race-driving MDP: wraps vehicle dynamics + track geometry into a
/// gym-style reset/step interface with normalized observations.
class RaceEnv {
 public:
  RaceEnv(Track track, VehicleParams params, EpisodeConfig config,
          const BoundaryTable* table = nullptr);

  /// Random start: centerline of a random straight-segment station,
  /// heading along the track, v_x ~ U[speed range].
  Observation reset();
  Observation reset(std::uint64_t seed);

  /// Start on the centerline at station s with the given speed.
  Observation reset_at(double s, double speed);

  /// Start from an arbitrary dynamic state (tooling and tests).
  Observation reset_to_state(const VehicleState& s);

  StepResult step(const Eigen::Vector2d& virtual_action);

  Observation observe() const;

  static double compute_reward(double v_x, double phi, bool off_track, bool wrong_way,
                               bool friction_violation, ConstraintMode mode);

  bool done() const { return done_; }
  double time() const { return time_; }
  int steps() const { return steps_; }
  const VehicleState& state() const { return state_; }
  const TrackPose& pose() const { return pose_; }
  const Track& track() const { return track_; }
  const BoundaryTable* table() const { return table_; }
  const VehicleParams& params() const { return params_; }
  const EpisodeConfig& config() const { return config_; }
  int observation_dim() const;

 private:
  Observation after_reset(const VehicleState& s);

  Track track_;
  VehicleParams params_;
  EpisodeConfig config_;
  const BoundaryTable* table_;
  std::vector<std::pair<double, double>> straights_;
  double straight_total_ = 0.0;

  std::mt19937_64 rng_;
  VehicleState state_;
  TrackPose pose_;
  bool done_ = true;
  int steps_ = 0;
  double time_ = 0.0;
};

/// Per-step trajectory rows for the rollout CSV export.
class TrajectoryLog {
 public:
  void add(double t, const VehicleState& s, const StepInfo& info, double reward);
  void save(const std::filesystem::path& path) const;
  std::size_t rows() const { return rows_.size(); }
  double max_f_xy() const;

 private:
  std::vector<std::array<double, 17>> rows_;
};

ConstraintMode parse_constraint_mode(const std::string& name);  // am|penalty|none

}  // namespace raceam
