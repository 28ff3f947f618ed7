#include "raceam/env.hpp"

#include <cmath>
#include <sstream>

#include "raceam/io_util.hpp"

namespace raceam {

ConstraintMode parse_constraint_mode(const std::string& name) {
  if (name == "am") return ConstraintMode::kActionMap;
  if (name == "penalty") return ConstraintMode::kPenalty;
  if (name == "none") return ConstraintMode::kNone;
  throw ValidationError("unknown constraint mode: " + name + " (am|penalty|none)");
}

RaceEnv::RaceEnv(Track track, VehicleParams params, EpisodeConfig config,
                 const BoundaryTable* table)
    : track_(std::move(track)),
      params_(std::move(params)),
      config_(std::move(config)),
      table_(table) {
  params_.validate();
  if (config_.max_steps < 1) throw ValidationError("env: max_steps must be >= 1");
  if (config_.mode == ConstraintMode::kActionMap && table_ == nullptr) {
    throw ValidationError("env: action-mapping mode needs a boundary table");
  }
  if (config_.fo_distances.empty()) {
    auto d = default_fo_distances();
    config_.fo_distances.assign(d.begin(), d.end());
  }
  for (std::size_t i = 1; i < config_.fo_distances.size(); ++i) {
    if (config_.fo_distances[i] <= config_.fo_distances[i - 1]) {
      throw ValidationError("env: forward-observation distances must be increasing");
    }
  }
  straights_ = straight_intervals(track_);
  for (auto& [a, b] : straights_) straight_total_ += b - a;
  rng_.seed(config_.seed);
}

int RaceEnv::observation_dim() const {
  return 5 + 2 * static_cast<int>(config_.fo_distances.size());
}

Observation RaceEnv::reset() {
  if (straights_.empty()) {
    throw ValidationError("env: track has no straight segment to start from");
  }
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double pick = u01(rng_) * straight_total_;
  double s = straights_.front().first;
  for (auto& [a, b] : straights_) {
    if (pick <= b - a) {
      s = track_.wrap_s(a + pick);
      break;
    }
    pick -= b - a;
  }
  double speed = config_.init_speed_min +
                 u01(rng_) * (config_.init_speed_max - config_.init_speed_min);
  VehicleState st;
  Eigen::Vector2d pos = track_.point_at(s);
  st.x = pos.x();
  st.y = pos.y();
  st.heading = track_.tangent_at(s);
  st.v_x = speed;
  return after_reset(st);
}

Observation RaceEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  return reset();
}

Observation RaceEnv::reset_at(double s, double speed) {
  VehicleState st;
  s = track_.wrap_s(s);
  Eigen::Vector2d pos = track_.point_at(s);
  st.x = pos.x();
  st.y = pos.y();
  st.heading = track_.tangent_at(s);
  st.v_x = speed;
  return after_reset(st);
}

Observation RaceEnv::reset_to_state(const VehicleState& s) { return after_reset(s); }

Observation RaceEnv::after_reset(const VehicleState& s) {
  state_ = s;
  // Low-speed starts take the kinematic lateral values immediately.
  if (state_.v_x <= kVSwitch) {
    double beta = std::atan(params_.l_r * std::tan(state_.steer) / (params_.l_f + params_.l_r));
    double v = state_.v_x / std::cos(beta);
    state_.v_y = v * std::sin(beta);
    state_.yaw_rate = v * std::tan(state_.steer) * std::cos(beta) / (params_.l_f + params_.l_r);
  }
  pose_ = project(track_, Eigen::Vector2d(state_.x, state_.y), state_.heading);
  done_ = false;
  steps_ = 0;
  time_ = 0.0;
  return observe();
}

Observation RaceEnv::observe() const {
  int n_fo = static_cast<int>(config_.fo_distances.size());
  Observation obs(5 + 2 * n_fo);
  obs[0] = std::clamp(state_.v_x / config_.v_norm, 0.0, 1.0);
  obs[1] = std::clamp(state_.yaw_rate / config_.omega_norm, -1.0, 1.0);
  obs[2] = std::clamp(state_.steer / params_.delta_max, -1.0, 1.0);
  obs[3] = std::clamp(pose_.d_c, -1.0, 1.0);
  obs[4] = pose_.rel_heading / M_PI;
  ForwardObservation fo = forward_observation(track_, pose_.s,
                                              Eigen::Vector2d(state_.x, state_.y),
                                              state_.heading, config_.fo_distances);
  double d_max = config_.fo_distances.back();
  for (int i = 0; i < n_fo; ++i) {
    obs[5 + 2 * i] = std::clamp(fo.points_body[i].x() / d_max, -1.0, 1.0);
    obs[5 + 2 * i + 1] = std::clamp(fo.points_body[i].y() / d_max, -1.0, 1.0);
  }
  return obs;
}

double RaceEnv::compute_reward(double v_x, double phi, bool off_track, bool wrong_way,
                               bool friction_violation, ConstraintMode mode) {
  double r = v_x * std::cos(phi);
  if (off_track) r += -100.0;
  if (wrong_way) r += -100.0;
  if (friction_violation && mode == ConstraintMode::kPenalty) r += -100.0;
  return r;
}

StepResult RaceEnv::step(const Eigen::Vector2d& virtual_action) {
  if (done_) throw std::logic_error("env: step() called on a terminal episode");
  if (!virtual_action.allFinite()) {
    throw std::invalid_argument("env: non-finite action");
  }
  Eigen::Vector2d a = virtual_action.cwiseMax(-1.0).cwiseMin(1.0);

  ControlInput u;
  switch (config_.mode) {
    case ConstraintMode::kActionMap:
      u = map_action(*table_, state_.v_x, state_.steer, a.x(), a.y(),
                     config_.conservative_margin);
      break;
    case ConstraintMode::kPenalty:
    case ConstraintMode::kNone:
      u = {a.x(), a.y()};
      break;
  }

  StepResult res;
  res.info.virtual_action = a;
  res.info.applied = u;
  res.info.friction_violation =
      !check_friction(state_, u, config_.check_horizon, params_, config_.dt);

  double prev_s = pose_.s;
  res.info.f_xy = rk4_step_max_force(state_, u, config_.dt, params_);
  ++steps_;
  time_ += config_.dt;

  pose_ = project(track_, Eigen::Vector2d(state_.x, state_.y), state_.heading, prev_s);
  res.info.pose = pose_;
  res.info.lap = lap_events(track_, prev_s, pose_.s);

  TerminalFlags flags = terminal_predicates(pose_);
  res.info.off_track = flags.off_track;
  res.info.wrong_way = flags.wrong_way;

  bool friction_terminal =
      config_.mode == ConstraintMode::kPenalty && res.info.friction_violation;
  done_ = flags.off_track || flags.wrong_way || friction_terminal ||
          steps_ >= config_.max_steps;

  res.reward = compute_reward(state_.v_x, pose_.rel_heading, flags.off_track,
                              flags.wrong_way, res.info.friction_violation, config_.mode);
  res.done = done_;
  res.obs = observe();
  return res;
}

void TrajectoryLog::add(double t, const VehicleState& s, const StepInfo& info,
                        double reward) {
  rows_.push_back({t, s.x, s.y, s.heading, s.v_x, s.v_y, s.yaw_rate, s.steer,
                   info.virtual_action.x(), info.virtual_action.y(), info.applied.u_x,
                   info.applied.u_y, info.f_xy, reward, info.pose.s, info.pose.d_c,
                   info.pose.rel_heading});
}

double TrajectoryLog::max_f_xy() const {
  double m = 0.0;
  for (const auto& r : rows_) m = std::max(m, r[12]);
  return m;
}

void TrajectoryLog::save(const std::filesystem::path& path) const {
  std::ostringstream os;
  os << "t,X,Y,psi,v_x,v_y,omega,delta,a_x_virtual,a_y_virtual,u_x,u_y,F_xy,reward,"
        "s,d_c,phi\n";
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) os << ",";
      os << format_double(r[i]);
    }
    os << "\n";
  }
  atomic_write(path, os.str());
}

}  // namespace raceam
