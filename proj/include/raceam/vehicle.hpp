#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>

namespace raceam {

/// Single-track vehicle model: physical parameters, state, force
/// computations, friction-circle check, and RK4 time integration.

struct VehicleParams {
  double m = 1860.0;          // vehicle mass [kg]
  double l_f = 1.17;          // CoG to front axle [m]
  double l_r = 1.77;          // CoG to rear axle [m]
  double R_w = 0.31;          // wheel radius [m]
  double C_af = 54500.0;      // front cornering stiffness [N/rad]
  double C_ar = 54500.0;      // rear cornering stiffness [N/rad]
  double f_r = 0.015;         // rolling resistance coefficient
  double delta_max = 0.61086523819801530;  // 35 deg [rad]
  double delta_dot_max = 0.7;              // steering rate limit [rad/s]
  double I_z = 4000.0;        // yaw inertia [kg m^2]
  double C_d = 0.3;           // drag coefficient
  double rho_A = 1.2258;      // air density [kg/m^3]
  double A_f = 2.05;          // frontal area [m^2]
  double P_max = 125000.0;    // max motor power [W]
  double K_m = 1550.0;        // motor torque coefficient [N m]
  double K_b = 16422.0;       // braking force coefficient [N]
  double mu_max = 1.15;       // max friction coefficient
  double g = 9.81;            // gravity [m/s^2]

  /// Crossover between constant-torque and constant-power traction.
  double v_base() const { return P_max * R_w / K_m; }
  /// Friction-circle bound mu_max * m * g.
  double friction_limit() const { return mu_max * m * g; }

  void validate() const;  // throws ValidationError

  /// Flat `key = value` config file; unknown keys rejected.
  static VehicleParams load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// SHA-256 over the canonical little-endian serialization of all fields.
  std::array<std::uint8_t, 32> hash() const;
};

struct VehicleState {
  double x = 0.0;         // earth frame [m]
  double y = 0.0;         // earth frame [m]
  double heading = 0.0;   // yaw psi [rad]
  double v_x = 0.0;       // longitudinal velocity, body frame [m/s]
  double v_y = 0.0;       // lateral velocity, body frame [m/s]
  double yaw_rate = 0.0;  // omega [rad/s]
  double steer = 0.0;     // front wheel angle delta [rad]
};

struct ControlInput {
  double u_x = 0.0;  // combined motor/brake channel in [-1, 1]
  double u_y = 0.0;  // normalized steering-rate channel in [-1, 1]
};

struct ForceBreakdown {
  double longitudinal = 0.0;   // F_tx: traction minus braking [N]
  double lateral_front = 0.0;  // F_yf [N]
  double lateral_rear = 0.0;   // F_yr [N]
  double aero = 0.0;           // F_aero [N]
  double rolling = 0.0;        // F_roll [N]
  double resultant = 0.0;      // |F_xy| = |(F_tx, F_yf + F_yr)| [N]
};

// Model constants (spec'd, not part of the parameter file).
inline constexpr double kVSwitch = 1.0;     // dynamic/kinematic lateral model switch [m/s]
inline constexpr double kRollEps = 0.1;     // rolling resistance cutoff speed [m/s]
inline constexpr double kDefaultDt = 0.01;  // simulation step [s]
inline constexpr int kDefaultHorizon = 50;  // friction-check horizon [steps]

double wrap_angle(double a);  // to (-pi, pi]

double traction_force(double v_x, double u_m, const VehicleParams& p);
double braking_force(double u_b, const VehicleParams& p);
std::pair<double, double> resistance_forces(double v_x, const VehicleParams& p);

/// Linear-tire lateral forces (F_yf, F_yr). Only valid in the dynamic
/// regime; throws std::domain_error if v_x <= kVSwitch.
std::pair<double, double> lateral_forces(const VehicleState& s, const VehicleParams& p);

/// Time derivative of the state, packed in a VehicleState.
VehicleState state_derivative(const VehicleState& s, const ControlInput& u,
                              const VehicleParams& p);

VehicleState rk4_step(const VehicleState& s, const ControlInput& u, double dt,
                      const VehicleParams& p);

/// Advances `s` one RK4 step and returns the maximum |F_xy| seen over the
/// step's four substates.
double rk4_step_max_force(VehicleState& s, const ControlInput& u, double dt,
                          const VehicleParams& p);

ForceBreakdown resultant_tire_force(const VehicleState& s, const ControlInput& u,
                                    const VehicleParams& p);

/// Holds `u` constant over `horizon_steps` RK4 steps; true iff the friction
/// circle |F_xy| <= mu_max*m*g holds at the initial state, every RK4
/// substate, and the final state.
bool check_friction(const VehicleState& s, const ControlInput& u, int horizon_steps,
                    const VehicleParams& p, double dt = kDefaultDt);

}  // namespace raceam
