#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "raceam/vehicle.hpp"

namespace raceam {

/// Discretization of the admissible-input boundary function
/// rho = Psi(v, delta, theta). theta is periodic.
struct GridSpec {
  int n_v = 64;
  int n_delta = 64;
  int n_theta = 72;
  double v_max = 30.0;
  double delta_max = 0.61086523819801530;

  void validate() const;  // counts >= 2, ranges positive

  double v_at(int i) const { return v_max * i / (n_v - 1); }
  double delta_at(int j) const { return -delta_max + 2.0 * delta_max * j / (n_delta - 1); }
  // Evenly spaced over (-pi, pi], periodic with step 2*pi/n_theta.
  double theta_step() const;
  double theta_at(int k) const;
};

/// Dense sampled boundary table; immutable once built.
struct BoundaryTable {
  GridSpec grid;
  double mu_max = 0.0;                   // friction coefficient used at build time
  std::array<std::uint8_t, 32> param_hash{};
  std::vector<double> rho;               // row-major [i][j][k]

  double& at(int i, int j, int k) {
    return rho[(static_cast<std::size_t>(i) * grid.n_delta + j) * grid.n_theta + k];
  }
  double at(int i, int j, int k) const {
    return rho[(static_cast<std::size_t>(i) * grid.n_delta + j) * grid.n_theta + k];
  }
};

/// Unit-square radial bound: the farthest an input of direction theta can
/// reach inside [-1, 1]^2.
double rho_square(double theta);

/// The sampling state at grid node (v, delta): kinematic steady-cornering
/// values for v_y and yaw rate.
VehicleState steady_state_for(double v, double delta, const VehicleParams& p);

/// Largest input length rho in direction theta passing check_friction,
/// found by bisection (tolerance `tol` in rho), capped at rho_square(theta).
double max_safe_length(const VehicleState& s, double theta, const VehicleParams& p,
                       int horizon = kDefaultHorizon, double dt = kDefaultDt,
                       double tol = 1e-3);

/// Fills the full table. Parallel over (v, delta) nodes; output is
/// bit-identical for any worker count.
BoundaryTable build_table(const VehicleParams& p, const GridSpec& grid,
                          int horizon = kDefaultHorizon, int workers = 1,
                          double dt = kDefaultDt, double tol = 1e-3);

/// Trilinear interpolation with periodic wrap in theta; v and delta are
/// clamped into grid range. With `conservative`, returns the minimum of the
/// 8 enclosing node values instead of the blend.
double lookup(const BoundaryTable& table, double v, double delta, double theta,
              bool conservative = false);

/// Polar-clipping action map: preserves the action's direction, clips its
/// length to the interpolated boundary. (0,0) maps to (0,0).
ControlInput map_action(const BoundaryTable& table, double v, double delta, double a_x,
                        double a_y, bool conservative = true);

// Binary table file: magic "AMBT", little-endian.
void save_table(const BoundaryTable& table, const std::filesystem::path& path);
BoundaryTable load_table(const std::filesystem::path& path);

/// True iff the table was built with exactly these vehicle parameters.
bool table_matches_params(const BoundaryTable& table, const VehicleParams& p);

}  // namespace raceam
