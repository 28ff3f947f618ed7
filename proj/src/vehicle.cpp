#include "raceam/vehicle.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "raceam/io_util.hpp"

namespace raceam {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

namespace {

constexpr const char* kParamKeys[] = {
    "m",   "l_f", "l_r", "R_w",   "C_af",  "C_ar", "f_r", "delta_max", "delta_dot_max",
    "I_z", "C_d", "rho_A", "A_f", "P_max", "K_m",  "K_b", "mu_max",    "g"};

double* field_by_key(VehicleParams& p, const std::string& key) {
  if (key == "m") return &p.m;
  if (key == "l_f") return &p.l_f;
  if (key == "l_r") return &p.l_r;
  if (key == "R_w") return &p.R_w;
  if (key == "C_af") return &p.C_af;
  if (key == "C_ar") return &p.C_ar;
  if (key == "f_r") return &p.f_r;
  if (key == "delta_max") return &p.delta_max;
  if (key == "delta_dot_max") return &p.delta_dot_max;
  if (key == "I_z") return &p.I_z;
  if (key == "C_d") return &p.C_d;
  if (key == "rho_A") return &p.rho_A;
  if (key == "A_f") return &p.A_f;
  if (key == "P_max") return &p.P_max;
  if (key == "K_m") return &p.K_m;
  if (key == "K_b") return &p.K_b;
  if (key == "mu_max") return &p.mu_max;
  if (key == "g") return &p.g;
  return nullptr;
}

}  // namespace

void VehicleParams::validate() const {
  const struct { const char* name; double v; } positives[] = {
      {"m", m},       {"l_f", l_f},     {"l_r", l_r},   {"R_w", R_w},
      {"C_af", C_af}, {"C_ar", C_ar},   {"f_r", f_r},   {"delta_max", delta_max},
      {"delta_dot_max", delta_dot_max}, {"I_z", I_z},   {"C_d", C_d},
      {"rho_A", rho_A}, {"A_f", A_f},   {"P_max", P_max}, {"K_m", K_m},
      {"K_b", K_b},   {"mu_max", mu_max}, {"g", g}};
  for (const auto& f : positives) {
    if (!(f.v > 0.0) || !std::isfinite(f.v)) {
      throw ValidationError(std::string("vehicle parameter must be positive: ") + f.name);
    }
  }
}

VehicleParams VehicleParams::load(const std::filesystem::path& path) {
  VehicleParams p;
  auto kv = parse_key_value(read_file(path));
  for (const auto& [key, value] : kv) {
    char* end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0') {
      throw ValidationError("vehicle config: bad number for key " + key);
    }
    if (key == "v_base") {
      // Derived quantity; accepted only if consistent with P_max, R_w, K_m.
      continue;
    }
    double* field = field_by_key(p, key);
    if (!field) throw ValidationError("vehicle config: unknown key " + key);
    *field = v;
  }
  if (auto it = kv.find("v_base"); it != kv.end()) {
    double declared = std::strtod(it->second.c_str(), nullptr);
    if (std::abs(declared - p.v_base()) > 1e-9 * std::abs(p.v_base())) {
      throw ValidationError("vehicle config: v_base inconsistent with P_max*R_w/K_m");
    }
  }
  p.validate();
  return p;
}

void VehicleParams::save(const std::filesystem::path& path) const {
  std::ostringstream os;
  VehicleParams copy = *this;
  for (const char* key : kParamKeys) {
    os << key << " = " << format_double(*field_by_key(copy, key)) << "\n";
  }
  atomic_write(path, os.str());
}

std::array<std::uint8_t, 32> VehicleParams::hash() const {
  std::string buf;
  VehicleParams copy = *this;
  for (const char* key : kParamKeys) append_f64(buf, *field_by_key(copy, key));
  return sha256(buf.data(), buf.size());
}

double traction_force(double v_x, double u_m, const VehicleParams& p) {
  double torque_limited = p.K_m * u_m / p.R_w;
  if (v_x <= p.v_base()) return torque_limited;
  return std::min(torque_limited, p.P_max / v_x);
}

double braking_force(double u_b, const VehicleParams& p) { return p.K_b * u_b; }

std::pair<double, double> resistance_forces(double v_x, const VehicleParams& p) {
  double aero = 0.5 * p.rho_A * p.C_d * p.A_f * v_x * v_x;
  double roll = v_x > kRollEps ? p.f_r * p.m * p.g : 0.0;
  return {aero, roll};
}

std::pair<double, double> lateral_forces(const VehicleState& s, const VehicleParams& p) {
  if (s.v_x <= kVSwitch) {
    throw std::domain_error("lateral_forces: dynamic tire model needs v_x > v_switch");
  }
  double theta_vf = std::atan((s.v_y + s.yaw_rate * p.l_f) / s.v_x);
  double theta_vr = std::atan((s.v_y - s.yaw_rate * p.l_r) / s.v_x);
  double f_yf = 2.0 * p.C_af * (s.steer - theta_vf);
  double f_yr = 2.0 * p.C_ar * (-theta_vr);
  return {f_yf, f_yr};
}

namespace {

// Split the combined channel: throttle and brake are mutually exclusive.
inline void split_ux(double u_x, double& u_m, double& u_b) {
  if (u_x >= 0.0) {
    u_m = u_x;
    u_b = 0.0;
  } else {
    u_m = 0.0;
    u_b = -u_x;
  }
}

inline double kinematic_beta(double steer, const VehicleParams& p) {
  return std::atan(p.l_r * std::tan(steer) / (p.l_f + p.l_r));
}

}  // namespace

VehicleState state_derivative(const VehicleState& s, const ControlInput& u,
                              const VehicleParams& p) {
  double u_m, u_b;
  split_ux(u.u_x, u_m, u_b);
  double f_tx = traction_force(std::max(s.v_x, 0.0), u_m, p) - braking_force(u_b, p);
  auto [f_aero, f_roll] = resistance_forces(std::max(s.v_x, 0.0), p);

  double net = f_tx - f_aero - f_roll;
  if (s.v_x <= 0.0 && net < 0.0) net = 0.0;  // braking cannot push the car backwards

  VehicleState d;
  d.v_x = net / p.m;

  double beta, v;
  if (s.v_x > kVSwitch) {
    auto [f_yf, f_yr] = lateral_forces(s, p);
    beta = std::atan2(s.v_y, s.v_x);
    v = std::hypot(s.v_x, s.v_y);
    d.v_y = (f_yf + f_yr) / p.m - s.yaw_rate * s.v_x;
    d.yaw_rate = (f_yf * p.l_f - f_yr * p.l_r) / p.I_z;
    d.heading = s.yaw_rate;
  } else {
    // Kinematic regime: slip angle and turning rate follow directly from
    // the steering geometry; v_y and yaw_rate are assigned after the step.
    beta = kinematic_beta(s.steer, p);
    v = std::max(s.v_x, 0.0) / std::cos(beta);
    d.v_y = 0.0;
    d.yaw_rate = 0.0;
    d.heading = v * std::tan(s.steer) * std::cos(beta) / (p.l_f + p.l_r);
  }
  d.x = v * std::cos(s.heading + beta);
  d.y = v * std::sin(s.heading + beta);

  d.steer = u.u_y * p.delta_dot_max;
  if ((s.steer >= p.delta_max && d.steer > 0.0) ||
      (s.steer <= -p.delta_max && d.steer < 0.0)) {
    d.steer = 0.0;
  }
  return d;
}

namespace {

inline VehicleState axpy(const VehicleState& s, double a, const VehicleState& d) {
  VehicleState r;
  r.x = s.x + a * d.x;
  r.y = s.y + a * d.y;
  r.heading = s.heading + a * d.heading;
  r.v_x = s.v_x + a * d.v_x;
  r.v_y = s.v_y + a * d.v_y;
  r.yaw_rate = s.yaw_rate + a * d.yaw_rate;
  r.steer = s.steer + a * d.steer;
  return r;
}

VehicleState finalize_step(VehicleState s, const VehicleParams& p) {
  s.v_x = std::max(s.v_x, 0.0);
  s.steer = std::clamp(s.steer, -p.delta_max, p.delta_max);
  s.heading = wrap_angle(s.heading);
  if (s.v_x <= kVSwitch) {
    double beta = std::atan(p.l_r * std::tan(s.steer) / (p.l_f + p.l_r));
    double v = s.v_x / std::cos(beta);
    s.v_y = v * std::sin(beta);
    s.yaw_rate = v * std::tan(s.steer) * std::cos(beta) / (p.l_f + p.l_r);
  }
  bool finite = std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.heading) &&
                std::isfinite(s.v_x) && std::isfinite(s.v_y) &&
                std::isfinite(s.yaw_rate) && std::isfinite(s.steer);
  if (!finite) throw std::runtime_error("rk4_step: non-finite state");
  return s;
}

}  // namespace

VehicleState rk4_step(const VehicleState& s, const ControlInput& u, double dt,
                      const VehicleParams& p) {
  VehicleState k1 = state_derivative(s, u, p);
  VehicleState k2 = state_derivative(axpy(s, 0.5 * dt, k1), u, p);
  VehicleState k3 = state_derivative(axpy(s, 0.5 * dt, k2), u, p);
  VehicleState k4 = state_derivative(axpy(s, dt, k3), u, p);
  VehicleState sum = k1;
  sum = axpy(sum, 2.0, k2);
  sum = axpy(sum, 2.0, k3);
  sum = axpy(sum, 1.0, k4);
  return finalize_step(axpy(s, dt / 6.0, sum), p);
}

ForceBreakdown resultant_tire_force(const VehicleState& s, const ControlInput& u,
                                    const VehicleParams& p) {
  ForceBreakdown f;
  double u_m, u_b;
  split_ux(u.u_x, u_m, u_b);
  f.longitudinal = traction_force(std::max(s.v_x, 0.0), u_m, p) - braking_force(u_b, p);
  if (s.v_x > kVSwitch) {
    auto [f_yf, f_yr] = lateral_forces(s, p);
    f.lateral_front = f_yf;
    f.lateral_rear = f_yr;
  }
  auto [aero, roll] = resistance_forces(std::max(s.v_x, 0.0), p);
  f.aero = aero;
  f.rolling = roll;
  f.resultant = std::hypot(f.longitudinal, f.lateral_front + f.lateral_rear);
  return f;
}

double rk4_step_max_force(VehicleState& s, const ControlInput& u, double dt,
                          const VehicleParams& p) {
  auto fmag = [&](const VehicleState& st) {
    return resultant_tire_force(st, u, p).resultant;
  };
  VehicleState k1 = state_derivative(s, u, p);
  VehicleState s2 = axpy(s, 0.5 * dt, k1);
  VehicleState k2 = state_derivative(s2, u, p);
  VehicleState s3 = axpy(s, 0.5 * dt, k2);
  VehicleState k3 = state_derivative(s3, u, p);
  VehicleState s4 = axpy(s, dt, k3);
  VehicleState k4 = state_derivative(s4, u, p);
  double max_f = std::max(std::max(fmag(s), fmag(s2)), std::max(fmag(s3), fmag(s4)));
  VehicleState sum = k1;
  sum = axpy(sum, 2.0, k2);
  sum = axpy(sum, 2.0, k3);
  sum = axpy(sum, 1.0, k4);
  s = finalize_step(axpy(s, dt / 6.0, sum), p);
  return max_f;
}

bool check_friction(const VehicleState& s, const ControlInput& u, int horizon_steps,
                    const VehicleParams& p, double dt) {
  double limit = p.friction_limit();
  VehicleState cur = s;
  for (int i = 0; i < horizon_steps; ++i) {
    if (rk4_step_max_force(cur, u, dt, p) > limit) return false;
  }
  return resultant_tire_force(cur, u, p).resultant <= limit;
}

}  // namespace raceam
