#include "raceam/boundary.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <thread>

#include "raceam/io_util.hpp"

namespace raceam {

void GridSpec::validate() const {
  if (n_v < 2 || n_delta < 2 || n_theta < 2) {
    throw ValidationError("grid: all counts must be >= 2");
  }
  if (!(v_max > 0.0) || !(delta_max > 0.0)) {
    throw ValidationError("grid: ranges must be positive");
  }
}

double GridSpec::theta_step() const { return 2.0 * M_PI / n_theta; }

double GridSpec::theta_at(int k) const { return -M_PI + theta_step() * (k + 1); }

double rho_square(double theta) {
  double c = std::abs(std::cos(theta));
  double s = std::abs(std::sin(theta));
  double bound = std::numeric_limits<double>::infinity();
  if (c > 0.0) bound = 1.0 / c;
  if (s > 0.0) bound = std::min(bound, 1.0 / s);
  return bound;
}

VehicleState steady_state_for(double v, double delta, const VehicleParams& p) {
  VehicleState s;
  double beta = std::atan(p.l_r * std::tan(delta) / (p.l_f + p.l_r));
  s.v_x = v;
  s.v_y = v * std::sin(beta);
  s.yaw_rate = v * std::tan(delta) * std::cos(beta) / (p.l_f + p.l_r);
  s.steer = delta;
  return s;
}

double max_safe_length(const VehicleState& s, double theta, const VehicleParams& p,
                       int horizon, double dt, double tol) {
  double cap = rho_square(theta);
  auto safe = [&](double rho) {
    ControlInput u{rho * std::cos(theta), rho * std::sin(theta)};
    return check_friction(s, u, horizon, p, dt);
  };
  if (safe(cap)) return cap;
  if (!safe(0.0)) return 0.0;
  double lo = 0.0, hi = cap;  // lo passes, hi fails
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    (safe(mid) ? lo : hi) = mid;
  }
  return lo;
}

BoundaryTable build_table(const VehicleParams& p, const GridSpec& grid, int horizon,
                          int workers, double dt, double tol) {
  grid.validate();
  p.validate();
  BoundaryTable table;
  table.grid = grid;
  table.mu_max = p.mu_max;
  table.param_hash = p.hash();
  table.rho.resize(static_cast<std::size_t>(grid.n_v) * grid.n_delta * grid.n_theta);

  const int n_nodes = grid.n_v * grid.n_delta;
  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      int node = next.fetch_add(1);
      if (node >= n_nodes) return;
      int i = node / grid.n_delta;
      int j = node % grid.n_delta;
      VehicleState s = steady_state_for(grid.v_at(i), grid.delta_at(j), p);
      for (int k = 0; k < grid.n_theta; ++k) {
        table.at(i, j, k) = max_safe_length(s, grid.theta_at(k), p, horizon, dt, tol);
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  return table;
}

double lookup(const BoundaryTable& table, double v, double delta, double theta,
              bool conservative) {
  const GridSpec& g = table.grid;
  double fv = std::clamp(v, 0.0, g.v_max) / g.v_max * (g.n_v - 1);
  double fd = (std::clamp(delta, -g.delta_max, g.delta_max) + g.delta_max) /
              (2.0 * g.delta_max) * (g.n_delta - 1);
  theta = wrap_angle(theta);
  double ft = (theta - g.theta_at(0)) / g.theta_step();  // may be negative: wraps

  int i0 = std::min(static_cast<int>(fv), g.n_v - 2);
  int j0 = std::min(static_cast<int>(fd), g.n_delta - 2);
  double tv = fv - i0, td = fd - j0;
  double kf = std::floor(ft);
  double tt = ft - kf;
  int k0 = static_cast<int>(kf) % g.n_theta;
  if (k0 < 0) k0 += g.n_theta;
  int k1 = (k0 + 1) % g.n_theta;

  double c[2][2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      c[a][b][0] = table.at(i0 + a, j0 + b, k0);
      c[a][b][1] = table.at(i0 + a, j0 + b, k1);
    }
  if (conservative) {
    double m = c[0][0][0];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int d = 0; d < 2; ++d) m = std::min(m, c[a][b][d]);
    return m;
  }
  auto lerp = [](double x, double y, double t) { return x + t * (y - x); };
  double v00 = lerp(c[0][0][0], c[0][0][1], tt);
  double v01 = lerp(c[0][1][0], c[0][1][1], tt);
  double v10 = lerp(c[1][0][0], c[1][0][1], tt);
  double v11 = lerp(c[1][1][0], c[1][1][1], tt);
  return lerp(lerp(v00, v01, td), lerp(v10, v11, td), tv);
}

ControlInput map_action(const BoundaryTable& table, double v, double delta, double a_x,
                        double a_y, bool conservative) {
  double rho_a = std::hypot(a_x, a_y);
  if (rho_a == 0.0) return {0.0, 0.0};
  double theta = std::atan2(a_y, a_x);
  double rho_hat = lookup(table, v, delta, theta, conservative);
  if (rho_a <= rho_hat) return {a_x, a_y};
  double scale = rho_hat / rho_a;
  return {a_x * scale, a_y * scale};
}

namespace {
constexpr char kMagic[4] = {'A', 'M', 'B', 'T'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_table(const BoundaryTable& table, const std::filesystem::path& path) {
  std::string buf;
  buf.reserve(64 + table.rho.size() * 8);
  append_bytes(buf, kMagic, 4);
  append_u32(buf, kVersion);
  append_bytes(buf, table.param_hash.data(), table.param_hash.size());
  append_u32(buf, static_cast<std::uint32_t>(table.grid.n_v));
  append_u32(buf, static_cast<std::uint32_t>(table.grid.n_delta));
  append_u32(buf, static_cast<std::uint32_t>(table.grid.n_theta));
  append_f64(buf, 0.0);
  append_f64(buf, table.grid.v_max);
  append_f64(buf, -table.grid.delta_max);
  append_f64(buf, table.grid.delta_max);
  append_f64(buf, -M_PI);
  append_f64(buf, M_PI);
  append_f64(buf, table.mu_max);
  for (double r : table.rho) append_f64(buf, r);
  atomic_write(path, buf);
}

BoundaryTable load_table(const std::filesystem::path& path) {
  std::string buf = read_file(path);
  BinReader r(buf);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("table file: bad magic");
  }
  std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw ValidationError("table file: unsupported version " + std::to_string(version));
  }
  BoundaryTable table;
  r.bytes(table.param_hash.data(), table.param_hash.size());
  table.grid.n_v = static_cast<int>(r.u32());
  table.grid.n_delta = static_cast<int>(r.u32());
  table.grid.n_theta = static_cast<int>(r.u32());
  double v_min = r.f64();
  table.grid.v_max = r.f64();
  double delta_min = r.f64();
  table.grid.delta_max = r.f64();
  r.f64();  // theta range is fixed (-pi, pi]
  r.f64();
  table.mu_max = r.f64();
  if (v_min != 0.0 || delta_min != -table.grid.delta_max) {
    throw ValidationError("table file: unexpected grid ranges");
  }
  table.grid.validate();
  std::size_t n =
      static_cast<std::size_t>(table.grid.n_v) * table.grid.n_delta * table.grid.n_theta;
  if (r.remaining() != n * 8) {
    throw ValidationError("table file: size mismatch (corrupt length header?)");
  }
  table.rho.resize(n);
  for (std::size_t i = 0; i < n; ++i) table.rho[i] = r.f64();
  for (double v : table.rho) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("table file: bad entry");
  }
  return table;
}

bool table_matches_params(const BoundaryTable& table, const VehicleParams& p) {
  return table.param_hash == p.hash();
}

}  // namespace raceam
