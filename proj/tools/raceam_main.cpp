// raceam: boundary-table building, TD3 training, evaluation, and data export.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "raceam/boundary.hpp"
#include "raceam/env.hpp"
#include "raceam/io_util.hpp"
#include "raceam/td3.hpp"
#include "raceam/track.hpp"
#include "raceam/vehicle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace raceam;

namespace {

constexpr std::uint64_t kDefaultSeed = 1;

struct Options {
  std::string vehicle;
  std::string track;
  std::string table;
  std::string checkpoint;
  std::string out = "out";
  std::uint64_t seed = kDefaultSeed;
  std::string mode = "am";
  double mu_max = -1.0;  // <0: use vehicle config value
  std::string grid;      // "Nv,Nd,Nt"
  std::uint64_t iters = 300000;
  int episodes = 20;
  int workers = 1;
  double speed = 0.0;
  double slice_v = 15.4;
  double slice_delta_min_deg = -35.0;
  double slice_delta_max_deg = 35.0;
  int slice_delta_count = 15;
};

VehicleParams load_vehicle(const Options& o) {
  VehicleParams p = o.vehicle.empty() ? VehicleParams{} : VehicleParams::load(o.vehicle);
  if (o.mu_max > 0.0) p.mu_max = o.mu_max;
  p.validate();
  return p;
}

Track load_track(const Options& o) {
  if (o.track.empty()) throw ValidationError("missing --track");
  if (fs::exists(o.track)) return Track::load(o.track);
  return lookup_builtin_track(o.track);
}

GridSpec parse_grid(const std::string& text, double delta_max) {
  GridSpec g;
  g.delta_max = delta_max;
  if (text.empty()) return g;
  int nv = 0, nd = 0, nt = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d", &nv, &nd, &nt) != 3) {
    throw ValidationError("--grid expects Nv,Nd,Nt");
  }
  g.n_v = nv;
  g.n_delta = nd;
  g.n_theta = nt;
  g.validate();
  return g;
}

BoundaryTable load_checked_table(const Options& o, const VehicleParams& p) {
  if (o.table.empty()) throw ValidationError("missing --table (required in am mode)");
  BoundaryTable t = load_table(o.table);
  if (!table_matches_params(t, p)) {
    throw ValidationError("table was built for different vehicle parameters");
  }
  return t;
}

EpisodeConfig make_episode_config(const Options& o) {
  EpisodeConfig cfg;
  cfg.mode = parse_constraint_mode(o.mode);
  cfg.seed = o.seed;
  return cfg;
}

void write_json(const fs::path& path, const json& j) {
  atomic_write(path, j.dump(2) + "\n");
}

int cmd_build_table(const Options& o) {
  VehicleParams p = load_vehicle(o);
  GridSpec grid = parse_grid(o.grid, p.delta_max);
  fs::create_directories(o.out);
  auto t0 = std::chrono::steady_clock::now();
  BoundaryTable table = build_table(p, grid, kDefaultHorizon, o.workers);
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  double lo = 2.0, hi = 0.0, sum = 0.0;
  for (double r : table.rho) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    sum += r;
  }
  // Mirror symmetry of the dynamics: rho(v, -delta, -theta) == rho(v, delta, theta)
  // up to the bisection tolerance. theta_at(k) covers (-pi, pi]; -theta_at(k)
  // lands on a node again except at the endpoint theta = pi.
  double sym = 0.0;
  for (int i = 0; i < grid.n_v; ++i) {
    for (int j = 0; j < grid.n_delta; ++j) {
      for (int k = 0; k + 1 < grid.n_theta; ++k) {
        int jm = grid.n_delta - 1 - j;
        int km = grid.n_theta - 2 - k;
        sym = std::max(sym, std::abs(table.at(i, j, k) - table.at(i, jm, km)));
      }
    }
  }

  fs::path table_path = fs::path(o.out) / "table.bin";
  save_table(table, table_path);
  json report = {
      {"table", table_path.string()},
      {"wall_time_s", wall},
      {"grid", {grid.n_v, grid.n_delta, grid.n_theta}},
      {"mu_max", table.mu_max},
      {"rho_min", lo},
      {"rho_max", hi},
      {"rho_mean", sum / static_cast<double>(table.rho.size())},
      {"symmetry_residual", sym},
  };
  write_json(fs::path(o.out) / "build_report.json", report);
  std::printf("wrote %s (%.1f s, symmetry residual %.2e)\n", table_path.c_str(), wall, sym);
  return 0;
}

int cmd_train(const Options& o) {
  VehicleParams p = load_vehicle(o);
  Track track = load_track(o);
  EpisodeConfig ecfg = make_episode_config(o);
  BoundaryTable table;
  const BoundaryTable* table_ptr = nullptr;
  if (ecfg.mode == ConstraintMode::kActionMap) {
    table = load_checked_table(o, p);
    table_ptr = &table;
  }
  RaceEnv env(track, p, ecfg, table_ptr);
  Td3Config tcfg;
  Td3Agent agent(env.observation_dim(), 2, tcfg, o.seed);
  TrainOptions topts;
  topts.iterations = o.iters;
  topts.out_dir = o.out;
  topts.eval_seed = o.seed + 1;
  TrainResult res = train(agent, env, topts);
  std::printf("trained %llu iterations, %llu episodes, %llu violations, "
              "last eval success %.2f\n",
              static_cast<unsigned long long>(res.iterations),
              static_cast<unsigned long long>(res.episodes),
              static_cast<unsigned long long>(res.violations), res.last_eval_success_rate);
  return 0;
}

int cmd_evaluate(const Options& o) {
  VehicleParams p = load_vehicle(o);
  Track track = load_track(o);
  EpisodeConfig ecfg = make_episode_config(o);
  BoundaryTable table;
  const BoundaryTable* table_ptr = nullptr;
  if (ecfg.mode == ConstraintMode::kActionMap) {
    table = load_checked_table(o, p);
    table_ptr = &table;
  }
  if (o.checkpoint.empty()) throw ValidationError("missing --checkpoint");
  Td3Agent agent = Td3Agent::load(o.checkpoint);
  RaceEnv env(track, p, ecfg, table_ptr);
  if (agent.obs_dim() != env.observation_dim()) {
    throw ValidationError("checkpoint observation dim does not match environment");
  }
  EvalReport rep = evaluate(agent, env, o.episodes, o.seed);
  json episodes = json::array();
  for (const EvalEpisode& e : rep.episodes) {
    episodes.push_back({{"success", e.success},
                        {"laps", e.laps},
                        {"flying_lap_s", e.flying_lap},
                        {"reward", e.reward},
                        {"violations", e.violations}});
  }
  json report = {
      {"episodes", episodes},
      {"success_rate", rep.success_rate},
      {"best_flying_lap_s", rep.best_flying_lap},
      {"mean_reward", rep.mean_reward},
      {"violations", rep.violations},
  };
  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "evaluation.json", report);
  std::printf("success rate %.2f  best flying lap %.2f s  violations %llu\n",
              rep.success_rate, rep.best_flying_lap,
              static_cast<unsigned long long>(rep.violations));
  return 0;
}

int cmd_rollout(const Options& o) {
  VehicleParams p = load_vehicle(o);
  Track track = load_track(o);
  EpisodeConfig ecfg = make_episode_config(o);
  BoundaryTable table;
  const BoundaryTable* table_ptr = nullptr;
  if (ecfg.mode == ConstraintMode::kActionMap) {
    table = load_checked_table(o, p);
    table_ptr = &table;
  }
  if (o.checkpoint.empty()) throw ValidationError("missing --checkpoint");
  Td3Agent agent = Td3Agent::load(o.checkpoint);
  RaceEnv env(track, p, ecfg, table_ptr);
  if (agent.obs_dim() != env.observation_dim()) {
    throw ValidationError("checkpoint observation dim does not match environment");
  }
  Observation obs = env.reset_at(track.finish_s(), o.speed);
  TrajectoryLog log;
  while (!env.done() && env.steps() < ecfg.max_steps) {
    StepResult res = env.step(agent.act(obs));
    obs = res.obs;
    log.add(env.time(), env.state(), res.info, res.reward);
  }
  fs::create_directories(o.out);
  fs::path csv = fs::path(o.out) / "trajectory.csv";
  log.save(csv);
  std::printf("wrote %s (%zu rows, max |F_xy| %.1f N, limit %.1f N)\n", csv.c_str(),
              log.rows(), log.max_f_xy(), p.friction_limit());
  return 0;
}

int cmd_export_boundary_slice(const Options& o) {
  if (o.table.empty()) throw ValidationError("missing --table");
  BoundaryTable table = load_table(o.table);
  double v = o.slice_v;
  if (v < 0.0 || v > table.grid.v_max) {
    std::fprintf(stderr, "warning: v=%.3f outside grid, clamping\n", v);
    v = std::clamp(v, 0.0, table.grid.v_max);
  }
  std::string csv = "delta,theta,rho,u_x,u_y\n";
  const double d0 = o.slice_delta_min_deg * M_PI / 180.0;
  const double d1 = o.slice_delta_max_deg * M_PI / 180.0;
  for (int j = 0; j < o.slice_delta_count; ++j) {
    double delta = o.slice_delta_count == 1
                       ? d0
                       : d0 + (d1 - d0) * j / (o.slice_delta_count - 1);
    for (int k = 0; k < table.grid.n_theta; ++k) {
      double theta = table.grid.theta_at(k);
      double rho = lookup(table, v, delta, theta);
      csv += format_double(delta) + ',' + format_double(theta) + ',' + format_double(rho) +
             ',' + format_double(rho * std::cos(theta)) + ',' +
             format_double(rho * std::sin(theta)) + '\n';
    }
  }
  fs::create_directories(o.out);
  fs::path path = fs::path(o.out) / "boundary_slice.csv";
  atomic_write(path, csv);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

void add_shared_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--vehicle", o.vehicle, "Vehicle config file (key = value)");
  cmd->add_option("--track", o.track, "Track CSV file or builtin name");
  cmd->add_option("--table", o.table, "Boundary table file");
  cmd->add_option("--checkpoint", o.checkpoint, "Policy checkpoint file");
  cmd->add_option("--seed", o.seed, "Root random seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--mode", o.mode, "Constraint mode: am | penalty");
  cmd->add_option("--mu-max", o.mu_max, "Friction coefficient override");
  cmd->add_option("--grid", o.grid, "Table grid as Nv,Nd,Nt");
  cmd->add_option("--iters", o.iters, "Training iteration budget");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Race-driving simulation and constrained-RL toolkit"};
  app.require_subcommand(1);
  Options o;

  CLI::App* build = app.add_subcommand("build-table", "Sample the admissible-input boundary");
  add_shared_flags(build, o);
  build->add_option("--workers", o.workers, "Parallel sampling workers");

  CLI::App* trn = app.add_subcommand("train", "Train a TD3 policy");
  add_shared_flags(trn, o);

  CLI::App* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint over episodes");
  add_shared_flags(ev, o);
  ev->add_option("--episodes", o.episodes, "Number of evaluation episodes");

  CLI::App* roll = app.add_subcommand("rollout", "Write one deterministic trajectory CSV");
  add_shared_flags(roll, o);
  roll->add_option("--speed", o.speed, "Initial speed at the finish line [m/s]");

  CLI::App* slice = app.add_subcommand("export-boundary-slice",
                                       "Export (delta, theta, rho) rows at fixed speed");
  add_shared_flags(slice, o);
  slice->add_option("--v", o.slice_v, "Speed of the slice [m/s]");
  slice->add_option("--delta-min-deg", o.slice_delta_min_deg, "Slice start [deg]");
  slice->add_option("--delta-max-deg", o.slice_delta_max_deg, "Slice end [deg]");
  slice->add_option("--delta-count", o.slice_delta_count, "Number of delta values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  std::printf("seed %llu\n", static_cast<unsigned long long>(o.seed));
  try {
    if (build->parsed()) return cmd_build_table(o);
    if (trn->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_evaluate(o);
    if (roll->parsed()) return cmd_rollout(o);
    if (slice->parsed()) return cmd_export_boundary_slice(o);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fatal: %s\n", e.what());
    return 3;
  }
  return 1;
}
