#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace raceam {

/// Race track as a centerline polyline with constant width. Immutable
/// after construction; all queries are pure.
class Track {
 public:
  /// Validates invariants and precomputes cumulative arc lengths.
  static Track from_vertices(std::vector<Eigen::Vector2d> vertices, double half_width,
                             bool closed, double finish_s);

  /// CSV with a `# key = value` sidecar header block; bit-exact round trip.
  static Track load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const std::vector<Eigen::Vector2d>& vertices() const { return vertices_; }
  const std::vector<double>& cumulative_s() const { return cum_s_; }
  double half_width() const { return half_width_; }
  bool closed() const { return closed_; }
  double finish_s() const { return finish_s_; }
  double length() const { return length_; }

  double wrap_s(double s) const;
  Eigen::Vector2d point_at(double s) const;
  double tangent_at(double s) const;  // direction angle [rad]

  /// Index of the segment containing arc length s.
  std::size_t segment_at(double s) const;
  std::size_t segment_count() const { return vertices_.size() - 1; }

 private:
  std::vector<Eigen::Vector2d> vertices_;
  std::vector<double> cum_s_;
  double half_width_ = 0.0;
  bool closed_ = false;
  double finish_s_ = 0.0;
  double length_ = 0.0;
};

/// Car's projection onto the centerline.
struct TrackPose {
  double s = 0.0;            // arc length of projected point [m]
  double d_raw = 0.0;        // signed offset, positive left of travel [m]
  double d_c = 0.0;          // d_raw / half_width
  double rel_heading = 0.0;  // phi in (-pi, pi]
  double tangent = 0.0;      // centerline direction at s [rad]
};

struct ForwardObservation {
  std::vector<Eigen::Vector2d> points_body;  // one body-frame vector per distance
  std::vector<double> distances;
};

struct LapEvent {
  bool crossed_finish = false;
  int direction = 0;  // +1 forward, -1 backward
};

struct TerminalFlags {
  bool off_track = false;
  bool wrong_way = false;
};

/// Nearest-point projection; `hint` (previous s) restricts the search to a
/// window around it for continuity. rel_heading is filled from `heading`.
TrackPose project(const Track& track, const Eigen::Vector2d& position,
                  double heading, std::optional<double> hint = std::nullopt);

double relative_heading(const Track& track, double s, double heading);

/// Default forward-observation distance schedule [m].
std::span<const double> default_fo_distances();

ForwardObservation forward_observation(const Track& track, double s,
                                       const Eigen::Vector2d& position, double heading,
                                       std::span<const double> distances);

LapEvent lap_events(const Track& track, double s_prev, double s_new);

TerminalFlags terminal_predicates(const TrackPose& pose);

/// Maximal arc-length intervals [s_begin, s_end] where the centerline is
/// straight (zero turn at interior vertices) and at least `min_length` long.
std::vector<std::pair<double, double>> straight_intervals(const Track& track,
                                                          double min_length = 5.0);

// Canonical tracks shipped with the repo.
Track make_oval_short();    // two 200 m straights + two r=50 half circles, width 20
Track make_track_a_like();  // ~860 m, 20 m wide, 5 corners
Track lookup_builtin_track(const std::string& name);  // throws if unknown

}  // namespace raceam
