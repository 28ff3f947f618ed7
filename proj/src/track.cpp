#include "raceam/track.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "raceam/io_util.hpp"
#include "raceam/vehicle.hpp"  // wrap_angle

namespace raceam {

namespace {
constexpr double kCollinearTol = 1e-9;   // turn angle below this is straight [rad]
constexpr double kProjectWindow = 30.0;  // hinted projection search radius [m]
}  // namespace

Track Track::from_vertices(std::vector<Eigen::Vector2d> vertices, double half_width,
                           bool closed, double finish_s) {
  if (vertices.size() < 3) throw ValidationError("track: need at least 3 vertices");
  if (!(half_width > 0.0)) throw ValidationError("track: half-width must be positive");
  if (closed) {
    if ((vertices.back() - vertices.front()).norm() > 1e-6) {
      throw ValidationError("track: closed loop's last vertex must equal the first");
    }
    vertices.back() = vertices.front();
  }
  Track t;
  t.cum_s_.resize(vertices.size());
  t.cum_s_[0] = 0.0;
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    double seg = (vertices[i] - vertices[i - 1]).norm();
    if (!(seg > 0.0)) {
      throw ValidationError("track: duplicate consecutive vertex at index " +
                            std::to_string(i));
    }
    t.cum_s_[i] = t.cum_s_[i - 1] + seg;
  }
  t.length_ = t.cum_s_.back();
  if (!(finish_s >= 0.0) || finish_s >= t.length_) {
    throw ValidationError("track: finish_s outside [0, length)");
  }
  t.vertices_ = std::move(vertices);
  t.half_width_ = half_width;
  t.closed_ = closed;
  t.finish_s_ = finish_s;
  return t;
}

double Track::wrap_s(double s) const {
  if (!closed_) return std::clamp(s, 0.0, length_);
  s = std::fmod(s, length_);
  if (s < 0.0) s += length_;
  return s;
}

std::size_t Track::segment_at(double s) const {
  auto it = std::upper_bound(cum_s_.begin(), cum_s_.end(), s);
  std::size_t i = static_cast<std::size_t>(it - cum_s_.begin());
  if (i == 0) return 0;
  if (i >= cum_s_.size()) return cum_s_.size() - 2;
  return i - 1;
}

Eigen::Vector2d Track::point_at(double s) const {
  s = wrap_s(s);
  std::size_t i = segment_at(s);
  double seg_len = cum_s_[i + 1] - cum_s_[i];
  double t = (s - cum_s_[i]) / seg_len;
  return vertices_[i] + t * (vertices_[i + 1] - vertices_[i]);
}

double Track::tangent_at(double s) const {
  s = wrap_s(s);
  std::size_t i = segment_at(s);
  Eigen::Vector2d d = vertices_[i + 1] - vertices_[i];
  return std::atan2(d.y(), d.x());
}

TrackPose project(const Track& track, const Eigen::Vector2d& position, double heading,
                  std::optional<double> hint) {
  const auto& v = track.vertices();
  const auto& cum = track.cumulative_s();
  double L = track.length();

  double best_d2 = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  Eigen::Vector2d best_point = v.front();
  std::size_t best_seg = 0;
  double best_t = 0.0;

  double hint_s = hint ? track.wrap_s(*hint) : 0.0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (hint) {
      double mid = 0.5 * (cum[i] + cum[i + 1]);
      double gap = std::abs(mid - hint_s);
      if (track.closed()) gap = std::min(gap, L - gap);
      if (gap > kProjectWindow + 0.5 * (cum[i + 1] - cum[i])) continue;
    }
    Eigen::Vector2d a = v[i], b = v[i + 1];
    Eigen::Vector2d ab = b - a;
    double len2 = ab.squaredNorm();
    double t = std::clamp((position - a).dot(ab) / len2, 0.0, 1.0);
    Eigen::Vector2d q = a + t * ab;
    double d2 = (position - q).squaredNorm();
    double s = cum[i] + t * std::sqrt(len2);
    // Ties at polyline kinks resolve to the smaller s.
    if (d2 < best_d2 - 1e-12 || (d2 < best_d2 + 1e-12 && s < best_s)) {
      best_d2 = d2;
      best_s = s;
      best_point = q;
      best_seg = i;
      best_t = t;
    }
  }

  TrackPose pose;
  pose.s = track.closed() && best_s >= L ? 0.0 : best_s;
  Eigen::Vector2d tangent = (v[best_seg + 1] - v[best_seg]).normalized();
  Eigen::Vector2d off = position - best_point;
  double cross = tangent.x() * off.y() - tangent.y() * off.x();
  double dist = std::sqrt(best_d2);
  pose.d_raw = cross >= 0.0 ? dist : -dist;
  pose.d_c = pose.d_raw / track.half_width();
  pose.tangent = std::atan2(tangent.y(), tangent.x());
  pose.rel_heading = wrap_angle(heading - pose.tangent);
  (void)best_t;
  return pose;
}

double relative_heading(const Track& track, double s, double heading) {
  return wrap_angle(heading - track.tangent_at(s));
}

std::span<const double> default_fo_distances() {
  static const double d[] = {10, 20, 30, 40, 60, 80, 100, 120, 140, 160, 180, 200};
  return d;
}

ForwardObservation forward_observation(const Track& track, double s,
                                       const Eigen::Vector2d& position, double heading,
                                       std::span<const double> distances) {
  ForwardObservation fo;
  fo.distances.assign(distances.begin(), distances.end());
  fo.points_body.reserve(distances.size());
  double c = std::cos(heading), sn = std::sin(heading);
  for (double d : distances) {
    Eigen::Vector2d target = track.point_at(track.wrap_s(s + d));
    Eigen::Vector2d rel = target - position;
    // R_e^b(psi): earth frame to body frame.
    fo.points_body.emplace_back(c * rel.x() + sn * rel.y(), -sn * rel.x() + c * rel.y());
  }
  return fo;
}

LapEvent lap_events(const Track& track, double s_prev, double s_new) {
  LapEvent e;
  double L = track.length();
  double df = std::remainder(s_new - s_prev, L);  // in (-L/2, L/2]
  if (df == 0.0) return e;
  double to_finish = track.finish_s() - s_prev;
  to_finish = std::fmod(to_finish, L);
  if (to_finish < 0.0) to_finish += L;
  if (to_finish == 0.0) to_finish = L;  // standing on the line counts at the next pass
  if (df > 0.0 && to_finish <= df) {
    e.crossed_finish = true;
    e.direction = 1;
  } else if (df < 0.0) {
    double back = std::fmod(s_prev - track.finish_s(), L);
    if (back < 0.0) back += L;
    if (back == 0.0) back = L;
    if (back <= -df) {
      e.crossed_finish = true;
      e.direction = -1;
    }
  }
  return e;
}

TerminalFlags terminal_predicates(const TrackPose& pose) {
  TerminalFlags f;
  f.off_track = std::abs(pose.d_c) > 1.0;
  f.wrong_way = std::abs(pose.rel_heading) > M_PI / 2.0;
  return f;
}

std::vector<std::pair<double, double>> straight_intervals(const Track& track,
                                                          double min_length) {
  const auto& v = track.vertices();
  const auto& cum = track.cumulative_s();
  std::size_t n_seg = track.segment_count();

  auto turn_at = [&](std::size_t vertex) {
    // heading change entering vertex -> leaving vertex
    std::size_t prev = vertex == 0 ? n_seg - 1 : vertex - 1;
    Eigen::Vector2d d0 = v[prev + 1] - v[prev];
    Eigen::Vector2d d1 = v[vertex + 1] - v[vertex];
    return std::abs(wrap_angle(std::atan2(d1.y(), d1.x()) - std::atan2(d0.y(), d0.x())));
  };

  // Runs of consecutive segments with no turn between them.
  std::vector<std::pair<double, double>> runs;
  std::size_t i = 0;
  while (i < n_seg) {
    std::size_t j = i;
    while (j + 1 < n_seg && turn_at(j + 1) < kCollinearTol) ++j;
    runs.emplace_back(cum[i], cum[j + 1]);
    i = j + 1;
  }
  // Closed track: merge the last run into the first if the loop seam is straight.
  if (track.closed() && runs.size() > 1 && turn_at(0) < kCollinearTol) {
    runs.front().first = runs.back().first - track.length();  // may be negative: wraps
    runs.pop_back();
  }
  std::vector<std::pair<double, double>> out;
  for (auto& r : runs) {
    if (r.second - r.first >= min_length) out.push_back(r);
  }
  return out;
}

void Track::save(const std::filesystem::path& path) const {
  std::ostringstream os;
  os << "# width = " << format_double(2.0 * half_width_) << "\n";
  os << "# closed = " << (closed_ ? "true" : "false") << "\n";
  os << "# finish_s = " << format_double(finish_s_) << "\n";
  os << "x,y\n";
  for (const auto& p : vertices_) {
    os << format_double(p.x()) << "," << format_double(p.y()) << "\n";
  }
  atomic_write(path, os.str());
}

Track Track::load(const std::filesystem::path& path) {
  std::istringstream is(read_file(path));
  std::string line;
  std::string header_block;
  std::vector<Eigen::Vector2d> vertices;
  bool saw_column_header = false;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      header_block += line.substr(1);
      header_block += "\n";
      continue;
    }
    if (!saw_column_header) {
      if (line != "x,y") throw ValidationError("track file: expected `x,y` header");
      saw_column_header = true;
      continue;
    }
    std::size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw ValidationError("track file line " + std::to_string(lineno) + ": expected x,y");
    }
    char* end = nullptr;
    double x = std::strtod(line.c_str(), &end);
    if (end != line.c_str() + comma) {
      throw ValidationError("track file line " + std::to_string(lineno) + ": bad x");
    }
    double y = std::strtod(line.c_str() + comma + 1, &end);
    if (*end != '\0') {
      throw ValidationError("track file line " + std::to_string(lineno) + ": bad y");
    }
    vertices.emplace_back(x, y);
  }
  auto kv = parse_key_value(header_block);
  auto need = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError(std::string("track file: missing ") + key);
    return it->second;
  };
  double width = std::strtod(need("width").c_str(), nullptr);
  std::string closed_s = need("closed");
  if (closed_s != "true" && closed_s != "false") {
    throw ValidationError("track file: closed must be true or false");
  }
  double finish_s = std::strtod(need("finish_s").c_str(), nullptr);
  return from_vertices(std::move(vertices), width / 2.0, closed_s == "true", finish_s);
}

namespace {

/// Incremental builder from straight/arc primitives; left turns positive.
class PolylineBuilder {
 public:
  PolylineBuilder() { points_.emplace_back(0.0, 0.0); }

  void straight(double length, double spacing = 5.0) {
    int n = std::max(1, static_cast<int>(std::ceil(length / spacing)));
    Eigen::Vector2d dir(std::cos(heading_), std::sin(heading_));
    Eigen::Vector2d start = points_.back();
    for (int k = 1; k <= n; ++k) {
      points_.push_back(start + (length * k / n) * dir);
    }
  }

  void arc(double radius, double turn, double spacing = 1.0) {
    // Left (ccw) for turn > 0; center sits on the inside.
    double sgn = turn >= 0.0 ? 1.0 : -1.0;
    Eigen::Vector2d center =
        points_.back() + radius * Eigen::Vector2d(-sgn * std::sin(heading_),
                                                  sgn * std::cos(heading_));
    double arc_len = radius * std::abs(turn);
    int n = std::max(2, static_cast<int>(std::ceil(arc_len / spacing)));
    double a0 = heading_ - sgn * M_PI / 2.0;
    for (int k = 1; k <= n; ++k) {
      double a = a0 + turn * k / n;
      points_.push_back(center + radius * Eigen::Vector2d(std::cos(a), std::sin(a)));
    }
    heading_ += turn;
  }

  Track close(double half_width) {
    points_.back() = points_.front();
    return Track::from_vertices(std::move(points_), half_width, true, 0.0);
  }

 private:
  std::vector<Eigen::Vector2d> points_;
  double heading_ = 0.0;
};

}  // namespace

Track make_oval_short() {
  PolylineBuilder b;
  b.straight(200.0);
  b.arc(50.0, M_PI);
  b.straight(200.0);
  b.arc(50.0, M_PI);
  return b.close(10.0);
}

Track make_track_a_like() {
  // Five straights and five left corners solved to close exactly with a
  // total length of 860 m.
  static const double straights[5] = {165.34972665201, 110.851174909161,
                                      116.97489890459, 114.409448805812,
                                      60.748612972182};
  static const double radii[5] = {43.763514896242, 50.167830373764, 61.785090758397,
                                  32.811210179861, 56.090659266052};
  static const double turns_deg[5] = {90, 90, 45, 90, 45};
  PolylineBuilder b;
  for (int i = 0; i < 5; ++i) {
    b.straight(straights[i]);
    b.arc(radii[i], turns_deg[i] * M_PI / 180.0);
  }
  return b.close(10.0);
}

Track lookup_builtin_track(const std::string& name) {
  if (name == "oval-short") return make_oval_short();
  if (name == "track-a-like") return make_track_a_like();
  throw ValidationError("unknown builtin track: " + name);
}

}  // namespace raceam
