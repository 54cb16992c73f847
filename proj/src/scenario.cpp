#include "vigil/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

namespace vigil::scenario {

using nlohmann::json;

namespace {

std::string join_violations(const std::vector<std::string>& v) {
  std::ostringstream out;
  out << "scenario validation failed (" << v.size() << " problem" << (v.size() == 1 ? "" : "s")
      << "):";
  for (const auto& s : v) out << "\n  - " << s;
  return out.str();
}

[[noreturn]] void fail_parse(const std::string& ctx, const std::string& what) {
  throw ParseError(ctx + ": " + what);
}

const json& field(const json& j, const char* key, const std::string& ctx) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    fail_parse(ctx, std::string("missing field '") + key + "'");
  }
  return *it;
}

template <typename T>
T as(const json& j, const std::string& ctx) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    fail_parse(ctx, e.what());
  }
}

template <typename T>
T field_as(const json& j, const char* key, const std::string& ctx) {
  return as<T>(field(j, key, ctx), ctx + "." + key);
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& ctx) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return as<T>(*it, ctx + "." + key);
}

Eigen::Vector2d as_point(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2) fail_parse(ctx, "expected a [x, y] pair");
  return {as<double>(j[0], ctx + "[0]"), as<double>(j[1], ctx + "[1]")};
}

std::vector<Eigen::Vector2d> as_points(const json& j, const std::string& ctx) {
  if (!j.is_array()) fail_parse(ctx, "expected an array of [x, y] pairs");
  std::vector<Eigen::Vector2d> out;
  out.reserve(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_point(j[i], ctx + "[" + std::to_string(i) + "]"));
  }
  return out;
}

template <size_t N>
std::array<double, N> as_double_array(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != N) {
    fail_parse(ctx, "expected an array of " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (size_t i = 0; i < N; ++i) out[i] = as<double>(j[i], ctx + "[" + std::to_string(i) + "]");
  return out;
}

Eigen::Matrix3d as_matrix3(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 3) fail_parse(ctx, "expected a 3x3 row-major matrix");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    const auto& row = j[static_cast<size_t>(r)];
    if (!row.is_array() || row.size() != 3) fail_parse(ctx, "expected a 3x3 row-major matrix");
    for (int c = 0; c < 3; ++c) {
      m(r, c) = as<double>(row[static_cast<size_t>(c)],
                           ctx + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
  }
  return m;
}

edgenode::DeviceProfile parse_device(const std::string& s, const std::string& ctx) {
  if (s == "tx2") return edgenode::DeviceProfile::kTX2;
  if (s == "xavier") return edgenode::DeviceProfile::kXavier;
  fail_parse(ctx, "unknown device '" + s + "' (expected tx2 or xavier)");
}

// 64 quantiles of N(0, 2), rounded and clamped to [-5, 5]; zero mean. At most
// 2.5 sigma from the background level, so a settled model pixel (variance
// floor 4) always matches its dominant component.
constexpr std::array<std::int8_t, 64> kNoiseTable{
    -5, -4, -4, -3, -3, -3, -3, -2, -2, -2, -2, -2, -2, -2, -2, -1, -1, -1, -1, -1, -1, -1,
    -1, -1, -1, -1, 0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  1,  1,  1,  1,  1,  1,
    1,  1,  1,  1,  1,  2,  2,  2,  2,  2,  2,  2,  2,  3,  3,  3,  3,  4,  4,  5};

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : std::runtime_error(join_violations(violations)), violations_(std::move(violations)) {}

Eigen::Vector2d ActorSpec::position_at(SimTime t) const {
  if (waypoints.empty()) return {0, 0};
  SimTime rel = t - enter_us;
  if (rel <= 0) return waypoints.front();
  SimTime cursor = holds_us.empty() ? 0 : holds_us.front();
  if (rel < cursor) return waypoints.front();
  for (size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const Eigen::Vector2d a = waypoints[i];
    const Eigen::Vector2d b = waypoints[i + 1];
    const double len = (b - a).norm();
    const auto leg_us =
        static_cast<SimTime>(std::llround(len / speeds_m_s[i] * 1e6));
    if (rel < cursor + leg_us) {
      const double f = static_cast<double>(rel - cursor) / static_cast<double>(leg_us);
      return a + f * (b - a);
    }
    cursor += leg_us;
    if (i + 1 < holds_us.size()) cursor += holds_us[i + 1];
    if (rel < cursor) return b;
  }
  return waypoints.back();
}

void apply_rates_preset(ScenarioConfig& cfg, const std::string& name) {
  if (name == "table2") {
    cfg.rates = edgenode::standard_rates();
  } else if (name == "fig6" || name == "fig6_rates") {
    cfg.rates = edgenode::high_bandwidth_rates();
  } else {
    throw ParseError("rates: unknown preset '" + name + "' (expected table2 or fig6)");
  }
  cfg.rates_name = name == "fig6_rates" ? "fig6" : name;
}

ScenarioConfig load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    size_t line = 1;
    size_t col = 1;
    for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                     e.what());
  }
  if (!j.is_object()) throw ParseError(path + ": top level must be an object");

  ScenarioConfig cfg;
  std::vector<std::string> violations;
  const auto base_dir = std::filesystem::path(path).parent_path();

  cfg.duration_us = from_ms(field_as<double>(j, "duration_ms", "scenario"));
  cfg.master_seed = field_or<std::uint64_t>(j, "master_seed", 0, "scenario");
  apply_rates_preset(cfg, field_or<std::string>(j, "rates", "table2", "scenario"));
  cfg.detector_cadence = field_or<int>(j, "detector_cadence", 5, "scenario");

  if (const auto it = j.find("link"); it != j.end()) {
    const std::string ctx = "link";
    cfg.link.capacity_mb_s = field_or<double>(*it, "capacity_mb_s", 100.0, ctx);
    cfg.link.base_latency_us = from_ms(field_or<double>(*it, "uplink_latency_ms", 5.0, ctx));
    cfg.link.drop_probability = field_or<double>(*it, "drop_probability", 0.0, ctx);
    cfg.downlink_latency_us = from_ms(field_or<double>(*it, "downlink_latency_ms", 5.0, ctx));
  }

  if (const auto it = j.find("qrm"); it != j.end()) {
    const std::string ctx = "qrm";
    cfg.qrm_enabled = field_or<bool>(*it, "enabled", true, ctx);
    cfg.qrm.cooldown_us = from_ms(field_or<double>(*it, "cooldown_ms", 2000.0, ctx));
    cfg.qrm.handoff_escalates_to_2 =
        field_or<bool>(*it, "handoff_escalates_to_2", false, ctx);
    cfg.qrm.conclusive_fnr = field_or<double>(*it, "conclusive_fnr", 1e-3, ctx);
    cfg.qrm.fuse_radius_m = field_or<double>(*it, "fuse_radius_m", 0.5, ctx);
  }

  if (const auto it = j.find("perception"); it != j.end()) {
    const std::string ctx = "perception";
    if (const auto f = it->find("p_fn"); f != it->end()) {
      cfg.perception.p_fn = as_double_array<3>(*f, ctx + ".p_fn");
    }
    if (const auto f = it->find("p_fp"); f != it->end()) {
      cfg.perception.p_fp = as_double_array<3>(*f, ctx + ".p_fp");
    }
    if (const auto f = it->find("sigma_app"); f != it->end()) {
      cfg.perception.sigma_app = as_double_array<3>(*f, ctx + ".sigma_app");
    }
    cfg.perception.iou_threshold =
        field_or<double>(*it, "iou_threshold", cfg.perception.iou_threshold, ctx);
  }

  if (cfg.duration_us <= 0) violations.push_back("duration_ms: must be positive");

  const auto& jcams = field(j, "cameras", "scenario");
  if (!jcams.is_array()) fail_parse("cameras", "expected an array");
  if (jcams.empty()) violations.push_back("cameras: at least one camera is required");
  std::set<int> cam_ids;
  for (size_t i = 0; i < jcams.size(); ++i) {
    const std::string ctx = "cameras[" + std::to_string(i) + "]";
    const auto& jc = jcams[i];
    CameraSpec cam;
    cam.camera_id = field_as<int>(jc, "camera_id", ctx);
    cam.device = parse_device(field_as<std::string>(jc, "device", ctx), ctx + ".device");
    cam.initial_level = field_or<int>(jc, "initial_mode", 0, ctx);
    cam.position = as_point(field(jc, "position", ctx), ctx + ".position");
    cam.fov.kind = geometry::PolygonKind::kCameraFov;
    cam.fov.vertices = as_points(field(jc, "fov", ctx), ctx + ".fov");

    if (cam.camera_id < 0) violations.push_back(ctx + ".camera_id: must be non-negative");
    if (!cam_ids.insert(cam.camera_id).second) {
      violations.push_back(ctx + ".camera_id: duplicate id " + std::to_string(cam.camera_id));
    }
    if (cam.initial_level < 0 || cam.initial_level > 2) {
      violations.push_back(ctx + ".initial_mode: must be 0, 1 or 2");
    }
    if (cam.fov.vertices.size() < 3) {
      violations.push_back(ctx + ".fov: a polygon needs at least 3 vertices, got " +
                           std::to_string(cam.fov.vertices.size()));
    } else if (!geometry::is_simple_polygon(cam.fov)) {
      violations.push_back(ctx + ".fov: polygon is self-intersecting");
    }

    const bool has_h = jc.contains("homography");
    const bool has_file = jc.contains("correspondence_file");
    if (has_h == has_file) {
      fail_parse(ctx, "exactly one of 'homography' or 'correspondence_file' is required");
    }
    if (has_h) {
      cam.homography.h = as_matrix3(jc["homography"], ctx + ".homography");
      if (std::abs(cam.homography.normalized().h.determinant()) < 1e-12) {
        violations.push_back(ctx + ".homography: matrix is singular");
      }
    } else {
      const auto file = field_as<std::string>(jc, "correspondence_file", ctx);
      const auto resolved = (base_dir / file).string();
      try {
        cam.homography = geometry::estimate_homography(geometry::load_correspondences(resolved));
      } catch (const std::exception& e) {
        violations.push_back(ctx + ".correspondence_file: " + resolved + ": " + e.what());
      }
    }
    cfg.cameras.push_back(std::move(cam));
  }

  std::set<std::string> actor_ids;
  if (const auto it = j.find("actors"); it != j.end()) {
    if (!it->is_array()) fail_parse("actors", "expected an array");
    for (size_t i = 0; i < it->size(); ++i) {
      const std::string ctx = "actors[" + std::to_string(i) + "]";
      const auto& ja = (*it)[i];
      ActorSpec actor;
      actor.actor_id = field_as<std::string>(ja, "actor_id", ctx);
      actor.latent_seed =
          field_or<std::uint64_t>(ja, "latent_seed", fnv1a(actor.actor_id), ctx);
      actor.authorized = field_or<bool>(ja, "authorized", false, ctx);
      actor.watchlisted = field_or<bool>(ja, "watchlisted", true, ctx);
      actor.width_m = field_or<double>(ja, "width_m", 0.6, ctx);
      actor.height_m = field_or<double>(ja, "height_m", 1.7, ctx);
      actor.enter_us = from_ms(field_or<double>(ja, "enter_ms", 0.0, ctx));
      if (const auto f = ja.find("exit_ms"); f != ja.end() && !f->is_null()) {
        actor.exit_us = from_ms(as<double>(*f, ctx + ".exit_ms"));
      }
      actor.waypoints = as_points(field(ja, "waypoints", ctx), ctx + ".waypoints");

      const size_t legs = actor.waypoints.empty() ? 0 : actor.waypoints.size() - 1;
      if (const auto f = ja.find("speeds_m_s"); f != ja.end()) {
        actor.speeds_m_s = as<std::vector<double>>(*f, ctx + ".speeds_m_s");
      } else if (const auto s = ja.find("speed_m_s"); s != ja.end()) {
        actor.speeds_m_s.assign(legs, as<double>(*s, ctx + ".speed_m_s"));
      }
      if (const auto f = ja.find("hold_ms"); f != ja.end()) {
        for (const auto& v : as<std::vector<double>>(*f, ctx + ".hold_ms")) {
          actor.holds_us.push_back(from_ms(v));
        }
      }
      actor.holds_us.resize(actor.waypoints.size(), 0);

      if (actor.actor_id.empty()) violations.push_back(ctx + ".actor_id: must not be empty");
      if (!actor_ids.insert(actor.actor_id).second) {
        violations.push_back(ctx + ".actor_id: duplicate id '" + actor.actor_id + "'");
      }
      if (actor.waypoints.empty()) {
        violations.push_back(ctx + ".waypoints: at least one waypoint is required");
      }
      if (actor.speeds_m_s.size() != legs) {
        violations.push_back(ctx + ".speeds_m_s: expected " + std::to_string(legs) +
                             " entries (one per leg), got " +
                             std::to_string(actor.speeds_m_s.size()));
      } else {
        for (size_t k = 0; k < actor.speeds_m_s.size(); ++k) {
          if (!(actor.speeds_m_s[k] > 0)) {
            violations.push_back(ctx + ".speeds_m_s[" + std::to_string(k) +
                                 "]: must be positive to make the waypoint reachable");
          }
        }
      }
      if (!(actor.width_m > 0) || !(actor.height_m > 0)) {
        violations.push_back(ctx + ": body width_m and height_m must be positive");
      }
      if (actor.exit_us <= actor.enter_us) {
        violations.push_back(ctx + ": exit_ms must be after enter_ms");
      }
      cfg.actors.push_back(std::move(actor));
    }
  }

  if (const auto it = j.find("perimeters"); it != j.end()) {
    if (!it->is_array()) fail_parse("perimeters", "expected an array");
    for (size_t i = 0; i < it->size(); ++i) {
      const std::string ctx = "perimeters[" + std::to_string(i) + "]";
      geometry::PerimeterPolygon poly;
      poly.kind = geometry::PolygonKind::kSecuredArea;
      poly.vertices = as_points(field((*it)[i], "vertices", ctx), ctx + ".vertices");
      if (poly.vertices.size() < 3) {
        violations.push_back(ctx + ".vertices: a polygon needs at least 3 vertices, got " +
                             std::to_string(poly.vertices.size()));
      } else if (!geometry::is_simple_polygon(poly)) {
        violations.push_back(ctx + ".vertices: polygon is self-intersecting");
      }
      cfg.secured.push_back(std::move(poly));
    }
  }

  if (!violations.empty()) throw ValidationError(std::move(violations));
  return cfg;
}

Scene::Scene(const ScenarioConfig& cfg)
    : cameras_(cfg.cameras),
      actors_(cfg.actors),
      grid_w_(cfg.rates[2].width),
      grid_h_(cfg.rates[2].height),
      noise_seed_(splitmix64(cfg.master_seed ^ fnv1a("scene/noise"))) {
  world_to_grid_.reserve(cameras_.size());
  for (const auto& cam : cameras_) {
    const Eigen::Matrix3d m = cam.homography.h.inverse();
    world_to_grid_.push_back(m);
    Eigen::Vector2d centroid{0, 0};
    for (const auto& v : cam.fov.vertices) centroid += v;
    if (!cam.fov.vertices.empty()) centroid /= static_cast<double>(cam.fov.vertices.size());
    const double w = m(2, 0) * centroid.x() + m(2, 1) * centroid.y() + m(2, 2);
    horizon_sign_.push_back(w < 0 ? -1.0 : 1.0);
  }
}

const CameraSpec& Scene::camera(int camera_id) const {
  for (const auto& cam : cameras_) {
    if (cam.camera_id == camera_id) return cam;
  }
  throw UnknownCamera("no camera with id " + std::to_string(camera_id));
}

std::optional<Scene::ActorRect> Scene::actor_rect(int camera_id, SimTime t,
                                                  const ActorSpec& actor) const {
  size_t ci = cameras_.size();
  for (size_t i = 0; i < cameras_.size(); ++i) {
    if (cameras_[i].camera_id == camera_id) ci = i;
  }
  if (ci == cameras_.size()) throw UnknownCamera("no camera with id " + std::to_string(camera_id));
  if (!actor.present_at(t)) return std::nullopt;

  const Eigen::Vector2d p = actor.position_at(t);
  const Eigen::Matrix3d& m = world_to_grid_[ci];
  const double w = m(2, 0) * p.x() + m(2, 1) * p.y() + m(2, 2);
  // Positions at or beyond the camera horizon would alias back into view.
  if (std::abs(w) < 1e-9 || w * horizon_sign_[ci] < 0) return std::nullopt;
  const double u = (m(0, 0) * p.x() + m(0, 1) * p.y() + m(0, 2)) / w;
  const double v = (m(1, 0) * p.x() + m(1, 1) * p.y() + m(1, 2)) / w;

  // Local meters-to-pixels scale from the Jacobian of the projective map;
  // body height is out of plane, so the isotropic scale stands in for it.
  const double dux = (m(0, 0) - u * m(2, 0)) / w;
  const double duy = (m(0, 1) - u * m(2, 1)) / w;
  const double dvx = (m(1, 0) - v * m(2, 0)) / w;
  const double dvy = (m(1, 1) - v * m(2, 1)) / w;
  const double s = std::sqrt(std::abs(dux * dvy - duy * dvx));
  if (!std::isfinite(s) || s <= 0) return std::nullopt;

  return ActorRect{u, v, actor.width_m * s, actor.height_m * s};
}

void Scene::render(int camera_id, SimTime t, bgmodel::Frame& frame) {
  camera(camera_id);  // validates the id
  const int w = frame.width;
  const int h = frame.height;
  if (w <= 0 || h <= 0) throw std::invalid_argument("render target has no size");
  frame.pixels.resize(static_cast<size_t>(w) * static_cast<size_t>(h));
  frame.timestamp = t;

  const std::uint64_t fseed =
      noise_seed_ ^ splitmix64((static_cast<std::uint64_t>(camera_id) << 40) ^
                               static_cast<std::uint64_t>(t));
  const size_t n = frame.pixels.size();
  for (size_t i = 0; i < n; ++i) {
    std::uint64_t x = fseed + i * 0x9e3779b97f4a7c15ull;
    x ^= x >> 29;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 32;
    frame.pixels[i] = static_cast<std::uint8_t>(120 + kNoiseTable[x & 63]);
  }

  const double sx = static_cast<double>(w) / static_cast<double>(grid_w_);
  const double sy = static_cast<double>(h) / static_cast<double>(grid_h_);
  for (const auto& actor : actors_) {
    const auto rect = actor_rect(camera_id, t, actor);
    if (!rect) continue;
    const double x0 = (rect->foot_x - rect->width / 2.0) * sx;
    const double x1 = (rect->foot_x + rect->width / 2.0) * sx;
    const double y1 = rect->foot_y * sy;
    const double y0 = y1 - rect->height * sy;
    const int lx = static_cast<int>(std::lround(std::clamp(x0, 0.0, static_cast<double>(w))));
    const int hx = static_cast<int>(std::lround(std::clamp(x1, 0.0, static_cast<double>(w))));
    const int ly = static_cast<int>(std::lround(std::clamp(y0, 0.0, static_cast<double>(h))));
    const int hy = static_cast<int>(std::lround(std::clamp(y1, 0.0, static_cast<double>(h))));
    if (lx >= hx || ly >= hy) continue;
    for (int y = ly; y < hy; ++y) {
      auto* row = frame.pixels.data() + static_cast<size_t>(y) * static_cast<size_t>(w);
      std::fill(row + lx, row + hx, static_cast<std::uint8_t>(220));
    }
  }
}

std::vector<perception::GroundTruthActor> Scene::actors_in_view(int camera_id, SimTime t,
                                                                int width, int height) {
  camera(camera_id);
  std::vector<perception::GroundTruthActor> out;
  const double sx = static_cast<double>(width) / static_cast<double>(grid_w_);
  const double sy = static_cast<double>(height) / static_cast<double>(grid_h_);
  for (const auto& actor : actors_) {
    const auto rect = actor_rect(camera_id, t, actor);
    if (!rect) continue;
    const double x0 = std::max(0.0, (rect->foot_x - rect->width / 2.0) * sx);
    const double x1 = std::min(static_cast<double>(width),
                               (rect->foot_x + rect->width / 2.0) * sx);
    const double y1 = std::min(static_cast<double>(height), rect->foot_y * sy);
    const double y0 = std::max(0.0, (rect->foot_y - rect->height) * sy);
    if (x1 <= x0 || y1 <= y0) continue;
    perception::GroundTruthActor gt;
    gt.actor_id = actor.actor_id;
    gt.bbox = {x0, y0, x1 - x0, y1 - y0};
    gt.latent = perception::descriptor_from_seed(actor.latent_seed);
    gt.authorized = actor.authorized;
    out.push_back(std::move(gt));
  }
  return out;
}

namespace {

constexpr SimTime kCycleUs = 100000;

[[noreturn]] void rethrow_with_context(SimTime now, const char* component,
                                       const std::exception& e) {
  throw RunError("virtual time " + std::to_string(now) + " us, component " + component + ": " +
                 e.what());
}

}  // namespace

RunResult run(const ScenarioConfig& cfg, const RunOptions& options) {
  Scene scene(cfg);
  netsim::Network net(cfg.link, cfg.downlink_latency_us,
                      splitmix64(cfg.master_seed ^ fnv1a("net/drops")));

  std::vector<std::unique_ptr<edgenode::EdgeNode>> nodes;
  for (const auto& cam : cfg.cameras) {
    edgenode::EdgeNodeConfig nc;
    nc.camera_id = cam.camera_id;
    nc.device = cam.device;
    nc.initial_level = cam.initial_level;
    nc.rates = cfg.rates;
    nc.homography = cam.homography;
    nc.mog = cfg.mog;
    nc.perception = cfg.perception;
    nc.detector_cadence = cfg.detector_cadence;
    nc.start_time = 0;
    nc.seed = cfg.master_seed;
    nc.mask_dump_dir = options.mask_dump_dir;
    nodes.push_back(std::make_unique<edgenode::EdgeNode>(std::move(nc)));
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a->camera_id() < b->camera_id(); });

  qrm::QrmConfig qc = cfg.qrm;
  qc.rates = cfg.rates;
  qc.perception = cfg.perception;
  qc.commands_enabled = cfg.qrm_enabled;
  std::vector<qrm::CameraInfo> cams;
  for (const auto& cam : cfg.cameras) {
    cams.push_back({cam.camera_id, cam.fov, cam.position, cam.initial_level});
  }
  perception::Watchlist watchlist;
  for (const auto& actor : cfg.actors) {
    if (!actor.watchlisted) continue;
    watchlist.add({actor.actor_id, actor.authorized,
                   perception::descriptor_from_seed(actor.latent_seed)});
  }
  qrm::CloudQrm cloud(qc, cams, cfg.secured, watchlist, cfg.tracker, cfg.master_seed);

  const SimTime duration = cfg.duration_us;
  SimTime next_cycle = kCycleUs;

  std::vector<tracker::TrackLogRow> track_rows;
  std::map<std::string, eval::GroundTruthTrack> gt;
  std::map<std::int64_t, eval::HypothesisTrack> hyp;

  auto node_by_id = [&](int camera_id) -> edgenode::EdgeNode& {
    for (auto& n : nodes) {
      if (n->camera_id() == camera_id) return *n;
    }
    throw std::out_of_range("message addressed to unknown camera " + std::to_string(camera_id));
  };

  auto route = [&](std::vector<netsim::Message> delivered, SimTime now) {
    for (auto& m : delivered) {
      try {
        if (m.dst == netsim::kCloud) {
          cloud.ingest(m);
        } else if (m.kind == netsim::MessageKind::kReconfigCommand) {
          node_by_id(m.dst).apply_reconfig(std::get<msg::ReconfigCommand>(m.payload));
        }
      } catch (const RunError&) {
        throw;
      } catch (const std::exception& e) {
        rethrow_with_context(now, "delivery", e);
      }
    }
  };

  while (true) {
    SimTime t_frame = std::numeric_limits<SimTime>::max();
    for (const auto& n : nodes) t_frame = std::min(t_frame, n->next_frame_at());
    const bool frame_due = t_frame < duration;
    const bool cycle_due = next_cycle <= duration;
    if (!frame_due && !cycle_due) break;
    const SimTime t_next = std::min(frame_due ? t_frame : std::numeric_limits<SimTime>::max(),
                                    cycle_due ? next_cycle : std::numeric_limits<SimTime>::max());

    try {
      route(net.advance(t_next), t_next);
    } catch (const RunError&) {
      throw;
    } catch (const std::exception& e) {
      rethrow_with_context(t_next, "netsim", e);
    }

    if (frame_due && t_frame == t_next) {
      for (auto& n : nodes) {
        if (n->next_frame_at() != t_next) continue;
        try {
          for (auto& m : n->tick(t_next, scene)) net.submit(std::move(m));
        } catch (const std::exception& e) {
          rethrow_with_context(t_next, ("edgenode/" + std::to_string(n->camera_id())).c_str(),
                               e);
        }
      }
    }

    if (cycle_due && next_cycle == t_next) {
      std::vector<msg::ReconfigCommand> commands;
      try {
        commands = cloud.cycle(t_next);
      } catch (const std::exception& e) {
        rethrow_with_context(t_next, "cloudqrm", e);
      }
      for (const auto& c : commands) {
        net.submit(netsim::make_message(netsim::kCloud, c.camera_id, t_next, c));
      }

      for (const auto& tr : cloud.tracker().tracks()) {
        if (tr.status != tracker::TrackStatus::kConfirmed || tr.misses != 0) continue;
        track_rows.push_back({t_next, tr.track_id, tr.state(0), tr.state(1), tr.state(2),
                              tr.state(3), tr.status, tr.last_camera_id});
        auto& h = hyp[tr.track_id];
        h.track_id = tr.track_id;
        h.samples.push_back({t_next, tr.position()});
      }
      for (const auto& actor : cfg.actors) {
        if (!actor.present_at(t_next)) continue;
        const Eigen::Vector2d p = actor.position_at(t_next);
        bool visible = false;
        for (const auto& cam : cfg.cameras) {
          if (geometry::contains(cam.fov, p)) {
            visible = true;
            break;
          }
        }
        if (!visible) continue;
        auto& g = gt[actor.actor_id];
        g.actor_id = actor.actor_id;
        g.authorized = actor.authorized;
        g.samples.push_back({t_next, p});
      }

      next_cycle += kCycleUs;
    }
  }
  route(net.advance(duration), duration);

  RunResult result;
  result.artifacts.duration = duration;
  result.artifacts.tracks = std::move(track_rows);
  for (const auto& n : nodes) {
    result.artifacts.node_events.insert(result.artifacts.node_events.end(),
                                        n->events().begin(), n->events().end());
  }
  std::stable_sort(result.artifacts.node_events.begin(), result.artifacts.node_events.end(),
                   [](const auto& a, const auto& b) {
                     return std::tie(a.timestamp, a.camera_id) < std::tie(b.timestamp, b.camera_id);
                   });
  result.artifacts.commands = cloud.command_log();
  result.artifacts.bandwidth = cloud.bandwidth_report(duration);
  result.artifacts.deliveries = net.delivery_log();

  for (const auto& n : nodes) {
    auto& dwell = result.artifacts.mode_dwell_us[n->camera_id()];
    dwell = {0, 0, 0};
    const auto& segs = n->dwell_segments();
    for (size_t i = 0; i < segs.size(); ++i) {
      const SimTime end = i + 1 < segs.size() ? segs[i + 1].start : duration;
      dwell[static_cast<size_t>(segs[i].level)] += std::max<SimTime>(0, end - segs[i].start);
    }
  }

  for (auto& [id, g] : gt) result.ground_truth.push_back(std::move(g));
  for (auto& [id, h] : hyp) result.hypotheses.push_back(std::move(h));
  if (!result.ground_truth.empty()) {
    result.artifacts.mot = eval::compute_mot(result.ground_truth, result.hypotheses, 1.0);
  }
  return result;
}

}  // namespace vigil::scenario
