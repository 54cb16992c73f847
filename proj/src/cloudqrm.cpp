#include "vigil/cloudqrm.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "vigil/edgenode.hpp"

namespace vigil::qrm {

int level_for_cause(msg::EventCause cause, bool handoff_escalates_to_2) {
  switch (cause) {
    case msg::EventCause::kNothingRelevant: return 0;
    case msg::EventCause::kDetection: return 1;
    case msg::EventCause::kPossibleIntrusion: return 1;
    case msg::EventCause::kPredictedEntry: return handoff_escalates_to_2 ? 2 : 1;
    case msg::EventCause::kConfirmedIntrusion: return 2;
    case msg::EventCause::kBrokenPerimeter: return 2;
  }
  return 0;
}

bool ellipse_intersects(const tracker::PredictionEllipse& e,
                        const geometry::PerimeterPolygon& poly) {
  if (geometry::contains(poly, e.center)) return true;
  const double c = std::cos(e.orientation);
  const double s = std::sin(e.orientation);
  const double a = std::max(e.axes.x(), 1e-12);
  const double b = std::max(e.axes.y(), 1e-12);
  const auto whiten = [&](const Eigen::Vector2d& p) {
    const Eigen::Vector2d d = p - e.center;
    // rotate by -orientation, then scale axes to the unit disk
    return Eigen::Vector2d((c * d.x() + s * d.y()) / a, (-s * d.x() + c * d.y()) / b);
  };
  const size_t n = poly.vertices.size();
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d p0 = whiten(poly.vertices[i]);
    const Eigen::Vector2d p1 = whiten(poly.vertices[(i + 1) % n]);
    const Eigen::Vector2d d = p1 - p0;
    const double len2 = d.squaredNorm();
    double t = len2 > 0.0 ? -p0.dot(d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    if ((p0 + t * d).squaredNorm() <= 1.0) return true;
  }
  return false;
}

namespace {

std::vector<int> cameras_containing(const std::vector<CameraInfo>& cameras,
                                    const Eigen::Vector2d& p) {
  std::vector<int> ids;
  for (const auto& cam : cameras) {
    if (geometry::contains(cam.fov, p)) ids.push_back(cam.camera_id);
  }
  return ids;
}

}  // namespace

std::vector<SurveillanceEvent> evaluate_events(
    const std::vector<tracker::Track>& tracks, const std::vector<CameraInfo>& cameras,
    const std::vector<geometry::PerimeterPolygon>& secured,
    const std::vector<std::int64_t>& intruder_track_ids, const tracker::TrackerParams& tparams,
    SimTime now) {
  std::vector<SurveillanceEvent> events;
  for (const auto& track : tracks) {
    if (track.status != tracker::TrackStatus::kConfirmed) continue;
    const Eigen::Vector2d p = track.position();
    const auto ellipse = tracker::prediction_ellipse(track, tparams);
    const auto observers = cameras_containing(cameras, p);

    if (!observers.empty()) {
      events.push_back({msg::EventCause::kDetection, track.track_id, observers, now});
    }
    std::vector<int> entered;
    for (const auto& cam : cameras) {
      if (geometry::contains(cam.fov, p)) continue;
      if (ellipse_intersects(ellipse, cam.fov)) entered.push_back(cam.camera_id);
    }
    if (!entered.empty()) {
      events.push_back({msg::EventCause::kPredictedEntry, track.track_id, entered, now});
    }
    for (const auto& area : secured) {
      if (geometry::contains(area, p)) {
        events.push_back({msg::EventCause::kBrokenPerimeter, track.track_id, observers, now});
      } else if (geometry::contains(area, ellipse.center)) {
        events.push_back(
            {msg::EventCause::kPossibleIntrusion, track.track_id, observers, now});
      }
    }
    if (!observers.empty() &&
        std::find(intruder_track_ids.begin(), intruder_track_ids.end(), track.track_id) !=
            intruder_track_ids.end()) {
      events.push_back({msg::EventCause::kConfirmedIntrusion, track.track_id, observers, now});
    }
  }
  return events;
}

void write_command_log(std::ostream& out, const std::vector<CommandLogRow>& rows) {
  out << "timestamp_ms,camera_id,from_level,to_level,cause\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%lld,%d,%d,%d,%s\n",
                  static_cast<long long>(r.timestamp / 1000), r.camera_id, r.from_level,
                  r.to_level, r.cause.c_str());
    out << line;
  }
}

void write_command_log(const std::string& path, const std::vector<CommandLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  write_command_log(out, rows);
}

DecisionEngine::DecisionEngine(const QrmConfig& cfg, const std::vector<CameraInfo>& cameras)
    : cfg_(cfg) {
  for (const auto& cam : cameras) {
    cams_[cam.camera_id].commanded = cam.initial_level;
  }
}

int DecisionEngine::commanded_level(int camera_id) const {
  const auto it = cams_.find(camera_id);
  if (it == cams_.end()) throw std::invalid_argument("unknown camera in decision engine");
  return it->second.commanded;
}

std::vector<msg::ReconfigCommand> DecisionEngine::step(
    const std::vector<SurveillanceEvent>& events, SimTime now) {
  // Priority among causes demanding the same level, for labeling commands.
  const auto rank = [](msg::EventCause c) {
    switch (c) {
      case msg::EventCause::kBrokenPerimeter: return 5;
      case msg::EventCause::kConfirmedIntrusion: return 4;
      case msg::EventCause::kPredictedEntry: return 3;
      case msg::EventCause::kPossibleIntrusion: return 2;
      case msg::EventCause::kDetection: return 1;
      case msg::EventCause::kNothingRelevant: return 0;
    }
    return 0;
  };

  for (const auto& ev : events) {
    const int level = level_for_cause(ev.kind, cfg_.handoff_escalates_to_2);
    if (level < 1) continue;
    const size_t slot = static_cast<size_t>(level - 1);
    for (const int cam_id : ev.camera_ids) {
      auto it = cams_.find(cam_id);
      if (it == cams_.end()) continue;
      auto& cs = it->second;
      if (!cs.seen[slot] || now > cs.last_seen[slot] ||
          rank(ev.kind) > rank(cs.last_cause[slot])) {
        cs.last_cause[slot] = ev.kind;
      }
      cs.seen[slot] = true;
      cs.last_seen[slot] = std::max(cs.last_seen[slot], now);
    }
  }

  std::vector<msg::ReconfigCommand> commands;
  for (auto& [cam_id, cs] : cams_) {
    const auto active = [&](size_t slot) {
      return cs.seen[slot] && now - cs.last_seen[slot] < cfg_.cooldown_us;
    };
    const int target = active(1) ? 2 : active(0) ? 1 : 0;
    if (target == cs.commanded) continue;
    const msg::EventCause cause = target == 0 ? msg::EventCause::kNothingRelevant
                                              : cs.last_cause[static_cast<size_t>(target - 1)];
    commands.push_back({cam_id, target, cause, now});
    log_.push_back({now, cam_id, cs.commanded, target, msg::to_string(cause)});
    cs.commanded = target;
  }
  return commands;
}

void write_bandwidth_report(std::ostream& out, const BandwidthReport& r) {
  out << "bin_start_ms";
  for (const int id : r.camera_ids) out << ",cam" << id << "_mb_s";
  out << ",total_mb_s\n";
  char buf[64];
  for (size_t b = 0; b < r.totals.size(); ++b) {
    out << static_cast<long long>(b) * (BandwidthReport::kBinWidth / 1000);
    for (size_t c = 0; c < r.camera_ids.size(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.6f", r.mb_per_s[c][b]);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.6f\n", r.totals[b]);
    out << buf;
  }
  out << "total_MB,baseline_MB,reduction_pct\n";
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f\n",
                static_cast<double>(r.total_bytes) / 1e6,
                static_cast<double>(r.baseline_bytes) / 1e6, r.reduction * 100.0);
  out << buf;
}

void write_bandwidth_report(const std::string& path, const BandwidthReport& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  write_bandwidth_report(out, r);
}

CloudQrm::CloudQrm(QrmConfig cfg, std::vector<CameraInfo> cameras,
                   std::vector<geometry::PerimeterPolygon> secured,
                   perception::Watchlist watchlist, tracker::TrackerParams tparams,
                   std::uint64_t master_seed)
    : cfg_(std::move(cfg)),
      cameras_(std::move(cameras)),
      secured_(std::move(secured)),
      watchlist_(std::move(watchlist)),
      tracker_(tparams),
      engine_(cfg_, cameras_),
      identity_rng_(Rng::stream(master_seed, "cloud/identity")) {
  for (const auto& cam : cameras_) {
    acked_level_[cam.camera_id] = cam.initial_level;
    report_level_[cam.camera_id] = cam.initial_level;
  }
}

const CameraInfo* CloudQrm::camera(int camera_id) const {
  for (const auto& cam : cameras_) {
    if (cam.camera_id == camera_id) return &cam;
  }
  return nullptr;
}

int CloudQrm::node_level(int camera_id) const {
  const auto it = acked_level_.find(camera_id);
  if (it == acked_level_.end()) throw std::invalid_argument("unknown camera");
  return it->second;
}

void CloudQrm::ingest(const netsim::Message& m) {
  switch (m.kind) {
    case netsim::MessageKind::kEdgeReport: {
      const auto& r = std::get<msg::EdgeReport>(m.payload);
      report_level_[r.camera_id] = r.mode_level;
      inbox_.insert(inbox_.end(), r.detections.begin(), r.detections.end());
      break;
    }
    case netsim::MessageKind::kAck: {
      const auto& a = std::get<msg::Ack>(m.payload);
      acked_level_[a.camera_id] = a.acked_level;
      break;
    }
    case netsim::MessageKind::kVideoChunk: {
      const auto& v = std::get<msg::VideoChunk>(m.payload);
      chunks_.push_back({m.deliver_at, v.camera_id, m.size_bytes});
      break;
    }
    case netsim::MessageKind::kReconfigCommand:
      break;  // downlink traffic, not ours to consume
  }
}

std::vector<msg::ReconfigCommand> CloudQrm::cycle(SimTime now) {
  // Fuse this cycle's detections: one observation per physical person. The
  // freshest descriptor-bearing detection wins a cluster.
  std::stable_sort(inbox_.begin(), inbox_.end(),
                   [](const perception::Detection& a, const perception::Detection& b) {
                     if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                     return a.camera_id < b.camera_id;
                   });
  std::vector<perception::Detection> fused;
  for (const auto& det : inbox_) {
    perception::Detection* hit = nullptr;
    for (auto& kept : fused) {
      if ((kept.world_point - det.world_point).norm() < cfg_.fuse_radius_m) {
        hit = &kept;
        break;
      }
    }
    if (hit == nullptr) {
      fused.push_back(det);
    } else if (det.has_descriptor || !hit->has_descriptor) {
      *hit = det;  // inbox order makes this the newer of the two
    }
  }
  inbox_.clear();
  for (auto& det : fused) det.timestamp = now;

  const auto step_events = tracker_.step(fused, now);
  track_events_.insert(track_events_.end(), step_events.begin(), step_events.end());

  run_identity_gate(now);

  std::vector<std::int64_t> intruders;
  for (auto& track : tracker_.tracks()) {
    const auto it = gates_.find(track.track_id);
    if (it == gates_.end()) continue;
    const auto& gate = it->second;
    if (gate.established_unknown || (gate.known && !gate.verdict.authorized)) {
      intruders.push_back(track.track_id);
    }
  }

  const auto events =
      evaluate_events(tracker_.tracks(), cameras_, secured_, intruders, tracker_.params(), now);
  events_.insert(events_.end(), events.begin(), events.end());
  if (!cfg_.commands_enabled) return {};
  return engine_.step(events, now);
}

void CloudQrm::run_identity_gate(SimTime now) {
  (void)now;
  for (auto& track : tracker_.tracks()) {
    if (track.status != tracker::TrackStatus::kConfirmed) continue;
    if (track.misses != 0) continue;  // no fresh observation this cycle
    const CameraInfo* cam = camera(track.last_camera_id);
    if (cam == nullptr) continue;

    auto& gate = gates_[track.track_id];
    const auto lvl_it = report_level_.find(cam->camera_id);
    const int level = lvl_it == report_level_.end() ? 0 : lvl_it->second;
    if (gate.known && level <= gate.verdict_level) {
      track.identity = gate.verdict;
      continue;
    }

    const double distance = (track.position() - cam->position).norm();
    if (distance <= 0.0) continue;
    const int px =
        perception::face_pixels_for(distance, cfg_.rates[static_cast<size_t>(level)].height,
                                    cfg_.perception);
    const auto verdict = perception::identify_face(track.last_true_subject, px, watchlist_,
                                                   cfg_.perception, identity_rng_);
    if (verdict.known()) {
      gate.known = true;
      gate.established_unknown = false;
      gate.verdict = verdict;
      gate.verdict_level = level;
    } else if (!gate.known) {
      gate.verdict = verdict;
      gate.verdict_level = level;
      if (perception::fnr_for_pixels(px, cfg_.perception) <= cfg_.conclusive_fnr) {
        gate.established_unknown = true;
      }
    } else {
      gate.verdict_level = level;  // refresh failed; keep the known verdict
    }
    if (gate.known || gate.established_unknown) {
      track.identity = gate.verdict;
    }
  }
}

BandwidthReport CloudQrm::bandwidth_report(SimTime duration) const {
  BandwidthReport r;
  r.duration = duration;
  const size_t bins =
      static_cast<size_t>((duration + BandwidthReport::kBinWidth - 1) / BandwidthReport::kBinWidth);
  for (const auto& cam : cameras_) r.camera_ids.push_back(cam.camera_id);
  r.mb_per_s.assign(r.camera_ids.size(), std::vector<double>(bins, 0.0));
  r.totals.assign(bins, 0.0);

  for (const auto& chunk : chunks_) {
    size_t ci = 0;
    while (ci < r.camera_ids.size() && r.camera_ids[ci] != chunk.camera_id) ++ci;
    if (ci == r.camera_ids.size()) continue;
    size_t bin = static_cast<size_t>(chunk.deliver_at / BandwidthReport::kBinWidth);
    if (bin >= bins) bin = bins == 0 ? 0 : bins - 1;
    const double mb_s =
        static_cast<double>(chunk.bytes) / static_cast<double>(BandwidthReport::kBinWidth);
    if (!r.totals.empty()) {
      r.mb_per_s[ci][bin] += mb_s;
      r.totals[bin] += mb_s;
    }
    r.total_bytes += chunk.bytes;
  }

  const auto& top = cfg_.rates[2];
  r.baseline_bytes = static_cast<std::int64_t>(cameras_.size()) *
                     edgenode::frames_in_span(duration, top.fps) * top.chunk_bytes;
  r.reduction = r.baseline_bytes > 0
                    ? 1.0 - static_cast<double>(r.total_bytes) / static_cast<double>(r.baseline_bytes)
                    : 0.0;
  return r;
}

}  // namespace vigil::qrm
