#include "vigil/edgenode.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace {

void dump_mask_pgm(const std::string& dir, int camera_id, vigil::SimTime t,
                   const vigil::bgmodel::Mask& mask) {
  const auto path = std::filesystem::path(dir) /
                    ("mask_c" + std::to_string(camera_id) + "_t" + std::to_string(t) + ".pgm");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  for (const auto v : mask.data) out.put(v ? '\xff' : '\0');
}

}  // namespace

namespace vigil::edgenode {

void write_node_events(const std::string& path, const std::vector<NodeEventRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "timestamp_ms,camera_id,mode,cause,bytes_sent_cum\n";
  for (const auto& r : rows) {
    out << r.timestamp / 1000 << ',' << r.camera_id << ',' << r.mode_level << ','
        << r.cause << ',' << r.bytes_sent_cum << '\n';
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

EdgeNode::EdgeNode(EdgeNodeConfig config)
    : config_(std::move(config)),
      rng_(Rng::stream(config_.seed, "node/" + std::to_string(config_.camera_id))) {
  if (config_.initial_level < 0 || config_.initial_level > 2) {
    throw UnknownMode("initial mode level " + std::to_string(config_.initial_level));
  }
  level_ = config_.initial_level;
  const auto& m = mode();
  mog_ = std::make_unique<bgmodel::MogModel>(m.width, m.height, config_.mog);
  frame_.width = m.width;
  frame_.height = m.height;
  frame_.pixels.assign(static_cast<size_t>(m.width) * static_cast<size_t>(m.height), 0);
  segment_epoch_ = config_.start_time;
  dwell_segments_.push_back({level_, config_.start_time});
  events_.push_back({config_.start_time, config_.camera_id, level_, "initial", 0});
  if (!config_.mask_dump_dir.empty()) {
    std::filesystem::create_directories(config_.mask_dump_dir);
  }
}

SimTime EdgeNode::next_frame_at() const {
  return segment_epoch_ + segment_frame_index_ * 1000000 / mode().fps;
}

SimTime EdgeNode::processing_latency_us() const {
  return static_cast<SimTime>(std::llround(1e6 / processing_fps(config_.device, level_)));
}

double EdgeNode::min_roi_area() const {
  const double scale = static_cast<double>(mode().height) / 480.0;
  return 50.0 * scale * scale;
}

void EdgeNode::enter_mode(int new_level, SimTime now, const char* cause) {
  level_ = new_level;
  const auto& m = mode();
  mog_ = std::make_unique<bgmodel::MogModel>(m.width, m.height, config_.mog);
  frame_.width = m.width;
  frame_.height = m.height;
  frame_.pixels.assign(static_cast<size_t>(m.width) * static_cast<size_t>(m.height), 0);
  segment_epoch_ = now;
  segment_frame_index_ = 0;
  dwell_segments_.push_back({level_, now});
  events_.push_back({now, config_.camera_id, level_, cause, video_bytes_sent_});
}

void EdgeNode::apply_reconfig(const msg::ReconfigCommand& command) {
  if (command.camera_id != config_.camera_id) {
    throw std::invalid_argument("command for camera " +
                                std::to_string(command.camera_id) + " applied to " +
                                std::to_string(config_.camera_id));
  }
  if (command.target_level < 0 || command.target_level > 2) {
    throw UnknownMode("target level " + std::to_string(command.target_level));
  }
  pending_ = command;  // staged; last writer wins at the frame boundary
}

std::vector<netsim::Message> EdgeNode::tick(SimTime now, FrameSource& scene) {
  std::vector<netsim::Message> out;
  if (pending_) {
    const msg::ReconfigCommand cmd = *pending_;
    pending_.reset();
    if (cmd.target_level != level_) {
      enter_mode(cmd.target_level, now, msg::to_string(cmd.cause));
    }
    out.push_back(netsim::make_message(config_.camera_id, netsim::kCloud, now,
                                       msg::Ack{config_.camera_id, level_, now}));
  }

  const auto& m = mode();
  frame_.timestamp = now;
  scene.render(config_.camera_id, now, frame_);
  bgmodel::Mask mask = mog_->update_and_segment(frame_);
  if (!config_.mask_dump_dir.empty()) {
    dump_mask_pgm(config_.mask_dump_dir, config_.camera_id, now, mask);
  }

  std::vector<perception::Detection> detections;
  if (!mog_->in_warmup()) {
    const bgmodel::Mask cleaned = bgmodel::clean_mask(mask);
    const auto rois = bgmodel::extract_rois(cleaned, min_roi_area());
    if (frames_processed_ % config_.detector_cadence == 0) {
      const auto actors = scene.actors_in_view(config_.camera_id, now, m.width, m.height);
      detections = perception::classify_rois(rois, actors, level_, m.width, m.height,
                                             config_.perception, rng_);
    } else {
      // Between detector frames the node forwards bare foreground boxes; the
      // cloud matcher treats them as appearance-free evidence.
      for (const auto& roi : rois) {
        perception::Detection d;
        d.source = perception::DetectionSource::kRoiOnly;
        d.bbox = {static_cast<double>(roi.x), static_cast<double>(roi.y),
                  static_cast<double>(roi.width), static_cast<double>(roi.height)};
        detections.push_back(std::move(d));
      }
    }
    // Foot points project through the homography on the level-2 pixel grid.
    const auto& ref = config_.rates[2];
    const double sx = static_cast<double>(ref.width) / static_cast<double>(m.width);
    const double sy = static_cast<double>(ref.height) / static_cast<double>(m.height);
    for (auto& d : detections) {
      d.camera_id = config_.camera_id;
      d.timestamp = now;
      const Eigen::Vector2d foot((d.bbox.x + d.bbox.w / 2.0) * sx,
                                 (d.bbox.y + d.bbox.h) * sy);
      d.world_point = geometry::project(config_.homography, foot);
    }
  }

  out.push_back(netsim::make_message(
      config_.camera_id, netsim::kCloud, now,
      msg::VideoChunk{config_.camera_id, now, level_, m.chunk_bytes}));
  video_bytes_sent_ += m.chunk_bytes;
  send_log_.push_back({now, m.chunk_bytes});

  const SimTime report_at = now + processing_latency_us();
  const auto hint = detections.empty() ? msg::EventHint::kNone
                                       : msg::EventHint::kPersonDetected;
  msg::EdgeReport report{config_.camera_id, now, std::move(detections), hint, level_};
  const auto report_bytes = msg::report_size_bytes(report.detections.size());
  out.push_back(
      netsim::make_message(config_.camera_id, netsim::kCloud, report_at, std::move(report)));
  send_log_.push_back({report_at, report_bytes});

  if (processing_latency_us() > 1000000 / m.fps) {
    events_.push_back(
        {now, config_.camera_id, level_, "overrun", video_bytes_sent_});
  }

  ++segment_frame_index_;
  ++frames_processed_;
  return out;
}

double EdgeNode::bandwidth_used(SimTime start, SimTime end) const {
  if (end <= start) return 0.0;
  std::int64_t bytes = 0;
  for (const auto& rec : send_log_) {
    if (rec.sent_at >= start && rec.sent_at < end) bytes += rec.bytes;
  }
  return static_cast<double>(bytes) / static_cast<double>(end - start);
}

}  // namespace vigil::edgenode
