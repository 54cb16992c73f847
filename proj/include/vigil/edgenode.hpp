#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vigil/bgmodel.hpp"
#include "vigil/common.hpp"
#include "vigil/geometry.hpp"
#include "vigil/messages.hpp"
#include "vigil/modes.hpp"
#include "vigil/netsim.hpp"
#include "vigil/perception.hpp"

namespace vigil::edgenode {

// Supplies pixel content and simulation truth for one camera's frames.
struct FrameSource {
  virtual ~FrameSource() = default;
  // frame arrives sized to the current mode; fill pixels for time t.
  virtual void render(int camera_id, SimTime t, bgmodel::Frame& frame) = 0;
  virtual std::vector<perception::GroundTruthActor> actors_in_view(int camera_id,
                                                                   SimTime t, int width,
                                                                   int height) = 0;
};

struct UnknownMode : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NodeEventRow {
  SimTime timestamp = 0;
  int camera_id = -1;
  int mode_level = 0;
  std::string cause;
  std::int64_t bytes_sent_cum = 0;  // cumulative video bytes
};

// CSV: timestamp_ms,camera_id,mode,cause,bytes_sent_cum
void write_node_events(const std::string& path, const std::vector<NodeEventRow>& rows);

// Closed form for how many frames a segment [0, duration) emits at `fps`
// with frame i at floor(i * 1e6 / fps) us.
inline std::int64_t frames_in_span(SimTime duration_us, int fps) {
  if (duration_us <= 0) return 0;
  return (duration_us * fps + 999999) / 1000000;
}

struct EdgeNodeConfig {
  int camera_id = 0;
  DeviceProfile device = DeviceProfile::kTX2;
  int initial_level = 0;
  ModeTable rates = standard_rates();
  geometry::Homography homography;  // calibrated on the level-2 pixel grid
  bgmodel::MogParams mog;
  perception::PerceptionParams perception;
  int detector_cadence = 5;  // full detector every Nth frame
  SimTime start_time = 0;
  std::uint64_t seed = 0;
  std::string mask_dump_dir;  // when set, each frame's foreground mask is written as PGM
};

// Per-camera edge pipeline and operating-mode state machine. The simulator
// drives it by calling tick(now) exactly at next_frame_at() and forwarding
// delivered ReconfigCommands to apply_reconfig().
class EdgeNode {
 public:
  explicit EdgeNode(EdgeNodeConfig config);

  // Runs one frame through render -> background model -> cleanup -> ROI
  // extraction -> (detector or pseudo-detections), then emits the sized
  // VideoChunk at frame time and the EdgeReport after processing latency.
  std::vector<netsim::Message> tick(SimTime now, FrameSource& scene);

  // Stages a command; it takes effect at the next frame boundary (staged
  // commands overwrite each other, last writer wins). Throws UnknownMode.
  void apply_reconfig(const msg::ReconfigCommand& command);

  // Video chunk plus report bytes sent with sent_at in [start, end), MB/s.
  double bandwidth_used(SimTime start, SimTime end) const;

  SimTime next_frame_at() const;
  int camera_id() const { return config_.camera_id; }
  int level() const { return level_; }
  const OperatingMode& mode() const { return config_.rates[static_cast<size_t>(level_)]; }
  bool in_warmup() const { return mog_->in_warmup(); }
  std::int64_t frames_processed() const { return frames_processed_; }
  std::int64_t bytes_sent() const { return video_bytes_sent_; }
  SimTime processing_latency_us() const;
  const std::vector<NodeEventRow>& events() const { return events_; }

  // Video bytes per dwell segment so far: (level, segment duration so far).
  struct DwellSegment {
    int level;
    SimTime start;
  };
  const std::vector<DwellSegment>& dwell_segments() const { return dwell_segments_; }

 private:
  void enter_mode(int new_level, SimTime now, const char* cause);
  double min_roi_area() const;

  EdgeNodeConfig config_;
  int level_ = 0;
  std::optional<msg::ReconfigCommand> pending_;
  std::unique_ptr<bgmodel::MogModel> mog_;
  bgmodel::Frame frame_;
  Rng rng_;

  SimTime segment_epoch_ = 0;
  std::int64_t segment_frame_index_ = 0;
  std::int64_t frames_processed_ = 0;
  std::int64_t video_bytes_sent_ = 0;

  struct SentRecord {
    SimTime sent_at;
    std::int64_t bytes;
  };
  std::vector<SentRecord> send_log_;  // chunks + reports
  std::vector<NodeEventRow> events_;
  std::vector<DwellSegment> dwell_segments_;
};

}  // namespace vigil::edgenode
