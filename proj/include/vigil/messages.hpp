#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "vigil/common.hpp"
#include "vigil/perception.hpp"

namespace vigil::msg {

enum class EventCause {
  kNothingRelevant,
  kDetection,
  kPossibleIntrusion,
  kPredictedEntry,
  kConfirmedIntrusion,
  kBrokenPerimeter,
};

const char* to_string(EventCause c);

enum class EventHint { kNone, kPersonDetected };

// Sized stand-in for one frame's video payload; content is never transported.
struct VideoChunk {
  int camera_id = -1;
  SimTime frame_timestamp = 0;
  int mode_level = 0;
  std::int64_t size_bytes = 0;
};

struct EdgeReport {
  int camera_id = -1;
  SimTime timestamp = 0;  // frame time; the message is sent after processing
  std::vector<perception::Detection> detections;
  EventHint event_hint = EventHint::kNone;
  int mode_level = 0;
};

struct ReconfigCommand {
  int camera_id = -1;
  int target_level = 0;
  EventCause cause = EventCause::kNothingRelevant;
  SimTime issued_at = 0;
};

struct Ack {
  int camera_id = -1;
  int acked_level = 0;
  SimTime timestamp = 0;
};

using Payload = std::variant<VideoChunk, EdgeReport, ReconfigCommand, Ack>;

// Wire size of a report scales with its detection count but stays
// metadata-sized (at most 2 KB).
inline std::int64_t report_size_bytes(size_t n_detections) {
  const std::int64_t raw = 240 + 560 * static_cast<std::int64_t>(n_detections);
  return raw < 2048 ? raw : 2048;
}

inline constexpr std::int64_t kCommandSizeBytes = 64;
inline constexpr std::int64_t kAckSizeBytes = 64;

}  // namespace vigil::msg
