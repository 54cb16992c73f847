#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vigil/common.hpp"
#include "vigil/perception.hpp"

namespace vigil::tracker {

struct TrackerParams {
  double lambda = 0.5;            // motion vs appearance mix in the match cost
  double gate2 = 5.991;           // chi-square(2 dof, 0.95) Mahalanobis^2 gate
  double r_meas = 0.25;           // measurement noise stddev, m
  double accel_density = 0.5;     // acceleration noise density, m/s^2 * sqrt(s)
  double init_vel_sigma = 1.0;    // velocity stddev of a newborn track, m/s
  int hits_to_confirm = 3;
  int misses_to_delete = 30;
  int gallery_capacity = 30;
  int horizon_ms = 200;           // prediction-ellipse look-ahead
};

enum class TrackStatus { kTentative, kConfirmed, kDeleted };

const char* to_string(TrackStatus s);

struct Track {
  std::int64_t track_id = 0;
  Eigen::Vector4d state{0, 0, 0, 0};      // x, y in m; vx, vy in m/s
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
  std::vector<perception::Descriptor> gallery;  // ring, newest last
  TrackStatus status = TrackStatus::kTentative;
  int hits = 0;
  int misses = 0;  // consecutive missed update cycles
  int last_camera_id = -1;
  std::string last_true_subject;  // simulation truth behind the newest real detection
  std::optional<perception::IdentityVerdict> identity;  // nullopt = pending

  Eigen::Vector2d position() const { return state.head<2>(); }
};

struct PredictionEllipse {
  Eigen::Vector2d center{0, 0};
  Eigen::Vector2d axes{0, 0};  // semi-axis lengths, major first
  double orientation = 0;      // radians, angle of the major axis
  int horizon_ms = 200;
  double confidence = 0.95;
};

bool contains(const PredictionEllipse& e, const Eigen::Vector2d& point);

struct NonSPDCovariance : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Constant-velocity Kalman prediction with continuous white-noise
// acceleration; exact semigroup: predict(a) then predict(b) == predict(a+b).
Track predict(const Track& track, double dt_ms, const TrackerParams& params);

struct Association {
  std::vector<std::pair<size_t, size_t>> matches;  // (track index, detection index)
  std::vector<size_t> unmatched_tracks;
  std::vector<size_t> unmatched_detections;
};

// Gated optimal assignment. Cost of a gated pair is
//   lambda * mahalanobis + (1 - lambda) * (1 - max gallery cosine);
// pairs with mahalanobis^2 above gate2 cannot match. Exact cost ties are
// broken in favor of earlier (lower-id) tracks.
Association associate(const std::vector<Track>& tracks,
                      const std::vector<perception::Detection>& detections,
                      const TrackerParams& params);

// Kalman measurement update with z = detection.world_point. Appends the
// descriptor to the gallery for real detections; pseudo-detections only
// correct the state.
Track update(const Track& track, const perception::Detection& detection,
             const TrackerParams& params);

// Ellipse containing the true position with the given confidence, from a
// position covariance. Used by prediction_ellipse and directly testable.
PredictionEllipse ellipse_from(const Eigen::Vector2d& center, const Eigen::Matrix2d& pos_cov,
                               int horizon_ms);

// 95% bound on where a confirmed track will be horizon_ms from now.
PredictionEllipse prediction_ellipse(const Track& track, const TrackerParams& params);

struct TrackEvent {
  enum class Kind { kCreated, kConfirmed, kLost };
  Kind kind;
  std::int64_t track_id;
  SimTime timestamp;
};

class MultiObjectTracker {
 public:
  explicit MultiObjectTracker(TrackerParams params = {}) : params_(params) {}

  // One update cycle: predict to `now`, associate, correct, manage lifecycle.
  // All detections must carry timestamp == now; `now` must not go backwards.
  std::vector<TrackEvent> step(const std::vector<perception::Detection>& detections,
                               SimTime now);

  const std::vector<Track>& tracks() const { return tracks_; }
  std::vector<Track>& tracks() { return tracks_; }
  const TrackerParams& params() const { return params_; }

 private:
  TrackerParams params_;
  std::vector<Track> tracks_;
  std::int64_t next_track_id_ = 1;
  std::optional<SimTime> last_step_time_;
};

struct TrackLogRow {
  SimTime timestamp = 0;
  std::int64_t track_id = 0;
  double x = 0, y = 0, vx = 0, vy = 0;
  TrackStatus status = TrackStatus::kTentative;
  int camera_id = -1;
};

// CSV: timestamp_ms,track_id,x,y,vx,vy,status,camera_id
void write_track_log(const std::string& path, const std::vector<TrackLogRow>& rows);

}  // namespace vigil::tracker
