#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vigil/bgmodel.hpp"
#include "vigil/common.hpp"

namespace vigil::perception {

// Unit-length appearance embedding.
using Descriptor = std::array<double, 128>;

double dot(const Descriptor& a, const Descriptor& b);
double norm(const Descriptor& a);
void normalize(Descriptor& a);

// Deterministic unit latent for a subject, derived from a seed.
Descriptor descriptor_from_seed(std::uint64_t seed);
Descriptor random_unit_descriptor(Rng& rng);

struct BBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  double area() const { return w > 0 && h > 0 ? w * h : 0.0; }
  double iou(const BBox& o) const;
};

enum class DetectionSource { kDetector, kRoiOnly, kSpurious };

struct Detection {
  int camera_id = -1;
  SimTime timestamp = 0;
  BBox bbox;
  double confidence = 0.0;
  DetectionSource source = DetectionSource::kDetector;
  bool has_descriptor = false;
  Descriptor descriptor{};           // unit norm when has_descriptor
  Eigen::Vector2d world_point{0, 0}; // ground plane, filled by the edge node
  // Simulation-side truth tag for the detected subject; empty for spurious
  // detections. Consumed only by the identity channel and the evaluator.
  std::string true_subject;
};

struct IdentityVerdict {
  std::optional<std::string> subject_id;  // nullopt = unknown
  bool authorized = false;
  int face_pixels = 0;
  double match_score = 0.0;

  bool known() const { return subject_id.has_value(); }
};

// What the renderer knows about a drawn actor in one frame.
struct GroundTruthActor {
  std::string actor_id;
  BBox bbox;  // image space, clipped to the frame
  Descriptor latent{};
  bool authorized = false;
};

// Noise parameters indexed by operating mode level (0 = lowest resolution).
struct PerceptionParams {
  double iou_threshold = 0.3;
  std::array<double, 3> p_fn{0.05, 0.03, 0.02};
  std::array<double, 3> p_fp{0.04, 0.02, 0.01};
  std::array<double, 3> sigma_app{0.20, 0.10, 0.05};
  double face_fpr = 1e-6;
  double face_scale = 0.12;  // face pixels = round(face_scale * rows / distance)
  double fnr_px_lo = 8.0;    // FNR 1.0 at and below this face size
  double fnr_px_hi = 63.0;   // FNR 1e-5 at and above
  double fnr_lo = 1.0;
  double fnr_hi = 1e-5;
};

struct WatchlistEntry {
  std::string subject_id;
  bool authorized = false;
  Descriptor latent{};
};

class Watchlist {
 public:
  void add(WatchlistEntry entry);
  const WatchlistEntry* find(const std::string& subject_id) const;
  size_t size() const { return entries_.size(); }
  const std::vector<WatchlistEntry>& entries() const { return entries_; }

 private:
  std::vector<WatchlistEntry> entries_;
};

struct InvalidFaceSize : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonPositiveDistance : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FileFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Detector channel. An ROI is a person iff it overlaps a ground-truth actor
// with IoU >= iou_threshold; true detections are dropped with probability
// p_fn(mode) and a spurious detection is injected with probability
// p_fp(mode) per frame. camera_id/timestamp/world_point are left to the
// caller.
std::vector<Detection> classify_rois(const std::vector<bgmodel::RegionOfInterest>& rois,
                                     const std::vector<GroundTruthActor>& actors,
                                     int mode_level, int frame_width, int frame_height,
                                     const PerceptionParams& params, Rng& rng);

// Observation of a latent descriptor: normalize(latent + noise) where the
// noise vector has RMS length sigma_app(mode).
Descriptor make_descriptor(const Descriptor& latent, int mode_level,
                           const PerceptionParams& params, Rng& rng);

// False negative rate of the identity channel, log-linear in log(face_pixels)
// between (fnr_px_lo -> fnr_lo) and (fnr_px_hi -> fnr_hi), clamped outside.
double fnr_for_pixels(double face_pixels, const PerceptionParams& params);

// Identity channel. true_subject is the simulation-truth identity of the
// observed person ("" when there is none). A watchlisted subject is matched
// with probability 1 - FNR(face_pixels); otherwise a wrong watchlist entry is
// reported with probability face_fpr, else the verdict is unknown.
IdentityVerdict identify_face(const std::string& true_subject, int face_pixels,
                              const Watchlist& watchlist, const PerceptionParams& params,
                              Rng& rng);

// Face size in pixels for a subject at the given distance under the given
// vertical resolution; floors at 1 pixel. Throws NonPositiveDistance.
int face_pixels_for(double distance_m, int mode_rows, const PerceptionParams& params);

// Watchlist file: one subject per line, "subject_id authorized{0|1}" followed
// by 128 decimals.
Watchlist load_watchlist(const std::string& path);
void save_watchlist(const std::string& path, const Watchlist& wl);

}  // namespace vigil::perception
