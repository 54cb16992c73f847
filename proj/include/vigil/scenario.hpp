#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vigil/bgmodel.hpp"
#include "vigil/cloudqrm.hpp"
#include "vigil/common.hpp"
#include "vigil/edgenode.hpp"
#include "vigil/evaluation.hpp"
#include "vigil/geometry.hpp"
#include "vigil/modes.hpp"
#include "vigil/netsim.hpp"
#include "vigil/perception.hpp"
#include "vigil/tracker.hpp"

namespace vigil::scenario {

// Syntax or schema problem in a scenario file. The message names the file,
// the line/column for syntax errors, or the offending field path.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Semantic problems; carries every violation found, not just the first.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct UnknownCamera : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// A module error that escaped mid-run, annotated with the virtual time and
// the component that threw.
struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CameraSpec {
  int camera_id = 0;
  edgenode::DeviceProfile device = edgenode::DeviceProfile::kTX2;
  int initial_level = 0;
  Eigen::Vector2d position{0, 0};          // mount point on the ground, meters
  geometry::PerimeterPolygon fov;          // kind kCameraFov
  geometry::Homography homography;         // level-2 pixel grid -> world meters
};

// A walking actor: piecewise-linear path over waypoints with per-leg speeds
// and optional holds at each waypoint. Outside [enter, exit) the actor is
// absent (not rendered, not ground truth).
struct ActorSpec {
  std::string actor_id;
  std::uint64_t latent_seed = 0;
  bool authorized = false;
  bool watchlisted = true;   // enrolled in the identification gallery
  double width_m = 0.6;
  double height_m = 1.7;
  std::vector<Eigen::Vector2d> waypoints;
  std::vector<double> speeds_m_s;  // one per leg
  std::vector<SimTime> holds_us;   // one per waypoint
  SimTime enter_us = 0;
  SimTime exit_us = std::numeric_limits<SimTime>::max();

  bool present_at(SimTime t) const { return t >= enter_us && t < exit_us; }
  // Ground position at absolute time t; before enter it is the first
  // waypoint, after the path ends it is the last.
  Eigen::Vector2d position_at(SimTime t) const;
};

struct ScenarioConfig {
  SimTime duration_us = 0;
  std::uint64_t master_seed = 0;
  std::string rates_name = "table2";  // table2 | fig6
  edgenode::ModeTable rates = edgenode::standard_rates();
  netsim::LinkConfig link;
  SimTime downlink_latency_us = 5000;
  bool qrm_enabled = true;
  qrm::QrmConfig qrm;  // rates/perception fields are synced from this config at run time
  tracker::TrackerParams tracker;
  perception::PerceptionParams perception;
  bgmodel::MogParams mog;
  int detector_cadence = 5;
  std::vector<CameraSpec> cameras;
  std::vector<ActorSpec> actors;
  std::vector<geometry::PerimeterPolygon> secured;
};

// Parses and validates a scenario JSON file. Referenced correspondence files
// are resolved relative to the scenario file and calibrated on the spot.
ScenarioConfig load(const std::string& path);

// Applies a named rates preset ("table2" or "fig6") to the config.
// Throws ParseError for unknown names.
void apply_rates_preset(ScenarioConfig& cfg, const std::string& name);

// Deterministic synthetic world: per-pixel quantized Gaussian noise around
// level 120 (sigma ~2, clamped to +-5 so a settled background pixel always
// matches its dominant component) plus flat 220-intensity rectangles for
// actors, placed through the inverse camera homography.
class Scene : public edgenode::FrameSource {
 public:
  explicit Scene(const ScenarioConfig& cfg);

  void render(int camera_id, SimTime t, bgmodel::Frame& frame) override;
  std::vector<perception::GroundTruthActor> actors_in_view(int camera_id, SimTime t,
                                                           int width, int height) override;

  // Axis-aligned actor rectangle on the level-2 pixel grid; the foot center
  // is the inverse-homography image of the actor's ground position. Empty
  // when the actor is absent or behind the camera plane.
  struct ActorRect {
    double foot_x = 0;  // grid px
    double foot_y = 0;
    double width = 0;
    double height = 0;
  };
  std::optional<ActorRect> actor_rect(int camera_id, SimTime t, const ActorSpec& actor) const;

 private:
  const CameraSpec& camera(int camera_id) const;

  std::vector<CameraSpec> cameras_;
  std::vector<ActorSpec> actors_;
  std::vector<Eigen::Matrix3d> world_to_grid_;  // inverse homographies
  std::vector<double> horizon_sign_;  // sign of the projective scale inside the FOV
  int grid_w_ = 0;
  int grid_h_ = 0;
  std::uint64_t noise_seed_ = 0;
};

struct RunOptions {
  std::string mask_dump_dir;  // when set, nodes dump foreground masks here
};

struct RunResult {
  eval::RunArtifacts artifacts;
  std::vector<eval::GroundTruthTrack> ground_truth;
  std::vector<eval::HypothesisTrack> hypotheses;
};

// Drives the closed loop from virtual time 0 to duration: edge ticks, the
// shared network, and 100 ms cloud cycles interleaved in timestamp order.
RunResult run(const ScenarioConfig& cfg, const RunOptions& options = {});

}  // namespace vigil::scenario
