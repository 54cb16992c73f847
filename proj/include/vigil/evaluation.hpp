#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vigil/cloudqrm.hpp"
#include "vigil/common.hpp"
#include "vigil/edgenode.hpp"
#include "vigil/netsim.hpp"
#include "vigil/tracker.hpp"

namespace vigil::eval {

struct EmptyGroundTruth : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IOFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TimedPoint {
  SimTime timestamp = 0;
  Eigen::Vector2d position{0, 0};
};

struct GroundTruthTrack {
  std::string actor_id;
  bool authorized = false;
  std::vector<TimedPoint> samples;  // strictly increasing timestamps
};

struct HypothesisTrack {
  std::int64_t track_id = 0;
  std::vector<TimedPoint> samples;
};

// Single-frame assignment. `carry` pins (gt, hyp) index pairs from the
// previous frame; they are kept whenever still within the threshold, and the
// remainder is matched distance-minimally.
struct FrameMatch {
  std::vector<std::pair<int, int>> pairs;  // (gt index, hyp index)
  double total_distance = 0.0;
};

FrameMatch match_frame(const std::vector<Eigen::Vector2d>& gt,
                       const std::vector<Eigen::Vector2d>& hyp, double threshold_m,
                       const std::vector<std::pair<int, int>>& carry = {});

struct MotReport {
  double mota = 0.0;  // percent, <= 100
  double motp = 0.0;  // similarity percent: (1 - mean distance / threshold) * 100
  double mt = 0.0;    // percent of gt tracks covered >= 80% of their life
  double ml = 0.0;    // percent covered <= 20%
  double fn_pct = 0.0;
  double fp_pct = 0.0;
  double id_pct = 0.0;
  std::int64_t fn = 0;
  std::int64_t fp = 0;
  std::int64_t id_switches = 0;
  std::int64_t gt_total = 0;
  std::int64_t matches = 0;
  double mean_distance = 0.0;
};

MotReport compute_mot(const std::vector<GroundTruthTrack>& gt,
                      const std::vector<HypothesisTrack>& hyp, double threshold_m = 1.0);

// One header row `MOTA,MOTP,MT,ML,FN,FP,ID` and one value row.
void write_metrics_csv(std::ostream& out, const MotReport& r);
void write_metrics_csv(const std::string& path, const MotReport& r);

// gt/hyp CSV interchange for the `mot` CLI verb:
// timestamp_ms,id,x,y  (header required)
std::vector<GroundTruthTrack> load_gt_csv(const std::string& path);
std::vector<HypothesisTrack> load_hyp_csv(const std::string& path);

struct RunArtifacts {
  SimTime duration = 0;
  std::vector<tracker::TrackLogRow> tracks;
  std::vector<edgenode::NodeEventRow> node_events;
  std::vector<qrm::CommandLogRow> commands;
  qrm::BandwidthReport bandwidth;
  std::vector<netsim::Message> deliveries;
  std::optional<MotReport> mot;
  std::map<int, std::array<SimTime, 3>> mode_dwell_us;  // camera -> per-level dwell
};

// Writes the full bundle into out_dir: tracks.csv, node_events.csv,
// commands.csv, bandwidth.csv, deliveries.csv, summary.json.
void run_report(const std::string& out_dir, const RunArtifacts& artifacts);

}  // namespace vigil::eval
