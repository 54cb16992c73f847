#include "vigil/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vigil/assignment.hpp"

namespace vigil::eval {

namespace {

// Cost tiers, far apart so the solver's choice is never ambiguous between
// tiers: real distances (<= threshold), leave-unmatched, gated-out, and
// dummy slots that belong to other rows.
constexpr double kUnmatched = 1e3;
constexpr double kGated = 1e6;
constexpr double kDummyInf = 1e12;

}  // namespace

FrameMatch match_frame(const std::vector<Eigen::Vector2d>& gt,
                       const std::vector<Eigen::Vector2d>& hyp, double threshold_m,
                       const std::vector<std::pair<int, int>>& carry) {
  FrameMatch out;
  const int n = static_cast<int>(gt.size());
  const int m = static_cast<int>(hyp.size());
  std::vector<bool> gt_used(gt.size(), false), hyp_used(hyp.size(), false);

  for (const auto& [gi, hi] : carry) {
    if (gi < 0 || gi >= n || hi < 0 || hi >= m) continue;
    if (gt_used[static_cast<size_t>(gi)] || hyp_used[static_cast<size_t>(hi)]) continue;
    const double d = (gt[static_cast<size_t>(gi)] - hyp[static_cast<size_t>(hi)]).norm();
    if (d > threshold_m) continue;
    gt_used[static_cast<size_t>(gi)] = true;
    hyp_used[static_cast<size_t>(hi)] = true;
    out.pairs.emplace_back(gi, hi);
    out.total_distance += d;
  }

  std::vector<int> free_gt, free_hyp;
  for (int i = 0; i < n; ++i) {
    if (!gt_used[static_cast<size_t>(i)]) free_gt.push_back(i);
  }
  for (int j = 0; j < m; ++j) {
    if (!hyp_used[static_cast<size_t>(j)]) free_hyp.push_back(j);
  }
  if (!free_gt.empty()) {
    const int rows = static_cast<int>(free_gt.size());
    const int cols = static_cast<int>(free_hyp.size());
    Eigen::MatrixXd cost(rows, cols + rows);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const double d =
            (gt[static_cast<size_t>(free_gt[static_cast<size_t>(i)])] -
             hyp[static_cast<size_t>(free_hyp[static_cast<size_t>(j)])])
                .norm();
        cost(i, j) = d <= threshold_m ? d : kGated;
      }
      for (int k = 0; k < rows; ++k) {
        cost(i, cols + k) = k == i ? kUnmatched : kDummyInf;
      }
    }
    const auto row_to_col = solve_assignment(cost);
    for (int i = 0; i < rows; ++i) {
      const int j = row_to_col[static_cast<size_t>(i)];
      if (j < cols && cost(i, j) < kUnmatched) {
        out.pairs.emplace_back(free_gt[static_cast<size_t>(i)],
                               free_hyp[static_cast<size_t>(j)]);
        out.total_distance += cost(i, j);
      }
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

MotReport compute_mot(const std::vector<GroundTruthTrack>& gt,
                      const std::vector<HypothesisTrack>& hyp, double threshold_m) {
  std::int64_t gt_total = 0;
  for (const auto& t : gt) gt_total += static_cast<std::int64_t>(t.samples.size());
  if (gt_total == 0) throw EmptyGroundTruth("no ground-truth samples");

  std::set<SimTime> frame_set;
  std::vector<std::map<SimTime, Eigen::Vector2d>> gt_at(gt.size()), hyp_at(hyp.size());
  for (size_t i = 0; i < gt.size(); ++i) {
    for (const auto& s : gt[i].samples) {
      gt_at[i][s.timestamp] = s.position;
      frame_set.insert(s.timestamp);
    }
  }
  for (size_t j = 0; j < hyp.size(); ++j) {
    for (const auto& s : hyp[j].samples) {
      hyp_at[j][s.timestamp] = s.position;
      frame_set.insert(s.timestamp);
    }
  }

  MotReport r;
  r.gt_total = gt_total;
  double dist_sum = 0.0;
  std::map<size_t, size_t> last_match;            // gt index -> hyp index
  std::vector<std::int64_t> covered(gt.size(), 0);

  for (const SimTime t : frame_set) {
    std::vector<size_t> gt_idx, hyp_idx;
    std::vector<Eigen::Vector2d> gt_pos, hyp_pos;
    for (size_t i = 0; i < gt.size(); ++i) {
      const auto it = gt_at[i].find(t);
      if (it != gt_at[i].end()) {
        gt_idx.push_back(i);
        gt_pos.push_back(it->second);
      }
    }
    for (size_t j = 0; j < hyp.size(); ++j) {
      const auto it = hyp_at[j].find(t);
      if (it != hyp_at[j].end()) {
        hyp_idx.push_back(j);
        hyp_pos.push_back(it->second);
      }
    }

    std::vector<std::pair<int, int>> carry;
    for (size_t li = 0; li < gt_idx.size(); ++li) {
      const auto lm = last_match.find(gt_idx[li]);
      if (lm == last_match.end()) continue;
      const auto pos = std::find(hyp_idx.begin(), hyp_idx.end(), lm->second);
      if (pos == hyp_idx.end()) continue;
      carry.emplace_back(static_cast<int>(li),
                         static_cast<int>(pos - hyp_idx.begin()));
    }

    const auto fm = match_frame(gt_pos, hyp_pos, threshold_m, carry);
    for (const auto& [li, lj] : fm.pairs) {
      const size_t gi = gt_idx[static_cast<size_t>(li)];
      const size_t hj = hyp_idx[static_cast<size_t>(lj)];
      const auto lm = last_match.find(gi);
      if (lm != last_match.end() && lm->second != hj) ++r.id_switches;
      last_match[gi] = hj;
      ++covered[gi];
    }
    r.matches += static_cast<std::int64_t>(fm.pairs.size());
    dist_sum += fm.total_distance;
    r.fn += static_cast<std::int64_t>(gt_idx.size() - fm.pairs.size());
    r.fp += static_cast<std::int64_t>(hyp_idx.size() - fm.pairs.size());
  }

  const double gtd = static_cast<double>(gt_total);
  r.mota = 100.0 * (1.0 - static_cast<double>(r.fn + r.fp + r.id_switches) / gtd);
  r.mean_distance = r.matches > 0 ? dist_sum / static_cast<double>(r.matches) : 0.0;
  r.motp = r.matches > 0 ? 100.0 * (1.0 - r.mean_distance / threshold_m) : 0.0;
  r.fn_pct = 100.0 * static_cast<double>(r.fn) / gtd;
  r.fp_pct = 100.0 * static_cast<double>(r.fp) / gtd;
  r.id_pct = 100.0 * static_cast<double>(r.id_switches) / gtd;

  std::int64_t mostly_tracked = 0, mostly_lost = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    const auto life = static_cast<double>(gt[i].samples.size());
    if (life == 0.0) continue;
    const double frac = static_cast<double>(covered[i]) / life;
    if (frac >= 0.8) ++mostly_tracked;
    if (frac <= 0.2) ++mostly_lost;
  }
  const auto ntracks = static_cast<double>(gt.size());
  r.mt = 100.0 * static_cast<double>(mostly_tracked) / ntracks;
  r.ml = 100.0 * static_cast<double>(mostly_lost) / ntracks;
  return r;
}

void write_metrics_csv(std::ostream& out, const MotReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "MOTA,MOTP,MT,ML,FN,FP,ID\n%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%lld\n",
                r.mota, r.motp, r.mt, r.ml, r.fn_pct, r.fp_pct,
                static_cast<long long>(r.id_switches));
  out << buf;
}

void write_metrics_csv(const std::string& path, const MotReport& r) {
  std::ofstream out(path);
  if (!out) throw IOFailure("cannot open " + path);
  write_metrics_csv(out, r);
}

namespace {

// timestamp_ms,id,x,y with ids grouped into tracks in first-seen order.
template <typename TrackT, typename IdT>
std::vector<TrackT> load_point_csv(const std::string& path,
                                   IdT (*parse_id)(const std::string&)) {
  std::ifstream in(path);
  if (!in) throw IOFailure("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IOFailure(path + ": empty file");
  std::vector<TrackT> tracks;
  std::map<IdT, size_t> index;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string ts_s, id_s, x_s, y_s;
    if (!std::getline(ss, ts_s, ',') || !std::getline(ss, id_s, ',') ||
        !std::getline(ss, x_s, ',') || !std::getline(ss, y_s)) {
      throw IOFailure(path + ":" + std::to_string(lineno) + ": expected 4 fields");
    }
    TimedPoint p;
    try {
      p.timestamp = from_ms(std::stod(ts_s));
      p.position = {std::stod(x_s), std::stod(y_s)};
    } catch (const std::exception&) {
      throw IOFailure(path + ":" + std::to_string(lineno) + ": bad number");
    }
    const IdT id = parse_id(id_s);
    auto [it, fresh] = index.try_emplace(id, tracks.size());
    if (fresh) {
      TrackT t;
      if constexpr (std::is_same_v<IdT, std::string>) {
        t.actor_id = id;
      } else {
        t.track_id = id;
      }
      tracks.push_back(std::move(t));
    }
    tracks[it->second].samples.push_back(p);
  }
  return tracks;
}

std::string parse_actor_id(const std::string& s) { return s; }
std::int64_t parse_track_id(const std::string& s) { return std::stoll(s); }

}  // namespace

std::vector<GroundTruthTrack> load_gt_csv(const std::string& path) {
  return load_point_csv<GroundTruthTrack, std::string>(path, &parse_actor_id);
}

std::vector<HypothesisTrack> load_hyp_csv(const std::string& path) {
  return load_point_csv<HypothesisTrack, std::int64_t>(path, &parse_track_id);
}

void run_report(const std::string& out_dir, const RunArtifacts& a) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IOFailure("cannot create " + out_dir + ": " + ec.message());
  const auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

  tracker::write_track_log(path("tracks.csv"), a.tracks);
  edgenode::write_node_events(path("node_events.csv"), a.node_events);
  qrm::write_command_log(path("commands.csv"), a.commands);
  qrm::write_bandwidth_report(path("bandwidth.csv"), a.bandwidth);
  netsim::write_delivery_log(path("deliveries.csv"), a.deliveries);

  nlohmann::ordered_json j;
  j["duration_ms"] = a.duration / 1000;
  j["bandwidth"] = {
      {"total_mb", static_cast<double>(a.bandwidth.total_bytes) / 1e6},
      {"baseline_mb", static_cast<double>(a.bandwidth.baseline_bytes) / 1e6},
      {"reduction_pct", a.bandwidth.reduction * 100.0},
  };
  if (a.mot.has_value()) {
    j["mot"] = {
        {"mota", a.mot->mota},         {"motp", a.mot->motp},
        {"mt", a.mot->mt},             {"ml", a.mot->ml},
        {"fn_pct", a.mot->fn_pct},     {"fp_pct", a.mot->fp_pct},
        {"id_switches", a.mot->id_switches},
    };
  } else {
    j["mot"] = nullptr;
  }
  nlohmann::ordered_json dwell = nlohmann::ordered_json::object();
  for (const auto& [cam, per_level] : a.mode_dwell_us) {
    dwell[std::to_string(cam)] = {per_level[0] / 1000, per_level[1] / 1000,
                                  per_level[2] / 1000};
  }
  j["mode_dwell_ms"] = dwell;
  j["counts"] = {
      {"commands", a.commands.size()},
      {"deliveries", a.deliveries.size()},
      {"track_rows", a.tracks.size()},
  };

  std::ofstream out(path("summary.json"));
  if (!out) throw IOFailure("cannot open summary.json in " + out_dir);
  out << j.dump(2) << "\n";
}

}  // namespace vigil::eval
