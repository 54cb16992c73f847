#include "vigil/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vigil/assignment.hpp"

namespace vigil::tracker {

namespace {

constexpr double kChi2_95_2dof = 5.991;
constexpr double kGatedOut = 1e6;    // pair outside the Mahalanobis gate
constexpr double kUnmatched = 1e5;   // leaving a track unmatched
constexpr double kDummyInf = 1e12;   // another track's dummy column
constexpr double kTieBias = 1e-9;    // deterministic preference on exact ties

Eigen::Matrix4d symmetrized(const Eigen::Matrix4d& p) {
  return 0.5 * (p + p.transpose());
}

// Symmetrize and floor the spectrum; returns false if the result is still
// not positive definite.
bool make_spd(Eigen::Matrix4d& p) {
  p = symmetrized(p);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(p);
  if (es.info() != Eigen::Success) return false;
  if (es.eigenvalues().minCoeff() > 0.0) return true;
  Eigen::Vector4d ev = es.eigenvalues().cwiseMax(1e-12);
  p = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  p = symmetrized(p);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> check(p);
  return check.info() == Eigen::Success && check.eigenvalues().minCoeff() > 0.0;
}

double appearance_cost(const Track& track, const perception::Detection& det) {
  // Pseudo-detections carry no descriptor: the inter-frame matcher falls back
  // to pure motion, which is the same as a perfect appearance score.
  if (!det.has_descriptor || track.gallery.empty()) return 0.0;
  double best = -1.0;
  for (const auto& g : track.gallery) best = std::max(best, perception::dot(det.descriptor, g));
  return 1.0 - best;
}

}  // namespace

const char* to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::kTentative: return "tentative";
    case TrackStatus::kConfirmed: return "confirmed";
    case TrackStatus::kDeleted: return "deleted";
  }
  return "unknown";
}

Track predict(const Track& track, double dt_ms, const TrackerParams& params) {
  if (!(dt_ms > 0)) throw std::invalid_argument("predict needs dt_ms > 0");
  const double dt = dt_ms / 1000.0;
  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;

  const double q = params.accel_density * params.accel_density;
  Eigen::Matrix4d qm = Eigen::Matrix4d::Zero();
  const double q3 = q * dt * dt * dt / 3.0;
  const double q2 = q * dt * dt / 2.0;
  const double q1 = q * dt;
  qm(0, 0) = qm(1, 1) = q3;
  qm(0, 2) = qm(2, 0) = q2;
  qm(1, 3) = qm(3, 1) = q2;
  qm(2, 2) = qm(3, 3) = q1;

  Track out = track;
  out.state = f * track.state;
  out.covariance = symmetrized(f * track.covariance * f.transpose() + qm);
  return out;
}

Association associate(const std::vector<Track>& tracks,
                      const std::vector<perception::Detection>& detections,
                      const TrackerParams& params) {
  Association out;
  const size_t n = tracks.size();
  const size_t m = detections.size();
  if (n == 0) {
    for (size_t j = 0; j < m; ++j) out.unmatched_detections.push_back(j);
    return out;
  }
  if (m == 0) {
    for (size_t i = 0; i < n; ++i) out.unmatched_tracks.push_back(i);
    return out;
  }

  const Eigen::Matrix2d r_cov =
      Eigen::Matrix2d::Identity() * (params.r_meas * params.r_meas);
  Eigen::MatrixXd cost(n, m + n);
  cost.setConstant(kDummyInf);
  std::vector<char> gated(n * m, 0);

  for (size_t i = 0; i < n; ++i) {
    const Eigen::Matrix2d s = tracks[i].covariance.topLeftCorner<2, 2>() + r_cov;
    const Eigen::LLT<Eigen::Matrix2d> llt(s);
    for (size_t j = 0; j < m; ++j) {
      const Eigen::Vector2d d = detections[j].world_point - tracks[i].position();
      const double maha2 = d.dot(llt.solve(d));
      double c = kGatedOut;
      if (maha2 <= params.gate2) {
        gated[i * m + j] = 1;
        c = params.lambda * std::sqrt(maha2) +
            (1.0 - params.lambda) * appearance_cost(tracks[i], detections[j]);
      }
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
    }
    cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m + i)) = kUnmatched;
  }
  // The bias is far below any real cost gap; on exact ties it hands the
  // contested detection to the earlier (lower-id) track.
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < m + n; ++j) {
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +=
          kTieBias * static_cast<double>((n - 1 - i) * j);
    }
  }

  const auto row_to_col = solve_assignment(cost);
  std::vector<char> det_taken(m, 0);
  for (size_t i = 0; i < n; ++i) {
    const int c = row_to_col[i];
    if (c >= 0 && static_cast<size_t>(c) < m && gated[i * m + static_cast<size_t>(c)]) {
      out.matches.emplace_back(i, static_cast<size_t>(c));
      det_taken[static_cast<size_t>(c)] = 1;
    } else {
      out.unmatched_tracks.push_back(i);
    }
  }
  for (size_t j = 0; j < m; ++j) {
    if (!det_taken[j]) out.unmatched_detections.push_back(j);
  }
  return out;
}

Track update(const Track& track, const perception::Detection& detection,
             const TrackerParams& params) {
  using M24 = Eigen::Matrix<double, 2, 4>;
  M24 h = M24::Zero();
  h(0, 0) = 1;
  h(1, 1) = 1;
  const Eigen::Matrix2d r_cov =
      Eigen::Matrix2d::Identity() * (params.r_meas * params.r_meas);

  const Eigen::Matrix2d s = h * track.covariance * h.transpose() + r_cov;
  const Eigen::Matrix<double, 4, 2> k =
      track.covariance * h.transpose() * s.inverse();
  const Eigen::Vector2d innovation = detection.world_point - h * track.state;

  Track out = track;
  out.state = track.state + k * innovation;
  const Eigen::Matrix4d a = Eigen::Matrix4d::Identity() - k * h;
  out.covariance = a * track.covariance * a.transpose() + k * r_cov * k.transpose();
  if (!make_spd(out.covariance)) {
    throw NonSPDCovariance("covariance lost positive definiteness in update");
  }

  if (detection.has_descriptor) {
    out.gallery.push_back(detection.descriptor);
    if (out.gallery.size() > static_cast<size_t>(params.gallery_capacity)) {
      out.gallery.erase(out.gallery.begin());
    }
    out.last_true_subject = detection.true_subject;
  }
  out.hits += 1;
  out.misses = 0;
  if (detection.camera_id >= 0) out.last_camera_id = detection.camera_id;
  return out;
}

bool contains(const PredictionEllipse& e, const Eigen::Vector2d& point) {
  const Eigen::Vector2d d = point - e.center;
  const double c = std::cos(e.orientation);
  const double s = std::sin(e.orientation);
  const double u = c * d.x() + s * d.y();
  const double w = -s * d.x() + c * d.y();
  const double nu = u / e.axes.x();
  const double nw = w / e.axes.y();
  return nu * nu + nw * nw <= 1.0;
}

PredictionEllipse ellipse_from(const Eigen::Vector2d& center,
                               const Eigen::Matrix2d& pos_cov, int horizon_ms) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (pos_cov + pos_cov.transpose()));
  const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(1e-18);  // ascending
  PredictionEllipse out;
  out.center = center;
  out.axes.x() = std::sqrt(kChi2_95_2dof * ev(1));
  out.axes.y() = std::sqrt(kChi2_95_2dof * ev(0));
  out.orientation = std::atan2(es.eigenvectors()(1, 1), es.eigenvectors()(0, 1));
  out.horizon_ms = horizon_ms;
  return out;
}

PredictionEllipse prediction_ellipse(const Track& track, const TrackerParams& params) {
  const Track ahead = predict(track, static_cast<double>(params.horizon_ms), params);
  return ellipse_from(ahead.position(), ahead.covariance.topLeftCorner<2, 2>(),
                      params.horizon_ms);
}

std::vector<TrackEvent> MultiObjectTracker::step(
    const std::vector<perception::Detection>& detections, SimTime now) {
  std::vector<TrackEvent> events;
  if (last_step_time_) {
    if (now < *last_step_time_) {
      throw std::invalid_argument("tracker stepped backwards in time");
    }
    const double dt_ms = static_cast<double>(now - *last_step_time_) / 1000.0;
    if (dt_ms > 0) {
      for (auto& t : tracks_) t = predict(t, dt_ms, params_);
    }
  }

  const Association assoc = associate(tracks_, detections, params_);
  for (const auto& [ti, di] : assoc.matches) {
    tracks_[ti] = update(tracks_[ti], detections[di], params_);
    Track& t = tracks_[ti];
    if (t.status == TrackStatus::kTentative && t.hits >= params_.hits_to_confirm) {
      t.status = TrackStatus::kConfirmed;
      events.push_back({TrackEvent::Kind::kConfirmed, t.track_id, now});
    }
  }
  for (const size_t ti : assoc.unmatched_tracks) {
    Track& t = tracks_[ti];
    t.misses += 1;
    if (t.misses >= params_.misses_to_delete) {
      t.status = TrackStatus::kDeleted;
      events.push_back({TrackEvent::Kind::kLost, t.track_id, now});
    }
  }
  for (const size_t di : assoc.unmatched_detections) {
    const auto& det = detections[di];
    if (!det.has_descriptor) continue;  // ROI-only evidence never births a track
    Track t;
    t.track_id = next_track_id_++;
    t.state << det.world_point.x(), det.world_point.y(), 0, 0;
    Eigen::Vector4d diag;
    diag << params_.r_meas * params_.r_meas, params_.r_meas * params_.r_meas,
        params_.init_vel_sigma * params_.init_vel_sigma,
        params_.init_vel_sigma * params_.init_vel_sigma;
    t.covariance = diag.asDiagonal();
    t.gallery.push_back(det.descriptor);
    t.hits = 1;
    t.last_camera_id = det.camera_id;
    t.last_true_subject = det.true_subject;
    events.push_back({TrackEvent::Kind::kCreated, t.track_id, now});
    tracks_.push_back(std::move(t));
  }

  std::erase_if(tracks_, [](const Track& t) { return t.status == TrackStatus::kDeleted; });
  last_step_time_ = now;
  return events;
}

void write_track_log(const std::string& path, const std::vector<TrackLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "timestamp_ms,track_id,x,y,vx,vy,status,camera_id\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%.9g,%.9g,%.9g,%.9g,%s,%d\n",
                  static_cast<long long>(r.timestamp / 1000),
                  static_cast<long long>(r.track_id), r.x, r.y, r.vx, r.vy,
                  to_string(r.status), r.camera_id);
    out << buf;
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace vigil::tracker
