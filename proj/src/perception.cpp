#include "vigil/perception.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vigil::perception {

double dot(const Descriptor& a, const Descriptor& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Descriptor& a) { return std::sqrt(dot(a, a)); }

void normalize(Descriptor& a) {
  const double n = norm(a);
  if (n <= 0) return;
  const double inv = 1.0 / n;
  for (double& v : a) v *= inv;
}

Descriptor random_unit_descriptor(Rng& rng) {
  Descriptor d;
  for (double& v : d) v = rng.gaussian();
  normalize(d);
  return d;
}

Descriptor descriptor_from_seed(std::uint64_t seed) {
  Rng rng(seed);
  return random_unit_descriptor(rng);
}

double BBox::iou(const BBox& o) const {
  const double ix0 = std::max(x, o.x);
  const double iy0 = std::max(y, o.y);
  const double ix1 = std::min(x + w, o.x + o.w);
  const double iy1 = std::min(y + h, o.y + o.h);
  if (ix1 <= ix0 || iy1 <= iy0) return 0.0;
  const double inter = (ix1 - ix0) * (iy1 - iy0);
  return inter / (area() + o.area() - inter);
}

Descriptor make_descriptor(const Descriptor& latent, int mode_level,
                           const PerceptionParams& params, Rng& rng) {
  // sigma_app is the RMS length of the full noise vector, so each of the 128
  // components gets sigma_app / sqrt(128).
  const double sigma = params.sigma_app.at(static_cast<size_t>(mode_level)) /
                       std::sqrt(static_cast<double>(std::tuple_size<Descriptor>::value));
  Descriptor out;
  for (size_t i = 0; i < out.size(); ++i) out[i] = latent[i] + sigma * rng.gaussian();
  normalize(out);
  return out;
}

std::vector<Detection> classify_rois(const std::vector<bgmodel::RegionOfInterest>& rois,
                                     const std::vector<GroundTruthActor>& actors,
                                     int mode_level, int frame_width, int frame_height,
                                     const PerceptionParams& params, Rng& rng) {
  const auto level = static_cast<size_t>(mode_level);
  const double p_fn = params.p_fn.at(level);
  const double p_fp = params.p_fp.at(level);

  std::vector<Detection> out;
  for (const auto& roi : rois) {
    const BBox box{static_cast<double>(roi.x), static_cast<double>(roi.y),
                   static_cast<double>(roi.width), static_cast<double>(roi.height)};
    const GroundTruthActor* best = nullptr;
    double best_iou = 0.0;
    for (const auto& actor : actors) {
      const double v = box.iou(actor.bbox);
      if (v > best_iou) {
        best_iou = v;
        best = &actor;
      }
    }
    if (!best || best_iou < params.iou_threshold) continue;  // not a person
    if (rng.uniform01() < p_fn) continue;                    // missed detection

    Detection det;
    det.bbox = box;
    det.confidence = best_iou;
    det.source = DetectionSource::kDetector;
    det.has_descriptor = true;
    det.descriptor = make_descriptor(best->latent, mode_level, params, rng);
    det.true_subject = best->actor_id;
    out.push_back(std::move(det));
  }

  if (rng.uniform01() < p_fp) {
    Detection det;
    det.source = DetectionSource::kSpurious;
    const double w = rng.uniform(0.02, 0.20) * frame_width;
    const double h = rng.uniform(0.05, 0.40) * frame_height;
    det.bbox.w = w;
    det.bbox.h = h;
    det.bbox.x = rng.uniform(0.0, std::max(0.0, frame_width - w));
    det.bbox.y = rng.uniform(0.0, std::max(0.0, frame_height - h));
    det.confidence = rng.uniform(0.2, 0.5);
    det.has_descriptor = true;
    det.descriptor = random_unit_descriptor(rng);
    out.push_back(std::move(det));
  }
  return out;
}

double fnr_for_pixels(double face_pixels, const PerceptionParams& params) {
  if (face_pixels <= params.fnr_px_lo) return params.fnr_lo;
  if (face_pixels >= params.fnr_px_hi) return params.fnr_hi;
  const double t = (std::log(face_pixels) - std::log(params.fnr_px_lo)) /
                   (std::log(params.fnr_px_hi) - std::log(params.fnr_px_lo));
  const double log_fnr =
      std::log10(params.fnr_lo) + t * (std::log10(params.fnr_hi) - std::log10(params.fnr_lo));
  return std::pow(10.0, log_fnr);
}

IdentityVerdict identify_face(const std::string& true_subject, int face_pixels,
                              const Watchlist& watchlist, const PerceptionParams& params,
                              Rng& rng) {
  if (face_pixels < 1) {
    throw InvalidFaceSize("face size must be at least 1 pixel, got " +
                          std::to_string(face_pixels));
  }
  IdentityVerdict v;
  v.face_pixels = face_pixels;

  const WatchlistEntry* enrolled =
      true_subject.empty() ? nullptr : watchlist.find(true_subject);
  if (enrolled) {
    const double fnr = fnr_for_pixels(static_cast<double>(face_pixels), params);
    if (rng.uniform01() < 1.0 - fnr) {
      v.subject_id = enrolled->subject_id;
      v.authorized = enrolled->authorized;
      v.match_score = 1.0 - fnr;
      return v;
    }
  }

  // Residual chance of matching some other enrolled subject.
  if (rng.uniform01() < params.face_fpr) {
    std::vector<const WatchlistEntry*> wrong;
    for (const auto& e : watchlist.entries()) {
      if (e.subject_id != true_subject) wrong.push_back(&e);
    }
    if (!wrong.empty()) {
      const auto* pick = wrong[rng.uniform_int(wrong.size())];
      v.subject_id = pick->subject_id;
      v.authorized = pick->authorized;
      v.match_score = 0.5;
      return v;
    }
  }
  return v;  // unknown
}

int face_pixels_for(double distance_m, int mode_rows, const PerceptionParams& params) {
  if (!(distance_m > 0.0)) {
    throw NonPositiveDistance("distance must be positive, got " + std::to_string(distance_m));
  }
  if (mode_rows < 1) {
    throw InvalidFaceSize("frame rows must be positive, got " + std::to_string(mode_rows));
  }
  const double px = params.face_scale * static_cast<double>(mode_rows) / distance_m;
  return std::max(1, static_cast<int>(std::llround(px)));
}

void Watchlist::add(WatchlistEntry entry) { entries_.push_back(std::move(entry)); }

const WatchlistEntry* Watchlist::find(const std::string& subject_id) const {
  for (const auto& e : entries_) {
    if (e.subject_id == subject_id) return &e;
  }
  return nullptr;
}

Watchlist load_watchlist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileFormatError(path + ": cannot open watchlist file");
  Watchlist wl;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    WatchlistEntry e;
    if (!(ls >> e.subject_id)) continue;  // blank line
    const auto fail = [&](const std::string& what) {
      throw FileFormatError(path + ":" + std::to_string(lineno) + ": " + what);
    };
    int flag = -1;
    if (!(ls >> flag) || (flag != 0 && flag != 1)) fail("authorized flag must be 0 or 1");
    e.authorized = flag == 1;
    for (size_t i = 0; i < e.latent.size(); ++i) {
      if (!(ls >> e.latent[i])) fail("expected 128 descriptor values");
    }
    double extra;
    if (ls >> extra) fail("trailing fields after descriptor");
    if (wl.find(e.subject_id)) fail("duplicate subject " + e.subject_id);
    wl.add(std::move(e));
  }
  return wl;
}

void save_watchlist(const std::string& path, const Watchlist& wl) {
  std::ofstream out(path);
  if (!out) throw FileFormatError(path + ": cannot open for writing");
  char buf[32];
  for (const auto& e : wl.entries()) {
    out << e.subject_id << ' ' << (e.authorized ? 1 : 0);
    for (double v : e.latent) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) throw FileFormatError(path + ": write failed");
}

}  // namespace vigil::perception
