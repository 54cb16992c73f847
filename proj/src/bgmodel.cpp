#include "vigil/bgmodel.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace vigil::bgmodel {

MogModel::MogModel(int width, int height, const MogParams& params) : params_(params) {
  reset(width, height);
}

void MogModel::reset(int width, int height) {
  width_ = width;
  height_ = height;
  n_pixels_ = static_cast<size_t>(width) * height;
  frames_since_reset_ = 0;
  comps_.assign(n_pixels_ * params_.max_components, Component{});
  counts_.assign(n_pixels_, 0);
}

int MogModel::component_count(int x, int y) const {
  return counts_[static_cast<size_t>(y) * width_ + x];
}

MogModel::Component MogModel::component(int x, int y, int k) const {
  const size_t px = static_cast<size_t>(y) * width_ + x;
  return comps_[static_cast<size_t>(k) * n_pixels_ + px];
}

Mask MogModel::update_and_segment(const Frame& frame) {
  if (frame.width != width_ || frame.height != height_) {
    throw DimensionMismatch("frame " + std::to_string(frame.width) + "x" +
                            std::to_string(frame.height) + " against model " +
                            std::to_string(width_) + "x" + std::to_string(height_));
  }
  Mask out;
  out.width = width_;
  out.height = height_;
  out.data.resize(static_cast<size_t>(width_) * height_);

  const int cap = params_.max_components;
  const float alpha = params_.learning_rate;
  const float decay = 1.0f - alpha;
  const float d2max = params_.match_threshold * params_.match_threshold;
  const float bg_frac = 1.0f - params_.background_fraction;
  const float var_min = params_.min_variance;
  const float var_max = params_.max_variance;
  const size_t n_px = n_pixels_;
  Component* head = comps_.data();
  const std::uint8_t* in = frame.pixels.data();
  std::uint8_t* mask = out.data.data();

  for (size_t px = 0; px < n_px; ++px) {
    int n = counts_[px];
    const float x = static_cast<float>(in[px]);

    // Settled pixels have a single matching component; keep that path free of
    // indirection. The arithmetic is identical to the general path below.
    if (n == 1) {
      Component c = head[px];
      const float d = x - c.mean;
      if (d * d <= d2max * c.var) {
        c.weight = c.weight * decay + alpha;
        c.mean += alpha * d;
        float v = c.var + alpha * (d * d - c.var);
        v = std::min(std::max(v, var_min), var_max);
        c.var = v;
        c.weight *= 1.0f / c.weight;
        head[px] = c;
        mask[px] = 0;  // the only component always covers the background fraction
        continue;
      }
    }

    int matched = -1;
    for (int k = 0; k < n; ++k) {
      const float d = x - comp(px, k).mean;
      if (d * d <= d2max * comp(px, k).var) {
        matched = k;
        break;
      }
    }

    if (matched >= 0) {
      for (int k = 0; k < n; ++k) comp(px, k).weight *= decay;
      Component& m = comp(px, matched);
      m.weight += alpha;
      const float d = x - m.mean;
      m.mean += alpha * d;
      float v = m.var + alpha * (d * d - m.var);
      v = std::min(std::max(v, var_min), var_max);
      m.var = v;
    } else {
      if (n < cap) {
        ++n;
        counts_[px] = static_cast<std::uint8_t>(n);
      }
      // Components are sorted by weight, so the last slot is the evictee.
      comp(px, n - 1) = Component{alpha, x, params_.initial_variance};
    }

    float sum = 0.0f;
    for (int k = 0; k < n; ++k) sum += comp(px, k).weight;
    const float inv = 1.0f / sum;
    for (int k = 0; k < n; ++k) comp(px, k).weight *= inv;

    // Only one component changed rank; bubble it into place (stable under
    // ties, mirroring a stable sort by descending weight).
    int moved = matched >= 0 ? matched : n - 1;
    while (moved > 0 && comp(px, moved).weight > comp(px, moved - 1).weight) {
      std::swap(comp(px, moved), comp(px, moved - 1));
      --moved;
    }

    std::uint8_t fg = 1;
    if (matched >= 0) {
      float cum = 0.0f;
      int b_last = 0;
      for (int k = 0; k < n; ++k) {
        cum += comp(px, k).weight;
        b_last = k;
        if (cum >= bg_frac) break;
      }
      if (moved <= b_last) fg = 0;
    }
    mask[px] = fg;
  }

  ++frames_since_reset_;
  return out;
}

namespace {

Mask erode3x3(const Mask& m) {
  Mask out;
  out.width = m.width;
  out.height = m.height;
  out.data.assign(m.data.size(), 0);
  const int w = m.width, h = m.height;
  for (int y = 1; y + 1 < h; ++y) {
    const std::uint8_t* up = m.data.data() + static_cast<size_t>(y - 1) * w;
    const std::uint8_t* mid = m.data.data() + static_cast<size_t>(y) * w;
    const std::uint8_t* dn = m.data.data() + static_cast<size_t>(y + 1) * w;
    std::uint8_t* dst = out.data.data() + static_cast<size_t>(y) * w;
    for (int x = 1; x + 1 < w; ++x) {
      if (!mid[x]) continue;
      if (up[x - 1] & up[x] & up[x + 1] & mid[x - 1] & mid[x + 1] & dn[x - 1] & dn[x] &
          dn[x + 1]) {
        dst[x] = 1;
      }
    }
  }
  return out;
}

Mask dilate3x3(const Mask& m) {
  Mask out;
  out.width = m.width;
  out.height = m.height;
  out.data.assign(m.data.size(), 0);
  const int w = m.width, h = m.height;
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* src = m.data.data() + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      if (!src[x]) continue;
      const int y0 = std::max(0, y - 1), y1 = std::min(h - 1, y + 1);
      const int x0 = std::max(0, x - 1), x1 = std::min(w - 1, x + 1);
      for (int yy = y0; yy <= y1; ++yy) {
        std::uint8_t* dst = out.data.data() + static_cast<size_t>(yy) * w;
        for (int xx = x0; xx <= x1; ++xx) dst[xx] = 1;
      }
    }
  }
  return out;
}

}  // namespace

Mask clean_mask(const Mask& mask, int iterations) {
  Mask m = mask;
  for (int i = 0; i < iterations; ++i) m = erode3x3(m);
  for (int i = 0; i < iterations; ++i) m = dilate3x3(m);
  return m;
}

std::vector<RegionOfInterest> extract_rois(const Mask& mask, double min_area) {
  const int w = mask.width, h = mask.height;
  std::vector<std::uint8_t> seen(mask.data.size(), 0);
  std::vector<RegionOfInterest> rois;
  std::vector<int> stack;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t idx = static_cast<size_t>(y) * w + x;
      if (!mask.data[idx] || seen[idx]) continue;
      int min_x = x, max_x = x, min_y = y, max_y = y, area = 0;
      seen[idx] = 1;
      stack.push_back(static_cast<int>(idx));
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cx = cur % w, cy = cur / w;
        ++area;
        min_x = std::min(min_x, cx);
        max_x = std::max(max_x, cx);
        min_y = std::min(min_y, cy);
        max_y = std::max(max_y, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy) continue;
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const size_t nidx = static_cast<size_t>(ny) * w + nx;
            if (mask.data[nidx] && !seen[nidx]) {
              seen[nidx] = 1;
              stack.push_back(static_cast<int>(nidx));
            }
          }
        }
      }
      if (area >= min_area) {
        rois.push_back({min_x, min_y, max_x - min_x + 1, max_y - min_y + 1, area});
      }
    }
  }

  std::stable_sort(rois.begin(), rois.end(), [](const RegionOfInterest& a,
                                                const RegionOfInterest& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return rois;
}

void write_pgm(const Mask& mask, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write mask to " + path);
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  std::vector<std::uint8_t> bytes(mask.data.size());
  for (size_t i = 0; i < mask.data.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace vigil::bgmodel
