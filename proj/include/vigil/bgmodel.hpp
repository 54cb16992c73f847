#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vigil/common.hpp"

namespace vigil::bgmodel {

// Single-channel 8-bit frame.
struct Frame {
  int width = 0;
  int height = 0;
  SimTime timestamp = 0;
  std::vector<std::uint8_t> pixels;  // row major, width * height
};

// Binary segmentation mask, 1 = foreground.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

struct RegionOfInterest {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  int area = 0;  // foreground pixel count, not bbox area

  // Bottom-center of the bounding box in pixel coordinates.
  double foot_x() const { return x + width / 2.0; }
  double foot_y() const { return y + height; }
};

struct MogParams {
  int max_components = 5;
  float learning_rate = 0.005f;       // alpha
  float match_threshold = 3.0f;       // D, in standard deviations
  float background_fraction = 0.1f;   // c_f
  float initial_variance = 225.0f;
  float min_variance = 4.0f;
  float max_variance = 5000.0f;
  int warmup_frames = 30;
};

struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-pixel adaptive mixture of Gaussians.
//
// Update rule per pixel value x: the highest-weight component with
// |x - mean| <= D * sigma (tested in weight order) is matched. All weights
// decay by (1 - alpha), the matched one gains alpha, and its mean/variance
// move by alpha toward x (delta taken against the pre-update mean). Without
// a match the lowest-weight component is replaced (or a new one appended) as
// (alpha, x, initial_variance). Weights are renormalized to sum 1 every
// update and components kept sorted by descending weight.
//
// A pixel is background iff its matched component falls inside the smallest
// weight-ordered prefix whose cumulative weight reaches 1 - c_f; unmatched
// pixels are foreground.
class MogModel {
 public:
  struct Component {
    float weight = 0.0f;
    float mean = 0.0f;
    float var = 0.0f;
  };

  MogModel(int width, int height, const MogParams& params);

  // Drops all components and restarts the warm-up window.
  void reset(int width, int height);

  // Throws DimensionMismatch when the frame size differs from the model.
  Mask update_and_segment(const Frame& frame);

  // True from reset until warmup_frames updates have been applied.
  bool in_warmup() const { return frames_since_reset_ <= params_.warmup_frames; }
  std::int64_t frames_since_reset() const { return frames_since_reset_; }

  int width() const { return width_; }
  int height() const { return height_; }

  int component_count(int x, int y) const;
  Component component(int x, int y, int k) const;

 private:
  // Components live in per-rank planes (comps_[k * n_pixels + px]) so the
  // common single-component pixel touches one contiguous stream.
  Component& comp(size_t px, int k) { return comps_[static_cast<size_t>(k) * n_pixels_ + px]; }

  MogParams params_;
  int width_ = 0;
  int height_ = 0;
  size_t n_pixels_ = 0;
  std::int64_t frames_since_reset_ = 0;
  std::vector<Component> comps_;
  std::vector<std::uint8_t> counts_;
};

// Morphological opening with a 3x3 square structuring element: n erosions
// followed by n dilations. Pixels outside the frame are background, so
// foreground touching the border erodes.
Mask clean_mask(const Mask& mask, int iterations = 1);

// 8-connected components of the foreground, discarding those with fewer than
// min_area pixels, sorted by area descending (ties by bbox y, then x).
std::vector<RegionOfInterest> extract_rois(const Mask& mask, double min_area);

// Binary PGM (P5) dump, foreground = 255.
void write_pgm(const Mask& mask, const std::string& path);

}  // namespace vigil::bgmodel
