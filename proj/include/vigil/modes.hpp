#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>

namespace vigil::edgenode {

// One row of the operating-mode table. chunk_bytes is the per-frame video
// payload (livestream rate / fps) in whole bytes, 1 MB = 1e6 bytes; keeping
// it integral makes bandwidth accounting exact.
struct OperatingMode {
  int level = 0;
  int width = 0;
  int height = 0;
  int fps = 0;
  double livestream_mb_s = 0.0;
  std::int64_t chunk_bytes = 0;
};

using ModeTable = std::array<OperatingMode, 3>;

// Canonical per-mode rates: 0.41 / 1.90 / 8.40 MB/s.
inline ModeTable standard_rates() {
  return ModeTable{{{0, 320, 240, 5, 0.41, 82000},
                    {1, 640, 480, 15, 1.90, 126667},
                    {2, 1280, 960, 30, 8.40, 280000}}};
}

// Alternate preset reproducing the 6.9 / 27.6 / 110.6 MB/s figures quoted
// alongside the canonical table; same resolutions and frame rates.
inline ModeTable high_bandwidth_rates() {
  return ModeTable{{{0, 320, 240, 5, 6.9, 1380000},
                    {1, 640, 480, 15, 27.6, 1840000},
                    {2, 1280, 960, 30, 110.6, 3686667}}};
}

enum class DeviceProfile { kTX2, kXavier };

inline const char* to_string(DeviceProfile d) {
  return d == DeviceProfile::kTX2 ? "tx2" : "xavier";
}

// Measured edge inference throughput (frames/s) per device and mode level.
inline double processing_fps(DeviceProfile device, int level) {
  static constexpr std::array<double, 3> tx2{69.3, 44.2, 31.7};
  static constexpr std::array<double, 3> xavier{98.3, 70.5, 50.4};
  if (level < 0 || level > 2) throw std::out_of_range("mode level must be 0..2");
  return device == DeviceProfile::kTX2 ? tx2[static_cast<size_t>(level)]
                                       : xavier[static_cast<size_t>(level)];
}

}  // namespace vigil::edgenode
