#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "vbdepth/bincore.hpp"

namespace vbd::fovalign {

// 8-bit RGB, row-major HWC.
struct Image {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> rgb;
  Image() = default;
  Image(int64_t h_, int64_t w_, uint8_t fill = 0)
      : h(h_), w(w_), rgb(static_cast<size_t>(h_ * w_ * 3), fill) {}
  uint8_t& at(int64_t y, int64_t x, int c) { return rgb[static_cast<size_t>((y * w + x) * 3 + c)]; }
  uint8_t at(int64_t y, int64_t x, int c) const {
    return rgb[static_cast<size_t>((y * w + x) * 3 + c)];
  }
};

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;
  // Principal point defaults to the image center when unset.
  std::optional<double> cx, cy;
  int64_t width = 0, height = 0;
  double principal_x() const { return cx ? *cx : (static_cast<double>(width) - 1.0) / 2.0; }
  double principal_y() const { return cy ? *cy : (static_cast<double>(height) - 1.0) / 2.0; }
};

struct FovSpec {
  double omega_x = 0.0, omega_y = 0.0;  // radians
  int64_t target_w = 564, target_h = 424;
};

inline double deg2rad(double d) { return d * M_PI / 180.0; }

struct CropRect {
  int64_t x0 = 0, y0 = 0, w = 0, h = 0;
};

struct AlignedSample {
  Image image;                               // (target_h, target_w)
  bincore::DepthMap depth;                   // empty (h==0) when no depth was given
  std::vector<unsigned char> pad_mask;       // true where pixels were synthesized by padding
  CropRect crop_rect;                        // in source pixels
  double scale_x = 1.0, scale_y = 1.0;       // target / crop
  bool has_depth() const { return depth.h > 0; }
};

// w' = 2 fx tan(wx/2), h' = 2 fy tan(wy/2), rounded to nearest integer >= 1.
std::pair<int64_t, int64_t> target_crop_size(const CameraIntrinsics& intr, const FovSpec& fov);

// Crop the FOV-equivalent region centered on the principal point, pad
// out-of-frame pixels with 255 (and invalid depth), resize to the target
// resolution: bilinear for color, nearest for depth and pad mask.
AlignedSample align_fov(const Image& image, const bincore::DepthMap* depth,
                        const CameraIntrinsics& intr, const FovSpec& fov);

// Restore a target-resolution prediction into a source-resolution map.
// Pixels outside crop_rect are invalid; resampling is nearest-neighbor.
bincore::DepthMap inverse_align(const bincore::DepthMap& pred, const AlignedSample& sample,
                                const CameraIntrinsics& intr);

}  // namespace vbd::fovalign
