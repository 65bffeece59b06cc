#pragma once

#include <stdexcept>
#include <string>

#include "vbdepth/bincore.hpp"
#include "vbdepth/fovalign.hpp"

namespace vbd::io {

struct MissingFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RasterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IntrinsicsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fovalign::Image load_rgb_png(const std::string& path);
void save_rgb_png(const std::string& path, const fovalign::Image& img);

// 16-bit raster; meters = raw * scale, raw 0 is invalid.
bincore::DepthMap load_depth_png(const std::string& path, double scale);
void save_depth_png(const std::string& path, const bincore::DepthMap& depth, double scale);

}  // namespace vbd::io
