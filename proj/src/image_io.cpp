#include "vbdepth/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <sys/stat.h>

#include <algorithm>
#include <cmath>

namespace vbd::io {

namespace {
bool file_exists(const std::string& path) {
  struct stat st {};
  return ::stat(path.c_str(), &st) == 0;
}
}  // namespace

fovalign::Image load_rgb_png(const std::string& path) {
  if (!file_exists(path)) throw MissingFileError("missing image file: " + path);
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw RasterError("unreadable image raster: " + path);
  fovalign::Image img(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const auto& bgr = m.at<cv::Vec3b>(y, x);
      img.at(y, x, 0) = bgr[2];
      img.at(y, x, 1) = bgr[1];
      img.at(y, x, 2) = bgr[0];
    }
  return img;
}

void save_rgb_png(const std::string& path, const fovalign::Image& img) {
  cv::Mat m(static_cast<int>(img.h), static_cast<int>(img.w), CV_8UC3);
  for (int64_t y = 0; y < img.h; ++y)
    for (int64_t x = 0; x < img.w; ++x)
      m.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x)) =
          cv::Vec3b(img.at(y, x, 2), img.at(y, x, 1), img.at(y, x, 0));
  if (!cv::imwrite(path, m)) throw RasterError("cannot write image: " + path);
}

bincore::DepthMap load_depth_png(const std::string& path, double scale) {
  if (!file_exists(path)) throw MissingFileError("missing depth file: " + path);
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw RasterError("unreadable depth raster: " + path);
  if (m.type() != CV_16UC1) throw RasterError("depth raster must be 16-bit single channel: " + path);
  bincore::DepthMap d(m.rows, m.cols, 0.0, false);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const uint16_t raw = m.at<uint16_t>(y, x);
      if (raw == 0) continue;  // zero is invalid by convention
      d.at(y, x) = static_cast<double>(raw) * scale;
      d.valid[static_cast<size_t>(y * m.cols + x)] = 1;
    }
  return d;
}

void save_depth_png(const std::string& path, const bincore::DepthMap& depth, double scale) {
  cv::Mat m(static_cast<int>(depth.h), static_cast<int>(depth.w), CV_16UC1);
  for (int64_t y = 0; y < depth.h; ++y)
    for (int64_t x = 0; x < depth.w; ++x) {
      uint16_t raw = 0;
      if (depth.is_valid(y, x)) {
        const double q = std::round(depth.at(y, x) / scale);
        raw = static_cast<uint16_t>(std::clamp(q, 1.0, 65535.0));
      }
      m.at<uint16_t>(static_cast<int>(y), static_cast<int>(x)) = raw;
    }
  if (!cv::imwrite(path, m)) throw RasterError("cannot write depth raster: " + path);
}

}  // namespace vbd::io
