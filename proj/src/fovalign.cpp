#include "vbdepth/fovalign.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vbd::fovalign {

namespace {
int64_t nearest_index(int64_t out_i, int64_t out_n, int64_t in_n) {
  const int64_t i = static_cast<int64_t>((static_cast<double>(out_i) + 0.5) *
                                         static_cast<double>(in_n) / static_cast<double>(out_n));
  return std::clamp<int64_t>(i, 0, in_n - 1);
}
}  // namespace

std::pair<int64_t, int64_t> target_crop_size(const CameraIntrinsics& intr, const FovSpec& fov) {
  if (!(intr.fx > 0.0 && intr.fy > 0.0))
    throw std::invalid_argument("target_crop_size: focal lengths must be positive");
  if (!(fov.omega_x > 0.0 && fov.omega_x < M_PI && fov.omega_y > 0.0 && fov.omega_y < M_PI))
    throw std::invalid_argument("target_crop_size: FOV must lie in (0, pi)");
  const double wp = 2.0 * intr.fx * std::tan(fov.omega_x / 2.0);
  const double hp = 2.0 * intr.fy * std::tan(fov.omega_y / 2.0);
  return {std::max<int64_t>(1, std::llround(wp)), std::max<int64_t>(1, std::llround(hp))};
}

AlignedSample align_fov(const Image& image, const bincore::DepthMap* depth,
                        const CameraIntrinsics& intr, const FovSpec& fov) {
  if (image.h != intr.height || image.w != intr.width)
    throw std::invalid_argument("align_fov: image size does not match intrinsics");
  if (depth && (depth->h != image.h || depth->w != image.w))
    throw std::invalid_argument("align_fov: depth not registered with image");
  const auto [cw, ch] = target_crop_size(intr, fov);
  if (2.0 * intr.fx * std::tan(fov.omega_x / 2.0) < 1.0 ||
      2.0 * intr.fy * std::tan(fov.omega_y / 2.0) < 1.0)
    throw std::invalid_argument("align_fov: degenerate crop");

  AlignedSample out;
  out.crop_rect.w = cw;
  out.crop_rect.h = ch;
  out.crop_rect.x0 = std::llround(intr.principal_x() - (static_cast<double>(cw) - 1.0) / 2.0);
  out.crop_rect.y0 = std::llround(intr.principal_y() - (static_cast<double>(ch) - 1.0) / 2.0);
  out.scale_x = static_cast<double>(fov.target_w) / static_cast<double>(cw);
  out.scale_y = static_cast<double>(fov.target_h) / static_cast<double>(ch);

  const int64_t th = fov.target_h, tw = fov.target_w;
  out.image = Image(th, tw, 255);
  out.pad_mask.assign(static_cast<size_t>(th * tw), 0);
  if (depth) out.depth = bincore::DepthMap(th, tw, 0.0, false);

  const double sx = static_cast<double>(cw) / static_cast<double>(tw);
  const double sy = static_cast<double>(ch) / static_cast<double>(th);
  for (int64_t ty = 0; ty < th; ++ty) {
    // bilinear source coordinate in crop space, half-pixel centers
    double fy_crop = (static_cast<double>(ty) + 0.5) * sy - 0.5;
    fy_crop = std::clamp(fy_crop, 0.0, static_cast<double>(ch - 1));
    const int64_t cy0 = static_cast<int64_t>(std::floor(fy_crop));
    const int64_t cy1 = std::min(cy0 + 1, ch - 1);
    const double wy1 = fy_crop - static_cast<double>(cy0);
    const int64_t ny = nearest_index(ty, th, ch);
    for (int64_t tx = 0; tx < tw; ++tx) {
      double fx_crop = (static_cast<double>(tx) + 0.5) * sx - 0.5;
      fx_crop = std::clamp(fx_crop, 0.0, static_cast<double>(cw - 1));
      const int64_t cx0 = static_cast<int64_t>(std::floor(fx_crop));
      const int64_t cx1 = std::min(cx0 + 1, cw - 1);
      const double wx1 = fx_crop - static_cast<double>(cx0);
      const int64_t nx = nearest_index(tx, tw, cw);

      // color: bilinear over the padded crop (255 beyond the source frame)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        const int64_t ys[2] = {cy0, cy1};
        const int64_t xs[2] = {cx0, cx1};
        const double wys[2] = {1.0 - wy1, wy1};
        const double wxs[2] = {1.0 - wx1, wx1};
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            const int64_t sy_src = out.crop_rect.y0 + ys[a];
            const int64_t sx_src = out.crop_rect.x0 + xs[b];
            const double v = (sy_src >= 0 && sy_src < image.h && sx_src >= 0 && sx_src < image.w)
                                 ? static_cast<double>(image.at(sy_src, sx_src, c))
                                 : 255.0;
            acc += wys[a] * wxs[b] * v;
          }
        out.image.at(ty, tx, c) = static_cast<uint8_t>(std::clamp(std::lround(acc), 0l, 255l));
      }

      // pad mask and depth: nearest
      const int64_t sy_src = out.crop_rect.y0 + ny;
      const int64_t sx_src = out.crop_rect.x0 + nx;
      const bool inside = sy_src >= 0 && sy_src < image.h && sx_src >= 0 && sx_src < image.w;
      if (!inside) {
        out.pad_mask[static_cast<size_t>(ty * tw + tx)] = 1;
        for (int c = 0; c < 3; ++c) out.image.at(ty, tx, c) = 255;
      } else if (depth) {
        out.depth.at(ty, tx) = depth->at(sy_src, sx_src);
        out.depth.valid[static_cast<size_t>(ty * tw + tx)] = depth->is_valid(sy_src, sx_src);
      }
    }
  }
  return out;
}

bincore::DepthMap inverse_align(const bincore::DepthMap& pred, const AlignedSample& sample,
                                const CameraIntrinsics& intr) {
  if (pred.h != sample.image.h || pred.w != sample.image.w)
    throw std::invalid_argument("inverse_align: prediction does not match aligned resolution");
  if (intr.height < 1 || intr.width < 1)
    throw std::invalid_argument("inverse_align: bad source geometry");
  bincore::DepthMap out(intr.height, intr.width, 0.0, false);
  const CropRect& cr = sample.crop_rect;
  for (int64_t y = 0; y < intr.height; ++y) {
    const int64_t cy = y - cr.y0;
    if (cy < 0 || cy >= cr.h) continue;
    const int64_t ty = nearest_index(cy, cr.h, pred.h);
    for (int64_t x = 0; x < intr.width; ++x) {
      const int64_t cx = x - cr.x0;
      if (cx < 0 || cx >= cr.w) continue;
      const int64_t tx = nearest_index(cx, cr.w, pred.w);
      if (sample.pad_mask[static_cast<size_t>(ty * pred.w + tx)]) continue;
      if (!pred.is_valid(ty, tx)) continue;
      out.at(y, x) = pred.at(ty, tx);
      out.valid[static_cast<size_t>(y * intr.width + x)] = 1;
    }
  }
  return out;
}

}  // namespace vbd::fovalign
