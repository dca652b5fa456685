#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vts/data/scene.hpp"
#include "vts/geometry/geometry.hpp"

namespace vts::data {

/// One sensor press: full-resolution gradients and where the downsampled
/// 78x104 footprint lands in the visual image.
struct RawTouch {
    geometry::GradientField grad;  // 240x320
    int x = 0;                     // footprint top-left, image pixels
    int y = 0;
};

struct RawCapture {
    std::string object_id;
    Image visual;
    Plane sketch;
    std::optional<Mask> object_mask;  // derived from the sketch when absent
    std::vector<RawTouch> touches;
    double scale_m_per_px = 3.0e-4;
};

/// capture.json next to its rasters:
///   {object_id, visual, sketch, object_mask?, scale_m_per_px?,
///    touches: [{gx_file, gy_file, gmin, gmax, x, y}]}
/// Touch gradients are 16-bit 320x240 rasters over [gmin, gmax].
RawCapture load_capture(const std::filesystem::path& path);

/// Downsample every touch, build contact masks from the integrated height,
/// cut up to `patches_per_touch` qualifying 32x32 windows per touch, and
/// place them in image coordinates. Windows leaving the image or the object
/// mask (below 90% coverage) are dropped. gradient_max is the largest |g|
/// over the kept patches.
SceneRecord build_scene(const RawCapture& capture, int patches_per_touch, std::uint64_t seed);

}  // namespace vts::data
