#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vts/core/grid.hpp"
#include "vts/geometry/geometry.hpp"

namespace vts::data {

inline constexpr int kPatchSize = 32;

/// One tactile measurement aligned to the visual image.
struct TactilePatch {
    int id = 0;
    BBox bbox;                       // visual-image pixel coordinates, 32x32
    geometry::GradientField grad;    // physical surface gradients
    Mask contact_mask;               // pixels in contact with the fabric
};

/// Everything known about one garment.
struct SceneRecord {
    std::string object_id;
    Image visual;        // RGB, values in [0, 1]
    Plane sketch;        // contour map, 1 = edge
    Mask object_mask;
    std::vector<TactilePatch> patches;
    double gradient_max = 1.0;      // per-object normalizer for |g|
    double scale_m_per_px = 3.0e-4;

    int rows() const { return visual.rows(); }
    int cols() const { return visual.cols(); }
};

/// Checks all SceneRecord/TactilePatch invariants; throws ValidationError
/// naming the offending field.
void validate(const SceneRecord& scene);
void validate(const TactilePatch& patch, int rows, int cols);

/// Reads `<dir>/manifest.json` (or a manifest path directly) and every
/// raster it references.
SceneRecord load_manifest(const std::filesystem::path& path);

/// Writes the standard dataset layout into `dir`: manifest.json, visual.png,
/// sketch.png, object_mask.png and patches/<id>_{gx,gy,mask}.png. Gradient
/// rasters are 16-bit with a per-patch (gmin, gmax) range.
void save_manifest(const SceneRecord& scene, const std::filesystem::path& dir);

/// Sketch raster from a decoded image: gray as is, RGB averaged.
Plane sketch_plane(const Image& img);
Plane read_sketch(const std::filesystem::path& path);

}  // namespace vts::data
