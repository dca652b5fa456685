#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "vts/core/grid.hpp"
#include "vts/data/scene.hpp"
#include "vts/geometry/geometry.hpp"

namespace vts::data {

// Gradient rasters ---------------------------------------------------------

/// v in {0..65535} -> gmin + (v / 65535) (gmax - gmin).
Plane decode_gradient_raster(const Grid<std::uint16_t>& codes, double gmin, double gmax);
Grid<std::uint16_t> encode_gradient_raster(const Plane& values, double gmin, double gmax);

/// Reads a (gx, gy) pair of 16-bit grayscale files.
geometry::GradientField decode_gradient_files(const std::filesystem::path& gx, const std::filesystem::path& gy,
                                              double gmin, double gmax);

// Tactile preprocessing ----------------------------------------------------

inline constexpr int kRawTactileRows = 240;
inline constexpr int kRawTactileCols = 320;
inline constexpr int kTactileRows = 78;
inline constexpr int kTactileCols = 104;

/// Area-average resampling of the piecewise-linear reconstruction through
/// the pixel centres. Reproduces constants and linear ramps away from the
/// outermost row/column.
Plane resample_area(const Plane& src, int rows, int cols);

/// 240x320 sensor gradients -> 78x104 (about 300 um per pixel).
geometry::GradientField downsample_tactile(const geometry::GradientField& raw);

/// Nearest-rank 75th percentile: sorted[ceil(0.75 N) - 1].
double contact_threshold(const Plane& height);
/// height > contact_threshold(height), before dilation.
Mask threshold_contact(const Plane& height);
/// 3x3 square structuring element.
Mask dilate(const Mask& m, int iterations);
/// threshold_contact followed by two dilation passes.
Mask compute_contact_mask(const Plane& height);

inline constexpr double kMinContactFraction = 0.9;

/// Number of set pixels a 32x32 window must contain to qualify.
int min_contact_pixels();

/// Top-left corners of every 32x32 window with >= 90% contact.
std::vector<BBox> qualifying_windows(const Mask& contact);

/// Up to n distinct qualifying windows, chosen uniformly without replacement.
std::vector<TactilePatch> extract_patches(const geometry::GradientField& grad, const Mask& contact, int n,
                                          std::uint64_t seed);

// Object masks -------------------------------------------------------------

struct Point {
    int x = 0;
    int y = 0;
};

/// 4-connected flood fill of non-edge pixels from the image border; the
/// complement is the object. Edge pixels (>= 0.5) belong to the object.
/// Throws ValidationError for an empty sketch or an open contour (no
/// enclosed interior, or the flood reaches `interior`).
Mask derive_object_mask(const Plane& sketch, std::optional<Point> interior = std::nullopt);

}  // namespace vts::data
