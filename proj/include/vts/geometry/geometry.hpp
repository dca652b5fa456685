#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "vts/core/grid.hpp"

namespace vts::geometry {

/// Surface gradient raster (gx = dh/dx along columns, gy = dh/dy along rows).
struct GradientField {
    Plane gx;
    Plane gy;
    std::optional<Mask> valid;

    GradientField() = default;
    GradientField(int rows, int cols) : gx(rows, cols), gy(rows, cols) {}
    GradientField(Plane x, Plane y) : gx(std::move(x)), gy(std::move(y)) {}

    int rows() const { return gx.rows(); }
    int cols() const { return gx.cols(); }
};

/// Unit surface normals. Camera-facing convention: nz < 0.
struct NormalMap {
    Plane nx;
    Plane ny;
    Plane nz;

    int rows() const { return nx.rows(); }
    int cols() const { return nx.cols(); }
};

/// Sign used when recovering gradients from normals. `round_trip` inverts
/// gradient_to_normal exactly (gx = -nx/nz). `as_printed` applies gx = nx/nz
/// for data produced under the opposite convention.
enum class NormalSign { round_trip, as_printed };

NormalMap gradient_to_normal(const GradientField& g);
GradientField normal_to_gradient(const NormalMap& n, NormalSign sign = NormalSign::round_trip);

/// Forward differences with zero on the last column (gx) / last row (gy).
GradientField forward_gradient(const Plane& h);

/// Backward-difference divergence, the negative adjoint of forward_gradient:
/// <grad h, g> = -<h, div g>.
Plane divergence(const GradientField& g);

struct PoissonOptions {
    double tolerance = 1e-8;  // relative residual of the normal equations
};

struct PoissonResult {
    Plane height;
    double relative_residual = 0.0;
};

/// Least-squares height from gradients: solves div(grad h) = div(g) with
/// homogeneous Neumann boundaries, then subtracts the mean. Throws
/// NumericalError if the achieved residual exceeds the tolerance.
PoissonResult solve_poisson(const GradientField& g, const PoissonOptions& options = {});
Plane integrate_height(const GradientField& g, const PoissonOptions& options = {});

/// Contrast curve applied to squared gradient magnitude: log10(9z + 1),
/// with z clamped to [0, 1].
double friction_transfer(double z);

/// Divides by `gradient_scale`, computes z = gx^2 + gy^2 (clamped), applies
/// friction_transfer, zeroes pixels outside `object_mask`, then resizes
/// bilinearly to device_cols x device_rows. Output values lie in [0, 1].
Plane friction_map(const GradientField& g, const Mask& object_mask, int device_cols, int device_rows,
                   double gradient_scale = 1.0);

/// Bilinear resampling with half-pixel centres and edge clamping.
Plane resize_bilinear(const Plane& src, int rows, int cols);

/// Maps normals from [-1, 1]^3 to RGB in [0, 1]^3.
Image shade_normal_map(const GradientField& g);
NormalMap unshade_normal_map(const Image& rgb);

/// 8-bit device export: value = round(255 * z').
Grid<std::uint8_t> quantize_friction(const Plane& friction);
void write_friction_png(const std::filesystem::path& path, const Plane& friction);

struct EncodedHeight {
    Grid<std::uint16_t> codes;
    double hmin = 0.0;
    double hmax = 0.0;
};

/// Linear 16-bit encoding over [hmin, hmax]; a flat map encodes to zeros.
EncodedHeight encode_height16(const Plane& height);
/// Writes `<path>` (16-bit PNG) and `<path>.json` with {"hmin", "hmax"}.
void write_height_png(const std::filesystem::path& path, const Plane& height);

double mean(const Plane& p);
bool all_finite(const GradientField& g);

}  // namespace vts::geometry
