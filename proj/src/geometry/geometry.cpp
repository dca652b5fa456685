#include "vts/geometry/geometry.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>

#include "json.hpp"

#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"

namespace vts::geometry {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

void require_same_shape(const GradientField& g, const char* what) {
    if (!g.gx.same_shape(g.gy)) throw ValidationError(std::string(what) + ": gx and gy shapes differ");
}

double dot(const Plane& a, const Plane& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

}  // namespace

bool all_finite(const GradientField& g) {
    auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(g.gx.begin(), g.gx.end(), finite) && std::all_of(g.gy.begin(), g.gy.end(), finite);
}

double mean(const Plane& p) {
    if (p.empty()) return 0.0;
    double s = 0.0;
    for (double v : p) s += v;
    return s / static_cast<double>(p.size());
}

NormalMap gradient_to_normal(const GradientField& g) {
    require_same_shape(g, "gradient_to_normal");
    if (!all_finite(g)) throw NumericalError("gradient_to_normal: non-finite gradient");
    NormalMap n{Plane(g.rows(), g.cols()), Plane(g.rows(), g.cols()), Plane(g.rows(), g.cols())};
    for (std::size_t i = 0; i < g.gx.size(); ++i) {
        const double gx = g.gx.data()[i];
        const double gy = g.gy.data()[i];
        const double inv = 1.0 / std::sqrt(gx * gx + gy * gy + 1.0);
        n.nx.data()[i] = gx * inv;
        n.ny.data()[i] = gy * inv;
        n.nz.data()[i] = -inv;
    }
    return n;
}

GradientField normal_to_gradient(const NormalMap& n, NormalSign sign) {
    if (!n.nx.same_shape(n.ny) || !n.nx.same_shape(n.nz)) throw ValidationError("normal_to_gradient: shape mismatch");
    const double s = sign == NormalSign::round_trip ? -1.0 : 1.0;
    GradientField g(n.rows(), n.cols());
    for (std::size_t i = 0; i < n.nx.size(); ++i) {
        const double nz = n.nz.data()[i];
        if (!(std::abs(nz) >= 1e-12)) throw NumericalError("normal_to_gradient: |nz| < 1e-12");
        g.gx.data()[i] = s * n.nx.data()[i] / nz;
        g.gy.data()[i] = s * n.ny.data()[i] / nz;
    }
    return g;
}

GradientField forward_gradient(const Plane& h) {
    GradientField g(h.rows(), h.cols());
    for (int r = 0; r < h.rows(); ++r)
        for (int c = 0; c < h.cols(); ++c) {
            g.gx(r, c) = c + 1 < h.cols() ? h(r, c + 1) - h(r, c) : 0.0;
            g.gy(r, c) = r + 1 < h.rows() ? h(r + 1, c) - h(r, c) : 0.0;
        }
    return g;
}

Plane divergence(const GradientField& g) {
    require_same_shape(g, "divergence");
    const int rows = g.rows();
    const int cols = g.cols();
    Plane d(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double dx = 0.0;
            if (c + 1 < cols) dx += g.gx(r, c);
            if (c > 0) dx -= g.gx(r, c - 1);
            double dy = 0.0;
            if (r + 1 < rows) dy += g.gy(r, c);
            if (r > 0) dy -= g.gy(r - 1, c);
            d(r, c) = dx + dy;
        }
    return d;
}

PoissonResult solve_poisson(const GradientField& g, const PoissonOptions& options) {
    require_same_shape(g, "integrate_height");
    if (!all_finite(g)) throw NumericalError("integrate_height: non-finite gradient");
    const int rows = g.rows();
    const int cols = g.cols();
    PoissonResult result{Plane(rows, cols), 0.0};
    if (rows == 0 || cols == 0) return result;

    const Plane rhs = divergence(g);
    const double rhs_norm = std::sqrt(dot(rhs, rhs));
    if (rhs_norm == 0.0) return result;

    // The Neumann Laplacian of the forward/backward difference pair is
    // diagonalised by the 2-D DCT-II.
    Plane spectrum(rows, cols);
    Plane work = rhs;
    {
        fftw_plan fwd;
        fftw_plan inv;
        {
            std::lock_guard lock(fftw_planner_mutex());
            fwd = fftw_plan_r2r_2d(rows, cols, work.data(), spectrum.data(), FFTW_REDFT10, FFTW_REDFT10, FFTW_ESTIMATE);
            inv = fftw_plan_r2r_2d(rows, cols, spectrum.data(), result.height.data(), FFTW_REDFT01, FFTW_REDFT01,
                                   FFTW_ESTIMATE);
        }
        fftw_execute(fwd);
        for (int k = 0; k < rows; ++k) {
            const double ly = 2.0 * std::cos(std::numbers::pi * k / rows) - 2.0;
            for (int l = 0; l < cols; ++l) {
                const double lx = 2.0 * std::cos(std::numbers::pi * l / cols) - 2.0;
                const double eig = lx + ly;
                spectrum(k, l) = (k == 0 && l == 0) ? 0.0 : spectrum(k, l) / eig;
            }
        }
        fftw_execute(inv);
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
    }
    const double norm = 4.0 * rows * cols;
    for (double& v : result.height) v /= norm;
    const double mu = mean(result.height);
    for (double& v : result.height) v -= mu;

    const Plane lap = divergence(forward_gradient(result.height));
    double res = 0.0;
    for (std::size_t i = 0; i < lap.size(); ++i) {
        const double d = lap.data()[i] - rhs.data()[i];
        res += d * d;
    }
    result.relative_residual = std::sqrt(res) / rhs_norm;
    if (!(result.relative_residual <= options.tolerance))
        throw NumericalError("integrate_height: relative residual " + std::to_string(result.relative_residual) +
                             " exceeds tolerance " + std::to_string(options.tolerance));
    return result;
}

Plane integrate_height(const GradientField& g, const PoissonOptions& options) {
    return solve_poisson(g, options).height;
}

double friction_transfer(double z) {
    z = std::clamp(z, 0.0, 1.0);
    return std::log10(9.0 * z + 1.0);
}

Plane resize_bilinear(const Plane& src, int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw ValidationError("resize: target size must be positive");
    if (src.empty()) throw ValidationError("resize: empty source");
    Plane out(rows, cols);
    const double sy = static_cast<double>(src.rows()) / rows;
    const double sx = static_cast<double>(src.cols()) / cols;
    for (int r = 0; r < rows; ++r) {
        const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.rows() - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.rows() - 1);
        const double wy = fy - y0;
        for (int c = 0; c < cols; ++c) {
            const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.cols() - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.cols() - 1);
            const double wx = fx - x0;
            const double top = src(y0, x0) * (1.0 - wx) + src(y0, x1) * wx;
            const double bot = src(y1, x0) * (1.0 - wx) + src(y1, x1) * wx;
            out(r, c) = top * (1.0 - wy) + bot * wy;
        }
    }
    return out;
}

Plane friction_map(const GradientField& g, const Mask& object_mask, int device_cols, int device_rows,
                   double gradient_scale) {
    require_same_shape(g, "friction_map");
    if (device_cols <= 0 || device_rows <= 0) throw ValidationError("friction_map: device size must be positive");
    if (!object_mask.same_shape(g.gx)) throw ValidationError("friction_map: mask shape differs from gradient field");
    if (!(gradient_scale > 0.0)) throw ValidationError("friction_map: gradient scale must be positive");
    Plane z(g.rows(), g.cols());
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!object_mask.data()[i]) continue;
        const double gx = g.gx.data()[i] / gradient_scale;
        const double gy = g.gy.data()[i] / gradient_scale;
        z.data()[i] = friction_transfer(gx * gx + gy * gy);
    }
    Plane out = resize_bilinear(z, device_rows, device_cols);
    for (double& v : out) v = std::clamp(v, 0.0, 1.0);
    return out;
}

Image shade_normal_map(const GradientField& g) {
    const NormalMap n = gradient_to_normal(g);
    Image rgb(3, g.rows(), g.cols());
    for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) {
            rgb(0, r, c) = 0.5 * (n.nx(r, c) + 1.0);
            rgb(1, r, c) = 0.5 * (n.ny(r, c) + 1.0);
            rgb(2, r, c) = 0.5 * (n.nz(r, c) + 1.0);
        }
    return rgb;
}

NormalMap unshade_normal_map(const Image& rgb) {
    if (rgb.channels() != 3) throw ValidationError("unshade_normal_map: expected 3 channels");
    NormalMap n{Plane(rgb.rows(), rgb.cols()), Plane(rgb.rows(), rgb.cols()), Plane(rgb.rows(), rgb.cols())};
    for (int r = 0; r < rgb.rows(); ++r)
        for (int c = 0; c < rgb.cols(); ++c) {
            n.nx(r, c) = 2.0 * rgb(0, r, c) - 1.0;
            n.ny(r, c) = 2.0 * rgb(1, r, c) - 1.0;
            n.nz(r, c) = 2.0 * rgb(2, r, c) - 1.0;
        }
    return n;
}

Grid<std::uint8_t> quantize_friction(const Plane& friction) {
    Grid<std::uint8_t> out(friction.rows(), friction.cols());
    for (std::size_t i = 0; i < friction.size(); ++i)
        out.data()[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(friction.data()[i], 0.0, 1.0)));
    return out;
}

void write_friction_png(const std::filesystem::path& path, const Plane& friction) {
    const auto q = quantize_friction(friction);
    png::RawImage raw{q.rows(), q.cols(), 1, 8, {}};
    raw.samples.assign(q.begin(), q.end());
    png::write_file(path, raw);
}

EncodedHeight encode_height16(const Plane& height) {
    EncodedHeight e;
    e.codes = Grid<std::uint16_t>(height.rows(), height.cols());
    if (height.empty()) return e;
    const auto [lo, hi] = std::minmax_element(height.begin(), height.end());
    e.hmin = *lo;
    e.hmax = *hi;
    const double span = e.hmax - e.hmin;
    if (span <= 0.0) return e;
    for (std::size_t i = 0; i < height.size(); ++i)
        e.codes.data()[i] = static_cast<std::uint16_t>(std::lround((height.data()[i] - e.hmin) / span * 65535.0));
    return e;
}

void write_height_png(const std::filesystem::path& path, const Plane& height) {
    const EncodedHeight e = encode_height16(height);
    png::write_gray16(path, e.codes);
    std::ofstream meta(path.string() + ".json");
    if (!meta) throw IoError("cannot write height metadata for " + path.string());
    meta << nlohmann::json{{"hmin", e.hmin}, {"hmax", e.hmax}}.dump(2) << "\n";
}

}  // namespace vts::geometry
