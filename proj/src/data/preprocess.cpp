#include "vts/data/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"
#include "vts/core/random.hpp"

namespace vts::data {

namespace {

void check_range(double gmin, double gmax) {
    if (!(gmin < gmax)) throw ValidationError("gradient range: gmin must be < gmax");
}

// Integral over [a, b] of the piecewise-linear interpolant through
// (k + 0.5, v[k]), held constant outside [0.5, n - 0.5].
double integrate_linear(const std::vector<double>& v, double a, double b) {
    const int n = static_cast<int>(v.size());
    if (n == 1) return v[0] * (b - a);
    double total = 0.0;
    const double lo_edge = 0.5;
    const double hi_edge = n - 0.5;
    if (a < lo_edge) total += v[0] * (std::min(b, lo_edge) - a);
    if (b > hi_edge) total += v[n - 1] * (b - std::max(a, hi_edge));
    const double ma = std::max(a, lo_edge);
    const double mb = std::min(b, hi_edge);
    if (mb > ma) {
        int k = std::clamp(static_cast<int>(std::floor(ma - 0.5)), 0, n - 2);
        for (; k <= n - 2; ++k) {
            const double s0 = k + 0.5;
            const double s1 = k + 1.5;
            const double lo = std::max(ma, s0);
            const double hi = std::min(mb, s1);
            if (hi <= lo) {
                if (s0 >= mb) break;
                continue;
            }
            const double f_lo = v[k] + (v[k + 1] - v[k]) * (lo - s0);
            const double f_hi = v[k] + (v[k + 1] - v[k]) * (hi - s0);
            total += 0.5 * (f_lo + f_hi) * (hi - lo);
        }
    }
    return total;
}

std::vector<double> resample_line(const std::vector<double>& v, int out_n) {
    const double scale = static_cast<double>(v.size()) / out_n;
    std::vector<double> out(static_cast<std::size_t>(out_n));
    for (int j = 0; j < out_n; ++j) {
        const double a = j * scale;
        const double b = (j + 1) * scale;
        out[static_cast<std::size_t>(j)] = integrate_linear(v, a, b) / (b - a);
    }
    return out;
}

}  // namespace

Plane decode_gradient_raster(const Grid<std::uint16_t>& codes, double gmin, double gmax) {
    check_range(gmin, gmax);
    Plane out(codes.rows(), codes.cols());
    const double span = gmax - gmin;
    for (std::size_t i = 0; i < codes.size(); ++i) out.data()[i] = gmin + (codes.data()[i] / 65535.0) * span;
    return out;
}

Grid<std::uint16_t> encode_gradient_raster(const Plane& values, double gmin, double gmax) {
    check_range(gmin, gmax);
    Grid<std::uint16_t> out(values.rows(), values.cols());
    const double span = gmax - gmin;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double t = std::clamp((values.data()[i] - gmin) / span, 0.0, 1.0);
        out.data()[i] = static_cast<std::uint16_t>(std::lround(t * 65535.0));
    }
    return out;
}

geometry::GradientField decode_gradient_files(const std::filesystem::path& gx, const std::filesystem::path& gy,
                                              double gmin, double gmax) {
    check_range(gmin, gmax);
    geometry::GradientField g(decode_gradient_raster(png::read_gray16(gx), gmin, gmax),
                              decode_gradient_raster(png::read_gray16(gy), gmin, gmax));
    if (!g.gx.same_shape(g.gy)) throw ValidationError("gradient files differ in size: " + gx.string() + ", " + gy.string());
    return g;
}

Plane resample_area(const Plane& src, int rows, int cols) {
    if (src.empty()) throw ValidationError("resample_area: empty input");
    if (rows <= 0 || cols <= 0) throw ValidationError("resample_area: target size must be positive");
    Plane tmp(src.rows(), cols);
    std::vector<double> line(static_cast<std::size_t>(src.cols()));
    for (int r = 0; r < src.rows(); ++r) {
        for (int c = 0; c < src.cols(); ++c) line[static_cast<std::size_t>(c)] = src(r, c);
        const auto out = resample_line(line, cols);
        for (int c = 0; c < cols; ++c) tmp(r, c) = out[static_cast<std::size_t>(c)];
    }
    Plane dst(rows, cols);
    line.resize(static_cast<std::size_t>(src.rows()));
    for (int c = 0; c < cols; ++c) {
        for (int r = 0; r < src.rows(); ++r) line[static_cast<std::size_t>(r)] = tmp(r, c);
        const auto out = resample_line(line, rows);
        for (int r = 0; r < rows; ++r) dst(r, c) = out[static_cast<std::size_t>(r)];
    }
    return dst;
}

geometry::GradientField downsample_tactile(const geometry::GradientField& raw) {
    if (raw.rows() != kRawTactileRows || raw.cols() != kRawTactileCols || !raw.gx.same_shape(raw.gy))
        throw ValidationError("downsample_tactile: expected 240x320 input, got " + std::to_string(raw.rows()) + "x" +
                              std::to_string(raw.cols()));
    return {resample_area(raw.gx, kTactileRows, kTactileCols), resample_area(raw.gy, kTactileRows, kTactileCols)};
}

double contact_threshold(const Plane& height) {
    if (height.empty()) throw ValidationError("contact mask: empty height map");
    std::vector<double> v(height.begin(), height.end());
    for (double x : v)
        if (!std::isfinite(x)) throw ValidationError("contact mask: non-finite height");
    const std::size_t n = v.size();
    const std::size_t rank = (3 * n + 3) / 4;  // ceil(0.75 n)
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
    return v[rank - 1];
}

Mask threshold_contact(const Plane& height) {
    const double t = contact_threshold(height);
    Mask m(height.rows(), height.cols());
    for (std::size_t i = 0; i < height.size(); ++i) m.data()[i] = height.data()[i] > t ? 1 : 0;
    return m;
}

Mask dilate(const Mask& m, int iterations) {
    Mask cur = m;
    for (int it = 0; it < iterations; ++it) {
        Mask next(cur.rows(), cur.cols());
        for (int r = 0; r < cur.rows(); ++r)
            for (int c = 0; c < cur.cols(); ++c) {
                std::uint8_t v = 0;
                for (int dr = -1; dr <= 1 && !v; ++dr)
                    for (int dc = -1; dc <= 1 && !v; ++dc) {
                        const int rr = r + dr;
                        const int cc = c + dc;
                        if (rr >= 0 && rr < cur.rows() && cc >= 0 && cc < cur.cols() && cur(rr, cc)) v = 1;
                    }
                next(r, c) = v;
            }
        cur = std::move(next);
    }
    return cur;
}

Mask compute_contact_mask(const Plane& height) { return dilate(threshold_contact(height), 2); }

int min_contact_pixels() {
    return static_cast<int>(std::ceil(kMinContactFraction * kPatchSize * kPatchSize - 1e-9));
}

std::vector<BBox> qualifying_windows(const Mask& contact) {
    std::vector<BBox> out;
    const int rows = contact.rows();
    const int cols = contact.cols();
    if (rows < kPatchSize || cols < kPatchSize) return out;
    Grid<int> integral(rows + 1, cols + 1, 0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            integral(r + 1, c + 1) = integral(r, c + 1) + integral(r + 1, c) - integral(r, c) + (contact(r, c) ? 1 : 0);
    const int need = min_contact_pixels();
    for (int y = 0; y + kPatchSize <= rows; ++y)
        for (int x = 0; x + kPatchSize <= cols; ++x) {
            const int s = integral(y + kPatchSize, x + kPatchSize) - integral(y, x + kPatchSize) -
                          integral(y + kPatchSize, x) + integral(y, x);
            if (s >= need) out.push_back({x, y, kPatchSize, kPatchSize});
        }
    return out;
}

std::vector<TactilePatch> extract_patches(const geometry::GradientField& grad, const Mask& contact, int n,
                                          std::uint64_t seed) {
    if (!grad.gx.same_shape(contact) || !grad.gy.same_shape(contact))
        throw ValidationError("extract_patches: gradient and contact mask shapes differ");
    if (contact.rows() < kPatchSize || contact.cols() < kPatchSize)
        throw ValidationError("extract_patches: input smaller than 32x32");
    std::vector<BBox> windows = qualifying_windows(contact);
    Rng rng(seed);
    rng.shuffle(windows);
    const std::size_t take = std::min<std::size_t>(windows.size(), static_cast<std::size_t>(std::max(n, 0)));
    std::vector<TactilePatch> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        TactilePatch p;
        p.id = static_cast<int>(i);
        p.bbox = windows[i];
        p.grad = geometry::GradientField(crop(grad.gx, p.bbox), crop(grad.gy, p.bbox));
        p.contact_mask = crop(contact, p.bbox);
        out.push_back(std::move(p));
    }
    return out;
}

Mask derive_object_mask(const Plane& sketch, std::optional<Point> interior) {
    const int rows = sketch.rows();
    const int cols = sketch.cols();
    Mask edge(rows, cols);
    std::size_t edge_count = 0;
    for (std::size_t i = 0; i < sketch.size(); ++i) {
        edge.data()[i] = sketch.data()[i] >= 0.5 ? 1 : 0;
        edge_count += edge.data()[i];
    }
    if (edge_count == 0) throw ValidationError("sketch has no contour; provide an object mask in the manifest");

    Mask background(rows, cols);
    std::deque<Point> queue;
    auto seed = [&](int x, int y) {
        if (!edge(y, x) && !background(y, x)) {
            background(y, x) = 1;
            queue.push_back({x, y});
        }
    };
    for (int x = 0; x < cols; ++x) {
        seed(x, 0);
        seed(x, rows - 1);
    }
    for (int y = 0; y < rows; ++y) {
        seed(0, y);
        seed(cols - 1, y);
    }
    while (!queue.empty()) {
        const Point p = queue.front();
        queue.pop_front();
        if (p.x > 0) seed(p.x - 1, p.y);
        if (p.x + 1 < cols) seed(p.x + 1, p.y);
        if (p.y > 0) seed(p.x, p.y - 1);
        if (p.y + 1 < rows) seed(p.x, p.y + 1);
    }

    Mask object(rows, cols);
    std::size_t interior_count = 0;
    for (std::size_t i = 0; i < object.size(); ++i) {
        object.data()[i] = background.data()[i] ? 0 : 1;
        if (object.data()[i] && !edge.data()[i]) ++interior_count;
    }
    const bool hint_leaked = interior && interior->x >= 0 && interior->x < cols && interior->y >= 0 &&
                             interior->y < rows && background(interior->y, interior->x);
    if (interior_count == 0 || hint_leaked)
        throw ValidationError("sketch contour is open (background flood reaches the interior); "
                              "provide an object mask in the manifest");
    return object;
}

}  // namespace vts::data
