#include "vts/model/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vts/core/error.hpp"
#include "vts/nn/ops.hpp"

namespace vts::model {

Tensor spe_encode(int rows, int cols, int dim) {
    if (dim < 1) throw ValidationError("spe_encode: dim must be >= 1, got " + std::to_string(dim));
    if (rows < 1 || cols < 1) throw ValidationError("spe_encode: empty grid");
    const int channels = 4 * dim;
    std::vector<float> v(static_cast<std::size_t>(channels) * rows * cols);
    auto coord = [](int i, int n) { return n > 1 ? static_cast<double>(i) / (n - 1) : 0.0; };
    for (int axis = 0; axis < 2; ++axis)
        for (int k = 0; k < dim; ++k) {
            const double freq = std::ldexp(std::numbers::pi, k);
            for (int f = 0; f < 2; ++f) {
                float* out = v.data() + static_cast<std::size_t>(axis * 2 * dim + 2 * k + f) * rows * cols;
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c) {
                        const double t = freq * (axis == 0 ? coord(c, cols) : coord(r, rows));
                        out[r * cols + c] = static_cast<float>(f == 0 ? std::sin(t) : std::cos(t));
                    }
            }
        }
    return Tensor::from({1, channels, rows, cols}, std::move(v));
}

Tensor assemble_input(const Tensor& sketch, const Tensor& spe, const Tensor& mask) {
    if (sketch.rank() != 4 || sketch.dim(1) != 1) throw ValidationError("assemble_input: sketch must be (N, 1, H, W)");
    const int n = sketch.dim(0), h = sketch.dim(2), w = sketch.dim(3);
    if (mask.shape() != sketch.shape())
        throw ValidationError("assemble_input: mask shape " + nn::to_string(mask.shape()) + " != sketch shape " +
                              nn::to_string(sketch.shape()));
    if (spe.rank() != 4 || spe.dim(0) != 1 || spe.dim(2) != h || spe.dim(3) != w)
        throw ValidationError("assemble_input: encoding shape " + nn::to_string(spe.shape()) +
                              " does not match sketch " + nn::to_string(sketch.shape()));
    const int ce = spe.dim(1), c = 1 + ce;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<float> out(static_cast<std::size_t>(n) * c * hw);
    for (int b = 0; b < n; ++b) {
        const float* m = mask.data() + b * hw;
        float* dst = out.data() + static_cast<std::size_t>(b) * c * hw;
        for (std::size_t i = 0; i < hw; ++i) dst[i] = sketch.data()[b * hw + i] * m[i];
        for (int ch = 0; ch < ce; ++ch)
            for (std::size_t i = 0; i < hw; ++i) dst[(1 + ch) * hw + i] = spe.data()[ch * hw + i] * m[i];
    }
    return Tensor::from({n, c, h, w}, std::move(out));
}

Tensor assemble_input(const Plane& sketch, const Mask& mask) {
    if (!sketch.same_shape(mask)) throw ValidationError("assemble_input: sketch and object mask differ in size");
    return assemble_input(plane_tensor(sketch), spe_encode(sketch.rows(), sketch.cols()), mask_tensor(mask));
}

Tensor image_tensor(const Image& img) {
    const int c = img.channels(), h = img.rows(), w = img.cols();
    std::vector<float> v(static_cast<std::size_t>(c) * h * w);
    std::size_t i = 0;
    for (int ch = 0; ch < c; ++ch)
        for (double x : img.plane(ch)) v[i++] = static_cast<float>(2.0 * x - 1.0);
    return Tensor::from({1, c, h, w}, std::move(v));
}

Image tensor_image(const Tensor& t, int n) {
    if (t.rank() != 4) throw ValidationError("tensor_image: expected NCHW, got " + nn::to_string(t.shape()));
    const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
    Image img(c, h, w);
    const float* src = t.data() + static_cast<std::size_t>(n) * c * h * w;
    for (int ch = 0; ch < c; ++ch)
        for (int r = 0; r < h; ++r)
            for (int x = 0; x < w; ++x)
                img(ch, r, x) = std::clamp((src[(ch * h + r) * w + x] + 1.0) * 0.5, 0.0, 1.0);
    return img;
}

Tensor plane_tensor(const Plane& p) {
    std::vector<float> v(p.size());
    std::transform(p.begin(), p.end(), v.begin(), [](double x) { return static_cast<float>(x); });
    return Tensor::from({1, 1, p.rows(), p.cols()}, std::move(v));
}

Tensor mask_tensor(const Mask& m) {
    std::vector<float> v(m.size());
    std::transform(m.begin(), m.end(), v.begin(), [](std::uint8_t x) { return x ? 1.0f : 0.0f; });
    return Tensor::from({1, 1, m.rows(), m.cols()}, std::move(v));
}

Plane tensor_plane(const Tensor& t, int n, int channel) {
    if (t.rank() != 4) throw ValidationError("tensor_plane: expected NCHW, got " + nn::to_string(t.shape()));
    const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
    Plane p(h, w);
    const float* src = t.data() + (static_cast<std::size_t>(n) * c + channel) * h * w;
    for (std::size_t i = 0; i < p.size(); ++i) p.data()[i] = src[i];
    return p;
}

Tensor gradient_tensor(const geometry::GradientField& g, double gradient_max) {
    if (!(gradient_max > 0.0)) throw ValidationError("gradient_tensor: gradient_max must be > 0");
    const int h = g.gx.rows(), w = g.gx.cols();
    std::vector<float> v(2 * g.gx.size());
    for (std::size_t i = 0; i < g.gx.size(); ++i) {
        v[i] = static_cast<float>(g.gx.data()[i] / gradient_max);
        v[g.gx.size() + i] = static_cast<float>(g.gy.data()[i] / gradient_max);
    }
    return Tensor::from({1, 2, h, w}, std::move(v));
}

geometry::GradientField tensor_gradient(const Tensor& t, double gradient_max, int n) {
    if (t.rank() != 4 || t.dim(1) != 2) throw ValidationError("tensor_gradient: expected (N, 2, H, W)");
    geometry::GradientField g(tensor_plane(t, n, 0), tensor_plane(t, n, 1));
    for (double& v : g.gx) v *= gradient_max;
    for (double& v : g.gy) v *= gradient_max;
    return g;
}

Tensor crop_patch(const Tensor& raster, const BBox& box) {
    if (raster.rank() != 4 || !box.inside(raster.dim(2), raster.dim(3)))
        throw ValidationError("crop_patch: box (" + std::to_string(box.x) + ", " + std::to_string(box.y) + ", " +
                              std::to_string(box.w) + ", " + std::to_string(box.h) + ") outside raster " +
                              nn::to_string(raster.shape()));
    return nn::crop(raster, box.y, box.x, box.h, box.w);
}

Tensor mask_visual(const Tensor& visual, const Tensor& mask) {
    const Tensor m = nn::repeat_channels(mask, visual.dim(1));
    return nn::add_scalar(nn::mul(nn::add_scalar(visual, 1.0f), m), -1.0f);
}

Tensor mask_tactile(const Tensor& tactile, const Tensor& mask) {
    return nn::mul(tactile, nn::repeat_channels(mask, tactile.dim(1)));
}

}  // namespace vts::model
