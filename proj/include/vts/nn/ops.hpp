#pragma once

#include <vector>

#include "vts/core/random.hpp"
#include "vts/nn/tensor.hpp"

namespace vts::nn {

// Elementwise ---------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
Tensor leaky_relu(const Tensor& x, float slope = 0.2f);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
/// Inverted dropout; identity unless `training`.
Tensor dropout(const Tensor& x, float p, bool training, Rng& rng);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, float s) { return scale(a, s); }
inline Tensor operator*(float s, const Tensor& a) { return scale(a, s); }

// Shape ----------------------------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int begin, int end);
/// Spatial crop of an NCHW tensor; gradient scatters back into the source.
Tensor crop(const Tensor& x, int y, int x0, int h, int w);
/// Zero padding of an NCHW tensor.
Tensor pad(const Tensor& x, int top, int left, int bottom, int right);
/// Repeats a (N, 1, H, W) tensor across c channels.
Tensor repeat_channels(const Tensor& x, int c);

// Convolution ------------------------------------------------------------------

struct Padding {
    int top = 0, left = 0, bottom = 0, right = 0;
    static Padding same(int p) { return {p, p, p, p}; }
};

/// x (N, Cin, H, W), w (Cout, Cin, k, k), b (Cout) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, Padding pad);
/// x (N, Cin, H, W), w (Cin, Cout, k, k). Output (H - 1) s - 2p + k.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

/// Batch normalization over (N, H, W). Running buffers are updated in
/// training mode (unbiased variance, as is conventional).
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, float momentum = 0.1f, float eps = 1e-5f);

/// 2x2 average pooling, stride 2 (floor).
Tensor avg_pool2(const Tensor& x);
/// Bilinear resize with half-pixel centres.
Tensor resize_bilinear(const Tensor& x, int h, int w);
/// (N, C, H, W) -> (N, C)
Tensor global_avg_pool(const Tensor& x);
/// x (N, F), w (O, F), b (O)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Divides each (n, :, y, x) vector by its L2 norm plus eps.
Tensor channel_unit_normalize(const Tensor& x, float eps = 1e-10f);

// Reductions and losses ----------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// mean |a - b|
Tensor l1_loss(const Tensor& a, const Tensor& b);
/// Mean binary cross-entropy against an all-real or all-fake target.
Tensor bce_with_logits(const Tensor& logits, bool target_real);

}  // namespace vts::nn
