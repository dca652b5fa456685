#pragma once

#include "vts/core/grid.hpp"
#include "vts/geometry/geometry.hpp"
#include "vts/nn/tensor.hpp"

namespace vts::model {

using nn::Tensor;

inline constexpr int kSpeDim = 4;
inline constexpr int kInputChannels = 1 + 4 * kSpeDim;

/// (1, 4 dim, H, W). Channel (axis, k, f) sits at axis * 2 dim + 2 k + f with
/// axis 0 = x (columns), 1 = y (rows) and f 0 = sin, 1 = cos of
/// 2^k pi c, c = index / (n - 1) (c = 0 when n = 1).
Tensor spe_encode(int rows, int cols, int dim = kSpeDim);

/// concat(sketch, spe) * mask. sketch and mask are (N, 1, H, W), spe is
/// (1, C, H, W) and is broadcast over the batch. Constant w.r.t. autograd.
Tensor assemble_input(const Tensor& sketch, const Tensor& spe, const Tensor& mask);
Tensor assemble_input(const Plane& sketch, const Mask& mask);

/// RGB in [0, 1] -> (1, C, H, W) in [-1, 1].
Tensor image_tensor(const Image& img);
/// Inverse of image_tensor for batch item n, clamped to [0, 1].
Image tensor_image(const Tensor& t, int n = 0);
/// Raw values, (1, 1, H, W).
Tensor plane_tensor(const Plane& p);
Tensor mask_tensor(const Mask& m);
Plane tensor_plane(const Tensor& t, int n = 0, int channel = 0);
/// (1, 2, H, W) holding g / gradient_max.
Tensor gradient_tensor(const geometry::GradientField& g, double gradient_max);
geometry::GradientField tensor_gradient(const Tensor& t, double gradient_max, int n = 0);

/// Spatial crop preserving gradient flow to the source.
Tensor crop_patch(const Tensor& raster, const BBox& box);

/// Visual outputs become -1 (black) off the object, tactile outputs 0.
Tensor mask_visual(const Tensor& visual, const Tensor& mask);
Tensor mask_tactile(const Tensor& tactile, const Tensor& mask);

}  // namespace vts::model
