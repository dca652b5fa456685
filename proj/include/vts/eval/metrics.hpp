#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vts/core/grid.hpp"
#include "vts/data/augment.hpp"
#include "vts/data/scene.hpp"
#include "vts/geometry/geometry.hpp"
#include "vts/model/backbone.hpp"
#include "vts/model/inference.hpp"

namespace vts::eval {

using nn::Tensor;

/// Perceptual distance on (N, 3 or 2, H, W) tensors in [-1, 1]; two-channel
/// inputs are lifted to (gx, gy, 0).
double lpips_distance(const Tensor& a, const Tensor& b, const model::FeatureBackbone& backbone);
double lpips_distance(const Image& a, const Image& b, const model::FeatureBackbone& backbone);

inline constexpr double kSifidJitter = 1e-6;
inline constexpr int kSifidMinSide = 8;

/// Frechet distance between Gaussians fitted to the per-location vectors of
/// the first pooled feature map of each image. Covariances that are not
/// positive definite get kSifidJitter added to the diagonal.
double sifid(const Tensor& a, const Tensor& b, const model::FeatureBackbone& backbone);
double sifid(const Image& a, const Image& b, const model::FeatureBackbone& backbone);

/// Frechet distance of two Gaussians, tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)
/// plus the squared mean difference. Exposed for testing.
double frechet_distance(const std::vector<double>& mu1, const std::vector<double>& cov1,
                        const std::vector<double>& mu2, const std::vector<double>& cov2, int dim);

struct DenseError {
    double l1_x = 0, l1_y = 0, l1 = 0;
    double rmse_x = 0, rmse_y = 0, rmse = 0;
    std::size_t pixels = 0;
    nlohmann::json to_json() const;
};

/// Errors over the pixels where `mask` is set; the combined values pool
/// both channels. Throws ValidationError for an empty mask or mismatched
/// shapes.
DenseError dense_tactile_error(const geometry::GradientField& pred, const geometry::GradientField& gt, const Mask& mask);

struct MetricReport {
    std::string object_id;
    std::optional<double> visual_lpips;
    std::optional<double> tactile_lpips;
    std::optional<double> visual_sifid;
    std::optional<double> tactile_sifid;
    std::optional<DenseError> dense_tactile;
    nlohmann::json to_json() const;  // absent values are null
};

/// Means of the present values; a field stays absent if no report has it.
MetricReport aggregate(const std::vector<MetricReport>& reports);

using Synthesizer = std::function<model::Synthesis(const Plane& sketch, const Mask& object_mask)>;

struct ProtocolInputs {
    const data::SceneRecord* scene = nullptr;
    data::PatchSplit split;              // held-out patches come from split.test (val if test is empty)
    std::vector<Plane> unseen_sketches;  // may be empty: SIFID fields stay absent
    std::optional<geometry::GradientField> dense_truth;
    std::optional<Mask> dense_mask;
};

/// Visual LPIPS on the seen sketch, tactile LPIPS over held-out patches,
/// SIFID on unseen sketches (visual against the training image, tactile
/// shaded mosaics against the training patch mosaic) and, when dense truth
/// is supplied, the dense tactile error.
MetricReport run_protocol(const Synthesizer& synth, const ProtocolInputs& in, const model::FeatureBackbone& backbone);

/// Tiles 32x32 shaded gradient patches into a near-square mosaic.
Image patch_mosaic(const std::vector<geometry::GradientField>& patches);

}  // namespace vts::eval
