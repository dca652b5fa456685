#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "vts/nn/module.hpp"

namespace vts::model {

using nn::Tensor;

/// Frozen convolutional feature extractor shared by the vision-aided
/// discriminator and the perceptual distances.
///   conv3x3 3->32, relu, pool | conv3x3 32->64, relu, pool | conv3x3 64->128, relu
/// Stage outputs (after the pools and the last relu) are the features.
class FeatureBackbone : public nn::Module {
public:
    static constexpr int kStages = 3;
    static constexpr std::uint64_t kDefaultSeed = 0x5eedba5e;

    FeatureBackbone();

    /// Fixed weights from kDefaultSeed (He-normal), frozen.
    static std::shared_ptr<FeatureBackbone> standard();
    /// Weights from an archive holding conv{1,2,3}.{weight,bias}.
    static std::shared_ptr<FeatureBackbone> from_file(const std::filesystem::path& path);

    /// x (N, 3, H, W) in [-1, 1]; gradients flow to x, never to the weights.
    std::vector<Tensor> features(const Tensor& x) const;
    std::vector<int> channels() const { return {32, 64, 128}; }
    int feature_dim() const { return 32 + 64 + 128; }

    std::shared_ptr<nn::Conv2d> conv1, conv2, conv3;
};

/// Sum over stages of the spatial mean of sum_c (u_c - v_c)^2 / C on
/// channel-normalized features. Returns one value per batch item summed,
/// divided by N (a batch mean).
Tensor perceptual_distance(const FeatureBackbone& backbone, const Tensor& a, const Tensor& b);

/// D_A: frozen backbone, global-average-pooled stage features, then
/// Linear(224, 64) - LeakyReLU(0.2) - Linear(64, 1).
class VisionAidedDiscriminator : public nn::Module {
public:
    static constexpr int kInputSize = 128;
    static constexpr int kHidden = 64;

    explicit VisionAidedDiscriminator(std::shared_ptr<const FeatureBackbone> backbone);
    /// image (N, 3, H, W) -> (N, 1) logits.
    Tensor forward(const Tensor& image) const;
    const FeatureBackbone& backbone() const;

    std::shared_ptr<nn::Linear> fc1, fc2;

private:
    std::shared_ptr<const FeatureBackbone> backbone_;
};

}  // namespace vts::model
