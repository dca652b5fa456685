#pragma once

#include <memory>
#include <vector>

#include "vts/nn/module.hpp"

namespace vts::model {

using nn::Tensor;

/// Conv(4, s2, p1) - [BN] - LeakyReLU(0.2)
class DownBlock : public nn::Module {
public:
    DownBlock(int in, int out, bool norm);
    Tensor forward(const Tensor& x);

    std::shared_ptr<nn::Conv2d> conv;
    std::shared_ptr<nn::BatchNorm2d> bn;  // null when unnormalized
};

/// ConvT(4, s2, p1) - BN - Dropout - ReLU
class UpBlock : public nn::Module {
public:
    UpBlock(int in, int out, float dropout);
    Tensor forward(const Tensor& x, Rng* rng);

    std::shared_ptr<nn::ConvTranspose2d> deconv;
    std::shared_ptr<nn::BatchNorm2d> bn;
    float dropout;
};

/// Four up blocks consuming the encoder skips e3, e2, e1, then a 4x4
/// stride-1 conv and tanh.
class Branch : public nn::Module {
public:
    explicit Branch(int out_channels, float dropout);
    Tensor forward(Tensor h, const std::vector<Tensor>& skips, Rng* rng);

    std::vector<std::shared_ptr<UpBlock>> up;
    std::shared_ptr<nn::Conv2d> head;
};

struct GeneratorOutput {
    Tensor visual;   // (N, 3, H, W) in [-1, 1]
    Tensor tactile;  // (N, 2, H, W) in [-1, 1], gradients / gradient_max
};

struct GeneratorConfig {
    int in_channels = 17;
    float dropout = 0.5f;
};

/// U-Net with a shared encoder and decoder prefix that splits into a visual
/// and a tactile branch.
class Generator : public nn::Module {
public:
    static constexpr int kDepth = 8;
    static constexpr int kMultiple = 1 << kDepth;

    explicit Generator(GeneratorConfig config = {});

    /// Inputs whose sides are not multiples of 256 are zero padded (centred)
    /// and the outputs cropped back. `rng` drives dropout and is required in
    /// training mode when dropout > 0.
    GeneratorOutput forward(const Tensor& x, Rng* rng = nullptr);

    const GeneratorConfig& config() const { return config_; }

    std::vector<std::shared_ptr<DownBlock>> encoder;
    std::vector<std::shared_ptr<UpBlock>> shared;
    std::shared_ptr<Branch> visual;
    std::shared_ptr<Branch> tactile;

private:
    GeneratorConfig config_;
};

struct PatchOutput {
    Tensor score;                 // (N, 1, h, w) logits
    std::vector<Tensor> features; // one per conv block
};

/// C64 (no norm) - C128 - C256 - C512, strides 2, 2, 2, 1, then a 1-channel
/// 4x4 conv, stride 1.
class PatchDiscriminator : public nn::Module {
public:
    explicit PatchDiscriminator(int in_channels);
    PatchOutput forward(const Tensor& x);

    std::vector<std::shared_ptr<nn::Conv2d>> convs;
    std::vector<std::shared_ptr<nn::BatchNorm2d>> bns;  // null entry for the first block
    std::shared_ptr<nn::Conv2d> out;
};

/// Same layout at each scale; scale s sees the input average-pooled s times.
/// Inputs smaller than kMinSide are zero padded so every score map is
/// non-empty.
class MultiScaleDiscriminator : public nn::Module {
public:
    static constexpr int kMinSide = 24;

    MultiScaleDiscriminator(int in_channels, int scales = 2);
    std::vector<PatchOutput> forward(const Tensor& x);
    int in_channels() const { return in_channels_; }
    int scales() const { return static_cast<int>(nets.size()); }

    std::vector<std::shared_ptr<PatchDiscriminator>> nets;

private:
    int in_channels_;
};

}  // namespace vts::model
