#include "vts/model/backbone.hpp"

#include <cmath>

#include "vts/core/error.hpp"
#include "vts/nn/archive.hpp"
#include "vts/nn/ops.hpp"

namespace vts::model {

using nn::Padding;

FeatureBackbone::FeatureBackbone() {
    conv1 = register_module("conv1", std::make_shared<nn::Conv2d>(3, 32, 3, 1, Padding::same(1)));
    conv2 = register_module("conv2", std::make_shared<nn::Conv2d>(32, 64, 3, 1, Padding::same(1)));
    conv3 = register_module("conv3", std::make_shared<nn::Conv2d>(64, 128, 3, 1, Padding::same(1)));
    nn::set_requires_grad(*this, false);
    eval();
}

std::shared_ptr<FeatureBackbone> FeatureBackbone::standard() {
    auto b = std::make_shared<FeatureBackbone>();
    Rng rng(kDefaultSeed);
    for (auto& conv : {b->conv1, b->conv2, b->conv3}) {
        const auto& s = conv->weight.shape();
        const double std = std::sqrt(2.0 / (s[1] * s[2] * s[3]));
        for (float& v : conv->weight.values()) v = static_cast<float>(rng.normal(0.0, std));
        for (float& v : conv->bias.values()) v = static_cast<float>(rng.normal(0.0, 0.05));
    }
    return b;
}

std::shared_ptr<FeatureBackbone> FeatureBackbone::from_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigurationError("backbone weights not found: " + path.string());
    auto b = std::make_shared<FeatureBackbone>();
    nn::Archive::load(path).get_all("", b->named_parameters());
    return b;
}

std::vector<Tensor> FeatureBackbone::features(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != 3)
        throw ValidationError("backbone: expected (N, 3, H, W), got " + nn::to_string(x.shape()));
    std::vector<Tensor> out;
    Tensor h = nn::avg_pool2(nn::relu(conv1->forward(x)));
    out.push_back(h);
    h = nn::avg_pool2(nn::relu(conv2->forward(h)));
    out.push_back(h);
    out.push_back(nn::relu(conv3->forward(h)));
    return out;
}

Tensor perceptual_distance(const FeatureBackbone& backbone, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ValidationError("perceptual distance: shape mismatch " + nn::to_string(a.shape()) + " vs " +
                              nn::to_string(b.shape()));
    const auto fa = backbone.features(a);
    const auto fb = backbone.features(b);
    Tensor total;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        const Tensor d = nn::sub(nn::channel_unit_normalize(fa[i]), nn::channel_unit_normalize(fb[i]));
        // mean over (N, C, H, W) == batch/spatial mean of sum_c d^2 / C
        const Tensor term = nn::mean(nn::mul(d, d));
        total = total.defined() ? nn::add(total, term) : term;
    }
    return total;
}

VisionAidedDiscriminator::VisionAidedDiscriminator(std::shared_ptr<const FeatureBackbone> backbone)
    : backbone_(std::move(backbone)) {
    if (!backbone_) throw ConfigurationError("vision-aided discriminator: no backbone configured");
    fc1 = register_module("fc1", std::make_shared<nn::Linear>(backbone_->feature_dim(), kHidden));
    fc2 = register_module("fc2", std::make_shared<nn::Linear>(kHidden, 1));
}

const FeatureBackbone& VisionAidedDiscriminator::backbone() const { return *backbone_; }

Tensor VisionAidedDiscriminator::forward(const Tensor& image) const {
    Tensor x = image;
    if (x.dim(2) != kInputSize || x.dim(3) != kInputSize) x = nn::resize_bilinear(x, kInputSize, kInputSize);
    std::vector<Tensor> pooled;
    for (const auto& f : backbone_->features(x)) pooled.push_back(nn::global_avg_pool(f));
    const Tensor h = nn::leaky_relu(fc1->forward(nn::concat(pooled, 1)), 0.2f);
    return fc2->forward(h);
}

}  // namespace vts::model
