#include "vts/model/networks.hpp"

#include "vts/core/error.hpp"
#include "vts/nn/ops.hpp"

namespace vts::model {

using nn::Padding;

namespace {

constexpr int kEncoderChannels[Generator::kDepth] = {10, 20, 40, 80, 80, 80, 80, 80};
constexpr int kSharedOut[4] = {80, 160, 160, 160};
constexpr int kBranchOut[4] = {160, 80, 40, 20};

}  // namespace

DownBlock::DownBlock(int in, int out, bool norm) {
    conv = register_module("conv", std::make_shared<nn::Conv2d>(in, out, 4, 2, Padding::same(1), !norm));
    if (norm) bn = register_module("bn", std::make_shared<nn::BatchNorm2d>(out));
}

Tensor DownBlock::forward(const Tensor& x) {
    Tensor h = conv->forward(x);
    if (bn) h = bn->forward(h);
    return nn::leaky_relu(h, 0.2f);
}

UpBlock::UpBlock(int in, int out, float dropout_) : dropout(dropout_) {
    deconv = register_module("deconv", std::make_shared<nn::ConvTranspose2d>(in, out, 4, 2, 1, false));
    bn = register_module("bn", std::make_shared<nn::BatchNorm2d>(out));
}

Tensor UpBlock::forward(const Tensor& x, Rng* rng) {
    Tensor h = bn->forward(deconv->forward(x));
    if (is_training() && dropout > 0.0f) {
        if (!rng) throw ConfigurationError("generator: dropout in training mode needs a random generator");
        h = nn::dropout(h, dropout, true, *rng);
    }
    return nn::relu(h);
}

Branch::Branch(int out_channels, float dropout) {
    // inputs: shared output (160) + e4 (80), then + e3, + e2, + e1
    const int in[4] = {240, 160 + 40, 80 + 20, 40 + 10};
    for (int i = 0; i < 4; ++i)
        up.push_back(register_module("up" + std::to_string(i), std::make_shared<UpBlock>(in[i], kBranchOut[i], dropout)));
    head = register_module("head", std::make_shared<nn::Conv2d>(kBranchOut[3], out_channels, 4, 1, Padding{1, 1, 2, 2}));
}

Tensor Branch::forward(Tensor h, const std::vector<Tensor>& skips, Rng* rng) {
    // skips = e1 .. e8
    for (int i = 0; i < 4; ++i) {
        h = up[static_cast<std::size_t>(i)]->forward(h, rng);
        if (i < 3) h = nn::concat({h, skips[static_cast<std::size_t>(2 - i)]}, 1);
    }
    return nn::tanh(head->forward(h));
}

Generator::Generator(GeneratorConfig config) : config_(config) {
    int in = config.in_channels;
    for (int i = 0; i < kDepth; ++i) {
        const bool norm = i != 0 && i != kDepth - 1;
        encoder.push_back(register_module("enc" + std::to_string(i), std::make_shared<DownBlock>(in, kEncoderChannels[i], norm)));
        in = kEncoderChannels[i];
    }
    for (int i = 0; i < 4; ++i) {
        shared.push_back(register_module("dec" + std::to_string(i), std::make_shared<UpBlock>(in, kSharedOut[i], config.dropout)));
        in = kSharedOut[i] + kEncoderChannels[kDepth - 2 - i];
    }
    visual = register_module("visual", std::make_shared<Branch>(3, config.dropout));
    tactile = register_module("tactile", std::make_shared<Branch>(2, config.dropout));
}

GeneratorOutput Generator::forward(const Tensor& x, Rng* rng) {
    if (x.rank() != 4 || x.dim(1) != config_.in_channels)
        throw ValidationError("generator: expected (N, " + std::to_string(config_.in_channels) + ", H, W) input, got " +
                              nn::to_string(x.shape()));
    if (!nn::all_finite(x)) throw NumericalError("generator: non-finite input");
    const int h = x.dim(2), w = x.dim(3);
    const int ph = (h + kMultiple - 1) / kMultiple * kMultiple, pw = (w + kMultiple - 1) / kMultiple * kMultiple;
    const int top = (ph - h) / 2, left = (pw - w) / 2;
    Tensor in = (ph == h && pw == w) ? x : nn::pad(x, top, left, ph - h - top, pw - w - left);

    std::vector<Tensor> e;
    Tensor cur = in;
    for (auto& block : encoder) {
        cur = block->forward(cur);
        e.push_back(cur);
    }
    for (int i = 0; i < 4; ++i) {
        cur = shared[static_cast<std::size_t>(i)]->forward(cur, rng);
        cur = nn::concat({cur, e[static_cast<std::size_t>(kDepth - 2 - i)]}, 1);
    }
    GeneratorOutput out{visual->forward(cur, e, rng), tactile->forward(cur, e, rng)};
    if (ph != h || pw != w) {
        out.visual = nn::crop(out.visual, top, left, h, w);
        out.tactile = nn::crop(out.tactile, top, left, h, w);
    }
    return out;
}

PatchDiscriminator::PatchDiscriminator(int in_channels) {
    const int ch[4] = {64, 128, 256, 512};
    const int stride[4] = {2, 2, 2, 1};
    int in = in_channels;
    for (int i = 0; i < 4; ++i) {
        convs.push_back(register_module("conv" + std::to_string(i),
                                        std::make_shared<nn::Conv2d>(in, ch[i], 4, stride[i], Padding::same(1), i == 0)));
        bns.push_back(i == 0 ? nullptr : register_module("bn" + std::to_string(i), std::make_shared<nn::BatchNorm2d>(ch[i])));
        in = ch[i];
    }
    out = register_module("out", std::make_shared<nn::Conv2d>(in, 1, 4, 1, Padding::same(1)));
}

PatchOutput PatchDiscriminator::forward(const Tensor& x) {
    PatchOutput res;
    Tensor h = x;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        h = convs[i]->forward(h);
        if (bns[i]) h = bns[i]->forward(h);
        h = nn::leaky_relu(h, 0.2f);
        res.features.push_back(h);
    }
    res.score = out->forward(h);
    return res;
}

MultiScaleDiscriminator::MultiScaleDiscriminator(int in_channels, int scales) : in_channels_(in_channels) {
    if (scales < 1) throw ValidationError("discriminator: need at least one scale");
    for (int s = 0; s < scales; ++s)
        nets.push_back(register_module("scale" + std::to_string(s), std::make_shared<PatchDiscriminator>(in_channels)));
}

std::vector<PatchOutput> MultiScaleDiscriminator::forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != in_channels_)
        throw ValidationError("discriminator: expected " + std::to_string(in_channels_) + " input channels, got " +
                              nn::to_string(x.shape()));
    std::vector<PatchOutput> out;
    Tensor cur = x;
    for (std::size_t s = 0; s < nets.size(); ++s) {
        if (s > 0) cur = nn::avg_pool2(cur);
        Tensor in = cur;
        const int h = cur.dim(2), w = cur.dim(3);
        if (h < kMinSide || w < kMinSide) {
            const int dh = std::max(0, kMinSide - h), dw = std::max(0, kMinSide - w);
            in = nn::pad(cur, dh / 2, dw / 2, dh - dh / 2, dw - dw / 2);
        }
        out.push_back(nets[s]->forward(in));
    }
    return out;
}

}  // namespace vts::model
