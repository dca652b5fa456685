#include "vts/nn/module.hpp"

#include "vts/core/error.hpp"

namespace vts::nn {

void Module::train(bool on) {
    training_ = on;
    for (auto& [name, child] : children_) child->train(on);
}

Tensor Module::register_parameter(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.emplace_back(name, t);
    return t;
}

Tensor Module::register_buffer(const std::string& name, Tensor t) {
    t.set_requires_grad(false);
    buffers_.emplace_back(name, t);
    return t;
}

void Module::collect(const std::string& prefix, bool buffers, NamedTensors& out) const {
    for (const auto& [name, t] : buffers ? buffers_ : params_) out.emplace_back(prefix + name, t);
    for (const auto& [name, child] : children_) child->collect(prefix + name + ".", buffers, out);
}

NamedTensors Module::named_parameters() const {
    NamedTensors out;
    collect("", false, out);
    return out;
}

NamedTensors Module::named_buffers() const {
    NamedTensors out;
    collect("", true, out);
    return out;
}

std::vector<Tensor> Module::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::size_t Module::parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.numel();
    return n;
}

void Module::zero_grad() {
    for (auto& t : parameters()) t.zero_grad();
}

void set_requires_grad(Module& m, bool on) {
    for (auto& t : m.parameters()) t.set_requires_grad(on);
}

void init_normal(Module& m, Rng& rng, float std) {
    for (auto& [name, t] : m.named_parameters()) {
        const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
        const bool is_norm_scale = t.rank() == 1 && !is_bias;
        for (float& v : t.values()) {
            if (is_bias)
                v = 0.0f;
            else if (is_norm_scale)
                v = static_cast<float>(rng.normal(1.0, std));
            else
                v = static_cast<float>(rng.normal(0.0, std));
        }
    }
}

Conv2d::Conv2d(int in, int out, int kernel, int stride_, Padding pad, bool with_bias)
    : stride(stride_), padding(pad) {
    weight = register_parameter("weight", Tensor::zeros({out, in, kernel, kernel}));
    if (with_bias) bias = register_parameter("bias", Tensor::zeros({out}));
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }

ConvTranspose2d::ConvTranspose2d(int in, int out, int kernel, int stride_, int pad_, bool with_bias)
    : stride(stride_), pad(pad_) {
    weight = register_parameter("weight", Tensor::zeros({in, out, kernel, kernel}));
    if (with_bias) bias = register_parameter("bias", Tensor::zeros({out}));
}

Tensor ConvTranspose2d::forward(const Tensor& x) const { return conv_transpose2d(x, weight, bias, stride, pad); }

BatchNorm2d::BatchNorm2d(int channels, float momentum_, float eps_) : momentum(momentum_), eps(eps_) {
    weight = register_parameter("weight", Tensor::full({channels}, 1.0f));
    bias = register_parameter("bias", Tensor::zeros({channels}));
    running_mean = register_buffer("running_mean", Tensor::zeros({channels}));
    running_var = register_buffer("running_var", Tensor::full({channels}, 1.0f));
}

Tensor BatchNorm2d::forward(const Tensor& x) {
    return batch_norm(x, weight, bias, running_mean, running_var, is_training(), momentum, eps);
}

Linear::Linear(int in, int out, bool with_bias) {
    weight = register_parameter("weight", Tensor::zeros({out, in}));
    if (with_bias) bias = register_parameter("bias", Tensor::zeros({out}));
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight, bias); }

}  // namespace vts::nn
