#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vts/core/random.hpp"
#include "vts/nn/ops.hpp"
#include "vts/nn/tensor.hpp"

namespace vts::nn {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

class Module {
public:
    virtual ~Module() = default;

    void train(bool on = true);
    void eval() { train(false); }
    bool is_training() const { return training_; }

    /// Dotted names, registration order, children after own tensors.
    NamedTensors named_parameters() const;
    NamedTensors named_buffers() const;
    std::vector<Tensor> parameters() const;
    std::size_t parameter_count() const;
    void zero_grad();

protected:
    Tensor register_parameter(const std::string& name, Tensor t);
    Tensor register_buffer(const std::string& name, Tensor t);
    template <typename M>
    std::shared_ptr<M> register_module(const std::string& name, std::shared_ptr<M> m) {
        children_.emplace_back(name, m);
        return m;
    }

private:
    void collect(const std::string& prefix, bool buffers, NamedTensors& out) const;

    bool training_ = true;
    NamedTensors params_;
    NamedTensors buffers_;
    std::vector<std::pair<std::string, std::shared_ptr<Module>>> children_;
};

void set_requires_grad(Module& m, bool on);

/// Deterministic N(0, std) weights; norm-layer scales N(1, std); biases 0.
void init_normal(Module& m, Rng& rng, float std = 0.02f);

class Conv2d : public Module {
public:
    Conv2d(int in, int out, int kernel, int stride, Padding pad, bool bias = true);
    Tensor forward(const Tensor& x) const;

    Tensor weight;
    Tensor bias;
    int stride;
    Padding padding;
};

class ConvTranspose2d : public Module {
public:
    ConvTranspose2d(int in, int out, int kernel = 4, int stride = 2, int pad = 1, bool bias = true);
    Tensor forward(const Tensor& x) const;

    Tensor weight;  // (in, out, k, k)
    Tensor bias;
    int stride;
    int pad;
};

class BatchNorm2d : public Module {
public:
    explicit BatchNorm2d(int channels, float momentum = 0.1f, float eps = 1e-5f);
    Tensor forward(const Tensor& x);

    Tensor weight;
    Tensor bias;
    Tensor running_mean;
    Tensor running_var;
    float momentum;
    float eps;
};

class Linear : public Module {
public:
    Linear(int in, int out, bool bias = true);
    Tensor forward(const Tensor& x) const;

    Tensor weight;  // (out, in)
    Tensor bias;
};

}  // namespace vts::nn
