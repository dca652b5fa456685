#include "vts/nn/optim.hpp"

#include <cmath>

#include "vts/core/error.hpp"

namespace vts::nn {

Adam::Adam(NamedTensors params, AdamOptions options) : params_(std::move(params)), options_(options) {
    if (!(options_.lr > 0.0)) throw ConfigurationError("adam: learning rate must be > 0");
    if (options_.beta1 < 0.0 || options_.beta1 >= 1.0 || options_.beta2 < 0.0 || options_.beta2 >= 1.0)
        throw ConfigurationError("adam: betas must lie in [0, 1)");
    for (const auto& [name, p] : params_) {
        m_.push_back(Tensor::zeros(p.shape()));
        v_.push_back(Tensor::zeros(p.shape()));
    }
}

void Adam::step() {
    ++t_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor p = params_[k].second;
        Node* node = p.node();
        const bool has = !node->grad.empty();
        float* w = p.data();
        float* m = m_[k].data();
        float* v = v_[k].data();
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double g = has ? node->grad[i] : 0.0;
            m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g);
            v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * g * g);
            if (!has) continue;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] = static_cast<float>(w[i] - options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
        }
    }
}

void Adam::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

NamedTensors Adam::state() const {
    NamedTensors out;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        out.emplace_back(params_[k].first + ".exp_avg", m_[k]);
        out.emplace_back(params_[k].first + ".exp_avg_sq", v_[k]);
    }
    return out;
}

}  // namespace vts::nn
