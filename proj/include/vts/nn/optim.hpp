#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vts/nn/module.hpp"

namespace vts::nn {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(NamedTensors params, AdamOptions options);

    /// Applies one update using the gradients currently stored on the
    /// parameters. Parameters without gradient are skipped but their
    /// moments still decay as in the usual dense formulation.
    void step();
    void zero_grad();

    const AdamOptions& options() const { return options_; }
    std::int64_t steps() const { return t_; }

    /// Moments keyed "<param>.exp_avg" / "<param>.exp_avg_sq".
    NamedTensors state() const;
    void set_steps(std::int64_t t) { t_ = t; }

private:
    NamedTensors params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamOptions options_;
    std::int64_t t_ = 0;
};

}  // namespace vts::nn
