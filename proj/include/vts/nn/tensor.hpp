#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace vts::nn {

using Shape = std::vector<int>;

std::size_t numel(const Shape& s);
std::string to_string(const Shape& s);

/// One value in the computation graph. Non-leaf nodes keep their parents
/// alive until backward() has consumed them.
struct Node {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;  // empty until something flows in
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward;
    const char* op = "leaf";

    float* grad_buffer();  // allocates zeros on first use
};

/// Float tensor handle with reverse-mode autodiff. Copies share storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, float value, bool requires_grad = false);
    static Tensor from(const Shape& shape, std::vector<float> values, bool requires_grad = false);
    static Tensor scalar(float v);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const;
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t numel() const { return node_->value.size(); }

    float* data() { return node_->value.data(); }
    const float* data() const { return node_->value.data(); }
    std::vector<float>& values() { return node_->value; }
    const std::vector<float>& values() const { return node_->value; }
    float item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient as a vector (zeros when nothing has flowed in).
    std::vector<float> grad() const;
    void zero_grad() { node_->grad.clear(); }

    /// Same values, cut from the graph.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    /// Accumulates d(this)/d(leaf) into every reachable leaf that requires
    /// grad. The root must be a scalar. Frees the graph behind it.
    void backward() const;

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables graph construction in its scope.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Builds an op result. Parents that do not require grad are dropped; if
/// none remain (or grad mode is off) the result is a constant.
Tensor make_result(Shape shape, std::vector<float> value, std::vector<Tensor> parents,
                   std::function<void(Node& self)> backward, const char* op);

bool all_finite(const Tensor& t);

}  // namespace vts::nn
