#include "vts/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "vts/core/error.hpp"

namespace vts::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string to_string(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
    return out + ")";
}

float* Node::grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
    return grad.data();
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) { return full(shape, 0.0f, requires_grad); }

Tensor Tensor::full(const Shape& shape, float value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value.assign(nn::numel(shape), value);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(const Shape& shape, std::vector<float> values, bool requires_grad) {
    if (values.size() != nn::numel(shape))
        throw ValidationError("tensor: " + std::to_string(values.size()) + " values for shape " + to_string(shape));
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(float v) { return from({}, {v}); }

int Tensor::dim(int i) const {
    const int r = rank();
    if (i < 0) i += r;
    if (i < 0 || i >= r) throw ValidationError("tensor: dim index out of range");
    return node_->shape[static_cast<std::size_t>(i)];
}

float Tensor::item() const {
    if (numel() != 1) throw ValidationError("tensor: item() needs exactly one element, shape " + to_string(shape()));
    return node_->value[0];
}

std::vector<float> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<float>(node_->value.size(), 0.0f);
    return node_->grad;
}

Tensor Tensor::detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    return Tensor(std::move(n));
}

void Tensor::backward() const {
    if (numel() != 1) throw ValidationError("backward: root must be a scalar, got " + to_string(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order. Owning pointers
    // keep every node alive while parents lists are being released.
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{node_, 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            std::shared_ptr<Node> p = n->parents[next++];
            if (p->requires_grad && seen.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = it->get();
        if (!n->backward) continue;
        if (!n->grad.empty()) n->backward();
        n->backward = nullptr;
        n->parents.clear();
        if (n != node_.get()) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<float> value, std::vector<Tensor> parents,
                   std::function<void(Node& self)> backward, const char* op) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    if (!g_grad_enabled) return Tensor(std::move(n));
    bool any = false;
    for (const auto& p : parents)
        if (p.defined() && p.requires_grad()) any = true;
    if (!any) return Tensor(std::move(n));
    n->requires_grad = true;
    for (auto& p : parents)
        if (p.defined()) n->parents.push_back(p.shared());
    Node* self = n.get();
    n->backward = [self, fn = std::move(backward)] { fn(*self); };
    return Tensor(std::move(n));
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.values().begin(), t.values().end(), [](float v) { return std::isfinite(v); });
}

}  // namespace vts::nn
