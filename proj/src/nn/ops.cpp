#include "vts/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "vts/core/error.hpp"

namespace vts::nn {

namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ValidationError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                              to_string(b.shape()));
}

void require_rank(const Tensor& x, int r, const char* op) {
    if (x.rank() != r)
        throw ValidationError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                              to_string(x.shape()));
}

bool wants(const Node* n) { return n && n->requires_grad; }

// df receives (input, output).
template <typename F, typename DF>
Tensor unary(const Tensor& x, const char* op, F f, DF df) {
    std::vector<float> out(x.numel());
    const float* xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    Node* in = x.node();
    return make_result(
        x.shape(), std::move(out), {x},
        [in, df](Node& self) {
            float* g = in->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                g[i] += self.grad[i] * df(in->value[i], self.value[i]);
        },
        op);
}

// Rows index (c, ki, kj); columns index output positions.
void im2col(const float* src, int C, int H, int W, int k, int s, int pt, int pl, int Ho, int Wo, float* col) {
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                float* row = col + (static_cast<std::size_t>((c * k + ki) * k + kj)) * Ho * Wo;
                const float* plane = src + static_cast<std::size_t>(c) * H * W;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int y = oy * s - pt + ki;
                    float* dst = row + static_cast<std::size_t>(oy) * Wo;
                    if (y < 0 || y >= H) {
                        std::fill(dst, dst + Wo, 0.0f);
                        continue;
                    }
                    const float* line = plane + static_cast<std::size_t>(y) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int x = ox * s - pl + kj;
                        dst[ox] = (x >= 0 && x < W) ? line[x] : 0.0f;
                    }
                }
            }
}

// Adjoint of im2col: accumulates columns back into the image.
void col2im(const float* col, int C, int H, int W, int k, int s, int pt, int pl, int Ho, int Wo, float* dst) {
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                const float* row = col + (static_cast<std::size_t>((c * k + ki) * k + kj)) * Ho * Wo;
                float* plane = dst + static_cast<std::size_t>(c) * H * W;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int y = oy * s - pt + ki;
                    if (y < 0 || y >= H) continue;
                    const float* src = row + static_cast<std::size_t>(oy) * Wo;
                    float* line = plane + static_cast<std::size_t>(y) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int x = ox * s - pl + kj;
                        if (x >= 0 && x < W) line[x] += src[ox];
                    }
                }
            }
}

struct Strides {
    std::size_t outer = 1, axis = 1, inner = 1;
};

Strides split_at(const Shape& s, int axis) {
    Strides st;
    for (int i = 0; i < axis; ++i) st.outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    st.axis = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) st.inner *= static_cast<std::size_t>(s[i]);
    return st;
}

}  // namespace

// Elementwise ---------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<float> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    Node* na = a.node();
    Node* nb = b.node();
    return make_result(
        a.shape(), std::move(out), {a, b},
        [na, nb](Node& self) {
            for (Node* n : {na, nb}) {
                if (!wants(n)) continue;
                float* g = n->grad_buffer();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
            }
        },
        "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<float> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    Node* na = a.node();
    Node* nb = b.node();
    return make_result(
        a.shape(), std::move(out), {a, b},
        [na, nb](Node& self) {
            if (wants(na)) {
                float* g = na->grad_buffer();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
            }
            if (wants(nb)) {
                float* g = nb->grad_buffer();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
            }
        },
        "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<float> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    Node* na = a.node();
    Node* nb = b.node();
    return make_result(
        a.shape(), std::move(out), {a, b},
        [na, nb](Node& self) {
            if (wants(na)) {
                float* g = na->grad_buffer();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * nb->value[i];
            }
            if (wants(nb)) {
                float* g = nb->grad_buffer();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * na->value[i];
            }
        },
        "mul");
}

Tensor scale(const Tensor& a, float s) {
    return unary(a, "scale", [s](float x) { return x * s; }, [s](float, float) { return s; });
}

Tensor add_scalar(const Tensor& a, float s) {
    return unary(a, "add_scalar", [s](float x) { return x + s; }, [](float, float) { return 1.0f; });
}

Tensor leaky_relu(const Tensor& x, float slope) {
    return unary(
        x, "leaky_relu", [slope](float v) { return v > 0.0f ? v : slope * v; },
        [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Tensor relu(const Tensor& x) {
    return unary(x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; }, [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor tanh(const Tensor& x) {
    return unary(x, "tanh", [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Tensor dropout(const Tensor& x, float p, bool training, Rng& rng) {
    if (!training || p <= 0.0f) return x;
    if (p >= 1.0f) throw ValidationError("dropout: p must be < 1");
    auto keep = std::make_shared<std::vector<float>>(x.numel());
    const float s = 1.0f / (1.0f - p);
    for (float& k : *keep) k = rng.bernoulli(p) ? 0.0f : s;
    std::vector<float> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * (*keep)[i];
    Node* in = x.node();
    return make_result(
        x.shape(), std::move(out), {x},
        [in, keep](Node& self) {
            float* g = in->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (*keep)[i];
        },
        "dropout");
}

// Shape ----------------------------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape) {
    if (numel(shape) != x.numel())
        throw ValidationError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
    Node* in = x.node();
    return make_result(
        shape, x.values(), {x},
        [in](Node& self) {
            float* g = in->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        },
        "reshape");
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw ValidationError("concat: no inputs");
    Shape shape = xs[0].shape();
    if (axis < 0 || axis >= static_cast<int>(shape.size())) throw ValidationError("concat: bad axis");
    int total = 0;
    for (const auto& t : xs) {
        Shape s = t.shape();
        if (s.size() != shape.size()) throw ValidationError("concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i)
            if (static_cast<int>(i) != axis && s[i] != shape[i])
                throw ValidationError("concat: shape mismatch " + to_string(s) + " vs " + to_string(shape));
        total += s[static_cast<std::size_t>(axis)];
    }
    shape[static_cast<std::size_t>(axis)] = total;
    const Strides st = split_at(shape, axis);
    std::vector<float> out(numel(shape));
    std::vector<Node*> nodes;
    std::vector<std::size_t> widths;
    std::size_t offset = 0;
    for (const auto& t : xs) {
        const std::size_t w = static_cast<std::size_t>(t.dim(axis)) * st.inner;
        for (std::size_t o = 0; o < st.outer; ++o)
            std::copy_n(t.data() + o * w, w, out.data() + o * st.axis * st.inner + offset);
        offset += w;
        nodes.push_back(t.node());
        widths.push_back(w);
    }
    const std::size_t row = st.axis * st.inner;
    const std::size_t outer = st.outer;
    return make_result(
        shape, std::move(out), xs,
        [nodes, widths, row, outer](Node& self) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                if (wants(nodes[k])) {
                    float* g = nodes[k]->grad_buffer();
                    for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t i = 0; i < widths[k]; ++i) g[o * widths[k] + i] += self.grad[o * row + off + i];
                }
                off += widths[k];
            }
        },
        "concat");
}

Tensor slice(const Tensor& x, int axis, int begin, int end) {
    if (axis < 0 || axis >= x.rank()) throw ValidationError("slice: bad axis");
    if (begin < 0 || end > x.dim(axis) || begin >= end) throw ValidationError("slice: bad range");
    const Strides st = split_at(x.shape(), axis);
    Shape shape = x.shape();
    shape[static_cast<std::size_t>(axis)] = end - begin;
    const std::size_t w = static_cast<std::size_t>(end - begin) * st.inner;
    const std::size_t row = st.axis * st.inner;
    const std::size_t off = static_cast<std::size_t>(begin) * st.inner;
    std::vector<float> out(numel(shape));
    for (std::size_t o = 0; o < st.outer; ++o) std::copy_n(x.data() + o * row + off, w, out.data() + o * w);
    Node* in = x.node();
    const std::size_t outer = st.outer;
    return make_result(
        shape, std::move(out), {x},
        [in, w, row, off, outer](Node& self) {
            float* g = in->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < w; ++i) g[o * row + off + i] += self.grad[o * w + i];
        },
        "slice");
}

Tensor crop(const Tensor& x, int y, int x0, int h, int w) {
    require_rank(x, 4, "crop");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (y < 0 || x0 < 0 || h <= 0 || w <= 0 || y + h > H || x0 + w > W)
        throw ValidationError("crop: box (" + std::to_string(x0) + ", " + std::to_string(y) + ", " + std::to_string(w) +
                              ", " + std::to_string(h) + ") outside " + to_string(x.shape()));
    std::vector<float> out(static_cast<std::size_t>(N) * C * h * w);
    for (int p = 0; p < N * C; ++p)
        for (int r = 0; r < h; ++r)
            std::copy_n(x.data() + (static_cast<std::size_t>(p) * H + y + r) * W + x0, w,
                        out.data() + (static_cast<std::size_t>(p) * h + r) * w);
    Node* in = x.node();
    return make_result(
        {N, C, h, w}, std::move(out), {x},
        [in, N, C, H, W, y, x0, h, w](Node& self) {
            float* g = in->grad_buffer();
            for (int p = 0; p < N * C; ++p)
                for (int r = 0; r < h; ++r) {
                    float* dst = g + (static_cast<std::size_t>(p) * H + y + r) * W + x0;
                    const float* src = self.grad.data() + (static_cast<std::size_t>(p) * h + r) * w;
                    for (int c = 0; c < w; ++c) dst[c] += src[c];
                }
        },
        "crop");
}

Tensor pad(const Tensor& x, int top, int left, int bottom, int right) {
    require_rank(x, 4, "pad");
    if (top < 0 || left < 0 || bottom < 0 || right < 0) throw ValidationError("pad: negative padding");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = H + top + bottom, Wo = W + left + right;
    std::vector<float> out(static_cast<std::size_t>(N) * C * Ho * Wo, 0.0f);
    for (int p = 0; p < N * C; ++p)
        for (int r = 0; r < H; ++r)
            std::copy_n(x.data() + (static_cast<std::size_t>(p) * H + r) * W, W,
                        out.data() + (static_cast<std::size_t>(p) * Ho + r + top) * Wo + left);
    Node* in = x.node();
    return make_result(
        {N, C, Ho, Wo}, std::move(out), {x},
        [in, N, C, H, W, Ho, Wo, top, left](Node& self) {
            float* g = in->grad_buffer();
            for (int p = 0; p < N * C; ++p)
                for (int r = 0; r < H; ++r) {
                    const float* src = self.grad.data() + (static_cast<std::size_t>(p) * Ho + r + top) * Wo + left;
                    float* dst = g + (static_cast<std::size_t>(p) * H + r) * W;
                    for (int c = 0; c < W; ++c) dst[c] += src[c];
                }
        },
        "pad");
}

Tensor repeat_channels(const Tensor& x, int c) {
    require_rank(x, 4, "repeat_channels");
    if (x.dim(1) != 1) throw ValidationError("repeat_channels: expected one channel");
    std::vector<Tensor> parts(static_cast<std::size_t>(c), x);
    return concat(parts, 1);
}

// Convolution ------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, Padding pd) {
    require_rank(x, 4, "conv2d");
    require_rank(w, 4, "conv2d weight");
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != Cin || w.dim(3) != k)
        throw ValidationError("conv2d: weight " + to_string(w.shape()) + " does not match input " + to_string(x.shape()));
    if (b.defined() && (b.rank() != 1 || b.dim(0) != Cout)) throw ValidationError("conv2d: bias shape");
    const int Ho = (H + pd.top + pd.bottom - k) / stride + 1;
    const int Wo = (W + pd.left + pd.right - k) / stride + 1;
    if (H + pd.top + pd.bottom < k || W + pd.left + pd.right < k || Ho <= 0 || Wo <= 0)
        throw ValidationError("conv2d: input " + to_string(x.shape()) + " too small for kernel " + std::to_string(k));
    const int K = Cin * k * k;
    const int P = Ho * Wo;
    std::vector<float> out(static_cast<std::size_t>(N) * Cout * P);
    std::vector<float> col(static_cast<std::size_t>(K) * P);
    const CMapR wm(w.data(), Cout, K);
    for (int n = 0; n < N; ++n) {
        im2col(x.data() + static_cast<std::size_t>(n) * Cin * H * W, Cin, H, W, k, stride, pd.top, pd.left, Ho, Wo,
               col.data());
        MapR o(out.data() + static_cast<std::size_t>(n) * Cout * P, Cout, P);
        o.noalias() = wm * CMapR(col.data(), K, P);
        if (b.defined())
            for (int c = 0; c < Cout; ++c) o.row(c).array() += b.data()[c];
    }
    Node* nx = x.node();
    Node* nw = w.node();
    Node* nb = b.defined() ? b.node() : nullptr;
    std::vector<Tensor> parents{x, w};
    if (b.defined()) parents.push_back(b);
    return make_result(
        {N, Cout, Ho, Wo}, std::move(out), parents,
        [=](Node& self) {
            const CMapR wmat(nw->value.data(), Cout, K);
            std::vector<float> colb(static_cast<std::size_t>(K) * P);
            for (int n = 0; n < N; ++n) {
                const CMapR g(self.grad.data() + static_cast<std::size_t>(n) * Cout * P, Cout, P);
                if (wants(nw)) {
                    im2col(nx->value.data() + static_cast<std::size_t>(n) * Cin * H * W, Cin, H, W, k, stride, pd.top,
                           pd.left, Ho, Wo, colb.data());
                    MapR gw(nw->grad_buffer(), Cout, K);
                    gw.noalias() += g * CMapR(colb.data(), K, P).transpose();
                }
                if (wants(nb)) {
                    float* gb = nb->grad_buffer();
                    // plain loop: a vectorized sum would depend on the buffer's alignment
                    for (int c = 0; c < Cout; ++c) {
                        const float* row = g.data() + static_cast<std::size_t>(c) * P;
                        float s = 0.0f;
                        for (int i = 0; i < P; ++i) s += row[i];
                        gb[c] += s;
                    }
                }
                if (wants(nx)) {
                    MapR dcol(colb.data(), K, P);
                    dcol.noalias() = wmat.transpose() * g;
                    col2im(colb.data(), Cin, H, W, k, stride, pd.top, pd.left, Ho, Wo,
                           nx->grad_buffer() + static_cast<std::size_t>(n) * Cin * H * W);
                }
            }
        },
        "conv2d");
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int p) {
    require_rank(x, 4, "conv_transpose2d");
    require_rank(w, 4, "conv_transpose2d weight");
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(1), k = w.dim(2);
    if (w.dim(0) != Cin || w.dim(3) != k)
        throw ValidationError("conv_transpose2d: weight " + to_string(w.shape()) + " does not match input " +
                              to_string(x.shape()));
    if (b.defined() && (b.rank() != 1 || b.dim(0) != Cout)) throw ValidationError("conv_transpose2d: bias shape");
    const int Ho = (H - 1) * stride - 2 * p + k;
    const int Wo = (W - 1) * stride - 2 * p + k;
    if (Ho <= 0 || Wo <= 0) throw ValidationError("conv_transpose2d: empty output");
    const int K = Cout * k * k;
    const int P = H * W;
    std::vector<float> out(static_cast<std::size_t>(N) * Cout * Ho * Wo, 0.0f);
    std::vector<float> col(static_cast<std::size_t>(K) * P);
    const CMapR wm(w.data(), Cin, K);
    for (int n = 0; n < N; ++n) {
        MapR c(col.data(), K, P);
        c.noalias() = wm.transpose() * CMapR(x.data() + static_cast<std::size_t>(n) * Cin * P, Cin, P);
        float* o = out.data() + static_cast<std::size_t>(n) * Cout * Ho * Wo;
        col2im(col.data(), Cout, Ho, Wo, k, stride, p, p, H, W, o);
        if (b.defined())
            for (int ch = 0; ch < Cout; ++ch) {
                float* plane = o + static_cast<std::size_t>(ch) * Ho * Wo;
                for (int i = 0; i < Ho * Wo; ++i) plane[i] += b.data()[ch];
            }
    }
    Node* nx = x.node();
    Node* nw = w.node();
    Node* nb = b.defined() ? b.node() : nullptr;
    std::vector<Tensor> parents{x, w};
    if (b.defined()) parents.push_back(b);
    return make_result(
        {N, Cout, Ho, Wo}, std::move(out), parents,
        [=](Node& self) {
            const CMapR wmat(nw->value.data(), Cin, K);
            std::vector<float> dcol(static_cast<std::size_t>(K) * P);
            for (int n = 0; n < N; ++n) {
                const float* g = self.grad.data() + static_cast<std::size_t>(n) * Cout * Ho * Wo;
                if (wants(nb)) {
                    float* gb = nb->grad_buffer();
                    for (int ch = 0; ch < Cout; ++ch) {
                        double s = 0.0;
                        for (int i = 0; i < Ho * Wo; ++i) s += g[static_cast<std::size_t>(ch) * Ho * Wo + i];
                        gb[ch] += static_cast<float>(s);
                    }
                }
                if (!wants(nx) && !wants(nw)) continue;
                im2col(g, Cout, Ho, Wo, k, stride, p, p, H, W, dcol.data());
                const CMapR dc(dcol.data(), K, P);
                if (wants(nw)) {
                    MapR gw(nw->grad_buffer(), Cin, K);
                    gw.noalias() += CMapR(nx->value.data() + static_cast<std::size_t>(n) * Cin * P, Cin, P) * dc.transpose();
                }
                if (wants(nx)) {
                    MapR gx(nx->grad_buffer() + static_cast<std::size_t>(n) * Cin * P, Cin, P);
                    gx.noalias() += wmat * dc;
                }
            }
        },
        "conv_transpose2d");
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, float momentum, float eps) {
    require_rank(x, 4, "batch_norm");
    const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (gamma.numel() != static_cast<std::size_t>(C) || beta.numel() != static_cast<std::size_t>(C))
        throw ValidationError("batch_norm: parameter size does not match channels");
    const std::size_t count = static_cast<std::size_t>(N) * HW;
    auto xhat = std::make_shared<std::vector<float>>(x.numel());
    auto inv_std = std::make_shared<std::vector<float>>(static_cast<std::size_t>(C));
    std::vector<float> out(x.numel());
    const float* xv = x.data();
    for (int c = 0; c < C; ++c) {
        double mu, var;
        if (training) {
            double s = 0.0, s2 = 0.0;
            for (int n = 0; n < N; ++n) {
                const float* p = xv + (static_cast<std::size_t>(n) * C + c) * HW;
                for (int i = 0; i < HW; ++i) s += p[i];
            }
            mu = s / static_cast<double>(count);
            for (int n = 0; n < N; ++n) {
                const float* p = xv + (static_cast<std::size_t>(n) * C + c) * HW;
                for (int i = 0; i < HW; ++i) s2 += (p[i] - mu) * (p[i] - mu);
            }
            var = s2 / static_cast<double>(count);
            const double unbiased = count > 1 ? s2 / static_cast<double>(count - 1) : var;
            running_mean.data()[c] = static_cast<float>((1.0 - momentum) * running_mean.data()[c] + momentum * mu);
            running_var.data()[c] = static_cast<float>((1.0 - momentum) * running_var.data()[c] + momentum * unbiased);
        } else {
            mu = running_mean.data()[c];
            var = running_var.data()[c];
        }
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(c)] = static_cast<float>(is);
        const float gm = gamma.data()[c], bt = beta.data()[c];
        for (int n = 0; n < N; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) {
                const float h = static_cast<float>((xv[base + i] - mu) * is);
                (*xhat)[base + i] = h;
                out[base + i] = gm * h + bt;
            }
        }
    }
    Node* nx = x.node();
    Node* ng = gamma.node();
    Node* nbeta = beta.node();
    return make_result(
        x.shape(), std::move(out), {x, gamma, beta},
        [=](Node& self) {
            const float* g = self.grad.data();
            for (int c = 0; c < C; ++c) {
                double sg = 0.0, sgh = 0.0;
                for (int n = 0; n < N; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * C + c) * HW;
                    for (int i = 0; i < HW; ++i) {
                        sg += g[base + i];
                        sgh += static_cast<double>(g[base + i]) * (*xhat)[base + i];
                    }
                }
                if (wants(ng)) ng->grad_buffer()[c] += static_cast<float>(sgh);
                if (wants(nbeta)) nbeta->grad_buffer()[c] += static_cast<float>(sg);
                if (!wants(nx)) continue;
                const double gm = ng->value[static_cast<std::size_t>(c)];
                const double is = (*inv_std)[static_cast<std::size_t>(c)];
                float* gx = nx->grad_buffer();
                const double mg = sg / static_cast<double>(count);
                const double mgh = sgh / static_cast<double>(count);
                for (int n = 0; n < N; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * C + c) * HW;
                    for (int i = 0; i < HW; ++i) {
                        const double d = training ? (g[base + i] - mg - (*xhat)[base + i] * mgh) : g[base + i];
                        gx[base + i] += static_cast<float>(gm * is * d);
                    }
                }
            }
        },
        "batch_norm");
}

Tensor avg_pool2(const Tensor& x) {
    require_rank(x, 4, "avg_pool2");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = H / 2, Wo = W / 2;
    if (Ho == 0 || Wo == 0) throw ValidationError("avg_pool2: input too small");
    std::vector<float> out(static_cast<std::size_t>(N) * C * Ho * Wo);
    for (int p = 0; p < N * C; ++p) {
        const float* src = x.data() + static_cast<std::size_t>(p) * H * W;
        float* dst = out.data() + static_cast<std::size_t>(p) * Ho * Wo;
        for (int r = 0; r < Ho; ++r)
            for (int c = 0; c < Wo; ++c)
                dst[r * Wo + c] = 0.25f * (src[(2 * r) * W + 2 * c] + src[(2 * r) * W + 2 * c + 1] +
                                           src[(2 * r + 1) * W + 2 * c] + src[(2 * r + 1) * W + 2 * c + 1]);
    }
    Node* in = x.node();
    return make_result(
        {N, C, Ho, Wo}, std::move(out), {x},
        [in, N, C, H, W, Ho, Wo](Node& self) {
            float* g = in->grad_buffer();
            for (int p = 0; p < N * C; ++p) {
                float* dst = g + static_cast<std::size_t>(p) * H * W;
                const float* src = self.grad.data() + static_cast<std::size_t>(p) * Ho * Wo;
                for (int r = 0; r < Ho; ++r)
                    for (int c = 0; c < Wo; ++c) {
                        const float v = 0.25f * src[r * Wo + c];
                        dst[(2 * r) * W + 2 * c] += v;
                        dst[(2 * r) * W + 2 * c + 1] += v;
                        dst[(2 * r + 1) * W + 2 * c] += v;
                        dst[(2 * r + 1) * W + 2 * c + 1] += v;
                    }
            }
        },
        "avg_pool2");
}

Tensor resize_bilinear(const Tensor& x, int h, int w) {
    require_rank(x, 4, "resize_bilinear");
    if (h <= 0 || w <= 0) throw ValidationError("resize_bilinear: target size must be positive");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    struct Tap {
        int i0, i1;
        float w1;
    };
    auto taps = [](int out_n, int in_n) {
        std::vector<Tap> t(static_cast<std::size_t>(out_n));
        const double sc = static_cast<double>(in_n) / out_n;
        for (int i = 0; i < out_n; ++i) {
            const double f = std::clamp((i + 0.5) * sc - 0.5, 0.0, static_cast<double>(in_n - 1));
            const int i0 = static_cast<int>(f);
            t[static_cast<std::size_t>(i)] = {i0, std::min(i0 + 1, in_n - 1), static_cast<float>(f - i0)};
        }
        return t;
    };
    const auto ty = taps(h, H);
    const auto tx = taps(w, W);
    std::vector<float> out(static_cast<std::size_t>(N) * C * h * w);
    for (int p = 0; p < N * C; ++p) {
        const float* src = x.data() + static_cast<std::size_t>(p) * H * W;
        float* dst = out.data() + static_cast<std::size_t>(p) * h * w;
        for (int r = 0; r < h; ++r) {
            const Tap& a = ty[static_cast<std::size_t>(r)];
            for (int c = 0; c < w; ++c) {
                const Tap& b = tx[static_cast<std::size_t>(c)];
                const float top = src[a.i0 * W + b.i0] * (1 - b.w1) + src[a.i0 * W + b.i1] * b.w1;
                const float bot = src[a.i1 * W + b.i0] * (1 - b.w1) + src[a.i1 * W + b.i1] * b.w1;
                dst[r * w + c] = top * (1 - a.w1) + bot * a.w1;
            }
        }
    }
    Node* in = x.node();
    return make_result(
        {N, C, h, w}, std::move(out), {x},
        [in, ty, tx, N, C, H, W, h, w](Node& self) {
            float* g = in->grad_buffer();
            for (int p = 0; p < N * C; ++p) {
                float* dst = g + static_cast<std::size_t>(p) * H * W;
                const float* src = self.grad.data() + static_cast<std::size_t>(p) * h * w;
                for (int r = 0; r < h; ++r) {
                    const Tap& a = ty[static_cast<std::size_t>(r)];
                    for (int c = 0; c < w; ++c) {
                        const Tap& b = tx[static_cast<std::size_t>(c)];
                        const float v = src[r * w + c];
                        dst[a.i0 * W + b.i0] += v * (1 - a.w1) * (1 - b.w1);
                        dst[a.i0 * W + b.i1] += v * (1 - a.w1) * b.w1;
                        dst[a.i1 * W + b.i0] += v * a.w1 * (1 - b.w1);
                        dst[a.i1 * W + b.i1] += v * a.w1 * b.w1;
                    }
                }
            }
        },
        "resize_bilinear");
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool");
    const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<float> out(static_cast<std::size_t>(N) * C);
    for (int p = 0; p < N * C; ++p) {
        double s = 0.0;
        for (int i = 0; i < HW; ++i) s += x.data()[static_cast<std::size_t>(p) * HW + i];
        out[static_cast<std::size_t>(p)] = static_cast<float>(s / HW);
    }
    Node* in = x.node();
    return make_result(
        {N, C}, std::move(out), {x},
        [in, N, C, HW](Node& self) {
            float* g = in->grad_buffer();
            for (int p = 0; p < N * C; ++p) {
                const float v = self.grad[static_cast<std::size_t>(p)] / static_cast<float>(HW);
                for (int i = 0; i < HW; ++i) g[static_cast<std::size_t>(p) * HW + i] += v;
            }
        },
        "global_avg_pool");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 2, "linear");
    require_rank(w, 2, "linear weight");
    const int N = x.dim(0), F = x.dim(1), O = w.dim(0);
    if (w.dim(1) != F) throw ValidationError("linear: weight " + to_string(w.shape()) + " vs input " + to_string(x.shape()));
    std::vector<float> out(static_cast<std::size_t>(N) * O);
    MapR o(out.data(), N, O);
    o.noalias() = CMapR(x.data(), N, F) * CMapR(w.data(), O, F).transpose();
    if (b.defined())
        for (int n = 0; n < N; ++n)
            for (int j = 0; j < O; ++j) o(n, j) += b.data()[j];
    Node* nx = x.node();
    Node* nw = w.node();
    Node* nb = b.defined() ? b.node() : nullptr;
    std::vector<Tensor> parents{x, w};
    if (b.defined()) parents.push_back(b);
    return make_result(
        {N, O}, std::move(out), parents,
        [=](Node& self) {
            const CMapR g(self.grad.data(), N, O);
            if (wants(nx)) MapR(nx->grad_buffer(), N, F).noalias() += g * CMapR(nw->value.data(), O, F);
            if (wants(nw)) MapR(nw->grad_buffer(), O, F).noalias() += g.transpose() * CMapR(nx->value.data(), N, F);
            if (wants(nb)) {
                float* gb = nb->grad_buffer();
                for (int i = 0; i < N; ++i)
                    for (int j = 0; j < O; ++j) gb[j] += g(i, j);
            }
        },
        "linear");
}

Tensor channel_unit_normalize(const Tensor& x, float eps) {
    require_rank(x, 4, "channel_unit_normalize");
    const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    auto norms = std::make_shared<std::vector<float>>(static_cast<std::size_t>(N) * HW);
    std::vector<float> out(x.numel());
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < HW; ++i) {
            double s = 0.0;
            for (int c = 0; c < C; ++c) {
                const double v = x.data()[(static_cast<std::size_t>(n) * C + c) * HW + i];
                s += v * v;
            }
            const float r = static_cast<float>(std::sqrt(s));
            (*norms)[static_cast<std::size_t>(n) * HW + i] = r;
            for (int c = 0; c < C; ++c) {
                const std::size_t k = (static_cast<std::size_t>(n) * C + c) * HW + i;
                out[k] = x.data()[k] / (r + eps);
            }
        }
    Node* in = x.node();
    return make_result(
        x.shape(), std::move(out), {x},
        [in, norms, N, C, HW, eps](Node& self) {
            float* g = in->grad_buffer();
            for (int n = 0; n < N; ++n)
                for (int i = 0; i < HW; ++i) {
                    const double r = (*norms)[static_cast<std::size_t>(n) * HW + i];
                    double xg = 0.0;
                    for (int c = 0; c < C; ++c) {
                        const std::size_t k = (static_cast<std::size_t>(n) * C + c) * HW + i;
                        xg += static_cast<double>(in->value[k]) * self.grad[k];
                    }
                    const double a = 1.0 / (r + eps);
                    const double b = r > 0.0 ? xg / (r * (r + eps) * (r + eps)) : 0.0;
                    for (int c = 0; c < C; ++c) {
                        const std::size_t k = (static_cast<std::size_t>(n) * C + c) * HW + i;
                        g[k] += static_cast<float>(self.grad[k] * a - in->value[k] * b);
                    }
                }
        },
        "channel_unit_normalize");
}

// Reductions and losses ----------------------------------------------------

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (float v : x.values()) s += v;
    Node* in = x.node();
    return make_result(
        {}, {static_cast<float>(s)}, {x},
        [in](Node& self) {
            float* g = in->grad_buffer();
            const float v = self.grad[0];
            for (std::size_t i = 0; i < in->value.size(); ++i) g[i] += v;
        },
        "sum");
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw ValidationError("mean: empty tensor");
    double s = 0.0;
    for (float v : x.values()) s += v;
    const double n = static_cast<double>(x.numel());
    Node* in = x.node();
    return make_result(
        {}, {static_cast<float>(s / n)}, {x},
        [in, n](Node& self) {
            float* g = in->grad_buffer();
            const float v = static_cast<float>(self.grad[0] / n);
            for (std::size_t i = 0; i < in->value.size(); ++i) g[i] += v;
        },
        "mean");
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "l1_loss");
    if (a.numel() == 0) throw ValidationError("l1_loss: empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
    const double n = static_cast<double>(a.numel());
    Node* na = a.node();
    Node* nb = b.node();
    return make_result(
        {}, {static_cast<float>(s / n)}, {a, b},
        [na, nb, n](Node& self) {
            const float v = static_cast<float>(self.grad[0] / n);
            float* ga = wants(na) ? na->grad_buffer() : nullptr;
            float* gb = wants(nb) ? nb->grad_buffer() : nullptr;
            for (std::size_t i = 0; i < na->value.size(); ++i) {
                const float d = na->value[i] - nb->value[i];
                const float sg = d > 0.0f ? v : (d < 0.0f ? -v : 0.0f);
                if (ga) ga[i] += sg;
                if (gb) gb[i] -= sg;
            }
        },
        "l1_loss");
}

Tensor bce_with_logits(const Tensor& logits, bool target_real) {
    if (logits.numel() == 0) throw ValidationError("bce_with_logits: empty tensor");
    // real: softplus(-x); fake: softplus(x)
    const double sign = target_real ? -1.0 : 1.0;
    double s = 0.0;
    for (float v : logits.values()) {
        const double z = sign * v;
        s += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    }
    const double n = static_cast<double>(logits.numel());
    Node* in = logits.node();
    return make_result(
        {}, {static_cast<float>(s / n)}, {logits},
        [in, sign, n](Node& self) {
            float* g = in->grad_buffer();
            const double scale_v = self.grad[0] / n;
            for (std::size_t i = 0; i < in->value.size(); ++i) {
                const double z = sign * in->value[i];
                const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
                g[i] += static_cast<float>(scale_v * sign * sig);
            }
        },
        "bce_with_logits");
}

}  // namespace vts::nn
