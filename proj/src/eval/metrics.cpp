#include "vts/eval/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "vts/core/error.hpp"
#include "vts/data/preprocess.hpp"
#include "vts/model/encoding.hpp"
#include "vts/nn/ops.hpp"

namespace vts::eval {

namespace {

Tensor lift(const Tensor& t) {
    if (t.rank() == 4 && t.dim(1) == 2)
        return nn::concat({t, Tensor::zeros({t.dim(0), 1, t.dim(2), t.dim(3)})}, 1);
    return t;
}

struct Gaussian {
    std::vector<double> mu;
    std::vector<double> cov;
    int dim = 0;
};

Gaussian fit(const Tensor& features) {
    const int c = features.dim(1), hw = features.dim(2) * features.dim(3);
    if (hw < 2) throw ValidationError("sifid: feature map too small to fit a covariance");
    Eigen::MatrixXd x(hw, c);
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < hw; ++i) x(i, ch) = features.data()[static_cast<std::size_t>(ch) * hw + i];
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::MatrixXd centred = x.rowwise() - mu;
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(hw - 1);
    Gaussian g;
    g.dim = c;
    g.mu.assign(mu.data(), mu.data() + c);
    g.cov.assign(cov.data(), cov.data() + static_cast<std::size_t>(c) * c);
    return g;
}

}  // namespace

double lpips_distance(const Tensor& a, const Tensor& b, const model::FeatureBackbone& backbone) {
    nn::NoGradGuard ng;
    return model::perceptual_distance(backbone, lift(a), lift(b)).item();
}

double lpips_distance(const Image& a, const Image& b, const model::FeatureBackbone& backbone) {
    return lpips_distance(model::image_tensor(a), model::image_tensor(b), backbone);
}

double frechet_distance(const std::vector<double>& mu1, const std::vector<double>& cov1,
                        const std::vector<double>& mu2, const std::vector<double>& cov2, int dim) {
    using Eigen::MatrixXd;
    const Eigen::Map<const MatrixXd> c1(cov1.data(), dim, dim), c2(cov2.data(), dim, dim);
    MatrixXd s1 = 0.5 * (c1 + c1.transpose()), s2 = 0.5 * (c2 + c2.transpose());
    auto positive_definite = [](const MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff() > 0.0;
    };
    if (!positive_definite(s1) || !positive_definite(s2)) {
        s1.diagonal().array() += kSifidJitter;
        s2.diagonal().array() += kSifidJitter;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> e1(s1);
    const Eigen::VectorXd l1 = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const MatrixXd root1 = e1.eigenvectors() * l1.asDiagonal() * e1.eigenvectors().transpose();
    const MatrixXd inner = root1 * s2 * root1;
    Eigen::SelfAdjointEigenSolver<MatrixXd> e2(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_root = e2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    double mean_term = 0.0;
    for (int i = 0; i < dim; ++i) mean_term += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
    const double d = mean_term + s1.trace() + s2.trace() - 2.0 * tr_root;
    return std::max(0.0, d);
}

double sifid(const Tensor& a, const Tensor& b, const model::FeatureBackbone& backbone) {
    for (const Tensor* t : {&a, &b})
        if (t->rank() != 4 || t->dim(0) != 1 || t->dim(2) < kSifidMinSide || t->dim(3) < kSifidMinSide)
            throw ValidationError("sifid: expected a single image of at least 8x8, got " + nn::to_string(t->shape()));
    nn::NoGradGuard ng;
    const Gaussian ga = fit(backbone.features(lift(a)).front());
    const Gaussian gb = fit(backbone.features(lift(b)).front());
    return frechet_distance(ga.mu, ga.cov, gb.mu, gb.cov, ga.dim);
}

double sifid(const Image& a, const Image& b, const model::FeatureBackbone& backbone) {
    return sifid(model::image_tensor(a), model::image_tensor(b), backbone);
}

nlohmann::json DenseError::to_json() const {
    return {{"l1_x", l1_x}, {"l1_y", l1_y}, {"l1", l1}, {"rmse_x", rmse_x}, {"rmse_y", rmse_y}, {"rmse", rmse},
            {"pixels", pixels}};
}

DenseError dense_tactile_error(const geometry::GradientField& pred, const geometry::GradientField& gt, const Mask& mask) {
    if (!pred.gx.same_shape(gt.gx) || !pred.gy.same_shape(gt.gy) || !pred.gx.same_shape(mask))
        throw ValidationError("dense tactile error: prediction, truth and mask sizes differ");
    DenseError e;
    double ax = 0, ay = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask.data()[i]) continue;
        const double dx = pred.gx.data()[i] - gt.gx.data()[i], dy = pred.gy.data()[i] - gt.gy.data()[i];
        ax += std::abs(dx), ay += std::abs(dy), sx += dx * dx, sy += dy * dy;
        ++e.pixels;
    }
    if (e.pixels == 0) throw ValidationError("dense tactile error: empty mask");
    const double n = static_cast<double>(e.pixels);
    e.l1_x = ax / n, e.l1_y = ay / n, e.l1 = (ax + ay) / (2 * n);
    e.rmse_x = std::sqrt(sx / n), e.rmse_y = std::sqrt(sy / n), e.rmse = std::sqrt((sx + sy) / (2 * n));
    return e;
}

nlohmann::json MetricReport::to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"object_id", object_id},
            {"visual_lpips", opt(visual_lpips)},
            {"tactile_lpips", opt(tactile_lpips)},
            {"visual_sifid", opt(visual_sifid)},
            {"tactile_sifid", opt(tactile_sifid)},
            {"dense_tactile", dense_tactile ? dense_tactile->to_json() : nlohmann::json(nullptr)}};
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
    MetricReport out;
    out.object_id = "aggregate";
    auto mean_of = [&](auto field) -> std::optional<double> {
        double s = 0;
        int n = 0;
        for (const auto& r : reports)
            if (const auto& v = r.*field) s += *v, ++n;
        return n ? std::optional<double>(s / n) : std::nullopt;
    };
    out.visual_lpips = mean_of(&MetricReport::visual_lpips);
    out.tactile_lpips = mean_of(&MetricReport::tactile_lpips);
    out.visual_sifid = mean_of(&MetricReport::visual_sifid);
    out.tactile_sifid = mean_of(&MetricReport::tactile_sifid);
    std::vector<DenseError> dense;
    for (const auto& r : reports)
        if (r.dense_tactile) dense.push_back(*r.dense_tactile);
    if (!dense.empty()) {
        DenseError d;
        for (const auto& e : dense) {
            d.l1_x += e.l1_x / dense.size(), d.l1_y += e.l1_y / dense.size(), d.l1 += e.l1 / dense.size();
            d.rmse_x += e.rmse_x / dense.size(), d.rmse_y += e.rmse_y / dense.size(), d.rmse += e.rmse / dense.size();
            d.pixels += e.pixels;
        }
        out.dense_tactile = d;
    }
    return out;
}

Image patch_mosaic(const std::vector<geometry::GradientField>& patches) {
    if (patches.empty()) throw ValidationError("patch mosaic: no patches");
    const int n = static_cast<int>(patches.size());
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int rows = (n + cols - 1) / cols;
    const int s = patches.front().gx.rows();
    Image out(3, rows * s, cols * s, 0.5);
    for (int k = 0; k < n; ++k) {
        const Image shaded = geometry::shade_normal_map(patches[static_cast<std::size_t>(k)]);
        const int oy = (k / cols) * s, ox = (k % cols) * s;
        for (int c = 0; c < 3; ++c)
            for (int r = 0; r < s; ++r)
                for (int x = 0; x < s; ++x) out(c, oy + r, ox + x) = shaded(c, r, x);
    }
    return out;
}

namespace {

geometry::GradientField crop_field(const geometry::GradientField& g, const BBox& b) {
    return geometry::GradientField(crop(g.gx, b), crop(g.gy, b));
}

geometry::GradientField scaled(const geometry::GradientField& g, double s) {
    geometry::GradientField out = g;
    for (double& v : out.gx) v *= s;
    for (double& v : out.gy) v *= s;
    return out;
}

// evenly spaced picks from the qualifying windows of a mask
std::vector<BBox> spread_windows(const Mask& mask, std::size_t count) {
    const auto w = data::qualifying_windows(mask);
    std::vector<BBox> out;
    if (w.empty()) return out;
    count = std::min(count, w.size());
    for (std::size_t i = 0; i < count; ++i) out.push_back(w[i * w.size() / count]);
    return out;
}

}  // namespace

MetricReport run_protocol(const Synthesizer& synth, const ProtocolInputs& in, const model::FeatureBackbone& backbone) {
    if (!in.scene) throw ValidationError("protocol: no scene");
    const auto& scene = *in.scene;
    MetricReport rep;
    rep.object_id = scene.object_id;

    const auto seen = synth(scene.sketch, scene.object_mask);
    rep.visual_lpips = lpips_distance(seen.visual, scene.visual, backbone);

    const auto& held = in.split.test.empty() ? in.split.val : in.split.test;
    const double inv = 1.0 / scene.gradient_max;
    if (!held.empty()) {
        double s = 0;
        int n = 0;
        for (int id : held)
            for (const auto& p : scene.patches) {
                if (p.id != id) continue;
                const auto pred = crop_field(seen.tactile, p.bbox);
                s += lpips_distance(model::gradient_tensor(pred, scene.gradient_max),
                                    model::gradient_tensor(p.grad, scene.gradient_max), backbone);
                ++n;
            }
        if (n > 0) rep.tactile_lpips = s / n;
    }

    if (!in.unseen_sketches.empty()) {
        std::vector<geometry::GradientField> train_patches;
        for (int id : in.split.train)
            for (const auto& p : scene.patches)
                if (p.id == id) train_patches.push_back(scaled(p.grad, inv));
        const Image train_mosaic = train_patches.empty() ? Image() : patch_mosaic(train_patches);
        double vs = 0, ts = 0;
        int vn = 0, tn = 0;
        for (const auto& sketch : in.unseen_sketches) {
            const Mask mask = data::derive_object_mask(sketch);
            const auto out = synth(sketch, mask);
            vs += sifid(out.visual, scene.visual, backbone);
            ++vn;
            if (train_patches.empty()) continue;
            std::vector<geometry::GradientField> crops;
            for (const auto& b : spread_windows(mask, train_patches.size())) crops.push_back(scaled(crop_field(out.tactile, b), inv));
            if (crops.empty()) continue;
            ts += sifid(patch_mosaic(crops), train_mosaic, backbone);
            ++tn;
        }
        rep.visual_sifid = vs / vn;
        if (tn > 0) rep.tactile_sifid = ts / tn;
    }

    if (in.dense_truth) {
        const Mask& m = in.dense_mask ? *in.dense_mask : scene.object_mask;
        rep.dense_tactile = dense_tactile_error(seen.tactile, *in.dense_truth, m);
    }
    return rep;
}

}  // namespace vts::eval
