#include "vts/synth/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"
#include "vts/core/random.hpp"
#include "vts/data/preprocess.hpp"

namespace vts::synth {

using nlohmann::json;
using std::numbers::pi;

namespace {

const std::array<double, 3> kLight = [] {
    const double n = std::sqrt(0.3 * 0.3 + 0.3 * 0.3 + 1.0);
    return std::array<double, 3>{0.3 / n, 0.3 / n, -1.0 / n};
}();

// Smooth indicator of sdf < 0 with a blend band of the given width.
HeightSample soft_inside(const HeightSample& sdf, double width) {
    const double t_raw = -sdf.h / width + 0.5;
    if (t_raw <= 0.0) return {0.0, 0.0, 0.0};
    if (t_raw >= 1.0) return {1.0, 0.0, 0.0};
    const double s = t_raw * t_raw * (3.0 - 2.0 * t_raw);
    const double ds = 6.0 * t_raw * (1.0 - t_raw) / width;
    return {s, -ds * sdf.dx, -ds * sdf.dy};
}

Grid<int> render_labels(const SceneSpec& spec) {
    Grid<int> labels(spec.rows, spec.cols, 0);
    for (int r = 0; r < spec.rows; ++r)
        for (int c = 0; c < spec.cols; ++c) {
            if (spec.shape.sdf(c, r).h >= 0.0) continue;
            int label = 1;
            for (std::size_t i = 0; i < spec.regions.size(); ++i)
                if (spec.regions[i].rect.sdf(c, r).h < 0.0) label = static_cast<int>(i) + 2;
            labels(r, c) = label;
        }
    return labels;
}

Plane render_sketch(const Grid<int>& labels) {
    Plane sketch(labels.rows(), labels.cols());
    for (int r = 0; r < labels.rows(); ++r)
        for (int c = 0; c < labels.cols(); ++c) {
            const int l = labels(r, c);
            if (l == 0) continue;
            bool edge = r == 0 || c == 0 || r + 1 == labels.rows() || c + 1 == labels.cols();
            if (!edge)
                edge = labels(r - 1, c) != l || labels(r + 1, c) != l || labels(r, c - 1) != l || labels(r, c + 1) != l;
            sketch(r, c) = edge ? 1.0 : 0.0;
        }
    return sketch;
}

void validate_rect(const RoundedRect& rr, const std::string& what) {
    if (!(rr.w > 0 && rr.h > 0)) throw ValidationError(what + ": width and height must be positive");
    if (rr.radius < 0 || 2 * rr.radius > std::min(rr.w, rr.h))
        throw ValidationError(what + ": corner radius must be in [0, min(w, h) / 2]");
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

TextureParams parse_texture(const json& j) {
    TextureParams t;
    t.kind = parse_texture_kind(j.value("kind", std::string("sinusoid-weave")));
    t.amplitude = j.value("amplitude", t.amplitude);
    t.frequency = j.value("frequency", t.frequency);
    t.angle_deg = j.value("angle_deg", t.angle_deg);
    t.cross = j.value("cross", t.cross);
    t.sharpness = j.value("sharpness", t.sharpness);
    t.bumps = j.value("bumps", t.bumps);
    t.sigma = j.value("sigma", t.sigma);
    t.seed = j.value("seed", t.seed);
    return t;
}

json texture_json(const TextureParams& t) {
    return {{"kind", to_string(t.kind)}, {"amplitude", t.amplitude}, {"frequency", t.frequency},
            {"angle_deg", t.angle_deg},  {"cross", t.cross},         {"sharpness", t.sharpness},
            {"bumps", t.bumps},          {"sigma", t.sigma},         {"seed", t.seed}};
}

RoundedRect parse_rect(const json& j) {
    const auto r = j.at("rect").get<std::vector<double>>();
    if (r.size() != 4) throw ValidationError("rect must be [x, y, w, h]");
    return {r[0], r[1], r[2], r[3], j.value("corner_radius", 0.0)};
}

json rect_json(const RoundedRect& r) { return {{"rect", {r.x, r.y, r.w, r.h}}, {"corner_radius", r.radius}}; }

}  // namespace

TextureKind parse_texture_kind(const std::string& name) {
    if (name == "sinusoid-weave") return TextureKind::sinusoid_weave;
    if (name == "ridge") return TextureKind::ridge;
    if (name == "bump-noise") return TextureKind::bump_noise;
    throw ValidationError("unknown texture kind: " + name);
}

std::string to_string(TextureKind kind) {
    switch (kind) {
        case TextureKind::sinusoid_weave: return "sinusoid-weave";
        case TextureKind::ridge: return "ridge";
        case TextureKind::bump_noise: return "bump-noise";
    }
    return "unknown";
}

Texture::Texture(TextureParams params, BBox region) : params_(params) {
    if (params_.kind != TextureKind::bump_noise) return;
    Rng rng(params_.seed);
    for (int i = 0; i < params_.bumps; ++i) {
        Bump b;
        b.cx = rng.uniform(region.x, region.x + region.w);
        b.cy = rng.uniform(region.y, region.y + region.h);
        b.a = params_.amplitude * rng.uniform(0.5, 1.0);
        bumps_.push_back(b);
    }
}

double Texture::gradient_bound() const {
    const auto& p = params_;
    switch (p.kind) {
        case TextureKind::sinusoid_weave:
            return 2.0 * pi * p.frequency * p.amplitude * std::sqrt(1.0 + p.cross * p.cross);
        case TextureKind::ridge:
            return p.amplitude * p.sharpness * pi * p.frequency;
        case TextureKind::bump_noise:
            return p.bumps * p.amplitude * std::exp(-0.5) / p.sigma;
    }
    return 0.0;
}

HeightSample Texture::eval(double x, double y) const {
    const auto& p = params_;
    switch (p.kind) {
        case TextureKind::sinusoid_weave: {
            const double th = p.angle_deg * pi / 180.0;
            const double ct = std::cos(th), st = std::sin(th);
            const double u = x * ct + y * st;
            const double v = -x * st + y * ct;
            const double w = 2.0 * pi * p.frequency;
            const double h = p.amplitude * (std::sin(w * u) + p.cross * std::sin(w * v));
            const double du = p.amplitude * w * std::cos(w * u);
            const double dv = p.amplitude * p.cross * w * std::cos(w * v);
            return {h, du * ct - dv * st, du * st + dv * ct};
        }
        case TextureKind::ridge: {
            const double th = p.angle_deg * pi / 180.0;
            const double ct = std::cos(th), st = std::sin(th);
            const double u = x * ct + y * st;
            const double w = 2.0 * pi * p.frequency;
            const double base = 0.5 * (1.0 + std::cos(w * u));
            const double h = p.amplitude * std::pow(base, p.sharpness);
            const double dbase = -0.5 * w * std::sin(w * u);
            const double du = p.amplitude * p.sharpness * std::pow(base, p.sharpness - 1.0) * dbase;
            return {h, du * ct, du * st};
        }
        case TextureKind::bump_noise: {
            HeightSample s;
            const double inv = 1.0 / (2.0 * p.sigma * p.sigma);
            for (const auto& b : bumps_) {
                const double dx = x - b.cx, dy = y - b.cy;
                const double e = b.a * std::exp(-(dx * dx + dy * dy) * inv);
                s.h += e;
                s.dx += -2.0 * dx * inv * e;
                s.dy += -2.0 * dy * inv * e;
            }
            return s;
        }
    }
    return {};
}

Texture make_texture(const TextureParams& params, const BBox& region) {
    if (!(params.amplitude > 0.0)) throw ValidationError("texture: amplitude must be > 0");
    if (params.kind != TextureKind::bump_noise && !(params.frequency > 0.0))
        throw ValidationError("texture: frequency must be > 0");
    if (params.kind == TextureKind::ridge && params.sharpness < 1.0)
        throw ValidationError("texture: ridge sharpness must be >= 1");
    if (params.kind == TextureKind::bump_noise && (params.bumps < 1 || !(params.sigma > 0.0)))
        throw ValidationError("texture: bump-noise needs bumps >= 1 and sigma > 0");
    Texture t(params, region);
    if (t.gradient_bound() > kMaxGradient)
        throw ValidationError("texture: parameters allow |g| > " + std::to_string(kMaxGradient));
    return t;
}

HeightSample RoundedRect::sdf(double px, double py) const {
    const double cx = x + 0.5 * w;
    const double cy = y + 0.5 * h;
    const double dx = px - cx;
    const double dy = py - cy;
    const double qx = std::abs(dx) - (0.5 * w - radius);
    const double qy = std::abs(dy) - (0.5 * h - radius);
    const double sx = dx < 0 ? -1.0 : 1.0;
    const double sy = dy < 0 ? -1.0 : 1.0;
    if (qx > 0.0 || qy > 0.0) {
        const double mx = std::max(qx, 0.0);
        const double my = std::max(qy, 0.0);
        const double len = std::hypot(mx, my);
        return {len - radius, sx * mx / len, sy * my / len};
    }
    if (qx > qy) return {qx - radius, sx, 0.0};
    return {qy - radius, 0.0, sy};
}

SceneSpec parse_scene_spec(const json& j) {
    SceneSpec s;
    try {
        s.object_id = j.value("object_id", s.object_id);
        if (j.contains("canvas")) {
            const auto c = j.at("canvas").get<std::vector<int>>();
            if (c.size() != 2) throw ValidationError("canvas must be [H, W]");
            s.rows = c[0];
            s.cols = c[1];
        }
        if (j.contains("shape")) s.shape = parse_rect(j.at("shape"));
        if (j.contains("body")) {
            const json& b = j.at("body");
            if (b.contains("texture")) s.body_texture = parse_texture(b.at("texture"));
            if (b.contains("color")) s.body_color = b.at("color").get<std::array<double, 3>>();
        }
        for (const json& r : j.value("regions", json::array())) {
            RegionSpec region;
            region.name = r.value("name", std::string("region"));
            region.rect = parse_rect(r);
            if (r.contains("texture")) region.texture = parse_texture(r.at("texture"));
            if (r.contains("color")) region.color = r.at("color").get<std::array<double, 3>>();
            s.regions.push_back(region);
        }
        s.edge_softness = j.value("edge_softness", s.edge_softness);
        s.patches = j.value("patches", s.patches);
        s.seed = j.value("seed", s.seed);
        s.scale_m_per_px = j.value("scale_m_per_px", s.scale_m_per_px);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scene spec: ") + e.what());
    }
    return s;
}

json to_json(const SceneSpec& s) {
    json regions = json::array();
    for (const auto& r : s.regions) {
        json rj = rect_json(r.rect);
        rj["name"] = r.name;
        rj["texture"] = texture_json(r.texture);
        rj["color"] = r.color;
        regions.push_back(rj);
    }
    return {{"object_id", s.object_id},
            {"canvas", {s.rows, s.cols}},
            {"shape", rect_json(s.shape)},
            {"body", {{"texture", texture_json(s.body_texture)}, {"color", s.body_color}}},
            {"regions", regions},
            {"edge_softness", s.edge_softness},
            {"patches", s.patches},
            {"seed", s.seed},
            {"scale_m_per_px", s.scale_m_per_px}};
}

SceneSpec default_scene_spec(int size, std::uint64_t seed, int patches) {
    const double k = size / 128.0;
    SceneSpec s;
    s.object_id = "synthetic-garment";
    s.rows = s.cols = size;
    s.shape = {14 * k, 12 * k, 100 * k, 104 * k, 14 * k};
    s.body_texture = {TextureKind::sinusoid_weave, 1.0, 1.0 / 12.0, 30.0, 0.6, 2.0, 0, 0.0, 0};
    s.body_color = {0.22, 0.33, 0.68};
    RegionSpec pocket;
    pocket.name = "pocket";
    pocket.rect = {26 * k, 62 * k, 36 * k, 34 * k, 4 * k};
    pocket.texture = {TextureKind::ridge, 1.0, 1.0 / 8.0, 90.0, 0.0, 2.0, 0, 0.0, 0};
    pocket.color = {0.72, 0.52, 0.28};
    s.regions.push_back(pocket);
    s.patches = patches;
    s.seed = seed;
    return s;
}

GeneratedScene generate_scene(const SceneSpec& spec) {
    if (spec.rows <= 0 || spec.cols <= 0) throw ValidationError("scene spec: canvas must be positive");
    if (!(spec.edge_softness > 0.0)) throw ValidationError("scene spec: edge_softness must be > 0");
    validate_rect(spec.shape, "shape");
    if (spec.shape.x < 0 || spec.shape.y < 0 || spec.shape.x + spec.shape.w > spec.cols ||
        spec.shape.y + spec.shape.h > spec.rows)
        throw ValidationError("shape: must lie inside the canvas");
    const double band = spec.edge_softness;
    for (std::size_t i = 0; i < spec.regions.size(); ++i) {
        const auto& r = spec.regions[i].rect;
        validate_rect(r, "regions[" + std::to_string(i) + "]");
        const auto& s = spec.shape;
        if (r.x < s.x + band || r.y < s.y + band || r.x + r.w > s.x + s.w - band || r.y + r.h > s.y + s.h - band)
            throw ValidationError("regions[" + std::to_string(i) + "]: region must be nested inside the shape");
        for (std::size_t j = 0; j < i; ++j) {
            const auto& o = spec.regions[j].rect;
            const bool apart = r.x >= o.x + o.w + band || o.x >= r.x + r.w + band || r.y >= o.y + o.h + band ||
                               o.y >= r.y + r.h + band;
            if (!apart) throw ValidationError("regions overlap: " + std::to_string(j) + " and " + std::to_string(i));
        }
    }

    const BBox canvas{0, 0, spec.cols, spec.rows};
    const Texture body = make_texture(spec.body_texture, canvas);
    std::vector<Texture> textures;
    for (const auto& r : spec.regions)
        textures.push_back(make_texture(r.texture, BBox{static_cast<int>(r.rect.x), static_cast<int>(r.rect.y),
                                                        static_cast<int>(std::ceil(r.rect.w)),
                                                        static_cast<int>(std::ceil(r.rect.h))}));

    // Composite height h = chi_shape * [(1 - sum chi_r) h_body + sum chi_r h_r].
    auto composite = [&](double x, double y, std::array<double, 3>* color) {
        const HeightSample outer = soft_inside(spec.shape.sdf(x, y), band);
        const HeightSample hb = body.eval(x, y);
        HeightSample inner{hb.h, hb.dx, hb.dy};
        std::array<double, 3> col = spec.body_color;
        for (std::size_t i = 0; i < spec.regions.size(); ++i) {
            const HeightSample chi = soft_inside(spec.regions[i].rect.sdf(x, y), band);
            if (chi.h == 0.0 && chi.dx == 0.0 && chi.dy == 0.0) continue;
            const HeightSample hr = textures[i].eval(x, y);
            inner.h += chi.h * (hr.h - hb.h);
            inner.dx += chi.dx * (hr.h - hb.h) + chi.h * (hr.dx - hb.dx);
            inner.dy += chi.dy * (hr.h - hb.h) + chi.h * (hr.dy - hb.dy);
            for (int k = 0; k < 3; ++k) col[k] += chi.h * (spec.regions[i].color[k] - spec.body_color[k]);
        }
        if (color)
            for (int k = 0; k < 3; ++k) (*color)[k] = outer.h * col[k];
        return HeightSample{outer.h * inner.h, outer.dx * inner.h + outer.h * inner.dx,
                            outer.dy * inner.h + outer.h * inner.dy};
    };

    GeneratedScene out;
    DenseGroundTruth& gt = out.truth;
    gt.grad = geometry::GradientField(spec.rows, spec.cols);
    gt.height = Plane(spec.rows, spec.cols);
    gt.visual = Image(3, spec.rows, spec.cols);
    for (int r = 0; r < spec.rows; ++r)
        for (int c = 0; c < spec.cols; ++c) {
            std::array<double, 3> color{};
            const HeightSample centre = composite(c, r, &color);
            gt.height(r, c) = centre.h;
            gt.grad.gx(r, c) = composite(c + 0.5, r, nullptr).dx;
            gt.grad.gy(r, c) = composite(c, r + 0.5, nullptr).dy;
            const double norm = std::sqrt(centre.dx * centre.dx + centre.dy * centre.dy + 1.0);
            const double shade = std::max(
                0.0, (centre.dx * kLight[0] + centre.dy * kLight[1] - kLight[2]) / norm);
            for (int k = 0; k < 3; ++k) gt.visual(k, r, c) = std::clamp(color[k] * shade, 0.0, 1.0);
        }
    for (std::size_t i = 0; i < gt.grad.gx.size(); ++i)
        if (std::hypot(gt.grad.gx.data()[i], gt.grad.gy.data()[i]) > kMaxGradient)
            throw ValidationError("scene spec: composed texture exceeds the gradient bound");

    gt.labels = render_labels(spec);
    gt.sketch = render_sketch(gt.labels);
    gt.object_mask = Mask(spec.rows, spec.cols);
    for (std::size_t i = 0; i < gt.labels.size(); ++i) gt.object_mask.data()[i] = gt.labels.data()[i] != 0 ? 1 : 0;

    data::SceneRecord& scene = out.scene;
    scene.object_id = spec.object_id;
    scene.visual = gt.visual;
    scene.sketch = gt.sketch;
    scene.object_mask = gt.object_mask;
    scene.scale_m_per_px = spec.scale_m_per_px;

    std::vector<BBox> windows = data::qualifying_windows(gt.object_mask);
    if (windows.empty() && spec.patches > 0) throw ValidationError("scene spec: object too small for 32x32 patches");
    Rng rng(spec.seed);
    rng.shuffle(windows);
    const std::size_t n = std::min<std::size_t>(windows.size(), static_cast<std::size_t>(std::max(spec.patches, 0)));
    double gmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        data::TactilePatch p;
        p.id = static_cast<int>(i);
        p.bbox = windows[i];
        p.grad = geometry::GradientField(crop(gt.grad.gx, p.bbox), crop(gt.grad.gy, p.bbox));
        p.contact_mask = crop(gt.object_mask, p.bbox);
        for (std::size_t k = 0; k < p.grad.gx.size(); ++k)
            gmax = std::max(gmax, std::hypot(p.grad.gx.data()[k], p.grad.gy.data()[k]));
        scene.patches.push_back(std::move(p));
    }
    scene.gradient_max = gmax > 0.0 ? gmax : 1.0;
    data::validate(scene);
    return out;
}

EvalBundle dense_eval_pack(const DenseGroundTruth& gt) {
    EvalBundle b{gt.grad, gt.object_mask, 0};
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a(h, b.grad.gx.data(), b.grad.gx.size() * sizeof(double));
    h = fnv1a(h, b.grad.gy.data(), b.grad.gy.size() * sizeof(double));
    h = fnv1a(h, b.mask.data(), b.mask.size());
    b.checksum = h;
    return b;
}

void save_dense_truth(const DenseGroundTruth& gt, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    double gmin = 0.0, gmax = 0.0;
    for (const Plane* p : {&gt.grad.gx, &gt.grad.gy}) {
        const auto [lo, hi] = std::minmax_element(p->begin(), p->end());
        gmin = std::min(gmin, *lo);
        gmax = std::max(gmax, *hi);
    }
    if (gmax <= gmin) gmax = gmin + 1e-6;
    png::write_gray16(dir / "gx.png", data::encode_gradient_raster(gt.grad.gx, gmin, gmax));
    png::write_gray16(dir / "gy.png", data::encode_gradient_raster(gt.grad.gy, gmin, gmax));
    png::write_mask(dir / "mask.png", gt.object_mask);
    geometry::write_height_png(dir / "height.png", gt.height);
    std::ofstream out(dir / "range.json");
    if (!out) throw IoError("cannot write " + (dir / "range.json").string());
    out << json{{"gmin", gmin}, {"gmax", gmax}}.dump(2) << "\n";
}

EvalBundle load_dense_truth(const std::filesystem::path& dir) {
    std::ifstream in(dir / "range.json");
    if (!in) throw IoError("missing dense ground truth range: " + (dir / "range.json").string());
    const json range = json::parse(in);
    EvalBundle b;
    b.grad = data::decode_gradient_files(dir / "gx.png", dir / "gy.png", range.at("gmin").get<double>(),
                                         range.at("gmax").get<double>());
    b.mask = png::read_mask(dir / "mask.png");
    return b;
}

std::vector<Plane> unseen_sketches(const SceneSpec& spec, int count, std::uint64_t seed) {
    std::vector<Plane> out;
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        SceneSpec v = spec;
        const double sw = rng.uniform(0.8, 1.0);
        const double sh = rng.uniform(0.8, 1.0);
        v.shape.w = spec.shape.w * sw;
        v.shape.h = spec.shape.h * sh;
        v.shape.x = spec.shape.x + rng.uniform(0.0, spec.shape.w - v.shape.w);
        v.shape.y = spec.shape.y + rng.uniform(0.0, spec.shape.h - v.shape.h);
        v.shape.radius = std::min(spec.shape.radius, 0.5 * std::min(v.shape.w, v.shape.h));
        v.regions.clear();
        for (const auto& r : spec.regions) {
            RegionSpec nr = r;
            const double band = spec.edge_softness;
            nr.rect.w = std::min(r.rect.w, v.shape.w - 4 * band);
            nr.rect.h = std::min(r.rect.h, v.shape.h - 4 * band);
            if (nr.rect.w <= 2 || nr.rect.h <= 2) continue;
            nr.rect.radius = std::min(r.rect.radius, 0.5 * std::min(nr.rect.w, nr.rect.h));
            nr.rect.x = rng.uniform(v.shape.x + 2 * band, v.shape.x + v.shape.w - 2 * band - nr.rect.w);
            nr.rect.y = rng.uniform(v.shape.y + 2 * band, v.shape.y + v.shape.h - 2 * band - nr.rect.h);
            v.regions.push_back(nr);
        }
        out.push_back(render_sketch(render_labels(v)));
    }
    return out;
}

}  // namespace vts::synth
