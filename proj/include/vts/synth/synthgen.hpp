#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vts/core/grid.hpp"
#include "vts/data/scene.hpp"
#include "vts/geometry/geometry.hpp"

namespace vts::synth {

enum class TextureKind { sinusoid_weave, ridge, bump_noise };

TextureKind parse_texture_kind(const std::string& name);
std::string to_string(TextureKind kind);

struct TextureParams {
    TextureKind kind = TextureKind::sinusoid_weave;
    double amplitude = 0.3;   // height units: pixels
    double frequency = 0.08;  // cycles per pixel (sinusoid/ridge)
    double angle_deg = 0.0;   // orientation of the primary wave
    double cross = 0.0;       // weight of the perpendicular wave (weave)
    double sharpness = 2.0;   // ridge exponent, >= 1
    int bumps = 12;           // bump-noise count
    double sigma = 4.0;       // bump-noise width in pixels
    std::uint64_t seed = 0;   // bump-noise placement
};

struct HeightSample {
    double h = 0.0;
    double dx = 0.0;
    double dy = 0.0;
};

/// Analytic height function with exact partial derivatives. Coordinates are
/// continuous pixel coordinates: x along columns, y along rows.
class Texture {
public:
    Texture() = default;
    Texture(TextureParams params, BBox region);

    HeightSample eval(double x, double y) const;
    const TextureParams& params() const { return params_; }
    /// Upper bound on |grad h| anywhere.
    double gradient_bound() const;

private:
    struct Bump {
        double cx, cy, a;
    };
    TextureParams params_;
    std::vector<Bump> bumps_;
};

/// Throws ValidationError for amplitude/frequency <= 0 or parameters whose
/// gradient bound exceeds kMaxGradient.
Texture make_texture(const TextureParams& params, const BBox& region);

inline constexpr double kMaxGradient = 2.0;

struct RoundedRect {
    double x = 0, y = 0, w = 0, h = 0;
    double radius = 0;
    /// Signed distance (negative inside) and its gradient.
    HeightSample sdf(double px, double py) const;
};

struct RegionSpec {
    std::string name;
    RoundedRect rect;
    TextureParams texture;
    std::array<double, 3> color{0.5, 0.5, 0.5};
};

struct SceneSpec {
    std::string object_id = "synthetic";
    int rows = 128;
    int cols = 128;
    RoundedRect shape{14, 12, 100, 104, 14};
    TextureParams body_texture;
    std::array<double, 3> body_color{0.25, 0.35, 0.7};
    std::vector<RegionSpec> regions;
    double edge_softness = 6.0;  // width of the smooth blend at region borders
    int patches = 30;
    std::uint64_t seed = 0;
    double scale_m_per_px = 3.0e-4;
};

SceneSpec parse_scene_spec(const nlohmann::json& j);
nlohmann::json to_json(const SceneSpec& spec);
/// A small garment-like default: body weave plus a ridged pocket.
SceneSpec default_scene_spec(int size = 128, std::uint64_t seed = 0, int patches = 30);

struct DenseGroundTruth {
    /// gx sampled at (x + 1/2, y) and gy at (x, y + 1/2), the positions a
    /// forward difference measures.
    geometry::GradientField grad;
    Plane height;  // analytic composed height at pixel centres
    Image visual;
    Plane sketch;
    Mask object_mask;
    Grid<int> labels;  // 0 background, 1 body, 2.. regions
};

struct GeneratedScene {
    data::SceneRecord scene;
    DenseGroundTruth truth;
};

GeneratedScene generate_scene(const SceneSpec& spec);

struct EvalBundle {
    geometry::GradientField grad;
    Mask mask;
    std::uint64_t checksum = 0;
};

/// FNV-1a 64 over the raw bytes of gx, gy and mask, in that order.
EvalBundle dense_eval_pack(const DenseGroundTruth& gt);

/// Writes dense_gt/{gx,gy}.png (16-bit) + range.json, mask.png, height.png.
void save_dense_truth(const DenseGroundTruth& gt, const std::filesystem::path& dir);
EvalBundle load_dense_truth(const std::filesystem::path& dir);

/// Sketch variants of the spec's shape for generalization tests.
std::vector<Plane> unseen_sketches(const SceneSpec& spec, int count, std::uint64_t seed);

}  // namespace vts::synth
