#include "vts/data/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"
#include "vts/data/preprocess.hpp"

namespace vts::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string patch_label(std::size_t index, int id) {
    return "patches[" + std::to_string(index) + "] (id " + std::to_string(id) + ")";
}

std::string size_str(int rows, int cols) { return std::to_string(rows) + "x" + std::to_string(cols); }

template <typename T>
T require(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError(where + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(where + ": bad value for '" + key + "': " + e.what());
    }
}

fs::path resolve(const fs::path& root, const std::string& rel, const std::string& field) {
    const fs::path p = root / rel;
    if (!fs::exists(p)) throw ValidationError(field + ": missing file " + p.string());
    return p;
}

void check_size(int rows, int cols, int want_rows, int want_cols, const std::string& field) {
    if (rows != want_rows || cols != want_cols)
        throw ValidationError(field + ": size " + size_str(rows, cols) + " differs from image_size " +
                              size_str(want_rows, want_cols));
}

}  // namespace

void validate(const TactilePatch& patch, int rows, int cols) {
    const std::string who = "patch id " + std::to_string(patch.id);
    if (patch.bbox.w != kPatchSize || patch.bbox.h != kPatchSize)
        throw ValidationError(who + ": bbox must be 32x32");
    if (!patch.bbox.inside(rows, cols)) throw ValidationError(who + ": bbox out of image bounds");
    if (patch.grad.rows() != kPatchSize || patch.grad.cols() != kPatchSize || !patch.grad.gx.same_shape(patch.grad.gy))
        throw ValidationError(who + ": gradient raster must be 32x32");
    if (!geometry::all_finite(patch.grad)) throw ValidationError(who + ": non-finite gradient");
    if (patch.contact_mask.rows() != kPatchSize || patch.contact_mask.cols() != kPatchSize)
        throw ValidationError(who + ": contact mask must be 32x32");
    if (count_nonzero(patch.contact_mask) == 0) throw ValidationError(who + ": contact mask is empty");
}

void validate(const SceneRecord& scene) {
    const int rows = scene.visual.rows();
    const int cols = scene.visual.cols();
    if (scene.visual.channels() != 3) throw ValidationError("visual: expected 3 channels");
    if (rows == 0 || cols == 0) throw ValidationError("visual: empty image");
    check_size(scene.sketch.rows(), scene.sketch.cols(), rows, cols, "sketch");
    check_size(scene.object_mask.rows(), scene.object_mask.cols(), rows, cols, "object_mask");
    if (!(scene.gradient_max > 0.0) || !std::isfinite(scene.gradient_max))
        throw ValidationError("gradient_max: must be positive and finite");
    std::set<int> ids;
    for (std::size_t i = 0; i < scene.patches.size(); ++i) {
        const auto& p = scene.patches[i];
        try {
            validate(p, rows, cols);
        } catch (const ValidationError& e) {
            throw ValidationError(patch_label(i, p.id) + ": " + e.what());
        }
        if (!ids.insert(p.id).second) throw ValidationError(patch_label(i, p.id) + ": duplicate id");
    }
}

SceneRecord load_manifest(const fs::path& path) {
    const fs::path manifest = fs::is_directory(path) ? path / "manifest.json" : path;
    if (!fs::exists(manifest)) throw ValidationError("manifest: missing file " + manifest.string());
    const fs::path root = manifest.parent_path();

    json j;
    {
        std::ifstream in(manifest);
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError("manifest: malformed JSON: " + std::string(e.what()));
        }
    }

    SceneRecord scene;
    scene.object_id = require<std::string>(j, "object_id", "manifest");
    const auto size = require<std::vector<int>>(j, "image_size", "manifest");
    if (size.size() != 2 || size[0] <= 0 || size[1] <= 0) throw ValidationError("image_size: expected [H, W]");
    const int rows = size[0];
    const int cols = size[1];
    scene.gradient_max = require<double>(j, "gradient_max", "manifest");
    scene.scale_m_per_px = j.value("scale_m_per_px", 3.0e-4);

    Image visual = png::read_image(resolve(root, require<std::string>(j, "visual", "manifest"), "visual"));
    check_size(visual.rows(), visual.cols(), rows, cols, "visual");
    if (visual.channels() == 1) visual = Image({visual.plane(0), visual.plane(0), visual.plane(0)});
    scene.visual = std::move(visual);

    const Image sketch = png::read_image(resolve(root, require<std::string>(j, "sketch", "manifest"), "sketch"));
    check_size(sketch.rows(), sketch.cols(), rows, cols, "sketch");
    scene.sketch = sketch_plane(sketch);

    scene.object_mask = png::read_mask(resolve(root, require<std::string>(j, "object_mask", "manifest"), "object_mask"));
    check_size(scene.object_mask.rows(), scene.object_mask.cols(), rows, cols, "object_mask");

    const json patches = j.value("patches", json::array());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const json& pj = patches[i];
        const int id = pj.value("id", static_cast<int>(i));
        const std::string where = patch_label(i, id);
        TactilePatch p;
        p.id = id;
        const auto box = require<std::vector<int>>(pj, "bbox_xywh", where);
        if (box.size() != 4) throw ValidationError(where + ": bbox_xywh must have 4 entries");
        p.bbox = {box[0], box[1], box[2], box[3]};
        if (!p.bbox.inside(rows, cols)) throw ValidationError(where + ": bbox_xywh out of image bounds");
        const double gmin = require<double>(pj, "gmin", where);
        const double gmax = require<double>(pj, "gmax", where);
        try {
            p.grad = decode_gradient_files(resolve(root, require<std::string>(pj, "gx_file", where), where + ".gx_file"),
                                           resolve(root, require<std::string>(pj, "gy_file", where), where + ".gy_file"),
                                           gmin, gmax);
            p.contact_mask =
                png::read_mask(resolve(root, require<std::string>(pj, "mask_file", where), where + ".mask_file"));
        } catch (const IoError& e) {
            throw ValidationError(where + ": " + e.what());
        }
        scene.patches.push_back(std::move(p));
    }
    validate(scene);
    return scene;
}

void save_manifest(const SceneRecord& scene, const fs::path& dir) {
    validate(scene);
    fs::create_directories(dir / "patches");
    png::write_image8(dir / "visual.png", scene.visual);
    png::write_image8(dir / "sketch.png", Image({scene.sketch}));
    png::write_mask(dir / "object_mask.png", scene.object_mask);

    json patches = json::array();
    for (const auto& p : scene.patches) {
        double gmin = std::min(*std::min_element(p.grad.gx.begin(), p.grad.gx.end()),
                               *std::min_element(p.grad.gy.begin(), p.grad.gy.end()));
        double gmax = std::max(*std::max_element(p.grad.gx.begin(), p.grad.gx.end()),
                               *std::max_element(p.grad.gy.begin(), p.grad.gy.end()));
        if (gmax <= gmin) gmax = gmin + 1e-6;
        const std::string stem = "patches/" + std::to_string(p.id);
        png::write_gray16(dir / (stem + "_gx.png"), encode_gradient_raster(p.grad.gx, gmin, gmax));
        png::write_gray16(dir / (stem + "_gy.png"), encode_gradient_raster(p.grad.gy, gmin, gmax));
        png::write_mask(dir / (stem + "_mask.png"), p.contact_mask);
        patches.push_back({{"id", p.id},
                           {"bbox_xywh", {p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h}},
                           {"gx_file", stem + "_gx.png"},
                           {"gy_file", stem + "_gy.png"},
                           {"mask_file", stem + "_mask.png"},
                           {"gmin", gmin},
                           {"gmax", gmax}});
    }
    const json j = {{"object_id", scene.object_id},
                    {"visual", "visual.png"},
                    {"sketch", "sketch.png"},
                    {"object_mask", "object_mask.png"},
                    {"image_size", {scene.rows(), scene.cols()}},
                    {"gradient_max", scene.gradient_max},
                    {"scale_m_per_px", scene.scale_m_per_px},
                    {"patches", patches}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << j.dump(2) << "\n";
}

Plane sketch_plane(const Image& img) {
    if (img.empty()) throw ValidationError("sketch: empty image");
    if (img.channels() == 1) return img.plane(0);
    if (img.channels() != 3) throw ValidationError("sketch: expected 1 or 3 channels");
    Plane p(img.rows(), img.cols());
    for (int r = 0; r < p.rows(); ++r)
        for (int c = 0; c < p.cols(); ++c) p(r, c) = (img(0, r, c) + img(1, r, c) + img(2, r, c)) / 3.0;
    return p;
}

Plane read_sketch(const std::filesystem::path& path) { return sketch_plane(png::read_image(path)); }

}  // namespace vts::data
