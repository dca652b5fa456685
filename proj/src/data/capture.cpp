#include "vts/data/capture.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"
#include "vts/core/random.hpp"
#include "vts/data/preprocess.hpp"

namespace vts::data {

namespace {

using json = nlohmann::json;

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(where + ": '" + key + "' has the wrong type");
    }
}

}  // namespace

RawCapture load_capture(const std::filesystem::path& path) {
    const auto file = std::filesystem::is_directory(path) ? path / "capture.json" : path;
    const auto root = file.parent_path();
    std::ifstream in(file);
    if (!in) throw IoError("cannot read " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("capture: malformed JSON: " + std::string(e.what()));
    }
    RawCapture c;
    c.object_id = field<std::string>(j, "object_id", "capture");
    c.visual = png::read_image(root / field<std::string>(j, "visual", "capture"));
    if (c.visual.channels() != 3) throw ValidationError("capture: visual must be RGB");
    c.sketch = read_sketch(root / field<std::string>(j, "sketch", "capture"));
    if (c.sketch.rows() != c.visual.rows() || c.sketch.cols() != c.visual.cols())
        throw ValidationError("capture: sketch and visual sizes differ");
    if (j.contains("object_mask")) c.object_mask = png::read_mask(root / field<std::string>(j, "object_mask", "capture"));
    c.scale_m_per_px = j.value("scale_m_per_px", c.scale_m_per_px);
    int k = 0;
    for (const auto& t : j.value("touches", json::array())) {
        const std::string where = "capture touch " + std::to_string(k++);
        RawTouch touch;
        touch.grad = decode_gradient_files(root / field<std::string>(t, "gx_file", where),
                                           root / field<std::string>(t, "gy_file", where), field<double>(t, "gmin", where),
                                           field<double>(t, "gmax", where));
        touch.x = field<int>(t, "x", where);
        touch.y = field<int>(t, "y", where);
        c.touches.push_back(std::move(touch));
    }
    return c;
}

SceneRecord build_scene(const RawCapture& capture, int patches_per_touch, std::uint64_t seed) {
    if (capture.touches.empty()) throw ValidationError("capture: no touches");
    if (patches_per_touch <= 0) throw ValidationError("capture: patches_per_touch must be positive");
    SceneRecord s;
    s.object_id = capture.object_id;
    s.visual = capture.visual;
    s.sketch = capture.sketch;
    s.object_mask = capture.object_mask ? *capture.object_mask : derive_object_mask(capture.sketch);
    s.scale_m_per_px = capture.scale_m_per_px;
    const int rows = s.rows(), cols = s.cols();
    if (s.object_mask.rows() != rows || s.object_mask.cols() != cols)
        throw ValidationError("capture: object mask size differs from the visual");

    double gmax = 0.0;
    for (std::size_t t = 0; t < capture.touches.size(); ++t) {
        const auto& touch = capture.touches[t];
        if (touch.grad.gx.rows() != kRawTactileRows || touch.grad.gx.cols() != kRawTactileCols)
            throw ValidationError("capture touch " + std::to_string(t) + ": expected 240x320 gradients");
        const auto g = downsample_tactile(touch.grad);
        const auto contact = compute_contact_mask(geometry::integrate_height(g));
        for (auto& p : extract_patches(g, contact, patches_per_touch, derive_seed(seed, t))) {
            p.bbox = p.bbox.shifted(touch.x, touch.y);
            if (!p.bbox.inside(rows, cols)) continue;
            int covered = 0;
            for (int r = 0; r < p.bbox.h; ++r)
                for (int c = 0; c < p.bbox.w; ++c) covered += s.object_mask(p.bbox.y + r, p.bbox.x + c) != 0;
            if (covered < min_contact_pixels()) continue;
            p.id = static_cast<int>(s.patches.size());
            for (std::size_t i = 0; i < p.grad.gx.size(); ++i)
                gmax = std::max(gmax, std::hypot(p.grad.gx.data()[i], p.grad.gy.data()[i]));
            s.patches.push_back(std::move(p));
        }
    }
    if (s.patches.empty()) throw ValidationError("capture: no qualifying patches inside the object");
    s.gradient_max = gmax > 0.0 ? gmax : 1.0;
    validate(s);
    return s;
}

}  // namespace vts::data
