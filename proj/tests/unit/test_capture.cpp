#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"
#include "vts/data/capture.hpp"
#include "vts/data/preprocess.hpp"

using namespace vts;
using namespace vts::data;
namespace fs = std::filesystem;

namespace {

constexpr int kRows = 200, kCols = 240;

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("vts_capture_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// paraboloid dome pressed into the gel, analytic gradients
geometry::GradientField dome(double cx, double cy, double radius) {
    geometry::GradientField g(kRawTactileRows, kRawTactileCols);
    for (int r = 0; r < kRawTactileRows; ++r)
        for (int c = 0; c < kRawTactileCols; ++c) {
            const double dx = c - cx, dy = r - cy;
            if (dx * dx + dy * dy >= radius * radius) continue;
            g.gx(r, c) = -2.0 * dx / (radius * radius) * 20.0;
            g.gy(r, c) = -2.0 * dy / (radius * radius) * 20.0;
        }
    return g;
}

struct Fixture {
    fs::path dir;
    nlohmann::json j;
    geometry::GradientField touch0 = dome(160, 120, 110);
    geometry::GradientField touch1 = dome(150, 110, 90);
    const double gmin = -0.5, gmax = 0.5;

    explicit Fixture(const std::string& name) : dir(temp_dir(name)) {
        Image visual(3, kRows, kCols, 0.4);
        Plane sketch(kRows, kCols);
        for (int r = 10; r < 190; ++r)
            for (int c = 10; c < 230; ++c)
                if (r == 10 || r == 189 || c == 10 || c == 229) sketch(r, c) = 1.0;
        png::write_image8(dir / "visual.png", visual);
        png::write_image8(dir / "sketch.png", Image({sketch}));
        write_touch(touch0, "t0");
        write_touch(touch1, "t1");
        j = {{"object_id", "cloth"},
             {"visual", "visual.png"},
             {"sketch", "sketch.png"},
             {"scale_m_per_px", 2.5e-4},
             {"touches",
              {{{"gx_file", "t0_gx.png"}, {"gy_file", "t0_gy.png"}, {"gmin", gmin}, {"gmax", gmax}, {"x", 40}, {"y", 30}},
               // lands mostly outside the image: every window is dropped
               {{"gx_file", "t1_gx.png"}, {"gy_file", "t1_gy.png"}, {"gmin", gmin}, {"gmax", gmax}, {"x", 200}, {"y", 170}}}}};
        save();
    }

    void write_touch(const geometry::GradientField& g, const std::string& stem) {
        png::write_gray16(dir / (stem + "_gx.png"), encode_gradient_raster(g.gx, gmin, gmax));
        png::write_gray16(dir / (stem + "_gy.png"), encode_gradient_raster(g.gy, gmin, gmax));
    }

    void save() const { std::ofstream(dir / "capture.json") << j.dump(2); }
};

}  // namespace

TEST_CASE("load_capture reads rasters and touches") {
    Fixture f("load");
    const auto c = load_capture(f.dir);
    CHECK(c.object_id == "cloth");
    CHECK(c.visual.rows() == kRows);
    CHECK(c.sketch.cols() == kCols);
    CHECK_FALSE(c.object_mask.has_value());
    CHECK(c.scale_m_per_px == 2.5e-4);
    REQUIRE(c.touches.size() == 2);
    CHECK(c.touches[0].x == 40);
    CHECK(c.touches[1].y == 170);
    const double step = (f.gmax - f.gmin) / 65535.0;
    double worst = 0;
    for (std::size_t i = 0; i < f.touch0.gx.size(); ++i)
        worst = std::max(worst, std::abs(c.touches[0].grad.gx.data()[i] - f.touch0.gx.data()[i]));
    CHECK(worst <= 0.5 * step + 1e-12);
    CHECK(load_capture(f.dir / "capture.json").touches.size() == 2);
}

TEST_CASE("build_scene places patches in image coordinates") {
    Fixture f("build");
    const auto c = load_capture(f.dir);
    const auto s = build_scene(c, 12, 3);
    REQUIRE_FALSE(s.patches.empty());
    CHECK(s.patches.size() <= 12);
    CHECK(s.object_id == "cloth");
    CHECK(s.scale_m_per_px == 2.5e-4);

    // independent expectation: the downsampled first touch cropped at the
    // patch box minus the touch offset
    const auto small = downsample_tactile(c.touches[0].grad);
    double gmax = 0;
    for (std::size_t k = 0; k < s.patches.size(); ++k) {
        const auto& p = s.patches[k];
        CHECK(p.id == static_cast<int>(k));
        CHECK(p.bbox.inside(kRows, kCols));
        int covered = 0;
        for (int r = 0; r < 32; ++r)
            for (int cc = 0; cc < 32; ++cc) {
                covered += s.object_mask(p.bbox.y + r, p.bbox.x + cc) != 0;
                CHECK(p.grad.gx(r, cc) == small.gx(p.bbox.y - 30 + r, p.bbox.x - 40 + cc));
                CHECK(p.grad.gy(r, cc) == small.gy(p.bbox.y - 30 + r, p.bbox.x - 40 + cc));
                gmax = std::max(gmax, std::hypot(p.grad.gx(r, cc), p.grad.gy(r, cc)));
            }
        CHECK(10 * covered >= 9 * 1024);
    }
    CHECK(s.gradient_max == doctest::Approx(gmax).epsilon(1e-12));
}

TEST_CASE("build_scene is deterministic per seed") {
    Fixture f("seed");
    const auto c = load_capture(f.dir);
    const auto a = build_scene(c, 5, 11), b = build_scene(c, 5, 11);
    REQUIRE(a.patches.size() == b.patches.size());
    for (std::size_t i = 0; i < a.patches.size(); ++i) CHECK(a.patches[i].bbox == b.patches[i].bbox);
}

TEST_CASE("capture errors") {
    Fixture f("errors");
    auto c = load_capture(f.dir);
    CHECK_THROWS_AS(build_scene(c, 0, 1), ValidationError);
    auto wrong = c;
    wrong.touches[0].grad = geometry::GradientField(78, 104);
    CHECK_THROWS_AS(build_scene(wrong, 4, 1), ValidationError);
    auto none = c;
    none.touches.clear();
    CHECK_THROWS_AS(build_scene(none, 4, 1), ValidationError);
    auto outside = c;
    outside.touches.erase(outside.touches.begin());
    CHECK_THROWS_AS(build_scene(outside, 4, 1), ValidationError);

    f.j["touches"][1].erase("gmax");
    f.save();
    try {
        load_capture(f.dir);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("touch 1") != std::string::npos);
    }
    f.j.erase("visual");
    f.save();
    CHECK_THROWS_AS(load_capture(f.dir), ValidationError);
    CHECK_THROWS_AS(load_capture(f.dir / "missing.json"), IoError);
}
