#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"
#include "vts/core/random.hpp"
#include "vts/data/augment.hpp"
#include "vts/data/preprocess.hpp"
#include "vts/data/scene.hpp"

using namespace vts;
using namespace vts::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("vts_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

SceneRecord small_scene(int n_patches) {
    SceneRecord s;
    s.object_id = "tiny";
    const int rows = 64, cols = 80;
    s.visual = Image(3, rows, cols);
    s.sketch = Plane(rows, cols);
    s.object_mask = Mask(rows, cols);
    Rng rng(4);
    for (int c = 0; c < 3; ++c)
        for (double& v : s.visual.plane(c)) v = std::round(rng.uniform() * 255.0) / 255.0;
    for (int r = 4; r < 60; ++r)
        for (int c = 4; c < 76; ++c) {
            s.object_mask(r, c) = 1;
            if (r == 4 || r == 59 || c == 4 || c == 75) s.sketch(r, c) = 1.0;
        }
    for (int i = 0; i < n_patches; ++i) {
        TactilePatch p;
        p.id = i;
        p.bbox = {8 + 4 * i, 10 + 2 * i, kPatchSize, kPatchSize};
        p.grad = geometry::GradientField(kPatchSize, kPatchSize);
        for (int r = 0; r < kPatchSize; ++r)
            for (int c = 0; c < kPatchSize; ++c) {
                p.grad.gx(r, c) = 0.01 * (c - r) + 0.1 * i;
                p.grad.gy(r, c) = std::sin(0.3 * r) * 0.5;
            }
        p.contact_mask = Mask(kPatchSize, kPatchSize, 1);
        p.contact_mask(0, 0) = 0;
        s.patches.push_back(std::move(p));
    }
    s.gradient_max = 1.2;
    return s;
}

// Brute-force 4-connected flood fill from every border pixel, using an
// explicit visited scan instead of a queue.
Mask brute_force_object_mask(const Plane& sketch) {
    const int rows = sketch.rows(), cols = sketch.cols();
    Mask bg(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if ((r == 0 || c == 0 || r == rows - 1 || c == cols - 1) && sketch(r, c) < 0.5) bg(r, c) = 1;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                if (bg(r, c) || sketch(r, c) >= 0.5) continue;
                if ((r > 0 && bg(r - 1, c)) || (r + 1 < rows && bg(r + 1, c)) || (c > 0 && bg(r, c - 1)) ||
                    (c + 1 < cols && bg(r, c + 1))) {
                    bg(r, c) = 1;
                    changed = true;
                }
            }
    }
    Mask obj(rows, cols);
    for (std::size_t i = 0; i < bg.size(); ++i) obj.data()[i] = bg.data()[i] ? 0 : 1;
    return obj;
}

}  // namespace

TEST_CASE("manifest round trip preserves the scene") {
    const SceneRecord s = small_scene(3);
    const fs::path dir = temp_dir("manifest_rt");
    save_manifest(s, dir);
    const SceneRecord back = load_manifest(dir);
    CHECK(back.object_id == s.object_id);
    CHECK(back.visual == s.visual);
    CHECK(back.sketch == s.sketch);
    CHECK(back.object_mask == s.object_mask);
    CHECK(back.gradient_max == s.gradient_max);
    CHECK(back.scale_m_per_px == s.scale_m_per_px);
    REQUIRE(back.patches.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& a = s.patches[i];
        const auto& b = back.patches[i];
        CHECK(a.id == b.id);
        CHECK(a.bbox == b.bbox);
        CHECK(a.contact_mask == b.contact_mask);
        // 16-bit quantization over the patch range
        double lo = 1e9, hi = -1e9;
        for (double v : a.grad.gx) lo = std::min(lo, v), hi = std::max(hi, v);
        for (double v : a.grad.gy) lo = std::min(lo, v), hi = std::max(hi, v);
        const double tol = (hi - lo) / 65535.0;
        for (std::size_t k = 0; k < a.grad.gx.size(); ++k) {
            CHECK(std::abs(a.grad.gx.data()[k] - b.grad.gx.data()[k]) <= tol);
            CHECK(std::abs(a.grad.gy.data()[k] - b.grad.gy.data()[k]) <= tol);
        }
    }
    // a second save of the loaded scene is a fixed point
    const fs::path dir2 = temp_dir("manifest_rt2");
    save_manifest(back, dir2);
    const SceneRecord again = load_manifest(dir2);
    CHECK(again.patches[1].grad.gx == back.patches[1].grad.gx);
}

TEST_CASE("minimal manifest with one patch") {
    const fs::path dir = temp_dir("manifest_min");
    save_manifest(small_scene(1), dir);
    const SceneRecord s = load_manifest(dir / "manifest.json");
    CHECK(s.patches.size() == 1);
    CHECK(s.rows() == 64);
    CHECK(s.cols() == 80);
}

TEST_CASE("manifest bbox out of bounds names the patch id") {
    const fs::path dir = temp_dir("manifest_bad");
    save_manifest(small_scene(2), dir);
    nlohmann::json j;
    {
        std::ifstream in(dir / "manifest.json");
        in >> j;
    }
    j["patches"][1]["bbox_xywh"][0] = -1;
    {
        std::ofstream out(dir / "manifest.json");
        out << j.dump();
    }
    try {
        load_manifest(dir);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("id 1") != std::string::npos);
        CHECK(msg.find("bbox") != std::string::npos);
    }
}

TEST_CASE("manifest errors: missing file and size mismatch") {
    CHECK_THROWS_AS(load_manifest(temp_dir("manifest_none")), ValidationError);

    const fs::path dir = temp_dir("manifest_dim");
    save_manifest(small_scene(1), dir);
    png::write_mask(dir / "object_mask.png", Mask(10, 10, 1));
    try {
        load_manifest(dir);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("object_mask") != std::string::npos);
    }
}

TEST_CASE("validate rejects bad scenes") {
    SceneRecord s = small_scene(1);
    s.gradient_max = 0.0;
    CHECK_THROWS_AS(validate(s), ValidationError);
    s = small_scene(1);
    s.patches[0].contact_mask = Mask(kPatchSize, kPatchSize, 0);
    CHECK_THROWS_AS(validate(s), ValidationError);
    s = small_scene(1);
    s.patches[0].grad.gx(3, 3) = NAN;
    CHECK_THROWS_AS(validate(s), ValidationError);
    s = small_scene(1);
    s.patches[0].bbox.w = 31;
    CHECK_THROWS_AS(validate(s), ValidationError);
}

TEST_CASE("every validated patch crops a 32x32 in-bounds block") {
    const SceneRecord s = small_scene(5);
    validate(s);
    for (const auto& p : s.patches) {
        const Plane c = crop(s.sketch, p.bbox);
        CHECK(c.rows() == 32);
        CHECK(c.cols() == 32);
    }
}

TEST_CASE("decode_gradient_raster endpoints and midpoint") {
    Grid<std::uint16_t> codes(1, 3);
    codes(0, 0) = 0;
    codes(0, 1) = 65535;
    codes(0, 2) = 32768;
    const Plane v = decode_gradient_raster(codes, -2.0, 2.0);
    CHECK(v(0, 0) == -2.0);
    CHECK(v(0, 1) == 2.0);
    CHECK(std::abs(v(0, 2) - 3.0518043793392735e-05) <= 1e-15);
    CHECK_THROWS_AS(decode_gradient_raster(codes, 1.0, 1.0), ValidationError);
}

TEST_CASE("gradient raster quantization bound") {
    Rng rng(2);
    Plane v(20, 20);
    for (double& x : v) x = rng.uniform(-1.5, 0.7);
    const Plane back = decode_gradient_raster(encode_gradient_raster(v, -1.5, 0.7), -1.5, 0.7);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(back.data()[i] - v.data()[i]) <= 2.2 / 65535.0);
}

TEST_CASE("decode_gradient_files rejects 8-bit rasters") {
    const fs::path dir = temp_dir("grad8");
    png::write_mask(dir / "gx.png", Mask(4, 4, 1));
    png::write_mask(dir / "gy.png", Mask(4, 4, 1));
    CHECK_THROWS_AS(decode_gradient_files(dir / "gx.png", dir / "gy.png", -1, 1), IoError);
}

TEST_CASE("downsample_tactile shape and constants") {
    geometry::GradientField raw(240, 320);
    for (double& v : raw.gx) v = 0.37;
    for (double& v : raw.gy) v = -1.25;
    const auto out = downsample_tactile(raw);
    CHECK(out.rows() == 78);
    CHECK(out.cols() == 104);
    for (double v : out.gx) CHECK(std::abs(v - 0.37) <= 1e-12);
    for (double v : out.gy) CHECK(std::abs(v + 1.25) <= 1e-12);
    CHECK_THROWS_AS(downsample_tactile(geometry::GradientField(240, 321)), ValidationError);
}

TEST_CASE("downsample_tactile reproduces a linear ramp in the interior") {
    // Input pixel k covers [k, k+1) with its sample at the centre; the mean of
    // a ramp over output pixel j is the ramp evaluated at the interval centre.
    const double a = 0.013, b = -0.4, c = 0.021;
    geometry::GradientField raw(240, 320);
    for (int r = 0; r < 240; ++r)
        for (int k = 0; k < 320; ++k) {
            raw.gx(r, k) = a * k + b;
            raw.gy(r, k) = c * r;
        }
    const auto out = downsample_tactile(raw);
    const double sx = 320.0 / 104.0, sy = 240.0 / 78.0;
    double worst = 0.0;
    for (int r = 1; r < 77; ++r)
        for (int j = 1; j < 103; ++j) {
            const double ex = a * ((j + 0.5) * sx - 0.5) + b;
            const double ey = c * ((r + 0.5) * sy - 0.5);
            worst = std::max({worst, std::abs(out.gx(r, j) - ex), std::abs(out.gy(r, j) - ey)});
        }
    CHECK(worst <= 1e-6);
}

TEST_CASE("contact threshold matches the sort-and-index oracle") {
    std::vector<int> perm(100);
    std::iota(perm.begin(), perm.end(), 1);
    Rng rng(12);
    rng.shuffle(perm);
    Plane h(10, 10);
    for (int i = 0; i < 100; ++i) h.data()[i] = perm[static_cast<std::size_t>(i)];
    CHECK(contact_threshold(h) == 75.0);
    CHECK(count_nonzero(threshold_contact(h)) == 25);

    for (int trial = 0; trial < 100; ++trial) {
        const int rows = 1 + static_cast<int>(rng.uniform_int(0, 30));
        const int cols = 1 + static_cast<int>(rng.uniform_int(0, 30));
        Plane p(rows, cols);
        for (double& v : p) v = std::round(rng.normal() * 4.0) / 4.0;  // ties included
        std::vector<double> sorted(p.begin(), p.end());
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        std::size_t rank = 0;
        while (4 * rank < 3 * n) ++rank;  // smallest rank with rank/n >= 0.75
        CHECK(contact_threshold(p) == sorted[rank - 1]);
    }
}

TEST_CASE("contact mask: constant map and shift invariance") {
    CHECK(count_nonzero(threshold_contact(Plane(12, 9, 3.5))) == 0);
    Rng rng(8);
    Plane h(20, 20);
    for (double& v : h) v = rng.uniform();
    Plane shifted = h;
    for (double& v : shifted) v += 5.0;
    CHECK(threshold_contact(h) == threshold_contact(shifted));
    CHECK_THROWS_AS(compute_contact_mask(Plane()), ValidationError);
}

TEST_CASE("contact mask covers an indented bump after dilation") {
    Plane h(40, 40, 0.0);
    Mask support(40, 40);
    for (int r = 0; r < 40; ++r)
        for (int c = 0; c < 40; ++c) {
            const double d2 = (r - 20) * (r - 20) + (c - 18) * (c - 18);
            if (d2 < 64) {
                h(r, c) = 1.0 - d2 / 64.0 + 0.01;
                support(r, c) = 1;
            }
        }
    const Mask m = compute_contact_mask(h);
    for (std::size_t i = 0; i < m.size(); ++i)
        if (support.data()[i]) CHECK(m.data()[i] == 1);
    // two 3x3 dilations grow the pre-mask by exactly two pixels (Chebyshev)
    const Mask pre = threshold_contact(h);
    for (int r = 0; r < 40; ++r)
        for (int c = 0; c < 40; ++c) {
            bool near = false;
            for (int dr = -2; dr <= 2; ++dr)
                for (int dc = -2; dc <= 2; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr >= 0 && rr < 40 && cc >= 0 && cc < 40 && pre(rr, cc)) near = true;
                }
            CHECK(m(r, c) == (near ? 1 : 0));
        }
}

TEST_CASE("extract_patches: full contact, zero contact, determinism") {
    geometry::GradientField g(128, 128);
    for (int r = 0; r < 128; ++r)
        for (int c = 0; c < 128; ++c) g.gx(r, c) = r * 1000 + c;
    const auto full = extract_patches(g, Mask(128, 128, 1), 16, 5);
    REQUIRE(full.size() == 16);
    std::set<std::pair<int, int>> seen;
    for (const auto& p : full) {
        CHECK(p.bbox.inside(128, 128));
        CHECK(p.bbox.w == 32);
        CHECK(p.grad.gx(0, 0) == p.bbox.y * 1000 + p.bbox.x);
        seen.insert({p.bbox.x, p.bbox.y});
    }
    CHECK(seen.size() == 16);
    CHECK(extract_patches(g, Mask(128, 128, 0), 16, 5).empty());

    const auto again = extract_patches(g, Mask(128, 128, 1), 16, 5);
    for (std::size_t i = 0; i < 16; ++i) CHECK(again[i].bbox == full[i].bbox);
}

TEST_CASE("extract_patches obeys the 90% contact rule exhaustively") {
    Rng rng(31);
    Mask m(96, 96);
    for (int r = 0; r < 96; ++r)
        for (int c = 0; c < 96; ++c) m(r, c) = (std::hypot(r - 48.0, c - 44.0) < 36.0 && rng.uniform() > 0.04) ? 1 : 0;
    const auto windows = qualifying_windows(m);
    std::size_t expected = 0;
    for (int y = 0; y + 32 <= 96; ++y)
        for (int x = 0; x + 32 <= 96; ++x) {
            int s = 0;
            for (int r = 0; r < 32; ++r)
                for (int c = 0; c < 32; ++c) s += m(y + r, x + c);
            if (10 * s >= 9 * 1024) ++expected;
        }
    CHECK(windows.size() == expected);
    CHECK(expected > 0);
    const auto patches = extract_patches(geometry::GradientField(96, 96), m, 100000, 1);
    CHECK(patches.size() == expected);
    for (const auto& p : patches) CHECK(10 * count_nonzero(p.contact_mask) >= 9 * 1024);
}

TEST_CASE("nominal patch coverage is one sixth of the image") {
    const double fraction = 200.0 * kPatchSize * kPatchSize / (960.0 * 1280.0);
    CHECK(std::abs(fraction - 1.0 / 6.0) <= 0.01);
}

TEST_CASE("derive_object_mask: rectangle contour fills the rectangle") {
    Plane sk(30, 40);
    for (int r = 5; r <= 20; ++r)
        for (int c = 8; c <= 30; ++c)
            if (r == 5 || r == 20 || c == 8 || c == 30) sk(r, c) = 1.0;
    const Mask m = derive_object_mask(sk);
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 40; ++c) CHECK(m(r, c) == ((r >= 5 && r <= 20 && c >= 8 && c <= 30) ? 1 : 0));
}

TEST_CASE("derive_object_mask: empty sketch and open contour are errors") {
    CHECK_THROWS_AS(derive_object_mask(Plane(20, 20)), ValidationError);
    Plane open(20, 20);
    for (int c = 2; c < 18; ++c) open(10, c) = 1.0;
    CHECK_THROWS_AS(derive_object_mask(open), ValidationError);
    Plane gap(20, 20);
    for (int r = 3; r <= 15; ++r)
        for (int c = 3; c <= 15; ++c)
            if ((r == 3 || r == 15 || c == 3 || c == 15) && !(r == 3 && c == 9)) gap(r, c) = 1.0;
    CHECK_THROWS_AS(derive_object_mask(gap, Point{9, 9}), ValidationError);
}

TEST_CASE("derive_object_mask: annulus matches the brute-force oracle") {
    Plane sk(64, 64);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            const double d = std::hypot(r - 31.5, c - 30.0);
            if (std::abs(d - 25.0) < 1.0 || std::abs(d - 10.0) < 1.0) sk(r, c) = 1.0;
        }
    const Mask m = derive_object_mask(sk);
    CHECK(m == brute_force_object_mask(sk));
    CHECK(m(31, 30) == 1);  // hole interior belongs to the disk
}

TEST_CASE("augment: full-size object with crop = pad gives identity placement") {
    SceneRecord s = small_scene(0);
    s.object_mask = Mask(64, 80, 1);
    const auto a = augment(s, {80, 80}, 3);
    CHECK(a.crop_x == 0);
    CHECK(a.crop_y == 0);
    CHECK(a.pad_offset_x == 0);
    CHECK(a.pad_offset_y == 8);
    CHECK(a.visual(1, 8 + 5, 7) == s.visual(1, 5, 7));
}

TEST_CASE("augment: crops always contain the object and preserve its area") {
    const SceneRecord s = small_scene(0);
    const std::size_t area = count_nonzero(s.object_mask);
    const BBox obj = bounding_box(s.object_mask);
    std::set<std::pair<int, int>> origins;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto a = augment(s, AugmentConfig::for_crop(88), seed);
        CHECK(a.visual.rows() == 88);
        CHECK(count_nonzero(a.object_mask) == area);
        CHECK(BBox{0, 0, 88, 88}.contains(a.to_crop(obj)));
        origins.insert({a.crop_x, a.crop_y});
        const auto b = augment(s, AugmentConfig::for_crop(88), seed);
        CHECK(b.object_mask == a.object_mask);
    }
    CHECK(origins.size() > 10);
    CHECK_THROWS_AS(augment(s, {150, 60}, 0), ValidationError);
}

TEST_CASE("augment config scales the full-size defaults") {
    const AugmentConfig full;
    CHECK(full.pad == 1800);
    CHECK(full.crop == 1536);
    CHECK(AugmentConfig::for_crop(1536).pad == 1800);
    CHECK(AugmentConfig::for_crop(128).pad == 150);
}

TEST_CASE("split_patches ratios, disjointness and determinism") {
    std::vector<int> ids(300);
    std::iota(ids.begin(), ids.end(), 0);
    const auto s = split_patches(ids, {6, 2, 2}, 1);
    CHECK(s.train.size() == 180);
    CHECK(s.val.size() == 60);
    CHECK(s.test.size() == 60);
    std::set<int> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == 300);

    std::vector<int> ten(10);
    std::iota(ten.begin(), ten.end(), 0);
    const auto t = split_patches(ten);
    CHECK(t.train.size() == 6);
    CHECK(t.val.size() == 2);
    CHECK(t.test.size() == 2);

    const auto again = split_patches(ids, {6, 2, 2}, 1);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);
    CHECK_THROWS_AS(split_patches(std::vector<int>{1, 2}), ValidationError);
}
