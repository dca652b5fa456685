#include "vts/data/augment.hpp"

#include <algorithm>
#include <cmath>

#include "vts/core/error.hpp"
#include "vts/core/random.hpp"

namespace vts::data {

AugmentConfig AugmentConfig::for_crop(int crop) {
    return {static_cast<int>(std::lround(crop * 1800.0 / 1536.0)), crop};
}

AugmentedSample augment(const SceneRecord& scene, const AugmentConfig& config, std::uint64_t seed) {
    const int rows = scene.rows();
    const int cols = scene.cols();
    if (config.crop <= 0 || config.crop > config.pad) throw ValidationError("augment: crop size must be in (0, pad]");
    if (rows > config.pad || cols > config.pad) throw ValidationError("augment: image larger than pad size");

    AugmentedSample out;
    out.pad_offset_y = (config.pad - rows) / 2;
    out.pad_offset_x = (config.pad - cols) / 2;

    const BBox obj = bounding_box(scene.object_mask);
    if (obj.w == 0) throw ValidationError("augment: object mask is empty");
    const BBox obj_pad = obj.shifted(out.pad_offset_x, out.pad_offset_y);
    if (obj.w > config.crop || obj.h > config.crop)
        throw ValidationError("augment: object bounding box larger than crop window");

    // Crop origins whose window contains the object box and stays in the canvas.
    const int x_lo = std::max(0, obj_pad.x + obj_pad.w - config.crop);
    const int x_hi = std::min(config.pad - config.crop, obj_pad.x);
    const int y_lo = std::max(0, obj_pad.y + obj_pad.h - config.crop);
    const int y_hi = std::min(config.pad - config.crop, obj_pad.y);
    Rng rng(seed);
    out.crop_x = static_cast<int>(rng.uniform_int(x_lo, x_hi));
    out.crop_y = static_cast<int>(rng.uniform_int(y_lo, y_hi));

    const int dx = out.pad_offset_x - out.crop_x;  // image -> crop shift
    const int dy = out.pad_offset_y - out.crop_y;
    const int n = config.crop;
    out.visual = Image(3, n, n);
    out.sketch = Plane(n, n);
    out.object_mask = Mask(n, n);
    for (int r = 0; r < n; ++r) {
        const int sr = r - dy;
        if (sr < 0 || sr >= rows) continue;
        for (int c = 0; c < n; ++c) {
            const int sc = c - dx;
            if (sc < 0 || sc >= cols) continue;
            for (int k = 0; k < 3; ++k) out.visual(k, r, c) = scene.visual(k, sr, sc);
            out.sketch(r, c) = scene.sketch(sr, sc);
            out.object_mask(r, c) = scene.object_mask(sr, sc);
        }
    }
    return out;
}

PatchSplit split_patches(std::vector<int> ids, std::array<int, 3> ratios, std::uint64_t seed) {
    if (ids.size() < 3) throw ValidationError("split_patches: need at least 3 patches");
    const int total = ratios[0] + ratios[1] + ratios[2];
    if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0 || total <= 0)
        throw ValidationError("split_patches: ratios must be non-negative");
    Rng rng(seed);
    rng.shuffle(ids);
    const std::size_t n = ids.size();
    const std::size_t n_val = n * static_cast<std::size_t>(ratios[1]) / static_cast<std::size_t>(total);
    const std::size_t n_test = n * static_cast<std::size_t>(ratios[2]) / static_cast<std::size_t>(total);
    PatchSplit s;
    s.val.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    s.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), ids.end());
    return s;
}

PatchSplit split_patches(const std::vector<TactilePatch>& patches, std::array<int, 3> ratios, std::uint64_t seed) {
    std::vector<int> ids;
    ids.reserve(patches.size());
    for (const auto& p : patches) ids.push_back(p.id);
    return split_patches(std::move(ids), ratios, seed);
}

}  // namespace vts::data
