#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vts/core/grid.hpp"
#include "vts/data/scene.hpp"

namespace vts::data {

struct AugmentConfig {
    int pad = 1800;
    int crop = 1536;

    /// Full-scale sizes scaled by the same factor (pad 1800 / crop 1536 at
    /// full scale, e.g. pad 150 / crop 128 at desk scale).
    static AugmentConfig for_crop(int crop);
};

struct AugmentedSample {
    Image visual;
    Plane sketch;
    Mask object_mask;
    int pad_offset_x = 0;  // where the image sits in the padded canvas
    int pad_offset_y = 0;
    int crop_x = 0;        // crop origin in the padded canvas
    int crop_y = 0;

    /// Maps a box from image coordinates into crop coordinates.
    BBox to_crop(const BBox& b) const { return b.shifted(pad_offset_x - crop_x, pad_offset_y - crop_y); }
};

/// Zero-pads symmetrically to pad x pad and takes a uniformly random crop
/// whose window contains the object-mask bounding box.
AugmentedSample augment(const SceneRecord& scene, const AugmentConfig& config, std::uint64_t seed);

struct PatchSplit {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

/// Shuffled split with floor rounding for val/test; remainder goes to train.
PatchSplit split_patches(std::vector<int> ids, std::array<int, 3> ratios = {6, 2, 2}, std::uint64_t seed = 0);
PatchSplit split_patches(const std::vector<TactilePatch>& patches, std::array<int, 3> ratios = {6, 2, 2},
                         std::uint64_t seed = 0);

}  // namespace vts::data
