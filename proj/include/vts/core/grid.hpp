#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vts {

/// Row-major 2-D raster. Used for single-channel images, height maps and
/// binary masks.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        assert(rows >= 0 && cols >= 0);
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Grid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    template <typename U>
    bool same_shape(const Grid<U>& o) const { return rows_ == o.rows() && cols_ == o.cols(); }

    T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool operator==(const Grid&) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using Plane = Grid<double>;
using Mask = Grid<std::uint8_t>;

/// Axis-aligned box in pixel coordinates: (x, y) is the top-left corner,
/// x indexes columns.
struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool inside(int rows, int cols) const {
        return x >= 0 && y >= 0 && w > 0 && h > 0 && x + w <= cols && y + h <= rows;
    }
    bool contains(const BBox& o) const {
        return o.x >= x && o.y >= y && o.x + o.w <= x + w && o.y + o.h <= y + h;
    }
    BBox shifted(int dx, int dy) const { return {x + dx, y + dy, w, h}; }
    bool operator==(const BBox&) const = default;
};

/// Planar multi-channel image with values nominally in [0, 1].
class Image {
public:
    Image() = default;
    Image(int channels, int rows, int cols, double fill = 0.0)
        : planes_(static_cast<std::size_t>(channels), Plane(rows, cols, fill)) {}
    explicit Image(std::vector<Plane> planes);

    int channels() const { return static_cast<int>(planes_.size()); }
    int rows() const { return planes_.empty() ? 0 : planes_.front().rows(); }
    int cols() const { return planes_.empty() ? 0 : planes_.front().cols(); }
    bool empty() const { return planes_.empty() || planes_.front().empty(); }

    Plane& plane(int c) { return planes_[static_cast<std::size_t>(c)]; }
    const Plane& plane(int c) const { return planes_[static_cast<std::size_t>(c)]; }
    double& operator()(int c, int r, int x) { return planes_[static_cast<std::size_t>(c)](r, x); }
    double operator()(int c, int r, int x) const { return planes_[static_cast<std::size_t>(c)](r, x); }

    bool operator==(const Image&) const = default;

private:
    std::vector<Plane> planes_;
};

/// Extract a sub-rectangle. The box must lie inside the grid.
template <typename T>
Grid<T> crop(const Grid<T>& g, const BBox& box) {
    assert(box.inside(g.rows(), g.cols()));
    Grid<T> out(box.h, box.w);
    for (int r = 0; r < box.h; ++r)
        for (int c = 0; c < box.w; ++c) out(r, c) = g(box.y + r, box.x + c);
    return out;
}

Image crop(const Image& img, const BBox& box);

/// Bounding box of the non-zero pixels; w = h = 0 when the mask is empty.
BBox bounding_box(const Mask& m);

std::size_t count_nonzero(const Mask& m);

}  // namespace vts
