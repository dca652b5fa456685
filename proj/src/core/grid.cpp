#include "vts/core/grid.hpp"

#include <algorithm>
#include <stdexcept>

namespace vts {

Image::Image(std::vector<Plane> planes) : planes_(std::move(planes)) {
    for (const auto& p : planes_)
        if (!p.same_shape(planes_.front())) throw std::invalid_argument("Image: channel shapes differ");
}

Image crop(const Image& img, const BBox& box) {
    std::vector<Plane> planes;
    planes.reserve(static_cast<std::size_t>(img.channels()));
    for (int c = 0; c < img.channels(); ++c) planes.push_back(crop(img.plane(c), box));
    return Image(std::move(planes));
}

BBox bounding_box(const Mask& m) {
    int r0 = m.rows(), r1 = -1, c0 = m.cols(), c1 = -1;
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            if (m(r, c)) {
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
            }
    if (r1 < 0) return {};
    return {c0, r0, c1 - c0 + 1, r1 - r0 + 1};
}

std::size_t count_nonzero(const Mask& m) {
    return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](auto v) { return v != 0; }));
}

}  // namespace vts
