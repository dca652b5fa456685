#pragma once

#include "vts/core/grid.hpp"
#include "vts/geometry/geometry.hpp"
#include "vts/model/networks.hpp"

namespace vts::model {

struct Synthesis {
    Image visual;                     // RGB in [0, 1], black off the object
    geometry::GradientField tactile;  // physical gradients, zero off the object
};

/// Evaluation-mode forward pass on one sketch. A generator left in training
/// mode is switched to evaluation for the call and restored afterwards.
Synthesis synthesize(Generator& g, const Plane& sketch, const Mask& object_mask, double gradient_max);

}  // namespace vts::model
