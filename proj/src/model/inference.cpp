#include "vts/model/inference.hpp"

#include "vts/core/error.hpp"
#include "vts/model/encoding.hpp"

namespace vts::model {

Synthesis synthesize(Generator& g, const Plane& sketch, const Mask& object_mask, double gradient_max) {
    if (!sketch.same_shape(object_mask)) throw ValidationError("synthesize: sketch and mask sizes differ");
    const bool was_training = g.is_training();
    if (was_training) g.eval();
    nn::NoGradGuard ng;
    GeneratorOutput out;
    try {
        out = g.forward(assemble_input(sketch, object_mask));
    } catch (...) {
        if (was_training) g.train();
        throw;
    }
    if (was_training) g.train();
    const Tensor mask = mask_tensor(object_mask);
    return {tensor_image(mask_visual(out.visual, mask)), tensor_gradient(mask_tactile(out.tactile, mask), gradient_max)};
}

}  // namespace vts::model
