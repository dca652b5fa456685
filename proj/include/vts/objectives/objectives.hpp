#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "vts/core/grid.hpp"
#include "vts/core/random.hpp"
#include "vts/data/scene.hpp"
#include "vts/model/backbone.hpp"
#include "vts/model/networks.hpp"

namespace vts::objectives {

using nn::Tensor;
using model::PatchOutput;

struct LossWeights {
    double lambda_l1 = 100.0;
    double lambda_gan = 5.0;
    double lambda_rec = 10.0;
    double lambda_fm = 10.0;
    bool enable_cgan_visual = true;
    bool enable_cgan_tactile = true;
    bool enable_rec_visual = true;
    bool enable_rec_tactile = true;

    void validate() const;
};

/// Missing keys keep their defaults; unknown keys are rejected.
LossWeights parse_loss_weights(const nlohmann::json& j);
nlohmann::json to_json(const LossWeights& w);

// Adversarial pieces ---------------------------------------------------------

/// Non-saturating discriminator loss averaged over scales:
///   -log sigmoid(real) - log(1 - sigmoid(fake)), each a mean over score maps.
Tensor discriminator_loss(const std::vector<PatchOutput>& real, const std::vector<PatchOutput>& fake);
/// -log sigmoid(fake) averaged over scales.
Tensor generator_loss(const std::vector<PatchOutput>& fake);
/// Same forms for plain logits (the vision-aided head).
Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits);
Tensor generator_loss(const Tensor& fake_logits);

struct VisualGanTerms {
    Tensor d_patch;   // D_I loss (undefined when no real outputs were given)
    Tensor d_aided;   // D_A loss (undefined when D_A is off or no real logits)
    Tensor g_patch;
    Tensor g_aided;   // undefined when D_A is off

    Tensor loss_d() const;
    Tensor loss_g() const;
};

/// `d_real` may be empty (generator phase) and the D_A logits undefined
/// (vision-aided term disabled).
VisualGanTerms visual_gan_terms(const std::vector<PatchOutput>& d_real, const std::vector<PatchOutput>& d_fake,
                                const Tensor& da_real, const Tensor& da_fake);

// Reconstruction ---------------------------------------------------------------

/// (N, 2, H, W) -> (N, 3, H, W) as (gx, gy, 0).
Tensor lift_tactile(const Tensor& t);

struct ReconTerms {
    Tensor perceptual;
    Tensor l1;     // unweighted mean |pred - target|
    Tensor total;  // perceptual + lambda_l1 * l1
};

/// Two-channel inputs are lifted before the perceptual distance.
ReconTerms recon_loss(const Tensor& pred, const Tensor& target, const model::FeatureBackbone& backbone,
                      double lambda_l1);

// Tactile patches ------------------------------------------------------------

struct PatchBatch {
    std::vector<int> paired_ids;       // indices into the scene's patch list
    std::vector<BBox> paired_boxes;    // in the coordinates of the raster being trained on
    std::vector<BBox> unpaired_boxes;
};

/// Paired: uniform without replacement over `train_ids`, boxes taken from
/// the patches. Unpaired: uniform over 32x32 windows at least 90% inside
/// `object_mask`. Throws ValidationError when n_paired exceeds the train
/// set or when no valid unpaired window exists.
PatchBatch sample_patch_batch(const std::vector<data::TactilePatch>& patches, const std::vector<int>& train_ids,
                              const Mask& object_mask, int n_paired, int n_unpaired, Rng& rng);

struct TactileStacks {
    Tensor real;  // (P, 6, 32, 32): sketch, real visual, real tactile
    Tensor fake;  // (P + U, 6, 32, 32): sketch, detached fake visual, fake tactile
    int paired = 0;
};

/// `tactile_real` is (P, 2, 32, 32), normalized like the generator output.
TactileStacks tactile_stacks(const PatchBatch& batch, const Tensor& sketch, const Tensor& visual_real,
                             const Tensor& tactile_real, const Tensor& visual_fake, const Tensor& tactile_fake);

struct TactileGanTerms {
    Tensor loss_d;
    Tensor loss_g;
    Tensor feature_match;
};

/// d_real: D_T on the real stacks (P items), d_fake: D_T on the fake stacks
/// (P + U items, paired first). Feature matching compares the first P fake
/// items with their real counterparts, L1 per layer, averaged over layers
/// and scales; real features are treated as constants.
TactileGanTerms tactile_gan_terms(const std::vector<PatchOutput>& d_real, const std::vector<PatchOutput>& d_fake,
                                  int paired);

// Totals -------------------------------------------------------------------

/// Generator-side term names: visual_adv, visual_aided, visual_rec,
/// tactile_adv, tactile_fm, tactile_rec. Discriminator side: d_visual,
/// d_aided, d_tactile.
using TermMap = std::map<std::string, Tensor>;

/// Names each flag owns, generator side then discriminator side.
std::vector<std::string> terms_for_flag(const std::string& flag);
/// Names implied by the enabled flags (vision-aided terms only when on).
std::vector<std::string> expected_terms(const LossWeights& w, bool vision_aided);

struct Totals {
    Tensor visual;           // L_I
    Tensor tactile;          // L_T
    Tensor generator;        // L_I + L_T
    Tensor d_visual;         // D_I + D_A
    Tensor d_tactile;
    std::map<std::string, double> weighted;  // every contributing term with its weight applied
};

enum class Phase { generator, discriminator, both };

/// L_I = visual_adv + visual_aided + visual_rec
/// L_T = lambda_gan (tactile_adv + lambda_fm tactile_fm) + lambda_rec tactile_rec
/// Disabled flags drop their terms; a missing term for an enabled flag in
/// the requested phase throws ValidationError. Empty groups give a zero
/// constant.
Totals total_loss(const TermMap& terms, const LossWeights& w, bool vision_aided, Phase phase = Phase::both);

// Step assembly ---------------------------------------------------------------

struct Networks {
    model::Generator* generator = nullptr;
    model::MultiScaleDiscriminator* d_visual = nullptr;   // 4 input channels
    model::MultiScaleDiscriminator* d_tactile = nullptr;  // 6 input channels
    model::VisionAidedDiscriminator* d_aided = nullptr;   // may be null
    const model::FeatureBackbone* perceptual = nullptr;
};

/// One training view: the assembled generator input and its targets.
struct StepInputs {
    Tensor input;         // (1, 17, H, W)
    Tensor sketch;        // (1, 1, H, W), masked
    Tensor mask;          // (1, 1, H, W)
    Tensor visual_real;   // (1, 3, H, W) in [-1, 1]
    Tensor tactile_real;  // (P, 2, 32, 32), gradients / gradient_max
    PatchBatch batch;
};

/// Masked generator outputs.
struct Fakes {
    Tensor visual;
    Tensor tactile;
};

/// Builds the tensors for one view. `batch.paired_ids` index `patches`;
/// boxes are already in view coordinates.
StepInputs make_step_inputs(const Image& visual, const Plane& sketch, const Mask& object_mask,
                            const std::vector<data::TactilePatch>& patches, PatchBatch batch, double gradient_max);

Fakes generate(Networks& nets, const StepInputs& in, Rng* dropout_rng);

/// D-side terms for the enabled flags; fakes are detached here.
TermMap discriminator_terms(Networks& nets, const StepInputs& in, const Fakes& fakes, const LossWeights& w);
/// G-side terms for the enabled flags.
TermMap generator_terms(Networks& nets, const StepInputs& in, const Fakes& fakes, const LossWeights& w);

}  // namespace vts::objectives
