#include "vts/objectives/objectives.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "vts/core/error.hpp"
#include "vts/data/preprocess.hpp"
#include "vts/model/encoding.hpp"
#include "vts/nn/ops.hpp"

namespace vts::objectives {

namespace {

const char* const kFlags[] = {"enable_cgan_visual", "enable_cgan_tactile", "enable_rec_visual", "enable_rec_tactile"};

Tensor accumulate(const Tensor& total, const Tensor& term) { return total.defined() ? nn::add(total, term) : term; }

Tensor or_zero(const Tensor& t) { return t.defined() ? t : Tensor::scalar(0.0f); }

}  // namespace

void LossWeights::validate() const {
    for (double v : {lambda_l1, lambda_gan, lambda_rec, lambda_fm})
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigurationError("loss weights must be finite and >= 0");
}

LossWeights parse_loss_weights(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigurationError("loss weights: expected an object");
    LossWeights w;
    static const std::set<std::string> known = {"lambda_l1",          "lambda_gan",          "lambda_rec",
                                                "lambda_fm",          "enable_cgan_visual",  "enable_cgan_tactile",
                                                "enable_rec_visual",  "enable_rec_tactile"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigurationError("loss weights: unknown key '" + key + "'");
    try {
        w.lambda_l1 = j.value("lambda_l1", w.lambda_l1);
        w.lambda_gan = j.value("lambda_gan", w.lambda_gan);
        w.lambda_rec = j.value("lambda_rec", w.lambda_rec);
        w.lambda_fm = j.value("lambda_fm", w.lambda_fm);
        w.enable_cgan_visual = j.value("enable_cgan_visual", w.enable_cgan_visual);
        w.enable_cgan_tactile = j.value("enable_cgan_tactile", w.enable_cgan_tactile);
        w.enable_rec_visual = j.value("enable_rec_visual", w.enable_rec_visual);
        w.enable_rec_tactile = j.value("enable_rec_tactile", w.enable_rec_tactile);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("loss weights: ") + e.what());
    }
    w.validate();
    return w;
}

nlohmann::json to_json(const LossWeights& w) {
    return {{"lambda_l1", w.lambda_l1},
            {"lambda_gan", w.lambda_gan},
            {"lambda_rec", w.lambda_rec},
            {"lambda_fm", w.lambda_fm},
            {"enable_cgan_visual", w.enable_cgan_visual},
            {"enable_cgan_tactile", w.enable_cgan_tactile},
            {"enable_rec_visual", w.enable_rec_visual},
            {"enable_rec_tactile", w.enable_rec_tactile}};
}

Tensor discriminator_loss(const std::vector<PatchOutput>& real, const std::vector<PatchOutput>& fake) {
    if (real.size() != fake.size() || real.empty())
        throw ValidationError("discriminator loss: real and fake scale counts differ");
    Tensor total;
    for (std::size_t s = 0; s < real.size(); ++s)
        total = accumulate(total, discriminator_loss(real[s].score, fake[s].score));
    return nn::scale(total, 1.0f / static_cast<float>(real.size()));
}

Tensor generator_loss(const std::vector<PatchOutput>& fake) {
    if (fake.empty()) throw ValidationError("generator loss: no discriminator outputs");
    Tensor total;
    for (const auto& f : fake) total = accumulate(total, generator_loss(f.score));
    return nn::scale(total, 1.0f / static_cast<float>(fake.size()));
}

Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits) {
    if (!nn::all_finite(real_logits) || !nn::all_finite(fake_logits))
        throw NumericalError("discriminator loss: non-finite logits");
    return nn::add(nn::bce_with_logits(real_logits, true), nn::bce_with_logits(fake_logits, false));
}

Tensor generator_loss(const Tensor& fake_logits) {
    if (!nn::all_finite(fake_logits)) throw NumericalError("generator loss: non-finite logits");
    return nn::bce_with_logits(fake_logits, true);
}

Tensor VisualGanTerms::loss_d() const {
    Tensor t;
    if (d_patch.defined()) t = accumulate(t, d_patch);
    if (d_aided.defined()) t = accumulate(t, d_aided);
    return or_zero(t);
}

Tensor VisualGanTerms::loss_g() const {
    Tensor t;
    if (g_patch.defined()) t = accumulate(t, g_patch);
    if (g_aided.defined()) t = accumulate(t, g_aided);
    return or_zero(t);
}

VisualGanTerms visual_gan_terms(const std::vector<PatchOutput>& d_real, const std::vector<PatchOutput>& d_fake,
                                const Tensor& da_real, const Tensor& da_fake) {
    VisualGanTerms out;
    if (!d_real.empty()) out.d_patch = discriminator_loss(d_real, d_fake);
    out.g_patch = generator_loss(d_fake);
    if (da_fake.defined()) {
        if (da_real.defined()) out.d_aided = discriminator_loss(da_real, da_fake);
        out.g_aided = generator_loss(da_fake);
    }
    return out;
}

Tensor lift_tactile(const Tensor& t) {
    if (t.rank() != 4 || t.dim(1) != 2) throw ValidationError("lift_tactile: expected (N, 2, H, W), got " + nn::to_string(t.shape()));
    return nn::concat({t, Tensor::zeros({t.dim(0), 1, t.dim(2), t.dim(3)})}, 1);
}

ReconTerms recon_loss(const Tensor& pred, const Tensor& target, const model::FeatureBackbone& backbone,
                      double lambda_l1) {
    if (pred.shape() != target.shape())
        throw ValidationError("recon_loss: shape mismatch " + nn::to_string(pred.shape()) + " vs " +
                              nn::to_string(target.shape()));
    ReconTerms r;
    const bool two = pred.rank() == 4 && pred.dim(1) == 2;
    r.perceptual = two ? model::perceptual_distance(backbone, lift_tactile(pred), lift_tactile(target))
                       : model::perceptual_distance(backbone, pred, target);
    r.l1 = nn::l1_loss(pred, target);
    r.total = nn::add(r.perceptual, nn::scale(r.l1, static_cast<float>(lambda_l1)));
    return r;
}

PatchBatch sample_patch_batch(const std::vector<data::TactilePatch>& patches, const std::vector<int>& train_ids,
                              const Mask& object_mask, int n_paired, int n_unpaired, Rng& rng) {
    if (n_paired < 0 || n_unpaired < 0) throw ValidationError("patch batch: counts must be >= 0");
    if (static_cast<std::size_t>(n_paired) > train_ids.size())
        throw ValidationError("patch batch: " + std::to_string(n_paired) + " paired patches requested, only " +
                              std::to_string(train_ids.size()) + " in the training split");
    std::unordered_map<int, std::size_t> by_id;
    for (std::size_t i = 0; i < patches.size(); ++i) by_id[patches[i].id] = i;

    PatchBatch b;
    std::vector<int> ids = train_ids;
    rng.shuffle(ids);
    for (int k = 0; k < n_paired; ++k) {
        const auto it = by_id.find(ids[static_cast<std::size_t>(k)]);
        if (it == by_id.end()) throw ValidationError("patch batch: unknown patch id " + std::to_string(ids[k]));
        b.paired_ids.push_back(static_cast<int>(it->second));
        b.paired_boxes.push_back(patches[it->second].bbox);
    }
    if (n_unpaired > 0) {
        const auto windows = data::qualifying_windows(object_mask);
        if (windows.empty()) throw ValidationError("patch batch: no 32x32 window lies 90% inside the object mask");
        for (int k = 0; k < n_unpaired; ++k)
            b.unpaired_boxes.push_back(
                windows[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(windows.size()) - 1))]);
    }
    return b;
}

TactileStacks tactile_stacks(const PatchBatch& batch, const Tensor& sketch, const Tensor& visual_real,
                             const Tensor& tactile_real, const Tensor& visual_fake, const Tensor& tactile_fake) {
    const int paired = static_cast<int>(batch.paired_boxes.size());
    if (paired > 0 && (tactile_real.rank() != 4 || tactile_real.dim(0) != paired || tactile_real.dim(1) != 2))
        throw ValidationError("tactile stacks: expected (" + std::to_string(paired) + ", 2, 32, 32) real patches");
    TactileStacks s;
    s.paired = paired;
    const Tensor visual_fixed = visual_fake.detach();
    std::vector<Tensor> real, fake;
    for (int i = 0; i < paired; ++i) {
        const BBox& box = batch.paired_boxes[static_cast<std::size_t>(i)];
        const Tensor sk = model::crop_patch(sketch, box);
        real.push_back(nn::concat({sk, model::crop_patch(visual_real, box), nn::slice(tactile_real, 0, i, i + 1)}, 1));
        fake.push_back(nn::concat({sk, model::crop_patch(visual_fixed, box), model::crop_patch(tactile_fake, box)}, 1));
    }
    for (const BBox& box : batch.unpaired_boxes)
        fake.push_back(nn::concat(
            {model::crop_patch(sketch, box), model::crop_patch(visual_fixed, box), model::crop_patch(tactile_fake, box)}, 1));
    if (!real.empty()) s.real = nn::concat(real, 0);
    if (!fake.empty()) s.fake = nn::concat(fake, 0);
    return s;
}

TactileGanTerms tactile_gan_terms(const std::vector<PatchOutput>& d_real, const std::vector<PatchOutput>& d_fake,
                                  int paired) {
    if (paired <= 0) throw ValidationError("tactile adversarial loss needs at least one paired patch");
    TactileGanTerms t;
    t.loss_d = discriminator_loss(d_real, d_fake);
    t.loss_g = generator_loss(d_fake);
    Tensor fm;
    int count = 0;
    for (std::size_t s = 0; s < d_real.size(); ++s) {
        const auto& rf = d_real[s].features;
        const auto& ff = d_fake[s].features;
        for (std::size_t l = 0; l < rf.size(); ++l) {
            const Tensor fake_paired = ff[l].dim(0) == paired ? ff[l] : nn::slice(ff[l], 0, 0, paired);
            fm = accumulate(fm, nn::l1_loss(fake_paired, rf[l].detach()));
            ++count;
        }
    }
    t.feature_match = count > 0 ? nn::scale(fm, 1.0f / static_cast<float>(count)) : Tensor::scalar(0.0f);
    return t;
}

std::vector<std::string> terms_for_flag(const std::string& flag) {
    if (flag == "enable_cgan_visual") return {"visual_adv", "visual_aided", "d_visual", "d_aided"};
    if (flag == "enable_cgan_tactile") return {"tactile_adv", "tactile_fm", "d_tactile"};
    if (flag == "enable_rec_visual") return {"visual_rec"};
    if (flag == "enable_rec_tactile") return {"tactile_rec"};
    throw ValidationError("unknown ablation flag '" + flag + "'");
}

std::vector<std::string> expected_terms(const LossWeights& w, bool vision_aided) {
    const bool on[4] = {w.enable_cgan_visual, w.enable_cgan_tactile, w.enable_rec_visual, w.enable_rec_tactile};
    std::vector<std::string> out;
    for (int i = 0; i < 4; ++i) {
        if (!on[i]) continue;
        for (auto& name : terms_for_flag(kFlags[i]))
            if (vision_aided || name.find("aided") == std::string::npos) out.push_back(name);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Totals total_loss(const TermMap& terms, const LossWeights& w, bool vision_aided, Phase phase) {
    const bool want_g = phase != Phase::discriminator, want_d = phase != Phase::generator;
    Totals t;
    auto take = [&](const std::string& name, bool enabled, bool wanted, double weight, Tensor& into) {
        if (!enabled || !wanted) return;
        const auto it = terms.find(name);
        if (it == terms.end() || !it->second.defined())
            throw ValidationError("total_loss: term '" + name + "' missing for an enabled flag");
        const Tensor term = weight == 1.0 ? it->second : nn::scale(it->second, static_cast<float>(weight));
        t.weighted[name] = term.item();
        into = accumulate(into, term);
    };
    const bool va = vision_aided && w.enable_cgan_visual;
    take("visual_adv", w.enable_cgan_visual, want_g, 1.0, t.visual);
    take("visual_aided", va, want_g, 1.0, t.visual);
    take("visual_rec", w.enable_rec_visual, want_g, 1.0, t.visual);
    take("tactile_adv", w.enable_cgan_tactile, want_g, w.lambda_gan, t.tactile);
    take("tactile_fm", w.enable_cgan_tactile, want_g, w.lambda_gan * w.lambda_fm, t.tactile);
    take("tactile_rec", w.enable_rec_tactile, want_g, w.lambda_rec, t.tactile);
    take("d_visual", w.enable_cgan_visual, want_d, 1.0, t.d_visual);
    take("d_aided", va, want_d, 1.0, t.d_visual);
    take("d_tactile", w.enable_cgan_tactile, want_d, 1.0, t.d_tactile);
    t.visual = or_zero(t.visual);
    t.tactile = or_zero(t.tactile);
    t.generator = nn::add(t.visual, t.tactile);
    t.d_visual = or_zero(t.d_visual);
    t.d_tactile = or_zero(t.d_tactile);
    return t;
}

StepInputs make_step_inputs(const Image& visual, const Plane& sketch, const Mask& object_mask,
                            const std::vector<data::TactilePatch>& patches, PatchBatch batch, double gradient_max) {
    StepInputs in;
    in.input = model::assemble_input(sketch, object_mask);
    in.sketch = nn::slice(in.input, 1, 0, 1);
    in.mask = model::mask_tensor(object_mask);
    in.visual_real = model::image_tensor(visual);
    std::vector<Tensor> real;
    for (int id : batch.paired_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= patches.size())
            throw ValidationError("step inputs: patch index " + std::to_string(id) + " out of range");
        real.push_back(model::gradient_tensor(patches[static_cast<std::size_t>(id)].grad, gradient_max));
    }
    if (!real.empty()) in.tactile_real = nn::concat(real, 0);
    in.batch = std::move(batch);
    return in;
}

Fakes generate(Networks& nets, const StepInputs& in, Rng* dropout_rng) {
    const auto out = nets.generator->forward(in.input, dropout_rng);
    return {model::mask_visual(out.visual, in.mask), model::mask_tactile(out.tactile, in.mask)};
}

namespace {

Tensor tactile_prediction(const PatchBatch& batch, const Tensor& tactile) {
    std::vector<Tensor> crops;
    for (const BBox& box : batch.paired_boxes) crops.push_back(model::crop_patch(tactile, box));
    return nn::concat(crops, 0);
}

}  // namespace

TermMap discriminator_terms(Networks& nets, const StepInputs& in, const Fakes& fakes, const LossWeights& w) {
    TermMap terms;
    if (w.enable_cgan_visual) {
        const Tensor fake = fakes.visual.detach();
        const auto real_out = nets.d_visual->forward(nn::concat({in.sketch, in.visual_real}, 1));
        const auto fake_out = nets.d_visual->forward(nn::concat({in.sketch, fake}, 1));
        Tensor da_real, da_fake;
        if (nets.d_aided) {
            da_real = nets.d_aided->forward(in.visual_real);
            da_fake = nets.d_aided->forward(fake);
        }
        const auto v = visual_gan_terms(real_out, fake_out, da_real, da_fake);
        terms["d_visual"] = v.d_patch;
        if (v.d_aided.defined()) terms["d_aided"] = v.d_aided;
    }
    if (w.enable_cgan_tactile) {
        const auto stacks =
            tactile_stacks(in.batch, in.sketch, in.visual_real, in.tactile_real, fakes.visual, fakes.tactile.detach());
        if (stacks.paired == 0) throw ValidationError("tactile adversarial loss needs at least one paired patch");
        const auto real_out = nets.d_tactile->forward(stacks.real);
        const auto fake_out = nets.d_tactile->forward(stacks.fake);
        terms["d_tactile"] = tactile_gan_terms(real_out, fake_out, stacks.paired).loss_d;
    }
    return terms;
}

TermMap generator_terms(Networks& nets, const StepInputs& in, const Fakes& fakes, const LossWeights& w) {
    TermMap terms;
    if (w.enable_cgan_visual) {
        const auto fake_out = nets.d_visual->forward(nn::concat({in.sketch, fakes.visual}, 1));
        terms["visual_adv"] = generator_loss(fake_out);
        if (nets.d_aided) terms["visual_aided"] = generator_loss(nets.d_aided->forward(fakes.visual));
    }
    if (w.enable_rec_visual) {
        if (!nets.perceptual) throw ConfigurationError("reconstruction loss needs a perceptual backbone");
        terms["visual_rec"] = recon_loss(fakes.visual, in.visual_real, *nets.perceptual, w.lambda_l1).total;
    }
    if (w.enable_cgan_tactile) {
        const auto stacks =
            tactile_stacks(in.batch, in.sketch, in.visual_real, in.tactile_real, fakes.visual, fakes.tactile);
        if (stacks.paired == 0) throw ValidationError("tactile adversarial loss needs at least one paired patch");
        std::vector<PatchOutput> real_out;
        {
            nn::NoGradGuard ng;
            real_out = nets.d_tactile->forward(stacks.real);
        }
        const auto fake_out = nets.d_tactile->forward(stacks.fake);
        const auto t = tactile_gan_terms(real_out, fake_out, stacks.paired);
        terms["tactile_adv"] = t.loss_g;
        terms["tactile_fm"] = t.feature_match;
    }
    if (w.enable_rec_tactile) {
        if (!nets.perceptual) throw ConfigurationError("reconstruction loss needs a perceptual backbone");
        if (in.batch.paired_boxes.empty()) throw ValidationError("tactile reconstruction needs paired patches");
        terms["tactile_rec"] =
            recon_loss(tactile_prediction(in.batch, fakes.tactile), in.tactile_real, *nets.perceptual, w.lambda_l1).total;
    }
    return terms;
}

}  // namespace vts::objectives
