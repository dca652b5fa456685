#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vts/data/augment.hpp"
#include "vts/data/scene.hpp"
#include "vts/model/backbone.hpp"
#include "vts/model/networks.hpp"
#include "vts/nn/optim.hpp"
#include "vts/objectives/objectives.hpp"

namespace vts::train {

struct TrainConfig {
    std::int64_t iterations = 2000;
    std::uint64_t seed = 0;
    double lr = 1e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    std::optional<double> lr_aided;  // vision-aided head; defaults to lr
    bool augment = true;
    int pad = 0;   // 0: scaled from the crop
    int crop = 0;  // 0: scene size
    int n_paired = 8;
    int n_unpaired = 8;
    objectives::LossWeights loss;
    bool vision_aided = true;
    std::string backbone;  // weights archive; empty = built-in frozen extractor
    float dropout = 0.5f;
    int d_scales = 2;
    std::uint64_t split_seed = 0;
    std::int64_t checkpoint_every = 500;
    std::string device = "cpu";

    void validate() const;
};

/// Missing keys keep defaults, unknown keys are rejected with
/// ConfigurationError.
TrainConfig parse_train_config(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);
nlohmann::json to_json(const TrainConfig& c);

/// Hash of every setting that shapes the networks or the per-step
/// computation (everything except iteration count, cadence and device).
std::string config_fingerprint(const TrainConfig& c);

/// One line of the metrics log.
struct StepRecord {
    std::int64_t iteration = 0;
    std::map<std::string, double> terms;  // weighted, as they enter the totals
    double loss_g = 0.0;
    double loss_d_visual = 0.0;
    double loss_d_tactile = 0.0;
    double visual_l1 = 0.0;  // mean |G_I - I| on the training view, before the update
    double seconds = 0.0;

    nlohmann::json to_json() const;
};

class Trainer {
public:
    Trainer(TrainConfig config, data::SceneRecord scene);

    /// One D update followed by one G update on a fresh view and patch batch.
    StepRecord step();

    std::int64_t iteration() const { return iteration_; }
    const TrainConfig& config() const { return config_; }
    const data::SceneRecord& scene() const { return scene_; }
    const data::PatchSplit& split() const { return split_; }

    model::Generator& generator() { return *g_; }
    model::MultiScaleDiscriminator& d_visual() { return *d_visual_; }
    model::MultiScaleDiscriminator& d_tactile() { return *d_tactile_; }
    model::VisionAidedDiscriminator* d_aided() { return d_aided_.get(); }
    const model::FeatureBackbone& backbone() const { return *backbone_; }

    /// Parameters, buffers, optimizer moments, iteration, split and
    /// fingerprint.
    void save(const std::filesystem::path& path) const;
    /// Throws ValidationError when the stored fingerprint differs from this
    /// trainer's configuration.
    void load(const std::filesystem::path& path);

    /// Inputs for iteration `it` (augmentation and patch sampling are a pure
    /// function of seed and iteration).
    objectives::StepInputs view(std::int64_t it) const;

private:
    objectives::Networks networks();

    TrainConfig config_;
    data::SceneRecord scene_;
    data::PatchSplit split_;
    std::shared_ptr<model::FeatureBackbone> backbone_;
    std::shared_ptr<model::Generator> g_;
    std::shared_ptr<model::MultiScaleDiscriminator> d_visual_;
    std::shared_ptr<model::MultiScaleDiscriminator> d_tactile_;
    std::shared_ptr<model::VisionAidedDiscriminator> d_aided_;
    std::unique_ptr<nn::Adam> opt_g_, opt_d_, opt_aided_;
    std::int64_t iteration_ = 0;
};

/// A trained generator as stored in a checkpoint, ready for inference.
struct LoadedModel {
    std::shared_ptr<model::Generator> generator;  // evaluation mode
    double gradient_max = 1.0;
    std::string object_id;
    std::string fingerprint;
    std::int64_t iteration = 0;
    TrainConfig config;
    data::PatchSplit split;
    int rows = 0, cols = 0;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

struct TrainResult {
    std::filesystem::path checkpoint;  // final
    std::filesystem::path metrics;
    std::int64_t iterations = 0;
};

/// Trains one object. Layout under out_dir: config.json, metrics.jsonl,
/// checkpoint_<iteration>.vtsckpt at the configured cadence and
/// model.vtsckpt at the end. With `resume`, continues from the newest
/// checkpoint in out_dir. `on_step` is called after every step.
TrainResult train(const TrainConfig& config, const data::SceneRecord& scene, const std::filesystem::path& out_dir,
                  bool resume = false, const std::function<void(const StepRecord&)>& on_step = {});
TrainResult train(const TrainConfig& config, const std::filesystem::path& dataset,
                  const std::filesystem::path& out_dir, bool resume = false);

/// Named flag combination for ablation runs.
struct Variant {
    std::string name;
    objectives::LossWeights loss;
};

/// full plus one variant per disabled flag.
std::vector<Variant> standard_variants(const objectives::LossWeights& base = {});
/// Trains each variant into out_dir/<name>/.
std::vector<TrainResult> run_ablations(const TrainConfig& config, const data::SceneRecord& scene,
                                       const std::vector<Variant>& variants, const std::filesystem::path& out_dir);

}  // namespace vts::train
