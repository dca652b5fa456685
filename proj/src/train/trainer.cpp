#include "vts/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "vts/core/error.hpp"
#include "vts/nn/archive.hpp"
#include "vts/model/encoding.hpp"
#include "vts/nn/ops.hpp"

namespace vts::train {

namespace {

constexpr const char* kFormat = "vts-checkpoint";

// stream offsets for the per-iteration seed sequence
constexpr std::uint64_t kInitStream = 0x1000;
constexpr std::uint64_t kAugmentStream = 0;
constexpr std::uint64_t kPatchStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

std::uint64_t step_seed(std::uint64_t seed, std::int64_t it, std::uint64_t stream) {
    return derive_seed(seed, (static_cast<std::uint64_t>(it) << 2) + stream);
}

nn::NamedTensors prefixed(const std::string& prefix, const nn::NamedTensors& in) {
    nn::NamedTensors out;
    for (const auto& [name, t] : in) out.emplace_back(prefix + name, t);
    return out;
}

nn::NamedTensors module_state(const std::string& prefix, const nn::Module& m) {
    auto out = prefixed(prefix, m.named_parameters());
    for (auto& e : prefixed(prefix, m.named_buffers())) out.push_back(e);
    return out;
}

nlohmann::json split_json(const data::PatchSplit& s) { return {{"train", s.train}, {"val", s.val}, {"test", s.test}}; }

data::PatchSplit parse_split(const nlohmann::json& j) {
    data::PatchSplit s;
    s.train = j.at("train").get<std::vector<int>>();
    s.val = j.at("val").get<std::vector<int>>();
    s.test = j.at("test").get<std::vector<int>>();
    return s;
}

std::string fnv_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

void set_trainable(nn::Module* m, bool on) {
    if (m) nn::set_requires_grad(*m, on);
}

}  // namespace

void TrainConfig::validate() const {
    if (iterations < 0) throw ConfigurationError("config: iterations must be >= 0");
    if (!(lr > 0.0)) throw ConfigurationError("config: lr must be > 0");
    if (lr_aided && !(*lr_aided > 0.0)) throw ConfigurationError("config: lr_aided must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigurationError("config: beta1 and beta2 must lie in [0, 1)");
    if (pad < 0 || crop < 0 || (pad > 0 && crop > 0 && pad < crop))
        throw ConfigurationError("config: pad must be >= crop");
    if (n_paired < 0 || n_unpaired < 0) throw ConfigurationError("config: patch counts must be >= 0");
    if (loss.enable_cgan_tactile && n_paired == 0)
        throw ConfigurationError("config: the tactile adversarial term needs n_paired >= 1");
    if (loss.enable_rec_tactile && n_paired == 0)
        throw ConfigurationError("config: tactile reconstruction needs n_paired >= 1");
    if (dropout < 0.0f || dropout >= 1.0f) throw ConfigurationError("config: dropout must lie in [0, 1)");
    if (d_scales < 1) throw ConfigurationError("config: d_scales must be >= 1");
    if (checkpoint_every < 0) throw ConfigurationError("config: checkpoint_every must be >= 0");
    if (device != "cpu") throw ConfigurationError("config: device '" + device + "' is not available (cpu only)");
    loss.validate();
}

TrainConfig parse_train_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigurationError("config: expected a JSON object");
    static const std::set<std::string> known = {
        "iterations", "seed",     "lr",      "beta1",   "beta2",        "lr_aided", "augment", "pad",
        "crop",       "n_paired", "n_unpaired", "loss", "vision_aided", "backbone", "dropout", "d_scales",
        "split_seed", "checkpoint_every", "device"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigurationError("config: unknown key '" + key + "'");
    TrainConfig c;
    try {
        c.iterations = j.value("iterations", c.iterations);
        c.seed = j.value("seed", c.seed);
        c.lr = j.value("lr", c.lr);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        if (j.contains("lr_aided") && !j.at("lr_aided").is_null()) c.lr_aided = j.at("lr_aided").get<double>();
        c.augment = j.value("augment", c.augment);
        c.pad = j.value("pad", c.pad);
        c.crop = j.value("crop", c.crop);
        c.n_paired = j.value("n_paired", c.n_paired);
        c.n_unpaired = j.value("n_unpaired", c.n_unpaired);
        if (j.contains("loss")) c.loss = objectives::parse_loss_weights(j.at("loss"));
        c.vision_aided = j.value("vision_aided", c.vision_aided);
        c.backbone = j.value("backbone", c.backbone);
        c.dropout = j.value("dropout", c.dropout);
        c.d_scales = j.value("d_scales", c.d_scales);
        c.split_seed = j.value("split_seed", c.split_seed);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.device = j.value("device", c.device);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError("config: " + path.string() + ": " + e.what());
    }
    return parse_train_config(j);
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j = {{"iterations", c.iterations},
                        {"seed", c.seed},
                        {"lr", c.lr},
                        {"beta1", c.beta1},
                        {"beta2", c.beta2},
                        {"lr_aided", nullptr},
                        {"augment", c.augment},
                        {"pad", c.pad},
                        {"crop", c.crop},
                        {"n_paired", c.n_paired},
                        {"n_unpaired", c.n_unpaired},
                        {"loss", objectives::to_json(c.loss)},
                        {"vision_aided", c.vision_aided},
                        {"backbone", c.backbone},
                        {"dropout", c.dropout},
                        {"d_scales", c.d_scales},
                        {"split_seed", c.split_seed},
                        {"checkpoint_every", c.checkpoint_every},
                        {"device", c.device}};
    if (c.lr_aided) j["lr_aided"] = *c.lr_aided;
    return j;
}

std::string config_fingerprint(const TrainConfig& c) {
    nlohmann::json j = to_json(c);
    j.erase("iterations");
    j.erase("checkpoint_every");
    j.erase("device");
    return fnv_hex(j.dump());
}

nlohmann::json StepRecord::to_json() const {
    return {{"iteration", iteration},  {"terms", terms},         {"loss_g", loss_g},
            {"loss_d_visual", loss_d_visual}, {"loss_d_tactile", loss_d_tactile}, {"visual_l1", visual_l1},
            {"seconds", seconds}};
}

Trainer::Trainer(TrainConfig config, data::SceneRecord scene) : config_(std::move(config)), scene_(std::move(scene)) {
    config_.validate();
    data::validate(scene_);
    split_ = data::split_patches(scene_.patches, {6, 2, 2}, config_.split_seed);
    if (static_cast<std::size_t>(config_.n_paired) > split_.train.size())
        throw ConfigurationError("config: n_paired = " + std::to_string(config_.n_paired) + " but the training split has " +
                                 std::to_string(split_.train.size()) + " patches");
    backbone_ = config_.backbone.empty() ? model::FeatureBackbone::standard()
                                         : model::FeatureBackbone::from_file(config_.backbone);
    g_ = std::make_shared<model::Generator>(model::GeneratorConfig{model::kInputChannels, config_.dropout});
    d_visual_ = std::make_shared<model::MultiScaleDiscriminator>(4, config_.d_scales);
    d_tactile_ = std::make_shared<model::MultiScaleDiscriminator>(6, config_.d_scales);
    if (config_.vision_aided) d_aided_ = std::make_shared<model::VisionAidedDiscriminator>(backbone_);

    Rng init(derive_seed(config_.seed, kInitStream));
    nn::init_normal(*g_, init);
    nn::init_normal(*d_visual_, init);
    nn::init_normal(*d_tactile_, init);
    if (d_aided_) nn::init_normal(*d_aided_, init);

    const nn::AdamOptions opts{config_.lr, config_.beta1, config_.beta2, 1e-8};
    opt_g_ = std::make_unique<nn::Adam>(g_->named_parameters(), opts);
    auto dparams = prefixed("d_visual.", d_visual_->named_parameters());
    for (auto& e : prefixed("d_tactile.", d_tactile_->named_parameters())) dparams.push_back(e);
    opt_d_ = std::make_unique<nn::Adam>(dparams, opts);
    if (d_aided_) {
        nn::AdamOptions a = opts;
        a.lr = config_.lr_aided.value_or(config_.lr);
        opt_aided_ = std::make_unique<nn::Adam>(d_aided_->named_parameters(), a);
    }
}

objectives::Networks Trainer::networks() {
    return {g_.get(), d_visual_.get(), d_tactile_.get(), d_aided_.get(), backbone_.get()};
}

objectives::StepInputs Trainer::view(std::int64_t it) const {
    Image visual = scene_.visual;
    Plane sketch = scene_.sketch;
    Mask mask = scene_.object_mask;
    std::vector<data::TactilePatch> patches = scene_.patches;
    if (config_.augment) {
        const int crop = config_.crop > 0 ? config_.crop : std::max(scene_.rows(), scene_.cols());
        data::AugmentConfig ac = data::AugmentConfig::for_crop(crop);
        if (config_.pad > 0) ac.pad = config_.pad;
        auto aug = data::augment(scene_, ac, step_seed(config_.seed, it, kAugmentStream));
        for (auto& p : patches) p.bbox = aug.to_crop(p.bbox);
        visual = std::move(aug.visual);
        sketch = std::move(aug.sketch);
        mask = std::move(aug.object_mask);
    }
    std::vector<int> usable;
    for (int id : split_.train)
        for (const auto& p : patches)
            if (p.id == id && p.bbox.inside(mask.rows(), mask.cols())) usable.push_back(id);
    Rng rng(step_seed(config_.seed, it, kPatchStream));
    const int n_paired = std::min<int>(config_.n_paired, static_cast<int>(usable.size()));
    auto batch = objectives::sample_patch_batch(patches, usable, mask, n_paired, config_.n_unpaired, rng);
    return objectives::make_step_inputs(visual, sketch, mask, patches, std::move(batch), scene_.gradient_max);
}

StepRecord Trainer::step() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& w = config_.loss;
    StepRecord rec;
    rec.iteration = iteration_;

    const auto in = view(iteration_);
    Rng drop(step_seed(config_.seed, iteration_, kDropoutStream));
    auto nets = networks();
    g_->train();
    d_visual_->train();
    d_tactile_->train();
    const auto fakes = objectives::generate(nets, in, &drop);
    {
        double s = 0.0;
        const auto& a = fakes.visual.values();
        const auto& b = in.visual_real.values();
        for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
        rec.visual_l1 = s / static_cast<double>(a.size());
    }

    auto check = [&](double v, const char* what) {
        if (!std::isfinite(v))
            throw NumericalError(std::string("non-finite ") + what + " at iteration " + std::to_string(iteration_));
    };

    // discriminators
    if (w.enable_cgan_visual || w.enable_cgan_tactile) {
        const auto terms = objectives::discriminator_terms(nets, in, fakes, w);
        const auto tot = objectives::total_loss(terms, w, config_.vision_aided, objectives::Phase::discriminator);
        rec.loss_d_visual = tot.d_visual.item();
        rec.loss_d_tactile = tot.d_tactile.item();
        check(rec.loss_d_visual, "visual discriminator loss");
        check(rec.loss_d_tactile, "tactile discriminator loss");
        for (const auto& [k, v] : tot.weighted) rec.terms[k] = v;
        const nn::Tensor d_total = nn::add(tot.d_visual, tot.d_tactile);
        if (d_total.requires_grad()) {
            d_total.backward();
            opt_d_->step();
            if (opt_aided_) opt_aided_->step();
        }
        opt_d_->zero_grad();
        if (opt_aided_) opt_aided_->zero_grad();
    }

    // generator, with the discriminators frozen
    set_trainable(d_visual_.get(), false);
    set_trainable(d_tactile_.get(), false);
    set_trainable(d_aided_.get(), false);
    try {
        const auto terms = objectives::generator_terms(nets, in, fakes, w);
        const auto tot = objectives::total_loss(terms, w, config_.vision_aided, objectives::Phase::generator);
        rec.loss_g = tot.generator.item();
        check(rec.loss_g, "generator loss");
        for (const auto& [k, v] : tot.weighted) rec.terms[k] = v;
        if (tot.generator.requires_grad()) {
            tot.generator.backward();
            opt_g_->step();
        }
        opt_g_->zero_grad();
    } catch (...) {
        set_trainable(d_visual_.get(), true);
        set_trainable(d_tactile_.get(), true);
        set_trainable(d_aided_.get(), true);
        throw;
    }
    set_trainable(d_visual_.get(), true);
    set_trainable(d_tactile_.get(), true);
    set_trainable(d_aided_.get(), true);

    ++iteration_;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

void Trainer::save(const std::filesystem::path& path) const {
    nn::Archive a;
    a.meta = {{"format", kFormat},
              {"iteration", iteration_},
              {"fingerprint", config_fingerprint(config_)},
              {"config", to_json(config_)},
              {"object_id", scene_.object_id},
              {"gradient_max", scene_.gradient_max},
              {"rows", scene_.rows()},
              {"cols", scene_.cols()},
              {"split", split_json(split_)},
              {"adam_steps", {{"g", opt_g_->steps()}, {"d", opt_d_->steps()}, {"aided", opt_aided_ ? opt_aided_->steps() : 0}}}};
    a.put_all("generator.", module_state("", *g_));
    a.put_all("d_visual.", module_state("", *d_visual_));
    a.put_all("d_tactile.", module_state("", *d_tactile_));
    if (d_aided_) a.put_all("d_aided.", module_state("", *d_aided_));
    a.put_all("opt_g.", opt_g_->state());
    a.put_all("opt_d.", opt_d_->state());
    if (opt_aided_) a.put_all("opt_aided.", opt_aided_->state());
    a.save(path);
}

void Trainer::load(const std::filesystem::path& path) {
    const auto a = nn::Archive::load(path);
    if (a.meta.value("format", "") != kFormat) throw ValidationError("checkpoint: " + path.string() + " is not a training checkpoint");
    const std::string fp = a.meta.value("fingerprint", "");
    if (fp != config_fingerprint(config_))
        throw ValidationError("checkpoint: configuration fingerprint mismatch (checkpoint " + fp + ", config " +
                              config_fingerprint(config_) + "); the configuration changed since it was written");
    a.get_all("generator.", module_state("", *g_));
    a.get_all("d_visual.", module_state("", *d_visual_));
    a.get_all("d_tactile.", module_state("", *d_tactile_));
    if (d_aided_) a.get_all("d_aided.", module_state("", *d_aided_));
    a.get_all("opt_g.", opt_g_->state());
    a.get_all("opt_d.", opt_d_->state());
    if (opt_aided_) a.get_all("opt_aided.", opt_aided_->state());
    const auto& steps = a.meta.at("adam_steps");
    opt_g_->set_steps(steps.at("g").get<std::int64_t>());
    opt_d_->set_steps(steps.at("d").get<std::int64_t>());
    if (opt_aided_) opt_aided_->set_steps(steps.at("aided").get<std::int64_t>());
    iteration_ = a.meta.at("iteration").get<std::int64_t>();
    split_ = parse_split(a.meta.at("split"));
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
    const auto a = nn::Archive::load(checkpoint);
    if (a.meta.value("format", "") != kFormat)
        throw ValidationError("checkpoint: " + checkpoint.string() + " is not a model checkpoint");
    LoadedModel m;
    try {
        m.config = parse_train_config(a.meta.at("config"));
        m.gradient_max = a.meta.at("gradient_max").get<double>();
        m.object_id = a.meta.at("object_id").get<std::string>();
        m.iteration = a.meta.at("iteration").get<std::int64_t>();
        m.rows = a.meta.at("rows").get<int>();
        m.cols = a.meta.at("cols").get<int>();
        m.split = parse_split(a.meta.at("split"));
        m.fingerprint = a.meta.at("fingerprint").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: malformed metadata: ") + e.what());
    }
    if (m.fingerprint != config_fingerprint(m.config))
        throw ValidationError("checkpoint: fingerprint does not match the stored configuration");
    m.generator = std::make_shared<model::Generator>(model::GeneratorConfig{model::kInputChannels, m.config.dropout});
    a.get_all("generator.", module_state("", *m.generator));
    nn::set_requires_grad(*m.generator, false);
    m.generator->eval();
    return m;
}

namespace {

std::optional<std::pair<std::int64_t, std::filesystem::path>> newest_checkpoint(const std::filesystem::path& dir) {
    static const std::regex pattern(R"(checkpoint_(\d+)\.vtsckpt)");
    std::optional<std::pair<std::int64_t, std::filesystem::path>> best;
    if (!std::filesystem::exists(dir)) return best;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (!std::regex_match(name, m, pattern)) continue;
        const std::int64_t it = std::stoll(m[1].str());
        if (!best || it > best->first) best = {{it, e.path()}};
    }
    return best;
}

std::string checkpoint_name(std::int64_t it) {
    std::ostringstream os;
    os << "checkpoint_";
    os.width(7);
    os.fill('0');
    os << it << ".vtsckpt";
    return os.str();
}

}  // namespace

TrainResult train(const TrainConfig& config, const data::SceneRecord& scene, const std::filesystem::path& out_dir,
                  bool resume, const std::function<void(const StepRecord&)>& on_step) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream cfg(out_dir / "config.json");
        cfg << to_json(config).dump(2) << "\n";
        if (!cfg) throw IoError("cannot write " + (out_dir / "config.json").string());
    }
    Trainer t(config, scene);
    std::string last_good = "none";
    const auto metrics_path = out_dir / "metrics.jsonl";
    std::vector<std::string> kept;
    if (resume) {
        if (const auto ck = newest_checkpoint(out_dir)) {
            t.load(ck->second);
            last_good = ck->second.string();
            std::ifstream old(metrics_path);
            for (std::string line; std::getline(old, line);) {
                if (line.empty()) continue;
                if (nlohmann::json::parse(line).at("iteration").get<std::int64_t>() < t.iteration()) kept.push_back(line);
            }
        }
    }
    std::ofstream metrics(metrics_path, std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + metrics_path.string());
    for (const auto& line : kept) metrics << line << "\n";

    while (t.iteration() < config.iterations) {
        StepRecord rec;
        try {
            rec = t.step();
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + "; last good checkpoint: " + last_good);
        }
        metrics << rec.to_json().dump() << "\n";
        metrics.flush();
        if (!metrics) throw IoError("cannot write " + metrics_path.string() + " (disk full?)");
        if (on_step) on_step(rec);
        if (config.checkpoint_every > 0 && t.iteration() % config.checkpoint_every == 0) {
            const auto p = out_dir / checkpoint_name(t.iteration());
            t.save(p);
            last_good = p.string();
        }
    }
    TrainResult r;
    r.checkpoint = out_dir / "model.vtsckpt";
    t.save(r.checkpoint);
    r.metrics = metrics_path;
    r.iterations = t.iteration();
    return r;
}

TrainResult train(const TrainConfig& config, const std::filesystem::path& dataset,
                  const std::filesystem::path& out_dir, bool resume) {
    return train(config, data::load_manifest(dataset), out_dir, resume);
}

std::vector<Variant> standard_variants(const objectives::LossWeights& base) {
    std::vector<Variant> v{{"full", base}};
    auto add = [&](const char* name, bool objectives::LossWeights::*flag) {
        Variant x{name, base};
        x.loss.*flag = false;
        v.push_back(x);
    };
    add("no_cgan_visual", &objectives::LossWeights::enable_cgan_visual);
    add("no_cgan_tactile", &objectives::LossWeights::enable_cgan_tactile);
    add("no_rec_visual", &objectives::LossWeights::enable_rec_visual);
    add("no_rec_tactile", &objectives::LossWeights::enable_rec_tactile);
    return v;
}

std::vector<TrainResult> run_ablations(const TrainConfig& config, const data::SceneRecord& scene,
                                       const std::vector<Variant>& variants, const std::filesystem::path& out_dir) {
    std::vector<TrainResult> out;
    std::set<std::string> names;
    for (const auto& v : variants)
        if (!names.insert(v.name).second) throw ConfigurationError("ablation: duplicate variant name '" + v.name + "'");
    for (const auto& v : variants) {
        TrainConfig c = config;
        c.loss = v.loss;
        out.push_back(train(c, scene, out_dir / v.name));
    }
    return out;
}

}  // namespace vts::train
