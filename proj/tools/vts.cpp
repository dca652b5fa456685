#include <algorithm>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <regex>

#include "CLI11.hpp"
#include "json.hpp"
#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"
#include "vts/data/capture.hpp"
#include "vts/data/preprocess.hpp"
#include "vts/eval/metrics.hpp"
#include "vts/geometry/geometry.hpp"
#include "vts/model/inference.hpp"
#include "vts/service/service.hpp"
#include "vts/synth/synthgen.hpp"
#include "vts/train/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace vts;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": malformed JSON: " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("cannot write " + path.string());
}

std::pair<int, int> parse_size(const std::string& s) {
    static const std::regex pattern(R"((\d+)x(\d+))");
    std::smatch m;
    if (!std::regex_match(s, m, pattern)) throw ValidationError("size must look like 1280x800, got '" + s + "'");
    const int w = std::stoi(m[1].str()), h = std::stoi(m[2].str());
    if (w <= 0 || h <= 0 || w > 16384 || h > 16384) throw ValidationError("size out of range: " + s);
    return {w, h};
}

// flag text -> JSON scalar: numbers and booleans keep their type, the rest are strings
json flag_value(const std::string& text) {
    try {
        const auto j = json::parse(text);
        if (j.is_primitive()) return j;
    } catch (const json::exception&) {
    }
    return text;
}

std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

void write_gradient_pair(const fs::path& dir, const geometry::GradientField& g, double gradient_max) {
    double lo = 0, hi = 0;
    bool first = true;
    for (const Plane* p : {&g.gx, &g.gy})
        for (double v : *p) {
            if (first) lo = hi = v, first = false;
            lo = std::min(lo, v), hi = std::max(hi, v);
        }
    if (hi <= lo) hi = lo + 1.0;
    png::write_gray16(dir / "gx.png", data::encode_gradient_raster(g.gx, lo, hi));
    png::write_gray16(dir / "gy.png", data::encode_gradient_raster(g.gy, lo, hi));
    write_json(dir / "range.json", {{"gmin", lo}, {"gmax", hi}, {"gradient_max", gradient_max}});
}

std::vector<Plane> read_sketch_dir(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<Plane> out;
    for (const auto& f : files) out.push_back(data::read_sketch(f));
    return out;
}

// Subcommands ---------------------------------------------------------------

struct SynthDataArgs {
    std::string spec, out;
    int size = 128, patches = 30, unseen = 3;
    std::uint64_t seed = 0;
};

int run_synth_data(const SynthDataArgs& a) {
    synth::SceneSpec spec = a.spec.empty() ? synth::default_scene_spec(a.size, a.seed, a.patches)
                                           : synth::parse_scene_spec(read_json(a.spec));
    spec.seed = a.seed;
    const auto gen = synth::generate_scene(spec);
    const fs::path out = a.out;
    data::save_manifest(gen.scene, out);
    synth::save_dense_truth(gen.truth, out / "dense_gt");
    write_json(out / "spec.json", synth::to_json(spec));
    if (a.unseen > 0) {
        fs::create_directories(out / "unseen");
        const auto sketches = synth::unseen_sketches(spec, a.unseen, a.seed);
        for (std::size_t i = 0; i < sketches.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "unseen_%02zu.png", i);
            png::write_image8(out / "unseen" / name, Image({sketches[i]}));
        }
    }
    std::cout << "wrote " << gen.scene.patches.size() << " patches for '" << gen.scene.object_id << "' to " << out.string()
              << "\n";
    return 0;
}

struct PreprocessArgs {
    std::string in, out;
    int patches_per_touch = 8;
    std::uint64_t seed = 0;
};

int run_preprocess(const PreprocessArgs& a) {
    const auto scene = data::build_scene(data::load_capture(a.in), a.patches_per_touch, a.seed);
    data::save_manifest(scene, a.out);
    std::cout << "wrote " << scene.patches.size() << " patches to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string config, data, out;
    bool resume = false, ablations = false;
    std::map<std::string, std::string> overrides;  // config key -> flag text
    std::map<std::string, std::string> loss_overrides;
    std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
    json cfg = a.config.empty() ? train::to_json(train::TrainConfig{}) : train::to_json(train::load_train_config(a.config));
    for (const auto& [k, v] : a.overrides) cfg[k] = flag_value(v);
    for (const auto& [k, v] : a.loss_overrides) cfg["loss"][k] = flag_value(v);
    if (a.seed) cfg["seed"] = *a.seed;
    const auto config = train::parse_train_config(cfg);
    const auto scene = data::load_manifest(a.data);
    if (a.ablations) {
        const auto results = train::run_ablations(config, scene, train::standard_variants(config.loss), a.out);
        for (const auto& r : results) std::cout << r.checkpoint.string() << "\n";
        return 0;
    }
    std::int64_t last = -1;
    const auto r = train::train(config, scene, a.out, a.resume, [&](const train::StepRecord& s) {
        if (s.iteration - last >= 50 || s.iteration + 1 == config.iterations) {
            last = s.iteration;
            std::cout << "iter " << s.iteration << "  loss_g " << s.loss_g << "  loss_d " << s.loss_d_visual + s.loss_d_tactile
                      << "  visual_l1 " << s.visual_l1 << "  (" << s.seconds << " s)\n"
                      << std::flush;
        }
    });
    std::cout << "checkpoint " << r.checkpoint.string() << "\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint, data, unseen, dense, out, backbone;
    std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
    const auto model = train::load_model(a.checkpoint);
    const auto scene = data::load_manifest(a.data);
    const auto backbone = a.backbone.empty() ? model::FeatureBackbone::standard() : model::FeatureBackbone::from_file(a.backbone);
    eval::ProtocolInputs in;
    in.scene = &scene;
    in.split = model.split;
    if (!a.unseen.empty()) in.unseen_sketches = read_sketch_dir(a.unseen);
    fs::path dense = a.dense;
    if (dense.empty() && fs::exists(fs::path(a.data) / "dense_gt" / "range.json")) dense = fs::path(a.data) / "dense_gt";
    if (!dense.empty()) {
        const auto truth = synth::load_dense_truth(dense);
        in.dense_truth = truth.grad;
        in.dense_mask = truth.mask;
    }
    const eval::Synthesizer synth = [&](const Plane& sketch, const Mask& mask) {
        return model::synthesize(*model.generator, sketch, mask, model.gradient_max);
    };
    const auto report = eval::run_protocol(synth, in, *backbone);
    json j = report.to_json();
    j["checkpoint"] = a.checkpoint;
    j["iteration"] = model.iteration;
    if (a.out.empty()) std::cout << j.dump(2) << "\n";
    else write_json(a.out, j);
    return 0;
}

struct SynthArgs {
    std::string checkpoint, sketch, out, device_size;
    std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
    const auto model = train::load_model(a.checkpoint);
    const Plane sketch = data::read_sketch(a.sketch);
    service::SynthesisOptions opt;
    if (!a.device_size.empty()) std::tie(opt.device_cols, opt.device_rows) = parse_size(a.device_size);
    const auto r = service::synthesize(model, sketch, opt);
    const fs::path out = a.out;
    fs::create_directories(out);
    png::write_image8(out / "visual.png", r.visual);
    png::write_image8(out / "normal.png", r.normal);
    write_gradient_pair(out, r.tactile, model.gradient_max);
    geometry::write_height_png(out / "height.png", r.height);
    geometry::write_friction_png(out / "friction.png", r.friction);
    png::write_mask(out / "mask.png", r.object_mask);
    std::cout << "wrote visual, tactile (gx/gy), normal, height and friction to " << out.string() << "\n";
    return 0;
}

struct FrictionArgs {
    std::string gx, gy, range, mask, out, device_size = "1280x800";
    std::optional<double> gmin, gmax, gradient_max;
    std::uint64_t seed = 0;
};

int run_export_friction(const FrictionArgs& a) {
    const auto [cols, rows] = parse_size(a.device_size);
    double lo = 0, hi = 0;
    std::optional<double> scale = a.gradient_max;
    fs::path range = a.range;
    if (range.empty() && !(a.gmin && a.gmax)) {
        range = fs::path(a.gx).parent_path() / "range.json";
        if (!fs::exists(range))
            throw ValidationError("no gradient range: pass --gmin/--gmax or --range, or keep range.json next to the gx file");
    }
    if (!range.empty()) {
        const auto j = read_json(range);
        lo = j.at("gmin").get<double>();
        hi = j.at("gmax").get<double>();
        if (!scale && j.contains("gradient_max")) scale = j["gradient_max"].get<double>();
    }
    if (a.gmin) lo = *a.gmin;
    if (a.gmax) hi = *a.gmax;
    const auto g = data::decode_gradient_files(a.gx, a.gy, lo, hi);
    const Mask mask = a.mask.empty() ? Mask(g.gx.rows(), g.gx.cols(), 1) : png::read_mask(a.mask);
    if (!scale) {
        double m = 0.0;
        for (std::size_t i = 0; i < g.gx.size(); ++i) m = std::max(m, std::hypot(g.gx.data()[i], g.gy.data()[i]));
        scale = m > 0.0 ? m : 1.0;
    }
    geometry::write_friction_png(a.out, geometry::friction_map(g, mask, cols, rows, *scale));
    std::cout << "wrote " << cols << "x" << rows << " friction map to " << a.out << "\n";
    return 0;
}

service::Server* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

struct ServeArgs {
    std::string host = "0.0.0.0", models;
    int port = 8080, max_side = 2048;
    std::uint64_t seed = 0;
};

int run_serve(const ServeArgs& a) {
    service::Registry registry;
    if (!a.models.empty())
        for (const auto& id : registry.load_directory(a.models)) std::cout << "loaded model '" << id << "'\n";
    service::Server server(registry, service::ServiceConfig{a.max_side});
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on " << a.host << ":" << a.port << "\n" << std::flush;
    server.run(a.host, a.port);
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sketch-conditioned visual and tactile synthesis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "vts 1.0.0");

    SynthDataArgs sd;
    auto* c_sd = app.add_subcommand("synth-data", "Generate a synthetic garment dataset with dense tactile truth");
    c_sd->add_option("--spec", sd.spec, "Scene spec JSON (default: built-in garment)")->check(CLI::ExistingFile);
    c_sd->add_option("--out", sd.out, "Output dataset directory")->required();
    c_sd->add_option("--size", sd.size, "Canvas size for the built-in scene")->check(CLI::Range(64, 4096));
    c_sd->add_option("--patches", sd.patches, "Tactile patches for the built-in scene")->check(CLI::Range(1, 100000));
    c_sd->add_option("--unseen", sd.unseen, "Unseen sketch variants to write")->check(CLI::Range(0, 1000));
    c_sd->add_option("--seed", sd.seed, "Random seed");

    PreprocessArgs pp;
    auto* c_pp = app.add_subcommand("preprocess", "Turn a raw capture (touches + images) into a dataset");
    c_pp->add_option("--in", pp.in, "capture.json or its directory")->required()->check(CLI::ExistingPath);
    c_pp->add_option("--out", pp.out, "Output dataset directory")->required();
    c_pp->add_option("--patches-per-touch", pp.patches_per_touch, "Patches cut from each touch")->check(CLI::Range(1, 10000));
    c_pp->add_option("--seed", pp.seed, "Random seed");

    TrainArgs tr;
    std::uint64_t train_seed = 0;
    auto* c_tr = app.add_subcommand("train", "Train one object");
    c_tr->add_option("--config", tr.config, "Training config JSON")->check(CLI::ExistingFile);
    c_tr->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingPath);
    c_tr->add_option("--out", tr.out, "Run directory")->required();
    c_tr->add_flag("--resume", tr.resume, "Continue from the newest checkpoint in --out");
    c_tr->add_flag("--ablations", tr.ablations, "Train the full model and one variant per disabled loss term");
    auto* seed_opt = c_tr->add_option("--seed", train_seed, "Random seed (overrides the config)");
    // one flag per config key
    const json defaults = train::to_json(train::TrainConfig{});
    for (const auto& [key, value] : defaults.items()) {
        if (key == "seed") continue;
        if (key == "loss") {
            for (const auto& [lk, lv] : value.items())
                c_tr->add_option_function<std::string>("--" + dashed(lk), [&tr, k = lk](const std::string& v) {
                    tr.loss_overrides[k] = v;
                }, "Loss setting '" + lk + "' (default " + lv.dump() + ")");
            continue;
        }
        c_tr->add_option_function<std::string>("--" + dashed(key), [&tr, k = key](const std::string& v) {
            tr.overrides[k] = v;
        }, "Config '" + key + "' (default " + value.dump() + ")");
    }

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Run the evaluation protocol on a checkpoint");
    c_ev->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    c_ev->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingPath);
    c_ev->add_option("--unseen", ev.unseen, "Directory of unseen sketch PNGs")->check(CLI::ExistingDirectory);
    c_ev->add_option("--dense", ev.dense, "Dense tactile truth directory (default: <data>/dense_gt if present)")
        ->check(CLI::ExistingDirectory);
    c_ev->add_option("--backbone", ev.backbone, "Feature backbone weights archive")->check(CLI::ExistingFile);
    c_ev->add_option("--out", ev.out, "Report JSON (default: stdout)");
    c_ev->add_option("--seed", ev.seed, "Random seed");

    SynthArgs sy;
    auto* c_sy = app.add_subcommand("synth", "Synthesize outputs for one sketch");
    c_sy->add_option("--checkpoint", sy.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    c_sy->add_option("--sketch", sy.sketch, "Sketch PNG")->required()->check(CLI::ExistingFile);
    c_sy->add_option("--out", sy.out, "Output directory")->required();
    c_sy->add_option("--device-size", sy.device_size, "Friction map size WxH (default: sketch size)");
    c_sy->add_option("--seed", sy.seed, "Random seed");

    FrictionArgs fr;
    auto* c_fr = app.add_subcommand("export-friction", "Convert a tactile gradient pair to a device friction map");
    c_fr->add_option("--gx", fr.gx, "16-bit gx PNG")->required()->check(CLI::ExistingFile);
    c_fr->add_option("--gy", fr.gy, "16-bit gy PNG")->required()->check(CLI::ExistingFile);
    c_fr->add_option("--range", fr.range, "JSON with gmin/gmax (default: range.json beside --gx)")->check(CLI::ExistingFile);
    c_fr->add_option("--gmin", fr.gmin, "Value of code 0");
    c_fr->add_option("--gmax", fr.gmax, "Value of code 65535");
    c_fr->add_option("--gradient-max", fr.gradient_max, "Gradient normalizer (default: from range.json, else max |g|)");
    c_fr->add_option("--mask", fr.mask, "Object mask PNG (default: everything)")->check(CLI::ExistingFile);
    c_fr->add_option("--device-size", fr.device_size, "Output size WxH");
    c_fr->add_option("--out", fr.out, "Output PNG")->required();
    c_fr->add_option("--seed", fr.seed, "Random seed");

    ServeArgs sv;
    auto* c_sv = app.add_subcommand("serve", "Run the HTTP inference service");
    c_sv->add_option("--port", sv.port, "Port")->check(CLI::Range(1, 65535));
    c_sv->add_option("--host", sv.host, "Bind address");
    c_sv->add_option("--models", sv.models, "Directory of checkpoints")->check(CLI::ExistingDirectory);
    c_sv->add_option("--max-side", sv.max_side, "Largest accepted sketch side")->check(CLI::Range(32, 16384));
    c_sv->add_option("--seed", sv.seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    try {
        if (*c_sd) return run_synth_data(sd);
        if (*c_pp) return run_preprocess(pp);
        if (*c_tr) {
            if (*seed_opt) tr.seed = train_seed;
            return run_train(tr);
        }
        if (*c_ev) return run_eval(ev);
        if (*c_sy) return run_synth(sy);
        if (*c_fr) return run_export_friction(fr);
        if (*c_sv) return run_serve(sv);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ConfigurationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kUsageError;
}
