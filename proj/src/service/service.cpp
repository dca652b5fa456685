#include "vts/service/service.hpp"

#include <chrono>
#include <cmath>
#include <regex>

#include "httplib.h"
#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"
#include "vts/data/preprocess.hpp"
#include "vts/data/scene.hpp"
#include "vts/model/inference.hpp"

namespace vts::service {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json png_artifact(const png::RawImage& raw) {
    return {{"content_type", "image/png"}, {"data", base64_encode(png::encode(raw))}};
}

png::RawImage gray16(const Plane& values, double lo, double hi) {
    return png::from_gray16(data::encode_gradient_raster(values, lo, hi));
}

std::pair<double, double> range_of(const Plane& a, const Plane* b = nullptr) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const Plane* p : {&a, b}) {
        if (!p) continue;
        for (double v : *p) {
            if (first) lo = hi = v, first = false;
            lo = std::min(lo, v), hi = std::max(hi, v);
        }
    }
    if (hi <= lo) hi = lo + 1.0;
    return {lo, hi};
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        for (int s = 18; s >= 0; s -= 6) out += kAlphabet[(v >> s) & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    int lookup[256];
    std::fill(std::begin(lookup), std::end(lookup), -1);
    for (int k = 0; k < 64; ++k) lookup[static_cast<unsigned char>(kAlphabet[k])] = k;
    std::string s;
    s.reserve(text.size());
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    if (s.size() % 4 != 0) throw ValidationError("base64: length is not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = s[i + k];
            if (c == '=') {
                if (i + 4 != s.size() || k < 2) throw ValidationError("base64: misplaced padding");
                v[k] = 0;
                ++pad;
                continue;
            }
            if (pad) throw ValidationError("base64: data after padding");
            v[k] = lookup[static_cast<unsigned char>(c)];
            if (v[k] < 0) throw ValidationError("base64: invalid character");
        }
        const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
        out.push_back(static_cast<std::uint8_t>(n >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(n >> 8));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(n));
    }
    return out;
}

std::string to_string(LoadState s) {
    switch (s) {
        case LoadState::loading: return "loading";
        case LoadState::ready: return "ready";
        case LoadState::failed: return "failed";
    }
    return "unknown";
}

json ModelEntry::to_json() const {
    json j = {{"model_id", model_id},
              {"object_id", object_id},
              {"checkpoint", checkpoint.string()},
              {"gradient_max", gradient_max},
              {"fingerprint", fingerprint},
              {"state", to_string(state)}};
    if (model) j["iteration"] = model->iteration, j["rows"] = model->rows, j["cols"] = model->cols;
    if (!error.empty()) j["error"] = error;
    return j;
}

// Registry ----------------------------------------------------------------

Registry::~Registry() { wait(); }

std::shared_ptr<const train::LoadedModel> Registry::read_checkpoint(const std::filesystem::path& checkpoint) const {
    return std::make_shared<const train::LoadedModel>(train::load_model(checkpoint));
}

void Registry::finish(const std::string& model_id, std::shared_ptr<const train::LoadedModel> model,
                      const std::string& error) {
    std::unique_lock lock(mutex_);
    auto it = entries_.find(model_id);
    if (it == entries_.end()) return;  // unloaded meanwhile
    auto& e = it->second;
    if (model) {
        e.state = LoadState::ready;
        e.object_id = model->object_id;
        e.gradient_max = model->gradient_max;
        e.fingerprint = model->fingerprint;
        e.model = std::move(model);
    } else {
        e.state = LoadState::failed;
        e.error = error;
    }
}

void Registry::load(const std::string& model_id, const std::filesystem::path& checkpoint) {
    {
        std::unique_lock lock(mutex_);
        if (entries_.count(model_id)) throw ValidationError("model '" + model_id + "' is already registered");
        entries_[model_id] = ModelEntry{model_id, "", checkpoint, 1.0, "", LoadState::loading, "", nullptr};
    }
    try {
        finish(model_id, read_checkpoint(checkpoint), "");
    } catch (const std::exception& e) {
        finish(model_id, nullptr, e.what());
        throw;
    }
}

void Registry::load_async(const std::string& model_id, const std::filesystem::path& checkpoint) {
    {
        std::unique_lock lock(mutex_);
        if (entries_.count(model_id)) throw ValidationError("model '" + model_id + "' is already registered");
        entries_[model_id] = ModelEntry{model_id, "", checkpoint, 1.0, "", LoadState::loading, "", nullptr};
    }
    std::lock_guard tl(threads_mutex_);
    threads_.emplace_back([this, model_id, checkpoint] {
        try {
            finish(model_id, read_checkpoint(checkpoint), "");
        } catch (const std::exception& e) {
            finish(model_id, nullptr, e.what());
        }
    });
}

std::vector<std::string> Registry::load_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ValidationError("models: not a directory: " + dir.string());
    std::vector<std::pair<std::string, std::filesystem::path>> found;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".vtsckpt")
            found.emplace_back(e.path().stem().string(), e.path());
        else if (e.is_directory() && std::filesystem::exists(e.path() / "model.vtsckpt"))
            found.emplace_back(e.path().filename().string(), e.path() / "model.vtsckpt");
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> ids;
    for (const auto& [id, path] : found) {
        load(id, path);
        ids.push_back(id);
    }
    return ids;
}

bool Registry::unload(const std::string& model_id) {
    std::unique_lock lock(mutex_);
    return entries_.erase(model_id) > 0;
}

void Registry::wait() {
    std::vector<std::thread> done;
    {
        std::lock_guard tl(threads_mutex_);
        done.swap(threads_);
    }
    for (auto& t : done) t.join();
}

std::optional<ModelEntry> Registry::find(const std::string& model_id) const {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(model_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::vector<ModelEntry> Registry::list() const {
    std::shared_lock lock(mutex_);
    std::vector<ModelEntry> out;
    for (const auto& [id, e] : entries_) out.push_back(e);
    return out;
}

bool Registry::ready() const {
    std::shared_lock lock(mutex_);
    bool any = false;
    for (const auto& [id, e] : entries_) {
        if (e.state == LoadState::loading) return false;
        any = any || e.state == LoadState::ready;
    }
    return any;
}

// Synthesis -----------------------------------------------------------------

SynthesisResult synthesize(const train::LoadedModel& model, const Plane& sketch, const SynthesisOptions& options) {
    SynthesisResult r;
    auto t0 = Clock::now();
    r.object_mask = data::derive_object_mask(sketch);
    r.timing_ms["mask"] = ms_since(t0);

    t0 = Clock::now();
    // the generator is shared read-only; synthesize() leaves eval-mode modules untouched
    auto out = model::synthesize(*model.generator, sketch, r.object_mask, model.gradient_max);
    r.visual = std::move(out.visual);
    r.tactile = std::move(out.tactile);
    r.timing_ms["generator"] = ms_since(t0);

    t0 = Clock::now();
    const bool want_normal = options.returns.count("normal"), want_height = options.returns.count("height");
    if (want_normal) r.normal = geometry::shade_normal_map(r.tactile);
    if (want_height) r.height = geometry::integrate_height(r.tactile);
    const int cols = options.device_cols > 0 ? options.device_cols : sketch.cols();
    const int rows = options.device_rows > 0 ? options.device_rows : sketch.rows();
    r.friction = geometry::friction_map(r.tactile, r.object_mask, cols, rows, model.gradient_max);
    r.timing_ms["geometry"] = ms_since(t0);
    return r;
}

json encode_artifacts(const SynthesisResult& r, const SynthesisOptions& options) {
    json out = json::object();
    for (const auto& name : options.returns) {
        if (name == "visual") {
            out[name] = png_artifact(png::from_image8(r.visual));
        } else if (name == "normal") {
            out[name] = png_artifact(png::from_image8(r.normal));
        } else if (name == "tactile") {
            const auto [lo, hi] = range_of(r.tactile.gx, &r.tactile.gy);
            out[name] = {{"content_type", "image/png"},
                         {"encoding", "gray16-linear"},
                         {"gmin", lo},
                         {"gmax", hi},
                         {"gx", base64_encode(png::encode(gray16(r.tactile.gx, lo, hi)))},
                         {"gy", base64_encode(png::encode(gray16(r.tactile.gy, lo, hi)))}};
        } else if (name == "height") {
            const auto enc = geometry::encode_height16(r.height);
            out[name] = png_artifact(png::from_gray16(enc.codes));
            out[name]["encoding"] = "gray16-linear";
            out[name]["hmin"] = enc.hmin;
            out[name]["hmax"] = enc.hmax;
        } else if (name == "friction") {
            const auto q = geometry::quantize_friction(r.friction);
            png::RawImage raw{q.rows(), q.cols(), 1, 8, {}};
            raw.samples.assign(q.begin(), q.end());
            out[name] = png_artifact(raw);
        }
    }
    return out;
}

// Handlers -----------------------------------------------------------------

Response error_response(int status, const std::string& code, const std::string& message) {
    return {status, {{"code", code}, {"message", message}}};
}

namespace {

SynthesisOptions parse_options(const json& j) {
    SynthesisOptions o;
    if (j.is_null()) return o;
    if (!j.is_object()) throw ValidationError("options must be an object");
    for (const auto& [key, v] : j.items())
        if (key != "device_size" && key != "return") throw ValidationError("unknown option '" + key + "'");
    if (j.contains("device_size")) {
        const auto& d = j["device_size"];
        if (d.is_array() && d.size() == 2 && d[0].is_number_integer() && d[1].is_number_integer()) {
            o.device_cols = d[0].get<int>();
            o.device_rows = d[1].get<int>();
        } else if (d.is_string()) {
            std::smatch m;
            const std::string s = d.get<std::string>();
            static const std::regex pattern(R"((\d+)x(\d+))");
            if (!std::regex_match(s, m, pattern)) throw ValidationError("device_size must look like 1280x800");
            o.device_cols = std::stoi(m[1].str());
            o.device_rows = std::stoi(m[2].str());
        } else {
            throw ValidationError("device_size must be [cols, rows] or \"COLSxROWS\"");
        }
        if (o.device_cols <= 0 || o.device_rows <= 0 || o.device_cols > 8192 || o.device_rows > 8192)
            throw ValidationError("device_size out of range");
    }
    if (j.contains("return")) {
        if (!j["return"].is_array()) throw ValidationError("return must be a list of artifact names");
        o.returns.clear();
        for (const auto& n : j["return"]) {
            if (!n.is_string() || !kArtifacts.count(n.get<std::string>()))
                throw ValidationError("unknown artifact " + n.dump());
            o.returns.insert(n.get<std::string>());
        }
    }
    return o;
}

}  // namespace

Response handle_synthesize(const Registry& registry, const std::string& body, const ServiceConfig& config) {
    json req;
    try {
        req = json::parse(body);
    } catch (const json::exception& e) {
        return error_response(400, "bad_request", std::string("body is not valid JSON: ") + e.what());
    }
    if (!req.is_object() || !req.contains("model_id") || !req["model_id"].is_string())
        return error_response(400, "bad_request", "model_id (string) is required");
    const std::string model_id = req["model_id"].get<std::string>();

    const auto entry = registry.find(model_id);
    if (!entry) return error_response(404, "model_not_found", "no model '" + model_id + "'");
    if (entry->state == LoadState::loading)
        return error_response(503, "model_loading", "model '" + model_id + "' is still loading");
    if (entry->state == LoadState::failed)
        return error_response(503, "model_unavailable", "model '" + model_id + "' failed to load: " + entry->error);

    SynthesisOptions options;
    try {
        options = parse_options(req.value("options", json()));
    } catch (const ValidationError& e) {
        return error_response(400, "bad_request", e.what());
    }

    const json& sk = req.value("sketch", json());
    std::string data;
    if (sk.is_string()) {
        data = sk.get<std::string>();
    } else if (sk.is_object() && sk.contains("data") && sk["data"].is_string()) {
        const std::string type = sk.value("content_type", "image/png");
        if (type != "image/png") return error_response(422, "invalid_sketch", "unsupported content_type '" + type + "'");
        data = sk["data"].get<std::string>();
    } else {
        return error_response(400, "bad_request", "sketch {content_type, data} is required");
    }

    Plane sketch;
    try {
        const auto raw = png::decode(base64_decode(data));
        if (raw.rows > config.max_side || raw.cols > config.max_side)
            return error_response(422, "sketch_too_large",
                                  "sketch is " + std::to_string(raw.cols) + "x" + std::to_string(raw.rows) +
                                      ", limit is " + std::to_string(config.max_side) + " per side");
        sketch = data::sketch_plane(png::to_image(raw));
    } catch (const std::exception& e) {
        return error_response(422, "invalid_sketch", std::string("sketch could not be decoded: ") + e.what());
    }

    SynthesisResult result;
    const auto t0 = Clock::now();
    try {
        result = synthesize(*entry->model, sketch, options);
    } catch (const ValidationError& e) {
        return error_response(422, "open_contour", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "internal_error", e.what());
    }
    json timing = result.timing_ms;
    timing["total"] = ms_since(t0);
    return {200,
            {{"model_id", model_id},
             {"object_id", entry->object_id},
             {"rows", sketch.rows()},
             {"cols", sketch.cols()},
             {"artifacts", encode_artifacts(result, options)},
             {"timing_ms", timing}}};
}

Response handle_models(const Registry& registry) {
    json models = json::array();
    for (const auto& e : registry.list()) models.push_back(e.to_json());
    return {200, {{"models", models}}};
}

Response handle_health(const Registry& registry) {
    const auto entries = registry.list();
    int ready = 0, loading = 0;
    for (const auto& e : entries) ready += e.state == LoadState::ready, loading += e.state == LoadState::loading;
    return {200, {{"status", "ok"}, {"ready", registry.ready()}, {"models_ready", ready}, {"models_loading", loading}}};
}

Response handle_admin_load(Registry& registry, const std::string& body) {
    json req;
    try {
        req = json::parse(body);
    } catch (const json::exception& e) {
        return error_response(400, "bad_request", std::string("body is not valid JSON: ") + e.what());
    }
    if (!req.is_object() || !req.contains("model_id") || !req.contains("checkpoint") || !req["model_id"].is_string() ||
        !req["checkpoint"].is_string())
        return error_response(400, "bad_request", "model_id and checkpoint (strings) are required");
    const std::filesystem::path ckpt = req["checkpoint"].get<std::string>();
    if (!std::filesystem::exists(ckpt)) return error_response(422, "checkpoint_not_found", "no file " + ckpt.string());
    try {
        registry.load_async(req["model_id"].get<std::string>(), ckpt);
    } catch (const ValidationError& e) {
        return error_response(409, "model_exists", e.what());
    }
    return {202, {{"model_id", req["model_id"]}, {"state", "loading"}}};
}

Response handle_admin_unload(Registry& registry, const std::string& model_id) {
    if (!registry.unload(model_id)) return error_response(404, "model_not_found", "no model '" + model_id + "'");
    return {200, {{"model_id", model_id}, {"state", "unloaded"}}};
}

// Server --------------------------------------------------------------------

struct Server::Impl {
    Registry& registry;
    ServiceConfig config;
    httplib::Server http;
    std::thread thread;

    Impl(Registry& r, ServiceConfig c) : registry(r), config(c) {
        auto send = [](httplib::Response& res, const Response& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json; charset=utf-8");
        };
        const std::size_t limit = static_cast<std::size_t>(config.max_side) * config.max_side * 8 + (1u << 20);
        http.set_payload_max_length(limit);
        http.Post("/api/v1/synthesize", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, handle_synthesize(registry, req.body, config));
        });
        http.Get("/api/v1/models", [this, send](const httplib::Request&, httplib::Response& res) {
            send(res, handle_models(registry));
        });
        http.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) {
            send(res, handle_health(registry));
        });
        http.Post("/api/v1/admin/models", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, handle_admin_load(registry, req.body));
        });
        http.Delete(R"(/api/v1/admin/models/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, handle_admin_unload(registry, req.matches[1].str()));
        });
        http.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            if (res.status == 404) send(res, error_response(404, "not_found", "no such endpoint"));
            else if (res.status == 413) send(res, error_response(422, "sketch_too_large", "request body too large"));
        });
    }
};

Server::Server(Registry& registry, ServiceConfig config) : impl_(std::make_unique<Impl>(registry, config)) {}

Server::~Server() { stop(); }

int Server::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) bound = impl_->http.bind_to_any_port(host);
    else if (!impl_->http.bind_to_port(host, port)) bound = -1;
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return bound;
}

void Server::run(const std::string& host, int port) {
    if (!impl_->http.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    impl_->http.listen_after_bind();
}

void Server::stop() {
    if (impl_->http.is_running()) impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace vts::service
