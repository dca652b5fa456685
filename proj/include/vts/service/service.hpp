#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "vts/core/grid.hpp"
#include "vts/geometry/geometry.hpp"
#include "vts/train/trainer.hpp"

namespace vts::service {

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
/// Throws ValidationError on characters outside the alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(const std::string& text);

enum class LoadState { loading, ready, failed };
std::string to_string(LoadState s);

struct ModelEntry {
    std::string model_id;
    std::string object_id;
    std::filesystem::path checkpoint;
    double gradient_max = 1.0;
    std::string fingerprint;
    LoadState state = LoadState::loading;
    std::string error;  // set when failed
    std::shared_ptr<const train::LoadedModel> model;

    nlohmann::json to_json() const;
};

/// Thread-safe model table. Lookups take a shared lock; load/unload are
/// exclusive. Loaded generators are never mutated.
class Registry {
public:
    Registry() = default;
    ~Registry();
    Registry(const Registry&) = delete;
    Registry& operator=(const Registry&) = delete;

    /// Loads synchronously; throws on a bad checkpoint (entry is recorded
    /// as failed) or a duplicate id.
    void load(const std::string& model_id, const std::filesystem::path& checkpoint);
    /// Registers the id as loading and loads on a background thread.
    void load_async(const std::string& model_id, const std::filesystem::path& checkpoint);
    /// Loads every *.vtsckpt in `dir` (id = file stem) and every
    /// <sub>/model.vtsckpt (id = sub). Returns the ids loaded.
    std::vector<std::string> load_directory(const std::filesystem::path& dir);
    bool unload(const std::string& model_id);
    /// Waits for background loads to finish.
    void wait();

    std::optional<ModelEntry> find(const std::string& model_id) const;
    std::vector<ModelEntry> list() const;
    bool ready() const;  // at least one model ready and none loading

private:
    std::shared_ptr<const train::LoadedModel> read_checkpoint(const std::filesystem::path& checkpoint) const;
    void finish(const std::string& model_id, std::shared_ptr<const train::LoadedModel> model, const std::string& error);

    mutable std::shared_mutex mutex_;
    std::map<std::string, ModelEntry> entries_;
    std::mutex threads_mutex_;
    std::vector<std::thread> threads_;
};

inline const std::set<std::string> kArtifacts = {"visual", "tactile", "normal", "height", "friction"};

struct SynthesisOptions {
    int device_cols = 0;  // 0: sketch size
    int device_rows = 0;
    std::set<std::string> returns = kArtifacts;
};

struct SynthesisResult {
    Image visual;
    geometry::GradientField tactile;
    Image normal;
    Plane height;
    Plane friction;  // [0, 1], device size
    Mask object_mask;
    std::map<std::string, double> timing_ms;
};

/// derive mask, run the generator, then derive normal/height/friction.
/// Throws ValidationError for an open contour.
SynthesisResult synthesize(const train::LoadedModel& model, const Plane& sketch, const SynthesisOptions& options);

/// Requested artifacts as {name: {content_type, data, ...}}. The tactile
/// artifact carries two 16-bit PNGs (gx, gy) over [gmin, gmax]; height
/// carries a 16-bit PNG over [hmin, hmax].
nlohmann::json encode_artifacts(const SynthesisResult& result, const SynthesisOptions& options);

struct ServiceConfig {
    int max_side = 2048;
};

struct Response {
    int status = 200;
    nlohmann::json body;
};

Response error_response(int status, const std::string& code, const std::string& message);

/// Endpoint logic, independent of the transport.
Response handle_synthesize(const Registry& registry, const std::string& body, const ServiceConfig& config = {});
Response handle_models(const Registry& registry);
Response handle_health(const Registry& registry);
Response handle_admin_load(Registry& registry, const std::string& body);
Response handle_admin_unload(Registry& registry, const std::string& model_id);

/// HTTP front end:
///   POST /api/v1/synthesize, GET /api/v1/models, GET /healthz,
///   POST /api/v1/admin/models {model_id, checkpoint}, DELETE /api/v1/admin/models/<id>
class Server {
public:
    Server(Registry& registry, ServiceConfig config = {});
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace vts::service
