#include <filesystem>
#include <future>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"
#include "vts/nn/archive.hpp"
#include "vts/service/service.hpp"
#include "vts/synth/synthgen.hpp"

using namespace vts;
using namespace vts::service;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Fixture {
    synth::GeneratedScene gen = synth::generate_scene(synth::default_scene_spec(64, 4, 12));
    fs::path dir;
    fs::path checkpoint;

    Fixture() {
        dir = fs::temp_directory_path() / "vts_service_test";
        fs::remove_all(dir);
        fs::create_directories(dir / "models");
        train::TrainConfig c;
        c.iterations = 1;
        c.n_paired = 2;
        c.n_unpaired = 2;
        train::Trainer t(c, gen.scene);
        t.step();
        checkpoint = dir / "models" / "shirt.vtsckpt";
        t.save(checkpoint);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

std::string png_b64(const Plane& sketch) {
    return base64_encode(png::encode(png::from_image8(Image({sketch}))));
}

std::string request(const std::string& model, const Plane& sketch, json options = nullptr) {
    json j = {{"model_id", model}, {"sketch", {{"content_type", "image/png"}, {"data", png_b64(sketch)}}}};
    if (!options.is_null()) j["options"] = options;
    return j.dump();
}

png::RawImage decode_artifact(const json& a, const char* field = "data") {
    return png::decode(base64_decode(a.at(field).get<std::string>()));
}

}  // namespace

TEST_CASE("base64 standard vectors") {
    auto enc = [](const std::string& s) { return base64_encode({s.begin(), s.end()}); };
    CHECK(enc("") == "");
    CHECK(enc("f") == "Zg==");
    CHECK(enc("fo") == "Zm8=");
    CHECK(enc("foo") == "Zm9v");
    CHECK(enc("foob") == "Zm9vYg==");
    CHECK(enc("fooba") == "Zm9vYmE=");
    CHECK(enc("foobar") == "Zm9vYmFy");
    for (std::string s : {"", "f", "fo", "foo", "foob", "fooba", "foobar"}) {
        const auto d = base64_decode(enc(s));
        CHECK(std::string(d.begin(), d.end()) == s);
    }
    std::vector<std::uint8_t> all(256);
    for (int i = 0; i < 256; ++i) all[i] = static_cast<std::uint8_t>(i);
    CHECK(base64_decode(base64_encode(all)) == all);
    CHECK_THROWS_AS(base64_decode("Zm9"), ValidationError);
    CHECK_THROWS_AS(base64_decode("Zm9*"), ValidationError);
    CHECK_THROWS_AS(base64_decode("Z===")  , ValidationError);
    CHECK_THROWS_AS(base64_decode("Zg==Zm9v"), ValidationError);
}

TEST_CASE("empty registry") {
    Registry r;
    CHECK(handle_models(r).body["models"].empty());
    const auto h = handle_health(r);
    CHECK(h.status == 200);
    CHECK(h.body["ready"] == false);
    const auto s = handle_synthesize(r, request("nothing", fixture().gen.scene.sketch));
    CHECK(s.status == 404);
    CHECK(s.body["code"] == "model_not_found");
    CHECK(s.body.contains("message"));
}

TEST_CASE("load, list and synthesize") {
    const auto& f = fixture();
    Registry r;
    CHECK(r.load_directory(f.dir / "models") == std::vector<std::string>{"shirt"});
    CHECK(handle_health(r).body["ready"] == true);
    const auto models = handle_models(r).body["models"];
    REQUIRE(models.size() == 1);
    CHECK(models[0]["model_id"] == "shirt");
    CHECK(models[0]["state"] == "ready");
    CHECK(models[0]["object_id"] == f.gen.scene.object_id);
    CHECK(models[0]["gradient_max"].get<double>() == doctest::Approx(f.gen.scene.gradient_max));

    const auto& sketch = f.gen.scene.sketch;
    const auto res = handle_synthesize(r, request("shirt", sketch));
    REQUIRE(res.status == 200);
    const auto& art = res.body["artifacts"];
    for (const char* name : {"visual", "tactile", "normal", "height", "friction"}) {
        CAPTURE(name);
        REQUIRE(art.contains(name));
        CHECK(art[name]["content_type"] == "image/png");
    }
    const auto visual = decode_artifact(art["visual"]);
    CHECK(visual.rows == sketch.rows());
    CHECK(visual.cols == sketch.cols());
    CHECK(visual.channels == 3);
    const auto gx = decode_artifact(art["tactile"], "gx");
    CHECK(gx.rows == sketch.rows());
    CHECK(gx.bit_depth == 16);
    CHECK(decode_artifact(art["normal"]).cols == sketch.cols());
    CHECK(decode_artifact(art["height"]).bit_depth == 16);
    const auto fr = decode_artifact(art["friction"]);
    CHECK(fr.channels == 1);
    CHECK(fr.bit_depth == 8);
    CHECK(fr.rows == sketch.rows());
    // background is zero friction
    CHECK(fr.samples[0] == 0);
    CHECK(res.body["timing_ms"].contains("total"));
}

TEST_CASE("tactile artifact decodes to the synthesized field") {
    const auto& f = fixture();
    Registry r;
    r.load("m", f.checkpoint);
    const auto& sketch = f.gen.scene.sketch;
    const auto res = handle_synthesize(r, request("m", sketch, {{"return", {"tactile"}}}));
    REQUIRE(res.status == 200);
    CHECK(res.body["artifacts"].size() == 1);
    const auto& t = res.body["artifacts"]["tactile"];
    const auto model = train::load_model(f.checkpoint);
    SynthesisOptions o;
    const auto direct = synthesize(model, sketch, o);
    const auto gx = decode_artifact(t, "gx");
    const double lo = t["gmin"], hi = t["gmax"];
    const double step = (hi - lo) / 65535.0;
    double worst = 0.0;
    for (int i = 0; i < gx.rows * gx.cols; ++i)
        worst = std::max(worst, std::abs(lo + gx.samples[i] * step - direct.tactile.gx.data()[i]));
    CHECK(worst <= step);
}

TEST_CASE("device size and artifact selection") {
    const auto& f = fixture();
    Registry r;
    r.load("m", f.checkpoint);
    const auto res = handle_synthesize(r, request("m", f.gen.scene.sketch, {{"device_size", "160x100"}, {"return", {"friction"}}}));
    REQUIRE(res.status == 200);
    const auto fr = decode_artifact(res.body["artifacts"]["friction"]);
    CHECK(fr.cols == 160);
    CHECK(fr.rows == 100);
    CHECK_FALSE(res.body["artifacts"].contains("visual"));

    const auto arr = handle_synthesize(r, request("m", f.gen.scene.sketch, {{"device_size", {90, 70}}, {"return", {"friction"}}}));
    CHECK(decode_artifact(arr.body["artifacts"]["friction"]).cols == 90);

    CHECK(handle_synthesize(r, request("m", f.gen.scene.sketch, {{"return", {"smell"}}})).status == 400);
    CHECK(handle_synthesize(r, request("m", f.gen.scene.sketch, {{"device_size", "big"}})).status == 400);
    CHECK(handle_synthesize(r, request("m", f.gen.scene.sketch, {{"colour", 1}})).status == 400);
}

TEST_CASE("bad sketches are rejected with 422") {
    const auto& f = fixture();
    Registry r;
    r.load("m", f.checkpoint);

    Plane open(64, 64, 0.0);
    for (int c = 5; c < 60; ++c) open(30, c) = 1.0;
    const auto o = handle_synthesize(r, request("m", open));
    CHECK(o.status == 422);
    CHECK(o.body["code"] == "open_contour");

    const auto blank = handle_synthesize(r, request("m", Plane(64, 64, 0.0)));
    CHECK(blank.status == 422);

    json garbage = {{"model_id", "m"}, {"sketch", {{"content_type", "image/png"}, {"data", base64_encode({1, 2, 3, 4})}}}};
    const auto g = handle_synthesize(r, garbage.dump());
    CHECK(g.status == 422);
    CHECK(g.body["code"] == "invalid_sketch");

    json bad_b64 = {{"model_id", "m"}, {"sketch", {{"data", "@@@@"}}}};
    CHECK(handle_synthesize(r, bad_b64.dump()).status == 422);

    const auto big = handle_synthesize(r, request("m", f.gen.scene.sketch), ServiceConfig{32});
    CHECK(big.status == 422);
    CHECK(big.body["code"] == "sketch_too_large");

    CHECK(handle_synthesize(r, "{not json").status == 400);
    CHECK(handle_synthesize(r, json{{"sketch", "x"}}.dump()).status == 400);
}

TEST_CASE("identical requests give identical artifacts") {
    const auto& f = fixture();
    Registry r;
    r.load("m", f.checkpoint);
    const auto body = request("m", f.gen.scene.sketch);
    const auto a = handle_synthesize(r, body), b = handle_synthesize(r, body);
    CHECK(a.body["artifacts"].dump() == b.body["artifacts"].dump());
}

TEST_CASE("concurrent requests match serial execution") {
    const auto& f = fixture();
    Registry r;
    r.load("m", f.checkpoint);
    const auto body = request("m", f.gen.scene.sketch, {{"return", {"visual", "tactile"}}});
    const std::string serial = handle_synthesize(r, body).body["artifacts"].dump();
    std::vector<std::future<std::string>> jobs;
    for (int i = 0; i < 4; ++i)
        jobs.push_back(std::async(std::launch::async, [&] { return handle_synthesize(r, body).body["artifacts"].dump(); }));
    for (auto& j : jobs) CHECK(j.get() == serial);
}

TEST_CASE("registry states") {
    const auto& f = fixture();
    Registry r;
    r.load_async("slow", f.checkpoint);
    if (const auto e = r.find("slow"); e && e->state == LoadState::loading) {
        const auto res = handle_synthesize(r, request("slow", f.gen.scene.sketch));
        // the load may finish in between
        if (res.status != 200) {
            CHECK(res.status == 503);
            CHECK(res.body["code"] == "model_loading");
        }
    }
    r.wait();
    CHECK(r.find("slow")->state == LoadState::ready);
    CHECK_THROWS_AS(r.load("slow", f.checkpoint), ValidationError);

    auto bytes = png::read_bytes(f.checkpoint);
    bytes[bytes.size() / 3] ^= 0x10;
    png::write_bytes(f.dir / "broken.vtsckpt", bytes);
    r.load_async("broken", f.dir / "broken.vtsckpt");
    r.wait();
    const auto broken = r.find("broken");
    CHECK(broken->state == LoadState::failed);
    CHECK(broken->error.find("checksum") != std::string::npos);
    CHECK(handle_synthesize(r, request("broken", f.gen.scene.sketch)).status == 503);
    CHECK(r.ready());  // a failed entry does not block the ready one

    CHECK(handle_admin_unload(r, "broken").status == 200);
    CHECK(handle_admin_unload(r, "broken").status == 404);
    CHECK(r.ready());
}

TEST_CASE("checkpoint fingerprint is verified at load") {
    const auto& f = fixture();
    auto a = nn::Archive::load(f.checkpoint);
    a.meta["config"]["lr"] = 0.5;
    a.save(f.dir / "edited.vtsckpt");
    Registry r;
    CHECK_THROWS_AS(r.load("edited", f.dir / "edited.vtsckpt"), ValidationError);
    CHECK(r.find("edited")->state == LoadState::failed);
}

TEST_CASE("http round trip") {
    const auto& f = fixture();
    Registry r;
    Server server(r);
    const int port = server.start();
    httplib::Client cli("127.0.0.1", port);

    auto health = cli.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(json::parse(health->body)["ready"] == false);

    auto models = cli.Get("/api/v1/models");
    REQUIRE(models);
    CHECK(json::parse(models->body)["models"].empty());

    const json load = {{"model_id", "hot"}, {"checkpoint", f.checkpoint.string()}};
    auto loaded = cli.Post("/api/v1/admin/models", load.dump(), "application/json");
    REQUIRE(loaded);
    CHECK(loaded->status == 202);
    r.wait();
    models = cli.Get("/api/v1/models");
    const auto listing = json::parse(models->body)["models"];
    REQUIRE(listing.size() == 1);
    CHECK(listing[0]["model_id"] == "hot");
    CHECK(listing[0]["state"] == "ready");

    auto syn = cli.Post("/api/v1/synthesize", request("hot", f.gen.scene.sketch), "application/json");
    REQUIRE(syn);
    CHECK(syn->status == 200);
    CHECK(syn->get_header_value("Content-Type").find("application/json") == 0);
    CHECK(json::parse(syn->body)["artifacts"].size() == 5);

    auto missing = cli.Post("/api/v1/synthesize", request("nope", f.gen.scene.sketch), "application/json");
    CHECK(missing->status == 404);
    CHECK(json::parse(missing->body)["code"] == "model_not_found");

    auto nowhere = cli.Get("/api/v1/unknown");
    CHECK(nowhere->status == 404);
    CHECK(json::parse(nowhere->body)["code"] == "not_found");

    auto gone = cli.Delete("/api/v1/admin/models/hot");
    CHECK(gone->status == 200);
    CHECK(json::parse(cli.Get("/api/v1/models")->body)["models"].empty());
    server.stop();
}
