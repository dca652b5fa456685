#include "vts/nn/archive.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "vts/core/error.hpp"
#include "vts/core/png_io.hpp"

namespace vts::nn {

namespace {

constexpr char kMagic[8] = {'V', 'T', 'S', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void append(std::vector<std::uint8_t>& out, const T& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T read_at(const std::vector<std::uint8_t>& in, std::size_t pos) {
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    return v;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

void Archive::put(const std::string& name, const Tensor& t) { tensors_[name] = {t.shape(), t.values()}; }

void Archive::put_all(const std::string& prefix, const NamedTensors& tensors) {
    for (const auto& [name, t] : tensors) put(prefix + name, t);
}

void Archive::get_into(const std::string& name, Tensor& t) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ValidationError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape != t.shape())
        throw ValidationError("checkpoint: tensor '" + name + "' has shape " + to_string(it->second.shape) +
                              ", expected " + to_string(t.shape()));
    t.values() = it->second.data;
}

void Archive::get_all(const std::string& prefix, const NamedTensors& tensors) const {
    for (auto [name, t] : tensors) get_into(prefix + name, t);
}

Tensor Archive::get(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ValidationError("checkpoint: missing tensor '" + name + "'");
    return Tensor::from(it->second.shape, it->second.data);
}

std::vector<std::string> Archive::names() const {
    std::vector<std::string> out;
    for (const auto& [name, e] : tensors_) out.push_back(name);
    return out;
}

std::vector<std::uint8_t> Archive::serialize() const {
    nlohmann::json index;
    index["meta"] = meta;
    index["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, e] : tensors_) {
        index["tensors"].push_back({{"name", name}, {"shape", e.shape}, {"offset", offset}});
        offset += e.data.size();
    }
    const std::string text = index.dump();
    std::vector<std::uint8_t> out;
    out.reserve(8 + 4 + 8 + text.size() + offset * sizeof(float) + 4);
    out.insert(out.end(), kMagic, kMagic + 8);
    append(out, kVersion);
    append(out, static_cast<std::uint64_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& [name, e] : tensors_) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(e.data.data());
        out.insert(out.end(), p, p + e.data.size() * sizeof(float));
    }
    append(out, crc_of(out.data(), out.size()));
    return out;
}

Archive Archive::deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 + 4 + 8 + 4 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw ValidationError("checkpoint: not a checkpoint file (bad magic)");
    const std::size_t body = bytes.size() - 4;
    if (read_at<std::uint32_t>(bytes, body) != crc_of(bytes.data(), body))
        throw ValidationError("checkpoint: checksum mismatch (file corrupted or tampered)");
    const auto version = read_at<std::uint32_t>(bytes, 8);
    if (version != kVersion) throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
    const auto len = read_at<std::uint64_t>(bytes, 12);
    if (20 + len > body) throw ValidationError("checkpoint: truncated index");
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(len));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: malformed index: ") + e.what());
    }
    Archive a;
    a.meta = index.value("meta", nlohmann::json::object());
    const std::size_t data_start = 20 + len;
    const std::size_t floats = (body - data_start) / sizeof(float);
    for (const auto& t : index.at("tensors")) {
        Entry e;
        e.shape = t.at("shape").get<Shape>();
        const auto off = t.at("offset").get<std::uint64_t>();
        const std::size_t n = numel(e.shape);
        if (off + n > floats) throw ValidationError("checkpoint: tensor data out of range");
        e.data.resize(n);
        std::memcpy(e.data.data(), bytes.data() + data_start + off * sizeof(float), n * sizeof(float));
        a.tensors_[t.at("name").get<std::string>()] = std::move(e);
    }
    return a;
}

void Archive::save(const std::filesystem::path& path) const {
    const auto tmp = path.string() + ".tmp";
    png::write_bytes(tmp, serialize());
    std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ValidationError("checkpoint: missing file " + path.string());
    return deserialize(png::read_bytes(path));
}

}  // namespace vts::nn
