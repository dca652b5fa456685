#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "vts/nn/module.hpp"

namespace vts::nn {

/// Binary tensor archive:
///   "VTSCKPT\0" | u32 version | u64 index length | JSON index | f32 data | u32 CRC-32
/// The CRC covers every preceding byte. The index holds `meta` (free-form)
/// and `tensors`: [{name, shape, offset}] with offsets in floats.
class Archive {
public:
    static constexpr std::uint32_t kVersion = 1;

    nlohmann::json meta = nlohmann::json::object();

    void put(const std::string& name, const Tensor& t);
    void put_all(const std::string& prefix, const NamedTensors& tensors);
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    /// Copies stored values into `t`; throws on a missing name or shape mismatch.
    void get_into(const std::string& name, Tensor& t) const;
    void get_all(const std::string& prefix, const NamedTensors& tensors) const;
    Tensor get(const std::string& name) const;
    std::vector<std::string> names() const;

    std::vector<std::uint8_t> serialize() const;
    static Archive deserialize(const std::vector<std::uint8_t>& bytes);

    void save(const std::filesystem::path& path) const;
    static Archive load(const std::filesystem::path& path);

private:
    struct Entry {
        Shape shape;
        std::vector<float> data;
    };
    std::map<std::string, Entry> tensors_;
};

}  // namespace vts::nn
