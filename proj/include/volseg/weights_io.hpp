#pragma once

// Weight file ("VSKW1"):
//
//   magic    5 bytes  "VSKW1"
//   per layer, little-endian:
//     kind        u8   (LayerKind)
//     kernel      3 x u32
//     in_ch       u32
//     out_ch      u32
//     payload     u64  byte length of the float data that follows
//     data        payload bytes of f32: weights (or gamma) then bias (or beta)
//   crc32        u32  CRC-32 over the concatenation of all payloads
//
// Every layer of the plan is written, including parameter-free ones (payload 0).

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <zlib.h>

#include "volseg/error.hpp"
#include "volseg/network.hpp"
#include "volseg/nifti.hpp"

namespace volseg {

inline constexpr char kWeightMagic[5] = {'V', 'S', 'K', 'W', '1'};

namespace detail {

inline constexpr std::size_t kRecordHeaderSize = 1 + 3 * 4 + 4 + 4 + 8;

template <typename T>
void put(std::vector<unsigned char>& out, T v)
{
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(const unsigned char* p)
{
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

inline std::string describe(const LayerSpec& s)
{
    return std::string(to_string(s.kind)) + " " + to_string(s.kernel) + " " + std::to_string(s.in_channels) + "->" +
           std::to_string(s.out_channels);
}

} // namespace detail

inline std::vector<unsigned char> serialize_weights(const Model& model)
{
    std::vector<unsigned char> out(std::begin(kWeightMagic), std::end(kWeightMagic));
    uLong crc = crc32(0L, Z_NULL, 0);
    for (const auto& layer : model.layers) {
        const auto& s = layer.spec;
        detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(s.kind));
        for (std::size_t k : s.kernel)
            detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(k));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.in_channels));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.out_channels));
        const std::uint64_t bytes = 4 * (layer.weights.size() + layer.bias.size());
        detail::put<std::uint64_t>(out, bytes);
        const std::size_t start = out.size();
        for (float w : layer.weights)
            detail::put<float>(out, w);
        for (float b : layer.bias)
            detail::put<float>(out, b);
        if (bytes > 0)
            crc = crc32(crc, out.data() + start, static_cast<uInt>(bytes));
    }
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(crc));
    return out;
}

inline void save_weights(const Model& model, const std::filesystem::path& path)
{
    nifti::write_file_atomic(path, serialize_weights(model));
}

/// Parses a weight blob and checks every record against the plan of `config`.
inline Model deserialize_weights(const std::vector<unsigned char>& bytes, const NetworkConfig& config)
{
    if (bytes.size() < sizeof(kWeightMagic) || std::memcmp(bytes.data(), kWeightMagic, sizeof(kWeightMagic)) != 0)
        throw FormatError("weight file: bad magic (expected VSKW1)");

    Model model;
    model.config = config;
    model.skip_plan = default_skip_plan(config);
    const auto plan = layer_plan(config);

    std::size_t pos = sizeof(kWeightMagic);
    uLong crc = crc32(0L, Z_NULL, 0);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const std::string where = "weight file: layer " + std::to_string(i);
        if (bytes.size() - pos < detail::kRecordHeaderSize)
            throw FormatError(where + ": truncated record header (file has fewer layers than the config expects?)");
        const unsigned char* p = bytes.data() + pos;
        LayerSpec got;
        const auto kind = detail::get<std::uint8_t>(p);
        if (kind > static_cast<std::uint8_t>(LayerKind::softmax))
            throw FormatError(where + ": unknown layer kind tag " + std::to_string(kind));
        got.kind = static_cast<LayerKind>(kind);
        for (int a = 0; a < 3; ++a)
            got.kernel[a] = detail::get<std::uint32_t>(p + 1 + 4 * a);
        got.in_channels = detail::get<std::uint32_t>(p + 13);
        got.out_channels = detail::get<std::uint32_t>(p + 17);
        const auto payload = detail::get<std::uint64_t>(p + 21);
        pos += detail::kRecordHeaderSize;

        if (!(got == plan[i]))
            throw FormatError(where + ": shape mismatch, file has " + detail::describe(got) + ", config expects " +
                              detail::describe(plan[i]));
        if (payload != 4 * plan[i].parameter_count())
            throw FormatError(where + ": payload of " + std::to_string(payload) + " bytes, expected " +
                              std::to_string(4 * plan[i].parameter_count()));
        if (bytes.size() - pos < payload)
            throw FormatError(where + ": truncated payload");

        Layer layer{plan[i], std::vector<float>(plan[i].weight_count()), std::vector<float>(plan[i].bias_count())};
        if (!layer.weights.empty())
            std::memcpy(layer.weights.data(), bytes.data() + pos, 4 * layer.weights.size());
        if (!layer.bias.empty())
            std::memcpy(layer.bias.data(), bytes.data() + pos + 4 * layer.weights.size(), 4 * layer.bias.size());
        if (payload > 0)
            crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(payload));
        pos += payload;
        model.layers.push_back(std::move(layer));
    }
    if (bytes.size() - pos != 4)
        throw FormatError("weight file: " + std::to_string(bytes.size() - pos) +
                          " trailing bytes after the last layer, expected a 4-byte CRC");
    if (detail::get<std::uint32_t>(bytes.data() + pos) != static_cast<std::uint32_t>(crc))
        throw FormatError("weight file: CRC mismatch");
    return model;
}

inline Model load_weights(const std::filesystem::path& path, const NetworkConfig& config)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open weight file '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_weights(bytes, config);
}

} // namespace volseg
