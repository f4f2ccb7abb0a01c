#pragma once

// U-Net with instance-normalized conv blocks, 2x max-pool downsampling,
// (1x1x1 conv block + nearest 2x) upsampling and skip concatenation.
//
// A model is a flat, ordered list of layers. The forward pass walks the list:
// every max_pool pushes its input onto the skip store, and every upsample
// concatenates [skip, upsampled] according to the skip plan.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "volseg/error.hpp"
#include "volseg/grid.hpp"
#include "volseg/layers.hpp"

namespace volseg {

struct NetworkConfig {
    std::size_t in_channels = 1;
    std::size_t num_classes = 3;
    std::size_t base_width = 32;
    std::size_t num_stages = 6;
    std::vector<std::size_t> kernel_plan{3, 3, 3, 3, 1, 1};
    std::size_t convs_per_stage = 2;
    double norm_eps = 1e-5;

    /// Channel width of 0-based stage `s`.
    std::size_t width(std::size_t s) const { return base_width << s; }

    /// Input spatial dims must be multiples of this.
    std::size_t divisor() const { return std::size_t{1} << (num_stages - 1); }

    void validate() const
    {
        if (in_channels == 0 || num_classes == 0 || base_width == 0 || convs_per_stage == 0)
            throw ArgumentError("network config: channel counts and convs_per_stage must be positive");
        if (num_stages < 2)
            throw ArgumentError("network config: num_stages must be at least 2");
        if (num_stages > 16)
            throw ArgumentError("network config: num_stages too large");
        if (kernel_plan.size() != num_stages)
            throw ArgumentError("network config: kernel_plan has " + std::to_string(kernel_plan.size()) +
                                " entries for " + std::to_string(num_stages) + " stages");
        for (std::size_t k : kernel_plan)
            if (k != 1 && k != 3)
                throw ArgumentError("network config: kernel sizes must be 1 or 3, got " + std::to_string(k));
        if (!(norm_eps > 0.0))
            throw ArgumentError("network config: norm_eps must be positive");
    }
};

enum class LayerKind : std::uint8_t { conv = 0, instance_norm = 1, relu = 2, max_pool = 3, upsample = 4, softmax = 5 };

inline const char* to_string(LayerKind k)
{
    switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::instance_norm: return "instance_norm";
    case LayerKind::relu: return "relu";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::upsample: return "upsample";
    case LayerKind::softmax: return "softmax";
    }
    return "?";
}

/// Shape-only description of a layer.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    Index3 kernel{1, 1, 1};
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;

    /// Length of the primary array (conv weights or norm gamma).
    std::size_t weight_count() const
    {
        switch (kind) {
        case LayerKind::conv: return voxel_count(kernel) * in_channels * out_channels;
        case LayerKind::instance_norm: return out_channels;
        default: return 0;
        }
    }
    /// Length of the secondary array (conv bias or norm beta).
    std::size_t bias_count() const
    {
        return kind == LayerKind::conv || kind == LayerKind::instance_norm ? out_channels : 0;
    }
    std::size_t parameter_count() const { return weight_count() + bias_count(); }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// For instance_norm layers `weights` holds gamma and `bias` holds beta.
struct Layer {
    LayerSpec spec;
    std::vector<float> weights;
    std::vector<float> bias;
};

struct SkipLink {
    std::size_t encoder_stage = 0;
    std::size_t decoder_stage = 0;
    friend bool operator==(const SkipLink&, const SkipLink&) = default;
};

struct Model {
    NetworkConfig config;
    std::vector<Layer> layers;
    std::vector<SkipLink> skip_plan;
};

/// Ordered layer shapes for `config`.
inline std::vector<LayerSpec> layer_plan(const NetworkConfig& config)
{
    config.validate();
    std::vector<LayerSpec> plan;
    auto block = [&plan](std::size_t k, std::size_t cin, std::size_t cout) {
        plan.push_back({LayerKind::conv, {k, k, k}, cin, cout});
        plan.push_back({LayerKind::instance_norm, {1, 1, 1}, cout, cout});
        plan.push_back({LayerKind::relu, {1, 1, 1}, cout, cout});
    };
    const std::size_t S = config.num_stages;
    std::size_t c = config.in_channels;
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t b = 0; b < config.convs_per_stage; ++b) {
            block(config.kernel_plan[s], c, config.width(s));
            c = config.width(s);
        }
        if (s + 1 < S)
            plan.push_back({LayerKind::max_pool, {2, 2, 2}, c, c});
    }
    for (std::size_t s = S - 1; s-- > 0;) {
        const std::size_t w = config.width(s);
        block(1, config.width(s + 1), w);
        plan.push_back({LayerKind::upsample, {2, 2, 2}, w, w});
        for (std::size_t b = 0; b < config.convs_per_stage; ++b)
            block(config.kernel_plan[s], b == 0 ? 2 * w : w, w);
    }
    plan.push_back({LayerKind::conv, {1, 1, 1}, config.width(0), config.num_classes});
    plan.push_back({LayerKind::softmax, {1, 1, 1}, config.num_classes, config.num_classes});
    return plan;
}

inline std::vector<SkipLink> default_skip_plan(const NetworkConfig& config)
{
    std::vector<SkipLink> links;
    for (std::size_t s = 0; s + 1 < config.num_stages; ++s)
        links.push_back({s, s});
    return links;
}

/// Parameter total for a config without allocating any weights.
inline std::uint64_t count_parameters(const NetworkConfig& config)
{
    std::uint64_t total = 0;
    for (const auto& spec : layer_plan(config))
        total += spec.parameter_count();
    return total;
}

inline std::uint64_t count_parameters(const Model& model)
{
    std::uint64_t total = 0;
    for (const auto& l : model.layers)
        total += l.weights.size() + l.bias.size();
    return total;
}

/// Conv weights use He-uniform fan-in scaling; biases and beta start at 0,
/// gamma at 1.
inline Model build_unet(const NetworkConfig& config, std::uint64_t init_seed)
{
    Model model;
    model.config = config;
    model.skip_plan = default_skip_plan(config);
    std::mt19937_64 rng(init_seed);
    for (const auto& spec : layer_plan(config)) {
        Layer layer{spec, {}, {}};
        if (spec.kind == LayerKind::conv) {
            const double fan_in = static_cast<double>(voxel_count(spec.kernel) * spec.in_channels);
            const auto bound = static_cast<float>(std::sqrt(6.0 / fan_in));
            std::uniform_real_distribution<float> dist(-bound, bound);
            layer.weights.resize(spec.weight_count());
            for (float& w : layer.weights)
                w = dist(rng);
            layer.bias.assign(spec.bias_count(), 0.0f);
        } else if (spec.kind == LayerKind::instance_norm) {
            layer.weights.assign(spec.weight_count(), 1.0f);
            layer.bias.assign(spec.bias_count(), 0.0f);
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

inline void check_forward_input(const Model& model, const Tensor4D& input)
{
    const auto& cfg = model.config;
    if (input.channels() != cfg.in_channels)
        throw ArgumentError("forward: input has " + std::to_string(input.channels()) + " channels, model expects " +
                            std::to_string(cfg.in_channels));
    for (std::size_t d : input.dims())
        if (d == 0 || d % cfg.divisor() != 0)
            throw ArgumentError("forward: spatial dims " + to_string(input.dims()) + " must be positive multiples of " +
                                std::to_string(cfg.divisor()) + " (2^(num_stages-1))");
}

/// Class probabilities (num_classes x X x Y x Z) for one input instance.
inline Tensor4D forward(const Model& model, const Tensor4D& input)
{
    check_forward_input(model, input);
    const std::size_t S = model.config.num_stages;
    std::vector<Tensor4D> skips(S);
    std::size_t pooled = 0;
    std::size_t upsampled = 0;
    Tensor4D x = input;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const Layer& layer = model.layers[i];
        switch (layer.spec.kind) {
        case LayerKind::conv: x = conv3d(x, layer.weights, layer.bias, layer.spec.kernel); break;
        case LayerKind::instance_norm: x = instance_norm(x, layer.weights, layer.bias, model.config.norm_eps); break;
        case LayerKind::relu: relu_inplace(x); break;
        case LayerKind::max_pool:
            if (pooled >= S)
                throw ArgumentError("forward: more pooling layers than stages");
            skips[pooled] = x;
            x = max_pool_2x(x);
            ++pooled;
            break;
        case LayerKind::upsample: {
            x = nearest_upsample_2x(x);
            const std::size_t decoder_stage = S - 2 - upsampled;
            ++upsampled;
            const SkipLink* link = nullptr;
            for (const auto& l : model.skip_plan)
                if (l.decoder_stage == decoder_stage)
                    link = &l;
            if (link) {
                if (link->encoder_stage >= pooled)
                    throw ArgumentError("forward: skip link references an encoder stage not yet computed");
                x = concat_channels(skips[link->encoder_stage], x);
            }
            break;
        }
        case LayerKind::softmax: softmax_channels_inplace(x); break;
        }
    }
    return x;
}

/// One line per layer with the spatial size it produces for `input_dims`.
inline std::string describe_layers(const NetworkConfig& config, const Index3& input_dims)
{
    std::ostringstream os;
    Index3 d = input_dims;
    std::size_t idx = 0;
    for (const auto& spec : layer_plan(config)) {
        if (spec.kind == LayerKind::max_pool)
            d = {d[0] / 2, d[1] / 2, d[2] / 2};
        else if (spec.kind == LayerKind::upsample)
            d = {d[0] * 2, d[1] * 2, d[2] * 2};
        os << idx++ << "\t" << to_string(spec.kind);
        if (spec.kind == LayerKind::conv)
            os << " " << to_string(spec.kernel);
        os << "\t" << spec.in_channels << "->" << spec.out_channels << "\t[" << to_string(d) << "]\t"
           << spec.parameter_count() << "\n";
    }
    return os.str();
}

} // namespace volseg
