#pragma once

// Sliding-window whole-volume prediction, ensembling and label extraction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "volseg/error.hpp"
#include "volseg/grid.hpp"
#include "volseg/network.hpp"
#include "volseg/sampling.hpp"

namespace volseg {

enum class Weighting { equal, gaussian };

inline Weighting parse_weighting(const std::string& s)
{
    if (s == "equal")
        return Weighting::equal;
    if (s == "gaussian")
        return Weighting::gaussian;
    throw ArgumentError("weighting must be 'equal' or 'gaussian', got '" + s + "'");
}

struct SlidingWindowConfig {
    Index3 patch_size{320, 320, 64};
    Index3 stride{80, 80, 16};
    Weighting weighting = Weighting::gaussian;
    double gaussian_edge_value = 0.1;
    std::set<std::size_t> exempt_channels;

    void validate() const
    {
        for (int a = 0; a < 3; ++a)
            if (patch_size[a] == 0 || stride[a] == 0 || stride[a] > patch_size[a])
                throw ArgumentError("sliding window: require 0 < stride <= patch size on every axis (patch " +
                                    to_string(patch_size) + ", stride " + to_string(stride) + ")");
        if (!(gaussian_edge_value > 0.0 && gaussian_edge_value < 1.0))
            throw ArgumentError("sliding window: gaussian_edge_value must lie in (0, 1)");
    }
};

/// Per-voxel blending weights for one patch (X fastest).
struct WeightKernel {
    Index3 size{0, 0, 0};
    std::vector<double> weights;

    double operator()(std::size_t x, std::size_t y, std::size_t z) const
    {
        return weights[(z * size[1] + y) * size[0] + x];
    }
};

inline WeightKernel equal_weight_kernel(const Index3& size)
{
    return {size, std::vector<double>(voxel_count(size), 1.0)};
}

/// 1-D Gaussian profile peaking at 1 in the centre and equal to `edge_value`
/// at both ends.
inline std::vector<double> gaussian_profile(std::size_t n, double edge_value)
{
    std::vector<double> g(n, 1.0);
    const double c = (static_cast<double>(n) - 1.0) / 2.0;
    if (n <= 1)
        return g;
    const double sigma = c / std::sqrt(2.0 * std::log(1.0 / edge_value));
    for (std::size_t t = 0; t < n; ++t) {
        const double d = static_cast<double>(t) - c;
        g[t] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    }
    g.front() = g.back() = edge_value;
    return g;
}

/// Separable Gaussian kernel: product of per-axis profiles, so a face centre
/// gets `edge_value` and a corner `edge_value`^3.
inline WeightKernel gaussian_weight_kernel(const Index3& size, double edge_value)
{
    if (!(edge_value > 0.0 && edge_value < 1.0))
        throw ArgumentError("gaussian_weight_kernel: edge_value must lie in (0, 1)");
    for (std::size_t s : size)
        if (s == 0)
            throw ArgumentError("gaussian_weight_kernel: size must be positive");
    const auto gx = gaussian_profile(size[0], edge_value);
    const auto gy = gaussian_profile(size[1], edge_value);
    const auto gz = gaussian_profile(size[2], edge_value);
    WeightKernel k{size, std::vector<double>(voxel_count(size))};
    std::size_t i = 0;
    for (std::size_t z = 0; z < size[2]; ++z)
        for (std::size_t y = 0; y < size[1]; ++y)
            for (std::size_t x = 0; x < size[0]; ++x)
                k.weights[i++] = gx[x] * gy[y] * gz[z];
    return k;
}

inline WeightKernel make_weight_kernel(const SlidingWindowConfig& config)
{
    return config.weighting == Weighting::gaussian ? gaussian_weight_kernel(config.patch_size, config.gaussian_edge_value)
                                                   : equal_weight_kernel(config.patch_size);
}

/// Window starts along one axis: multiples of `stride`, plus a last start
/// flush with the far edge when the stride grid does not end there.
inline std::vector<std::size_t> axis_offsets(std::size_t length, std::size_t patch, std::size_t stride)
{
    if (length <= patch)
        return {0};
    std::vector<std::size_t> out;
    std::size_t o = 0;
    for (; o + patch <= length; o += stride)
        out.push_back(o);
    if (out.back() + patch < length)
        out.push_back(length - patch);
    return out;
}

/// Window corners ordered Z outermost, X innermost. Axes shorter than the
/// patch get a single start at 0 (the volume is padded before prediction).
inline std::vector<Index3> tile_offsets(const Index3& volume_dims, const SlidingWindowConfig& config)
{
    config.validate();
    const auto ox = axis_offsets(volume_dims[0], config.patch_size[0], config.stride[0]);
    const auto oy = axis_offsets(volume_dims[1], config.patch_size[1], config.stride[1]);
    const auto oz = axis_offsets(volume_dims[2], config.patch_size[2], config.stride[2]);
    std::vector<Index3> out;
    out.reserve(ox.size() * oy.size() * oz.size());
    for (std::size_t z : oz)
        for (std::size_t y : oy)
            for (std::size_t x : ox)
                out.push_back({x, y, z});
    return out;
}

/// Maps a normalized patch (C_in, patch dims) to class probabilities (3, patch dims).
using Predictor = std::function<Tensor4D(const Tensor4D&)>;

inline Predictor model_predictor(const Model& model)
{
    return [&model](const Tensor4D& patch) { return forward(model, patch); };
}

/// Weighted accumulation of patch predictions into numerator and
/// denominator grids (64-bit).
class WindowAccumulator {
public:
    WindowAccumulator(std::size_t channels, const Index3& dims)
        : channels_(channels), dims_(dims), num_(channels * voxel_count(dims), 0.0), den_(voxel_count(dims), 0.0)
    {
    }

    void add(const Index3& offset, const Tensor4D& probs, const WeightKernel& kernel)
    {
        if (probs.channels() != channels_ || probs.dims() != kernel.size)
            throw ContractError("predictor returned shape " + std::to_string(probs.channels()) + "x" +
                                to_string(probs.dims()) + ", expected " + std::to_string(channels_) + "x" +
                                to_string(kernel.size));
        const Index3& p = kernel.size;
        for (int a = 0; a < 3; ++a)
            if (offset[a] + p[a] > dims_[a])
                throw ArgumentError("window at " + to_string(offset) + " exceeds the accumulation grid");
        const std::size_t n = voxel_count(dims_);
        for (std::size_t z = 0; z < p[2]; ++z)
            for (std::size_t y = 0; y < p[1]; ++y)
                for (std::size_t x = 0; x < p[0]; ++x) {
                    const std::size_t g = ((offset[2] + z) * dims_[1] + offset[1] + y) * dims_[0] + offset[0] + x;
                    const double w = kernel(x, y, z);
                    den_[g] += w;
                    for (std::size_t c = 0; c < channels_; ++c)
                        num_[c * n + g] += w * probs(c, x, y, z);
                }
    }

    std::span<const double> denominator() const { return den_; }

    /// numerator / denominator; every voxel must have been covered.
    Tensor4D result() const
    {
        Tensor4D out(channels_, dims_);
        const std::size_t n = voxel_count(dims_);
        for (std::size_t i = 0; i < n; ++i) {
            if (!(den_[i] > 0.0))
                throw ContractError("voxel " + std::to_string(i) + " not covered by any window");
            for (std::size_t c = 0; c < channels_; ++c)
                out.data()[c * n + i] = static_cast<float>(num_[c * n + i] / den_[i]);
        }
        return out;
    }

private:
    std::size_t channels_;
    Index3 dims_;
    std::vector<double> num_;
    std::vector<double> den_;
};

namespace detail {

inline Tensor4D pad_to(const Tensor4D& t, const Index3& dims)
{
    if (t.dims() == dims)
        return t;
    Tensor4D out(t.channels(), dims);
    const Index3& d = t.dims();
    for (std::size_t c = 0; c < t.channels(); ++c)
        for (std::size_t z = 0; z < d[2]; ++z)
            for (std::size_t y = 0; y < d[1]; ++y)
                std::copy_n(&t(c, 0, y, z), d[0], &out(c, 0, y, z));
    return out;
}

inline Tensor4D crop_to(const Tensor4D& t, const Index3& dims)
{
    if (t.dims() == dims)
        return t;
    Tensor4D out(t.channels(), dims);
    for (std::size_t c = 0; c < t.channels(); ++c)
        for (std::size_t z = 0; z < dims[2]; ++z)
            for (std::size_t y = 0; y < dims[1]; ++y)
                std::copy_n(&t(c, 0, y, z), dims[0], &out(c, 0, y, z));
    return out;
}

inline Tensor4D copy_window(const Tensor4D& src, const Index3& offset, const Index3& size)
{
    Tensor4D out(src.channels(), size);
    for (std::size_t c = 0; c < src.channels(); ++c)
        for (std::size_t z = 0; z < size[2]; ++z)
            for (std::size_t y = 0; y < size[1]; ++y)
                std::copy_n(&src(c, offset[0], offset[1] + y, offset[2] + z), size[0], &out(c, 0, y, z));
    return out;
}

} // namespace detail

/// Dims of the grid windows are placed on: the volume, grown to the patch
/// size along any shorter axis.
inline Index3 padded_dims(const Index3& dims, const Index3& patch)
{
    return {std::max(dims[0], patch[0]), std::max(dims[1], patch[1]), std::max(dims[2], patch[2])};
}

inline constexpr std::size_t kOutputClasses = 3;

/// Same as sliding_window_predict but visits windows in the given order.
inline Volume3D sliding_window_predict(const Volume3D& vol, const Predictor& predictor,
                                       const SlidingWindowConfig& config, std::span<const Index3> offsets)
{
    config.validate();
    const Index3 grid = padded_dims(vol.dims(), config.patch_size);
    const Tensor4D padded = detail::pad_to(vol.tensor(), grid);
    const WeightKernel kernel = make_weight_kernel(config);
    WindowAccumulator acc(kOutputClasses, grid);
    for (const Index3& off : offsets) {
        const Tensor4D window = detail::copy_window(padded, off, config.patch_size);
        const Tensor4D probs = predictor(normalize_patchwise(window, config.exempt_channels));
        acc.add(off, probs, kernel);
    }
    return Volume3D(detail::crop_to(acc.result(), vol.dims()), vol.spacing());
}

/// Whole-volume class probabilities: each window is patch-wise normalized,
/// predicted, and blended with the configured weight kernel.
inline Volume3D sliding_window_predict(const Volume3D& vol, const Predictor& predictor,
                                       const SlidingWindowConfig& config)
{
    const auto offsets = tile_offsets(padded_dims(vol.dims(), config.patch_size), config);
    return sliding_window_predict(vol, predictor, config, offsets);
}

/// Voxel-wise mean of several probability volumes.
inline Volume3D ensemble_predict(std::span<const Volume3D> prob_volumes)
{
    if (prob_volumes.empty())
        throw ArgumentError("ensemble_predict: no inputs");
    const Volume3D& first = prob_volumes[0];
    for (const auto& v : prob_volumes)
        if (v.dims() != first.dims() || v.channels() != first.channels())
            throw ArgumentError("ensemble_predict: inputs differ in dims or channel count");
    std::vector<double> sum(first.data().size(), 0.0);
    for (const auto& v : prob_volumes) {
        auto d = v.data();
        for (std::size_t i = 0; i < sum.size(); ++i)
            sum[i] += d[i];
    }
    const double n = static_cast<double>(prob_volumes.size());
    std::vector<float> out(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i)
        out[i] = static_cast<float>(sum[i] / n);
    return Volume3D(Tensor4D(first.channels(), first.dims(), std::move(out)), first.spacing());
}

/// Index of the largest channel per voxel; ties go to the lowest class.
inline LabelMask argmax_labels(const Volume3D& probs)
{
    if (probs.channels() == 0 || probs.channels() > kNumLabels)
        throw ArgumentError("argmax_labels: expected 1 to 3 probability channels, got " +
                            std::to_string(probs.channels()));
    const std::size_t n = voxel_count(probs.dims());
    const auto d = probs.data();
    std::vector<std::uint8_t> labels(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.channels(); ++c)
            if (d[c * n + i] > d[best * n + i])
                best = c;
        labels[i] = static_cast<std::uint8_t>(best);
    }
    return LabelMask(probs.dims(), probs.spacing(), std::move(labels));
}

} // namespace volseg
