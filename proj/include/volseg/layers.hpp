#pragma once

// Forward kernels used by the U-Net: convolution, instance normalization,
// ReLU, 2x max pooling, 2x nearest upsampling, channel concat and softmax.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "volseg/error.hpp"
#include "volseg/grid.hpp"
#include "volseg/parallel.hpp"

namespace volseg {

/// Zero-padded "same" cross-correlation.
///
/// `weights` is laid out [out][in][kz][ky][kx] with kx fastest; the output has
/// bias.size() channels.
inline Tensor4D conv3d(const Tensor4D& input, std::span<const float> weights, std::span<const float> bias,
                       const Index3& kernel)
{
    for (std::size_t k : kernel)
        if (k % 2 == 0)
            throw ArgumentError("conv3d: kernel edges must be odd, got " + to_string(kernel));
    const std::size_t cin = input.channels();
    const std::size_t cout = bias.size();
    const std::size_t ktaps = voxel_count(kernel);
    if (weights.size() != ktaps * cin * cout)
        throw ArgumentError("conv3d: expected " + std::to_string(ktaps * cin * cout) + " weights for kernel " +
                            to_string(kernel) + " " + std::to_string(cin) + "->" + std::to_string(cout) +
                            ", got " + std::to_string(weights.size()));

    const Index3& d = input.dims();
    const auto X = static_cast<std::ptrdiff_t>(d[0]);
    const auto Y = static_cast<std::ptrdiff_t>(d[1]);
    const auto Z = static_cast<std::ptrdiff_t>(d[2]);
    const auto px = static_cast<std::ptrdiff_t>(kernel[0] / 2);
    const auto py = static_cast<std::ptrdiff_t>(kernel[1] / 2);
    const auto pz = static_cast<std::ptrdiff_t>(kernel[2] / 2);

    Tensor4D out(cout, d);
    parallel_for(cout, [&](std::size_t co) {
        float* dst = out.channel(co).data();
        std::fill_n(dst, out.voxels(), bias[co]);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const float* src = input.channel(ci).data();
            const float* w = weights.data() + (co * cin + ci) * ktaps;
            for (std::ptrdiff_t kz = 0; kz < static_cast<std::ptrdiff_t>(kernel[2]); ++kz)
                for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(kernel[1]); ++ky)
                    for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(kernel[0]); ++kx) {
                        const float wv = *w++;
                        if (wv == 0.0f)
                            continue;
                        const std::ptrdiff_t dz = kz - pz, dy = ky - py, dx = kx - px;
                        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t x1 = std::min(X, X - dx);
                        for (std::ptrdiff_t z = std::max<std::ptrdiff_t>(0, -dz); z < std::min(Z, Z - dz); ++z)
                            for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, -dy); y < std::min(Y, Y - dy);
                                 ++y) {
                                float* o = dst + (z * Y + y) * X;
                                const float* s = src + ((z + dz) * Y + (y + dy)) * X + dx;
                                for (std::ptrdiff_t x = x0; x < x1; ++x)
                                    o[x] += wv * s[x];
                            }
                    }
        }
    });
    return out;
}

/// Per-channel standardization over the spatial extent of a single instance,
/// followed by the affine map gamma * xhat + beta.
inline Tensor4D instance_norm(const Tensor4D& input, std::span<const float> gamma, std::span<const float> beta,
                              double eps = 1e-5)
{
    if (gamma.size() != input.channels() || beta.size() != input.channels())
        throw ArgumentError("instance_norm: gamma/beta length must equal the channel count " +
                            std::to_string(input.channels()));
    if (!(eps > 0.0))
        throw ArgumentError("instance_norm: eps must be positive");
    Tensor4D out(input.channels(), input.dims());
    const std::size_t n = input.voxels();
    parallel_for(input.channels(), [&](std::size_t c) {
        auto src = input.channel(c);
        auto dst = out.channel(c);
        double sum = 0.0;
        for (float v : src)
            sum += v;
        const double mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (float v : src)
            sq += (v - mean) * (v - mean);
        const double var = sq / static_cast<double>(n);
        const double scale = gamma[c] / std::sqrt(var + eps);
        for (std::size_t i = 0; i < n; ++i)
            dst[i] = static_cast<float>((src[i] - mean) * scale + beta[c]);
    });
    return out;
}

inline void relu_inplace(Tensor4D& t)
{
    for (float& v : t.data())
        v = std::max(v, 0.0f);
}

inline Tensor4D max_pool_2x(const Tensor4D& input)
{
    const Index3& d = input.dims();
    for (std::size_t e : d)
        if (e % 2 != 0)
            throw ArgumentError("max_pool_2x: spatial dims must be even, got " + to_string(d));
    const Index3 h{d[0] / 2, d[1] / 2, d[2] / 2};
    Tensor4D out(input.channels(), h);
    for (std::size_t c = 0; c < input.channels(); ++c)
        for (std::size_t z = 0; z < h[2]; ++z)
            for (std::size_t y = 0; y < h[1]; ++y)
                for (std::size_t x = 0; x < h[0]; ++x) {
                    float m = -std::numeric_limits<float>::infinity();
                    for (std::size_t k = 0; k < 8; ++k)
                        m = std::max(m, input(c, 2 * x + (k & 1), 2 * y + ((k >> 1) & 1), 2 * z + (k >> 2)));
                    out(c, x, y, z) = m;
                }
    return out;
}

inline Tensor4D nearest_upsample_2x(const Tensor4D& input)
{
    const Index3& d = input.dims();
    const Index3 u{2 * d[0], 2 * d[1], 2 * d[2]};
    Tensor4D out(input.channels(), u);
    for (std::size_t c = 0; c < input.channels(); ++c)
        for (std::size_t z = 0; z < u[2]; ++z)
            for (std::size_t y = 0; y < u[1]; ++y)
                for (std::size_t x = 0; x < u[0]; ++x)
                    out(c, x, y, z) = input(c, x / 2, y / 2, z / 2);
    return out;
}

/// Stacks `first` then `second` along the channel axis.
inline Tensor4D concat_channels(const Tensor4D& first, const Tensor4D& second)
{
    if (first.dims() != second.dims())
        throw ArgumentError("concat_channels: spatial dims differ (" + to_string(first.dims()) + " vs " +
                            to_string(second.dims()) + ")");
    std::vector<float> data;
    data.reserve(first.size() + second.size());
    data.insert(data.end(), first.data().begin(), first.data().end());
    data.insert(data.end(), second.data().begin(), second.data().end());
    return Tensor4D(first.channels() + second.channels(), first.dims(), std::move(data));
}

/// Softmax across channels at every voxel, computed with max subtraction.
inline void softmax_channels_inplace(Tensor4D& t)
{
    const std::size_t C = t.channels();
    const std::size_t n = t.voxels();
    auto data = t.data();
    for (std::size_t i = 0; i < n; ++i) {
        float m = -std::numeric_limits<float>::infinity();
        for (std::size_t c = 0; c < C; ++c)
            m = std::max(m, data[c * n + i]);
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double e = std::exp(static_cast<double>(data[c * n + i]) - m);
            data[c * n + i] = static_cast<float>(e);
            sum += e;
        }
        for (std::size_t c = 0; c < C; ++c)
            data[c * n + i] = static_cast<float>(data[c * n + i] / sum);
    }
}

} // namespace volseg
