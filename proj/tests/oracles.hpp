#pragma once

// Test-only reference computations. Everything here is written directly from
// the definitions with plain nested loops and shares no code path with the
// library kernels it is compared against (only the value types).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "volseg/grid.hpp"

namespace oracle {

using volseg::Index3;
using volseg::Tensor4D;

// ---------------------------------------------------------------- network

/// Direct zero-padded cross-correlation with explicit bounds checks.
inline Tensor4D conv3d(const Tensor4D& in, const std::vector<float>& w, const std::vector<float>& b, int k)
{
    const int X = static_cast<int>(in.dims()[0]), Y = static_cast<int>(in.dims()[1]), Z = static_cast<int>(in.dims()[2]);
    const int cin = static_cast<int>(in.channels()), cout = static_cast<int>(b.size());
    const int pad = k / 2;
    Tensor4D out(static_cast<std::size_t>(cout), in.dims());
    for (int co = 0; co < cout; ++co)
        for (int z = 0; z < Z; ++z)
            for (int y = 0; y < Y; ++y)
                for (int x = 0; x < X; ++x) {
                    double acc = b[co];
                    for (int ci = 0; ci < cin; ++ci)
                        for (int kz = 0; kz < k; ++kz)
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx) {
                                    const int sx = x + kx - pad, sy = y + ky - pad, sz = z + kz - pad;
                                    if (sx < 0 || sy < 0 || sz < 0 || sx >= X || sy >= Y || sz >= Z)
                                        continue;
                                    const std::size_t wi = (((static_cast<std::size_t>(co) * cin + ci) * k + kz) * k + ky) * k + kx;
                                    acc += static_cast<double>(w[wi]) * in(ci, sx, sy, sz);
                                }
                    out(co, x, y, z) = static_cast<float>(acc);
                }
    return out;
}

inline Tensor4D instance_norm(const Tensor4D& in, const std::vector<float>& gamma, const std::vector<float>& beta,
                              double eps)
{
    Tensor4D out(in.channels(), in.dims());
    const Index3& d = in.dims();
    const double n = static_cast<double>(d[0] * d[1] * d[2]);
    for (std::size_t c = 0; c < in.channels(); ++c) {
        double mean = 0.0;
        for (std::size_t z = 0; z < d[2]; ++z)
            for (std::size_t y = 0; y < d[1]; ++y)
                for (std::size_t x = 0; x < d[0]; ++x)
                    mean += in(c, x, y, z);
        mean /= n;
        double var = 0.0;
        for (std::size_t z = 0; z < d[2]; ++z)
            for (std::size_t y = 0; y < d[1]; ++y)
                for (std::size_t x = 0; x < d[0]; ++x)
                    var += (in(c, x, y, z) - mean) * (in(c, x, y, z) - mean);
        var /= n;
        for (std::size_t z = 0; z < d[2]; ++z)
            for (std::size_t y = 0; y < d[1]; ++y)
                for (std::size_t x = 0; x < d[0]; ++x)
                    out(c, x, y, z) =
                        static_cast<float>(gamma[c] * (in(c, x, y, z) - mean) / std::sqrt(var + eps) + beta[c]);
    }
    return out;
}

inline Tensor4D relu(Tensor4D t)
{
    for (auto& v : t.storage())
        v = v > 0.0f ? v : 0.0f;
    return t;
}

inline Tensor4D block_max(const Tensor4D& in)
{
    const Index3& d = in.dims();
    Tensor4D out(in.channels(), {d[0] / 2, d[1] / 2, d[2] / 2});
    for (std::size_t c = 0; c < in.channels(); ++c)
        for (std::size_t z = 0; z < d[2] / 2; ++z)
            for (std::size_t y = 0; y < d[1] / 2; ++y)
                for (std::size_t x = 0; x < d[0] / 2; ++x) {
                    float m = in(c, 2 * x, 2 * y, 2 * z);
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                m = std::max(m, in(c, 2 * x + dx, 2 * y + dy, 2 * z + dz));
                    out(c, x, y, z) = m;
                }
    return out;
}

inline Tensor4D replicate2(const Tensor4D& in)
{
    const Index3& d = in.dims();
    Tensor4D out(in.channels(), {2 * d[0], 2 * d[1], 2 * d[2]});
    for (std::size_t c = 0; c < in.channels(); ++c)
        for (std::size_t z = 0; z < d[2]; ++z)
            for (std::size_t y = 0; y < d[1]; ++y)
                for (std::size_t x = 0; x < d[0]; ++x)
                    for (int k = 0; k < 8; ++k)
                        out(c, 2 * x + (k & 1), 2 * y + ((k >> 1) & 1), 2 * z + (k >> 2)) = in(c, x, y, z);
    return out;
}

inline Tensor4D stack(const Tensor4D& a, const Tensor4D& b)
{
    Tensor4D out(a.channels() + b.channels(), a.dims());
    const Index3& d = a.dims();
    for (std::size_t z = 0; z < d[2]; ++z)
        for (std::size_t y = 0; y < d[1]; ++y)
            for (std::size_t x = 0; x < d[0]; ++x) {
                for (std::size_t c = 0; c < a.channels(); ++c)
                    out(c, x, y, z) = a(c, x, y, z);
                for (std::size_t c = 0; c < b.channels(); ++c)
                    out(a.channels() + c, x, y, z) = b(c, x, y, z);
            }
    return out;
}

inline Tensor4D softmax(const Tensor4D& in)
{
    Tensor4D out(in.channels(), in.dims());
    const Index3& d = in.dims();
    for (std::size_t z = 0; z < d[2]; ++z)
        for (std::size_t y = 0; y < d[1]; ++y)
            for (std::size_t x = 0; x < d[0]; ++x) {
                double sum = 0.0;
                for (std::size_t c = 0; c < in.channels(); ++c)
                    sum += std::exp(static_cast<double>(in(c, x, y, z)));
                for (std::size_t c = 0; c < in.channels(); ++c)
                    out(c, x, y, z) = static_cast<float>(std::exp(static_cast<double>(in(c, x, y, z))) / sum);
            }
    return out;
}

// ---------------------------------------------------------------- resampling

/// Trilinear value of `t` (channel 0) at continuous index (sx, sy, sz),
/// clamping every coordinate to the grid.
inline double trilinear_at(const Tensor4D& t, double sx, double sy, double sz)
{
    const Index3& d = t.dims();
    auto clamp = [](double s, std::size_t n) { return std::min(std::max(s, 0.0), static_cast<double>(n - 1)); };
    sx = clamp(sx, d[0]);
    sy = clamp(sy, d[1]);
    sz = clamp(sz, d[2]);
    double acc = 0.0;
    for (std::size_t z = 0; z < d[2]; ++z)
        for (std::size_t y = 0; y < d[1]; ++y)
            for (std::size_t x = 0; x < d[0]; ++x) {
                const double wx = std::max(0.0, 1.0 - std::abs(sx - static_cast<double>(x)));
                const double wy = std::max(0.0, 1.0 - std::abs(sy - static_cast<double>(y)));
                const double wz = std::max(0.0, 1.0 - std::abs(sz - static_cast<double>(z)));
                acc += wx * wy * wz * t(0, x, y, z);
            }
    return acc;
}

// ---------------------------------------------------------------- metrics

struct Counts {
    double inter = 0, truth = 0, pred = 0;
};

inline Counts count(const std::vector<std::uint8_t>& y, const std::vector<std::uint8_t>& p)
{
    Counts c;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 1 && p[i] == 1)
            c.inter += 1;
        if (y[i] == 1)
            c.truth += 1;
        if (p[i] == 1)
            c.pred += 1;
    }
    return c;
}

// ---------------------------------------------------------------- random data

inline Tensor4D random_tensor(std::size_t c, const Index3& d, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor4D t(c, d);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.storage())
        v = static_cast<float>(u(rng));
    return t;
}

inline std::vector<std::uint8_t> random_labels(std::size_t n, std::mt19937_64& rng, int max_label = 2)
{
    std::uniform_int_distribution<int> u(0, max_label);
    std::vector<std::uint8_t> out(n);
    for (auto& v : out)
        v = static_cast<std::uint8_t>(u(rng));
    return out;
}

inline std::vector<unsigned char> file_bytes(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline double max_abs_diff(const Tensor4D& a, const Tensor4D& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("volseg_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace oracle
