#pragma once

// Resampling between voxel grids of different spacing.
//
// Voxel centers are aligned: voxel i along an axis sits at physical position
// (i + 0.5) * spacing. Source coordinates falling outside [0, n - 1] are clamped.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "volseg/error.hpp"
#include "volseg/grid.hpp"

namespace volseg {

namespace detail {

// Relative slack so that an exact physical-extent ratio such as 10 * 0.5 / 0.5
// does not round up to an extra voxel.
inline std::size_t resampled_extent(std::size_t n, double spacing_in, double spacing_out)
{
    const double ratio = static_cast<double>(n) * spacing_in / spacing_out;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(ratio - 1e-9 * std::max(1.0, ratio))));
}

/// Continuous source index of output voxel `i`, clamped to the input domain.
inline double source_coordinate(std::size_t i, double spacing_in, double spacing_out, std::size_t n_in)
{
    const double s = (static_cast<double>(i) + 0.5) * (spacing_out / spacing_in) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(n_in - 1));
}

/// Nearest input voxel for a continuous index, ties resolved toward the lower index.
inline std::size_t nearest_index(double s, std::size_t n_in)
{
    const double r = std::ceil(s - 0.5);
    return static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(n_in - 1)));
}

struct LinearTap {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double frac = 0.0;
};

inline std::vector<LinearTap> linear_taps(std::size_t n_out, std::size_t n_in, double spacing_in, double spacing_out)
{
    std::vector<LinearTap> taps(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double s = source_coordinate(i, spacing_in, spacing_out, n_in);
        const auto lo = static_cast<std::size_t>(std::floor(s));
        taps[i].lo = lo;
        taps[i].hi = std::min(lo + 1, n_in - 1);
        taps[i].frac = s - static_cast<double>(lo);
    }
    return taps;
}

inline void check_target(const Spacing& target)
{
    for (double v : target)
        if (!(v > 0.0) || !std::isfinite(v))
            throw ArgumentError("target spacing must be strictly positive, got " + to_string(target));
}

} // namespace detail

inline Index3 resampled_dims(const Index3& dims, const Spacing& spacing, const Spacing& target)
{
    detail::check_target(target);
    return {detail::resampled_extent(dims[0], spacing[0], target[0]),
            detail::resampled_extent(dims[1], spacing[1], target[1]),
            detail::resampled_extent(dims[2], spacing[2], target[2])};
}

/// Trilinear resampling of every channel to `target` spacing.
inline Volume3D resample_linear(const Volume3D& vol, const Spacing& target)
{
    const Index3 out_dims = resampled_dims(vol.dims(), vol.spacing(), target);
    const Index3& in = vol.dims();
    const auto tx = detail::linear_taps(out_dims[0], in[0], vol.spacing()[0], target[0]);
    const auto ty = detail::linear_taps(out_dims[1], in[1], vol.spacing()[1], target[1]);
    const auto tz = detail::linear_taps(out_dims[2], in[2], vol.spacing()[2], target[2]);

    const Tensor4D& src = vol.tensor();
    Tensor4D out(vol.channels(), out_dims);
    for (std::size_t c = 0; c < vol.channels(); ++c)
        for (std::size_t z = 0; z < out_dims[2]; ++z)
            for (std::size_t y = 0; y < out_dims[1]; ++y)
                for (std::size_t x = 0; x < out_dims[0]; ++x) {
                    const auto& [x0, x1, fx] = tx[x];
                    const auto& [y0, y1, fy] = ty[y];
                    const auto& [z0, z1, fz] = tz[z];
                    auto lerp = [](double a, double b, double f) { return f == 0.0 ? a : a + (b - a) * f; };
                    const double c00 = lerp(src(c, x0, y0, z0), src(c, x1, y0, z0), fx);
                    const double c10 = lerp(src(c, x0, y1, z0), src(c, x1, y1, z0), fx);
                    const double c01 = lerp(src(c, x0, y0, z1), src(c, x1, y0, z1), fx);
                    const double c11 = lerp(src(c, x0, y1, z1), src(c, x1, y1, z1), fx);
                    const double v = lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz);
                    out(c, x, y, z) = static_cast<float>(v);
                }
    // Linear interpolation of a {0,1} field is no longer binary.
    return Volume3D(std::move(out), target, IntensityKind::continuous);
}

/// Nearest-neighbour resampling onto an explicit grid (`out_dims` at `target` spacing).
inline LabelMask resample_nearest_to_grid(const LabelMask& mask, const Spacing& target, const Index3& out_dims)
{
    detail::check_target(target);
    const Index3& in = mask.dims();
    std::array<std::vector<std::size_t>, 3> idx;
    for (int a = 0; a < 3; ++a) {
        idx[a].resize(out_dims[a]);
        for (std::size_t i = 0; i < out_dims[a]; ++i)
            idx[a][i] = detail::nearest_index(
                (static_cast<double>(i) + 0.5) * (target[a] / mask.spacing()[a]) - 0.5, in[a]);
    }
    LabelMask out(out_dims, target);
    for (std::size_t z = 0; z < out_dims[2]; ++z)
        for (std::size_t y = 0; y < out_dims[1]; ++y)
            for (std::size_t x = 0; x < out_dims[0]; ++x)
                out(x, y, z) = mask(idx[0][x], idx[1][y], idx[2][z]);
    return out;
}

inline LabelMask resample_nearest(const LabelMask& mask, const Spacing& target)
{
    return resample_nearest_to_grid(mask, target, resampled_dims(mask.dims(), mask.spacing(), target));
}

/// Maps a working-grid prediction back onto the grid of the original input.
inline LabelMask restore_resolution(const LabelMask& mask, const Volume3D& reference)
{
    return resample_nearest_to_grid(mask, reference.spacing(), reference.dims());
}

} // namespace volseg
