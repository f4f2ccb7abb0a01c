#pragma once

// Training patch placement and the two intensity normalization regimes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "volseg/error.hpp"
#include "volseg/grid.hpp"

namespace volseg {

using Rng = std::mt19937_64;

struct PatchSpec {
    Index3 size{320, 320, 64};
    double target_fraction = 0.9;

    void validate() const
    {
        for (std::size_t s : size)
            if (s == 0)
                throw ArgumentError("patch size components must be positive");
        if (!(target_fraction >= 0.0 && target_fraction <= 1.0))
            throw ArgumentError("target_fraction must lie in [0, 1]");
    }
};

enum class Provenance { targeted, random };

struct PatchPosition {
    Index3 offset{0, 0, 0};
    Provenance provenance = Provenance::random;
};

struct PatchSample {
    Index3 offset{0, 0, 0};
    Tensor4D data;
    LabelMask mask_patch;
    Provenance provenance = Provenance::random;
};

/// Highest valid patch corner along one axis; 0 when the volume is smaller than the patch.
inline std::size_t max_offset(std::size_t dim, std::size_t patch) { return dim > patch ? dim - patch : 0; }

/// With probability `target_fraction` (and only if the mask has foreground),
/// picks a foreground voxel uniformly and then a corner uniformly among the
/// valid corners whose patch contains it. Otherwise the corner is uniform
/// over all valid corners.
inline PatchPosition sample_patch_position(const LabelMask& mask, const PatchSpec& spec, Rng& rng)
{
    spec.validate();
    const Index3& d = mask.dims();
    std::bernoulli_distribution targeted(spec.target_fraction);
    const bool want_target = targeted(rng);

    if (want_target) {
        std::vector<std::size_t> fg;
        const auto labels = mask.labels();
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] != 0)
                fg.push_back(i);
        if (!fg.empty()) {
            const std::size_t pick = fg[std::uniform_int_distribution<std::size_t>(0, fg.size() - 1)(rng)];
            const Index3 v{pick % d[0], (pick / d[0]) % d[1], pick / (d[0] * d[1])};
            PatchPosition pos{{}, Provenance::targeted};
            for (int a = 0; a < 3; ++a) {
                const std::size_t hi = std::min(v[a], max_offset(d[a], spec.size[a]));
                const std::size_t lo = v[a] + 1 > spec.size[a] ? v[a] + 1 - spec.size[a] : 0;
                pos.offset[a] = std::uniform_int_distribution<std::size_t>(std::min(lo, hi), hi)(rng);
            }
            return pos;
        }
    }
    PatchPosition pos{{}, Provenance::random};
    for (int a = 0; a < 3; ++a)
        pos.offset[a] = std::uniform_int_distribution<std::size_t>(0, max_offset(d[a], spec.size[a]))(rng);
    return pos;
}

/// Copies the patch at `offset`; voxels past the volume edge are 0 in the
/// image channels and background in the mask.
inline PatchSample extract_patch(const Volume3D& vol, const LabelMask& mask, const Index3& offset,
                                 const PatchSpec& spec, Provenance provenance = Provenance::random)
{
    const Index3& d = vol.dims();
    if (mask.dims() != d)
        throw ArgumentError("extract_patch: mask dims " + to_string(mask.dims()) + " differ from volume dims " +
                            to_string(d));
    for (int a = 0; a < 3; ++a)
        if (offset[a] >= d[a])
            throw ArgumentError("extract_patch: offset " + to_string(offset) + " lies outside the volume " +
                                to_string(d));
    const Index3& p = spec.size;
    PatchSample out{offset, Tensor4D(vol.channels(), p), LabelMask(p, mask.spacing()), provenance};
    const Index3 n{std::min(p[0], d[0] - offset[0]), std::min(p[1], d[1] - offset[1]),
                   std::min(p[2], d[2] - offset[2])};
    const Tensor4D& src = vol.tensor();
    for (std::size_t c = 0; c < vol.channels(); ++c)
        for (std::size_t z = 0; z < n[2]; ++z)
            for (std::size_t y = 0; y < n[1]; ++y) {
                const float* s = &src(c, offset[0], offset[1] + y, offset[2] + z);
                std::copy_n(s, n[0], &out.data(c, 0, y, z));
            }
    for (std::size_t z = 0; z < n[2]; ++z)
        for (std::size_t y = 0; y < n[1]; ++y)
            for (std::size_t x = 0; x < n[0]; ++x)
                out.mask_patch(x, y, z) = mask(offset[0] + x, offset[1] + y, offset[2] + z);
    return out;
}

namespace detail {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd channel_stats(std::span<const float> v)
{
    double sum = 0.0;
    for (float x : v)
        sum += x;
    const double mean = sum / static_cast<double>(v.size());
    double sq = 0.0;
    for (float x : v)
        sq += (x - mean) * (x - mean);
    return {mean, std::sqrt(sq / static_cast<double>(v.size()))};
}

inline void zscore(std::span<const float> in, std::span<float> out, double eps)
{
    const auto [mean, sd] = channel_stats(in);
    const double denom = std::max(sd, eps);
    for (std::size_t i = 0; i < in.size(); ++i)
        out[i] = static_cast<float>((in[i] - mean) / denom);
}

} // namespace detail

inline constexpr double kNormEps = 1e-8;

/// Z-scores each non-exempt channel using statistics of this patch alone.
inline Tensor4D normalize_patchwise(const Tensor4D& patch, const std::set<std::size_t>& exempt_channels,
                                    double eps = kNormEps)
{
    if (!(eps > 0.0))
        throw ArgumentError("normalize_patchwise: eps must be positive");
    Tensor4D out = patch;
    for (std::size_t c = 0; c < patch.channels(); ++c)
        if (!exempt_channels.contains(c))
            detail::zscore(patch.channel(c), out.channel(c), eps);
    return out;
}

/// Whole-image z-score per channel (baseline configuration).
inline Volume3D normalize_imagewise(const Volume3D& vol, double eps = kNormEps,
                                    const std::set<std::size_t>& exempt_channels = {})
{
    if (!(eps > 0.0))
        throw ArgumentError("normalize_imagewise: eps must be positive");
    return Volume3D(normalize_patchwise(vol.tensor(), exempt_channels, eps), vol.spacing());
}

} // namespace volseg
