#pragma once

// Scheduled augmentation: the transform set, the ramped application
// probability and the cosine learning-rate decay used during training.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "volseg/error.hpp"
#include "volseg/grid.hpp"
#include "volseg/sampling.hpp"

namespace volseg {

enum class TransformKind { mirror, rotate, contrast, bias_field, noise, motion };

inline const char* to_string(TransformKind k)
{
    switch (k) {
    case TransformKind::mirror: return "mirror";
    case TransformKind::rotate: return "rotate";
    case TransformKind::contrast: return "contrast";
    case TransformKind::bias_field: return "bias_field";
    case TransformKind::noise: return "noise";
    case TransformKind::motion: return "motion";
    }
    return "?";
}

inline TransformKind parse_transform_kind(const std::string& s)
{
    for (auto k : {TransformKind::mirror, TransformKind::rotate, TransformKind::contrast, TransformKind::bias_field,
                   TransformKind::noise, TransformKind::motion})
        if (s == to_string(k))
            return k;
    throw ArgumentError("unknown transform '" + s + "'");
}

struct AugmentationPolicy {
    double p_start = 0.05;
    double p_end = 0.25;
    long total_iters = 100000;
    long step = 1000;
    std::optional<double> constant_p;
    std::vector<TransformKind> transforms{TransformKind::mirror, TransformKind::rotate,     TransformKind::contrast,
                                          TransformKind::bias_field, TransformKind::noise, TransformKind::motion};

    void validate() const
    {
        if (!(0.0 <= p_start && p_start <= p_end && p_end <= 1.0))
            throw ArgumentError("augmentation policy: require 0 <= p_start <= p_end <= 1");
        if (step < 1)
            throw ArgumentError("augmentation policy: step must be >= 1");
        if (total_iters < 1)
            throw ArgumentError("augmentation policy: total_iters must be >= 1");
        if (constant_p && !(*constant_p >= 0.0 && *constant_p <= 1.0))
            throw ArgumentError("augmentation policy: constant_p must lie in [0, 1]");
    }
};

using Range = std::pair<double, double>;

struct TransformParams {
    std::array<bool, 3> mirror_axes{true, true, true};
    double max_rotation_deg = 15.0;
    Range gamma{0.7, 1.5};
    Range bias_amplitude{0.9, 1.1};
    double bias_coeff_scale = 0.1;
    Range noise_sigma{0.0, 0.1};
    std::pair<int, int> ghost_shift{1, 4};
    Range ghost_weight{0.05, 0.2};
    /// Channels that carry binary masks: spatially transformed with nearest
    /// interpolation, never touched by intensity transforms.
    std::set<std::size_t> exempt_channels;

    void validate() const
    {
        auto ok = [](const Range& r) { return std::isfinite(r.first) && std::isfinite(r.second) && r.first <= r.second; };
        if (!std::isfinite(max_rotation_deg) || max_rotation_deg < 0.0 || max_rotation_deg > 180.0)
            throw ArgumentError("transform params: max_rotation_deg must lie in [0, 180]");
        if (!ok(gamma) || gamma.first <= 0.0)
            throw ArgumentError("transform params: gamma range must be positive and ordered");
        if (!ok(bias_amplitude) || bias_amplitude.first <= 0.0 || bias_amplitude.first > 1.0 ||
            bias_amplitude.second < 1.0)
            throw ArgumentError("transform params: bias amplitude range must be positive and contain 1");
        if (!std::isfinite(bias_coeff_scale) || bias_coeff_scale < 0.0)
            throw ArgumentError("transform params: bias_coeff_scale must be non-negative");
        if (!ok(noise_sigma) || noise_sigma.first < 0.0)
            throw ArgumentError("transform params: noise sigma range must be non-negative and ordered");
        if (ghost_shift.first < 0 || ghost_shift.first > ghost_shift.second)
            throw ArgumentError("transform params: ghost shift range must be non-negative and ordered");
        if (!ok(ghost_weight) || ghost_weight.first < 0.0 || ghost_weight.second > 1.0)
            throw ArgumentError("transform params: ghost weight range must lie in [0, 1]");
    }
};

/// Per-transform probability at training iteration `iter`: constant_p when
/// set, otherwise a linear ramp from p_start to p_end held constant on
/// plateaus of `step` iterations.
inline double scheduled_probability(long iter, const AugmentationPolicy& policy)
{
    policy.validate();
    if (iter < 0 || iter > policy.total_iters)
        throw ArgumentError("scheduled_probability: iter " + std::to_string(iter) + " outside [0, " +
                            std::to_string(policy.total_iters) + "]");
    if (policy.constant_p)
        return *policy.constant_p;
    const long plateau = (iter / policy.step) * policy.step;
    const double t = std::min(1.0, static_cast<double>(plateau) / static_cast<double>(policy.total_iters));
    return std::clamp(std::lerp(policy.p_start, policy.p_end, t), policy.p_start, policy.p_end);
}

/// Cosine decay from lr_max at iter 0 to lr_min at iter == total.
inline double cosine_lr(long iter, long total, double lr_max = 1e-3, double lr_min = 1e-5)
{
    if (total <= 0)
        throw ArgumentError("cosine_lr: total must be positive");
    if (iter < 0 || iter > total)
        throw ArgumentError("cosine_lr: iter outside [0, total]");
    const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(iter) / static_cast<double>(total)));
    return std::lerp(lr_min, lr_max, w);
}

// ---------------------------------------------------------------------------
// Individual transforms

/// Reverses the index order along each selected axis, in image and mask alike.
inline PatchSample mirror(const PatchSample& patch, const std::array<bool, 3>& axes)
{
    PatchSample out = patch;
    const Index3& d = patch.data.dims();
    auto src = [&](std::size_t x, std::size_t y, std::size_t z) {
        return Index3{axes[0] ? d[0] - 1 - x : x, axes[1] ? d[1] - 1 - y : y, axes[2] ? d[2] - 1 - z : z};
    };
    for (std::size_t z = 0; z < d[2]; ++z)
        for (std::size_t y = 0; y < d[1]; ++y)
            for (std::size_t x = 0; x < d[0]; ++x) {
                const auto s = src(x, y, z);
                for (std::size_t c = 0; c < patch.data.channels(); ++c)
                    out.data(c, x, y, z) = patch.data(c, s[0], s[1], s[2]);
                if (patch.mask_patch.dims() == d)
                    out.mask_patch(x, y, z) = patch.mask_patch(s[0], s[1], s[2]);
            }
    return out;
}

/// In-plane rotation by `angle_deg` about the patch centre (Z axis).
///
/// Continuous channels use bilinear sampling; exempt (binary) channels and
/// the mask use nearest. Samples falling outside the patch become 0 /
/// background.
inline PatchSample rotate_z(const PatchSample& patch, double angle_deg, const std::set<std::size_t>& exempt = {})
{
    if (!std::isfinite(angle_deg) || std::abs(angle_deg) > 360.0)
        throw ArgumentError("rotate_z: angle must be finite and within [-360, 360] degrees");
    const Index3& d = patch.data.dims();
    const bool has_mask = patch.mask_patch.dims() == d;
    PatchSample out = patch;
    std::fill(out.data.data().begin(), out.data.data().end(), 0.0f);
    if (has_mask)
        std::fill(out.mask_patch.labels().begin(), out.mask_patch.labels().end(), std::uint8_t{0});

    const double rad = angle_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cx = (static_cast<double>(d[0]) - 1.0) / 2.0;
    const double cy = (static_cast<double>(d[1]) - 1.0) / 2.0;
    const double tol = 1e-9;
    for (std::size_t y = 0; y < d[1]; ++y)
        for (std::size_t x = 0; x < d[0]; ++x) {
            // inverse map: output position rotated back by -angle
            const double ox = static_cast<double>(x) - cx, oy = static_cast<double>(y) - cy;
            double sx = cs * ox + sn * oy + cx;
            double sy = -sn * ox + cs * oy + cy;
            if (std::abs(sx - std::round(sx)) < tol)
                sx = std::round(sx);
            if (std::abs(sy - std::round(sy)) < tol)
                sy = std::round(sy);
            const bool inside = sx >= 0.0 && sy >= 0.0 && sx <= static_cast<double>(d[0] - 1) &&
                                sy <= static_cast<double>(d[1] - 1);
            if (!inside)
                continue;
            const auto nx = static_cast<std::size_t>(std::ceil(sx - 0.5));
            const auto ny = static_cast<std::size_t>(std::ceil(sy - 0.5));
            const auto x0 = static_cast<std::size_t>(std::floor(sx));
            const auto y0 = static_cast<std::size_t>(std::floor(sy));
            const std::size_t x1 = std::min(x0 + 1, d[0] - 1), y1 = std::min(y0 + 1, d[1] - 1);
            const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
            for (std::size_t z = 0; z < d[2]; ++z) {
                for (std::size_t c = 0; c < patch.data.channels(); ++c) {
                    if (exempt.contains(c)) {
                        out.data(c, x, y, z) = patch.data(c, nx, ny, z);
                        continue;
                    }
                    const double v00 = patch.data(c, x0, y0, z), v10 = patch.data(c, x1, y0, z);
                    const double v01 = patch.data(c, x0, y1, z), v11 = patch.data(c, x1, y1, z);
                    const double a = fx == 0.0 ? v00 : v00 + (v10 - v00) * fx;
                    const double b = fx == 0.0 ? v01 : v01 + (v11 - v01) * fx;
                    out.data(c, x, y, z) = static_cast<float>(fy == 0.0 ? a : a + (b - a) * fy);
                }
                if (has_mask)
                    out.mask_patch(x, y, z) = patch.mask_patch(nx, ny, z);
            }
        }
    return out;
}

/// Gamma map on min-max rescaled intensities, mapped back to the channel's
/// original [min, max].
inline PatchSample adjust_contrast(const PatchSample& patch, double gamma, const std::set<std::size_t>& exempt = {})
{
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw ArgumentError("adjust_contrast: gamma must be positive and finite");
    PatchSample out = patch;
    for (std::size_t c = 0; c < patch.data.channels(); ++c) {
        if (exempt.contains(c))
            continue;
        auto src = patch.data.channel(c);
        auto dst = out.data.channel(c);
        const auto [mn, mx] = std::minmax_element(src.begin(), src.end());
        const double lo = *mn, hi = *mx;
        if (!(hi > lo))
            continue;
        for (std::size_t i = 0; i < src.size(); ++i) {
            const double u = (src[i] - lo) / (hi - lo);
            const double g = std::copysign(std::pow(std::abs(u), gamma), u);
            dst[i] = static_cast<float>(lo + g * (hi - lo));
        }
    }
    return out;
}

inline constexpr std::size_t kBiasTerms = 20; // monomials x^i y^j z^k with i + j + k <= 3

/// Exponent triples of the bias polynomial, in coefficient order.
inline std::array<std::array<int, 3>, kBiasTerms> bias_monomials()
{
    std::array<std::array<int, 3>, kBiasTerms> m{};
    std::size_t n = 0;
    for (int i = 0; i <= 3; ++i)
        for (int j = 0; i + j <= 3; ++j)
            for (int k = 0; i + j + k <= 3; ++k)
                m[n++] = {i, j, k};
    return m;
}

/// Multiplies non-exempt channels by 1 + sum c_ijk x^i y^j z^k over
/// coordinates normalized to [-1, 1], clamped to `amplitude`.
inline PatchSample apply_bias_field(const PatchSample& patch, std::span<const double> coeffs,
                                    Range amplitude = {0.9, 1.1}, const std::set<std::size_t>& exempt = {})
{
    if (coeffs.size() != kBiasTerms)
        throw ArgumentError("apply_bias_field: expected 20 coefficients");
    for (double c : coeffs)
        if (!std::isfinite(c))
            throw ArgumentError("apply_bias_field: coefficients must be finite");
    if (!(amplitude.first > 0.0 && amplitude.first <= amplitude.second) || !std::isfinite(amplitude.second))
        throw ArgumentError("apply_bias_field: amplitude range must be positive and ordered");
    const Index3& d = patch.data.dims();
    auto norm = [](std::size_t i, std::size_t n) {
        return n > 1 ? 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0 : 0.0;
    };
    const auto mono = bias_monomials();
    PatchSample out = patch;
    for (std::size_t z = 0; z < d[2]; ++z)
        for (std::size_t y = 0; y < d[1]; ++y)
            for (std::size_t x = 0; x < d[0]; ++x) {
                const std::array<double, 3> p{norm(x, d[0]), norm(y, d[1]), norm(z, d[2])};
                double f = 1.0;
                for (std::size_t t = 0; t < kBiasTerms; ++t)
                    if (coeffs[t] != 0.0)
                        f += coeffs[t] * std::pow(p[0], mono[t][0]) * std::pow(p[1], mono[t][1]) *
                             std::pow(p[2], mono[t][2]);
                f = std::clamp(f, amplitude.first, amplitude.second);
                if (f == 1.0)
                    continue;
                for (std::size_t c = 0; c < patch.data.channels(); ++c)
                    if (!exempt.contains(c))
                        out.data(c, x, y, z) = static_cast<float>(patch.data(c, x, y, z) * f);
            }
    return out;
}

inline PatchSample add_gaussian_noise(const PatchSample& patch, double sigma, Rng& rng,
                                      const std::set<std::size_t>& exempt = {})
{
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw ArgumentError("add_gaussian_noise: sigma must be non-negative and finite");
    PatchSample out = patch;
    if (sigma == 0.0)
        return out;
    std::normal_distribution<double> noise(0.0, sigma);
    for (std::size_t c = 0; c < patch.data.channels(); ++c) {
        if (exempt.contains(c))
            continue;
        for (float& v : out.data.channel(c))
            v = static_cast<float>(v + noise(rng));
    }
    return out;
}

/// Single motion ghost: (1 - w) * x + w * x shifted cyclically by `shift`
/// voxels along Y. The mask is left as is.
inline PatchSample apply_motion_ghost(const PatchSample& patch, int shift, double weight,
                                      const std::set<std::size_t>& exempt = {})
{
    if (!(weight >= 0.0 && weight <= 1.0))
        throw ArgumentError("apply_motion_ghost: weight must lie in [0, 1]");
    PatchSample out = patch;
    if (weight == 0.0)
        return out;
    const Index3& d = patch.data.dims();
    const auto Y = static_cast<long>(d[1]);
    for (std::size_t c = 0; c < patch.data.channels(); ++c) {
        if (exempt.contains(c))
            continue;
        for (std::size_t z = 0; z < d[2]; ++z)
            for (long y = 0; y < Y; ++y) {
                const auto sy = static_cast<std::size_t>(((y - shift) % Y + Y) % Y);
                for (std::size_t x = 0; x < d[0]; ++x)
                    out.data(c, x, static_cast<std::size_t>(y), z) = static_cast<float>(
                        (1.0 - weight) * patch.data(c, x, static_cast<std::size_t>(y), z) +
                        weight * patch.data(c, x, sy, z));
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Policy application

struct AppliedTransform {
    TransformKind kind;
    std::string params;
};

struct AugmentationResult {
    PatchSample patch;
    double probability = 0.0;
    std::vector<AppliedTransform> applied;
};

/// Runs the policy's transforms in order, each drawn independently with the
/// scheduled probability for `iter`.
inline AugmentationResult apply_augmentations(const PatchSample& patch, const TransformParams& params,
                                              const AugmentationPolicy& policy, long iter, Rng& rng)
{
    params.validate();
    AugmentationResult result{patch, scheduled_probability(iter, policy), {}};
    std::bernoulli_distribution draw(result.probability);
    auto uniform = [&rng](Range r) { return r.first == r.second ? r.first : std::uniform_real_distribution<double>(r.first, r.second)(rng); };
    const auto& ex = params.exempt_channels;
    for (TransformKind kind : policy.transforms) {
        if (!draw(rng))
            continue;
        std::ostringstream log;
        PatchSample& p = result.patch;
        switch (kind) {
        case TransformKind::mirror: {
            std::array<bool, 3> axes{};
            std::bernoulli_distribution coin(0.5);
            for (int a = 0; a < 3; ++a)
                axes[a] = params.mirror_axes[a] && coin(rng);
            log << "axes=" << (axes[0] ? "X" : "") << (axes[1] ? "Y" : "") << (axes[2] ? "Z" : "");
            p = mirror(p, axes);
            break;
        }
        case TransformKind::rotate: {
            const double angle = uniform({-params.max_rotation_deg, params.max_rotation_deg});
            log << "angle_deg=" << angle;
            p = rotate_z(p, angle, ex);
            break;
        }
        case TransformKind::contrast: {
            const double gamma = uniform(params.gamma);
            log << "gamma=" << gamma;
            p = adjust_contrast(p, gamma, ex);
            break;
        }
        case TransformKind::bias_field: {
            std::array<double, kBiasTerms> coeffs{};
            for (std::size_t t = 1; t < kBiasTerms; ++t)
                coeffs[t] = uniform({-params.bias_coeff_scale, params.bias_coeff_scale});
            log << "coeffs=";
            for (std::size_t t = 0; t < kBiasTerms; ++t)
                log << (t ? "," : "") << coeffs[t];
            p = apply_bias_field(p, coeffs, params.bias_amplitude, ex);
            break;
        }
        case TransformKind::noise: {
            const double sigma = uniform(params.noise_sigma);
            log << "sigma=" << sigma;
            p = add_gaussian_noise(p, sigma, rng, ex);
            break;
        }
        case TransformKind::motion: {
            const int shift = std::uniform_int_distribution<int>(params.ghost_shift.first, params.ghost_shift.second)(rng);
            const double weight = uniform(params.ghost_weight);
            log << "shift=" << shift << " weight=" << weight;
            p = apply_motion_ghost(p, shift, weight, ex);
            break;
        }
        }
        result.applied.push_back({kind, log.str()});
    }
    return result;
}

} // namespace volseg
