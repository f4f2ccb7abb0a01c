#pragma once

// Core value types: dense channel-first tensors, physical volumes and label masks.
//
// Memory layout everywhere is channel-major, then Z, then Y, with X fastest:
//   index(c, x, y, z) = ((c * Z + z) * Y + y) * X + x

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "volseg/error.hpp"

namespace volseg {

using Index3 = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

inline constexpr std::size_t voxel_count(const Index3& d) noexcept { return d[0] * d[1] * d[2]; }

inline std::string to_string(const Index3& d)
{
    std::ostringstream os;
    os << d[0] << "x" << d[1] << "x" << d[2];
    return os.str();
}

inline std::string to_string(const Spacing& s)
{
    std::ostringstream os;
    os << s[0] << "x" << s[1] << "x" << s[2];
    return os.str();
}

inline void check_spacing(const Spacing& s, const char* what)
{
    for (double v : s)
        if (!(v > 0.0) || !std::isfinite(v))
            throw ArgumentError(std::string(what) + ": spacing must be strictly positive and finite, got " +
                                to_string(s));
}

/// Dense C x X x Y x Z array.
template <typename T>
class BasicTensor4D {
public:
    using value_type = T;

    BasicTensor4D() = default;

    BasicTensor4D(std::size_t channels, const Index3& dims, T fill = T{})
        : channels_(channels), dims_(dims), data_(channels * voxel_count(dims), fill)
    {
    }

    BasicTensor4D(std::size_t channels, const Index3& dims, std::vector<T> data)
        : channels_(channels), dims_(dims), data_(std::move(data))
    {
        if (data_.size() != channels_ * voxel_count(dims_))
            throw ArgumentError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                std::to_string(channels_) + "x" + to_string(dims_));
    }

    std::size_t channels() const noexcept { return channels_; }
    const Index3& dims() const noexcept { return dims_; }
    std::size_t voxels() const noexcept { return voxel_count(dims_); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    std::span<T> channel(std::size_t c) noexcept { return {data_.data() + c * voxels(), voxels()}; }
    std::span<const T> channel(std::size_t c) const noexcept { return {data_.data() + c * voxels(), voxels()}; }

    std::size_t offset(std::size_t c, std::size_t x, std::size_t y, std::size_t z) const noexcept
    {
        return ((c * dims_[2] + z) * dims_[1] + y) * dims_[0] + x;
    }

    T& operator()(std::size_t c, std::size_t x, std::size_t y, std::size_t z) noexcept
    {
        return data_[offset(c, x, y, z)];
    }
    const T& operator()(std::size_t c, std::size_t x, std::size_t y, std::size_t z) const noexcept
    {
        return data_[offset(c, x, y, z)];
    }

    bool same_shape(const BasicTensor4D& o) const noexcept { return channels_ == o.channels_ && dims_ == o.dims_; }

    bool all_finite() const noexcept
    {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(static_cast<double>(v)); });
    }

    friend bool operator==(const BasicTensor4D&, const BasicTensor4D&) = default;

private:
    std::size_t channels_ = 0;
    Index3 dims_{0, 0, 0};
    std::vector<T> data_;
};

using Tensor4D = BasicTensor4D<float>;

enum class IntensityKind { continuous, binary };

/// Multi-channel scalar image with physical voxel spacing (mm).
class Volume3D {
public:
    Volume3D() = default;

    Volume3D(Tensor4D tensor, const Spacing& spacing, IntensityKind kind = IntensityKind::continuous)
        : tensor_(std::move(tensor)), spacing_(spacing), kind_(kind)
    {
        validate();
    }

    std::size_t channels() const noexcept { return tensor_.channels(); }
    const Index3& dims() const noexcept { return tensor_.dims(); }
    const Spacing& spacing() const noexcept { return spacing_; }
    IntensityKind intensity_kind() const noexcept { return kind_; }
    const Tensor4D& tensor() const noexcept { return tensor_; }
    std::span<const float> data() const noexcept { return tensor_.data(); }

    float operator()(std::size_t c, std::size_t x, std::size_t y, std::size_t z) const noexcept
    {
        return tensor_(c, x, y, z);
    }

    friend bool operator==(const Volume3D&, const Volume3D&) = default;

private:
    void validate() const
    {
        if (tensor_.channels() == 0)
            throw ArgumentError("volume must have at least one channel");
        for (std::size_t d : tensor_.dims())
            if (d == 0)
                throw ArgumentError("volume dims must be positive, got " + to_string(tensor_.dims()));
        check_spacing(spacing_, "volume");
        if (kind_ == IntensityKind::binary)
            for (float v : tensor_.data())
                if (v != 0.0f && v != 1.0f)
                    throw ArgumentError("binary volume contains a value outside {0, 1}");
    }

    Tensor4D tensor_;
    Spacing spacing_{1.0, 1.0, 1.0};
    IntensityKind kind_ = IntensityKind::continuous;
};

inline constexpr std::uint8_t kNumLabels = 3;

/// Integer label grid over {0 = background, 1 = GTVp, 2 = GTVn}.
class LabelMask {
public:
    LabelMask() = default;

    LabelMask(const Index3& dims, const Spacing& spacing, std::uint8_t fill = 0)
        : dims_(dims), spacing_(spacing), labels_(voxel_count(dims), fill)
    {
        validate();
    }

    LabelMask(const Index3& dims, const Spacing& spacing, std::vector<std::uint8_t> labels)
        : dims_(dims), spacing_(spacing), labels_(std::move(labels))
    {
        validate();
    }

    const Index3& dims() const noexcept { return dims_; }
    const Spacing& spacing() const noexcept { return spacing_; }
    std::size_t voxels() const noexcept { return labels_.size(); }
    std::span<const std::uint8_t> labels() const noexcept { return labels_; }
    std::span<std::uint8_t> labels() noexcept { return labels_; }

    std::size_t offset(std::size_t x, std::size_t y, std::size_t z) const noexcept
    {
        return (z * dims_[1] + y) * dims_[0] + x;
    }
    std::uint8_t operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept
    {
        return labels_[offset(x, y, z)];
    }
    std::uint8_t& operator()(std::size_t x, std::size_t y, std::size_t z) noexcept
    {
        return labels_[offset(x, y, z)];
    }

    friend bool operator==(const LabelMask&, const LabelMask&) = default;

private:
    void validate() const
    {
        for (std::size_t d : dims_)
            if (d == 0)
                throw ArgumentError("mask dims must be positive, got " + to_string(dims_));
        if (labels_.size() != voxel_count(dims_))
            throw ArgumentError("mask label count does not match dims " + to_string(dims_));
        check_spacing(spacing_, "mask");
        for (auto l : labels_)
            if (l >= kNumLabels)
                throw ArgumentError("mask label " + std::to_string(l) + " outside {0, 1, 2}");
    }

    Index3 dims_{0, 0, 0};
    Spacing spacing_{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> labels_;
};

} // namespace volseg
