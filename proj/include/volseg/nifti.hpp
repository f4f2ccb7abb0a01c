#pragma once

// NIfTI-1 single-file (.nii / .nii.gz) reader and writer.
//
// Only little-endian files are accepted. Orientation fields (qform/sform) are
// carried through untouched so they can be copied onto derived outputs, but are
// never applied to the voxel grid.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "volseg/error.hpp"
#include "volseg/grid.hpp"

namespace volseg::nifti {

static_assert(std::endian::native == std::endian::little, "NIfTI I/O assumes a little-endian host");

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kVoxOffset = 352;

enum DataType : std::int16_t {
    dt_uint8 = 2,
    dt_int16 = 4,
    dt_int32 = 8,
    dt_float32 = 16,
    dt_float64 = 64,
    dt_int8 = 256,
    dt_uint16 = 512,
    dt_uint32 = 768,
    dt_int64 = 1024,
    dt_uint64 = 1280,
};

inline int bytes_per_voxel(std::int16_t datatype)
{
    switch (datatype) {
    case dt_uint8:
    case dt_int8: return 1;
    case dt_int16:
    case dt_uint16: return 2;
    case dt_int32:
    case dt_uint32:
    case dt_float32: return 4;
    case dt_float64:
    case dt_int64:
    case dt_uint64: return 8;
    default: return 0;
    }
}

inline bool is_integer_type(std::int16_t datatype) { return datatype != dt_float32 && datatype != dt_float64; }

/// qform/sform block, stored verbatim.
struct Orientation {
    std::int16_t qform_code = 0;
    std::int16_t sform_code = 0;
    std::array<float, 6> quatern{}; // b, c, d, qoffset x, y, z
    std::array<float, 12> srow{};   // srow_x, srow_y, srow_z
    float qfac = 1.0f;              // pixdim[0]

    static Orientation scaled_identity(const Spacing& s)
    {
        Orientation o;
        o.sform_code = 1;
        o.srow = {static_cast<float>(s[0]), 0, 0, 0, 0, static_cast<float>(s[1]), 0, 0,
                  0, 0, static_cast<float>(s[2]), 0};
        return o;
    }
};

/// Decoded file: geometry plus voxel values after scl_slope/scl_inter.
struct Image {
    Index3 dims{0, 0, 0};
    std::size_t channels = 1;
    Spacing spacing{1.0, 1.0, 1.0};
    std::int16_t datatype = dt_float32;
    Orientation orientation;
    std::vector<double> values;
};

namespace detail {

template <typename T>
T load(const unsigned char* p)
{
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void store(unsigned char* p, T v)
{
    std::memcpy(p, &v, sizeof(T));
}

inline bool has_suffix(const std::string& s, const std::string& suffix)
{
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

class GzReader {
public:
    explicit GzReader(const std::filesystem::path& path) : file_(gzopen(path.string().c_str(), "rb"))
    {
        if (!file_)
            throw IoError("cannot open '" + path.string() + "' for reading");
    }
    ~GzReader() { gzclose(file_); }
    GzReader(const GzReader&) = delete;
    GzReader& operator=(const GzReader&) = delete;

    std::size_t read(unsigned char* out, std::size_t n)
    {
        std::size_t total = 0;
        while (total < n) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n - total, 1u << 30));
            const int got = gzread(file_, out + total, chunk);
            if (got < 0)
                throw IoError("decompression error");
            if (got == 0)
                break;
            total += static_cast<std::size_t>(got);
        }
        return total;
    }

private:
    gzFile file_;
};

template <typename T>
void decode(const unsigned char* src, std::size_t n, std::vector<double>& out)
{
    for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<double>(load<T>(src + i * sizeof(T)));
}

} // namespace detail

/// Writes `bytes` to `path` via a sibling temporary file and rename, so a
/// failure never leaves a partially written destination.
inline void write_file_atomic(const std::filesystem::path& path, const std::vector<unsigned char>& bytes)
{
    const auto tmp = std::filesystem::path(path.string() + ".partial");
    const bool gz = detail::has_suffix(path.string(), ".gz");
    bool ok = false;
    if (gz) {
        gzFile f = gzopen(tmp.string().c_str(), "wb6");
        if (f) {
            std::size_t done = 0;
            ok = true;
            while (done < bytes.size()) {
                const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
                if (gzwrite(f, bytes.data() + done, chunk) != static_cast<int>(chunk)) {
                    ok = false;
                    break;
                }
                done += chunk;
            }
            ok = (gzclose(f) == Z_OK) && ok;
        }
    } else {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (out) {
            out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
            out.close();
            ok = static_cast<bool>(out);
        }
    }
    if (!ok) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot write '" + path.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move output into place at '" + path.string() + "'");
    }
}

inline Image read(const std::filesystem::path& path)
{
    detail::GzReader in(path);
    std::array<unsigned char, kHeaderSize> hdr{};
    if (in.read(hdr.data(), hdr.size()) != hdr.size())
        throw IoError("'" + path.string() + "': file shorter than a NIfTI-1 header");

    const auto sizeof_hdr = detail::load<std::int32_t>(&hdr[0]);
    if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
        if (sizeof_hdr == 0x5C010000)
            throw UnsupportedError("'" + path.string() + "': big-endian NIfTI files are not supported");
        throw FormatError("'" + path.string() + "': sizeof_hdr is not 348");
    }
    if (std::memcmp(&hdr[344], "n+1\0", 4) != 0)
        throw FormatError("'" + path.string() + "': magic is not single-file NIfTI-1 (n+1)");

    Image img;
    const auto ndim = detail::load<std::int16_t>(&hdr[40]);
    if (ndim < 1 || ndim > 7)
        throw FormatError("'" + path.string() + "': dim[0] out of range");
    std::array<std::int16_t, 8> dim{};
    for (int i = 0; i < 8; ++i)
        dim[i] = detail::load<std::int16_t>(&hdr[40 + 2 * i]);
    for (int i = 1; i <= 3; ++i)
        img.dims[i - 1] = i <= ndim ? static_cast<std::size_t>(std::max<std::int16_t>(dim[i], 1)) : 1;
    for (int i = 1; i <= ndim; ++i)
        if (dim[i] < 1)
            throw FormatError("'" + path.string() + "': non-positive dim[" + std::to_string(i) + "]");
    img.channels = 1;
    for (int i = 4; i <= ndim; ++i)
        img.channels *= static_cast<std::size_t>(dim[i]);

    img.datatype = detail::load<std::int16_t>(&hdr[70]);
    const int bpv = bytes_per_voxel(img.datatype);
    if (bpv == 0)
        throw UnsupportedError("'" + path.string() + "': unsupported datatype code " + std::to_string(img.datatype));

    img.orientation.qfac = detail::load<float>(&hdr[76]);
    for (int i = 1; i <= 3; ++i) {
        const double p = detail::load<float>(&hdr[76 + 4 * i]);
        img.spacing[i - 1] = (p > 0.0 && std::isfinite(p)) ? p : 1.0;
    }
    const auto vox_offset = static_cast<std::size_t>(detail::load<float>(&hdr[108]));
    const float slope = detail::load<float>(&hdr[112]);
    const float inter = detail::load<float>(&hdr[116]);
    img.orientation.qform_code = detail::load<std::int16_t>(&hdr[252]);
    img.orientation.sform_code = detail::load<std::int16_t>(&hdr[254]);
    for (int i = 0; i < 6; ++i)
        img.orientation.quatern[i] = detail::load<float>(&hdr[256 + 4 * i]);
    for (int i = 0; i < 12; ++i)
        img.orientation.srow[i] = detail::load<float>(&hdr[280 + 4 * i]);

    if (vox_offset < kHeaderSize)
        throw FormatError("'" + path.string() + "': vox_offset inside the header");
    std::vector<unsigned char> skip(vox_offset - kHeaderSize);
    if (in.read(skip.data(), skip.size()) != skip.size())
        throw IoError("'" + path.string() + "': truncated before voxel data");

    const std::size_t n = voxel_count(img.dims) * img.channels;
    std::vector<unsigned char> raw(n * static_cast<std::size_t>(bpv));
    const std::size_t got = in.read(raw.data(), raw.size());
    if (got != raw.size())
        throw IoError("'" + path.string() + "': truncated voxel data (" + std::to_string(got) + " of " +
                      std::to_string(raw.size()) + " bytes)");

    img.values.resize(n);
    switch (img.datatype) {
    case dt_uint8: detail::decode<std::uint8_t>(raw.data(), n, img.values); break;
    case dt_int8: detail::decode<std::int8_t>(raw.data(), n, img.values); break;
    case dt_int16: detail::decode<std::int16_t>(raw.data(), n, img.values); break;
    case dt_uint16: detail::decode<std::uint16_t>(raw.data(), n, img.values); break;
    case dt_int32: detail::decode<std::int32_t>(raw.data(), n, img.values); break;
    case dt_uint32: detail::decode<std::uint32_t>(raw.data(), n, img.values); break;
    case dt_int64: detail::decode<std::int64_t>(raw.data(), n, img.values); break;
    case dt_uint64: detail::decode<std::uint64_t>(raw.data(), n, img.values); break;
    case dt_float32: detail::decode<float>(raw.data(), n, img.values); break;
    case dt_float64: detail::decode<double>(raw.data(), n, img.values); break;
    }
    if (slope != 0.0f && std::isfinite(slope) && (slope != 1.0f || inter != 0.0f))
        for (double& v : img.values)
            v = v * slope + inter;
    return img;
}

/// Serializes an image. `values` are cast to `datatype`; only uint8 and float32 are produced.
inline void write(const Image& img, const std::filesystem::path& path)
{
    if (img.datatype != dt_uint8 && img.datatype != dt_float32)
        throw UnsupportedError("writer only produces uint8 or float32 files");
    const std::size_t n = voxel_count(img.dims) * img.channels;
    if (img.values.size() != n)
        throw ArgumentError("image value count does not match its dims");
    for (std::size_t d : img.dims)
        if (d == 0 || d > 32767)
            throw ArgumentError("NIfTI-1 dims must be in [1, 32767]");
    if (img.channels > 32767)
        throw ArgumentError("NIfTI-1 supports at most 32767 channels");

    const int bpv = bytes_per_voxel(img.datatype);
    std::vector<unsigned char> bytes(kVoxOffset + n * static_cast<std::size_t>(bpv), 0);
    unsigned char* h = bytes.data();
    detail::store<std::int32_t>(h + 0, static_cast<std::int32_t>(kHeaderSize));
    h[38] = 'r';
    const std::int16_t ndim = img.channels > 1 ? 4 : 3;
    detail::store<std::int16_t>(h + 40, ndim);
    for (int i = 0; i < 3; ++i)
        detail::store<std::int16_t>(h + 42 + 2 * i, static_cast<std::int16_t>(img.dims[i]));
    for (int i = 4; i < 8; ++i)
        detail::store<std::int16_t>(h + 40 + 2 * i, 1);
    detail::store<std::int16_t>(h + 48, static_cast<std::int16_t>(img.channels));
    detail::store<std::int16_t>(h + 70, img.datatype);
    detail::store<std::int16_t>(h + 72, static_cast<std::int16_t>(8 * bpv));
    detail::store<float>(h + 76, img.orientation.qfac == 0.0f ? 1.0f : img.orientation.qfac);
    for (int i = 0; i < 3; ++i)
        detail::store<float>(h + 80 + 4 * i, static_cast<float>(img.spacing[i]));
    for (int i = 3; i < 7; ++i)
        detail::store<float>(h + 80 + 4 * i, 1.0f);
    detail::store<float>(h + 108, static_cast<float>(kVoxOffset));
    detail::store<float>(h + 112, 1.0f);
    detail::store<float>(h + 116, 0.0f);
    h[123] = 2; // xyzt_units: mm
    std::memcpy(h + 148, "volseg", 6);
    detail::store<std::int16_t>(h + 252, img.orientation.qform_code);
    detail::store<std::int16_t>(h + 254, img.orientation.sform_code);
    for (int i = 0; i < 6; ++i)
        detail::store<float>(h + 256 + 4 * i, img.orientation.quatern[i]);
    for (int i = 0; i < 12; ++i)
        detail::store<float>(h + 280 + 4 * i, img.orientation.srow[i]);
    std::memcpy(h + 344, "n+1\0", 4);

    unsigned char* payload = h + kVoxOffset;
    if (img.datatype == dt_uint8) {
        for (std::size_t i = 0; i < n; ++i)
            payload[i] = static_cast<std::uint8_t>(img.values[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i)
            detail::store<float>(payload + 4 * i, static_cast<float>(img.values[i]));
    }
    write_file_atomic(path, bytes);
}

inline Volume3D to_volume(const Image& img, IntensityKind kind = IntensityKind::continuous)
{
    std::vector<float> data(img.values.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<float>(img.values[i]);
    return Volume3D(Tensor4D(img.channels, img.dims, std::move(data)), img.spacing, kind);
}

inline LabelMask to_mask(const Image& img, const std::string& what = "image")
{
    if (img.channels != 1)
        throw FormatError(what + ": label mask must have a single channel");
    std::vector<std::uint8_t> labels(img.values.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double v = img.values[i];
        if (v != 0.0 && v != 1.0 && v != 2.0)
            throw FormatError(what + ": value " + std::to_string(v) + " is not a label in {0, 1, 2}");
        labels[i] = static_cast<std::uint8_t>(v);
    }
    return LabelMask(img.dims, img.spacing, std::move(labels));
}

} // namespace volseg::nifti

namespace volseg {

inline Volume3D read_volume(const std::filesystem::path& path, nifti::Orientation* orientation = nullptr)
{
    auto img = nifti::read(path);
    if (orientation)
        *orientation = img.orientation;
    return nifti::to_volume(img);
}

/// Loads a label mask; every voxel value must be exactly 0, 1 or 2.
inline LabelMask read_mask(const std::filesystem::path& path, nifti::Orientation* orientation = nullptr)
{
    auto img = nifti::read(path);
    if (orientation)
        *orientation = img.orientation;
    return nifti::to_mask(img, "'" + path.string() + "'");
}

/// Volumes are written as float32.
inline void write_volume(const Volume3D& vol, const std::filesystem::path& path,
                         const nifti::Orientation* orientation = nullptr)
{
    nifti::Image img;
    img.dims = vol.dims();
    img.channels = vol.channels();
    img.spacing = vol.spacing();
    img.datatype = nifti::dt_float32;
    img.orientation = orientation ? *orientation : nifti::Orientation::scaled_identity(vol.spacing());
    img.values.assign(vol.data().begin(), vol.data().end());
    nifti::write(img, path);
}

/// Masks are written as uint8.
inline void write_mask(const LabelMask& mask, const std::filesystem::path& path,
                       const nifti::Orientation* orientation = nullptr)
{
    nifti::Image img;
    img.dims = mask.dims();
    img.spacing = mask.spacing();
    img.datatype = nifti::dt_uint8;
    img.orientation = orientation ? *orientation : nifti::Orientation::scaled_identity(mask.spacing());
    img.values.assign(mask.labels().begin(), mask.labels().end());
    nifti::write(img, path);
}

} // namespace volseg
