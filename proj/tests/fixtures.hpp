#pragma once

// Small on-disk fixtures shared by the CLI tests and the acceptance runner.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "volseg/volseg.hpp"

namespace fixture {

namespace fs = std::filesystem;

/// Two-stage, base-width-2 network with a 16^3 window.
inline const char* kToyConfig = R"(# toy network for fast end-to-end runs
network.base_width = 2
network.num_stages = 2
network.kernel_plan = 3,3
inference.patch_size = 16,16,16
inference.stride = 8,8,8
preprocess.working_spacing = 1,1,1
)";

inline fs::path write_text(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
    return p;
}

/// Bright ellipsoid on a noisy background, with a matching label mask.
inline std::pair<volseg::Volume3D, volseg::LabelMask> phantom(const volseg::Index3& d, const volseg::Spacing& s,
                                                              std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 5.0);
    volseg::Tensor4D t(1, d);
    volseg::LabelMask m(d, s);
    for (std::size_t z = 0; z < d[2]; ++z)
        for (std::size_t y = 0; y < d[1]; ++y)
            for (std::size_t x = 0; x < d[0]; ++x) {
                const double u = (x + 0.5) / d[0] - 0.45, v = (y + 0.5) / d[1] - 0.5, w = (z + 0.5) / d[2] - 0.55;
                const double r = std::sqrt(u * u + v * v + w * w);
                const bool tumour = r < 0.2;
                const bool node = std::abs(u - 0.3) < 0.08 && std::abs(v + 0.25) < 0.08 && std::abs(w) < 0.1;
                t(0, x, y, z) = static_cast<float>(100.0 + (tumour ? 150.0 : 0.0) + (node ? 80.0 : 0.0) + noise(rng));
                m(x, y, z) = tumour ? 1 : node ? 2 : 0;
            }
    return {volseg::Volume3D(t, s), m};
}

} // namespace fixture
