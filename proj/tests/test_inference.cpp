#include <gtest/gtest.h>

#include <algorithm>

#include "oracles.hpp"
#include "volseg/inference.hpp"

using namespace volseg;

namespace {

SlidingWindowConfig window(const Index3& patch, const Index3& stride, Weighting w = Weighting::gaussian)
{
    SlidingWindowConfig c;
    c.patch_size = patch;
    c.stride = stride;
    c.weighting = w;
    return c;
}

Predictor constant_predictor(float a, float b, float c)
{
    return [=](const Tensor4D& in) {
        Tensor4D out(3, in.dims());
        std::fill(out.channel(0).begin(), out.channel(0).end(), a);
        std::fill(out.channel(1).begin(), out.channel(1).end(), b);
        std::fill(out.channel(2).begin(), out.channel(2).end(), c);
        return out;
    };
}

NetworkConfig toy_net()
{
    NetworkConfig n;
    n.base_width = 2;
    n.num_stages = 2;
    n.kernel_plan = {3, 3};
    return n;
}

Tensor4D zscore_oracle(const Tensor4D& t)
{
    Tensor4D out(t.channels(), t.dims());
    for (std::size_t c = 0; c < t.channels(); ++c) {
        double m = 0, v = 0;
        for (float e : t.channel(c))
            m += e;
        m /= t.voxels();
        for (float e : t.channel(c))
            v += (e - m) * (e - m);
        const double sd = std::max(std::sqrt(v / t.voxels()), 1e-8);
        for (std::size_t i = 0; i < t.voxels(); ++i)
            out.channel(c)[i] = static_cast<float>((t.channel(c)[i] - m) / sd);
    }
    return out;
}

} // namespace

TEST(GaussianKernel, ProfileShape)
{
    for (std::size_t n : {4u, 5u, 64u, 320u}) {
        const auto g = gaussian_profile(n, 0.1);
        EXPECT_EQ(g.front(), 0.1);
        EXPECT_EQ(g.back(), 0.1);
        for (std::size_t t = 0; t < n; ++t)
            EXPECT_NEAR(g[t], g[n - 1 - t], 1e-15);
        for (std::size_t t = 1; t <= (n - 1) / 2; ++t)
            EXPECT_GT(g[t], g[t - 1]);
        const double peak = *std::max_element(g.begin(), g.end());
        EXPECT_LE(peak, 1.0);
        if (n % 2 == 1) {
            EXPECT_EQ(g[n / 2], 1.0);
        }
    }
}

TEST(GaussianKernel, FaceAndCornerValues)
{
    const auto k = gaussian_weight_kernel({5, 7, 9}, 0.1);
    EXPECT_DOUBLE_EQ(k(2, 3, 4), 1.0);
    EXPECT_DOUBLE_EQ(k(0, 3, 4), 0.1);
    EXPECT_DOUBLE_EQ(k(2, 6, 4), 0.1);
    EXPECT_DOUBLE_EQ(k(2, 3, 0), 0.1);
    EXPECT_NEAR(k(0, 0, 0), 1e-3, 1e-15);
    EXPECT_NEAR(k(4, 6, 8), 1e-3, 1e-15);
    for (double w : k.weights)
        EXPECT_GT(w, 0.0);
    EXPECT_THROW(gaussian_weight_kernel({5, 5, 5}, 1.0), ArgumentError);
}

TEST(Tiling, AxisOffsets)
{
    EXPECT_EQ(axis_offsets(9, 3, 3), (std::vector<std::size_t>{0, 3, 6}));
    EXPECT_EQ(axis_offsets(10, 3, 3), (std::vector<std::size_t>{0, 3, 6, 7}));
    EXPECT_EQ(axis_offsets(3, 3, 1), (std::vector<std::size_t>{0}));
    EXPECT_EQ(axis_offsets(2, 3, 1), (std::vector<std::size_t>{0}));
    EXPECT_EQ(axis_offsets(400, 320, 80), (std::vector<std::size_t>{0, 80}));
    EXPECT_EQ(axis_offsets(401, 320, 80), (std::vector<std::size_t>{0, 80, 81}));
}

TEST(Tiling, OrderAndFullCoverage)
{
    const auto cfg = window({4, 3, 5}, {2, 2, 3});
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Index3 d{4 + rng() % 9, 3 + rng() % 9, 5 + rng() % 9};
        const auto tiles = tile_offsets(d, cfg);
        std::vector<int> cover(voxel_count(d), 0);
        for (std::size_t i = 0; i < tiles.size(); ++i) {
            const auto& t = tiles[i];
            for (int a = 0; a < 3; ++a)
                ASSERT_LE(t[a] + cfg.patch_size[a], d[a]);
            if (i > 0) {
                const auto& p = tiles[i - 1];
                EXPECT_TRUE(std::tie(p[2], p[1], p[0]) < std::tie(t[2], t[1], t[0]));
            }
            for (std::size_t z = 0; z < cfg.patch_size[2]; ++z)
                for (std::size_t y = 0; y < cfg.patch_size[1]; ++y)
                    for (std::size_t x = 0; x < cfg.patch_size[0]; ++x)
                        ++cover[((t[2] + z) * d[1] + t[1] + y) * d[0] + t[0] + x];
        }
        EXPECT_EQ(std::count(cover.begin(), cover.end(), 0), 0);
    }
    EXPECT_THROW(tile_offsets({8, 8, 8}, window({4, 4, 4}, {5, 4, 4})), ArgumentError);
}

TEST(SlidingWindow, SingleTileEqualsDirectPrediction)
{
    std::mt19937_64 rng(2);
    const auto model = build_unet(toy_net(), 3);
    const Volume3D vol(oracle::random_tensor(1, {8, 8, 8}, rng, 0, 100), {1, 1, 1});
    const auto out = sliding_window_predict(vol, model_predictor(model), window({8, 8, 8}, {4, 4, 4}));
    const auto direct = forward(model, normalize_patchwise(vol.tensor(), {}));
    EXPECT_LT(oracle::max_abs_diff(out.tensor(), direct), 1e-6);
}

TEST(SlidingWindow, ConstantPredictorIsReproduced)
{
    std::mt19937_64 rng(3);
    const Volume3D vol(oracle::random_tensor(2, {11, 6, 7}, rng), {0.5, 0.5, 2});
    for (auto w : {Weighting::equal, Weighting::gaussian}) {
        const auto out = sliding_window_predict(vol, constant_predictor(0.2f, 0.3f, 0.5f), window({4, 4, 4}, {3, 2, 2}, w));
        EXPECT_EQ(out.dims(), vol.dims());
        EXPECT_EQ(out.spacing(), vol.spacing());
        for (std::size_t i = 0; i < out.tensor().voxels(); ++i) {
            EXPECT_NEAR(out.tensor().channel(0)[i], 0.2f, 1e-6);
            EXPECT_NEAR(out.tensor().channel(2)[i], 0.5f, 1e-6);
        }
    }
}

TEST(SlidingWindow, TwoPatchHandComputation)
{
    // X = 6, patch 4, stride 2: windows at 0 and 2. The first window votes
    // class 0, the second class 1.
    const Volume3D vol(Tensor4D(1, {6, 1, 1}, 1.0f), {1, 1, 1});
    for (auto w : {Weighting::equal, Weighting::gaussian}) {
        int call = 0;
        Predictor pred = [&call](const Tensor4D& in) {
            Tensor4D out(3, in.dims());
            std::fill(out.channel(call == 0 ? 0 : 1).begin(), out.channel(call == 0 ? 0 : 1).end(), 1.0f);
            ++call;
            return out;
        };
        const auto out = sliding_window_predict(vol, pred, window({4, 1, 1}, {2, 1, 1}, w));
        EXPECT_EQ(call, 2);
        const auto g = w == Weighting::equal ? std::vector<double>(4, 1.0) : gaussian_profile(4, 0.1);
        const double expected_class0[6] = {1, 1, g[2] / (g[2] + g[0]), g[3] / (g[3] + g[1]), 0, 0};
        for (std::size_t x = 0; x < 6; ++x) {
            EXPECT_NEAR(out.tensor()(0, x, 0, 0), expected_class0[x], 1e-6) << x;
            EXPECT_NEAR(out.tensor()(1, x, 0, 0), 1.0 - expected_class0[x], 1e-6) << x;
            EXPECT_EQ(out.tensor()(2, x, 0, 0), 0.0f);
        }
    }
}

TEST(SlidingWindow, ToyNetworkMatchesBruteForceBlend)
{
    std::mt19937_64 rng(4);
    const auto model = build_unet(toy_net(), 5);
    const Index3 d{12, 10, 8};
    const Volume3D vol(oracle::random_tensor(1, d, rng, -50, 200), {1, 1, 1});
    const auto cfg = window({8, 8, 8}, {4, 4, 4});
    const auto out = sliding_window_predict(vol, model_predictor(model), cfg);

    const auto g = gaussian_profile(8, 0.1);
    std::vector<double> num(3 * voxel_count(d), 0.0), den(voxel_count(d), 0.0);
    for (std::size_t oz : {0u})
        for (std::size_t oy : {0u, 2u})
            for (std::size_t ox : {0u, 4u}) {
                Tensor4D win(1, {8, 8, 8});
                for (std::size_t z = 0; z < 8; ++z)
                    for (std::size_t y = 0; y < 8; ++y)
                        for (std::size_t x = 0; x < 8; ++x)
                            win(0, x, y, z) = vol.tensor()(0, ox + x, oy + y, oz + z);
                const auto p = forward(model, zscore_oracle(win));
                for (std::size_t z = 0; z < 8; ++z)
                    for (std::size_t y = 0; y < 8; ++y)
                        for (std::size_t x = 0; x < 8; ++x) {
                            const std::size_t i = ((oz + z) * d[1] + oy + y) * d[0] + ox + x;
                            const double w = g[x] * g[y] * g[z];
                            den[i] += w;
                            for (std::size_t c = 0; c < 3; ++c)
                                num[c * voxel_count(d) + i] += w * p(c, x, y, z);
                        }
            }
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < voxel_count(d); ++i)
            ASSERT_NEAR(out.tensor().channel(c)[i], num[c * voxel_count(d) + i] / den[i], 1e-5);
}

TEST(SlidingWindow, VisitOrderDoesNotMatter)
{
    std::mt19937_64 rng(6);
    const auto model = build_unet(toy_net(), 7);
    const Volume3D vol(oracle::random_tensor(1, {10, 9, 6}, rng), {1, 1, 1});
    const auto cfg = window({4, 4, 4}, {2, 3, 2});
    auto offsets = tile_offsets(vol.dims(), cfg);
    const auto ref = sliding_window_predict(vol, model_predictor(model), cfg, offsets);
    for (int i = 0; i < 3; ++i) {
        std::shuffle(offsets.begin(), offsets.end(), rng);
        EXPECT_LT(oracle::max_abs_diff(sliding_window_predict(vol, model_predictor(model), cfg, offsets).tensor(),
                                       ref.tensor()),
                  1e-6);
    }
}

TEST(SlidingWindow, SmallVolumeIsPaddedThenCropped)
{
    std::mt19937_64 rng(8);
    const auto model = build_unet(toy_net(), 9);
    const Volume3D vol(oracle::random_tensor(1, {3, 5, 2}, rng), {1, 1, 1});
    const auto out = sliding_window_predict(vol, model_predictor(model), window({4, 4, 4}, {2, 2, 2}));
    EXPECT_EQ(out.dims(), vol.dims());
    for (std::size_t i = 0; i < out.tensor().voxels(); ++i) {
        double s = 0;
        for (std::size_t c = 0; c < 3; ++c)
            s += out.tensor().channel(c)[i];
        EXPECT_NEAR(s, 1.0, 1e-5);
    }
}

TEST(SlidingWindow, PredictorShapeContract)
{
    const Volume3D vol(Tensor4D(1, {4, 4, 4}, 1.0f), {1, 1, 1});
    Predictor bad = [](const Tensor4D& in) { return Tensor4D(2, in.dims()); };
    EXPECT_THROW(sliding_window_predict(vol, bad, window({4, 4, 4}, {4, 4, 4})), ContractError);
    WindowAccumulator acc(3, {4, 4, 4});
    EXPECT_THROW(acc.result(), ContractError);
}

TEST(Ensemble, MeanAndSingleModel)
{
    std::mt19937_64 rng(10);
    const Volume3D a(oracle::random_tensor(3, {3, 3, 2}, rng, 0, 1), {1, 1, 1});
    const Volume3D b(oracle::random_tensor(3, {3, 3, 2}, rng, 0, 1), {1, 1, 1});
    const auto one = ensemble_predict(std::vector<Volume3D>{a});
    EXPECT_EQ(one.tensor(), a.tensor());
    const auto two = ensemble_predict(std::vector<Volume3D>{a, b});
    for (std::size_t i = 0; i < a.data().size(); ++i)
        EXPECT_NEAR(two.data()[i], 0.5 * (a.data()[i] + b.data()[i]), 1e-7);
    EXPECT_THROW(ensemble_predict(std::vector<Volume3D>{}), ArgumentError);
    EXPECT_THROW(ensemble_predict(std::vector<Volume3D>{a, Volume3D(Tensor4D(3, {3, 3, 3}), {1, 1, 1})}),
                 ArgumentError);
}

TEST(Argmax, PicksLargestWithLowTies)
{
    Tensor4D p(3, {4, 1, 1});
    const float v[4][3] = {{0.2f, 0.5f, 0.3f}, {0.4f, 0.4f, 0.2f}, {0.1f, 0.45f, 0.45f}, {1.0f / 3, 1.0f / 3, 1.0f / 3}};
    for (std::size_t x = 0; x < 4; ++x)
        for (std::size_t c = 0; c < 3; ++c)
            p(c, x, 0, 0) = v[x][c];
    const auto m = argmax_labels(Volume3D(p, {1, 2, 3}));
    EXPECT_EQ(m(0, 0, 0), 1);
    EXPECT_EQ(m(1, 0, 0), 0);
    EXPECT_EQ(m(2, 0, 0), 1);
    EXPECT_EQ(m(3, 0, 0), 0);
    EXPECT_EQ(m.spacing(), (Spacing{1, 2, 3}));
    EXPECT_EQ(parse_weighting("equal"), Weighting::equal);
    EXPECT_THROW(parse_weighting("median"), ArgumentError);
}
