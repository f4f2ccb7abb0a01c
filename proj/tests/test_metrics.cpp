#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "volseg/metrics.hpp"

using namespace volseg;

namespace {

using Bytes = std::vector<std::uint8_t>;

double oracle_dice(const Bytes& y, const Bytes& p)
{
    const auto c = oracle::count(y, p);
    return c.truth + c.pred == 0 ? 1.0 : 2.0 * c.inter / (c.truth + c.pred);
}

using DTensor = BasicTensor4D<double>;

DTensor one_hot(const std::vector<int>& labels, std::size_t C, const Index3& d)
{
    DTensor t(C, d);
    for (std::size_t i = 0; i < labels.size(); ++i)
        t.channel(static_cast<std::size_t>(labels[i]))[i] = 1.0;
    return t;
}

DTensor random_probs(std::size_t C, const Index3& d, std::mt19937_64& rng)
{
    DTensor t(C, d);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (std::size_t i = 0; i < t.voxels(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c)
            s += (t.channel(c)[i] = u(rng));
        for (std::size_t c = 0; c < C; ++c)
            t.channel(c)[i] /= s;
    }
    return t;
}

} // namespace

TEST(Dice, HandCases)
{
    const Bytes y{1, 1, 0, 0}, p{1, 0, 1, 0};
    EXPECT_DOUBLE_EQ(dsc({y, p}), 0.5);
    const Bytes z(4, 0);
    EXPECT_EQ(dsc({z, z}), 1.0);
    EXPECT_EQ(dsc({y, z}), 0.0);
    EXPECT_EQ(dsc({z, y}), 0.0);
    EXPECT_EQ(dsc({y, y}), 1.0);
    EXPECT_EQ(*precision({y, p}), 0.5);
    EXPECT_EQ(*recall({y, p}), 0.5);
    EXPECT_FALSE(precision({y, z}).has_value());
    EXPECT_FALSE(recall({z, y}).has_value());
}

TEST(Dice, AggregatePoolsCounts)
{
    const Bytes y1{1, 1, 1, 1}, p1{1, 1, 0, 0};
    const Bytes y2{0, 0, 0, 0}, p2{0, 0, 1, 1};
    const std::vector<MaskPair> pairs{{y1, p1}, {y2, p2}};
    EXPECT_DOUBLE_EQ(dsc_agg(pairs), 0.5);
    const double per_case_mean = (dsc(pairs[0]) + dsc(pairs[1])) / 2.0;
    EXPECT_NEAR(per_case_mean, 1.0 / 3.0, 1e-12);

    const Bytes z(4, 0);
    const std::vector<MaskPair> empty{{z, z}, {z, z}};
    const auto d = dsc_agg_detail(empty);
    EXPECT_EQ(d.value, 1.0);
    EXPECT_TRUE(d.all_empty);
    EXPECT_THROW(dsc_agg(std::span<const MaskPair>{}), ArgumentError);
}

TEST(Dice, MatchesBruteForceAndConcatenation)
{
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Bytes> ys, ps;
        Bytes ycat, pcat;
        std::vector<MaskPair> pairs;
        const int cases = 1 + trial % 5;
        for (int k = 0; k < cases; ++k) {
            const std::size_t n = 1 + rng() % 300;
            ys.push_back(oracle::random_labels(n, rng, 1));
            ps.push_back(oracle::random_labels(n, rng, 1));
            if (trial % 7 == 0)
                std::fill(ps.back().begin(), ps.back().end(), 0);
            ycat.insert(ycat.end(), ys.back().begin(), ys.back().end());
            pcat.insert(pcat.end(), ps.back().begin(), ps.back().end());
        }
        for (int k = 0; k < cases; ++k) {
            pairs.push_back({ys[k], ps[k]});
            const double v = dsc(pairs.back());
            EXPECT_NEAR(v, oracle_dice(ys[k], ps[k]), 1e-12);
            EXPECT_EQ(v, dsc({ps[k], ys[k]}));
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_NEAR(dsc_agg(pairs), oracle_dice(ycat, pcat), 1e-12);
        EXPECT_NEAR(dsc_agg(pairs), dsc({ycat, pcat}), 1e-15);
    }
}

TEST(Dice, RejectsMismatchedOrNonBinary)
{
    const Bytes a{1, 0}, b{1, 0, 1}, c{2, 0};
    EXPECT_THROW(dsc({a, b}), ArgumentError);
    EXPECT_THROW(dsc({c, a}), ArgumentError);
}

TEST(DiceLoss, TinyHandCase)
{
    // C=3, two voxels along X; class 2 absent from the truth.
    const Index3 d{2, 1, 1};
    const std::vector<DTensor> y{one_hot({0, 1}, 3, d)};
    DTensor p(3, d);
    p(0, 0, 0, 0) = 0.7, p(1, 0, 0, 0) = 0.2, p(2, 0, 0, 0) = 0.1;
    p(0, 1, 0, 0) = 0.4, p(1, 1, 0, 0) = 0.5, p(2, 1, 0, 0) = 0.1;
    const std::vector<DTensor> ps{p};
    const double expected = ((1.0 - 1.4 / 2.1) + (1.0 - 1.0 / 1.7)) / 2.0;
    EXPECT_NEAR(dice_loss<double>(y, ps), expected, 1e-12);

    const auto g = dice_loss_grad<double>(y, ps);
    for (std::size_t x = 0; x < 2; ++x)
        EXPECT_EQ(g[0](2, x, 0, 0), 0.0);
    // class 0: D = 2.1, I = 0.7
    EXPECT_NEAR(g[0](0, 0, 0, 0), -2.0 * (2.1 - 0.7) / (2.1 * 2.1) / 2.0, 1e-12);
    EXPECT_NEAR(g[0](0, 1, 0, 0), -2.0 * (0.0 - 0.7) / (2.1 * 2.1) / 2.0, 1e-12);
}

TEST(DiceLoss, PerfectPredictionIsZeroAndAbsentTruthRejected)
{
    const Index3 d{3, 2, 1};
    std::vector<DTensor> y{one_hot({0, 1, 2, 2, 1, 0}, 3, d)};
    EXPECT_NEAR(dice_loss<double>(y, y), 0.0, 1e-15);
    std::vector<DTensor> none{DTensor(3, d)};
    EXPECT_THROW(dice_loss<double>(none, y), ArgumentError);
    std::vector<DTensor> wrong{DTensor(2, d)};
    EXPECT_THROW(dice_loss<double>(y, wrong), ArgumentError);
}

TEST(DiceLoss, BatchSumsAreGlobal)
{
    std::mt19937_64 rng(2);
    const Index3 d{3, 2, 2};
    std::vector<DTensor> y{one_hot({0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0}, 3, d),
                           one_hot({2, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 3, d)};
    std::vector<DTensor> p{random_probs(3, d, rng), random_probs(3, d, rng)};
    double expected = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        double sy = 0, sp = 0, si = 0;
        for (const std::size_t n : {0u, 1u})
            for (std::size_t i = 0; i < 12; ++i) {
                sy += y[n].channel(c)[i];
                sp += p[n].channel(c)[i];
                si += y[n].channel(c)[i] * p[n].channel(c)[i];
            }
        expected += 1.0 - 2.0 * si / (sy + sp);
    }
    EXPECT_NEAR(dice_loss<double>(y, p), expected / 3.0, 1e-12);
}

TEST(DiceLoss, GradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(3);
    const Index3 d{3, 3, 2};
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<int> lab(18);
        for (auto& l : lab)
            l = static_cast<int>(rng() % 2); // class 2 absent
        lab[0] = 0, lab[1] = 1;
        std::vector<DTensor> y{one_hot(lab, 3, d)};
        std::vector<DTensor> p{random_probs(3, d, rng)};
        const auto g = dice_loss_grad<double>(y, p);
        const double h = 1e-4;
        for (std::size_t k = 0; k < p[0].size(); ++k) {
            auto up = p, dn = p;
            up[0].storage()[k] += h;
            dn[0].storage()[k] -= h;
            const double fd = (dice_loss<double>(y, up) - dice_loss<double>(y, dn)) / (2 * h);
            EXPECT_NEAR(g[0].storage()[k], fd, 1e-7);
        }
    }
}

TEST(EvaluateSet, MatchesPerClassOracle)
{
    std::mt19937_64 rng(4);
    const Index3 d{5, 4, 3};
    std::vector<LabelMask> truths, preds;
    std::vector<std::string> ids;
    for (int n = 0; n < 4; ++n) {
        truths.emplace_back(d, Spacing{1, 1, 1}, oracle::random_labels(60, rng));
        preds.emplace_back(d, Spacing{1, 1, 1}, oracle::random_labels(60, rng));
        ids.push_back("P" + std::to_string(n));
    }
    const auto report = evaluate_set(truths, preds, ids);
    ASSERT_EQ(report.records.size(), 4u);
    for (std::size_t k = 0; k < 2; ++k) {
        Bytes ycat, pcat;
        for (int n = 0; n < 4; ++n) {
            const auto y = binarize(truths[n], static_cast<std::uint8_t>(k + 1));
            const auto p = binarize(preds[n], static_cast<std::uint8_t>(k + 1));
            EXPECT_NEAR(report.records[n].classes[k].dsc, oracle_dice(y, p), 1e-12);
            ycat.insert(ycat.end(), y.begin(), y.end());
            pcat.insert(pcat.end(), p.begin(), p.end());
        }
        EXPECT_NEAR(report.aggregate[k].value, oracle_dice(ycat, pcat), 1e-12);
    }
    EXPECT_DOUBLE_EQ(report.mean, 0.5 * (report.aggregate[0].value + report.aggregate[1].value));
    EXPECT_EQ(report.records[2].patient_id, "P2");
}

TEST(EvaluateSet, CsvLayout)
{
    const Index3 d{2, 2, 1};
    std::vector<LabelMask> truths{LabelMask(d, {1, 1, 1}, Bytes{1, 1, 0, 0}), LabelMask(d, {1, 1, 1}, Bytes{0, 0, 0, 0})};
    std::vector<LabelMask> preds{LabelMask(d, {1, 1, 1}, Bytes{1, 0, 0, 0}), LabelMask(d, {1, 1, 1}, Bytes{0, 0, 0, 0})};
    const std::vector<std::string> ids{"A", "B"};
    const auto report = evaluate_set(truths, preds, ids);
    std::ostringstream os;
    write_evaluation_csv(report, os);
    std::vector<std::string> lines;
    std::istringstream is(os.str());
    for (std::string l; std::getline(is, l);)
        lines.push_back(l);
    ASSERT_EQ(lines.size(), 8u);
    EXPECT_EQ(lines[0], "patient_id,class,dsc,precision,recall");
    EXPECT_EQ(lines[1].rfind("A,GTVp,0.666666666667,1,0.5", 0), 0u) << lines[1];
    EXPECT_EQ(lines[2], "A,GTVn,1,NA,NA");
    EXPECT_EQ(lines[3], "B,GTVp,1,NA,NA");
    EXPECT_EQ(lines[5].rfind("AGG_GTVp,GTVp,0.666666666667,1,0.5", 0), 0u) << lines[5];
    EXPECT_EQ(lines[6], "AGG_GTVn,GTVn,1,NA,NA");
    EXPECT_EQ(lines[7].rfind("AGG_MEAN,mean,0.833333333333,NA,NA", 0), 0u) << lines[7];
    EXPECT_TRUE(report.aggregate[1].all_empty);

    std::ostringstream table;
    write_evaluation_table(report, table);
    EXPECT_NE(table.str().find("GTVp"), std::string::npos);
    EXPECT_NE(table.str().find("Average"), std::string::npos);
}

TEST(EvaluateSet, Errors)
{
    const LabelMask a({2, 2, 1}, {1, 1, 1}), b({2, 1, 1}, {1, 1, 1});
    EXPECT_THROW(evaluate_set(std::vector<LabelMask>{a}, std::vector<LabelMask>{b}), ArgumentError);
    EXPECT_THROW(evaluate_set(std::vector<LabelMask>{a}, std::vector<LabelMask>{}), ArgumentError);
    EXPECT_THROW(evaluate_set(std::vector<LabelMask>{}, std::vector<LabelMask>{}), ArgumentError);
}
