#pragma once

// Overlap metrics, the aggregated Dice used for evaluation, and the
// batch Dice loss averaged over classes present in the batch truth.

#include <array>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "volseg/error.hpp"
#include "volseg/grid.hpp"

namespace volseg {

/// Two binary voxel arrays of equal length; values must be 0 or 1.
struct MaskPair {
    std::span<const std::uint8_t> truth;
    std::span<const std::uint8_t> pred;
};

struct OverlapCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t truth_sum() const { return tp + fn; }
    std::uint64_t pred_sum() const { return tp + fp; }

    OverlapCounts& operator+=(const OverlapCounts& o)
    {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
};

inline OverlapCounts count_overlap(const MaskPair& pair)
{
    if (pair.truth.size() != pair.pred.size())
        throw ArgumentError("mask pair dims differ (" + std::to_string(pair.truth.size()) + " vs " +
                            std::to_string(pair.pred.size()) + " voxels)");
    OverlapCounts c;
    for (std::size_t i = 0; i < pair.truth.size(); ++i) {
        const std::uint8_t y = pair.truth[i], p = pair.pred[i];
        if (y > 1 || p > 1)
            throw ArgumentError("mask pair values must be binary");
        c.tp += y & p;
        c.fp += p & (y ^ 1u);
        c.fn += y & (p ^ 1u);
    }
    return c;
}

/// 2 TP / (|truth| + |pred|); 1 when both are empty.
inline double dice_from_counts(const OverlapCounts& c)
{
    const std::uint64_t denom = c.truth_sum() + c.pred_sum();
    if (denom == 0)
        return 1.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double dsc(const MaskPair& pair) { return dice_from_counts(count_overlap(pair)); }

struct AggregateDice {
    double value = 1.0;
    bool all_empty = false; // global denominator was 0
};

/// One global ratio over counts pooled across all pairs.
inline AggregateDice dsc_agg_detail(std::span<const MaskPair> pairs)
{
    if (pairs.empty())
        throw ArgumentError("dsc_agg: empty pair list");
    OverlapCounts total;
    for (const auto& p : pairs)
        total += count_overlap(p);
    return {dice_from_counts(total), total.truth_sum() + total.pred_sum() == 0};
}

inline double dsc_agg(std::span<const MaskPair> pairs) { return dsc_agg_detail(pairs).value; }

/// TP / (TP + FP); empty when the prediction is empty.
inline std::optional<double> precision(const MaskPair& pair)
{
    const auto c = count_overlap(pair);
    if (c.pred_sum() == 0)
        return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(c.pred_sum());
}

/// TP / (TP + FN); empty when the truth is empty.
inline std::optional<double> recall(const MaskPair& pair)
{
    const auto c = count_overlap(pair);
    if (c.truth_sum() == 0)
        return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(c.truth_sum());
}

// ---------------------------------------------------------------------------
// Loss

namespace detail {

struct ClassSums {
    double truth = 0.0;
    double prob = 0.0;
    double inter = 0.0;
};

template <typename T>
std::vector<ClassSums> class_sums(std::span<const BasicTensor4D<T>> truth, std::span<const BasicTensor4D<T>> prob)
{
    if (truth.size() != prob.size() || truth.empty())
        throw ArgumentError("dice_loss: truth and prob batches must be non-empty and of equal size");
    const std::size_t C = truth[0].channels();
    for (std::size_t n = 0; n < truth.size(); ++n)
        if (!truth[n].same_shape(prob[n]) || truth[n].channels() != C)
            throw ArgumentError("dice_loss: shape mismatch at batch item " + std::to_string(n));
    std::vector<ClassSums> sums(C);
    for (std::size_t n = 0; n < truth.size(); ++n)
        for (std::size_t c = 0; c < C; ++c) {
            auto y = truth[n].channel(c);
            auto p = prob[n].channel(c);
            for (std::size_t i = 0; i < y.size(); ++i) {
                sums[c].truth += y[i];
                sums[c].prob += p[i];
                sums[c].inter += static_cast<double>(y[i]) * p[i];
            }
        }
    return sums;
}

inline std::size_t present_count(const std::vector<ClassSums>& sums)
{
    std::size_t n = 0;
    for (const auto& s : sums)
        n += s.truth > 0.0;
    if (n == 0)
        throw ArgumentError("dice_loss: no class is present in the batch truth");
    return n;
}

} // namespace detail

/// Mean over present classes c of 1 - 2 sum(y p) / (sum y + sum p), with sums
/// taken over the whole batch. Batch items are (C, X, Y, Z) tensors: one-hot
/// truth and class probabilities.
template <typename T>
double dice_loss(std::span<const BasicTensor4D<T>> truth, std::span<const BasicTensor4D<T>> prob)
{
    const auto sums = detail::class_sums(truth, prob);
    const std::size_t present = detail::present_count(sums);
    double loss = 0.0;
    for (const auto& s : sums) {
        if (s.truth <= 0.0)
            continue;
        loss += 1.0 - 2.0 * s.inter / (s.truth + s.prob);
    }
    return loss / static_cast<double>(present);
}

/// d(dice_loss)/d(prob), same shape as `prob`; zero on absent classes.
template <typename T>
std::vector<BasicTensor4D<T>> dice_loss_grad(std::span<const BasicTensor4D<T>> truth,
                                             std::span<const BasicTensor4D<T>> prob)
{
    const auto sums = detail::class_sums(truth, prob);
    const double scale = 1.0 / static_cast<double>(detail::present_count(sums));
    std::vector<BasicTensor4D<T>> grad;
    grad.reserve(prob.size());
    for (std::size_t n = 0; n < prob.size(); ++n) {
        BasicTensor4D<T> g(prob[n].channels(), prob[n].dims());
        for (std::size_t c = 0; c < sums.size(); ++c) {
            const auto& s = sums[c];
            if (s.truth <= 0.0)
                continue;
            const double denom = s.truth + s.prob;
            auto y = truth[n].channel(c);
            auto out = g.channel(c);
            for (std::size_t i = 0; i < y.size(); ++i)
                out[i] = static_cast<T>(-2.0 * (y[i] * denom - s.inter) / (denom * denom) * scale);
        }
        grad.push_back(std::move(g));
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Set evaluation

inline constexpr std::array<std::uint8_t, 2> kForegroundClasses{1, 2};
inline constexpr std::array<const char*, 3> kClassNames{"background", "GTVp", "GTVn"};

struct ClassMetrics {
    double dsc = 1.0;
    std::optional<double> precision;
    std::optional<double> recall;
    bool truth_empty = false;
};

struct EvaluationRecord {
    std::string patient_id;
    std::array<ClassMetrics, 2> classes; // GTVp, GTVn
};

struct EvaluationReport {
    std::array<AggregateDice, 2> aggregate;  // GTVp, GTVn
    std::array<OverlapCounts, 2> pooled;
    double mean = 0.0;
    std::vector<EvaluationRecord> records;
};

inline std::vector<std::uint8_t> binarize(const LabelMask& mask, std::uint8_t label)
{
    std::vector<std::uint8_t> out(mask.voxels());
    const auto l = mask.labels();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = l[i] == label;
    return out;
}

/// Per-class aggregated Dice over the set (background excluded), their mean,
/// and per-case records.
inline EvaluationReport evaluate_set(std::span<const LabelMask> truths, std::span<const LabelMask> preds,
                                     std::span<const std::string> ids = {})
{
    if (truths.size() != preds.size())
        throw ArgumentError("evaluate_set: " + std::to_string(truths.size()) + " truths vs " +
                            std::to_string(preds.size()) + " predictions");
    if (truths.empty())
        throw ArgumentError("evaluate_set: empty set");
    if (!ids.empty() && ids.size() != truths.size())
        throw ArgumentError("evaluate_set: id list does not match the number of cases");
    EvaluationReport report;
    for (std::size_t n = 0; n < truths.size(); ++n) {
        if (truths[n].dims() != preds[n].dims())
            throw ArgumentError("evaluate_set: case " + std::to_string(n) + " has mismatched dims " +
                                to_string(truths[n].dims()) + " vs " + to_string(preds[n].dims()));
        EvaluationRecord rec;
        rec.patient_id = ids.empty() ? "case_" + std::to_string(n) : ids[n];
        for (std::size_t k = 0; k < kForegroundClasses.size(); ++k) {
            const auto y = binarize(truths[n], kForegroundClasses[k]);
            const auto p = binarize(preds[n], kForegroundClasses[k]);
            const auto c = count_overlap({y, p});
            report.pooled[k] += c;
            auto& m = rec.classes[k];
            m.dsc = dice_from_counts(c);
            m.truth_empty = c.truth_sum() == 0;
            if (c.pred_sum() > 0)
                m.precision = static_cast<double>(c.tp) / static_cast<double>(c.pred_sum());
            if (c.truth_sum() > 0)
                m.recall = static_cast<double>(c.tp) / static_cast<double>(c.truth_sum());
        }
        report.records.push_back(std::move(rec));
    }
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& c = report.pooled[k];
        report.aggregate[k] = {dice_from_counts(c), c.truth_sum() + c.pred_sum() == 0};
    }
    report.mean = 0.5 * (report.aggregate[0].value + report.aggregate[1].value);
    return report;
}

namespace detail {

inline void put_metric(std::ostream& os, const std::optional<double>& v)
{
    if (v)
        os << *v;
    else
        os << "NA";
}

} // namespace detail

/// CSV: patient_id,class,dsc,precision,recall; then AGG_GTVp, AGG_GTVn and
/// AGG_MEAN rows. Undefined metrics are written as NA.
inline void write_evaluation_csv(const EvaluationReport& report, std::ostream& os)
{
    const auto old_precision = os.precision(12);
    os << "patient_id,class,dsc,precision,recall\n";
    for (const auto& rec : report.records)
        for (std::size_t k = 0; k < 2; ++k) {
            const auto& m = rec.classes[k];
            os << rec.patient_id << "," << kClassNames[kForegroundClasses[k]] << "," << m.dsc << ",";
            detail::put_metric(os, m.precision);
            os << ",";
            detail::put_metric(os, m.recall);
            os << "\n";
        }
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& c = report.pooled[k];
        const char* name = kClassNames[kForegroundClasses[k]];
        os << "AGG_" << name << "," << name << "," << report.aggregate[k].value << ",";
        detail::put_metric(os, c.pred_sum() ? std::optional<double>(double(c.tp) / double(c.pred_sum())) : std::nullopt);
        os << ",";
        detail::put_metric(os, c.truth_sum() ? std::optional<double>(double(c.tp) / double(c.truth_sum())) : std::nullopt);
        os << "\n";
    }
    os << "AGG_MEAN,mean," << report.mean << ",NA,NA\n";
    os.precision(old_precision);
}

/// Console table with GTVp / GTVn / Average columns.
inline void write_evaluation_table(const EvaluationReport& report, std::ostream& os)
{
    const auto flags = os.flags();
    const auto old_precision = os.precision();
    os << std::left << std::setw(10) << "" << std::setw(10) << "GTVp" << std::setw(10) << "GTVn" << "Average\n";
    os << std::setw(10) << "DSC_agg" << std::fixed << std::setprecision(3) << std::setw(10)
       << report.aggregate[0].value << std::setw(10) << report.aggregate[1].value << report.mean << "\n";
    os.flags(flags);
    os.precision(old_precision);
}

} // namespace volseg
