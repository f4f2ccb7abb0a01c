#pragma once

// Pipeline commands behind the command-line tool. Each command reports
// through the given streams and throws on failure; the CLI layer maps
// exceptions to exit codes.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "volseg/augmentation.hpp"
#include "volseg/error.hpp"
#include "volseg/grid.hpp"
#include "volseg/inference.hpp"
#include "volseg/metrics.hpp"
#include "volseg/network.hpp"
#include "volseg/nifti.hpp"
#include "volseg/resample.hpp"
#include "volseg/run_config.hpp"
#include "volseg/sampling.hpp"
#include "volseg/weights_io.hpp"

namespace volseg {

namespace fs = std::filesystem;

/// Failure inside one named stage of a command.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error(stage + ": " + message), stage_(std::move(stage))
    {
    }
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

namespace detail {

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

inline std::string patient_id_from(const fs::path& p)
{
    std::string name = p.filename().string();
    for (const char* ext : {".nii.gz", ".nii"})
        if (nifti::detail::has_suffix(name, ext))
            return name.substr(0, name.size() - std::string(ext).size());
    return name;
}

inline bool is_nifti(const fs::path& p)
{
    const auto name = p.filename().string();
    return nifti::detail::has_suffix(name, ".nii") || nifti::detail::has_suffix(name, ".nii.gz");
}

/// Channel stack of equally sized single-channel volumes.
inline Volume3D stack_channels(const std::vector<Volume3D>& channels)
{
    const Index3& d = channels.front().dims();
    std::vector<float> data;
    data.reserve(channels.size() * voxel_count(d));
    for (std::size_t c = 0; c < channels.size(); ++c) {
        if (channels[c].dims() != d)
            throw ArgumentError("channel " + std::to_string(c) + " has dims " + to_string(channels[c].dims()) +
                                " after resampling, channel 0 has " + to_string(d));
        if (channels[c].channels() != 1)
            throw ArgumentError("each input file must hold a single channel");
        data.insert(data.end(), channels[c].data().begin(), channels[c].data().end());
    }
    return Volume3D(Tensor4D(channels.size(), d, std::move(data)), channels.front().spacing());
}

/// Binary volume resampled as a mask (nearest) so it stays binary.
inline Volume3D resample_binary(const Volume3D& vol, const Spacing& target)
{
    std::vector<std::uint8_t> labels(vol.data().size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const float v = vol.data()[i];
        if (v != 0.0f && v != 1.0f)
            throw ArgumentError("binary mask channel contains a value other than 0 or 1");
        labels[i] = static_cast<std::uint8_t>(v);
    }
    const auto r = resample_nearest(LabelMask(vol.dims(), vol.spacing(), std::move(labels)), target);
    std::vector<float> data(r.labels().begin(), r.labels().end());
    return Volume3D(Tensor4D(1, r.dims(), std::move(data)), target, IntensityKind::binary);
}

} // namespace detail

/// Layer table of the configured network plus parameter totals for the
/// configured kernel plan and for an all-3x3x3 variant.
inline void cmd_net_info(const RunConfig& cfg, std::ostream& out)
{
    const NetworkConfig& net = cfg.network;
    out << "task: " << to_string(cfg.task) << "\n";
    out << "input channels: " << net.in_channels << ", classes: " << net.num_classes
        << ", base width: " << net.base_width << ", stages: " << net.num_stages
        << ", convs per stage: " << net.convs_per_stage << "\n";
    out << "kernel plan:";
    for (std::size_t k : net.kernel_plan)
        out << " " << k;
    out << "\n\n#\tlayer\tchannels\t[spatial]\tparams\n";
    out << describe_layers(net, cfg.window.patch_size);

    NetworkConfig all3 = net;
    std::fill(all3.kernel_plan.begin(), all3.kernel_plan.end(), 3);
    const auto total = count_parameters(net);
    const auto total3 = count_parameters(all3);
    out << "\ntotal parameters: " << total << " (" << std::fixed << std::setprecision(2) << total / 1e6 << "M)\n";
    out << "all-3x3x3 variant: " << total3 << " (" << total3 / 1e6 << "M)\n";
    out << std::defaultfloat;
}

/// Resample -> per-model sliding window -> ensemble mean -> argmax ->
/// restore original grid -> write. `inputs` are per-channel file paths in
/// model channel order. Nothing is written unless every stage succeeds.
inline void cmd_infer(const RunConfig& cfg, const std::vector<fs::path>& inputs, const fs::path& output,
                      std::ostream& log)
{
    using detail::run_stage;
    if (cfg.weights.empty())
        throw StageError("config", "at least one weight file is required");
    if (inputs.size() != cfg.network.in_channels)
        throw StageError("config", "expected " + std::to_string(cfg.network.in_channels) + " input file(s), got " +
                                       std::to_string(inputs.size()));

    nifti::Orientation orientation;
    std::vector<Volume3D> originals;
    run_stage("read", [&] {
        for (std::size_t c = 0; c < inputs.size(); ++c)
            originals.push_back(read_volume(inputs[c], c == 0 ? &orientation : nullptr));
    });

    const Volume3D working = run_stage("resample", [&] {
        std::vector<Volume3D> channels;
        for (std::size_t c = 0; c < originals.size(); ++c)
            channels.push_back(cfg.window.exempt_channels.contains(c)
                                   ? detail::resample_binary(originals[c], cfg.working_spacing)
                                   : resample_linear(originals[c], cfg.working_spacing));
        return detail::stack_channels(channels);
    });
    log << "working grid: " << to_string(working.dims()) << " at " << to_string(working.spacing()) << " mm\n";

    std::vector<Volume3D> probabilities;
    for (std::size_t m = 0; m < cfg.weights.size(); ++m) {
        const Model model = run_stage("load weights", [&] { return load_weights(cfg.weights[m], cfg.network); });
        probabilities.push_back(run_stage("sliding window", [&] {
            return sliding_window_predict(working, model_predictor(model), cfg.window);
        }));
        log << "model " << m + 1 << "/" << cfg.weights.size() << " done\n";
    }

    const Volume3D mean = run_stage("ensemble", [&] { return ensemble_predict(probabilities); });
    const LabelMask labels = run_stage("argmax", [&] { return argmax_labels(mean); });
    const LabelMask restored = run_stage("restore", [&] { return restore_resolution(labels, originals.front()); });
    run_stage("write", [&] { write_mask(restored, output, &orientation); });
    log << "wrote " << output.string() << " (" << to_string(restored.dims()) << ")\n";
}

/// Matches NIfTI files by name across the two directories and evaluates the
/// matched pairs. Unmatched files are reported on `warn` and skipped.
inline EvaluationReport cmd_evaluate(const fs::path& truth_dir, const fs::path& pred_dir,
                                     const std::optional<fs::path>& csv_path, std::ostream& out, std::ostream& warn)
{
    using detail::run_stage;
    std::map<std::string, fs::path> truths, preds;
    run_stage("scan", [&] {
        for (const auto& [dir, dest] : {std::pair{truth_dir, &truths}, std::pair{pred_dir, &preds}}) {
            if (!fs::is_directory(dir))
                throw IoError("'" + dir.string() + "' is not a directory");
            for (const auto& e : fs::directory_iterator(dir))
                if (e.is_regular_file() && detail::is_nifti(e.path()))
                    (*dest)[detail::patient_id_from(e.path())] = e.path();
        }
    });
    std::vector<std::string> ids;
    for (const auto& [id, path] : truths) {
        if (preds.contains(id))
            ids.push_back(id);
        else
            warn << "warning: no prediction for '" << id << "', skipped\n";
    }
    for (const auto& [id, path] : preds)
        if (!truths.contains(id))
            warn << "warning: no ground truth for '" << id << "', skipped\n";
    if (ids.empty())
        throw StageError("match", "no files common to '" + truth_dir.string() + "' and '" + pred_dir.string() + "'");

    std::vector<LabelMask> t, p;
    run_stage("read", [&] {
        for (const auto& id : ids) {
            t.push_back(read_mask(truths[id]));
            p.push_back(read_mask(preds[id]));
        }
    });
    const auto report = run_stage("evaluate", [&] { return evaluate_set(t, p, ids); });
    if (csv_path)
        run_stage("write", [&] {
            std::ostringstream csv;
            write_evaluation_csv(report, csv);
            const auto s = csv.str();
            nifti::write_file_atomic(*csv_path, std::vector<unsigned char>(s.begin(), s.end()));
        });
    out << "cases: " << ids.size() << "\n";
    write_evaluation_table(report, out);
    return report;
}

/// Reads one patient id per line, assigns folds, writes patient_id,fold CSV.
inline std::vector<std::pair<std::string, std::size_t>> cmd_folds(const fs::path& ids_file, std::uint64_t seed,
                                                                    const fs::path& output, std::size_t folds,
                                                                    std::ostream& out)
{
    std::vector<std::string> ids;
    detail::run_stage("read", [&] {
        std::ifstream in(ids_file);
        if (!in)
            throw IoError("cannot read '" + ids_file.string() + "'");
        std::string line;
        while (std::getline(in, line)) {
            line = detail::trim(line);
            if (!line.empty() && line.front() != '#')
                ids.push_back(line);
        }
    });
    const auto assignment = detail::run_stage("assign", [&] { return assign_folds(ids, seed, folds); });
    detail::run_stage("write", [&] {
        std::ostringstream csv;
        csv << "patient_id,fold\n";
        for (const auto& [id, f] : assignment)
            csv << id << "," << f << "\n";
        const auto s = csv.str();
        nifti::write_file_atomic(output, std::vector<unsigned char>(s.begin(), s.end()));
    });
    std::vector<std::size_t> sizes(folds, 0);
    for (const auto& [id, f] : assignment)
        ++sizes[f];
    out << ids.size() << " patients, fold sizes:";
    for (auto s : sizes)
        out << " " << s;
    out << "\n";
    return assignment;
}

struct AugmentPreviewOptions {
    std::vector<fs::path> images; // one file per channel
    fs::path mask;
    long iter = 0;
    std::optional<long> total;
    std::uint64_t seed = 0;
    std::optional<double> constant_p;
    fs::path out_dir;
};

/// Normalizes the whole volume patch-wise, applies the augmentation policy at
/// the requested schedule point and writes the transformed pair plus a log.
inline AugmentationResult cmd_augment_preview(const RunConfig& cfg, const AugmentPreviewOptions& opt,
                                              std::ostream& out)
{
    using detail::run_stage;
    AugmentationPolicy policy = cfg.policy;
    if (opt.total)
        policy.total_iters = *opt.total;
    if (opt.constant_p)
        policy.constant_p = *opt.constant_p;

    nifti::Orientation orientation;
    PatchSample patch = run_stage("read", [&] {
        std::vector<Volume3D> channels;
        for (std::size_t c = 0; c < opt.images.size(); ++c)
            channels.push_back(read_volume(opt.images[c], c == 0 ? &orientation : nullptr));
        const Volume3D vol = detail::stack_channels(channels);
        LabelMask mask = read_mask(opt.mask);
        if (mask.dims() != vol.dims())
            throw ArgumentError("mask dims " + to_string(mask.dims()) + " differ from image dims " +
                                to_string(vol.dims()));
        return PatchSample{{0, 0, 0}, vol.tensor(), std::move(mask), Provenance::random};
    });
    const Spacing spacing = patch.mask_patch.spacing();
    patch.data = normalize_patchwise(patch.data, cfg.transform.exempt_channels);

    Rng rng(opt.seed);
    const auto result = run_stage("augment", [&] { return apply_augmentations(patch, cfg.transform, policy, opt.iter, rng); });

    std::ostringstream log;
    log << "iter = " << opt.iter << "\n";
    log << "total = " << policy.total_iters << "\n";
    log << "mode = " << (policy.constant_p ? "constant" : "scheduled") << "\n";
    log << "p = " << result.probability << "\n";
    log << "seed = " << opt.seed << "\n";
    for (const auto& a : result.applied)
        log << "applied " << to_string(a.kind) << " " << a.params << "\n";
    if (result.applied.empty())
        log << "applied none\n";

    run_stage("write", [&] {
        fs::create_directories(opt.out_dir);
        write_volume(Volume3D(result.patch.data, spacing), opt.out_dir / "augmented_image.nii.gz", &orientation);
        write_mask(result.patch.mask_patch, opt.out_dir / "augmented_mask.nii.gz", &orientation);
        const auto s = log.str();
        nifti::write_file_atomic(opt.out_dir / "augment_log.txt", std::vector<unsigned char>(s.begin(), s.end()));
    });
    out << log.str();
    return result;
}

/// Writes a freshly initialized model for the configured architecture.
inline void cmd_init_weights(const RunConfig& cfg, std::uint64_t seed, const fs::path& output, std::ostream& out)
{
    const Model model = detail::run_stage("build", [&] { return build_unet(cfg.network, seed); });
    detail::run_stage("write", [&] { save_weights(model, output); });
    out << "wrote " << output.string() << " (" << count_parameters(model) << " parameters)\n";
}

} // namespace volseg
