#pragma once

// Command-line front end: argument parsing and exit-code mapping.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "volseg/commands.hpp"

namespace volseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

namespace detail {

struct CommonOptions {
    std::string config;
    std::string task;
    std::vector<std::string> weights;
    std::optional<std::uint64_t> seed;
    std::string weighting;
    std::string kernel_plan;
};

inline void add_common(CLI::App* cmd, CommonOptions& o)
{
    cmd->add_option("--config", o.config, "Run configuration file (dotted key = value)");
    cmd->add_option("--task", o.task, "task1 or task2")->check(CLI::IsMember({"task1", "task2"}));
}

inline RunConfig load_config(const CommonOptions& o)
{
    ConfigEntries entries;
    if (!o.config.empty())
        entries = read_config_file(o.config);
    if (!o.weighting.empty())
        entries["inference.weighting"] = o.weighting;
    if (!o.kernel_plan.empty())
        entries["network.kernel_plan"] = o.kernel_plan;
    if (!o.weights.empty()) {
        std::string joined;
        for (const auto& w : o.weights)
            joined += (joined.empty() ? "" : ",") + w;
        entries["model.weights"] = joined;
    }
    if (o.seed)
        entries["seed"] = std::to_string(*o.seed);
    std::optional<Task> task;
    if (!o.task.empty())
        task = parse_task(o.task);
    return make_run_config(entries, task);
}

} // namespace detail

/// Parses `args` (without the program name) and runs the selected command.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"volseg: volumetric head-and-neck tumour segmentation toolkit", "volseg"};
    app.require_subcommand(1);

    detail::CommonOptions common;

    auto* net_info = app.add_subcommand("net-info", "Print the network layer table and parameter counts");
    detail::add_common(net_info, common);
    net_info->add_option("--kernel-plan", common.kernel_plan, "Per-stage kernel sizes, e.g. 3,3,3,3,1,1");

    std::vector<std::string> inputs;
    std::string output;
    auto* infer = app.add_subcommand("infer", "Segment a volume with an ensemble of models");
    detail::add_common(infer, common);
    infer->add_option("--weights", common.weights, "Model weight file (repeat for an ensemble)");
    infer->add_option("--input", inputs, "Input NIfTI per channel, in channel order")->required();
    infer->add_option("--output", output, "Output label mask (.nii or .nii.gz)")->required();
    infer->add_option("--weighting", common.weighting, "equal or gaussian")->check(CLI::IsMember({"equal", "gaussian"}));
    infer->add_option("--seed", common.seed, "Seed recorded in the run configuration");

    std::string truth_dir, pred_dir, csv_out;
    auto* evaluate = app.add_subcommand("evaluate", "DSC_agg / DSC / precision / recall over matched masks");
    evaluate->add_option("--truth", truth_dir, "Directory of ground-truth masks")->required();
    evaluate->add_option("--pred", pred_dir, "Directory of predicted masks")->required();
    evaluate->add_option("--csv", csv_out, "Write per-case and aggregate rows to this CSV");

    std::string ids_file, folds_out;
    std::uint64_t folds_seed = 0;
    std::size_t fold_count = 5;
    auto* folds = app.add_subcommand("folds", "Assign patients to cross-validation folds");
    folds->add_option("--ids", ids_file, "Text file with one patient id per line")->required();
    folds->add_option("--seed", folds_seed, "Shuffle seed");
    folds->add_option("--folds", fold_count, "Number of folds")->check(CLI::PositiveNumber);
    folds->add_option("--output", folds_out, "Output CSV (patient_id,fold)")->required();

    AugmentPreviewOptions preview;
    std::vector<std::string> preview_images;
    std::string preview_mask, preview_out;
    std::optional<long> preview_total;
    std::optional<double> constant_p;
    std::uint64_t preview_seed = 0;
    auto* augment = app.add_subcommand("augment-preview", "Apply the augmentation policy to one image/mask pair");
    detail::add_common(augment, common);
    augment->add_option("--image", preview_images, "Image NIfTI per channel")->required();
    augment->add_option("--mask", preview_mask, "Label mask NIfTI")->required();
    augment->add_option("--iter", preview.iter, "Training iteration for the probability schedule");
    augment->add_option("--total", preview_total, "Total training iterations");
    augment->add_option("--seed", preview_seed, "Random seed");
    augment->add_option("--constant-p", constant_p, "Use a constant probability instead of the schedule")
        ->check(CLI::Range(0.0, 1.0));
    augment->add_option("--out-dir", preview_out, "Output directory")->required();

    std::string init_out;
    std::uint64_t init_seed = 0;
    auto* init = app.add_subcommand("init-weights", "Write a seeded, untrained weight file");
    detail::add_common(init, common);
    init->add_option("--seed", init_seed, "Initialization seed");
    init->add_option("--output", init_out, "Output weight file")->required();

    std::vector<std::string> argv_store{"volseg"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store)
        argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    RunConfig cfg;
    try {
        if (!evaluate->parsed() && !folds->parsed())
            cfg = detail::load_config(common);
    } catch (const std::exception& e) {
        err << "volseg: configuration error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (net_info->parsed())
            cmd_net_info(cfg, out);
        else if (infer->parsed())
            cmd_infer(cfg, {inputs.begin(), inputs.end()}, output, out);
        else if (evaluate->parsed())
            cmd_evaluate(truth_dir, pred_dir, csv_out.empty() ? std::nullopt : std::optional<fs::path>(csv_out), out,
                         err);
        else if (folds->parsed())
            cmd_folds(ids_file, folds_seed, folds_out, fold_count, out);
        else if (augment->parsed()) {
            preview.images.assign(preview_images.begin(), preview_images.end());
            preview.mask = preview_mask;
            preview.total = preview_total;
            preview.seed = preview_seed;
            preview.constant_p = constant_p;
            preview.out_dir = preview_out;
            cmd_augment_preview(cfg, preview, out);
        } else if (init->parsed())
            cmd_init_weights(cfg, init_seed, init_out, out);
    } catch (const std::exception& e) {
        err << "volseg " << app.get_subcommands().front()->get_name() << ": " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}

} // namespace volseg::cli
