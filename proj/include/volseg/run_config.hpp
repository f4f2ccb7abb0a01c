#pragma once

// Run configuration: a flat "dotted.key = value" text format, one key per
// line, '#' starts a comment. Lists are comma separated.
//
//   task = task2
//   preprocess.working_spacing = 0.5, 0.5, 2
//   inference.stride = 80, 80, 16
//   inference.weighting = gaussian
//   model.weights = fold0.vskw, fold1.vskw

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "volseg/augmentation.hpp"
#include "volseg/error.hpp"
#include "volseg/grid.hpp"
#include "volseg/inference.hpp"
#include "volseg/network.hpp"

namespace volseg {

/// Configuration value that failed to parse or validate.
class ConfigError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

enum class Task { task1, task2 };

inline Task parse_task(const std::string& s)
{
    if (s == "task1")
        return Task::task1;
    if (s == "task2")
        return Task::task2;
    throw ConfigError("task must be 'task1' or 'task2', got '" + s + "'");
}

inline const char* to_string(Task t) { return t == Task::task1 ? "task1" : "task2"; }

/// Channels 2 and 3 of a Task 2 input are binary masks.
inline std::set<std::size_t> task_exempt_channels(Task t)
{
    return t == Task::task2 ? std::set<std::size_t>{2, 3} : std::set<std::size_t>{};
}

struct RunConfig {
    Task task = Task::task1;
    Spacing working_spacing{0.5, 0.5, 2.0};
    NetworkConfig network;
    SlidingWindowConfig window;
    std::vector<std::string> weights;
    AugmentationPolicy policy;
    TransformParams transform;
    std::uint64_t seed = 0;

    void validate() const
    {
        network.validate();
        window.validate();
        policy.validate();
        transform.validate();
        check_spacing(working_spacing, "preprocess.working_spacing");
        const std::size_t expect_in = task == Task::task2 ? 4 : 1;
        if (network.in_channels != expect_in)
            throw ConfigError(std::string(to_string(task)) + " requires " + std::to_string(expect_in) +
                              " input channels");
        if (window.exempt_channels != task_exempt_channels(task))
            throw ConfigError("inference.exempt_channels does not match the task's binary mask channels");
        for (std::size_t c : window.exempt_channels)
            if (c >= network.in_channels)
                throw ConfigError("exempt channel index out of range");
        if (network.num_classes != kOutputClasses)
            throw ConfigError("network.num_classes must be 3");
        for (std::size_t p : window.patch_size)
            if (p % network.divisor() != 0)
                throw ConfigError("inference.patch_size " + to_string(window.patch_size) + " must be divisible by " +
                                  std::to_string(network.divisor()));
    }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

inline double to_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + v + "' is not a number");
    }
}

inline long long to_integer(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + v + "' is not an integer");
    }
}

inline std::size_t to_size(const std::string& key, const std::string& v)
{
    const long long n = to_integer(key, v);
    if (n < 0)
        throw ConfigError(key + ": must be non-negative");
    return static_cast<std::size_t>(n);
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v, std::size_t expect)
{
    std::vector<double> out;
    for (const auto& s : split_list(v))
        out.push_back(to_double(key, s));
    if (expect && out.size() != expect)
        throw ConfigError(key + ": expected " + std::to_string(expect) + " values");
    return out;
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v, std::size_t expect = 0)
{
    std::vector<std::size_t> out;
    for (const auto& s : split_list(v))
        out.push_back(to_size(key, s));
    if (expect && out.size() != expect)
        throw ConfigError(key + ": expected " + std::to_string(expect) + " values");
    return out;
}

inline Index3 to_index3(const std::string& key, const std::string& v)
{
    const auto s = to_sizes(key, v, 3);
    return {s[0], s[1], s[2]};
}

inline Range to_range(const std::string& key, const std::string& v)
{
    const auto d = to_doubles(key, v, 2);
    return {d[0], d[1]};
}

} // namespace detail

using ConfigEntries = std::map<std::string, std::string>;

inline ConfigEntries parse_config_text(const std::string& text)
{
    ConfigEntries entries;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const auto key = detail::trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        entries[key] = detail::trim(line.substr(eq + 1));
    }
    return entries;
}

inline ConfigEntries read_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Task defaults, then every entry applied on top. Unknown keys are rejected.
inline RunConfig make_run_config(const ConfigEntries& entries, std::optional<Task> task_override = std::nullopt)
{
    using namespace detail;
    RunConfig cfg;
    if (auto it = entries.find("task"); it != entries.end())
        cfg.task = parse_task(it->second);
    if (task_override)
        cfg.task = *task_override;
    cfg.network.in_channels = cfg.task == Task::task2 ? 4 : 1;
    cfg.window.exempt_channels = task_exempt_channels(cfg.task);
    cfg.transform.exempt_channels = cfg.window.exempt_channels;
    cfg.policy.total_iters = cfg.task == Task::task2 ? 50000 : 100000;

    for (const auto& [key, v] : entries) {
        if (key == "task")
            continue;
        else if (key == "seed")
            cfg.seed = static_cast<std::uint64_t>(to_integer(key, v));
        else if (key == "preprocess.working_spacing") {
            const auto d = to_doubles(key, v, 3);
            cfg.working_spacing = {d[0], d[1], d[2]};
        } else if (key == "network.base_width")
            cfg.network.base_width = to_size(key, v);
        else if (key == "network.num_stages")
            cfg.network.num_stages = to_size(key, v);
        else if (key == "network.kernel_plan")
            cfg.network.kernel_plan = to_sizes(key, v);
        else if (key == "network.convs_per_stage")
            cfg.network.convs_per_stage = to_size(key, v);
        else if (key == "network.num_classes")
            cfg.network.num_classes = to_size(key, v);
        else if (key == "network.in_channels")
            cfg.network.in_channels = to_size(key, v);
        else if (key == "inference.patch_size")
            cfg.window.patch_size = to_index3(key, v);
        else if (key == "inference.stride")
            cfg.window.stride = to_index3(key, v);
        else if (key == "inference.weighting")
            cfg.window.weighting = parse_weighting(v);
        else if (key == "inference.gaussian_edge_value")
            cfg.window.gaussian_edge_value = to_double(key, v);
        else if (key == "inference.exempt_channels") {
            const auto s = to_sizes(key, v);
            cfg.window.exempt_channels = {s.begin(), s.end()};
            cfg.transform.exempt_channels = cfg.window.exempt_channels;
        } else if (key == "model.weights")
            cfg.weights = split_list(v);
        else if (key == "augmentation.p_start")
            cfg.policy.p_start = to_double(key, v);
        else if (key == "augmentation.p_end")
            cfg.policy.p_end = to_double(key, v);
        else if (key == "augmentation.total_iters")
            cfg.policy.total_iters = static_cast<long>(to_integer(key, v));
        else if (key == "augmentation.step")
            cfg.policy.step = static_cast<long>(to_integer(key, v));
        else if (key == "augmentation.constant_p")
            cfg.policy.constant_p = to_double(key, v);
        else if (key == "augmentation.transforms") {
            cfg.policy.transforms.clear();
            for (const auto& t : split_list(v))
                cfg.policy.transforms.push_back(parse_transform_kind(t));
        } else if (key == "augmentation.mirror_axes") {
            cfg.transform.mirror_axes = {false, false, false};
            for (const auto& a : split_list(v)) {
                if (a == "X" || a == "x")
                    cfg.transform.mirror_axes[0] = true;
                else if (a == "Y" || a == "y")
                    cfg.transform.mirror_axes[1] = true;
                else if (a == "Z" || a == "z")
                    cfg.transform.mirror_axes[2] = true;
                else
                    throw ConfigError(key + ": unknown axis '" + a + "'");
            }
        } else if (key == "augmentation.max_rotation_deg")
            cfg.transform.max_rotation_deg = to_double(key, v);
        else if (key == "augmentation.gamma_range")
            cfg.transform.gamma = to_range(key, v);
        else if (key == "augmentation.bias_amplitude")
            cfg.transform.bias_amplitude = to_range(key, v);
        else if (key == "augmentation.bias_coeff_scale")
            cfg.transform.bias_coeff_scale = to_double(key, v);
        else if (key == "augmentation.noise_sigma")
            cfg.transform.noise_sigma = to_range(key, v);
        else if (key == "augmentation.ghost_shift") {
            const auto s = to_sizes(key, v, 2);
            cfg.transform.ghost_shift = {static_cast<int>(s[0]), static_cast<int>(s[1])};
        } else if (key == "augmentation.ghost_weight")
            cfg.transform.ghost_weight = to_range(key, v);
        else
            throw ConfigError("unknown config key '" + key + "'");
    }
    try {
        cfg.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Cross-validation folds

/// Seeded shuffle, then round-robin assignment to `folds` folds.
inline std::vector<std::pair<std::string, std::size_t>> assign_folds(std::vector<std::string> ids,
                                                                      std::uint64_t seed, std::size_t folds = 5)
{
    if (folds == 0)
        throw ArgumentError("fold count must be positive");
    if (ids.size() < folds)
        throw ArgumentError("need at least " + std::to_string(folds) + " patients, got " + std::to_string(ids.size()));
    std::set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second)
            throw ArgumentError("duplicate patient id '" + id + "'");
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<std::pair<std::string, std::size_t>> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        out.emplace_back(ids[i], i % folds);
    return out;
}

} // namespace volseg
