#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "mgt/commands.hpp"
#include "mgt/simd/kernels.hpp"

namespace {

const std::map<std::string, std::vector<std::string>> kAliases{
    {"ppr_topk", {"--topk"}},
    {"num_epochs", {"--epochs"}},
};

std::string option_names(const std::string& key) {
    std::string names = "--" + key;
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    if (dashed != key) names += ",--" + dashed;
    if (auto it = kAliases.find(key); it != kAliases.end()) {
        for (const auto& a : it->second) names += "," + a;
    }
    return names;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("mgt"));
    spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

    CLI::App app{"Masked graph-transformer pre-training toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mgt 1.0.0");

    std::string config_path;
    bool no_augment = false, directed = false, verbose = false;
    app.add_option("--config", config_path, "JSON run config; flags override its values");
    app.add_flag("--no-augment", no_augment, "Disable decoder-reuse feature augmentation");
    app.add_flag("--directed", directed, "Load the edge list as directed");
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    const nlohmann::json defaults = mgt::RunConfig{}.to_json();
    std::map<std::string, std::string> flags;
    for (const auto& [key, value] : defaults.items()) {
        std::string help = "default: " + (value.is_string() ? value.get<std::string>() : value.dump());
        app.add_option(option_names(key), flags[key], help)->group("Run config");
    }

    const std::vector<std::pair<std::string, std::string>> commands{
        {"sample", "PPR top-k sequences for the selected seeds"},
        {"encode-pos", "Positional encodings (LINE or zero)"},
        {"pretrain", "Masked pre-training; writes a checkpoint and loss log"},
        {"embed", "Seed embeddings from a checkpoint"},
        {"probe", "Linear probe on frozen embeddings"},
        {"finetune", "End-to-end fine-tuning with a task head"},
        {"bench", "Inference timing: PPR sequences vs full neighborhoods"},
    };
    for (const auto& [name, desc] : commands) app.add_subcommand(name, desc)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (verbose) spdlog::set_level(spdlog::level::debug);

    try {
        nlohmann::json raw = nlohmann::json::object();
        if (!config_path.empty()) raw = mgt::load_run_config(config_path).to_json();
        if (app.count("--preset") > 0) raw["preset"] = flags["preset"];
        nlohmann::json merged = mgt::RunConfig::from_json(raw).to_json();
        for (const auto& [key, value] : flags) {
            if (key == "preset" || app.count("--" + key) == 0) continue;
            mgt::apply_override(merged, key, value);
        }
        if (no_augment) merged["augment"] = false;
        if (directed) merged["undirected"] = false;
        const mgt::RunConfig cfg = mgt::RunConfig::from_json(merged);

        const std::string command = app.get_subcommands().front()->get_name();
        spdlog::debug("simd backend: {}", mgt::simd::backend_name(mgt::simd::active_backend()));
        mgt::run_command(command, cfg);
        return 0;
    } catch (const mgt::InputError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return 1;
    }
}
