#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "mgt/bench.hpp"
#include "mgt/downstream.hpp"
#include "mgt/line.hpp"
#include "mgt/nn/model.hpp"
#include "mgt/ppr.hpp"
#include "mgt/pretrain.hpp"

namespace mgt {

// Flat run configuration. JSON keys equal the field names, so the
// pre-training hyper-parameter names (mask_rate, hidden_size, lr,
// weight_decay, dropout, optimizer, num_epochs, num_layers, ppr_topk, lambda)
// appear verbatim in config files and as command-line flags.
struct RunConfig {
    std::string preset = "desk";

    std::string graph;
    std::string features;
    std::string labels;
    std::string edge_labels;
    std::string pe;
    std::string sequences;
    std::string checkpoint;
    std::string embeddings;
    std::string out = ".";
    bool undirected = true;
    std::uint64_t rng_seed = 0;
    std::size_t threads = 1;

    double alpha = 0.85;
    double epsilon = 1e-5;
    std::size_t ppr_topk = 128;
    std::string seeds = "all";

    std::string pe_mode = "line";
    std::size_t line_epochs = 10;
    double line_lr = 0.025;
    std::size_t line_negatives = 5;

    double mask_rate = 0.85;
    std::size_t hidden_size = 64;
    double lr = 3e-4;
    double weight_decay = 0.01;
    double dropout = 0.2;
    std::string optimizer = "adamw";
    std::size_t num_epochs = 10;
    std::size_t num_layers = 2;
    std::size_t decoder_layers = 2;
    std::size_t heads = 0;
    double lambda = 0.1;
    double gamma = 2.0;
    double tau = 0.5;
    std::size_t batch_size = 32;
    std::size_t pair_budget = 64;
    bool exempt_seed = false;
    bool per_anchor = false;

    bool augment = true;
    double probe_lr = 0.01;
    std::size_t probe_epochs = 5000;
    std::size_t probe_patience = 100;
    std::string head = "node_classification";
    double finetune_lr = 1e-3;
    std::size_t finetune_epochs = 20;
    std::size_t eval_negatives = 50;

    std::string bench_modes = "ppr_sequence,full_neighborhood";
    std::size_t bench_hops = 2;
    std::size_t bench_cap = 256;
    std::size_t bench_seeds = 100;

    // "desk" (hidden 64, 2 layers) or "large" (hidden 1024, 8 layers).
    static RunConfig from_preset(const std::string& name);

    nlohmann::json to_json() const;
    // Hyper-parameters only: no paths, output directory or thread count, so
    // artifacts do not depend on where a run was written.
    nlohmann::json hyperparameters() const;

    // Starts from the preset named in `j` (default desk) and applies every
    // key. Unknown keys and type mismatches throw InputError.
    static RunConfig from_json(const nlohmann::json& j);

    void validate() const;

    PPRConfig ppr() const;
    LineConfig line() const;
    PretrainConfig pretrain() const;
    nn::ModelConfig model(std::size_t in_dim) const;
    ProbeConfig probe() const;
    FinetuneConfig finetune() const;
    BenchConfig bench() const;
};

RunConfig load_run_config(const std::string& path);

// Applies a textual flag value to `j[key]`, converting to the type of the
// existing default. Throws InputError for unknown keys or unparsable values.
void apply_override(nlohmann::json& j, const std::string& key, const std::string& value);

}  // namespace mgt
