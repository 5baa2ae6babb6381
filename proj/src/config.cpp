#include "mgt/config.hpp"

#include <fstream>
#include <sstream>

namespace mgt {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunConfig, preset, graph, features, labels, edge_labels, pe, sequences, checkpoint,
                                   embeddings, out, undirected, rng_seed, threads, alpha, epsilon, ppr_topk, seeds,
                                   pe_mode, line_epochs, line_lr, line_negatives, mask_rate, hidden_size, lr,
                                   weight_decay, dropout, optimizer, num_epochs, num_layers, decoder_layers, heads,
                                   lambda, gamma, tau, batch_size, pair_budget, exempt_seed, per_anchor, augment,
                                   probe_lr, probe_epochs, probe_patience, head, finetune_lr, finetune_epochs,
                                   eval_negatives, bench_modes, bench_hops, bench_cap, bench_seeds)

RunConfig RunConfig::from_preset(const std::string& name) {
    RunConfig c;
    c.preset = name;
    if (name == "desk") return c;
    if (name == "large") {
        c.hidden_size = 1024;
        c.num_layers = 8;
        return c;
    }
    throw InputError("unknown preset '" + name + "' (expected desk or large)");
}

nlohmann::json RunConfig::to_json() const {
    return *this;
}

nlohmann::json RunConfig::hyperparameters() const {
    nlohmann::json j = *this;
    for (const char* key : {"graph", "features", "labels", "edge_labels", "pe", "sequences", "checkpoint",
                            "embeddings", "out", "threads"}) {
        j.erase(key);
    }
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("run config must be a JSON object");
    std::string preset = "desk";
    if (j.contains("preset")) {
        if (!j["preset"].is_string()) throw InputError("config key 'preset' must be a string");
        preset = j["preset"].get<std::string>();
    }
    nlohmann::json merged = from_preset(preset).to_json();
    for (const auto& [key, value] : j.items()) {
        if (!merged.contains(key)) throw InputError("unknown config key '" + key + "'");
        if (value.is_null()) throw InputError("config key '" + key + "' is null");
        const auto& def = merged[key];
        const bool ok = (def.is_string() && value.is_string()) || (def.is_boolean() && value.is_boolean()) ||
                        (def.is_number_float() && value.is_number()) ||
                        (def.is_number_integer() && value.is_number_integer() &&
                         (!def.is_number_unsigned() || value.get<std::int64_t>() >= 0));
        if (!ok) throw InputError("config key '" + key + "' has wrong type: " + value.dump());
        merged[key] = value;
    }
    try {
        return merged.get<RunConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("invalid run config: ") + e.what());
    }
}

void RunConfig::validate() const {
    from_preset(preset);
    if (threads == 0) throw InputError("threads must be >= 1");
    if (pe_mode != "line" && pe_mode != "zero") throw InputError("pe_mode must be line or zero");
    if (optimizer != "adamw") throw InputError("only the adamw optimizer is supported, got '" + optimizer + "'");
    ppr().validate();
    line().validate();
    pretrain().validate();
    parse_head(head);
    bench();
    if (probe_epochs == 0) throw InputError("probe_epochs must be >= 1");
    if (eval_negatives == 0) throw InputError("eval_negatives must be >= 1");
}

PPRConfig RunConfig::ppr() const {
    PPRConfig c;
    c.alpha = alpha;
    c.epsilon = epsilon;
    c.top_k = ppr_topk;
    return c;
}

LineConfig RunConfig::line() const {
    LineConfig c;
    c.dim = hidden_size;
    c.epochs = line_epochs;
    c.learning_rate = line_lr;
    c.negatives_per_edge = line_negatives;
    c.rng_seed = rng_seed;
    return c;
}

PretrainConfig RunConfig::pretrain() const {
    PretrainConfig c;
    c.mask_rate = mask_rate;
    c.gamma = gamma;
    c.lambda = lambda;
    c.tau = tau;
    c.pair_budget = pair_budget;
    c.batch_size = batch_size;
    c.epochs = num_epochs;
    c.dropout = dropout;
    c.lr = lr;
    c.weight_decay = weight_decay;
    c.exempt_seed = exempt_seed;
    c.per_anchor = per_anchor;
    c.rng_seed = rng_seed;
    return c;
}

nn::ModelConfig RunConfig::model(std::size_t in_dim) const {
    nn::ModelConfig c;
    c.in_dim = in_dim;
    c.hidden = hidden_size;
    c.layers = num_layers;
    c.decoder_layers = decoder_layers;
    c.heads = heads;
    return c;
}

ProbeConfig RunConfig::probe() const {
    return {probe_lr, probe_epochs, probe_patience};
}

FinetuneConfig RunConfig::finetune() const {
    FinetuneConfig c;
    c.head = parse_head(head);
    c.lr = finetune_lr;
    c.weight_decay = weight_decay;
    c.dropout = dropout;
    c.epochs = finetune_epochs;
    c.batch_size = batch_size;
    c.eval_negatives = eval_negatives;
    c.use_augmentation = augment;
    c.rng_seed = rng_seed;
    return c;
}

BenchConfig RunConfig::bench() const {
    BenchConfig c;
    c.modes.clear();
    std::stringstream ss(bench_modes);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) c.modes.push_back(parse_bench_mode(item));
    }
    if (c.modes.empty()) throw InputError("bench_modes is empty");
    c.ppr = ppr();
    c.hops = bench_hops;
    c.full_cap = bench_cap;
    c.num_seeds = bench_seeds;
    c.rng_seed = rng_seed;
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file " + path);
    try {
        return RunConfig::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

void apply_override(nlohmann::json& j, const std::string& key, const std::string& value) {
    if (!j.contains(key)) throw InputError("unknown option '" + key + "'");
    auto& slot = j[key];
    try {
        if (slot.is_boolean()) {
            if (value == "true" || value == "1") {
                slot = true;
            } else if (value == "false" || value == "0") {
                slot = false;
            } else {
                throw InputError("expected true/false");
            }
        } else if (slot.is_number_unsigned() || slot.is_number_integer()) {
            std::size_t used = 0;
            if (!value.empty() && value[0] == '-') throw InputError("expected a non-negative integer");
            const unsigned long long v = std::stoull(value, &used);
            if (used != value.size()) throw InputError("expected an integer");
            slot = static_cast<std::uint64_t>(v);
        } else if (slot.is_number_float()) {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw InputError("expected a number");
            slot = v;
        } else {
            slot = value;
        }
    } catch (const std::logic_error&) {
        throw InputError("invalid value '" + value + "' for --" + key);
    } catch (const InputError& e) {
        throw InputError("invalid value '" + value + "' for --" + key + ": " + e.what());
    }
}

}  // namespace mgt
