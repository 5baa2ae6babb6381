#include "mgt/commands.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "mgt/nn/checkpoint.hpp"

namespace mgt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

const std::string& require_path(const std::string& value, const char* key) {
    if (value.empty()) throw InputError(std::string("missing required --") + key);
    if (!fs::exists(value)) throw InputError(std::string("--") + key + " path does not exist: " + value);
    return value;
}

fs::path out_dir(const RunConfig& cfg) {
    fs::path dir(cfg.out);
    fs::create_directories(dir);
    return dir;
}

double millis_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

json report_json(const EvalReport& r, const RunConfig& cfg) {
    return json{{"task", r.task},
                {"metrics", r.metrics},
                {"timings_ms", r.timings_ms},
                {"config_hash", config_hash(cfg)},
                {"rng_seed", cfg.rng_seed}};
}

fs::path ids_sidecar(const fs::path& embeddings) {
    fs::path p = embeddings;
    p.replace_extension(".ids");
    return p;
}

Graph load_graph(const RunConfig& cfg, Manifest& m) {
    const auto& path = require_path(cfg.graph, "graph");
    m.add_input(path);
    Graph g = load_edge_list(path, cfg.undirected);
    spdlog::info("graph: {} nodes, {} edges", g.num_nodes(), g.num_edges());
    return g;
}

FeatureMatrix load_feature_file(const RunConfig& cfg, Manifest& m, std::optional<std::size_t> rows = std::nullopt) {
    const auto& path = require_path(cfg.features, "features");
    m.add_input(path);
    return load_features(path, rows);
}

PositionalTable load_pe_file(const RunConfig& cfg, Manifest& m, std::size_t rows) {
    const auto& path = require_path(cfg.pe, "pe");
    m.add_input(path);
    return load_matrix(path, MatrixKind::Positional, rows);
}

std::vector<NodeSequence> load_sequence_file(const RunConfig& cfg, Manifest& m, std::size_t num_nodes) {
    const auto& path = require_path(cfg.sequences, "sequences");
    m.add_input(path);
    return load_sequences(path, num_nodes);
}

nn::Checkpoint load_checkpoint_file(const RunConfig& cfg, Manifest& m) {
    const auto& path = require_path(cfg.checkpoint, "checkpoint");
    m.add_input(path);
    return nn::load_checkpoint(path);
}

}  // namespace

std::string config_hash(const RunConfig& cfg) {
    return sha256_hex(cfg.hyperparameters().dump());
}

Manifest::Manifest(std::string command, const RunConfig& cfg)
    : command_(std::move(command)), cfg_(cfg), started_(utc_now()) {}

void Manifest::add_input(const fs::path& p) {
    inputs_.emplace_back(p.string(), sha256_file(p));
}

void Manifest::add_output(const fs::path& p) {
    outputs_.emplace_back(p.string(), sha256_file(p));
}

fs::path Manifest::write() {
    json files_in = json::array(), files_out = json::array();
    for (const auto& [p, h] : inputs_) files_in.push_back({{"path", p}, {"sha256", h}});
    for (const auto& [p, h] : outputs_) files_out.push_back({{"path", p}, {"sha256", h}});
    const fs::path path = fs::path(cfg_.out) / (command_ + ".manifest.json");
    files_out.push_back({{"path", path.string()}, {"sha256", nullptr}});
    const json j{{"command", command_},
                 {"config", cfg_.to_json()},
                 {"config_hash", config_hash(cfg_)},
                 {"rng_seed", cfg_.rng_seed},
                 {"inputs", files_in},
                 {"artifacts", files_out},
                 {"started_at", started_},
                 {"finished_at", utc_now()}};
    write_file_atomic(path, j.dump(2) + "\n");
    return path;
}

std::vector<NodeId> select_seeds(const Graph& g, const std::string& spec, std::uint64_t rng_seed) {
    const std::size_t n = g.num_nodes();
    std::vector<NodeId> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<NodeId>(i);
    if (spec == "all") return all;
    if (spec.rfind("fraction:", 0) == 0) {
        double f = 0;
        try {
            std::size_t used = 0;
            f = std::stod(spec.substr(9), &used);
            if (used != spec.size() - 9) throw std::invalid_argument("trailing characters");
        } catch (const std::logic_error&) {
            throw InputError("bad seed fraction in '" + spec + "'");
        }
        if (!(f > 0.0 && f <= 1.0)) throw InputError("seed fraction must be in (0, 1]");
        const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(n))));
        Rng rng = make_stream(rng_seed, "seeds");
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(all[i], all[pick(rng)]);
        }
        all.resize(k);
        std::sort(all.begin(), all.end());
        return all;
    }
    if (spec.rfind("file:", 0) == 0) {
        const std::string path = spec.substr(5);
        std::ifstream in(path);
        if (!in) throw InputError("cannot open seed file " + path);
        std::vector<NodeId> out;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            std::int64_t ext = 0;
            std::istringstream ls(line);
            if (!(ls >> ext)) throw InputError(path + ":" + std::to_string(lineno) + ": expected a node id");
            const auto id = g.dense_id(ext);
            if (!id) throw InputError(path + ":" + std::to_string(lineno) + ": unknown node " + std::to_string(ext));
            out.push_back(*id);
        }
        if (out.empty()) throw InputError("seed file " + path + " lists no nodes");
        return out;
    }
    throw InputError("bad --seeds value '" + spec + "' (expected all, fraction:F or file:PATH)");
}

void cmd_sample(const RunConfig& cfg) {
    Manifest m("sample", cfg);
    const Graph g = load_graph(cfg, m);
    const auto seeds = select_seeds(g, cfg.seeds, cfg.rng_seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto seqs = sample_sequences(g, seeds, cfg.ppr(), static_cast<unsigned>(cfg.threads));
    spdlog::info("sampled {} sequences in {:.1f} ms", seqs.size(), millis_since(t0));
    const fs::path dir = out_dir(cfg);
    save_sequences(seqs, dir / "sequences.mgts");
    write_node_map(g, dir / "node_map.tsv");
    m.add_output(dir / "sequences.mgts");
    m.add_output(dir / "node_map.tsv");
    m.write();
}

void cmd_encode_pos(const RunConfig& cfg) {
    Manifest m("encode-pos", cfg);
    const Graph g = load_graph(cfg, m);
    const fs::path dir = out_dir(cfg);
    if (cfg.pe_mode == "zero") {
        save_matrix(zero_encoding(g.num_nodes(), cfg.hidden_size), MatrixKind::Positional, dir / "pe.mgtp");
    } else {
        const auto r = train_line(g, cfg.line());
        save_matrix(r.table, MatrixKind::Positional, dir / "pe.mgtp");
        std::ostringstream log;
        log.precision(9);
        log << "epoch,loss\n";
        for (std::size_t e = 0; e < r.loss.size(); ++e) log << e << ',' << r.loss[e] << '\n';
        write_file_atomic(dir / "line_loss.csv", log.str());
        m.add_output(dir / "line_loss.csv");
    }
    m.add_output(dir / "pe.mgtp");
    m.write();
}

void cmd_pretrain(const RunConfig& cfg) {
    Manifest m("pretrain", cfg);
    const FeatureMatrix x = load_feature_file(cfg, m);
    const PositionalTable pe = load_pe_file(cfg, m, x.rows);
    const auto seqs = load_sequence_file(cfg, m, x.rows);
    const nn::ModelConfig model_cfg = cfg.model(x.cols);
    const auto t0 = std::chrono::steady_clock::now();
    auto result = pretrain(model_cfg, cfg.pretrain(), x, pe, seqs);
    spdlog::info("pre-training finished in {:.1f} s", millis_since(t0) / 1000.0);
    const fs::path dir = out_dir(cfg);
    nn::Checkpoint ckpt{nn::with_model_layout(cfg.hyperparameters().dump(), model_cfg), std::move(result.model), {}};
    nn::save_checkpoint(ckpt, dir / "model.mgtc");
    write_file_atomic(dir / "train_log.csv", training_log_csv(result.steps));
    m.add_output(dir / "model.mgtc");
    m.add_output(dir / "train_log.csv");
    m.write();
}

void cmd_embed(const RunConfig& cfg) {
    Manifest m("embed", cfg);
    auto ckpt = load_checkpoint_file(cfg, m);
    const FeatureMatrix x = load_feature_file(cfg, m);
    const PositionalTable pe = load_pe_file(cfg, m, x.rows);
    const auto seqs = load_sequence_file(cfg, m, x.rows);
    const auto t0 = std::chrono::steady_clock::now();
    const auto table = embed(ckpt.model, seqs, x, pe, cfg.augment, static_cast<unsigned>(cfg.threads));
    spdlog::info("embedded {} seeds in {:.1f} ms (augmentation {})", table.ids().size(), millis_since(t0),
                 cfg.augment ? "on" : "off");
    const fs::path dir = out_dir(cfg);
    save_matrix(table.table, MatrixKind::Embedding, dir / "embeddings.mgte");
    std::ostringstream ids;
    for (NodeId v : table.ids()) ids << v << '\n';
    write_file_atomic(dir / "embeddings.ids", ids.str());
    m.add_output(dir / "embeddings.mgte");
    m.add_output(dir / "embeddings.ids");
    m.write();
}

void cmd_probe(const RunConfig& cfg) {
    Manifest m("probe", cfg);
    const Graph g = load_graph(cfg, m);
    const auto& emb_path = require_path(cfg.embeddings, "embeddings");
    m.add_input(emb_path);
    const DenseMatrix emb = load_matrix(emb_path, MatrixKind::Embedding, g.num_nodes());
    std::vector<std::uint8_t> present;
    const fs::path ids_path = ids_sidecar(emb_path);
    if (fs::exists(ids_path)) {
        m.add_input(ids_path);
        present.assign(emb.rows, 0);
        std::ifstream in(ids_path);
        std::uint64_t v = 0;
        while (in >> v) {
            if (v >= emb.rows) throw InputError(ids_path.string() + ": node id " + std::to_string(v) + " out of range");
            present[v] = 1;
        }
    }
    const auto& labels_path = require_path(cfg.labels, "labels");
    m.add_input(labels_path);
    const LabelSet labels = load_labels(labels_path, g);
    const auto t0 = std::chrono::steady_clock::now();
    auto result = linear_probe(emb, present, labels, cfg.probe());
    result.report.timings_ms["probe"] = millis_since(t0);
    spdlog::info("probe test accuracy {:.4f}", result.report.metrics.at("test_accuracy"));
    const fs::path dir = out_dir(cfg);
    write_file_atomic(dir / "probe_report.json", report_json(result.report, cfg).dump(2) + "\n");
    m.add_output(dir / "probe_report.json");
    m.write();
}

void cmd_finetune(const RunConfig& cfg) {
    Manifest m("finetune", cfg);
    const FinetuneConfig fcfg = cfg.finetune();
    const Graph g = load_graph(cfg, m);
    auto ckpt = load_checkpoint_file(cfg, m);
    const FeatureMatrix x = load_feature_file(cfg, m, g.num_nodes());
    const PositionalTable pe = load_pe_file(cfg, m, x.rows);
    const auto seqs = load_sequence_file(cfg, m, x.rows);
    const auto t0 = std::chrono::steady_clock::now();
    FinetuneResult result;
    if (fcfg.head == HeadType::NodeClassification) {
        if (!cfg.edge_labels.empty() && cfg.labels.empty()) {
            throw InputError("node_classification head needs --labels, got --edge_labels");
        }
        const auto& path = require_path(cfg.labels, "labels");
        m.add_input(path);
        result = finetune_node(ckpt.model, seqs, x, pe, load_labels(path, g), fcfg);
    } else {
        if (!cfg.labels.empty() && cfg.edge_labels.empty()) {
            throw InputError("link_prediction head needs --edge_labels, got --labels");
        }
        const auto& path = require_path(cfg.edge_labels, "edge_labels");
        m.add_input(path);
        result = finetune_link(ckpt.model, g, seqs, x, pe, load_edge_labels(path, g), fcfg);
    }
    result.report.timings_ms["finetune"] = millis_since(t0);
    const fs::path dir = out_dir(cfg);
    json config = json::parse(ckpt.config_json);
    config["finetune"] = cfg.hyperparameters();
    nn::Checkpoint out{nn::with_model_layout(config.dump(), result.model.config), std::move(result.model),
                       std::move(result.head)};
    nn::save_checkpoint(out, dir / "finetuned.mgtc");
    write_file_atomic(dir / "finetune_report.json", report_json(result.report, cfg).dump(2) + "\n");
    m.add_output(dir / "finetuned.mgtc");
    m.add_output(dir / "finetune_report.json");
    m.write();
}

void cmd_bench(const RunConfig& cfg) {
    Manifest m("bench", cfg);
    const BenchConfig bcfg = cfg.bench();
    const Graph g = load_graph(cfg, m);
    auto ckpt = load_checkpoint_file(cfg, m);
    const FeatureMatrix x = load_feature_file(cfg, m, g.num_nodes());
    const PositionalTable pe = load_pe_file(cfg, m, x.rows);
    std::optional<LabelSet> labels;
    if (!cfg.labels.empty()) {
        const auto& path = require_path(cfg.labels, "labels");
        m.add_input(path);
        labels = load_labels(path, g);
    }
    const auto report = benchmark_inference(g, x, pe, ckpt.model, bcfg, labels ? &*labels : nullptr);
    const fs::path dir = out_dir(cfg);
    write_file_atomic(dir / "bench.csv", bench_csv(report));
    json modes = json::object();
    for (const auto& [mode, s] : report.summary) {
        json j{{"mean_nodes_touched", s.mean_nodes_touched},
               {"max_nodes_touched", s.max_nodes_touched},
               {"mean_micros", s.mean_micros},
               {"total_micros", s.total_micros}};
        if (s.probe_accuracy) j["probe_test_accuracy"] = *s.probe_accuracy;
        modes[bench_mode_name(mode)] = j;
        spdlog::info("{}: {:.1f} nodes/seed, {:.1f} us/seed", bench_mode_name(mode), s.mean_nodes_touched,
                     s.mean_micros);
    }
    json summary{{"task", "benchmark_inference"},
                 {"seeds", report.seeds.size()},
                 {"modes", modes},
                 {"ppr_sampling_micros", report.ppr_sampling_micros},
                 {"config_hash", config_hash(cfg)},
                 {"rng_seed", cfg.rng_seed}};
    const auto ppr = report.summary.find(BenchMode::PprSequence);
    const auto full = report.summary.find(BenchMode::FullNeighborhood);
    if (ppr != report.summary.end() && full != report.summary.end() && ppr->second.mean_micros > 0) {
        summary["speedup"] = full->second.mean_micros / ppr->second.mean_micros;
    }
    write_file_atomic(dir / "bench_summary.json", summary.dump(2) + "\n");
    m.add_output(dir / "bench.csv");
    m.add_output(dir / "bench_summary.json");
    m.write();
}

void run_command(const std::string& name, const RunConfig& cfg) {
    cfg.validate();
    if (name == "sample") return cmd_sample(cfg);
    if (name == "encode-pos") return cmd_encode_pos(cfg);
    if (name == "pretrain") return cmd_pretrain(cfg);
    if (name == "embed") return cmd_embed(cfg);
    if (name == "probe") return cmd_probe(cfg);
    if (name == "finetune") return cmd_finetune(cfg);
    if (name == "bench") return cmd_bench(cfg);
    throw InputError("unknown command '" + name + "'");
}

}  // namespace mgt
