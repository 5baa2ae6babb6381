#include <spdlog/spdlog.h>

#include <filesystem>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "mgt/io.hpp"
#include "mgt/synth.hpp"

namespace fs = std::filesystem;

namespace {

// Edge list with each undirected edge once; isolated nodes get a self-loop
// line so that every node id survives the loader's remapping.
void write_edges(const mgt::Graph& g, const fs::path& path) {
    std::ostringstream out;
    out << "# " << g.num_nodes() << " nodes\n";
    for (mgt::NodeId u = 0; u < g.num_nodes(); ++u) {
        const auto nbrs = g.out_neighbors(u);
        if (nbrs.empty()) out << u << ' ' << u << '\n';
        for (mgt::NodeId v : nbrs) {
            if (u <= v) out << u << ' ' << v << '\n';
        }
    }
    mgt::write_file_atomic(path, out.str());
}

void write_labels(const mgt::LabelSet& labels, const fs::path& path) {
    std::ostringstream out;
    out << "node_id,class,split\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << labels.nodes[i] << ',' << labels.classes[i] << ',' << mgt::split_name(labels.splits[i]) << '\n';
    }
    mgt::write_file_atomic(path, out.str());
}

void write_edge_labels(const std::vector<mgt::EdgeLabel>& edges, const fs::path& path) {
    std::ostringstream out;
    out << "u,v,label,split\n";
    for (const auto& e : edges) {
        out << e.u << ',' << e.v << ',' << (e.positive ? 1 : 0) << ',' << mgt::split_name(e.split) << '\n';
    }
    mgt::write_file_atomic(path, out.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic graphs for the mgt toolkit"};
    app.require_subcommand(1);
    std::string out = ".";
    std::uint64_t seed = 0;
    app.add_option("--out", out, "Output directory");
    app.add_option("--rng-seed", seed, "Random seed");

    mgt::SbmConfig sbm;
    bool edge_labels = false;
    auto* sbm_cmd = app.add_subcommand("sbm", "Stochastic block model with block-mean features and labels");
    sbm_cmd->add_option("--nodes", sbm.nodes)->capture_default_str();
    sbm_cmd->add_option("--blocks", sbm.blocks)->capture_default_str();
    sbm_cmd->add_option("--p-in", sbm.p_in)->capture_default_str();
    sbm_cmd->add_option("--p-out", sbm.p_out)->capture_default_str();
    sbm_cmd->add_option("--dim", sbm.feature_dim)->capture_default_str();
    sbm_cmd->add_option("--noise", sbm.noise)->capture_default_str();
    sbm_cmd->add_flag("--edge-labels", edge_labels, "Also write edge_labels.csv for link prediction");
    sbm_cmd->fallthrough();

    std::size_t nodes = 100000, dim = 64;
    double degree = 50.0;
    auto* rnd_cmd = app.add_subcommand("random", "Uniform random graph with Gaussian features");
    rnd_cmd->add_option("--nodes", nodes)->capture_default_str();
    rnd_cmd->add_option("--avg-degree", degree)->capture_default_str();
    rnd_cmd->add_option("--dim", dim)->capture_default_str();
    rnd_cmd->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        fs::create_directories(out);
        mgt::SyntheticGraph data;
        if (sbm_cmd->parsed()) {
            sbm.rng_seed = seed;
            data = mgt::make_sbm(sbm);
            write_labels(data.labels, fs::path(out) / "labels.csv");
            if (edge_labels) {
                write_edge_labels(mgt::make_edge_labels(data.graph, 0.6, 0.2, seed), fs::path(out) / "edge_labels.csv");
            }
        } else {
            data = mgt::make_random_graph(nodes, degree, dim, seed);
        }
        write_edges(data.graph, fs::path(out) / "edges.txt");
        mgt::save_matrix(data.features, mgt::MatrixKind::Features, fs::path(out) / "features.mgtf");
        spdlog::info("wrote {} nodes, {} directed edges to {}", data.graph.num_nodes(), data.graph.num_edges(), out);
        return 0;
    } catch (const mgt::InputError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return 1;
    }
}
