#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mgt/config.hpp"

namespace mgt {

// Per-run provenance: command, config hash, input and output file hashes,
// timestamps. Written atomically to <out>/<command>.manifest.json.
class Manifest {
public:
    Manifest(std::string command, const RunConfig& cfg);

    void add_input(const std::filesystem::path& p);
    void add_output(const std::filesystem::path& p);
    // Writes the manifest and returns its path.
    std::filesystem::path write();

private:
    std::string command_;
    RunConfig cfg_;
    std::string started_;
    std::vector<std::pair<std::string, std::string>> inputs_;
    std::vector<std::pair<std::string, std::string>> outputs_;
};

std::string config_hash(const RunConfig& cfg);

// Seed selection: "all", "fraction:F" (uniform subset, sorted), or
// "file:PATH" (external ids, one per line).
std::vector<NodeId> select_seeds(const Graph& g, const std::string& spec, std::uint64_t rng_seed);

void cmd_sample(const RunConfig& cfg);
void cmd_encode_pos(const RunConfig& cfg);
void cmd_pretrain(const RunConfig& cfg);
void cmd_embed(const RunConfig& cfg);
void cmd_probe(const RunConfig& cfg);
void cmd_finetune(const RunConfig& cfg);
void cmd_bench(const RunConfig& cfg);

// Dispatches by subcommand name; throws InputError for unknown names.
void run_command(const std::string& name, const RunConfig& cfg);

}  // namespace mgt
