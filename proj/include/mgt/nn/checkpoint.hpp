#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mgt/nn/model.hpp"

namespace mgt::nn {

// "MGTC" v1: config JSON (u32 length + UTF-8), parameter count u32, then per
// parameter: name (u16 length + UTF-8), rank u8, dims u32 x rank, f32 payload.
//
// The config JSON must carry in_dim, hidden_size, num_layers, decoder_layers
// and heads so the model layout can be rebuilt. Parameters whose names are
// not part of ModelParams (task heads) round-trip through `extra`.
struct Checkpoint {
    std::string config_json;
    ModelParams<float> model;
    std::vector<Parameter<float>> extra;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint");

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws InputError on bad magic/version, truncation, shape mismatches or
// missing encoder parameters.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Writes the model-layout keys into a JSON config object given as text.
std::string with_model_layout(const std::string& config_json, const ModelConfig& cfg);
ModelConfig model_layout(const std::string& config_json);

}  // namespace mgt::nn
