#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mgt/graph.hpp"
#include "mgt/io.hpp"
#include "mgt/metrics.hpp"
#include "mgt/nn/model.hpp"
#include "mgt/ppr.hpp"

namespace mgt {

// Inference-mode encoding of a batch of sequences (train-mode when ctx says
// so). Token rows come from `tokens_source`; returns the B x hidden seed rows.
nn::Var encode_seeds(nn::Tape<float>& t, nn::ModelParams<float>& model, std::span<const NodeSequence* const> seqs,
                     const FeatureMatrix& tokens_source, const PositionalTable& pe, const nn::ForwardContext& ctx);

// Mask-free f_D1(f_E(Linear(X') + P') + P') for one sequence: len x in_dim.
// Throws InputError if the model has no feature decoder.
nn::Tensor<float> reconstruct_sequence(nn::ModelParams<float>& model, const NodeSequence& seq,
                                       const FeatureMatrix& features, const PositionalTable& pe);

struct AugmentedFeatures {
    FeatureMatrix matrix;
    // 1 where the row was replaced by (x + x_bar) / 2.
    std::vector<std::uint8_t> augmented;
};

// For every sequence seed s: row s = (x_s + x_bar_s) / 2, x_bar_s being the
// seed row of reconstruct_sequence(). Other rows pass through unchanged.
AugmentedFeatures augment_features(nn::ModelParams<float>& model, const std::vector<NodeSequence>& seqs,
                                   const FeatureMatrix& features, const PositionalTable& pe, unsigned threads = 1);

struct EmbeddingTable {
    // N x hidden; rows of nodes without a sequence are zero.
    DenseMatrix table;
    std::vector<std::uint8_t> present;

    std::vector<NodeId> ids() const;
};

// Seed-position row of the last encoder layer for every sequence. With
// `use_augmentation`, token rows come from augment_features().
EmbeddingTable embed(nn::ModelParams<float>& model, const std::vector<NodeSequence>& seqs,
                     const FeatureMatrix& features, const PositionalTable& pe, bool use_augmentation,
                     unsigned threads = 1);

struct EvalReport {
    std::string task;
    std::map<std::string, double> metrics;
    std::map<std::string, double> timings_ms;
};

struct ProbeConfig {
    double lr = 0.01;
    std::size_t max_epochs = 5000;
    std::size_t patience = 100;
};

struct ProbeResult {
    nn::Tensor<float> weight;
    nn::Tensor<float> bias;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    EvalReport report;
};

// Full-batch multinomial logistic regression with Adam on frozen embeddings.
// Early stopping keeps the weights with the best validation accuracy. Throws
// InputError for a single-class training set, missing splits, or labeled
// nodes without an embedding.
ProbeResult linear_probe(const DenseMatrix& embeddings, std::span<const std::uint8_t> present,
                         const LabelSet& labels, const ProbeConfig& cfg);

enum class HeadType { NodeClassification, LinkPrediction };

HeadType parse_head(const std::string& s);
std::string head_name(HeadType h);

struct FinetuneConfig {
    HeadType head = HeadType::NodeClassification;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double dropout = 0.0;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::size_t eval_negatives = 50;
    bool use_augmentation = true;
    std::uint64_t rng_seed = 0;
};

struct FinetuneResult {
    nn::ModelParams<float> model;
    std::vector<nn::Parameter<float>> head;
    EvalReport report;
};

// End-to-end training of the encoder plus a task head. Node head: linear on
// the seed embedding with cross-entropy. Link head: MLP on
// [h_u || h_v || h_u * h_v] with binary cross-entropy over labeled pairs and
// in-batch negatives (u_i, v_{i+1}). Evaluation ranks each test positive
// against `eval_negatives` sampled non-adjacent partners.
FinetuneResult finetune_node(const nn::ModelParams<float>& pretrained, const std::vector<NodeSequence>& seqs,
                             const FeatureMatrix& features, const PositionalTable& pe, const LabelSet& labels,
                             const FinetuneConfig& cfg);
FinetuneResult finetune_link(const nn::ModelParams<float>& pretrained, const Graph& g,
                             const std::vector<NodeSequence>& seqs, const FeatureMatrix& features,
                             const PositionalTable& pe, const std::vector<EdgeLabel>& edges, const FinetuneConfig& cfg);

}  // namespace mgt
