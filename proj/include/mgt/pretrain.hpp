#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mgt/io.hpp"
#include "mgt/nn/adamw.hpp"
#include "mgt/nn/model.hpp"
#include "mgt/ppr.hpp"

namespace mgt {

struct PretrainConfig {
    double mask_rate = 0.85;
    double gamma = 2.0;
    double lambda = 0.1;
    double tau = 0.5;
    std::size_t pair_budget = 64;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    double dropout = 0.2;
    double lr = 3e-4;
    double weight_decay = 0.01;
    bool exempt_seed = false;
    // Per-positive InfoNCE denominators instead of one shared over all pairs.
    bool per_anchor = false;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

// Positions index into a NodeSequence (0 = seed). Both lists are ascending.
struct MaskPlan {
    std::vector<std::uint32_t> masked;
    std::vector<std::uint32_t> unmasked;
};

// l = clamp(floor(rate * len), 1, len - 1) positions masked, drawn uniformly
// without replacement (seed included unless exempt_seed). Throws InputError
// for len < 2.
MaskPlan apply_mask(std::size_t len, double mask_rate, Rng& rng, bool exempt_seed = false);
std::size_t masked_count(std::size_t len, double mask_rate) noexcept;

// Dense, padded tensors for one mini-batch of B sequences.
//   tokens:   feature rows of every sequence position, concatenated in batch
//             order, plus one trailing zero row used for padding.
//   encoder:  B x Lu slots holding the unmasked positions of each sequence.
//   decoder:  B x L slots holding every position of each sequence.
template <typename T>
struct BatchTensors {
    std::size_t batch = 0;
    std::size_t enc_len = 0;
    std::size_t dec_len = 0;
    nn::Tensor<T> tokens;
    // Row of `tokens` for each encoder slot (padding -> zero row).
    std::vector<std::uint32_t> enc_index;
    nn::Tensor<T> enc_pe;
    std::vector<std::uint8_t> enc_valid;
    // Row of concat(H^u, mask_token, zero) for each decoder slot.
    std::vector<std::uint32_t> dec_index;
    nn::Tensor<T> dec_pe;
    std::vector<std::uint8_t> dec_valid;
    // Decoder slots of masked positions with their target features and
    // weights 1 / (B * |S^m_s|).
    std::vector<std::uint32_t> masked_slots;
    nn::Tensor<T> masked_targets;
    std::vector<T> masked_weights;
    // Encoder slots of the unmasked positions, per sequence.
    std::vector<std::vector<std::uint32_t>> unmasked_slots;
    // Row of `tokens` for each masked position (for gradient probes).
    std::vector<std::uint32_t> masked_token_rows;
};

template <typename T>
BatchTensors<T> assemble_batch(std::span<const NodeSequence* const> seqs, std::span<const MaskPlan> plans,
                               const FeatureMatrix& features, const PositionalTable& pe);

// Ordered pairs of encoder slots.
struct PairSample {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> positive;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> negative;
};

// T same-sequence pairs (j != k) and T cross-sequence pairs, each uniform
// with replacement over the eligible ordered pairs. Returns nullopt when
// either set is empty (fewer than two sequences, or no sequence with two
// unmasked positions).
std::optional<PairSample> sample_pairs(const std::vector<std::vector<std::uint32_t>>& unmasked_slots,
                                       std::size_t budget, Rng& rng);

// Mean over masked rows of (1 - cos(x_i, z_i))^gamma, using per-row weights.
template <typename T>
nn::Var feature_recon_loss(nn::Tape<T>& t, nn::Var z_masked, nn::Var x_masked, std::span<const T> weights, T gamma);

// InfoNCE over similarity scores s (T x 1 each). Shared: log sum over all 2T
// pairs minus the mean positive score. Per-anchor: mean over positives of
// log(exp(s_i) + sum_neg exp(s)) - s_i.
template <typename T>
nn::Var infonce(nn::Tape<T>& t, nn::Var s_pos, nn::Var s_neg, bool per_anchor);

// s_{a,b} = cos(f_D2(h_a), f_D2(h_b)) / tau followed by infonce().
template <typename T>
nn::Var structure_loss(nn::Tape<T>& t, nn::Var projected, const PairSample& pairs, T tau, bool per_anchor);

template <typename T>
nn::Var total_loss(nn::Tape<T>& t, nn::Var l1, std::optional<nn::Var> l2, T lambda);

template <typename T>
struct LossParts {
    nn::Var total;
    nn::Var feat;
    std::optional<nn::Var> structure;
    // Tape input holding BatchTensors::tokens.
    nn::Var tokens;
};

// Mask -> encode unmasked -> both decoders -> fused loss, for one batch.
// `pairs` == nullopt skips the structure term.
template <typename T>
LossParts<T> pretrain_loss(nn::Tape<T>& t, nn::ModelParams<T>& model, const BatchTensors<T>& batch,
                           const std::optional<PairSample>& pairs, const PretrainConfig& cfg,
                           const nn::ForwardContext& ctx);

struct EpochLog {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double total = 0;
    double feat = 0;
    double structure = 0;
};

struct PretrainResult {
    nn::ModelParams<float> model;
    // One row per optimizer step.
    std::vector<EpochLog> steps;
    // Mean total loss per epoch.
    std::vector<double> epoch_loss;
};

// Shuffled mini-batches, one AdamW step per batch. Throws std::runtime_error
// with batch diagnostics if a loss turns non-finite.
PretrainResult pretrain(const nn::ModelConfig& model_cfg, const PretrainConfig& cfg, const FeatureMatrix& features,
                        const PositionalTable& pe, const std::vector<NodeSequence>& sequences);

std::string training_log_csv(const std::vector<EpochLog>& steps);

}  // namespace mgt
