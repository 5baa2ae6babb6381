#pragma once

#include <span>
#include <vector>

namespace mgt {

// Mann-Whitney U / (n_pos * n_neg) with average ranks for ties. Throws
// InputError if either class is absent or sizes differ.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Macro-average of one-vs-rest AUC over classes present in `labels`.
// `scores` is row-major n x num_classes. Binary case uses column 1.
double roc_auc_multiclass(std::span<const double> scores, std::span<const int> labels, std::size_t num_classes);

struct RankMetrics {
    // rank = 1 + #(neg > pos) + 0.5 * #(neg == pos)
    double rank = 0;
    double hits1 = 0, hits3 = 0, hits5 = 0, hits10 = 0;
    double reciprocal_rank = 0;
};

// hits@k = 1 if ceil(rank) <= k; reciprocal_rank = 1 / rank.
RankMetrics rank_metrics(double pos_score, std::span<const double> neg_scores);

struct RankSummary {
    double hits1 = 0, hits3 = 0, hits5 = 0, hits10 = 0;
    double mrr = 0;
    std::size_t count = 0;
};

RankSummary summarize_ranks(const std::vector<RankMetrics>& ranks);

double accuracy(std::span<const int> predicted, std::span<const int> labels);

}  // namespace mgt
