#include "mgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mgt/common.hpp"

namespace mgt {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw InputError("roc_auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // Positions i..j-1 share the average of ranks i+1..j.
        const double avg = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) {
                pos_rank_sum += avg;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw InputError("roc_auc needs both positive and negative labels");
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double roc_auc_multiclass(std::span<const double> scores, std::span<const int> labels, std::size_t num_classes) {
    const std::size_t n = labels.size();
    if (scores.size() != n * num_classes) throw InputError("roc_auc: score matrix has wrong size");
    if (num_classes == 2) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = scores[i * 2 + 1];
        return roc_auc(col, labels);
    }
    double sum = 0.0;
    std::size_t used = 0;
    std::vector<double> col(n);
    std::vector<int> bin(n);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            col[i] = scores[i * num_classes + c];
            bin[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
            pos += static_cast<std::size_t>(bin[i]);
        }
        if (pos == 0 || pos == n) continue;
        sum += roc_auc(col, bin);
        ++used;
    }
    if (used == 0) throw InputError("roc_auc needs at least two classes present");
    return sum / static_cast<double>(used);
}

RankMetrics rank_metrics(double pos_score, std::span<const double> neg_scores) {
    if (neg_scores.empty()) throw InputError("rank_metrics needs at least one negative score");
    std::size_t greater = 0, equal = 0;
    for (double s : neg_scores) {
        if (s > pos_score) {
            ++greater;
        } else if (s == pos_score) {
            ++equal;
        }
    }
    RankMetrics m;
    m.rank = 1.0 + static_cast<double>(greater) + 0.5 * static_cast<double>(equal);
    const double r = std::ceil(m.rank);
    m.hits1 = r <= 1 ? 1.0 : 0.0;
    m.hits3 = r <= 3 ? 1.0 : 0.0;
    m.hits5 = r <= 5 ? 1.0 : 0.0;
    m.hits10 = r <= 10 ? 1.0 : 0.0;
    m.reciprocal_rank = 1.0 / m.rank;
    return m;
}

RankSummary summarize_ranks(const std::vector<RankMetrics>& ranks) {
    RankSummary s;
    s.count = ranks.size();
    if (ranks.empty()) return s;
    for (const auto& r : ranks) {
        s.hits1 += r.hits1;
        s.hits3 += r.hits3;
        s.hits5 += r.hits5;
        s.hits10 += r.hits10;
        s.mrr += r.reciprocal_rank;
    }
    const double n = static_cast<double>(ranks.size());
    s.hits1 /= n;
    s.hits3 /= n;
    s.hits5 /= n;
    s.hits10 /= n;
    s.mrr /= n;
    return s;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
    if (predicted.size() != labels.size() || labels.empty()) throw InputError("accuracy: size mismatch or empty");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace mgt
