#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "igrsr/common.hpp"
#include "igrsr/dataset.hpp"

namespace igrsr {

// ---------------------------------------------------------------------------
// Top-K ranking metrics under full ranking: every item in the vocabulary is a
// candidate except the user's previously interacted items (the target always
// stays in). Per-instance raw ranks are retained for audit.
// ---------------------------------------------------------------------------

struct RankingMetrics {
    std::map<std::size_t, double> recall;  // K -> mean
    std::map<std::size_t, double> ndcg;
    std::vector<std::size_t> ranks;        // rank per evaluated instance, 1-based

    double recall_at(std::size_t k) const { return recall.at(k); }
    double ndcg_at(std::size_t k) const { return ndcg.at(k); }
};

// Rank of `target` among scores[1..item_count]; excluded ids are skipped.
// Ties break toward the smaller item id (determinism over optimism), so an
// equal-scoring smaller id outranks the target.
inline std::size_t target_rank(const std::vector<double>& scores, int target,
                               const std::vector<std::uint8_t>& excluded) {
    const double ts = scores[static_cast<std::size_t>(target)];
    std::size_t rank = 1;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (static_cast<int>(i) == target || excluded[i]) continue;
        if (scores[i] > ts || (scores[i] == ts && static_cast<int>(i) < target)) ++rank;
    }
    return rank;
}

inline RankingMetrics metrics_from_ranks(const std::vector<std::size_t>& ranks,
                                         const std::vector<std::size_t>& ks) {
    RankingMetrics m;
    m.ranks = ranks;
    const double n = static_cast<double>(ranks.size());
    for (std::size_t k : ks) {
        double hits = 0.0, gain = 0.0;
        for (std::size_t r : ranks) {
            if (r <= k) {
                hits += 1.0;
                gain += 1.0 / std::log2(static_cast<double>(r) + 1.0);
            }
        }
        m.recall[k] = n == 0.0 ? 0.0 : hits / n;
        m.ndcg[k] = n == 0.0 ? 0.0 : gain / n;
    }
    return m;
}

// Scores one instance: the callback receives the (truncated) input prefix and
// returns a score per item id, indexed 0..item_count with index 0 unused.
using ScoreFn = std::function<std::vector<double>(const std::vector<int>& prefix, int user)>;

inline RankingMetrics rank_and_score(const ScoreFn& score_fn, const InteractionDataset& ds,
                                     const std::vector<Instance>& instances,
                                     std::size_t n_max,
                                     const std::vector<std::size_t>& ks = {10, 20}) {
    std::vector<std::size_t> ranks;
    ranks.reserve(instances.size());
    std::vector<std::uint8_t> excluded(ds.item_count + 1, 0);
    for (const Instance& inst : instances) {
        const auto& seq = ds.sequences[static_cast<std::size_t>(inst.user)];
        const int target = seq[inst.target_pos];
        const std::size_t len = std::min(inst.target_pos, n_max);
        std::vector<int> prefix(seq.begin() + static_cast<std::ptrdiff_t>(inst.target_pos - len),
                                seq.begin() + static_cast<std::ptrdiff_t>(inst.target_pos));

        std::vector<double> scores = score_fn(prefix, inst.user);
        if (scores.size() != ds.item_count + 1)
            throw DimensionError("score vector must cover the item vocabulary");

        // exclude everything the user interacted with before the target
        std::fill(excluded.begin(), excluded.end(), 0);
        for (std::size_t i = 0; i < inst.target_pos; ++i)
            excluded[static_cast<std::size_t>(seq[i])] = 1;
        excluded[static_cast<std::size_t>(target)] = 0;

        ranks.push_back(target_rank(scores, target, excluded));
    }
    return metrics_from_ranks(ranks, ks);
}

}  // namespace igrsr
