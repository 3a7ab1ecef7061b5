// Naive, loop-level reference implementations used to check the library.
// These are deliberately independent of igrsr: plain vectors, no Tensor, so
// a bug cannot hide on both sides of a comparison.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace oracle {

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            out[i * n + j] = s;
        }
    return out;
}

inline std::vector<double> softmax_row(const std::vector<double>& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    std::vector<double> out(x.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        denom += out[i];
    }
    for (auto& v : out) v /= denom;
    return out;
}

// Attention with an optional boolean mask (1 = attend), additive -1e9 bias.
inline std::vector<double> attention(const std::vector<double>& q, const std::vector<double>& k,
                                     const std::vector<double>& v,
                                     const std::vector<std::uint8_t>& mask, std::size_t nq,
                                     std::size_t ns, std::size_t dk, std::size_t dv) {
    std::vector<double> out(nq * dv, 0.0);
    for (std::size_t i = 0; i < nq; ++i) {
        std::vector<double> scores(ns);
        for (std::size_t j = 0; j < ns; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < dk; ++p) s += q[i * dk + p] * k[j * dk + p];
            s /= std::sqrt(static_cast<double>(dk));
            if (!mask.empty() && !mask[i * ns + j]) s += -1e9;
            scores[j] = s;
        }
        std::vector<double> w = softmax_row(scores);
        for (std::size_t j = 0; j < ns; ++j)
            for (std::size_t p = 0; p < dv; ++p) out[i * dv + p] += w[j] * v[j * dv + p];
    }
    return out;
}

inline double cross_entropy(const std::vector<double>& logits, const std::vector<int>& targets,
                            std::size_t n, std::size_t vsz, bool mean) {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits[i * vsz];
        for (std::size_t j = 1; j < vsz; ++j) mx = std::max(mx, logits[i * vsz + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < vsz; ++j) denom += std::exp(logits[i * vsz + j] - mx);
        loss += mx + std::log(denom) - logits[i * vsz + static_cast<std::size_t>(targets[i])];
    }
    return mean ? loss / static_cast<double>(n) : loss;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// InfoNCE with cosine similarity, anchors = view 1, in-batch negatives,
// summed over the batch.
inline double infonce(const std::vector<std::vector<double>>& h1,
                      const std::vector<std::vector<double>>& h2, double tau) {
    const std::size_t b = h1.size();
    double loss = 0.0;
    for (std::size_t u = 0; u < b; ++u) {
        std::vector<double> sims(b);
        for (std::size_t v = 0; v < b; ++v) sims[v] = cosine(h1[u], h2[v]) / tau;
        double mx = sims[0];
        for (double s : sims) mx = std::max(mx, s);
        double denom = 0.0;
        for (double s : sims) denom += std::exp(s - mx);
        loss -= sims[u] - mx - std::log(denom);
    }
    return loss;
}

// Rank of the target among candidate scores: 1 + number of candidates that
// strictly beat it, ties going to the smaller item id.
inline std::size_t target_rank(const std::vector<double>& scores, int target,
                               const std::vector<std::uint8_t>& excluded) {
    std::size_t rank = 1;
    const double ts = scores[static_cast<std::size_t>(target)];
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (static_cast<int>(i) == target || (!excluded.empty() && excluded[i])) continue;
        if (scores[i] > ts || (scores[i] == ts && static_cast<int>(i) < target)) ++rank;
    }
    return rank;
}

inline double recall_at_k(const std::vector<std::size_t>& ranks, std::size_t k) {
    double hits = 0.0;
    for (auto r : ranks)
        if (r <= k) hits += 1.0;
    return hits / static_cast<double>(ranks.size());
}

inline double ndcg_at_k(const std::vector<std::size_t>& ranks, std::size_t k) {
    double s = 0.0;
    for (auto r : ranks)
        if (r <= k) s += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    return s / static_cast<double>(ranks.size());
}

}  // namespace oracle
