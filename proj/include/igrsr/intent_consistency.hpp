#pragma once

#include <cstdint>
#include <vector>

#include "igrsr/ops.hpp"

namespace igrsr {

// ---------------------------------------------------------------------------
// Intent Consistency Regularization: two independently masked views of the
// projected intents, pushed through the reasoner, agree under an InfoNCE
// objective with in-batch negatives.
// ---------------------------------------------------------------------------

struct IntentViews {
    Tensor first, second;
};

// Bare Hadamard masking, no inverse-keep rescaling. Masks are i.i.d.
// Bernoulli(1 - p_mask) per element (1 = keep), sampled independently for the
// two views. p_mask = 1 is rejected: all-zero intents make deliberation
// vacuous.
inline IntentViews sample_views(const Tensor& t_d, double p_mask, std::uint64_t seed) {
    if (p_mask < 0.0 || p_mask >= 1.0)
        throw ConfigError("p_mask must lie in [0, 1)");
    Rng rng(derive_seed(seed, "icr-masks"));
    Tensor m1 = bernoulli_mask(t_d.shape(), p_mask, rng);
    Tensor m2 = bernoulli_mask(t_d.shape(), p_mask, rng);
    return {mul(t_d, m1), mul(t_d, m2)};
}

// One-sided InfoNCE, anchors = view 1, negatives = the whole mini-batch,
// summed over users:
//   L = -sum_u log( exp(sim(h1_u, h2_u)/tau) / sum_v exp(sim(h1_u, h2_v)/tau) )
// with cosine similarity. Row-normalizing both sides turns this into a
// cross entropy whose targets are the diagonal. B = 1 yields exactly 0.
inline Tensor infonce(const Tensor& h1, const Tensor& h2, double tau) {
    if (tau <= 0.0) throw ConfigError("infonce temperature must be positive");
    detail::check_2d(h1, "infonce");
    detail::check_same_shape(h1, h2, "infonce");
    const std::size_t b = h1.rows();

    for (const Tensor* h : {&h1, &h2}) {
        for (std::size_t i = 0; i < b; ++i) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < h->cols(); ++j)
                norm2 += h->at(i, j) * h->at(i, j);
            if (norm2 <= 0.0)
                throw NumericError("infonce: zero-norm representation in row " +
                                   std::to_string(i));
        }
    }

    Tensor n1 = scale_rows(h1, rsqrt(row_sums(mul(h1, h1))));
    Tensor n2 = scale_rows(h2, rsqrt(row_sums(mul(h2, h2))));
    Tensor sims = mul_scalar(matmul(n1, transpose(n2)), 1.0 / tau);
    std::vector<int> diagonal(b);
    for (std::size_t i = 0; i < b; ++i) diagonal[i] = static_cast<int>(i);
    return cross_entropy_from_logits(sims, diagonal, Reduction::Sum);
}

}  // namespace igrsr
