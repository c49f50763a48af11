#pragma once

#include "mah/codes.hpp"
#include "mah/common.hpp"
#include "mah/data.hpp"
#include "mah/net.hpp"

namespace mah {

// Losses take pre-tanh head outputs H (m x c); tanh is applied inside.
//
// similarity: m x n rows of S for the m queries in H.
// sampled:    m x c database codes of the same queries (rows of B picked by Omega).

// sum_i sum_j (tanh(h_i)^T b_j - c S_ij)^2
double semantic_loss(const Matrix& head_out, const BinaryCodes& codes, const SimilarityMatrix& similarity,
                     std::size_t c);

// sum_i ||b_i - tanh(h_i)||^2
double quantization_loss(const Matrix& head_out, const BinaryCodes& sampled);

// Gradient of (L_s + gamma * L_q) / m with respect to the pre-tanh outputs.
// `omega` gives the database row of each query in H.
Matrix loss_grad_wrt_embeddings(const Matrix& head_out, const BinaryCodes& codes,
                                const SimilarityMatrix& similarity, const IndexList& omega, double gamma,
                                std::size_t c);

struct BranchLoss {
    double semantic = 0.0;
    double quantization = 0.0;
    double combined = 0.0;  // semantic + gamma * quantization
};

struct TotalLoss {
    BranchArray<BranchLoss> branches{};
    double total = 0.0;  // alpha * minus + beta * mid + plus
};

TotalLoss total_loss(const HeadOutputs& heads, const BranchArray<BinaryCodes>& codes,
                     const SimilarityMatrix& similarity, const IndexList& omega, const LossWeights& weights,
                     const CodeLengthGroup& lengths);

// Which head receives which multiplier in the parameter update. `loss`
// follows the total objective (alpha on the short head, one on the long
// head); `swapped` puts alpha on the long head and one on the short head.
enum class HeadWeighting { loss, swapped };

BranchArray<double> head_update_weights(const LossWeights& weights, HeadWeighting scheme);

// Per-branch gradients of the weighted objective w.r.t. head outputs, each
// scaled by `branch_weights`. Branches with zero weight get zero gradients.
HeadOutputs weighted_embedding_grads(const HeadOutputs& heads, const BranchArray<BinaryCodes>& codes,
                                     const SimilarityMatrix& similarity, const IndexList& omega,
                                     const BranchArray<double>& branch_weights, double gamma,
                                     const CodeLengthGroup& lengths);

}  // namespace mah
