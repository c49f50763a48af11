#include "mah/objective.hpp"

namespace mah {

namespace {

void check_shapes(const Matrix& head_out, const BinaryCodes& codes, const SimilarityMatrix& similarity,
                  std::size_t c) {
    if (static_cast<std::size_t>(head_out.cols()) != c || codes.cols() != c) {
        throw ValidationError("shape mismatch: code length " + std::to_string(c) + " vs head width " +
                              std::to_string(head_out.cols()) + " and code width " + std::to_string(codes.cols()));
    }
    if (similarity.rows() != static_cast<std::size_t>(head_out.rows()) || similarity.cols() != codes.rows()) {
        throw ValidationError("shape mismatch: similarity is " + std::to_string(similarity.rows()) + "x" +
                              std::to_string(similarity.cols()) + ", expected " + std::to_string(head_out.rows()) +
                              "x" + std::to_string(codes.rows()));
    }
}

}  // namespace

double semantic_loss(const Matrix& head_out, const BinaryCodes& codes, const SimilarityMatrix& similarity,
                     std::size_t c) {
    check_shapes(head_out, codes, similarity, c);
    const Matrix u = head_out.array().tanh().matrix();
    const Matrix residual = u * codes.values().transpose() - static_cast<double>(c) * similarity.values();
    return residual.squaredNorm();
}

double quantization_loss(const Matrix& head_out, const BinaryCodes& sampled) {
    if (head_out.rows() != sampled.values().rows() || head_out.cols() != sampled.values().cols()) {
        throw ValidationError("shape mismatch between head outputs and sampled codes");
    }
    return (sampled.values() - head_out.array().tanh().matrix()).squaredNorm();
}

Matrix loss_grad_wrt_embeddings(const Matrix& head_out, const BinaryCodes& codes,
                                const SimilarityMatrix& similarity, const IndexList& omega, double gamma,
                                std::size_t c) {
    check_shapes(head_out, codes, similarity, c);
    if (omega.size() != static_cast<std::size_t>(head_out.rows())) {
        throw ValidationError("shape mismatch: omega has " + std::to_string(omega.size()) + " entries for " +
                              std::to_string(head_out.rows()) + " queries");
    }
    const Matrix u = head_out.array().tanh().matrix();
    const Matrix& b = codes.values();
    const Matrix residual = u * b.transpose() - static_cast<double>(c) * similarity.values();
    Matrix d_u = 2.0 * residual * b;
    if (gamma != 0.0) {
        const Matrix sampled = codes.select_rows(omega).values();
        d_u += 2.0 * gamma * (u - sampled);
    }
    const double inv_m = head_out.rows() ? 1.0 / static_cast<double>(head_out.rows()) : 0.0;
    return (d_u.array() * (1.0 - u.array().square()) * inv_m).matrix();
}

TotalLoss total_loss(const HeadOutputs& heads, const BranchArray<BinaryCodes>& codes,
                     const SimilarityMatrix& similarity, const IndexList& omega, const LossWeights& weights,
                     const CodeLengthGroup& lengths) {
    TotalLoss out;
    const auto w = weights.branch_weights();
    for (Branch b : kAllBranches) {
        const auto& code = codes[index_of(b)];
        auto& loss = out.branches[index_of(b)];
        loss.semantic = semantic_loss(heads[b], code, similarity, lengths[b]);
        loss.quantization = quantization_loss(heads[b], code.select_rows(omega));
        loss.combined = loss.semantic + weights.gamma * loss.quantization;
        out.total += w[index_of(b)] * loss.combined;
    }
    return out;
}

BranchArray<double> head_update_weights(const LossWeights& weights, HeadWeighting scheme) {
    if (scheme == HeadWeighting::swapped) return {1.0, weights.beta, weights.alpha};
    return weights.branch_weights();
}

HeadOutputs weighted_embedding_grads(const HeadOutputs& heads, const BranchArray<BinaryCodes>& codes,
                                     const SimilarityMatrix& similarity, const IndexList& omega,
                                     const BranchArray<double>& branch_weights, double gamma,
                                     const CodeLengthGroup& lengths) {
    HeadOutputs grads;
    for (Branch b : kAllBranches) {
        const double w = branch_weights[index_of(b)];
        if (w == 0.0) {
            grads[b] = Matrix::Zero(heads[b].rows(), heads[b].cols());
            continue;
        }
        grads[b] = w * loss_grad_wrt_embeddings(heads[b], codes[index_of(b)], similarity, omega, gamma, lengths[b]);
    }
    return grads;
}

}  // namespace mah
