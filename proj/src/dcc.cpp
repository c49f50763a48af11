#include "mah/dcc.hpp"

#include <limits>
#include <sstream>

namespace mah {

namespace {

void check_omega(const IndexList& omega, std::size_t m, std::size_t n) {
    if (omega.size() != m) {
        throw ValidationError("omega has " + std::to_string(omega.size()) + " entries, expected " + std::to_string(m));
    }
    for (auto i : omega) {
        if (i >= n) throw ValidationError("omega index " + std::to_string(i) + " out of range for n=" + std::to_string(n));
    }
}

// Column update given the precomputed Gram matrix U^T U.
Vector update_column_with_gram(const Matrix& codes, const Matrix& gram, const Matrix& E, std::size_t k) {
    const auto kk = static_cast<Eigen::Index>(k);
    Vector coupling = gram.col(kk);
    coupling(kk) = 0.0;
    const Vector arg = 2.0 * (codes * coupling) + E.col(kk);
    Vector column = codes.col(kk);
    for (Eigen::Index i = 0; i < arg.size(); ++i) {
        if (arg(i) > 0.0) {
            column(i) = -1.0;
        } else if (arg(i) < 0.0) {
            column(i) = 1.0;
        }
    }
    return column;
}

}  // namespace

Matrix scatter_embeddings(const Matrix& embeddings, const IndexList& omega, std::size_t n) {
    check_omega(omega, static_cast<std::size_t>(embeddings.rows()), n);
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n), embeddings.cols());
    for (std::size_t i = 0; i < omega.size(); ++i) {
        out.row(static_cast<Eigen::Index>(omega[i])) = embeddings.row(static_cast<Eigen::Index>(i));
    }
    return out;
}

Matrix compute_E(const SimilarityMatrix& similarity, const Matrix& embeddings, const Matrix& scattered,
                 double gamma, std::size_t c) {
    if (similarity.rows() != static_cast<std::size_t>(embeddings.rows()) ||
        static_cast<std::size_t>(embeddings.cols()) != c ||
        scattered.rows() != static_cast<Eigen::Index>(similarity.cols()) || scattered.cols() != embeddings.cols()) {
        throw ValidationError("compute_E: shape mismatch");
    }
    return -2.0 * (static_cast<double>(c) * similarity.values().transpose() * embeddings + gamma * scattered);
}

Vector update_column(const BinaryCodes& codes, const Matrix& embeddings, const Matrix& E, std::size_t k) {
    if (k >= codes.cols() || static_cast<std::size_t>(embeddings.cols()) != codes.cols() ||
        E.rows() != static_cast<Eigen::Index>(codes.rows()) || E.cols() != embeddings.cols()) {
        throw ValidationError("update_column: shape mismatch");
    }
    const Matrix gram = embeddings.transpose() * embeddings;
    return update_column_with_gram(codes.values(), gram, E, k);
}

BinaryCodes dcc_sweep(BinaryCodes codes, const Matrix& embeddings, const Matrix& E, const ColumnObserver& observer) {
    if (static_cast<std::size_t>(embeddings.cols()) != codes.cols() ||
        E.rows() != static_cast<Eigen::Index>(codes.rows()) || E.cols() != embeddings.cols()) {
        throw ValidationError("dcc_sweep: shape mismatch");
    }
    const Matrix gram = embeddings.transpose() * embeddings;
    for (std::size_t k = 0; k < codes.cols(); ++k) {
        codes.set_column(k, update_column_with_gram(codes.values(), gram, E, k));
        if (observer) observer(k, codes);
    }
    return codes;
}

double objective_value(const BinaryCodes& codes, const Matrix& embeddings, const SimilarityMatrix& similarity,
                       const IndexList& omega, double gamma, std::size_t c) {
    if (static_cast<std::size_t>(embeddings.cols()) != c || codes.cols() != c ||
        similarity.rows() != static_cast<std::size_t>(embeddings.rows()) || similarity.cols() != codes.rows()) {
        throw ValidationError("objective_value: shape mismatch");
    }
    check_omega(omega, static_cast<std::size_t>(embeddings.rows()), codes.rows());
    const Matrix fit = embeddings * codes.values().transpose() - static_cast<double>(c) * similarity.values();
    const Matrix quant = codes.select_rows(omega).values() - embeddings;
    return fit.squaredNorm() + gamma * quant.squaredNorm();
}

BinaryCodes brute_force_codes(const Matrix& embeddings, const SimilarityMatrix& similarity, const IndexList& omega,
                              double gamma, std::size_t c, std::size_t n) {
    const std::size_t bits = n * c;
    if (n == 0 || c == 0 || bits > 12) {
        throw ValidationError("brute_force_codes: instance too large (n*c=" + std::to_string(bits) + ", limit 12)");
    }
    Matrix candidate(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
    Matrix best;
    double best_value = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < (1u << bits); ++mask) {
        for (std::size_t t = 0; t < bits; ++t) {
            candidate(static_cast<Eigen::Index>(t / c), static_cast<Eigen::Index>(t % c)) = ((mask >> t) & 1u) ? 1.0 : -1.0;
        }
        const BinaryCodes codes(candidate);
        const double v = objective_value(codes, embeddings, similarity, omega, gamma, c);
        if (v < best_value) {
            best_value = v;
            best = candidate;
        }
    }
    return BinaryCodes(std::move(best));
}

DccResult solve_codes(BinaryCodes init, const Matrix& embeddings, const SimilarityMatrix& similarity,
                      const IndexList& omega, double gamma, const DccOptions& options) {
    const std::size_t n = init.rows();
    const auto c = static_cast<std::size_t>(embeddings.cols());
    const Matrix scattered = scatter_embeddings(embeddings, omega, n);
    const Matrix E = compute_E(similarity, embeddings, scattered, gamma, c);

    ColumnObserver observer;
    double previous = 0.0;
    if (options.check_monotone) {
        previous = objective_value(init, embeddings, similarity, omega, gamma, c);
        observer = [&](std::size_t k, const BinaryCodes& codes) {
            const double now = objective_value(codes, embeddings, similarity, omega, gamma, c);
            if (now > previous) {
                std::ostringstream os;
                os.precision(17);
                os << "DCC objective increased at column " << k << ": " << previous << " -> " << now;
                throw NumericError(os.str());
            }
            previous = now;
        };
    }

    DccResult result{std::move(init), 0, false};
    for (std::size_t s = 0; s < options.sweeps; ++s) {
        BinaryCodes next = dcc_sweep(result.codes, embeddings, E, observer);
        ++result.sweeps_run;
        const bool unchanged = next == result.codes;
        result.codes = std::move(next);
        if (unchanged) {
            result.fixed_point = true;
            if (options.stop_at_fixed_point) break;
        }
    }
    return result;
}

}  // namespace mah
