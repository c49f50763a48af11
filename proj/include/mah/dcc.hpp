#pragma once

#include "mah/codes.hpp"
#include "mah/common.hpp"
#include "mah/data.hpp"

#include <functional>

namespace mah {

// Discrete solver for one branch's database codes with the network fixed.
//
// Every function here takes `embeddings` = tanh of the branch head outputs
// for the sampled queries (m x c), with `omega` mapping query i to its
// database row. The subproblem is
//
//   min_B ||U B^T - c S||_F^2 + gamma ||B_omega - U||_F^2,  B in {-1,+1}^{n x c}.

// n x c matrix holding row i of U at database row omega[i], zeros elsewhere.
Matrix scatter_embeddings(const Matrix& embeddings, const IndexList& omega, std::size_t n);

// E = -2 (c S^T U + gamma * scattered). The 0/1 row mask over omega is
// already implied by the zero rows of `scattered`.
Matrix compute_E(const SimilarityMatrix& similarity, const Matrix& embeddings, const Matrix& scattered,
                 double gamma, std::size_t c);

// Closed-form minimiser over column k with the other columns fixed:
//   B_k = -sgn(2 B' (U'^T U_k) + E_k)
// where primes drop column k. Rows whose argument is exactly zero keep their
// previous bit.
Vector update_column(const BinaryCodes& codes, const Matrix& embeddings, const Matrix& E, std::size_t k);

// Called after each column update with the column index and updated codes.
using ColumnObserver = std::function<void(std::size_t, const BinaryCodes&)>;

// One pass of update_column over k = 0..c-1.
BinaryCodes dcc_sweep(BinaryCodes codes, const Matrix& embeddings, const Matrix& E,
                      const ColumnObserver& observer = {});

double objective_value(const BinaryCodes& codes, const Matrix& embeddings, const SimilarityMatrix& similarity,
                       const IndexList& omega, double gamma, std::size_t c);

// Exhaustive global minimiser of objective_value for n * c <= 12.
BinaryCodes brute_force_codes(const Matrix& embeddings, const SimilarityMatrix& similarity,
                              const IndexList& omega, double gamma, std::size_t c, std::size_t n);

struct DccOptions {
    std::size_t sweeps = 1;
    // Stop early once a sweep leaves the codes unchanged.
    bool stop_at_fixed_point = true;
    // Recompute the objective around every column update and throw NumericError
    // if it ever increases.
    bool check_monotone = false;
};

struct DccResult {
    BinaryCodes codes;
    std::size_t sweeps_run = 0;
    bool fixed_point = false;
};

// Builds E for the branch and runs up to `options.sweeps` sweeps.
DccResult solve_codes(BinaryCodes init, const Matrix& embeddings, const SimilarityMatrix& similarity,
                      const IndexList& omega, double gamma, const DccOptions& options = {});

}  // namespace mah
