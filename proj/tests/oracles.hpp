#pragma once

// Reference implementations used only by tests. Everything here is written
// with explicit loops and shares no code path with the library routines it
// checks, except for plain data types.

#include "mah/codes.hpp"
#include "mah/data.hpp"
#include "mah/net.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

namespace oracle {

using mah::Matrix;
using mah::Vector;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> d(-scale, scale);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = d(rng);
    return m;
}

inline Matrix random_signs(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.5);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = coin(rng) ? 1.0 : -1.0;
    return m;
}

inline mah::IndexList random_omega(std::size_t n, std::size_t m, std::mt19937_64& rng) {
    mah::IndexList all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(m);
    return all;
}

// sum_i sum_j (u_i . b_j - c S_ij)^2 with u = tanh(h) when apply_tanh.
inline double semantic(const Matrix& h, const Matrix& b, const Matrix& s, double c, bool apply_tanh = true) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            double dot = 0.0;
            for (Eigen::Index k = 0; k < h.cols(); ++k) {
                const double u = apply_tanh ? std::tanh(h(i, k)) : h(i, k);
                dot += u * b(j, k);
            }
            const double r = dot - c * s(i, j);
            total += r * r;
        }
    }
    return total;
}

// sum_i ||b_{omega_i} - u_i||^2
inline double quantization(const Matrix& h, const Matrix& b, const mah::IndexList& omega, bool apply_tanh = true) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        for (Eigen::Index k = 0; k < h.cols(); ++k) {
            const double u = apply_tanh ? std::tanh(h(i, k)) : h(i, k);
            const double r = b(static_cast<Eigen::Index>(omega[static_cast<std::size_t>(i)]), k) - u;
            total += r * r;
        }
    }
    return total;
}

// Code subproblem objective with embeddings u taken as given.
inline double code_objective(const Matrix& b, const Matrix& u, const Matrix& s, const mah::IndexList& omega,
                             double gamma, double c) {
    return semantic(u, b, s, c, false) + gamma * quantization(u, b, omega, false);
}

// Loop-based forward pass: returns head outputs for one branch set.
struct NaiveHeads {
    Matrix minus, mid, plus;
};

inline Matrix naive_affine(const mah::AffineLayer& layer, const Matrix& x) {
    Matrix y(x.rows(), layer.weight.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index o = 0; o < layer.weight.rows(); ++o) {
            double acc = layer.bias(o);
            for (Eigen::Index k = 0; k < x.cols(); ++k) acc += layer.weight(o, k) * x(i, k);
            y(i, o) = acc;
        }
    }
    return y;
}

inline NaiveHeads naive_forward(const mah::ModelParams& p, const Matrix& x) {
    Matrix h = x;
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
        h = naive_affine(p.encoder[l], h);
        if (l + 1 < p.encoder.size()) {
            for (Eigen::Index i = 0; i < h.rows(); ++i)
                for (Eigen::Index j = 0; j < h.cols(); ++j) h(i, j) = std::tanh(h(i, j));
        }
    }
    NaiveHeads out;
    out.plus = naive_affine(p.head(mah::Branch::plus), h);
    if (p.variant == mah::HeadVariant::flat) {
        out.mid = naive_affine(p.head(mah::Branch::mid), h);
        out.minus = naive_affine(p.head(mah::Branch::minus), h);
    } else {
        out.mid = naive_affine(p.head(mah::Branch::mid), out.plus);
        out.minus = naive_affine(p.head(mah::Branch::minus), out.mid);
    }
    return out;
}

struct LossSetup {
    std::array<Matrix, 3> codes;  // minus, mid, plus database codes
    Matrix similarity;            // m x n
    mah::IndexList omega;         // database row of each batch item
    std::array<double, 3> weights{1.0, 1.0, 1.0};
    double gamma = 1.0;
};

// sum_b w_b (L_s + gamma L_q) / m evaluated by loops.
inline double weighted_loss(const mah::ModelParams& p, const Matrix& x, const LossSetup& s) {
    const NaiveHeads h = naive_forward(p, x);
    const Matrix* outs[3] = {&h.minus, &h.mid, &h.plus};
    double total = 0.0;
    for (int b = 0; b < 3; ++b) {
        const double c = static_cast<double>(outs[b]->cols());
        total += s.weights[b] * (semantic(*outs[b], s.codes[b], s.similarity, c) +
                                 s.gamma * quantization(*outs[b], s.codes[b], s.omega));
    }
    return total / static_cast<double>(x.rows());
}

// Central differences of `f` at every entry of every tensor in `p`, written
// into a ModelParams of the same shapes.
template <typename F>
mah::ModelParams finite_difference(mah::ModelParams p, F&& f, double step = 1e-5) {
    mah::ModelParams grads = p.zeros_like();
    std::vector<Matrix*> gw;
    std::vector<Vector*> gb;
    grads.for_each_tensor([&](const std::string&, Matrix& m) { gw.push_back(&m); },
                          [&](const std::string&, Vector& v) { gb.push_back(&v); });
    std::vector<Matrix*> pw;
    std::vector<Vector*> pb;
    p.for_each_tensor([&](const std::string&, Matrix& m) { pw.push_back(&m); },
                      [&](const std::string&, Vector& v) { pb.push_back(&v); });
    for (std::size_t t = 0; t < pw.size(); ++t) {
        Matrix& w = *pw[t];
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                const double keep = w(i, j);
                w(i, j) = keep + step;
                const double up = f(p);
                w(i, j) = keep - step;
                const double down = f(p);
                w(i, j) = keep;
                (*gw[t])(i, j) = (up - down) / (2.0 * step);
            }
        }
        Vector& b = *pb[t];
        for (Eigen::Index i = 0; i < b.size(); ++i) {
            const double keep = b(i);
            b(i) = keep + step;
            const double up = f(p);
            b(i) = keep - step;
            const double down = f(p);
            b(i) = keep;
            (*gb[t])(i) = (up - down) / (2.0 * step);
        }
    }
    return grads;
}

// Largest entrywise |a - b| / max(|a|, |b|, floor) over all tensors.
inline double max_relative_error(const mah::ModelParams& a, const mah::ModelParams& b, double floor = 1e-6) {
    std::vector<const Matrix*> aw, bw;
    std::vector<const Vector*> ab, bb;
    a.for_each_tensor([&](const std::string&, const Matrix& m) { aw.push_back(&m); },
                      [&](const std::string&, const Vector& v) { ab.push_back(&v); });
    b.for_each_tensor([&](const std::string&, const Matrix& m) { bw.push_back(&m); },
                      [&](const std::string&, const Vector& v) { bb.push_back(&v); });
    double worst = 0.0;
    auto upd = [&](double x, double y) {
        const double denom = std::max({std::abs(x), std::abs(y), floor});
        worst = std::max(worst, std::abs(x - y) / denom);
    };
    for (std::size_t t = 0; t < aw.size(); ++t)
        for (Eigen::Index i = 0; i < aw[t]->size(); ++i) upd(aw[t]->data()[i], bw[t]->data()[i]);
    for (std::size_t t = 0; t < ab.size(); ++t)
        for (Eigen::Index i = 0; i < ab[t]->size(); ++i) upd((*ab[t])(i), (*bb[t])(i));
    return worst;
}

// Minimum of the code objective over all 2^n settings of column k.
inline double column_minimum(Matrix b, std::size_t k, const Matrix& u, const Matrix& s, const mah::IndexList& omega,
                             double gamma, double c) {
    const auto n = static_cast<std::size_t>(b.rows());
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        for (std::size_t i = 0; i < n; ++i)
            b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = ((mask >> i) & 1u) ? 1.0 : -1.0;
        best = std::min(best, code_objective(b, u, s, omega, gamma, c));
    }
    return best;
}

inline int hamming_bits(const Vector& a, const Vector& b) {
    int d = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) d += (a(i) != b(i)) ? 1 : 0;
    return d;
}

// AP by brute force: for every prefix length r, precision of that prefix,
// counted only where rank r is relevant, averaged over relevant items.
inline std::optional<double> average_precision(const std::vector<std::uint32_t>& order, const std::vector<bool>& rel) {
    std::size_t total_relevant = 0;
    for (bool r : rel) total_relevant += r ? 1 : 0;
    if (total_relevant == 0) return std::nullopt;
    double sum = 0.0;
    for (std::size_t r = 1; r <= order.size(); ++r) {
        if (!rel[order[r - 1]]) continue;
        std::size_t hits = 0;
        for (std::size_t q = 0; q < r; ++q) hits += rel[order[q]] ? 1 : 0;
        sum += static_cast<double>(hits) / static_cast<double>(r);
    }
    return sum / static_cast<double>(total_relevant);
}

inline double precision_at(const std::vector<std::uint32_t>& order, const std::vector<bool>& rel, std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < k; ++r) hits += rel[order[r]] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace oracle
