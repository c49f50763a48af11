#include "mah/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <thread>

namespace mah {

namespace {

Matrix head_output(const Matrix& features, const ModelParams& params, Branch branch) {
    const ForwardPass pass = encoder_forward(params, features);
    return heads_forward(params, pass.latent())[branch];
}

}  // namespace

QueryCode encode_query(const Vector& features, const ModelParams& params, Branch branch) {
    const Matrix row = features.transpose();
    const BinaryCodes codes = BinaryCodes::sign_of(head_output(row, params, branch));
    return QueryCode{codes.values().row(0).transpose(), branch};
}

BinaryCodes encode_items(const Matrix& features, const ModelParams& params, Branch branch) {
    return BinaryCodes::sign_of(head_output(features, params, branch));
}

std::uint32_t hamming_distance(const std::uint64_t* a, const std::uint64_t* b, std::size_t words) {
    std::uint32_t d = 0;
    for (std::size_t w = 0; w < words; ++w) d += static_cast<std::uint32_t>(std::popcount(a[w] ^ b[w]));
    return d;
}

RankedList hamming_rank(const Vector& query_bits, const PackedCodes& database) {
    if (static_cast<std::size_t>(query_bits.size()) != database.bits()) {
        throw ValidationError("query length " + std::to_string(query_bits.size()) +
                              " does not match database code length " + std::to_string(database.bits()));
    }
    const PackedCodes query(BinaryCodes(query_bits.transpose()));
    const std::size_t n = database.rows();
    const std::size_t c = database.bits();
    std::vector<std::uint32_t> dist(n);
    // Counting sort by distance keeps ascending index order within a bucket.
    std::vector<std::uint32_t> bucket(c + 2, 0);
    for (std::size_t j = 0; j < n; ++j) {
        dist[j] = hamming_distance(query.row(0), database.row(j), database.words_per_row());
        ++bucket[dist[j] + 1];
    }
    for (std::size_t d = 1; d < bucket.size(); ++d) bucket[d] += bucket[d - 1];
    RankedList out;
    out.indices.resize(n);
    out.distances.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::uint32_t slot = bucket[dist[j]]++;
        out.indices[slot] = static_cast<std::uint32_t>(j);
        out.distances[slot] = dist[j];
    }
    return out;
}

RankedList hamming_rank(const QueryCode& query, const BinaryCodes& database) {
    return hamming_rank(query.bits, PackedCodes(database));
}

std::optional<double> average_precision(const RankedList& ranking, const std::vector<bool>& relevant) {
    if (relevant.size() != ranking.size()) {
        throw ValidationError("relevance flags must cover every database item");
    }
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ranking.size(); ++r) {
        if (relevant[ranking.indices[r]]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    }
    if (hits == 0) return std::nullopt;
    return sum / static_cast<double>(hits);
}

double precision_at_k(const RankedList& ranking, const std::vector<bool>& relevant, std::size_t k) {
    if (k < 1 || k > ranking.size()) {
        throw ValidationError("precision@k: k=" + std::to_string(k) + " out of range [1, " +
                              std::to_string(ranking.size()) + "]");
    }
    if (relevant.size() != ranking.size()) throw ValidationError("relevance flags must cover every database item");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < k; ++r) hits += relevant[ranking.indices[r]] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(k);
}

RetrievalMetrics evaluate_codes(const BinaryCodes& query_codes, const BinaryCodes& database,
                                const LabelSet& query_labels, const LabelSet& db_labels,
                                const std::vector<std::size_t>& ks, std::size_t threads) {
    if (query_codes.cols() != database.cols()) {
        throw ValidationError("query code length " + std::to_string(query_codes.cols()) +
                              " does not match database code length " + std::to_string(database.cols()));
    }
    if (query_labels.size() != query_codes.rows() || db_labels.size() != database.rows()) {
        throw ValidationError("label count does not match code count");
    }
    for (auto k : ks) {
        if (k < 1 || k > database.rows()) {
            throw ValidationError("precision@k: k=" + std::to_string(k) + " exceeds database size " +
                                  std::to_string(database.rows()));
        }
    }
    const PackedCodes packed(database);
    const std::size_t nq = query_codes.rows();
    std::vector<QueryMetrics> results(nq);

    auto work = [&](std::size_t begin, std::size_t end) {
        std::vector<bool> relevant(database.rows());
        for (std::size_t q = begin; q < end; ++q) {
            const RankedList ranking =
                hamming_rank(query_codes.values().row(static_cast<Eigen::Index>(q)).transpose(), packed);
            for (std::size_t j = 0; j < database.rows(); ++j) {
                relevant[j] = LabelSet::share_label(query_labels[q], db_labels[j]);
            }
            results[q].average_precision = average_precision(ranking, relevant);
            for (auto k : ks) results[q].precision_at_k.push_back(precision_at_k(ranking, relevant, k));
        }
    };

    threads = std::max<std::size_t>(1, std::min(threads, nq));
    if (threads == 1) {
        work(0, nq);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (nq + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t b = t * chunk;
            const std::size_t e = std::min(nq, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }

    RetrievalMetrics out;
    out.n_queries = nq;
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& r : results) {
        if (r.average_precision) {
            sum += *r.average_precision;
            ++defined;
        }
    }
    out.n_skipped = nq - defined;
    if (defined == 0) throw ValidationError("MAP undefined: no query has a relevant database item");
    out.map = sum / static_cast<double>(defined);
    for (std::size_t i = 0; i < ks.size(); ++i) {
        double s = 0.0;
        for (const auto& r : results) s += r.precision_at_k[i];
        out.precision_at_k[ks[i]] = s / static_cast<double>(nq);
    }
    out.per_query = std::move(results);
    return out;
}

RetrievalMetrics mean_average_precision(const FeatureMatrix& queries, const ModelParams& params, Branch branch,
                                        const BinaryCodes& database, const LabelSet& query_labels,
                                        const LabelSet& db_labels, const std::vector<std::size_t>& ks,
                                        std::size_t threads) {
    const BinaryCodes codes = encode_items(queries.values(), params, branch);
    return evaluate_codes(codes, database, query_labels, db_labels, ks, threads);
}

StorageEntry storage_report(std::size_t code_bits, std::size_t n, std::size_t reference_bits) {
    if (reference_bits == 0) throw ValidationError("reference code length must be >= 1");
    StorageEntry e;
    e.code_bits = code_bits;
    e.payload_bytes = packed_payload_bytes(n, code_bits);
    e.payload_bits = n * code_bits;
    e.savings = 1.0 - static_cast<double>(code_bits) / static_cast<double>(reference_bits);
    return e;
}

}  // namespace mah
