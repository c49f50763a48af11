#pragma once

#include "mah/codes.hpp"
#include "mah/common.hpp"
#include "mah/data.hpp"
#include "mah/net.hpp"

#include <map>
#include <optional>

namespace mah {

struct QueryCode {
    Vector bits;  // +-1
    Branch branch = Branch::minus;
};

// Forward through the encoder and the branch's head, then sgn with sgn(0) = +1.
QueryCode encode_query(const Vector& features, const ModelParams& params, Branch branch);
// Batch form of encode_query: one code row per feature row.
BinaryCodes encode_items(const Matrix& features, const ModelParams& params, Branch branch);

// Database indices ordered by Hamming distance, ties by ascending index.
struct RankedList {
    std::vector<std::uint32_t> indices;
    std::vector<std::uint32_t> distances;

    std::size_t size() const { return indices.size(); }
};

std::uint32_t hamming_distance(const std::uint64_t* a, const std::uint64_t* b, std::size_t words);

RankedList hamming_rank(const Vector& query_bits, const PackedCodes& database);
RankedList hamming_rank(const QueryCode& query, const BinaryCodes& database);

// Mean of prefix precision at each relevant rank over the full ranking.
// std::nullopt when no database item is relevant.
std::optional<double> average_precision(const RankedList& ranking, const std::vector<bool>& relevant);

// Fraction of relevant items among the first k of the ranking, 1 <= k <= n.
double precision_at_k(const RankedList& ranking, const std::vector<bool>& relevant, std::size_t k);

struct QueryMetrics {
    std::optional<double> average_precision;
    std::vector<double> precision_at_k;  // aligned with the requested ks
};

struct RetrievalMetrics {
    double map = 0.0;  // over queries with at least one relevant item
    std::size_t n_queries = 0;
    std::size_t n_skipped = 0;  // queries with no relevant item
    std::map<std::size_t, double> precision_at_k;  // averaged over all queries
    std::vector<QueryMetrics> per_query;
};

// Ranks every query code against the database and scores it against label
// overlap. Queries are spread over `threads` workers; results keep query order.
RetrievalMetrics evaluate_codes(const BinaryCodes& query_codes, const BinaryCodes& database,
                                const LabelSet& query_labels, const LabelSet& db_labels,
                                const std::vector<std::size_t>& ks = {}, std::size_t threads = 1);

// Encodes `queries` with the given branch and evaluates them against `database`.
RetrievalMetrics mean_average_precision(const FeatureMatrix& queries, const ModelParams& params, Branch branch,
                                        const BinaryCodes& database, const LabelSet& query_labels,
                                        const LabelSet& db_labels, const std::vector<std::size_t>& ks = {},
                                        std::size_t threads = 1);

struct StorageEntry {
    std::size_t code_bits = 0;
    std::size_t payload_bytes = 0;  // n * ceil(c / 8)
    std::size_t payload_bits = 0;   // n * c, no padding
    double savings = 0.0;           // 1 - c / reference_bits
};

StorageEntry storage_report(std::size_t code_bits, std::size_t n, std::size_t reference_bits = 48);

}  // namespace mah
