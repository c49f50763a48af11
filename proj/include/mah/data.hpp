#pragma once

#include "mah/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>

namespace mah {

// Dense n x D matrix of item features, one item per row. Always finite and
// non-empty.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    explicit FeatureMatrix(Matrix values);

    std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }
    const Matrix& values() const { return values_; }

    FeatureMatrix select_rows(const IndexList& indices) const;

private:
    Matrix values_;
};

enum class FeatureFormat { binary, csv };

FeatureMatrix load_features(const std::filesystem::path& path, FeatureFormat format);
// Binary output stores 32-bit floats, so values are rounded to float.
void save_features(const FeatureMatrix& features, const std::filesystem::path& path,
                   FeatureFormat format);
// Picks the format from the extension: ".csv" is text, anything else MAHF.
FeatureFormat format_for_path(const std::filesystem::path& path);

// Per-item labels. Each item holds a sorted list of concept ids; single-label
// sets hold exactly one id per item.
class LabelSet {
public:
    enum class Kind { single, multi };

    static LabelSet single(std::vector<std::uint32_t> class_ids);
    // `num_concepts` of zero leaves the vocabulary size unspecified.
    static LabelSet multi(std::vector<std::vector<std::uint32_t>> concept_ids,
                          std::uint32_t num_concepts = 0);
    // Builds a multi-label set from 0/1 rows of equal length L.
    static LabelSet from_multi_hot(const std::vector<std::vector<std::uint8_t>>& rows);

    Kind kind() const { return kind_; }
    std::size_t size() const { return items_.size(); }
    std::uint32_t num_concepts() const { return num_concepts_; }
    const std::vector<std::uint32_t>& operator[](std::size_t i) const { return items_[i]; }

    // True iff items share at least one concept id.
    static bool share_label(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b);

    LabelSet select(const IndexList& indices) const;

private:
    Kind kind_ = Kind::single;
    std::uint32_t num_concepts_ = 0;
    std::vector<std::vector<std::uint32_t>> items_;
};

LabelSet load_labels(const std::filesystem::path& path);
void save_labels(const LabelSet& labels, const std::filesystem::path& path);

// m x n matrix with entries exactly -1 or +1.
class SimilarityMatrix {
public:
    SimilarityMatrix() = default;
    explicit SimilarityMatrix(Matrix values);

    std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }
    const Matrix& values() const { return values_; }
    double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }

    SimilarityMatrix select_rows(const IndexList& rows) const;

private:
    Matrix values_;
};

SimilarityMatrix build_similarity(const LabelSet& query_labels, const LabelSet& db_labels);

// m distinct indices drawn uniformly without replacement from [0, n).
IndexList sample_query_set(std::size_t n, std::size_t m, std::uint64_t seed);

struct SynthSpec {
    std::size_t num_classes = 10;
    std::size_t per_class = 100;
    std::size_t dim = 16;
    double spread = 0.1;
    std::uint64_t seed = 0;
};

// Class centers on the unit sphere, items = center + N(0, spread^2 I).
// Items are grouped by class: class k occupies rows [k*per_class, (k+1)*per_class).
std::pair<FeatureMatrix, LabelSet> synth_clusters(const SynthSpec& spec);

// Fresh items around the same centers as synth_clusters(spec), drawn from an
// independent noise stream keyed by `sample_seed`.
std::pair<FeatureMatrix, LabelSet> synth_samples(const SynthSpec& spec, std::size_t per_class,
                                                 std::uint64_t sample_seed);

Matrix synth_centers(const SynthSpec& spec);

}  // namespace mah
