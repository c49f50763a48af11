#include "mah/data.hpp"

#include "byte_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace mah {

namespace {

constexpr std::string_view kFeatureMagic = "MAHF";

std::string where(std::size_t row, std::size_t col) {
    return "row " + std::to_string(row) + ", col " + std::to_string(col);
}

void check_finite(const Matrix& values) {
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            if (!std::isfinite(values(i, j))) {
                throw FormatError("non-finite feature value at " +
                                  where(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
            }
        }
    }
}

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

double parse_double(std::string_view token, std::size_t row, std::size_t col) {
    token = trim(token);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw FormatError("cannot parse '" + std::string(token) + "' as a number at " + where(row, col));
    }
    if (!std::isfinite(v)) throw FormatError("non-finite feature value at " + where(row, col));
    return v;
}

FeatureMatrix load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "' for reading");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<double> row;
        std::string_view rest = line;
        std::size_t col = 0;
        while (true) {
            auto comma = rest.find(',');
            row.push_back(parse_double(rest.substr(0, comma), rows.size(), col++));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw FormatError("dimension mismatch at row " + std::to_string(rows.size()) + ": expected " +
                              std::to_string(rows.front().size()) + " columns, got " +
                              std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError("empty dataset");
    Matrix values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return FeatureMatrix(std::move(values));
}

FeatureMatrix load_binary(const std::string& path) {
    const std::string bytes = detail::read_file(path);
    detail::ByteReader reader(bytes);
    if (reader.remaining() < 12 || reader.get_bytes(4) != kFeatureMagic) {
        throw FormatError("malformed header in '" + path + "': missing MAHF magic");
    }
    const std::uint32_t n = reader.get_u32();
    const std::uint32_t d = reader.get_u32();
    if (n == 0 || d == 0) throw FormatError("empty dataset");
    const std::uint64_t expected = static_cast<std::uint64_t>(n) * d * 4;
    if (reader.remaining() != expected) {
        throw FormatError("dimension mismatch in '" + path + "': header declares " + std::to_string(n) +
                          "x" + std::to_string(d) + " but payload has " +
                          std::to_string(reader.remaining()) + " bytes");
    }
    Matrix values(n, d);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = 0; j < d; ++j) {
            const float v = reader.get_f32();
            if (!std::isfinite(v)) throw FormatError("non-finite feature value at " + where(i, j));
            values(i, j) = static_cast<double>(v);
        }
    }
    return FeatureMatrix(std::move(values));
}

std::vector<std::uint32_t> normalized(std::vector<std::uint32_t> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t extra = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(extra),
                      static_cast<std::uint32_t>(extra >> 32)};
    return std::mt19937_64(seq);
}

void check_synth(const SynthSpec& spec) {
    if (spec.num_classes < 2) throw ValidationError("synthetic data needs at least 2 classes");
    if (spec.dim < 1) throw ValidationError("synthetic data needs dim >= 1");
    if (spec.per_class < 1) throw ValidationError("synthetic data needs per_class >= 1");
    if (!std::isfinite(spec.spread) || spec.spread < 0.0) {
        throw ValidationError("synthetic spread must be finite and >= 0");
    }
}

std::pair<FeatureMatrix, LabelSet> sample_around(const Matrix& centers, std::size_t per_class,
                                                 double spread, std::mt19937_64& rng) {
    const auto k = static_cast<std::size_t>(centers.rows());
    const auto d = centers.cols();
    Matrix values(static_cast<Eigen::Index>(k * per_class), d);
    std::vector<std::uint32_t> ids;
    ids.reserve(k * per_class);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t r = 0; r < per_class; ++r) {
            const auto row = static_cast<Eigen::Index>(c * per_class + r);
            for (Eigen::Index j = 0; j < d; ++j) {
                values(row, j) = centers(static_cast<Eigen::Index>(c), j) + spread * noise(rng);
            }
            ids.push_back(static_cast<std::uint32_t>(c));
        }
    }
    return {FeatureMatrix(std::move(values)), LabelSet::single(std::move(ids))};
}

}  // namespace

FeatureMatrix::FeatureMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) throw ValidationError("empty dataset");
    check_finite(values_);
}

FeatureMatrix FeatureMatrix::select_rows(const IndexList& indices) const {
    Matrix out(static_cast<Eigen::Index>(indices.size()), values_.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows()) throw ValidationError("row index out of range");
        out.row(static_cast<Eigen::Index>(i)) = values_.row(static_cast<Eigen::Index>(indices[i]));
    }
    return FeatureMatrix(std::move(out));
}

FeatureFormat format_for_path(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? FeatureFormat::csv : FeatureFormat::binary;
}

FeatureMatrix load_features(const std::filesystem::path& path, FeatureFormat format) {
    return format == FeatureFormat::csv ? load_csv(path.string()) : load_binary(path.string());
}

void save_features(const FeatureMatrix& features, const std::filesystem::path& path, FeatureFormat format) {
    const Matrix& v = features.values();
    if (format == FeatureFormat::csv) {
        std::ostringstream os;
        os.precision(17);
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            for (Eigen::Index j = 0; j < v.cols(); ++j) {
                if (j) os << ',';
                os << v(i, j);
            }
            os << '\n';
        }
        detail::write_file(path.string(), os.str());
        return;
    }
    detail::ByteWriter w;
    w.put_bytes(kFeatureMagic);
    w.put_u32(static_cast<std::uint32_t>(v.rows()));
    w.put_u32(static_cast<std::uint32_t>(v.cols()));
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        for (Eigen::Index j = 0; j < v.cols(); ++j) w.put_f32(static_cast<float>(v(i, j)));
    }
    detail::write_file(path.string(), w.data());
}

// ---------------------------------------------------------------------------

LabelSet LabelSet::single(std::vector<std::uint32_t> class_ids) {
    LabelSet out;
    out.kind_ = Kind::single;
    out.items_.reserve(class_ids.size());
    for (auto id : class_ids) out.items_.push_back({id});
    return out;
}

LabelSet LabelSet::multi(std::vector<std::vector<std::uint32_t>> concept_ids, std::uint32_t num_concepts) {
    LabelSet out;
    out.kind_ = Kind::multi;
    out.num_concepts_ = num_concepts;
    out.items_.reserve(concept_ids.size());
    for (std::size_t i = 0; i < concept_ids.size(); ++i) {
        auto ids = normalized(std::move(concept_ids[i]));
        if (ids.empty()) throw ValidationError("item " + std::to_string(i) + " has no label");
        if (num_concepts != 0 && ids.back() >= num_concepts) {
            throw ValidationError("item " + std::to_string(i) + " has concept id out of range");
        }
        out.items_.push_back(std::move(ids));
    }
    return out;
}

LabelSet LabelSet::from_multi_hot(const std::vector<std::vector<std::uint8_t>>& rows) {
    std::vector<std::vector<std::uint32_t>> ids;
    const std::size_t width = rows.empty() ? 0 : rows.front().size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != width) {
            throw ValidationError("multi-hot row " + std::to_string(i) + " has length " +
                                  std::to_string(rows[i].size()) + ", expected " + std::to_string(width));
        }
        std::vector<std::uint32_t> item;
        for (std::size_t l = 0; l < width; ++l) {
            if (rows[i][l]) item.push_back(static_cast<std::uint32_t>(l));
        }
        ids.push_back(std::move(item));
    }
    return multi(std::move(ids), static_cast<std::uint32_t>(width));
}

bool LabelSet::share_label(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i == *j) return true;
        if (*i < *j) ++i; else ++j;
    }
    return false;
}

LabelSet LabelSet::select(const IndexList& indices) const {
    LabelSet out;
    out.kind_ = kind_;
    out.num_concepts_ = num_concepts_;
    out.items_.reserve(indices.size());
    for (auto i : indices) {
        if (i >= items_.size()) throw ValidationError("label index out of range");
        out.items_.push_back(items_[i]);
    }
    return out;
}

LabelSet load_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
    std::vector<std::vector<std::uint32_t>> items;
    bool any_multi = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::uint32_t> ids;
        std::string tok;
        while (ls >> tok) {
            std::uint32_t v = 0;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || ptr != tok.data() + tok.size()) {
                throw FormatError("bad label '" + tok + "' on line " + std::to_string(line_no));
            }
            ids.push_back(v);
        }
        if (ids.empty()) {
            // Blank trailing lines are tolerated; blank lines mid-file are items without labels.
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw FormatError("line " + std::to_string(line_no) + " has no label");
        }
        any_multi = any_multi || ids.size() > 1;
        items.push_back(std::move(ids));
    }
    if (items.empty()) throw FormatError("empty label file '" + path.string() + "'");
    if (!any_multi) {
        std::vector<std::uint32_t> single;
        single.reserve(items.size());
        for (auto& it : items) single.push_back(it.front());
        return LabelSet::single(std::move(single));
    }
    return LabelSet::multi(std::move(items));
}

void save_labels(const LabelSet& labels, const std::filesystem::path& path) {
    std::ostringstream os;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& ids = labels[i];
        for (std::size_t k = 0; k < ids.size(); ++k) os << (k ? " " : "") << ids[k];
        os << '\n';
    }
    detail::write_file(path.string(), os.str());
}

// ---------------------------------------------------------------------------

SimilarityMatrix::SimilarityMatrix(Matrix values) : values_(std::move(values)) {
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
        for (Eigen::Index j = 0; j < values_.cols(); ++j) {
            const double v = values_(i, j);
            if (v != 1.0 && v != -1.0) {
                throw ValidationError("similarity entry at " +
                                      where(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) +
                                      " is not +-1");
            }
        }
    }
}

SimilarityMatrix SimilarityMatrix::select_rows(const IndexList& rows) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), values_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = values_.row(static_cast<Eigen::Index>(rows.at(i)));
    }
    SimilarityMatrix s;
    s.values_ = std::move(out);
    return s;
}

SimilarityMatrix build_similarity(const LabelSet& query_labels, const LabelSet& db_labels) {
    if (query_labels.kind() != db_labels.kind()) {
        throw ValidationError("label sets mix single-label and multi-label items");
    }
    if (query_labels.num_concepts() != 0 && db_labels.num_concepts() != 0 &&
        query_labels.num_concepts() != db_labels.num_concepts()) {
        throw ValidationError("label dimensionality mismatch: " + std::to_string(query_labels.num_concepts()) +
                              " vs " + std::to_string(db_labels.num_concepts()));
    }
    Matrix values(static_cast<Eigen::Index>(query_labels.size()), static_cast<Eigen::Index>(db_labels.size()));
    for (std::size_t i = 0; i < query_labels.size(); ++i) {
        for (std::size_t j = 0; j < db_labels.size(); ++j) {
            values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                LabelSet::share_label(query_labels[i], db_labels[j]) ? 1.0 : -1.0;
        }
    }
    return SimilarityMatrix(std::move(values));
}

IndexList sample_query_set(std::size_t n, std::size_t m, std::uint64_t seed) {
    if (m < 1 || m > n) {
        throw ValidationError("query sample size m=" + std::to_string(m) + " must be in [1, n=" +
                              std::to_string(n) + "]");
    }
    IndexList pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    auto rng = stream(seed, 0x51);
    // Partial Fisher-Yates: the first m slots form a uniform sample without replacement.
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(m);
    return pool;
}

Matrix synth_centers(const SynthSpec& spec) {
    check_synth(spec);
    auto rng = stream(spec.seed, 0xC0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix centers(static_cast<Eigen::Index>(spec.num_classes), static_cast<Eigen::Index>(spec.dim));
    for (Eigen::Index k = 0; k < centers.rows(); ++k) {
        double norm = 0.0;
        do {
            for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(k, j) = normal(rng);
            norm = centers.row(k).norm();
        } while (norm == 0.0);
        centers.row(k) /= norm;
    }
    return centers;
}

std::pair<FeatureMatrix, LabelSet> synth_clusters(const SynthSpec& spec) {
    const Matrix centers = synth_centers(spec);
    auto rng = stream(spec.seed, 0xD1);
    return sample_around(centers, spec.per_class, spec.spread, rng);
}

std::pair<FeatureMatrix, LabelSet> synth_samples(const SynthSpec& spec, std::size_t per_class,
                                                 std::uint64_t sample_seed) {
    if (per_class < 1) throw ValidationError("per_class must be >= 1");
    const Matrix centers = synth_centers(spec);
    auto rng = stream(spec.seed, 0xE2, sample_seed);
    return sample_around(centers, per_class, spec.spread, rng);
}

}  // namespace mah
