#include "mah/data.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <set>

using namespace mah;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "mah_test_data";
    fs::create_directories(dir);
    return dir / name;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("load_features parses csv") {
    const auto path = temp_file("two.csv");
    write(path, "1.0,2.0\n3.0,4.0");
    const FeatureMatrix f = load_features(path, FeatureFormat::csv);
    REQUIRE(f.rows() == 2);
    REQUIRE(f.cols() == 2);
    CHECK(f.values()(0, 0) == 1.0);
    CHECK(f.values()(0, 1) == 2.0);
    CHECK(f.values()(1, 0) == 3.0);
    CHECK(f.values()(1, 1) == 4.0);
}

TEST_CASE("load_features rejects bad inputs") {
    SUBCASE("binary with n = 0") {
        const auto path = temp_file("empty.mahf");
        write(path, "MAHF" + std::string(8, '\0'));
        CHECK_THROWS_WITH_AS(load_features(path, FeatureFormat::binary), "empty dataset", FormatError);
    }
    SUBCASE("payload shorter than the header declares") {
        const auto path = temp_file("short.mahf");
        write(path, "MAHF" + std::string("\x02\0\0\0\x02\0\0\0", 8) + std::string(12, '\0'));
        CHECK_THROWS_AS(load_features(path, FeatureFormat::binary), FormatError);
    }
    SUBCASE("bad magic") {
        const auto path = temp_file("magic.mahf");
        write(path, "XXXX" + std::string(8, '\0'));
        CHECK_THROWS_AS(load_features(path, FeatureFormat::binary), FormatError);
    }
    SUBCASE("ragged csv") {
        const auto path = temp_file("ragged.csv");
        write(path, "1,2\n3\n");
        CHECK_THROWS_AS(load_features(path, FeatureFormat::csv), FormatError);
    }
    SUBCASE("non-finite csv value names its position") {
        const auto path = temp_file("nan.csv");
        write(path, "1,2\n3,nan\n");
        CHECK_THROWS_WITH_AS(load_features(path, FeatureFormat::csv), "non-finite feature value at row 1, col 1",
                             FormatError);
    }
    SUBCASE("non-finite binary value names its position") {
        const auto path = temp_file("inf.mahf");
        save_features(FeatureMatrix(Matrix::Ones(2, 3)), path, FeatureFormat::binary);
        std::string bytes = slurp(path);
        // Entry (1, 2) is the sixth float; overwrite it with +inf.
        const float inf = std::numeric_limits<float>::infinity();
        std::memcpy(bytes.data() + 12 + 5 * 4, &inf, 4);
        write(path, bytes);
        CHECK_THROWS_WITH_AS(load_features(path, FeatureFormat::binary), "non-finite feature value at row 1, col 2",
                             FormatError);
    }
}

TEST_CASE("binary feature round trip is bit-identical for float-valued matrices") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> dist(-100.0f, 100.0f);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m(5, 3);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<double>(dist(rng));
        const auto path = temp_file("rt.mahf");
        save_features(FeatureMatrix(m), path, FeatureFormat::binary);
        const FeatureMatrix back = load_features(path, FeatureFormat::binary);
        CHECK(back.values() == m);
        const auto csv = temp_file("rt.csv");
        save_features(FeatureMatrix(m), csv, FeatureFormat::csv);
        CHECK(load_features(csv, FeatureFormat::csv).values() == m);
    }
}

TEST_CASE("binary header layout is little-endian") {
    const auto path = temp_file("layout.mahf");
    Matrix m(1, 2);
    m << 1.0, -2.0;
    save_features(FeatureMatrix(m), path, FeatureFormat::binary);
    const std::string bytes = slurp(path);
    REQUIRE(bytes.size() == 4 + 4 + 4 + 8);
    CHECK(bytes.substr(0, 4) == "MAHF");
    CHECK(bytes.substr(4, 4) == std::string("\x01\0\0\0", 4));
    CHECK(bytes.substr(8, 4) == std::string("\x02\0\0\0", 4));
    CHECK(bytes.substr(12, 4) == std::string("\x00\x00\x80\x3f", 4));  // 1.0f
}

TEST_CASE("build_similarity") {
    SUBCASE("single labels") {
        const auto s = build_similarity(LabelSet::single({0, 1}), LabelSet::single({0, 0, 1}));
        Matrix expected(2, 3);
        expected << 1, 1, -1, -1, -1, 1;
        CHECK(s.values() == expected);
    }
    SUBCASE("multi labels with a shared concept") {
        const auto s = build_similarity(LabelSet::multi({{1, 3}}), LabelSet::multi({{3, 5}}));
        CHECK(s(0, 0) == 1.0);
    }
    SUBCASE("disjoint multi labels") {
        const auto s = build_similarity(LabelSet::multi({{1}}), LabelSet::multi({{2}, {3}}));
        CHECK(s(0, 0) == -1.0);
        CHECK(s(0, 1) == -1.0);
    }
    SUBCASE("multi-hot rows") {
        const auto q = LabelSet::from_multi_hot({{0, 1, 0, 1}});
        const auto d = LabelSet::from_multi_hot({{0, 0, 0, 1}, {1, 0, 0, 0}});
        const auto s = build_similarity(q, d);
        CHECK(s(0, 0) == 1.0);
        CHECK(s(0, 1) == -1.0);
    }
    SUBCASE("mismatched dimensionality") {
        const auto q = LabelSet::from_multi_hot({{0, 1, 0}});
        const auto d = LabelSet::from_multi_hot({{0, 1, 0, 0}});
        CHECK_THROWS_AS(build_similarity(q, d), ValidationError);
        CHECK_THROWS_AS(build_similarity(LabelSet::single({1}), LabelSet::multi({{1, 2}})), ValidationError);
    }
    SUBCASE("multi-hot rows of different lengths") {
        CHECK_THROWS_AS(LabelSet::from_multi_hot({{0, 1}, {1}}), ValidationError);
    }
    SUBCASE("multi-label item without a label") {
        CHECK_THROWS_AS(LabelSet::multi({{1}, {}}), ValidationError);
    }
}

TEST_CASE("property: similarity is +-1, symmetric on identical label lists, +1 on the diagonal") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> count(1, 12);
        std::uniform_int_distribution<std::uint32_t> concept_id(0, 7);
        std::vector<std::vector<std::uint32_t>> items(static_cast<std::size_t>(count(rng)));
        for (auto& it : items) {
            const int k = 1 + static_cast<int>(rng() % 3);
            for (int j = 0; j < k; ++j) it.push_back(concept_id(rng));
        }
        const LabelSet labels = LabelSet::multi(items, 8);
        const auto s = build_similarity(labels, labels);
        for (std::size_t i = 0; i < s.rows(); ++i) {
            CHECK(s(i, i) == 1.0);
            for (std::size_t j = 0; j < s.cols(); ++j) {
                CHECK((s(i, j) == 1.0 || s(i, j) == -1.0));
                CHECK(s(i, j) == s(j, i));
            }
        }
    }
}

TEST_CASE("similarity slice for sampled queries has +1 at each query's own column") {
    const auto [features, labels] = synth_clusters({5, 20, 4, 0.1, 3});
    const IndexList omega = sample_query_set(labels.size(), 30, 9);
    const auto s = build_similarity(labels.select(omega), labels);
    for (std::size_t i = 0; i < omega.size(); ++i) CHECK(s(i, omega[i]) == 1.0);
}

TEST_CASE("SimilarityMatrix rejects entries other than +-1") {
    Matrix m(1, 2);
    m << 1.0, 0.0;
    CHECK_THROWS_AS(SimilarityMatrix{m}, ValidationError);
}

TEST_CASE("sample_query_set") {
    SUBCASE("m = n gives a permutation") {
        for (std::uint64_t seed : {0u, 1u, 77u}) {
            auto s = sample_query_set(5, 5, seed);
            std::sort(s.begin(), s.end());
            CHECK(s == IndexList{0, 1, 2, 3, 4});
        }
    }
    SUBCASE("deterministic for a fixed seed, distinct and in range") {
        const auto a = sample_query_set(1000, 100, 42);
        const auto b = sample_query_set(1000, 100, 42);
        CHECK(a == b);
        CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 100);
        for (auto i : a) CHECK(i < 1000);
        CHECK(sample_query_set(1000, 100, 43) != a);
    }
    SUBCASE("m > n is rejected") {
        CHECK_THROWS_AS(sample_query_set(3, 4, 0), ValidationError);
        CHECK_THROWS_AS(sample_query_set(3, 0, 0), ValidationError);
    }
    SUBCASE("index frequencies over 10000 resamples stay within 5 sigma of uniform") {
        const std::size_t n = 1000, m = 100, trials = 10000;
        std::vector<std::size_t> freq(n, 0);
        for (std::size_t t = 0; t < trials; ++t) {
            for (auto i : sample_query_set(n, m, t)) ++freq[i];
        }
        const double p = static_cast<double>(m) / static_cast<double>(n);
        const double mean = p * trials;
        const double sigma = std::sqrt(trials * p * (1.0 - p));
        std::size_t worst = 0;
        for (auto f : freq) worst = std::max<std::size_t>(worst, static_cast<std::size_t>(std::abs(double(f) - mean)));
        CHECK(static_cast<double>(worst) < 5.0 * sigma);
    }
}

TEST_CASE("synth_clusters") {
    SUBCASE("zero spread puts every item on its class center") {
        const SynthSpec spec{4, 6, 5, 0.0, 12};
        const auto [f, labels] = synth_clusters(spec);
        const Matrix centers = synth_centers(spec);
        for (std::size_t i = 0; i < f.rows(); ++i) {
            const auto cls = static_cast<Eigen::Index>(labels[i].front());
            CHECK(f.values().row(static_cast<Eigen::Index>(i)) == centers.row(cls));
        }
        for (Eigen::Index k = 0; k < centers.rows(); ++k) CHECK(centers.row(k).norm() == doctest::Approx(1.0));
    }
    SUBCASE("deterministic for a fixed seed") {
        const SynthSpec spec{3, 10, 4, 0.2, 99};
        const auto a = synth_clusters(spec);
        const auto b = synth_clusters(spec);
        CHECK(a.first.values() == b.first.values());
        for (std::size_t i = 0; i < a.second.size(); ++i) CHECK(a.second[i] == b.second[i]);
    }
    SUBCASE("fewer than two classes is rejected") {
        CHECK_THROWS_AS(synth_clusters({1, 10, 4, 0.1, 0}), ValidationError);
    }
    SUBCASE("held-out samples share centers but not noise") {
        const SynthSpec spec{3, 10, 4, 0.1, 5};
        const auto [db, dbl] = synth_clusters(spec);
        const auto [q, ql] = synth_samples(spec, 10, 1);
        CHECK(q.rows() == 30);
        CHECK(q.values() != db.values());
    }
}

TEST_CASE("synthetic clusters are separable by brute-force 1-NN") {
    const SynthSpec spec{10, 100, 16, 0.1, 2024};
    const auto [f, labels] = synth_clusters(spec);
    const Matrix& x = f.values();
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index arg = -1;
        for (Eigen::Index j = 0; j < x.rows(); ++j) {
            if (j == i) continue;
            const double d = (x.row(i) - x.row(j)).squaredNorm();
            if (d < best) {
                best = d;
                arg = j;
            }
        }
        correct += labels[static_cast<std::size_t>(arg)] == labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(x.rows()) > 0.99);
}

TEST_CASE("label files") {
    SUBCASE("single-label file") {
        const auto path = temp_file("single.txt");
        write(path, "0\n3\n1\n");
        const LabelSet l = load_labels(path);
        CHECK(l.kind() == LabelSet::Kind::single);
        REQUIRE(l.size() == 3);
        CHECK(l[1] == std::vector<std::uint32_t>{3});
    }
    SUBCASE("multi-label file") {
        const auto path = temp_file("multi.txt");
        write(path, "0 4\n3\n2 1\n");
        const LabelSet l = load_labels(path);
        CHECK(l.kind() == LabelSet::Kind::multi);
        CHECK(l[2] == std::vector<std::uint32_t>{1, 2});
        const auto out = temp_file("multi_out.txt");
        save_labels(l, out);
        const LabelSet back = load_labels(out);
        for (std::size_t i = 0; i < l.size(); ++i) CHECK(back[i] == l[i]);
    }
    SUBCASE("garbage label") {
        const auto path = temp_file("bad.txt");
        write(path, "0\nx\n");
        CHECK_THROWS_AS(load_labels(path), FormatError);
    }
    SUBCASE("blank line in the middle") {
        const auto path = temp_file("blank.txt");
        write(path, "0\n\n1\n");
        CHECK_THROWS_AS(load_labels(path), FormatError);
    }
}
