#pragma once

#include "mah/common.hpp"

#include <cstdint>
#include <filesystem>
#include <random>

namespace mah {

// n x c matrix whose entries are exactly -1 or +1. Stored as doubles so the
// code matrix enters the linear algebra of the solver directly.
class BinaryCodes {
public:
    BinaryCodes() = default;
    explicit BinaryCodes(Matrix values);

    static BinaryCodes rademacher(std::size_t n, std::size_t c, std::mt19937_64& rng);
    // sgn with sgn(0) = +1.
    static BinaryCodes sign_of(const Matrix& values);

    std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }
    const Matrix& values() const { return values_; }
    double operator()(std::size_t i, std::size_t k) const {
        return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }

    // `column` must be +-1 valued and of length rows().
    void set_column(std::size_t k, const Vector& column);

    BinaryCodes select_rows(const IndexList& rows) const;

    bool operator==(const BinaryCodes& other) const {
        return values_.rows() == other.values_.rows() && values_.cols() == other.values_.cols() &&
               values_ == other.values_;
    }

private:
    Matrix values_;
};

// Rows packed into 64-bit words for XOR/popcount distance. Bit k of a row is
// set iff the code entry is +1; unused high bits of the last word are zero.
class PackedCodes {
public:
    PackedCodes() = default;
    explicit PackedCodes(const BinaryCodes& codes);

    std::size_t rows() const { return rows_; }
    std::size_t bits() const { return bits_; }
    std::size_t words_per_row() const { return words_; }
    const std::uint64_t* row(std::size_t i) const { return data_.data() + i * words_; }

    BinaryCodes unpack() const;

private:
    std::size_t rows_ = 0;
    std::size_t bits_ = 0;
    std::size_t words_ = 0;
    std::vector<std::uint64_t> data_;
};

// On-disk size of the packed payload, excluding the header: each row is
// padded to a whole byte.
std::size_t packed_payload_bytes(std::size_t n, std::size_t c);

// MAHB file: "MAHB", u32 n, u32 c, then n rows of ceil(c/8) bytes. Bit k of a
// row lives in byte k/8 at position k%8 (LSB first); +1 -> 1, -1 -> 0.
std::string encode_code_file(const BinaryCodes& codes);
BinaryCodes decode_code_file(std::string_view bytes);
void save_codes(const BinaryCodes& codes, const std::filesystem::path& path);
BinaryCodes load_codes(const std::filesystem::path& path);

}  // namespace mah
