#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mah {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<std::size_t>;

// Input or configuration that violates a documented precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed, truncated or corrupted files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values appearing during optimisation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The three code lengths of a group, short to long.
enum class Branch : std::uint8_t { minus = 0, mid = 1, plus = 2 };

inline constexpr std::array<Branch, 3> kAllBranches{Branch::minus, Branch::mid, Branch::plus};

template <typename T>
using BranchArray = std::array<T, 3>;

constexpr std::size_t index_of(Branch b) { return static_cast<std::size_t>(b); }

std::string_view branch_name(Branch b);
Branch parse_branch(std::string_view name);

enum class HeadVariant : std::uint8_t { flat = 0, cascaded = 1 };

std::string_view variant_name(HeadVariant v);
HeadVariant parse_variant(std::string_view name);

struct CodeLengthGroup {
    std::size_t c_minus = 4;
    std::size_t c_mid = 8;
    std::size_t c_plus = 16;

    std::size_t operator[](Branch b) const {
        switch (b) {
            case Branch::minus: return c_minus;
            case Branch::mid: return c_mid;
            case Branch::plus: return c_plus;
        }
        return 0;
    }

    // Throws ValidationError unless 1 <= c- < c < c+.
    void validate() const;
};

struct LossWeights {
    double alpha = 4.0;
    double beta = 2.0;
    double gamma = 200.0;

    void validate() const;

    // Per-branch multipliers of the total loss: alpha on the short code,
    // beta on the anchor, one on the long code.
    BranchArray<double> branch_weights() const { return {alpha, beta, 1.0}; }
};

}  // namespace mah
