#include "mah/common.hpp"

#include "byte_io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mah {

std::string_view branch_name(Branch b) {
    switch (b) {
        case Branch::minus: return "minus";
        case Branch::mid: return "mid";
        case Branch::plus: return "plus";
    }
    return "?";
}

Branch parse_branch(std::string_view name) {
    for (Branch b : kAllBranches) {
        if (branch_name(b) == name) return b;
    }
    throw ValidationError("unknown branch '" + std::string(name) + "' (expected minus, mid or plus)");
}

std::string_view variant_name(HeadVariant v) {
    return v == HeadVariant::flat ? "flat" : "cascaded";
}

HeadVariant parse_variant(std::string_view name) {
    if (name == "flat") return HeadVariant::flat;
    if (name == "cascaded") return HeadVariant::cascaded;
    throw ValidationError("unknown head variant '" + std::string(name) + "' (expected flat or cascaded)");
}

void CodeLengthGroup::validate() const {
    if (c_minus < 1 || c_minus >= c_mid || c_mid >= c_plus) {
        std::ostringstream os;
        os << "code lengths must satisfy 1 <= c_minus < c_mid < c_plus, got {" << c_minus << ", "
           << c_mid << ", " << c_plus << "}";
        throw ValidationError(os.str());
    }
}

void LossWeights::validate() const {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ValidationError(std::string("loss weight ") + name + " must be finite and >= 0");
        }
    };
    check(alpha, "alpha");
    check(beta, "beta");
    check(gamma, "gamma");
}

namespace detail {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "' for reading");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write to '" + path + "' failed");
}

}  // namespace detail
}  // namespace mah
