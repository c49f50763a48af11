#include "mah/codes.hpp"

#include "byte_io.hpp"

namespace mah {

namespace {

constexpr std::string_view kCodeMagic = "MAHB";

void check_binary(const Matrix& values) {
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index k = 0; k < values.cols(); ++k) {
            const double v = values(i, k);
            if (v != 1.0 && v != -1.0) {
                throw ValidationError("binary code entry (" + std::to_string(i) + ", " + std::to_string(k) +
                                      ") is not +-1");
            }
        }
    }
}

}  // namespace

BinaryCodes::BinaryCodes(Matrix values) : values_(std::move(values)) { check_binary(values_); }

BinaryCodes BinaryCodes::rademacher(std::size_t n, std::size_t c, std::mt19937_64& rng) {
    Matrix v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
    std::bernoulli_distribution coin(0.5);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        for (Eigen::Index k = 0; k < v.cols(); ++k) v(i, k) = coin(rng) ? 1.0 : -1.0;
    }
    BinaryCodes out;
    out.values_ = std::move(v);
    return out;
}

BinaryCodes BinaryCodes::sign_of(const Matrix& values) {
    BinaryCodes out;
    out.values_ = values.unaryExpr([](double x) { return x >= 0.0 ? 1.0 : -1.0; });
    return out;
}

void BinaryCodes::set_column(std::size_t k, const Vector& column) {
    if (k >= cols() || static_cast<std::size_t>(column.size()) != rows()) {
        throw ValidationError("set_column: shape mismatch");
    }
    for (Eigen::Index i = 0; i < column.size(); ++i) {
        if (column(i) != 1.0 && column(i) != -1.0) throw ValidationError("set_column: entry is not +-1");
    }
    values_.col(static_cast<Eigen::Index>(k)) = column;
}

BinaryCodes BinaryCodes::select_rows(const IndexList& rows) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), values_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= this->rows()) throw ValidationError("code row index out of range");
        out.row(static_cast<Eigen::Index>(i)) = values_.row(static_cast<Eigen::Index>(rows[i]));
    }
    BinaryCodes b;
    b.values_ = std::move(out);
    return b;
}

PackedCodes::PackedCodes(const BinaryCodes& codes)
    : rows_(codes.rows()), bits_(codes.cols()), words_((codes.cols() + 63) / 64), data_(rows_ * words_, 0) {
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t k = 0; k < bits_; ++k) {
            if (codes(i, k) > 0) data_[i * words_ + k / 64] |= std::uint64_t{1} << (k % 64);
        }
    }
}

BinaryCodes PackedCodes::unpack() const {
    Matrix v(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(bits_));
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t k = 0; k < bits_; ++k) {
            const bool set = (data_[i * words_ + k / 64] >> (k % 64)) & 1u;
            v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = set ? 1.0 : -1.0;
        }
    }
    return BinaryCodes(std::move(v));
}

std::size_t packed_payload_bytes(std::size_t n, std::size_t c) { return n * ((c + 7) / 8); }

std::string encode_code_file(const BinaryCodes& codes) {
    detail::ByteWriter w;
    w.put_bytes(kCodeMagic);
    w.put_u32(static_cast<std::uint32_t>(codes.rows()));
    w.put_u32(static_cast<std::uint32_t>(codes.cols()));
    const std::size_t row_bytes = (codes.cols() + 7) / 8;
    for (std::size_t i = 0; i < codes.rows(); ++i) {
        for (std::size_t byte = 0; byte < row_bytes; ++byte) {
            std::uint8_t v = 0;
            for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < codes.cols(); ++bit) {
                if (codes(i, byte * 8 + bit) > 0) v |= static_cast<std::uint8_t>(1u << bit);
            }
            w.put_u8(v);
        }
    }
    return std::move(w.data());
}

BinaryCodes decode_code_file(std::string_view bytes) {
    detail::ByteReader r(bytes);
    if (r.remaining() < 12 || r.get_bytes(4) != kCodeMagic) throw FormatError("missing MAHB magic");
    const std::uint32_t n = r.get_u32();
    const std::uint32_t c = r.get_u32();
    if (n == 0 || c == 0) throw FormatError("empty code file");
    if (r.remaining() != packed_payload_bytes(n, c)) {
        throw FormatError("code file payload has " + std::to_string(r.remaining()) + " bytes, header implies " +
                          std::to_string(packed_payload_bytes(n, c)));
    }
    const std::size_t row_bytes = (c + 7) / 8;
    Matrix v(n, c);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::size_t byte = 0; byte < row_bytes; ++byte) {
            const std::uint8_t packed = r.get_u8();
            for (std::size_t bit = 0; bit < 8; ++bit) {
                const std::size_t k = byte * 8 + bit;
                const bool set = (packed >> bit) & 1u;
                if (k < c) {
                    v(i, static_cast<Eigen::Index>(k)) = set ? 1.0 : -1.0;
                } else if (set) {
                    throw FormatError("nonzero padding bit in row " + std::to_string(i));
                }
            }
        }
    }
    return BinaryCodes(std::move(v));
}

void save_codes(const BinaryCodes& codes, const std::filesystem::path& path) {
    detail::write_file(path.string(), encode_code_file(codes));
}

BinaryCodes load_codes(const std::filesystem::path& path) {
    return decode_code_file(detail::read_file(path.string()));
}

}  // namespace mah
