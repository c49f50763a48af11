#include "mah/config.hpp"
#include "mah/trainer.hpp"

#include "byte_io.hpp"

#include <zlib.h>

namespace mah {

namespace {

constexpr std::string_view kCheckpointMagic = "MAHC";

std::uint32_t crc_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large payloads in chunks.
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(chunk));
        pos += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void put_matrix(detail::ByteWriter& w, const Matrix& m) {
    w.put_u32(static_cast<std::uint32_t>(m.rows()));
    w.put_u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) w.put_f64(m(i, j));
    }
}

Matrix get_matrix(detail::ByteReader& r) {
    const std::uint32_t rows = r.get_u32();
    const std::uint32_t cols = r.get_u32();
    if (static_cast<std::uint64_t>(rows) * cols * 8 > r.remaining()) throw FormatError("tensor exceeds payload");
    Matrix m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.get_f64();
    }
    return m;
}

void put_layer(detail::ByteWriter& w, const AffineLayer& layer) {
    put_matrix(w, layer.weight);
    put_matrix(w, layer.bias);
}

AffineLayer get_layer(detail::ByteReader& r) {
    AffineLayer layer;
    layer.weight = get_matrix(r);
    const Matrix bias = get_matrix(r);
    if (bias.cols() != 1 || bias.rows() != layer.weight.rows()) throw FormatError("bias shape mismatch");
    layer.bias = bias.col(0);
    return layer;
}

}  // namespace

std::string encode_checkpoint(const TrainedModel& model) {
    detail::ByteWriter payload;
    payload.put_string(config_to_json(model.config).dump());
    payload.put_u8(static_cast<std::uint8_t>(model.params.variant));
    payload.put_u8(model.params.use_bias ? 1 : 0);
    payload.put_u32(static_cast<std::uint32_t>(model.params.encoder.size()));
    for (const auto& layer : model.params.encoder) put_layer(payload, layer);
    for (Branch b : kAllBranches) put_layer(payload, model.params.head(b));
    for (Branch b : kAllBranches) payload.put_string(encode_code_file(model.codes_for(b)));

    detail::ByteWriter out;
    out.put_bytes(kCheckpointMagic);
    out.put_u8(kCheckpointVersion);
    out.put_u64(payload.data().size());
    out.put_bytes(payload.data());
    out.put_u32(crc_of(payload.data()));
    return std::move(out.data());
}

TrainedModel decode_checkpoint(std::string_view bytes) {
    detail::ByteReader header(bytes);
    if (header.remaining() < 5 || header.get_bytes(4) != kCheckpointMagic) {
        throw FormatError("not a checkpoint: missing MAHC magic");
    }
    const std::uint8_t version = header.get_u8();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const std::string corrupt = "checkpoint checksum mismatch: file is truncated or corrupted";
    if (header.remaining() < 8) throw FormatError(corrupt);
    const std::uint64_t size = header.get_u64();
    if (header.remaining() != size + 4) throw FormatError(corrupt);
    const std::string_view payload_bytes = header.get_bytes(size);
    if (header.get_u32() != crc_of(payload_bytes)) throw FormatError(corrupt);

    detail::ByteReader r(payload_bytes);
    TrainedModel model;
    model.config = resolve_config(nlohmann::json::parse(r.get_string())).config;
    const std::uint8_t variant = r.get_u8();
    if (variant > 1) throw FormatError("unknown head variant in checkpoint");
    model.params.variant = static_cast<HeadVariant>(variant);
    model.params.use_bias = r.get_u8() != 0;
    const std::uint32_t layers = r.get_u32();
    for (std::uint32_t l = 0; l < layers; ++l) model.params.encoder.push_back(get_layer(r));
    for (Branch b : kAllBranches) model.params.head(b) = get_layer(r);
    for (Branch b : kAllBranches) model.codes[index_of(b)] = decode_code_file(r.get_string());
    if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint payload");
    validate_params(model.params);
    return model;
}

void checkpoint_save(const TrainedModel& model, const std::filesystem::path& path) {
    detail::write_file(path.string(), encode_checkpoint(model));
}

TrainedModel checkpoint_load(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_file(path.string()));
}

}  // namespace mah
