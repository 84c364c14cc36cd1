#include "implisat/codec.hpp"

#include <bit>
#include <cstring>

#include "implisat/config_json.hpp"
#include "implisat/errors.hpp"
#include "json.hpp"

namespace implisat {

using nlohmann::json;

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

struct ArraySlot {
    std::string name;
    Matrix* matrix;
};

std::vector<ArraySlot> slots(ModelParams& params) {
    std::vector<ArraySlot> out;
    params.weights.for_each([&out](const std::string& name, Matrix& m) { out.push_back({name, &m}); });
    if (params.config.mode == ModulationMode::fourier) {
        out.push_back({"z", &params.z});
    }
    return out;
}

std::string metadata_json(const Checkpoint& ckpt) {
    json doc;
    doc["model"] = to_json_value(ckpt.params.config);
    doc["bands"] = json::array();
    for (const BandMeta& b : ckpt.bands) {
        doc["bands"].push_back({{"name", b.name},
                                {"gsd_m", b.gsd_m},
                                {"height", b.height},
                                {"width", b.width},
                                {"norm_min", b.norm_min},
                                {"norm_max", b.norm_max},
                                {"dtype", to_string(b.dtype)}});
    }
    if (ckpt.train) {
        doc["train"] = to_json_value(*ckpt.train);
    }
    ModelParams& params = const_cast<ModelParams&>(ckpt.params);
    doc["arrays"] = json::array();
    for (const ArraySlot& s : slots(params)) {
        doc["arrays"].push_back({s.name, s.matrix->rows(), s.matrix->cols()});
    }
    return doc.dump();
}

std::size_t stored_scalars(const ModelParams& params) {
    return params.weights.scalar_count() + params.z.size();
}

void check_layout(const ModelParams& params) {
    // The arrays must have exactly the shapes the config implies.
    ModelParams shaped = init_params(params.config);
    auto expected = slots(shaped);
    auto actual = slots(const_cast<ModelParams&>(params));
    if (expected.size() != actual.size()) {
        throw ShapeError("checkpoint: parameter layout does not match the model config");
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (!expected[i].matrix->same_shape(*actual[i].matrix)) {
            throw ShapeError("checkpoint: array " + expected[i].name + " is " +
                             actual[i].matrix->shape_str() + ", config implies " +
                             expected[i].matrix->shape_str());
        }
    }
}

}  // namespace

std::size_t Checkpoint::band_index(const std::string& name) const {
    for (std::size_t i = 0; i < bands.size(); ++i) {
        if (bands[i].name == name) return i;
    }
    std::string available;
    for (const BandMeta& b : bands) available += (available.empty() ? "" : ", ") + b.name;
    throw LookupError("checkpoint has no band '" + name + "' (available: " + available + ")");
}

std::vector<BandMeta> band_metadata(const MultibandImage& image) {
    std::vector<BandMeta> out;
    for (const Band& b : image.bands) {
        out.push_back({b.name, b.gsd_m, b.height, b.width, b.norm_min, b.norm_max, b.dtype});
    }
    return out;
}

Checkpoint make_checkpoint(const ModelParams& params, const MultibandImage& image,
                           std::optional<TrainConfig> train) {
    check_compatible(image, params.config);
    return Checkpoint{params, band_metadata(image), train};
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::size_t checkpoint_size(const Checkpoint& checkpoint) {
    return kCheckpointHeaderBytes + metadata_json(checkpoint).size() +
           4 * stored_scalars(checkpoint.params) + kCheckpointTrailerBytes;
}

std::vector<std::uint8_t> serialize(const Checkpoint& checkpoint) {
    check_layout(checkpoint.params);
    const std::string meta = metadata_json(checkpoint);
    std::vector<std::uint8_t> out;
    out.reserve(checkpoint_size(checkpoint));
    out.insert(out.end(), kCheckpointMagic.begin(), kCheckpointMagic.end());
    put_u16(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(meta.size()));
    out.insert(out.end(), meta.begin(), meta.end());
    ModelParams& params = const_cast<ModelParams&>(checkpoint.params);
    for (const ArraySlot& s : slots(params)) {
        for (double v : s.matrix->data()) {
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }
    put_u64(out, fnv1a64(out.data(), out.size()));
    return out;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kCheckpointHeaderBytes + kCheckpointTrailerBytes) {
        throw TruncationError("checkpoint shorter than its fixed header and trailer",
                              kCheckpointHeaderBytes + kCheckpointTrailerBytes, bytes.size());
    }
    if (std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
        throw MagicError("not a checkpoint: magic bytes are not \"ISAT\"");
    }
    const auto version = static_cast<unsigned>(get_le(bytes.data() + 4, 2));
    if (version != kCheckpointVersion) {
        throw VersionError(version, kCheckpointVersion);
    }
    const std::size_t meta_len = get_le(bytes.data() + 6, 4);
    const std::size_t meta_end = kCheckpointHeaderBytes + meta_len;
    const std::uint64_t stored_sum = get_le(bytes.data() + bytes.size() - 8, 8);
    const bool sum_ok = fnv1a64(bytes.data(), bytes.size() - 8) == stored_sum;
    if (meta_end + kCheckpointTrailerBytes > bytes.size()) {
        throw TruncationError("checkpoint metadata runs past the end of the file",
                              meta_end + kCheckpointTrailerBytes, bytes.size());
    }

    Checkpoint ckpt;
    json doc;
    try {
        doc = json::parse(bytes.begin() + kCheckpointHeaderBytes, bytes.begin() + meta_end);
        apply_json(doc.at("model"), ckpt.params.config);
        for (const json& b : doc.at("bands")) {
            ckpt.bands.push_back({b.at("name").get<std::string>(), b.at("gsd_m").get<double>(),
                                  b.at("height").get<std::size_t>(), b.at("width").get<std::size_t>(),
                                  b.at("norm_min").get<double>(), b.at("norm_max").get<double>(),
                                  parse_sample_type(b.at("dtype").get<std::string>())});
        }
        if (doc.contains("train")) {
            TrainConfig train;
            apply_json(doc.at("train"), train);
            ckpt.train = train;
        }
        ckpt.params.config.validate();
    } catch (const std::exception& e) {
        if (!sum_ok) {
            throw ChecksumError("checkpoint checksum mismatch");
        }
        throw FormatError(std::string("checkpoint metadata is invalid: ") + e.what());
    }

    ckpt.params = init_params(ckpt.params.config);
    auto table = slots(ckpt.params);
    const std::size_t expected = meta_end + 4 * stored_scalars(ckpt.params) + kCheckpointTrailerBytes;
    if (bytes.size() != expected) {
        throw TruncationError(bytes.size() < expected ? "checkpoint is truncated"
                                                      : "checkpoint has trailing bytes",
                              expected, bytes.size());
    }
    if (!sum_ok) {
        throw ChecksumError("checkpoint checksum mismatch");
    }
    const json& arrays = doc.value("arrays", json::array());
    if (arrays.size() != table.size()) {
        throw FormatError("checkpoint array table lists " + std::to_string(arrays.size()) +
                          " arrays, config implies " + std::to_string(table.size()));
    }
    const std::uint8_t* p = bytes.data() + meta_end;
    for (std::size_t a = 0; a < table.size(); ++a) {
        const json& entry = arrays[a];
        if (entry.size() != 3 || entry[0] != table[a].name || entry[1] != table[a].matrix->rows() ||
            entry[2] != table[a].matrix->cols()) {
            throw FormatError("checkpoint array " + std::to_string(a) + " is " + entry.dump() +
                              ", expected " + table[a].name + " " + table[a].matrix->shape_str());
        }
        for (double& v : table[a].matrix->data()) {
            v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 4))));
            p += 4;
        }
    }
    return ckpt;
}

std::size_t save(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const auto bytes = serialize(checkpoint);
    write_file(path, bytes);
    return bytes.size();
}

Checkpoint load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

ModelParams round_to_f32(const ModelParams& params) {
    ModelParams out = params;
    for (const ArraySlot& s : slots(out)) {
        for (double& v : s.matrix->data()) v = static_cast<float>(v);
    }
    return out;
}

Band reconstruct(const Checkpoint& checkpoint, const std::string& band_name, double scale,
                 std::size_t chunk_rows) {
    const std::size_t index = checkpoint.band_index(band_name);
    const BandMeta& meta = checkpoint.bands[index];
    Band shape;
    shape.height = meta.height;
    shape.width = meta.width;
    const CoordGrid grid = make_grid_scaled(shape, scale);
    const BandCondition cond{checkpoint.params.config.eta_norm(meta.gsd_m), static_cast<int>(index)};
    const Matrix pred = predict(checkpoint.params, grid.coords, cond, chunk_rows);

    Band band;
    band.name = meta.name;
    band.gsd_m = meta.gsd_m / scale;
    band.height = grid.height;
    band.width = grid.width;
    band.values = Matrix(grid.height, grid.width, std::vector<double>(pred.data().begin(), pred.data().end()));
    band.norm_min = meta.norm_min;
    band.norm_max = meta.norm_max;
    band.dtype = SampleType::f32;
    return band;
}

MultibandImage reconstruct_all(const Checkpoint& checkpoint, double scale, std::size_t chunk_rows) {
    MultibandImage image;
    for (const BandMeta& meta : checkpoint.bands) {
        image.bands.push_back(reconstruct(checkpoint, meta.name, scale, chunk_rows));
    }
    return image;
}

double compression_ratio(std::size_t checkpoint_bytes, std::size_t image_bytes) {
    if (checkpoint_bytes == 0 || image_bytes == 0) {
        throw DomainError("compression_ratio: sizes must be positive");
    }
    return static_cast<double>(image_bytes) / static_cast<double>(checkpoint_bytes);
}

double compression_ratio(std::size_t checkpoint_bytes, const MultibandImage& image) {
    return compression_ratio(checkpoint_bytes, image.payload_bytes());
}

}  // namespace implisat
