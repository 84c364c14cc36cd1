#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "implisat/dataio.hpp"
#include "implisat/model.hpp"
#include "implisat/trainer.hpp"

namespace implisat {

// Checkpoint layout, all integers little-endian:
//
//   offset  size  field
//   0       4     magic "ISAT"
//   4       2     format version (u16)
//   6       4     metadata length J (u32)
//   10      J     metadata, UTF-8 JSON (model config, bands, array table)
//   10+J    4*P   trainable arrays as f32 in canonical order, then Z
//   end-8   8     FNV-1a 64 of every preceding byte (u64)
//
// P counts every trainable scalar plus the m*m entries of Z (fourier only).

inline constexpr std::array<char, 4> kCheckpointMagic{'I', 'S', 'A', 'T'};
inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 10;
inline constexpr std::size_t kCheckpointTrailerBytes = 8;

struct BandMeta {
    std::string name;
    double gsd_m = 0.0;
    std::size_t height = 0;
    std::size_t width = 0;
    double norm_min = 0.0;
    double norm_max = 1.0;
    SampleType dtype = SampleType::f32;

    bool operator==(const BandMeta&) const = default;
};

struct Checkpoint {
    ModelParams params;
    std::vector<BandMeta> bands;  // band order = conditioning channel
    std::optional<TrainConfig> train;

    std::size_t band_index(const std::string& name) const;
};

std::vector<BandMeta> band_metadata(const MultibandImage& image);

Checkpoint make_checkpoint(const ModelParams& params, const MultibandImage& image,
                           std::optional<TrainConfig> train = std::nullopt);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

std::vector<std::uint8_t> serialize(const Checkpoint& checkpoint);
/// Throws MagicError, VersionError, TruncationError, ChecksumError or
/// FormatError; nothing is returned on failure.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

/// Size of serialize(checkpoint) from its metadata length and config alone.
std::size_t checkpoint_size(const Checkpoint& checkpoint);

std::size_t save(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

/// Rounds every trainable array and Z to f32, matching what load returns.
ModelParams round_to_f32(const ModelParams& params);

/// Renders one band on a ceil(scale*H) x ceil(scale*W) grid. The result holds
/// normalized values plus the band's min/max, so original_values() gives
/// original units. GSD is divided by the scale.
Band reconstruct(const Checkpoint& checkpoint, const std::string& band_name, double scale = 1.0,
                 std::size_t chunk_rows = 65536);

MultibandImage reconstruct_all(const Checkpoint& checkpoint, double scale = 1.0,
                               std::size_t chunk_rows = 65536);

/// Raw image payload bytes over checkpoint bytes.
double compression_ratio(std::size_t checkpoint_bytes, std::size_t image_bytes);
double compression_ratio(std::size_t checkpoint_bytes, const MultibandImage& image);

}  // namespace implisat
