#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "implisat/tensor.hpp"

namespace implisat {

enum class SampleType { u16, f32 };

std::string to_string(SampleType type);
SampleType parse_sample_type(std::string_view text);
std::size_t sample_bytes(SampleType type);

/// One spectral band held in the normalized [0, 1] domain together with the
/// affine map back to its original units.
struct Band {
    std::string name;
    double gsd_m = 10.0;
    std::size_t height = 0;
    std::size_t width = 0;
    Matrix values;  // height x width
    double norm_min = 0.0;
    double norm_max = 1.0;
    SampleType dtype = SampleType::f32;

    /// Constant bands have norm_min == norm_max and store 0.5 everywhere.
    bool constant() const { return norm_min == norm_max; }
    std::size_t pixel_count() const { return height * width; }
    Matrix original_values() const;
};

/// Band order defines the channel index used for conditioning.
struct MultibandImage {
    std::vector<Band> bands;

    void validate() const;
    std::size_t index_of(std::string_view name) const;
    const Band& band(std::string_view name) const;
    std::vector<std::string> band_names() const;
    /// Distinct GSD values, ascending.
    std::vector<double> resolutions() const;
    std::size_t pixel_count() const;
    /// Size of the raw payloads at their declared sample types.
    std::size_t payload_bytes() const;
};

/// (v - min) / (max - min); a constant band (max == min) maps to 0.5.
Matrix normalize(const Matrix& raw, double min, double max);
Matrix denormalize(const Matrix& normalized, double min, double max);

/// Builds a band from values in original units, normalizing with the
/// observed range unless explicit bounds are given.
Band make_band(std::string name, double gsd_m, const Matrix& raw, SampleType dtype = SampleType::f32,
               std::optional<double> norm_min = std::nullopt,
               std::optional<double> norm_max = std::nullopt);

/// Centre of cell i on an axis of n cells, mapped into (-1, 1).
double pixel_center(std::size_t i, std::size_t n);

struct CoordGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    Matrix coords;   // (H*W) x 2, columns (x, y); row r is pixel (r / W, r % W)
    Matrix targets;  // (H*W) x 1, empty for scaled grids
};

CoordGrid make_grid(const Band& band);
/// ceil(scale*H) x ceil(scale*W) pixel centres, no targets.
CoordGrid make_grid_scaled(const Band& band, double scale);
CoordGrid make_grid(std::size_t height, std::size_t width);

/// Reads a JSON manifest and its little-endian raw payloads.
MultibandImage load_manifest(const std::filesystem::path& manifest);

/// Writes every band as an f32 payload in original units plus a manifest
/// recording the normalization bounds. Returns the manifest path.
std::filesystem::path write_manifest(const MultibandImage& image, const std::filesystem::path& dir,
                                     const std::string& manifest_name = "manifest.json");

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace implisat
