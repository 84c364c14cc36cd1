#include "implisat/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "implisat/errors.hpp"
#include "json.hpp"

namespace implisat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double decode_sample(const std::uint8_t* p, SampleType type) {
    if (type == SampleType::u16) {
        return static_cast<double>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
    }
    const std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                               (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
    return static_cast<double>(std::bit_cast<float>(bits));
}

void append_f32(std::vector<std::uint8_t>& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int s = 0; s < 32; s += 8) {
        out.push_back(static_cast<std::uint8_t>(bits >> s));
    }
}

template <class T>
T required(const json& entry, const char* key, const std::string& band) {
    if (!entry.contains(key)) {
        throw FormatError("manifest band '" + band + "': missing key '" + key + "'");
    }
    try {
        return entry.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError("manifest band '" + band + "': key '" + key + "' has the wrong type");
    }
}

}  // namespace

std::string to_string(SampleType type) { return type == SampleType::u16 ? "u16" : "f32"; }

SampleType parse_sample_type(std::string_view text) {
    if (text == "u16") return SampleType::u16;
    if (text == "f32") return SampleType::f32;
    throw FormatError("unknown dtype '" + std::string(text) + "' (expected u16 or f32)");
}

std::size_t sample_bytes(SampleType type) { return type == SampleType::u16 ? 2 : 4; }

Matrix Band::original_values() const { return denormalize(values, norm_min, norm_max); }

void MultibandImage::validate() const {
    if (bands.empty()) {
        throw FormatError("image has no bands");
    }
    std::set<std::string> seen;
    for (const Band& b : bands) {
        if (!seen.insert(b.name).second) {
            throw FormatError("duplicate band name '" + b.name + "'");
        }
        if (b.height == 0 || b.width == 0 || b.values.rows() != b.height ||
            b.values.cols() != b.width) {
            throw FormatError("band '" + b.name + "': values " + b.values.shape_str() +
                              " do not match " + std::to_string(b.height) + "x" +
                              std::to_string(b.width));
        }
        if (!(b.gsd_m > 0.0)) {
            throw FormatError("band '" + b.name + "': gsd_m must be positive");
        }
    }
}

std::size_t MultibandImage::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < bands.size(); ++i) {
        if (bands[i].name == name) {
            return i;
        }
    }
    std::string available;
    for (const Band& b : bands) {
        available += (available.empty() ? "" : ", ") + b.name;
    }
    throw LookupError("no band named '" + std::string(name) + "' (available: " + available + ")");
}

const Band& MultibandImage::band(std::string_view name) const { return bands[index_of(name)]; }

std::vector<std::string> MultibandImage::band_names() const {
    std::vector<std::string> names;
    for (const Band& b : bands) {
        names.push_back(b.name);
    }
    return names;
}

std::vector<double> MultibandImage::resolutions() const {
    std::vector<double> out;
    for (const Band& b : bands) {
        out.push_back(b.gsd_m);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::size_t MultibandImage::pixel_count() const {
    std::size_t total = 0;
    for (const Band& b : bands) {
        total += b.pixel_count();
    }
    return total;
}

std::size_t MultibandImage::payload_bytes() const {
    std::size_t total = 0;
    for (const Band& b : bands) {
        total += b.pixel_count() * sample_bytes(b.dtype);
    }
    return total;
}

Matrix normalize(const Matrix& raw, double min, double max) {
    if (!(max >= min)) {
        throw DomainError("normalize: max " + std::to_string(max) + " below min " +
                          std::to_string(min));
    }
    Matrix out(raw.rows(), raw.cols());
    if (max == min) {
        out.fill(0.5);
        return out;
    }
    const double span = max - min;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out.data()[i] = (raw.data()[i] - min) / span;
    }
    return out;
}

Matrix denormalize(const Matrix& normalized, double min, double max) {
    if (!(max >= min)) {
        throw DomainError("denormalize: max " + std::to_string(max) + " below min " +
                          std::to_string(min));
    }
    Matrix out(normalized.rows(), normalized.cols());
    const double span = max - min;
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        out.data()[i] = min + normalized.data()[i] * span;
    }
    return out;
}

Band make_band(std::string name, double gsd_m, const Matrix& raw, SampleType dtype,
               std::optional<double> norm_min, std::optional<double> norm_max) {
    if (raw.empty()) {
        throw FormatError("band '" + name + "' is empty");
    }
    if (!all_finite(raw)) {
        throw FormatError("band '" + name + "' contains non-finite samples");
    }
    const auto [lo, hi] = std::minmax_element(raw.data().begin(), raw.data().end());
    Band band;
    band.name = std::move(name);
    band.gsd_m = gsd_m;
    band.height = raw.rows();
    band.width = raw.cols();
    band.dtype = dtype;
    band.norm_min = norm_min.value_or(*lo);
    band.norm_max = norm_max.value_or(*hi);
    band.values = normalize(raw, band.norm_min, band.norm_max);
    return band;
}

double pixel_center(std::size_t i, std::size_t n) {
    return 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n) - 1.0;
}

CoordGrid make_grid(std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) {
        throw DomainError("grid dimensions must be >= 1");
    }
    CoordGrid grid;
    grid.height = height;
    grid.width = width;
    grid.coords = Matrix(height * width, 2);
    for (std::size_t r = 0; r < height; ++r) {
        const double y = pixel_center(r, height);
        for (std::size_t c = 0; c < width; ++c) {
            grid.coords(r * width + c, 0) = pixel_center(c, width);
            grid.coords(r * width + c, 1) = y;
        }
    }
    return grid;
}

CoordGrid make_grid(const Band& band) {
    CoordGrid grid = make_grid(band.height, band.width);
    grid.targets = Matrix(band.pixel_count(), 1,
                          std::vector<double>(band.values.data().begin(), band.values.data().end()));
    return grid;
}

CoordGrid make_grid_scaled(const Band& band, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw DomainError("scale must be positive, got " + std::to_string(scale));
    }
    // The relative slack keeps e.g. 0.1 * 30 from rounding up to 4.
    auto scaled = [scale](std::size_t n) {
        const double v = scale * static_cast<double>(n);
        return static_cast<std::size_t>(std::ceil(v - 1e-9 * v));
    };
    const std::size_t h = scaled(band.height);
    const std::size_t w = scaled(band.width);
    if (h == 0 || w == 0) {
        throw DomainError("scale " + std::to_string(scale) + " leaves an empty grid");
    }
    return make_grid(h, w);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path.string(), "cannot open for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(path.string(), "cannot open for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError(path.string(), "write failed");
    }
}

void write_text(const fs::path& path, const std::string& text) {
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

MultibandImage load_manifest(const fs::path& manifest) {
    const auto raw = read_file(manifest);
    json doc;
    try {
        doc = json::parse(raw.begin(), raw.end());
    } catch (const json::parse_error& e) {
        throw FormatError(manifest.string() + ": invalid JSON (" + e.what() + ")");
    }
    if (!doc.is_object() || !doc.contains("bands") || !doc["bands"].is_array()) {
        throw FormatError(manifest.string() + ": expected an object with a 'bands' array");
    }
    const fs::path base = manifest.parent_path();
    MultibandImage image;
    std::set<std::string> seen;
    for (const json& entry : doc["bands"]) {
        if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
            throw FormatError(manifest.string() + ": band entry without a name");
        }
        const std::string name = entry["name"].get<std::string>();
        if (!seen.insert(name).second) {
            throw FormatError("manifest: duplicate band name '" + name + "'");
        }
        const auto gsd = required<double>(entry, "gsd_m", name);
        const auto height = required<std::size_t>(entry, "height", name);
        const auto width = required<std::size_t>(entry, "width", name);
        const auto dtype_text = required<std::string>(entry, "dtype", name);
        const auto rel = required<std::string>(entry, "path", name);
        SampleType dtype;
        try {
            dtype = parse_sample_type(dtype_text);
        } catch (const FormatError& e) {
            throw FormatError("band '" + name + "': " + e.what());
        }
        if (height == 0 || width == 0 || !(gsd > 0.0)) {
            throw FormatError("band '" + name + "': height, width and gsd_m must be positive");
        }

        const auto bytes = read_file(base / rel);
        const std::size_t expected = height * width * sample_bytes(dtype);
        if (bytes.size() != expected) {
            throw TruncationError("band '" + name + "': payload " + (base / rel).string() +
                                      (bytes.size() < expected ? " is truncated" : " has trailing bytes"),
                                  expected, bytes.size());
        }
        Matrix values(height, width);
        for (std::size_t i = 0; i < height * width; ++i) {
            values.data()[i] = decode_sample(bytes.data() + i * sample_bytes(dtype), dtype);
        }
        std::optional<double> lo, hi;
        if (entry.contains("norm_min")) lo = required<double>(entry, "norm_min", name);
        if (entry.contains("norm_max")) hi = required<double>(entry, "norm_max", name);
        try {
            image.bands.push_back(make_band(name, gsd, values, dtype, lo, hi));
        } catch (const DomainError& e) {
            throw FormatError("band '" + name + "': " + e.what());
        }
    }
    image.validate();
    return image;
}

fs::path write_manifest(const MultibandImage& image, const fs::path& dir,
                        const std::string& manifest_name) {
    image.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError(dir.string(), "cannot create directory: " + ec.message());
    }
    json doc;
    doc["bands"] = json::array();
    for (const Band& band : image.bands) {
        const std::string file = band.name + ".f32";
        std::vector<std::uint8_t> bytes;
        bytes.reserve(band.pixel_count() * 4);
        const Matrix original = band.original_values();
        for (double v : original.data()) {
            append_f32(bytes, static_cast<float>(v));
        }
        write_file(dir / file, bytes);
        doc["bands"].push_back({{"name", band.name},
                                {"gsd_m", band.gsd_m},
                                {"height", band.height},
                                {"width", band.width},
                                {"dtype", "f32"},
                                {"path", file},
                                {"norm_min", band.norm_min},
                                {"norm_max", band.norm_max}});
    }
    const fs::path path = dir / manifest_name;
    write_text(path, doc.dump(2) + "\n");
    return path;
}

}  // namespace implisat
