#include "implisat/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "implisat/errors.hpp"
#include "implisat/rng.hpp"
#include "json.hpp"

namespace implisat {

using nlohmann::json;

SyntheticSpec default_synthetic_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.bands = {
        {"B2", 10.0, 64, 64, {{0.5, 2.0, 1.0, 0.3}, {0.35, 6.0, -4.0, 1.1}, {0.25, 12.0, 5.0, 2.0}}, 0.01},
        {"B5", 20.0, 32, 32, {{0.6, 1.0, 2.0, 0.5}, {0.4, 4.0, -3.0, 1.7}, {0.3, 6.0, 1.0, 0.9}}, 0.01},
        {"B1", 60.0, 16, 16, {{0.7, 1.0, 0.5, 0.2}, {0.4, 2.0, -1.0, 1.3}}, 0.01},
    };
    return spec;
}

MultibandImage generate(const SyntheticSpec& spec, std::vector<std::string>* degenerate) {
    if (spec.bands.empty()) {
        throw ConfigError("synthetic spec lists no bands");
    }
    MultibandImage image;
    for (std::size_t b = 0; b < spec.bands.size(); ++b) {
        const SyntheticBandSpec& bs = spec.bands[b];
        if (bs.height == 0 || bs.width == 0 || !(bs.gsd_m > 0.0) || !(bs.noise >= 0.0)) {
            throw ConfigError("synthetic band '" + bs.name +
                              "': dims and gsd_m must be positive, noise non-negative");
        }
        double bound = bs.noise;
        for (const auto& c : bs.components) {
            bound += std::abs(c.amplitude);
        }
        Rng noise_rng(derive_seed(spec.seed, 1000 + b));
        Matrix values(bs.height, bs.width);
        for (std::size_t r = 0; r < bs.height; ++r) {
            const double y = pixel_center(r, bs.height);
            for (std::size_t c = 0; c < bs.width; ++c) {
                const double x = pixel_center(c, bs.width);
                double v = 0.0;
                for (const auto& comp : bs.components) {
                    v += comp.amplitude *
                         std::sin(2.0 * std::numbers::pi * (comp.fx * x + comp.fy * y) + comp.phase);
                }
                if (bs.noise > 0.0) {
                    v += noise_rng.uniform(-bs.noise, bs.noise);
                }
                const double scaled = bound > 0.0 ? 0.5 + 0.5 * v / bound : 0.5;
                values(r, c) = static_cast<float>(std::clamp(scaled, 0.0, 1.0));
            }
        }
        if (bound == 0.0 && degenerate != nullptr) {
            degenerate->push_back(bs.name);
        }
        Band band;
        band.name = bs.name;
        band.gsd_m = bs.gsd_m;
        band.height = bs.height;
        band.width = bs.width;
        band.values = std::move(values);
        band.norm_min = 0.0;
        band.norm_max = 1.0;
        band.dtype = SampleType::f32;
        image.bands.push_back(std::move(band));
    }
    image.validate();
    return image;
}

std::string synthetic_spec_to_json(const SyntheticSpec& spec) {
    json doc;
    doc["seed"] = spec.seed;
    doc["bands"] = json::array();
    for (const auto& b : spec.bands) {
        json comps = json::array();
        for (const auto& c : b.components) {
            comps.push_back({{"amplitude", c.amplitude}, {"fx", c.fx}, {"fy", c.fy}, {"phase", c.phase}});
        }
        doc["bands"].push_back({{"name", b.name},
                                {"gsd_m", b.gsd_m},
                                {"height", b.height},
                                {"width", b.width},
                                {"noise", b.noise},
                                {"components", comps}});
    }
    return doc.dump(2);
}

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        SyntheticSpec spec;
        spec.seed = doc.value("seed", std::uint64_t{0});
        for (const json& b : doc.at("bands")) {
            SyntheticBandSpec bs;
            bs.name = b.at("name").get<std::string>();
            bs.gsd_m = b.at("gsd_m").get<double>();
            bs.height = b.at("height").get<std::size_t>();
            bs.width = b.at("width").get<std::size_t>();
            bs.noise = b.value("noise", 0.0);
            for (const json& c : b.value("components", json::array())) {
                bs.components.push_back({c.value("amplitude", 1.0), c.value("fx", 0.0),
                                         c.value("fy", 0.0), c.value("phase", 0.0)});
            }
            spec.bands.push_back(std::move(bs));
        }
        return spec;
    } catch (const json::exception& e) {
        throw FormatError(std::string("synthetic spec: ") + e.what());
    }
}

}  // namespace implisat
