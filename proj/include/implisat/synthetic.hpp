#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "implisat/dataio.hpp"

namespace implisat {

/// a * sin(2*pi*(fx*x + fy*y) + phase), frequencies in cycles per unit of
/// the [-1, 1] coordinate (so a band spans 2*f cycles per axis).
struct SinusoidComponent {
    double amplitude = 1.0;
    double fx = 0.0;
    double fy = 0.0;
    double phase = 0.0;
};

struct SyntheticBandSpec {
    std::string name;
    double gsd_m = 10.0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<SinusoidComponent> components;
    double noise = 0.0;  // half-width of uniform noise, same units as amplitude
};

struct SyntheticSpec {
    std::vector<SyntheticBandSpec> bands;
    std::uint64_t seed = 0;
};

/// Three bands whose detail shrinks with GSD: 64x64 at 10 m (up to 12
/// cycles), 32x32 at 20 m (up to 6), 16x16 at 60 m (up to 2), noise 0.01.
SyntheticSpec default_synthetic_spec(std::uint64_t seed = 0);

/// Evaluates each band at pixel centres:
///   0.5 + 0.5 * (sum_i a_i sin(...) + noise) / (sum_i |a_i| + noise)
/// clamped to [0, 1] and rounded to f32 (the on-disk sample type).
/// Bands with neither components nor noise come out constant; their names
/// are appended to `degenerate` when given.
MultibandImage generate(const SyntheticSpec& spec, std::vector<std::string>* degenerate = nullptr);

std::string synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const std::string& text);

}  // namespace implisat
