#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "implisat/rng.hpp"
#include "implisat/tensor.hpp"

namespace implisat {

enum class ModulationMode { fourier, shift, scale, none };

std::string to_string(ModulationMode mode);
ModulationMode parse_mode(std::string_view text);

struct ModelConfig {
    int layers = 6;        // backbone depth L, counting first and output layers
    int hidden = 256;      // backbone width n
    int rank = 32;         // modulation rank m (fourier mode)
    int hyper_layers = 3;  // dense layers in the hypernetwork, head included
    int hyper_width = 64;
    ModulationMode mode = ModulationMode::fourier;
    double omega0 = 30.0;
    int n_channels = 13;
    std::vector<double> resolutions{10.0, 20.0, 60.0};
    std::uint64_t seed = 0;
    // Fourier mode requires rank <= hidden / 4 unless this is cleared.
    bool enforce_low_rank = true;

    void validate() const;

    int modulated_layers() const { return layers - 2; }
    int hyper_input_width() const { return 1 + n_channels + modulated_layers(); }
    int head_width() const;
    double max_resolution() const;
    /// GSD divided by the coarsest configured resolution.
    double eta_norm(double gsd_m) const;

    bool operator==(const ModelConfig&) const = default;
};

struct DenseLayer {
    Matrix weight;  // out x in
    Matrix bias;    // 1 x out
};

/// Hidden layer whose weight is alpha * f_mod * beta.
struct LowRankLayer {
    Matrix alpha;  // n x m
    Matrix beta;   // m x n
    Matrix bias;   // 1 x n
};

/// All trainable arrays of one model. The same structure doubles as the
/// gradient container and as Adam moment storage.
struct ParameterSet {
    DenseLayer first;                   // n x 2 acting on coordinates
    std::vector<LowRankLayer> low_rank; // fourier mode hidden layers
    std::vector<DenseLayer> dense;      // shift / scale / none hidden layers
    DenseLayer output;                  // 1 x n
    std::vector<DenseLayer> hyper;      // hypernetwork, head last

    /// Visits arrays in the canonical order: first layer, hidden layers
    /// ascending, output layer, hypernetwork layers ascending.
    void for_each(const std::function<void(const std::string&, Matrix&)>& visit);
    void for_each(const std::function<void(const std::string&, const Matrix&)>& visit) const;

    std::vector<Matrix*> arrays();
    std::vector<const Matrix*> arrays() const;
    std::size_t scalar_count() const;
    ParameterSet zeros_like() const;
};

using GradientSet = ParameterSet;

struct ModelParams {
    ModelConfig config;
    ParameterSet weights;
    Matrix z;  // m x m sample matrix, fourier mode only; never trained
};

/// Trainable scalar count derived from the config alone.
std::size_t trainable_count(const ModelConfig& config);

ModelParams init_params(const ModelConfig& config, Rng& rng);
/// Seeds the initializer from config.seed.
ModelParams init_params(const ModelConfig& config);

/// Per-band conditioning: normalized GSD and channel index.
struct BandCondition {
    double eta_norm = 1.0;
    int channel = 0;
};

/// Hypernetwork input for one hidden layer of one band.
struct ConditionVector {
    double eta_norm = 1.0;
    int channel = 0;
    int layer = 0;  // 0-based hidden-layer index (backbone layer layer + 2)
};

/// [eta_norm, one-hot channel, one-hot layer] as a 1 x hyper_input_width row.
Matrix condition_row(const ModelConfig& config, const ConditionVector& cond);

struct Modulation {
    ModulationMode mode = ModulationMode::none;
    Matrix payload;  // fourier: m x m f_mod; shift: 1 x n mu; scale: 1 x n kappa
};

struct HyperTrace {
    Matrix input;             // one condition row per hidden layer
    std::vector<Matrix> pre;  // pre-activation of every hypernetwork layer
    std::vector<Matrix> act;  // ReLU output of every non-head layer
};

/// Hypernetwork output for every hidden layer of one band, plus what the
/// reverse pass needs.
struct BandModulations {
    BandCondition condition;
    HyperTrace hyper;
    std::vector<Modulation> layers;
    std::vector<Matrix> phase;  // fourier: Omega ⊙ Z + phi per layer
};

/// Runs the hypernetwork MLP on a stack of condition rows (ReLU trunk,
/// linear head).
Matrix hyper_mlp(const ModelParams& params, const Matrix& input, HyperTrace* trace = nullptr);

Modulation hyper_forward(const ModelParams& params, const ConditionVector& cond);
BandModulations modulate_band(const ModelParams& params, const BandCondition& cond);

/// Omega ⊙ Z for one hidden layer of one band (fourier mode).
Matrix frequency_component(const ModelParams& params, const ConditionVector& cond);

/// W^l = alpha * f_mod * beta for backbone layer index 2 <= layer <= L-1.
Matrix assemble_weight(const ModelParams& params, int layer, const Modulation& mod);

struct ForwardTrace {
    Matrix inputs;                  // k x 2
    BandModulations modulations;
    std::vector<Matrix> pre;        // sine arguments, first layer then hidden
    std::vector<Matrix> post;       // sine outputs
    std::vector<Matrix> rank_in;    // fourier: H * beta^T
    std::vector<Matrix> rank_mid;   // fourier: rank_in * f^T
    std::vector<Matrix> linear;     // scale: H * W^T + b before kappa
};

/// Predictions (k x 1) in the normalized pixel domain. Coordinates must lie
/// in [-1, 1]; anything else raises DomainError.
Matrix forward(const ModelParams& params, const Matrix& coords, const BandCondition& cond,
               ForwardTrace* trace = nullptr);

/// Same as forward but with precomputed modulations, which are pure in
/// (params, condition) and can be shared across calls.
Matrix forward_modulated(const ModelParams& params, const Matrix& coords,
                         const BandModulations& mods, ForwardTrace* trace = nullptr);

/// Clamps out-of-range coordinates instead of rejecting them; `clamped`
/// receives the number of adjusted entries.
Matrix forward_lenient(const ModelParams& params, const Matrix& coords, const BandCondition& cond,
                       std::size_t& clamped);

}  // namespace implisat
