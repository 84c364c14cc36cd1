#include "implisat/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "implisat/errors.hpp"

namespace implisat {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Head weights start this much below He-uniform so the initial modulations
// are close to their bias values and differ only mildly between bands.
constexpr double kHeadInitDivisor = 4.0;

std::string layer_name(const char* group, std::size_t index, const char* field) {
    return std::string(group) + "[" + std::to_string(index) + "]." + field;
}

DenseLayer make_dense(Rng& rng, std::size_t out, std::size_t in, double weight_bound,
                      double bias_bound) {
    DenseLayer layer;
    layer.weight = uniform(rng, out, in, -weight_bound, weight_bound);
    layer.bias = bias_bound > 0.0 ? uniform(rng, 1, out, -bias_bound, bias_bound)
                                  : Matrix::zeros(1, out);
    return layer;
}

Matrix relu(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    }
    return out;
}

Matrix linear(const Matrix& x, const DenseLayer& layer) {
    return add(matmul_nt(x, layer.weight), layer.bias);
}

void check_coordinates(const Matrix& coords) {
    if (coords.cols() != 2) {
        throw ShapeError("forward: coordinates must be k x 2, got " + coords.shape_str());
    }
    for (double v : coords.data()) {
        if (!(v >= -1.0 && v <= 1.0)) {
            throw DomainError("forward: coordinate " + std::to_string(v) +
                              " outside [-1, 1]");
        }
    }
}

Modulation modulation_from_head(const ModelParams& params, std::span<const double> head,
                                Matrix* phase_out) {
    const ModelConfig& cfg = params.config;
    Modulation mod;
    mod.mode = cfg.mode;
    switch (cfg.mode) {
        case ModulationMode::fourier: {
            const auto m = static_cast<std::size_t>(cfg.rank);
            const std::size_t mm = m * m;
            Matrix phase(m, m);
            for (std::size_t i = 0; i < mm; ++i) {
                phase.data()[i] = head[i] * params.z.data()[i] + head[mm + i];
            }
            mod.payload = map_cos(phase);
            if (phase_out != nullptr) {
                *phase_out = std::move(phase);
            }
            break;
        }
        case ModulationMode::shift:
            mod.payload = Matrix(1, head.size(), std::vector<double>(head.begin(), head.end()));
            break;
        case ModulationMode::scale: {
            Matrix kappa(1, head.size());
            for (std::size_t i = 0; i < head.size(); ++i) {
                kappa.data()[i] = 1.0 + head[i];
            }
            mod.payload = std::move(kappa);
            break;
        }
        case ModulationMode::none:
            throw ModeError("hypernetwork is not used in mode 'none'");
    }
    return mod;
}

void validate_condition(const ModelConfig& cfg, double eta_norm, int channel) {
    if (!(eta_norm > 0.0 && eta_norm <= 1.0)) {
        throw DomainError("condition: eta_norm " + std::to_string(eta_norm) +
                          " outside (0, 1]");
    }
    if (channel < 0 || channel >= cfg.n_channels) {
        throw ConfigError("condition: channel " + std::to_string(channel) + " outside [0, " +
                          std::to_string(cfg.n_channels) + ")");
    }
}

}  // namespace

std::string to_string(ModulationMode mode) {
    switch (mode) {
        case ModulationMode::fourier: return "fourier";
        case ModulationMode::shift: return "shift";
        case ModulationMode::scale: return "scale";
        case ModulationMode::none: return "none";
    }
    return "unknown";
}

ModulationMode parse_mode(std::string_view text) {
    if (text == "fourier") return ModulationMode::fourier;
    if (text == "shift") return ModulationMode::shift;
    if (text == "scale") return ModulationMode::scale;
    if (text == "none") return ModulationMode::none;
    throw ConfigError("unknown modulation mode '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
    if (layers < 3) {
        throw ConfigError("layers must be >= 3, got " + std::to_string(layers));
    }
    if (hidden < 1) {
        throw ConfigError("hidden width must be >= 1, got " + std::to_string(hidden));
    }
    if (mode == ModulationMode::fourier) {
        if (rank < 1 || rank > hidden) {
            throw ConfigError("rank m must satisfy 1 <= m <= n, got m=" + std::to_string(rank) +
                              " n=" + std::to_string(hidden));
        }
        if (enforce_low_rank && rank * 4 > hidden) {
            throw ConfigError("fourier mode expects m <= n/4, got m=" + std::to_string(rank) +
                              " n=" + std::to_string(hidden));
        }
    }
    if (mode != ModulationMode::none && (hyper_layers < 1 || hyper_width < 1)) {
        throw ConfigError("hypernetwork needs >= 1 layer and width >= 1");
    }
    if (n_channels < 1) {
        throw ConfigError("n_channels must be >= 1");
    }
    if (!(omega0 > 0.0) || !std::isfinite(omega0)) {
        throw ConfigError("omega0 must be positive and finite");
    }
    if (resolutions.empty()) {
        throw ConfigError("resolutions must list at least one GSD");
    }
    for (double r : resolutions) {
        if (!(r > 0.0) || !std::isfinite(r)) {
            throw ConfigError("resolutions must be positive, got " + std::to_string(r));
        }
    }
}

int ModelConfig::head_width() const {
    switch (mode) {
        case ModulationMode::fourier: return 2 * rank * rank;
        case ModulationMode::shift:
        case ModulationMode::scale: return hidden;
        case ModulationMode::none: return 0;
    }
    return 0;
}

double ModelConfig::max_resolution() const {
    return *std::max_element(resolutions.begin(), resolutions.end());
}

double ModelConfig::eta_norm(double gsd_m) const {
    const double top = max_resolution();
    if (!(gsd_m > 0.0) || gsd_m > top) {
        throw DomainError("GSD " + std::to_string(gsd_m) + " m outside (0, " +
                          std::to_string(top) + "]");
    }
    return gsd_m / top;
}

void ParameterSet::for_each(const std::function<void(const std::string&, Matrix&)>& visit) {
    visit("first.weight", first.weight);
    visit("first.bias", first.bias);
    for (std::size_t i = 0; i < low_rank.size(); ++i) {
        visit(layer_name("hidden", i, "alpha"), low_rank[i].alpha);
        visit(layer_name("hidden", i, "beta"), low_rank[i].beta);
        visit(layer_name("hidden", i, "bias"), low_rank[i].bias);
    }
    for (std::size_t i = 0; i < dense.size(); ++i) {
        visit(layer_name("hidden", i, "weight"), dense[i].weight);
        visit(layer_name("hidden", i, "bias"), dense[i].bias);
    }
    visit("output.weight", output.weight);
    visit("output.bias", output.bias);
    for (std::size_t i = 0; i < hyper.size(); ++i) {
        visit(layer_name("hyper", i, "weight"), hyper[i].weight);
        visit(layer_name("hyper", i, "bias"), hyper[i].bias);
    }
}

void ParameterSet::for_each(
    const std::function<void(const std::string&, const Matrix&)>& visit) const {
    const_cast<ParameterSet*>(this)->for_each(
        [&visit](const std::string& name, Matrix& m) { visit(name, m); });
}

std::vector<Matrix*> ParameterSet::arrays() {
    std::vector<Matrix*> out;
    for_each([&out](const std::string&, Matrix& m) { out.push_back(&m); });
    return out;
}

std::vector<const Matrix*> ParameterSet::arrays() const {
    std::vector<const Matrix*> out;
    for_each([&out](const std::string&, const Matrix& m) { out.push_back(&m); });
    return out;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t total = 0;
    for (const Matrix* m : arrays()) {
        total += m->size();
    }
    return total;
}

ParameterSet ParameterSet::zeros_like() const {
    ParameterSet out = *this;
    for (Matrix* m : out.arrays()) {
        m->fill(0.0);
    }
    return out;
}

std::size_t trainable_count(const ModelConfig& config) {
    config.validate();
    const std::size_t n = config.hidden;
    const std::size_t m = config.rank;
    const std::size_t hidden_layers = config.modulated_layers();
    std::size_t total = 3 * n + (n + 1);
    if (config.mode == ModulationMode::fourier) {
        total += hidden_layers * (2 * n * m + n);
    } else {
        total += hidden_layers * (n * n + n);
    }
    if (config.mode != ModulationMode::none) {
        std::size_t in = config.hyper_input_width();
        for (int j = 0; j + 1 < config.hyper_layers; ++j) {
            total += in * config.hyper_width + config.hyper_width;
            in = config.hyper_width;
        }
        total += in * config.head_width() + config.head_width();
    }
    return total;
}

ModelParams init_params(const ModelConfig& config, Rng& rng) {
    config.validate();
    ModelParams params;
    params.config = config;
    const auto n = static_cast<std::size_t>(config.hidden);
    const auto m = static_cast<std::size_t>(config.rank);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    ParameterSet& w = params.weights;

    // First layer: U(-1/fan_in, 1/fan_in) with fan_in 2, omega0 applied in forward.
    w.first = make_dense(rng, n, 2, 0.5, 1.0 / std::sqrt(2.0));

    const std::size_t hidden_layers = config.modulated_layers();
    if (config.mode == ModulationMode::fourier) {
        // Factor variance chosen so alpha * f * beta has variance 2/n (the
        // U(-sqrt(6/n), sqrt(6/n)) SIREN regime) when f has variance 1/2.
        const double factor_bound =
            std::sqrt(6.0 / (static_cast<double>(m) * std::sqrt(static_cast<double>(n))));
        for (std::size_t l = 0; l < hidden_layers; ++l) {
            LowRankLayer layer;
            layer.alpha = uniform(rng, n, m, -factor_bound, factor_bound);
            layer.beta = uniform(rng, m, n, -factor_bound, factor_bound);
            layer.bias = uniform(rng, 1, n, -inv_sqrt_n, inv_sqrt_n);
            w.low_rank.push_back(std::move(layer));
        }
    } else {
        const double bound = std::sqrt(6.0 / static_cast<double>(n));
        for (std::size_t l = 0; l < hidden_layers; ++l) {
            w.dense.push_back(make_dense(rng, n, n, bound, inv_sqrt_n));
        }
    }

    w.output = make_dense(rng, 1, n, std::sqrt(6.0 / static_cast<double>(n)) / config.omega0, 0.0);
    w.output.bias(0, 0) = 0.5;  // middle of the normalized pixel range

    if (config.mode != ModulationMode::none) {
        std::size_t in = config.hyper_input_width();
        for (int j = 0; j + 1 < config.hyper_layers; ++j) {
            const auto width = static_cast<std::size_t>(config.hyper_width);
            w.hyper.push_back(make_dense(rng, width, in, std::sqrt(6.0 / static_cast<double>(in)),
                                         1.0 / std::sqrt(static_cast<double>(in))));
            in = width;
        }
        const auto head = static_cast<std::size_t>(config.head_width());
        DenseLayer head_layer;
        head_layer.weight = uniform(rng, head, in, -std::sqrt(6.0 / static_cast<double>(in)) / kHeadInitDivisor,
                                    std::sqrt(6.0 / static_cast<double>(in)) / kHeadInitDivisor);
        head_layer.bias = Matrix::zeros(1, head);
        if (config.mode == ModulationMode::fourier) {
            // Omega starts at 1 so Omega ⊙ Z spans Z's range; random phases
            // make the initial f_mod full rank despite Z's identical rows.
            const std::size_t mm = m * m;
            for (std::size_t i = 0; i < mm; ++i) {
                head_layer.bias(0, i) = 1.0;
            }
            for (std::size_t i = 0; i < mm; ++i) {
                head_layer.bias(0, mm + i) = rng.uniform(-std::numbers::pi, std::numbers::pi);
            }
        }
        w.hyper.push_back(std::move(head_layer));
    }

    if (config.mode == ModulationMode::fourier) {
        const Matrix sample = uniform(rng, 1, m, -kTwoPi, kTwoPi);
        params.z = Matrix(m, m);
        for (std::size_t r = 0; r < m; ++r) {
            std::copy(sample.data().begin(), sample.data().end(), params.z.row(r).begin());
        }
    }
    return params;
}

ModelParams init_params(const ModelConfig& config) {
    Rng rng(derive_seed(config.seed, 1));
    return init_params(config, rng);
}

Matrix condition_row(const ModelConfig& config, const ConditionVector& cond) {
    validate_condition(config, cond.eta_norm, cond.channel);
    if (cond.layer < 0 || cond.layer >= config.modulated_layers()) {
        throw ConfigError("condition: hidden layer " + std::to_string(cond.layer) +
                          " outside [0, " + std::to_string(config.modulated_layers()) + ")");
    }
    Matrix row(1, config.hyper_input_width());
    row(0, 0) = cond.eta_norm;
    row(0, 1 + cond.channel) = 1.0;
    row(0, 1 + config.n_channels + cond.layer) = 1.0;
    return row;
}

Matrix hyper_mlp(const ModelParams& params, const Matrix& input, HyperTrace* trace) {
    const auto& layers = params.weights.hyper;
    if (layers.empty()) {
        throw ModeError("model has no hypernetwork (mode 'none')");
    }
    if (input.cols() != static_cast<std::size_t>(params.config.hyper_input_width())) {
        throw ShapeError("hyper_mlp: input " + input.shape_str() + " but expected width " +
                         std::to_string(params.config.hyper_input_width()));
    }
    if (trace != nullptr) {
        trace->input = input;
        trace->pre.clear();
        trace->act.clear();
    }
    Matrix x = input;
    for (std::size_t j = 0; j < layers.size(); ++j) {
        Matrix pre = linear(x, layers[j]);
        if (j + 1 == layers.size()) {
            if (trace != nullptr) {
                trace->pre.push_back(pre);
            }
            return pre;
        }
        x = relu(pre);
        if (trace != nullptr) {
            trace->pre.push_back(std::move(pre));
            trace->act.push_back(x);
        }
    }
    return x;
}

Modulation hyper_forward(const ModelParams& params, const ConditionVector& cond) {
    if (params.config.mode == ModulationMode::none) {
        throw ModeError("hyper_forward: model is in mode 'none'");
    }
    const Matrix head = hyper_mlp(params, condition_row(params.config, cond));
    return modulation_from_head(params, head.row(0), nullptr);
}

BandModulations modulate_band(const ModelParams& params, const BandCondition& cond) {
    const ModelConfig& cfg = params.config;
    validate_condition(cfg, cond.eta_norm, cond.channel);
    BandModulations mods;
    mods.condition = cond;
    if (cfg.mode == ModulationMode::none) {
        return mods;
    }
    const int hidden_layers = cfg.modulated_layers();
    Matrix input(hidden_layers, cfg.hyper_input_width());
    for (int l = 0; l < hidden_layers; ++l) {
        input(l, 0) = cond.eta_norm;
        input(l, 1 + cond.channel) = 1.0;
        input(l, 1 + cfg.n_channels + l) = 1.0;
    }
    const Matrix head = hyper_mlp(params, input, &mods.hyper);
    for (int l = 0; l < hidden_layers; ++l) {
        Matrix phase;
        mods.layers.push_back(modulation_from_head(params, head.row(l), &phase));
        if (cfg.mode == ModulationMode::fourier) {
            mods.phase.push_back(std::move(phase));
        }
    }
    return mods;
}

Matrix frequency_component(const ModelParams& params, const ConditionVector& cond) {
    if (params.config.mode != ModulationMode::fourier) {
        throw ModeError("frequency_component requires fourier mode, model is " +
                        to_string(params.config.mode));
    }
    const Matrix head = hyper_mlp(params, condition_row(params.config, cond));
    const auto m = static_cast<std::size_t>(params.config.rank);
    Matrix freq(m, m);
    for (std::size_t i = 0; i < m * m; ++i) {
        freq.data()[i] = head(0, i) * params.z.data()[i];
    }
    return freq;
}

Matrix assemble_weight(const ModelParams& params, int layer, const Modulation& mod) {
    if (params.config.mode != ModulationMode::fourier || mod.mode != ModulationMode::fourier) {
        throw ModeError("assemble_weight requires fourier mode");
    }
    if (layer < 2 || layer > params.config.layers - 1) {
        throw DomainError("assemble_weight: layer " + std::to_string(layer) +
                          " outside [2, L-1]");
    }
    const LowRankLayer& lr = params.weights.low_rank[static_cast<std::size_t>(layer - 2)];
    return matmul(matmul(lr.alpha, mod.payload), lr.beta);
}

Matrix forward_modulated(const ModelParams& params, const Matrix& coords,
                         const BandModulations& mods, ForwardTrace* trace) {
    check_coordinates(coords);
    const ModelConfig& cfg = params.config;
    const ParameterSet& w = params.weights;
    const auto hidden_layers = static_cast<std::size_t>(cfg.modulated_layers());
    if (cfg.mode != ModulationMode::none && mods.layers.size() != hidden_layers) {
        throw ShapeError("forward: expected " + std::to_string(hidden_layers) +
                         " modulations, got " + std::to_string(mods.layers.size()));
    }
    if (trace != nullptr) {
        *trace = ForwardTrace{};
        trace->inputs = coords;
        trace->modulations = mods;
    }

    Matrix pre = scale(linear(coords, w.first), cfg.omega0);
    Matrix h = map_sin(pre);
    if (trace != nullptr) {
        trace->pre.push_back(std::move(pre));
        trace->post.push_back(h);
    }

    for (std::size_t l = 0; l < hidden_layers; ++l) {
        switch (cfg.mode) {
            case ModulationMode::fourier: {
                const LowRankLayer& lr = w.low_rank[l];
                Matrix rank_in = matmul_nt(h, lr.beta);
                Matrix rank_mid = matmul_nt(rank_in, mods.layers[l].payload);
                pre = add(matmul_nt(rank_mid, lr.alpha), lr.bias);
                if (trace != nullptr) {
                    trace->rank_in.push_back(std::move(rank_in));
                    trace->rank_mid.push_back(std::move(rank_mid));
                }
                break;
            }
            case ModulationMode::shift:
                pre = add(linear(h, w.dense[l]), mods.layers[l].payload);
                break;
            case ModulationMode::scale: {
                Matrix lin = linear(h, w.dense[l]);
                pre = Matrix(lin.rows(), lin.cols());
                const Matrix& kappa = mods.layers[l].payload;
                for (std::size_t r = 0; r < lin.rows(); ++r) {
                    for (std::size_t j = 0; j < lin.cols(); ++j) {
                        pre(r, j) = kappa(0, j) * lin(r, j);
                    }
                }
                if (trace != nullptr) {
                    trace->linear.push_back(std::move(lin));
                }
                break;
            }
            case ModulationMode::none:
                pre = linear(h, w.dense[l]);
                break;
        }
        h = map_sin(pre);
        if (trace != nullptr) {
            trace->pre.push_back(std::move(pre));
            trace->post.push_back(h);
        }
    }
    return linear(h, w.output);
}

Matrix forward(const ModelParams& params, const Matrix& coords, const BandCondition& cond,
               ForwardTrace* trace) {
    return forward_modulated(params, coords, modulate_band(params, cond), trace);
}

Matrix forward_lenient(const ModelParams& params, const Matrix& coords, const BandCondition& cond,
                       std::size_t& clamped) {
    Matrix safe = coords;
    clamped = 0;
    for (double& v : safe.data()) {
        if (std::isnan(v)) {
            throw DomainError("forward: NaN coordinate");
        }
        const double c = std::clamp(v, -1.0, 1.0);
        if (c != v) {
            ++clamped;
            v = c;
        }
    }
    return forward(params, safe, cond);
}

}  // namespace implisat
