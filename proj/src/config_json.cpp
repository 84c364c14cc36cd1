#include "implisat/config_json.hpp"

#include <set>
#include <string>

#include "implisat/errors.hpp"

namespace implisat {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
    if (!j.is_object()) {
        throw ConfigError(std::string(what) + " config must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError(std::string("unknown ") + what + " config key '" + key + "'");
        }
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

}  // namespace

json to_json_value(const ModelConfig& c) {
    return {{"layers", c.layers},
            {"hidden", c.hidden},
            {"rank", c.rank},
            {"hyper_layers", c.hyper_layers},
            {"hyper_width", c.hyper_width},
            {"mode", to_string(c.mode)},
            {"omega0", c.omega0},
            {"n_channels", c.n_channels},
            {"resolutions", c.resolutions},
            {"seed", c.seed},
            {"enforce_low_rank", c.enforce_low_rank}};
}

json to_json_value(const TrainConfig& c) {
    return {{"iterations", c.iterations},
            {"lr", c.lr},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps},
            {"batch_per_band", c.batch_per_band},
            {"early_stop_patience", c.early_stop_patience},
            {"early_stop_min_delta", c.early_stop_min_delta},
            {"log_every", c.log_every},
            {"seed", c.seed}};
}

void apply_json(const json& j, ModelConfig& c) {
    reject_unknown(j,
                   {"layers", "hidden", "rank", "hyper_layers", "hyper_width", "mode", "omega0",
                    "n_channels", "resolutions", "seed", "enforce_low_rank"},
                   "model");
    read(j, "layers", c.layers);
    read(j, "hidden", c.hidden);
    read(j, "rank", c.rank);
    read(j, "hyper_layers", c.hyper_layers);
    read(j, "hyper_width", c.hyper_width);
    if (j.contains("mode")) {
        std::string mode;
        read(j, "mode", mode);
        c.mode = parse_mode(mode);
    }
    read(j, "omega0", c.omega0);
    read(j, "n_channels", c.n_channels);
    read(j, "resolutions", c.resolutions);
    read(j, "seed", c.seed);
    read(j, "enforce_low_rank", c.enforce_low_rank);
}

void apply_json(const json& j, TrainConfig& c) {
    reject_unknown(j,
                   {"iterations", "lr", "adam_beta1", "adam_beta2", "adam_eps", "batch_per_band",
                    "early_stop_patience", "early_stop_min_delta", "log_every", "seed"},
                   "train");
    read(j, "iterations", c.iterations);
    read(j, "lr", c.lr);
    read(j, "adam_beta1", c.adam_beta1);
    read(j, "adam_beta2", c.adam_beta2);
    read(j, "adam_eps", c.adam_eps);
    read(j, "batch_per_band", c.batch_per_band);
    read(j, "early_stop_patience", c.early_stop_patience);
    read(j, "early_stop_min_delta", c.early_stop_min_delta);
    read(j, "log_every", c.log_every);
    read(j, "seed", c.seed);
}

}  // namespace implisat
