#include "implisat/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "implisat/metrics.hpp"
#include "implisat/parallel.hpp"

namespace implisat {

void TrainConfig::validate() const {
    if (iterations < 1) {
        throw ConfigError("iterations must be >= 1, got " + std::to_string(iterations));
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ConfigError("lr must be positive, got " + std::to_string(lr));
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) {
        throw ConfigError("adam_eps must be positive");
    }
    if (batch_per_band < 1) {
        throw ConfigError("batch_per_band must be >= 1");
    }
    if (early_stop_patience < 0 || !(early_stop_min_delta >= 0.0)) {
        throw ConfigError("early stopping needs patience >= 0 and min_delta >= 0");
    }
    if (log_every < 1) {
        throw ConfigError("log_every must be >= 1, got " + std::to_string(log_every));
    }
}

AdamState AdamState::zeros_like(const ParameterSet& params) {
    AdamState state;
    state.first_moment = params.zeros_like();
    state.second_moment = params.zeros_like();
    return state;
}

void adam_update(ParameterSet& params, AdamState& state, const GradientSet& grads,
                 const TrainConfig& config) {
    const auto p = params.arrays();
    const auto g = grads.arrays();
    const auto m = state.first_moment.arrays();
    const auto v = state.second_moment.arrays();
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
        throw ShapeError("adam_update: parameter, gradient and moment sets differ in layout");
    }
    state.step += 1;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t a = 0; a < p.size(); ++a) {
        if (!p[a]->same_shape(*g[a]) || !p[a]->same_shape(*m[a]) || !p[a]->same_shape(*v[a])) {
            throw ShapeError("adam_update: array " + std::to_string(a) + " has parameter shape " +
                             p[a]->shape_str() + " but gradient shape " + g[a]->shape_str());
        }
        auto pv = p[a]->data();
        const auto gv = g[a]->data();
        auto mv = m[a]->data();
        auto vv = v[a]->data();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            mv[i] = b1 * mv[i] + (1.0 - b1) * gv[i];
            vv[i] = b2 * vv[i] + (1.0 - b2) * gv[i] * gv[i];
            const double m_hat = mv[i] / c1;
            const double v_hat = vv[i] / c2;
            pv[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
        }
    }
}

double mse_loss(const Matrix& predictions, const Matrix& targets) {
    if (!predictions.same_shape(targets)) {
        throw ShapeError("loss: predictions " + predictions.shape_str() + " vs targets " +
                         targets.shape_str());
    }
    if (predictions.empty()) {
        throw ShapeError("loss: empty batch");
    }
    return summed_squared_error(predictions, targets) / static_cast<double>(predictions.size());
}

void check_compatible(const MultibandImage& image, const ModelConfig& config) {
    image.validate();
    config.validate();
    if (image.bands.size() > static_cast<std::size_t>(config.n_channels)) {
        throw ConfigError("image has " + std::to_string(image.bands.size()) +
                          " bands but the model conditions on " + std::to_string(config.n_channels) +
                          " channels");
    }
    for (const Band& band : image.bands) {
        bool listed = false;
        for (double r : config.resolutions) {
            listed = listed || r == band.gsd_m;
        }
        if (!listed) {
            throw ConfigError("band '" + band.name + "' has GSD " + std::to_string(band.gsd_m) +
                              " m, which is not among the model resolutions");
        }
    }
}

TrainingSet TrainingSet::build(const MultibandImage& image, const ModelConfig& config) {
    check_compatible(image, config);
    TrainingSet set;
    for (std::size_t b = 0; b < image.bands.size(); ++b) {
        const Band& band = image.bands[b];
        set.names.push_back(band.name);
        set.grids.push_back(make_grid(band));
        set.conditions.push_back({config.eta_norm(band.gsd_m), static_cast<int>(b)});
    }
    return set;
}

BatchSampler::BatchSampler(const TrainingSet& data, std::size_t batch_per_band, std::uint64_t seed)
    : data_(&data), batch_(batch_per_band), rng_(seed) {
    if (batch_ == 0) {
        throw ConfigError("batch_per_band must be >= 1");
    }
    for (const CoordGrid& grid : data.grids) {
        std::vector<std::size_t> order(grid.coords.rows());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        order_.push_back(std::move(order));
    }
}

std::vector<BandBatch> BatchSampler::draw() {
    std::vector<BandBatch> batches;
    for (std::size_t b = 0; b < data_->grids.size(); ++b) {
        const CoordGrid& grid = data_->grids[b];
        auto& order = order_[b];
        const std::size_t n = order.size();
        BandBatch batch;
        batch.condition = data_->conditions[b];
        batch.coords = Matrix(batch_, 2);
        batch.targets = Matrix(batch_, 1);
        for (std::size_t i = 0; i < batch_; ++i) {
            std::size_t pick;
            if (n >= batch_) {
                // Partial Fisher-Yates: the first batch_ slots become a
                // uniform sample without replacement.
                const std::size_t j = i + static_cast<std::size_t>(rng_.below(n - i));
                std::swap(order[i], order[j]);
                pick = order[i];
            } else {
                pick = static_cast<std::size_t>(rng_.below(n));
            }
            batch.coords(i, 0) = grid.coords(pick, 0);
            batch.coords(i, 1) = grid.coords(pick, 1);
            batch.targets(i, 0) = grid.targets(pick, 0);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

double train_step(ModelParams& params, AdamState& adam, BatchSampler& sampler,
                  const TrainConfig& config, long iteration) {
    const std::vector<BandBatch> batches = sampler.draw();
    GradientSet grads = params.weights.zeros_like();
    double sse = 0.0;
    std::size_t samples = 0;
    for (const BandBatch& batch : batches) {
        const BandModulations mods = modulate_band(params, batch.condition);
        ForwardTrace trace;
        const Matrix pred = forward_modulated(params, batch.coords, mods, &trace);
        const Matrix residual = subtract(pred, batch.targets);
        sse += summed_squared_error(pred, batch.targets);
        samples += batch.targets.size();
        const GradientSet band_grads = backward(trace, params, residual);
        const auto acc = grads.arrays();
        const auto src = band_grads.arrays();
        for (std::size_t a = 0; a < acc.size(); ++a) {
            accumulate(*acc[a], *src[a]);
        }
    }
    const double loss = sse / static_cast<double>(samples);
    if (!std::isfinite(loss)) {
        throw DivergenceError(iteration, loss);
    }
    const double inv = 1.0 / static_cast<double>(samples);
    for (Matrix* g : grads.arrays()) {
        for (double& v : g->data()) {
            v *= inv;
        }
        if (!all_finite(*g)) {
            throw DivergenceError(iteration, loss);
        }
    }
    adam_update(params.weights, adam, grads, config);
    return loss;
}

Matrix predict(const ModelParams& params, const Matrix& coords, const BandCondition& cond,
               std::size_t chunk_rows) {
    if (chunk_rows == 0) {
        throw ConfigError("evaluation chunk size must be >= 1");
    }
    const BandModulations mods = modulate_band(params, cond);
    const std::size_t rows = coords.rows();
    Matrix out(rows, 1);
    const std::size_t chunks = (rows + chunk_rows - 1) / chunk_rows;
    const std::size_t per_row = static_cast<std::size_t>(params.config.hidden) *
                                static_cast<std::size_t>(params.config.hidden + 2) *
                                static_cast<std::size_t>(params.config.layers);
    parallel_for(chunks, rows * per_row, [&](std::size_t begin, std::size_t end) {
        for (std::size_t c = begin; c < end; ++c) {
            const std::size_t r0 = c * chunk_rows;
            const std::size_t r1 = std::min(rows, r0 + chunk_rows);
            Matrix part(r1 - r0, 2);
            for (std::size_t r = r0; r < r1; ++r) {
                part(r - r0, 0) = coords(r, 0);
                part(r - r0, 1) = coords(r, 1);
            }
            const Matrix pred = forward_modulated(params, part, mods);
            for (std::size_t r = r0; r < r1; ++r) {
                out(r, 0) = pred(r - r0, 0);
            }
        }
    });
    return out;
}

std::vector<double> evaluate_bands(const ModelParams& params, const TrainingSet& data) {
    std::vector<double> mse;
    for (std::size_t b = 0; b < data.grids.size(); ++b) {
        const Matrix pred = predict(params, data.grids[b].coords, data.conditions[b]);
        mse.push_back(mse_loss(pred, data.grids[b].targets));
    }
    return mse;
}

double pooled_mse(const std::vector<double>& band_mse, const TrainingSet& data) {
    double sse = 0.0;
    std::size_t pixels = 0;
    for (std::size_t b = 0; b < band_mse.size(); ++b) {
        const std::size_t n = data.grids[b].targets.size();
        sse += band_mse[b] * static_cast<double>(n);
        pixels += n;
    }
    return pixels == 0 ? 0.0 : sse / static_cast<double>(pixels);
}

std::string TrainLog::to_csv() const {
    std::string out = "iteration,loss,mse,psnr,best_mse";
    for (const std::string& name : band_names) {
        out += ",psnr_" + name;
    }
    out += "\n";
    for (const LogEntry& e : entries) {
        out += std::to_string(e.iteration) + "," + format_metric(e.loss) + "," +
               format_metric(e.mse) + "," + format_metric(e.psnr) + "," +
               format_metric(e.best_mse);
        for (double p : e.band_psnr) {
            out += "," + format_metric(p);
        }
        out += "\n";
    }
    return out;
}

FitResult fit(const MultibandImage& image, const ModelConfig& model_config,
              const TrainConfig& train_config, const FitObserver& observer) {
    model_config.validate();
    return fit_from(image, init_params(model_config), train_config, observer);
}

FitResult fit_from(const MultibandImage& image, ModelParams initial, const TrainConfig& train_config,
                   const FitObserver& observer) {
    train_config.validate();
    const TrainingSet data = TrainingSet::build(image, initial.config);
    BatchSampler sampler(data, train_config.batch_per_band, derive_seed(train_config.seed, 2));
    const auto started = std::chrono::steady_clock::now();

    ModelParams params = std::move(initial);
    AdamState adam = AdamState::zeros_like(params.weights);
    auto result = std::make_shared<FitResult>();
    result->params = params;
    result->log.band_names = data.names;
    result->best_mse = std::numeric_limits<double>::infinity();
    double reference_mse = result->best_mse;  // last improvement beyond min_delta
    int stale = 0;

    for (long it = 1; it <= train_config.iterations; ++it) {
        double loss;
        try {
            loss = train_step(params, adam, sampler, train_config, it);
        } catch (const DivergenceError& e) {
            result->iterations_run = it - 1;
            throw TrainingDiverged(e, result);
        }
        result->iterations_run = it;
        if (it % train_config.log_every != 0 && it != train_config.iterations) {
            continue;
        }
        LogEntry entry;
        entry.iteration = it;
        entry.loss = loss;
        entry.band_mse = evaluate_bands(params, data);
        entry.mse = pooled_mse(entry.band_mse, data);
        if (!std::isfinite(entry.mse)) {
            throw TrainingDiverged(DivergenceError(it, entry.mse), result);
        }
        for (double m : entry.band_mse) {
            entry.band_psnr.push_back(psnr(m));
        }
        entry.psnr = psnr(entry.mse);
        if (entry.mse < result->best_mse) {
            result->best_mse = entry.mse;
            result->best_iteration = it;
            result->params = params;
        }
        entry.best_mse = result->best_mse;
        entry.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result->log.entries.push_back(entry);
        if (observer.on_log) {
            observer.on_log(entry);
        }

        if (reference_mse - entry.mse > train_config.early_stop_min_delta) {
            reference_mse = entry.mse;
            stale = 0;
        } else if (++stale >= train_config.early_stop_patience &&
                   train_config.early_stop_patience > 0) {
            result->early_stopped = true;
            break;
        }
    }
    return std::move(*result);
}

}  // namespace implisat
