#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "implisat/dataio.hpp"
#include "implisat/errors.hpp"
#include "implisat/grad.hpp"
#include "implisat/model.hpp"

namespace implisat {

struct TrainConfig {
    long iterations = 10000;
    double lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_per_band = 1024;
    int early_stop_patience = 10;  // evaluations without improvement; 0 disables
    double early_stop_min_delta = 0.0;
    long log_every = 100;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Bias-corrected Adam moments, shaped like the parameters.
struct AdamState {
    ParameterSet first_moment;
    ParameterSet second_moment;
    long step = 0;

    static AdamState zeros_like(const ParameterSet& params);
};

/// One Adam update of every trainable array with gradient `grads`.
void adam_update(ParameterSet& params, AdamState& state, const GradientSet& grads,
                 const TrainConfig& config);

/// Mean squared error over all entries.
double mse_loss(const Matrix& predictions, const Matrix& targets);

/// Full coordinate grids plus conditioning for every band of an image.
struct TrainingSet {
    std::vector<std::string> names;
    std::vector<CoordGrid> grids;
    std::vector<BandCondition> conditions;

    static TrainingSet build(const MultibandImage& image, const ModelConfig& config);
};

/// Draws per-band batches: without replacement inside a step, with
/// replacement when a band has fewer pixels than the batch.
class BatchSampler {
public:
    BatchSampler(const TrainingSet& data, std::size_t batch_per_band, std::uint64_t seed);
    std::vector<BandBatch> draw();

private:
    const TrainingSet* data_;
    std::size_t batch_;
    Rng rng_;
    std::vector<std::vector<std::size_t>> order_;
};

/// Rejects images whose bands cannot be conditioned by this config.
void check_compatible(const MultibandImage& image, const ModelConfig& config);

/// One optimizer step over all bands: modulations computed once per band,
/// gradients summed over bands in band order and scaled by 1/(samples).
/// Returns the step's mean squared error. Throws DivergenceError on a
/// non-finite loss or gradient.
double train_step(ModelParams& params, AdamState& adam, BatchSampler& sampler,
                  const TrainConfig& config, long iteration);

/// Evaluation in bounded chunks; chunking does not change the result.
Matrix predict(const ModelParams& params, const Matrix& coords, const BandCondition& cond,
               std::size_t chunk_rows = 65536);

struct LogEntry {
    long iteration = 0;
    double loss = 0.0;                 // step (batch) loss
    std::vector<double> band_mse;      // full-grid, per band
    std::vector<double> band_psnr;
    double mse = 0.0;                  // pooled over all pixels
    double psnr = 0.0;
    double best_mse = 0.0;             // best evaluated so far
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<std::string> band_names;
    std::vector<LogEntry> entries;

    /// iteration,loss,mse,psnr,best_mse,psnr_<band>... ; wall-clock is left
    /// out so identical runs give identical files.
    std::string to_csv() const;
};

struct FitResult {
    ModelParams params;  // best evaluated checkpoint
    TrainLog log;
    long best_iteration = 0;
    double best_mse = 0.0;
    long iterations_run = 0;
    bool early_stopped = false;
};

/// Divergence during fit, carrying the best checkpoint reached before it.
class TrainingDiverged : public DivergenceError {
public:
    TrainingDiverged(const DivergenceError& cause, std::shared_ptr<FitResult> partial)
        : DivergenceError(cause), partial_(std::move(partial)) {}
    const FitResult& partial() const { return *partial_; }

private:
    std::shared_ptr<FitResult> partial_;
};

struct FitObserver {
    std::function<void(const LogEntry&)> on_log;
};

/// Per-band full-grid MSE of `params` on `data`.
std::vector<double> evaluate_bands(const ModelParams& params, const TrainingSet& data);

/// Pixel-count weighted mean of per-band MSEs.
double pooled_mse(const std::vector<double>& band_mse, const TrainingSet& data);

FitResult fit(const MultibandImage& image, const ModelConfig& model_config,
              const TrainConfig& train_config, const FitObserver& observer = {});

/// Continues from given parameters instead of a fresh initialization.
FitResult fit_from(const MultibandImage& image, ModelParams initial, const TrainConfig& train_config,
                   const FitObserver& observer = {});

}  // namespace implisat
