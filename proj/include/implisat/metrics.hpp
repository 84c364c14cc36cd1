#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "implisat/codec.hpp"
#include "implisat/dataio.hpp"
#include "implisat/trainer.hpp"

namespace implisat {

/// -10 log10(mse) with unit peak; +infinity for mse == 0.
double psnr(double mse);

/// "inf" for infinities, otherwise a round-trippable decimal.
std::string format_metric(double value);

struct BandMetrics {
    std::string name;
    double mse = 0.0;
    double psnr = 0.0;
    std::size_t pixels = 0;
};

struct EvalReport {
    std::string method;  // modulation mode or a caller label
    std::vector<BandMetrics> bands;
    double mse = 0.0;    // pooled over every pixel of every band
    double psnr = 0.0;
    std::uint64_t model_seed = 0;
    std::uint64_t image_fingerprint = 0;
};

/// Hash of every band's metadata together with its normalized values.
std::uint64_t image_fingerprint(const MultibandImage& image);

/// Reconstructs every band at scale 1 and scores it in the normalized domain.
EvalReport evaluate(const Checkpoint& checkpoint, const MultibandImage& image);

/// Scores `reconstruction` against `reference` band by band.
EvalReport evaluate_images(const MultibandImage& reconstruction, const MultibandImage& reference,
                           const std::string& method = "reconstruction");

std::string report_csv(const EvalReport& report);

struct FrequencyGroup {
    double gsd_m = 0.0;
    std::vector<std::string> channels;
    std::vector<double> bin_edges;  // 65 edges
    std::vector<double> density;    // 64 bins, integrates to 1
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t samples = 0;
};

struct FrequencyHistogram {
    std::vector<FrequencyGroup> groups;  // ascending GSD
};

constexpr std::size_t kFrequencyBins = 64;

/// Pools Omega ⊙ Z over every (channel of a GSD, hidden layer) pair and
/// histograms each GSD group over its own min/max range.
FrequencyHistogram frequency_analysis(const Checkpoint& checkpoint);

/// group,bin_left,bin_right,density
std::string histogram_csv(const FrequencyHistogram& hist);

struct ComparisonRow {
    std::string method;
    double psnr = 0.0;
    double mse = 0.0;
};

struct ComparisonTable {
    std::vector<EvalReport> reports;   // input order
    std::vector<ComparisonRow> rows;   // aggregate per report, input order
    std::vector<std::string> ranking;  // by PSNR, best first
    double psnr_gap = 0.0;             // best minus runner-up

    /// method,band,psnr_db,mse: one row per band plus an "all" row per method.
    std::string to_csv() const;
    /// method,psnr_db,mse: one aggregate row per report, input order.
    std::string summary_csv() const;
};

/// Requires >= 2 reports on the same image.
ComparisonTable compare(const std::vector<EvalReport>& reports);

/// iteration,<method>_psnr,... over the union of logged iterations.
std::string convergence_csv(const std::vector<std::string>& methods,
                            const std::vector<TrainLog>& logs);

}  // namespace implisat
