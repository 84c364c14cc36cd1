#include "implisat/metrics.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "implisat/errors.hpp"

namespace implisat {

double psnr(double mse) {
    if (std::isnan(mse) || mse < 0.0) {
        throw DomainError("psnr: mse must be non-negative, got " + std::to_string(mse));
    }
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return -10.0 * std::log10(mse);
}

std::string format_metric(double value) {
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    if (std::isnan(value)) {
        return "nan";
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::uint64_t image_fingerprint(const MultibandImage& image) {
    std::vector<std::uint8_t> bytes;
    auto put = [&bytes](std::uint64_t v) {
        for (int s = 0; s < 64; s += 8) bytes.push_back(static_cast<std::uint8_t>(v >> s));
    };
    for (const Band& b : image.bands) {
        bytes.insert(bytes.end(), b.name.begin(), b.name.end());
        put(b.height);
        put(b.width);
        for (double v : b.values.data()) put(std::bit_cast<std::uint64_t>(v));
    }
    return fnv1a64(bytes.data(), bytes.size());
}

namespace {

double band_mse(const Matrix& prediction, const Matrix& reference) {
    double sse = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = prediction.data()[i] - reference.data()[i];
        sse += d * d;
    }
    return sse / static_cast<double>(reference.size());
}

void finish(EvalReport& report) {
    double sse = 0.0;
    std::size_t pixels = 0;
    for (const BandMetrics& b : report.bands) {
        sse += b.mse * static_cast<double>(b.pixels);
        pixels += b.pixels;
    }
    report.mse = pixels == 0 ? 0.0 : sse / static_cast<double>(pixels);
    report.psnr = psnr(report.mse);
}

}  // namespace

EvalReport evaluate_images(const MultibandImage& reconstruction, const MultibandImage& reference,
                           const std::string& method) {
    EvalReport report;
    report.method = method;
    report.image_fingerprint = image_fingerprint(reference);
    if (reconstruction.bands.size() != reference.bands.size()) {
        throw LookupError("reconstruction has " + std::to_string(reconstruction.bands.size()) +
                          " bands, reference has " + std::to_string(reference.bands.size()));
    }
    for (const Band& ref : reference.bands) {
        const Band& rec = reconstruction.band(ref.name);
        if (rec.height != ref.height || rec.width != ref.width) {
            throw ShapeError("band '" + ref.name + "': reconstruction " + rec.values.shape_str() +
                             " vs reference " + ref.values.shape_str());
        }
        const double mse = band_mse(rec.values, ref.values);
        report.bands.push_back({ref.name, mse, psnr(mse), ref.pixel_count()});
    }
    finish(report);
    return report;
}

EvalReport evaluate(const Checkpoint& checkpoint, const MultibandImage& image) {
    if (checkpoint.bands.size() != image.bands.size()) {
        throw LookupError("checkpoint has " + std::to_string(checkpoint.bands.size()) +
                          " bands, image has " + std::to_string(image.bands.size()));
    }
    for (std::size_t i = 0; i < image.bands.size(); ++i) {
        const BandMeta& meta = checkpoint.bands[i];
        const Band& band = image.bands[i];
        if (meta.name != band.name) {
            throw LookupError("band " + std::to_string(i) + " is '" + band.name +
                              "' in the image but '" + meta.name + "' in the checkpoint");
        }
        if (meta.height != band.height || meta.width != band.width) {
            throw ShapeError("band '" + band.name + "' is " + std::to_string(band.height) + "x" +
                             std::to_string(band.width) + " but the checkpoint was trained on " +
                             std::to_string(meta.height) + "x" + std::to_string(meta.width));
        }
    }
    EvalReport report =
        evaluate_images(reconstruct_all(checkpoint, 1.0), image, to_string(checkpoint.params.config.mode));
    report.model_seed = checkpoint.params.config.seed;
    return report;
}

std::string report_csv(const EvalReport& report) {
    std::string out = "method,band,psnr_db,mse\n";
    for (const BandMetrics& b : report.bands) {
        out += report.method + "," + b.name + "," + format_metric(b.psnr) + "," + format_metric(b.mse) + "\n";
    }
    out += report.method + ",all," + format_metric(report.psnr) + "," + format_metric(report.mse) + "\n";
    return out;
}

FrequencyHistogram frequency_analysis(const Checkpoint& checkpoint) {
    const ModelParams& params = checkpoint.params;
    if (params.config.mode != ModulationMode::fourier) {
        throw ModeError("frequency analysis needs a fourier-mode checkpoint, got " +
                        to_string(params.config.mode));
    }
    std::map<double, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < checkpoint.bands.size(); ++i) {
        groups[checkpoint.bands[i].gsd_m].push_back(i);
    }
    FrequencyHistogram hist;
    for (const auto& [gsd, members] : groups) {
        FrequencyGroup group;
        group.gsd_m = gsd;
        std::vector<double> values;
        for (std::size_t channel : members) {
            group.channels.push_back(checkpoint.bands[channel].name);
            for (int layer = 0; layer < params.config.modulated_layers(); ++layer) {
                const Matrix freq = frequency_component(
                    params, {params.config.eta_norm(gsd), static_cast<int>(channel), layer});
                values.insert(values.end(), freq.data().begin(), freq.data().end());
            }
        }
        group.samples = values.size();
        double lo = *std::min_element(values.begin(), values.end());
        double hi = *std::max_element(values.begin(), values.end());
        if (lo == hi) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double width = (hi - lo) / static_cast<double>(kFrequencyBins);
        for (std::size_t k = 0; k <= kFrequencyBins; ++k) {
            group.bin_edges.push_back(k == kFrequencyBins ? hi : lo + width * static_cast<double>(k));
        }
        std::vector<std::size_t> counts(kFrequencyBins, 0);
        double sum = 0.0;
        for (double v : values) {
            auto k = static_cast<std::size_t>((v - lo) / width);
            counts[std::min(k, kFrequencyBins - 1)] += 1;
            sum += v;
        }
        group.mean = sum / static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - group.mean) * (v - group.mean);
        group.stddev = std::sqrt(var / static_cast<double>(values.size()));
        for (std::size_t c : counts) {
            group.density.push_back(static_cast<double>(c) / (static_cast<double>(values.size()) * width));
        }
        hist.groups.push_back(std::move(group));
    }
    return hist;
}

std::string histogram_csv(const FrequencyHistogram& hist) {
    std::string out = "group,bin_left,bin_right,density\n";
    for (const FrequencyGroup& g : hist.groups) {
        const std::string label = format_metric(g.gsd_m) + "m";
        for (std::size_t k = 0; k < g.density.size(); ++k) {
            out += label + "," + format_metric(g.bin_edges[k]) + "," + format_metric(g.bin_edges[k + 1]) +
                   "," + format_metric(g.density[k]) + "\n";
        }
    }
    return out;
}

ComparisonTable compare(const std::vector<EvalReport>& reports) {
    if (reports.size() < 2) {
        throw ConfigError("compare needs at least two reports, got " + std::to_string(reports.size()));
    }
    for (const EvalReport& r : reports) {
        if (r.image_fingerprint != reports.front().image_fingerprint) {
            throw ConfigError("compare: report '" + r.method + "' was evaluated on a different image than '" +
                              reports.front().method + "'");
        }
    }
    ComparisonTable table;
    table.reports = reports;
    for (const EvalReport& r : reports) {
        table.rows.push_back({r.method, r.psnr, r.mse});
    }
    std::vector<ComparisonRow> sorted = table.rows;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ComparisonRow& a, const ComparisonRow& b) { return a.psnr > b.psnr; });
    for (const ComparisonRow& r : sorted) table.ranking.push_back(r.method);
    table.psnr_gap = sorted[0].psnr == sorted[1].psnr ? 0.0 : sorted[0].psnr - sorted[1].psnr;
    return table;
}

std::string ComparisonTable::to_csv() const {
    std::string out = "method,band,psnr_db,mse\n";
    for (const EvalReport& r : reports) {
        const std::string csv = report_csv(r);
        out += csv.substr(csv.find('\n') + 1);
    }
    return out;
}

std::string ComparisonTable::summary_csv() const {
    std::string out = "method,psnr_db,mse\n";
    for (const ComparisonRow& r : rows) {
        out += r.method + "," + format_metric(r.psnr) + "," + format_metric(r.mse) + "\n";
    }
    return out;
}

std::string convergence_csv(const std::vector<std::string>& methods, const std::vector<TrainLog>& logs) {
    if (methods.size() != logs.size()) {
        throw ShapeError("convergence_csv: " + std::to_string(methods.size()) + " methods but " +
                         std::to_string(logs.size()) + " logs");
    }
    std::set<long> iterations;
    std::vector<std::map<long, double>> series(logs.size());
    for (std::size_t i = 0; i < logs.size(); ++i) {
        for (const LogEntry& e : logs[i].entries) {
            iterations.insert(e.iteration);
            series[i][e.iteration] = e.psnr;
        }
    }
    std::string out = "iteration";
    for (const std::string& m : methods) out += "," + m + "_psnr";
    out += "\n";
    for (long it : iterations) {
        out += std::to_string(it);
        for (const auto& s : series) {
            const auto found = s.find(it);
            out += "," + (found == s.end() ? std::string() : format_metric(found->second));
        }
        out += "\n";
    }
    return out;
}

}  // namespace implisat
