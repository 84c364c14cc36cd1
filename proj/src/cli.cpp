#include "implisat/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "implisat/codec.hpp"
#include "implisat/config_json.hpp"
#include "implisat/errors.hpp"
#include "implisat/metrics.hpp"
#include "implisat/parallel.hpp"
#include "implisat/synthetic.hpp"

namespace implisat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
    const auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

json parse_config_file(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
    if (!doc.is_object()) {
        throw ConfigError(path.string() + ": config must be an object with 'model' and/or 'train'");
    }
    for (const auto& [key, value] : doc.items()) {
        if (key != "model" && key != "train") {
            throw ConfigError(path.string() + ": unknown top-level key '" + key + "'");
        }
    }
    return doc;
}

std::string fixed(double v, int digits = 3) {
    if (!std::isfinite(v)) return format_metric(v);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

struct EncodeOptions {
    std::string input;
    std::string output;
    std::string config;
    std::optional<std::string> mode;
    std::optional<long> iterations;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> train_seed;
    std::optional<int> layers;
    std::optional<int> hidden;
    std::optional<int> rank;
    std::optional<int> hyper_layers;
    std::optional<int> hyper_width;
    std::optional<int> n_channels;
    std::optional<std::size_t> batch;
    std::optional<long> log_every;
    std::optional<int> patience;
    bool quiet = false;
};

struct DecodeOptions {
    std::string model;
    std::string output;
    double scale = 1.0;
    std::string band;
    std::size_t chunk = 65536;
};

struct EvalOptions {
    std::string model;
    std::string reconstruction;
    std::string input;
    std::string output;
};

struct AnalyzeOptions {
    std::string model;
    std::string output;
};

struct CompareOptions {
    std::vector<std::string> models;
    std::vector<std::string> labels;
    std::string input;
    std::string output;
    std::string bands_output;
};

struct SynthOptions {
    std::string output;
    std::string spec;
    std::uint64_t seed = 0;
};

int encode(const EncodeOptions& o, std::ostream& out) {
    ModelConfig model;
    TrainConfig train;
    bool resolutions_given = false;
    if (!o.config.empty()) {
        const json doc = parse_config_file(o.config);
        if (doc.contains("model")) {
            apply_json(doc.at("model"), model);
            resolutions_given = doc.at("model").contains("resolutions");
        }
        if (doc.contains("train")) apply_json(doc.at("train"), train);
    }
    if (o.mode) model.mode = parse_mode(*o.mode);
    if (o.layers) model.layers = *o.layers;
    if (o.hidden) model.hidden = *o.hidden;
    if (o.rank) model.rank = *o.rank;
    if (o.hyper_layers) model.hyper_layers = *o.hyper_layers;
    if (o.hyper_width) model.hyper_width = *o.hyper_width;
    if (o.n_channels) model.n_channels = *o.n_channels;
    if (o.seed) {
        model.seed = *o.seed;
        train.seed = *o.seed;
    }
    if (o.train_seed) train.seed = *o.train_seed;
    if (o.iterations) train.iterations = *o.iterations;
    if (o.lr) train.lr = *o.lr;
    if (o.batch) train.batch_per_band = *o.batch;
    if (o.log_every) train.log_every = *o.log_every;
    if (o.patience) train.early_stop_patience = *o.patience;
    model.validate();
    train.validate();

    const MultibandImage image = load_manifest(o.input);
    if (!resolutions_given) {
        // The default 10/20/60 m ladder unless the image uses other GSDs.
        for (double r : image.resolutions()) {
            if (std::find(model.resolutions.begin(), model.resolutions.end(), r) == model.resolutions.end()) {
                model.resolutions = image.resolutions();
                break;
            }
        }
    }
    out << "resolved config: " << json{{"model", to_json_value(model)}, {"train", to_json_value(train)}}.dump()
        << "\n";
    out << "trainable parameters: " << trainable_count(model) << "\n";

    FitObserver observer;
    if (!o.quiet) {
        observer.on_log = [&out, &image](const LogEntry& e) {
            out << "iter " << e.iteration << " loss " << format_metric(e.loss) << " psnr " << fixed(e.psnr)
                << " dB best_mse " << format_metric(e.best_mse);
            for (std::size_t b = 0; b < e.band_psnr.size(); ++b) {
                out << " " << image.bands[b].name << "=" << fixed(e.band_psnr[b]);
            }
            out << "\n";
        };
    }
    FitResult result;
    try {
        result = fit(image, model, train, observer);
    } catch (const TrainingDiverged& e) {
        const fs::path log_path = o.output + ".log.csv";
        write_text(log_path, e.partial().log.to_csv());
        throw;
    }
    const Checkpoint ckpt = make_checkpoint(result.params, image, train);
    const std::size_t bytes = save(ckpt, o.output);
    write_text(o.output + ".log.csv", result.log.to_csv());
    out << "best psnr " << fixed(psnr(result.best_mse)) << " dB at iteration " << result.best_iteration
        << (result.early_stopped ? " (early stop)" : "") << "\n";
    out << "wrote " << o.output << " (" << bytes << " bytes, compression ratio "
        << fixed(compression_ratio(bytes, image), 2) << ") and " << o.output << ".log.csv\n";
    return kExitOk;
}

int decode(const DecodeOptions& o, std::ostream& out) {
    out << "resolved config: "
        << json{{"model", o.model}, {"out", o.output}, {"scale", o.scale}, {"band", o.band}, {"chunk", o.chunk}}.dump()
        << "\n";
    if (!(o.scale > 0.0) || !std::isfinite(o.scale)) {
        throw ConfigError("--scale must be positive");
    }
    if (o.chunk == 0) {
        throw ConfigError("--chunk must be positive");
    }
    const Checkpoint ckpt = load(o.model);
    MultibandImage image;
    if (o.band.empty()) {
        image = reconstruct_all(ckpt, o.scale, o.chunk);
    } else {
        image.bands.push_back(reconstruct(ckpt, o.band, o.scale, o.chunk));
    }
    const fs::path manifest = write_manifest(image, o.output);
    for (const Band& b : image.bands) {
        out << b.name << ": " << b.height << "x" << b.width << " at " << format_metric(b.gsd_m) << " m\n";
    }
    out << "wrote " << manifest.string() << "\n";
    return kExitOk;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
    } else {
        write_text(path, text);
        out << "wrote " << path << "\n";
    }
}

int eval(const EvalOptions& o, std::ostream& out) {
    if (!o.output.empty()) {
        out << "resolved config: "
            << json{{"model", o.model}, {"reconstruction", o.reconstruction}, {"input", o.input}, {"out", o.output}}
                   .dump()
            << "\n";
    }
    if (o.model.empty() == o.reconstruction.empty()) {
        throw ConfigError("eval needs exactly one of --model or --reconstruction");
    }
    const MultibandImage reference = load_manifest(o.input);
    const EvalReport report = o.model.empty()
                                  ? evaluate_images(load_manifest(o.reconstruction), reference)
                                  : evaluate(load(o.model), reference);
    emit(report_csv(report), o.output, out);
    if (!o.output.empty()) {
        out << report.method << " psnr " << fixed(report.psnr) << " dB, mse " << format_metric(report.mse) << "\n";
    }
    return kExitOk;
}

int analyze(const AnalyzeOptions& o, std::ostream& out) {
    if (!o.output.empty()) {
        out << "resolved config: " << json{{"model", o.model}, {"out", o.output}}.dump() << "\n";
    }
    const FrequencyHistogram hist = frequency_analysis(load(o.model));
    emit(histogram_csv(hist), o.output, out);
    for (const FrequencyGroup& g : hist.groups) {
        out << format_metric(g.gsd_m) << " m (";
        for (std::size_t i = 0; i < g.channels.size(); ++i) out << (i ? "," : "") << g.channels[i];
        out << "): mean " << fixed(g.mean, 4) << " stddev " << fixed(g.stddev, 4) << " over " << g.samples
            << " entries\n";
    }
    return kExitOk;
}

int compare_models(const CompareOptions& o, std::ostream& out) {
    if (o.models.size() < 2) {
        throw ConfigError("compare needs at least two --model checkpoints");
    }
    if (!o.labels.empty() && o.labels.size() != o.models.size()) {
        throw ConfigError("compare: " + std::to_string(o.labels.size()) + " labels for " +
                          std::to_string(o.models.size()) + " models");
    }
    if (!o.output.empty()) {
        out << "resolved config: "
            << json{{"models", o.models}, {"labels", o.labels}, {"input", o.input}, {"out", o.output},
                    {"bands_out", o.bands_output}}
                   .dump()
            << "\n";
    }
    const MultibandImage reference = load_manifest(o.input);
    std::vector<EvalReport> reports;
    for (std::size_t i = 0; i < o.models.size(); ++i) {
        EvalReport r = evaluate(load(o.models[i]), reference);
        if (!o.labels.empty()) r.method = o.labels[i];
        reports.push_back(std::move(r));
    }
    const ComparisonTable table = compare(reports);
    emit(table.summary_csv(), o.output, out);
    if (!o.bands_output.empty()) {
        emit(table.to_csv(), o.bands_output, out);
    }
    out << "ranking:";
    for (const std::string& m : table.ranking) out << " " << m;
    out << " (gap " << fixed(table.psnr_gap) << " dB)\n";
    return kExitOk;
}

int synth(const SynthOptions& o, std::ostream& out) {
    out << "resolved config: " << json{{"out", o.output}, {"spec", o.spec}, {"seed", o.seed}}.dump() << "\n";
    const SyntheticSpec spec =
        o.spec.empty() ? default_synthetic_spec(o.seed) : synthetic_spec_from_json(read_text(o.spec));
    std::vector<std::string> degenerate;
    const MultibandImage image = generate(spec, &degenerate);
    const fs::path manifest = write_manifest(image, o.output);
    write_text(fs::path(o.output) / "synthetic_spec.json", synthetic_spec_to_json(spec));
    for (const Band& b : image.bands) {
        out << b.name << ": " << b.height << "x" << b.width << " at " << format_metric(b.gsd_m) << " m\n";
    }
    for (const std::string& name : degenerate) {
        out << "band " << name << " is constant (no components and no noise)\n";
    }
    out << "wrote " << manifest.string() << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Implicit neural compression of multiband satellite images", "implisat"};
    app.require_subcommand(1);

    EncodeOptions enc;
    CLI::App* encode_cmd = app.add_subcommand("encode", "Fit a model to a manifest and write a checkpoint");
    encode_cmd->add_option("--input", enc.input, "Input manifest")->required();
    encode_cmd->add_option("--out", enc.output, "Checkpoint path; the log goes to <out>.log.csv")->required();
    encode_cmd->add_option("--config", enc.config, "JSON file with 'model' and 'train' objects");
    encode_cmd->add_option("--mode", enc.mode, "fourier, shift, scale or none");
    encode_cmd->add_option("--iters", enc.iterations, "Training iterations");
    encode_cmd->add_option("--lr", enc.lr, "Adam learning rate");
    encode_cmd->add_option("--seed", enc.seed, "Model and train seed");
    encode_cmd->add_option("--train-seed", enc.train_seed, "Train seed, overriding --seed");
    encode_cmd->add_option("--L,--layers", enc.layers, "Backbone depth");
    encode_cmd->add_option("--n,--hidden", enc.hidden, "Backbone width");
    encode_cmd->add_option("--m,--rank", enc.rank, "Modulation rank");
    encode_cmd->add_option("--hyper-layers", enc.hyper_layers, "Hypernetwork depth");
    encode_cmd->add_option("--hyper-width", enc.hyper_width, "Hypernetwork width");
    encode_cmd->add_option("--channels", enc.n_channels, "Conditioning channels");
    encode_cmd->add_option("--batch", enc.batch, "Samples per band per step");
    encode_cmd->add_option("--log-every", enc.log_every, "Evaluation interval");
    encode_cmd->add_option("--patience", enc.patience, "Early-stopping patience, 0 disables");
    encode_cmd->add_flag("-q,--quiet", enc.quiet, "Only print the summary");

    DecodeOptions dec;
    CLI::App* decode_cmd = app.add_subcommand("decode", "Render bands from a checkpoint");
    decode_cmd->add_option("--model", dec.model, "Checkpoint")->required();
    decode_cmd->add_option("--out", dec.output, "Output directory")->required();
    decode_cmd->add_option("--scale", dec.scale, "Grid scale factor");
    decode_cmd->add_option("--band", dec.band, "Only this band");
    decode_cmd->add_option("--chunk", dec.chunk, "Coordinates per evaluation chunk");

    EvalOptions ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or a decoded manifest");
    eval_cmd->add_option("--model", ev.model, "Checkpoint");
    eval_cmd->add_option("--reconstruction", ev.reconstruction, "Decoded manifest");
    eval_cmd->add_option("--input", ev.input, "Reference manifest")->required();
    eval_cmd->add_option("--out", ev.output, "CSV path (stdout when absent)");

    AnalyzeOptions an;
    CLI::App* analyze_cmd = app.add_subcommand("analyze", "Histogram the learned frequencies per GSD group");
    analyze_cmd->add_option("--model", an.model, "Fourier-mode checkpoint")->required();
    analyze_cmd->add_option("--out", an.output, "CSV path (stdout when absent)");

    CompareOptions cmp;
    CLI::App* compare_cmd = app.add_subcommand("compare", "Rank checkpoints trained on the same manifest");
    compare_cmd->add_option("--model", cmp.models, "Checkpoints (repeat or list)")->required();
    compare_cmd->add_option("--label", cmp.labels, "Row labels, one per model (default: mode)");
    compare_cmd->add_option("--input", cmp.input, "Reference manifest")->required();
    compare_cmd->add_option("--out", cmp.output, "Summary CSV (stdout when absent)");
    compare_cmd->add_option("--bands-out", cmp.bands_output, "Per-band CSV");

    SynthOptions sy;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Write a synthetic multiband image");
    synth_cmd->add_option("--out", sy.output, "Output directory")->required();
    synth_cmd->add_option("--spec", sy.spec, "Synthetic spec JSON (default three-band spec)");
    synth_cmd->add_option("--seed", sy.seed, "Noise seed for the default spec");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    configure_threads_from_env();
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (*encode_cmd) return encode(enc, out);
        if (*decode_cmd) return decode(dec, out);
        if (*eval_cmd) return eval(ev, out);
        if (*analyze_cmd) return analyze(an, out);
        if (*compare_cmd) return compare_models(cmp, out);
        return synth(sy, out);
    } catch (const ConfigError& e) {
        err << command << ": configuration error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << command << ": " << e.what() << "\n";
        return kExitDivergence;
    } catch (const Error& e) {
        err << command << ": " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << command << ": internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace implisat
