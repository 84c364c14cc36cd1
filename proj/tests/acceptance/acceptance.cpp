// Acceptance gate. Prints one line per criterion:
//   AC<k> PASS|FAIL|REPORT <summary>
// and exits non-zero when any gated criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "implisat/cli.hpp"
#include "implisat/codec.hpp"
#include "implisat/grad.hpp"
#include "implisat/metrics.hpp"
#include "implisat/parallel.hpp"
#include "implisat/synthetic.hpp"
#include "implisat/trainer.hpp"

using namespace implisat;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, report, skip };

struct Outcome {
    Verdict verdict;
    std::string summary;
};

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::pass: return "PASS";
        case Verdict::fail: return "FAIL";
        case Verdict::report: return "REPORT";
        case Verdict::skip: return "SKIP";
    }
    return "?";
}

Verdict gate(bool ok) { return ok ? Verdict::pass : Verdict::fail; }

std::string fmt(double v, int precision = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

double mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

const std::vector<ModulationMode> kDeskModes{ModulationMode::fourier, ModulationMode::shift,
                                             ModulationMode::scale};

// Reference (MSE, PSNR) pairs: five tiles, three methods.
Outcome ac1_metric_oracle() {
    const double pairs[15][2] = {
        {9.437e-4, 30.252}, {1.543e-3, 28.115}, {1.391e-3, 28.567}, {1.143e-3, 29.418}, {1.008e-3, 29.966},
        {1.051e-3, 29.784}, {1.631e-3, 27.876}, {1.522e-3, 28.177}, {1.247e-3, 29.043}, {1.185e-3, 29.264},
        {2.460e-4, 36.091}, {4.195e-4, 33.773}, {5.235e-4, 32.811}, {2.761e-4, 35.589}, {2.295e-4, 36.392},
    };
    double worst = 0.0;
    for (const auto& p : pairs) worst = std::max(worst, std::abs(psnr(p[0]) - p[1]));
    return {gate(worst < 0.02), "15 pairs, max |psnr(mse) - reference| = " + fmt(worst, 4) + " dB (< 0.02)"};
}

// Micro fixture k uses model seed k with 8 coordinates of one band (channel k mod 13).
std::vector<BandBatch> micro_batch(const ModelConfig& cfg, std::uint64_t k) {
    Rng rng(derive_seed(k, 77));
    const double gsd[] = {10.0, 20.0, 60.0};
    BandBatch b;
    b.condition = {cfg.eta_norm(gsd[k % 3]), static_cast<int>(k % 13)};
    b.coords = Matrix(8, 2);
    b.targets = Matrix(8, 1);
    for (double& v : b.coords.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : b.targets.data()) v = rng.uniform(0.0, 1.0);
    return {std::move(b)};
}

// The hypernetwork trunk is ReLU, so a fixture whose stencil straddles a
// kink has no derivative to compare against. Those fixtures are skipped and
// counted; the first three smooth ones per mode are checked.
Outcome ac2_gradients() {
    double worst = 0.0;
    std::string skipped;
    for (ModulationMode mode : {ModulationMode::fourier, ModulationMode::shift, ModulationMode::scale,
                                ModulationMode::none}) {
        int used = 0, kinked = 0;
        for (std::uint64_t k = 0; used < 3 && k < 64; ++k) {
            ModelConfig cfg;
            cfg.layers = 4;
            cfg.hidden = 16;
            cfg.rank = 4;
            cfg.n_channels = 13;
            cfg.mode = mode;
            cfg.seed = k;
            const ModelParams params = init_params(cfg);
            const auto batches = micro_batch(cfg, k);
            if (stencil_crosses_kink(params, batches, 1e-3)) {
                ++kinked;
                continue;
            }
            worst = std::max(worst, finite_difference_check(params, batches, 1e-3));
            ++used;
        }
        if (used < 3) return {Verdict::fail, "fewer than 3 kink-free fixtures for " + to_string(mode)};
        skipped += (skipped.empty() ? "" : ", ") + to_string(mode) + " " + std::to_string(kinked);
    }
    char worst_text[32];
    std::snprintf(worst_text, sizeof worst_text, "%.2e", worst);
    return {gate(worst < 1e-4), "4 modes x 3 seeds, step 1e-3, max relative error " + std::string(worst_text) +
                                    " (< 1e-4); fixtures skipped for straddling a ReLU kink: " + skipped};
}

Outcome ac3_budget() {
    ModelConfig cfg;  // L=6, n=256, m=32, hyper 3x64, 13 channels
    const std::size_t count = trainable_count(cfg);
    Checkpoint ckpt;
    ckpt.params = init_params(cfg);
    const char* names[] = {"B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B10", "B11", "B12"};
    const double gsd[] = {60, 10, 10, 10, 20, 20, 20, 10, 20, 60, 60, 20, 20};
    for (int i = 0; i < 13; ++i) ckpt.bands.push_back({names[i], gsd[i], 1098, 1098, 0.0, 10000.0, SampleType::u16});
    const std::size_t bytes = serialize(ckpt).size();
    const bool ok = count >= 195000 && count <= 215000 && bytes <= 1100000;
    return {gate(ok), "trainable " + std::to_string(count) + " in [195000, 215000], checkpoint " +
                          std::to_string(bytes) + " bytes (<= 1100000)"};
}

struct DeskRun {
    ModulationMode mode;
    std::uint64_t seed;
    FitResult fit;
    double final_psnr;
    double psnr_at_1000;
};

ModelConfig desk_model(ModulationMode mode, std::uint64_t seed) {
    ModelConfig cfg;
    cfg.layers = 6;
    cfg.hidden = 128;
    cfg.rank = 32;
    cfg.hyper_layers = 3;
    cfg.hyper_width = 64;
    cfg.n_channels = 3;
    cfg.mode = mode;
    cfg.seed = seed;
    return cfg;
}

TrainConfig desk_train(std::uint64_t seed, long iterations) {
    TrainConfig tc;
    tc.iterations = iterations;
    tc.lr = 5e-4;
    tc.batch_per_band = 128;
    tc.log_every = 500;
    tc.early_stop_patience = 0;
    tc.seed = seed;
    return tc;
}

double psnr_at(const TrainLog& log, long iteration) {
    for (const LogEntry& e : log.entries) {
        if (e.iteration == iteration) return e.psnr;
    }
    return std::nan("");
}

std::vector<DeskRun> run_desk(const MultibandImage& image, long iterations) {
    std::vector<DeskRun> runs;
    for (ModulationMode mode : kDeskModes) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const auto t0 = std::chrono::steady_clock::now();
            FitResult r = fit(image, desk_model(mode, seed), desk_train(seed, iterations));
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const double last = r.log.entries.back().psnr;
            const double at1000 = psnr_at(r.log, 1000);
            std::cerr << "  desk " << to_string(mode) << " seed " << seed << ": final " << fmt(last, 2)
                      << " dB, best " << fmt(psnr(r.best_mse), 2) << " dB, @1000 " << fmt(at1000, 2) << " dB, "
                      << fmt(secs, 1) << " s\n";
            runs.push_back({mode, seed, std::move(r), last, at1000});
        }
    }
    return runs;
}

std::vector<double> collect(const std::vector<DeskRun>& runs, ModulationMode mode, double DeskRun::*field) {
    std::vector<double> out;
    for (const DeskRun& r : runs) {
        if (r.mode == mode) out.push_back(r.*field);
    }
    return out;
}

Outcome ac4_ordering(const std::vector<DeskRun>& runs) {
    const double f = mean(collect(runs, ModulationMode::fourier, &DeskRun::final_psnr));
    const double s = mean(collect(runs, ModulationMode::shift, &DeskRun::final_psnr));
    const double k = mean(collect(runs, ModulationMode::scale, &DeskRun::final_psnr));
    const bool ok = f > s && f > k && f >= 35.0;
    return {gate(ok), "mean final PSNR over 3 seeds: fourier " + fmt(f, 2) + ", shift " + fmt(s, 2) + ", scale " +
                          fmt(k, 2) + " dB (need fourier > both and >= 35)"};
}

Outcome ac5_convergence(const std::vector<DeskRun>& runs) {
    const double f = mean(collect(runs, ModulationMode::fourier, &DeskRun::psnr_at_1000));
    const double s = mean(collect(runs, ModulationMode::shift, &DeskRun::psnr_at_1000));
    const double k = mean(collect(runs, ModulationMode::scale, &DeskRun::psnr_at_1000));
    return {gate(f > s && f > k), "mean PSNR at iteration 1000: fourier " + fmt(f, 2) + ", shift " + fmt(s, 2) +
                                      ", scale " + fmt(k, 2) + " dB (need fourier > both)"};
}

// Pools per-seed group statistics into one mean and standard deviation.
struct Pooled {
    double n = 0.0, sum = 0.0, sumsq = 0.0;
    void add(const FrequencyGroup& g) {
        const double c = static_cast<double>(g.samples);
        n += c;
        sum += c * g.mean;
        sumsq += c * (g.stddev * g.stddev + g.mean * g.mean);
    }
    double stddev() const {
        const double m = sum / n;
        return std::sqrt(std::max(0.0, sumsq / n - m * m));
    }
};

Outcome ac6_frequencies(const std::vector<DeskRun>& runs, const MultibandImage& image, const fs::path& out) {
    Pooled fine, coarse;
    for (const DeskRun& r : runs) {
        if (r.mode != ModulationMode::fourier) continue;
        const FrequencyHistogram h = frequency_analysis(make_checkpoint(r.fit.params, image));
        write_text(out / ("histogram_fourier_seed" + std::to_string(r.seed) + ".csv"), histogram_csv(h));
        for (const FrequencyGroup& g : h.groups) {
            if (g.gsd_m == 10.0) fine.add(g);
            if (g.gsd_m == 60.0) coarse.add(g);
        }
    }
    const bool holds = coarse.stddev() > fine.stddev();
    return {Verdict::report, "pooled stddev of Omega*Z: 60 m " + fmt(coarse.stddev(), 4) + ", 10 m " +
                                 fmt(fine.stddev(), 4) + (holds ? " (60 m wider)" : " (60 m not wider; deviation)")};
}

bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
    const auto x = a.weights.arrays();
    const auto y = b.weights.arrays();
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!x[i]->same_shape(*y[i])) return false;
        for (std::size_t j = 0; j < x[i]->size(); ++j) {
            if (std::bit_cast<std::uint64_t>(x[i]->data()[j]) != std::bit_cast<std::uint64_t>(y[i]->data()[j])) {
                return false;
            }
        }
    }
    return a.z == b.z;
}

bool corruption_detected(const std::vector<std::uint8_t>& good, std::size_t i) {
    auto bad = good;
    bad[i] ^= 0x5A;
    try {
        deserialize(bad);
    } catch (const FormatError&) {
        return true;
    }
    return false;
}

Outcome ac7_codec(const ModelParams& trained, const MultibandImage& image, const fs::path& out) {
    const Checkpoint ckpt = make_checkpoint(trained, image);
    const fs::path path = out / "fourier_seed0.isat";
    save(ckpt, path);
    const Checkpoint back = load(path);
    const bool bitwise = bitwise_equal(back.params, round_to_f32(trained)) && serialize(back) == serialize(ckpt);

    // Every byte of a small checkpoint, then a stride through the large one.
    ModelConfig small = desk_model(ModulationMode::fourier, 1);
    small.hidden = 16;
    small.rank = 4;
    small.hyper_width = 8;
    const auto small_bytes = serialize(make_checkpoint(init_params(small), image));
    std::size_t checked = 0, missed = 0;
    for (std::size_t i = 0; i < small_bytes.size(); ++i, ++checked) missed += !corruption_detected(small_bytes, i);
    const auto big_bytes = serialize(ckpt);
    const std::size_t stride = std::max<std::size_t>(1, big_bytes.size() / 1500);
    for (std::size_t i = 0; i < big_bytes.size(); i += stride, ++checked) missed += !corruption_detected(big_bytes, i);

    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < image.bands.size(); ++b) {
        const Band& band = image.bands[b];
        const Band rec = reconstruct(back, band.name);
        const Matrix direct = predict(trained, make_grid(band).coords,
                                      {trained.config.eta_norm(band.gsd_m), static_cast<int>(b)});
        double sse = 0.0;
        for (std::size_t i = 0; i < direct.size(); ++i) {
            const double d = rec.values.data()[i] - direct.data()[i];
            sse += d * d;
        }
        worst = std::min(worst, psnr(sse / static_cast<double>(direct.size())));
    }
    const bool ok = bitwise && missed == 0 && worst >= 90.0;
    return {gate(ok), std::string("round trip ") + (bitwise ? "bitwise" : "NOT bitwise") + ", corruptions missed " +
                          std::to_string(missed) + "/" + std::to_string(checked) +
                          ", reconstruction vs forward min " + fmt(worst, 1) + " dB (>= 90)"};
}

std::string slurp(const fs::path& p) {
    const auto bytes = read_file(p);
    return std::string(bytes.begin(), bytes.end());
}

Outcome ac8_determinism(const fs::path& out) {
    std::vector<std::string> runs;
    std::string failure;
    for (const char* name : {"run_a", "run_b"}) {
        const fs::path dir = out / "determinism" / name;
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string manifest = (dir / "img" / "manifest.json").string();
        const std::string model = (dir / "fourier.isat").string();
        const std::vector<std::vector<std::string>> steps{
            {"synth", "--out", (dir / "img").string(), "--seed", "0"},
            {"encode", "--input", manifest, "--out", model, "--iters", "60", "--n", "32", "--m", "8", "--batch", "64",
             "--log-every", "20", "--seed", "0", "-q"},
            {"eval", "--model", model, "--input", manifest, "--out", (dir / "eval.csv").string()},
        };
        for (const auto& step : steps) {
            std::ostringstream o, e;
            if (run_cli(step, o, e) != kExitOk) failure = step[0] + ": " + e.str();
        }
        if (!failure.empty()) break;
        std::string all;
        for (const char* f : {"img/B2.f32", "img/B5.f32", "img/B1.f32", "img/manifest.json", "fourier.isat",
                              "fourier.isat.log.csv", "eval.csv"}) {
            all += slurp(dir / f);
        }
        runs.push_back(std::move(all));
    }
    if (!failure.empty()) return {Verdict::fail, "pipeline error: " + failure};
    const bool same = runs[0] == runs[1];
    return {gate(same), std::string("synth -> encode -> eval twice: images, checkpoint, log and eval CSV ") +
                            (same ? "byte-identical" : "differ") + " (" + std::to_string(runs[0].size()) + " bytes)"};
}

Outcome ac9_degenerate() {
    std::vector<std::string> notes;
    bool ok = true;

    double worst = std::numeric_limits<double>::infinity();
    for (ModulationMode mode : kDeskModes) {
        MultibandImage image;
        image.bands.push_back(make_band("P", 10.0, Matrix(1, 1, {1234.0}), SampleType::u16, 0.0, 4000.0));
        ModelConfig cfg;
        cfg.layers = 4;
        cfg.hidden = 16;
        cfg.rank = 4;
        cfg.hyper_layers = 2;
        cfg.hyper_width = 8;
        cfg.n_channels = 1;
        cfg.mode = mode;
        TrainConfig tc;
        tc.iterations = 200;
        tc.lr = 1e-3;
        tc.log_every = 10;
        tc.early_stop_patience = 0;
        worst = std::min(worst, psnr(fit(image, cfg, tc).best_mse));
    }
    ok &= worst >= 80.0;
    notes.push_back("1x1 memorization min " + fmt(worst, 1) + " dB (>= 80)");

    const Matrix flat(5, 7, std::vector<double>(35, 812.0));
    const Band constant = make_band("C", 20.0, flat, SampleType::u16);
    bool exact = constant.constant() && constant.values == Matrix(5, 7, std::vector<double>(35, 0.5)) &&
                 constant.original_values() == flat;
    // Whatever the network predicts, a constant band decodes to its value.
    MultibandImage image;
    image.bands.push_back(constant);
    ModelConfig cfg;
    cfg.layers = 4;
    cfg.hidden = 16;
    cfg.rank = 4;
    cfg.n_channels = 1;
    cfg.resolutions = {20.0};
    const Checkpoint back = deserialize(serialize(make_checkpoint(init_params(cfg), image)));
    exact &= reconstruct(back, "C").original_values() == flat;
    ok &= exact;
    notes.push_back(std::string("constant band 0.5 rule round trip ") + (exact ? "exact" : "NOT exact"));

    const CoordGrid two = make_grid(2, 2);
    const CoordGrid one = make_grid(1, 1);
    const bool coords = pixel_center(0, 2) == -0.5 && pixel_center(1, 2) == 0.5 && two.coords(1, 0) == 0.5 &&
                        two.coords(2, 1) == 0.5 && one.coords(0, 0) == 0.0 && one.coords(0, 1) == 0.0;
    ok &= coords;
    notes.push_back(std::string("coordinates width 2 -> +-0.5, width 1 -> 0 ") + (coords ? "ok" : "WRONG"));

    std::string summary;
    for (std::size_t i = 0; i < notes.size(); ++i) summary += (i ? "; " : "") + notes[i];
    return {gate(ok), summary};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"implisat acceptance suite"};
    std::string out_dir = "acceptance_artifacts";
    long iterations = 5000;
    bool skip_desk = false;
    app.add_option("--out", out_dir, "directory for exported CSVs and checkpoints");
    app.add_option("--iters", iterations, "iterations per desk-scale run")->check(CLI::Range(1000L, 1000000L));
    app.add_flag("--skip-desk", skip_desk, "skip the desk-scale training criteria (4, 5, 6)");
    CLI11_PARSE(app, argc, argv);
    configure_threads_from_env();

    const fs::path out(out_dir);
    fs::create_directories(out);
    const auto start = std::chrono::steady_clock::now();

    std::vector<std::pair<std::string, Outcome>> results;
    auto record = [&](const std::string& id, const Outcome& o) {
        std::cout << id << " " << verdict_name(o.verdict) << " " << o.summary << std::endl;
        results.emplace_back(id, o);
    };

    record("AC1", ac1_metric_oracle());
    record("AC2", ac2_gradients());
    record("AC3", ac3_budget());

    const MultibandImage image = generate(default_synthetic_spec(0));
    std::vector<DeskRun> runs;
    if (!skip_desk) {
        const auto t0 = std::chrono::steady_clock::now();
        runs = run_desk(image, iterations);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        std::vector<std::string> labels;
        std::vector<TrainLog> logs;
        for (const DeskRun& r : runs) {
            labels.push_back(to_string(r.mode) + "_seed" + std::to_string(r.seed));
            logs.push_back(r.fit.log);
        }
        write_text(out / "convergence.csv", convergence_csv(labels, logs));
        std::vector<EvalReport> reports;
        for (const DeskRun& r : runs) {
            if (r.seed != 0) continue;
            EvalReport rep = evaluate(make_checkpoint(r.fit.params, image), image);
            reports.push_back(rep);
        }
        write_text(out / "comparison_seed0.csv", compare(reports).summary_csv());

        Outcome ac4 = ac4_ordering(runs);
        ac4.summary += "; 9 runs in " + fmt(secs / 60.0, 1) + " min";
        record("AC4", ac4);
        record("AC5", ac5_convergence(runs));
        record("AC6", ac6_frequencies(runs, image, out));
        record("AC7", ac7_codec(runs.front().fit.params, image, out));
    } else {
        record("AC4", {Verdict::skip, "desk-scale runs skipped"});
        record("AC5", {Verdict::skip, "desk-scale runs skipped"});
        record("AC6", {Verdict::skip, "desk-scale runs skipped"});
        TrainConfig tc = desk_train(0, 200);
        tc.log_every = 100;
        record("AC7", ac7_codec(fit(image, desk_model(ModulationMode::fourier, 0), tc).params, image, out));
    }
    record("AC8", ac8_determinism(out));
    record("AC9", ac9_degenerate());

    std::size_t failed = 0, passed = 0;
    for (const auto& [id, o] : results) {
        failed += o.verdict == Verdict::fail;
        passed += o.verdict == Verdict::pass;
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "summary: " << passed << " passed, " << failed << " failed, " << fmt(total, 0) << " s" << std::endl;
    return failed == 0 ? 0 : 1;
}
