#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "implisat/errors.hpp"
#include "implisat/metrics.hpp"
#include "implisat/synthetic.hpp"

using namespace implisat;

namespace {

struct ReferencePair {
    double mse;
    double psnr_db;
};

// Reference MSE/PSNR pairs: five tiles, three methods.
const ReferencePair kReference[] = {
    {9.437e-4, 30.252}, {1.543e-3, 28.115}, {1.391e-3, 28.567}, {1.143e-3, 29.418}, {1.008e-3, 29.966},
    {1.051e-3, 29.784}, {1.631e-3, 27.876}, {1.522e-3, 28.177}, {1.247e-3, 29.043}, {1.185e-3, 29.264},
    {2.460e-4, 36.091}, {4.195e-4, 33.773}, {5.235e-4, 32.811}, {2.761e-4, 35.589}, {2.295e-4, 36.392},
};

ModelConfig small_config(ModulationMode mode, std::uint64_t seed = 0) {
    ModelConfig cfg;
    cfg.layers = 5;
    cfg.hidden = 12;
    cfg.rank = 3;
    cfg.hyper_layers = 2;
    cfg.hyper_width = 6;
    cfg.n_channels = 4;
    cfg.mode = mode;
    cfg.seed = seed;
    return cfg;
}

MultibandImage three_bands() {
    SyntheticSpec spec;
    spec.seed = 8;
    spec.bands.push_back({"B2", 10.0, 6, 6, {{1.0, 1.0, 1.0, 0.0}}, 0.0});
    spec.bands.push_back({"B5", 20.0, 4, 4, {{1.0, 0.5, 0.0, 0.0}}, 0.0});
    spec.bands.push_back({"B1", 60.0, 2, 2, {{1.0, 0.25, 0.0, 0.0}}, 0.0});
    return generate(spec);
}

Band shifted(const Band& band, double delta) {
    Band out = band;
    for (double& v : out.values.data()) v += delta;
    return out;
}

MultibandImage offset_image(const MultibandImage& image, double delta) {
    MultibandImage out;
    for (const Band& b : image.bands) out.bands.push_back(shifted(b, delta));
    return out;
}

}  // namespace

TEST_CASE("psnr reproduces every reference pair within 0.02 dB") {
    for (const ReferencePair& p : kReference) {
        CHECK(std::abs(psnr(p.mse) - p.psnr_db) < 0.02);
    }
    CHECK(psnr(2.460e-4) == doctest::Approx(36.091).epsilon(1e-4));
    CHECK(psnr(1.543e-3) == doctest::Approx(28.115).epsilon(1e-4));
}

TEST_CASE("psnr edge values") {
    CHECK(psnr(1.0) == 0.0);
    CHECK(psnr(0.01) == doctest::Approx(20.0));
    CHECK(std::isinf(psnr(0.0)));
    CHECK(psnr(0.0) > 0.0);
    CHECK_THROWS_AS(psnr(-1e-9), DomainError);
    CHECK_THROWS_AS(psnr(std::nan("")), DomainError);
}

TEST_CASE("metric formatting") {
    CHECK(format_metric(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_metric(0.5) == "0.5");
    CHECK(std::stod(format_metric(0.1 + 0.2)) == 0.1 + 0.2);
}

TEST_CASE("evaluate_images matches a scalar mse") {
    const MultibandImage ref = three_bands();
    MultibandImage rec = ref;
    rec.bands[0].values(1, 2) += 0.1;
    rec.bands[2].values(0, 0) -= 0.3;
    const EvalReport r = evaluate_images(rec, ref, "probe");
    REQUIRE(r.bands.size() == 3);
    CHECK(r.bands[0].mse == doctest::Approx(0.01 / 36.0));
    CHECK(r.bands[1].mse == 0.0);
    CHECK(std::isinf(r.bands[1].psnr));
    CHECK(r.bands[2].mse == doctest::Approx(0.09 / 4.0));
    CHECK(r.mse == doctest::Approx((0.01 + 0.09) / 56.0));
    CHECK(r.psnr == doctest::Approx(-10.0 * std::log10(0.1 / 56.0)));
    CHECK(r.method == "probe");
}

TEST_CASE("an image scored against itself is infinite") {
    const MultibandImage ref = three_bands();
    const EvalReport r = evaluate_images(ref, ref);
    CHECK(std::isinf(r.psnr));
    const std::string csv = report_csv(r);
    CHECK(csv.find("reconstruction,all,inf,0\n") != std::string::npos);
}

TEST_CASE("mismatched reconstructions are rejected") {
    const MultibandImage ref = three_bands();
    MultibandImage fewer = ref;
    fewer.bands.pop_back();
    CHECK_THROWS_AS(evaluate_images(fewer, ref), LookupError);
    MultibandImage renamed = ref;
    renamed.bands[1].name = "B7";
    CHECK_THROWS_AS(evaluate_images(renamed, ref), LookupError);
    MultibandImage resized = ref;
    resized.bands[2] = make_band("B1", 60.0, Matrix(3, 2));
    CHECK_THROWS_AS(evaluate_images(resized, ref), ShapeError);
}

TEST_CASE("evaluate reconstructs from a checkpoint") {
    const MultibandImage image = three_bands();
    const Checkpoint ckpt = make_checkpoint(init_params(small_config(ModulationMode::shift, 2)), image);
    const EvalReport r = evaluate(ckpt, image);
    CHECK(r.method == "shift");
    CHECK(r.model_seed == 2);
    CHECK(r.image_fingerprint == image_fingerprint(image));
    const EvalReport direct = evaluate_images(reconstruct_all(ckpt), image, "shift");
    CHECK(r.mse == direct.mse);

    MultibandImage other = image;
    other.bands[0].name = "B3";
    CHECK_THROWS_AS(evaluate(ckpt, other), LookupError);
}

TEST_CASE("report csv layout") {
    const MultibandImage ref = three_bands();
    const EvalReport r = evaluate_images(offset_image(ref, 0.1), ref, "fourier");
    const std::string csv = report_csv(r);
    CHECK(csv.rfind("method,band,psnr_db,mse\nfourier,B2,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("histogram densities integrate to one and groups ascend by GSD") {
    const MultibandImage image = three_bands();
    const Checkpoint ckpt = make_checkpoint(init_params(small_config(ModulationMode::fourier, 4)), image);
    const FrequencyHistogram h = frequency_analysis(ckpt);
    REQUIRE(h.groups.size() == 3);
    CHECK(h.groups[0].gsd_m == 10.0);
    CHECK(h.groups[2].gsd_m == 60.0);
    for (const FrequencyGroup& g : h.groups) {
        REQUIRE(g.density.size() == kFrequencyBins);
        REQUIRE(g.bin_edges.size() == kFrequencyBins + 1);
        double mass = 0.0;
        for (std::size_t k = 0; k < kFrequencyBins; ++k) {
            mass += g.density[k] * (g.bin_edges[k + 1] - g.bin_edges[k]);
        }
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(g.samples == 3 * 3 * 3);  // layers 2..4, each m x m
        CHECK(g.stddev >= 0.0);
    }
    const std::string csv = histogram_csv(h);
    CHECK(csv.rfind("group,bin_left,bin_right,density\n10m,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 64);
}

TEST_CASE("a zero head puts all mass in the bin holding zero") {
    const MultibandImage image = three_bands();
    ModelParams params = init_params(small_config(ModulationMode::fourier, 4));
    params.weights.hyper.back().weight.fill(0.0);
    params.weights.hyper.back().bias.fill(0.0);
    const FrequencyHistogram h = frequency_analysis(make_checkpoint(params, image));
    for (const FrequencyGroup& g : h.groups) {
        CHECK(g.stddev == 0.0);
        CHECK(g.mean == 0.0);
        std::size_t occupied = 0;
        for (std::size_t k = 0; k < kFrequencyBins; ++k) {
            if (g.density[k] > 0.0) {
                ++occupied;
                CHECK(g.bin_edges[k] <= 0.0);
                CHECK(g.bin_edges[k + 1] > 0.0);
            }
        }
        CHECK(occupied == 1);
    }
}

TEST_CASE("frequency analysis ignores the backbone") {
    const MultibandImage image = three_bands();
    ModelParams params = init_params(small_config(ModulationMode::fourier, 5));
    const FrequencyHistogram before = frequency_analysis(make_checkpoint(params, image));
    params.weights.first.weight.fill(0.25);
    for (LowRankLayer& l : params.weights.low_rank) l.alpha.fill(-1.0);
    params.weights.output.bias.fill(3.0);
    const FrequencyHistogram after = frequency_analysis(make_checkpoint(params, image));
    REQUIRE(before.groups.size() == after.groups.size());
    for (std::size_t g = 0; g < before.groups.size(); ++g) {
        CHECK(before.groups[g].density == after.groups[g].density);
        CHECK(before.groups[g].stddev == after.groups[g].stddev);
    }
}

TEST_CASE("frequency analysis needs a fourier checkpoint") {
    const MultibandImage image = three_bands();
    CHECK_THROWS_AS(frequency_analysis(make_checkpoint(init_params(small_config(ModulationMode::scale)), image)),
                    ModeError);
}

TEST_CASE("compare ranks by psnr") {
    const MultibandImage ref = three_bands();
    const EvalReport a = evaluate_images(offset_image(ref, 0.01), ref, "A");
    const EvalReport b = evaluate_images(offset_image(ref, 0.02), ref, "B");
    const EvalReport c = evaluate_images(offset_image(ref, 0.04), ref, "C");
    const ComparisonTable t = compare({b, c, a});
    CHECK(t.ranking == std::vector<std::string>{"A", "B", "C"});
    CHECK(t.rows[0].method == "B");
    CHECK(t.psnr_gap == doctest::Approx(20.0 * std::log10(2.0)));
    const std::string csv = t.to_csv();
    CHECK(csv.rfind("method,band,psnr_db,mse\nB,B2,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 4);
}

TEST_CASE("duplicated reports tie with zero gap") {
    const MultibandImage ref = three_bands();
    const EvalReport a = evaluate_images(offset_image(ref, 0.01), ref, "A");
    EvalReport twin = a;
    twin.method = "A2";
    const ComparisonTable t = compare({a, twin});
    CHECK(t.psnr_gap == 0.0);
    CHECK(t.ranking == std::vector<std::string>{"A", "A2"});
}

TEST_CASE("compare rejects single reports and different images") {
    const MultibandImage ref = three_bands();
    const EvalReport a = evaluate_images(offset_image(ref, 0.01), ref, "A");
    CHECK_THROWS_AS(compare({a}), ConfigError);
    const MultibandImage other = offset_image(ref, 0.5);
    const EvalReport b = evaluate_images(ref, other, "B");
    CHECK_THROWS_AS(compare({a, b}), ConfigError);
}

TEST_CASE("convergence csv unions the logged iterations") {
    TrainLog one, two;
    one.entries.push_back({100, 0.0, {}, {}, 0.0, 20.0});
    one.entries.push_back({200, 0.0, {}, {}, 0.0, 25.0});
    two.entries.push_back({200, 0.0, {}, {}, 0.0, 22.5});
    const std::string csv = convergence_csv({"fourier", "shift"}, {one, two});
    CHECK(csv == "iteration,fourier_psnr,shift_psnr\n100,20,\n200,25,22.5\n");
    CHECK_THROWS_AS(convergence_csv({"fourier"}, {one, two}), ShapeError);
}
