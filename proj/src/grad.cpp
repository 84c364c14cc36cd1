#include "implisat/grad.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "implisat/errors.hpp"

namespace implisat {

namespace {

// Reverse pass through y = x * W^T + b.
Matrix dense_backward(const Matrix& d_out, const Matrix& input, const DenseLayer& layer,
                      DenseLayer& grad, bool need_input_grad) {
    grad.weight = matmul_tn(d_out, input);
    grad.bias = column_sums(d_out);
    return need_input_grad ? matmul(d_out, layer.weight) : Matrix{};
}

// d/du sin(u) = cos(u)
Matrix through_sine(const Matrix& d_out, const Matrix& pre) {
    Matrix d(pre.rows(), pre.cols());
    for (std::size_t i = 0; i < pre.size(); ++i) {
        d.data()[i] = d_out.data()[i] * std::cos(pre.data()[i]);
    }
    return d;
}

void check_trace(const ForwardTrace& trace, const ModelParams& params, const Matrix& residual) {
    const ModelConfig& cfg = params.config;
    const auto sine_layers = static_cast<std::size_t>(cfg.layers - 1);
    if (trace.pre.size() != sine_layers || trace.post.size() != sine_layers) {
        throw ShapeError("backward: trace holds " + std::to_string(trace.pre.size()) +
                         " sine layers, config expects " + std::to_string(sine_layers));
    }
    const std::size_t k = trace.inputs.rows();
    if (residual.rows() != k || residual.cols() != 1) {
        throw ShapeError("backward: residual " + residual.shape_str() + " for a batch of " +
                         std::to_string(k));
    }
    for (const Matrix& p : trace.pre) {
        if (p.rows() != k || p.cols() != static_cast<std::size_t>(cfg.hidden)) {
            throw ShapeError("backward: activation " + p.shape_str() +
                             " does not match config width " + std::to_string(cfg.hidden));
        }
    }
    const auto hidden_layers = static_cast<std::size_t>(cfg.modulated_layers());
    if (cfg.mode != ModulationMode::none &&
        (trace.modulations.layers.size() != hidden_layers ||
         trace.modulations.hyper.pre.size() != params.weights.hyper.size())) {
        throw ShapeError("backward: trace modulations do not match the model");
    }
    for (const Modulation& mod : trace.modulations.layers) {
        if (mod.mode != cfg.mode) {
            throw ShapeError("backward: trace was produced in mode " + to_string(mod.mode) +
                             ", model is " + to_string(cfg.mode));
        }
    }
    if (cfg.mode == ModulationMode::fourier &&
        (trace.rank_in.size() != hidden_layers || trace.modulations.phase.size() != hidden_layers)) {
        throw ShapeError("backward: trace lacks low-rank intermediates");
    }
    if (cfg.mode == ModulationMode::scale && trace.linear.size() != hidden_layers) {
        throw ShapeError("backward: trace lacks scale-mode pre-modulation activations");
    }
}

}  // namespace

GradientSet backward(const ForwardTrace& trace, const ModelParams& params, const Matrix& residual) {
    check_trace(trace, params, residual);
    const ModelConfig& cfg = params.config;
    const ParameterSet& w = params.weights;
    GradientSet grads = w.zeros_like();
    const auto hidden_layers = static_cast<std::size_t>(cfg.modulated_layers());
    const std::size_t head_width = static_cast<std::size_t>(cfg.head_width());
    Matrix head_grad(hidden_layers, head_width);

    const Matrix d_pred = scale(residual, 2.0);
    Matrix d_h = dense_backward(d_pred, trace.post.back(), w.output, grads.output, true);

    for (std::size_t l = hidden_layers; l-- > 0;) {
        const Matrix d_pre = through_sine(d_h, trace.pre[l + 1]);
        const Matrix& h_in = trace.post[l];
        switch (cfg.mode) {
            case ModulationMode::fourier: {
                const LowRankLayer& lr = w.low_rank[l];
                LowRankLayer& g = grads.low_rank[l];
                const Matrix& f_mod = trace.modulations.layers[l].payload;
                g.bias = column_sums(d_pre);
                g.alpha = matmul_tn(d_pre, trace.rank_mid[l]);
                const Matrix d_mid = matmul(d_pre, lr.alpha);
                const Matrix d_f = matmul_tn(d_mid, trace.rank_in[l]);
                const Matrix d_in = matmul(d_mid, f_mod);
                g.beta = matmul_tn(d_in, h_in);
                d_h = matmul(d_in, lr.beta);

                // f = cos(U), U = Omega ⊙ Z + phi
                const Matrix& phase = trace.modulations.phase[l];
                const std::size_t mm = phase.size();
                auto row = head_grad.row(l);
                for (std::size_t i = 0; i < mm; ++i) {
                    const double d_u = -std::sin(phase.data()[i]) * d_f.data()[i];
                    row[i] = d_u * params.z.data()[i];
                    row[mm + i] = d_u;
                }
                break;
            }
            case ModulationMode::shift: {
                const Matrix d_mu = column_sums(d_pre);
                std::copy(d_mu.data().begin(), d_mu.data().end(), head_grad.row(l).begin());
                d_h = dense_backward(d_pre, h_in, w.dense[l], grads.dense[l], true);
                break;
            }
            case ModulationMode::scale: {
                const Matrix& kappa = trace.modulations.layers[l].payload;
                const Matrix& lin = trace.linear[l];
                Matrix d_lin(d_pre.rows(), d_pre.cols());
                auto row = head_grad.row(l);
                for (std::size_t r = 0; r < d_pre.rows(); ++r) {
                    for (std::size_t j = 0; j < d_pre.cols(); ++j) {
                        d_lin(r, j) = d_pre(r, j) * kappa(0, j);
                        row[j] += d_pre(r, j) * lin(r, j);
                    }
                }
                d_h = dense_backward(d_lin, h_in, w.dense[l], grads.dense[l], true);
                break;
            }
            case ModulationMode::none:
                d_h = dense_backward(d_pre, h_in, w.dense[l], grads.dense[l], true);
                break;
        }
    }

    // pre = omega0 * (x W^T + b)
    const Matrix d_lin = scale(through_sine(d_h, trace.pre.front()), cfg.omega0);
    dense_backward(d_lin, trace.inputs, w.first, grads.first, false);

    if (cfg.mode != ModulationMode::none) {
        const HyperTrace& ht = trace.modulations.hyper;
        Matrix d_y = std::move(head_grad);
        for (std::size_t j = w.hyper.size(); j-- > 0;) {
            const Matrix& x = j == 0 ? ht.input : ht.act[j - 1];
            Matrix d_x = dense_backward(d_y, x, w.hyper[j], grads.hyper[j], j > 0);
            if (j > 0) {
                const Matrix& pre = ht.pre[j - 1];
                for (std::size_t i = 0; i < d_x.size(); ++i) {
                    if (!(pre.data()[i] > 0.0)) {
                        d_x.data()[i] = 0.0;
                    }
                }
                d_y = std::move(d_x);
            }
        }
    }
    return grads;
}

double summed_squared_error(const Matrix& predictions, const Matrix& targets) {
    if (!predictions.same_shape(targets)) {
        throw ShapeError("loss: predictions " + predictions.shape_str() + " vs targets " +
                         targets.shape_str());
    }
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double r = predictions.data()[i] - targets.data()[i];
        total += r * r;
    }
    return total;
}

double batch_loss(const ModelParams& params, std::span<const BandBatch> batches,
                  GradientSet* grads) {
    if (grads != nullptr) {
        *grads = params.weights.zeros_like();
    }
    double total = 0.0;
    for (const BandBatch& batch : batches) {
        const BandModulations mods = modulate_band(params, batch.condition);
        ForwardTrace trace;
        const Matrix pred =
            forward_modulated(params, batch.coords, mods, grads != nullptr ? &trace : nullptr);
        total += summed_squared_error(pred, batch.targets);
        if (grads != nullptr) {
            const GradientSet g = backward(trace, params, subtract(pred, batch.targets));
            auto dst = grads->arrays();
            auto src = g.arrays();
            for (std::size_t a = 0; a < dst.size(); ++a) {
                accumulate(*dst[a], *src[a]);
            }
        }
    }
    return total;
}

double finite_difference_check(const ModelParams& params, std::span<const BandBatch> batches,
                               double step, Stencil stencil) {
    if (!(step > 0.0)) {
        throw DomainError("finite_difference_check: step must be positive");
    }
    if (params.weights.scalar_count() == 0) {
        return 0.0;
    }
    GradientSet analytic;
    const double base = batch_loss(params, batches, &analytic);
    if (!std::isfinite(base)) {
        throw NumericError("finite_difference_check: non-finite loss");
    }

    ModelParams probe = params;
    auto probe_arrays = probe.weights.arrays();
    const auto grad_arrays = std::as_const(analytic).arrays();
    double worst = 0.0;
    for (std::size_t a = 0; a < probe_arrays.size(); ++a) {
        auto values = probe_arrays[a]->data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            auto loss_at = [&](double offset) {
                values[i] = saved + offset;
                const double v = batch_loss(probe, batches);
                if (!std::isfinite(v)) {
                    throw NumericError("finite_difference_check: non-finite loss");
                }
                return v;
            };
            double numeric = 0.0;
            if (stencil == Stencil::central2) {
                numeric = (loss_at(step) - loss_at(-step)) / (2.0 * step);
            } else if (stencil == Stencil::central4) {
                numeric = (8.0 * (loss_at(step) - loss_at(-step)) -
                           (loss_at(2.0 * step) - loss_at(-2.0 * step))) /
                          (12.0 * step);
            } else {
                numeric = (45.0 * (loss_at(step) - loss_at(-step)) -
                           9.0 * (loss_at(2.0 * step) - loss_at(-2.0 * step)) +
                           (loss_at(3.0 * step) - loss_at(-3.0 * step))) /
                          (60.0 * step);
            }
            values[i] = saved;
            const double exact = grad_arrays[a]->data()[i];
            const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(exact - numeric) / denom);
        }
    }
    return worst;
}

namespace {

std::vector<std::uint8_t> relu_pattern(const HyperTrace& trace) {
    std::vector<std::uint8_t> pattern;
    for (std::size_t j = 0; j + 1 < trace.pre.size(); ++j) {
        for (double v : trace.pre[j].data()) pattern.push_back(v > 0.0 ? 1 : v < 0.0 ? 0 : 2);
    }
    return pattern;
}

}  // namespace

bool stencil_crosses_kink(const ModelParams& params, std::span<const BandBatch> batches, double step,
                          Stencil stencil) {
    const ModelConfig& cfg = params.config;
    if (cfg.mode == ModulationMode::none || batches.empty()) {
        return false;
    }
    const int hidden = cfg.modulated_layers();
    Matrix input(batches.size() * static_cast<std::size_t>(hidden), cfg.hyper_input_width());
    std::size_t r = 0;
    for (const BandBatch& b : batches) {
        for (int l = 0; l < hidden; ++l, ++r) {
            const Matrix row = condition_row(cfg, {b.condition.eta_norm, b.condition.channel, l});
            for (std::size_t c = 0; c < row.cols(); ++c) input(r, c) = row(0, c);
        }
    }
    HyperTrace trace;
    hyper_mlp(params, input, &trace);
    const auto base = relu_pattern(trace);
    if (std::find(base.begin(), base.end(), 2) != base.end()) {
        return true;
    }
    std::vector<double> offsets{step, -step};
    const int reach = stencil == Stencil::central2 ? 1 : stencil == Stencil::central4 ? 2 : 3;
    for (int k = 2; k <= reach; ++k) {
        offsets.push_back(k * step);
        offsets.push_back(-k * step);
    }
    ModelParams probe = params;
    for (DenseLayer& layer : probe.weights.hyper) {
        for (Matrix* m : {&layer.weight, &layer.bias}) {
            auto values = m->data();
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double saved = values[i];
                for (double offset : offsets) {
                    values[i] = saved + offset;
                    hyper_mlp(probe, input, &trace);
                    if (relu_pattern(trace) != base) {
                        return true;
                    }
                }
                values[i] = saved;
            }
        }
    }
    return false;
}

}  // namespace implisat
