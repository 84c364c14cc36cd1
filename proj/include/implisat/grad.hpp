#pragma once

#include <span>

#include "implisat/model.hpp"

namespace implisat {

/// Gradient of the summed squared error sum((pred - target)^2) with respect
/// to every trainable array, given residual = pred - target from the forward
/// call that produced `trace`. Mean scaling belongs to the caller.
GradientSet backward(const ForwardTrace& trace, const ModelParams& params, const Matrix& residual);

/// sum over entries of (pred - target)^2.
double summed_squared_error(const Matrix& predictions, const Matrix& targets);

/// Coordinates and targets for one band, conditioned on that band.
struct BandBatch {
    BandCondition condition;
    Matrix coords;   // k x 2
    Matrix targets;  // k x 1
};

/// Summed squared error over all batches; when `grads` is given it receives
/// the matching analytic gradient, summed over bands in order.
double batch_loss(const ModelParams& params, std::span<const BandBatch> batches,
                  GradientSet* grads = nullptr);

enum class Stencil {
    central2,  // (f(x+h) - f(x-h)) / 2h, error O(h^2)
    central4,  // five-point central difference, error O(h^4)
    central6,  // seven-point central difference, error O(h^6)
};

/// Central-difference check of every trainable scalar against the analytic
/// gradient of batch_loss. Returns max |analytic - numeric| /
/// max(|analytic|, |numeric|, 1e-8); 0 for a model with nothing to train.
///
/// The seven-point stencil is the default. omega0 multiplies the first-layer
/// weights, so truncation error there grows like (omega0 * step)^order. At
/// omega0 = 30 and step 1e-3 the two-point rule sits above 1e-4 for any
/// gradient, and the five-point rule still does for first-layer entries a
/// few thousand times smaller than the largest one.
double finite_difference_check(const ModelParams& params, std::span<const BandBatch> batches,
                               double step, Stencil stencil = Stencil::central6);

/// True when some stencil offset of some hypernetwork scalar flips a ReLU in
/// the hypernetwork trunk for the batches' condition rows (or a pre-activation
/// sits exactly at 0). The loss has a kink inside such a stencil, so the
/// difference quotient there is not a derivative estimate at all.
bool stencil_crosses_kink(const ModelParams& params, std::span<const BandBatch> batches, double step,
                          Stencil stencil = Stencil::central6);

}  // namespace implisat
