#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "flow4d/losses.hpp"
#include "flow4d/tvl1.hpp"
#include "flow4d/types.hpp"

namespace flow4d {

template <typename Scalar>
struct TrainConfig {
    Scalar learning_rate = Scalar(0.01);
    int epochs = 1;
    Scalar fd_step = Scalar(1e-3);
    int window = 4;                 // temporal window length
    LossWeights<Scalar> weights{};
    SolverParams<Scalar> solver{};
    std::uint64_t seed = 0;         // data-order shuffle

    void validate() const {
        // learning_rate == 0 is allowed as a no-op descent.
        if (learning_rate < Scalar(0) || !std::isfinite(double(learning_rate)))
            throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (!(fd_step > Scalar(0))) throw std::invalid_argument("TrainConfig: fd_step must be > 0");
        if (window < 2) throw std::invalid_argument("TrainConfig: window must be >= 2");
    }
};

inline KernelSet<double> init_kernels() { return KernelSet<double>::initial(); }

// Normalizes each sequence once, then slides a window of `window` frames
// (stride 1). Sequences shorter than the window contribute one window with
// all their frames.
template <typename Scalar>
std::vector<VolumeSequence<Scalar>> make_training_windows(
    const std::vector<VolumeSequence<Scalar>>& train_set, int window) {
    std::vector<VolumeSequence<Scalar>> windows;
    for (const auto& seq : train_set) {
        const int n = static_cast<int>(seq.frames.size());
        if (n < 2) throw std::invalid_argument("training sequence needs >= 2 frames");
        const VolumeSequence<Scalar> norm = normalize_sequence(seq);
        const int w = std::min(window, n);
        for (int s = 0; s + w <= n; ++s) {
            VolumeSequence<Scalar> win;
            win.reference = norm.reference;
            win.frames.assign(norm.frames.begin() + s, norm.frames.begin() + s + w);
            windows.push_back(std::move(win));
        }
    }
    return windows;
}

// Combined objective of one pre-normalized window: estimates the pairwise
// chain and the reference flows with the given kernels (zero-initialized
// solves), then evaluates the combined loss.
template <typename Scalar>
Scalar window_objective(const KernelSet<Scalar>& kernels, const VolumeSequence<Scalar>& window,
                        const LossWeights<Scalar>& weights, SolverParams<Scalar> solver) {
    solver.normalize_inputs = false;
    const size_t n = window.frames.size();
    FlowChain<Scalar> chain;
    for (size_t i = 0; i + 1 < n; ++i) {
        chain.forward.push_back(estimate_flow(window.frames[i], window.frames[i + 1], kernels, solver).flow);
        chain.backward.push_back(estimate_flow(window.frames[i + 1], window.frames[i], kernels, solver).flow);
    }
    std::vector<FlowField<Scalar>> refs;
    for (size_t i = 0; i < n; ++i)
        refs.push_back(estimate_flow(window.reference, window.frames[i], kernels, solver).flow);
    return total_loss(window, chain, refs, weights, kernels).total;
}

template <typename Scalar>
Scalar batch_objective(const KernelSet<Scalar>& kernels,
                       const std::vector<VolumeSequence<Scalar>>& batch,
                       const TrainConfig<Scalar>& config) {
    if (batch.empty()) throw std::invalid_argument("batch_objective: empty batch");
    Scalar sum = 0;
    for (const auto& win : batch) sum += window_objective(kernels, win, config.weights, config.solver);
    return sum / Scalar(batch.size());
}

// Central-difference gradient of an arbitrary functional of the 21 kernel
// weights. The 42 probe evaluations are independent and may run in parallel;
// the result is assembled in fixed weight order. A non-finite probe value
// aborts with the name of the perturbed weight.
template <typename Scalar, typename Objective>
Eigen::Matrix<Scalar, 21, 1> central_difference_gradient(Objective&& objective,
                                                         const Eigen::Matrix<Scalar, 21, 1>& w0,
                                                         Scalar step) {
    if (!(step > Scalar(0))) throw std::invalid_argument("central_difference_gradient: step must be > 0");
    constexpr int n_weights = KernelSet<Scalar>::parameter_count;
    Eigen::Matrix<Scalar, 2 * n_weights, 1> probes;
    int failed = -1;

#pragma omp parallel for schedule(dynamic)
    for (int probe = 0; probe < 2 * n_weights; ++probe) {
        const int i = probe / 2;
        const Scalar sign = (probe % 2 == 0) ? Scalar(1) : Scalar(-1);
        Eigen::Matrix<Scalar, 21, 1> w = w0;
        w[i] += sign * step;
        Scalar value;
        try {
            value = objective(w);
        } catch (...) {
            value = std::numeric_limits<Scalar>::quiet_NaN();
        }
        probes[probe] = value;
        if (!std::isfinite(double(value))) {
#pragma omp critical
            if (failed < 0 || i < failed) failed = i;
        }
    }
    if (failed >= 0)
        throw NumericalError("central_difference_gradient: non-finite value perturbing " +
                             kernel_weight_name(failed));

    Eigen::Matrix<Scalar, 21, 1> g;
    for (int i = 0; i < n_weights; ++i)
        g[i] = (probes[2 * i] - probes[2 * i + 1]) / (Scalar(2) * step);
    return g;
}

// Gradient of the mean training objective with respect to the kernel weights.
template <typename Scalar>
Eigen::Matrix<Scalar, 21, 1> loss_gradient_fd(const KernelSet<Scalar>& kernels,
                                              const std::vector<VolumeSequence<Scalar>>& batch,
                                              const TrainConfig<Scalar>& config) {
    config.validate();
    if (batch.empty()) throw std::invalid_argument("loss_gradient_fd: empty batch");
    return central_difference_gradient(
        [&](const Eigen::Matrix<Scalar, 21, 1>& w) {
            return batch_objective(KernelSet<Scalar>::from_vector(w), batch, config);
        },
        kernels.to_vector(), config.fd_step);
}

template <typename Scalar>
struct TrainResult {
    KernelSet<Scalar> kernels;      // weights with the lowest recorded loss
    std::vector<Scalar> history;    // mean objective at each epoch start, plus final
};

// Plain gradient descent on the kernel weights starting from the stock
// stencils. Deterministic given the seed and train-set order.
template <typename Scalar>
TrainResult<Scalar> train_kernels(const std::vector<VolumeSequence<Scalar>>& train_set,
                                  const TrainConfig<Scalar>& config) {
    config.validate();
    if (train_set.empty()) throw std::invalid_argument("train_kernels: empty training set");
    std::vector<VolumeSequence<Scalar>> windows = make_training_windows(train_set, config.window);

    // Data-order shuffle; the mean objective is order-independent up to
    // rounding, but the order is part of the reproducible run description.
    detail::Rng64 rng(config.seed);
    for (size_t i = windows.size(); i > 1; --i)
        std::swap(windows[i - 1], windows[rng.below(i)]);

    Eigen::Matrix<Scalar, 21, 1> w = KernelSet<Scalar>::initial().to_vector();
    Eigen::Matrix<Scalar, 21, 1> best_w = w;
    Scalar best_loss = std::numeric_limits<Scalar>::infinity();
    TrainResult<Scalar> result;

    auto evaluate = [&](int epoch) {
        const Scalar loss = batch_objective(KernelSet<Scalar>::from_vector(w), windows, config);
        if (!std::isfinite(double(loss)))
            throw NumericalError("train_kernels: loss diverged at epoch " + std::to_string(epoch));
        result.history.push_back(loss);
        if (loss < best_loss) {
            best_loss = loss;
            best_w = w;
        }
        return loss;
    };

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        evaluate(epoch);
        const Eigen::Matrix<Scalar, 21, 1> g =
            loss_gradient_fd(KernelSet<Scalar>::from_vector(w), windows, config);
        w -= config.learning_rate * g;
        if (!w.allFinite())
            throw NumericalError("train_kernels: weights diverged at epoch " + std::to_string(epoch));
    }
    evaluate(config.epochs);

    result.kernels = KernelSet<Scalar>::from_vector(best_w);
    return result;
}

}  // namespace flow4d
