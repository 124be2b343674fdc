#pragma once

#include <chrono>

#include "flow4d/losses.hpp"
#include "flow4d/tvl1.hpp"
#include "flow4d/types.hpp"

namespace flow4d {

template <typename Scalar>
struct WindowLoss {
    int first_frame = 0;  // 1-based index of the window's first tracked frame
    int last_frame = 0;
    LossBreakdown<Scalar> loss;
};

template <typename Scalar>
struct TrackingResult {
    std::vector<FlowField<Scalar>> ref_flows;  // reference -> frame i
    FlowChain<Scalar> chain;                   // adjacent-pair flows, both directions
    std::vector<WindowLoss<Scalar>> losses;    // combined objective per sliding window
    std::vector<double> timing_s;              // wall-clock seconds attributed per frame
};

template <typename Scalar>
struct TrackOptions {
    // Warm-start each pair's solve from the previous pair's flow. Off
    // reproduces independent per-pair estimation.
    bool warm_start = true;
    LossWeights<Scalar> weights{};
};

// 4D tracking: pairwise forward/backward flows across the sequence plus
// direct reference-to-frame flows, then the combined loss over sliding
// windows of `window` frames. Intensities are normalized once for the whole
// sequence; losses are evaluated on the normalized frames.
template <typename Scalar>
TrackingResult<Scalar> track_sequence(const VolumeSequence<Scalar>& seq,
                                      const KernelSet<Scalar>& kernels,
                                      const SolverParams<Scalar>& params, int window,
                                      const TrackOptions<Scalar>& options = {}) {
    const int n = static_cast<int>(seq.frames.size());
    if (n < 2) throw std::invalid_argument("track_sequence: need at least 2 frames");
    if (window < 2) throw std::invalid_argument("track_sequence: window must be >= 2");
    const int w = std::min(window, n);

    const VolumeSequence<Scalar> norm = normalize_sequence(seq);
    SolverParams<Scalar> solver = params;
    solver.normalize_inputs = false;

    using Clock = std::chrono::steady_clock;
    TrackingResult<Scalar> result;
    result.timing_s.assign(static_cast<size_t>(n), 0.0);
    auto timed = [&](int frame_idx, auto&& fn) {
        const auto t0 = Clock::now();
        auto out = fn();
        result.timing_s[static_cast<size_t>(frame_idx)] +=
            std::chrono::duration<double>(Clock::now() - t0).count();
        return out;
    };

    auto solve = [&](const ScalarVolume<Scalar>& fixed, const ScalarVolume<Scalar>& moving,
                     const std::vector<FlowField<Scalar>>& prev, int frame_idx) {
        std::optional<FlowField<Scalar>> init;
        if (options.warm_start && !prev.empty()) init = prev.back();
        try {
            return timed(frame_idx, [&] { return estimate_flow(fixed, moving, kernels, solver, init); });
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (frame " + std::to_string(frame_idx + 1) + ")");
        }
    };

    for (int i = 0; i < n; ++i)
        result.ref_flows.push_back(solve(norm.reference, norm.frames[static_cast<size_t>(i)],
                                         result.ref_flows, i).flow);
    for (int i = 0; i + 1 < n; ++i)
        result.chain.forward.push_back(solve(norm.frames[static_cast<size_t>(i)],
                                             norm.frames[static_cast<size_t>(i + 1)],
                                             result.chain.forward, i).flow);
    for (int i = 0; i + 1 < n; ++i)
        result.chain.backward.push_back(solve(norm.frames[static_cast<size_t>(i + 1)],
                                              norm.frames[static_cast<size_t>(i)],
                                              result.chain.backward, i).flow);

    for (int s = 0; s + w <= n; ++s) {
        const int last = s + w - 1;
        const auto t0 = Clock::now();
        VolumeSequence<Scalar> win;
        win.reference = norm.reference;
        win.frames.assign(norm.frames.begin() + s, norm.frames.begin() + last + 1);
        FlowChain<Scalar> sub;
        sub.forward.assign(result.chain.forward.begin() + s, result.chain.forward.begin() + last);
        sub.backward.assign(result.chain.backward.begin() + s, result.chain.backward.begin() + last);
        std::vector<FlowField<Scalar>> refs(result.ref_flows.begin() + s,
                                            result.ref_flows.begin() + last + 1);
        WindowLoss<Scalar> wl;
        wl.first_frame = s + 1;
        wl.last_frame = last + 1;
        wl.loss = total_loss(win, sub, refs, options.weights, kernels);
        result.losses.push_back(std::move(wl));
        result.timing_s[static_cast<size_t>(last)] +=
            std::chrono::duration<double>(Clock::now() - t0).count();
    }
    return result;
}

enum class TrajectoryMode { pairwise_integration, reference_direct };

// Lagrangian path of a material point placed at `start` in the reference
// frame. reference_direct maps through the reference flows; pairwise
// integration steps through ref flow 1 and then the adjacent-pair flows.
// Positions are clamped to the grid box.
template <typename Scalar>
std::vector<Vec3<Scalar>> lagrangian_trajectory(const Vec3<Scalar>& start,
                                                const TrackingResult<Scalar>& result,
                                                TrajectoryMode mode) {
    if (result.ref_flows.empty())
        throw std::invalid_argument("lagrangian_trajectory: tracking result has no flows");
    const Dims dims = result.ref_flows.front().dims;
    auto clamp_box = [&](Vec3<Scalar> p) {
        for (int a = 0; a < 3; ++a)
            p[a] = p[a] < Scalar(0) ? Scalar(0)
                                    : (p[a] > Scalar(dims[a] - 1) ? Scalar(dims[a] - 1) : p[a]);
        return p;
    };
    for (int a = 0; a < 3; ++a)
        if (!(start[a] >= Scalar(0)) || !(start[a] <= Scalar(dims[a] - 1)))
            throw std::invalid_argument("lagrangian_trajectory: start outside the grid box");

    const size_t n = result.ref_flows.size();
    std::vector<Vec3<Scalar>> traj;
    traj.reserve(n + 1);
    traj.push_back(start);
    if (mode == TrajectoryMode::reference_direct) {
        for (size_t i = 0; i < n; ++i)
            traj.push_back(clamp_box(start + sample_flow(result.ref_flows[i], start)));
    } else {
        Vec3<Scalar> x = clamp_box(start + sample_flow(result.ref_flows.front(), start));
        traj.push_back(x);
        for (const auto& fwd : result.chain.forward) {
            x = clamp_box(x + sample_flow(fwd, x));
            traj.push_back(x);
        }
    }
    return traj;
}

}  // namespace flow4d
