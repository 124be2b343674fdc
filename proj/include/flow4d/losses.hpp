#pragma once

#include "flow4d/interp.hpp"
#include "flow4d/stencil.hpp"
#include "flow4d/types.hpp"

namespace flow4d {

// Pairwise flows of a sequence window: forward[i] maps frame i+1 points to
// frame i+2, backward[i] maps frame i+2 points back to frame i+1 (1-based
// frame numbering over the window).
template <typename Scalar>
struct FlowChain {
    std::vector<FlowField<Scalar>> forward;
    std::vector<FlowField<Scalar>> backward;

    void validate() const {
        if (forward.empty() || forward.size() != backward.size())
            throw std::invalid_argument("FlowChain: need equal, nonempty forward/backward lists");
        for (const auto& f : forward)
            if (!same_dims(f.dims, forward.front().dims))
                throw ShapeError("FlowChain: forward flow dims differ");
        for (const auto& b : backward)
            if (!same_dims(b.dims, forward.front().dims))
                throw ShapeError("FlowChain: backward flow dims differ");
    }
};

namespace detail {

template <typename Scalar>
Grid<Scalar> per_voxel_norm(const VectorField<Scalar>& f) {
    return (f.comp[0] * f.comp[0] + f.comp[1] * f.comp[1] + f.comp[2] * f.comp[2]).sqrt();
}

}  // namespace detail

// Spatial loss of one registered pair:
//   lambda * mean |fixed - warp(moving, flow)|
//   + mean over voxels of the summed per-component gradient norms of the flow.
// The data term uses the exact (non-linearized) residual; the smoothness term
// uses the 2-tap flow-derivative kernels.
template <typename Scalar>
Scalar reconstruction_loss(const ScalarVolume<Scalar>& fixed, const ScalarVolume<Scalar>& moving,
                           const FlowField<Scalar>& flow, const KernelSet<Scalar>& kernels,
                           Scalar lambda) {
    if (!same_dims(fixed.dims, moving.dims) || !same_dims(fixed.dims, flow.dims))
        throw ShapeError("reconstruction_loss: dims mismatch");
    const ScalarVolume<Scalar> warped = warp(moving, flow);
    const Scalar data = (fixed.data - warped.data).abs().mean();
    Grid<Scalar> tv = Grid<Scalar>::Zero(fixed.data.size());
    for (int j = 0; j < 3; ++j)
        tv += detail::per_voxel_norm(flow_component_gradient(flow.comp[j], flow.dims, kernels));
    return lambda * data + tv.mean();
}

// Left-fold of compose_flow over the forward flows; the result carries
// frame-1 points to the last frame of the window.
template <typename Scalar>
FlowField<Scalar> forward_cycle(const FlowChain<Scalar>& chain) {
    chain.validate();
    FlowField<Scalar> acc = chain.forward.front();
    for (size_t i = 1; i < chain.forward.size(); ++i) acc = compose_flow(acc, chain.forward[i]);
    return acc;
}

// Left-fold of compose_flow over the backward flows in reverse frame order;
// the result carries last-frame points back to frame 1.
template <typename Scalar>
FlowField<Scalar> backward_cycle(const FlowChain<Scalar>& chain) {
    chain.validate();
    FlowField<Scalar> acc = chain.backward.back();
    for (size_t i = chain.backward.size() - 1; i-- > 0;) acc = compose_flow(acc, chain.backward[i]);
    return acc;
}

// Whole-cycle consistency: advect frame-1 points forward to the last frame
// and back, then compare the round trip against the first forward flow.
// Returns the mean per-voxel Euclidean norm of the difference.
template <typename Scalar>
Scalar cycle_loss(const FlowChain<Scalar>& chain) {
    chain.validate();
    const FlowField<Scalar> round_trip = compose_flow(forward_cycle(chain), backward_cycle(chain));
    VectorField<Scalar> diff;
    diff.dims = round_trip.dims;
    for (int c = 0; c < 3; ++c) diff.comp[c] = chain.forward.front().comp[c] - round_trip.comp[c];
    return detail::per_voxel_norm(diff).mean();
}

// Forward-backward consistency per adjacent pair: the backward flow sampled
// at x + forward(x) should cancel forward(x). Mean over the pairs of the mean
// per-voxel residual norm.
template <typename Scalar>
Scalar single_cycle_loss(const FlowChain<Scalar>& chain) {
    chain.validate();
    Scalar total = 0;
    for (size_t i = 0; i < chain.forward.size(); ++i) {
        const FlowField<Scalar> res = compose_flow(chain.forward[i], chain.backward[i]);
        total += detail::per_voxel_norm(res).mean();
    }
    return total / Scalar(chain.forward.size());
}

template <typename Scalar>
Scalar temporal_consistency_loss(const FlowChain<Scalar>& chain, Scalar omega) {
    return single_cycle_loss(chain) + omega * cycle_loss(chain);
}

template <typename Scalar>
struct LossBreakdown {
    Scalar total = 0;
    Scalar temporal = 0;        // single_cycle + omega * cycle
    Scalar cycle = 0;
    Scalar single_cycle = 0;
    Scalar reconstruction = 0;  // mean over frames of the spatial loss
};

// Combined objective: gamma * temporal consistency over the chain plus
// beta * mean reconstruction loss of every frame against the reference.
template <typename Scalar>
LossBreakdown<Scalar> total_loss(const VolumeSequence<Scalar>& seq, const FlowChain<Scalar>& chain,
                                 const std::vector<FlowField<Scalar>>& ref_flows,
                                 const LossWeights<Scalar>& weights, const KernelSet<Scalar>& kernels) {
    weights.validate();
    chain.validate();
    if (seq.frames.size() < 2) throw std::invalid_argument("total_loss: sequence needs >= 2 frames");
    if (chain.forward.size() != seq.frames.size() - 1)
        throw std::invalid_argument("total_loss: chain does not cover the sequence");
    if (ref_flows.size() != seq.frames.size())
        throw std::invalid_argument("total_loss: need one reference flow per frame");

    LossBreakdown<Scalar> out;
    out.cycle = cycle_loss(chain);
    out.single_cycle = single_cycle_loss(chain);
    out.temporal = out.single_cycle + weights.omega * out.cycle;
    Scalar rec = 0;
    for (size_t i = 0; i < seq.frames.size(); ++i)
        rec += reconstruction_loss(seq.reference, seq.frames[i], ref_flows[i], kernels, weights.lambda);
    out.reconstruction = rec / Scalar(seq.frames.size());
    out.total = weights.gamma * out.temporal + weights.beta * out.reconstruction;
    return out;
}

}  // namespace flow4d
