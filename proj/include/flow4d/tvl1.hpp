#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include "flow4d/interp.hpp"
#include "flow4d/stencil.hpp"
#include "flow4d/types.hpp"

namespace flow4d {

// Dual vector fields of the total-variation term, one 3-vector field per flow
// component. Starts at zero.
template <typename Scalar>
struct DualState {
    std::array<VectorField<Scalar>, 3> p;

    static DualState zero(const Dims& dims) {
        return DualState{{VectorField<Scalar>::zero(dims), VectorField<Scalar>::zero(dims),
                          VectorField<Scalar>::zero(dims)}};
    }
};

template <typename Scalar>
struct FlowResult {
    FlowField<Scalar> flow;
    ScalarVolume<Scalar> warped;                // moving frame resampled through `flow`
    std::vector<Scalar> residual_history;       // data-term energy per iteration
};

// Linearized data residual rho(flow) = moving(x + flow0)
//   + sum_j (flow_j - flow0_j) * grad_at_flow0_j - fixed(x).
// `grad_at_flow0` is the moving frame's gradient resampled at x + flow0.
template <typename Scalar>
ScalarVolume<Scalar> residual(const ScalarVolume<Scalar>& fixed, const ScalarVolume<Scalar>& moving,
                              const FlowField<Scalar>& flow0, const FlowField<Scalar>& flow,
                              const VectorField<Scalar>& grad_at_flow0) {
    if (!same_dims(fixed.dims, moving.dims) || !same_dims(fixed.dims, flow0.dims) ||
        !same_dims(fixed.dims, flow.dims) || !same_dims(fixed.dims, grad_at_flow0.dims))
        throw ShapeError("residual: all grids must share dims");
    ScalarVolume<Scalar> rho = warp(moving, flow0);
    rho.data += (flow.comp[0] - flow0.comp[0]) * grad_at_flow0.comp[0] +
                (flow.comp[1] - flow0.comp[1]) * grad_at_flow0.comp[1] +
                (flow.comp[2] - flow0.comp[2]) * grad_at_flow0.comp[2] - fixed.data;
    return rho;
}

// Thresholded data step. Returns the per-voxel increment v to be added onto
// the flow the residual was evaluated at:
//   v =  lambda*theta*grad        if rho < -lambda*theta*|grad|^2
//   v = -lambda*theta*grad        if rho >  lambda*theta*|grad|^2
//   v = -rho*grad/(|grad|^2+eps)  otherwise.
template <typename Scalar>
VectorField<Scalar> update_v(const ScalarVolume<Scalar>& rho, const VectorField<Scalar>& grad,
                             const SolverParams<Scalar>& params) {
    if (!same_dims(rho.dims, grad.dims)) throw ShapeError("update_v: rho and grad dims differ");
    const Scalar lt = params.lambda * params.theta;
    const Grid<Scalar>& gx = grad.comp[0];
    const Grid<Scalar>& gy = grad.comp[1];
    const Grid<Scalar>& gz = grad.comp[2];
    const Grid<Scalar> g2 = gx * gx + gy * gy + gz * gz;
    const Grid<Scalar> thresh = lt * g2;
    const Grid<Scalar> mid = -rho.data / (g2 + params.epsilon);
    VectorField<Scalar> v;
    v.dims = rho.dims;
    const auto low = rho.data < -thresh;
    const auto high = rho.data > thresh;
    v.comp[0] = low.select(lt * gx, high.select(-lt * gx, mid * gx));
    v.comp[1] = low.select(lt * gy, high.select(-lt * gy, mid * gy));
    v.comp[2] = low.select(lt * gz, high.select(-lt * gz, mid * gz));
    return v;
}

// Dual ascent step. For each flow component j:
//   p_j <- (p_j + (tau/theta) * grad(flow_j)) / (1 + (tau/theta) * |grad(flow_j)|)
// with |.| the per-voxel Euclidean norm of the component's derivative 3-vector.
template <typename Scalar>
DualState<Scalar> update_dual(const DualState<Scalar>& state, const FlowField<Scalar>& flow,
                              const KernelSet<Scalar>& kernels, const SolverParams<Scalar>& params) {
    DualState<Scalar> next;
    const Scalar a = params.tau / params.theta;
    for (int j = 0; j < 3; ++j) {
        if (!same_dims(state.p[j].dims, flow.dims))
            throw ShapeError("update_dual: dual state and flow dims differ");
        const VectorField<Scalar> g = flow_component_gradient(flow.comp[j], flow.dims, kernels);
        const Grid<Scalar> denom =
            Scalar(1) +
            a * (g.comp[0] * g.comp[0] + g.comp[1] * g.comp[1] + g.comp[2] * g.comp[2]).sqrt();
        next.p[j].dims = flow.dims;
        for (int k = 0; k < 3; ++k)
            next.p[j].comp[k] = (state.p[j].comp[k] + a * g.comp[k]) / denom;
    }
    return next;
}

// Solver intensities are min-max normalized to the 8-bit image range. The
// stock data weight (lambda = 0.15) comes from implementations operating on
// 0..255 images; the case thresholds scale with lambda * intensity^2, so
// normalizing to [0,1] instead would starve the data step by two orders of
// magnitude.
template <typename Scalar>
inline constexpr Scalar kIntensityScale = Scalar(255);

namespace detail {

// Joint min-max normalization of a pair to [0, kIntensityScale]; constant
// pairs map to zero.
template <typename Scalar>
std::pair<ScalarVolume<Scalar>, ScalarVolume<Scalar>> normalize_pair(
    const ScalarVolume<Scalar>& a, const ScalarVolume<Scalar>& b) {
    const Scalar lo = std::min(a.data.minCoeff(), b.data.minCoeff());
    const Scalar hi = std::max(a.data.maxCoeff(), b.data.maxCoeff());
    const Scalar range = hi - lo;
    ScalarVolume<Scalar> an = a, bn = b;
    if (range > Scalar(0)) {
        an.data = (a.data - lo) * (kIntensityScale<Scalar> / range);
        bn.data = (b.data - lo) * (kIntensityScale<Scalar> / range);
    } else {
        an.data.setZero();
        bn.data.setZero();
    }
    return {std::move(an), std::move(bn)};
}

template <typename Scalar>
FlowResult<Scalar> solve_single_scale(const ScalarVolume<Scalar>& fixed,
                                      const ScalarVolume<Scalar>& moving,
                                      const KernelSet<Scalar>& kernels,
                                      const SolverParams<Scalar>& params,
                                      const FlowField<Scalar>& init) {
    auto [fixed_n, moving_n] = params.normalize_inputs
                                   ? normalize_pair(fixed, moving)
                                   : std::pair<ScalarVolume<Scalar>, ScalarVolume<Scalar>>(fixed, moving);
    const VectorField<Scalar> grad_moving = gradient(moving_n, kernels);

    FlowField<Scalar> flow = init;
    FlowField<Scalar> flow0 = init;
    DualState<Scalar> dual = DualState<Scalar>::zero(fixed.dims);

    ScalarVolume<Scalar> warped_n;
    VectorField<Scalar> grad_w;
    grad_w.dims = fixed.dims;
    bool linearized = false;

    std::vector<Scalar> history;
    history.reserve(static_cast<size_t>(params.n_iters));

    for (int iter = 0; iter < params.n_iters; ++iter) {
        if (params.relinearize || !linearized) {
            flow0 = flow;
            warped_n = warp(moving_n, flow0);
            for (int a = 0; a < 3; ++a) {
                ScalarVolume<Scalar> comp{moving_n.dims, moving_n.spacing, grad_moving.comp[a]};
                grad_w.comp[a] = warp(comp, flow0).data;
            }
            linearized = true;
        }
        ScalarVolume<Scalar> rho = warped_n;
        rho.data += (flow.comp[0] - flow0.comp[0]) * grad_w.comp[0] +
                    (flow.comp[1] - flow0.comp[1]) * grad_w.comp[1] +
                    (flow.comp[2] - flow0.comp[2]) * grad_w.comp[2] - fixed_n.data;

        const Scalar energy = rho.data.abs().sum();
        if (!std::isfinite(energy))
            throw NumericalError("estimate_flow diverged at iteration " + std::to_string(iter));
        history.push_back(energy);

        const VectorField<Scalar> v = update_v(rho, grad_w, params);
        for (int j = 0; j < 3; ++j) {
            const Grid<Scalar> div_p =
                conv2_adjoint_axis(dual.p[j].comp[0], fixed.dims, 0, kernels.div[0]) +
                conv2_adjoint_axis(dual.p[j].comp[1], fixed.dims, 1, kernels.div[1]) +
                conv2_adjoint_axis(dual.p[j].comp[2], fixed.dims, 2, kernels.div[2]);
            flow.comp[j] += v.comp[j] + params.theta * div_p;
        }
        dual = update_dual(dual, flow, kernels, params);
    }

    for (const auto& c : flow.comp)
        if (!c.allFinite())
            throw NumericalError("estimate_flow diverged at iteration " +
                                 std::to_string(params.n_iters));

    FlowResult<Scalar> result;
    result.flow = std::move(flow);
    result.warped = warp(moving, result.flow);
    result.residual_history = std::move(history);
    return result;
}

}  // namespace detail

// Joint min-max normalization of a whole sequence to [0, kIntensityScale]
// (reference and frames together); constant sequences map to zero.
template <typename Scalar>
VolumeSequence<Scalar> normalize_sequence(const VolumeSequence<Scalar>& seq) {
    Scalar lo = seq.reference.data.minCoeff();
    Scalar hi = seq.reference.data.maxCoeff();
    for (const auto& f : seq.frames) {
        lo = std::min(lo, f.data.minCoeff());
        hi = std::max(hi, f.data.maxCoeff());
    }
    const Scalar range = hi - lo;
    VolumeSequence<Scalar> out = seq;
    auto rescale = [&](Grid<Scalar>& g) {
        if (range > Scalar(0))
            g = (g - lo) * (kIntensityScale<Scalar> / range);
        else
            g.setZero();
    };
    rescale(out.reference.data);
    for (auto& f : out.frames) rescale(f.data);
    return out;
}

// Pairwise flow estimation by the unrolled TV-L1 fixed-point iteration.
// Each iteration refreshes the linearization point at the current flow
// (unless params.relinearize is off), applies the thresholded data step,
// adds theta * div(p), and advances the dual fields. Intensities are jointly
// min-max normalized before solving; the returned warped frame is the
// original moving volume resampled through the final flow.
template <typename Scalar>
FlowResult<Scalar> estimate_flow(const ScalarVolume<Scalar>& fixed, const ScalarVolume<Scalar>& moving,
                                 const KernelSet<Scalar>& kernels, const SolverParams<Scalar>& params,
                                 const std::optional<FlowField<Scalar>>& init = std::nullopt) {
    params.validate();
    if (!same_dims(fixed.dims, moving.dims))
        throw ShapeError("estimate_flow: fixed dims " + dims_str(fixed.dims) + " vs moving " +
                         dims_str(moving.dims));
    if (fixed.spacing != moving.spacing)
        throw std::invalid_argument("estimate_flow: fixed and moving spacing differ");
    if (init && !same_dims(init->dims, fixed.dims))
        throw ShapeError("estimate_flow: init flow dims differ from volumes");

    FlowField<Scalar> start = init ? *init : FlowField<Scalar>::zero(fixed.dims);

    if (params.use_pyramid && (fixed.dims >= 8).all()) {
        const ScalarVolume<Scalar> fixed_c = downsample2(fixed);
        const ScalarVolume<Scalar> moving_c = downsample2(moving);
        SolverParams<Scalar> coarse_params = params;
        coarse_params.use_pyramid = false;
        FlowField<Scalar> init_c = FlowField<Scalar>::zero(fixed_c.dims);
        const FlowResult<Scalar> coarse =
            detail::solve_single_scale(fixed_c, moving_c, kernels, coarse_params, init_c);
        start = upsample_flow(coarse.flow, fixed.dims);
        if (init)
            for (int c = 0; c < 3; ++c) start.comp[c] += init->comp[c];
    }

    return detail::solve_single_scale(fixed, moving, kernels, params, start);
}

}  // namespace flow4d
