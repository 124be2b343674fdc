#pragma once

#include <cmath>

#include "flow4d/types.hpp"

namespace flow4d {

template <typename Scalar>
struct MetricStats {
    Scalar mean = 0;
    Scalar stddev = 0;
    Index n = 0;  // masked voxel count
};

using VoxelMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

namespace detail {

// Mean/std of the per-voxel Euclidean norm of (pred - gt) with components
// scaled per axis, restricted to the mask.
template <typename Scalar>
MetricStats<Scalar> displacement_error_stats(const FlowField<Scalar>& pred,
                                             const FlowField<Scalar>& gt, const VoxelMask& mask,
                                             const Vec3<Scalar>& scale) {
    if (!same_dims(pred.dims, gt.dims)) throw ShapeError("displacement error: dims differ");
    if (mask.size() != voxel_count(pred.dims))
        throw ShapeError("displacement error: mask size does not match dims");
    MetricStats<Scalar> stats;
    Scalar sum = 0, sum2 = 0;
    for (Index i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const Scalar ex = (pred.comp[0][i] - gt.comp[0][i]) * scale[0];
        const Scalar ey = (pred.comp[1][i] - gt.comp[1][i]) * scale[1];
        const Scalar ez = (pred.comp[2][i] - gt.comp[2][i]) * scale[2];
        const Scalar e = std::sqrt(ex * ex + ey * ey + ez * ez);
        sum += e;
        sum2 += e * e;
        ++stats.n;
    }
    if (stats.n == 0) throw std::invalid_argument("displacement error: empty mask");
    stats.mean = sum / Scalar(stats.n);
    const Scalar var = sum2 / Scalar(stats.n) - stats.mean * stats.mean;
    stats.stddev = var > Scalar(0) ? std::sqrt(var) : Scalar(0);
    return stats;
}

}  // namespace detail

// Displacement error in mm: per masked voxel, the Euclidean norm of
// (pred - gt) with each component scaled by its axis spacing.
template <typename Scalar>
MetricStats<Scalar> mse_displacement(const FlowField<Scalar>& pred, const FlowField<Scalar>& gt,
                                     const VoxelMask& mask, const Vec3<Scalar>& spacing) {
    if (!(spacing.array() > Scalar(0)).all())
        throw std::invalid_argument("mse_displacement: spacing must be positive");
    return detail::displacement_error_stats(pred, gt, mask, spacing);
}

// End-point error in voxel units (unscaled norm of pred - gt).
template <typename Scalar>
MetricStats<Scalar> epe(const FlowField<Scalar>& pred, const FlowField<Scalar>& gt,
                        const VoxelMask& mask) {
    const Vec3<Scalar> unit = Vec3<Scalar>::Ones();
    return detail::displacement_error_stats(pred, gt, mask, unit);
}

}  // namespace flow4d
