#pragma once

#include <cmath>

#include "flow4d/types.hpp"

namespace flow4d {

namespace detail {

// Corner indices and weights of one trilinear lookup, coordinates already
// clamped to the grid box. Kept separate so volume and multi-component
// lookups share the arithmetic (and its rounding) exactly.
template <typename Scalar>
struct TrilinearTap {
    Index i000, i100, i010, i110, i001, i101, i011, i111;
    Scalar fx, fy, fz;

    TrilinearTap(const Dims& dims, Scalar px, Scalar py, Scalar pz) {
        const Scalar mx = Scalar(dims[0] - 1), my = Scalar(dims[1] - 1), mz = Scalar(dims[2] - 1);
        // Written so NaN coordinates also land on a valid corner; the caller
        // is responsible for detecting non-finite state, not for avoiding UB.
        px = px > Scalar(0) ? (px < mx ? px : mx) : Scalar(0);
        py = py > Scalar(0) ? (py < my ? py : my) : Scalar(0);
        pz = pz > Scalar(0) ? (pz < mz ? pz : mz) : Scalar(0);
        const Index x0 = static_cast<Index>(std::floor(px));
        const Index y0 = static_cast<Index>(std::floor(py));
        const Index z0 = static_cast<Index>(std::floor(pz));
        const Index x1 = x0 + 1 > dims[0] - 1 ? dims[0] - 1 : x0 + 1;
        const Index y1 = y0 + 1 > dims[1] - 1 ? dims[1] - 1 : y0 + 1;
        const Index z1 = z0 + 1 > dims[2] - 1 ? dims[2] - 1 : z0 + 1;
        fx = px - Scalar(x0);
        fy = py - Scalar(y0);
        fz = pz - Scalar(z0);
        const Index nx = dims[0], nxy = dims[0] * static_cast<Index>(dims[1]);
        i000 = x0 + nx * y0 + nxy * z0;
        i100 = x1 + nx * y0 + nxy * z0;
        i010 = x0 + nx * y1 + nxy * z0;
        i110 = x1 + nx * y1 + nxy * z0;
        i001 = x0 + nx * y0 + nxy * z1;
        i101 = x1 + nx * y0 + nxy * z1;
        i011 = x0 + nx * y1 + nxy * z1;
        i111 = x1 + nx * y1 + nxy * z1;
    }

    Scalar blend(const Grid<Scalar>& g) const {
        const Scalar c00 = g[i000] * (Scalar(1) - fx) + g[i100] * fx;
        const Scalar c10 = g[i010] * (Scalar(1) - fx) + g[i110] * fx;
        const Scalar c01 = g[i001] * (Scalar(1) - fx) + g[i101] * fx;
        const Scalar c11 = g[i011] * (Scalar(1) - fx) + g[i111] * fx;
        const Scalar c0 = c00 * (Scalar(1) - fy) + c10 * fy;
        const Scalar c1 = c01 * (Scalar(1) - fy) + c11 * fy;
        return c0 * (Scalar(1) - fz) + c1 * fz;
    }
};

}  // namespace detail

// Trilinear interpolation of the 8 voxels around `point` (voxel units).
// Out-of-range coordinates are clamped to the grid box before interpolation,
// so every finite point is valid (replicate-edge policy).
template <typename Scalar>
Scalar trilinear_sample(const ScalarVolume<Scalar>& vol, const Vec3<Scalar>& point) {
    if (!point.allFinite()) throw std::invalid_argument("trilinear_sample: non-finite point");
    const detail::TrilinearTap<Scalar> tap(vol.dims, point[0], point[1], point[2]);
    return tap.blend(vol.data);
}

// Trilinear lookup of all three components at one continuous point.
template <typename Scalar>
Vec3<Scalar> sample_flow(const VectorField<Scalar>& field, const Vec3<Scalar>& point) {
    if (!point.allFinite()) throw std::invalid_argument("sample_flow: non-finite point");
    const detail::TrilinearTap<Scalar> tap(field.dims, point[0], point[1], point[2]);
    return Vec3<Scalar>(tap.blend(field.comp[0]), tap.blend(field.comp[1]), tap.blend(field.comp[2]));
}

// Backward warp: out(x) = vol(x + flow(x)), sampled trilinearly with edge
// clamping. At integer landing points this reproduces voxel values exactly.
template <typename Scalar>
ScalarVolume<Scalar> warp(const ScalarVolume<Scalar>& vol, const FlowField<Scalar>& flow) {
    if (!same_dims(vol.dims, flow.dims))
        throw ShapeError("warp: volume dims " + dims_str(vol.dims) + " vs flow dims " + dims_str(flow.dims));
    ScalarVolume<Scalar> out;
    out.dims = vol.dims;
    out.spacing = vol.spacing;
    out.data.resize(vol.data.size());
    const Index nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
#pragma omp parallel for schedule(static)
    for (Index z = 0; z < nz; ++z) {
        Index idx = nx * ny * z;
        for (Index y = 0; y < ny; ++y) {
            for (Index x = 0; x < nx; ++x, ++idx) {
                const detail::TrilinearTap<Scalar> tap(
                    vol.dims, Scalar(x) + flow.comp[0][idx], Scalar(y) + flow.comp[1][idx],
                    Scalar(z) + flow.comp[2][idx]);
                out.data[idx] = tap.blend(vol.data);
            }
        }
    }
    return out;
}

// Chains two displacement fields: composed(x) = first(x) + second(x + first(x)),
// sampling each component of `second` trilinearly at the displaced point.
template <typename Scalar>
FlowField<Scalar> compose_flow(const FlowField<Scalar>& first, const FlowField<Scalar>& second) {
    if (!same_dims(first.dims, second.dims))
        throw ShapeError("compose_flow: dims " + dims_str(first.dims) + " vs " + dims_str(second.dims));
    FlowField<Scalar> out;
    out.dims = first.dims;
    for (auto& c : out.comp) c.resize(first.comp[0].size());
    const Index nx = first.dims[0], ny = first.dims[1], nz = first.dims[2];
#pragma omp parallel for schedule(static)
    for (Index z = 0; z < nz; ++z) {
        Index idx = nx * ny * z;
        for (Index y = 0; y < ny; ++y) {
            for (Index x = 0; x < nx; ++x, ++idx) {
                const detail::TrilinearTap<Scalar> tap(
                    first.dims, Scalar(x) + first.comp[0][idx], Scalar(y) + first.comp[1][idx],
                    Scalar(z) + first.comp[2][idx]);
                for (int c = 0; c < 3; ++c)
                    out.comp[c][idx] = first.comp[c][idx] + tap.blend(second.comp[c]);
            }
        }
    }
    return out;
}

// 2x box downsample used by the optional coarse-to-fine pass.
template <typename Scalar>
ScalarVolume<Scalar> downsample2(const ScalarVolume<Scalar>& vol) {
    Dims cd;
    for (int a = 0; a < 3; ++a) cd[a] = std::max(2, (vol.dims[a] + 1) / 2);
    ScalarVolume<Scalar> out;
    out.dims = cd;
    out.spacing = vol.spacing * Scalar(2);
    out.data.resize(voxel_count(cd));
    Index idx = 0;
    for (Index z = 0; z < cd[2]; ++z)
        for (Index y = 0; y < cd[1]; ++y)
            for (Index x = 0; x < cd[0]; ++x, ++idx) {
                Scalar sum = 0;
                int n = 0;
                for (Index dz = 0; dz < 2; ++dz)
                    for (Index dy = 0; dy < 2; ++dy)
                        for (Index dx = 0; dx < 2; ++dx) {
                            const Index fx = 2 * x + dx, fy = 2 * y + dy, fz = 2 * z + dz;
                            if (fx < vol.dims[0] && fy < vol.dims[1] && fz < vol.dims[2]) {
                                sum += vol.at(fx, fy, fz);
                                ++n;
                            }
                        }
                out.data[idx] = sum / Scalar(n);
            }
    return out;
}

// Upsample a coarse flow to `fine_dims`, rescaling displacements per axis by
// the grid-extent ratio (endpoint-aligned sampling).
template <typename Scalar>
FlowField<Scalar> upsample_flow(const FlowField<Scalar>& coarse, const Dims& fine_dims) {
    Vec3<Scalar> scale, inv;
    for (int a = 0; a < 3; ++a) {
        scale[a] = coarse.dims[a] > 1
                       ? Scalar(fine_dims[a] - 1) / Scalar(coarse.dims[a] - 1)
                       : Scalar(1);
        inv[a] = Scalar(1) / scale[a];
    }
    FlowField<Scalar> out = FlowField<Scalar>::zero(fine_dims);
    Index idx = 0;
    for (Index z = 0; z < fine_dims[2]; ++z)
        for (Index y = 0; y < fine_dims[1]; ++y)
            for (Index x = 0; x < fine_dims[0]; ++x, ++idx) {
                const detail::TrilinearTap<Scalar> tap(coarse.dims, Scalar(x) * inv[0],
                                                       Scalar(y) * inv[1], Scalar(z) * inv[2]);
                for (int c = 0; c < 3; ++c) out.comp[c][idx] = scale[c] * tap.blend(coarse.comp[c]);
            }
    return out;
}

}  // namespace flow4d
