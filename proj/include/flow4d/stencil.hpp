#pragma once

#include "flow4d/types.hpp"

namespace flow4d {

namespace detail {

template <typename Scalar>
struct AxisWalk {
    Index n;        // extent along the axis
    Index stride;   // element stride along the axis
    Index lines;    // number of 1-D lines
};

inline Index axis_stride(const Dims& dims, int axis) {
    switch (axis) {
        case 0: return 1;
        case 1: return dims[0];
        default: return static_cast<Index>(dims[0]) * dims[1];
    }
}

// Base linear index of 1-D line `line` along `axis` (x-fastest layout).
inline Index line_base(const Dims& dims, int axis, Index line) {
    const Index nx = dims[0], ny = dims[1];
    switch (axis) {
        case 0: return line * nx;                                   // line = y + ny*z
        case 1: {                                                   // line = x + nx*z
            const Index z = line / nx, x = line - z * nx;
            return x + nx * ny * z;
        }
        default: return line;                                       // line = x + nx*y
    }
}

inline Index line_count(const Dims& dims, int axis) {
    return voxel_count(dims) / dims[axis];
}

}  // namespace detail

// 3-tap correlation along one axis at offsets {-1, 0, +1}, replicate edges:
// out(i) = k0*v(i-1) + k1*v(i) + k2*v(i+1).
template <typename Scalar>
Grid<Scalar> conv3_axis(const Grid<Scalar>& in, const Dims& dims, int axis,
                        const Eigen::Matrix<Scalar, 3, 1>& k) {
    const Index n = dims[axis];
    if (n < 3) throw ShapeError("conv3_axis: axis extent " + std::to_string(n) + " < 3");
    Grid<Scalar> out(in.size());
    const Index stride = detail::axis_stride(dims, axis);
    const Index lines = detail::line_count(dims, axis);
#pragma omp parallel for schedule(static)
    for (Index line = 0; line < lines; ++line) {
        const Index base = detail::line_base(dims, axis, line);
        out[base] = k[0] * in[base] + k[1] * in[base] + k[2] * in[base + stride];
        for (Index i = 1; i < n - 1; ++i) {
            const Index c = base + i * stride;
            out[c] = k[0] * in[c - stride] + k[1] * in[c] + k[2] * in[c + stride];
        }
        const Index e = base + (n - 1) * stride;
        out[e] = k[0] * in[e - stride] + k[1] * in[e] + k[2] * in[e];
    }
    return out;
}

// 2-tap correlation at offsets {0, +1}, replicate edge:
// out(i) = k0*v(i) + k1*v(i+1), out(n-1) = (k0+k1)*v(n-1).
template <typename Scalar>
Grid<Scalar> conv2_forward_axis(const Grid<Scalar>& in, const Dims& dims, int axis,
                                const Eigen::Matrix<Scalar, 2, 1>& k) {
    const Index n = dims[axis];
    if (n < 2) throw ShapeError("conv2_forward_axis: axis extent " + std::to_string(n) + " < 2");
    Grid<Scalar> out(in.size());
    const Index stride = detail::axis_stride(dims, axis);
    const Index lines = detail::line_count(dims, axis);
#pragma omp parallel for schedule(static)
    for (Index line = 0; line < lines; ++line) {
        const Index base = detail::line_base(dims, axis, line);
        for (Index i = 0; i < n - 1; ++i) {
            const Index c = base + i * stride;
            out[c] = k[0] * in[c] + k[1] * in[c + stride];
        }
        const Index e = base + (n - 1) * stride;
        out[e] = (k[0] + k[1]) * in[e];
    }
    return out;
}

// 2-tap correlation at offsets {-1, 0} with the adjoint boundary rule of the
// forward difference: the input's last slice along the axis is treated as
// zero and the front is zero-padded. With taps [-1, 1] this is
// out(0) = v(0), out(i) = v(i) - v(i-1), out(n-1) = -v(n-2).
template <typename Scalar>
Grid<Scalar> conv2_adjoint_axis(const Grid<Scalar>& in, const Dims& dims, int axis,
                                const Eigen::Matrix<Scalar, 2, 1>& k) {
    const Index n = dims[axis];
    if (n < 2) throw ShapeError("conv2_adjoint_axis: axis extent " + std::to_string(n) + " < 2");
    Grid<Scalar> out(in.size());
    const Index stride = detail::axis_stride(dims, axis);
    const Index lines = detail::line_count(dims, axis);
#pragma omp parallel for schedule(static)
    for (Index line = 0; line < lines; ++line) {
        const Index base = detail::line_base(dims, axis, line);
        out[base] = k[1] * in[base];
        for (Index i = 1; i < n - 1; ++i) {
            const Index c = base + i * stride;
            out[c] = k[0] * in[c - stride] + k[1] * in[c];
        }
        const Index e = base + (n - 1) * stride;
        out[e] = k[0] * in[e - stride];
    }
    return out;
}

// Image gradient: component a is the 3-tap derivative along axis a. With the
// initial kernels this is the central difference (v(i+1) - v(i-1)) / 2.
template <typename Scalar>
VectorField<Scalar> gradient(const ScalarVolume<Scalar>& vol, const KernelSet<Scalar>& kernels) {
    if ((vol.dims < 3).any())
        throw ShapeError("gradient: all dims must be >= 3, got " + dims_str(vol.dims));
    VectorField<Scalar> g;
    g.dims = vol.dims;
    for (int a = 0; a < 3; ++a) g.comp[a] = conv3_axis(vol.data, vol.dims, a, kernels.grad[a]);
    return g;
}

// Per-axis derivative of one flow component (2-tap forward kernels).
template <typename Scalar>
VectorField<Scalar> flow_component_gradient(const Grid<Scalar>& plane, const Dims& dims,
                                            const KernelSet<Scalar>& kernels) {
    if (plane.size() != voxel_count(dims))
        throw ShapeError("flow_component_gradient: plane size does not match dims");
    VectorField<Scalar> g;
    g.dims = dims;
    for (int a = 0; a < 3; ++a) g.comp[a] = conv2_forward_axis(plane, dims, a, kernels.flow_grad[a]);
    return g;
}

// Divergence of a dual vector field: sum over axes of the 2-tap adjoint
// convolution of the matching component.
template <typename Scalar>
ScalarVolume<Scalar> divergence(const VectorField<Scalar>& field, const KernelSet<Scalar>& kernels) {
    for (const auto& c : field.comp)
        if (c.size() != voxel_count(field.dims))
            throw ShapeError("divergence: component size does not match dims " + dims_str(field.dims));
    ScalarVolume<Scalar> out;
    out.dims = field.dims;
    out.data = conv2_adjoint_axis(field.comp[0], field.dims, 0, kernels.div[0]);
    out.data += conv2_adjoint_axis(field.comp[1], field.dims, 1, kernels.div[1]);
    out.data += conv2_adjoint_axis(field.comp[2], field.dims, 2, kernels.div[2]);
    return out;
}

}  // namespace flow4d
