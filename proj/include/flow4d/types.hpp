#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace flow4d {

namespace detail {

// Splitmix64 with hand-rolled uniform/normal draws; reproducible
// bit-for-bit from the seed alone, independent of the standard library.
struct Rng64 {
    std::uint64_t state;
    explicit Rng64(std::uint64_t seed) : state(seed + 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
    // Uniform index in [0, n)
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }
};

}  // namespace detail

using Index = Eigen::Index;
using Dims = Eigen::Array3i;

template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

// Thrown when grid extents disagree or are too small for a stencil.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown when an iteration produces non-finite values.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline Index voxel_count(const Dims& dims) {
    return static_cast<Index>(dims[0]) * dims[1] * dims[2];
}

inline bool same_dims(const Dims& a, const Dims& b) {
    return (a == b).all();
}

inline std::string dims_str(const Dims& d) {
    return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

// One 3D grayscale frame. Data is dense, x-fastest: index = x + nx*(y + ny*z).
// Spacing is the physical voxel size in mm per axis; flow math never uses it,
// only the mm metrics do.
template <typename Scalar>
struct ScalarVolume {
    Dims dims = Dims::Zero();
    Vec3<Scalar> spacing = Vec3<Scalar>::Ones();
    Grid<Scalar> data;

    Scalar& at(Index x, Index y, Index z) { return data[x + dims[0] * (y + dims[1] * z)]; }
    Scalar at(Index x, Index y, Index z) const { return data[x + dims[0] * (y + dims[1] * z)]; }
};

// Per-voxel 3-component vector field stored as three planar grids sharing the
// volume layout. Used for displacements (voxel units), image gradients, and
// the dual variables of the solver.
template <typename Scalar>
struct VectorField {
    Dims dims = Dims::Zero();
    std::array<Grid<Scalar>, 3> comp;

    static VectorField zero(const Dims& dims) {
        VectorField f;
        f.dims = dims;
        const Index n = voxel_count(dims);
        for (auto& c : f.comp) c = Grid<Scalar>::Zero(n);
        return f;
    }
};

// A displacement field: point x in the source frame maps to x + flow(x).
template <typename Scalar>
using FlowField = VectorField<Scalar>;

// Reference frame plus the ordered frames registered against it.
template <typename Scalar>
struct VolumeSequence {
    ScalarVolume<Scalar> reference;
    std::vector<ScalarVolume<Scalar>> frames;
};

// The trainable 1-D stencil taps. grad: 3-tap image-derivative kernels, one
// per axis, applied at offsets {-1,0,+1}. flow_grad: 2-tap flow-derivative
// kernels at offsets {0,+1} (replicate edge). div: 2-tap divergence kernels
// at offsets {-1,0} with the adjoint boundary rule (see stencil.hpp).
// 3*3 + 3*2 + 3*2 = 21 scalar parameters in total.
template <typename Scalar>
struct KernelSet {
    std::array<Eigen::Matrix<Scalar, 3, 1>, 3> grad;
    std::array<Eigen::Matrix<Scalar, 2, 1>, 3> flow_grad;
    std::array<Eigen::Matrix<Scalar, 2, 1>, 3> div;

    static KernelSet initial() {
        KernelSet k;
        for (int a = 0; a < 3; ++a) {
            k.grad[a] << Scalar(-0.5), Scalar(0), Scalar(0.5);
            k.flow_grad[a] << Scalar(-1), Scalar(1);
            k.div[a] << Scalar(-1), Scalar(1);
        }
        return k;
    }

    static constexpr int parameter_count = 21;

    // Flat layout: grad x,y,z (3 taps each), flow_grad x,y,z (2 each),
    // div x,y,z (2 each). The trainer and the kernel file share this order.
    Eigen::Matrix<Scalar, 21, 1> to_vector() const {
        Eigen::Matrix<Scalar, 21, 1> w;
        Index i = 0;
        for (int a = 0; a < 3; ++a)
            for (int t = 0; t < 3; ++t) w[i++] = grad[a][t];
        for (int a = 0; a < 3; ++a)
            for (int t = 0; t < 2; ++t) w[i++] = flow_grad[a][t];
        for (int a = 0; a < 3; ++a)
            for (int t = 0; t < 2; ++t) w[i++] = div[a][t];
        return w;
    }

    static KernelSet from_vector(const Eigen::Matrix<Scalar, 21, 1>& w) {
        KernelSet k;
        Index i = 0;
        for (int a = 0; a < 3; ++a)
            for (int t = 0; t < 3; ++t) k.grad[a][t] = w[i++];
        for (int a = 0; a < 3; ++a)
            for (int t = 0; t < 2; ++t) k.flow_grad[a][t] = w[i++];
        for (int a = 0; a < 3; ++a)
            for (int t = 0; t < 2; ++t) k.div[a][t] = w[i++];
        return k;
    }
};

// Human-readable name of one flat kernel weight, for diagnostics.
inline std::string kernel_weight_name(int i) {
    static const char* axis = "xyz";
    if (i < 9) return std::string("grad_") + axis[i / 3] + "[" + std::to_string(i % 3) + "]";
    if (i < 15) return std::string("flow_grad_") + axis[(i - 9) / 2] + "[" + std::to_string((i - 9) % 2) + "]";
    return std::string("div_") + axis[(i - 15) / 2] + "[" + std::to_string((i - 15) % 2) + "]";
}

template <typename Scalar>
struct SolverParams {
    Scalar lambda = Scalar(0.15);   // data-term weight
    Scalar theta = Scalar(0.3);     // coupling weight
    // Dual time-step. tau/theta <= 1/(2*dim) keeps the dual ascent stable on
    // a 3-D grid; the default is theta/6. Larger ratios make the dual spin
    // faster than the data term settles and the iteration limit-cycles.
    Scalar tau = Scalar(0.05);
    int n_iters = 40;
    Scalar epsilon = Scalar(1e-9);  // guard for the |grad I|^2 division
    // When false, the residual stays linearized at the initial flow for the
    // whole run instead of being refreshed each iteration (ablation switch).
    bool relinearize = true;
    // Optional 2-level coarse-to-fine pass for large displacements.
    bool use_pyramid = false;
    // Joint min-max normalization of the pair to [0,1] before solving. The
    // tracker and trainer normalize whole sequences once and turn this off.
    bool normalize_inputs = true;

    void validate() const {
        if (!(lambda > Scalar(0)) || !(theta > Scalar(0)) || !(tau > Scalar(0)) ||
            n_iters < 1 || !(epsilon > Scalar(0)))
            throw std::invalid_argument("SolverParams: need lambda, theta, tau, epsilon > 0 and n_iters >= 1");
    }
};

template <typename Scalar>
struct LossWeights {
    Scalar gamma = Scalar(1.0);   // temporal-consistency weight
    Scalar omega = Scalar(1.0);   // whole-cycle weight inside the temporal term
    Scalar beta = Scalar(0.5);    // reconstruction weight
    Scalar lambda = Scalar(0.15); // data-term weight inside the reconstruction loss

    void validate() const {
        if (gamma < Scalar(0) || omega < Scalar(0) || beta < Scalar(0) || lambda < Scalar(0))
            throw std::invalid_argument("LossWeights: weights must be >= 0");
    }
};

// Validating factory used at API boundaries (file reads, CLI, tests).
template <typename Scalar>
ScalarVolume<Scalar> make_volume(const Dims& dims, const Vec3<Scalar>& spacing, Grid<Scalar> data) {
    if ((dims <= 0).any()) throw ShapeError("volume dims must be positive, got " + dims_str(dims));
    if (!(spacing.array() > Scalar(0)).all() || !spacing.allFinite())
        throw std::invalid_argument("volume spacing must be positive and finite");
    if (data.size() != voxel_count(dims))
        throw ShapeError("volume data size " + std::to_string(data.size()) +
                         " does not match dims " + dims_str(dims));
    if (!data.allFinite()) throw std::invalid_argument("volume intensities must be finite");
    return ScalarVolume<Scalar>{dims, spacing, std::move(data)};
}

template <typename Scalar>
FlowField<Scalar> make_flow(const Dims& dims, std::array<Grid<Scalar>, 3> comp) {
    if ((dims <= 0).any()) throw ShapeError("flow dims must be positive, got " + dims_str(dims));
    for (const auto& c : comp) {
        if (c.size() != voxel_count(dims))
            throw ShapeError("flow component size does not match dims " + dims_str(dims));
        if (!c.allFinite()) throw std::invalid_argument("flow displacements must be finite");
    }
    return FlowField<Scalar>{dims, std::move(comp)};
}

template <typename Scalar>
VolumeSequence<Scalar> make_sequence(ScalarVolume<Scalar> reference,
                                     std::vector<ScalarVolume<Scalar>> frames) {
    for (const auto& f : frames) {
        if (!same_dims(f.dims, reference.dims))
            throw ShapeError("sequence frame dims " + dims_str(f.dims) +
                             " differ from reference " + dims_str(reference.dims));
        if (f.spacing != reference.spacing)
            throw std::invalid_argument("sequence frame spacing differs from reference");
    }
    return VolumeSequence<Scalar>{std::move(reference), std::move(frames)};
}

}  // namespace flow4d
