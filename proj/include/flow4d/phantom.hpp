#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "flow4d/types.hpp"

namespace flow4d {

enum class PhantomKind { translate, radial_contraction, rotation };

// Synthetic 4D phantom: a Gaussian-blob texture advected by a closed-form
// motion model. Frames are evaluated analytically (no resampling), so the
// ground-truth flows are exact at every voxel.
template <typename Scalar>
struct PhantomSpec {
    PhantomKind kind = PhantomKind::translate;
    Dims dims = Dims(32, 32, 32);
    Vec3<Scalar> spacing = Vec3<Scalar>::Ones();
    int n_frames = 2;                        // tracked frames beyond the reference
    Vec3<Scalar> shift = Vec3<Scalar>::Zero();  // voxels per frame (translate)
    Scalar contraction_rate = Scalar(0);     // fraction per frame (radial_contraction)
    Scalar angular_rate = Scalar(0);         // radians per frame about z (rotation)
    int blob_count = 6;
    Scalar noise_sigma = Scalar(0);
    std::uint64_t seed = 0;

    void validate() const {
        if ((dims < 4).any()) throw std::invalid_argument("PhantomSpec: dims must be >= 4");
        if (!(spacing.array() > Scalar(0)).all())
            throw std::invalid_argument("PhantomSpec: spacing must be positive");
        if (n_frames < 2) throw std::invalid_argument("PhantomSpec: n_frames must be >= 2");
        if (!shift.allFinite() || !std::isfinite(contraction_rate) || !std::isfinite(angular_rate))
            throw std::invalid_argument("PhantomSpec: amplitudes must be finite");
        if (kind == PhantomKind::radial_contraction && contraction_rate >= Scalar(1))
            throw std::invalid_argument("PhantomSpec: contraction_rate must be < 1");
        if (noise_sigma < Scalar(0)) throw std::invalid_argument("PhantomSpec: noise_sigma must be >= 0");
        if (blob_count < 1) throw std::invalid_argument("PhantomSpec: blob_count must be >= 1");
    }
};

template <typename Scalar>
struct GroundTruth {
    std::vector<FlowField<Scalar>> forward;   // frame i -> i+1, n_frames-1 fields
    std::vector<FlowField<Scalar>> backward;  // frame i+1 -> i
    std::vector<FlowField<Scalar>> ref;       // reference -> frame i, n_frames fields
    Eigen::Array<bool, Eigen::Dynamic, 1> mask;  // texture support in the reference frame
};

namespace detail {

using PhantomRng = Rng64;

template <typename Scalar>
struct Blob {
    Vec3<Scalar> center;
    Scalar inv_two_sigma2;
    Scalar amplitude;
};

template <typename Scalar>
std::vector<Blob<Scalar>> make_blobs(const PhantomSpec<Scalar>& spec, PhantomRng& rng) {
    const Scalar min_extent =
        Scalar(std::min({spec.dims[0], spec.dims[1], spec.dims[2]}) - 1);
    std::vector<Blob<Scalar>> blobs(static_cast<size_t>(spec.blob_count));
    for (auto& b : blobs) {
        for (int a = 0; a < 3; ++a)
            b.center[a] = Scalar(rng.uniform(0.30 * (spec.dims[a] - 1), 0.70 * (spec.dims[a] - 1)));
        const Scalar sigma = Scalar(rng.uniform(0.10, 0.16)) * min_extent;
        b.inv_two_sigma2 = Scalar(1) / (Scalar(2) * sigma * sigma);
        b.amplitude = Scalar(rng.uniform(0.5, 1.0));
    }
    return blobs;
}

template <typename Scalar>
Scalar blob_texture(const std::vector<Blob<Scalar>>& blobs, const Vec3<Scalar>& p) {
    Scalar v = 0;
    for (const auto& b : blobs) v += b.amplitude * std::exp(-(p - b.center).squaredNorm() * b.inv_two_sigma2);
    return v;
}

// Forward map of one frame step and its powers. point_at(i, x) gives the
// position at time i of the material point that sits at x at time 0.
template <typename Scalar>
struct MotionModel {
    const PhantomSpec<Scalar>& spec;
    Vec3<Scalar> center;

    explicit MotionModel(const PhantomSpec<Scalar>& s) : spec(s) {
        for (int a = 0; a < 3; ++a) center[a] = Scalar(s.dims[a] - 1) / Scalar(2);
    }

    Vec3<Scalar> point_at(int i, const Vec3<Scalar>& x0) const {
        switch (spec.kind) {
            case PhantomKind::translate:
                return x0 + Scalar(i) * spec.shift;
            case PhantomKind::radial_contraction: {
                const Scalar s = std::pow(Scalar(1) - spec.contraction_rate, Scalar(i));
                return center + s * (x0 - center);
            }
            default: {  // rotation about the z axis through the center
                const Scalar th = Scalar(i) * spec.angular_rate;
                const Scalar c = std::cos(th), s = std::sin(th);
                const Vec3<Scalar> d = x0 - center;
                return center + Vec3<Scalar>(c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]);
            }
        }
    }

    // Inverse: time-i position back to time 0.
    Vec3<Scalar> point_at_inverse(int i, const Vec3<Scalar>& xi) const {
        switch (spec.kind) {
            case PhantomKind::translate:
                return xi - Scalar(i) * spec.shift;
            case PhantomKind::radial_contraction: {
                const Scalar s = std::pow(Scalar(1) - spec.contraction_rate, Scalar(i));
                return center + (xi - center) / s;
            }
            default: {
                const Scalar th = -Scalar(i) * spec.angular_rate;
                const Scalar c = std::cos(th), s = std::sin(th);
                const Vec3<Scalar> d = xi - center;
                return center + Vec3<Scalar>(c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]);
            }
        }
    }

    // Displacement from time i to time j of the point sitting at x at time i.
    Vec3<Scalar> displacement(int i, int j, const Vec3<Scalar>& x) const {
        return point_at(j, point_at_inverse(i, x)) - x;
    }
};

}  // namespace detail

// Closed-form displacement field from time `from` to time `to` (time 0 is
// the reference frame), evaluated at every voxel of the `from` frame.
template <typename Scalar>
FlowField<Scalar> ground_truth_flow(const PhantomSpec<Scalar>& spec, int from, int to) {
    spec.validate();
    const detail::MotionModel<Scalar> motion(spec);
    FlowField<Scalar> f = FlowField<Scalar>::zero(spec.dims);
    Index idx = 0;
    for (Index z = 0; z < spec.dims[2]; ++z)
        for (Index y = 0; y < spec.dims[1]; ++y)
            for (Index x = 0; x < spec.dims[0]; ++x, ++idx) {
                const Vec3<Scalar> d =
                    motion.displacement(from, to, Vec3<Scalar>(Scalar(x), Scalar(y), Scalar(z)));
                for (int c = 0; c < 3; ++c) f.comp[c][idx] = d[c];
            }
    return f;
}

// Builds the phantom sequence and its exact ground truth. Noise (if any) is
// added to intensities only; flows and mask come from the closed-form motion.
template <typename Scalar>
std::pair<VolumeSequence<Scalar>, GroundTruth<Scalar>> make_phantom(const PhantomSpec<Scalar>& spec) {
    spec.validate();
    detail::PhantomRng rng(spec.seed);
    const auto blobs = detail::make_blobs(spec, rng);
    const detail::MotionModel<Scalar> motion(spec);
    const Index n_vox = voxel_count(spec.dims);
    const Index nx = spec.dims[0], ny = spec.dims[1], nz = spec.dims[2];

    auto render_frame = [&](int i) {
        ScalarVolume<Scalar> vol;
        vol.dims = spec.dims;
        vol.spacing = spec.spacing;
        vol.data.resize(n_vox);
        Index idx = 0;
        for (Index z = 0; z < nz; ++z)
            for (Index y = 0; y < ny; ++y)
                for (Index x = 0; x < nx; ++x, ++idx) {
                    const Vec3<Scalar> p{Scalar(x), Scalar(y), Scalar(z)};
                    vol.data[idx] = detail::blob_texture(blobs, motion.point_at_inverse(i, p));
                }
        return vol;
    };

    VolumeSequence<Scalar> seq;
    seq.reference = render_frame(0);

    GroundTruth<Scalar> gt;
    gt.mask = seq.reference.data > Scalar(0.1) * seq.reference.data.maxCoeff();

    seq.frames.reserve(static_cast<size_t>(spec.n_frames));
    for (int i = 1; i <= spec.n_frames; ++i) seq.frames.push_back(render_frame(i));
    for (int i = 1; i < spec.n_frames; ++i) {
        gt.forward.push_back(ground_truth_flow(spec, i, i + 1));
        gt.backward.push_back(ground_truth_flow(spec, i + 1, i));
    }
    for (int i = 1; i <= spec.n_frames; ++i) gt.ref.push_back(ground_truth_flow(spec, 0, i));

    if (spec.noise_sigma > Scalar(0)) {
        auto add_noise = [&](ScalarVolume<Scalar>& vol) {
            for (Index i = 0; i < vol.data.size(); ++i)
                vol.data[i] += spec.noise_sigma * Scalar(rng.normal());
        };
        add_noise(seq.reference);
        for (auto& f : seq.frames) add_noise(f);
    }
    return {std::move(seq), std::move(gt)};
}

}  // namespace flow4d
