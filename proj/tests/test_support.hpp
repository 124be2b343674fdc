#pragma once

// Shared helpers for the test suites: seeded random grids and smooth phantoms.

#include <cmath>
#include <cstdint>
#include <vector>

#include "flow4d/types.hpp"

namespace testsupport {

using flow4d::Dims;
using flow4d::FlowField;
using flow4d::Grid;
using flow4d::Index;
using flow4d::ScalarVolume;
using flow4d::Vec3;
using flow4d::detail::Rng64;

inline ScalarVolume<double> random_volume(const Dims& dims, std::uint64_t seed,
                                          double lo = 0.0, double hi = 1.0) {
    ScalarVolume<double> vol;
    vol.dims = dims;
    vol.spacing = Vec3<double>::Ones();
    vol.data.resize(flow4d::voxel_count(dims));
    Rng64 rng(seed);
    for (Index i = 0; i < vol.data.size(); ++i) vol.data[i] = rng.uniform(lo, hi);
    return vol;
}

inline FlowField<double> random_flow(const Dims& dims, std::uint64_t seed, double amplitude) {
    FlowField<double> f = FlowField<double>::zero(dims);
    Rng64 rng(seed);
    for (int c = 0; c < 3; ++c)
        for (Index i = 0; i < f.comp[c].size(); ++i)
            f.comp[c][i] = rng.uniform(-amplitude, amplitude);
    return f;
}

// Smooth low-frequency random flow: a few sinusoidal modes per component.
inline FlowField<double> smooth_random_flow(const Dims& dims, std::uint64_t seed, double amplitude) {
    FlowField<double> f = FlowField<double>::zero(dims);
    Rng64 rng(seed);
    for (int c = 0; c < 3; ++c) {
        const double ax = rng.uniform(0.5, 1.0) * amplitude;
        const double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5), fz = rng.uniform(0.5, 1.5);
        const double px = rng.uniform(0, 6.28), py = rng.uniform(0, 6.28), pz = rng.uniform(0, 6.28);
        Index idx = 0;
        for (Index z = 0; z < dims[2]; ++z)
            for (Index y = 0; y < dims[1]; ++y)
                for (Index x = 0; x < dims[0]; ++x, ++idx)
                    f.comp[c][idx] = ax *
                                     std::sin(fx * 6.28318530717958647 * x / dims[0] + px) *
                                     std::sin(fy * 6.28318530717958647 * y / dims[1] + py) *
                                     std::sin(fz * 6.28318530717958647 * z / dims[2] + pz);
    }
    return f;
}

inline FlowField<double> constant_flow(const Dims& dims, double dx, double dy, double dz) {
    FlowField<double> f = FlowField<double>::zero(dims);
    f.comp[0].setConstant(dx);
    f.comp[1].setConstant(dy);
    f.comp[2].setConstant(dz);
    return f;
}

// Single Gaussian blob, optionally offset from the grid center.
inline ScalarVolume<double> gaussian_blob(const Dims& dims, double sigma,
                                          const Vec3<double>& offset = Vec3<double>::Zero()) {
    ScalarVolume<double> vol;
    vol.dims = dims;
    vol.spacing = Vec3<double>::Ones();
    vol.data.resize(flow4d::voxel_count(dims));
    Vec3<double> c;
    for (int a = 0; a < 3; ++a) c[a] = (dims[a] - 1) / 2.0 + offset[a];
    Index idx = 0;
    for (Index z = 0; z < dims[2]; ++z)
        for (Index y = 0; y < dims[1]; ++y)
            for (Index x = 0; x < dims[0]; ++x, ++idx) {
                const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
                vol.data[idx] = std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * sigma * sigma));
            }
    return vol;
}

// Smooth random volume: a sum of random-placed Gaussian bumps.
inline ScalarVolume<double> smooth_random_volume(const Dims& dims, std::uint64_t seed, int bumps = 5) {
    ScalarVolume<double> vol;
    vol.dims = dims;
    vol.spacing = Vec3<double>::Ones();
    vol.data = Grid<double>::Zero(flow4d::voxel_count(dims));
    Rng64 rng(seed);
    for (int b = 0; b < bumps; ++b) {
        Vec3<double> c;
        for (int a = 0; a < 3; ++a) c[a] = rng.uniform(0.2, 0.8) * (dims[a] - 1);
        const double sigma = rng.uniform(0.12, 0.2) * (std::min({dims[0], dims[1], dims[2]}) - 1);
        const double amp = rng.uniform(0.4, 1.0);
        Index idx = 0;
        for (Index z = 0; z < dims[2]; ++z)
            for (Index y = 0; y < dims[1]; ++y)
                for (Index x = 0; x < dims[0]; ++x, ++idx) {
                    const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
                    vol.data[idx] += amp * std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * sigma * sigma));
                }
    }
    return vol;
}

// Converters to the oracle's plain-vector types.
inline std::vector<double> to_vec(const Grid<double>& g) {
    return std::vector<double>(g.data(), g.data() + g.size());
}

inline std::array<std::vector<double>, 3> to_vec3(const FlowField<double>& f) {
    return {to_vec(f.comp[0]), to_vec(f.comp[1]), to_vec(f.comp[2])};
}

inline ScalarVolume<double> ramp_volume(const Dims& dims, int axis) {
    ScalarVolume<double> vol;
    vol.dims = dims;
    vol.spacing = Vec3<double>::Ones();
    vol.data.resize(flow4d::voxel_count(dims));
    Index idx = 0;
    for (Index z = 0; z < dims[2]; ++z)
        for (Index y = 0; y < dims[1]; ++y)
            for (Index x = 0; x < dims[0]; ++x, ++idx) {
                const Index v = axis == 0 ? x : (axis == 1 ? y : z);
                vol.data[idx] = static_cast<double>(v);
            }
    return vol;
}

}  // namespace testsupport
