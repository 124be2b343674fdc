#pragma once

#include <string>
#include <vector>

#include "flow4d/losses.hpp"
#include "flow4d/metrics.hpp"
#include "flow4d/phantom.hpp"
#include "flow4d/tracker.hpp"
#include "flow4d/types.hpp"

// Binary file formats (all little-endian):
//
//   volume file  magic "F4DV", u32 version=1, u32 nx/ny/nz, u32 n_frames,
//                f32 spacing x/y/z, then n_frames * nx*ny*nz f32 intensities,
//                x-fastest.
//   flow file    magic "F4DF", u32 version=1, u32 nx/ny/nz, u32 n_fields,
//                f32 spacing x/y/z, then per field the full x plane, y plane,
//                z plane as f32.
//   kernel file  magic "F4DK", u32 version=1, then the 21 kernel weights as
//                f64 in the flat KernelSet order.
//
// Readers validate magic, version, and the header-implied payload length
// against the real file size before allocating anything.

namespace flow4d::io {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Payload length disagrees with the header.
struct LengthError : FormatError {
    using FormatError::FormatError;
};
// Payload parses but carries invalid values (NaN/Inf).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A volume file's contents: one or more frames on a shared grid. Frame 0 is
// the reference when the file holds a tracking sequence.
struct VolumeFile {
    Dims dims = Dims::Zero();
    Vec3<double> spacing = Vec3<double>::Ones();
    std::vector<Grid<double>> frames;
};

struct FlowFile {
    Dims dims = Dims::Zero();
    Vec3<double> spacing = Vec3<double>::Ones();
    std::vector<FlowField<double>> fields;
};

VolumeFile read_volume_file(const std::string& path);
void write_volume_file(const std::string& path, const VolumeFile& file);

FlowFile read_flow_file(const std::string& path);
void write_flow_file(const std::string& path, const FlowFile& file);

KernelSet<double> read_kernel_file(const std::string& path);
void write_kernel_file(const std::string& path, const KernelSet<double>& kernels);

VolumeSequence<double> as_sequence(const VolumeFile& file);
VolumeFile from_sequence(const VolumeSequence<double>& seq);
ScalarVolume<double> as_volume(const VolumeFile& file, size_t frame = 0);

// Mask = nonzero voxels of a single-frame volume file.
VoxelMask as_mask(const VolumeFile& file, size_t frame = 0);

// Plain-text phantom config: one key=value per line, '#' comments.
// Keys: kind (translate|radial-contraction|rotation), nx, ny, nz,
// spacing_x/y/z, n_frames, shift_x/y/z, contraction_rate, angular_rate,
// blob_count, noise_sigma, seed.
PhantomSpec<double> read_phantom_config(const std::string& path);

// Fixed %.9g float formatting so identical inputs give byte-identical CSVs.
std::string format_g9(double value);

struct MetricRow {
    std::string dataset;
    int frame = 0;
    Index mask_voxels = 0;
    double mse_mean_mm = 0, mse_std_mm = 0;
    double epe_mean_vox = 0, epe_std_vox = 0;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);
void write_losses_csv(const std::string& path, const std::vector<WindowLoss<double>>& losses);
void write_timing_csv(const std::string& path, const std::vector<double>& timing_s);

}  // namespace flow4d::io
