#include "flow4d/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "file readers assume a little-endian host");

namespace flow4d::io {

namespace {

constexpr std::uint32_t kVersion = 1;
// Sanity cap on header-declared payloads (elements), on top of the exact
// file-size check: rejects absurd headers before any arithmetic overflows.
constexpr std::uint64_t kMaxElements = std::uint64_t(1) << 33;

struct Reader {
    std::ifstream in;
    std::string path;
    std::uint64_t file_size = 0;

    explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw FormatError(p + ": cannot open for reading");
        std::error_code ec;
        file_size = std::filesystem::file_size(p, ec);
        if (ec) throw FormatError(p + ": cannot stat");
    }

    void bytes(void* dst, size_t n, const char* what) {
        if (!in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n)))
            throw LengthError(path + ": truncated while reading " + what);
    }
    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        bytes(&v, 4, what);
        return v;
    }
    float f32(const char* what) {
        float v;
        bytes(&v, 4, what);
        return v;
    }
    void magic(const char expected[5]) {
        char m[4];
        bytes(m, 4, "magic");
        if (std::memcmp(m, expected, 4) != 0)
            throw FormatError(path + ": bad magic, expected \"" + expected + "\"");
        const std::uint32_t version = u32("version");
        if (version != kVersion)
            throw FormatError(path + ": unsupported version " + std::to_string(version));
    }
    // Exact payload-size check before any payload allocation.
    void expect_payload(std::uint64_t header_bytes, std::uint64_t payload_bytes) {
        if (file_size != header_bytes + payload_bytes)
            throw LengthError(path + ": payload length mismatch, " +
                              std::to_string(payload_bytes) + " bytes expected / " +
                              std::to_string(file_size - std::min(file_size, header_bytes)) +
                              " actual");
    }
};

// All writes go to a temp file renamed into place on success.
struct AtomicWriter {
    std::string final_path;
    std::string tmp_path;
    std::ofstream out;
    bool committed = false;

    explicit AtomicWriter(const std::string& p)
        : final_path(p), tmp_path(p + ".tmp"), out(tmp_path, std::ios::binary | std::ios::trunc) {
        if (!out) throw FormatError(p + ": cannot open for writing");
    }
    ~AtomicWriter() {
        if (!committed) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp_path, ec);
        }
    }
    void bytes(const void* src, size_t n) {
        out.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
    }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void f32(float v) { bytes(&v, 4); }
    void commit() {
        out.flush();
        if (!out) throw FormatError(final_path + ": write failed");
        out.close();
        std::filesystem::rename(tmp_path, final_path);
        committed = true;
    }
};

Dims read_dims(Reader& r) {
    Dims d;
    for (int a = 0; a < 3; ++a) {
        const std::uint32_t v = r.u32("dims");
        if (v == 0) throw FormatError(r.path + ": zero extent in header");
        d[a] = static_cast<int>(v);
    }
    return d;
}

Vec3<double> read_spacing(Reader& r) {
    Vec3<double> s;
    for (int a = 0; a < 3; ++a) {
        const float v = r.f32("spacing");
        if (!(v > 0.0f) || !std::isfinite(v))
            throw FormatError(r.path + ": spacing must be positive and finite");
        s[a] = v;
    }
    return s;
}

Grid<double> read_plane(Reader& r, Index n_vox, const char* what, Index base_index) {
    std::vector<float> buf(static_cast<size_t>(n_vox));
    r.bytes(buf.data(), buf.size() * 4, what);
    Grid<double> g(n_vox);
    for (Index i = 0; i < n_vox; ++i) {
        if (!std::isfinite(buf[static_cast<size_t>(i)]))
            throw DataError(r.path + ": non-finite value at element " +
                            std::to_string(base_index + i));
        g[i] = buf[static_cast<size_t>(i)];
    }
    return g;
}

void write_plane(AtomicWriter& w, const Grid<double>& g) {
    std::vector<float> buf(static_cast<size_t>(g.size()));
    for (Index i = 0; i < g.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(g[i]);
    w.bytes(buf.data(), buf.size() * 4);
}

constexpr std::uint64_t kGridHeaderBytes = 4 + 4 + 12 + 4 + 12;  // magic..spacing

}  // namespace

VolumeFile read_volume_file(const std::string& path) {
    Reader r(path);
    r.magic("F4DV");
    VolumeFile file;
    file.dims = read_dims(r);
    const std::uint32_t n_frames = r.u32("n_frames");
    if (n_frames == 0) throw FormatError(path + ": n_frames must be >= 1");
    file.spacing = read_spacing(r);
    const std::uint64_t n_vox = static_cast<std::uint64_t>(voxel_count(file.dims));
    const std::uint64_t elems = n_vox * n_frames;
    if (elems > kMaxElements) throw FormatError(path + ": header-declared payload too large");
    r.expect_payload(kGridHeaderBytes, elems * 4);
    file.frames.reserve(n_frames);
    for (std::uint32_t f = 0; f < n_frames; ++f)
        file.frames.push_back(
            read_plane(r, static_cast<Index>(n_vox), "frame data", static_cast<Index>(f * n_vox)));
    return file;
}

void write_volume_file(const std::string& path, const VolumeFile& file) {
    if (file.frames.empty()) throw std::invalid_argument("write_volume_file: no frames");
    const Index n_vox = voxel_count(file.dims);
    for (const auto& f : file.frames)
        if (f.size() != n_vox)
            throw ShapeError("write_volume_file: frame size does not match dims");
    AtomicWriter w(path);
    w.bytes("F4DV", 4);
    w.u32(kVersion);
    for (int a = 0; a < 3; ++a) w.u32(static_cast<std::uint32_t>(file.dims[a]));
    w.u32(static_cast<std::uint32_t>(file.frames.size()));
    for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(file.spacing[a]));
    for (const auto& f : file.frames) write_plane(w, f);
    w.commit();
}

FlowFile read_flow_file(const std::string& path) {
    Reader r(path);
    r.magic("F4DF");
    FlowFile file;
    file.dims = read_dims(r);
    const std::uint32_t n_fields = r.u32("n_fields");
    if (n_fields == 0) throw FormatError(path + ": n_fields must be >= 1");
    file.spacing = read_spacing(r);
    const std::uint64_t n_vox = static_cast<std::uint64_t>(voxel_count(file.dims));
    const std::uint64_t elems = n_vox * n_fields * 3;
    if (elems > kMaxElements) throw FormatError(path + ": header-declared payload too large");
    r.expect_payload(kGridHeaderBytes, elems * 4);
    file.fields.reserve(n_fields);
    for (std::uint32_t f = 0; f < n_fields; ++f) {
        FlowField<double> field;
        field.dims = file.dims;
        for (int c = 0; c < 3; ++c)
            field.comp[c] = read_plane(r, static_cast<Index>(n_vox), "flow data",
                                       static_cast<Index>((f * 3 + c) * n_vox));
        file.fields.push_back(std::move(field));
    }
    return file;
}

void write_flow_file(const std::string& path, const FlowFile& file) {
    if (file.fields.empty()) throw std::invalid_argument("write_flow_file: no fields");
    const Index n_vox = voxel_count(file.dims);
    for (const auto& f : file.fields) {
        if (!same_dims(f.dims, file.dims))
            throw ShapeError("write_flow_file: field dims do not match file dims");
        for (const auto& c : f.comp)
            if (c.size() != n_vox) throw ShapeError("write_flow_file: component size mismatch");
    }
    AtomicWriter w(path);
    w.bytes("F4DF", 4);
    w.u32(kVersion);
    for (int a = 0; a < 3; ++a) w.u32(static_cast<std::uint32_t>(file.dims[a]));
    w.u32(static_cast<std::uint32_t>(file.fields.size()));
    for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(file.spacing[a]));
    for (const auto& f : file.fields)
        for (int c = 0; c < 3; ++c) write_plane(w, f.comp[c]);
    w.commit();
}

KernelSet<double> read_kernel_file(const std::string& path) {
    Reader r(path);
    r.magic("F4DK");
    r.expect_payload(8, 21 * 8);
    Eigen::Matrix<double, 21, 1> w;
    r.bytes(w.data(), 21 * 8, "kernel weights");
    for (int i = 0; i < 21; ++i)
        if (!std::isfinite(w[i]))
            throw DataError(path + ": non-finite weight " + kernel_weight_name(i));
    return KernelSet<double>::from_vector(w);
}

void write_kernel_file(const std::string& path, const KernelSet<double>& kernels) {
    AtomicWriter w(path);
    w.bytes("F4DK", 4);
    w.u32(kVersion);
    const Eigen::Matrix<double, 21, 1> v = kernels.to_vector();
    w.bytes(v.data(), 21 * 8);
    w.commit();
}

VolumeSequence<double> as_sequence(const VolumeFile& file) {
    if (file.frames.size() < 2)
        throw std::invalid_argument("volume file holds fewer than 2 frames; not a sequence");
    VolumeSequence<double> seq;
    seq.reference = make_volume<double>(file.dims, file.spacing, file.frames.front());
    for (size_t i = 1; i < file.frames.size(); ++i)
        seq.frames.push_back(make_volume<double>(file.dims, file.spacing, file.frames[i]));
    return seq;
}

VolumeFile from_sequence(const VolumeSequence<double>& seq) {
    VolumeFile file;
    file.dims = seq.reference.dims;
    file.spacing = seq.reference.spacing;
    file.frames.push_back(seq.reference.data);
    for (const auto& f : seq.frames) file.frames.push_back(f.data);
    return file;
}

ScalarVolume<double> as_volume(const VolumeFile& file, size_t frame) {
    if (frame >= file.frames.size())
        throw std::invalid_argument("volume file frame index out of range");
    return make_volume<double>(file.dims, file.spacing, file.frames[frame]);
}

VoxelMask as_mask(const VolumeFile& file, size_t frame) {
    if (frame >= file.frames.size())
        throw std::invalid_argument("volume file frame index out of range");
    return file.frames[frame] != 0.0;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& path, const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw FormatError(path + ": bad numeric value for " + key + ": \"" + value + "\"");
    }
}

}  // namespace

PhantomSpec<double> read_phantom_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path + ": cannot open for reading");
    PhantomSpec<double> spec;
    bool have_kind = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto num = [&] { return parse_double(path, key, value); };
        if (key == "kind") {
            if (value == "translate")
                spec.kind = PhantomKind::translate;
            else if (value == "radial-contraction")
                spec.kind = PhantomKind::radial_contraction;
            else if (value == "rotation")
                spec.kind = PhantomKind::rotation;
            else
                throw FormatError(path + ": unknown phantom kind \"" + value + "\"");
            have_kind = true;
        } else if (key == "nx") spec.dims[0] = static_cast<int>(num());
        else if (key == "ny") spec.dims[1] = static_cast<int>(num());
        else if (key == "nz") spec.dims[2] = static_cast<int>(num());
        else if (key == "spacing_x") spec.spacing[0] = num();
        else if (key == "spacing_y") spec.spacing[1] = num();
        else if (key == "spacing_z") spec.spacing[2] = num();
        else if (key == "n_frames") spec.n_frames = static_cast<int>(num());
        else if (key == "shift_x") spec.shift[0] = num();
        else if (key == "shift_y") spec.shift[1] = num();
        else if (key == "shift_z") spec.shift[2] = num();
        else if (key == "contraction_rate") spec.contraction_rate = num();
        else if (key == "angular_rate") spec.angular_rate = num();
        else if (key == "blob_count") spec.blob_count = static_cast<int>(num());
        else if (key == "noise_sigma") spec.noise_sigma = num();
        else if (key == "seed") spec.seed = static_cast<std::uint64_t>(num());
        else
            throw FormatError(path + ":" + std::to_string(line_no) + ": unknown key \"" + key + "\"");
    }
    if (!have_kind) throw FormatError(path + ": missing required key \"kind\"");
    try {
        spec.validate();
    } catch (const std::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return spec;
}

std::string format_g9(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

namespace {

struct CsvWriter {
    AtomicWriter w;
    explicit CsvWriter(const std::string& path) : w(path) {}
    void line(const std::string& s) { w.bytes(s.data(), s.size()); w.bytes("\n", 1); }
};

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    CsvWriter csv(path);
    csv.line("dataset,frame,mask_voxels,mse_mean_mm,mse_std_mm,epe_mean_vox,epe_std_vox");
    for (const auto& r : rows)
        csv.line(r.dataset + "," + std::to_string(r.frame) + "," + std::to_string(r.mask_voxels) +
                 "," + format_g9(r.mse_mean_mm) + "," + format_g9(r.mse_std_mm) + "," +
                 format_g9(r.epe_mean_vox) + "," + format_g9(r.epe_std_vox));
    csv.w.commit();
}

void write_losses_csv(const std::string& path, const std::vector<WindowLoss<double>>& losses) {
    CsvWriter csv(path);
    csv.line("first_frame,last_frame,total,temporal,cycle,single_cycle,reconstruction");
    for (const auto& wl : losses)
        csv.line(std::to_string(wl.first_frame) + "," + std::to_string(wl.last_frame) + "," +
                 format_g9(wl.loss.total) + "," + format_g9(wl.loss.temporal) + "," +
                 format_g9(wl.loss.cycle) + "," + format_g9(wl.loss.single_cycle) + "," +
                 format_g9(wl.loss.reconstruction));
    csv.w.commit();
}

void write_timing_csv(const std::string& path, const std::vector<double>& timing_s) {
    CsvWriter csv(path);
    csv.line("frame,seconds");
    for (size_t i = 0; i < timing_s.size(); ++i)
        csv.line(std::to_string(i + 1) + "," + format_g9(timing_s[i]));
    csv.w.commit();
}

}  // namespace flow4d::io
