#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "flow4d/io.hpp"
#include "flow4d/phantom.hpp"
#include "test_support.hpp"

using namespace flow4d;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("flow4d_cli_test_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FLOW4D_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string phantom_config(const TempDir& dir, const std::string& extra = "") {
    const auto path = dir.file("phantom.cfg");
    std::ofstream(path) << "kind = translate\n"
                           "nx = 16\nny = 16\nnz = 16\n"
                           "n_frames = 8\n"
                           "shift_x = 0.4\n"
                           "blob_count = 5\n"
                           "seed = 3\n"
                        << extra;
    return path;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run_cli("") == 1);
    CHECK(run_cli("bogus-subcommand") == 1);
    CHECK(run_cli("flow --fixed a") == 1);          // missing required flags
    CHECK(run_cli("flow --no-such-flag x") == 1);
    CHECK(run_cli("--help") == 0);
}

TEST_CASE("phantom then flow then eval round trip") {
    TempDir dir;
    const auto cfg = phantom_config(dir);
    const auto seq = dir.file("seq.f4dv");
    const auto gt = dir.file("gt.f4df");
    const auto gt_ref = dir.file("gt_ref.f4df");
    const auto mask = dir.file("mask.f4dv");
    REQUIRE(run_cli("phantom --config " + cfg + " --out " + seq + " --gt " + gt + " --gt-ref " +
                    gt_ref + " --mask " + mask) == 0);

    const auto seq_file = io::read_volume_file(seq);
    CHECK(seq_file.frames.size() == 9);  // reference plus 8 frames
    CHECK(io::read_flow_file(gt).fields.size() == 7);
    CHECK(io::read_flow_file(gt_ref).fields.size() == 8);
    CHECK(io::as_mask(io::read_volume_file(mask)).count() > 0);

    // identical fixed/moving gives a near-zero flow
    io::VolumeFile frame0;
    frame0.dims = seq_file.dims;
    frame0.spacing = seq_file.spacing;
    frame0.frames = {seq_file.frames[0]};
    const auto fixed = dir.file("fixed.f4dv");
    io::write_volume_file(fixed, frame0);
    const auto out_flow = dir.file("zero.f4df");
    REQUIRE(run_cli("flow --fixed " + fixed + " --moving " + fixed + " --out " + out_flow) == 0);
    const auto zero = io::read_flow_file(out_flow);
    REQUIRE(zero.fields.size() == 1);
    double max_flow = 0;
    for (int c = 0; c < 3; ++c) max_flow = std::max(max_flow, zero.fields[0].comp[c].abs().maxCoeff());
    CHECK(max_flow < 1e-3);

    // eval of the ground truth against itself is exactly zero
    const auto report = dir.file("report.csv");
    REQUIRE(run_cli("eval --pred " + gt + " --gt " + gt + " --mask " + mask +
                    " --spacing 0.7,0.9,0.6 --report " + report) == 0);
    const auto lines = read_lines(report);
    REQUIRE(lines.size() == 8);  // header + 7 fields
    CHECK(lines[1].find(",0,0,0,0") != std::string::npos);
}

TEST_CASE("track writes flows, losses, and timing") {
    TempDir dir;
    const auto cfg = phantom_config(dir);
    const auto seq = dir.file("seq.f4dv");
    const auto gt = dir.file("gt.f4df");
    REQUIRE(run_cli("phantom --config " + cfg + " --out " + seq + " --gt " + gt) == 0);

    const auto out_dir = dir.file("trackout");
    REQUIRE(run_cli("track --seq " + seq + " --out-dir " + out_dir + " --window 4") == 0);

    CHECK(io::read_flow_file(out_dir + "/forward.f4df").fields.size() == 7);
    CHECK(io::read_flow_file(out_dir + "/backward.f4df").fields.size() == 7);
    CHECK(io::read_flow_file(out_dir + "/ref.f4df").fields.size() == 8);
    const auto losses = read_lines(out_dir + "/losses.csv");
    CHECK(losses.size() == 6);  // header + (8 - 4 + 1) windows
    const auto timing = read_lines(out_dir + "/timing.csv");
    CHECK(timing.size() == 9);  // header + one row per frame
}

TEST_CASE("data and format errors exit with code 2") {
    TempDir dir;
    CHECK(run_cli("flow --fixed " + dir.file("missing.f4dv") + " --moving " +
                  dir.file("missing.f4dv") + " --out " + dir.file("o.f4df")) == 2);

    const auto junk = dir.file("junk.f4dv");
    std::ofstream(junk) << "this is not a volume file at all";
    CHECK(run_cli("flow --fixed " + junk + " --moving " + junk + " --out " + dir.file("o.f4df")) == 2);

    const auto cfg = dir.file("bad.cfg");
    std::ofstream(cfg) << "kind = hexagon\n";
    CHECK(run_cli("phantom --config " + cfg + " --out " + dir.file("s.f4dv") + " --gt " +
                  dir.file("g.f4df")) == 2);

    CHECK(run_cli("eval --pred " + junk + " --gt " + junk + " --mask " + junk +
                  " --spacing 1,1,1 --report " + dir.file("r.csv")) == 2);
}

TEST_CASE("numerical failures exit with code 3") {
    TempDir dir;
    // kernel weights that overflow the gradient computations
    auto kernels = KernelSet<double>::initial();
    for (int a = 0; a < 3; ++a) kernels.grad[a] << -1e308, 0.0, 1e308;
    const auto kpath = dir.file("bad.f4dk");
    io::write_kernel_file(kpath, kernels);

    PhantomSpec<double> spec;
    spec.dims = Dims(8, 8, 8);
    spec.n_frames = 2;
    spec.shift = Vec3<double>(0.5, 0, 0);
    spec.seed = 8;
    const auto [seq, gt] = make_phantom(spec);
    io::VolumeFile a, b;
    a.dims = b.dims = spec.dims;
    a.spacing = b.spacing = Vec3<double>(1, 1, 1);
    a.frames = {seq.reference.data};
    b.frames = {seq.frames[0].data};
    const auto fixed = dir.file("fixed.f4dv");
    const auto moving = dir.file("moving.f4dv");
    io::write_volume_file(fixed, a);
    io::write_volume_file(moving, b);

    CHECK(run_cli("flow --fixed " + fixed + " --moving " + moving + " --out " + dir.file("o.f4df") +
                  " --kernels " + kpath) == 3);
}

TEST_CASE("train subcommand fits kernels on a tiny dataset") {
    TempDir dir;
    const auto data_dir = dir.file("train_data");
    fs::create_directories(data_dir);

    PhantomSpec<double> spec;
    spec.dims = Dims(8, 8, 8);
    spec.n_frames = 2;
    spec.shift = Vec3<double>(0.5, 0, 0);
    for (std::uint64_t s = 0; s < 2; ++s) {
        spec.seed = s;
        const auto [seq, gt] = make_phantom(spec);
        io::write_volume_file(data_dir + "/p" + std::to_string(s) + ".f4dv", io::from_sequence(seq));
    }

    const auto kpath = dir.file("trained.f4dk");
    REQUIRE(run_cli("train --data-dir " + data_dir + " --out-kernels " + kpath +
                    " --epochs 1 --window 2 --iters 8 --lr 0.005") == 0);
    const auto trained = io::read_kernel_file(kpath);
    CHECK(trained.to_vector().allFinite());

    CHECK(run_cli("train --data-dir " + dir.file("empty") + " --out-kernels " + kpath) == 2);
}
