#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>

#include "flow4d/io.hpp"
#include "flow4d/metrics.hpp"
#include "flow4d/phantom.hpp"
#include "flow4d/tracker.hpp"
#include "flow4d/trainer.hpp"
#include "flow4d/tvl1.hpp"

namespace fs = std::filesystem;
using namespace flow4d;

namespace {

// Exit codes: 0 success, 1 usage, 2 data/format, 3 numerical.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Vec3<double> parse_spacing(const std::string& text) {
    Vec3<double> s;
    std::istringstream ss(text);
    char c1 = 0, c2 = 0;
    if (!(ss >> s[0] >> c1 >> s[1] >> c2 >> s[2]) || c1 != ',' || c2 != ',' || !(ss >> std::ws).eof())
        throw UsageError("--spacing expects sx,sy,sz");
    if (!(s.array() > 0).all()) throw UsageError("--spacing components must be positive");
    return s;
}

KernelSet<double> load_kernels(const std::string& path) {
    return path.empty() ? KernelSet<double>::initial() : io::read_kernel_file(path);
}

void cmd_flow(const std::string& fixed_path, const std::string& moving_path,
              const std::string& out_path, const SolverParams<double>& params,
              const std::string& kernels_path) {
    const io::VolumeFile fixed_file = io::read_volume_file(fixed_path);
    const io::VolumeFile moving_file = io::read_volume_file(moving_path);
    const ScalarVolume<double> fixed = io::as_volume(fixed_file);
    const ScalarVolume<double> moving = io::as_volume(moving_file);
    const FlowResult<double> result =
        estimate_flow(fixed, moving, load_kernels(kernels_path), params);
    io::FlowFile out;
    out.dims = fixed.dims;
    out.spacing = fixed.spacing;
    out.fields.push_back(result.flow);
    io::write_flow_file(out_path, out);
    std::cout << "flow: " << fixed_path << " -> " << moving_path << ", final data energy "
              << io::format_g9(result.residual_history.back()) << "\n";
}

void cmd_track(const std::string& seq_path, const std::string& out_dir,
               const SolverParams<double>& params, int window, bool warm_start,
               const LossWeights<double>& weights, const std::string& kernels_path) {
    const VolumeSequence<double> seq = io::as_sequence(io::read_volume_file(seq_path));
    TrackOptions<double> options;
    options.warm_start = warm_start;
    options.weights = weights;
    const TrackingResult<double> result =
        track_sequence(seq, load_kernels(kernels_path), params, window, options);

    fs::create_directories(out_dir);
    auto flow_path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
    io::FlowFile file;
    file.dims = seq.reference.dims;
    file.spacing = seq.reference.spacing;
    file.fields = result.chain.forward;
    io::write_flow_file(flow_path("forward.f4df"), file);
    file.fields = result.chain.backward;
    io::write_flow_file(flow_path("backward.f4df"), file);
    file.fields = result.ref_flows;
    io::write_flow_file(flow_path("ref.f4df"), file);
    io::write_losses_csv(flow_path("losses.csv"), result.losses);
    io::write_timing_csv(flow_path("timing.csv"), result.timing_s);
    std::cout << "track: " << seq.frames.size() << " frames, " << result.losses.size()
              << " loss windows written to " << out_dir << "\n";
}

void cmd_phantom(const std::string& config_path, const std::string& out_path,
                 const std::string& gt_path, const std::string& gt_ref_path,
                 const std::string& gt_backward_path, const std::string& mask_path,
                 std::int64_t seed_override) {
    PhantomSpec<double> spec = io::read_phantom_config(config_path);
    if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
    const auto [seq, gt] = make_phantom(spec);
    io::write_volume_file(out_path, io::from_sequence(seq));

    io::FlowFile flows;
    flows.dims = spec.dims;
    flows.spacing = spec.spacing;
    flows.fields = gt.forward;
    io::write_flow_file(gt_path, flows);
    if (!gt_ref_path.empty()) {
        flows.fields = gt.ref;
        io::write_flow_file(gt_ref_path, flows);
    }
    if (!gt_backward_path.empty()) {
        flows.fields = gt.backward;
        io::write_flow_file(gt_backward_path, flows);
    }
    if (!mask_path.empty()) {
        io::VolumeFile mask;
        mask.dims = spec.dims;
        mask.spacing = spec.spacing;
        mask.frames.emplace_back(gt.mask.cast<double>());
        io::write_volume_file(mask_path, mask);
    }
    std::cout << "phantom: wrote " << seq.frames.size() + 1 << " frames, "
              << gt.forward.size() << " gt pair flows, mask voxels " << gt.mask.count() << "\n";
}

void cmd_eval(const std::string& pred_path, const std::string& gt_path,
              const std::string& mask_path, const std::string& spacing_text,
              const std::string& report_path) {
    const io::FlowFile pred = io::read_flow_file(pred_path);
    const io::FlowFile gt = io::read_flow_file(gt_path);
    if (pred.fields.size() != gt.fields.size())
        throw io::DataError("eval: pred has " + std::to_string(pred.fields.size()) +
                            " fields, gt has " + std::to_string(gt.fields.size()));
    const VoxelMask mask = io::as_mask(io::read_volume_file(mask_path));
    const Vec3<double> spacing = parse_spacing(spacing_text);
    const std::string dataset = fs::path(pred_path).stem().string();

    std::vector<io::MetricRow> rows;
    for (size_t i = 0; i < pred.fields.size(); ++i) {
        const auto mse = mse_displacement(pred.fields[i], gt.fields[i], mask, spacing);
        const auto end_point = epe(pred.fields[i], gt.fields[i], mask);
        io::MetricRow row;
        row.dataset = dataset;
        row.frame = static_cast<int>(i + 1);
        row.mask_voxels = mse.n;
        row.mse_mean_mm = mse.mean;
        row.mse_std_mm = mse.stddev;
        row.epe_mean_vox = end_point.mean;
        row.epe_std_vox = end_point.stddev;
        rows.push_back(std::move(row));
    }
    io::write_metrics_csv(report_path, rows);
    std::cout << "eval: " << rows.size() << " rows written to " << report_path << "\n";
}

void cmd_train(const std::string& data_dir, const std::string& out_kernels,
               TrainConfig<double> config) {
    std::vector<std::string> paths;
    if (!fs::is_directory(data_dir)) throw io::FormatError(data_dir + ": not a directory");
    for (const auto& entry : fs::directory_iterator(data_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".f4dv")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw io::FormatError(data_dir + ": no .f4dv sequence files found");

    std::vector<VolumeSequence<double>> train_set;
    for (const auto& p : paths) train_set.push_back(io::as_sequence(io::read_volume_file(p)));

    const TrainResult<double> result = train_kernels(train_set, config);
    io::write_kernel_file(out_kernels, result.kernels);
    std::cout << "train: " << train_set.size() << " sequences\n";
    for (size_t e = 0; e < result.history.size(); ++e)
        std::cout << (e + 1 == result.history.size() ? "final" : "epoch " + std::to_string(e))
                  << " loss " << io::format_g9(result.history[e]) << "\n";
    std::cout << "kernels written to " << out_kernels << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volumetric TV-L1 optical flow and 4D motion tracking toolkit"};
    app.require_subcommand(1);
    std::function<void()> run;

    SolverParams<double> params;
    LossWeights<double> weights;
    std::string kernels_path;

    auto add_solver_flags = [&](CLI::App* cmd) {
        cmd->add_option("--iters", params.n_iters, "solver iterations")->capture_default_str();
        cmd->add_option("--lambda", params.lambda, "data-term weight")->capture_default_str();
        cmd->add_option("--theta", params.theta, "coupling weight")->capture_default_str();
        cmd->add_option("--tau", params.tau, "dual time-step")->capture_default_str();
        cmd->add_option("--kernels", kernels_path, "kernel file (defaults to stock stencils)");
    };

    {
        auto* cmd = app.add_subcommand("flow", "estimate the flow of one volume pair");
        auto fixed = std::make_shared<std::string>();
        auto moving = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("--fixed", *fixed, "fixed volume file")->required();
        cmd->add_option("--moving", *moving, "moving volume file")->required();
        cmd->add_option("--out", *out, "output flow file")->required();
        add_solver_flags(cmd);
        cmd->add_flag("--pyramid", params.use_pyramid, "2-level coarse-to-fine pass");
        cmd->callback([&, fixed, moving, out] {
            run = [&, fixed, moving, out] { cmd_flow(*fixed, *moving, *out, params, kernels_path); };
        });
    }
    {
        auto* cmd = app.add_subcommand("track", "track a full sequence");
        auto seq = std::make_shared<std::string>();
        auto out_dir = std::make_shared<std::string>();
        auto window = std::make_shared<int>(4);
        auto no_warm = std::make_shared<bool>(false);
        cmd->add_option("--seq", *seq, "sequence volume file")->required();
        cmd->add_option("--out-dir", *out_dir, "output directory")->required();
        cmd->add_option("--window", *window, "temporal loss window")->capture_default_str();
        cmd->add_flag("--no-warm-start", *no_warm, "solve every pair from scratch");
        add_solver_flags(cmd);
        cmd->add_option("--gamma", weights.gamma, "temporal loss weight")->capture_default_str();
        cmd->add_option("--omega", weights.omega, "whole-cycle weight")->capture_default_str();
        cmd->add_option("--beta", weights.beta, "reconstruction weight")->capture_default_str();
        cmd->callback([&, seq, out_dir, window, no_warm] {
            run = [&, seq, out_dir, window, no_warm] {
                weights.lambda = params.lambda;
                cmd_track(*seq, *out_dir, params, *window, !*no_warm, weights, kernels_path);
            };
        });
    }
    {
        auto* cmd = app.add_subcommand("phantom", "generate a synthetic phantom sequence");
        auto config = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto gt = std::make_shared<std::string>();
        auto gt_ref = std::make_shared<std::string>();
        auto gt_bwd = std::make_shared<std::string>();
        auto mask = std::make_shared<std::string>();
        auto seed = std::make_shared<std::int64_t>(-1);
        cmd->add_option("--config", *config, "phantom config file")->required();
        cmd->add_option("--out", *out, "output sequence volume file")->required();
        cmd->add_option("--gt", *gt, "output ground-truth pairwise flow file")->required();
        cmd->add_option("--gt-ref", *gt_ref, "also write reference-to-frame gt flows");
        cmd->add_option("--gt-backward", *gt_bwd, "also write backward gt flows");
        cmd->add_option("--mask", *mask, "also write the texture-support mask volume");
        cmd->add_option("--seed", *seed, "override the config seed");
        cmd->callback([run = &run, config, out, gt, gt_ref, gt_bwd, mask, seed] {
            *run = [=] { cmd_phantom(*config, *out, *gt, *gt_ref, *gt_bwd, *mask, *seed); };
        });
    }
    {
        auto* cmd = app.add_subcommand("eval", "compare predicted flows against ground truth");
        auto pred = std::make_shared<std::string>();
        auto gt = std::make_shared<std::string>();
        auto mask = std::make_shared<std::string>();
        auto spacing = std::make_shared<std::string>();
        auto report = std::make_shared<std::string>();
        cmd->add_option("--pred", *pred, "predicted flow file")->required();
        cmd->add_option("--gt", *gt, "ground-truth flow file")->required();
        cmd->add_option("--mask", *mask, "mask volume file (nonzero = evaluate)")->required();
        cmd->add_option("--spacing", *spacing, "voxel size sx,sy,sz in mm")->required();
        cmd->add_option("--report", *report, "output CSV report")->required();
        cmd->callback([run = &run, pred, gt, mask, spacing, report] {
            *run = [=] { cmd_eval(*pred, *gt, *mask, *spacing, *report); };
        });
    }
    {
        auto* cmd = app.add_subcommand("train", "train the stencil weights on phantom sequences");
        auto data_dir = std::make_shared<std::string>();
        auto out_kernels = std::make_shared<std::string>();
        auto config = std::make_shared<TrainConfig<double>>();
        config->epochs = 20;
        cmd->add_option("--data-dir", *data_dir, "directory of .f4dv training sequences")->required();
        cmd->add_option("--out-kernels", *out_kernels, "output kernel file")->required();
        cmd->add_option("--lr", config->learning_rate, "learning rate")->capture_default_str();
        cmd->add_option("--epochs", config->epochs, "descent epochs")->capture_default_str();
        cmd->add_option("--fd-step", config->fd_step, "finite-difference step")->capture_default_str();
        cmd->add_option("--window", config->window, "temporal window length")->capture_default_str();
        cmd->add_option("--seed", config->seed, "data-order seed");
        cmd->callback([&, data_dir, out_kernels, config] {
            run = [&, data_dir, out_kernels, config] {
                config->solver = params;
                config->weights.lambda = params.lambda;
                cmd_train(*data_dir, *out_kernels, *config);
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        run();
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
