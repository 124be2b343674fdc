#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flow4d/interp.hpp"
#include "flow4d/metrics.hpp"
#include "flow4d/phantom.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace flow4d;
using namespace testsupport;

TEST_CASE("phantom spec validation") {
    PhantomSpec<double> spec;
    spec.n_frames = 1;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.n_frames = 2;
    spec.noise_sigma = -0.1;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.noise_sigma = 0;
    spec.kind = PhantomKind::radial_contraction;
    spec.contraction_rate = 1.0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.contraction_rate = 0.05;
    CHECK_NOTHROW(spec.validate());
}

TEST_CASE("translation phantom has constant ground-truth flows") {
    PhantomSpec<double> spec;
    spec.kind = PhantomKind::translate;
    spec.dims = Dims(12, 12, 12);
    spec.n_frames = 3;
    spec.shift = Vec3<double>(1, 0, 0);
    spec.seed = 4;
    const auto [seq, gt] = make_phantom(spec);

    CHECK(seq.frames.size() == 3);
    CHECK(gt.forward.size() == 2);
    CHECK(gt.backward.size() == 2);
    CHECK(gt.ref.size() == 3);
    for (const auto& f : gt.forward) {
        CHECK((f.comp[0] == 1.0).all());
        CHECK((f.comp[1] == 0.0).all());
        CHECK((f.comp[2] == 0.0).all());
    }
    for (const auto& b : gt.backward) CHECK((b.comp[0] == -1.0).all());
    for (size_t i = 0; i < gt.ref.size(); ++i)
        CHECK((gt.ref[i].comp[0] == double(i + 1)).all());
    CHECK(gt.mask.count() > 0);
    CHECK(gt.mask.count() < gt.mask.size());
}

TEST_CASE("contraction phantom flow is radial about the center") {
    PhantomSpec<double> spec;
    spec.kind = PhantomKind::radial_contraction;
    spec.dims = Dims(16, 16, 16);
    spec.n_frames = 2;
    spec.contraction_rate = 0.04;
    spec.seed = 9;
    const auto [seq, gt] = make_phantom(spec);

    const Vec3<double> c(7.5, 7.5, 7.5);
    for (const Vec3<double> x : {Vec3<double>(3, 7, 11), Vec3<double>(12, 4, 8), Vec3<double>(7, 7, 7)}) {
        const Vec3<double> expected = -0.04 * (x - c);
        const Index i = Index(x[0]) + 16 * (Index(x[1]) + 16 * Index(x[2]));
        for (int a = 0; a < 3; ++a)
            CHECK(gt.forward[0].comp[a][i] == doctest::Approx(expected[a]).epsilon(1e-12));
    }
}

TEST_CASE("rotation phantom flow matches the closed form at sample points") {
    PhantomSpec<double> spec;
    spec.kind = PhantomKind::rotation;
    spec.dims = Dims(16, 16, 16);
    spec.n_frames = 2;
    spec.angular_rate = 0.1;
    spec.seed = 2;
    const auto [seq, gt] = make_phantom(spec);

    const double c = std::cos(0.1), s = std::sin(0.1);
    const Vec3<double> center(7.5, 7.5, 7.5);
    const Vec3<double> x(11, 7, 5);
    const Vec3<double> d = x - center;
    const Vec3<double> expected(c * d[0] - s * d[1] - d[0], s * d[0] + c * d[1] - d[1], 0.0);
    const Index i = Index(x[0]) + 16 * (Index(x[1]) + 16 * Index(x[2]));
    for (int a = 0; a < 3; ++a)
        CHECK(gt.forward[0].comp[a][i] == doctest::Approx(expected[a]).epsilon(1e-12));
}

TEST_CASE("phantoms are bitwise deterministic in the seed") {
    PhantomSpec<double> spec;
    spec.kind = PhantomKind::rotation;
    spec.dims = Dims(10, 10, 10);
    spec.n_frames = 3;
    spec.angular_rate = 0.05;
    spec.noise_sigma = 0.02;
    spec.seed = 1234;
    const auto [seq1, gt1] = make_phantom(spec);
    const auto [seq2, gt2] = make_phantom(spec);
    CHECK((seq1.reference.data == seq2.reference.data).all());
    for (size_t i = 0; i < seq1.frames.size(); ++i)
        CHECK((seq1.frames[i].data == seq2.frames[i].data).all());

    spec.seed = 1235;
    const auto [seq3, gt3] = make_phantom(spec);
    CHECK(!(seq3.reference.data == seq1.reference.data).all());
}

TEST_CASE("noise perturbs intensities but not the ground truth") {
    PhantomSpec<double> spec;
    spec.kind = PhantomKind::translate;
    spec.dims = Dims(10, 10, 10);
    spec.n_frames = 2;
    spec.shift = Vec3<double>(0.5, 0, 0);
    spec.seed = 77;

    const auto [clean, gt_clean] = make_phantom(spec);
    spec.noise_sigma = 0.05;
    const auto [noisy, gt_noisy] = make_phantom(spec);

    CHECK(!(noisy.reference.data == clean.reference.data).all());
    for (int a = 0; a < 3; ++a)
        CHECK((gt_noisy.forward[0].comp[a] == gt_clean.forward[0].comp[a]).all());
    CHECK((gt_noisy.mask == gt_clean.mask).all());
}

TEST_CASE("ground truth satisfies the composition law on smooth fields") {
    for (const PhantomKind kind :
         {PhantomKind::radial_contraction, PhantomKind::rotation, PhantomKind::translate}) {
        // amplitudes kept small enough that composed lookups stay in-grid;
        // larger motions would measure boundary clamping, not sampling error
        PhantomSpec<double> spec;
        spec.kind = kind;
        spec.dims = Dims(24, 24, 24);
        spec.n_frames = 3;
        spec.shift = Vec3<double>(0.8, 0.3, 0);
        spec.contraction_rate = 0.05;
        spec.angular_rate = 0.02;
        spec.seed = 5;

        const auto f12 = ground_truth_flow(spec, 1, 2);
        const auto f23 = ground_truth_flow(spec, 2, 3);
        const auto f13 = ground_truth_flow(spec, 1, 3);
        const auto composed = compose_flow(f12, f23);
        double max_diff = 0;
        for (int c = 0; c < 3; ++c)
            max_diff = std::max(max_diff, (composed.comp[c] - f13.comp[c]).abs().maxCoeff());
        CHECK(max_diff < 1e-2);
    }
}

TEST_CASE("metric values on constructed error fields") {
    const Dims dims(6, 6, 6);
    const Index n = voxel_count(dims);
    VoxelMask mask = VoxelMask::Constant(n, true);

    const auto gt = smooth_random_flow(dims, 8, 1.0);

    SUBCASE("identical fields have zero error") {
        const auto m = mse_displacement(gt, gt, mask, Vec3<double>(0.7, 0.9, 0.6));
        CHECK(m.mean == 0.0);
        CHECK(m.stddev == 0.0);
        CHECK(m.n == n);
        const auto e = epe(gt, gt, mask);
        CHECK(e.mean == 0.0);
    }
    SUBCASE("3-4-5 error triple at unit spacing") {
        FlowField<double> pred = gt;
        pred.comp[0] += 3.0;
        pred.comp[1] += 4.0;
        const auto m = mse_displacement(pred, gt, mask, Vec3<double>(1, 1, 1));
        CHECK(m.mean == doctest::Approx(5.0).epsilon(1e-14));
        CHECK(m.stddev == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("spacing scales each component") {
        FlowField<double> pred = gt;
        pred.comp[0] += 1.0;
        const auto m = mse_displacement(pred, gt, mask, Vec3<double>(0.7, 0.9, 0.6));
        CHECK(m.mean == doctest::Approx(0.7).epsilon(1e-14));
    }
    SUBCASE("epe of a single-axis error") {
        FlowField<double> pred = gt;
        pred.comp[2] += 2.0;
        const auto e = epe(pred, gt, mask);
        CHECK(e.mean == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(e.stddev == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("unit spacing mse equals epe exactly") {
        const auto pred = smooth_random_flow(dims, 9, 1.0);
        mask = (smooth_random_volume(dims, 10).data > 0.4);
        if (mask.count() == 0) mask[0] = true;
        const auto m = mse_displacement(pred, gt, mask, Vec3<double>(1, 1, 1));
        const auto e = epe(pred, gt, mask);
        CHECK(m.mean == e.mean);
        CHECK(m.stddev == e.stddev);
        CHECK(m.n == e.n);
    }
    SUBCASE("swapping pred and gt leaves the metrics unchanged") {
        const auto pred = smooth_random_flow(dims, 11, 1.0);
        const auto a = epe(pred, gt, mask);
        const auto b = epe(gt, pred, mask);
        CHECK(a.mean == b.mean);
        CHECK(a.stddev == b.stddev);
    }
    SUBCASE("empty mask is rejected") {
        mask.setConstant(false);
        CHECK_THROWS_AS(epe(gt, gt, mask), std::invalid_argument);
    }
}

TEST_CASE("metrics match the loop transcription on random fields") {
    const Dims dims(6, 6, 6);
    const auto pred = random_flow(dims, 21, 2.0);
    const auto gt = random_flow(dims, 22, 2.0);
    VoxelMask mask = (smooth_random_volume(dims, 23).data > 0.3);
    if (mask.count() == 0) mask[0] = true;

    std::vector<bool> omask(static_cast<size_t>(mask.size()));
    for (Index i = 0; i < mask.size(); ++i) omask[static_cast<size_t>(i)] = mask[i];

    double mean = 0, stddev = 0;
    oracle::error_stats(to_vec3(pred), to_vec3(gt), omask, {6, 6, 6}, 0.7, 0.9, 0.6, mean, stddev);
    const auto m = mse_displacement(pred, gt, mask, Vec3<double>(0.7, 0.9, 0.6));
    CHECK(m.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(m.stddev == doctest::Approx(stddev).epsilon(1e-12));

    oracle::error_stats(to_vec3(pred), to_vec3(gt), omask, {6, 6, 6}, 1, 1, 1, mean, stddev);
    const auto e = epe(pred, gt, mask);
    CHECK(e.mean == doctest::Approx(mean).epsilon(1e-12));
}
