#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "alloc_probe.hpp"
#include "hrcm/compress.hpp"
#include "hrcm/geometry.hpp"

using namespace hrcm;

namespace {

Mat<double> random_matrix(Eigen::Index m, Eigen::Index n, std::uint64_t seed) {
    RandomStream rng(seed, 99);
    Mat<double> A(m, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < m; ++i)
            A(i, j) = rng.uniform01() - 0.5;
    return A;
}

Mat<double> low_rank_matrix(Eigen::Index m, Eigen::Index n, Eigen::Index rank, std::uint64_t seed) {
    return random_matrix(m, rank, seed) * random_matrix(rank, n, seed + 1);
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

IndexSampler fixed(std::vector<std::size_t> idx) {
    return [idx](std::size_t count) {
        REQUIRE(count == idx.size());
        return idx;
    };
}

struct SeparatedPair {
    PointSet targets;
    PointSet sources;
};

SeparatedPair separated_boxes(int p, double side, double gap, std::uint64_t seed) {
    RandomStream rng(seed, 1);
    auto s = make_grid_points(p, side, {0, 0}, GridLayout::Jittered, DensityKind::Ones, rng);
    auto t = make_grid_points(p, side, {gap, 0}, GridLayout::Jittered, DensityKind::Ones, rng);
    return {std::move(t), std::move(s)};
}

} // namespace

TEST_CASE("column sampling scales by sqrt(N/c)") {
    const Mat<double> zero = Mat<double>::Zero(4, 4);
    RandomStream rng(1, 1);
    CHECK(sample_columns(DenseBlock<double>(zero), 3, rng).isZero());

    const Mat<double> ones = Mat<double>::Ones(4, 4);
    const auto C = sample_columns(DenseBlock<double>(ones), 2, rng);
    CHECK(C.rows() == 4);
    CHECK(C.cols() == 2);
    CHECK((C.array() - std::sqrt(2.0)).abs().maxCoeff() < 1e-15);

    const Mat<double> col = random_matrix(5, 1, 3);
    CHECK(sample_columns(DenseBlock<double>(col), 1, rng) == col);
    CHECK_THROWS_AS(sample_columns(DenseBlock<double>(col), 0, rng), ConfigError);
}

TEST_CASE("row sampling scales by sqrt(M/r)") {
    RandomStream rng(2, 2);
    CHECK(sample_rows(Mat<double>(Mat<double>::Zero(6, 3)), 2, rng).isZero());
    const Mat<double> row = random_matrix(1, 4, 5);
    CHECK(sample_rows(row, 1, rng) == row);
    const auto Cr = sample_rows(Mat<double>(Mat<double>::Ones(4, 2)), 2, rng);
    CHECK((Cr.array() - std::sqrt(2.0)).abs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(sample_rows(row, 0, rng), ConfigError);
}

TEST_CASE("small svd") {
    Mat<double> d = Mat<double>::Zero(2, 2);
    d(0, 0) = 3;
    d(1, 1) = 1;
    const auto s = svd_small(d);
    CHECK(s.sigma(0) == doctest::Approx(3));
    CHECK(s.sigma(1) == doctest::Approx(1));
    CHECK((s.U.cwiseAbs() - Mat<double>::Identity(2, 2)).norm() < 1e-14);

    Vec<double> u(3), v(2);
    u << 2, 0, 0;
    v << 0, 3;
    const auto r1 = svd_small(Mat<double>(u * v.transpose()));
    CHECK(r1.sigma(0) == doctest::Approx(6));
    CHECK(std::abs(r1.sigma(1)) < 1e-14);

    CHECK(svd_small(Mat<double>(Mat<double>::Zero(3, 3))).sigma.isZero());

    const Mat<double> A = random_matrix(7, 5, 17);
    const auto f = svd_small(A);
    Mat<double> S = Mat<double>::Zero(7, 5);
    for (Eigen::Index k = 0; k < 5; ++k)
        S(k, k) = f.sigma(k);
    CHECK((A - f.U * S * f.V.adjoint()).norm() <= 1e-10 * A.norm());
    for (Eigen::Index k = 1; k < 5; ++k)
        CHECK(f.sigma(k) <= f.sigma(k - 1));
    // sign convention: the first nonzero entry of each left vector is non-negative
    for (Eigen::Index k = 0; k < f.U.cols(); ++k) {
        Eigen::Index i = 0;
        while (std::abs(f.U(i, k)) < 1e-14)
            ++i;
        CHECK(f.U(i, k) > 0);
    }
    CHECK_THROWS_AS(svd_small(A, 4), ConfigError);
    Mat<double> bad = A;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(svd_small(bad), NumericalError);
}

TEST_CASE("complex svd phase convention") {
    Mat<cplx> A(3, 3);
    RandomStream rng(4, 4);
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 3; ++j)
            A(i, j) = cplx(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
    const auto f = svd_small(A);
    CHECK((A - f.U * f.sigma.cast<cplx>().asDiagonal() * f.V.adjoint()).norm() < 1e-12);
    for (Eigen::Index k = 0; k < 3; ++k) {
        CHECK(std::abs(f.U(0, k).imag()) < 1e-14);
        CHECK(f.U(0, k).real() >= 0);
    }
}

TEST_CASE("truncation rank") {
    const std::vector<double> a{5, 1e-3, 1e-12};
    CHECK(truncation_rank(a, 1e-8, 3) == 2);
    const std::vector<double> z{0, 0, 0};
    CHECK(truncation_rank(z, 1e-8, 3) == 0);
    const std::vector<double> o{1, 1, 1};
    CHECK(truncation_rank(o, 1e-8, 3) == 3);
    CHECK(truncation_rank(o, 1e-8, 2) == 2);
    const std::vector<double> eq{1, 1e-8};
    CHECK(truncation_rank(eq, 1e-8, 2) == 1);
}

TEST_CASE("orthonormalize") {
    const Mat<double> B = random_matrix(8, 3, 7);
    const auto qr = orthonormalize(B);
    CHECK((qr.Q * qr.R - B).norm() <= 1e-12 * B.norm());
    CHECK((qr.Q.adjoint() * qr.Q - Mat<double>::Identity(3, 3)).norm() < 1e-12);
    CHECK(qr.rank == 3);
    for (Eigen::Index k = 0; k < 3; ++k)
        CHECK(qr.R(k, k) >= 0);

    const auto again = orthonormalize(qr.Q);
    CHECK((again.Q - qr.Q).norm() < 1e-12);
    CHECK((again.R - Mat<double>::Identity(3, 3)).norm() < 1e-12);

    Mat<double> dep = Mat<double>::Zero(4, 2);
    dep(0, 0) = 1;
    dep(0, 1) = 2;
    CHECK(orthonormalize(dep).rank == 1);
    CHECK_THROWS_AS(orthonormalize(Mat<double>(Mat<double>::Ones(2, 3))), ConfigError);
}

TEST_CASE("monte-carlo product") {
    RandomStream rng(8, 8);
    const Mat<double> A = random_matrix(16, 16, 31);
    const DenseBlock<double> blk(A);
    CHECK(mc_matmul(blk, Mat<double>(Mat<double>::Zero(16, 2)), 5, rng).isZero());

    const Mat<double> one_row = random_matrix(1, 6, 32);
    const Mat<double> U1 = random_matrix(1, 2, 33);
    CHECK((mc_matmul(DenseBlock<double>(one_row), U1, 7, rng) - one_row.adjoint() * U1).norm() < 1e-13);

    SUBCASE("unbiased") {
        const Mat<double> U = random_matrix(16, 2, 34);
        const Mat<double> exact = A.adjoint() * U;
        constexpr int trials = 10000;
        Mat<double> sum = Mat<double>::Zero(16, 2);
        Mat<double> sum_sq = Mat<double>::Zero(16, 2);
        for (int t = 0; t < trials; ++t) {
            const auto V = mc_matmul(blk, U, 16, rng);
            sum += V;
            sum_sq += V.cwiseProduct(V);
        }
        const Mat<double> mean = sum / trials;
        const Mat<double> var = (sum_sq / trials - mean.cwiseProduct(mean)) * (trials / (trials - 1.0));
        int within3 = 0;
        for (Eigen::Index i = 0; i < 16; ++i)
            for (Eigen::Index j = 0; j < 2; ++j) {
                const double z = std::abs(mean(i, j) - exact(i, j)) / std::sqrt(var(i, j) / trials);
                CHECK(z < 4.5);
                within3 += z < 3.0;
            }
        CHECK(within3 >= 29); // 90% of 32 entries
    }
}

TEST_CASE("column sketch is unbiased for the Gram matrix") {
    const Mat<double> A = random_matrix(8, 8, 41);
    const DenseBlock<double> blk(A);
    const Mat<double> G = A * A.adjoint();
    RandomStream rng(9, 9);
    constexpr int trials = 20000;
    Mat<double> sum = Mat<double>::Zero(8, 8);
    Mat<double> sum_sq = Mat<double>::Zero(8, 8);
    for (int t = 0; t < trials; ++t) {
        const auto C = sample_columns(blk, 3, rng);
        const Mat<double> CC = C * C.adjoint();
        sum += CC;
        sum_sq += CC.cwiseProduct(CC);
    }
    const Mat<double> mean = sum / trials;
    const Mat<double> var = (sum_sq / trials - mean.cwiseProduct(mean)) * (trials / (trials - 1.0));
    for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < 8; ++j)
            CHECK(std::abs(mean(i, j) - G(i, j)) <= 5.0 * std::sqrt(var(i, j) / trials) + 1e-14);
}

TEST_CASE("constant kernel block is recovered exactly") {
    const auto k = Kernel::constant(2.5);
    const auto pair = separated_boxes(2, 1.0, 3.0, 5);
    const KernelBlock<double> blk(k, pair.targets.points, pair.sources.points, pair.sources.densities);
    Vec<double> x(16);
    for (Eigen::Index i = 0; i < 16; ++i)
        x(i) = 1.0 + 0.1 * static_cast<double>(i);
    const Vec<double> exact = Vec<double>::Constant(16, 2.5 * x.sum());
    RandomStream rng(10, 10);
    for (auto form : {ApplyForm::Singular, ApplyForm::Projector}) {
        const auto cb = compress_block(blk, SampleBudget{2, 2, 1e-8}, rng, form);
        CHECK(cb.rank() == 1);
        const Vec<double> y = apply_compressed<double>(cb, x);
        CHECK((y - exact).norm() <= 1e-10 * exact.norm());
    }
}

TEST_CASE("zero densities give the zero map") {
    const auto k = Kernel::screened(0.01);
    auto pair = separated_boxes(3, 1.0, 3.0, 6);
    std::fill(pair.sources.densities.begin(), pair.sources.densities.end(), 0.0);
    const KernelBlock<double> blk(k, pair.targets.points, pair.sources.points, pair.sources.densities);
    RandomStream rng(11, 11);
    const auto cb = compress_block(blk, SampleBudget{8, 8, 1e-8}, rng);
    CHECK(cb.rank() == 0);
    const Vec<double> y = apply_compressed<double>(cb, Vec<double>::Ones(64));
    CHECK(y.isZero());
    CHECK(y.size() == 64);
}

TEST_CASE("compressed factors and apply") {
    const auto k = Kernel::screened(0.01);
    const auto pair = separated_boxes(3, 1.0, 2.0, 7);
    const KernelBlock<double> blk(k, pair.targets.points, pair.sources.points, pair.sources.densities);
    RandomStream rng(12, 12);
    const auto cb = compress_block(blk, SampleBudget{6, 5, 1e-8}, rng);
    const auto l = static_cast<Eigen::Index>(cb.rank());
    CHECK(cb.rank() <= 5);
    CHECK((cb.U.adjoint() * cb.U - Mat<double>::Identity(l, l)).norm() < 1e-12);
    CHECK((cb.V.adjoint() * cb.V - Mat<double>::Identity(l, l)).norm() < 1e-12);
    for (Eigen::Index t = 0; t < l; ++t) {
        CHECK(cb.sigma(t) >= 0);
        if (t > 0)
            CHECK(cb.sigma(t) <= cb.sigma(t - 1));
    }

    const Vec<double> x = random_matrix(64, 1, 50);
    const Vec<double> z = random_matrix(64, 1, 51);
    CHECK(apply_compressed<double>(cb, Vec<double>::Zero(64)).isZero());
    const Vec<double> lhs = apply_compressed<double>(cb, Vec<double>(2.0 * x - 3.0 * z));
    const Vec<double> rhs = 2.0 * apply_compressed<double>(cb, x) - 3.0 * apply_compressed<double>(cb, z);
    CHECK((lhs - rhs).norm() <= 1e-13 * rhs.norm());
    CHECK_THROWS_AS(apply_compressed<double>(cb, Vec<double>::Zero(63)), ConfigError);

    // projector form applies U (V R)^* x = U (V_raw^* x)
    auto proj = cb;
    proj.form = ApplyForm::Projector;
    const Vec<double> expect = cb.U * (cb.V * cb.R).adjoint() * x;
    CHECK((apply_compressed<double>(proj, x) - expect).norm() <= 1e-13 * expect.norm());
}

TEST_CASE("separated screened block error band") {
    const auto k = Kernel::screened(0.01);
    // two 32-point boxes of side 4, centers 8 apart
    RandomStream geo(13, 13);
    const auto s = make_grid_points(3, 4.0, {0, 0}, GridLayout::Jittered, DensityKind::Ones, geo);
    auto t = make_grid_points(3, 4.0, {8, 0}, GridLayout::Jittered, DensityKind::Ones, geo);
    std::vector<Point2D> src(s.points.begin(), s.points.begin() + 32);
    std::vector<double> q(32, 1.0);
    std::vector<Point2D> tgt(t.points.begin(), t.points.begin() + 32);
    const KernelBlock<double> blk(k, tgt, src, q);
    Mat<double> A(32, 32);
    for (std::size_t i = 0; i < 32; ++i)
        for (std::size_t j = 0; j < 32; ++j)
            A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = blk.entry(i, j);
    const Vec<double> x = Vec<double>::Ones(32);
    const Vec<double> exact = A * x;
    double sum = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomStream rng(seed, 77);
        const auto cb = compress_block(blk, SampleBudget{16, 16, 1e-8}, rng);
        sum += (apply_compressed<double>(cb, x) - exact).norm() / exact.norm();
    }
    const double mean = sum / 20;
    CHECK(mean >= 1e-3);
    CHECK(mean <= 1e-1);
}

TEST_CASE("low-rank blocks: subspace capture and exact recovery") {
    for (Eigen::Index rank = 1; rank <= 4; ++rank) {
        const Mat<double> A = low_rank_matrix(64, 64, rank, 100 + static_cast<std::uint64_t>(rank));
        const DenseBlock<double> blk(A);

        // i.i.d. sampling with c, r >= rank: the range of A is found whenever
        // the draws span it; degenerate draws are retried.
        bool captured = false;
        for (std::uint64_t attempt = 0; attempt < 5 && !captured; ++attempt) {
            RandomStream rng(attempt, static_cast<std::uint64_t>(rank));
            const auto cb = compress_block(blk, SampleBudget{8, 8, 1e-8}, rng);
            if (cb.rank() != static_cast<std::size_t>(rank))
                continue;
            const Mat<double> resid = A - cb.U * (cb.U.adjoint() * A);
            captured = resid.norm() <= 1e-8 * A.norm();
        }
        CHECK(captured);

        // every row and column sampled once: the apply is exact
        for (auto form : {ApplyForm::Singular, ApplyForm::Projector}) {
            const BlockSamplers all{fixed(all_indices(64)), fixed(all_indices(64)), fixed(all_indices(64))};
            const auto cb = compress_block(blk, SampleBudget{64, 64, 1e-8}, all, form);
            CHECK(cb.rank() == static_cast<std::size_t>(rank));
            const Vec<double> x = random_matrix(64, 1, 7);
            const Vec<double> exact = A * x;
            CHECK((apply_compressed<double>(cb, x) - exact).norm() <= 1e-8 * exact.norm());
        }
    }
}

TEST_CASE("complex blocks compress") {
    const auto k = Kernel::helmholtz(0.25);
    const auto pair = separated_boxes(4, 8.0, 16.0, 14);
    const KernelBlock<cplx> blk(k, pair.targets.points, pair.sources.points, pair.sources.densities);
    const Vec<cplx> x = Vec<cplx>::Ones(256);
    Vec<cplx> exact = Vec<cplx>::Zero(256);
    for (std::size_t i = 0; i < 256; ++i)
        for (std::size_t j = 0; j < 256; ++j)
            exact(static_cast<Eigen::Index>(i)) += blk.entry(i, j);
    RandomStream rng(15, 15);
    const auto cb = compress_block(blk, SampleBudget{32, 32, 1e-8}, rng);
    const auto l = static_cast<Eigen::Index>(cb.rank());
    CHECK((cb.U.adjoint() * cb.U - Mat<cplx>::Identity(l, l)).norm() < 1e-12);
    CHECK((apply_compressed<cplx>(cb, x) - exact).norm() < 0.05 * exact.norm());
}

TEST_CASE("compression never allocates the whole block") {
    const auto k = Kernel::screened(0.01);
    const auto pair = separated_boxes(5, 8.0, 16.0, 16); // 1024 x 1024
    const KernelBlock<double> blk(k, pair.targets.points, pair.sources.points, pair.sources.densities);
    RandomStream rng(16, 16);
    AllocProbe probe;
    const auto cb = compress_block(blk, SampleBudget{16, 16, 1e-8}, rng);
    const Vec<double> y = apply_compressed<double>(cb, Vec<double>::Ones(1024));
    const auto peak = probe.largest();
    // O((M + N) max(c, r, l)) doubles; the full block would be 8 MiB
    CHECK(peak <= 1024 * 64 * sizeof(double));
    CHECK(peak > 0);
}
