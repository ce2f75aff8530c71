#pragma once
//
// Randomized compression of one far-field block: uniform column/row sampling,
// SVD of the small sampled core, QR orthonormalization, and a Monte-Carlo
// estimate of A* U. Entries are produced on demand; no M x N array is formed.
//

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hrcm/kernels.hpp"
#include "hrcm/random.hpp"
#include "hrcm/types.hpp"

namespace hrcm {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
using RealVec = Eigen::VectorXd;

// Anything that can report its shape and produce entry (i, j) on demand.
template <typename B>
concept BlockView = requires(const B& b, std::size_t i, std::size_t j) {
    typename B::value_type;
    requires KernelScalar<typename B::value_type>;
    { b.rows() } -> std::convertible_to<std::size_t>;
    { b.cols() } -> std::convertible_to<std::size_t>;
    { b.entry(i, j) } -> std::same_as<typename B::value_type>;
};

// Block of K(r_i, r_j) q_j over a target and a source point range.
template <KernelScalar T>
class KernelBlock {
public:
    using value_type = T;

    KernelBlock(const Kernel& kernel, std::span<const Point2D> targets, std::span<const Point2D> sources,
                std::span<const double> source_densities, bool skip_diagonal = false)
        : kernel_(&kernel), targets_(targets), sources_(sources), q_(source_densities),
          skip_diagonal_(skip_diagonal) {}

    std::size_t rows() const { return targets_.size(); }
    std::size_t cols() const { return sources_.size(); }

    T entry(std::size_t i, std::size_t j) const {
        if (skip_diagonal_ && i == j)
            return T(0);
        if (q_[j] == 0.0)
            return T(0);
        return kernel_->eval_as<T>(targets_[i], sources_[j]) * q_[j];
    }

private:
    const Kernel* kernel_;
    std::span<const Point2D> targets_;
    std::span<const Point2D> sources_;
    std::span<const double> q_;
    bool skip_diagonal_;
};

// Adapter for explicitly stored matrices (tests and validation paths).
template <KernelScalar T>
class DenseBlock {
public:
    using value_type = T;

    explicit DenseBlock(const Mat<T>& m) : m_(&m) {}

    std::size_t rows() const { return static_cast<std::size_t>(m_->rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(m_->cols()); }
    T entry(std::size_t i, std::size_t j) const {
        return (*m_)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }

private:
    const Mat<T>* m_;
};

// Conjugate-transposed view: entry(i, j) = conj(A(j, i)).
template <BlockView B>
class AdjointView {
public:
    using value_type = typename B::value_type;

    explicit AdjointView(const B& block) : block_(&block) {}

    std::size_t rows() const { return block_->cols(); }
    std::size_t cols() const { return block_->rows(); }
    value_type entry(std::size_t i, std::size_t j) const { return conj_of(block_->entry(j, i)); }

private:
    const B* block_;
};

struct SampleBudget {
    std::size_t c = 16;    // sampled columns
    std::size_t r = 16;    // sampled rows
    double epsilon = 1e-8; // singular-value cutoff
};

// How a compressed block acts on a vector.
enum class ApplyForm {
    Singular,  // sum_t sigma_t U_t V_t^* with sigma from the sampled core and V from QR of A^* U
    Projector, // U (V_raw^* x) with V_raw the Monte-Carlo estimate of A^* U
};

// Draws `count` indices in [0, n) for one sampling step of the compression.
using IndexSampler = std::function<std::vector<std::size_t>(std::size_t count)>;

struct BlockSamplers {
    IndexSampler columns;  // step 1, source side
    IndexSampler rows;     // step 2, target side
    IndexSampler products; // step 6, target side
};

// I.i.d. uniform sampling with replacement from [0, n).
inline IndexSampler uniform_sampler(std::size_t n, RandomStream& rng) {
    return [n, &rng](std::size_t count) {
        std::vector<std::size_t> idx(count);
        for (auto& i : idx)
            i = rng.uniform_index(n);
        return idx;
    };
}

inline BlockSamplers uniform_samplers(std::size_t rows, std::size_t cols, RandomStream& rng) {
    return {uniform_sampler(cols, rng), uniform_sampler(rows, rng), uniform_sampler(rows, rng)};
}

template <KernelScalar T>
struct CompressedBlock {
    Mat<T> U;      // M x l, orthonormal columns
    RealVec sigma; // l singular values of the sampled core
    Mat<T> V;      // N x l, orthonormal columns (QR of the Monte-Carlo estimate)
    Mat<T> R;      // l x l, V * R == Monte-Carlo estimate of A^* U
    ApplyForm form = ApplyForm::Singular;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t rank() const { return static_cast<std::size_t>(U.cols()); }
};

template <KernelScalar T>
struct SvdResult {
    Mat<T> U;
    RealVec sigma;
    Mat<T> V;
};

template <KernelScalar T>
struct QrResult {
    Mat<T> Q;
    Mat<T> R;
    std::size_t rank = 0;
};

inline constexpr std::size_t kDefaultSvdCap = 1024;

// Step 1: c columns drawn by `sampler`, each scaled by sqrt(N/c).
template <BlockView B>
Mat<typename B::value_type> sample_columns(const B& A, std::span<const std::size_t> cols) {
    using T = typename B::value_type;
    const auto M = A.rows();
    const auto c = cols.size();
    if (c == 0)
        throw ConfigError("sample_columns needs c >= 1");
    const double scale = std::sqrt(static_cast<double>(A.cols()) / static_cast<double>(c));
    Mat<T> C(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(c));
    for (std::size_t t = 0; t < c; ++t)
        for (std::size_t i = 0; i < M; ++i)
            C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = A.entry(i, cols[t]) * scale;
    return C;
}

template <BlockView B>
Mat<typename B::value_type> sample_columns(const B& A, std::size_t c, RandomStream& rng) {
    if (c == 0)
        throw ConfigError("sample_columns needs c >= 1");
    const auto idx = uniform_sampler(A.cols(), rng)(c);
    return sample_columns(A, std::span<const std::size_t>(idx));
}

// Step 2: r rows of C, each scaled by sqrt(M/r).
template <KernelScalar T>
Mat<T> sample_rows(const Mat<T>& C, std::span<const std::size_t> rows) {
    const auto r = rows.size();
    if (r == 0)
        throw ConfigError("sample_rows needs r >= 1");
    const double scale = std::sqrt(static_cast<double>(C.rows()) / static_cast<double>(r));
    Mat<T> Cr(static_cast<Eigen::Index>(r), C.cols());
    for (std::size_t t = 0; t < r; ++t)
        Cr.row(static_cast<Eigen::Index>(t)) = C.row(static_cast<Eigen::Index>(rows[t])) * scale;
    return Cr;
}

template <KernelScalar T>
Mat<T> sample_rows(const Mat<T>& C, std::size_t r, RandomStream& rng) {
    if (r == 0)
        throw ConfigError("sample_rows needs r >= 1");
    const auto idx = uniform_sampler(static_cast<std::size_t>(C.rows()), rng)(r);
    return sample_rows(C, std::span<const std::size_t>(idx));
}

// Full SVD of the sampled core, sigma descending. Each left singular vector is
// rotated so its first non-negligible component is real and non-negative.
template <KernelScalar T>
SvdResult<T> svd_small(const Mat<T>& Cr, std::size_t cap = kDefaultSvdCap) {
    if (static_cast<std::size_t>(Cr.rows()) > cap || static_cast<std::size_t>(Cr.cols()) > cap)
        throw ConfigError("svd_small: matrix exceeds the small-matrix cap");
    if (!Cr.allFinite())
        throw NumericalError("svd_small: non-finite input");
    Eigen::BDCSVD<Mat<T>> svd(Cr, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success)
        throw NumericalError("svd_small: SVD did not converge");
    SvdResult<T> out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
    const auto k = std::min(out.U.cols(), out.V.cols());
    for (Eigen::Index j = 0; j < k; ++j) {
        const double tiny = 1e-14 * out.U.col(j).norm();
        for (Eigen::Index i = 0; i < out.U.rows(); ++i) {
            const T lead = out.U(i, j);
            if (std::abs(lead) > tiny) {
                const T phase = lead / std::abs(lead);
                out.U.col(j) *= conj_of(phase);
                out.V.col(j) *= conj_of(phase);
                break;
            }
        }
    }
    return out;
}

// Number of sigma_j strictly above epsilon, capped at `cap`.
inline std::size_t truncation_rank(std::span<const double> sigma, double epsilon, std::size_t cap) {
    std::size_t l = 0;
    while (l < sigma.size() && l < cap && sigma[l] > epsilon)
        ++l;
    return l;
}

// Thin Householder QR with diag(R) real and non-negative. Columns whose R
// diagonal falls below 1e-12 of the largest one do not count towards `rank`.
template <KernelScalar T>
QrResult<T> orthonormalize(const Mat<T>& B) {
    const auto n = B.rows();
    const auto l = B.cols();
    if (l > n)
        throw ConfigError("orthonormalize needs l <= n");
    QrResult<T> out;
    if (l == 0) {
        out.Q = Mat<T>(n, 0);
        out.R = Mat<T>(0, 0);
        return out;
    }
    Eigen::HouseholderQR<Mat<T>> qr(B);
    out.Q = Mat<T>::Identity(n, l);
    out.Q.applyOnTheLeft(qr.householderQ());
    out.R = qr.matrixQR().topRows(l).template triangularView<Eigen::Upper>();
    double largest = 0.0;
    for (Eigen::Index k = 0; k < l; ++k) {
        const T d = out.R(k, k);
        const double mag = std::abs(d);
        if (mag > 0.0) {
            const T phase = d / mag;
            out.Q.col(k) *= phase;
            out.R.row(k) *= conj_of(phase);
        }
        largest = std::max(largest, mag);
    }
    for (Eigen::Index k = 0; k < l; ++k)
        if (std::abs(out.R(k, k)) > 1e-12 * largest)
            ++out.rank;
    return out;
}

// Step 6: Monte-Carlo estimate of A^* U from the sampled rows of A,
// sum_t conj(A_(i_t))^T U_(i_t) * M/c (uniform probabilities 1/M).
template <BlockView B>
Mat<typename B::value_type> mc_matmul(const B& A, const Mat<typename B::value_type>& U,
                                      std::span<const std::size_t> rows) {
    using T = typename B::value_type;
    const auto M = A.rows();
    const auto N = A.cols();
    const auto c = rows.size();
    if (c == 0)
        throw ConfigError("mc_matmul needs c >= 1");
    if (static_cast<std::size_t>(U.rows()) != M)
        throw ConfigError("mc_matmul: U row count differs from the block");
    const double scale = static_cast<double>(M) / static_cast<double>(c);
    Mat<T> Arows(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(N));
    Mat<T> Urows(static_cast<Eigen::Index>(c), U.cols());
    for (std::size_t t = 0; t < c; ++t) {
        const auto i = rows[t];
        const auto ti = static_cast<Eigen::Index>(t);
        for (std::size_t j = 0; j < N; ++j)
            Arows(ti, static_cast<Eigen::Index>(j)) = A.entry(i, j);
        Urows.row(ti) = U.row(static_cast<Eigen::Index>(i)) * scale;
    }
    return Arows.adjoint() * Urows;
}

template <BlockView B>
Mat<typename B::value_type> mc_matmul(const B& A, const Mat<typename B::value_type>& U, std::size_t c,
                                      RandomStream& rng) {
    if (c == 0)
        throw ConfigError("mc_matmul needs c >= 1");
    const auto idx = uniform_sampler(A.rows(), rng)(c);
    return mc_matmul(A, U, std::span<const std::size_t>(idx));
}

template <KernelScalar T>
CompressedBlock<T> zero_block(std::size_t rows, std::size_t cols, ApplyForm form) {
    CompressedBlock<T> out;
    out.U = Mat<T>(static_cast<Eigen::Index>(rows), 0);
    out.V = Mat<T>(static_cast<Eigen::Index>(cols), 0);
    out.R = Mat<T>(0, 0);
    out.sigma = RealVec(0);
    out.form = form;
    out.rows = rows;
    out.cols = cols;
    return out;
}

// The full compression pipeline for one block.
template <BlockView B>
CompressedBlock<typename B::value_type> compress_block(const B& A, const SampleBudget& budget,
                                                       const BlockSamplers& samplers,
                                                       ApplyForm form = ApplyForm::Singular,
                                                       std::size_t svd_cap = kDefaultSvdCap) {
    using T = typename B::value_type;
    const auto M = A.rows();
    const auto N = A.cols();
    if (budget.c == 0 || budget.r == 0)
        throw ConfigError("compress_block needs c, r >= 1");
    if (!(budget.epsilon > 0.0))
        throw ConfigError("compress_block needs epsilon > 0");

    const auto col_idx = samplers.columns(budget.c);
    const Mat<T> C = sample_columns(A, std::span<const std::size_t>(col_idx));
    const auto row_idx = samplers.rows(budget.r);
    const Mat<T> Cr = sample_rows(C, std::span<const std::size_t>(row_idx));
    const auto svd = svd_small(Cr, svd_cap);

    const auto cap = std::min(budget.r, budget.c);
    const std::size_t l = truncation_rank(std::span<const double>(svd.sigma.data(), svd.sigma.size()),
                                          budget.epsilon, cap);
    if (l == 0)
        return zero_block<T>(M, N, form);

    const auto li = static_cast<Eigen::Index>(l);
    const Mat<T> candidates = C * svd.V.leftCols(li);
    auto basis = orthonormalize(candidates);

    // Columns of C V_r that collapsed numerically carry no direction; drop them
    // together with their singular values.
    std::vector<Eigen::Index> keep;
    double largest = 0.0;
    for (Eigen::Index k = 0; k < li; ++k)
        largest = std::max(largest, std::abs(basis.R(k, k)));
    for (Eigen::Index k = 0; k < li; ++k)
        if (std::abs(basis.R(k, k)) > 1e-12 * largest)
            keep.push_back(k);
    if (keep.empty())
        return zero_block<T>(M, N, form);

    CompressedBlock<T> out;
    out.form = form;
    out.rows = M;
    out.cols = N;
    const auto kept = static_cast<Eigen::Index>(keep.size());
    out.U.resize(static_cast<Eigen::Index>(M), kept);
    out.sigma.resize(kept);
    for (Eigen::Index k = 0; k < kept; ++k) {
        out.U.col(k) = basis.Q.col(keep[static_cast<std::size_t>(k)]);
        out.sigma(k) = svd.sigma(keep[static_cast<std::size_t>(k)]);
    }

    const auto prod_idx = samplers.products(budget.c);
    const Mat<T> Vraw = mc_matmul(A, out.U, std::span<const std::size_t>(prod_idx));
    if (kept <= static_cast<Eigen::Index>(N)) {
        auto vq = orthonormalize(Vraw);
        double top = 0.0;
        for (Eigen::Index k = 0; k < kept; ++k)
            top = std::max(top, std::abs(vq.R(k, k)));
        // A direction the Monte-Carlo product did not resolve has no partner in V.
        for (Eigen::Index k = 0; k < kept; ++k)
            if (!(std::abs(vq.R(k, k)) > 1e-12 * top))
                out.sigma(k) = 0.0;
        out.V = std::move(vq.Q);
        out.R = std::move(vq.R);
    } else {
        // Fewer columns than the retained rank: keep the raw estimate only.
        out.V = Vraw;
        out.R = Mat<T>::Identity(kept, kept);
    }
    return out;
}

template <BlockView B>
CompressedBlock<typename B::value_type> compress_block(const B& A, const SampleBudget& budget, RandomStream& rng,
                                                       ApplyForm form = ApplyForm::Singular) {
    return compress_block(A, budget, uniform_samplers(A.rows(), A.cols(), rng), form);
}

// y = U diag(sigma) V^* x (singular form) or y = U (V_raw^* x) (projector form).
template <KernelScalar T>
Vec<T> apply_compressed(const CompressedBlock<T>& block, const Eigen::Ref<const Vec<T>>& x) {
    if (static_cast<std::size_t>(x.size()) != block.cols)
        throw ConfigError("apply_compressed: dimension mismatch");
    if (block.rank() == 0)
        return Vec<T>::Zero(static_cast<Eigen::Index>(block.rows));
    Vec<T> coeff = block.V.adjoint() * x;
    if (block.form == ApplyForm::Singular)
        coeff = (block.sigma.template cast<T>().array() * coeff.array()).matrix();
    else
        coeff = block.R.adjoint() * coeff;
    return block.U * coeff;
}

} // namespace hrcm
