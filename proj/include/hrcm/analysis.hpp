#pragma once
//
// Sampling-theory helpers: optimal column probabilities, the Gram-error
// identity, the near-optimality ratio beta for separated boxes, the a priori
// block error bound, and error statistics over realizations.
//

#include <cstddef>
#include <span>
#include <vector>

#include "hrcm/compress.hpp"
#include "hrcm/kernels.hpp"
#include "hrcm/random.hpp"

namespace hrcm {

// Target/source boxes of common diameter a whose centers are delta apart; eta = a / delta.
struct SeparatedPairGeometry {
    double a = 0.0;
    double delta = 0.0;
    double eta = 0.0;

    static SeparatedPairGeometry from(double a, double delta) { return {a, delta, a / delta}; }
};

struct ErrorStats {
    double mean = 0.0;
    double variance = 0.0; // unbiased (n - 1)
    std::size_t realizations = 0;
    std::vector<double> errors;
};

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t trials = 0;
};

// p_j = |A^(j)|^2 / ||A||_F^2. Throws DomainError for a zero matrix.
template <KernelScalar T>
std::vector<double> optimal_probabilities(const Mat<T>& A) {
    const double total = A.squaredNorm();
    if (!(total > 0.0))
        throw DomainError("optimal_probabilities: zero matrix");
    std::vector<double> p(static_cast<std::size_t>(A.cols()));
    for (Eigen::Index j = 0; j < A.cols(); ++j)
        p[static_cast<std::size_t>(j)] = A.col(j).squaredNorm() / total;
    return p;
}

// (1/c)(||A||_F^4 - ||AA*||_F^2): expected squared Gram error under optimal probabilities.
template <KernelScalar T>
double gram_error_expectation(const Mat<T>& A, std::size_t c) {
    if (c == 0)
        throw ConfigError("gram_error_expectation needs c >= 1");
    const double f2 = A.squaredNorm();
    const double g2 = (A * A.adjoint()).squaredNorm();
    return (f2 * f2 - g2) / static_cast<double>(c);
}

// (1/(beta c))||A||_F^4 - (1/c)||AA*||_F^2: the bound for nearly optimal probabilities.
template <KernelScalar T>
double gram_error_bound(const Mat<T>& A, std::size_t c, double beta) {
    if (c == 0 || !(beta > 0.0))
        throw ConfigError("gram_error_bound needs c >= 1 and beta > 0");
    const double f2 = A.squaredNorm();
    const double g2 = (A * A.adjoint()).squaredNorm();
    return f2 * f2 / (beta * static_cast<double>(c)) - g2 / static_cast<double>(c);
}

// Mean of ||AA* - CC*||_F^2 over `trials` sketches with columns drawn from
// `probs` and scaled by 1/sqrt(c p_j).
template <KernelScalar T>
MonteCarloEstimate empirical_gram_error(const Mat<T>& A, std::size_t c, std::span<const double> probs,
                                        std::size_t trials, RandomStream& rng) {
    if (c == 0 || trials == 0)
        throw ConfigError("empirical_gram_error needs c, trials >= 1");
    if (probs.size() != static_cast<std::size_t>(A.cols()))
        throw ConfigError("empirical_gram_error: one probability per column");
    std::vector<double> cdf(probs.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        if (probs[j] < 0.0)
            throw ConfigError("empirical_gram_error: negative probability");
        acc += probs[j];
        cdf[j] = acc;
    }
    if (!(acc > 0.0))
        throw ConfigError("empirical_gram_error: probabilities sum to zero");
    const Mat<T> G = A * A.adjoint();
    Mat<T> C(A.rows(), static_cast<Eigen::Index>(c));
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        for (std::size_t t = 0; t < c; ++t) {
            const double u = rng.uniform01() * acc;
            auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
            auto j = static_cast<std::size_t>(it - cdf.begin());
            if (j >= cdf.size())
                j = cdf.size() - 1;
            while (probs[j] == 0.0 && j > 0)
                --j;
            const double pj = probs[j] / acc;
            C.col(static_cast<Eigen::Index>(t)) =
                A.col(static_cast<Eigen::Index>(j)) / std::sqrt(static_cast<double>(c) * pj);
        }
        const double e = (G - C * C.adjoint()).squaredNorm();
        sum += e;
        sum_sq += e * e;
    }
    MonteCarloEstimate out;
    out.trials = trials;
    out.mean = sum / static_cast<double>(trials);
    if (trials > 1) {
        const double var = std::max(0.0, (sum_sq - sum * out.mean) / static_cast<double>(trials - 1));
        out.std_error = std::sqrt(var / static_cast<double>(trials));
    }
    return out;
}

// |K(delta + a)|^2 / |K(delta - a)|^2 on the radial profile. Throws DomainError
// unless delta > a > 0 and the kernel is radial.
double beta_ratio(const Kernel& kernel, const SeparatedPairGeometry& geom);

// Coefficient of ||A||_F^2 in the a priori bound
// (delta/2)^-tau (1 + 2 k delta) / |K(delta + a)| * sqrt(M/N) / sqrt(c) * 2 eta / (2 - eta).
double lowrank_error_bound(const SeparatedPairGeometry& geom, double tau, double k, double modulus_far, std::size_t M,
                       std::size_t N, std::size_t c);
double lowrank_error_bound(const Kernel& kernel, const SeparatedPairGeometry& geom, std::size_t M, std::size_t N,
                       std::size_t c);

double relative_error(std::span<const double> reference, std::span<const double> approx);
double relative_error(std::span<const cplx> reference, std::span<const cplx> approx);

// Per-realization relative 2-norm errors, their mean and unbiased variance.
ErrorStats error_stats(std::span<const double> reference, const std::vector<std::vector<double>>& realizations);
ErrorStats error_stats(std::span<const cplx> reference, const std::vector<std::vector<cplx>>& realizations);
ErrorStats summarize_errors(std::vector<double> errors);

} // namespace hrcm
