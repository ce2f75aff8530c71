#include "hrcm/analysis.hpp"

#include <cmath>

namespace hrcm {

double beta_ratio(const Kernel& kernel, const SeparatedPairGeometry& geom) {
    if (!(geom.a > 0.0) || !(geom.delta > geom.a))
        throw DomainError("beta_ratio needs delta > a > 0");
    const double near = kernel.radial_modulus(geom.delta - geom.a);
    const double far = kernel.radial_modulus(geom.delta + geom.a);
    if (!(near > 0.0))
        throw DomainError("beta_ratio: kernel vanishes at the near separation");
    return (far * far) / (near * near);
}

double lowrank_error_bound(const SeparatedPairGeometry& geom, double tau, double k, double modulus_far, std::size_t M,
                       std::size_t N, std::size_t c) {
    if (!(geom.delta > 0.0) || !(modulus_far > 0.0) || M == 0 || N == 0 || c == 0)
        throw ConfigError("lowrank_error_bound needs positive inputs");
    if (!(geom.eta > 0.0) || !(geom.eta < 2.0))
        throw ConfigError("lowrank_error_bound needs 0 < eta < 2");
    const double front = std::pow(geom.delta / 2.0, -tau) * (1.0 + 2.0 * k * geom.delta) / modulus_far;
    const double size = std::sqrt(static_cast<double>(M) / static_cast<double>(N));
    return front * size / std::sqrt(static_cast<double>(c)) * 2.0 * geom.eta / (2.0 - geom.eta);
}

double lowrank_error_bound(const Kernel& kernel, const SeparatedPairGeometry& geom, std::size_t M, std::size_t N,
                       std::size_t c) {
    return lowrank_error_bound(geom, kernel.tau(), kernel.kparam(), kernel.radial_modulus(geom.delta + geom.a), M, N,
                           c);
}

namespace {

template <typename T>
double rel_err(std::span<const T> ref, std::span<const T> approx) {
    if (ref.size() != approx.size())
        throw ConfigError("relative_error: length mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        num += std::norm(approx[i] - ref[i]);
        den += std::norm(ref[i]);
    }
    if (!(den > 0.0))
        throw DomainError("relative_error: zero reference");
    return std::sqrt(num / den);
}

template <typename T>
ErrorStats stats_of(std::span<const T> ref, const std::vector<std::vector<T>>& runs) {
    if (runs.empty())
        throw ConfigError("error_stats needs at least one realization");
    std::vector<double> errors;
    errors.reserve(runs.size());
    for (const auto& run : runs)
        errors.push_back(rel_err<T>(ref, run));
    return summarize_errors(std::move(errors));
}

} // namespace

double relative_error(std::span<const double> reference, std::span<const double> approx) {
    return rel_err(reference, approx);
}
double relative_error(std::span<const cplx> reference, std::span<const cplx> approx) {
    return rel_err(reference, approx);
}

ErrorStats error_stats(std::span<const double> reference, const std::vector<std::vector<double>>& realizations) {
    return stats_of(reference, realizations);
}
ErrorStats error_stats(std::span<const cplx> reference, const std::vector<std::vector<cplx>>& realizations) {
    return stats_of(reference, realizations);
}

ErrorStats summarize_errors(std::vector<double> errors) {
    if (errors.empty())
        throw ConfigError("error statistics need at least one realization");
    ErrorStats out;
    out.realizations = errors.size();
    double sum = 0.0;
    for (double e : errors)
        sum += e;
    out.mean = sum / static_cast<double>(errors.size());
    if (errors.size() > 1) {
        double ss = 0.0;
        for (double e : errors)
            ss += (e - out.mean) * (e - out.mean);
        out.variance = ss / static_cast<double>(errors.size() - 1);
    }
    out.errors = std::move(errors);
    return out;
}

} // namespace hrcm
