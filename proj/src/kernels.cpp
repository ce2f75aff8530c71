#include "hrcm/kernels.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace hrcm {

namespace {

double parse_number(std::string_view text, std::string_view spec) {
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || !std::isfinite(value))
        throw ConfigError("bad kernel parameter in '" + std::string(spec) + "'");
    return value;
}

void require_separated(double R) {
    if (!(R > 0.0))
        throw DomainError("singular kernel evaluated at coincident points");
}

} // namespace

Kernel Kernel::log2d() { return Kernel(KernelKind::Log2DImage, 0.0, 0.0, 0.0); }

Kernel Kernel::screened(double gamma) {
    if (!(gamma >= 0.0))
        throw ConfigError("screened kernel needs gamma >= 0");
    return Kernel(KernelKind::ScreenedCoulomb, gamma, 1.0, 0.0);
}

Kernel Kernel::helmholtz(double wave_number) {
    if (!(wave_number >= 0.0))
        throw ConfigError("helmholtz kernel needs k >= 0");
    return Kernel(KernelKind::Helmholtz, wave_number, 1.0, wave_number);
}

Kernel Kernel::constant(double value) { return Kernel(KernelKind::Constant, value, 0.0, 0.0); }

Kernel Kernel::parse(std::string_view spec) {
    const auto colon = spec.find(':');
    const auto head = spec.substr(0, colon);
    const auto tail = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
    if (head == "log2d" && colon == std::string_view::npos)
        return log2d();
    if (colon != std::string_view::npos) {
        if (head == "screened")
            return screened(parse_number(tail, spec));
        if (head == "helmholtz")
            return helmholtz(parse_number(tail, spec));
        if (head == "constant")
            return constant(parse_number(tail, spec));
    }
    throw ConfigError("unknown kernel '" + std::string(spec) +
                      "' (expected log2d, screened:GAMMA or helmholtz:K)");
}

std::string Kernel::name() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind_) {
    case KernelKind::Log2DImage: return "log2d";
    case KernelKind::ScreenedCoulomb: os << "screened:" << param_; break;
    case KernelKind::Helmholtz: os << "helmholtz:" << param_; break;
    case KernelKind::Constant: os << "constant:" << param_; break;
    }
    return os.str();
}

cplx Kernel::eval(const Point2D& r, const Point2D& rp) const {
    if (kind_ == KernelKind::Helmholtz) {
        const double R = distance(r, rp);
        require_separated(R);
        const double phase = -param_ * R;
        return cplx(std::cos(phase), std::sin(phase)) / R;
    }
    return eval_real(r, rp);
}

double Kernel::eval_real(const Point2D& r, const Point2D& rp) const {
    switch (kind_) {
    case KernelKind::ScreenedCoulomb: {
        const double R = distance(r, rp);
        require_separated(R);
        return std::exp(-param_ * R) / R;
    }
    case KernelKind::Log2DImage: {
        const double dx = r.x - rp.x;
        const double dminus = r.y - rp.y;
        const double dplus = r.y + rp.y;
        const double direct2 = dx * dx + dminus * dminus;
        require_separated(direct2);
        return 0.5 * (std::log(dx * dx + dplus * dplus) - std::log(direct2));
    }
    case KernelKind::Constant: return param_;
    case KernelKind::Helmholtz: break;
    }
    throw DomainError("complex kernel evaluated as real");
}

double Kernel::radial_modulus(double R) const {
    switch (kind_) {
    case KernelKind::ScreenedCoulomb: require_separated(R); return std::exp(-param_ * R) / R;
    case KernelKind::Helmholtz: require_separated(R); return 1.0 / R;
    case KernelKind::Constant: return std::abs(param_);
    case KernelKind::Log2DImage: break;
    }
    throw DomainError("log2d image kernel has no radial profile");
}

long long rank_estimate(int m, int d) {
    if (m < 1 || d < 1)
        throw DomainError("rank_estimate needs m >= 1 and d >= 1");
    // C(d-1+p, p) built incrementally: C(d-1+p, p) = C(d-2+p, p-1) * (d-1+p) / p.
    long long total = 0;
    long long term = 1;
    for (int p = 0; p < m; ++p) {
        if (p > 0)
            term = term * (d - 1 + p) / p;
        total += term;
    }
    return total;
}

} // namespace hrcm
