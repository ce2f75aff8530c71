#pragma once
//
// Interaction kernels K(r, r') and their smoothness metadata.
//

#include <string>
#include <string_view>

#include "hrcm/types.hpp"

namespace hrcm {

enum class KernelKind {
    Log2DImage,      // log|r - r'*| - log|r - r'| with r'* the mirror image about y = 0
    ScreenedCoulomb, // exp(-gamma R) / R
    Helmholtz,       // exp(-i k R) / R
    Constant,        // K == value; rank-1 test stub, not selectable from the CLI
};

class Kernel {
public:
    static Kernel log2d();
    static Kernel screened(double gamma);
    static Kernel helmholtz(double wave_number);
    static Kernel constant(double value);

    // Accepts "log2d", "screened:GAMMA", "helmholtz:K" and "constant:V".
    static Kernel parse(std::string_view spec);

    KernelKind kind() const { return kind_; }
    // Decay rate (screened), wave number (helmholtz) or value (constant).
    double parameter() const { return param_; }
    // Algebraic decay exponent tau of the asymptotic-smoothness bound.
    double tau() const { return tau_; }
    // Oscillation parameter k of the asymptotic-smoothness bound.
    double kparam() const { return kparam_; }
    bool is_complex() const { return kind_ == KernelKind::Helmholtz; }
    bool is_singular() const { return kind_ != KernelKind::Constant; }
    bool is_radial() const { return kind_ != KernelKind::Log2DImage; }
    std::string name() const;

    // K(r, rp). Throws DomainError when a singular kernel sees coincident points.
    cplx eval(const Point2D& r, const Point2D& rp) const;

    // Real-valued evaluation; throws DomainError for complex kernels.
    double eval_real(const Point2D& r, const Point2D& rp) const;

    template <KernelScalar T>
    T eval_as(const Point2D& r, const Point2D& rp) const {
        if constexpr (is_complex_v<T>)
            return eval(r, rp);
        else
            return eval_real(r, rp);
    }

    // |K| as a function of separation R for radial kernels.
    double radial_modulus(double R) const;

private:
    Kernel(KernelKind kind, double param, double tau, double kparam)
        : kind_(kind), param_(param), tau_(tau), kparam_(kparam) {}

    KernelKind kind_;
    double param_;
    double tau_;
    double kparam_;
};

// Number of monomials of degree < m in d variables: sum_p C(d-1+p, p).
long long rank_estimate(int m, int d);

} // namespace hrcm
