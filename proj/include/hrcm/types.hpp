#pragma once
//
// Shared scalar and point types.
//

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace hrcm {

using cplx = std::complex<double>;

struct Point2D {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(const Point2D& a, const Point2D& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

template <typename T>
struct is_complex : std::false_type {};
template <typename R>
struct is_complex<std::complex<R>> : std::true_type {};
template <typename T>
inline constexpr bool is_complex_v = is_complex<T>::value;

// Entry scalar of a kernel matrix: real or complex double.
template <typename T>
concept KernelScalar = std::is_same_v<T, double> || std::is_same_v<T, cplx>;

template <KernelScalar T>
inline T conj_of(const T& v) {
    if constexpr (is_complex_v<T>)
        return std::conj(v);
    else
        return v;
}

// Error categories. Each maps onto one failure class of the public API.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hrcm
