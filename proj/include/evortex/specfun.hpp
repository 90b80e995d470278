#pragma once
/// \file specfun.hpp
/// \brief Integer-order Bessel functions, hydrogenic radial functions,
/// spherical harmonics and complete elliptic integrals.
///
/// Atomic units throughout. Spherical harmonics carry the Condon-Shortley
/// phase.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace evortex {

using cplx = std::complex<double>;

namespace sf {

inline constexpr int max_bessel_order = 200;
inline constexpr int max_principal = 20;

namespace detail {

inline double bessel_series(int n, double x)
{
    // J_n(x) = sum_k (-1)^k (x/2)^(2k+n) / (k! (k+n)!)
    const double half = 0.5 * x;
    double term = std::exp(n * std::log(half) - std::lgamma(n + 1.0));
    if (term == 0.0) return 0.0;
    const double q = half * half;
    double sum = term;
    for (int k = 0; k < 500; ++k) {
        term *= -q / ((k + 1.0) * (k + 1.0 + n));
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
}

/// Miller's downward recurrence normalised by 1 = J_0 + 2 sum_k J_{2k}.
inline double bessel_miller(int n, double x)
{
    const double top = std::max<double>(n, x);
    int start = static_cast<int>(top) + 30 + static_cast<int>(std::sqrt(40.0 * top));
    start += start & 1;
    const double big = 1e250;
    double jp = 0.0;  // J_{k+1}
    double jk = 1e-300;
    double result = 0.0;
    double norm = 0.0;
    for (int k = start; k > 0; --k) {
        const double jm = (2.0 * k / x) * jk - jp;  // J_{k-1}
        jp = jk;
        jk = jm;
        if (k - 1 == n) result = jk;
        if ((k - 1) % 2 == 0 && k - 1 > 0) norm += 2.0 * jk;
        if (std::abs(jk) > big) {
            jk /= big;
            jp /= big;
            result /= big;
            norm /= big;
        }
    }
    norm += jk;
    return result / norm;
}

} // namespace detail

/// Cylindrical Bessel function of the first kind, integer order.
inline double bessel_j(int order, double x)
{
    if (!std::isfinite(x)) throw std::invalid_argument("bessel_j: non-finite argument");
    if (std::abs(order) > max_bessel_order)
        throw std::invalid_argument("bessel_j: |order| exceeds " + std::to_string(max_bessel_order));
    const int n = std::abs(order);
    double sign = (order < 0 && (n & 1)) ? -1.0 : 1.0;
    if (x < 0.0) {
        if (n & 1) sign = -sign;
        x = -x;
    }
    if (x == 0.0) return n == 0 ? sign : 0.0;
    if (x <= 2.0 || 0.25 * x * x <= n + 1.0) return sign * detail::bessel_series(n, x);
    return sign * detail::bessel_miller(n, x);
}

struct RadialQuantumNumbers {
    int n = 1;
    int ell = 0;
    double bohr = 1.0;

    void validate() const
    {
        if (n < 1 || n > max_principal)
            throw std::invalid_argument("radial quantum numbers: n must lie in [1, " + std::to_string(max_principal) + "]");
        if (ell < 0 || ell >= n) throw std::invalid_argument("radial quantum numbers: require 0 <= ell < n");
        if (!(bohr > 0.0)) throw std::invalid_argument("radial quantum numbers: bohr must be > 0");
    }
};

/// Generalised Laguerre polynomial L_k^{(alpha)}(x) by three-term recurrence.
inline double assoc_laguerre(int k, double alpha, double x)
{
    if (k == 0) return 1.0;
    double lm = 1.0;
    double l = 1.0 + alpha - x;
    for (int j = 1; j < k; ++j) {
        const double lp = ((2.0 * j + 1.0 + alpha - x) * l - (j + alpha) * lm) / (j + 1.0);
        lm = l;
        l = lp;
    }
    return l;
}

/// Normalised hydrogenic radial function R_{n,ell}(r), with int R^2 r^2 dr = 1.
inline double hydrogenic_radial(const RadialQuantumNumbers& q, double r)
{
    q.validate();
    if (!(r >= 0.0)) throw std::invalid_argument("hydrogenic_radial: r must be >= 0");
    const double scale = 2.0 / (q.n * q.bohr);
    const double x = scale * r;
    const double log_norm = 1.5 * std::log(scale) +
                            0.5 * (std::lgamma(q.n - q.ell + 0.0) - std::log(2.0 * q.n) - std::lgamma(q.n + q.ell + 1.0));
    const double poly = assoc_laguerre(q.n - q.ell - 1, 2.0 * q.ell + 1.0, x);
    const double power = q.ell == 0 ? 1.0 : std::pow(x, q.ell);
    return std::exp(log_norm - 0.5 * x) * power * poly;
}

/// theta-dependent factor of Y_ell^m from x = cos(theta), s = sin(theta) >= 0.
inline double spherical_harmonic_theta(int ell, int m, double x, double s)
{
    if (ell < 0 || std::abs(m) > ell)
        throw std::invalid_argument("spherical_harmonic: require |m| <= ell");
    const int am = std::abs(m);
    double pmm = 1.0 / std::sqrt(4.0 * std::numbers::pi);
    for (int i = 1; i <= am; ++i) pmm *= -std::sqrt((2.0 * i + 1.0) / (2.0 * i)) * s;
    double value = pmm;
    if (ell > am) {
        double pm1 = x * std::sqrt(2.0 * am + 3.0) * pmm;
        double pm2 = pmm;
        for (int l = am + 2; l <= ell; ++l) {
            const double a = std::sqrt((4.0 * l * l - 1.0) / (double(l) * l - double(am) * am));
            const double b = std::sqrt((double(l - 1) * (l - 1) - double(am) * am) / (4.0 * (l - 1) * (l - 1) - 1.0));
            const double p = a * (x * pm1 - b * pm2);
            pm2 = pm1;
            pm1 = p;
        }
        value = pm1;
    }
    if (m < 0 && (am & 1)) value = -value;
    return value;
}

/// theta-dependent factor of Y_ell^m, i.e. Y_ell^m(theta, 0).
inline double spherical_harmonic_theta(int ell, int m, double theta)
{
    return spherical_harmonic_theta(ell, m, std::cos(theta), std::sin(theta));
}

/// Orthonormal spherical harmonic Y_ell^m(theta, phi), Condon-Shortley phase.
inline cplx spherical_harmonic(int ell, int m, double theta, double phi)
{
    return spherical_harmonic_theta(ell, m, theta) * std::polar(1.0, m * phi);
}

struct EllipticKE {
    double K;
    double E;
};

/// Complete elliptic integrals K(k), E(k) of modulus k (parameter k^2) by AGM.
inline EllipticKE elliptic_ek(double modulus)
{
    if (!(modulus >= 0.0) || !(modulus < 1.0))
        throw std::invalid_argument("elliptic_ek: modulus must lie in [0, 1)");
    double a = 1.0;
    double b = std::sqrt((1.0 - modulus) * (1.0 + modulus));
    double c = modulus;
    double weight = 0.5;
    double sum = weight * c * c;
    // c_{n+1} = c_n^2 / (4 a_{n+1}) instead of (a_n - b_n) / 2: the difference
    // stalls at one ulp while the weight keeps doubling.
    for (int it = 0; it < 64 && c > 1e-17 * a; ++it) {
        const double an = 0.5 * (a + b);
        c = c * c / (4.0 * an);
        b = std::sqrt(a * b);
        a = an;
        weight *= 2.0;
        sum += weight * c * c;
    }
    const double K = std::numbers::pi / (2.0 * a);
    return {K, K * (1.0 - sum)};
}

} // namespace sf
} // namespace evortex
