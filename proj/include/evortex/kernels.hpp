#pragma once
/// \file kernels.hpp
/// \brief Beam-atom interaction kernels (atomic units, e_0^2 = 1).
///
/// Geometry: the beam point r is cylindrical about the beam axis, the center
/// of mass R is cylindrical in the same frame, and the internal electron
/// coordinate q is spherical about R with its polar axis along the beam.

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "evortex/quadrature.hpp"
#include "evortex/specfun.hpp"
#include "evortex/states.hpp"

namespace evortex {

/// Raised when a kernel is evaluated within the core radius of a charge.
class SingularPoint : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when F <= G makes the azimuthal integrand singular.
class NearSingularGeometry : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class KernelKind { exact_coulomb, dipole };

inline const char* to_string(KernelKind k) { return k == KernelKind::dipole ? "dipole" : "exact_coulomb"; }

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
};

inline Vec3 to_cartesian(const Cylindrical& c) { return {c.rho * std::cos(c.phi), c.rho * std::sin(c.phi), c.z}; }
inline Vec3 to_cartesian(const Spherical& s)
{
    const double st = std::sin(s.theta);
    return {s.r * st * std::cos(s.phi), s.r * st * std::sin(s.phi), s.r * std::cos(s.theta)};
}

inline constexpr double default_core_radius = 1e-3;

/// 1/|r - q_e| - 1/|r - R| with q_e = R + q.
inline double coulomb_kernel(const Cylindrical& beam_pt, const Cylindrical& cm_pt, const Spherical& internal_pt,
                             double core_radius = default_core_radius)
{
    const Vec3 r = to_cartesian(beam_pt);
    const Vec3 R = to_cartesian(cm_pt);
    const Vec3 qe = R + to_cartesian(internal_pt);
    const double d_e = (r - qe).norm();
    const double d_n = (r - R).norm();
    if (d_e < core_radius) throw SingularPoint("coulomb_kernel: beam point within core radius of the electron");
    if (d_n < core_radius) throw SingularPoint("coulomb_kernel: beam point within core radius of the nucleus");
    return 1.0 / d_e - 1.0 / d_n;
}

/// q . (r - R) / |r - R|^3.
inline double dipole_kernel(const Cylindrical& beam_pt, const Cylindrical& cm_pt, const Spherical& internal_pt,
                            double core_radius = default_core_radius)
{
    const Vec3 d = to_cartesian(beam_pt) - to_cartesian(cm_pt);
    const double dn = d.norm();
    if (dn <= core_radius) throw SingularPoint("dipole_kernel: beam point within core radius of the center of mass");
    return to_cartesian(internal_pt).dot(d) / (dn * dn * dn);
}

/// Factors of the dipole kernel that do not depend on the magnitude q.
struct GeometricFactors {
    double chi_r = 0.0;  // rho sin(theta)
    double chi_R = 0.0;  // R sin(theta)
    double eta = 0.0;    // (z - Z) cos(theta)
    double F = 0.0;      // rho^2 + R^2 + (z - Z)^2
    double G = 0.0;      // 2 rho R
};

inline GeometricFactors extract_geometric_factors(const Cylindrical& beam_pt, const Cylindrical& cm_pt, double theta)
{
    const double dz = beam_pt.z - cm_pt.z;
    const double st = std::sin(theta);
    return {beam_pt.rho * st, cm_pt.rho * st, dz * std::cos(theta),
            beam_pt.rho * beam_pt.rho + cm_pt.rho * cm_pt.rho + dz * dz, 2.0 * beam_pt.rho * cm_pt.rho};
}

/// [q chi_r cos(phi_e - Phi_r) - q chi_R cos(phi_e - Phi_R) + q eta] / [F - G cos(Phi_r - Phi_R)]^{3/2}
inline double decomposed_dipole_kernel(const Cylindrical& beam_pt, const Cylindrical& cm_pt,
                                       const Spherical& internal_pt, double core_radius = default_core_radius)
{
    const GeometricFactors g = extract_geometric_factors(beam_pt, cm_pt, internal_pt.theta);
    const double denom2 = g.F - g.G * std::cos(beam_pt.phi - cm_pt.phi);
    if (denom2 <= core_radius * core_radius)
        throw SingularPoint("decomposed_dipole_kernel: beam point within core radius of the center of mass");
    const double q = internal_pt.r;
    const double num = q * g.chi_r * std::cos(internal_pt.phi - beam_pt.phi) -
                       q * g.chi_R * std::cos(internal_pt.phi - cm_pt.phi) + q * g.eta;
    return num / (denom2 * std::sqrt(denom2));
}

struct YAlpha {
    double value = 0.0;
    double abs_err = 0.0;
    std::size_t evals = 0;
};

namespace detail {

/// Breakpoints on [0, pi] clustered at the peak of 1/[s^2 + 2G sin^2(y/2)]^{3/2}.
inline std::vector<double> azimuth_breaks(double gap, double G)
{
    std::vector<double> br{0.0};
    double w = std::sqrt(gap / G);
    for (int i = 0; i < 12 && w < std::numbers::pi; ++i, w *= 4.0) br.push_back(w);
    br.push_back(std::numbers::pi);
    return br;
}

} // namespace detail

/// int_0^{2 pi} e^{i n y} / [F - G cos y]^{3/2} dy, which is real and even in n.
inline YAlpha y_alpha(int n_eff, double F, double G, double tol = 1e-12)
{
    if (!(tol > 0.0)) throw std::invalid_argument("y_alpha: tol must be > 0");
    if (!(G >= 0.0) || !(F > G)) throw NearSingularGeometry("y_alpha: require F > G >= 0");
    if (G == 0.0) return {n_eff == 0 ? 2.0 * std::numbers::pi / (F * std::sqrt(F)) : 0.0, 0.0, 0};
    const double gap = F - G;
    auto f = [&](double y) {
        const double s = std::sin(0.5 * y);
        const double d = gap + 2.0 * G * s * s;
        return 2.0 * std::cos(n_eff * y) / (d * std::sqrt(d));
    };
    const auto br = detail::azimuth_breaks(gap, G);
    const auto r = quad::integrate<double>(f, std::span<const double>(br), {1e-300, tol, 2000});
    return {r.value, r.abs_err, r.evals};
}

/// Closed form of y_alpha for |n_eff| <= 2 in complete elliptic integrals.
///
/// For n_eff != 0 the elliptic combination cancels to O(k^{2n}), so below
/// k^2 = 1/2 the same integral is summed as its positive-term series
///   4 (F + G)^{-3/2} (pi/2) sum_{j>=n} (3/2)_j / j! C(2j, j-n) (k^2/4)^j.
inline double y_alpha_elliptic(int n_eff, double F, double G)
{
    if (!(G >= 0.0) || !(F > G)) throw NearSingularGeometry("y_alpha_elliptic: require F > G >= 0");
    const int n = std::abs(n_eff);
    if (n > 2) throw std::invalid_argument("y_alpha_elliptic: |n_eff| <= 2 only");
    if (G == 0.0) return n == 0 ? 2.0 * std::numbers::pi / (F * std::sqrt(F)) : 0.0;
    const double k2 = 2.0 * G / (F + G);
    if (n > 0 && k2 < 0.5) {
        double t = 1.0;
        for (int j = 0; j < n; ++j) t *= (j + 1.5) / (j + 1.0) * 0.25 * k2;
        double sum = 0.0;
        for (int j = n; j < n + 2000 && t > 1e-18 * sum; ++j) {
            sum += t;
            t *= (j + 1.5) / (j + 1.0) * (2.0 * j + 2.0) * (2.0 * j + 1.0) / ((j + 1.0 - n) * (j + 1.0 + n)) * 0.25 * k2;
        }
        return 2.0 * std::numbers::pi * sum / ((F + G) * std::sqrt(F + G));
    }
    const double k = std::sqrt(k2);
    const auto ke = sf::elliptic_ek(k);
    const double sp = std::sqrt(F + G);
    const double y0 = 4.0 * ke.E / ((F - G) * sp);   // int D^{-3/2}
    const double ih = 4.0 * ke.K / sp;               // int D^{-1/2}
    const double imh = 4.0 * sp * ke.E;              // int D^{+1/2}
    if (n == 0) return y0;
    if (n == 1) return (F * y0 - ih) / G;
    return 2.0 * (F * F * y0 - 2.0 * F * ih + imh) / (G * G) - y0;
}

/// Azimuthally reduced dipole couplings at one (rho, z) cell point.
///
/// With n0 = l - l' the beam-point azimuth integral
///   int dPhi_r e^{i n0 Phi_r} C(Phi_r) / D^{3/2}
/// for the three pieces of the dipole kernel, evaluated at Phi_R = 0, is
///   raise: (rho Y_{n0-1} - R Y_{n0}) / 2   (coefficient of q sin(theta) e^{+i phi_e})
///   lower: (rho Y_{n0+1} - R Y_{n0}) / 2   (coefficient of q sin(theta) e^{-i phi_e})
///   axial: (z - Z) Y_{n0}                   (coefficient of q cos(theta))
/// All three are evaluated in one quadrature pass with the Y_alpha integrands
/// combined pointwise. gap = (rho - R)^2 + (z - Z)^2 = F - G.
struct AzimuthalWeights {
    std::array<double, 3> w{};  // raise, lower, axial
    double abs_err = 0.0;
    std::size_t evals = 0;
};

inline AzimuthalWeights azimuthal_dipole_weights(int n0, double rho, double R, double dz, double tol)
{
    const double gap = (rho - R) * (rho - R) + dz * dz;
    const double G = 2.0 * rho * R;
    const double F = gap + G;
    if (!(gap > 0.0)) throw NearSingularGeometry("azimuthal_dipole_weights: point coincides with the center of mass");
    AzimuthalWeights out;
    if (G == 0.0) {
        const double y = 2.0 * std::numbers::pi / (F * std::sqrt(F));
        out.w[0] = n0 == 1 ? 0.5 * rho * y : 0.0;
        out.w[1] = n0 == -1 ? 0.5 * rho * y : 0.0;
        out.w[2] = n0 == 0 ? dz * y : 0.0;
        if (R != 0.0 && n0 == 0) {
            out.w[0] -= 0.5 * R * y;
            out.w[1] -= 0.5 * R * y;
        }
        return out;
    }
    auto f = [&](double y) {
        const double s = std::sin(0.5 * y);
        const double d = gap + 2.0 * G * s * s;
        const double inv = 2.0 / (d * std::sqrt(d));
        const double c0 = std::cos(n0 * y);
        const double cm = std::cos((n0 - 1) * y);
        const double cp = std::cos((n0 + 1) * y);
        return std::array<double, 3>{0.5 * (rho * cm - R * c0) * inv, 0.5 * (rho * cp - R * c0) * inv,
                                     dz * c0 * inv};
    };
    const auto br = detail::azimuth_breaks(gap, G);
    const auto r = quad::integrate<std::array<double, 3>>(f, std::span<const double>(br), {1e-300, tol, 2000});
    out.w = r.value;
    out.abs_err = r.abs_err;
    out.evals = r.evals;
    return out;
}

} // namespace evortex
