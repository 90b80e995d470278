#pragma once
/// \file transition_density.hpp
/// \brief Internal-state matrix elements: dipole moments of a hydrogenic
/// transition and the exact electrostatic potential of its transition
/// density, V(d) = int psi_f^*(q) psi_i(q) / |d - q| d^3q.
///
/// The potential is evaluated through the Laplace expansion of 1/|d - q|.
/// Terms with k > ell + ell' vanish identically by orthogonality of the
/// angular factors, so summing k = 0 .. ell + ell' is the complete kernel.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "evortex/kernels.hpp"
#include "evortex/quadrature.hpp"
#include "evortex/specfun.hpp"
#include "evortex/states.hpp"

namespace evortex {

namespace detail {

inline double radial_cutoff(const InternalState& a, const InternalState& b)
{
    return 30.0 * a.bohr * (a.n + b.n);
}

/// int_0^inf R_f R_i q^power dq.
inline double radial_moment(const InternalState& f, const InternalState& i, int power)
{
    const double cut = radial_cutoff(f, i);
    std::vector<double> br;
    for (double x = 0.0; x < cut; x += 2.0 * f.bohr) br.push_back(x);
    br.push_back(cut);
    auto g = [&](double q) {
        return sf::hydrogenic_radial(f.radial(), q) * sf::hydrogenic_radial(i.radial(), q) * std::pow(q, power);
    };
    return quad::integrate<double>(g, std::span<const double>(br), {1e-300, 1e-13, 4000}).value;
}

/// Tensor rule on the sphere: Gauss-Legendre in cos(theta) times a uniform
/// azimuthal grid. Exact for spherical-harmonic products up to degree 2 * 24.
struct SphereRule {
    std::vector<double> theta, w_theta, phi;
    double w_phi = 0.0;

    SphereRule(int n_theta = 48, int n_phi = 64)
    {
        const auto gl = quad::gauss_legendre(n_theta);
        for (int i = 0; i < n_theta; ++i) {
            theta.push_back(std::acos(gl.nodes[i]));
            w_theta.push_back(gl.weights[i]);
        }
        for (int j = 0; j < n_phi; ++j) phi.push_back(2.0 * std::numbers::pi * j / n_phi);
        w_phi = 2.0 * std::numbers::pi / n_phi;
    }

    template <class F>
    cplx integrate(F&& f) const
    {
        cplx s = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i)
            for (double p : phi) s += w_theta[i] * w_phi * f(theta[i], p);
        return s;
    }
};

} // namespace detail

/// <f| q sin(theta) e^{+i phi} |i>, <f| q sin(theta) e^{-i phi} |i>, <f| q cos(theta) |i>.
/// q_scale multiplies q inside the operator.
struct DipoleMoments {
    cplx raise = 0.0;
    cplx lower = 0.0;
    cplx axial = 0.0;
    double mean_radius = 0.0;  // max(<q>_i, <q>_f)
};

inline DipoleMoments dipole_moments(const InternalState& f, const InternalState& i, double q_scale = 1.0)
{
    f.validate();
    i.validate();
    const double radial = q_scale * detail::radial_moment(f, i, 3);
    const detail::SphereRule rule(32, 32);
    auto ang = [&](auto op) {
        return rule.integrate([&](double th, double ph) {
            return std::conj(sf::spherical_harmonic(f.ell, f.m, th, ph)) * op(th, ph) *
                   sf::spherical_harmonic(i.ell, i.m, th, ph);
        });
    };
    DipoleMoments d;
    d.raise = radial * ang([](double th, double ph) { return std::sin(th) * std::polar(1.0, ph); });
    d.lower = radial * ang([](double th, double ph) { return std::sin(th) * std::polar(1.0, -ph); });
    d.axial = radial * ang([](double th, double) { return cplx(std::cos(th)); });
    d.mean_radius = std::max(detail::radial_moment(i, i, 3), detail::radial_moment(f, f, 3));
    return d;
}

namespace detail {

/// Coefficients c_j of R_{n ell}(q) = sum_j c_j q^j e^{-q / (n a)}.
inline std::vector<double> radial_polynomial(const InternalState& s)
{
    const double scale = 2.0 / (s.n * s.bohr);
    const double log_norm = 1.5 * std::log(scale) +
                            0.5 * (std::lgamma(s.n - s.ell + 0.0) - std::log(2.0 * s.n) - std::lgamma(s.n + s.ell + 1.0));
    const int p = s.n - s.ell - 1;
    const double alpha = 2.0 * s.ell + 1.0;
    std::vector<double> c(s.ell + p + 1, 0.0);
    for (int i = 0; i <= p; ++i) {
        // L_p^alpha(x) = sum_i (-1)^i binom(p + alpha, p - i) x^i / i!
        const double binom =
            std::exp(std::lgamma(p + alpha + 1.0) - std::lgamma(p - i + 1.0) - std::lgamma(alpha + i + 1.0));
        const double li = ((i & 1) ? -1.0 : 1.0) * binom / std::tgamma(i + 1.0);
        c[s.ell + i] = std::exp(log_norm) * li * std::pow(scale, s.ell + i);
    }
    return c;
}

} // namespace detail

/// Potential of the transition density psi_f^* psi_i, minus the overlap
/// <f|i> / |d| from the nuclear term of the Coulomb kernel.
///
/// The radial parts int q^2 dq R_f R_i r_<^k / r_>^{k+1} are evaluated in
/// closed form through incomplete gamma functions, since R_f R_i is a
/// polynomial times an exponential.
class TransitionPotential {
public:
    static constexpr std::size_t max_terms = 2 * sf::max_principal;
    static constexpr int max_power = 4 * sf::max_principal;

    TransitionPotential(const InternalState& f, const InternalState& i) : mu_(i.m - f.m)
    {
        f.validate();
        i.validate();
        const auto cf = detail::radial_polynomial(f);
        const auto ci = detail::radial_polynomial(i);
        prod_.assign(cf.size() + ci.size() - 1, 0.0);
        for (std::size_t a = 0; a < cf.size(); ++a)
            for (std::size_t b = 0; b < ci.size(); ++b) prod_[a + b] += cf[a] * ci[b];
        beta_ = 1.0 / (f.n * f.bohr) + 1.0 / (i.n * i.bohr);
        // The azimuthal integral restricts the multipole expansion to
        // mu = m_i - m_f; parity and the triangle rule remove more terms.
        const detail::SphereRule rule(48, 64);
        for (int k = 0; k <= f.ell + i.ell; ++k) {
            if (std::abs(mu_) > k) continue;
            const cplx g = rule.integrate([&](double th, double ph) {
                return std::conj(sf::spherical_harmonic(f.ell, f.m, th, ph)) *
                       sf::spherical_harmonic(i.ell, i.m, th, ph) * std::conj(sf::spherical_harmonic(k, mu_, th, ph));
            });
            if (std::abs(g) < 1e-13) continue;
            terms_.push_back({k, 4.0 * std::numbers::pi / (2.0 * k + 1.0) * g});
        }
        smax_ = static_cast<int>(prod_.size()) + 2 + f.ell + i.ell;
        for (const auto& t : terms_) {
            std::vector<double> in(prod_.size()), out(prod_.size());
            for (std::size_t j = 0; j < prod_.size(); ++j) {
                const int a = static_cast<int>(j) + 3 + t.k;
                const int b = static_cast<int>(j) + 2 - t.k;
                in[j] = prod_[j] * std::exp(std::lgamma(a) - a * std::log(beta_));
                out[j] = b >= 1 ? prod_[j] * std::exp(std::lgamma(b) - b * std::log(beta_)) : 0.0;
            }
            inner_scale_.push_back(std::move(in));
            outer_scale_.push_back(std::move(out));
        }
        if (f.ell == i.ell && f.m == i.m) {
            double ov = 0.0;
            for (std::size_t j = 0; j < prod_.size(); ++j)
                ov += prod_[j] * std::exp(std::lgamma(j + 3.0) - (j + 3.0) * std::log(beta_));
            if (std::abs(ov) > 1e-13) overlap_ = ov;
        }
    }

    /// V = angular * azimuth + isotropic, with azimuth = e^{i mu phi_d}
    /// carrying all dependence on the sign of d.y.
    struct Factors {
        cplx angular = 0.0;
        cplx azimuth = 1.0;
        double isotropic = 0.0;
    };

    Factors factors(const Vec3& d) const
    {
        Factors out;
        const double dn = d.norm();
        const double rxy = std::hypot(d.x, d.y);
        const double x = dn > 0.0 ? d.z / dn : 1.0;
        const double s = dn > 0.0 ? rxy / dn : 0.0;
        if (mu_ != 0 && rxy > 0.0) {
            const cplx u(d.x / rxy, d.y / rxy);
            for (int j = 0; j < std::abs(mu_); ++j) out.azimuth *= u;
            if (mu_ < 0) out.azimuth = std::conj(out.azimuth);
        }
        std::array<double, max_terms> rad{};
        radial_parts(dn, rad);
        for (std::size_t t = 0; t < terms_.size(); ++t)
            out.angular += terms_[t].weight * rad[t] * sf::spherical_harmonic_theta(terms_[t].k, mu_, x, s);
        if (overlap_ != 0.0) out.isotropic = -overlap_ / dn;
        return out;
    }

    /// V at displacement d = r - R (Cartesian).
    cplx operator()(const Vec3& d) const
    {
        const auto f = factors(d);
        return f.angular * f.azimuth + f.isotropic;
    }

    /// int q^2 dq R_f R_i r_<^k / r_>^{k+1} at |d| = dn, for each retained k.
    void radial_parts(double dn, std::array<double, max_terms>& out) const
    {
        // With P_i = x^i / i!, Gamma(s, x) = (s-1)! e^{-x} sum_{i<s} P_i and
        // gamma(s, x) = (s-1)! e^{-x} sum_{i>=s} P_i.
        const double x = beta_ * dn;
        const int top = smax_;
        std::array<double, max_power + 2> P{}, head{}, tail{};
        double p = 1.0, acc = 0.0;
        for (int i = 0; i <= top; ++i) {
            P[i] = p;
            head[i] = acc;  // sum_{i' < i} P_i'
            acc += p;
            p *= x / (i + 1);
        }
        if (x < top + 1.0) {
            // Tail sums are only used where x < s + 1, so the series converges fast.
            double t = 0.0, q = p;
            for (int i = top + 1; i < top + 200; ++i) {
                t += q;
                q *= x / (i + 1);
                if (q < 1e-17 * t) break;
            }
            tail[top + 1] = t;
            for (int i = top; i >= 0; --i) tail[i] = tail[i + 1] + P[i];
        }
        const double e = std::exp(-x);
        for (std::size_t n = 0; n < terms_.size(); ++n) {
            const int k = terms_[n].k;
            double inner = 0.0, outer = 0.0;
            for (std::size_t j = 0; j < prod_.size(); ++j) {
                if (prod_[j] == 0.0) continue;
                const int a = static_cast<int>(j) + 3 + k;
                const int b = static_cast<int>(j) + 2 - k;
                const double lower = x < a + 1.0 ? e * tail[a] : 1.0 - e * head[a];
                inner += inner_scale_[n][j] * lower;
                outer += outer_scale_[n][j] * e * head[b];
            }
            if (dn == 0.0) out[n] = k == 0 ? outer : 0.0;
            else out[n] = inner / std::pow(dn, k + 1) + std::pow(dn, k) * outer;
        }
    }

    /// Radial part for multipole order k (zero when k is not retained).
    double radial_part(int k, double dn) const
    {
        std::array<double, max_terms> rad{};
        radial_parts(dn, rad);
        for (std::size_t n = 0; n < terms_.size(); ++n)
            if (terms_[n].k == k) return rad[n];
        return 0.0;
    }

    double overlap() const { return overlap_; }
    int mu() const { return mu_; }

private:
    struct Term {
        int k;
        cplx weight;
    };
    int mu_;
    int smax_ = 0;
    std::vector<std::vector<double>> inner_scale_, outer_scale_;
    double beta_ = 0.0;
    double overlap_ = 0.0;
    std::vector<double> prod_;
    std::vector<Term> terms_;
};

} // namespace evortex
