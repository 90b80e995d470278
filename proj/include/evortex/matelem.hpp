#pragma once
/// \file matelem.hpp
/// \brief Transition matrix elements <f| H_int |i> between composite
/// beam + internal + center-of-mass states.
///
/// Evaluation path. The beam-point azimuth is reduced analytically with
/// y = Phi_r - Phi_R into Y_alpha integrals; the remaining (rho, z) integral
/// is nested adaptive Gauss-Kronrod with breakpoints at the center of mass.
/// The center-of-mass azimuth Phi_R is integrated numerically against
/// e^{i (L - L') Phi_R} on a uniform ring, which is what produces the
/// Kronecker deltas of the selection rules. In the dipole approximation the
/// internal coordinate separates exactly:
///   H_int = (q sin th e^{+i phi}) C_+ + (q sin th e^{-i phi}) C_- + (q cos th) (z - Z) / |r - R|^3
/// with C_+ = (rho e^{-i Phi_r} - R e^{-i Phi_R}) / (2 |r - R|^3) and C_- = conj(C_+).
/// The beam/center-of-mass integrals of C_+, C_- and the axial piece are the
/// Q, S, U channel couplings.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <exception>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "evortex/kernels.hpp"
#include "evortex/quadrature.hpp"
#include "evortex/states.hpp"
#include "evortex/transition_density.hpp"

namespace evortex {

enum class Channel { Q, S, U, forbidden };

inline const char* to_string(Channel c)
{
    switch (c) {
    case Channel::Q: return "Q";
    case Channel::S: return "S";
    case Channel::U: return "U";
    default: return "forbidden";
    }
}

/// delta_l = l - l' (beam OAM given up), delta_L = L - L', delta_m = m' - m.
struct SelectionChannel {
    Channel channel = Channel::forbidden;
    int delta_l = 0;
    int delta_L = 0;
    int delta_m = 0;
};

inline SelectionChannel classify_channel(int l, int lp, int L, int Lp, int m, int mp)
{
    SelectionChannel s{Channel::forbidden, l - lp, L - Lp, mp - m};
    const int given = (l + L) - (lp + Lp);
    if (given == 1 && m == mp - 1) s.channel = Channel::Q;
    else if (given == -1 && m == mp + 1) s.channel = Channel::S;
    else if (given == 0 && m == mp) s.channel = Channel::U;
    return s;
}

/// Total angular momentum about the beam axis, l + L + m, is conserved by the
/// full Coulomb kernel; the dipole channels are the |m' - m| <= 1 subset.
inline bool conserves_lz(int l, int lp, int L, int Lp, int m, int mp) { return l + L + m == lp + Lp + mp; }

/// Below this fraction of the largest allowed amplitude an entry counts as null.
inline constexpr double forbidden_floor = 1e-8;

struct QuadratureConfig {
    double rel_tol = 1e-8;
    double abs_tol = 1e-12;
    std::size_t max_evals = 200'000'000;
    std::uint64_t seed = 20111;
    double eps_core = default_core_radius;
    int ring_samples = 64;

    void validate() const
    {
        if (!(rel_tol > 0.0)) throw std::invalid_argument("quadrature.rel_tol must be > 0");
        if (!(abs_tol > 0.0)) throw std::invalid_argument("quadrature.abs_tol must be > 0");
        if (max_evals == 0) throw std::invalid_argument("quadrature.max_evals must be > 0");
        if (!(eps_core > 0.0)) throw std::invalid_argument("quadrature.eps_core must be > 0");
        if (ring_samples < 8) throw std::invalid_argument("quadrature.ring_samples must be >= 8");
    }
};

struct EvalOptions {
    bool no_shortcircuit = false;
    /// Test hook: multiplies q inside the dipole operator.
    double q_scale = 1.0;
};

struct Transition {
    CompositeState initial;
    CompositeState final;
    KernelKind kernel = KernelKind::dipole;

    void validate() const
    {
        initial.validate();
        final.validate();
        const auto& a = initial.beam.cylinder;
        const auto& b = final.beam.cylinder;
        if (a.rho_max != b.rho_max || a.z_len != b.z_len)
            throw std::invalid_argument("transition: initial and final beam cylinders differ");
        if (initial.internal.bohr != final.internal.bohr)
            throw std::invalid_argument("transition: internal states must share the Bohr radius");
        if (initial.cm.pinned() != final.cm.pinned())
            throw std::invalid_argument("transition: center-of-mass modes differ");
        if (initial.cm.pinned()) {
            const auto& p = initial.cm.pin();
            const auto& q = final.cm.pin();
            if (p.R != q.R || p.Z != q.Z || p.Phi_R != q.Phi_R)
                throw std::invalid_argument("transition: pinned center of mass must not move");
        }
    }

    bool null_expected() const
    {
        if (kernel == KernelKind::dipole) return channel().channel == Channel::forbidden;
        return !conserves_lz(initial.beam.l, final.beam.l, initial.cm.L(), final.cm.L(), initial.internal.m,
                             final.internal.m);
    }

    SelectionChannel channel() const
    {
        return classify_channel(initial.beam.l, final.beam.l, initial.cm.L(), final.cm.L(), initial.internal.m,
                                final.internal.m);
    }
};

struct MatrixElement {
    cplx value = 0.0;
    double abs_err = 0.0;
    SelectionChannel channel;
    std::size_t quadrature_evals = 0;
    bool converged = true;
    std::vector<std::string> warnings;
};

class NonConvergence : public std::runtime_error {
public:
    NonConvergence(const std::string& what, MatrixElement best) : std::runtime_error(what), best_(std::move(best)) {}
    const MatrixElement& best_estimate() const { return best_; }

private:
    MatrixElement best_;
};

namespace detail {

struct Accum {
    double err = 0.0;
    std::size_t evals = 0;
    bool converged = true;

    template <class T>
    void add(const quad::Result<T>& r)
    {
        err += r.abs_err;
        evals += r.evals;
        converged = converged && r.converged;
    }
};

/// (1/N) sum_j e^{i k (phi0 + 2 pi j / N)}.
inline cplx ring_average(int k, int samples, double phi0 = 0.0)
{
    cplx s = 0.0;
    for (int j = 0; j < samples; ++j) s += std::polar(1.0, k * (phi0 + 2.0 * std::numbers::pi * j / samples));
    return s / static_cast<double>(samples);
}

inline void push_clustered(std::vector<double>& br, double center, double width, double lo, double hi)
{
    width = std::max(width, 1e-4);
    for (double w = width; w < hi - lo; w *= 4.0) {
        if (center - w > lo) br.push_back(center - w);
        if (center + w < hi) br.push_back(center + w);
    }
}

inline std::vector<double> sorted_unique(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

/// Radial breakpoints: oscillation panels of the Bessel product plus a
/// cluster at rho = R (and the excision edges R +- eps).
inline std::vector<double> rho_breaks(const BeamState& bi, const BeamState& bf, double R, double eps)
{
    const double rmax = bi.cylinder.rho_max;
    const double panel = std::numbers::pi / std::max(bi.k_rho, bf.k_rho);
    std::vector<double> br{0.0, rmax};
    for (double x = panel; x < rmax; x += panel) br.push_back(x);
    if (R < rmax) {
        br.push_back(R);
        if (R - eps > 0.0) br.push_back(R - eps);
        if (R + eps < rmax) br.push_back(R + eps);
        push_clustered(br, R, 4.0 * eps, 0.0, rmax);
    }
    std::erase_if(br, [&](double x) { return x < 0.0 || x > rmax; });
    return sorted_unique(br);
}

/// Axial integration ranges at fixed rho, with the core excised when
/// |rho - R| < eps.
inline std::vector<std::vector<double>> z_ranges(const Cylinder& cyl, double rho, double R, double Z, double eps)
{
    const double lo = cyl.z_min(), hi = cyl.z_max();
    const double width = std::max(std::abs(rho - R), eps);
    const bool excise = std::abs(rho - R) < eps;
    std::vector<double> br{lo, hi};
    if (Z > lo && Z < hi) br.push_back(Z);
    push_clustered(br, Z, width, lo, hi);
    br = sorted_unique(br);
    if (!excise) return {br};
    std::vector<double> left, right;
    for (double x : br) {
        if (x <= Z - eps) left.push_back(x);
        if (x >= Z + eps) right.push_back(x);
    }
    if (Z - eps > lo && Z - eps < hi) left.push_back(Z - eps);
    if (Z + eps > lo && Z + eps < hi) right.push_back(Z + eps);
    std::vector<std::vector<double>> out;
    left = sorted_unique(left);
    right = sorted_unique(right);
    if (left.size() >= 2) out.push_back(left);
    if (right.size() >= 2) out.push_back(right);
    return out;
}

template <class T, class Inner>
quad::Result<T> nested_rho_z(const BeamState& bi, const BeamState& bf, double R, double Z, double eps,
                             const QuadratureConfig& cfg, Inner&& inner, Accum& acc)
{
    using TT = quad::Tagged<T>;
    const double ai = bi.normalization();
    const double af = bf.normalization();
    const double dkz = bi.k_z - bf.k_z;
    const quad::Tolerance tol_z{cfg.abs_tol, 0.1 * cfg.rel_tol, 4000};
    auto over_rho = [&](double rho) -> TT {
        const double radial = ai * af * rho * sf::bessel_j(bi.l, bi.k_rho * rho) * sf::bessel_j(bf.l, bf.k_rho * rho);
        if (radial == 0.0) return TT{};
        TT sum{};
        for (const auto& rng : z_ranges(bi.cylinder, rho, R, Z, eps)) {
            auto over_z = [&](double z) -> TT {
                auto [v, e] = inner(rho, z);
                return TT{std::polar(1.0, dkz * z) * v, e};
            };
            const auto r = quad::integrate<TT>(over_z, std::span<const double>(rng), tol_z);
            acc.evals += r.evals;
            acc.converged = acc.converged && r.converged;
            sum = sum + TT{r.value.value, r.value.err + r.abs_err};
        }
        return TT{radial * sum.value, std::abs(radial) * sum.err};
    };
    const auto br = rho_breaks(bi, bf, R, eps);
    const auto r = quad::integrate<TT>(over_rho, std::span<const double>(br), {cfg.abs_tol, cfg.rel_tol, 4000});
    acc.converged = acc.converged && r.converged;
    quad::Result<T> out;
    out.value = r.value.value;
    out.abs_err = r.abs_err + std::abs(r.value.err);
    out.evals = r.evals;
    return out;
}

/// Integral over the square shell eps/2 <= max(|rho - R|, |z - Z|) < eps.
/// The excised core contributes c eps^2 + O(eps^4) by the odd symmetry of
/// the dipole kernel, so adding 4/3 of the shell restores the core to that
/// order (Richardson in eps).
template <class T, class Inner>
quad::Result<T> core_shell(const BeamState& bi, const BeamState& bf, double R, double Z, double eps,
                           double abs_tol, const QuadratureConfig& cfg, Inner&& inner, Accum& acc)
{
    using TT = quad::Tagged<T>;
    const double ai = bi.normalization();
    const double af = bf.normalization();
    const double dkz = bi.k_z - bf.k_z;
    const double h = 0.5 * eps;
    const quad::Tolerance tol{abs_tol, 0.1 * cfg.rel_tol, 4000};
    auto over_rho = [&](double rho) -> TT {
        const double radial = ai * af * rho * sf::bessel_j(bi.l, bi.k_rho * rho) * sf::bessel_j(bf.l, bf.k_rho * rho);
        if (radial == 0.0) return TT{};
        auto over_z = [&](double z) -> TT {
            auto [v, e] = inner(rho, z);
            return TT{std::polar(1.0, dkz * z) * v, e};
        };
        std::vector<std::vector<double>> ranges;
        if (std::abs(rho - R) >= h) ranges = {{Z - eps, Z - h, Z, Z + h, Z + eps}};
        else ranges = {{Z - eps, Z - h}, {Z + h, Z + eps}};
        TT sum{};
        for (const auto& rng : ranges) {
            const auto r = quad::integrate<TT>(over_z, std::span<const double>(rng), tol);
            acc.evals += r.evals;
            acc.converged = acc.converged && r.converged;
            sum = sum + TT{r.value.value, r.value.err + r.abs_err};
        }
        return TT{radial * sum.value, std::abs(radial) * sum.err};
    };
    std::vector<double> br{R - eps, R - h, R, R + h, R + eps};
    std::erase_if(br, [&](double x) { return x < 0.0 || x > bi.cylinder.rho_max; });
    quad::Result<T> out;
    if (br.size() < 2) return out;
    const auto r = quad::integrate<TT>(over_rho, std::span<const double>(br), tol);
    acc.converged = acc.converged && r.converged;
    out.value = r.value.value;
    out.abs_err = r.abs_err + std::abs(r.value.err);
    out.evals = r.evals;
    return out;
}

using Couplings = std::array<cplx, 3>;  // raise (Q), lower (S), axial (U)

/// Dipole couplings at center-of-mass position (R, Z), Phi_R = 0.
inline quad::Result<Couplings> dipole_point_couplings(const BeamState& bi, const BeamState& bf, double R, double Z,
                                                      const QuadratureConfig& cfg, Accum& acc)
{
    const int n0 = bi.l - bf.l;
    const double tol_y = std::max(1e-13, 1e-2 * cfg.rel_tol);
    auto inner = [&](double rho, double z) -> std::pair<Couplings, double> {
        const auto w = azimuthal_dipole_weights(n0, rho, R, z - Z, tol_y);
        return {Couplings{w.w[0], w.w[1], w.w[2]}, w.abs_err};
    };
    auto r = nested_rho_z<Couplings>(bi, bf, R, Z, cfg.eps_core, cfg, inner, acc);
    const double lo = R - cfg.eps_core, hi = R + cfg.eps_core;
    if (hi > 0.0 && lo < bi.cylinder.rho_max) {
        const auto shell = core_shell<Couplings>(bi, bf, R, Z, cfg.eps_core,
                                                 std::max(cfg.abs_tol, 0.1 * cfg.rel_tol * quad::magnitude(r.value)),
                                                 cfg, inner, acc);
        r.value = r.value + (4.0 / 3.0) * shell.value;
        r.abs_err += (4.0 / 3.0) * shell.abs_err;
        r.evals += shell.evals;
    }
    acc.err += r.abs_err;
    return r;
}

/// Exact-kernel amplitude at center-of-mass position (R, Z), Phi_R = 0.
inline quad::Result<cplx> coulomb_point_amplitude(const BeamState& bi, const BeamState& bf, double R, double Z,
                                                  const TransitionPotential& pot, const QuadratureConfig& cfg,
                                                  Accum& acc)
{
    const int n0 = bi.l - bf.l;
    const double tol_y = std::max(1e-12, 1e-2 * cfg.rel_tol);
    auto inner = [&](double rho, double z) -> std::pair<cplx, double> {
        // y -> -y conjugates only the azimuth factor, so the period integral
        // is twice the half-period integral of the real part. Trapezoid with
        // doubling; spectrally convergent for the smooth potential.
        auto sample = [&](double y) -> cplx {
            const auto f = pot.factors(Vec3{rho * std::cos(y) - R, rho * std::sin(y), z - Z});
            const double c = n0 * y;
            return f.angular * (std::cos(c) * f.azimuth.real() - std::sin(c) * f.azimuth.imag()) +
                   f.isotropic * std::cos(c);
        };
        const double pi = std::numbers::pi;
        int n = 8;
        cplx sum = 0.5 * (sample(0.0) + sample(pi));
        for (int j = 1; j < n; ++j) sum += sample(pi * j / n);
        cplx prev = sum * (2.0 * pi / n);
        double err = 0.0;
        while (n < 2048) {
            for (int j = 0; j < n; ++j) sum += sample(pi * (j + 0.5) / n);
            n *= 2;
            const cplx cur = sum * (2.0 * pi / n);
            err = std::abs(cur - prev);
            prev = cur;
            if (err <= tol_y * std::abs(cur) + 1e-300) break;
        }
        return {prev, err};
    };
    auto r = nested_rho_z<cplx>(bi, bf, R, Z, 0.0, cfg, inner, acc);
    acc.err += r.abs_err;
    return r;
}

/// Integral over a cylindrical-wave center of mass of
/// psi_N'^* psi_N * g(R, Z, ring factor); g returns the Phi_R-integrated
/// point amplitude for that (R, Z).
template <class T, class PointFn>
quad::Result<T> over_cm_wave(const CylindricalWaveCM& ci, const CylindricalWaveCM& cf, const Cylinder& cyl,
                             const QuadratureConfig& cfg, PointFn&& point, Accum& acc)
{
    using TT = quad::Tagged<T>;
    const double ni = cylinder_mode_normalization(ci.L, ci.K_rho, cyl);
    const double nf = cylinder_mode_normalization(cf.L, cf.K_rho, cyl);
    const double dKz = ci.K_z - cf.K_z;
    const quad::Tolerance tol{cfg.abs_tol, 10.0 * cfg.rel_tol, 400};
    auto over_R = [&](double R) -> TT {
        const double radial = ni * nf * R * sf::bessel_j(ci.L, ci.K_rho * R) * sf::bessel_j(cf.L, cf.K_rho * R);
        if (radial == 0.0) return TT{};
        auto over_Z = [&](double Z) -> TT {
            auto [v, e] = point(R, Z);
            return TT{std::polar(1.0, dKz * Z) * v, e};
        };
        const auto r = quad::integrate<TT>(over_Z, cyl.z_min(), cyl.z_max(), tol);
        acc.converged = acc.converged && r.converged;
        return TT{radial * r.value.value, std::abs(radial) * (r.value.err + r.abs_err)};
    };
    const auto r = quad::integrate<TT>(over_R, 0.0, cyl.rho_max, tol);
    acc.converged = acc.converged && r.converged;
    quad::Result<T> out;
    out.value = r.value.value;
    out.abs_err = r.abs_err + std::abs(r.value.err);
    out.evals = r.evals;
    return out;
}

/// Phi_R order of each dipole coupling at fixed n0 = l - l'.
inline std::array<int, 3> coupling_orders(int n0) { return {n0 - 1, n0 + 1, n0}; }

} // namespace detail

/// Center-of-mass projected dipole couplings (Q-, S-, U-type) for one beam
/// and center-of-mass transition. M = d_raise G[0] + d_lower G[1] + d_axial G[2].
struct ProjectedCouplings {
    detail::Couplings value{};
    double abs_err = 0.0;
    std::size_t evals = 0;
    bool converged = true;
};

inline ProjectedCouplings projected_dipole_couplings(const BeamState& bi, const BeamState& bf,
                                                     const CenterOfMassState& ci, const CenterOfMassState& cf,
                                                     const QuadratureConfig& cfg)
{
    detail::Accum acc;
    const auto orders = detail::coupling_orders(bi.l - bf.l);
    const int dL = ci.L() - cf.L();
    ProjectedCouplings out;
    if (ci.pinned()) {
        const auto& p = ci.pin();
        const auto r = detail::dipole_point_couplings(bi, bf, p.R, p.Z, cfg, acc);
        for (int c = 0; c < 3; ++c)
            out.value[c] = r.value[c] * detail::ring_average(orders[c] + dL, cfg.ring_samples, p.Phi_R);
        out.abs_err = r.abs_err;
    } else {
        auto point = [&](double R, double Z) -> std::pair<detail::Couplings, double> {
            const auto r = detail::dipole_point_couplings(bi, bf, R, Z, cfg, acc);
            detail::Couplings v;
            for (int c = 0; c < 3; ++c)
                v[c] = 2.0 * std::numbers::pi * r.value[c] * detail::ring_average(orders[c] + dL, cfg.ring_samples);
            return {v, 2.0 * std::numbers::pi * r.abs_err};
        };
        const auto r = detail::over_cm_wave<detail::Couplings>(ci.wave(), cf.wave(), bi.cylinder, cfg, point, acc);
        out.value = r.value;
        out.abs_err = r.abs_err;
    }
    out.evals = acc.evals;
    out.converged = acc.converged && acc.evals <= cfg.max_evals;
    return out;
}

namespace detail {

inline void dipole_warnings(const DipoleMoments& d, const Transition& t, std::vector<std::string>& w)
{
    const double scale = 1.0 / std::max(t.initial.beam.k_rho, t.final.beam.k_rho);
    if (d.mean_radius > scale) {
        std::ostringstream os;
        os << "dipole approximation: <q> = " << d.mean_radius << " a.u. is not small against the beam scale 1/k_rho = "
           << scale << " a.u.";
        w.push_back(os.str());
    }
}

inline MatrixElement finish(MatrixElement me, const QuadratureConfig& cfg)
{
    if (me.quadrature_evals > cfg.max_evals) me.converged = false;
    if (!me.converged) throw NonConvergence("matrix element quadrature did not converge", me);
    return me;
}

} // namespace detail

inline MatrixElement compute_matrix_element(const Transition& t, const QuadratureConfig& cfg,
                                            const EvalOptions& opts = {})
{
    t.validate();
    cfg.validate();
    MatrixElement me;
    me.channel = t.channel();
    if (t.null_expected() && !opts.no_shortcircuit) return me;
    const auto& bi = t.initial.beam;
    const auto& bf = t.final.beam;
    if (t.kernel == KernelKind::dipole) {
        const auto d = dipole_moments(t.final.internal, t.initial.internal, opts.q_scale);
        detail::dipole_warnings(d, t, me.warnings);
        const auto g = projected_dipole_couplings(bi, bf, t.initial.cm, t.final.cm, cfg);
        me.value = d.raise * g.value[0] + d.lower * g.value[1] + d.axial * g.value[2];
        me.abs_err = (std::abs(d.raise) + std::abs(d.lower) + std::abs(d.axial)) * g.abs_err;
        me.quadrature_evals = g.evals;
        me.converged = g.converged;
        return detail::finish(me, cfg);
    }
    const TransitionPotential pot(t.final.internal, t.initial.internal);
    const int order = (bi.l - bf.l) + (t.initial.internal.m - t.final.internal.m);
    const int dL = t.initial.cm.L() - t.final.cm.L();
    detail::Accum acc;
    if (t.initial.cm.pinned()) {
        const auto& p = t.initial.cm.pin();
        const auto r = detail::coulomb_point_amplitude(bi, bf, p.R, p.Z, pot, cfg, acc);
        me.value = r.value * detail::ring_average(order + dL, cfg.ring_samples, p.Phi_R);
        me.abs_err = r.abs_err;
    } else {
        auto point = [&](double R, double Z) -> std::pair<cplx, double> {
            const auto r = detail::coulomb_point_amplitude(bi, bf, R, Z, pot, cfg, acc);
            return {2.0 * std::numbers::pi * r.value * detail::ring_average(order + dL, cfg.ring_samples),
                    2.0 * std::numbers::pi * r.abs_err};
        };
        const auto r = detail::over_cm_wave<cplx>(t.initial.cm.wave(), t.final.cm.wave(), bi.cylinder, cfg, point, acc);
        me.value = r.value;
        me.abs_err = r.abs_err;
    }
    me.quadrature_evals = acc.evals;
    me.converged = acc.converged;
    return detail::finish(me, cfg);
}

/// Amplitude for a center of mass localised at azimuth Phi_R (no projection
/// onto a rotational state). Pinned mode only.
inline MatrixElement localized_matrix_element(const Transition& t, const QuadratureConfig& cfg,
                                              const EvalOptions& opts = {})
{
    t.validate();
    cfg.validate();
    if (!t.initial.cm.pinned()) throw std::invalid_argument("localized_matrix_element: pinned center of mass only");
    const auto& p = t.initial.cm.pin();
    const auto& bi = t.initial.beam;
    const auto& bf = t.final.beam;
    MatrixElement me;
    me.channel = t.channel();
    detail::Accum acc;
    if (t.kernel == KernelKind::dipole) {
        const auto d = dipole_moments(t.final.internal, t.initial.internal, opts.q_scale);
        const auto r = detail::dipole_point_couplings(bi, bf, p.R, p.Z, cfg, acc);
        const auto orders = detail::coupling_orders(bi.l - bf.l);
        const std::array<cplx, 3> dm{d.raise, d.lower, d.axial};
        for (int c = 0; c < 3; ++c) me.value += dm[c] * r.value[c] * std::polar(1.0, orders[c] * p.Phi_R);
        me.abs_err = (std::abs(d.raise) + std::abs(d.lower) + std::abs(d.axial)) * r.abs_err;
    } else {
        const TransitionPotential pot(t.final.internal, t.initial.internal);
        const int order = (bi.l - bf.l) + (t.initial.internal.m - t.final.internal.m);
        const auto r = detail::coulomb_point_amplitude(bi, bf, p.R, p.Z, pot, cfg, acc);
        me.value = r.value * std::polar(1.0, order * p.Phi_R);
        me.abs_err = r.abs_err;
    }
    me.quadrature_evals = acc.evals;
    me.converged = acc.converged;
    return detail::finish(me, cfg);
}

/// Q, S and U couplings of the family anchored at t's initial beam mode l:
///   Q: beam l -> l + L - L' - 1 (coefficient of q sin th e^{+i phi}),
///   S: the reverse of the Q beam and center-of-mass transition (coefficient of q sin th e^{-i phi}),
///   U: beam l -> l + L - L' (coefficient of q cos th).
/// These are the beam/center-of-mass integrals only; the internal dipole
/// moment multiplies them. Q^* = S by hermiticity of the kernel.
struct ChannelAmplitudes {
    cplx Q = 0.0, S = 0.0, U = 0.0;
    double err_Q = 0.0, err_S = 0.0, err_U = 0.0;
    std::size_t evals = 0;
};

inline ChannelAmplitudes channel_amplitudes(const Transition& t, const QuadratureConfig& cfg)
{
    t.validate();
    cfg.validate();
    const auto& ci = t.initial.cm;
    const auto& cf = t.final.cm;
    const int l = t.initial.beam.l;
    const int shift = ci.L() - cf.L();
    BeamState bq = t.final.beam;
    bq.l = l + shift - 1;
    BeamState bu = t.final.beam;
    bu.l = l + shift;
    ChannelAmplitudes out;
    const auto q = projected_dipole_couplings(t.initial.beam, bq, ci, cf, cfg);
    const auto s = projected_dipole_couplings(bq, t.initial.beam, cf, ci, cfg);
    const auto u = projected_dipole_couplings(t.initial.beam, bu, ci, cf, cfg);
    for (const auto* r : {&q, &s, &u})
        if (!r->converged) {
            MatrixElement best;
            best.value = r->value[0];
            throw NonConvergence("channel amplitude quadrature did not converge", best);
        }
    out.Q = q.value[0];
    out.err_Q = q.abs_err;
    out.S = s.value[1];
    out.err_S = s.abs_err;
    out.U = u.value[2];
    out.err_U = u.abs_err;
    out.evals = q.evals + s.evals + u.evals;
    return out;
}

// ---------------------------------------------------------------------------
// Selection scans

struct InternalTransition {
    InternalState initial;
    InternalState final;
};

struct ScanSpec {
    int l_min = -1, l_max = 1;
    int lp_min = -1, lp_max = 1;
    std::vector<InternalTransition> transitions;
    BeamState beam;        // k's and cylinder of the initial mode; l is overwritten
    BeamState final_beam;  // k's of the final mode; l is overwritten
    CenterOfMassState cm_initial;
    CenterOfMassState cm_final;
    KernelKind kernel = KernelKind::dipole;
};

struct ScanRow {
    int l = 0, lp = 0, L = 0, Lp = 0, m = 0, mp = 0;
    int n = 0, ell = 0, np = 0, ellp = 0;
    SelectionChannel channel;
    bool null_expected = false;  // forbidden for the scanned kernel
    cplx value = 0.0;
    double abs_M = 0.0;
    double abs_err = 0.0;
    std::size_t evals = 0;
    bool converged = true;
};

struct ScanOptions {
    bool no_shortcircuit = false;
    unsigned threads = 1;
};

namespace detail {

/// Runs task(i) for i in [0, n) on a pool; results are written by index so
/// the outcome does not depend on the worker count.
template <class Task>
void parallel_for(std::size_t n, unsigned threads, Task&& task)
{
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                task(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);
}

} // namespace detail

inline std::vector<ScanRow> selection_scan(const ScanSpec& spec, const QuadratureConfig& cfg,
                                           const ScanOptions& opts = {})
{
    cfg.validate();
    spec.beam.validate();
    spec.final_beam.validate();
    for (int v : {spec.l_min, spec.l_max, spec.lp_min, spec.lp_max})
        if (std::abs(v) > 5) throw std::invalid_argument("selection_scan: |l| <= 5 required");
    for (const auto& tr : spec.transitions) {
        tr.initial.validate();
        tr.final.validate();
        if (std::abs(tr.initial.m) > 5 || std::abs(tr.final.m) > 5)
            throw std::invalid_argument("selection_scan: |m| <= 5 required");
    }
    const int L = spec.cm_initial.L();
    const int Lp = spec.cm_final.L();
    std::vector<ScanRow> rows;
    for (const auto& tr : spec.transitions)
        for (int l = spec.l_min; l <= spec.l_max; ++l)
            for (int lp = spec.lp_min; lp <= spec.lp_max; ++lp) {
                ScanRow r;
                r.l = l;
                r.lp = lp;
                r.L = L;
                r.Lp = Lp;
                r.m = tr.initial.m;
                r.mp = tr.final.m;
                r.n = tr.initial.n;
                r.ell = tr.initial.ell;
                r.np = tr.final.n;
                r.ellp = tr.final.ell;
                r.channel = classify_channel(l, lp, L, Lp, r.m, r.mp);
                r.null_expected = spec.kernel == KernelKind::dipole ? r.channel.channel == Channel::forbidden
                                                                    : !conserves_lz(l, lp, L, Lp, r.m, r.mp);
                rows.push_back(r);
            }
    auto needed = [&](const ScanRow& r) { return opts.no_shortcircuit || !r.null_expected; };
    auto beams = [&](int l, int lp) {
        BeamState bi = spec.beam;
        bi.l = l;
        BeamState bf = spec.final_beam;
        bf.l = lp;
        return std::pair{bi, bf};
    };

    if (spec.kernel == KernelKind::dipole) {
        std::vector<std::pair<int, int>> pairs;
        for (int l = spec.l_min; l <= spec.l_max; ++l)
            for (int lp = spec.lp_min; lp <= spec.lp_max; ++lp) {
                bool any = false;
                for (const auto& r : rows) any = any || (r.l == l && r.lp == lp && needed(r));
                if (any) pairs.emplace_back(l, lp);
            }
        std::vector<ProjectedCouplings> couplings(pairs.size());
        detail::parallel_for(pairs.size(), opts.threads, [&](std::size_t i) {
            auto [bi, bf] = beams(pairs[i].first, pairs[i].second);
            couplings[i] = projected_dipole_couplings(bi, bf, spec.cm_initial, spec.cm_final, cfg);
        });
        std::vector<DipoleMoments> moments;
        for (const auto& tr : spec.transitions) moments.push_back(dipole_moments(tr.final, tr.initial));
        const std::size_t per = static_cast<std::size_t>(spec.l_max - spec.l_min + 1) * (spec.lp_max - spec.lp_min + 1);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            auto& r = rows[k];
            if (!needed(r)) continue;
            const auto it = std::find(pairs.begin(), pairs.end(), std::pair{r.l, r.lp});
            const auto& g = couplings[static_cast<std::size_t>(it - pairs.begin())];
            const auto& d = moments[k / per];
            r.value = d.raise * g.value[0] + d.lower * g.value[1] + d.axial * g.value[2];
            r.abs_err = (std::abs(d.raise) + std::abs(d.lower) + std::abs(d.axial)) * g.abs_err;
            r.evals = g.evals;
            r.converged = g.converged;
            r.abs_M = std::abs(r.value);
        }
        return rows;
    }

    std::vector<std::size_t> todo;
    for (std::size_t k = 0; k < rows.size(); ++k)
        if (needed(rows[k])) todo.push_back(k);
    const std::size_t per = static_cast<std::size_t>(spec.l_max - spec.l_min + 1) * (spec.lp_max - spec.lp_min + 1);
    detail::parallel_for(todo.size(), opts.threads, [&](std::size_t i) {
        auto& r = rows[todo[i]];
        const auto& tr = spec.transitions[todo[i] / per];
        auto [bi, bf] = beams(r.l, r.lp);
        Transition t{{bi, tr.initial, spec.cm_initial}, {bf, tr.final, spec.cm_final}, KernelKind::exact_coulomb};
        MatrixElement me;
        try {
            me = compute_matrix_element(t, cfg, {opts.no_shortcircuit, 1.0});
        } catch (const NonConvergence& e) {
            me = e.best_estimate();
        }
        r.value = me.value;
        r.abs_M = std::abs(me.value);
        r.abs_err = me.abs_err;
        r.evals = me.quadrature_evals;
        r.converged = me.converged;
    });
    return rows;
}

/// Largest |M| among forbidden rows divided by the largest allowed |M|.
inline double forbidden_ratio(const std::vector<ScanRow>& rows)
{
    double allowed = 0.0, forbidden = 0.0;
    for (const auto& r : rows) {
        if (r.null_expected) forbidden = std::max(forbidden, r.abs_M);
        else allowed = std::max(allowed, r.abs_M);
    }
    return allowed > 0.0 ? forbidden / allowed : (forbidden > 0.0 ? INFINITY : 0.0);
}

} // namespace evortex
