#pragma once
/// \file states.hpp
/// \brief Bessel vortex beam modes, hydrogenic internal states and
/// center-of-mass states, with amplitude evaluation.
///
/// The beam and the cylindrical-wave center of mass are normalised to unit
/// norm over the cylinder rho <= rho_max, |z| <= z_len / 2.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>

#include "evortex/specfun.hpp"

namespace evortex {

struct Cylindrical {
    double rho = 0.0;
    double phi = 0.0;
    double z = 0.0;
};

struct Spherical {
    double r = 0.0;
    double theta = 0.0;
    double phi = 0.0;
};

struct Cylinder {
    double rho_max = 20.0;
    double z_len = 50.0;

    double z_min() const { return -0.5 * z_len; }
    double z_max() const { return 0.5 * z_len; }
};

/// Unit-norm constant for J_order(k rho) e^{i order Phi} e^{i k_z z} over the
/// cylinder, from the Lommel integral int_0^a J_n(k r)^2 r dr.
inline double cylinder_mode_normalization(int order, double k_rho, const Cylinder& cyl)
{
    const double a = cyl.rho_max;
    const double x = k_rho * a;
    const double jn = sf::bessel_j(order, x);
    const double radial = 0.5 * a * a * (jn * jn - sf::bessel_j(order - 1, x) * sf::bessel_j(order + 1, x));
    return 1.0 / std::sqrt(2.0 * std::numbers::pi * cyl.z_len * radial);
}

struct BeamState {
    double k_z = 100.0;
    double k_rho = 5.0;
    int l = 0;
    Cylinder cylinder{};
    /// Extra multiplier on A_l; 1 for physical states.
    double norm_scale = 1.0;

    double k_total() const { return std::hypot(k_z, k_rho); }

    void validate() const
    {
        if (!(k_z > 0.0)) throw std::invalid_argument("beam.k_z must be > 0");
        if (!(k_rho > 0.0)) throw std::invalid_argument("beam.k_rho must be > 0");
        if (std::abs(l) > sf::max_bessel_order) throw std::invalid_argument("beam.l out of range");
        if (!(cylinder.rho_max > 0.0)) throw std::invalid_argument("beam.rho_max must be > 0");
        if (!(cylinder.z_len > 0.0)) throw std::invalid_argument("beam.z_len must be > 0");
    }

    double normalization() const { return norm_scale * cylinder_mode_normalization(l, k_rho, cylinder); }
};

inline cplx beam_amplitude(const BeamState& b, const Cylindrical& p)
{
    if (!(p.rho >= 0.0)) throw std::invalid_argument("beam_amplitude: rho must be >= 0");
    const double radial = b.normalization() * sf::bessel_j(b.l, b.k_rho * p.rho);
    return radial * std::polar(1.0, b.l * p.phi + b.k_z * p.z);
}

struct InternalState {
    int n = 1;
    int ell = 0;
    int m = 0;
    double bohr = 1.0;

    sf::RadialQuantumNumbers radial() const { return {n, ell, bohr}; }

    void validate() const
    {
        radial().validate();
        if (std::abs(m) > ell) throw std::invalid_argument("internal state: require |m| <= ell");
    }
};

inline cplx internal_amplitude(const InternalState& s, const Spherical& p)
{
    s.validate();
    if (!(p.r >= 0.0)) throw std::invalid_argument("internal_amplitude: q must be >= 0");
    return sf::hydrogenic_radial(s.radial(), p.r) * sf::spherical_harmonic(s.ell, s.m, p.theta, p.phi);
}

/// Center of mass held at (R, Z); its azimuthal state is the L = 0 rotational
/// eigenstate about the beam axis. Phi_R is the reference azimuth used for
/// the localized (unprojected) amplitude.
struct PinnedCM {
    double R = 0.0;
    double Phi_R = 0.0;
    double Z = 0.0;
};

/// J_L(K_rho R) e^{i L Phi_R} e^{i K_z Z}, normalised over the beam cylinder.
struct CylindricalWaveCM {
    double K_z = 0.0;
    double K_rho = 1.0;
    int L = 0;
};

struct CenterOfMassState {
    std::variant<PinnedCM, CylindricalWaveCM> mode{PinnedCM{}};

    bool pinned() const { return std::holds_alternative<PinnedCM>(mode); }
    const PinnedCM& pin() const { return std::get<PinnedCM>(mode); }
    const CylindricalWaveCM& wave() const { return std::get<CylindricalWaveCM>(mode); }
    int L() const { return pinned() ? 0 : wave().L; }

    void validate() const
    {
        if (pinned()) {
            if (!(pin().R >= 0.0)) throw std::invalid_argument("cm.R must be >= 0");
            if (!std::isfinite(pin().Z) || !std::isfinite(pin().Phi_R))
                throw std::invalid_argument("cm position must be finite");
        } else {
            if (!(wave().K_rho > 0.0)) throw std::invalid_argument("cm.K_rho must be > 0");
            if (!std::isfinite(wave().K_z)) throw std::invalid_argument("cm.K_z must be finite");
            if (std::abs(wave().L) > sf::max_bessel_order) throw std::invalid_argument("cm.L out of range");
        }
    }
};

inline cplx cm_amplitude(const CenterOfMassState& c, const Cylinder& cyl, const Cylindrical& p)
{
    if (!(p.rho >= 0.0)) throw std::invalid_argument("cm_amplitude: R must be >= 0");
    if (c.pinned()) return 1.0;
    const auto& w = c.wave();
    const double radial = cylinder_mode_normalization(w.L, w.K_rho, cyl) * sf::bessel_j(w.L, w.K_rho * p.rho);
    return radial * std::polar(1.0, w.L * p.phi + w.K_z * p.z);
}

struct CompositeState {
    BeamState beam;
    InternalState internal;
    CenterOfMassState cm;

    void validate() const
    {
        beam.validate();
        internal.validate();
        cm.validate();
    }
};

} // namespace evortex
