#pragma once
/// \file dichroism.hpp
/// \brief Golden-rule rates for beams of opposite winding number and the
/// dichroic signal produced by unequal magnetic-sublevel densities of states.
///
/// Rates are relative: Gamma_l = sum_f |M_f|^2 rho(m'_f). Only the dipole
/// channels m' = m +- 1 enter, the sign following the beam helicity.

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evortex/matelem.hpp"

namespace evortex {

/// Relative density of final states per magnetic sublevel m'. Sublevels
/// not listed take the fallback weight.
struct SublevelDOS {
    std::map<int, double> weights;
    double fallback = 0.0;

    static SublevelDOS uniform(double w = 1.0) { return {{}, w}; }

    double at(int mp) const
    {
        const auto it = weights.find(mp);
        return it == weights.end() ? fallback : it->second;
    }

    /// rho(m') -> rho(-m').
    SublevelDOS mirrored() const
    {
        SublevelDOS out{{}, fallback};
        for (const auto& [m, w] : weights) out.weights[-m] = w;
        return out;
    }

    void validate() const
    {
        bool positive = fallback > 0.0;
        if (!(fallback >= 0.0)) throw std::invalid_argument("dos: weights must be >= 0");
        for (const auto& [m, w] : weights) {
            if (!(w >= 0.0)) throw std::invalid_argument("dos: weight for m' = " + std::to_string(m) + " must be >= 0");
            positive = positive || w > 0.0;
        }
        if (!positive) throw std::invalid_argument("dos: at least one weight must be > 0");
    }
};

struct ChannelTerm {
    int m = 0;
    int mp = 0;
    cplx M = 0.0;
};

/// Gamma_l = sum |M|^2 rho(m'), proportionality constant 1.
inline double transition_rate(int /*beam_l*/, std::span<const ChannelTerm> terms, const SublevelDOS& dos)
{
    if (terms.empty()) throw std::invalid_argument("transition_rate: empty transition list");
    double rate = 0.0;
    for (const auto& t : terms) rate += std::norm(t.M) * dos.at(t.mp);
    return rate;
}

/// Internal transitions n ell m -> n' ell' (m +- 1) for a list of initial m.
struct DichroismFamily {
    BeamState beam;        // k's and cylinder; l is set per helicity
    BeamState final_beam;  // k's of the outgoing mode
    CenterOfMassState cm;
    int n = 2, ell = 1;
    int np = 3, ellp = 2;
    double bohr = 1.0;
    std::vector<int> initial_m{-1, 0, 1};
    KernelKind kernel = KernelKind::dipole;
};

struct ChannelBreakdown {
    int l = 0, lp = 0, m = 0, mp = 0;
    cplx M = 0.0;
    double abs_err = 0.0;
    double dos = 0.0;
    double contribution = 0.0;
};

struct DichroismReport {
    int abs_l = 1;
    double gamma_plus = 0.0;
    double gamma_minus = 0.0;
    double signal = 0.0;
    std::vector<ChannelBreakdown> channels;
    std::string dos_model = "toy sublevel density of states (stand-in for a magnetised sample)";
};

/// Matrix elements for winding number l = helicity * |l| -> l - helicity,
/// internal m -> m + helicity.
inline std::vector<ChannelBreakdown> helicity_channels(const DichroismFamily& fam, int abs_l, int helicity,
                                                       const QuadratureConfig& cfg, const EvalOptions& opts = {})
{
    BeamState bi = fam.beam;
    bi.l = helicity * abs_l;
    BeamState bf = fam.final_beam;
    bf.l = bi.l - helicity;
    std::vector<ChannelBreakdown> out;
    std::optional<ProjectedCouplings> g;
    for (int m : fam.initial_m) {
        const int mp = m + helicity;
        if (std::abs(m) > fam.ell || std::abs(mp) > fam.ellp) continue;
        const InternalState ii{fam.n, fam.ell, m, fam.bohr};
        const InternalState ff{fam.np, fam.ellp, mp, fam.bohr};
        ChannelBreakdown c{bi.l, bf.l, m, mp};
        if (fam.kernel == KernelKind::dipole) {
            if (!g) {
                g = projected_dipole_couplings(bi, bf, fam.cm, fam.cm, cfg);
                if (!g->converged) {
                    MatrixElement best;
                    throw NonConvergence("dichroism: coupling quadrature did not converge", best);
                }
            }
            const auto d = dipole_moments(ff, ii, opts.q_scale);
            c.M = d.raise * g->value[0] + d.lower * g->value[1] + d.axial * g->value[2];
            c.abs_err = (std::abs(d.raise) + std::abs(d.lower) + std::abs(d.axial)) * g->abs_err;
        } else {
            const Transition t{{bi, ii, fam.cm}, {bf, ff, fam.cm}, fam.kernel};
            const auto me = compute_matrix_element(t, cfg, opts);
            c.M = me.value;
            c.abs_err = me.abs_err;
        }
        out.push_back(c);
    }
    return out;
}

inline DichroismReport dichroic_signal(const DichroismFamily& fam, const SublevelDOS& dos, int abs_l,
                                       const QuadratureConfig& cfg, const EvalOptions& opts = {})
{
    if (abs_l < 1) throw std::invalid_argument("dichroic_signal: |l| must be >= 1");
    dos.validate();
    DichroismReport rep;
    rep.abs_l = abs_l;
    for (int helicity : {+1, -1}) {
        auto ch = helicity_channels(fam, abs_l, helicity, cfg, opts);
        std::vector<ChannelTerm> terms;
        for (auto& c : ch) {
            c.dos = dos.at(c.mp);
            c.contribution = std::norm(c.M) * c.dos;
            terms.push_back({c.m, c.mp, c.M});
            rep.channels.push_back(c);
        }
        const double rate = transition_rate(helicity * abs_l, terms, dos);
        (helicity > 0 ? rep.gamma_plus : rep.gamma_minus) = rate;
    }
    const double total = rep.gamma_plus + rep.gamma_minus;
    rep.signal = total > 0.0 ? (rep.gamma_plus - rep.gamma_minus) / total : 0.0;
    return rep;
}

} // namespace evortex
