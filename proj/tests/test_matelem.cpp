#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "evortex/matelem.hpp"
#include "oracles.hpp"

using namespace evortex;

namespace {

constexpr double pi = std::numbers::pi;

Transition pinned(int l, int lp, InternalState ei, InternalState ef, double R = 0.0, double rho_max = 20.0,
                  double dkz = 0.0, KernelKind kernel = KernelKind::dipole)
{
    Transition t;
    t.kernel = kernel;
    t.initial.beam.l = l;
    t.final.beam.l = lp;
    t.initial.beam.cylinder.rho_max = t.final.beam.cylinder.rho_max = rho_max;
    t.final.beam.k_z = t.initial.beam.k_z - dkz;
    t.initial.internal = ei;
    t.final.internal = ef;
    t.initial.cm.mode = PinnedCM{R, 0.0, 0.0};
    t.final.cm = t.initial.cm;
    return t;
}

Transition reversed(const Transition& t)
{
    Transition r = t;
    std::swap(r.initial, r.final);
    return r;
}

double rel(cplx a, cplx b) { return std::abs(a - b) / std::abs(b); }

const InternalState s1{1, 0, 0, 1.0};
InternalState p2(int m) { return {2, 1, m, 1.0}; }

} // namespace

TEST(Classify, Channels)
{
    EXPECT_EQ(classify_channel(1, 0, 0, 0, 0, 1).channel, Channel::Q);
    EXPECT_EQ(classify_channel(0, 1, 0, 0, 1, 0).channel, Channel::S);
    EXPECT_EQ(classify_channel(2, 2, 0, 0, 1, 1).channel, Channel::U);
    EXPECT_EQ(classify_channel(1, 0, 0, 0, 0, 0).channel, Channel::forbidden);
    EXPECT_EQ(classify_channel(2, 0, 0, 0, 0, 2).channel, Channel::forbidden);
    // Center-of-mass OAM counts toward what the beam gives up.
    EXPECT_EQ(classify_channel(0, 0, 1, 0, 0, 1).channel, Channel::Q);
    const auto c = classify_channel(2, 0, 1, 3, -1, 1);
    EXPECT_EQ(c.delta_l, 2);
    EXPECT_EQ(c.delta_L, -2);
    EXPECT_EQ(c.delta_m, 2);
    EXPECT_TRUE(conserves_lz(2, 0, 0, 0, 0, 2));
    EXPECT_FALSE(conserves_lz(1, 0, 0, 0, 0, 2));
}

TEST(MatrixElement, ForbiddenShortCircuitsToZero)
{
    const auto me = compute_matrix_element(pinned(1, 0, s1, p2(0), 3.0), {});
    EXPECT_EQ(me.value, cplx(0.0));
    EXPECT_EQ(me.channel.channel, Channel::forbidden);
    EXPECT_EQ(me.quadrature_evals, 0u);
}

TEST(MatrixElement, ForbiddenVanishesNumerically)
{
    const auto allowed = compute_matrix_element(pinned(1, 0, s1, p2(1), 3.0), {});
    for (int mp : {0, -1}) {
        const auto me = compute_matrix_element(pinned(1, 0, s1, p2(mp), 3.0), {}, {.no_shortcircuit = true});
        EXPECT_GT(me.quadrature_evals, 0u);
        EXPECT_LT(std::abs(me.value), forbidden_floor * std::abs(allowed.value)) << mp;
    }
}

TEST(MatrixElement, QChannelAgainstBruteForce)
{
    // 1s -> 2p(m' = 1), beam l = 1 -> 0, atom on the beam axis.
    const auto t = pinned(1, 0, s1, p2(1));
    const auto me = compute_matrix_element(t, {});
    EXPECT_EQ(me.channel.channel, Channel::Q);
    ASSERT_GT(std::abs(me.value), 0.0);
    EXPECT_LT(me.abs_err / std::abs(me.value), 1e-4);
    const cplx bf = oracle::brute_force_dipole_pinned(t.initial.beam, t.final.beam, t.initial.internal,
                                                      t.final.internal, t.initial.cm.pin());
    EXPECT_LT(rel(me.value, bf), 1e-3);
}

TEST(MatrixElement, AloofAtomAgainstBruteForce)
{
    // Atom at R = 3 outside a rho_max = 2 beam.
    const auto t = pinned(2, 1, p2(0), {3, 2, 1, 1.0}, 3.0, 2.0);
    const auto me = compute_matrix_element(t, {});
    const cplx bf = oracle::brute_force_dipole_pinned(t.initial.beam, t.final.beam, t.initial.internal,
                                                      t.final.internal, t.initial.cm.pin());
    EXPECT_LT(rel(me.value, bf), 1e-3);
}

TEST(MatrixElement, ConjugationUnderReversal)
{
    for (const auto& t : {pinned(1, 0, s1, p2(1), 3.0), pinned(0, 0, s1, p2(0), 3.0, 20.0, 0.3),
                          pinned(2, 1, p2(0), {3, 2, 1, 1.0}, 1.5)}) {
        const auto a = compute_matrix_element(t, {});
        const auto b = compute_matrix_element(reversed(t), {});
        EXPECT_LT(rel(a.value, std::conj(b.value)), 1e-10);
    }
}

TEST(MatrixElement, LocalizedPhaseCovariance)
{
    // Rotating the atom by d multiplies the amplitude by e^{i (l - l' + m - m') d}.
    for (auto kernel : {KernelKind::dipole, KernelKind::exact_coulomb}) {
        auto t = pinned(2, 1, s1, p2(1), 3.0, 20.0, 0.3, kernel);
        QuadratureConfig cfg;
        cfg.rel_tol = 1e-6;
        const auto a = localized_matrix_element(t, cfg);
        const double d = 0.9;
        t.initial.cm.mode = t.final.cm.mode = PinnedCM{3.0, d, 0.0};
        const auto b = localized_matrix_element(t, cfg);
        const int order = (2 - 1) + (0 - 1);
        EXPECT_LT(std::abs(b.value - a.value * std::polar(1.0, order * d)), 1e-10 * std::abs(a.value));
    }
}

TEST(MatrixElement, LocalizedRingAverageIsProjected)
{
    // Averaging the localized amplitude over Phi_R gives the L = 0 projection.
    auto t = pinned(1, 1, s1, p2(0), 3.0, 20.0, 0.3);
    const auto proj = compute_matrix_element(t, {});
    const auto loc = localized_matrix_element(t, {});
    EXPECT_LT(rel(loc.value, proj.value), 1e-10);
}

TEST(MatrixElement, LinearInDipoleOperator)
{
    const auto t = pinned(1, 0, s1, p2(1), 3.0);
    const auto a = compute_matrix_element(t, {});
    const auto b = compute_matrix_element(t, {}, {.q_scale = 2.0});
    EXPECT_LT(rel(b.value, 2.0 * a.value), 1e-8);
}

TEST(ChannelAmplitudes, QConjugateIsS)
{
    QuadratureConfig cfg;
    cfg.rel_tol = 1e-10;
    for (double R : {0.0, 3.0}) {
        const auto c = channel_amplitudes(pinned(1, 0, s1, p2(1), R), cfg);
        ASSERT_GT(std::abs(c.Q), 0.0);
        EXPECT_LT(std::abs(std::conj(c.Q) - c.S), 1e-6 * std::abs(c.Q)) << R;
    }
}

TEST(ChannelAmplitudes, AxialNeedsLongitudinalMomentum)
{
    // With dk_z = 0 and the atom centred in z the U integrand is odd in z.
    const auto even = channel_amplitudes(pinned(0, 0, s1, p2(0), 3.0), {});
    const auto kick = channel_amplitudes(pinned(0, 0, s1, p2(0), 3.0, 20.0, 0.3), {});
    EXPECT_LT(std::abs(even.U), 1e-10 * std::abs(kick.U));
    EXPECT_GT(std::abs(kick.U), 0.0);
}

TEST(ChannelAmplitudes, OnAxisAtomOnlyCouplesMatchingOrders)
{
    // R = 0: azimuthal weights are Kronecker deltas in the beam order.
    const auto me = compute_matrix_element(pinned(2, 0, s1, p2(1), 0.0), {}, {.no_shortcircuit = true});
    const auto ok = compute_matrix_element(pinned(1, 0, s1, p2(1), 0.0), {});
    EXPECT_LT(std::abs(me.value), 1e-12 * std::abs(ok.value));
}

TEST(MatrixElement, CoreRadiusInsensitivity)
{
    const auto t = pinned(1, 0, s1, p2(1), 3.0);
    QuadratureConfig a, b;
    a.rel_tol = b.rel_tol = 1e-10;
    a.eps_core = 1e-3;
    b.eps_core = 5e-4;
    const auto ma = compute_matrix_element(t, a);
    const auto mb = compute_matrix_element(t, b);
    EXPECT_LT(rel(ma.value, mb.value), 1e-6);
}

TEST(MatrixElement, NonConvergenceKeepsBestEstimate)
{
    QuadratureConfig cfg;
    cfg.max_evals = 10;
    try {
        compute_matrix_element(pinned(1, 0, s1, p2(1), 3.0), cfg);
        FAIL() << "expected NonConvergence";
    } catch (const NonConvergence& e) {
        EXPECT_FALSE(e.best_estimate().converged);
        EXPECT_GT(e.best_estimate().quadrature_evals, 10u);
        EXPECT_GT(std::abs(e.best_estimate().value), 0.0);
    }
}

TEST(MatrixElement, RejectsInconsistentTransition)
{
    auto t = pinned(1, 0, s1, p2(1));
    t.final.beam.cylinder.rho_max = 10.0;
    EXPECT_THROW(compute_matrix_element(t, {}), std::invalid_argument);
    t = pinned(1, 0, s1, p2(1));
    t.final.cm.mode = PinnedCM{1.0, 0.0, 0.0};
    EXPECT_THROW(compute_matrix_element(t, {}), std::invalid_argument);
}

TEST(TransitionPotential, RadialPartsMatchDirectQuadrature)
{
    const InternalState f{3, 2, 1, 1.0}, i{2, 1, 0, 1.0};
    const TransitionPotential pot(f, i);
    for (int k : {1, 3})
        for (double d : {0.3, 2.0, 7.5, 30.0}) {
            auto g = [&](double q) {
                const double rl = std::min(q, d), rg = std::max(q, d);
                return q * q * sf::hydrogenic_radial(f.radial(), q) * sf::hydrogenic_radial(i.radial(), q) *
                       std::pow(rl, k) / std::pow(rg, k + 1);
            };
            std::vector<double> br{0.0, d};
            for (double x = 2.0; x < 150.0; x += 2.0) br.push_back(x);
            br.push_back(150.0);
            std::sort(br.begin(), br.end());
            const double want = quad::integrate<double>(g, std::span<const double>(br), {1e-300, 1e-13, 20000}).value;
            EXPECT_NEAR(pot.radial_part(k, d), want, 1e-12 * std::abs(want)) << k << " " << d;
        }
    EXPECT_EQ(pot.mu(), -1);
    EXPECT_EQ(pot.radial_part(2, 1.0), 0.0);  // Gaunt coefficient vanishes by parity
}

TEST(TransitionPotential, MatchesDirectIntegralCentredOnFieldPoint)
{
    // V(d) = int psi_f^* psi_i (1/|d - q| - 1/|d|) d^3q, done in spherical
    // coordinates about d so that the 1/s singularity cancels the Jacobian.
    const InternalState f{2, 1, 0, 1.0}, i{2, 1, 1, 1.0};
    const TransitionPotential pot(f, i);
    const Vec3 d{0.8, -0.5, 1.1};
    const auto gl = quad::gauss_legendre(48);
    const int nphi = 64;
    std::vector<double> sbr;
    for (double x = 0.0; x < 80.0; x += 1.0) sbr.push_back(x);
    sbr.push_back(d.norm());
    sbr.push_back(80.0);
    std::sort(sbr.begin(), sbr.end());
    const auto srule = quad::composite_gauss(sbr, 12);
    cplx v = 0.0;
    for (std::size_t a = 0; a < gl.nodes.size(); ++a) {
        const double c = gl.nodes[a], sn = std::sqrt(1 - c * c);
        for (int b = 0; b < nphi; ++b) {
            const double ph = 2 * pi * b / nphi;
            const Vec3 u{sn * std::cos(ph), sn * std::sin(ph), c};
            for (std::size_t j = 0; j < srule.nodes.size(); ++j) {
                const double s = srule.nodes[j];
                const Vec3 q = d + s * u;
                const double qr = q.norm();
                const Spherical qs{qr, std::acos(q.z / qr), std::atan2(q.y, q.x)};
                v += gl.weights[a] * (2 * pi / nphi) * srule.weights[j] * s *
                     std::conj(internal_amplitude(f, qs)) * internal_amplitude(i, qs);
            }
        }
    }
    EXPECT_EQ(pot.overlap(), 0.0);
    EXPECT_LT(std::abs(pot(d) - v), 1e-5 * std::abs(v));
}

TEST(ExactKernel, QuadrupoleEntryIsNonzero)
{
    // l = 2 -> 0 with 1s -> 3d(m' = 2): L_z is conserved but the dipole rule forbids it.
    QuadratureConfig cfg;
    cfg.rel_tol = 1e-6;
    const auto t = pinned(2, 0, s1, {3, 2, 2, 1.0}, 3.0, 20.0, 0.3, KernelKind::exact_coulomb);
    EXPECT_FALSE(t.null_expected());
    const auto me = compute_matrix_element(t, cfg);
    EXPECT_EQ(me.channel.channel, Channel::forbidden);
    EXPECT_GT(std::abs(me.value), 1e-7);
    EXPECT_LT(me.abs_err, 1e-4 * std::abs(me.value));
}

TEST(ExactKernel, LzViolatingEntryIsNull)
{
    QuadratureConfig cfg;
    cfg.rel_tol = 1e-6;
    const auto t = pinned(1, 0, s1, {3, 2, 2, 1.0}, 3.0, 20.0, 0.3, KernelKind::exact_coulomb);
    EXPECT_TRUE(t.null_expected());
    EXPECT_EQ(compute_matrix_element(t, cfg).value, cplx(0.0));
}

TEST(ExactKernel, ApproachesDipoleForCompactTarget)
{
    // The exact kernel differs from the dipole one at O((k a)^2): halving the
    // Bohr radius cuts the gap about fourfold.
    QuadratureConfig cfg;
    cfg.rel_tol = 1e-6;
    std::vector<double> gap;
    for (double a : {0.025, 0.0125}) {
        auto t = pinned(1, 0, {1, 0, 0, a}, {2, 1, 1, a}, 3.0, 20.0, 0.3);
        const auto dip = compute_matrix_element(t, cfg);
        t.kernel = KernelKind::exact_coulomb;
        gap.push_back(rel(compute_matrix_element(t, cfg).value, dip.value));
    }
    EXPECT_LT(gap[1], 0.05);
    EXPECT_GT(gap[0] / gap[1], 3.0);
    EXPECT_LT(gap[0] / gap[1], 5.0);
}

TEST(Scan, NonzeroExactlyWhereAllowed)
{
    ScanSpec spec;
    spec.cm_initial.mode = spec.cm_final.mode = PinnedCM{3.0, 0.0, 0.0};
    spec.final_beam.k_z = 99.7;
    for (int mp = -1; mp <= 1; ++mp) spec.transitions.push_back({s1, p2(mp)});
    const auto rows = selection_scan(spec, {}, {.no_shortcircuit = true});
    ASSERT_EQ(rows.size(), 27u);
    double allowed_min = INFINITY;
    for (const auto& r : rows) {
        EXPECT_TRUE(r.converged);
        if (!r.null_expected) allowed_min = std::min(allowed_min, r.abs_M);
    }
    EXPECT_GT(allowed_min, 0.0);
    EXPECT_LT(forbidden_ratio(rows), forbidden_floor);
}

TEST(Scan, ThreadCountDoesNotChangeRows)
{
    ScanSpec spec;
    spec.l_min = spec.lp_min = 0;
    spec.cm_initial.mode = spec.cm_final.mode = PinnedCM{3.0, 0.0, 0.0};
    spec.final_beam.k_z = 99.7;
    spec.transitions.push_back({s1, p2(1)});
    spec.transitions.push_back({s1, p2(0)});
    const auto a = selection_scan(spec, {}, {.threads = 1});
    const auto b = selection_scan(spec, {}, {.threads = 4});
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].value, b[k].value);
        EXPECT_EQ(a[k].evals, b[k].evals);
    }
}

TEST(Scan, RejectsLargeOrders)
{
    ScanSpec spec;
    spec.l_max = 6;
    EXPECT_THROW(selection_scan(spec, {}), std::invalid_argument);
}
