#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "evortex/quadrature.hpp"
#include "evortex/states.hpp"

using namespace evortex;

namespace {

// Independent 2D oracle: composite Gauss in rho, uniform trapezoid in Phi,
// times the trivially known z length.
double beam_norm_2d(const BeamState& b)
{
    std::vector<double> br;
    for (double x = 0.0; x < b.cylinder.rho_max; x += 0.25) br.push_back(x);
    br.push_back(b.cylinder.rho_max);
    const auto rule = quad::composite_gauss(br, 12);
    const int nphi = 32;
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        for (int j = 0; j < nphi; ++j) {
            const double phi = 2 * std::numbers::pi * j / nphi;
            s += rule.weights[i] * rule.nodes[i] * (2 * std::numbers::pi / nphi) *
                 std::norm(beam_amplitude(b, {rule.nodes[i], phi, 0.3}));
        }
    return s * b.cylinder.z_len;
}

} // namespace

TEST(Beam, VanishesOnAxisForNonzeroWinding)
{
    BeamState b;
    b.l = 1;
    EXPECT_EQ(beam_amplitude(b, {0.0, 0.4, 1.0}), cplx(0.0));
    b.l = 0;
    EXPECT_GT(std::abs(beam_amplitude(b, {0.0, 0.4, 1.0})), 0.0);
}

TEST(Beam, ModulusIsAzimuthallySymmetric)
{
    BeamState b;
    b.l = 2;
    const double a = std::abs(beam_amplitude(b, {0.7, 0.2, 1.1}));
    EXPECT_NEAR(std::abs(beam_amplitude(b, {0.7, 0.2 + 1.3, 1.1})), a, 1e-15 * a);
}

TEST(Beam, SingleValued)
{
    for (int l = -2; l <= 2; ++l) {
        BeamState b;
        b.l = l;
        const cplx a = beam_amplitude(b, {0.9, 0.6, 0.2});
        const cplx c = beam_amplitude(b, {0.9, 0.6 + 2 * std::numbers::pi, 0.2});
        EXPECT_NEAR(std::abs(a - c), 0.0, 1e-14 * std::abs(a) + 1e-300);
    }
}

TEST(Beam, NormOverCylinder)
{
    for (int l : {0, 1, -1, 2, -2}) {
        BeamState b;
        b.l = l;
        EXPECT_NEAR(beam_norm_2d(b), 1.0, 1e-6) << l;
    }
    BeamState other{80.0, 3.3, 1, {12.0, 30.0}};
    EXPECT_NEAR(beam_norm_2d(other), 1.0, 1e-6);
}

TEST(Beam, WindingNumber)
{
    // (1/2pi) times the accumulated phase change around a small circle.
    for (int l = -2; l <= 2; ++l) {
        BeamState b;
        b.l = l;
        const int steps = 720;
        double total = 0.0;
        cplx prev = beam_amplitude(b, {0.05, 0.0, 0.0});
        for (int j = 1; j <= steps; ++j) {
            const cplx cur = beam_amplitude(b, {0.05, 2 * std::numbers::pi * j / steps, 0.0});
            total += std::arg(cur / prev);
            prev = cur;
        }
        EXPECT_NEAR(total / (2 * std::numbers::pi), l, 1e-6);
    }
}

TEST(Beam, TotalWavevector)
{
    BeamState b{3.0, 4.0, 0};
    EXPECT_DOUBLE_EQ(b.k_total(), 5.0);
}

TEST(Beam, Validation)
{
    BeamState b;
    b.k_rho = -1.0;
    EXPECT_THROW(b.validate(), std::invalid_argument);
    b = BeamState{};
    b.k_z = 0.0;
    EXPECT_THROW(b.validate(), std::invalid_argument);
    b = BeamState{};
    b.cylinder.z_len = 0.0;
    EXPECT_THROW(b.validate(), std::invalid_argument);
    EXPECT_THROW(beam_amplitude(BeamState{}, {-1.0, 0.0, 0.0}), std::invalid_argument);
}

TEST(Internal, Amplitudes)
{
    EXPECT_NEAR(internal_amplitude({1, 0, 0, 1.0}, {0.0, 0.3, 0.1}).real(), 0.5641895835, 1e-10);
    const cplx a = internal_amplitude({2, 1, 1, 1.0}, {1.0, std::numbers::pi / 2, 0.0});
    // R_21(1) Y_11(pi/2, 0) = (e^{-1/2} / (2 sqrt 6)) (-sqrt(3 / 8 pi)).
    EXPECT_NEAR(a.real(), -std::exp(-0.5) / (2 * std::sqrt(6.0)) * std::sqrt(3.0 / (8.0 * std::numbers::pi)), 1e-15);
    EXPECT_NEAR(a.real(), -0.04277478504, 1e-11);
    const double d = 0.77;
    const cplx p0 = internal_amplitude({3, 2, -2, 1.0}, {1.3, 0.8, 0.1});
    const cplx p1 = internal_amplitude({3, 2, -2, 1.0}, {1.3, 0.8, 0.1 + d});
    EXPECT_NEAR(std::abs(p1 - p0 * std::polar(1.0, -2 * d)), 0.0, 1e-15);
}

TEST(Internal, Validation)
{
    EXPECT_THROW(internal_amplitude({2, 1, 2, 1.0}, {1.0, 0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(internal_amplitude({2, 2, 0, 1.0}, {1.0, 0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(internal_amplitude({1, 0, 0, 1.0}, {-1.0, 0.0, 0.0}), std::invalid_argument);
}

TEST(CenterOfMass, PinnedIsOne)
{
    CenterOfMassState c;
    c.mode = PinnedCM{2.0, 0.5, -1.0};
    EXPECT_EQ(cm_amplitude(c, Cylinder{}, {5.0, 1.0, 3.0}), cplx(1.0));
    EXPECT_EQ(c.L(), 0);
}

TEST(CenterOfMass, WaveOnAxisAndPhase)
{
    CenterOfMassState c;
    c.mode = CylindricalWaveCM{0.5, 2.0, 0};
    const Cylinder cyl;
    const double norm = cylinder_mode_normalization(0, 2.0, cyl);
    EXPECT_NEAR(cm_amplitude(c, cyl, {0.0, 0.0, 0.0}).real(), norm, 1e-15);
    c.mode = CylindricalWaveCM{0.5, 2.0, 3};
    const double d = 0.4;
    const cplx a = cm_amplitude(c, cyl, {1.1, 0.2, 0.3});
    const cplx b = cm_amplitude(c, cyl, {1.1, 0.2 + d, 0.3});
    EXPECT_NEAR(std::abs(b - a * std::polar(1.0, 3 * d)), 0.0, 1e-15);
    EXPECT_THROW(cm_amplitude(c, cyl, {-0.1, 0.0, 0.0}), std::invalid_argument);
}

TEST(CompositeState, Validates)
{
    CompositeState s;
    EXPECT_NO_THROW(s.validate());
    s.internal.m = 1;
    EXPECT_THROW(s.validate(), std::invalid_argument);
}
