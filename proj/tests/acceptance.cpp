// Acceptance run: one PASS/FAIL line per criterion, exit 0 iff all pass.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "evortex/cli.hpp"
#include "oracles.hpp"

using namespace evortex;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... v)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, v...);
    return buf;
}

Transition pinned(int l, int lp, InternalState ei, InternalState ef, double R, double rho_max = 20.0,
                  double dkz = 0.0)
{
    Transition t;
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

Outcome selection_rules()
{
    ScanSpec spec;
    spec.l_min = spec.lp_min = -2;
    spec.l_max = spec.lp_max = 2;
    spec.cm_initial.mode = spec.cm_final.mode = PinnedCM{3.0, 0.0, 0.0};
    spec.final_beam.k_z = 99.7;
    for (int mp = -1; mp <= 1; ++mp) spec.transitions.push_back({{1, 0, 0, 1.0}, {2, 1, mp, 1.0}});
    const auto t0 = Clock::now();
    const auto rows = selection_scan(spec, {}, {.no_shortcircuit = true});
    const double secs = seconds_since(t0);
    bool nonzero = true, consistent = true;
    int allowed = 0;
    for (const auto& r : rows) {
        consistent = consistent && r.converged && r.null_expected == (r.channel.channel == Channel::forbidden);
        if (!r.null_expected) {
            ++allowed;
            nonzero = nonzero && r.abs_M > 0.0;
        }
    }
    const double ratio = forbidden_ratio(rows);
    return {nonzero && consistent && ratio < forbidden_floor && secs < 600.0,
            fmt("%zu entries, %d allowed, all allowed nonzero: %s, forbidden/max allowed %.2e, %.0f s", rows.size(),
                allowed, nonzero ? "yes" : "no", ratio, secs)};
}

Outcome exact_conservation()
{
    const RunConfig c = load_config(std::string(EVORTEX_CONFIG_DIR) + "/scan_exact.json");
    const auto t0 = Clock::now();
    const auto rows = selection_scan(c.scan_spec(), c.quadrature, {.no_shortcircuit = true});
    const double secs = seconds_since(t0);
    double allowed = 0.0, violating = 0.0, quadrupole = 0.0;
    bool converged = true;
    for (const auto& r : rows) {
        converged = converged && r.converged;
        if (conserves_lz(r.l, r.lp, r.L, r.Lp, r.m, r.mp)) allowed = std::max(allowed, r.abs_M);
        else violating = std::max(violating, r.abs_M);
        // Beam gives up two units and the atom takes them: l - l' = 2, m' - m = 2.
        if (r.l - r.lp == 2 && std::abs(r.mp - r.m) == 2) quadrupole = std::max(quadrupole, r.abs_M);
    }
    const double ratio = violating / allowed;
    return {converged && ratio < forbidden_floor && quadrupole > forbidden_floor * allowed,
            fmt("%zu entries, violating/max allowed %.2e, |M| for l 2->0, m 0->2: %.6e (max allowed %.6e), %.0f s",
                rows.size(), ratio, quadrupole, allowed, secs)};
}

Outcome conjugation()
{
    QuadratureConfig cfg;
    cfg.rel_tol = 1e-10;
    double worst = 0.0;
    for (double R : {0.0, 1.5, 3.0})
        for (int l : {-1, 0, 1, 2}) {
            const auto a = channel_amplitudes(pinned(l, l - 1, {1, 0, 0, 1.0}, {2, 1, 1, 1.0}, R), cfg);
            worst = std::max(worst, std::abs(std::conj(a.Q) - a.S) / std::abs(a.Q));
        }
    return {worst < 1e-6, fmt("max |conj(Q) - S| / |Q| = %.2e over R in {0, 1.5, 3}, l in [-1, 2]", worst)};
}

Outcome helicity_equality()
{
    DichroismFamily fam;
    fam.cm.mode = PinnedCM{3.0, 0.0, 0.0};
    QuadratureConfig cfg;
    cfg.rel_tol = 1e-9;
    const auto rep = dichroic_signal(fam, SublevelDOS::uniform(), 1, cfg);
    const double asym = std::abs(rep.gamma_plus - rep.gamma_minus) / (rep.gamma_plus + rep.gamma_minus);
    const auto plus = helicity_channels(fam, 1, +1, cfg);
    const auto minus = helicity_channels(fam, 1, -1, cfg);
    std::vector<cplx> ratio;
    for (const auto& p : plus)
        for (const auto& m : minus)
            if (m.m == -p.m) ratio.push_back(m.M / (-std::conj(p.M)));
    double dev = ratio.size() == 3 ? 0.0 : INFINITY;
    for (const auto& r : ratio)
        dev = std::max({dev, std::abs(r.imag()) / std::abs(r), std::abs(r - ratio[0]) / std::abs(ratio[0])});
    return {asym < 1e-6 && dev < 1e-6,
            fmt("|G+ - G-|/(G+ + G-) = %.2e; M(-1) = -c conj(M(+1)) with common real c = %.9f, max deviation %.2e",
                asym, ratio.empty() ? 0.0 : ratio[0].real(), dev)};
}

Outcome dichroism_mechanism()
{
    DichroismFamily fam;
    fam.cm.mode = PinnedCM{3.0, 0.0, 0.0};
    QuadratureConfig cfg;
    cfg.rel_tol = 1e-9;
    const SublevelDOS mag{{{1, 1.0}, {-1, 0.0}}, 0.0};
    const double s = dichroic_signal(fam, mag, 1, cfg).signal;
    const double m = dichroic_signal(fam, mag.mirrored(), 1, cfg).signal;
    const double u = dichroic_signal(fam, SublevelDOS::uniform(), 1, cfg).signal;
    // Graded DOS over every sublevel: the flip holds beyond the one-hot case.
    const SublevelDOS graded{{{-2, 0.1}, {-1, 0.3}, {0, 0.5}, {1, 0.7}, {2, 0.9}}, 0.0};
    const double g = dichroic_signal(fam, graded, 1, cfg).signal;
    const double gm = dichroic_signal(fam, graded.mirrored(), 1, cfg).signal;
    return {std::abs(s) > 0.1 && m == -s && std::abs(g + gm) < 1e-10 && std::abs(u) < 1e-6,
            fmt("magnetic %.6f, mirrored %.6f; graded %.9f / %.9f; uniform %.2e", s, m, g, gm, u)};
}

Outcome kernel_identity()
{
    std::mt19937_64 rng(20111);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double pi = std::numbers::pi;
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Cylindrical r{10 * u(rng), 2 * pi * u(rng), 20 * u(rng) - 10};
        const Cylindrical R{5 * u(rng), 2 * pi * u(rng), 4 * u(rng) - 2};
        const Spherical q{0.01 + 3 * u(rng), pi * u(rng), 2 * pi * u(rng)};
        const double d = (to_cartesian(r) - to_cartesian(R)).norm();
        if (d < 1e-2) continue;
        const double a = dipole_kernel(r, R, q), b = decomposed_dipole_kernel(r, R, q);
        worst = std::max(worst, std::abs(a - b) / (q.r / (d * d)));
    }
    double yworst = 0.0;
    for (double F : {0.5, 2.0, 7.0, 30.0})
        for (double g : {0.05, 0.3, 0.7, 0.95, 0.999})
            for (int n = -2; n <= 2; ++n) {
                const double a = y_alpha(n, F, g * F).value, b = y_alpha_elliptic(n, F, g * F);
                yworst = std::max(yworst, std::abs(a - b) / std::abs(b));
            }
    return {worst < 1e-12 && yworst < 1e-10,
            fmt("decomposed vs direct, 1e4 points: %.2e; Y_alpha vs elliptic, 20 (F,G) x 5 n: %.2e", worst, yworst)};
}

Outcome oracle_equivalence()
{
    struct Case {
        const char* name;
        Transition t;
    };
    const std::vector<Case> cases{
        {"1s->2p+1 l 1->0 on axis", pinned(1, 0, {1, 0, 0, 1.0}, {2, 1, 1, 1.0}, 0.0)},
        {"1s->2p-1 l -1->0 on axis", pinned(-1, 0, {1, 0, 0, 1.0}, {2, 1, -1, 1.0}, 0.0)},
        {"1s->2p0 l 0->0 on axis, dk_z 0.3", pinned(0, 0, {1, 0, 0, 1.0}, {2, 1, 0, 1.0}, 0.0, 20.0, 0.3)},
        {"1s->2p+1 l 1->0 aloof R 3", pinned(1, 0, {1, 0, 0, 1.0}, {2, 1, 1, 1.0}, 3.0, 2.0)},
        {"1s->2p0 l 1->1 aloof R 3, dk_z 0.3", pinned(1, 1, {1, 0, 0, 1.0}, {2, 1, 0, 1.0}, 3.0, 2.0, 0.3)},
        {"2p0->3d+1 l 2->1 aloof R 3", pinned(2, 1, {2, 1, 0, 1.0}, {3, 2, 1, 1.0}, 3.0, 2.0)},
    };
    double worst = 0.0, slowest = 0.0;
    std::string per;
    for (const auto& c : cases) {
        const auto t0 = Clock::now();
        const auto me = compute_matrix_element(c.t, {});
        const cplx bf = oracle::brute_force_dipole_pinned(c.t.initial.beam, c.t.final.beam, c.t.initial.internal,
                                                          c.t.final.internal, c.t.initial.cm.pin());
        slowest = std::max(slowest, seconds_since(t0));
        const double rel = std::abs(me.value - bf) / std::abs(bf);
        worst = std::max(worst, rel);
        per += fmt("\n      %-38s |M| %.6e  rel %.2e", c.name, std::abs(me.value), rel);
    }
    return {worst < 1e-3 && slowest < 300.0,
            fmt("%zu transitions, max rel %.2e, slowest %.1f s", cases.size(), worst, slowest) + per};
}

Outcome determinism()
{
    const auto dir = fs::temp_directory_path() / "evortex_acceptance_determinism";
    fs::remove_all(dir);
    const std::string cfg = std::string(EVORTEX_CONFIG_DIR) + "/scan_dipole.json";
    auto scan = [&](const std::string& sub, const std::string& threads) {
        const std::string out = (dir / sub).string();
        const char* argv[] = {"evortex", "scan", "--config", cfg.c_str(), "--out", out.c_str(), "--threads",
                              threads.c_str()};
        std::ostringstream sink;
        const int s = cli::run(8, argv, sink, sink);
        std::ifstream in(dir / sub / "scan.csv", std::ios::binary);
        std::ostringstream text;
        text << in.rdbuf();
        return std::pair{s, text.str()};
    };
    const auto a = scan("run1", "1"), b = scan("run2", "1"), c = scan("threads8", "8");
    const bool ok = a.first == 0 && b.first == 0 && c.first == 0 && !a.second.empty() && a.second == b.second &&
                    a.second == c.second;
    return {ok, fmt("scan.csv (%zu bytes): rerun identical %s, --threads 1 vs 8 identical %s", a.second.size(),
                    a.second == b.second ? "yes" : "no", a.second == c.second ? "yes" : "no")};
}

} // namespace

int main()
{
    std::setvbuf(stdout, nullptr, _IONBF, 0);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"1 selection rules, dipole scan R = 3, l, l' in [-2, 2]", selection_rules},
        {"2 exact-kernel L_z conservation and quadrupole transfer", exact_conservation},
        {"3 channel conjugation Q* = S", conjugation},
        {"4 helicity equality, 2p->3d, uniform DOS", helicity_equality},
        {"5 dichroism from the sublevel DOS", dichroism_mechanism},
        {"6 kernel identity and Y_alpha closed form", kernel_identity},
        {"7 reduced engine vs brute-force tensor grid", oracle_equivalence},
        {"8 scan determinism", determinism},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s  %s\n      %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        failed += !o.pass;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
