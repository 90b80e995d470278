#pragma once
/// \file cli.hpp
/// \brief The evortex command-line front end.
///
/// Exit codes: 0 success, 1 configuration or usage error, 2 numerical
/// non-convergence (the best estimate is still written).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evortex/config.hpp"
#include "evortex/dichroism.hpp"
#include "evortex/kernels.hpp"
#include "evortex/matelem.hpp"

namespace evortex::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 1;
inline constexpr int exit_nonconvergence = 2;

struct Options {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::string> format;
    std::optional<std::uint64_t> seed;
    bool no_shortcircuit = false;
    unsigned threads = 1;
    // yalpha
    int n_min = -2, n_max = 2;
    std::vector<double> F{2.0};
    std::vector<double> G{0.0, 0.5, 1.0, 1.5};
    double tol = 1e-12;
};

/// Fixed-width scientific formatting, identical on every run.
inline std::string sci(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12e", v == 0.0 ? 0.0 : v);
    return buf;
}

namespace detail {

inline RunConfig resolve(const Options& o)
{
    RunConfig c = o.config.empty() ? parse_config(json::object()) : load_config(o.config);
    if (o.out) c.output.dir = *o.out;
    if (o.format) {
        if (*o.format != "csv" && *o.format != "json") throw ConfigError("--format: expected csv or json");
        c.output.format = *o.format;
    }
    if (o.seed) c.quadrature.seed = *o.seed;
    if (o.no_shortcircuit) c.no_shortcircuit = true;
    return c;
}

inline std::filesystem::path out_path(const RunConfig& c, const std::string& name)
{
    std::filesystem::create_directories(c.output.dir);
    return std::filesystem::path(c.output.dir) / name;
}

inline void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

inline json complex_json(cplx v) { return {{"re", v.real()}, {"im", v.imag()}}; }

inline json matrix_element_json(const MatrixElement& me, bool null_expected, bool shortcircuited)
{
    json w = json::array();
    for (const auto& s : me.warnings) w.push_back(s);
    return {{"value", complex_json(me.value)},
            {"abs_M", std::abs(me.value)},
            {"phase", std::arg(me.value)},
            {"abs_err", me.abs_err},
            {"channel", to_string(me.channel.channel)},
            {"delta_l", me.channel.delta_l},
            {"delta_L", me.channel.delta_L},
            {"delta_m", me.channel.delta_m},
            {"null_expected", null_expected},
            {"shortcircuited", shortcircuited},
            {"quadrature_evals", me.quadrature_evals},
            {"converged", me.converged},
            {"warnings", w}};
}

} // namespace detail

inline int cmd_matelem(const Options& o, std::ostream& out)
{
    const RunConfig c = detail::resolve(o);
    const Transition t = c.transition();
    int status = exit_ok;
    MatrixElement me;
    try {
        me = compute_matrix_element(t, c.quadrature, {c.no_shortcircuit, 1.0});
    } catch (const NonConvergence& e) {
        me = e.best_estimate();
        status = exit_nonconvergence;
    }
    const bool shortcut = t.null_expected() && !c.no_shortcircuit;
    json rep;
    rep["config"] = to_json(c);
    rep["matrix_element"] = detail::matrix_element_json(me, t.null_expected(), shortcut);
    detail::write_file(detail::out_path(c, "matelem.json"), rep.dump(2) + "\n");
    if (c.output.format == "csv") {
        std::string csv = "l,lp,L,Lp,m,mp,channel,re,im,abs_M,abs_err,evals\n";
        csv += std::to_string(t.initial.beam.l) + "," + std::to_string(t.final.beam.l) + "," +
               std::to_string(t.initial.cm.L()) + "," + std::to_string(t.final.cm.L()) + "," +
               std::to_string(t.initial.internal.m) + "," + std::to_string(t.final.internal.m) + "," +
               to_string(me.channel.channel) + "," + sci(me.value.real()) + "," + sci(me.value.imag()) + "," +
               sci(std::abs(me.value)) + "," + sci(me.abs_err) + "," + std::to_string(me.quadrature_evals) + "\n";
        detail::write_file(detail::out_path(c, "matelem.csv"), csv);
    }
    out << "channel  " << to_string(me.channel.channel) << (shortcut ? " (short-circuited)" : "") << "\n"
        << "|M|      " << sci(std::abs(me.value)) << "\n"
        << "phase    " << sci(std::arg(me.value)) << "\n"
        << "abs_err  " << sci(me.abs_err) << "\n"
        << "evals    " << me.quadrature_evals << "\n";
    for (const auto& w : me.warnings) out << "warning: " << w << "\n";
    if (status != exit_ok) out << "error: quadrature did not converge; best estimate written\n";
    return status;
}

/// CSV with columns l,lp,L,Lp,m,mp,channel,abs_M,abs_err,evals.
inline std::string scan_csv(const std::vector<ScanRow>& rows)
{
    std::string s = "l,lp,L,Lp,m,mp,channel,abs_M,abs_err,evals\n";
    for (const auto& r : rows)
        s += std::to_string(r.l) + "," + std::to_string(r.lp) + "," + std::to_string(r.L) + "," +
             std::to_string(r.Lp) + "," + std::to_string(r.m) + "," + std::to_string(r.mp) + "," +
             to_string(r.channel.channel) + "," + sci(r.abs_M) + "," + sci(r.abs_err) + "," +
             std::to_string(r.evals) + "\n";
    return s;
}

/// Plot-ready blocks (gnuplot "index"): one block per transition and l,
/// columns l' and |M|.
inline std::string scan_dat(const std::vector<ScanRow>& rows)
{
    std::string s;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const bool new_block = i == 0 || r.l != rows[i - 1].l || r.m != rows[i - 1].m || r.mp != rows[i - 1].mp ||
                               r.n != rows[i - 1].n || r.np != rows[i - 1].np || r.ell != rows[i - 1].ell ||
                               r.ellp != rows[i - 1].ellp;
        if (new_block) {
            if (i > 0) s += "\n\n";
            s += "# " + std::to_string(r.n) + "," + std::to_string(r.ell) + "," + std::to_string(r.m) + " -> " +
                 std::to_string(r.np) + "," + std::to_string(r.ellp) + "," + std::to_string(r.mp) +
                 "  l = " + std::to_string(r.l) + "\n# lp abs_M\n";
        }
        s += std::to_string(r.lp) + " " + sci(r.abs_M) + "\n";
    }
    return s;
}

inline int cmd_scan(const Options& o, std::ostream& out)
{
    const RunConfig c = detail::resolve(o);
    const auto rows = selection_scan(c.scan_spec(), c.quadrature, {c.no_shortcircuit, o.threads});
    bool ok = true;
    for (const auto& r : rows) ok = ok && (r.converged || r.null_expected);
    detail::write_file(detail::out_path(c, "scan.csv"), scan_csv(rows));
    detail::write_file(detail::out_path(c, "scan.dat"), scan_dat(rows));
    if (c.output.format == "json") {
        json rep;
        rep["config"] = to_json(c);
        json arr = json::array();
        for (const auto& r : rows)
            arr.push_back({{"l", r.l},
                           {"lp", r.lp},
                           {"L", r.L},
                           {"Lp", r.Lp},
                           {"n", r.n},
                           {"ell", r.ell},
                           {"m", r.m},
                           {"np", r.np},
                           {"ellp", r.ellp},
                           {"mp", r.mp},
                           {"channel", to_string(r.channel.channel)},
                           {"null_expected", r.null_expected},
                           {"value", detail::complex_json(r.value)},
                           {"abs_M", r.abs_M},
                           {"abs_err", r.abs_err},
                           {"evals", r.evals},
                           {"converged", r.converged}});
        rep["rows"] = arr;
        rep["forbidden_ratio"] = forbidden_ratio(rows);
        detail::write_file(detail::out_path(c, "scan.json"), rep.dump(2) + "\n");
    }
    std::size_t allowed = 0;
    for (const auto& r : rows) allowed += !r.null_expected;
    out << rows.size() << " entries, " << allowed << " allowed; forbidden/allowed max ratio "
        << sci(forbidden_ratio(rows)) << "\n";
    if (!ok) {
        out << "error: some allowed entries did not converge\n";
        return exit_nonconvergence;
    }
    return exit_ok;
}

inline int cmd_dichroism(const Options& o, std::ostream& out)
{
    const RunConfig c = detail::resolve(o);
    const auto rep = dichroic_signal(c.family(), c.dos.dos(), c.dichroism.abs_l, c.quadrature);
    json j;
    j["config"] = to_json(c);
    j["dos_model"] = rep.dos_model;
    j["abs_l"] = rep.abs_l;
    j["gamma_plus"] = rep.gamma_plus;
    j["gamma_minus"] = rep.gamma_minus;
    j["signal"] = rep.signal;
    json ch = json::array();
    std::string csv = "# " + rep.dos_model + "\nl,lp,m,mp,abs_M,abs_err,dos,contribution\n";
    for (const auto& b : rep.channels) {
        ch.push_back({{"l", b.l},
                      {"lp", b.lp},
                      {"m", b.m},
                      {"mp", b.mp},
                      {"value", detail::complex_json(b.M)},
                      {"abs_M", std::abs(b.M)},
                      {"abs_err", b.abs_err},
                      {"dos", b.dos},
                      {"contribution", b.contribution}});
        csv += std::to_string(b.l) + "," + std::to_string(b.lp) + "," + std::to_string(b.m) + "," +
               std::to_string(b.mp) + "," + sci(std::abs(b.M)) + "," + sci(b.abs_err) + "," + sci(b.dos) + "," +
               sci(b.contribution) + "\n";
    }
    j["channels"] = ch;
    detail::write_file(detail::out_path(c, "dichroism.json"), j.dump(2) + "\n");
    detail::write_file(detail::out_path(c, "dichroism.csv"), csv);
    out << "gamma(+" << rep.abs_l << ") " << sci(rep.gamma_plus) << "\n"
        << "gamma(-" << rep.abs_l << ") " << sci(rep.gamma_minus) << "\n"
        << "signal    " << sci(rep.signal) << "  [" << rep.dos_model << "]\n";
    return exit_ok;
}

inline int cmd_yalpha(const Options& o, std::ostream& out)
{
    if (o.n_min > o.n_max) throw ConfigError("--n-max must be >= --n-min");
    if (!(o.tol > 0.0)) throw ConfigError("--tol must be > 0");
    for (double F : o.F)
        for (double G : o.G)
            if (!(F > G && G >= 0.0))
                throw ConfigError("yalpha: require F > G >= 0 (F = " + sci(F) + ", G = " + sci(G) + ")");
    RunConfig c;
    if (o.out) c.output.dir = *o.out;
    if (o.format) c.output.format = *o.format;
    std::string csv = "n_eff,F,G,value,err\n";
    json rows = json::array();
    for (int n = o.n_min; n <= o.n_max; ++n)
        for (double F : o.F)
            for (double G : o.G) {
                const auto y = y_alpha(n, F, G, o.tol);
                csv += std::to_string(n) + "," + sci(F) + "," + sci(G) + "," + sci(y.value) + "," + sci(y.abs_err) +
                       "\n";
                rows.push_back({{"n_eff", n}, {"F", F}, {"G", G}, {"value", y.value}, {"err", y.abs_err}});
            }
    detail::write_file(detail::out_path(c, "yalpha.csv"), csv);
    if (c.output.format == "json") detail::write_file(detail::out_path(c, "yalpha.json"), rows.dump(2) + "\n");
    out << csv;
    return exit_ok;
}

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// The invariant suite behind `selftest`, sized to run in well under a minute.
inline std::vector<CheckResult> selftest_checks()
{
    std::vector<CheckResult> out;
    auto check = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& f) {
        try {
            auto [ok, d] = f();
            out.push_back({name, ok, d});
        } catch (const std::exception& e) {
            out.push_back({name, false, std::string("exception: ") + e.what()});
        }
    };
    check("bessel J_{-n} = (-1)^n J_n", [] {
        double worst = 0.0;
        for (int n = 0; n <= 20; ++n)
            for (int i = 1; i <= 100; ++i) {
                const double x = 0.3 * i;
                const double a = sf::bessel_j(-n, x), b = (n % 2 ? -1.0 : 1.0) * sf::bessel_j(n, x);
                worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-300));
            }
        return std::pair{worst < 1e-12, "max rel " + sci(worst)};
    });
    check("hydrogenic normalisation n <= 4", [] {
        double worst = 0.0;
        for (int n = 1; n <= 4; ++n)
            for (int l = 0; l < n; ++l) {
                auto f = [&](double r) {
                    const double v = sf::hydrogenic_radial({n, l, 1.0}, r);
                    return v * v * r * r;
                };
                const auto r = quad::integrate<double>(f, 0.0, 120.0, {1e-300, 1e-13, 4000});
                worst = std::max(worst, std::abs(r.value - 1.0));
            }
        return std::pair{worst < 1e-10, "max |norm - 1| " + sci(worst)};
    });
    check("decomposed dipole kernel identity (1e3 points)", [] {
        std::mt19937_64 rng(20111);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const Cylindrical r{5 * u(rng), 6.3 * u(rng), 4 * u(rng) - 2};
            const Cylindrical R{3 * u(rng), 6.3 * u(rng), 2 * u(rng) - 1};
            const Spherical q{0.1 + u(rng), 3.14 * u(rng), 6.3 * u(rng)};
            const double a = dipole_kernel(r, R, q), b = decomposed_dipole_kernel(r, R, q);
            worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), 1e-300));
        }
        return std::pair{worst < 1e-12, "max rel " + sci(worst)};
    });
    check("y_alpha quadrature vs elliptic closed form", [] {
        double worst = 0.0;
        for (int n = -2; n <= 2; ++n)
            for (double F : {1.0, 2.0, 5.0, 20.0})
                for (double g : {0.1, 0.5, 0.9, 0.99, 0.999}) {
                    const double G = g * F;
                    const double a = y_alpha(n, F, G).value, b = y_alpha_elliptic(n, F, G);
                    worst = std::max(worst, std::abs(a - b) / std::abs(b));
                }
        return std::pair{worst < 1e-10, "max rel " + sci(worst)};
    });
    QuadratureConfig cfg;
    cfg.rel_tol = 1e-7;
    check("dipole forbidden floor, 1s->2p, l, l' in [-1, 1]", [&] {
        ScanSpec s;
        for (int mp = -1; mp <= 1; ++mp) s.transitions.push_back({{1, 0, 0, 1.0}, {2, 1, mp, 1.0}});
        s.final_beam.k_z = 99.7;
        s.cm_initial.mode = PinnedCM{3.0, 0.0, 0.0};
        s.cm_final = s.cm_initial;
        const auto rows = selection_scan(s, cfg, {true, 1});
        bool nonzero = true;
        for (const auto& r : rows) nonzero = nonzero && (r.null_expected || r.abs_M > 0.0);
        const double ratio = forbidden_ratio(rows);
        return std::pair{nonzero && ratio < forbidden_floor, "forbidden/allowed " + sci(ratio)};
    });
    check("Q* = S, pinned 1s->2p family", [&] {
        Transition t;
        t.initial.beam.l = 1;
        t.final.beam.l = 0;
        t.initial.internal = {1, 0, 0, 1.0};
        t.final.internal = {2, 1, 1, 1.0};
        t.initial.cm.mode = PinnedCM{3.0, 0.0, 0.0};
        t.final.cm = t.initial.cm;
        const auto a = channel_amplitudes(t, cfg);
        const double d = std::abs(std::conj(a.Q) - a.S) / std::abs(a.Q);
        return std::pair{d < 1e-6, "|Q* - S| / |Q| " + sci(d)};
    });
    check("helicity equality, uniform DOS, 2p->3d", [&] {
        DichroismFamily fam;
        fam.cm.mode = PinnedCM{3.0, 0.0, 0.0};
        const auto rep = dichroic_signal(fam, SublevelDOS::uniform(), 1, cfg);
        return std::pair{std::abs(rep.signal) < 1e-6, "signal " + sci(rep.signal)};
    });
    return out;
}

inline int cmd_selftest(std::ostream& out)
{
    const auto checks = selftest_checks();
    bool all = true;
    for (const auto& c : checks) {
        out << (c.pass ? "PASS  " : "FAIL  ") << c.name << "  (" << c.detail << ")\n";
        all = all && c.pass;
    }
    out << (all ? "all checks passed\n" : "some checks failed\n");
    return all ? exit_ok : 1;
}

/// Entry point; returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Electron vortex beam transition matrix elements and dichroism"};
    app.require_subcommand(1);
    Options o;
    auto add_globals = [&](CLI::App* a) {
        a->add_option("--config", o.config, "configuration file (JSON)");
        a->add_option("--out", o.out, "output directory");
        a->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        a->add_option("--seed", o.seed, "quadrature seed");
        a->add_flag("--no-shortcircuit", o.no_shortcircuit, "integrate forbidden entries instead of returning 0");
        a->add_option("--threads", o.threads, "worker threads for scans")->check(CLI::Range(1u, 256u));
    };
    auto* matelem = app.add_subcommand("matelem", "one matrix element");
    auto* scan = app.add_subcommand("scan", "selection-rule scan table");
    auto* dichroism = app.add_subcommand("dichroism", "helicity rates and dichroic signal");
    auto* yalpha = app.add_subcommand("yalpha", "table of Y_alpha azimuthal integrals");
    auto* selftest = app.add_subcommand("selftest", "run the invariant suite");
    for (auto* a : {matelem, scan, dichroism, yalpha}) add_globals(a);
    yalpha->add_option("--n-min", o.n_min, "smallest n_eff");
    yalpha->add_option("--n-max", o.n_max, "largest n_eff");
    yalpha->add_option("--F", o.F, "F values")->delimiter(',');
    yalpha->add_option("--G", o.G, "G values")->delimiter(',');
    yalpha->add_option("--tol", o.tol, "absolute tolerance");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return exit_config;
    }
    try {
        if (matelem->parsed()) return cmd_matelem(o, out);
        if (scan->parsed()) return cmd_scan(o, out);
        if (dichroism->parsed()) return cmd_dichroism(o, out);
        if (yalpha->parsed()) return cmd_yalpha(o, out);
        if (selftest->parsed()) return cmd_selftest(out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const NonConvergence& e) {
        err << "error: " << e.what() << "\n";
        return exit_nonconvergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    }
    return exit_config;
}

} // namespace evortex::cli
