#pragma once
/// \file config.hpp
/// \brief Run configuration: strict JSON parsing with per-key diagnostics,
/// and serialization of the fully resolved configuration.
///
/// Unknown keys are errors. Every section is optional; omitted fields take
/// the library defaults. The resolved form written by to_json() contains
/// every computational field and parses back to the same computation.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "evortex/dichroism.hpp"
#include "evortex/matelem.hpp"

namespace evortex {

using json = nlohmann::ordered_json;

/// Invalid configuration; what() names the offending key or line.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScanSettings {
    int l_min = -1, l_max = 1;
    int lp_min = -1, lp_max = 1;
    std::vector<InternalTransition> transitions;
};

struct DichroismSettings {
    int abs_l = 1;
    int n = 2, ell = 1;
    int np = 3, ellp = 2;
    std::vector<int> initial_m{-1, 0, 1};
};

struct DOSSettings {
    std::string model = "uniform";  // uniform | table
    std::map<int, double> weights;
    double fallback = 1.0;

    SublevelDOS dos() const
    {
        if (model == "uniform") return SublevelDOS::uniform(fallback);
        return {weights, fallback};
    }
};

struct OutputSettings {
    std::string dir = ".";
    std::string format = "json";  // csv | json
};

struct RunConfig {
    BeamState beam{100.0, 5.0, 1};
    BeamState final_beam;  // l is the final winding number
    InternalState initial;
    InternalState final{2, 1, 1, 1.0};
    CenterOfMassState cm;
    CenterOfMassState cm_final;
    KernelKind kernel = KernelKind::dipole;
    QuadratureConfig quadrature;
    ScanSettings scan;
    DOSSettings dos;
    DichroismSettings dichroism;
    OutputSettings output;
    bool no_shortcircuit = false;

    Transition transition() const { return {{beam, initial, cm}, {final_beam, final, cm_final}, kernel}; }

    ScanSpec scan_spec() const
    {
        ScanSpec s;
        s.l_min = scan.l_min;
        s.l_max = scan.l_max;
        s.lp_min = scan.lp_min;
        s.lp_max = scan.lp_max;
        s.transitions = scan.transitions;
        s.beam = beam;
        s.final_beam = final_beam;
        s.cm_initial = cm;
        s.cm_final = cm_final;
        s.kernel = kernel;
        return s;
    }

    DichroismFamily family() const
    {
        DichroismFamily f;
        f.beam = beam;
        f.final_beam = final_beam;
        f.cm = cm;
        f.n = dichroism.n;
        f.ell = dichroism.ell;
        f.np = dichroism.np;
        f.ellp = dichroism.ellp;
        f.bohr = initial.bohr;
        f.initial_m = dichroism.initial_m;
        f.kernel = kernel;
        return f;
    }
};

namespace detail {

/// Reads one JSON object, recording which keys were consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <class T>
    void read(const std::string& key, T& out)
    {
        if (!j_.contains(key)) return;
        used_.insert(key);
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(key_path(key) + ": expected true or false");
            out = v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(key_path(key) + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_unsigned() || v.get<long long>() >= 0) out = v.get<T>();
                else throw ConfigError(key_path(key) + ": must be >= 0");
            } else {
                out = v.get<T>();
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(key_path(key) + ": expected a number");
            out = v.get<T>();
        } else {
            if (!v.is_string()) throw ConfigError(key_path(key) + ": expected a string");
            out = v.get<T>();
        }
    }

    Section child(const std::string& key)
    {
        used_.insert(key);
        return Section(j_.at(key), key_path(key));
    }

    const json& raw(const std::string& key)
    {
        used_.insert(key);
        return j_.at(key);
    }

    void finish() const
    {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) throw ConfigError("unknown key '" + key_path(k) + "'");
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string where() const { return path_.empty() ? "config" : path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline void require(bool ok, const std::string& key, const std::string& what)
{
    if (!ok) throw ConfigError(key + ": " + what);
}

inline void read_beam(Section s, BeamState& b, bool with_cylinder)
{
    s.read("k_z", b.k_z);
    s.read("k_rho", b.k_rho);
    s.read("l", b.l);
    if (with_cylinder) {
        s.read("rho_max", b.cylinder.rho_max);
        s.read("z_len", b.cylinder.z_len);
    }
    s.finish();
    require(std::isfinite(b.k_z) && b.k_z > 0.0, s.key_path("k_z"), "must be > 0");
    require(std::isfinite(b.k_rho) && b.k_rho > 0.0, s.key_path("k_rho"), "must be > 0");
    require(std::abs(b.l) <= sf::max_bessel_order, s.key_path("l"),
            "|l| must be <= " + std::to_string(sf::max_bessel_order));
    require(std::isfinite(b.cylinder.rho_max) && b.cylinder.rho_max > 0.0, s.key_path("rho_max"), "must be > 0");
    require(std::isfinite(b.cylinder.z_len) && b.cylinder.z_len > 0.0, s.key_path("z_len"), "must be > 0");
}

inline void read_internal(Section s, InternalState& st, bool with_m = true)
{
    s.read("n", st.n);
    s.read("ell", st.ell);
    if (with_m) s.read("m", st.m);
    s.finish();
    require(st.n >= 1 && st.n <= sf::max_principal, s.key_path("n"),
            "must lie in [1, " + std::to_string(sf::max_principal) + "]");
    require(st.ell >= 0 && st.ell < st.n, s.key_path("ell"), "require 0 <= ell < n");
    require(std::abs(st.m) <= st.ell, s.key_path("m"), "require |m| <= ell");
}

inline void read_wave(Section s, CylindricalWaveCM& w)
{
    s.read("K_z", w.K_z);
    s.read("K_rho", w.K_rho);
    s.read("L", w.L);
    s.finish();
    require(std::isfinite(w.K_z), s.key_path("K_z"), "must be finite");
    require(std::isfinite(w.K_rho) && w.K_rho > 0.0, s.key_path("K_rho"), "must be > 0");
    require(std::abs(w.L) <= sf::max_bessel_order, s.key_path("L"), "out of range");
}

inline void read_cm(Section s, RunConfig& c)
{
    std::string mode = "pinned";
    s.read("mode", mode);
    if (mode == "pinned") {
        PinnedCM p;
        s.read("R", p.R);
        s.read("Phi_R", p.Phi_R);
        s.read("Z", p.Z);
        s.finish();
        require(std::isfinite(p.R) && p.R >= 0.0, s.key_path("R"), "must be >= 0");
        require(std::isfinite(p.Phi_R), s.key_path("Phi_R"), "must be finite");
        require(std::isfinite(p.Z), s.key_path("Z"), "must be finite");
        c.cm.mode = p;
        c.cm_final.mode = p;
    } else if (mode == "cylindrical_wave") {
        CylindricalWaveCM w;
        if (s.has("initial")) read_wave(s.child("initial"), w);
        CylindricalWaveCM wf = w;
        if (s.has("final")) read_wave(s.child("final"), wf);
        s.finish();
        c.cm.mode = w;
        c.cm_final.mode = wf;
    } else {
        throw ConfigError(s.key_path("mode") + ": expected \"pinned\" or \"cylindrical_wave\"");
    }
}

inline InternalTransition read_pair(Section s, const InternalTransition& defaults)
{
    InternalTransition t = defaults;
    if (s.has("initial")) read_internal(s.child("initial"), t.initial);
    if (s.has("final")) read_internal(s.child("final"), t.final);
    s.finish();
    return t;
}

inline int parse_int_key(const std::string& k, const std::string& path)
{
    std::size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(k, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != k.size() || k.empty()) throw ConfigError("'" + path + "." + k + "': key must be an integer m'");
    return v;
}

inline std::string line_of(const std::string& text, std::size_t byte)
{
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i)
        if (text[i] == '\n') ++line;
    return std::to_string(line);
}

} // namespace detail

/// Parses a configuration document. Throws ConfigError naming the key.
inline RunConfig parse_config(const json& root)
{
    RunConfig c;
    detail::Section top(root, "");
    if (top.has("beam")) detail::read_beam(top.child("beam"), c.beam, true);
    c.final_beam = c.beam;
    c.final_beam.l = 0;
    if (top.has("final_beam")) detail::read_beam(top.child("final_beam"), c.final_beam, false);
    c.final_beam.cylinder = c.beam.cylinder;
    if (top.has("target")) {
        auto t = top.child("target");
        double bohr = 1.0;
        t.read("bohr", bohr);
        detail::require(std::isfinite(bohr) && bohr > 0.0, t.key_path("bohr"), "must be > 0");
        c.initial.bohr = c.final.bohr = bohr;
        if (t.has("initial")) detail::read_internal(t.child("initial"), c.initial);
        if (t.has("final")) detail::read_internal(t.child("final"), c.final);
        t.finish();
    }
    if (top.has("cm")) detail::read_cm(top.child("cm"), c);
    if (top.has("kernel")) {
        std::string k;
        top.read("kernel", k);
        if (k == "dipole") c.kernel = KernelKind::dipole;
        else if (k == "exact_coulomb") c.kernel = KernelKind::exact_coulomb;
        else throw ConfigError("kernel: expected \"dipole\" or \"exact_coulomb\"");
    }
    if (top.has("quadrature")) {
        auto q = top.child("quadrature");
        auto& cfg = c.quadrature;
        q.read("rel_tol", cfg.rel_tol);
        q.read("abs_tol", cfg.abs_tol);
        q.read("max_evals", cfg.max_evals);
        q.read("seed", cfg.seed);
        q.read("eps_core", cfg.eps_core);
        q.read("ring_samples", cfg.ring_samples);
        q.finish();
        detail::require(cfg.rel_tol > 0.0, q.key_path("rel_tol"), "must be > 0");
        detail::require(cfg.abs_tol > 0.0, q.key_path("abs_tol"), "must be > 0");
        detail::require(cfg.max_evals > 0, q.key_path("max_evals"), "must be > 0");
        detail::require(cfg.eps_core > 0.0, q.key_path("eps_core"), "must be > 0");
        detail::require(cfg.ring_samples >= 8, q.key_path("ring_samples"), "must be >= 8");
    }
    if (top.has("scan")) {
        auto s = top.child("scan");
        s.read("l_min", c.scan.l_min);
        s.read("l_max", c.scan.l_max);
        s.read("lp_min", c.scan.lp_min);
        s.read("lp_max", c.scan.lp_max);
        if (s.has("transitions")) {
            const json& arr = s.raw("transitions");
            if (!arr.is_array()) throw ConfigError(s.key_path("transitions") + ": expected an array");
            for (std::size_t i = 0; i < arr.size(); ++i)
                c.scan.transitions.push_back(detail::read_pair(
                    detail::Section(arr[i], s.key_path("transitions") + "[" + std::to_string(i) + "]"),
                    {c.initial, c.final}));
        }
        s.finish();
        const std::pair<const char*, int> bounds[] = {
            {"l_min", c.scan.l_min}, {"l_max", c.scan.l_max}, {"lp_min", c.scan.lp_min}, {"lp_max", c.scan.lp_max}};
        for (const auto& [k, v] : bounds) detail::require(std::abs(v) <= 5, s.key_path(k), "|l| must be <= 5");
        detail::require(c.scan.l_min <= c.scan.l_max, s.key_path("l_max"), "must be >= l_min");
        detail::require(c.scan.lp_min <= c.scan.lp_max, s.key_path("lp_max"), "must be >= lp_min");
    }
    if (c.scan.transitions.empty()) c.scan.transitions.push_back({c.initial, c.final});
    if (top.has("dos")) {
        auto d = top.child("dos");
        d.read("model", c.dos.model);
        d.read("fallback", c.dos.fallback);
        if (d.has("weights")) {
            const json& w = d.raw("weights");
            if (!w.is_object()) throw ConfigError(d.key_path("weights") + ": expected an object");
            for (const auto& [k, v] : w.items()) {
                const int mp = detail::parse_int_key(k, d.key_path("weights"));
                if (!v.is_number()) throw ConfigError(d.key_path("weights") + "." + k + ": expected a number");
                detail::require(v.get<double>() >= 0.0, d.key_path("weights") + "." + k, "must be >= 0");
                c.dos.weights[mp] = v.get<double>();
            }
        }
        d.finish();
        detail::require(c.dos.model == "uniform" || c.dos.model == "table", d.key_path("model"),
                        "expected \"uniform\" or \"table\"");
        detail::require(c.dos.fallback >= 0.0, d.key_path("fallback"), "must be >= 0");
        if (c.dos.model == "uniform") {
            detail::require(c.dos.weights.empty(), d.key_path("weights"), "not allowed with model \"uniform\"");
            detail::require(c.dos.fallback > 0.0, d.key_path("fallback"), "must be > 0 for model \"uniform\"");
        } else {
            try {
                c.dos.dos().validate();
            } catch (const std::invalid_argument& e) {
                throw ConfigError(d.key_path("weights") + ": " + e.what());
            }
        }
    }
    if (top.has("dichroism")) {
        auto d = top.child("dichroism");
        d.read("abs_l", c.dichroism.abs_l);
        if (d.has("initial")) {
            InternalState s{c.dichroism.n, c.dichroism.ell, 0, 1.0};
            detail::read_internal(d.child("initial"), s, false);
            c.dichroism.n = s.n;
            c.dichroism.ell = s.ell;
        }
        if (d.has("final")) {
            InternalState s{c.dichroism.np, c.dichroism.ellp, 0, 1.0};
            detail::read_internal(d.child("final"), s, false);
            c.dichroism.np = s.n;
            c.dichroism.ellp = s.ell;
        }
        if (d.has("initial_m")) {
            const json& a = d.raw("initial_m");
            if (!a.is_array()) throw ConfigError(d.key_path("initial_m") + ": expected an array of integers");
            c.dichroism.initial_m.clear();
            for (const auto& v : a) {
                if (!v.is_number_integer())
                    throw ConfigError(d.key_path("initial_m") + ": expected an array of integers");
                detail::require(std::abs(v.get<int>()) <= c.dichroism.ell, d.key_path("initial_m"),
                                "require |m| <= ell");
                c.dichroism.initial_m.push_back(v.get<int>());
            }
        }
        d.finish();
        detail::require(c.dichroism.abs_l >= 1, d.key_path("abs_l"), "must be >= 1");
    }
    if (top.has("output")) {
        auto o = top.child("output");
        o.read("dir", c.output.dir);
        o.read("format", c.output.format);
        o.finish();
        detail::require(c.output.format == "csv" || c.output.format == "json", o.key_path("format"),
                        "expected \"csv\" or \"json\"");
    }
    if (top.has("options")) {
        auto o = top.child("options");
        o.read("no_shortcircuit", c.no_shortcircuit);
        o.finish();
    }
    top.finish();
    try {
        c.transition().validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

/// Parses configuration text; syntax errors report the line number.
inline RunConfig parse_config_text(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("line " + detail::line_of(text, e.byte) + ": JSON syntax error: " + e.what());
    }
    return parse_config(root);
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace detail {

inline json internal_json(const InternalState& s) { return {{"n", s.n}, {"ell", s.ell}, {"m", s.m}}; }

inline json wave_json(const CylindricalWaveCM& w) { return {{"K_z", w.K_z}, {"K_rho", w.K_rho}, {"L", w.L}}; }

} // namespace detail

/// Fully resolved configuration (all defaults made explicit). The output
/// section is left out: it says where results go, not what they are.
inline json to_json(const RunConfig& c)
{
    json j;
    j["beam"] = {{"k_z", c.beam.k_z},
                 {"k_rho", c.beam.k_rho},
                 {"l", c.beam.l},
                 {"rho_max", c.beam.cylinder.rho_max},
                 {"z_len", c.beam.cylinder.z_len}};
    j["final_beam"] = {{"k_z", c.final_beam.k_z}, {"k_rho", c.final_beam.k_rho}, {"l", c.final_beam.l}};
    j["target"] = {{"bohr", c.initial.bohr},
                   {"initial", detail::internal_json(c.initial)},
                   {"final", detail::internal_json(c.final)}};
    if (c.cm.pinned()) {
        const auto& p = c.cm.pin();
        j["cm"] = {{"mode", "pinned"}, {"R", p.R}, {"Phi_R", p.Phi_R}, {"Z", p.Z}};
    } else {
        j["cm"] = {{"mode", "cylindrical_wave"},
                   {"initial", detail::wave_json(c.cm.wave())},
                   {"final", detail::wave_json(c.cm_final.wave())}};
    }
    j["kernel"] = to_string(c.kernel);
    const auto& q = c.quadrature;
    j["quadrature"] = {{"rel_tol", q.rel_tol},   {"abs_tol", q.abs_tol},   {"max_evals", q.max_evals},
                       {"seed", q.seed},         {"eps_core", q.eps_core}, {"ring_samples", q.ring_samples}};
    json tr = json::array();
    for (const auto& t : c.scan.transitions)
        tr.push_back({{"initial", detail::internal_json(t.initial)}, {"final", detail::internal_json(t.final)}});
    j["scan"] = {{"l_min", c.scan.l_min},
                 {"l_max", c.scan.l_max},
                 {"lp_min", c.scan.lp_min},
                 {"lp_max", c.scan.lp_max},
                 {"transitions", tr}};
    json w = json::object();
    for (const auto& [m, v] : c.dos.weights) w[std::to_string(m)] = v;
    j["dos"] = {{"model", c.dos.model}, {"fallback", c.dos.fallback}};
    if (c.dos.model == "table") j["dos"]["weights"] = w;
    j["dichroism"] = {{"abs_l", c.dichroism.abs_l},
                      {"initial", {{"n", c.dichroism.n}, {"ell", c.dichroism.ell}}},
                      {"final", {{"n", c.dichroism.np}, {"ell", c.dichroism.ellp}}},
                      {"initial_m", c.dichroism.initial_m}};
    j["options"] = {{"no_shortcircuit", c.no_shortcircuit}};
    return j;
}

} // namespace evortex
