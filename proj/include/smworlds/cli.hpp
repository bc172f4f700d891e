#pragma once

// Configuration-driven runner behind the smworlds executable: scenario
// catalog, config validation, run/compare execution and run manifests.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "branches.hpp"
#include "error.hpp"
#include "io.hpp"
#include "ontologies.hpp"
#include "parallel.hpp"
#include "scenarios.hpp"
#include "stats.hpp"

namespace smw {

inline constexpr const char* version = "0.1.0";

namespace cli {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

struct ParamSpec {
    std::string name;
    std::string type; // integer | number | boolean | string
    json default_value;
    std::string description;
};

struct CatalogEntry {
    std::string id;
    std::string section;
    std::string description;
    std::vector<ParamSpec> params;
    bool accepts_grid = false;
    std::vector<std::string> ontologies; // supported by `compare`
};

inline const std::vector<CatalogEntry>& catalog() {
    static const std::vector<CatalogEntry> entries = {
        {"stern_gerlach_sequence",
         "§7",
         "n record-register trials with Born weight p: count-class weights, typicality of |k/n - p| <= window, "
         "and the unweighted sequence-count contrast",
         {{"n", "integer", 100, "number of trials, 1..10^6 (explicit registers for n <= 12)"},
          {"p", "number", 0.7, "weight of 'up' per trial, in [0, 1]"},
          {"window", "number", 0.1, "frequency window half-width"},
          {"eps", "number", 0.05, "typicality tolerance, in (0, 1)"}},
         false,
         {"sm", "bohm", "sip"}},
        {"epr",
         "§5",
         "EPR pair with Alice's setting choice: reduced density of B, no-signaling of m on B, per-world densities "
         "and the pairing of worlds",
         {{"alice_setting", "string", "z", "Alice's Stern-Gerlach direction, \"z\" or \"x\""}},
         false,
         {}},
        {"cat_1d",
         "§3",
         "two disjoint Gaussian packets: additivity m = m_1 + m_2, mutual transparency, optional spectator particle",
         {{"separation_sigmas", "number", 20.0, "packet separation in units of sigma (>= 10)"},
          {"with_spectator", "boolean", false, "add a second, unentangled particle"},
          {"sigma", "number", 1.0, "packet width"},
          {"horizon", "number", 2.0, "final time"},
          {"sample_every", "number", 0.5, "sampling interval"}},
         true,
         {"sm", "bohm", "sip", "grwm"}},
        {"two_slit",
         "§2",
         "two coherent slit packets in 2D: far-field fringes in m and a fan of Bohmian trajectories",
         {{"slit_separation", "number", 4.0, "distance between the slits"},
          {"sigma_x", "number", 1.0, "longitudinal packet width"},
          {"sigma_y", "number", 0.5, "slit width"},
          {"k0", "number", 2.0, "forward wavenumber"},
          {"x0", "number", -4.0, "initial longitudinal position"},
          {"horizon", "number", 4.0, "final time"},
          {"trajectories", "integer", 1000, "number of Bohmian trajectories"},
          {"record_every", "integer", 20, "trajectory output stride in steps"},
          {"single_slit", "boolean", false, "control run with one slit"}},
         true,
         {}},
        {"torus_invariant",
         "§7 (footnote on the 3-torus)",
         "superposing the translates of psi on a torus yields a constant m although psi is not constant",
         {{"points_per_axis", "integer", 64, "grid points per axis (power of two)"},
          {"extent", "number", 40.0, "torus circumference"},
          {"translate_step", "integer", 1, "superpose translates by multiples of this many cells"},
          {"seed_state", "string", "gaussian", "gaussian | uniform | random"}},
         false,
         {}},
        {"grwm_cat",
         "§4",
         "GRW collapses on a cat state: one packet survives, selected with the Born weights",
         {{"lambda", "number", 5.0, "collapse rate per particle (0 for the control)"},
          {"sigma_c", "number", 1.0, "collapse width"},
          {"horizon", "number", 1.0, "final time"},
          {"runs", "integer", 1000, "number of seeded runs"},
          {"left_weight", "number", 0.5, "initial weight of the left packet"},
          {"separation", "number", 20.0, "packet separation"},
          {"sigma", "number", 1.0, "packet width"}},
         true,
         {"sm", "bohm", "sip", "grwm"}},
    };
    return entries;
}

inline const CatalogEntry& find_entry(const std::string& id) {
    for (const auto& e : catalog())
        if (e.id == id) return e;
    throw ConfigError("unknown scenario '" + id + "'");
}

inline json catalog_json() {
    json out = json::array();
    for (const auto& e : catalog()) {
        json params = json::array();
        for (const auto& p : e.params)
            params.push_back({{"name", p.name}, {"type", p.type}, {"default", p.default_value}, {"description", p.description}});
        out.push_back({{"id", e.id},
                       {"section", e.section},
                       {"description", e.description},
                       {"params", params},
                       {"accepts_grid", e.accepts_grid},
                       {"ontologies", e.ontologies}});
    }
    return out;
}

inline std::string catalog_text() {
    std::ostringstream os;
    for (const auto& e : catalog()) {
        os << e.id << "  [" << e.section << "]\n    " << e.description << "\n";
        for (const auto& p : e.params)
            os << "    " << p.name << " (" << p.type << ", default " << p.default_value.dump() << "): " << p.description << "\n";
        if (e.accepts_grid) os << "    grid: points_per_axis, extent, dt\n";
        if (!e.ontologies.empty()) {
            os << "    compare:";
            for (const auto& o : e.ontologies) os << ' ' << o;
            os << "\n";
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct Outputs {
    bool fields = true;
    bool branches = true;
    bool trajectories = true;
    bool summary = true;
};

struct RunConfig {
    std::string scenario;
    json params = json::object(); // defaults merged in
    json grid = json::object();
    std::uint64_t seed = 0;
    std::string output_dir = "smworlds_out";
    Outputs outputs;
    std::vector<std::string> ontologies;
    std::size_t samples = 2000;
    json echo; // the config as given
};

namespace detail {
inline void check_type(const std::string& where, const std::string& type, const json& v) {
    bool ok = false;
    if (type == "integer") ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    else if (type == "number") ok = v.is_number();
    else if (type == "boolean") ok = v.is_boolean();
    else if (type == "string") ok = v.is_string();
    if (!ok) throw ConfigError("key '" + where + "' must be a " + (type == "integer" ? "non-negative integer" : type));
}

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + prefix + it.key() + "'");
}
} // namespace detail

/// Validates a parsed config before any computation; `compare` enables the
/// ontology list and sample count.
inline RunConfig parse_config(const json& j, bool compare) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    std::set<std::string> top{"scenario", "params", "grid", "seed", "output_dir", "outputs"};
    if (compare) {
        top.insert("ontologies");
        top.insert("samples");
    }
    detail::reject_unknown(j, top, "");
    if (!j.contains("scenario") || !j["scenario"].is_string()) throw ConfigError("key 'scenario' (string) is required");

    RunConfig c;
    c.echo = j;
    c.scenario = j["scenario"].get<std::string>();
    const CatalogEntry& e = find_entry(c.scenario);

    json given = j.value("params", json::object());
    if (!given.is_object()) throw ConfigError("key 'params' must be an object");
    std::set<std::string> names;
    for (const auto& p : e.params) names.insert(p.name);
    detail::reject_unknown(given, names, "params.");
    for (const auto& p : e.params) {
        const json v = given.contains(p.name) ? given[p.name] : p.default_value;
        detail::check_type("params." + p.name, p.type, v);
        c.params[p.name] = v;
    }

    if (j.contains("grid")) {
        if (!e.accepts_grid) throw ConfigError("key 'grid' is not accepted by scenario '" + c.scenario + "'");
        if (!j["grid"].is_object()) throw ConfigError("key 'grid' must be an object");
        detail::reject_unknown(j["grid"], {"points_per_axis", "extent", "dt"}, "grid.");
        if (j["grid"].contains("points_per_axis")) detail::check_type("grid.points_per_axis", "integer", j["grid"]["points_per_axis"]);
        if (j["grid"].contains("extent")) detail::check_type("grid.extent", "number", j["grid"]["extent"]);
        if (j["grid"].contains("dt")) detail::check_type("grid.dt", "number", j["grid"]["dt"]);
        c.grid = j["grid"];
    }
    if (j.contains("seed")) {
        detail::check_type("seed", "integer", j["seed"]);
        c.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("output_dir")) {
        detail::check_type("output_dir", "string", j["output_dir"]);
        c.output_dir = j["output_dir"].get<std::string>();
    }
    if (j.contains("outputs")) {
        const json& o = j["outputs"];
        if (!o.is_object()) throw ConfigError("key 'outputs' must be an object");
        detail::reject_unknown(o, {"fields", "branches", "trajectories", "summary"}, "outputs.");
        for (auto it = o.begin(); it != o.end(); ++it) detail::check_type("outputs." + it.key(), "boolean", it.value());
        c.outputs.fields = o.value("fields", true);
        c.outputs.branches = o.value("branches", true);
        c.outputs.trajectories = o.value("trajectories", true);
        c.outputs.summary = o.value("summary", true);
    }
    if (compare) {
        if (!j.contains("ontologies") || !j["ontologies"].is_array() || j["ontologies"].empty())
            throw ConfigError("key 'ontologies' (non-empty array) is required for compare");
        for (const auto& o : j["ontologies"]) {
            if (!o.is_string()) throw ConfigError("key 'ontologies' must list strings");
            const std::string name = o.get<std::string>();
            if (name != "sm" && name != "bohm" && name != "sip" && name != "grwm")
                throw ConfigError("unknown ontology '" + name + "' (expected sm, bohm, sip or grwm)");
            if (std::find(e.ontologies.begin(), e.ontologies.end(), name) == e.ontologies.end())
                throw ConfigError("scenario '" + c.scenario + "' does not support ontology '" + name + "'");
            if (std::find(c.ontologies.begin(), c.ontologies.end(), name) != c.ontologies.end())
                throw ConfigError("ontology '" + name + "' listed twice");
            c.ontologies.push_back(name);
        }
        if (j.contains("samples")) {
            detail::check_type("samples", "integer", j["samples"]);
            c.samples = j["samples"].get<std::size_t>();
            if (c.samples == 0) throw ConfigError("key 'samples' must be >= 1");
        }
    }
    return c;
}

inline json load_json_file(const std::filesystem::path& p) {
    const std::string text = io::read_file(p);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + p.string() + "' is not valid JSON: " + e.what());
    }
}

inline GridOptions grid_options(const RunConfig& c, GridOptions g = {}) {
    g.points_per_axis = c.grid.value("points_per_axis", g.points_per_axis);
    g.extent = c.grid.value("extent", g.extent);
    g.dt = c.grid.value("dt", g.dt);
    if (!(g.dt > 0.0)) throw ConfigError("key 'grid.dt' must be > 0");
    return g;
}

inline SternGerlachParams stern_gerlach_params(const json& p) {
    return {p["n"].get<std::size_t>(), p["p"].get<double>(), p["window"].get<double>(), p["eps"].get<double>()};
}

inline CatParams cat_params(const RunConfig& c) {
    const json& p = c.params;
    CatParams cp;
    cp.separation_sigmas = p["separation_sigmas"];
    cp.with_spectator = p["with_spectator"];
    cp.sigma = p["sigma"];
    cp.horizon = p["horizon"];
    cp.sample_every = p["sample_every"];
    cp.grid = grid_options(c);
    return cp;
}

inline GrwmCatParams grwm_params(const RunConfig& c) {
    const json& p = c.params;
    GrwmCatParams g;
    g.lambda = p["lambda"];
    g.sigma_c = p["sigma_c"];
    g.horizon = p["horizon"];
    g.runs = p["runs"];
    g.left_weight = p["left_weight"];
    g.separation = p["separation"];
    g.sigma = p["sigma"];
    g.grid = grid_options(c);
    return g;
}

/// Dispatches a validated config to its scenario.
inline ScenarioResult execute(const RunConfig& c) {
    const json& p = c.params;
    ScenarioResult r;
    if (c.scenario == "stern_gerlach_sequence") {
        r = stern_gerlach_sequence(stern_gerlach_params(p));
    } else if (c.scenario == "epr") {
        r = epr(parse_setting(p["alice_setting"].get<std::string>()));
    } else if (c.scenario == "cat_1d") {
        r = cat_1d(cat_params(c));
    } else if (c.scenario == "two_slit") {
        TwoSlitParams t;
        t.slit_separation = p["slit_separation"];
        t.sigma_x = p["sigma_x"];
        t.sigma_y = p["sigma_y"];
        t.k0 = p["k0"];
        t.x0 = p["x0"];
        t.horizon = p["horizon"];
        t.trajectories = p["trajectories"];
        t.record_every = p["record_every"];
        t.single_slit = p["single_slit"];
        t.grid = grid_options(c);
        r = two_slit(t, c.seed);
    } else if (c.scenario == "torus_invariant") {
        TorusParams t;
        t.points_per_axis = p["points_per_axis"];
        t.extent = p["extent"];
        t.translate_step = p["translate_step"];
        t.seed_state = p["seed_state"];
        r = torus_invariant(t, c.seed);
    } else if (c.scenario == "grwm_cat") {
        r = grwm_cat(grwm_params(c), c.seed);
    } else {
        throw ConfigError("unknown scenario '" + c.scenario + "'");
    }
    r.seed = c.seed;
    return r;
}

// ---------------------------------------------------------------------------
// Ontology comparison
// ---------------------------------------------------------------------------

struct ComparisonRow {
    std::string ontology;
    std::string outcome;
    double value = 0.0;
    double reference = 0.0;
    double lower = 0.0; // acceptance band for the reference
    double upper = 0.0;
    bool agree = false;
};

struct Comparison {
    std::string scenario;
    std::vector<ComparisonRow> rows;
    std::map<std::string, double> summary;
    std::map<std::string, bool> agreement;
};

namespace detail {
/// Rows for deterministic weights, compared within `tol`.
inline void exact_rows(Comparison& cmp, const std::string& ont, const std::vector<std::string>& outcomes,
                       const std::vector<double>& values, const std::vector<double>& reference, double tol) {
    bool all = true;
    double dev = 0.0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const double d = std::abs(values[i] - reference[i]);
        dev = std::max(dev, d);
        const bool ok = d <= tol;
        all = all && ok;
        cmp.rows.push_back({ont, outcomes[i], values[i], reference[i], values[i] - tol, values[i] + tol, ok});
    }
    cmp.summary[ont + "_max_deviation"] = dev;
    cmp.agreement[ont] = all;
}

/// Monte Carlo rows: each reference must lie in the exact interval of the
/// observed proportion, with the 3-sigma level shared across all outcomes
/// (Sidak). Also reports a chi-square p-value.
inline void sampled_rows(Comparison& cmp, const std::string& ont, const std::vector<std::string>& outcomes,
                         const std::vector<double>& freq, const std::vector<double>& reference, std::size_t count) {
    bool all = true;
    double dev = 0.0;
    std::vector<double> obs(freq.size()), exp(freq.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto hits = static_cast<std::size_t>(std::llround(freq[i] * static_cast<double>(count)));
        const stats::Interval iv =
            stats::clopper_pearson(hits, count, stats::sidak_alpha(stats::three_sigma_alpha, outcomes.size()));
        const bool ok = reference[i] >= iv.lo && reference[i] <= iv.hi;
        all = all && ok;
        dev = std::max(dev, std::abs(freq[i] - reference[i]));
        cmp.rows.push_back({ont, outcomes[i], freq[i], reference[i], iv.lo, iv.hi, ok});
        obs[i] = static_cast<double>(hits);
        exp[i] = reference[i] * static_cast<double>(count);
    }
    cmp.summary[ont + "_max_deviation"] = dev;
    cmp.summary[ont + "_samples"] = static_cast<double>(count);
    const auto pooled = stats::pooled_chi_square(obs, exp);
    if (pooled) cmp.summary[ont + "_chi_square_p"] = pooled->p_value;
    cmp.agreement[ont] = all;
}
} // namespace detail

inline Comparison compare_stern_gerlach(const RunConfig& c) {
    const SternGerlachParams sg = stern_gerlach_params(c.params);
    if (sg.n > 12) throw ConfigError("compare stern_gerlach_sequence needs n <= 12 (explicit registers)");
    Comparison cmp;
    cmp.scenario = c.scenario;
    std::vector<std::string> outcomes;
    std::vector<double> born;
    for (std::size_t k = 0; k <= sg.n; ++k) {
        outcomes.push_back(count_label(k));
        born.push_back(binomial_weight(sg.n, k, sg.p));
    }
    for (const auto& ont : c.ontologies) {
        if (ont == "sm") {
            const ScenarioResult r = stern_gerlach_sequence(sg);
            std::vector<double> w;
            for (std::size_t k = 0; k <= sg.n; ++k) w.push_back(r.summary.at("weight_k" + std::to_string(k)));
            detail::exact_rows(cmp, ont, outcomes, w, born, 1e-12);
        } else if (ont == "bohm") {
            RecordChainParams rc;
            rc.n = sg.n;
            rc.p = sg.p;
            std::size_t degenerate = 0;
            const auto freq = record_chain_bohm_frequencies(rc, c.samples, derive_seed(c.seed, 1), &degenerate);
            cmp.summary["bohm_degenerate"] = static_cast<double>(degenerate);
            // History typicality of "recorded frequency within the window".
            double inside = 0.0, exact = 0.0;
            for (std::size_t k = 0; k <= sg.n; ++k)
                if (in_window(k, sg.n, sg.p, sg.window)) {
                    inside += freq[k];
                    exact += born[k];
                }
            const auto hits = static_cast<std::size_t>(std::llround(inside * static_cast<double>(c.samples)));
            const stats::Interval iv = stats::wilson(hits, c.samples);
            cmp.summary["bohm_window_estimate"] = inside;
            cmp.summary["bohm_window_lower"] = iv.lo;
            cmp.summary["bohm_window_upper"] = iv.hi;
            cmp.summary["window_weight"] = exact;
            detail::sampled_rows(cmp, ont, outcomes, freq, born, c.samples);
        } else if (ont == "sip") {
            const FiniteState psi = record_chain_state(sg.n, sg.p);
            std::vector<std::size_t> all(sg.n);
            std::iota(all.begin(), all.end(), std::size_t{0});
            const BranchSet classes = decompose_projectors(
                psi,
                MacrostateFamily::from_classifier(
                    psi, [&](std::size_t flat) -> std::optional<std::string> { return count_label(up_count(psi, flat)); }, all),
                ParticleWeights::unit(sg.n));
            std::vector<double> times(c.samples);
            for (std::size_t j = 0; j < times.size(); ++j) times[j] = static_cast<double>(j);
            const SipHistory h = sip_history(times, State(psi), derive_seed(c.seed, 2));
            const Occupancy occ = sip_occupancy(h, {classes});
            std::vector<double> freq;
            for (const auto& o : outcomes) freq.push_back(occ.fraction(o));
            detail::sampled_rows(cmp, ont, outcomes, freq, born, c.samples);
        }
    }
    return cmp;
}

inline Comparison compare_cat(const RunConfig& c) {
    GrwmCatParams g;
    if (c.scenario == "grwm_cat") {
        g = grwm_params(c);
    } else {
        const CatParams cp = cat_params(c);
        g.separation = cp.separation_sigmas * cp.sigma;
        g.sigma = cp.sigma;
        g.grid = cp.grid;
        g.horizon = std::max(cp.horizon, 1.0);
        g.left_weight = 0.5;
    }
    const GridState psi0 = grwm_cat_state(g);
    const GridSpec& spec = psi0.spec;
    const ParticleWeights w = ParticleWeights::mass({1.0});
    EvolutionParams ep;
    ep.dt = g.grid.dt;
    ep.steps = static_cast<std::size_t>(std::llround(g.horizon / g.grid.dt));
    const GridState psi_t = split_step_evolve(psi0, PotentialSpec::none(), w, ep);

    Comparison cmp;
    cmp.scenario = c.scenario;
    const std::vector<std::string> outcomes{"left", "right"};
    const std::vector<double> born{g.left_weight, 1.0 - g.left_weight};
    auto is_left = [&](double x) { return x < 0.0; };

    for (const auto& ont : c.ontologies) {
        if (ont == "sm") {
            const BranchSet bs = decompose_grid(psi_t, w, 1e-6, false);
            std::vector<double> v(2, 0.0);
            for (const auto& b : bs.branches) v[is_left(spec.coordinate(b.support[b.support.size() / 2])) ? 0 : 1] += b.norm_sq;
            cmp.summary["sm_branch_count"] = static_cast<double>(bs.size());
            // Grid branch norms carry the split-step norm drift.
            detail::exact_rows(cmp, ont, outcomes, v, born, 1e-10);
        } else if (ont == "bohm") {
            std::vector<std::vector<double>> q0;
            for (auto& s : sample_psi2(psi0, c.samples, derive_seed(c.seed, 1))) q0.push_back(std::move(s.coords));
            const BohmEnsemble run = bohm_evolve_ensemble(psi0, q0, PotentialSpec::none(), w, ep, ep.steps);
            std::vector<double> f(2, 0.0);
            for (const auto& t : run.trajectories) f[is_left(t.configurations.back()[0]) ? 0 : 1] += 1.0 / static_cast<double>(c.samples);
            detail::sampled_rows(cmp, ont, outcomes, f, born, c.samples);
        } else if (ont == "sip") {
            std::vector<double> times(c.samples);
            for (std::size_t j = 0; j < times.size(); ++j) times[j] = static_cast<double>(j);
            const SipHistory h = sip_history(times, State(psi_t), derive_seed(c.seed, 2));
            std::vector<double> f(2, 0.0);
            for (const auto& q : h.configurations) f[is_left(q.coords[0]) ? 0 : 1] += 1.0 / static_cast<double>(c.samples);
            detail::sampled_rows(cmp, ont, outcomes, f, born, c.samples);
        } else if (ont == "grwm") {
            GrwParams gp{g.lambda, g.sigma_c, 0};
            validate(gp, spec);
            const std::size_t runs = c.scenario == "grwm_cat" ? g.runs : c.samples;
            std::vector<GrwmRunOutcome> out(runs);
            parallel_for(runs, [&](std::size_t i) {
                GrwParams gi = gp;
                gi.seed = derive_seed(derive_seed(c.seed, 3), i);
                out[i] = grwm_outcome(grw_evolve(psi0, PotentialSpec::none(), w, ep, gi), w);
            });
            std::vector<double> f(2, 0.0);
            double survivors = 0.0, branches = 0.0;
            for (const auto& o : out) {
                f[o.left ? 0 : 1] += 1.0 / static_cast<double>(runs);
                survivors += o.dominant_fraction >= 1.0 - 1e-4 ? 1.0 : 0.0;
                branches += static_cast<double>(o.branches);
            }
            cmp.summary["grwm_single_survivor_fraction"] = survivors / static_cast<double>(runs);
            cmp.summary["grwm_mean_branch_count"] = branches / static_cast<double>(runs);
            detail::sampled_rows(cmp, ont, outcomes, f, born, runs);
        }
    }
    return cmp;
}

inline Comparison compare_ontologies(const RunConfig& c) {
    if (c.scenario == "stern_gerlach_sequence") return compare_stern_gerlach(c);
    if (c.scenario == "cat_1d" || c.scenario == "grwm_cat") return compare_cat(c);
    throw ConfigError("scenario '" + c.scenario + "' does not support compare");
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline json summary_json(const ScenarioResult& r) {
    json s = json::object();
    for (const auto& [k, v] : r.summary) s[k] = v;
    json checks = json::object();
    for (const auto& [k, v] : r.checks) checks[k] = v;
    return {{"scenario", r.id}, {"seed", r.seed}, {"params", r.params}, {"summary", s},
            {"checks", checks}, {"notes", r.notes}, {"passed", r.passed()}};
}

inline std::string branches_csv(const ScenarioResult& r) {
    io::CsvWriter w({"time", "id", "parent_id", "weight", "norm_sq", "support_cell_count"});
    for (const auto& b : r.branch_table)
        w.row({io::format_real(b.time), std::to_string(b.id), std::to_string(b.parent_id), io::format_real(b.weight),
               io::format_real(b.norm_sq), std::to_string(b.support_cell_count)});
    return w.str();
}

inline std::string trajectories_csv(const ScenarioResult& r) {
    std::size_t dim = 0;
    for (const auto& t : r.trajectories) dim = std::max(dim, t.coords.size());
    std::vector<std::string> header{"trajectory", "time"};
    for (std::size_t a = 0; a < dim; ++a) header.push_back("q" + std::to_string(a));
    header.push_back("branch_id");
    io::CsvWriter w(header);
    for (const auto& t : r.trajectories) {
        std::vector<std::string> row{std::to_string(t.trajectory), io::format_real(t.time)};
        for (std::size_t a = 0; a < dim; ++a) row.push_back(a < t.coords.size() ? io::format_real(t.coords[a]) : "");
        row.push_back(std::to_string(t.branch_id));
        w.row(row);
    }
    return w.str();
}

inline std::string comparison_csv(const Comparison& cmp) {
    io::CsvWriter w({"ontology", "outcome", "value", "reference", "lower", "upper", "agree"});
    for (const auto& r : cmp.rows)
        w.row({r.ontology, r.outcome, io::format_real(r.value), io::format_real(r.reference), io::format_real(r.lower),
               io::format_real(r.upper), r.agree ? "true" : "false"});
    return w.str();
}

/// Collects emitted files and writes them with the manifest last.
class RunWriter {
public:
    explicit RunWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& rel, const std::string& bytes) {
        io::write_file(dir_ / rel, bytes);
        files_.push_back({{"path", rel}, {"sha256", io::sha256_hex(bytes)}, {"bytes", bytes.size()}});
    }

    void manifest(const json& config, const std::string& started, const std::string& status, const json& summary,
                  const json& error = nullptr) {
        json m = {{"artifact", "smworlds"},
                  {"version", version},
                  {"config", config},
                  {"started", started},
                  {"finished", utc_now()},
                  {"status", status},
                  {"files", files_},
                  {"summary", summary}};
        if (!error.is_null()) m["error"] = error;
        io::write_file(dir_ / "manifest.json", m.dump(2) + "\n");
    }

private:
    std::filesystem::path dir_;
    json files_ = json::array();
};

inline void write_labeled_csv(RunWriter& w, const std::string& rel, const MassDensityField& m) {
    io::CsvWriter csv({"label", "value"});
    for (std::size_t i = 0; i < m.labels.size(); ++i) csv.row({m.labels[i], io::format_real(m.values[i])});
    w.add(rel, csv.str());
}

struct ExitCode {
    static constexpr int ok = 0;
    static constexpr int usage = 1;
    static constexpr int config = 2;
    static constexpr int numerical = 3;
};

/// Verifies manifest hashes against the files on disk.
inline bool verify_manifest(const std::filesystem::path& dir) {
    const json m = json::parse(io::read_file(dir / "manifest.json"));
    for (const auto& f : m.at("files"))
        if (io::sha256_file(dir / f.at("path").get<std::string>()) != f.at("sha256").get<std::string>()) return false;
    return true;
}

inline int run_command(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const std::string started = utc_now();
    RunWriter w(c.output_dir);
    ScenarioResult r;
    try {
        r = execute(c);
    } catch (const NumericalError& e) {
        w.manifest(c.echo, started, "failed", json::object(), {{"invariant", e.invariant()}, {"message", e.what()}});
        err << "numerical abort: invariant '" << e.invariant() << "' violated: " << e.what() << "\n";
        return ExitCode::numerical;
    }
    const json summary = summary_json(r);
    if (c.outputs.summary) w.add("summary.json", summary.dump(2) + "\n");
    if (c.outputs.branches) w.add("branches.csv", branches_csv(r));
    if (c.outputs.trajectories && !r.trajectories.empty()) w.add("trajectories.csv", trajectories_csv(r));
    if (c.outputs.fields)
        for (const auto& f : r.fields) {
            w.add("fields/" + f.name + ".smf", io::encode_smf(io::to_smf(f.field)));
            if (!f.field.is_grid()) write_labeled_csv(w, "fields/" + f.name + ".labels.csv", f.field);
        }
    if (!r.passed()) {
        std::string failed;
        for (const auto& [k, v] : r.checks)
            if (!v) failed += (failed.empty() ? "" : ", ") + k;
        w.manifest(c.echo, started, "failed", summary, {{"invariant", failed}, {"message", "scenario checks failed"}});
        err << "scenario checks failed: " << failed << "\n";
        return ExitCode::numerical;
    }
    w.manifest(c.echo, started, "ok", summary);
    out << r.id << ": ok (" << c.output_dir << ")\n";
    for (const auto& [k, v] : r.summary) out << "  " << k << " = " << io::format_real(v) << "\n";
    return ExitCode::ok;
}

inline int compare_command(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const std::string started = utc_now();
    RunWriter w(c.output_dir);
    Comparison cmp;
    try {
        cmp = compare_ontologies(c);
    } catch (const NumericalError& e) {
        w.manifest(c.echo, started, "failed", json::object(), {{"invariant", e.invariant()}, {"message", e.what()}});
        err << "numerical abort: invariant '" << e.invariant() << "' violated: " << e.what() << "\n";
        return ExitCode::numerical;
    }
    json summary = {{"scenario", cmp.scenario}, {"seed", c.seed}, {"ontologies", c.ontologies}};
    json s = json::object();
    for (const auto& [k, v] : cmp.summary) s[k] = v;
    summary["summary"] = s;
    summary["agreement"] = cmp.agreement;
    bool all = true;
    for (const auto& [k, v] : cmp.agreement) all = all && v;
    summary["passed"] = all;
    w.add("comparison.csv", comparison_csv(cmp));
    w.add("summary.json", summary.dump(2) + "\n");
    w.manifest(c.echo, started, all ? "ok" : "failed", summary);

    out << "ontology,outcome,value,reference,agree\n";
    for (const auto& r : cmp.rows)
        out << r.ontology << ',' << r.outcome << ',' << io::format_real(r.value) << ',' << io::format_real(r.reference) << ','
            << (r.agree ? "yes" : "no") << "\n";
    if (!all) {
        err << "ontologies disagree with the Born weights beyond their tolerance\n";
        return ExitCode::numerical;
    }
    return ExitCode::ok;
}

/// Entry point of the smworlds executable.
inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"smworlds: matter-density many-worlds simulator"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out_dir, "override the output directory");
        sub->add_option("--threads", threads, "worker threads (overrides SM_THREADS)")->check(CLI::PositiveNumber);
    };
    std::string config_path;
    auto* run = app.add_subcommand("run", "run a scenario from a config file");
    run->add_option("config", config_path, "config file (JSON)")->required();
    add_common(run);
    auto* cmp = app.add_subcommand("compare", "compare ontologies on a scenario");
    cmp->add_option("config", config_path, "config file (JSON)")->required();
    add_common(cmp);
    bool as_json = false;
    auto* list = app.add_subcommand("list", "print the scenario catalog");
    list->add_flag("--json", as_json, "machine-readable catalog");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        const int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? ExitCode::ok : ExitCode::config;
    }

    try {
        if (list->parsed()) {
            out << (as_json ? catalog_json().dump(2) + "\n" : catalog_text());
            return ExitCode::ok;
        }
        if (threads) set_thread_count(*threads);
        const bool is_compare = cmp->parsed();
        RunConfig c = parse_config(load_json_file(config_path), is_compare);
        if (seed) c.seed = *seed;
        if (out_dir) c.output_dir = *out_dir;
        return is_compare ? compare_command(c, out, err) : run_command(c, out, err);
    } catch (const NumericalError& e) {
        err << "numerical abort: invariant '" << e.invariant() << "' violated: " << e.what() << "\n";
        return ExitCode::numerical;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return ExitCode::config;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return ExitCode::config;
    }
}

} // namespace cli
} // namespace smw
