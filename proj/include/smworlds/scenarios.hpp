#pragma once

// Prebuilt experiments. Each returns a ScenarioResult that is a pure function
// of its parameters and seed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "branches.hpp"
#include "density.hpp"
#include "dynamics.hpp"
#include "error.hpp"
#include "hilbert.hpp"
#include "ontologies.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace smw {

struct BranchRow {
    double time = 0.0;
    int id = 0;
    int parent_id = -1;
    double weight = 0.0;
    double norm_sq = 0.0;
    std::size_t support_cell_count = 0;
    std::string label;
};

struct TrajectoryRow {
    std::size_t trajectory = 0;
    double time = 0.0;
    std::vector<double> coords;
    int branch_id = -1;
};

struct NamedField {
    std::string name;
    MassDensityField field;
};

struct ScenarioResult {
    std::string id;
    nlohmann::json params = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::map<std::string, double> summary;
    std::map<std::string, bool> checks;
    std::map<std::string, std::string> notes;
    std::vector<BranchRow> branch_table;
    std::vector<TrajectoryRow> trajectories;
    std::vector<NamedField> fields;
    std::vector<BranchSet> branch_series;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& kv) { return kv.second; });
    }
};

/// Grid overrides shared by the continuum scenarios.
struct GridOptions {
    std::size_t points_per_axis = 256;
    double extent = 40.0;
    double dt = 5e-3;
};

inline void append_rows(ScenarioResult& r, const BranchSet& bs) {
    for (const auto& b : bs.branches)
        r.branch_table.push_back({bs.time, b.id, b.parent_id, b.weight, b.norm_sq, b.support.size(), b.label});
}

inline double max_abs_difference(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ConfigError("max_abs_difference(): size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// ===========================================================================
// Stern-Gerlach sequence: record-register chain
// ===========================================================================

struct SternGerlachParams {
    std::size_t n = 100;
    double p = 0.7;
    double window = 0.1;
    double eps = 0.05;
};

/// |k/n - p| <= window, evaluated as |k - p n| <= window n with 1e-9 slack so
/// that window edges hit exactly in decimal arithmetic are included.
inline bool in_window(std::size_t k, std::size_t n, double p, double window) {
    const double dn = static_cast<double>(n);
    return std::abs(static_cast<double>(k) - p * dn) <= window * dn + 1e-9;
}

/// C(n, k) p^k (1-p)^(n-k).
inline double binomial_weight(std::size_t n, std::size_t k, double p) { return std::exp(stats::log_binomial_pmf(n, k, p)); }

/// One pointer register per trial, labels {ready, up, down}; register j is
/// the position factor of pointer j.
inline std::vector<Factor> record_factors(std::size_t n) {
    std::vector<Factor> f;
    f.reserve(n);
    for (std::size_t j = 0; j < n; ++j)
        f.push_back(Factor::position("R" + std::to_string(j + 1), static_cast<int>(j), {"ready", "up", "down"}));
    return f;
}

/// Real orthogonal map with |ready> -> sqrt(p)|up> + sqrt(1-p)|down>.
inline Eigen::MatrixXcd record_unitary(double p) {
    const double a = std::sqrt(p), b = std::sqrt(1.0 - p);
    Eigen::MatrixXcd u(3, 3);
    u << 0.0, 1.0, 0.0, //
        a, 0.0, b,      //
        b, 0.0, -a;
    return u;
}

/// H = i(|a><ready| - |ready><a|) with |a> = sqrt(p)|up> + sqrt(1-p)|down>;
/// exp(-iH pi/2) sends |ready> to |a>.
inline Eigen::MatrixXcd record_hamiltonian(double p) {
    Eigen::VectorXcd ready = Eigen::VectorXcd::Zero(3), a = Eigen::VectorXcd::Zero(3);
    ready[0] = 1.0;
    a[1] = std::sqrt(p);
    a[2] = std::sqrt(1.0 - p);
    const cplx i(0.0, 1.0);
    return i * (a * ready.adjoint() - ready * a.adjoint());
}

inline constexpr double record_trial_time = M_PI / 2.0;

/// All registers ready, then each trial applied in turn.
inline FiniteState record_chain_state(std::size_t n, double p) {
    if (n == 0 || n > 12) throw ConfigError("record_chain_state(): explicit registers need 1 <= n <= 12");
    FiniteState psi = FiniteState::basis(record_factors(n), std::vector<std::string>(n, "ready"));
    const Eigen::MatrixXcd u = record_unitary(p);
    for (std::size_t j = 0; j < n; ++j) psi = apply_local(psi, j, u);
    psi.time = static_cast<double>(n) * record_trial_time;
    return psi;
}

/// Number of registers reading "up" in basis vector `flat`.
inline std::size_t up_count(const FiniteState& shape, std::size_t flat) {
    std::size_t k = 0;
    for (std::size_t f = 0; f < shape.factors.size(); ++f) k += shape.label_index(flat, f) == 1 ? 1 : 0;
    return k;
}

inline std::string count_label(std::size_t k) { return "k=" + std::to_string(k); }

inline std::size_t count_of_label(const std::string& label) {
    if (label.rfind("k=", 0) != 0) throw ConfigError("not a count-class label: " + label);
    return static_cast<std::size_t>(std::stoull(label.substr(2)));
}

/// Count-class weights C(n,k) p^k q^(n-k); classes that underflow are omitted.
inline BranchSet count_class_branches(std::size_t n, double p) {
    std::vector<std::string> labels;
    std::vector<double> w;
    for (std::size_t k = 0; k <= n; ++k) {
        const double v = binomial_weight(n, k, p);
        if (v == 0.0) continue;
        labels.push_back(count_label(k));
        w.push_back(v);
    }
    return analytic_branches(labels, w, static_cast<double>(n), static_cast<double>(n) * record_trial_time);
}

/// Fraction of the 2^n sequences (unweighted) whose frequency lies in the window.
inline double sequence_count_fraction(std::size_t n, double p, double window) {
    double s = 0.0;
    for (std::size_t k = 0; k <= n; ++k)
        if (in_window(k, n, p, window)) s += binomial_weight(n, k, 0.5);
    return s;
}

inline ScenarioResult stern_gerlach_sequence(const SternGerlachParams& prm) {
    if (prm.n < 1 || prm.n > 1000000) throw ConfigError("stern_gerlach_sequence: n must lie in [1, 10^6]");
    if (!(prm.p >= 0.0 && prm.p <= 1.0)) throw ConfigError("stern_gerlach_sequence: p must lie in [0, 1]");
    if (!(prm.window >= 0.0)) throw ConfigError("stern_gerlach_sequence: window must be >= 0");
    if (!(prm.eps > 0.0 && prm.eps < 1.0)) throw ConfigError("stern_gerlach_sequence: eps must lie in (0, 1)");

    ScenarioResult r;
    r.id = "stern_gerlach_sequence";
    r.params = {{"n", prm.n}, {"p", prm.p}, {"window", prm.window}, {"eps", prm.eps}};
    const std::size_t n = prm.n;

    const BranchSet classes = count_class_branches(n, prm.p);
    auto in_win = [&](const Branch& b) { return in_window(count_of_label(b.label), n, prm.p, prm.window); };
    const double typical_weight = weight_of(in_win, classes);
    const bool typical = is_typical(in_win, classes, prm.eps);
    const double count_fraction = sequence_count_fraction(n, prm.p, prm.window);

    r.summary["typical_weight"] = typical_weight;
    r.summary["is_typical"] = typical ? 1.0 : 0.0;
    r.summary["count_fraction"] = count_fraction;
    r.summary["count_classes"] = static_cast<double>(classes.size());
    if (std::abs(prm.p - 0.5) > prm.window && typical)
        r.checks["weight_exceeds_count_fraction"] = typical_weight > count_fraction;

    if (n <= 12) {
        const FiniteState psi = record_chain_state(n, prm.p);
        const ParticleWeights w = ParticleWeights::unit(n);
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        const BranchSet sequences = decompose_projectors(psi, MacrostateFamily::from_factors(psi, all), w);
        std::vector<double> per_class(n + 1, 0.0);
        for (const auto& b : sequences.branches) per_class[up_count(psi, b.support.front())] += b.norm_sq;
        double dev = 0.0;
        for (std::size_t k = 0; k <= n; ++k) dev = std::max(dev, std::abs(per_class[k] - binomial_weight(n, k, prm.p)));

        auto count_family = MacrostateFamily::from_classifier(
            psi, [&](std::size_t flat) -> std::optional<std::string> { return count_label(up_count(psi, flat)); }, all);
        BranchSet explicit_classes = decompose_projectors(psi, count_family, w);
        std::stable_sort(explicit_classes.branches.begin(), explicit_classes.branches.end(),
                         [](const Branch& a, const Branch& b) { return count_of_label(a.label) < count_of_label(b.label); });
        for (std::size_t i = 0; i < explicit_classes.branches.size(); ++i) explicit_classes.branches[i].id = static_cast<int>(i);

        r.summary["sequence_branches"] = static_cast<double>(sequences.size());
        r.summary["explicit_max_deviation"] = dev;
        r.checks["explicit_matches_formula"] = dev <= 1e-12;
        for (std::size_t k = 0; k <= n; ++k) r.summary["weight_k" + std::to_string(k)] = per_class[k];
        append_rows(r, explicit_classes);
        explicit_classes.source.reset();
        r.branch_series.push_back(std::move(explicit_classes));
    } else {
        append_rows(r, classes);
        r.branch_series.push_back(classes);
    }
    return r;
}

// ===========================================================================
// EPR with Alice's setting choice
// ===========================================================================

enum class AliceSetting { z, x };

inline std::string to_string(AliceSetting s) { return s == AliceSetting::z ? "z" : "x"; }

inline AliceSetting parse_setting(const std::string& s) {
    if (s == "z") return AliceSetting::z;
    if (s == "x") return AliceSetting::x;
    throw ConfigError("epr: alice_setting must be \"z\" or \"x\", got \"" + s + "\"");
}

/// Factor order: A.spin, A.pos, B.spin, B.pos, A.det (dimension 300).
inline std::vector<Factor> epr_factors() {
    return {Factor::spin("A.spin"),
            Factor::position("A.pos", 0, {"z=-1", "z=0", "z=+1", "x=-1", "x=+1"},
                             {"A:z=-1", "A:z=0", "A:z=+1", "A:x=-1", "A:x=+1"}),
            Factor::spin("B.spin"),
            Factor::position("B.pos", 1, {"z=-1", "z=0", "z=+1"}, {"B:z=-1", "B:z=0", "B:z=+1"}),
            Factor::record("A.det", {"ready", "up", "down", "right", "left"})};
}

namespace detail {
using Spinor = std::vector<cplx>;
inline Spinor up() { return {1.0, 0.0}; }
inline Spinor down() { return {0.0, 1.0}; }
inline Spinor right() { return {M_SQRT1_2, M_SQRT1_2}; }
inline Spinor left() { return {M_SQRT1_2, -M_SQRT1_2}; }

inline std::vector<cplx> one_hot(const Factor& f, const std::string& label) {
    std::vector<cplx> v(f.dim());
    v[f.index_of(label)] = 1.0;
    return v;
}

/// |sa, pa>_A |sb, pb>_B |det>
inline FiniteState epr_ket(const Spinor& sa, const std::string& pa, const Spinor& sb, const std::string& pb,
                           const std::string& det) {
    const auto f = epr_factors();
    return tensor(FiniteState::single(f[0], sa), FiniteState::single(f[1], one_hot(f[1], pa)),
                  FiniteState::single(f[2], sb), FiniteState::single(f[3], one_hot(f[3], pb)),
                  FiniteState::single(f[4], one_hot(f[4], det)));
}
} // namespace detail

/// psi(t1): Alice's detector has clicked, Bob's electron is still at z = 0.
inline FiniteState epr_state_t1(AliceSetting s) {
    using namespace detail;
    const double h = M_SQRT1_2;
    FiniteState psi = s == AliceSetting::z
                          ? h * epr_ket(up(), "z=+1", down(), "z=0", "up") + h * epr_ket(down(), "z=-1", up(), "z=0", "down")
                          : h * epr_ket(right(), "x=+1", left(), "z=0", "right") +
                                h * epr_ket(left(), "x=-1", right(), "z=0", "left");
    psi.time = 1.0;
    return psi;
}

/// psi(t2): Bob's electron has passed his z magnet.
inline FiniteState epr_state_t2(AliceSetting s) {
    using namespace detail;
    FiniteState psi = [&] {
        if (s == AliceSetting::z) {
            const double h = M_SQRT1_2;
            return h * epr_ket(up(), "z=+1", down(), "z=-1", "up") + h * epr_ket(down(), "z=-1", up(), "z=+1", "down");
        }
        return 0.5 * (epr_ket(right(), "x=+1", up(), "z=+1", "right") - epr_ket(right(), "x=+1", down(), "z=-1", "right")) +
               0.5 * (epr_ket(left(), "x=-1", up(), "z=+1", "left") + epr_ket(left(), "x=-1", down(), "z=-1", "left"));
    }();
    psi.time = 2.0;
    return psi;
}

/// Bob's magnet on (B.spin, B.pos): |up><up| (x) (|+1><0| + h.c.) + |down><down| (x) (|-1><0| + h.c.).
/// At t = pi/2 it maps |up, 0> -> -i|up, +1> and |down, 0> -> -i|down, -1>.
inline Eigen::MatrixXcd bob_magnet_local() {
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(6, 6);
    auto idx = [](int spin, int pos) { return spin * 3 + pos; }; // pos: 0 -> z=-1, 1 -> z=0, 2 -> z=+1
    h(idx(0, 2), idx(0, 1)) = h(idx(0, 1), idx(0, 2)) = 1.0;
    h(idx(1, 0), idx(1, 1)) = h(idx(1, 1), idx(1, 0)) = 1.0;
    return h;
}

/// Full 300 x 300 Hamiltonian of Bob's magnet.
inline Eigen::MatrixXcd bob_magnet_hamiltonian() {
    const auto f = epr_factors();
    const Eigen::MatrixXcd local = bob_magnet_local();
    const Eigen::Index dim = static_cast<Eigen::Index>(product_dim(f));
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
    FiniteState shape = FiniteState::zeros(f);
    for (std::size_t col = 0; col < shape.dim(); ++col) {
        FiniteState e = shape;
        e.amplitudes[col] = 1.0;
        const FiniteState he = apply_local(e, std::vector<std::size_t>{2, 3}, local);
        for (std::size_t row = 0; row < shape.dim(); ++row)
            h(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = he.amplitudes[row];
    }
    return h;
}

inline MacrostateFamily alice_detector_family(const FiniteState& psi, AliceSetting s) {
    const std::vector<std::string> allowed =
        s == AliceSetting::z ? std::vector<std::string>{"up", "down"} : std::vector<std::string>{"right", "left"};
    return MacrostateFamily::from_factors(psi, {4}, {allowed});
}

inline MacrostateFamily bob_position_family(const FiniteState& psi) {
    return MacrostateFamily::from_classifier(
        psi,
        [&](std::size_t flat) -> std::optional<std::string> {
            const std::string& l = psi.factors[3].labels[psi.label_index(flat, 3)];
            if (l == "z=+1" || l == "z=-1") return "B:" + l;
            return std::nullopt;
        },
        {2, 3});
}

/// m restricted to Bob's sites computed from rho_B = tr_A |psi><psi|.
inline MassDensityField bob_density_from_rho(const FiniteState& psi, const ParticleWeights& w) {
    return density_from_reduced(partial_trace(psi, {2, 3}), w);
}

inline ScenarioResult epr(AliceSetting setting) {
    ScenarioResult r;
    r.id = "epr";
    r.params = {{"alice_setting", to_string(setting)}};
    const ParticleWeights w = ParticleWeights::unit(2);
    const AliceSetting other = setting == AliceSetting::z ? AliceSetting::x : AliceSetting::z;

    const FiniteState t1 = epr_state_t1(setting), t2 = epr_state_t2(setting);
    const FiniteState t2_other = epr_state_t2(other);

    // Bob's magnet maps t1 to t2 up to the global phase -i.
    const FiniteState evolved = exact_evolve(t1, bob_magnet_hamiltonian(), M_PI / 2.0);
    r.summary["t1_to_t2_fidelity"] = std::norm(inner(t2, evolved));

    const DensityMatrix rho1 = partial_trace(t1, {2, 3});
    const DensityMatrix rho2 = partial_trace(t2, {2, 3});
    r.summary["rho_b_t1_trace"] = rho1.trace();
    r.summary["rho_b_t2_trace"] = rho2.trace();
    r.summary["rho_b_hermiticity_error"] = std::max(rho1.hermiticity_error(), rho2.hermiticity_error());
    r.summary["rho_b_min_eigenvalue"] = std::min(rho1.min_eigenvalue(), rho2.min_eigenvalue());

    const MassDensityField m1 = finite_density(t1, w), m2 = finite_density(t2, w);
    const LabelSet bob{{"B:z=-1", "B:z=0", "B:z=+1"}};
    const MassDensityField mb = restrict(m2, bob);
    const MassDensityField mb_rho = density_from_reduced(rho2, w);
    double rho_delta = 0.0;
    for (const auto& l : bob.labels) rho_delta = std::max(rho_delta, std::abs(mb.at(l) - mb_rho.at(l)));
    r.summary["m_b_vs_rho_b_delta"] = rho_delta;
    r.checks["m_b_from_rho_b"] = rho_delta <= 1e-12;

    const MassDensityField mb_other = restrict(finite_density(t2_other, w), bob);
    double ns = 0.0;
    for (const auto& l : bob.labels) ns = std::max(ns, std::abs(mb.at(l) - mb_other.at(l)));
    const MassDensityField mb1 = restrict(m1, bob), mb1_other = restrict(finite_density(epr_state_t1(other), w), bob);
    for (const auto& l : bob.labels) ns = std::max(ns, std::abs(mb1.at(l) - mb1_other.at(l)));
    r.summary["no_signaling_delta"] = ns;
    r.checks["no_signaling"] = ns <= 1e-12;

    BranchSet bs = decompose_projectors(t2, alice_detector_family(t2, setting), w);
    r.summary["branch_count"] = static_cast<double>(bs.size());
    double branch_err = 0.0;
    for (std::size_t i = 0; i < bs.size(); ++i) {
        const MassDensityField ml = restrict(branch_density(bs, i, w), bob);
        std::map<std::string, double> expect;
        if (setting == AliceSetting::z)
            expect = i == 0 ? std::map<std::string, double>{{"B:z=-1", 0.5}} : std::map<std::string, double>{{"B:z=+1", 0.5}};
        else
            expect = {{"B:z=-1", 0.25}, {"B:z=+1", 0.25}};
        for (const auto& l : bob.labels) {
            const double e = expect.count(l) ? expect.at(l) : 0.0;
            branch_err = std::max(branch_err, std::abs(ml.at(l) - e));
            r.summary["branch" + std::to_string(i + 1) + "_" + l] = ml.at(l);
        }
        r.summary["branch" + std::to_string(i + 1) + "_weight_fraction"] = bs.branches[i].weight / bs.weight_sum;
        r.fields.push_back({"branch" + std::to_string(i + 1) + "_m_B", ml});
    }
    r.summary["branch_density_max_error"] = branch_err;
    r.checks["branch_densities_match"] = branch_err <= 1e-12 && bs.size() == 2;

    const PairingMatrix pm = pairing(t2, alice_detector_family(t2, setting), bob_position_family(t2));
    const PairingMatrix pm_other = pairing(t2_other, alice_detector_family(t2_other, other), bob_position_family(t2_other));
    const double pair_diff = (pm.weights - pm_other.weights).cwiseAbs().maxCoeff();
    r.summary["pairing_difference"] = pair_diff;
    r.checks["pairing_differs"] = pair_diff > 1e-6;
    for (Eigen::Index a = 0; a < pm.weights.rows(); ++a)
        for (Eigen::Index b = 0; b < pm.weights.cols(); ++b)
            r.summary["pairing_" + pm.row_labels[static_cast<std::size_t>(a)] + "_" +
                      pm.col_labels[static_cast<std::size_t>(b)]] = pm.weights(a, b);

    r.fields.push_back({"m_t1", m1});
    r.fields.push_back({"m_t2", m2});
    r.fields.push_back({"m_B_t2", mb});
    append_rows(r, bs);
    r.branch_series.push_back(std::move(bs));
    return r;
}

// ===========================================================================
// Schrodinger's cat: two disjoint packets
// ===========================================================================

struct CatParams {
    double separation_sigmas = 20.0;
    bool with_spectator = false;
    double sigma = 1.0;
    double horizon = 2.0;
    double sample_every = 0.5;
    GridOptions grid;
};

namespace detail {
inline GridSpec cat_grid(const GridOptions& g, int particles) {
    GridSpec s{particles, 1, g.points_per_axis, g.extent};
    s.validate();
    return s;
}

/// Product of a 1D amplitude for particle 0 and, optionally, a spectator Gaussian.
template <class F>
GridState cat_like(const GridSpec& spec, F&& first, double sigma) {
    return GridState::from_function(spec, [&](std::span<const double> x) {
        cplx a = first(x[0]);
        if (x.size() > 1) a *= gaussian_amplitude(x[1], 0.0, sigma);
        return a;
    });
}

inline std::size_t nearest_cell(const GridSpec& spec, double x) {
    const double one[] = {x};
    return cell_of(spec, one);
}
} // namespace detail

inline ScenarioResult cat_1d(const CatParams& prm) {
    if (!(prm.separation_sigmas >= 10.0)) throw ConfigError("cat_1d: separation must be at least 10 sigma");
    if (!(prm.sigma > 0.0) || !(prm.horizon >= 0.0) || !(prm.sample_every > 0.0))
        throw ConfigError("cat_1d: sigma and sample_every must be > 0, horizon >= 0");
    const int np = prm.with_spectator ? 2 : 1;
    const GridSpec spec = detail::cat_grid(prm.grid, np);
    const double half = 0.5 * prm.separation_sigmas * prm.sigma;
    if (prm.separation_sigmas * prm.sigma + 8.0 * prm.sigma > spec.extent)
        throw ConfigError("cat_1d: packets do not fit the periodic domain");

    ScenarioResult r;
    r.id = "cat_1d";
    r.params = {{"separation_sigmas", prm.separation_sigmas}, {"with_spectator", prm.with_spectator},
                {"sigma", prm.sigma},
                {"horizon", prm.horizon},
                {"sample_every", prm.sample_every},
                {"grid", {{"points_per_axis", spec.points_per_axis}, {"extent", spec.extent}, {"dt", prm.grid.dt}}}};
    const ParticleWeights w = ParticleWeights::mass(std::vector<double>(static_cast<std::size_t>(np), 1.0));

    GridState cat = detail::cat_like(
        spec,
        [&](double x) { return (gaussian_amplitude(x, -half, prm.sigma) + gaussian_amplitude(x, half, prm.sigma)) * M_SQRT1_2; },
        prm.sigma);
    cat = normalize(cat);
    GridState solo = normalize(detail::cat_like(spec, [&](double x) { return gaussian_amplitude(x, -half, prm.sigma); }, prm.sigma));

    const std::size_t steps_per_sample = static_cast<std::size_t>(std::llround(prm.sample_every / prm.grid.dt));
    if (steps_per_sample == 0) throw ConfigError("cat_1d: sample_every is shorter than dt");
    const std::size_t samples = static_cast<std::size_t>(std::floor(prm.horizon / prm.sample_every + 1e-9));
    SplitStepPropagator prop(spec, PotentialSpec::none(), w, prm.grid.dt);
    SplitStepPropagator prop_solo(spec, PotentialSpec::none(), w, prm.grid.dt);
    const std::size_t left_cell = detail::nearest_cell(spec, -half) * (np == 2 ? spec.points_per_axis : 1) +
                                  (np == 2 ? spec.points_per_axis / 2 : 0);

    double add_err = 0.0, transp_err = 0.0, spectator_err = 0.0;
    std::optional<double> merge_time;
    std::vector<BranchSet> sets;
    for (std::size_t s = 0; s <= samples; ++s) {
        if (s > 0) {
            prop.advance(cat, steps_per_sample);
            prop_solo.advance(solo, steps_per_sample);
            cat.time = solo.time = static_cast<double>(s) * static_cast<double>(steps_per_sample) * prm.grid.dt;
        }
        const MassDensityField m = matter_density(cat, w);
        BranchSet bs = decompose_grid(cat, w, 1e-6, true);
        r.fields.push_back({"m_" + std::to_string(s), m});
        if (s == 0) {
            r.summary["bump_integral_0"] = bs.branches.front().weight;
            if (bs.size() > 1) r.summary["bump_integral_1"] = bs.branches[1].weight;
            r.checks["initial_bumps_half_weight"] =
                bs.size() == 2 && std::abs(bs.branches[0].weight - 0.5 * w.total()) <= 1e-10 &&
                std::abs(bs.branches[1].weight - 0.5 * w.total()) <= 1e-10;
        }
        if (np == 2) {
            spectator_err = std::max(spectator_err, max_abs_difference(particle_marginal(cat, 1), particle_marginal(solo, 1)));
        }
        if (bs.size() < 2) {
            if (!merge_time) merge_time = cat.time;
        } else if (!merge_time) {
            std::vector<double> sum(m.values.size(), 0.0);
            std::size_t left = 0;
            for (std::size_t i = 0; i < bs.size(); ++i) {
                const MassDensityField ml = branch_density(bs, i, w);
                for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += ml.values[c];
                if (std::binary_search(bs.branches[i].support.begin(), bs.branches[i].support.end(), left_cell)) left = i;
            }
            add_err = std::max(add_err, max_abs_difference(sum, m.values));
            MassDensityField solo_m = matter_density(solo, w);
            for (auto& v : solo_m.values) v *= 0.5;
            transp_err = std::max(transp_err, max_abs_difference(branch_density(bs, left, w).values, solo_m.values));
        }
        sets.push_back(std::move(bs));
    }

    const GridSpec sp = spec;
    const double dt = prm.grid.dt;
    BranchLineage lin = track(sets, [&](const State& st, double t0, double t1) -> State {
        GridState g = std::get<GridState>(st);
        SplitStepPropagator pr(sp, PotentialSpec::none(), w, dt);
        pr.advance(g, static_cast<std::size_t>(std::llround((t1 - t0) / dt)));
        g.time = t1;
        return g;
    });
    double max_leak = 0.0, max_drift = 0.0;
    for (std::size_t s = 0; s < lin.leakage.size(); ++s) {
        max_leak = std::max(max_leak, std::abs(lin.leakage[s]));
        max_drift = std::max(max_drift, lin.weight_drift[s]);
        for (std::size_t c = 0; c < lin.sets[s + 1].size(); ++c)
            lin.sets[s + 1].branches[c].parent_id = lin.sets[s].branches[lin.parents[s][c]].id;
    }
    for (auto& bs : lin.sets) {
        append_rows(r, bs);
        bs.source.reset();
        r.branch_series.push_back(std::move(bs));
    }

    r.summary["additivity_max_error"] = add_err;
    r.summary["transparency_max_error"] = transp_err;
    r.summary["lineage_max_leakage"] = max_leak;
    r.summary["lineage_max_weight_drift"] = max_drift;
    r.summary["merged"] = merge_time ? 1.0 : 0.0;
    if (merge_time) {
        r.summary["merge_time"] = *merge_time;
        r.notes["merge"] = "packets merged; transparency assertions skipped from t = " + std::to_string(*merge_time);
    }
    r.checks["additivity"] = add_err <= 1e-10;
    r.checks["transparency"] = transp_err <= 1e-8;
    if (np == 2) {
        r.summary["spectator_max_error"] = spectator_err;
        r.checks["spectator_unaffected"] = spectator_err <= 1e-10;
    }
    return r;
}

/// A single packet carrying two momenta, psi = g(x)(sqrt(a) e^{ikx} + sqrt(1-a) e^{-ikx}),
/// decomposed at the given times and linked by overlap.
inline BranchLineage cat_split_lineage(const GridOptions& g, const std::vector<double>& times, double k = 4.0,
                                       double right_weight = 0.6, double sigma = 1.0) {
    const GridSpec spec = detail::cat_grid(g, 1);
    const ParticleWeights w = ParticleWeights::mass({1.0});
    GridState psi = normalize(GridState::from_function(spec, [&](std::span<const double> x) {
        return std::sqrt(right_weight) * gaussian_amplitude(x[0], 0.0, sigma, k) +
               std::sqrt(1.0 - right_weight) * gaussian_amplitude(x[0], 0.0, sigma, -k);
    }));
    auto steps_between = [&](double t0, double t1) {
        const double s = (t1 - t0) / g.dt;
        const auto n = static_cast<std::size_t>(std::llround(s));
        if (std::abs(s - static_cast<double>(n)) > 1e-6) throw ConfigError("cat_split_lineage: times must be multiples of dt");
        return n;
    };
    std::vector<BranchSet> sets;
    SplitStepPropagator prop(spec, PotentialSpec::none(), w, g.dt);
    double t = 0.0;
    for (double ti : times) {
        if (ti < t) throw ConfigError("cat_split_lineage: times must be non-decreasing and >= 0");
        prop.advance(psi, steps_between(t, ti));
        psi.time = t = ti;
        sets.push_back(decompose_grid(psi, w, 1e-6, false));
    }
    return track(std::move(sets), [&](const State& st, double t0, double t1) -> State {
        GridState c = std::get<GridState>(st);
        SplitStepPropagator pr(spec, PotentialSpec::none(), w, g.dt);
        pr.advance(c, steps_between(t0, t1));
        c.time = t1;
        return c;
    });
}

// ===========================================================================
// Two-slit interference
// ===========================================================================

struct TwoSlitParams {
    double slit_separation = 4.0;
    double sigma_x = 1.0;
    double sigma_y = 0.5;
    double k0 = 2.0;
    double x0 = -4.0;
    double horizon = 4.0;
    std::size_t trajectories = 1000;
    std::size_t record_every = 20;
    bool single_slit = false;
    GridOptions grid;
};

/// Coherent slit packets at y = +-d/2 sharing forward momentum k0 along x.
inline GridState two_slit_initial_state(const TwoSlitParams& prm) {
    GridSpec spec{1, 2, prm.grid.points_per_axis, prm.grid.extent};
    spec.validate();
    const double yc = 0.5 * prm.slit_separation;
    return normalize(GridState::from_function(spec, [&](std::span<const double> q) {
        const cplx fx = gaussian_amplitude(q[0], prm.x0, prm.sigma_x, prm.k0);
        cplx fy = gaussian_amplitude(q[1], yc, prm.sigma_y);
        if (!prm.single_slit) fy += gaussian_amplitude(q[1], -yc, prm.sigma_y);
        return fx * fy;
    }));
}

struct FringeAnalysis {
    std::vector<double> profile; // m integrated over the longitudinal axis
    std::size_t maxima = 0;
    double contrast = 0.0;
    double spacing = 0.0;
};

/// Local maxima above 1% of the peak; contrast (M - m)/(M + m) of the central
/// fringe against the higher of its flanking minima; spacing from the central
/// maximum to its neighbours, with parabolic sub-cell refinement.
inline FringeAnalysis analyze_fringes(std::vector<double> profile, double spacing_h) {
    FringeAnalysis fa;
    const std::size_t n = profile.size();
    const double peak = *std::max_element(profile.begin(), profile.end());
    std::vector<std::size_t> maxima;
    for (std::size_t j = 0; j < n; ++j) {
        const double l = profile[(j + n - 1) % n], c = profile[j], rgt = profile[(j + 1) % n];
        if (c > l && c >= rgt && c >= 0.01 * peak) maxima.push_back(j);
    }
    fa.maxima = maxima.size();
    fa.profile = std::move(profile);
    const auto& pr = fa.profile;
    if (maxima.size() < 2) return fa;
    const auto central_it = std::max_element(maxima.begin(), maxima.end(), [&](auto a, auto b) { return pr[a] < pr[b]; });
    const std::size_t ci = static_cast<std::size_t>(central_it - maxima.begin());
    auto refine = [&](std::size_t j) {
        const double l = pr[(j + n - 1) % n], c = pr[j], rgt = pr[(j + 1) % n];
        const double den = l - 2.0 * c + rgt;
        return static_cast<double>(j) + (den != 0.0 ? 0.5 * (l - rgt) / den : 0.0);
    };
    auto min_between = [&](std::size_t a, std::size_t b) {
        double m = pr[a];
        for (std::size_t j = std::min(a, b); j <= std::max(a, b); ++j) m = std::min(m, pr[j]);
        return m;
    };
    double flank = 0.0, dist = 0.0;
    int neighbours = 0;
    for (int side : {-1, 1}) {
        const long idx = static_cast<long>(ci) + side;
        if (idx < 0 || idx >= static_cast<long>(maxima.size())) continue;
        const std::size_t nb = maxima[static_cast<std::size_t>(idx)];
        flank = std::max(flank, min_between(maxima[ci], nb));
        dist += std::abs(refine(nb) - refine(maxima[ci]));
        ++neighbours;
    }
    const double mx = pr[maxima[ci]];
    fa.contrast = (mx - flank) / (mx + flank);
    fa.spacing = dist / neighbours * spacing_h;
    return fa;
}

inline ScenarioResult two_slit(const TwoSlitParams& prm, std::uint64_t seed) {
    if (!(prm.horizon > 0.0) || !(prm.slit_separation > 0.0)) throw ConfigError("two_slit: horizon and slit_separation must be > 0");
    ScenarioResult r;
    r.id = "two_slit";
    r.seed = seed;
    r.params = {{"slit_separation", prm.slit_separation},
                {"sigma_x", prm.sigma_x},
                {"sigma_y", prm.sigma_y},
                {"k0", prm.k0},
                {"x0", prm.x0},
                {"horizon", prm.horizon},
                {"trajectories", prm.trajectories},
                {"record_every", prm.record_every},
                {"single_slit", prm.single_slit},
                {"grid", {{"points_per_axis", prm.grid.points_per_axis}, {"extent", prm.grid.extent}, {"dt", prm.grid.dt}}}};

    const GridState psi0 = two_slit_initial_state(prm);
    const GridSpec& spec = psi0.spec;
    const ParticleWeights w = ParticleWeights::mass({1.0});
    EvolutionParams ep;
    ep.dt = prm.grid.dt;
    ep.steps = static_cast<std::size_t>(std::llround(prm.horizon / prm.grid.dt));

    std::vector<std::vector<double>> q0;
    for (auto& c : sample_psi2(psi0, prm.trajectories, seed)) q0.push_back(std::move(c.coords));
    const BohmEnsemble run = bohm_evolve_ensemble(psi0, q0, PotentialSpec::none(), w, ep, 1);
    const GridState& psi = run.final_state;

    const MassDensityField m = matter_density(psi, w);
    const std::size_t n = spec.points_per_axis;
    std::vector<double> profile(n, 0.0);
    for (std::size_t c = 0; c < m.values.size(); ++c) profile[c % n] += m.values[c] * spec.spacing();
    const FringeAnalysis fa = analyze_fringes(profile, spec.spacing());
    r.summary["fringe_maxima"] = static_cast<double>(fa.maxima);
    r.summary["fringe_contrast"] = fa.contrast;
    r.summary["time"] = psi.time;

    MassDensityField prof;
    prof.space_dim = 1;
    prof.points_per_axis = n;
    prof.extent = spec.extent;
    prof.origin = {0};
    prof.dims = {n};
    prof.cell_volume = spec.spacing();
    prof.values = fa.profile;
    prof.time = psi.time;
    r.fields.push_back({"m_final", m});
    r.fields.push_back({"m_transverse_profile", prof});

    if (prm.single_slit) {
        r.checks["no_fringes"] = fa.contrast < 0.1;
    } else {
        const double predicted = 2.0 * M_PI * psi.time / (1.0 * prm.slit_separation);
        r.summary["fringe_spacing"] = fa.spacing;
        r.summary["fringe_spacing_predicted"] = predicted;
        r.checks["fringes"] = fa.maxima >= 3 && fa.contrast >= 0.5;
        r.checks["fringe_spacing"] = std::abs(fa.spacing - predicted) <= 0.1 * predicted;
        double sym = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                sym = std::max(sym, std::abs(m.values[i * n + j] - m.values[i * n + (n - j) % n]));
        r.summary["symmetry_error"] = sym;
        r.checks["symmetric"] = sym <= 1e-8;
    }

    std::size_t crossings = 0, degenerate = 0;
    for (std::size_t t = 0; t < run.trajectories.size(); ++t) {
        const auto& tr = run.trajectories[t];
        degenerate += tr.degenerate ? 1 : 0;
        for (std::size_t s = 1; s < tr.configurations.size(); ++s) {
            const double a = tr.configurations[s - 1][1], b = tr.configurations[s][1];
            if (std::abs(b - a) < 0.5 * spec.extent && ((a < 0.0) != (b < 0.0))) ++crossings;
        }
        const std::size_t stride = std::max<std::size_t>(prm.record_every, 1);
        for (std::size_t s = 0; s < tr.configurations.size(); ++s)
            if (s % stride == 0 || s + 1 == tr.configurations.size())
                r.trajectories.push_back({t, tr.times[s], tr.configurations[s], -1});
    }
    r.summary["axis_crossings"] = static_cast<double>(crossings);
    r.summary["degenerate_trajectories"] = static_cast<double>(degenerate);
    if (!prm.single_slit) r.checks["no_axis_crossing"] = crossings == 0;
    if (!run.trajectories.empty()) {
        const EnsembleStats st = ensemble_statistics(run);
        r.summary["ks_x"] = st.ks_statistics[0];
        r.summary["ks_y"] = st.ks_statistics[1];
        r.summary["ks_critical"] = st.ks_critical;
    }
    return r;
}

// ===========================================================================
// Translation-invariant m on a torus
// ===========================================================================

struct TorusParams {
    std::size_t points_per_axis = 64;
    double extent = 40.0;
    std::size_t translate_step = 1; // 1: all n translates; s: the n/s translates by multiples of s cells
    std::string seed_state = "gaussian"; // gaussian | uniform | random
};

inline ScenarioResult torus_invariant(const TorusParams& prm, std::uint64_t seed) {
    GridSpec spec{2, 1, prm.points_per_axis, prm.extent};
    spec.validate();
    const std::size_t n = spec.points_per_axis;
    if (prm.translate_step < 1 || n % prm.translate_step != 0)
        throw ConfigError("torus_invariant: translate_step must divide points_per_axis");
    if (prm.seed_state != "gaussian" && prm.seed_state != "uniform" && prm.seed_state != "random")
        throw ConfigError("torus_invariant: seed_state must be gaussian, uniform or random");

    ScenarioResult r;
    r.id = "torus_invariant";
    r.seed = seed;
    r.params = {{"points_per_axis", n}, {"extent", prm.extent}, {"translate_step", prm.translate_step},
                {"seed_state", prm.seed_state}};

    Rng rng(seed);
    GridState base = GridState::from_function(spec, [&](std::span<const double> x) -> cplx {
        if (prm.seed_state == "uniform") return 1.0;
        if (prm.seed_state == "random") return {uniform01(rng) - 0.5, uniform01(rng) - 0.5};
        return gaussian_amplitude(x[0], -5.0, 1.5) * gaussian_amplitude(x[1], 3.0, 1.5);
    });

    GridState sym = GridState::zeros(spec);
    for (std::size_t attempt = 0;; ++attempt) {
        std::fill(sym.amplitudes.begin(), sym.amplitudes.end(), cplx{});
        for (std::size_t s = 0; s < n; s += prm.translate_step)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    sym.amplitudes[((i + s) % n) * n + (j + s) % n] += base.amplitudes[i * n + j];
        if (sym.norm_sq() >= 1e-10) break;
        if (attempt >= 16) throw NumericalError("symmetrized_norm", "symmetrized state annihilates for every seed phase");
        r.notes["reseeded"] = "symmetrized state vanished; seed phase changed " + std::to_string(attempt + 1) + " time(s)";
        Rng phase_rng(derive_seed(seed, attempt + 1));
        for (auto& z : base.amplitudes) z *= std::polar(1.0, 2.0 * M_PI * uniform01(phase_rng));
    }
    sym = normalize(sym);

    const ParticleWeights w = ParticleWeights::mass({1.0, 1.0});
    const MassDensityField m = matter_density(sym, w);
    const double mean = std::accumulate(m.values.begin(), m.values.end(), 0.0) / static_cast<double>(m.values.size());
    double var = 0.0, period_err = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        var = std::max(var, std::abs(m.values[c] - mean) / mean);
        period_err = std::max(period_err, std::abs(m.values[c] - m.values[(c + prm.translate_step) % n]) / mean);
    }
    // Variance of psi over cells (phase included), relative to its mean square.
    cplx psi_mean = 0.0;
    double mean_sq = 0.0;
    for (const auto& z : sym.amplitudes) {
        psi_mean += z;
        mean_sq += std::norm(z);
    }
    psi_mean /= static_cast<double>(sym.amplitudes.size());
    mean_sq /= static_cast<double>(sym.amplitudes.size());
    double psi_var = 0.0;
    for (const auto& z : sym.amplitudes) psi_var += std::norm(z - psi_mean);
    psi_var /= static_cast<double>(sym.amplitudes.size()) * mean_sq;

    r.summary["max_relative_variation"] = var;
    r.summary["period_error"] = period_err;
    r.summary["psi_relative_variance"] = psi_var;
    r.summary["translates"] = static_cast<double>(n / prm.translate_step);
    r.checks["m_period"] = period_err <= 1e-12;
    if (prm.translate_step == 1) {
        r.checks["m_constant"] = var <= 1e-8;
        if (prm.seed_state != "uniform") r.checks["psi_nonconstant"] = psi_var > 1e-8;
    } else if (prm.seed_state == "random") {
        r.checks["m_nonconstant"] = var > 1e-6;
    }
    r.fields.push_back({"m", m});
    return r;
}

// ===========================================================================
// GRWm collapse of a cat state
// ===========================================================================

struct GrwmCatParams {
    double lambda = 5.0;
    double sigma_c = 1.0;
    double horizon = 1.0;
    std::size_t runs = 1000;
    double left_weight = 0.5;
    double separation = 20.0;
    double sigma = 1.0;
    GridOptions grid;
};

inline GridState grwm_cat_state(const GrwmCatParams& prm) {
    GridSpec spec{1, 1, prm.grid.points_per_axis, prm.grid.extent};
    spec.validate();
    const double half = 0.5 * prm.separation;
    return normalize(GridState::from_function(spec, [&](std::span<const double> x) {
        return std::sqrt(prm.left_weight) * gaussian_amplitude(x[0], -half, prm.sigma) +
               std::sqrt(1.0 - prm.left_weight) * gaussian_amplitude(x[0], half, prm.sigma);
    }));
}

struct GrwmRunOutcome {
    double dominant_fraction = 0.0;
    bool left = false;
    std::size_t collapses = 0;
    std::size_t branches = 0;
};

inline GrwmRunOutcome grwm_outcome(const GrwResult& res, const ParticleWeights& w) {
    const BranchSet bs = decompose_grid(res.state, w, 1e-6, false);
    GrwmRunOutcome o;
    o.dominant_fraction = bs.branches.front().weight / bs.total_weight();
    double left_mass = 0.0;
    const auto& spec = res.state.spec;
    for (std::size_t c = 0; c < res.state.amplitudes.size(); ++c)
        if (spec.coordinate(c) < 0.0) left_mass += std::norm(res.state.amplitudes[c]);
    o.left = left_mass * spec.cell_volume() > 0.5;
    o.collapses = res.events.size();
    o.branches = bs.size();
    return o;
}

inline ScenarioResult grwm_cat(const GrwmCatParams& prm, std::uint64_t seed) {
    if (!(prm.left_weight > 0.0 && prm.left_weight < 1.0)) throw ConfigError("grwm_cat: left_weight must lie in (0, 1)");
    if (prm.runs == 0) throw ConfigError("grwm_cat: runs must be >= 1");
    if (prm.lambda > 0.0 && prm.lambda * prm.horizon < 5.0)
        throw ConfigError("grwm_cat: lambda * horizon * N must be >= 5 (or lambda = 0 for the control)");
    const GridState psi0 = grwm_cat_state(prm);
    GrwParams g{prm.lambda, prm.sigma_c, seed};
    validate(g, psi0.spec);

    ScenarioResult r;
    r.id = "grwm_cat";
    r.seed = seed;
    r.params = {{"lambda", prm.lambda}, {"sigma_c", prm.sigma_c}, {"horizon", prm.horizon}, {"runs", prm.runs},
                {"left_weight", prm.left_weight}, {"separation", prm.separation}, {"sigma", prm.sigma},
                {"grid", {{"points_per_axis", prm.grid.points_per_axis}, {"extent", prm.grid.extent}, {"dt", prm.grid.dt}}}};
    const ParticleWeights w = ParticleWeights::mass({1.0});
    EvolutionParams ep;
    ep.dt = prm.grid.dt;
    ep.steps = static_cast<std::size_t>(std::llround(prm.horizon / prm.grid.dt));

    std::vector<GrwmRunOutcome> outcomes(prm.runs);
    std::optional<GrwResult> first;
    parallel_for(prm.runs, [&](std::size_t i) {
        GrwParams gi = g;
        gi.seed = derive_seed(seed, i);
        GrwResult res = grw_evolve(psi0, PotentialSpec::none(), w, ep, gi);
        outcomes[i] = grwm_outcome(res, w);
        if (i == 0) first = std::move(res);
    });

    std::size_t survivors = 0, lefts = 0, collapses = 0, no_collapse = 0;
    double mean_dominant = 0.0;
    for (const auto& o : outcomes) {
        survivors += o.dominant_fraction >= 1.0 - 1e-4 ? 1 : 0;
        lefts += o.left ? 1 : 0;
        collapses += o.collapses;
        no_collapse += o.collapses == 0 ? 1 : 0;
        mean_dominant += o.dominant_fraction;
    }
    const double runs = static_cast<double>(prm.runs);
    const double left_freq = static_cast<double>(lefts) / runs;
    const double se = stats::proportion_se(prm.left_weight, prm.runs);
    r.summary["survivor_fraction"] = static_cast<double>(survivors) / runs;
    r.summary["left_frequency"] = left_freq;
    r.summary["right_frequency"] = 1.0 - left_freq;
    r.summary["expected_left"] = prm.left_weight;
    r.summary["selection_standard_error"] = se;
    r.summary["mean_collapses"] = static_cast<double>(collapses) / runs;
    r.summary["runs_without_collapse"] = static_cast<double>(no_collapse);
    r.summary["mean_dominant_fraction"] = mean_dominant / runs;

    // Sm on the same initial state keeps both packets.
    const GridState sm_final = split_step_evolve(psi0, PotentialSpec::none(), w, ep);
    BranchSet sm = decompose_grid(sm_final, w, 1e-6, false);
    r.summary["sm_branch_count"] = static_cast<double>(sm.size());

    if (prm.lambda > 0.0) {
        r.checks["single_survivor"] = static_cast<double>(survivors) >= 0.99 * runs;
        r.checks["selection_matches_weights"] = std::abs(left_freq - prm.left_weight) <= 3.0 * se;
    } else {
        const double expected = std::max(prm.left_weight, 1.0 - prm.left_weight);
        r.checks["no_collapse_control"] = std::abs(mean_dominant / runs - expected) <= 1e-6;
    }

    BranchSet final0 = decompose_grid(first->state, w, 1e-6, false);
    r.fields.push_back({"m_final_run0", matter_density(first->state, w)});
    r.fields.push_back({"m_final_sm", matter_density(sm_final, w)});
    append_rows(r, final0);
    final0.source.reset();
    sm.source.reset();
    r.branch_series.push_back(std::move(final0));
    r.branch_series.push_back(std::move(sm));
    return r;
}

// ===========================================================================
// Bohmian record chain: a continuum pointer for the count of "up" results
// ===========================================================================

/// One pointer coordinate whose wave function is a coherent sum of count-class
/// velocity components: psi(x) = g_sigma(x) sum_k sqrt(C(n,k) p^k q^(n-k)) e^{i v_k x},
/// v_k = (k - n/2) dv (unit mass). After a free flight of `horizon` the classes
/// are spatially disjoint and class k sits near v_k * horizon.
struct RecordChainParams {
    std::size_t n = 10;
    double p = 0.7;
    double sigma = 6.0;
    double dv = 1.0;
    double horizon = 72.0;
    GridOptions grid{32768, 900.0, 0.02};
};

inline double record_chain_velocity(const RecordChainParams& c, std::size_t k) {
    return (static_cast<double>(k) - 0.5 * static_cast<double>(c.n)) * c.dv;
}

inline GridState record_chain_wave(const RecordChainParams& c) {
    GridSpec spec{1, 1, c.grid.points_per_axis, c.grid.extent};
    spec.validate();
    const double vmax = 0.5 * static_cast<double>(c.n) * c.dv;
    if (vmax * c.horizon + 8.0 * c.sigma > 0.5 * spec.extent)
        throw ConfigError("record chain: pointer classes leave the periodic domain");
    if (vmax >= M_PI / spec.spacing()) throw ConfigError("record chain: velocities exceed the grid Nyquist limit");
    std::vector<double> amp(c.n + 1);
    for (std::size_t k = 0; k <= c.n; ++k) amp[k] = std::sqrt(binomial_weight(c.n, k, c.p));
    return normalize(GridState::from_function(spec, [&](std::span<const double> x) {
        cplx s = 0.0;
        for (std::size_t k = 0; k <= c.n; ++k)
            if (amp[k] > 0.0) s += amp[k] * gaussian_amplitude(x[0], 0.0, c.sigma, record_chain_velocity(c, k));
        return s;
    }));
}

/// Count class read off the pointer position at the horizon.
inline std::size_t record_chain_class(const RecordChainParams& c, double q) {
    const double k = std::round(q / (c.dv * c.horizon) + 0.5 * static_cast<double>(c.n));
    return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(c.n)));
}

/// Bohmian frequency of each count class over `count` |psi_0|^2-distributed pointers.
inline std::vector<double> record_chain_bohm_frequencies(const RecordChainParams& c, std::size_t count, std::uint64_t seed,
                                                         std::size_t* degenerate = nullptr) {
    const GridState psi0 = record_chain_wave(c);
    EvolutionParams ep;
    ep.dt = c.grid.dt;
    ep.steps = static_cast<std::size_t>(std::llround(c.horizon / c.grid.dt));
    std::vector<std::vector<double>> q0;
    for (auto& s : sample_psi2(psi0, count, seed)) q0.push_back(std::move(s.coords));
    const BohmEnsemble run = bohm_evolve_ensemble(psi0, q0, PotentialSpec::none(), ParticleWeights::mass({1.0}), ep, ep.steps);
    std::vector<double> freq(c.n + 1, 0.0);
    std::size_t deg = 0;
    for (const auto& t : run.trajectories) {
        freq[record_chain_class(c, t.configurations.back()[0])] += 1.0 / static_cast<double>(count);
        deg += t.degenerate ? 1 : 0;
    }
    if (degenerate) *degenerate = deg;
    return freq;
}

} // namespace smw
