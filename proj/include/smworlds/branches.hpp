#pragma once

// Worlds as branches: decomposition of psi into disjoint packets or macrostate
// projections, branch weights mu = ||psi_l||^2 * sum_i w_i, weighted typicality,
// refinement, lineage tracking across time, and the joint-weight pairing of
// branches on two subsystems.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "density.hpp"
#include "error.hpp"
#include "hilbert.hpp"

namespace smw {

inline constexpr std::size_t max_branch_count = 4096;

struct Branch {
    int id = 0;
    std::string label;
    int parent_id = -1;
    std::string parent_label;
    /// Sorted cell indices (grid) or basis indices (finite) of the support.
    std::vector<std::size_t> support;
    double norm_sq = 0.0;
    double weight = 0.0;
};

/// Branch counts at eps_rel / 10, eps_rel and eps_rel * 10.
struct ThresholdSensitivity {
    std::size_t count_finer = 0;
    std::size_t count = 0;
    std::size_t count_coarser = 0;
    bool stable() const { return count_finer == count && count_coarser == count; }
};

struct BranchSet {
    std::vector<Branch> branches;
    /// Decomposed state; absent for analytically aggregated sets.
    std::optional<State> source;
    std::string method;
    double time = 0.0;
    double weight_sum = 1.0; // sum_i w_i
    double residue = 0.0;    // ||psi||^2 not represented by any branch
    std::optional<ThresholdSensitivity> sensitivity;

    std::size_t size() const { return branches.size(); }
    bool empty() const { return branches.empty(); }

    double total_weight() const {
        double s = 0.0;
        for (const auto& b : branches) s += b.weight;
        return s;
    }

    const Branch& by_id(int id) const {
        for (const auto& b : branches)
            if (b.id == id) return b;
        throw ConfigError("no branch with id " + std::to_string(id));
    }
};

/// psi_l: the source restricted to branch l's support.
inline State component_state(const BranchSet& bs, std::size_t index) {
    if (!bs.source) throw ConfigError("component_state(): branch set has no source state");
    const auto& support = bs.branches.at(index).support;
    return std::visit(
        [&](const auto& src) -> State {
            auto out = src;
            std::fill(out.amplitudes.begin(), out.amplitudes.end(), cplx{});
            for (auto c : support) out.amplitudes[c] = src.amplitudes[c];
            return out;
        },
        *bs.source);
}

/// m_l, the matter density of branch l.
inline MassDensityField branch_density(const BranchSet& bs, std::size_t index, const ParticleWeights& w) {
    const State psi_l = component_state(bs, index);
    if (const auto* g = std::get_if<GridState>(&psi_l)) return matter_density(*g, w);
    return finite_density(std::get<FiniteState>(psi_l), w);
}

// ---------------------------------------------------------------------------
// Grid decomposition
// ---------------------------------------------------------------------------

namespace detail {

/// Face-adjacent connected components (periodic) of the cells where `mask` is
/// set. Component ids follow the lowest flat index of each component.
inline std::vector<int> label_components(const GridSpec& spec, const std::vector<char>& mask, std::size_t& count,
                                         std::size_t limit) {
    const std::size_t cells = mask.size();
    const std::size_t n = spec.points_per_axis;
    const std::size_t axes = spec.axes();
    std::vector<std::size_t> strides(axes);
    for (std::size_t a = 0; a < axes; ++a) strides[a] = spec.stride(a);

    std::vector<int> label(cells, -1);
    std::vector<std::size_t> stack;
    count = 0;
    for (std::size_t start = 0; start < cells; ++start) {
        if (!mask[start] || label[start] >= 0) continue;
        if (count >= limit)
            throw NumericalError("branch_count_limit",
                                 "decomposition exceeds " + std::to_string(limit) + " branches");
        const int id = static_cast<int>(count++);
        label[start] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t c = stack.back();
            stack.pop_back();
            for (std::size_t a = 0; a < axes; ++a) {
                const std::size_t i = (c / strides[a]) % n;
                const std::size_t up = i + 1 == n ? c - i * strides[a] : c + strides[a];
                const std::size_t down = i == 0 ? c + (n - 1) * strides[a] : c - strides[a];
                for (std::size_t nb : {up, down})
                    if (mask[nb] && label[nb] < 0) {
                        label[nb] = id;
                        stack.push_back(nb);
                    }
            }
        }
    }
    return label;
}

inline std::size_t count_components(const GridState& psi, double threshold) {
    std::vector<char> mask(psi.amplitudes.size());
    for (std::size_t c = 0; c < mask.size(); ++c) mask[c] = std::norm(psi.amplitudes[c]) >= threshold;
    std::size_t count = 0;
    label_components(psi.spec, mask, count, std::numeric_limits<std::size_t>::max());
    return count;
}

/// Assigns every unlabeled cell to the component of its nearest labeled cell
/// (periodic squared Euclidean distance in cell units; ties to the lowest
/// component id). Separable exact transform: lexicographic (distance, label)
/// minimization commutes with adding the per-axis distance term.
inline void assign_nearest(const GridSpec& spec, std::vector<int>& label) {
    constexpr std::int64_t inf = std::numeric_limits<std::int64_t>::max() / 4;
    const std::size_t n = spec.points_per_axis;
    const std::size_t cells = label.size();
    std::vector<std::int64_t> dist(cells);
    for (std::size_t c = 0; c < cells; ++c) dist[c] = label[c] >= 0 ? 0 : inf;

    std::vector<std::int64_t> ld(n), nd(n);
    std::vector<int> ll(n), nl(n);
    for (std::size_t axis = 0; axis < spec.axes(); ++axis) {
        const std::size_t stride = spec.stride(axis);
        for (std::size_t base = 0; base < cells; ++base) {
            if ((base / stride) % n != 0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                ld[j] = dist[base + j * stride];
                ll[j] = label[base + j * stride];
            }
            for (std::size_t x = 0; x < n; ++x) {
                std::int64_t best = inf;
                int best_label = -1;
                for (std::size_t y = 0; y < n; ++y) {
                    if (ld[y] >= inf) continue;
                    const std::size_t diff = x > y ? x - y : y - x;
                    const auto dp = static_cast<std::int64_t>(std::min(diff, n - diff));
                    const std::int64_t cand = ld[y] + dp * dp;
                    if (cand < best || (cand == best && ll[y] < best_label)) {
                        best = cand;
                        best_label = ll[y];
                    }
                }
                nd[x] = best;
                nl[x] = best_label;
            }
            for (std::size_t j = 0; j < n; ++j) {
                dist[base + j * stride] = nd[j];
                label[base + j * stride] = nl[j];
            }
        }
    }
}

} // namespace detail

/// Splits psi into the connected components of {|psi|^2 >= eps_rel * max|psi|^2}
/// (face adjacency, periodic), assigns the remaining cells to the nearest
/// component, and orders branches by descending weight (ties: lowest cell).
inline BranchSet decompose_grid(const GridState& psi, const ParticleWeights& w, double eps_rel = 1e-6,
                                bool report_sensitivity = true) {
    if (!(eps_rel > 0.0 && eps_rel < 1.0)) throw ConfigError("decompose_grid(): eps_rel must lie in (0, 1)");
    if (w.size() != static_cast<std::size_t>(psi.spec.num_particles))
        throw ConfigError("decompose_grid(): weight count does not match particle count");
    double peak = 0.0;
    for (const auto& z : psi.amplitudes) peak = std::max(peak, std::norm(z));
    if (peak < 1e-300) throw NumericalError("nonzero_state", "decompose_grid(): psi vanishes everywhere");

    const double threshold = eps_rel * peak;
    std::vector<char> mask(psi.amplitudes.size());
    for (std::size_t c = 0; c < mask.size(); ++c) mask[c] = std::norm(psi.amplitudes[c]) >= threshold;
    std::size_t count = 0;
    std::vector<int> label = detail::label_components(psi.spec, mask, count, max_branch_count);
    detail::assign_nearest(psi.spec, label);

    std::vector<Branch> branches(count);
    const double dv = psi.spec.cell_volume();
    for (std::size_t c = 0; c < label.size(); ++c) {
        auto& b = branches[static_cast<std::size_t>(label[c])];
        b.support.push_back(c);
        b.norm_sq += std::norm(psi.amplitudes[c]);
    }
    const double wsum = w.total();
    for (auto& b : branches) {
        b.norm_sq *= dv;
        b.weight = b.norm_sq * wsum;
    }
    std::stable_sort(branches.begin(), branches.end(), [](const Branch& a, const Branch& b) {
        if (a.weight != b.weight) return a.weight > b.weight;
        return a.support.front() < b.support.front();
    });
    for (std::size_t i = 0; i < branches.size(); ++i) {
        branches[i].id = static_cast<int>(i);
        branches[i].label = "packet" + std::to_string(i);
    }

    BranchSet bs;
    bs.branches = std::move(branches);
    bs.source = psi;
    bs.method = "threshold:" + std::to_string(eps_rel);
    bs.time = psi.time;
    bs.weight_sum = wsum;
    if (report_sensitivity) {
        ThresholdSensitivity s;
        s.count = count;
        s.count_finer = detail::count_components(psi, threshold / 10.0);
        s.count_coarser = eps_rel * 10.0 < 1.0 ? detail::count_components(psi, threshold * 10.0) : count;
        bs.sensitivity = s;
    }
    return bs;
}

// ---------------------------------------------------------------------------
// Macrostate projectors on finite bases
// ---------------------------------------------------------------------------

/// Projector onto a set of product-basis vectors.
struct Projector {
    std::string label;
    std::vector<std::size_t> indices; // sorted
};

/// Mutually orthogonal projectors (disjoint index sets) on a basis of `dim`
/// vectors; `acts_on` lists the factors the projectors depend on, if known.
struct MacrostateFamily {
    std::size_t dim = 0;
    std::vector<Projector> projectors;
    std::vector<std::size_t> acts_on;

    /// Sum of the projectors equals the identity.
    bool complete() const {
        std::size_t total = 0;
        for (const auto& p : projectors) total += p.indices.size();
        return total == dim;
    }

    /// Throws unless the projectors are pairwise orthogonal and in range.
    void validate() const {
        std::vector<char> used(dim, 0);
        for (const auto& p : projectors)
            for (auto i : p.indices) {
                if (i >= dim) throw ConfigError("projector '" + p.label + "' indexes outside the basis");
                if (used[i]) throw ConfigError("non-orthogonal family: projector '" + p.label + "' overlaps another");
                used[i] = 1;
            }
    }

    /// Groups basis vectors by `classify(flat)`; indices mapped to nullopt are
    /// left out (incomplete family). Projector order is first appearance.
    template <class F>
    static MacrostateFamily from_classifier(const FiniteState& shape, F&& classify, std::vector<std::size_t> acts_on = {}) {
        MacrostateFamily fam;
        fam.dim = shape.dim();
        fam.acts_on = std::move(acts_on);
        std::map<std::string, std::size_t> slot;
        for (std::size_t flat = 0; flat < shape.dim(); ++flat) {
            std::optional<std::string> l = classify(flat);
            if (!l) continue;
            auto [it, inserted] = slot.emplace(*l, fam.projectors.size());
            if (inserted) fam.projectors.push_back(Projector{*l, {}});
            fam.projectors[it->second].indices.push_back(flat);
        }
        return fam;
    }

    /// One projector per listed label of the given factors (all labels when empty);
    /// joint labels are joined with '|'.
    static MacrostateFamily from_factors(const FiniteState& shape, std::vector<std::size_t> factors,
                                         const std::vector<std::vector<std::string>>& allowed = {}) {
        for (auto f : factors)
            if (f >= shape.factors.size()) throw ConfigError("from_factors(): factor index out of range");
        auto fam = from_classifier(
            shape,
            [&](std::size_t flat) -> std::optional<std::string> {
                std::string l;
                for (std::size_t k = 0; k < factors.size(); ++k) {
                    const auto& fac = shape.factors[factors[k]];
                    const std::string& lab = fac.labels[shape.label_index(flat, factors[k])];
                    if (k < allowed.size() && !allowed[k].empty() &&
                        std::find(allowed[k].begin(), allowed[k].end(), lab) == allowed[k].end())
                        return std::nullopt;
                    if (k) l += '|';
                    l += lab;
                }
                return l;
            },
            factors);
        return fam;
    }
};

/// psi_l = P_l psi for each projector; branches with ||psi_l||^2 < 1e-14 are
/// dropped and their weight reported as residue.
inline BranchSet decompose_projectors(const FiniteState& psi, const MacrostateFamily& fam, const ParticleWeights& w) {
    if (fam.dim != psi.dim()) throw ConfigError("decompose_projectors(): family dimension mismatch");
    fam.validate();
    BranchSet bs;
    bs.source = psi;
    bs.method = "projectors";
    bs.time = psi.time;
    bs.weight_sum = w.total();
    double kept = 0.0;
    for (const auto& p : fam.projectors) {
        double n2 = 0.0;
        for (auto i : p.indices) n2 += std::norm(psi.amplitudes[i]);
        if (n2 < 1e-14) continue;
        if (bs.branches.size() >= max_branch_count)
            throw NumericalError("branch_count_limit", "decomposition exceeds " + std::to_string(max_branch_count) + " branches");
        Branch b;
        b.id = static_cast<int>(bs.branches.size());
        b.label = p.label;
        b.parent_label = p.label;
        b.support = p.indices;
        b.norm_sq = n2;
        b.weight = n2 * bs.weight_sum;
        kept += n2;
        bs.branches.push_back(std::move(b));
    }
    bs.residue = std::max(0.0, psi.norm_sq() - kept);
    return bs;
}

/// A branch set assembled from known branch norms (no source state).
inline BranchSet analytic_branches(const std::vector<std::string>& labels, const std::vector<double>& norm_sqs,
                                   double weight_sum, double time = 0.0) {
    if (labels.size() != norm_sqs.size()) throw ConfigError("analytic_branches(): size mismatch");
    BranchSet bs;
    bs.method = "analytic";
    bs.time = time;
    bs.weight_sum = weight_sum;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Branch b;
        b.id = static_cast<int>(i);
        b.label = labels[i];
        b.parent_label = labels[i];
        b.norm_sq = norm_sqs[i];
        b.weight = norm_sqs[i] * weight_sum;
        bs.branches.push_back(std::move(b));
    }
    return bs;
}

// ---------------------------------------------------------------------------
// Weights and typicality
// ---------------------------------------------------------------------------

/// Fraction of the total branch weight carried by branches satisfying `pred`.
template <class Pred>
double weight_of(Pred&& pred, const BranchSet& bs) {
    if (bs.empty()) throw ConfigError("weight_of(): empty branch set");
    double num = 0.0, den = 0.0;
    for (const auto& b : bs.branches) {
        den += b.weight;
        if (pred(b)) num += b.weight;
    }
    if (!(den > 0.0)) throw NumericalError("positive_weight", "weight_of(): branch weights sum to zero");
    return num == den ? 1.0 : num / den;
}

/// True iff the weight fraction satisfying `pred` is at least 1 - eps.
template <class Pred>
bool is_typical(Pred&& pred, const BranchSet& bs, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("is_typical(): eps must lie in (0, 1)");
    return weight_of(std::forward<Pred>(pred), bs) >= 1.0 - eps;
}

/// Splits every branch by the finer family. Each finer projector must lie
/// inside a single parent support; children keep their parent's id and label.
inline BranchSet refine(const BranchSet& bs, const MacrostateFamily& finer) {
    if (!bs.source || !std::holds_alternative<FiniteState>(*bs.source))
        throw ConfigError("refine(): needs a branch set decomposed from a finite state");
    const auto& psi = std::get<FiniteState>(*bs.source);
    if (finer.dim != psi.dim()) throw ConfigError("refine(): family dimension mismatch");
    finer.validate();

    std::vector<int> owner(psi.dim(), -1);
    for (std::size_t b = 0; b < bs.branches.size(); ++b)
        for (auto i : bs.branches[b].support) owner[i] = static_cast<int>(b);

    std::vector<std::vector<const Projector*>> per_parent(bs.branches.size());
    for (const auto& p : finer.projectors) {
        int parent = -2;
        for (auto i : p.indices) {
            const int o = owner[i];
            if (parent == -2)
                parent = o;
            else if (parent != o)
                throw ConfigError("non-refining family: projector '" + p.label + "' straddles branch supports");
        }
        if (parent >= 0) per_parent[static_cast<std::size_t>(parent)].push_back(&p);
    }

    BranchSet out;
    out.source = bs.source;
    out.method = bs.method + "+refined";
    out.time = bs.time;
    out.weight_sum = bs.weight_sum;
    double kept = 0.0;
    for (std::size_t b = 0; b < bs.branches.size(); ++b) {
        const Branch& parent = bs.branches[b];
        for (const Projector* p : per_parent[b]) {
            double n2 = 0.0;
            for (auto i : p->indices) n2 += std::norm(psi.amplitudes[i]);
            if (n2 < 1e-14) continue;
            if (out.branches.size() >= max_branch_count)
                throw NumericalError("branch_count_limit", "refinement exceeds " + std::to_string(max_branch_count) + " branches");
            Branch c;
            c.id = static_cast<int>(out.branches.size());
            c.label = p->label;
            c.parent_id = parent.id;
            c.parent_label = parent.label;
            c.support = p->indices;
            c.norm_sq = n2;
            c.weight = n2 * out.weight_sum;
            kept += n2;
            out.branches.push_back(std::move(c));
        }
    }
    out.residue = std::max(0.0, psi.norm_sq() - kept);
    return out;
}

// ---------------------------------------------------------------------------
// Lineage
// ---------------------------------------------------------------------------

struct BranchLineage {
    std::vector<BranchSet> sets;
    /// parents[s][c]: index into sets[s] of the parent of branch c of sets[s + 1].
    std::vector<std::vector<std::size_t>> parents;
    /// overlaps[s][c]: |<psi_c, U psi_parent>|^2 / ||psi_c||^2.
    std::vector<std::vector<double>> overlaps;
    /// 1 - sum of matched overlaps over ||psi(t+dt)||^2, per step.
    std::vector<double> leakage;
    /// max over parents of |mu_parent - sum of its children's mu| / sum_i w_i, per step.
    std::vector<double> weight_drift;
    double leakage_bound = 1e-3;
    bool reliable = true;
};

/// Advances a (component) state from one branch-set time to the next.
using StepEvolution = std::function<State(const State&, double t_from, double t_to)>;

/// Links each branch at t+dt to the earlier branch maximizing |<psi_c, U psi_k>|^2
/// (ties: larger parent weight, then lower id). Steps whose leakage exceeds
/// the bound mark the lineage unreliable.
inline BranchLineage track(std::vector<BranchSet> sets, const StepEvolution& evolve, double leakage_bound = 1e-3) {
    BranchLineage lin;
    lin.leakage_bound = leakage_bound;
    for (const auto& s : sets)
        if (!s.source) throw ConfigError("track(): every branch set needs its source state");
    for (std::size_t s = 0; s + 1 < sets.size(); ++s) {
        const BranchSet& before = sets[s];
        const BranchSet& after = sets[s + 1];
        std::vector<State> evolved;
        evolved.reserve(before.size());
        for (std::size_t k = 0; k < before.size(); ++k)
            evolved.push_back(evolve(component_state(before, k), before.time, after.time));

        std::vector<std::size_t> parent(after.size(), 0);
        std::vector<double> overlap(after.size(), 0.0);
        double matched = 0.0;
        for (std::size_t c = 0; c < after.size(); ++c) {
            const State child = component_state(after, c);
            const double child_n2 = norm_sq(child);
            double best = -1.0;
            for (std::size_t k = 0; k < before.size(); ++k) {
                const double o = std::norm(inner(child, evolved[k]));
                const Branch& bk = before.branches[k];
                const Branch& bp = before.branches[parent[c]];
                const bool better = o > best || (o == best && (bk.weight > bp.weight || (bk.weight == bp.weight && bk.id < bp.id)));
                if (better) {
                    best = o;
                    parent[c] = k;
                }
            }
            overlap[c] = child_n2 > 0.0 ? best / child_n2 : 0.0;
            matched += overlap[c];
        }
        const double total = norm_sq(*after.source);
        const double leak = 1.0 - matched / total;

        std::vector<double> child_sum(before.size(), 0.0);
        for (std::size_t c = 0; c < after.size(); ++c) child_sum[parent[c]] += after.branches[c].weight;
        double drift = 0.0;
        for (std::size_t k = 0; k < before.size(); ++k)
            drift = std::max(drift, std::abs(before.branches[k].weight - child_sum[k]) / before.weight_sum);

        lin.parents.push_back(std::move(parent));
        lin.overlaps.push_back(std::move(overlap));
        lin.leakage.push_back(leak);
        lin.weight_drift.push_back(drift);
        if (std::abs(leak) > leakage_bound) lin.reliable = false;
    }
    lin.sets = std::move(sets);
    return lin;
}

// ---------------------------------------------------------------------------
// Pairing of worlds across subsystems
// ---------------------------------------------------------------------------

struct PairingMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Eigen::MatrixXd weights; // ||P_a P_b psi||^2
};

inline PairingMatrix pairing(const FiniteState& psi, const MacrostateFamily& side_a, const MacrostateFamily& side_b) {
    if (side_a.dim != psi.dim() || side_b.dim != psi.dim()) throw ConfigError("pairing(): family dimension mismatch");
    side_a.validate();
    side_b.validate();
    for (auto f : side_a.acts_on)
        if (std::find(side_b.acts_on.begin(), side_b.acts_on.end(), f) != side_b.acts_on.end())
            throw ConfigError("pairing(): families act on overlapping factors");

    std::vector<int> col_of(psi.dim(), -1);
    for (std::size_t b = 0; b < side_b.projectors.size(); ++b)
        for (auto i : side_b.projectors[b].indices) col_of[i] = static_cast<int>(b);

    PairingMatrix pm;
    pm.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(side_a.projectors.size()),
                                       static_cast<Eigen::Index>(side_b.projectors.size()));
    for (const auto& p : side_a.projectors) pm.row_labels.push_back(p.label);
    for (const auto& p : side_b.projectors) pm.col_labels.push_back(p.label);
    for (std::size_t a = 0; a < side_a.projectors.size(); ++a)
        for (auto i : side_a.projectors[a].indices)
            if (col_of[i] >= 0) pm.weights(static_cast<Eigen::Index>(a), col_of[i]) += std::norm(psi.amplitudes[i]);
    return pm;
}

} // namespace smw
