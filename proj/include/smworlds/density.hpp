#pragma once

// The matter density field m(x, t): weighted sum over particles of the
// single-particle marginals of |psi|^2, on a physical-space grid or on the
// discrete sites of a finite model.

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "hilbert.hpp"

namespace smw {

/// Real field on physical space. Grid fields cover an axis-aligned box of
/// `dims` cells starting at `origin` within an n^d periodic grid; labeled
/// fields hold one value per site label (cell_volume 1).
struct MassDensityField {
    int space_dim = 0;
    std::size_t points_per_axis = 0;
    double extent = 0.0;
    std::vector<std::size_t> origin;
    std::vector<std::size_t> dims;
    double cell_volume = 1.0;
    std::vector<std::string> labels;
    std::vector<double> values;
    double time = 0.0;

    bool is_grid() const { return space_dim > 0; }

    double integral() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s * cell_volume;
    }

    double at(const std::string& label) const {
        auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) return 0.0;
        return values[static_cast<std::size_t>(it - labels.begin())];
    }

    /// Physical coordinate of local index j along axis a.
    double coordinate(std::size_t axis, std::size_t j) const {
        return -0.5 * extent + static_cast<double>(origin[axis] + j) * extent / static_cast<double>(points_per_axis);
    }
};

/// Axis-aligned box of physical-grid cell indices, [lo, hi) per axis.
struct Box {
    std::vector<std::size_t> lo;
    std::vector<std::size_t> hi;
};

/// Explicit set of site labels of a finite model.
struct LabelSet {
    std::vector<std::string> labels;
};

using Region = std::variant<Box, LabelSet>;

/// Single-particle marginal density of particle i: sum over all other
/// coordinates of |psi|^2 times their cell volume, as an n^d array.
inline std::vector<double> particle_marginal(const GridState& psi, std::size_t particle) {
    const auto& spec = psi.spec;
    if (particle >= static_cast<std::size_t>(spec.num_particles))
        throw ConfigError("particle_marginal(): particle index out of range");
    const std::size_t n = spec.points_per_axis;
    const std::size_t d = static_cast<std::size_t>(spec.space_dim);
    std::size_t mid = 1;
    for (std::size_t a = 0; a < d; ++a) mid *= n;
    std::size_t outer = 1, inner = 1;
    for (std::size_t p = 0; p < particle; ++p) outer *= mid;
    for (std::size_t p = particle + 1; p < static_cast<std::size_t>(spec.num_particles); ++p) inner *= mid;

    std::vector<double> out(mid, 0.0);
    const cplx* data = psi.amplitudes.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t m = 0; m < mid; ++m) {
            const cplx* block = data + (o * mid + m) * inner;
            double s = 0.0;
            for (std::size_t i = 0; i < inner; ++i) s += std::norm(block[i]);
            out[m] += s;
        }
    const double others = std::pow(spec.spacing(), static_cast<double>(d * (static_cast<std::size_t>(spec.num_particles) - 1)));
    for (auto& v : out) v *= others;
    return out;
}

/// m(c) = sum_i w_i * marginal_i(c) on the n^d physical grid.
inline MassDensityField matter_density(const GridState& psi, const ParticleWeights& w) {
    const auto& spec = psi.spec;
    if (w.size() != static_cast<std::size_t>(spec.num_particles))
        throw ConfigError("matter_density(): " + std::to_string(w.size()) + " weights for " +
                          std::to_string(spec.num_particles) + " particles");
    MassDensityField m;
    m.space_dim = spec.space_dim;
    m.points_per_axis = spec.points_per_axis;
    m.extent = spec.extent;
    m.origin.assign(static_cast<std::size_t>(spec.space_dim), 0);
    m.dims.assign(static_cast<std::size_t>(spec.space_dim), spec.points_per_axis);
    m.cell_volume = std::pow(spec.spacing(), spec.space_dim);
    m.time = psi.time;
    for (std::size_t i = 0; i < w.size(); ++i) {
        auto marginal = particle_marginal(psi, i);
        if (m.values.empty()) m.values.assign(marginal.size(), 0.0);
        for (std::size_t c = 0; c < marginal.size(); ++c) m.values[c] += w.values[i] * marginal[c];
    }
    return m;
}

namespace detail {
/// Shared site bookkeeping for finite densities: position factors by particle.
inline void accumulate_sites(std::span<const Factor> factors, const ParticleWeights& w,
                             std::span<const std::size_t> flat_labels, double prob,
                             std::map<std::string, std::size_t>& slot, MassDensityField& m) {
    for (std::size_t f = 0; f < factors.size(); ++f) {
        const auto& fac = factors[f];
        if (fac.kind != FactorKind::position) continue;
        const std::string site = fac.site(flat_labels[f]);
        auto it = slot.find(site);
        if (it == slot.end()) continue;
        m.values[it->second] += w.values[static_cast<std::size_t>(fac.particle)] * prob;
    }
}

inline void register_sites(std::span<const Factor> factors, const ParticleWeights& w,
                           std::map<std::string, std::size_t>& slot, MassDensityField& m) {
    for (const auto& fac : factors) {
        if (fac.kind != FactorKind::position) continue;
        if (fac.particle < 0 || static_cast<std::size_t>(fac.particle) >= w.size())
            throw ConfigError("position factor '" + fac.name + "' has no matching particle weight");
        for (std::size_t j = 0; j < fac.dim(); ++j) {
            const std::string s = fac.site(j);
            if (slot.emplace(s, m.labels.size()).second) {
                m.labels.push_back(s);
                m.values.push_back(0.0);
            }
        }
    }
}
} // namespace detail

/// Density over site labels: m(site) = sum_i w_i <psi| P_i(site) |psi>.
/// Sites appear in order of first occurrence over the position factors.
inline MassDensityField finite_density(const FiniteState& psi, const ParticleWeights& w) {
    std::vector<bool> seen(w.size(), false);
    for (const auto& f : psi.factors)
        if (f.kind == FactorKind::position && f.particle >= 0 && static_cast<std::size_t>(f.particle) < w.size())
            seen[static_cast<std::size_t>(f.particle)] = true;
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) throw ConfigError("finite_density(): particle " + std::to_string(i) + " has no position factor");

    MassDensityField m;
    m.time = psi.time;
    std::map<std::string, std::size_t> slot;
    detail::register_sites(psi.factors, w, slot, m);

    std::vector<std::size_t> labels(psi.factors.size());
    for (std::size_t flat = 0; flat < psi.dim(); ++flat) {
        const double prob = std::norm(psi.amplitudes[flat]);
        if (prob == 0.0) continue;
        for (std::size_t f = 0; f < psi.factors.size(); ++f) labels[f] = psi.label_index(flat, f);
        detail::accumulate_sites(psi.factors, w, labels, prob, slot, m);
    }
    return m;
}

/// Density on the sites of a subsystem computed from its reduced density
/// matrix alone: m(x) = sum_j w_j sum_r delta(x - r_j) rho(r; r).
inline MassDensityField density_from_reduced(const DensityMatrix& rho, const ParticleWeights& w) {
    MassDensityField m;
    std::map<std::string, std::size_t> slot;
    detail::register_sites(rho.factors, w, slot, m);
    if (m.labels.empty()) throw ConfigError("density_from_reduced(): no position factors kept");

    std::vector<std::size_t> strides(rho.factors.size(), 1);
    for (std::size_t f = rho.factors.size(); f-- > 1;) strides[f - 1] = strides[f] * rho.factors[f].dim();
    std::vector<std::size_t> labels(rho.factors.size());
    for (std::size_t r = 0; r < rho.dim(); ++r) {
        const double prob = rho.entries(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r)).real();
        for (std::size_t f = 0; f < rho.factors.size(); ++f) labels[f] = (r / strides[f]) % rho.factors[f].dim();
        detail::accumulate_sites(rho.factors, w, labels, prob, slot, m);
    }
    return m;
}

inline MassDensityField restrict(const MassDensityField& m, const Box& box) {
    if (!m.is_grid()) throw ConfigError("restrict(): box region on a labeled field");
    const std::size_t d = static_cast<std::size_t>(m.space_dim);
    if (box.lo.size() != d || box.hi.size() != d) throw ConfigError("restrict(): box dimension mismatch");
    MassDensityField out = m;
    out.origin.resize(d);
    out.dims.resize(d);
    std::size_t count = 1;
    for (std::size_t a = 0; a < d; ++a) {
        if (box.lo[a] >= box.hi[a]) throw ConfigError("restrict(): empty region");
        if (box.lo[a] < m.origin[a] || box.hi[a] > m.origin[a] + m.dims[a])
            throw ConfigError("restrict(): region outside the field");
        out.origin[a] = box.lo[a];
        out.dims[a] = box.hi[a] - box.lo[a];
        count *= out.dims[a];
    }
    out.values.assign(count, 0.0);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t c = 0; c < count; ++c) {
        std::size_t src = 0;
        for (std::size_t a = 0; a < d; ++a) src = src * m.dims[a] + (out.origin[a] - m.origin[a] + idx[a]);
        out.values[c] = m.values[src];
        for (std::size_t a = d; a-- > 0;) {
            if (++idx[a] < out.dims[a]) break;
            idx[a] = 0;
        }
    }
    return out;
}

inline MassDensityField restrict(const MassDensityField& m, const LabelSet& set) {
    if (m.is_grid()) throw ConfigError("restrict(): label region on a grid field");
    if (set.labels.empty()) throw ConfigError("restrict(): empty region");
    std::set<std::string> wanted(set.labels.begin(), set.labels.end());
    for (const auto& l : wanted)
        if (std::find(m.labels.begin(), m.labels.end(), l) == m.labels.end())
            throw ConfigError("restrict(): unknown site '" + l + "'");
    MassDensityField out = m;
    out.labels.clear();
    out.values.clear();
    for (std::size_t i = 0; i < m.labels.size(); ++i)
        if (wanted.count(m.labels[i])) {
            out.labels.push_back(m.labels[i]);
            out.values.push_back(m.values[i]);
        }
    return out;
}

inline MassDensityField restrict(const MassDensityField& m, const Region& r) {
    return std::visit([&](const auto& region) { return restrict(m, region); }, r);
}

/// Labeled-field sites whose name starts with `prefix` (e.g. "B:").
inline LabelSet sites_with_prefix(const MassDensityField& m, const std::string& prefix) {
    LabelSet s;
    for (const auto& l : m.labels)
        if (l.rfind(prefix, 0) == 0) s.labels.push_back(l);
    return s;
}

} // namespace smw
