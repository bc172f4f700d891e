#pragma once

// Single-world rivals on the same wave function: Bohmian trajectories guided
// by psi, |psi|^2 configuration sampling, Bell-style independent-time (Sip)
// histories, and |psi_0|^2-typicality of trajectory properties.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "branches.hpp"
#include "density.hpp"
#include "dynamics.hpp"
#include "error.hpp"
#include "fft.hpp"
#include "hilbert.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace smw {

/// A sampled configuration: coordinates (grid states) and the flat cell or
/// basis index it falls in.
struct Configuration {
    std::vector<double> coords;
    std::size_t cell = 0;
};

// ---------------------------------------------------------------------------
// Periodic coordinates
// ---------------------------------------------------------------------------

/// Cells are [x_j - h/2, x_j + h/2); the fundamental domain is their union
/// [-L/2 - h/2, L/2 - h/2).
inline double domain_low(const GridSpec& spec) { return -0.5 * spec.extent - 0.5 * spec.spacing(); }

inline double wrap_coordinate(const GridSpec& spec, double x) {
    const double lo = domain_low(spec);
    double u = std::fmod(x - lo, spec.extent);
    if (u < 0.0) u += spec.extent;
    if (u >= spec.extent) u = 0.0;
    return lo + u;
}

inline bool in_domain(const GridSpec& spec, double x) {
    const double lo = domain_low(spec);
    return x >= lo && x < lo + spec.extent;
}

inline std::size_t cell_of(const GridSpec& spec, std::span<const double> q) {
    const std::size_t n = spec.points_per_axis;
    std::size_t flat = 0;
    for (double x : q) {
        auto j = static_cast<long long>(std::floor((x - domain_low(spec)) / spec.spacing()));
        j %= static_cast<long long>(n);
        if (j < 0) j += static_cast<long long>(n);
        flat = flat * n + static_cast<std::size_t>(j);
    }
    return flat;
}

// ---------------------------------------------------------------------------
// |psi|^2 sampling
// ---------------------------------------------------------------------------

/// Inverse-CDF sampler over the flattened cell probabilities |psi|^2 dv
/// (grid, with uniform jitter inside the cell) or |psi_i|^2 (finite basis).
class Psi2Sampler {
public:
    explicit Psi2Sampler(const GridState& psi) : grid_(psi.spec) { build(psi.amplitudes); }
    explicit Psi2Sampler(const FiniteState& psi) { build(psi.amplitudes); }
    explicit Psi2Sampler(const State& psi) {
        if (const auto* g = std::get_if<GridState>(&psi)) {
            grid_ = g->spec;
            build(g->amplitudes);
        } else {
            build(std::get<FiniteState>(psi).amplitudes);
        }
    }

    Configuration draw(Rng& rng) const {
        const double u = uniform01(rng) * cdf_.back();
        std::size_t cell = static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
        cell = std::min(cell, cdf_.size() - 1);
        while (cell > 0 && cdf_[cell] == cdf_[cell - 1]) --cell; // never land on an empty cell
        Configuration c;
        c.cell = cell;
        if (grid_) {
            const std::size_t axes = grid_->axes();
            c.coords.resize(axes);
            for (std::size_t a = 0; a < axes; ++a) {
                const std::size_t j = grid_->axis_index(cell, a);
                c.coords[a] = grid_->coordinate(j) + (uniform01(rng) - 0.5) * grid_->spacing();
            }
        }
        return c;
    }

private:
    void build(const std::vector<cplx>& amps) {
        cdf_.resize(amps.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < amps.size(); ++i) cdf_[i] = (acc += std::norm(amps[i]));
        if (!(acc > 0.0)) throw ConfigError("Psi2Sampler: state has no weight");
    }

    std::optional<GridSpec> grid_;
    std::vector<double> cdf_;
};

inline std::vector<Configuration> sample_psi2(const State& psi, std::size_t count, std::uint64_t seed) {
    Psi2Sampler sampler(psi);
    Rng rng(seed);
    std::vector<Configuration> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sampler.draw(rng));
    return out;
}

// ---------------------------------------------------------------------------
// Guidance field
// ---------------------------------------------------------------------------

/// psi and its spectral gradient on the grid, with multilinear point evaluation.
class GuidanceField {
public:
    GuidanceField(const GridState& psi, const ParticleWeights& masses, GridFft& fft)
        : spec_(psi.spec), psi_(psi.amplitudes) {
        if (masses.size() != static_cast<std::size_t>(spec_.num_particles))
            throw ConfigError("GuidanceField: one mass per particle required");
        inv_mass_.resize(spec_.axes());
        for (std::size_t a = 0; a < spec_.axes(); ++a)
            inv_mass_[a] = 1.0 / masses.values[a / static_cast<std::size_t>(spec_.space_dim)];
        for (const auto& z : psi_) peak_ = std::max(peak_, std::norm(z));

        const std::size_t n = spec_.points_per_axis;
        auto buf = fft.data();
        std::copy(psi_.begin(), psi_.end(), buf.begin());
        fft.forward();
        const std::vector<cplx> spectrum(buf.begin(), buf.end());
        grad_.resize(spec_.axes());
        for (std::size_t a = 0; a < spec_.axes(); ++a) {
            for (std::size_t c = 0; c < spectrum.size(); ++c) {
                const std::size_t j = spec_.axis_index(c, a);
                // The Nyquist mode has no well-defined odd derivative.
                const double k = j == n / 2 ? 0.0 : wavenumber(j, n, spec_.extent);
                buf[c] = spectrum[c] * cplx(0.0, k);
            }
            fft.inverse_normalized();
            grad_[a].assign(buf.begin(), buf.end());
        }
    }

    const GridSpec& spec() const { return spec_; }
    double peak_density() const { return peak_; }

    /// psi(q) and grad psi(q) by multilinear interpolation; `out_grad` has one entry per axis.
    cplx sample(std::span<const double> q, std::span<cplx> out_grad) const {
        const std::size_t axes = spec_.axes();
        const std::size_t n = spec_.points_per_axis;
        const double h = spec_.spacing();
        std::size_t lo_idx[9], hi_idx[9];
        double frac[9];
        for (std::size_t a = 0; a < axes; ++a) {
            const double u = (q[a] - spec_.coordinate(0)) / h;
            const double fl = std::floor(u);
            auto i0 = static_cast<long long>(fl) % static_cast<long long>(n);
            if (i0 < 0) i0 += static_cast<long long>(n);
            lo_idx[a] = static_cast<std::size_t>(i0);
            hi_idx[a] = (lo_idx[a] + 1) % n;
            frac[a] = u - fl;
        }
        cplx value = 0.0;
        for (std::size_t a = 0; a < axes; ++a) out_grad[a] = 0.0;
        const std::size_t corners = std::size_t{1} << axes;
        for (std::size_t corner = 0; corner < corners; ++corner) {
            double wgt = 1.0;
            std::size_t flat = 0;
            for (std::size_t a = 0; a < axes; ++a) {
                const bool up = (corner >> (axes - 1 - a)) & 1U;
                wgt *= up ? frac[a] : 1.0 - frac[a];
                flat = flat * n + (up ? hi_idx[a] : lo_idx[a]);
            }
            if (wgt == 0.0) continue;
            value += wgt * psi_[flat];
            for (std::size_t a = 0; a < axes; ++a) out_grad[a] += wgt * grad_[a][flat];
        }
        return value;
    }

    const std::vector<double>& inverse_masses() const { return inv_mass_; }

private:
    GridSpec spec_;
    std::vector<cplx> psi_;
    std::vector<std::vector<cplx>> grad_;
    std::vector<double> inv_mass_;
    double peak_ = 0.0;
};

struct VelocitySample {
    std::vector<double> velocity;
    bool node = false; // |psi|^2 below 1e-12 * max: velocity undefined
};

namespace detail {
/// Velocity at q from psi linearly interpolated in time: (1 - s) * a + s * b.
inline VelocitySample guided_velocity(const GuidanceField& a, const GuidanceField* b, double s, std::span<const double> q) {
    const std::size_t axes = a.spec().axes();
    cplx ga[9], gb[9];
    cplx psi = a.sample(q, std::span<cplx>(ga, axes));
    double peak = a.peak_density();
    if (b && s != 0.0) {
        const cplx psib = b->sample(q, std::span<cplx>(gb, axes));
        psi = (1.0 - s) * psi + s * psib;
        for (std::size_t i = 0; i < axes; ++i) ga[i] = (1.0 - s) * ga[i] + s * gb[i];
        peak = std::max(peak, b->peak_density());
    }
    VelocitySample out;
    out.velocity.assign(axes, 0.0);
    const double rho = std::norm(psi);
    if (rho < 1e-12 * peak) {
        out.node = true;
        return out;
    }
    const auto& inv_m = a.inverse_masses();
    for (std::size_t i = 0; i < axes; ++i) out.velocity[i] = inv_m[i] * (std::conj(psi) * ga[i]).imag() / rho;
    return out;
}
} // namespace detail

/// v_i = (1/m_i) Im(grad_i psi / psi) at configuration q.
inline VelocitySample bohm_velocity(const GridState& psi, std::span<const double> q, const ParticleWeights& masses) {
    if (q.size() != psi.spec.axes()) throw ConfigError("bohm_velocity(): configuration dimension mismatch");
    for (double x : q)
        if (!in_domain(psi.spec, x)) throw ConfigError("bohm_velocity(): configuration outside the periodic domain");
    GridFft fft(psi.spec);
    GuidanceField field(psi, masses, fft);
    return detail::guided_velocity(field, nullptr, 0.0, q);
}

// ---------------------------------------------------------------------------
// Bohmian trajectories
// ---------------------------------------------------------------------------

struct BohmTrajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> configurations;
    bool degenerate = false;
    std::size_t held_steps = 0; // steps in which a node forced a held velocity
};

struct BohmEnsemble {
    std::vector<BohmTrajectory> trajectories;
    GridState final_state;
};

/// Evolves psi by split-step and every Q by classical RK4 with velocities from
/// psi linearly interpolated between t and t + dt; positions wrap periodically.
/// Configurations are recorded at t0, every `record_every` steps, and at the end.
inline BohmEnsemble bohm_evolve_ensemble(const GridState& psi0, const std::vector<std::vector<double>>& q0,
                                         const PotentialSpec& potential, const ParticleWeights& masses,
                                         const EvolutionParams& p, std::size_t record_every = 1) {
    require_normalized(psi0.norm_sq(), "bohm_evolve");
    const GridSpec& spec = psi0.spec;
    const std::size_t axes = spec.axes();
    if (axes > 9) throw ConfigError("bohm_evolve(): at most 9 configuration axes supported");
    for (const auto& q : q0) {
        if (q.size() != axes) throw ConfigError("bohm_evolve(): initial configuration dimension mismatch");
        for (double x : q)
            if (!in_domain(spec, x)) throw ConfigError("bohm_evolve(): initial configuration outside the domain");
    }
    record_every = std::max<std::size_t>(record_every, 1);

    SplitStepPropagator prop(spec, potential, masses, p.dt, p.norm_tolerance);
    GridFft fft(spec);
    GridState psi = psi0;
    auto field_now = std::make_unique<GuidanceField>(psi, masses, fft);

    BohmEnsemble out;
    out.trajectories.resize(q0.size());
    std::vector<std::vector<double>> q = q0;
    std::vector<std::vector<double>> last_v(q0.size(), std::vector<double>(axes, 0.0));
    std::vector<std::size_t> streak(q0.size(), 0);
    for (std::size_t i = 0; i < q0.size(); ++i) {
        out.trajectories[i].times.push_back(psi.time);
        out.trajectories[i].configurations.push_back(q[i]);
    }

    const double dt = p.dt;
    for (std::size_t s = 0; s < p.steps; ++s) {
        const double t0 = psi0.time + static_cast<double>(s) * dt;
        prop.advance(psi, 1);
        psi.time = t0 + dt;
        auto field_next = std::make_unique<GuidanceField>(psi, masses, fft);
        const bool record = (s + 1) % record_every == 0 || s + 1 == p.steps;

        parallel_for(q.size(), [&](std::size_t i) {
            auto& traj = out.trajectories[i];
            std::vector<double>& qi = q[i];
            bool held = false;
            auto vel = [&](double frac, const std::vector<double>& at) {
                VelocitySample vs = detail::guided_velocity(*field_now, field_next.get(), frac, at);
                if (vs.node) {
                    held = true;
                    return last_v[i];
                }
                return vs.velocity;
            };
            std::vector<double> tmp(axes);
            const auto k1 = vel(0.0, qi);
            for (std::size_t a = 0; a < axes; ++a) tmp[a] = qi[a] + 0.5 * dt * k1[a];
            const auto k2 = vel(0.5, tmp);
            for (std::size_t a = 0; a < axes; ++a) tmp[a] = qi[a] + 0.5 * dt * k2[a];
            const auto k3 = vel(0.5, tmp);
            for (std::size_t a = 0; a < axes; ++a) tmp[a] = qi[a] + dt * k3[a];
            const auto k4 = vel(1.0, tmp);
            for (std::size_t a = 0; a < axes; ++a) {
                const double v = (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]) / 6.0;
                qi[a] = wrap_coordinate(spec, qi[a] + dt * v);
                last_v[i][a] = v;
            }
            if (held) {
                ++traj.held_steps;
                if (++streak[i] > 10) traj.degenerate = true;
            } else {
                streak[i] = 0;
            }
            if (record) {
                traj.times.push_back(psi.time);
                traj.configurations.push_back(qi);
            }
        });
        field_now = std::move(field_next);
    }
    out.final_state = std::move(psi);
    return out;
}

inline BohmTrajectory bohm_evolve(const GridState& psi0, const std::vector<double>& q0, const PotentialSpec& potential,
                                  const ParticleWeights& masses, const EvolutionParams& p, std::size_t record_every = 1) {
    return std::move(bohm_evolve_ensemble(psi0, {q0}, potential, masses, p, record_every).trajectories.front());
}

// ---------------------------------------------------------------------------
// Equivariance
// ---------------------------------------------------------------------------

struct EnsembleStats {
    std::size_t count = 0;
    std::vector<double> ks_statistics;          // one per configuration axis
    double ks_critical = 0.0;                   // alpha = 0.001
    std::vector<std::vector<double>> histograms; // per axis, n bins, fractions
    std::vector<std::pair<std::string, double>> occupancy;
    std::size_t degenerate = 0;
    bool passed = false;
    std::string diagnostic;
};

/// Marginal probability of one configuration axis on its n cells.
inline std::vector<double> axis_marginal(const GridState& psi, std::size_t axis) {
    const auto& spec = psi.spec;
    const std::size_t n = spec.points_per_axis;
    std::vector<double> m(n, 0.0);
    for (std::size_t c = 0; c < psi.amplitudes.size(); ++c) m[spec.axis_index(c, axis)] += std::norm(psi.amplitudes[c]);
    double total = 0.0;
    for (double v : m) total += v;
    for (auto& v : m) v /= total;
    return m;
}

/// KS comparison of final Bohm positions against the |psi_T|^2 axis marginals.
inline EnsembleStats ensemble_statistics(const BohmEnsemble& run, double alpha = 1e-3) {
    const GridSpec& spec = run.final_state.spec;
    EnsembleStats st;
    st.count = run.trajectories.size();
    st.ks_critical = stats::ks_critical(alpha, st.count);
    for (const auto& t : run.trajectories) st.degenerate += t.degenerate ? 1 : 0;
    bool ok = true;
    for (std::size_t a = 0; a < spec.axes(); ++a) {
        const auto marginal = axis_marginal(run.final_state, a);
        std::vector<double> xs;
        xs.reserve(st.count);
        std::vector<double> hist(spec.points_per_axis, 0.0);
        for (const auto& t : run.trajectories) {
            const double x = t.configurations.back()[a];
            xs.push_back(x);
            const double one[] = {x};
            hist[cell_of(spec, one)] += 1.0 / static_cast<double>(st.count);
        }
        const double d = stats::ks_statistic_cells(std::move(xs), marginal, spec.coordinate(0), spec.spacing());
        st.ks_statistics.push_back(d);
        st.histograms.push_back(std::move(hist));
        ok = ok && d < st.ks_critical;
    }
    st.passed = ok;
    if (!ok) st.diagnostic = "KS statistic above the alpha critical value";
    if (static_cast<double>(st.degenerate) > 0.01 * static_cast<double>(st.count)) {
        st.passed = false;
        st.diagnostic = std::to_string(st.degenerate) + " degenerate trajectories (> 1% of the ensemble)";
    }
    return st;
}

/// Evolves the given initial configurations and tests the final ensemble
/// against |psi_T|^2.
inline EnsembleStats equivariance_check_from(const GridState& psi0, const std::vector<std::vector<double>>& q0,
                                             const PotentialSpec& potential, const ParticleWeights& masses,
                                             const EvolutionParams& p) {
    const std::size_t stride = std::max<std::size_t>(p.steps, 1);
    return ensemble_statistics(bohm_evolve_ensemble(psi0, q0, potential, masses, p, stride));
}

/// Draws Q(0) ~ |psi0|^2 and tests equivariance at T = steps * dt.
inline EnsembleStats equivariance_check(const GridState& psi0, const PotentialSpec& potential, const ParticleWeights& masses,
                                        const EvolutionParams& p, std::size_t count, std::uint64_t seed) {
    std::vector<std::vector<double>> q0;
    q0.reserve(count);
    for (auto& c : sample_psi2(psi0, count, seed)) q0.push_back(std::move(c.coords));
    return equivariance_check_from(psi0, q0, potential, masses, p);
}

// ---------------------------------------------------------------------------
// Sip: independent configurations at each time
// ---------------------------------------------------------------------------

struct SipHistory {
    std::vector<double> times;
    std::vector<Configuration> configurations;
    std::uint64_t seed = 0;
};

/// One independent |psi_t|^2 draw per time, each from its own derived seed.
inline SipHistory sip_history(const std::vector<double>& times, const std::function<State(double)>& psi_at,
                              std::uint64_t seed) {
    SipHistory h;
    h.times = times;
    h.seed = seed;
    h.configurations.reserve(times.size());
    for (std::size_t j = 0; j < times.size(); ++j) {
        Psi2Sampler sampler(psi_at(times[j]));
        Rng rng(derive_seed(seed, j));
        h.configurations.push_back(sampler.draw(rng));
    }
    return h;
}

/// Same law for a time-independent psi (one sampler shared across times).
inline SipHistory sip_history(const std::vector<double>& times, const State& psi, std::uint64_t seed) {
    SipHistory h;
    h.times = times;
    h.seed = seed;
    Psi2Sampler sampler(psi);
    h.configurations.reserve(times.size());
    for (std::size_t j = 0; j < times.size(); ++j) {
        Rng rng(derive_seed(seed, j));
        h.configurations.push_back(sampler.draw(rng));
    }
    return h;
}

struct Occupancy {
    std::vector<std::string> labels;
    std::vector<double> fractions;
    std::vector<int> per_time_branch; // -1 for residue
    double residue = 0.0;

    double fraction(const std::string& label) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) return fractions[i];
        return 0.0;
    }
};

/// Fraction of times the sample lies in each branch's support (by label).
/// `sets` holds one branch set per history time, or a single shared one.
inline Occupancy sip_occupancy(const SipHistory& h, const std::vector<BranchSet>& sets) {
    if (sets.empty() || (sets.size() != 1 && sets.size() != h.times.size()))
        throw ConfigError("sip_occupancy(): need one branch set per time or a single shared set");
    Occupancy occ;
    std::map<std::string, std::size_t> slot;
    std::vector<double> counts;
    std::size_t residue = 0;

    std::vector<int> owner;
    const BranchSet* cached = nullptr;
    for (std::size_t j = 0; j < h.times.size(); ++j) {
        const BranchSet& bs = sets.size() == 1 ? sets.front() : sets[j];
        if (&bs != cached) {
            std::size_t dim = 0;
            for (const auto& b : bs.branches)
                if (!b.support.empty()) dim = std::max(dim, b.support.back() + 1);
            owner.assign(dim, -1);
            for (std::size_t b = 0; b < bs.branches.size(); ++b)
                for (auto c : bs.branches[b].support) owner[c] = static_cast<int>(b);
            cached = &bs;
        }
        const std::size_t cell = h.configurations[j].cell;
        const int b = cell < owner.size() ? owner[cell] : -1;
        occ.per_time_branch.push_back(b);
        if (b < 0) {
            ++residue;
            continue;
        }
        const std::string& label = bs.branches[static_cast<std::size_t>(b)].label;
        auto [it, inserted] = slot.emplace(label, counts.size());
        if (inserted) {
            occ.labels.push_back(label);
            counts.push_back(0.0);
        }
        counts[it->second] += 1.0;
    }
    const double n = static_cast<double>(h.times.size());
    for (double c : counts) occ.fractions.push_back(c / n);
    occ.residue = static_cast<double>(residue) / n;
    if (occ.residue >= 0.01)
        throw NumericalError("occupancy_residue", "more than 1% of Sip samples lie outside every branch support");
    return occ;
}

/// Fraction of consecutive times at which the occupied branch label changes.
inline double label_flip_rate(const std::vector<std::string>& labels) {
    if (labels.size() < 2) return 0.0;
    std::size_t flips = 0;
    for (std::size_t j = 1; j < labels.size(); ++j) flips += labels[j] != labels[j - 1] ? 1 : 0;
    return static_cast<double>(flips) / static_cast<double>(labels.size() - 1);
}

// ---------------------------------------------------------------------------
// Typicality of trajectory properties
// ---------------------------------------------------------------------------

struct TypicalityEstimate {
    double estimate = 0.0;
    stats::Interval interval;
    std::size_t count = 0;
    std::size_t successes = 0;
};

/// Monte Carlo |psi0|^2 measure of initial configurations whose Bohm
/// trajectory has the property, with a Wilson 95% interval.
inline TypicalityEstimate history_typicality(const std::function<bool(const BohmTrajectory&)>& property,
                                             const GridState& psi0, const PotentialSpec& potential,
                                             const ParticleWeights& masses, const EvolutionParams& p, std::size_t count,
                                             std::uint64_t seed, std::size_t record_every = 0) {
    std::vector<std::vector<double>> q0;
    q0.reserve(count);
    for (auto& c : sample_psi2(psi0, count, seed)) q0.push_back(std::move(c.coords));
    const std::size_t stride = record_every ? record_every : std::max<std::size_t>(p.steps, 1);
    const BohmEnsemble run = bohm_evolve_ensemble(psi0, q0, potential, masses, p, stride);
    TypicalityEstimate est;
    est.count = count;
    for (const auto& t : run.trajectories) est.successes += property(t) ? 1 : 0;
    est.estimate = count ? static_cast<double>(est.successes) / static_cast<double>(count) : 0.0;
    est.interval = stats::wilson(est.successes, count);
    return est;
}

} // namespace smw
