#pragma once

// Time evolution: Strang split-step spectral propagation on periodic grids,
// exact unitary evolution of finite models, the GRW collapse process, and the
// Heisenberg-picture matter density for finite models.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "density.hpp"
#include "error.hpp"
#include "fft.hpp"
#include "hilbert.hpp"
#include "parallel.hpp"

namespace smw {

// ---------------------------------------------------------------------------
// Potentials
// ---------------------------------------------------------------------------

struct GaussianBarrier {
    std::vector<double> center; // d components
    double height = 0.0;
    double width = 1.0;
};

/// External potential evaluated on configuration cells. Harmonic and barrier
/// potentials act on each particle separately; a custom table gives V per cell.
struct PotentialSpec {
    enum class Kind { zero, harmonic, gaussian_barriers, custom };

    Kind kind = Kind::zero;
    std::vector<double> omega;
    std::vector<GaussianBarrier> barriers;
    std::vector<double> table;

    static PotentialSpec none() { return {}; }
    static PotentialSpec harmonic(std::vector<double> omega_per_particle) {
        PotentialSpec v;
        v.kind = Kind::harmonic;
        v.omega = std::move(omega_per_particle);
        return v;
    }
    static PotentialSpec gaussian_barriers(std::vector<GaussianBarrier> b) {
        PotentialSpec v;
        v.kind = Kind::gaussian_barriers;
        v.barriers = std::move(b);
        return v;
    }
    static PotentialSpec custom(std::vector<double> values) {
        PotentialSpec v;
        v.kind = Kind::custom;
        v.table = std::move(values);
        return v;
    }

    std::vector<double> evaluate(const GridSpec& spec, const ParticleWeights& masses) const {
        spec.validate();
        const std::size_t cells = spec.cell_count();
        const std::size_t np = static_cast<std::size_t>(spec.num_particles);
        const std::size_t d = static_cast<std::size_t>(spec.space_dim);
        switch (kind) {
        case Kind::zero:
            return std::vector<double>(cells, 0.0);
        case Kind::custom:
            if (table.size() != cells) throw ConfigError("custom potential: table size does not match the grid");
            for (double v : table)
                if (!std::isfinite(v)) throw ConfigError("custom potential: non-finite value");
            return table;
        case Kind::harmonic:
            if (omega.size() != np) throw ConfigError("harmonic potential: one omega per particle required");
            if (masses.size() != np) throw ConfigError("harmonic potential: mass count mismatch");
            break;
        case Kind::gaussian_barriers:
            for (const auto& b : barriers) {
                if (b.center.size() != d) throw ConfigError("barrier center dimension mismatch");
                if (!(b.width > 0.0)) throw ConfigError("barrier width must be positive");
            }
            break;
        }
        std::vector<double> out(cells, 0.0);
        std::size_t c = 0;
        GridState::from_function(spec, [&](std::span<const double> x) {
            double v = 0.0;
            for (std::size_t i = 0; i < np; ++i) {
                auto xi = x.subspan(i * d, d);
                if (kind == Kind::harmonic) {
                    double r2 = 0.0;
                    for (double q : xi) r2 += q * q;
                    v += 0.5 * masses.values[i] * omega[i] * omega[i] * r2;
                } else {
                    for (const auto& b : barriers) {
                        double r2 = 0.0;
                        for (std::size_t a = 0; a < d; ++a) r2 += (xi[a] - b.center[a]) * (xi[a] - b.center[a]);
                        v += b.height * std::exp(-r2 / (2.0 * b.width * b.width));
                    }
                }
            }
            out[c++] = v;
            return cplx{};
        });
        return out;
    }
};

struct EvolutionParams {
    double dt = 5e-3;
    std::size_t steps = 0;
    double norm_tolerance = 1e-10;
};

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// ---------------------------------------------------------------------------
// Split-step propagator
// ---------------------------------------------------------------------------

/// Strang splitting: exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2), with the kinetic
/// factor exp(-i dt sum_a k_a^2 / (2 m_a)) applied in Fourier space.
/// Negative dt runs the scheme backwards (exact inverse of +dt).
class SplitStepPropagator {
public:
    SplitStepPropagator(const GridSpec& spec, const PotentialSpec& potential, const ParticleWeights& masses, double dt,
                        double norm_tolerance = 1e-10)
        : spec_(spec), dt_(dt), norm_tolerance_(norm_tolerance), fft_(spec) {
        if (masses.mode != WeightMode::mass && masses.mode != WeightMode::unit)
            throw ConfigError("split-step evolution needs mass weights");
        masses.validate();
        if (masses.size() != static_cast<std::size_t>(spec.num_particles))
            throw ConfigError("split-step evolution: one mass per particle required");
        if (!(dt != 0.0) || !std::isfinite(dt)) throw ConfigError("EvolutionParams: dt must be non-zero");
        potential_ = potential.evaluate(spec, masses);
        if (std::abs(dt) * max_abs(potential_) >= 0.5)
            throw ConfigError("EvolutionParams: dt * max|V| = " + std::to_string(std::abs(dt) * max_abs(potential_)) +
                              " violates the accuracy guard (< 0.5)");
        kinetic_energy_ = kinetic_table(spec, masses);
        half_potential_phase_ = potential_phases(0.5 * dt);
        kinetic_phase_ = kinetic_phases(dt);
    }

    const GridSpec& spec() const { return spec_; }
    double dt() const { return dt_; }
    const std::vector<double>& potential() const { return potential_; }
    /// sum_a k_a^2 / (2 m_a) per Fourier bin.
    const std::vector<double>& kinetic_energy() const { return kinetic_energy_; }

    /// Advances psi by `steps` steps of dt.
    void advance(GridState& psi, std::size_t steps) {
        check_spec(psi);
        load(psi);
        for (std::size_t s = 0; s < steps; ++s) step_buffer(half_potential_phase_, kinetic_phase_);
        store(psi);
        psi.time += static_cast<double>(steps) * dt_;
    }

    /// One Strang step of arbitrary size h (phases computed on the fly).
    void advance_by(GridState& psi, double h) {
        check_spec(psi);
        if (h == 0.0) return;
        if (std::abs(h) * max_abs(potential_) >= 0.5) throw ConfigError("advance_by(): step violates the accuracy guard");
        const auto vp = potential_phases(0.5 * h);
        const auto kp = kinetic_phases(h);
        load(psi);
        step_buffer(vp, kp);
        store(psi);
        psi.time += h;
    }

private:
    static std::vector<double> kinetic_table(const GridSpec& spec, const ParticleWeights& masses) {
        const std::size_t n = spec.points_per_axis;
        const std::size_t axes = spec.axes();
        const std::size_t d = static_cast<std::size_t>(spec.space_dim);
        std::vector<double> t(spec.cell_count(), 0.0);
        for (std::size_t c = 0; c < t.size(); ++c) {
            double e = 0.0;
            std::size_t rem = c;
            for (std::size_t a = axes; a-- > 0;) {
                const double k = wavenumber(rem % n, n, spec.extent);
                rem /= n;
                e += k * k / (2.0 * masses.values[a / d]);
            }
            t[c] = e;
        }
        return t;
    }

    std::vector<cplx> potential_phases(double h) const {
        std::vector<cplx> p(potential_.size());
        for (std::size_t c = 0; c < p.size(); ++c) p[c] = std::polar(1.0, -potential_[c] * h);
        return p;
    }

    /// Includes the 1/cells normalization of the unnormalized inverse transform.
    std::vector<cplx> kinetic_phases(double h) const {
        const double scale = 1.0 / static_cast<double>(kinetic_energy_.size());
        std::vector<cplx> p(kinetic_energy_.size());
        for (std::size_t c = 0; c < p.size(); ++c) p[c] = std::polar(scale, -kinetic_energy_[c] * h);
        return p;
    }

    void check_spec(const GridState& psi) const {
        if (!(psi.spec == spec_)) throw ConfigError("propagator grid does not match the state");
    }

    void load(const GridState& psi) {
        auto buf = fft_.data();
        std::copy(psi.amplitudes.begin(), psi.amplitudes.end(), buf.begin());
        norm_ = buffer_norm_sq();
    }

    void store(GridState& psi) const {
        auto buf = fft_.data();
        std::copy(buf.begin(), buf.end(), psi.amplitudes.begin());
    }

    double buffer_norm_sq() const {
        double s = 0.0;
        for (const auto& z : fft_.data()) s += std::norm(z);
        return s * spec_.cell_volume();
    }

    void step_buffer(const std::vector<cplx>& vphase, const std::vector<cplx>& kphase) {
        auto buf = fft_.data();
        for (std::size_t c = 0; c < buf.size(); ++c) buf[c] *= vphase[c];
        fft_.forward();
        for (std::size_t c = 0; c < buf.size(); ++c) buf[c] *= kphase[c];
        fft_.inverse();
        for (std::size_t c = 0; c < buf.size(); ++c) buf[c] *= vphase[c];

        const double after = buffer_norm_sq();
        if (!std::isfinite(after)) throw NumericalError("finite_amplitudes", "NaN or infinite amplitude during split-step evolution");
        if (std::abs(after - norm_) > norm_tolerance_)
            throw NumericalError("norm_conservation", "norm drift " + std::to_string(after - norm_) +
                                                          " exceeds tolerance " + std::to_string(norm_tolerance_));
        norm_ = after;
    }

    GridSpec spec_;
    double dt_;
    double norm_tolerance_;
    GridFft fft_;
    std::vector<double> potential_;
    std::vector<double> kinetic_energy_;
    std::vector<cplx> half_potential_phase_;
    std::vector<cplx> kinetic_phase_;
    double norm_ = 0.0;
};

inline void require_normalized(double norm_sq, const char* who) {
    if (std::abs(norm_sq - 1.0) > 1e-8) throw ConfigError(std::string(who) + ": state is not normalized");
}

inline GridState split_step_evolve(GridState psi, const PotentialSpec& potential, const ParticleWeights& masses,
                                   const EvolutionParams& p) {
    require_normalized(psi.norm_sq(), "split_step_evolve");
    SplitStepPropagator prop(psi.spec, potential, masses, p.dt, p.norm_tolerance);
    const double t0 = psi.time;
    prop.advance(psi, p.steps);
    psi.time = t0 + static_cast<double>(p.steps) * p.dt;
    return psi;
}

// ---------------------------------------------------------------------------
// Finite models
// ---------------------------------------------------------------------------

inline void require_hermitian(const Eigen::MatrixXcd& h) {
    if (h.rows() != h.cols()) throw ConfigError("Hamiltonian must be square");
    if (h.size() > 0 && (h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
        throw ConfigError("Hamiltonian is not Hermitian");
}

/// Eigendecomposition of a finite Hamiltonian, reused across times.
class ExactPropagator {
public:
    explicit ExactPropagator(const Eigen::MatrixXcd& h) {
        require_hermitian(h);
        es_.compute(h);
    }

    std::size_t dim() const { return static_cast<std::size_t>(es_.eigenvalues().size()); }

    /// exp(-iHt)
    Eigen::MatrixXcd unitary(double t) const {
        const auto& v = es_.eigenvectors();
        return v * phases(t).asDiagonal() * v.adjoint();
    }

    FiniteState evolve(FiniteState psi, double t) const {
        if (psi.dim() != dim()) throw ConfigError("exact_evolve(): Hamiltonian dimension mismatch");
        Eigen::Map<Eigen::VectorXcd> v(psi.amplitudes.data(), static_cast<Eigen::Index>(psi.dim()));
        Eigen::VectorXcd c = es_.eigenvectors().adjoint() * v;
        v = es_.eigenvectors() * phases(t).asDiagonal() * c;
        psi.time += t;
        return psi;
    }

    /// Operator in the energy basis: V^dagger diag(m) V.
    Eigen::MatrixXcd to_energy_basis(const Eigen::VectorXd& diag) const {
        const auto& v = es_.eigenvectors();
        return v.adjoint() * (diag.cast<cplx>().asDiagonal() * v);
    }

    /// <psi0| A(t) |psi0> for A given in the energy basis, where
    /// A(t)_jk = A_jk exp(i (E_j - E_k) t) is the Heisenberg-evolved operator.
    double heisenberg_expectation(const FiniteState& psi0, const Eigen::MatrixXcd& a_energy, double t) const {
        if (psi0.dim() != dim()) throw ConfigError("heisenberg_density(): dimension mismatch");
        Eigen::Map<const Eigen::VectorXcd> v(psi0.amplitudes.data(), static_cast<Eigen::Index>(psi0.dim()));
        const Eigen::VectorXcd c = es_.eigenvectors().adjoint() * v;
        const Eigen::VectorXcd ph = phases(t);
        const Eigen::VectorXcd b = ph.asDiagonal() * c; // e^{-iEt} c
        return (b.adjoint() * a_energy * b)(0, 0).real();
    }

private:
    Eigen::VectorXcd phases(double t) const {
        const Eigen::VectorXd& e = es_.eigenvalues();
        Eigen::VectorXcd ph(e.size());
        for (Eigen::Index i = 0; i < e.size(); ++i) ph[i] = std::polar(1.0, -e[i] * t);
        return ph;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es_;
};

/// exp(-iHt) via eigendecomposition.
inline Eigen::MatrixXcd unitary(const Eigen::MatrixXcd& h, double t) { return ExactPropagator(h).unitary(t); }

inline FiniteState exact_evolve(FiniteState psi, const Eigen::MatrixXcd& h, double t) {
    if (static_cast<std::size_t>(h.rows()) != psi.dim()) throw ConfigError("exact_evolve(): Hamiltonian dimension mismatch");
    return ExactPropagator(h).evolve(std::move(psi), t);
}

/// Embeds a local operator on one factor of a product space as a full matrix.
inline Eigen::MatrixXcd embed_operator(const std::vector<Factor>& factors, std::size_t factor, const Eigen::MatrixXcd& local) {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Identity(1, 1);
    for (std::size_t f = 0; f < factors.size(); ++f) {
        const auto d = static_cast<Eigen::Index>(factors[f].dim());
        Eigen::MatrixXcd next = f == factor ? local : Eigen::MatrixXcd::Identity(d, d);
        Eigen::MatrixXcd k(out.rows() * next.rows(), out.cols() * next.cols());
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            for (Eigen::Index j = 0; j < out.cols(); ++j)
                k.block(i * next.rows(), j * next.cols(), next.rows(), next.cols()) = out(i, j) * next;
        out = std::move(k);
    }
    return out;
}

/// Mass density operator M(site) = sum_i w_i P_i(site): diagonal in the product basis.
inline Eigen::VectorXd density_operator_diagonal(const FiniteState& shape, const std::string& site, const ParticleWeights& w) {
    bool found = false;
    for (const auto& f : shape.factors)
        if (f.kind == FactorKind::position)
            for (std::size_t j = 0; j < f.dim(); ++j) found = found || f.site(j) == site;
    if (!found) throw ConfigError("no position factor carries site '" + site + "'");

    Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.dim()));
    for (std::size_t flat = 0; flat < shape.dim(); ++flat)
        for (std::size_t f = 0; f < shape.factors.size(); ++f) {
            const auto& fac = shape.factors[f];
            if (fac.kind != FactorKind::position) continue;
            if (fac.particle < 0 || static_cast<std::size_t>(fac.particle) >= w.size())
                throw ConfigError("position factor '" + fac.name + "' has no matching particle weight");
            if (fac.site(shape.label_index(flat, f)) == site)
                diag[static_cast<Eigen::Index>(flat)] += w.values[static_cast<std::size_t>(fac.particle)];
        }
    return diag;
}

/// Heisenberg-picture density at one site: the operator M(site) is evolved,
/// the state stays at psi0.
inline double heisenberg_density(const FiniteState& psi0, const ExactPropagator& prop, const std::string& site, double t,
                                 const ParticleWeights& w) {
    return prop.heisenberg_expectation(psi0, prop.to_energy_basis(density_operator_diagonal(psi0, site, w)), t);
}

inline double heisenberg_density(const FiniteState& psi0, const Eigen::MatrixXcd& h, const std::string& site, double t,
                                 const ParticleWeights& w) {
    if (static_cast<std::size_t>(h.rows()) != psi0.dim()) throw ConfigError("heisenberg_density(): dimension mismatch");
    return heisenberg_density(psi0, ExactPropagator(h), site, t, w);
}

// ---------------------------------------------------------------------------
// GRW collapse process
// ---------------------------------------------------------------------------

struct GrwParams {
    double lambda = 1.0;
    double sigma_c = 1.0;
    std::uint64_t seed = 0;
};

struct CollapseEvent {
    double time = 0.0;
    std::size_t particle = 0;
    std::vector<double> center;
};

struct GrwResult {
    GridState state;
    std::vector<CollapseEvent> events;
};

inline void validate(const GrwParams& g, const GridSpec& spec) {
    if (!(g.lambda >= 0.0) || !std::isfinite(g.lambda)) throw ConfigError("GrwParams: lambda must be >= 0");
    if (!(g.sigma_c >= 2.0 * spec.spacing()))
        throw ConfigError("GrwParams: sigma_c must be at least two grid cells");
}

namespace detail {
inline double periodic_delta(double a, double b, double extent) {
    double d = a - b;
    d -= extent * std::round(d / extent);
    return d;
}
} // namespace detail

/// Probability weights p(X) = ||L_X psi||^2 for collapse centers X on the
/// cell centers of particle i's physical grid (n^d values, not yet normalized).
inline std::vector<double> collapse_center_density(const GridState& psi, std::size_t particle, double sigma_c) {
    const auto& spec = psi.spec;
    std::vector<double> field = particle_marginal(psi, particle);
    const std::size_t n = spec.points_per_axis;
    const std::size_t d = static_cast<std::size_t>(spec.space_dim);
    const double h = spec.spacing();

    // 1D periodic kernel, exp(-(x-X)^2 / (2 sigma_c^2)) / sqrt(2 pi sigma_c^2) * h.
    std::vector<double> kernel(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double dx = detail::periodic_delta(static_cast<double>(j) * h, 0.0, spec.extent);
        kernel[j] = std::exp(-dx * dx / (2.0 * sigma_c * sigma_c)) / std::sqrt(2.0 * M_PI * sigma_c * sigma_c) * h;
    }
    std::vector<double> line(n), tmp(field.size());
    for (std::size_t axis = 0; axis < d; ++axis) {
        std::size_t stride = 1;
        for (std::size_t a = axis + 1; a < d; ++a) stride *= n;
        for (std::size_t base = 0; base < field.size(); ++base) {
            if ((base / stride) % n != 0) continue;
            for (std::size_t j = 0; j < n; ++j) line[j] = field[base + j * stride];
            for (std::size_t x = 0; x < n; ++x) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += line[j] * kernel[(x + n - j) % n];
                tmp[base + x * stride] = s;
            }
        }
        field.swap(tmp);
    }
    return field;
}

/// Applies one collapse of `particle`: samples X by inverse CDF over the grid
/// and replaces psi by L_X psi / ||L_X psi||.
inline CollapseEvent grw_collapse(GridState& psi, std::size_t particle, double sigma_c, Rng& rng) {
    const auto& spec = psi.spec;
    const std::size_t n = spec.points_per_axis;
    const std::size_t d = static_cast<std::size_t>(spec.space_dim);
    const std::vector<double> p = collapse_center_density(psi, particle, sigma_c);
    std::vector<double> cdf(p.size());
    double acc = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) cdf[c] = (acc += p[c]);
    if (!(acc > 0.0)) throw NumericalError("collapse_density", "collapse center density vanishes");

    const double amp_norm = std::pow(2.0 * M_PI * sigma_c * sigma_c, -static_cast<double>(d) / 4.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double u = uniform01(rng) * acc;
        std::size_t cell = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        cell = std::min(cell, cdf.size() - 1);
        std::vector<double> center(d);
        for (std::size_t a = 0; a < d; ++a) {
            std::size_t stride = 1;
            for (std::size_t b = a + 1; b < d; ++b) stride *= n;
            center[a] = spec.coordinate((cell / stride) % n);
        }

        GridState trial = psi;
        std::size_t idx = 0;
        GridState::from_function(spec, [&](std::span<const double> x) {
            double r2 = 0.0;
            for (std::size_t a = 0; a < d; ++a) {
                const double dx = detail::periodic_delta(x[particle * d + a], center[a], spec.extent);
                r2 += dx * dx;
            }
            trial.amplitudes[idx] *= amp_norm * std::exp(-r2 / (4.0 * sigma_c * sigma_c));
            ++idx;
            return cplx{};
        });
        const double n2 = trial.norm_sq();
        if (n2 < 1e-14) continue;
        const double f = 1.0 / std::sqrt(n2);
        for (auto& z : trial.amplitudes) z *= f;
        psi = std::move(trial);
        return CollapseEvent{psi.time, particle, std::move(center)};
    }
    throw NumericalError("collapse_nondegenerate", "100 consecutive collapse centers gave ||L_X psi|| < 1e-7");
}

/// Schrodinger evolution interrupted by collapses at Poisson times of total
/// rate N * lambda; collapses inside a step split that step exactly.
inline GrwResult grw_evolve(GridState psi, const PotentialSpec& potential, const ParticleWeights& masses,
                            const EvolutionParams& p, const GrwParams& g) {
    require_normalized(psi.norm_sq(), "grw_evolve");
    validate(g, psi.spec);
    SplitStepPropagator prop(psi.spec, potential, masses, p.dt, p.norm_tolerance);
    Rng rng(g.seed);
    const double rate = g.lambda * static_cast<double>(psi.spec.num_particles);
    auto wait = [&] {
        if (rate == 0.0) return std::numeric_limits<double>::infinity();
        return -std::log1p(-uniform01(rng)) / rate;
    };

    GrwResult result;
    const double t0 = psi.time;
    double next = t0 + wait();
    for (std::size_t s = 0; s < p.steps; ++s) {
        const double step_start = t0 + static_cast<double>(s) * p.dt;
        const double step_end = t0 + static_cast<double>(s + 1) * p.dt;
        if (next > step_end) {
            prop.advance(psi, 1);
            psi.time = step_end;
            continue;
        }
        double t = step_start;
        while (next <= step_end) {
            prop.advance_by(psi, next - t);
            psi.time = t = next;
            const std::size_t particle = uniform_index(rng, static_cast<std::size_t>(psi.spec.num_particles));
            result.events.push_back(grw_collapse(psi, particle, g.sigma_c, rng));
            next += wait();
        }
        prop.advance_by(psi, step_end - t);
        psi.time = step_end;
    }
    result.state = std::move(psi);
    return result;
}

} // namespace smw
