#pragma once

// State representations: wave functions on a periodic configuration grid and
// amplitude vectors over labeled tensor-product bases, with the tensor algebra
// and reduced density matrices built on them.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace smw {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Grid states
// ---------------------------------------------------------------------------

/// Discretized configuration space of N particles in d dimensions.
/// Every coordinate axis shares n points over a periodic extent L; axis a
/// belongs to particle a / d. Flat indices are row-major, last axis fastest.
struct GridSpec {
    int num_particles = 1;
    int space_dim = 1;
    std::size_t points_per_axis = 256;
    double extent = 40.0;

    static constexpr std::size_t max_cells = std::size_t{1} << 27;

    std::size_t axes() const { return static_cast<std::size_t>(num_particles * space_dim); }
    double spacing() const { return extent / static_cast<double>(points_per_axis); }
    double cell_volume() const { return std::pow(spacing(), static_cast<double>(axes())); }
    /// Cell-center coordinate of grid index j along any axis; centers span [-L/2, L/2).
    double coordinate(std::size_t j) const {
        return -0.5 * extent + static_cast<double>(j) * spacing();
    }

    std::size_t cell_count() const {
        std::size_t c = 1;
        for (std::size_t a = 0; a < axes(); ++a) c *= points_per_axis;
        return c;
    }

    /// Stride of axis a in the flat layout.
    std::size_t stride(std::size_t axis) const {
        std::size_t s = 1;
        for (std::size_t a = axis + 1; a < axes(); ++a) s *= points_per_axis;
        return s;
    }

    /// Index along `axis` of flat cell `flat`.
    std::size_t axis_index(std::size_t flat, std::size_t axis) const {
        return (flat / stride(axis)) % points_per_axis;
    }

    void validate() const {
        if (num_particles < 1) throw ConfigError("GridSpec: num_particles must be >= 1");
        if (space_dim < 1 || space_dim > 3) throw ConfigError("GridSpec: space_dim must be 1, 2 or 3");
        const std::size_t n = points_per_axis;
        if (n < 8 || (n & (n - 1)) != 0)
            throw ConfigError("GridSpec: points_per_axis must be a power of two >= 8");
        if (!(extent > 0.0) || !std::isfinite(extent)) throw ConfigError("GridSpec: extent must be > 0");
        double cells = std::pow(static_cast<double>(n), static_cast<double>(axes()));
        if (cells > static_cast<double>(max_cells))
            throw ConfigError("GridSpec: configuration grid too large (" + std::to_string(cells) + " cells)");
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct GridState {
    GridSpec spec;
    std::vector<cplx> amplitudes;
    double time = 0.0;

    static GridState zeros(const GridSpec& spec, double time = 0.0) {
        spec.validate();
        return GridState{spec, std::vector<cplx>(spec.cell_count()), time};
    }

    /// psi(x) sampled at cell centers; `f` receives the full coordinate vector (length N*d).
    template <class F>
    static GridState from_function(const GridSpec& spec, F&& f, double time = 0.0) {
        GridState s = zeros(spec, time);
        const std::size_t axes = spec.axes();
        std::vector<double> coords(axes);
        std::vector<std::size_t> idx(axes, 0);
        for (std::size_t c = 0; c < s.amplitudes.size(); ++c) {
            for (std::size_t a = 0; a < axes; ++a) coords[a] = spec.coordinate(idx[a]);
            s.amplitudes[c] = f(std::span<const double>(coords));
            for (std::size_t a = axes; a-- > 0;) {
                if (++idx[a] < spec.points_per_axis) break;
                idx[a] = 0;
            }
        }
        return s;
    }

    /// Delta v * sum |psi|^2.
    double norm_sq() const {
        double s = 0.0;
        for (const auto& z : amplitudes) s += std::norm(z);
        return s * spec.cell_volume();
    }
};

/// Normalized 1D Gaussian amplitude with position standard deviation sigma:
/// (2 pi sigma^2)^(-1/4) exp(-(x-x0)^2 / (4 sigma^2) + i k x).
inline cplx gaussian_amplitude(double x, double center, double sigma, double wavenumber = 0.0) {
    const double dx = x - center;
    const double mag = std::pow(2.0 * M_PI * sigma * sigma, -0.25) * std::exp(-dx * dx / (4.0 * sigma * sigma));
    return std::polar(mag, wavenumber * x);
}

// ---------------------------------------------------------------------------
// Finite tensor-product states
// ---------------------------------------------------------------------------

enum class FactorKind { generic, spin, position, record };

/// One tensor factor: a labeled orthonormal basis. Position factors belong to a
/// particle and map each label to a physical site name.
struct Factor {
    std::string name;
    std::vector<std::string> labels;
    FactorKind kind = FactorKind::generic;
    int particle = -1;
    std::vector<std::string> sites;

    std::size_t dim() const { return labels.size(); }

    std::size_t index_of(const std::string& label) const {
        auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) throw ConfigError("factor '" + name + "' has no label '" + label + "'");
        return static_cast<std::size_t>(it - labels.begin());
    }

    std::string site(std::size_t j) const { return sites.empty() ? name + ":" + labels[j] : sites[j]; }

    static Factor spin(std::string name) {
        return Factor{std::move(name), {"up", "down"}, FactorKind::spin, -1, {}};
    }
    static Factor position(std::string name, int particle, std::vector<std::string> labels,
                           std::vector<std::string> sites = {}) {
        return Factor{std::move(name), std::move(labels), FactorKind::position, particle, std::move(sites)};
    }
    static Factor record(std::string name, std::vector<std::string> labels) {
        return Factor{std::move(name), std::move(labels), FactorKind::record, -1, {}};
    }

    friend bool operator==(const Factor&, const Factor&) = default;
};

inline std::size_t product_dim(std::span<const Factor> factors) {
    std::size_t d = 1;
    for (const auto& f : factors) d *= f.dim();
    return d;
}

struct FiniteState {
    std::vector<Factor> factors;
    std::vector<cplx> amplitudes;
    double time = 0.0;

    std::size_t dim() const { return amplitudes.size(); }

    static FiniteState zeros(std::vector<Factor> factors, double time = 0.0) {
        if (factors.empty()) throw ConfigError("FiniteState needs at least one factor");
        for (const auto& f : factors)
            if (f.dim() == 0) throw ConfigError("factor '" + f.name + "' has no labels");
        const std::size_t d = product_dim(factors);
        return FiniteState{std::move(factors), std::vector<cplx>(d), time};
    }

    /// Product basis vector with the given label per factor.
    static FiniteState basis(std::vector<Factor> factors, const std::vector<std::string>& labels) {
        if (labels.size() != factors.size()) throw ConfigError("basis(): one label per factor required");
        FiniteState s = zeros(std::move(factors));
        std::size_t flat = 0;
        for (std::size_t f = 0; f < s.factors.size(); ++f)
            flat = flat * s.factors[f].dim() + s.factors[f].index_of(labels[f]);
        s.amplitudes[flat] = 1.0;
        return s;
    }

    /// Single-factor state with explicit amplitudes.
    static FiniteState single(Factor factor, std::vector<cplx> amps) {
        if (amps.size() != factor.dim()) throw ConfigError("single(): amplitude count mismatch");
        return FiniteState{{std::move(factor)}, std::move(amps), 0.0};
    }

    std::size_t stride(std::size_t factor) const {
        std::size_t s = 1;
        for (std::size_t f = factor + 1; f < factors.size(); ++f) s *= factors[f].dim();
        return s;
    }

    std::size_t label_index(std::size_t flat, std::size_t factor) const {
        return (flat / stride(factor)) % factors[factor].dim();
    }

    std::size_t factor_index(const std::string& name) const {
        for (std::size_t f = 0; f < factors.size(); ++f)
            if (factors[f].name == name) return f;
        throw ConfigError("no factor named '" + name + "'");
    }

    double norm_sq() const {
        double s = 0.0;
        for (const auto& z : amplitudes) s += std::norm(z);
        return s;
    }

    FiniteState& operator+=(const FiniteState& other) {
        if (other.factors != factors) throw ConfigError("adding states over different bases");
        for (std::size_t i = 0; i < amplitudes.size(); ++i) amplitudes[i] += other.amplitudes[i];
        return *this;
    }
    friend FiniteState operator+(FiniteState a, const FiniteState& b) { return a += b; }
    friend FiniteState operator-(FiniteState a, FiniteState b) {
        for (auto& z : b.amplitudes) z = -z;
        return a += b;
    }
    friend FiniteState operator*(cplx c, FiniteState s) {
        for (auto& z : s.amplitudes) z *= c;
        return s;
    }
};

using State = std::variant<GridState, FiniteState>;

// ---------------------------------------------------------------------------
// Per-particle weights for the matter density
// ---------------------------------------------------------------------------

enum class WeightMode { mass, charge, unit };

struct ParticleWeights {
    WeightMode mode = WeightMode::mass;
    std::vector<double> values;

    static ParticleWeights mass(std::vector<double> m) {
        ParticleWeights w{WeightMode::mass, std::move(m)};
        w.validate();
        return w;
    }
    static ParticleWeights charge(std::vector<double> e) {
        ParticleWeights w{WeightMode::charge, std::move(e)};
        w.validate();
        return w;
    }
    static ParticleWeights unit(std::size_t n) { return ParticleWeights{WeightMode::unit, std::vector<double>(n, 1.0)}; }

    std::size_t size() const { return values.size(); }
    double total() const { return std::accumulate(values.begin(), values.end(), 0.0); }

    void validate() const {
        if (values.empty()) throw ConfigError("ParticleWeights: at least one particle required");
        for (double v : values) {
            if (!std::isfinite(v)) throw ConfigError("ParticleWeights: non-finite weight");
            if (mode == WeightMode::mass && !(v > 0.0)) throw ConfigError("ParticleWeights: masses must be positive");
            if (mode == WeightMode::unit && v != 1.0) throw ConfigError("ParticleWeights: unit mode requires 1");
        }
    }
};

// ---------------------------------------------------------------------------
// Algebra
// ---------------------------------------------------------------------------

inline FiniteState tensor(const FiniteState& a, const FiniteState& b) {
    FiniteState out;
    out.factors = a.factors;
    out.factors.insert(out.factors.end(), b.factors.begin(), b.factors.end());
    out.time = a.time;
    out.amplitudes.resize(a.dim() * b.dim());
    for (std::size_t i = 0; i < a.dim(); ++i)
        for (std::size_t j = 0; j < b.dim(); ++j) out.amplitudes[i * b.dim() + j] = a.amplitudes[i] * b.amplitudes[j];
    return out;
}

template <class... Rest>
FiniteState tensor(const FiniteState& a, const FiniteState& b, const Rest&... rest) {
    return tensor(tensor(a, b), rest...);
}

/// <a|b>, conjugate-linear in a.
inline cplx inner(const FiniteState& a, const FiniteState& b) {
    if (a.factors != b.factors) throw ConfigError("inner(): basis mismatch");
    cplx s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) s += std::conj(a.amplitudes[i]) * b.amplitudes[i];
    return s;
}

/// Grid inner product including the cell volume.
inline cplx inner(const GridState& a, const GridState& b) {
    if (!(a.spec == b.spec)) throw ConfigError("inner(): grid spec mismatch");
    cplx s = 0.0;
    for (std::size_t i = 0; i < a.amplitudes.size(); ++i) s += std::conj(a.amplitudes[i]) * b.amplitudes[i];
    return s * a.spec.cell_volume();
}

inline cplx inner(const State& a, const State& b) {
    return std::visit(
        [](const auto& x, const auto& y) -> cplx {
            using X = std::decay_t<decltype(x)>;
            using Y = std::decay_t<decltype(y)>;
            if constexpr (std::is_same_v<X, Y>)
                return inner(x, y);
            else
                throw ConfigError("inner(): grid and finite states cannot be mixed");
        },
        a, b);
}

namespace detail {
template <class S>
S normalized(S s) {
    const double n2 = s.norm_sq();
    if (!(n2 > 0.0) || !std::isfinite(n2)) throw NumericalError("normalizable", "state has zero or non-finite norm");
    // A state already normalized to the last ulp is returned unchanged.
    if (std::abs(n2 - 1.0) <= 2.0 * std::numeric_limits<double>::epsilon()) return s;
    const double f = 1.0 / std::sqrt(n2);
    for (auto& z : s.amplitudes) z *= f;
    return s;
}
} // namespace detail

inline GridState normalize(GridState s) { return detail::normalized(std::move(s)); }
inline FiniteState normalize(FiniteState s) { return detail::normalized(std::move(s)); }
inline State normalize(State s) {
    return std::visit([](auto x) -> State { return normalize(std::move(x)); }, std::move(s));
}

inline double norm_sq(const State& s) {
    return std::visit([](const auto& x) { return x.norm_sq(); }, s);
}

/// Applies `op` (dimension = product of the chosen factors' dims, row-major in
/// the listed factor order) to the chosen factors, identity elsewhere.
inline FiniteState apply_local(const FiniteState& psi, std::span<const std::size_t> on, const Eigen::MatrixXcd& op) {
    std::size_t sub = 1;
    for (auto f : on) {
        if (f >= psi.factors.size()) throw ConfigError("apply_local(): factor index out of range");
        sub *= psi.factors[f].dim();
    }
    if (static_cast<std::size_t>(op.rows()) != sub || static_cast<std::size_t>(op.cols()) != sub)
        throw ConfigError("apply_local(): operator dimension mismatch");

    std::vector<bool> acted(psi.factors.size(), false);
    for (auto f : on) {
        if (acted[f]) throw ConfigError("apply_local(): repeated factor");
        acted[f] = true;
    }

    // Offsets of the sub-basis within a block and of the block bases.
    std::vector<std::size_t> sub_offset(sub, 0);
    for (std::size_t s = 0; s < sub; ++s) {
        std::size_t rem = s, off = 0;
        for (std::size_t k = on.size(); k-- > 0;) {
            const std::size_t f = on[k];
            off += (rem % psi.factors[f].dim()) * psi.stride(f);
            rem /= psi.factors[f].dim();
        }
        sub_offset[s] = off;
    }

    FiniteState out = psi;
    std::fill(out.amplitudes.begin(), out.amplitudes.end(), cplx{});
    Eigen::VectorXcd in(static_cast<Eigen::Index>(sub));
    for (std::size_t flat = 0; flat < psi.dim(); ++flat) {
        bool base = true;
        for (auto f : on)
            if (psi.label_index(flat, f) != 0) {
                base = false;
                break;
            }
        if (!base) continue;
        for (std::size_t s = 0; s < sub; ++s) in[static_cast<Eigen::Index>(s)] = psi.amplitudes[flat + sub_offset[s]];
        Eigen::VectorXcd res = op * in;
        for (std::size_t s = 0; s < sub; ++s) out.amplitudes[flat + sub_offset[s]] = res[static_cast<Eigen::Index>(s)];
    }
    return out;
}

inline FiniteState apply_local(const FiniteState& psi, std::size_t factor, const Eigen::MatrixXcd& op) {
    const std::size_t on[] = {factor};
    return apply_local(psi, std::span<const std::size_t>(on), op);
}

// ---------------------------------------------------------------------------
// Reduced density matrix
// ---------------------------------------------------------------------------

struct DensityMatrix {
    std::vector<Factor> factors;
    Eigen::MatrixXcd entries;

    std::size_t dim() const { return static_cast<std::size_t>(entries.rows()); }

    double hermiticity_error() const { return (entries - entries.adjoint()).cwiseAbs().maxCoeff(); }
    double trace() const { return entries.trace().real(); }
    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(entries, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }
};

/// Reduced density matrix on the `keep` factors (kept in their original order):
/// rho(r, s) = sum_q psi(q, r) conj(psi(q, s)), i.e. <r|tr_q |psi><psi| |s>.
inline DensityMatrix partial_trace(const FiniteState& psi, std::span<const std::size_t> keep) {
    const std::size_t nf = psi.factors.size();
    if (keep.empty()) throw ConfigError("partial_trace(): keep set is empty");
    std::vector<bool> kept(nf, false);
    for (auto f : keep) {
        if (f >= nf) throw ConfigError("partial_trace(): factor index out of range");
        if (kept[f]) throw ConfigError("partial_trace(): repeated factor");
        kept[f] = true;
    }
    if (keep.size() == nf) throw ConfigError("partial_trace(): keep set must be a proper subset");

    DensityMatrix rho;
    std::size_t kdim = 1, tdim = 1;
    for (std::size_t f = 0; f < nf; ++f) {
        if (kept[f]) {
            rho.factors.push_back(psi.factors[f]);
            kdim *= psi.factors[f].dim();
        } else {
            tdim *= psi.factors[f].dim();
        }
    }

    // Arrange psi as a (traced x kept) matrix.
    Eigen::MatrixXcd m(static_cast<Eigen::Index>(tdim), static_cast<Eigen::Index>(kdim));
    for (std::size_t flat = 0; flat < psi.dim(); ++flat) {
        std::size_t r = 0, q = 0;
        for (std::size_t f = 0; f < nf; ++f) {
            const std::size_t l = psi.label_index(flat, f);
            if (kept[f])
                r = r * psi.factors[f].dim() + l;
            else
                q = q * psi.factors[f].dim() + l;
        }
        m(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(r)) = psi.amplitudes[flat];
    }
    rho.entries = m.transpose() * m.conjugate();
    return rho;
}

inline DensityMatrix partial_trace(const FiniteState& psi, std::initializer_list<std::size_t> keep) {
    std::vector<std::size_t> k(keep);
    return partial_trace(psi, std::span<const std::size_t>(k));
}

} // namespace smw
