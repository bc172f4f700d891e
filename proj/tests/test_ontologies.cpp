#include <gtest/gtest.h>

#include <random>

#include <smworlds/ontologies.hpp>
#include <smworlds/scenarios.hpp>

#include "oracles.hpp"

using namespace smw;

namespace {

const GridSpec line{1, 1, 256, 40.0};
const ParticleWeights unit_mass = ParticleWeights::mass({1.0});

GridState gaussian(double center, double sigma, double k = 0.0) {
    return normalize(GridState::from_function(line, [&](auto x) { return gaussian_amplitude(x[0], center, sigma, k); }));
}

GridState packets(double wa) {
    return normalize(GridState::from_function(line, [&](auto x) {
        return std::sqrt(wa) * gaussian_amplitude(x[0], -8.0, 1.0) + std::sqrt(1.0 - wa) * gaussian_amplitude(x[0], 8.0, 1.0);
    }));
}

} // namespace

TEST(Periodic, WrapAndCellLookup) {
    const double lo = domain_low(line);
    EXPECT_DOUBLE_EQ(lo, -20.078125);
    EXPECT_NEAR(wrap_coordinate(line, lo + 40.0 + 0.25), lo + 0.25, 1e-12);
    EXPECT_NEAR(wrap_coordinate(line, lo - 0.25), lo + 39.75, 1e-12);
    EXPECT_TRUE(in_domain(line, lo));
    EXPECT_FALSE(in_domain(line, lo + 40.0));
    const double q[] = {line.coordinate(17) + 0.07};
    EXPECT_EQ(cell_of(line, q), 17u);
}

TEST(BohmVelocity, RealGroundStateIsAtRest) {
    const GridSpec s{1, 1, 128, 20.0};
    const auto psi = normalize(GridState::from_function(s, [&](auto x) { return gaussian_amplitude(x[0], 0.0, std::sqrt(0.5)); }));
    for (double x : {-2.0, -0.3, 0.0, 0.9, 1.7}) {
        const double q[] = {x};
        EXPECT_NEAR(bohm_velocity(psi, q, unit_mass).velocity[0], 0.0, 1e-10);
    }
}

TEST(BohmVelocity, PlaneWaveFlowsAtKOverM) {
    const double k = 2.0 * M_PI * 3.0 / 40.0;
    const auto psi = normalize(GridState::from_function(line, [&](auto x) { return std::polar(1.0, k * x[0]); }));
    for (double x : {-15.0, -1.1, 0.0, 4.4, 19.0}) {
        const double q[] = {x};
        EXPECT_NEAR(bohm_velocity(psi, q, ParticleWeights::mass({2.0})).velocity[0], k / 2.0, 1e-10);
    }
}

TEST(BohmVelocity, SpreadingGaussianMatchesAnalyticField) {
    const auto psi0 = gaussian(0.0, 1.0);
    const auto psi = split_step_evolve(psi0, PotentialSpec::none(), unit_mass, {5e-3, 200});
    const double rate = oracle::free_width_rate(1.0, 1.0);
    for (double x : {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0}) {
        const double q[] = {x};
        const double v = bohm_velocity(psi, q, unit_mass).velocity[0];
        EXPECT_NEAR(v, x * rate, 0.01 * std::abs(x * rate));
    }
}

TEST(BohmVelocity, OutsideDomainIsRejected) {
    const double q[] = {25.0};
    EXPECT_THROW(bohm_velocity(gaussian(0.0, 1.0), q, unit_mass), ConfigError);
}

TEST(BohmEvolve, CenterStaysAndOffCenterScalesWithWidth) {
    const auto psi0 = gaussian(0.0, 1.0);
    const EvolutionParams p{5e-3, 400};
    const auto centre = bohm_evolve(psi0, {0.0}, PotentialSpec::none(), unit_mass, p);
    for (const auto& q : centre.configurations) EXPECT_LE(std::abs(q[0]), 1e-6 * line.extent);
    const auto off = bohm_evolve(psi0, {1.0}, PotentialSpec::none(), unit_mass, p, 100);
    ASSERT_EQ(off.times.size(), 5u);
    for (std::size_t i = 0; i < off.times.size(); ++i) {
        const double expected = oracle::free_width(1.0, off.times[i]);
        EXPECT_NEAR(off.configurations[i][0], expected, 0.01 * expected);
    }
    EXPECT_FALSE(off.degenerate);
}

TEST(BohmEvolve, OneDimensionalTrajectoriesNeverCross) {
    const auto psi0 = normalize(GridState::from_function(line, [&](auto x) {
        return gaussian_amplitude(x[0], -2.0, 1.0, 1.5) + gaussian_amplitude(x[0], 2.0, 1.0, -1.5);
    }));
    std::vector<std::vector<double>> q0;
    for (auto& c : sample_psi2(psi0, 200, 3)) q0.push_back(c.coords);
    std::sort(q0.begin(), q0.end());
    const auto run = bohm_evolve_ensemble(psi0, q0, PotentialSpec::none(), unit_mass, {5e-3, 400}, 20);
    const std::size_t records = run.trajectories.front().times.size();
    for (std::size_t r = 0; r < records; ++r)
        for (std::size_t i = 1; i < q0.size(); ++i)
            EXPECT_LE(run.trajectories[i - 1].configurations[r][0], run.trajectories[i].configurations[r][0]);
}

TEST(Sampling, DeterministicForFixedSeed) {
    const auto psi = packets(0.36);
    const auto a = sample_psi2(psi, 500, 9), b = sample_psi2(psi, 500, 9), c = sample_psi2(psi, 500, 10);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].coords, b[i].coords);
        EXPECT_EQ(a[i].cell, b[i].cell);
    }
    EXPECT_NE(a[0].coords, c[0].coords);
}

TEST(Sampling, UniformTorusPassesChiSquare) {
    const GridSpec s{1, 1, 64, 10.0};
    const auto psi = normalize(GridState::from_function(s, [](auto) { return cplx(1.0); }));
    std::vector<double> obs(64, 0.0), expd(64, 1e5 / 64.0);
    for (const auto& c : sample_psi2(psi, 100000, 5)) obs[c.cell] += 1.0;
    EXPECT_GT(stats::chi_square(obs, expd).p_value, 1e-3);
}

TEST(Sampling, PacketOccupancyFollowsNorms) {
    const auto psi = packets(0.36);
    const std::size_t n = 10000;
    double left = 0.0;
    for (const auto& c : sample_psi2(psi, n, 77)) left += c.coords[0] < 0.0 ? 1.0 : 0.0;
    EXPECT_NEAR(left / n, 0.36, oracle::three_sigma * oracle::binomial_se(0.36, n));
}

TEST(Sampling, FiniteStatesDrawBasisIndices) {
    const Factor f = Factor::record("R", {"a", "b", "c"});
    const auto psi = FiniteState::single(f, {std::sqrt(0.5), 0.0, std::sqrt(0.5)});
    for (const auto& c : sample_psi2(psi, 200, 1)) {
        EXPECT_NE(c.cell, 1u);
        EXPECT_TRUE(c.coords.empty());
    }
}

TEST(Equivariance, ZeroTimeCompareSamplesWithThemselves) {
    const auto st = equivariance_check(gaussian(0.0, 1.0), PotentialSpec::none(), unit_mass, {5e-3, 0}, 10000, 1);
    EXPECT_TRUE(st.passed) << st.diagnostic;
}

TEST(Equivariance, FreeGaussianPassesAndBiasedEnsembleFails) {
    const auto psi0 = gaussian(0.0, 1.0);
    const EvolutionParams p{5e-3, 400};
    const auto ok = equivariance_check(psi0, PotentialSpec::none(), unit_mass, p, 10000, 2);
    EXPECT_TRUE(ok.passed) << ok.diagnostic;
    EXPECT_LT(ok.ks_statistics[0], ok.ks_critical);
    EXPECT_EQ(ok.degenerate, 0u);

    std::vector<std::vector<double>> left;
    for (auto& c : sample_psi2(psi0, 20000, 3))
        if (c.coords[0] < 0.0 && left.size() < 10000) left.push_back(c.coords);
    const auto bad = equivariance_check_from(psi0, left, PotentialSpec::none(), unit_mass, p);
    EXPECT_FALSE(bad.passed);
}

TEST(Sip, IndependentDrawsFlipHalfTheTime) {
    const auto psi = packets(0.5);
    std::vector<double> times(10000);
    for (std::size_t j = 0; j < times.size(); ++j) times[j] = static_cast<double>(j);
    const auto h = sip_history(times, State(psi), 21);
    std::vector<std::string> labels;
    for (const auto& c : h.configurations) labels.push_back(c.coords[0] < 0.0 ? "L" : "R");
    // For fair independent labels the flip indicators are themselves i.i.d. Bernoulli(1/2).
    const double se = std::sqrt(0.25 / 9999.0);
    EXPECT_NEAR(label_flip_rate(labels), 0.5, 3.0 * se);

    // A Bohmian history on the same state never changes packet.
    const auto traj = bohm_evolve(psi, {-8.0}, PotentialSpec::none(), unit_mass, {5e-3, 200});
    std::vector<std::string> bl;
    for (const auto& q : traj.configurations) bl.push_back(q[0] < 0.0 ? "L" : "R");
    EXPECT_EQ(label_flip_rate(bl), 0.0);
}

TEST(Sip, TimeDependentHistoryIsReproducible) {
    const auto psi0 = gaussian(0.0, 1.0);
    auto psi_at = [&](double t) -> State {
        return split_step_evolve(psi0, PotentialSpec::none(), unit_mass, {5e-3, static_cast<std::size_t>(std::llround(t / 5e-3))});
    };
    const std::vector<double> times{0.0, 0.5, 1.0};
    const auto a = sip_history(times, psi_at, 4), b = sip_history(times, psi_at, 4);
    for (std::size_t j = 0; j < times.size(); ++j) EXPECT_EQ(a.configurations[j].coords, b.configurations[j].coords);
}

TEST(Sip, OccupancyOfFourBranchState) {
    // Two independent 0.7/0.3 trials: weights 0.49, 0.21, 0.21, 0.09.
    const auto psi = record_chain_state(2, 0.7);
    std::vector<std::size_t> both{0, 1};
    const auto bs = decompose_projectors(psi, MacrostateFamily::from_factors(psi, both, {{"up", "down"}, {"up", "down"}}),
                                         ParticleWeights::unit(2));
    ASSERT_EQ(bs.size(), 4u);
    const std::size_t n = 10000;
    std::vector<double> times(n);
    for (std::size_t j = 0; j < n; ++j) times[j] = static_cast<double>(j);
    const auto occ = sip_occupancy(sip_history(times, State(psi), 8), {bs});
    const std::map<std::string, double> expected{{"up|up", 0.49}, {"up|down", 0.21}, {"down|up", 0.21}, {"down|down", 0.09}};
    double sum = 0.0;
    for (const auto& [label, p] : expected) {
        EXPECT_NEAR(occ.fraction(label), p, 3.0 * oracle::binomial_se(p, n)) << label;
        sum += occ.fraction(label);
    }
    EXPECT_NEAR(sum + occ.residue, 1.0, 1e-12);
}

TEST(Sip, OneBranchStateIsAlwaysOccupied) {
    const auto psi = gaussian(0.0, 1.0);
    const auto bs = decompose_grid(psi, unit_mass);
    const auto occ = sip_occupancy(sip_history({0.0, 1.0, 2.0, 3.0}, State(psi), 1), {bs});
    EXPECT_DOUBLE_EQ(occ.fraction("packet0"), 1.0);
}

TEST(Sip, ResidueAboveOnePercentIsAnError) {
    const Factor f = Factor::record("R", {"a", "b"});
    const auto psi = FiniteState::single(f, {M_SQRT1_2, M_SQRT1_2});
    MacrostateFamily fam;
    fam.dim = 2;
    fam.projectors = {{"a", {0}}};
    const auto bs = decompose_projectors(psi, fam, ParticleWeights::unit(1));
    std::vector<double> times(100);
    EXPECT_THROW(sip_occupancy(sip_history(times, State(psi), 2), {bs}), NumericalError);
}

TEST(HistoryTypicality, TrivialAndSymmetricProperties) {
    const auto psi0 = gaussian(0.0, 1.0);
    const EvolutionParams p{5e-3, 200};
    const std::size_t n = 2000;
    const auto always = history_typicality([](const BohmTrajectory&) { return true; }, psi0, PotentialSpec::none(), unit_mass, p,
                                           n, 1);
    EXPECT_DOUBLE_EQ(always.estimate, 1.0);
    // Wilson lower bound for n successes in n trials is at least n / (n + z^2).
    EXPECT_GE(always.interval.lo, static_cast<double>(n) / (static_cast<double>(n) + 9.0));
    const auto right = history_typicality([](const BohmTrajectory& t) { return t.configurations.back()[0] > 0.0; }, psi0,
                                          PotentialSpec::none(), unit_mass, p, n, 2);
    EXPECT_LE(right.interval.lo, 0.5);
    EXPECT_GE(right.interval.hi, 0.5);
}

TEST(HistoryTypicality, RecordChainFrequencyWindowMatchesBinomialSum) {
    RecordChainParams c;
    const auto psi0 = record_chain_wave(c);
    const EvolutionParams p{c.grid.dt, static_cast<std::size_t>(std::llround(c.horizon / c.grid.dt))};
    const auto est = history_typicality(
        [&](const BohmTrajectory& t) {
            const std::size_t k = record_chain_class(c, t.configurations.back()[0]);
            return in_window(k, c.n, c.p, 0.1);
        },
        psi0, PotentialSpec::none(), unit_mass, p, 2000, 5);
    const double exact = static_cast<double>(oracle::binomial_window(10, oracle::rational(7, 10), oracle::rational(1, 10)));
    EXPECT_LE(est.interval.lo, exact);
    EXPECT_GE(est.interval.hi, exact);
}
