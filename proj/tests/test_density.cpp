#include <gtest/gtest.h>

#include <random>

#include <smworlds/density.hpp>
#include <smworlds/scenarios.hpp>

using namespace smw;

namespace {

GridState random_grid_state(int particles, std::size_t n, std::uint64_t seed) {
    GridSpec s{particles, 1, n, 10.0};
    std::mt19937_64 g(seed);
    std::normal_distribution<double> nd;
    auto psi = GridState::zeros(s);
    for (auto& z : psi.amplitudes) z = {nd(g), nd(g)};
    return normalize(psi);
}

} // namespace

TEST(MatterDensity, MassIsConservedForRandomStates) {
    std::mt19937_64 g(4);
    std::uniform_real_distribution<double> mass(0.1, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int np = 1 + trial % 3;
        std::vector<double> m(static_cast<std::size_t>(np));
        for (auto& v : m) v = mass(g);
        const auto w = ParticleWeights::mass(m);
        const auto psi = random_grid_state(np, 16, 100 + static_cast<std::uint64_t>(trial));
        EXPECT_NEAR(matter_density(psi, w).integral(), w.total(), 1e-8 * w.total());
    }
}

TEST(MatterDensity, ProductGaussianMarginals) {
    GridSpec s{2, 1, 128, 30.0};
    const double c1 = -3.0, c2 = 4.0, s1 = 1.0, s2 = 1.5;
    auto psi = GridState::from_function(s, [&](auto x) {
        return gaussian_amplitude(x[0], c1, s1) * gaussian_amplitude(x[1], c2, s2);
    });
    const auto m = matter_density(psi, ParticleWeights::mass({2.0, 3.0}));
    ASSERT_EQ(m.values.size(), 128u);
    for (std::size_t j = 0; j < 128; ++j) {
        const double x = s.coordinate(j);
        const double g1 = std::exp(-(x - c1) * (x - c1) / (2 * s1 * s1)) / std::sqrt(2 * M_PI * s1 * s1);
        const double g2 = std::exp(-(x - c2) * (x - c2) / (2 * s2 * s2)) / std::sqrt(2 * M_PI * s2 * s2);
        EXPECT_NEAR(m.values[j], 2.0 * g1 + 3.0 * g2, 1e-12);
    }
}

TEST(MatterDensity, ChargeWeightsMayCancel) {
    GridSpec s{2, 1, 64, 20.0};
    auto psi = GridState::from_function(s, [&](auto x) {
        return gaussian_amplitude(x[0], 0.0, 1.0) * gaussian_amplitude(x[1], 0.0, 1.0);
    });
    const auto m = matter_density(psi, ParticleWeights::charge({1.0, -1.0}));
    for (double v : m.values) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(MatterDensity, WeightCountMismatchIsRejected) {
    const auto psi = random_grid_state(2, 8, 1);
    EXPECT_THROW(matter_density(psi, ParticleWeights::mass({1.0})), ConfigError);
}

TEST(MatterDensity, RestrictToBox) {
    GridSpec s{1, 2, 16, 8.0};
    auto psi = GridState::from_function(s, [&](auto x) {
        return gaussian_amplitude(x[0], 0.0, 1.0) * gaussian_amplitude(x[1], 1.0, 1.0);
    });
    const auto m = matter_density(psi, ParticleWeights::unit(1));
    const auto r = restrict(m, Box{{2, 5}, {6, 7}});
    ASSERT_EQ(r.values.size(), 8u);
    EXPECT_EQ(r.dims, (std::vector<std::size_t>{4, 2}));
    EXPECT_DOUBLE_EQ(r.values[0], m.values[2 * 16 + 5]);
    EXPECT_DOUBLE_EQ(r.values[7], m.values[5 * 16 + 6]);
    EXPECT_DOUBLE_EQ(r.coordinate(0, 0), s.coordinate(2));
    EXPECT_THROW(restrict(m, Box{{0, 0}, {0, 4}}), ConfigError);
    EXPECT_THROW(restrict(m, Box{{0, 0}, {17, 4}}), ConfigError);
    EXPECT_THROW(restrict(m, LabelSet{{"x"}}), ConfigError);
}

TEST(FiniteDensity, SiteMassesFromAmplitudes) {
    const Factor pos = Factor::position("P", 0, {"L", "R"}, {"left", "right"});
    const auto psi = FiniteState::single(pos, {std::sqrt(0.36), cplx(0.0, 0.8)});
    const auto m = finite_density(psi, ParticleWeights::mass({2.0}));
    EXPECT_NEAR(m.at("left"), 0.72, 1e-15);
    EXPECT_NEAR(m.at("right"), 1.28, 1e-15);
    EXPECT_NEAR(m.integral(), 2.0, 1e-15);
}

TEST(FiniteDensity, ReducedDensityMatrixGivesSubsystemDensity) {
    for (auto s : {AliceSetting::z, AliceSetting::x}) {
        const auto psi = epr_state_t2(s);
        const ParticleWeights w = ParticleWeights::mass({1.0, 1.0});
        const auto full = finite_density(psi, w);
        const auto on_b = restrict(full, sites_with_prefix(full, "B:"));
        const auto from_rho = density_from_reduced(partial_trace(psi, {2, 3}), w);
        ASSERT_EQ(on_b.labels.size(), 3u);
        for (const auto& l : on_b.labels) EXPECT_NEAR(on_b.at(l), from_rho.at(l), 1e-12) << l;
    }
}

TEST(FiniteDensity, MissingPositionFactorIsRejected) {
    const auto psi = FiniteState::basis({Factor::spin("s")}, {"up"});
    EXPECT_THROW(finite_density(psi, ParticleWeights::unit(1)), ConfigError);
}
