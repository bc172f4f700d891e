#include <gtest/gtest.h>

#include <random>

#include <smworlds/branches.hpp>
#include <smworlds/dynamics.hpp>
#include <smworlds/scenarios.hpp>

#include "oracles.hpp"

using namespace smw;

namespace {

GridState two_packets(const GridSpec& s, double a, double b, double wa) {
    return normalize(GridState::from_function(s, [&](auto x) {
        return std::sqrt(wa) * gaussian_amplitude(x[0], a, 1.0) + std::sqrt(1.0 - wa) * gaussian_amplitude(x[0], b, 1.0);
    }));
}

FiniteState random_state(std::vector<Factor> f, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> n;
    auto s = FiniteState::zeros(std::move(f));
    for (auto& z : s.amplitudes) z = {n(g), n(g)};
    return normalize(s);
}

} // namespace

TEST(DecomposeGrid, TwoPacketsReconstructAndCarryWeights) {
    const GridSpec s{1, 1, 256, 40.0};
    const auto psi = two_packets(s, -8.0, 8.0, 0.36);
    const auto w = ParticleWeights::mass({2.5});
    const auto bs = decompose_grid(psi, w);
    ASSERT_EQ(bs.size(), 2u);
    EXPECT_EQ(bs.branches[0].label, "packet0");
    EXPECT_NEAR(bs.branches[0].norm_sq, 0.64, 1e-10);
    EXPECT_NEAR(bs.branches[1].norm_sq, 0.36, 1e-10);
    ASSERT_TRUE(bs.sensitivity.has_value());
    EXPECT_TRUE(bs.sensitivity->stable());

    std::vector<cplx> sum(psi.amplitudes.size());
    for (std::size_t i = 0; i < bs.size(); ++i) {
        const auto c = std::get<GridState>(component_state(bs, i));
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += c.amplitudes[j];
        // mu_l = ||psi_l||^2 * sum_i m_i, and also the integral of m_l.
        EXPECT_NEAR(branch_density(bs, i, w).integral(), bs.branches[i].norm_sq * w.total(), 1e-10);
        EXPECT_NEAR(bs.branches[i].weight, bs.branches[i].norm_sq * w.total(), 1e-15);
    }
    for (std::size_t j = 0; j < sum.size(); ++j) EXPECT_LE(std::abs(sum[j] - psi.amplitudes[j]), 1e-12);
}

TEST(DecomposeGrid, OverlappingPacketsFormOneBranch) {
    const GridSpec s{1, 1, 256, 40.0};
    EXPECT_EQ(decompose_grid(two_packets(s, -1.0, 1.0, 0.5), ParticleWeights::unit(1)).size(), 1u);
}

TEST(DecomposeGrid, RejectsBadThresholdAndZeroState) {
    const GridSpec s{1, 1, 64, 20.0};
    EXPECT_THROW(decompose_grid(two_packets(s, -5, 5, 0.5), ParticleWeights::unit(1), 0.0), ConfigError);
    EXPECT_THROW(decompose_grid(GridState::zeros(s), ParticleWeights::unit(1)), NumericalError);
}

TEST(Projectors, ReconstructionAndWeights) {
    const std::vector<Factor> f{Factor::position("P", 0, {"a", "b", "c"}), Factor::spin("s")};
    const auto psi = random_state(f, 2);
    const auto w = ParticleWeights::mass({1.5});
    const auto fam = MacrostateFamily::from_factors(psi, {0});
    EXPECT_TRUE(fam.complete());
    const auto bs = decompose_projectors(psi, fam, w);
    ASSERT_EQ(bs.size(), 3u);
    std::vector<cplx> sum(psi.dim());
    double total = 0.0;
    for (std::size_t i = 0; i < bs.size(); ++i) {
        const auto c = std::get<FiniteState>(component_state(bs, i));
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += c.amplitudes[j];
        EXPECT_NEAR(branch_density(bs, i, w).integral(), bs.branches[i].weight, 1e-10);
        total += bs.branches[i].norm_sq;
    }
    for (std::size_t j = 0; j < sum.size(); ++j) EXPECT_LE(std::abs(sum[j] - psi.amplitudes[j]), 1e-12);
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(bs.residue, 0.0, 1e-12);
}

TEST(Projectors, OverlappingFamilyIsRejected) {
    MacrostateFamily fam;
    fam.dim = 4;
    fam.projectors = {{"x", {0, 1}}, {"y", {1, 2}}};
    EXPECT_THROW(fam.validate(), ConfigError);
}

TEST(Refinement, PreservesCoarseWeightsOnRandomRefinements) {
    const std::vector<Factor> f{Factor::record("A", {"0", "1", "2"}), Factor::record("B", {"0", "1", "2", "3"}),
                                Factor::position("P", 0, {"l", "r"})};
    std::mt19937_64 g(17);
    for (int trial = 0; trial < 50; ++trial) {
        const auto psi = random_state(f, 1000 + static_cast<std::uint64_t>(trial));
        const auto w = ParticleWeights::unit(1);
        const auto coarse = decompose_projectors(psi, MacrostateFamily::from_factors(psi, {0}), w);
        // A random finer partition: split each coarse support into random groups.
        std::uniform_int_distribution<int> groups(1, 4);
        MacrostateFamily fine;
        fine.dim = psi.dim();
        for (const auto& b : coarse.branches) {
            const int k = groups(g);
            std::uniform_int_distribution<int> pick(0, k - 1);
            std::vector<std::vector<std::size_t>> parts(static_cast<std::size_t>(k));
            for (auto i : b.support) parts[static_cast<std::size_t>(pick(g))].push_back(i);
            for (int j = 0; j < k; ++j)
                if (!parts[static_cast<std::size_t>(j)].empty())
                    fine.projectors.push_back({b.label + "/" + std::to_string(j), parts[static_cast<std::size_t>(j)]});
        }
        const auto refined = refine(coarse, fine);
        std::map<int, double> by_parent;
        for (const auto& c : refined.branches) by_parent[c.parent_id] += c.weight;
        for (const auto& b : coarse.branches) EXPECT_NEAR(by_parent[b.id], b.weight, 1e-10);
    }
}

TEST(Refinement, StraddlingProjectorIsRejected) {
    const std::vector<Factor> f{Factor::record("A", {"0", "1"}), Factor::record("B", {"0", "1"})};
    const auto psi = random_state(f, 3);
    const auto coarse = decompose_projectors(psi, MacrostateFamily::from_factors(psi, {0}), ParticleWeights::unit(1));
    MacrostateFamily bad;
    bad.dim = 4;
    bad.projectors = {{"x", {1, 2}}};
    EXPECT_THROW(refine(coarse, bad), ConfigError);
}

TEST(Typicality, WeightOfMatchesExactRationalBinomialSum) {
    const unsigned n = 100;
    const auto classes = count_class_branches(n, 0.7);
    auto pred = [&](const Branch& b) { return in_window(count_of_label(b.label), n, 0.7, 0.1); };
    const double exact = static_cast<double>(oracle::binomial_window(n, oracle::rational(7, 10), oracle::rational(1, 10)));
    EXPECT_NEAR(weight_of(pred, classes), exact, 1e-10);
    EXPECT_EQ(is_typical(pred, classes, 0.05), exact >= 0.95);
    EXPECT_EQ(is_typical(pred, classes, 0.01), exact >= 0.99);
    EXPECT_THROW(is_typical(pred, classes, 0.0), ConfigError);
}

TEST(Typicality, WindowEdgesAreInclusive) {
    // k = 80 of n = 100 sits exactly on p + window for p = 0.7, window = 0.1.
    EXPECT_TRUE(in_window(80, 100, 0.7, 0.1));
    EXPECT_TRUE(in_window(60, 100, 0.7, 0.1));
    EXPECT_FALSE(in_window(81, 100, 0.7, 0.1));
}

TEST(Lineage, CatSplitStaysQuasiEquivariant) {
    const std::vector<double> times{0.0, 0.5, 1.0, 1.5, 2.0};
    const auto lin = cat_split_lineage(GridOptions{}, times);
    ASSERT_EQ(lin.leakage.size(), 4u);
    for (double l : lin.leakage) EXPECT_LE(std::abs(l), 1e-3);
    EXPECT_TRUE(lin.reliable);
    // The single branch at t = 0 becomes two, both descending from it.
    EXPECT_EQ(lin.sets.front().size(), 1u);
    EXPECT_EQ(lin.sets.back().size(), 2u);
    for (auto p : lin.parents.back()) EXPECT_LT(p, lin.sets[3].size());
}

TEST(Pairing, RejectsFamiliesOnSharedFactors) {
    const auto psi = epr_state_t2(AliceSetting::z);
    const auto fam = alice_detector_family(psi, AliceSetting::z);
    EXPECT_THROW(pairing(psi, fam, fam), ConfigError);
    const auto pm = pairing(psi, fam, bob_position_family(psi));
    EXPECT_NEAR(pm.weights.sum(), 1.0, 1e-12);
}
