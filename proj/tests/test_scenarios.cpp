#include <gtest/gtest.h>

#include <smworlds/scenarios.hpp>

#include "oracles.hpp"

using namespace smw;

TEST(SternGerlach, LargeRunMatchesRationalOracle) {
    const auto r = stern_gerlach_sequence({100, 0.7, 0.1, 0.05});
    const double exact = static_cast<double>(oracle::binomial_window(100, oracle::rational(7, 10), oracle::rational(1, 10)));
    EXPECT_NEAR(r.summary.at("typical_weight"), exact, 1e-10);
    EXPECT_EQ(r.summary.at("is_typical") == 1.0, exact >= 0.95);
    EXPECT_LT(r.summary.at("count_fraction"), r.summary.at("typical_weight"));
    EXPECT_TRUE(r.passed());
    // Recompute the summary from the stored branch table.
    double in = 0.0, all = 0.0;
    for (const auto& row : r.branch_table) {
        all += row.weight;
        if (in_window(count_of_label(row.label), 100, 0.7, 0.1)) in += row.weight;
    }
    EXPECT_NEAR(in / all, r.summary.at("typical_weight"), 1e-12);
}

TEST(SternGerlach, UnweightedSequenceCountOracle) {
    // Fraction of the 2^100 sequences with 60..80 ups, by exact integer counting.
    boost::multiprecision::cpp_int c = 1, in = 0;
    for (unsigned k = 0; k <= 100; ++k) {
        if (k > 0) c = c * (100 - k + 1) / k;
        if (k >= 60 && k <= 80) in += c;
    }
    const double expected = static_cast<double>(oracle::rational(in, boost::multiprecision::cpp_int(1) << 100));
    EXPECT_NEAR(sequence_count_fraction(100, 0.7, 0.1), expected, 1e-12);
}

TEST(SternGerlach, ExplicitRegistersMatchBinomialFormula) {
    for (std::size_t n : {1u, 5u, 8u, 12u}) {
        const auto r = stern_gerlach_sequence({n, 0.7, 0.1, 0.05});
        EXPECT_LE(r.summary.at("explicit_max_deviation"), 1e-12);
        EXPECT_EQ(r.summary.at("sequence_branches"), std::pow(2.0, static_cast<double>(n)));
        for (std::size_t k = 0; k <= n; ++k)
            EXPECT_NEAR(r.summary.at("weight_k" + std::to_string(k)),
                        oracle::binomial_pmf(static_cast<unsigned>(n), static_cast<unsigned>(k), 0.7), 1e-12);
    }
}

TEST(SternGerlach, RecordStateIsProductOfTrials) {
    const auto psi = record_chain_state(3, 0.7);
    EXPECT_NEAR(psi.norm_sq(), 1.0, 1e-12);
    // |up, down, up> has amplitude sqrt(p) * sqrt(q) * sqrt(p) up to sign.
    const auto flat = (1 * 3 + 2) * 3 + 1;
    EXPECT_NEAR(std::norm(psi.amplitudes[static_cast<std::size_t>(flat)]), 0.7 * 0.3 * 0.7, 1e-14);
    EXPECT_EQ(up_count(psi, static_cast<std::size_t>(flat)), 2u);
}

TEST(SternGerlach, RejectsInvalidParameters) {
    EXPECT_THROW(stern_gerlach_sequence({0, 0.5, 0.1, 0.05}), ConfigError);
    EXPECT_THROW(stern_gerlach_sequence({10, 1.5, 0.1, 0.05}), ConfigError);
    EXPECT_THROW(stern_gerlach_sequence({10, 0.5, 0.1, 1.0}), ConfigError);
}

TEST(Epr, NoSignalingAndBranchDensities) {
    const auto z = epr(AliceSetting::z), x = epr(AliceSetting::x);
    for (const auto* r : {&z, &x}) {
        EXPECT_TRUE(r->passed());
        EXPECT_LE(r->summary.at("no_signaling_delta"), 1e-12);
        EXPECT_LE(r->summary.at("m_b_vs_rho_b_delta"), 1e-12);
        EXPECT_NEAR(r->summary.at("t1_to_t2_fidelity"), 1.0, 1e-12);
    }
    // z: each world has one half-bump at +1 or -1.
    EXPECT_NEAR(z.summary.at("branch1_B:z=-1") + z.summary.at("branch2_B:z=-1"), 0.5, 1e-12);
    EXPECT_NEAR(z.summary.at("branch1_B:z=+1") + z.summary.at("branch2_B:z=+1"), 0.5, 1e-12);
    EXPECT_NEAR(z.summary.at("branch1_B:z=-1") * z.summary.at("branch1_B:z=+1"), 0.0, 1e-12);
    // x: each world has quarter bumps at both sites.
    for (const char* site : {"branch1_B:z=-1", "branch1_B:z=+1", "branch2_B:z=-1", "branch2_B:z=+1"})
        EXPECT_NEAR(x.summary.at(site), 0.25, 1e-12) << site;
    EXPECT_GT(z.summary.at("pairing_difference"), 0.1);
}

TEST(Epr, MagnetHamiltonianTakesT1ToT2) {
    for (auto s : {AliceSetting::z, AliceSetting::x}) {
        const auto evolved = exact_evolve(epr_state_t1(s), bob_magnet_hamiltonian(), M_PI / 2.0);
        EXPECT_NEAR(std::abs(inner(epr_state_t2(s), evolved)), 1.0, 1e-12);
    }
    EXPECT_THROW(parse_setting("y"), ConfigError);
}

TEST(Cat, AdditivityTransparencyAndSpectator) {
    CatParams p;
    p.with_spectator = true;
    p.grid.points_per_axis = 128;
    const auto r = cat_1d(p);
    EXPECT_TRUE(r.passed());
    EXPECT_LE(r.summary.at("additivity_max_error"), 1e-10);
    EXPECT_LE(r.summary.at("transparency_max_error"), 1e-8);
    EXPECT_NEAR(r.summary.at("bump_integral_0"), 0.5 * 2.0, 1e-6);
    EXPECT_FALSE(r.branch_table.empty());
}

TEST(Cat, SeparationBelowTenSigmaIsRejected) {
    CatParams p;
    p.separation_sigmas = 5.0;
    EXPECT_THROW(cat_1d(p), ConfigError);
}

TEST(TwoSlit, FringesAndSymmetry) {
    TwoSlitParams p;
    p.trajectories = 200;
    p.grid.points_per_axis = 128;
    const auto r = two_slit(p, 1);
    EXPECT_TRUE(r.passed());
    EXPECT_EQ(r.summary.at("axis_crossings"), 0.0);
    EXPECT_NEAR(r.summary.at("fringe_spacing"), 2.0 * M_PI * p.horizon / p.slit_separation,
                0.1 * 2.0 * M_PI * p.horizon / p.slit_separation);
    EXPECT_FALSE(r.trajectories.empty());
}

TEST(TwoSlit, SingleSlitShowsNoFringes) {
    TwoSlitParams p;
    p.single_slit = true;
    p.trajectories = 50;
    p.grid.points_per_axis = 128;
    const auto r = two_slit(p, 1);
    EXPECT_TRUE(r.passed());
    EXPECT_LT(r.summary.at("fringe_contrast"), 0.1);
}

TEST(FringeAnalysis, CosineProfile) {
    std::vector<double> prof(400);
    const double h = 0.1;
    for (std::size_t j = 0; j < prof.size(); ++j) {
        const double y = -20.0 + static_cast<double>(j) * h;
        prof[j] = std::exp(-y * y / 200.0) * (1.0 + 0.8 * std::cos(2.0 * M_PI * y / 4.0));
    }
    const auto f = analyze_fringes(prof, h);
    EXPECT_NEAR(f.spacing, 4.0, 0.05);
    EXPECT_NEAR(f.contrast, 0.8, 0.05);
}

TEST(Torus, SymmetrizedStateHasConstantDensity) {
    for (const char* seed_state : {"gaussian", "random", "uniform"}) {
        TorusParams p;
        p.seed_state = seed_state;
        const auto r = torus_invariant(p, 3);
        EXPECT_TRUE(r.passed()) << seed_state;
        EXPECT_LE(r.summary.at("max_relative_variation"), 1e-8);
    }
    TorusParams p;
    p.seed_state = "gaussian";
    EXPECT_GT(torus_invariant(p, 3).summary.at("psi_relative_variance"), 1e-8);
}

TEST(Torus, PartialTranslationGroupLeavesPeriodicDensity) {
    TorusParams p;
    p.seed_state = "random";
    p.translate_step = 8;
    const auto r = torus_invariant(p, 4);
    EXPECT_TRUE(r.passed());
    EXPECT_LE(r.summary.at("period_error"), 1e-12);
}

TEST(Grwm, SingleSurvivorAndControl) {
    GrwmCatParams p;
    p.runs = 60;
    p.grid.points_per_axis = 128;
    const auto r = grwm_cat(p, 5);
    EXPECT_GE(r.summary.at("survivor_fraction"), 0.9);
    EXPECT_EQ(r.summary.at("sm_branch_count"), 2.0);

    p.lambda = 0.0;
    p.runs = 4;
    const auto c = grwm_cat(p, 5);
    EXPECT_TRUE(c.passed());
    EXPECT_EQ(c.summary.at("mean_collapses"), 0.0);
}
