#include <gtest/gtest.h>

#include <cmath>

#include "l2c/sampling.hpp"
#include "test_support.hpp"

using namespace l2c;
using l2c::testing::exact_marginals;
using l2c::testing::unfixed;

namespace {

GraphicalModel independent(std::vector<double> p1) {
    GraphicalModel m;
    m.num_vars = static_cast<int>(p1.size());
    for (int i = 0; i < m.num_vars; ++i) {
        m.factors.push_back({{i}, {std::log(1 - p1[static_cast<std::size_t>(i)]), std::log(p1[static_cast<std::size_t>(i)])}});
    }
    return m;
}

} // namespace

TEST(GibbsConditional, ClosedForms) {
    const auto m = independent({0.75});
    EXPECT_NEAR(gibbs_conditional(m, Assignment(1), 0), 0.75, 1e-15);

    GraphicalModel u;
    u.num_vars = 3;
    u.factors.push_back({{0, 1}, std::vector<double>(4, 0.3)});
    u.factors.push_back({{1, 2}, std::vector<double>(4, -1.0)});
    for (std::uint64_t c = 0; c < 8; ++c) {
        const auto x = assignment_from_code(3, c);
        for (int v = 0; v < 3; ++v) EXPECT_EQ(gibbs_conditional(u, x, v), 0.5);
    }
}

TEST(GibbsConditional, BothBranchesImpossible) {
    GraphicalModel m;
    m.num_vars = 1;
    m.factors.push_back({{0}, {kNegInf, kNegInf}});
    EXPECT_EQ(gibbs_conditional(m, Assignment(1), 0), 0.5);
    m.factors[0].table = {kNegInf, 0.0};
    EXPECT_EQ(gibbs_conditional(m, Assignment(1), 0), 1.0);
}

TEST(GibbsConditional, MatchesEnumeratedJoint) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = l2c::testing::small_random(3, seed);
        for (std::uint64_t c = 0; c < 8; ++c) {
            const auto x = assignment_from_code(3, c);
            for (int v = 0; v < 3; ++v) {
                auto fixed = l2c::testing::dense(x);
                fixed[static_cast<std::size_t>(v)] = -1;
                const double exact = exact_marginals(m, fixed)[static_cast<std::size_t>(v)];
                EXPECT_NEAR(gibbs_conditional(m, x, v), exact, 1e-12);
            }
        }
    }
}

TEST(GibbsSample, EmptyAndDeterministic) {
    const auto m = l2c::testing::small_random(6, 4);
    GibbsConfig cfg{10, 2, 42};
    EXPECT_TRUE(gibbs_sample(m, 0, cfg).empty());
    const auto a = gibbs_sample(m, 50, cfg);
    const auto b = gibbs_sample(m, 50, cfg);
    ASSERT_EQ(a.size(), 50u);
    EXPECT_EQ(a, b);
    cfg.seed = 43;
    EXPECT_NE(gibbs_sample(m, 50, cfg), a);
    for (const auto& s : a) EXPECT_TRUE(s.complete());
}

TEST(GibbsSample, IndependentMarginals) {
    const auto m = independent({0.9, 0.2});
    const auto samples = gibbs_sample(m, 50000, GibbsConfig{500, 2, 7});
    double s0 = 0, s1 = 0;
    for (const auto& s : samples) {
        s0 += s[0];
        s1 += s[1];
    }
    EXPECT_NEAR(s0 / 50000.0, 0.9, 0.01);
    EXPECT_NEAR(s1 / 50000.0, 0.2, 0.01);
}

TEST(GibbsSample, ClampedVariablesNeverMove) {
    const auto m = l2c::testing::small_random(5, 9);
    Assignment ev(5);
    ev.set(2, 1);
    ev.set(4, 0);
    for (const auto& s : gibbs_sample(m, 200, GibbsConfig{5, 1, 3}, ev)) {
        EXPECT_EQ(s[2], 1);
        EXPECT_EQ(s[4], 0);
    }
}

TEST(GibbsSample, ConfigValidation) {
    const auto m = independent({0.5});
    EXPECT_THROW(gibbs_sample(m, 1, GibbsConfig{-1, 1, 0}), ValidationError);
    EXPECT_THROW(gibbs_sample(m, 1, GibbsConfig{0, 0, 0}), ValidationError);
}

TEST(EstimateModeValues, StrongUnaries) {
    const auto m = independent({0.8, 0.9, 0.7, 0.95});
    const auto modes = estimate_mode_values(m, Assignment(4), 200, GibbsConfig{50, 1, 1});
    for (int i = 0; i < 4; ++i) EXPECT_EQ(modes[i], 1);
}

TEST(EstimateModeValues, EvenSplitTiesToZero) {
    Assignment a(2), b(2);
    a.set(0, 1);
    a.set(1, 1);
    b.set(0, 0);
    b.set(1, 1);
    const auto modes = majority_values({a, b, a, b}, Assignment(2));
    EXPECT_EQ(modes[0], 0);
    EXPECT_EQ(modes[1], 1);
    Assignment ev(2);
    ev.set(1, 0);
    const auto partial = majority_values({a, a}, ev);
    EXPECT_EQ(partial[0], 1);
    EXPECT_FALSE(partial.contains(1));
}

TEST(EstimateModeValues, MatchesEnumerationArgmax) {
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        RandomModelSpec spec;
        spec.num_vars = 6;
        spec.unary_scale = 2.0;
        spec.pairwise_scale = 0.5;
        const auto m = random_model(spec, seed);
        const auto exact = exact_marginals(m, unfixed(6));
        const auto modes = estimate_mode_values(m, Assignment(6), 4000, GibbsConfig{200, 2, seed});
        for (int i = 0; i < 6; ++i) {
            const double p = exact[static_cast<std::size_t>(i)];
            if (std::max(p, 1 - p) < 0.6) continue;
            EXPECT_EQ(modes[i], p > 0.5 ? 1 : 0) << "seed " << seed << " var " << i;
            ++checked;
        }
    }
    EXPECT_GT(checked, 30);
}
