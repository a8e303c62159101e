#include <gtest/gtest.h>

#include <chrono>
#include <sstream>
#include <thread>

#include "l2c/eval.hpp"
#include "test_support.hpp"

using namespace l2c;
using l2c::testing::small_random;

TEST(Metrics, GapFixtures) {
    EXPECT_NEAR(avg_pct_gap({{-10.0, -9.0}}), -10.0, 1e-12);
    EXPECT_NEAR(avg_pct_gap({{-100.0, -110.0}}), 10.0, 1e-12);
    EXPECT_NEAR(avg_pct_gap({{-10.0, -9.0}, {-100.0, -110.0}}), 0.0, 1e-12);
    EXPECT_NEAR(avg_pct_gap({{5.0, 5.0}}), 0.0, 0.0);
    EXPECT_NEAR(avg_pct_gap({{4.0, 2.0}}), 50.0, 1e-12);
    EXPECT_NEAR(method_gap({{-20.0, -18.0}}), -10.0, 1e-12);
}

TEST(Metrics, GapRejectsBadInput) {
    EXPECT_THROW(avg_pct_gap({}), ValidationError);
    EXPECT_THROW(avg_pct_gap({{0.0, -1.0}}), ValidationError);
    EXPECT_THROW(avg_pct_gap({{kNegInf, -1.0}}), ValidationError);
    EXPECT_THROW(avg_pct_gap({{-1.0, kNegInf}}), ValidationError);
}

TEST(Metrics, NodeReductionFixtures) {
    EXPECT_NEAR(node_reduction({{1000, 500}}), 50.0, 1e-12);
    EXPECT_NEAR(node_reduction({{100, 150}}), -50.0, 1e-12);
    EXPECT_NEAR(node_reduction({{1000, 500}, {100, 150}}), 0.0, 1e-12);
    EXPECT_NEAR(node_reduction({{7, 0}}), 100.0, 1e-12);
    EXPECT_THROW(node_reduction({{0, 3}}), ValidationError);
    EXPECT_THROW(node_reduction({}), ValidationError);
}

TEST(Metrics, WinCount) {
    std::vector<WinCell> cells{
        {"a", 0.1, {-1.0, -2.0}, {-1.5, -2.0}},  // win
        {"a", 0.1, {-1.0}, {-1.0}},              // tie is not a win
        {"a", 0.3, {-3.0}, {-1.0}},
        {"b", 0.1, {-0.5}, {-1.0}},
    };
    const auto w = win_count(cells);
    EXPECT_EQ(w.at("a").at(0.1), 1);
    EXPECT_EQ(w.at("a").at(0.3), 0);
    EXPECT_EQ(w.at("b").at(0.1), 1);
    EXPECT_EQ(total_wins(w.at("a")), 1);
    EXPECT_THROW(win_count({{"a", 0.1, {-1.0}, {}}}), ValidationError);
}

TEST(Metrics, SampleStd) {
    EXPECT_DOUBLE_EQ(sample_std({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0}), std::sqrt(32.0 / 7.0));
    EXPECT_EQ(sample_std({3.0}), 0.0);
}

TEST(DecisionTime, SleepStubsOrderedByDuration) {
    const auto m = small_random(6, 3);
    auto sleeper = [](int ms) {
        return ScoringFunction{"sleep", [ms](const GraphicalModel&, const Assignment&) {
                                   std::this_thread::sleep_for(std::chrono::milliseconds(ms));
                                   return std::vector<CandidateScore>{};
                               }};
    };
    const std::vector<Assignment> inst(2, Assignment(6));
    const auto fast = per_decision_time(sleeper(10), m, inst, 3);
    const auto slow = per_decision_time(sleeper(100), m, inst, 3);
    ASSERT_TRUE(fast && slow);
    EXPECT_EQ(fast->calls, 6);
    EXPECT_GE(fast->mean_s, 0.010);
    EXPECT_NEAR(slow->mean_s / fast->mean_s, 10.0, 2.0);
}

TEST(DecisionTime, TimeoutGivesAbsentCell) {
    const auto m = small_random(6, 3);
    ScoringFunction f{"sleep", [](const GraphicalModel&, const Assignment&) {
                          std::this_thread::sleep_for(std::chrono::milliseconds(30));
                          return std::vector<CandidateScore>{};
                      }};
    EXPECT_FALSE(per_decision_time(f, m, {Assignment(6)}, 1, 0.01).has_value());
}

namespace {

std::vector<Assignment> some_instances(int n, int count) {
    std::vector<Assignment> out;
    for (int k = 0; k < count; ++k) {
        Assignment a(n);
        a.set(k % n, k % 2);
        out.push_back(a);
    }
    return out;
}

} // namespace

TEST(Grid, AxesValidated) {
    const auto m = small_random(8, 1);
    ExperimentGrid g;
    g.strategies = {"strong"};
    std::map<std::string, ScorerFactory> sc{{"strong", [](const GraphicalModel&, const Assignment&) { return strong_branching_scorer(4); }}};
    g.depths.clear();
    EXPECT_THROW(run_grid(m, some_instances(8, 2), g, sc), ValidationError);
    g.depths = {0.25};
    g.budgets_s.clear();
    EXPECT_THROW(run_grid(m, some_instances(8, 2), g, sc), ValidationError);
    g.budgets_s = {1.0};
    g.strategies = {"l2c-rank"};
    EXPECT_THROW(run_grid(m, some_instances(8, 2), g, sc), MissingArtifactError);
}

TEST(Grid, OracleRowsAndCsv) {
    const auto m = small_random(10, 5);
    ExperimentGrid g;
    g.depths = {0.0, 0.25};
    g.budgets_s = {5.0};
    g.strategies = {"oracle", "strong"};
    g.i_bound = 4;
    std::map<std::string, ScorerFactory> sc{
        {"oracle", [](const GraphicalModel& mm, const Assignment& ev) { return oracle_scorer(mm, ev); }},
        {"strong", [](const GraphicalModel&, const Assignment&) { return strong_branching_scorer(4); }}};
    const auto inst = some_instances(10, 4);
    const auto res = run_grid(m, inst, g, sc);
    ASSERT_EQ(res.rows.size(), 4u);
    for (const auto& r : res.rows) {
        EXPECT_EQ(r.n + r.failed, 4);
        if (r.strategy == "oracle" || r.depth == 0.0) {
            // exact solves at a generous budget: conditioning on the optimum loses nothing
            ASSERT_TRUE(r.avg_pct_gap.has_value());
            EXPECT_NEAR(*r.avg_pct_gap, 0.0, 1e-9);
        }
        if (r.depth > 0.0) {
            EXPECT_TRUE(r.mean_decision_s.has_value());
        }
    }
    const std::string csv = grid_csv(res);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "model,strategy,depth,budget_ms,n,avg_pct_gap,node_reduction,wins,mean_decision_s,std_decision_s");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9);
    }
    EXPECT_EQ(rows, 4);
    const auto j = grid_json(res);
    EXPECT_EQ(j.at("rows").size(), 4u);
    EXPECT_TRUE(j.at("wins").contains("oracle"));
}

TEST(Grid, NoSolutionInstancesCountedSeparately) {
    GraphicalModel m;
    m.name = "dead";
    m.num_vars = 3;
    m.factors.push_back({{0, 1}, {kNegInf, kNegInf, kNegInf, 0.5}});
    ExperimentGrid g;
    g.depths = {0.0};
    g.budgets_s = {1.0};
    g.strategies = {"strong"};
    g.i_bound = 2;
    std::map<std::string, ScorerFactory> sc{{"strong", [](const GraphicalModel&, const Assignment&) { return strong_branching_scorer(2); }}};
    Assignment dead(3);
    dead.set(0, 0);
    Assignment live(3);
    live.set(2, 1);
    const auto res = run_grid(m, {dead, live}, g, sc);
    ASSERT_EQ(res.rows.size(), 1u);
    EXPECT_EQ(res.rows[0].failed, 1);
    EXPECT_EQ(res.rows[0].n, 1);
}

TEST(Grid, DepthZeroGapIsZero) {
    const auto m = small_random(9, 12);
    ExperimentGrid g;
    g.depths = {0.0};
    g.budgets_s = {1.0};
    g.strategies = {"max-degree"};
    g.i_bound = 3;
    std::map<std::string, ScorerFactory> sc{{"max-degree", [](const GraphicalModel&, const Assignment&) { return max_degree_scorer(); }}};
    const auto res = run_grid(m, some_instances(9, 5), g, sc);
    ASSERT_EQ(res.rows.size(), 1u);
    ASSERT_TRUE(res.rows[0].avg_pct_gap.has_value());
    EXPECT_EQ(*res.rows[0].avg_pct_gap, 0.0);
    EXPECT_EQ(res.rows[0].wins, 0);
}

TEST(Grid, OracleGapsNonPositiveOnTwoByTwo) {
    for (std::uint64_t seed : {2u, 3u, 4u}) {
        const auto m = small_random(8, seed);
        ExperimentGrid g;
        g.depths = {0.1, 0.25};
        g.budgets_s = {0.1, 0.3};
        g.strategies = {"oracle"};
        g.i_bound = 3;
        std::map<std::string, ScorerFactory> sc{
            {"oracle", [](const GraphicalModel& mm, const Assignment& ev) { return oracle_scorer(mm, ev); }}};
        const auto res = run_grid(m, some_instances(8, 6), g, sc);
        ASSERT_EQ(res.rows.size(), 4u);
        for (const auto& r : res.rows) {
            ASSERT_TRUE(r.avg_pct_gap.has_value());
            EXPECT_LE(*r.avg_pct_gap, 1e-9);
        }
    }
}

TEST(Metrics, ScaleAndOrderInvariance) {
    const std::vector<std::pair<double, double>> a{{-3.0, -4.0}, {-10.0, -9.5}, {-7.0, -7.0}};
    auto scaled = a;
    for (auto& [s, d] : scaled) {
        s *= 2.5;
        d *= 2.5;
    }
    auto rev = a;
    std::reverse(rev.begin(), rev.end());
    EXPECT_NEAR(avg_pct_gap(a), avg_pct_gap(scaled), 1e-12);
    EXPECT_NEAR(avg_pct_gap(a), avg_pct_gap(rev), 1e-12);
    // improving the compared score lowers the gap; fewer nodes raises the reduction
    EXPECT_LT(avg_pct_gap({{-3.0, -3.5}}), avg_pct_gap({{-3.0, -4.0}}));
    EXPECT_GT(node_reduction({{100, 40}}), node_reduction({{100, 41}}));
}
