#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "l2c/dataset.hpp"
#include "test_support.hpp"

using namespace l2c;

namespace {

CollectionConfig small_config(int samples, std::uint64_t seed) {
    CollectionConfig cfg;
    cfg.num_samples = samples;
    cfg.seed = seed;
    cfg.c_max = 2;
    cfg.budget_s = 5.0;
    cfg.stat_weights = {0.0, 0.5, 0.5};
    cfg.gibbs = {20, 2, 0};
    return cfg;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("l2c_" + name)).string();
}

SolveRecord fake_record(double time, std::int64_t nodes, double score) {
    SolveRecord r;
    r.wall_time = time;
    r.nodes_explored = nodes;
    r.log_score = score;
    r.status = score == kNegInf ? SolveStatus::NoSolution : SolveStatus::Optimal;
    if (score != kNegInf) r.assignment = Assignment(2).with(0, 0).with(1, 1);
    r.bound_trace = {{0, 3.0}, {nodes, score}};
    return r;
}

} // namespace

TEST(CompositeStat, SingleCandidateIsEpsilon) {
    const auto t = composite_stats({RawStats{0.3, 40, 1.5}}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    ASSERT_EQ(t.size(), 1u);
    EXPECT_NEAR(t[0], kStatEpsilon, 1e-18);
}

TEST(CompositeStat, DominatingPairMapsToEpsilonAndOne) {
    const auto t = composite_stats({RawStats{0.1, 10, 0.0}, RawStats{0.2, 30, 2.0}}, {0.2, 0.3, 0.5});
    EXPECT_NEAR(t[0], kStatEpsilon, 1e-15);
    EXPECT_NEAR(t[1], 1.0, 1e-15);
}

TEST(CompositeStat, ThreeCandidatesByHand) {
    const std::vector<RawStats> s{{0.5, 100, 0.0}, {1.5, 20, 4.0}, {1.0, 60, 1.0}};
    const std::array<double, 3> w{0.2, 0.5, 0.3};
    const auto t = composite_stats(s, w);
    const double e = 1e-6;
    auto lin = [&](double x, double lo, double hi) { return e + (1 - e) * (x - lo) / (hi - lo); };
    const double expect[3] = {
        0.2 * lin(0.5, 0.5, 1.5) + 0.5 * lin(100, 20, 100) + 0.3 * lin(0.0, 0.0, 4.0),
        0.2 * lin(1.5, 0.5, 1.5) + 0.5 * lin(20, 20, 100) + 0.3 * lin(4.0, 0.0, 4.0),
        0.2 * lin(1.0, 0.5, 1.5) + 0.5 * lin(60, 20, 100) + 0.3 * lin(1.0, 0.0, 4.0),
    };
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(t[static_cast<std::size_t>(i)], expect[i], 1e-15);
}

TEST(CompositeStat, RegretFromRecords) {
    const auto base = fake_record(0.1, 10, -2.0);
    const auto worse = raw_stats(fake_record(0.1, 5, -3.5), base);
    EXPECT_DOUBLE_EQ(worse.regret, 1.5);
    EXPECT_EQ(raw_stats(fake_record(0.1, 5, -1.0), base).regret, 0.0);
    EXPECT_EQ(raw_stats(fake_record(0.1, 5, kNegInf), base).regret, kPosInf);
    const auto t = composite_stats(base, {fake_record(0.1, 5, -2.0), fake_record(0.1, 5, kNegInf)}, {0, 0, 1});
    EXPECT_NEAR(t[0], kStatEpsilon, 1e-18);
    EXPECT_EQ(t[1], 1.0);
}

TEST(RankTargets, ClosedFormSoftmax) {
    const auto p = build_rank_targets({0.5, 1.0}, 1.0);
    const double e2 = std::exp(2.0);
    const double e1 = std::exp(1.0);
    EXPECT_NEAR(p[0], e2 / (e2 + e1), 1e-15);
    EXPECT_NEAR(p[0], 0.7311, 1e-4);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
}

TEST(RankTargets, UniformCasesAndOrdering) {
    for (double x : build_rank_targets({0.3, 0.3, 0.3, 0.3})) EXPECT_NEAR(x, 0.25, 1e-15);
    for (double x : build_rank_targets({0.1, 0.5, 1.0}, 1e6)) EXPECT_NEAR(x, 1.0 / 3, 1e-4);
    const std::vector<double> t{0.9, 0.2, 0.5, 0.7, 0.3};
    const auto p = build_rank_targets(t, 0.7);
    double sum = 0;
    for (double x : p) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = 0; j < t.size(); ++j) {
            if (t[i] < t[j]) {
                EXPECT_GT(p[i], p[j]);
            }
        }
    }
    // permutation equivariance
    const auto q = build_rank_targets({0.3, 0.7, 0.5, 0.2, 0.9}, 0.7);
    EXPECT_EQ(q[0], p[4]);
    EXPECT_EQ(q[4], p[0]);
    EXPECT_THROW(build_rank_targets({0.0}), ValidationError);
}

TEST(Collect, EmptyAndConfigErrors) {
    const auto m = l2c::testing::small_random(8, 1);
    EXPECT_TRUE(collect(m, small_config(0, 0)).records.empty());
    auto bad = small_config(1, 0);
    bad.query_ratio = 1.0;
    EXPECT_THROW(collect(m, bad), ValidationError);
    bad = small_config(1, 0);
    bad.c_max = 7;  // ceil(0.75 * 8) = 6
    EXPECT_THROW(collect(m, bad), ValidationError);
    bad = small_config(1, 0);
    bad.stat_weights = {0.5, 0.5, 0.5};
    EXPECT_THROW(collect(m, bad), ValidationError);
    EXPECT_EQ(resolve_c_max(0.10, 90), 9);
}

TEST(Collect, RecordInvariants) {
    const auto m = l2c::testing::small_random(8, 3);
    const auto ds = collect(m, small_config(30, 11));
    ASSERT_EQ(ds.records.size(), 30u);
    EXPECT_EQ(ds.num_vars, 8);
    for (const auto& r : ds.records) {
        EXPECT_EQ(r.evidence.count(), 2);  // |Q| = 6
        const auto free = r.evidence.free_vars();
        EXPECT_EQ(free.size(), 6u);
        EXPECT_EQ(r.conditioned.size(), 4u);
        EXPECT_EQ(r.rank_targets.size(), r.conditioned.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < r.conditioned.size(); ++i) {
            const auto& c = r.conditioned[i];
            EXPECT_FALSE(r.evidence.contains(c.key.var));
            EXPECT_EQ(r.rank_targets[i].first, c.key);
            EXPECT_EQ(c.surrogate, c.rec.status != SolveStatus::Optimal);
            EXPECT_EQ(c.rec.log_score, brute_force_mpe(m, r.evidence.with(c.key.var, c.key.value)).log_score);
            sum += r.rank_targets[i].second;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        EXPECT_TRUE(std::is_sorted(r.conditioned.begin(), r.conditioned.end(),
                                   [](const auto& a, const auto& b) { return a.key < b.key; }));
        EXPECT_EQ(r.base.log_score, brute_force_mpe(m, r.evidence).log_score);
    }
}

TEST(Collect, DeterministicIgnoringWallTime) {
    const auto m = l2c::testing::small_random(9, 5);
    auto cfg = small_config(12, 99);
    const auto a = collect(m, cfg);
    const auto b = collect(m, cfg);
    EXPECT_TRUE(same_content(a, b));
    cfg.threads = 3;
    EXPECT_TRUE(same_content(a, collect(m, cfg)));
    cfg.seed = 100;
    EXPECT_FALSE(same_content(a, collect(m, cfg)));
}

TEST(Splits, ProportionsAndPartition) {
    EXPECT_EQ(split_sizes(2), (std::pair<int, int>{0, 0}));
    EXPECT_EQ(split_sizes(3), (std::pair<int, int>{1, 1}));
    EXPECT_EQ(split_sizes(14000), (std::pair<int, int>{1000, 1000}));
    Dataset ds;
    ds.records.resize(140);
    assign_splits(ds, 4);
    EXPECT_EQ(ds.split(Split::Train).size(), 120u);
    EXPECT_EQ(ds.split(Split::Val).size(), 10u);
    EXPECT_EQ(ds.split(Split::Test).size(), 10u);
}

TEST(DatasetIo, EmptyRoundTrip) {
    Dataset ds;
    ds.model_name = "empty";
    ds.num_vars = 4;
    const auto back = parse_dataset(serialize_dataset(ds));
    EXPECT_TRUE(same_content(ds, back));
}

TEST(DatasetIo, NoSolutionRecordKeepsAbsentAssignment) {
    Dataset ds;
    ds.model_name = "m";
    ds.num_vars = 2;
    TrainingRecord r;
    r.evidence = Assignment(2).with(1, 1);
    r.base = fake_record(0.2, 3, kNegInf);
    r.base.bound_trace = {{0, kPosInf}, {3, kNegInf}};
    ds.records.push_back(r);
    const auto back = parse_dataset(serialize_dataset(ds));
    ASSERT_EQ(back.records.size(), 1u);
    EXPECT_FALSE(back.records[0].base.assignment);
    EXPECT_EQ(back.records[0].base.log_score, kNegInf);
    EXPECT_EQ(back.records[0].base.bound_trace[0].second, kPosInf);
    EXPECT_TRUE(same_content(ds, back));
}

TEST(DatasetIo, CollectedRoundTripIsLossless) {
    const auto m = l2c::testing::small_random(8, 21);
    auto cfg = small_config(100, 3);
    cfg.stat_weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto ds = collect(m, cfg);
    const auto path = temp_path("dataset.jsonl");
    save_dataset(ds, path);
    const auto back = load_dataset(path);
    std::filesystem::remove(path);
    ASSERT_EQ(back.records.size(), 100u);
    EXPECT_TRUE(same_content(ds, back));
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        EXPECT_EQ(ds.records[i].base.wall_time, back.records[i].base.wall_time);
    }
}

TEST(DatasetIo, RejectsBadFiles) {
    EXPECT_THROW(parse_dataset(""), ValidationError);
    EXPECT_THROW(parse_dataset(R"({"format":"l2c-dataset","version":99,"model":"m","num_vars":2})"), ValidationError);
    const std::string header = R"({"format":"l2c-dataset","version":1,"model":"m","num_vars":2})";
    EXPECT_THROW(parse_dataset(header + "\n{\"seed\":1,\"evidence\":[]"), ValidationError);
    EXPECT_THROW(parse_dataset(header + "\n{\"seed\":1}"), ValidationError);
    EXPECT_THROW(load_dataset(temp_path("does_not_exist.jsonl")), MissingArtifactError);
}
