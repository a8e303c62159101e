// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Pass a criterion number to run only that one.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "l2c/eval.hpp"
#include "test_support.hpp"

using namespace l2c;
using l2c::testing::exact_marginals;
using l2c::testing::exhaustive_scan;
using l2c::testing::hand_score;
using l2c::testing::unfixed;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

GraphicalModel corpus_model(std::uint64_t seed) {
    RandomModelSpec spec;
    spec.num_vars = 8 + static_cast<int>(seed % 9);
    spec.zero_prob = seed % 4 == 0 ? 0.15 : 0.0;
    return random_model(spec, 1000 + seed);
}

std::shared_ptr<const ScorerNetwork> random_net(int n, std::uint64_t seed) {
    ScorerHyper h;
    h.num_vars = n;
    h.d = 8;
    h.heads = 2;
    h.attn_layers = 1;
    h.blocks = 1;
    h.hidden = 16;
    h.dropout = 0.0;
    return std::make_shared<ScorerNetwork>(init_network(h, seed));
}

/// Evidence on the variables outside a random query set of size lround(qr·n).
Assignment random_evidence(const GraphicalModel& m, double qr, std::mt19937_64& rng) {
    const int n = m.num_vars;
    const int q = static_cast<int>(std::lround(qr * n));
    std::vector<int> vars(static_cast<std::size_t>(n));
    std::iota(vars.begin(), vars.end(), 0);
    std::shuffle(vars.begin(), vars.end(), rng);
    Assignment ev(n);
    std::bernoulli_distribution coin(0.5);
    for (int k = q; k < n; ++k) ev.set(vars[static_cast<std::size_t>(k)], coin(rng) ? 1 : 0);
    return ev;
}

bool same_value(double a, double b, double tol) {
    if (std::isinf(a) || std::isinf(b)) return a == b;
    return std::abs(a - b) <= tol;
}

// 1. B&B at unlimited budget matches brute force for four branching policies.
Verdict solver_exactness() {
    const auto t0 = Clock::now();
    int mismatches = 0, checks = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto m = corpus_model(seed);
        const Assignment ev(m.num_vars);
        const auto exact = brute_force_mpe(m, ev);
        const auto scan = exhaustive_scan(m, unfixed(m.num_vars), seed);
        if (!same_value(exact.log_score, scan.value, 1e-9)) ++mismatches;  // oracle disagreement counts too
        const auto net = random_net(m.num_vars, seed);
        const std::vector<BranchPolicy> policies{strong_branching_policy(10), max_degree_branch_policy(),
                                                 nn_branch_policy(net, 0.5, true), nn_branch_policy(net, 0.5, false)};
        for (const auto& p : policies) {
            SolverOptions o;
            const auto rec = solve_mpe(m, ev, p, dfs_node_policy(), o);
            ++checks;
            const bool ok = same_value(rec.log_score, exact.log_score, 1e-9) &&
                            (std::isinf(exact.log_score) ? rec.status == SolveStatus::NoSolution
                                                     : rec.status == SolveStatus::Optimal &&
                                                           same_value(hand_score(m, l2c::testing::dense(*rec.assignment)), exact.log_score, 1e-9));
            if (!ok) ++mismatches;
            if (std::isfinite(exact.log_score) && std::isfinite(rec.log_score)) worst = std::max(worst, std::abs(rec.log_score - exact.log_score));
        }
    }
    const double t = seconds_since(t0);
    return {mismatches == 0 && t < 60.0, std::to_string(checks) + " solves, " + std::to_string(mismatches) +
                                             " mismatches, max |diff| " + fmt("%.2e", worst) + ", " + fmt("%.1f", t) + " s (limit 60 s)"};
}

// 2. Bucket elimination equals brute force in value and assignment.
Verdict bucket_elimination() {
    int bad = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto m = corpus_model(seed);
        const Assignment ev(m.num_vars);
        const auto exact = brute_force_mpe(m, ev);
        const auto be = bucket_elimination_mpe(m, ev, make_order(m, ev));
        if (!same_value(be.log_score, exact.log_score, 1e-9) || !(be.completion == exact.completion)) ++bad;
    }
    return {bad == 0, "200 models, " + std::to_string(bad) + " disagreements"};
}

// 3. Mini-bucket admissibility, and exactness once the i-bound covers the induced width.
Verdict bound_admissibility() {
    int violations = 0, inexact = 0;
    double min_slack = kPosInf;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto m = corpus_model(seed);
        const Assignment ev(m.num_vars);
        const double exact = brute_force_mpe(m, ev).log_score;
        const auto order = make_order(m, ev);
        for (int ib : {1, 2, 3, order.induced_width + 1}) {
            const double ub = mini_bucket_bound(m, ev, ib, order).upper_bound;
            if (std::isfinite(exact)) {
                min_slack = std::min(min_slack, ub - exact);
                if (ub < exact - 1e-9) ++violations;
            } else if (ub < exact) {
                ++violations;
            }
            if (ib == order.induced_width + 1 && !same_value(ub, exact, 1e-9)) ++inexact;
        }
    }
    return {violations == 0 && inexact == 0, "800 bounds, " + std::to_string(violations) + " below the optimum (min slack " +
                                                 fmt("%.2e", min_slack) + "), " + std::to_string(inexact) +
                                                 " inexact at width+1"};
}

// 4. Gibbs marginals within ±0.03 of enumeration.
Verdict gibbs_fidelity() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomModelSpec spec;
        spec.num_vars = 8;
        const auto m = random_model(spec, 5000 + seed);
        const auto exact = exact_marginals(m, unfixed(8));
        const auto samples = gibbs_sample(m, 50000, GibbsConfig{500, 2, 77 + seed});
        for (int v = 0; v < 8; ++v) {
            double ones = 0;
            for (const auto& s : samples) ones += s[v];
            worst = std::max(worst, std::abs(ones / samples.size() - exact[static_cast<std::size_t>(v)]));
        }
    }
    const double t = seconds_since(t0);
    return {worst <= 0.03 && t < 120.0, "max marginal error " + fmt("%.4f", worst) + " (limit 0.03), " + fmt("%.1f", t) + " s (limit 120 s)"};
}

// 5. Finite-difference gradient check over the composite loss.
Verdict gradient_check() {
    ScorerHyper h;
    h.num_vars = 6;
    h.d = 4;
    h.heads = 1;
    h.attn_layers = 2;
    h.blocks = 2;
    h.hidden = 8;
    h.dropout = 0.0;
    const auto net = init_network(h, 31);
    Assignment ev(6);
    ev.set(1, 1);
    ev.set(4, 0);
    ScorerInstance ins;
    ins.evidence = ev;
    ins.free = {0, 2, 3, 5};
    ins.labels = std::vector<int>{1, 0, 0, 1, 1, 0, 0, 1};
    ins.rank_mask = {0, 1, 4, 6, 7};  // pairs 2, 3 and 5 masked out
    ins.rank_p = {0.3, 0.1, 0.25, 0.2, 0.15};
    const auto r = grad_check(net, ins, 0.4);
    return {r.max_rel_error < 1e-4, "max relative error " + fmt("%.3e", r.max_rel_error) + " at " + r.worst_param + " (limit 1e-4)"};
}

// 6. Learning smoke on 500 records from one 12-variable model.
Dataset smoke_dataset;
ScorerNetwork smoke_net;

Verdict learning_smoke() {
    const auto t0 = Clock::now();
    RandomModelSpec spec;
    spec.num_vars = 12;
    const auto m = random_model(spec, 4242);
    CollectionConfig cc;
    cc.query_ratio = 0.75;
    cc.c_max = 3;
    cc.budget_s = 0.2;
    cc.num_samples = 500;
    cc.seed = 11;
    smoke_dataset = collect(m, cc);

    ScorerHyper h;
    h.num_vars = 12;
    auto net = init_network(h, 12);
    const auto val = instances_of(smoke_dataset, Split::Val);
    const auto tr = instances_of(smoke_dataset, Split::Train);
    TrainConfig tc;
    tc.max_epochs = 30;
    tc.seed = 5;
    const double before = mean_loss(net, val, tc.lambda_opt);
    const auto res = train(smoke_dataset, net, tc, {});
    smoke_net = res.net;
    const double after = res.best_val_loss;
    const double drop = (before - after) / before;
    const double acc = opt_accuracy(res.net, tr);
    const double t = seconds_since(t0);
    return {drop >= 0.30 && acc > 0.85 && t < 600.0,
            "val loss " + fmt("%.4f", before) + " -> " + fmt("%.4f", after) + " (drop " + fmt("%.1f", 100 * drop) +
                "%, need >= 30%), train opt accuracy " + fmt("%.1f", 100 * acc) + "% (need > 85%), " +
                std::to_string(res.history.size()) + " epochs, " + fmt("%.1f", t) + " s (limit 600 s)"};
}

// 7. Conditioning on a planted optimum never loses it.
Verdict conditioning_safety() {
    int runs = 0, lost = 0;
    std::mt19937_64 rng(707);
    for (int i = 0; i < 100; ++i) {
        RandomModelSpec spec;
        spec.num_vars = 8 + i % 5;
        const auto m = random_model(spec, 7000 + static_cast<std::uint64_t>(i));
        const auto ev = random_evidence(m, 0.75, rng);
        const auto exact = brute_force_mpe(m, ev);
        const auto f = planted_scorer(ev.merged(exact.completion));
        const int q = m.num_vars - ev.count();
        for (int d = 0; d <= depth_for_fraction(0.25, q); ++d) {
            for (Strategy s : {Strategy::Greedy, Strategy::Beam}) {
                ConditioningConfig cfg;
                cfg.strategy = s;
                cfg.d_max = d;
                cfg.beam_width = 2;
                const auto r = solve_with_conditioning(m, f, ev, cfg, 10);
                ++runs;
                if (!same_value(r.log_score, exact.log_score, 1e-9)) ++lost;
            }
        }
    }
    return {lost == 0, std::to_string(runs) + " conditioned solves over 100 instances, " + std::to_string(lost) + " lost the optimum"};
}

// 8. Beam width 1 equals greedy; beam score non-decreasing in width.
Verdict beam_coherence() {
    int differ = 0, non_monotone = 0;
    std::string example;
    std::mt19937_64 rng(808);
    for (int i = 0; i < 50; ++i) {
        RandomModelSpec spec;
        spec.num_vars = 16;
        const auto m = random_model(spec, 8000 + static_cast<std::uint64_t>(i));
        const auto ev = random_evidence(m, 0.75, rng);
        const auto f = l2c_opt_scorer(random_net(16, 900 + static_cast<std::uint64_t>(i)));
        ConditioningConfig g;
        g.tau = 0.0;
        g.d_max = depth_for_fraction(0.25, 16 - ev.count());
        const auto greedy = greedy_condition(m, f, ev, g);
        ConditioningConfig b = g;
        b.strategy = Strategy::Beam;
        b.beta = 1.0;
        double prev = -kPosInf;
        for (int w : {1, 2, 4, 8}) {
            b.beam_width = w;
            const auto r = beam_condition(m, f, ev, b);
            if (w == 1 && !(r.evidence == greedy.evidence && r.decisions.size() == greedy.decisions.size())) ++differ;
            if (r.score < prev - 1e-12) {
                ++non_monotone;
                if (example.empty()) {
                    example = " (e.g. instance " + std::to_string(i) + ": W=" + std::to_string(w) + " scores " +
                              fmt("%.6f", r.score) + " < " + fmt("%.6f", prev) + ")";
                }
            }
            prev = std::max(prev, r.score);
        }
    }
    return {differ == 0 && non_monotone == 0, "50 instances, W=1 vs greedy differences " + std::to_string(differ) +
                                                  ", width-monotonicity violations " + std::to_string(non_monotone) + example};
}

// 9. Trained rank scorer reduces node counts at 10% depth, i-bound 2.
Verdict node_reduction_direction() {
    const auto t0 = Clock::now();
    double weighted = 0.0;
    int total = 0, failed = 0;
    std::ostringstream per;
    for (int n : {20, 22, 24}) {
        RandomModelSpec spec;
        spec.num_vars = n;
        const auto m = random_model(spec, 9000 + static_cast<std::uint64_t>(n));
        CollectionConfig cc;
        cc.budget_s = 0.2;
        cc.i_bound = 2;
        cc.num_samples = 140;
        cc.seed = static_cast<std::uint64_t>(n);
        const auto ds = collect(m, cc);
        ScorerHyper h;
        h.num_vars = n;
        h.d = 16;
        h.hidden = 64;
        TrainConfig tc;
        tc.max_epochs = 20;
        tc.seed = 3;
        const auto net = std::make_shared<ScorerNetwork>(train(ds, init_network(h, 21), tc, {}).net);
        ExperimentGrid grid;
        grid.depths = {0.10};
        grid.budgets_s = {5.0};
        grid.strategies = {"l2c-rank"};
        grid.i_bound = 2;
        std::map<std::string, ScorerFactory> sc{{"l2c-rank", [net](const GraphicalModel&, const Assignment&) { return l2c_rank_scorer(net); }}};
        const auto res = run_grid(m, ds, grid, sc);
        const auto& row = res.rows.at(0);
        failed += row.failed;
        if (row.node_reduction) {
            weighted += *row.node_reduction * row.n;
            total += row.n;
        }
        per << " n=" << n << ": " << fmt("%.1f", row.node_reduction.value_or(0.0)) << "% over " << row.n << ";";
    }
    const double mean = total ? weighted / total : 0.0;
    return {total == 30 && mean > 0.0, "mean node reduction " + fmt("%.2f", mean) + "% over " + std::to_string(total) +
                                           " instances (" + std::to_string(failed) + " without solution);" + per.str() + " " +
                                           fmt("%.1f", seconds_since(t0)) + " s"};
}

// 10. Metric fixtures.
Verdict metric_fixtures() {
    const bool gap = avg_pct_gap({{-10.0, -9.0}}) == -10.0;
    const bool nodes = node_reduction({{1000, 500}}) == 50.0;
    // default LL first, L2C second: a better L2C log-likelihood gives a negative gap
    const bool better = method_gap({{-20.0, -18.0}}) == -10.0;
    const bool worse = method_gap({{-100.0, -110.0}}) == 10.0;
    const bool tie = method_gap({{-3.0, -3.0}}) == 0.0;
    return {gap && nodes && better && worse && tie, std::string("avg_pct_gap(-10,-9) ") + (gap ? "= -10" : "wrong") +
                                                        ", node_reduction(1000,500) " + (nodes ? "= 50" : "wrong") +
                                                        ", method gap signs " + (better && worse && tie ? "ok" : "wrong")};
}

// 11. File format round trips.
Verdict format_round_trips() {
    int uai_bad = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        RandomModelSpec spec;
        spec.num_vars = 3 + static_cast<int>(seed % 14);
        spec.zero_prob = seed % 3 == 0 ? 0.1 : 0.0;
        const auto m = random_model(spec, 11000 + seed);
        const std::string text = serialize_uai(m);
        const auto r = parse_uai(text);
        bool ok = r.num_vars == m.num_vars && r.factors.size() == m.factors.size() && serialize_uai(r) == text;
        for (std::size_t f = 0; ok && f < m.factors.size(); ++f) {
            ok = r.factors[f].scope == m.factors[f].scope;
            for (std::size_t k = 0; ok && k < m.factors[f].table.size(); ++k) {
                const double a = m.factors[f].table[k], b = r.factors[f].table[k];
                ok = std::isinf(a) ? b == a : std::abs(std::exp(a) - std::exp(b)) <= 1e-12 * std::exp(a);
            }
        }
        if (!ok) ++uai_bad;
    }

    if (smoke_dataset.records.empty()) {
        RandomModelSpec spec;
        spec.num_vars = 10;
        CollectionConfig cc;
        cc.num_samples = 60;
        cc.budget_s = 0.2;
        smoke_dataset = collect(random_model(spec, 4243), cc);
        ScorerHyper h;
        h.num_vars = 10;
        smoke_net = init_network(h, 4);
    }
    const std::string dtext = serialize_dataset(smoke_dataset);
    const auto back = parse_dataset(dtext);
    const bool ds_ok = same_content(back, smoke_dataset) && serialize_dataset(back) == dtext;
    const bool ck_ok = checkpoint_from_json(json::parse(checkpoint_to_json(smoke_net).dump())) == smoke_net;
    return {uai_bad == 0 && ds_ok && ck_ok, "UAI 30 files, " + std::to_string(uai_bad) + " failed; dataset (" +
                                                std::to_string(smoke_dataset.records.size()) + " records) " +
                                                (ds_ok ? "lossless" : "LOSSY") + "; checkpoint " + (ck_ok ? "lossless" : "LOSSY")};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"solver exactness", solver_exactness},
        {"bucket elimination vs brute force", bucket_elimination},
        {"bound admissibility", bound_admissibility},
        {"gibbs fidelity", gibbs_fidelity},
        {"gradient correctness", gradient_check},
        {"learning smoke", learning_smoke},
        {"conditioning safety", conditioning_safety},
        {"beam/greedy coherence", beam_coherence},
        {"directional node reduction", node_reduction_direction},
        {"metric fixtures", metric_fixtures},
        {"format round trips", format_round_trips},
    };
    const int only = argc > 1 ? std::atoi(argv[1]) : 0;
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only && static_cast<int>(i) + 1 != only) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        if (!v.pass) ++failures;
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first << "): " << v.detail
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
