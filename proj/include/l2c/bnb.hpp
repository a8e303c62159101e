#pragma once

// Anytime depth-first branch and bound for MPE with pluggable branching and
// node-selection policies, plus the two classical baselines.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "l2c/bounds.hpp"
#include "l2c/pgm.hpp"
#include "l2c/sampling.hpp"

namespace l2c {

enum class SolveStatus { Optimal, FeasibleTimeout, NoSolution };

inline std::string to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::FeasibleTimeout: return "feasible_timeout";
    case SolveStatus::NoSolution: return "no_solution";
    }
    return "unknown";
}

inline SolveStatus parse_status(const std::string& s) {
    if (s == "optimal") return SolveStatus::Optimal;
    if (s == "feasible_timeout") return SolveStatus::FeasibleTimeout;
    if (s == "no_solution") return SolveStatus::NoSolution;
    throw ValidationError("unknown solve status '" + s + "'");
}

struct SolveRecord {
    std::optional<Assignment> assignment;  // full assignment, evidence included
    double log_score = kNegInf;
    double wall_time = 0.0;  // seconds
    std::int64_t nodes_explored = 0;
    SolveStatus status = SolveStatus::NoSolution;
    std::vector<std::pair<std::int64_t, double>> bound_trace;  // (nodes, global upper bound)

    double root_bound() const { return bound_trace.empty() ? kPosInf : bound_trace.front().second; }
    double final_bound() const { return bound_trace.empty() ? kPosInf : bound_trace.back().second; }

    /// Equality of everything except wall_time.
    bool same_outcome(const SolveRecord& o) const {
        auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
        if (assignment != o.assignment || !same(log_score, o.log_score) || nodes_explored != o.nodes_explored ||
            status != o.status || bound_trace.size() != o.bound_trace.size()) {
            return false;
        }
        for (std::size_t i = 0; i < bound_trace.size(); ++i) {
            if (bound_trace[i].first != o.bound_trace[i].first ||
                !same(bound_trace[i].second, o.bound_trace[i].second)) {
                return false;
            }
        }
        return true;
    }
};

struct BranchChoice {
    int var = -1;
    int value = 0;  // explored first
    bool operator==(const BranchChoice&) const = default;
};

/// Ranks free variables at a node. The solver branches on the first entry.
struct BranchPolicy {
    std::string name;
    std::function<std::vector<BranchChoice>(const GraphicalModel&, const Assignment&, const std::vector<int>&)> choose;
};

struct NodeDescriptor {
    int depth = 0;
    const Assignment* parent_evidence = nullptr;
    const Assignment* evidence = nullptr;  // parent evidence plus (var = value)
    int var = -1;
    int value = 0;
    double bound = kPosInf;
    double parent_priority = 0.0;
};

/// Orders siblings (higher priority is expanded first) and may supply a
/// starting incumbent.
struct NodePolicy {
    std::string name;
    std::function<double(const NodeDescriptor&)> priority;
    std::function<std::optional<Assignment>(const GraphicalModel&, const Assignment&)> warm_start;
};

struct SolverOptions {
    double budget_s = kPosInf;
    int i_bound = 10;
    OrderHeuristic order = OrderHeuristic::MinFill;
    bool pruning = true;
    int incumbent_samples = 16;  // Gibbs samples for the initial incumbent; 0 disables it
    GibbsConfig incumbent_gibbs{20, 1, 0x5eed};
    int timeout_check_interval = 64;
    std::function<void(std::int64_t nodes, double score)> on_incumbent;
    std::function<void(const Assignment& evidence, const std::vector<BranchChoice>&)> on_branch;
};

inline double prune_slack(double incumbent) { return 1e-12 * std::max(1.0, std::abs(incumbent)); }

/// Policy that keeps the branch policy's value order among siblings.
inline NodePolicy dfs_node_policy() {
    return {"dfs", [](const NodeDescriptor&) { return 0.0; }, nullptr};
}

namespace detail {

/// Degree of each free variable counting only free neighbours.
inline std::vector<int> free_degrees(const PrimalGraph& g, const Assignment& evidence) {
    std::vector<int> deg(static_cast<std::size_t>(g.num_vertices()), 0);
    for (int v = 0; v < g.num_vertices(); ++v) {
        if (evidence.contains(v)) continue;
        for (int u : g.adjacency[static_cast<std::size_t>(v)]) {
            if (!evidence.contains(u)) ++deg[static_cast<std::size_t>(v)];
        }
    }
    return deg;
}

inline std::vector<int> by_degree(const std::vector<int>& free, const std::vector<int>& deg) {
    std::vector<int> out = free;
    std::stable_sort(out.begin(), out.end(), [&](int a, int b) {
        if (deg[static_cast<std::size_t>(a)] != deg[static_cast<std::size_t>(b)]) {
            return deg[static_cast<std::size_t>(a)] > deg[static_cast<std::size_t>(b)];
        }
        return a < b;
    });
    return out;
}

} // namespace detail

struct StrongBranchScore {
    double score = 0.0;  // parent bound minus the better child bound
    int best_value = 0;
    double parent_bound = kPosInf;
    double child_bounds[2] = {kPosInf, kPosInf};
};

/// One-step look-ahead on `var` using mini-bucket bounds along `order`.
inline StrongBranchScore strong_branching_score(const GraphicalModel& model, const Assignment& evidence, int var,
                                                int i_bound, const EliminationOrder& order,
                                                std::optional<double> parent_bound = std::nullopt) {
    if (evidence.contains(var)) throw ValidationError("strong_branching_score: variable is not free");
    StrongBranchScore r;
    r.parent_bound = parent_bound ? *parent_bound : mini_bucket_bound(model, evidence, i_bound, order).upper_bound;
    for (int val = 0; val <= 1; ++val) {
        r.child_bounds[val] = mini_bucket_bound(model, evidence.with(var, val), i_bound, order).upper_bound;
    }
    const double best = std::max(r.child_bounds[0], r.child_bounds[1]);
    r.best_value = r.child_bounds[1] > r.child_bounds[0] ? 1 : 0;
    r.score = r.parent_bound - best;
    if (std::isnan(r.score)) r.score = 0.0;
    return r;
}

inline StrongBranchScore strong_branching_score(const GraphicalModel& model, const Assignment& evidence, int var,
                                                int i_bound) {
    return strong_branching_score(model, evidence, var, i_bound, make_order(model, evidence));
}

/// Strong branching over the free variables; `max_candidates` > 0 restricts
/// the look-ahead to that many highest-degree variables.
inline BranchPolicy strong_branching_policy(int i_bound, int max_candidates = 0) {
    BranchPolicy p;
    p.name = max_candidates > 0 ? "strong-lite" : "strong";
    p.choose = [i_bound, max_candidates](const GraphicalModel& m, const Assignment& ev,
                                         const std::vector<int>& free) {
        const PrimalGraph g = primal_graph(m);
        std::vector<int> cands = free;
        if (max_candidates > 0 && static_cast<int>(cands.size()) > max_candidates) {
            cands = detail::by_degree(free, detail::free_degrees(g, ev));
            cands.resize(static_cast<std::size_t>(max_candidates));
            std::sort(cands.begin(), cands.end());
        }
        const EliminationOrder order = min_fill_order(g, free);
        const double parent = mini_bucket_bound(m, ev, i_bound, order).upper_bound;
        std::vector<std::pair<double, BranchChoice>> scored;
        for (int v : cands) {
            const auto s = strong_branching_score(m, ev, v, i_bound, order, parent);
            scored.push_back({s.score, {v, s.best_value}});
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<BranchChoice> out;
        for (const auto& [s, c] : scored) out.push_back(c);
        return out;
    };
    return p;
}

/// Free variables by descending degree (after removing evidence), each paired
/// with its Gibbs-estimated most likely value.
inline std::vector<BranchChoice> max_degree_policy(const GraphicalModel& model, const Assignment& evidence,
                                                   const GibbsConfig& gibbs, int num_samples = 100) {
    const auto free = evidence.free_vars();
    const auto ranked = detail::by_degree(free, detail::free_degrees(primal_graph(model), evidence));
    const Assignment modes = estimate_mode_values(model, evidence, num_samples, gibbs);
    std::vector<BranchChoice> out;
    for (int v : ranked) out.push_back({v, modes[v]});
    return out;
}

inline BranchPolicy max_degree_branch_policy(GibbsConfig gibbs = {50, 1, 7}, int num_samples = 32) {
    return {"max-degree", [gibbs, num_samples](const GraphicalModel& m, const Assignment& ev, const std::vector<int>&) {
                return max_degree_policy(m, ev, gibbs, num_samples);
            }};
}

/// Depth-first branch and bound. Children whose mini-bucket bound falls below
/// the incumbent (by more than a 1e-12 relative slack) are pruned; ties are kept.
inline SolveRecord solve_mpe(const GraphicalModel& model, const Assignment& evidence, const BranchPolicy& branch,
                             const NodePolicy& node_sel, const SolverOptions& opts) {
    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };
    if (!(opts.budget_s > 0.0)) throw ValidationError("solve_mpe: budget must be positive");
    if (evidence.num_vars() != model.num_vars) throw ValidationError("solve_mpe: evidence size mismatch");

    SolveRecord rec;
    const EliminationOrder order = make_order(model, evidence, opts.order);
    auto bound_of = [&](const Assignment& ev) {
        return opts.pruning ? mini_bucket_bound(model, ev, opts.i_bound, order).upper_bound : kPosInf;
    };

    double incumbent = kNegInf;
    std::optional<Assignment> best;
    auto offer = [&](const Assignment& full, std::int64_t nodes) {
        const double s = log_score(model, full);
        if (s > incumbent) {
            incumbent = s;
            best = full;
            if (opts.on_incumbent) opts.on_incumbent(nodes, s);
        }
    };

    const bool has_warm = static_cast<bool>(node_sel.warm_start);
    std::optional<Assignment> warm;
    if (has_warm) {
        warm = node_sel.warm_start(model, evidence);
        if (warm && (!warm->complete() || log_score(model, *warm) == kNegInf)) warm.reset();
    }
    if (warm) {
        offer(*warm, 0);
    } else if (opts.incumbent_samples > 0 && evidence.count() < model.num_vars) {
        offer(evidence.merged(estimate_mode_values(model, evidence, opts.incumbent_samples, opts.incumbent_gibbs)),
              0);
    }

    struct Node {
        Assignment evidence;
        double bound;
        int depth;
        double priority;
    };
    std::vector<Node> stack;
    const double root_bound = bound_of(evidence);
    rec.bound_trace.emplace_back(0, root_bound);
    stack.push_back({evidence, root_bound, 0, 0.0});

    auto record_bound = [&](std::int64_t nodes) {
        double gb = incumbent;
        for (const auto& n : stack) gb = std::max(gb, n.bound);
        if (gb < rec.bound_trace.back().second) rec.bound_trace.emplace_back(nodes, gb);
    };

    bool timed_out = false;
    std::int64_t nodes = 0;
    while (!stack.empty()) {
        if (nodes > 0 && nodes % opts.timeout_check_interval == 0 && elapsed() > opts.budget_s) {
            timed_out = true;
            break;
        }
        Node node = std::move(stack.back());
        stack.pop_back();
        ++nodes;
        if (node.bound == kNegInf ||
            (incumbent > kNegInf && node.bound < incumbent - prune_slack(incumbent))) {
            record_bound(nodes);
            continue;
        }
        const std::vector<int> free = node.evidence.free_vars();
        if (free.empty()) {
            offer(node.evidence, nodes);
            record_bound(nodes);
            continue;
        }
        const std::vector<BranchChoice> choices = branch.choose(model, node.evidence, free);
        if (opts.on_branch) opts.on_branch(node.evidence, choices);
        if (choices.empty() || choices.front().var < 0 || choices.front().var >= model.num_vars ||
            node.evidence.contains(choices.front().var)) {
            throw ValidationError("branch policy '" + branch.name + "' returned no free variable");
        }
        const BranchChoice pick = choices.front();
        std::vector<Node> children;
        for (int val : {pick.value, 1 - pick.value}) {
            Assignment ev = node.evidence.with(pick.var, val);
            const double b = std::min(bound_of(ev), node.bound);
            if (b == kNegInf) continue;
            if (incumbent > kNegInf && b < incumbent - prune_slack(incumbent)) continue;
            NodeDescriptor d{node.depth + 1, &node.evidence, &ev, pick.var, val, b, node.priority};
            const double pr = node_sel.priority ? node_sel.priority(d) : 0.0;
            children.push_back({std::move(ev), b, node.depth + 1, pr});
        }
        std::stable_sort(children.begin(), children.end(),
                         [](const Node& a, const Node& b) { return a.priority > b.priority; });
        for (auto it = children.rbegin(); it != children.rend(); ++it) stack.push_back(std::move(*it));
        record_bound(nodes);
    }

    rec.nodes_explored = nodes;
    rec.assignment = best;
    rec.log_score = incumbent;
    if (timed_out) {
        rec.status = SolveStatus::FeasibleTimeout;
    } else {
        rec.status = best ? SolveStatus::Optimal : SolveStatus::NoSolution;
        if (incumbent < rec.bound_trace.back().second) rec.bound_trace.emplace_back(nodes, incumbent);
    }
    rec.wall_time = elapsed();
    return rec;
}

inline SolveRecord solve_mpe(const GraphicalModel& model, const Assignment& evidence, double budget_s,
                             const BranchPolicy& branch, const NodePolicy& node_sel, int i_bound) {
    SolverOptions opts;
    opts.budget_s = budget_s;
    opts.i_bound = i_bound;
    return solve_mpe(model, evidence, branch, node_sel, opts);
}

/// Default configuration: strong branching over the 8 highest-degree free
/// variables with plain depth-first sibling order.
inline SolveRecord solve_mpe(const GraphicalModel& model, const Assignment& evidence, double budget_s = kPosInf,
                             int i_bound = 10) {
    return solve_mpe(model, evidence, budget_s, strong_branching_policy(i_bound, 8), dfs_node_policy(), i_bound);
}

} // namespace l2c
