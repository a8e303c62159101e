#pragma once

// Elimination orders, exact bucket elimination and mini-bucket upper bounds.

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "l2c/pgm.hpp"

namespace l2c {

struct EliminationOrder {
    std::vector<int> order;
    int induced_width = 0;
};

struct BoundResult {
    double upper_bound = kPosInf;
    int i_bound = 0;
    EliminationOrder order_used;
};

enum class OrderHeuristic { MinFill, MinDegree };

namespace detail {

/// Greedy elimination over the subgraph induced by `free`.
inline EliminationOrder greedy_order(const PrimalGraph& g, const std::vector<int>& free, OrderHeuristic h) {
    const int n = g.num_vertices();
    std::vector<char> alive(static_cast<std::size_t>(n), 0);
    for (int v : free) alive[static_cast<std::size_t>(v)] = 1;
    std::vector<std::set<int>> adj(static_cast<std::size_t>(n));
    for (int v : free) {
        for (int u : g.adjacency[static_cast<std::size_t>(v)]) {
            if (alive[static_cast<std::size_t>(u)]) adj[static_cast<std::size_t>(v)].insert(u);
        }
    }
    auto fill_of = [&](int v) {
        const auto& nb = adj[static_cast<std::size_t>(v)];
        std::size_t missing = 0;
        for (auto a = nb.begin(); a != nb.end(); ++a) {
            for (auto b = std::next(a); b != nb.end(); ++b) {
                if (!adj[static_cast<std::size_t>(*a)].count(*b)) ++missing;
            }
        }
        return missing;
    };

    EliminationOrder out;
    std::vector<int> remaining = free;
    std::sort(remaining.begin(), remaining.end());
    while (!remaining.empty()) {
        int best = -1;
        std::size_t best_fill = std::numeric_limits<std::size_t>::max();
        std::size_t best_deg = std::numeric_limits<std::size_t>::max();
        for (int v : remaining) {  // ascending, so strict comparisons keep the smaller index
            const std::size_t deg = adj[static_cast<std::size_t>(v)].size();
            const std::size_t fill = h == OrderHeuristic::MinFill ? fill_of(v) : 0;
            if (fill < best_fill || (fill == best_fill && deg < best_deg)) {
                best = v;
                best_fill = fill;
                best_deg = deg;
            }
        }
        auto& nb = adj[static_cast<std::size_t>(best)];
        out.induced_width = std::max(out.induced_width, static_cast<int>(nb.size()));
        for (int a : nb) {
            for (int b : nb) {
                if (a != b) adj[static_cast<std::size_t>(a)].insert(b);
            }
            adj[static_cast<std::size_t>(a)].erase(best);
        }
        nb.clear();
        out.order.push_back(best);
        remaining.erase(std::find(remaining.begin(), remaining.end(), best));
    }
    return out;
}

/// max_{var} of the sum of `fs`. The result is over the union scope minus
/// `var`, sorted ascending. When `var` < 0 nothing is maximized out.
inline LogPotential sum_and_max_out(const std::vector<const LogPotential*>& fs, int var) {
    std::vector<int> uni;
    for (const auto* f : fs) uni.insert(uni.end(), f->scope.begin(), f->scope.end());
    std::sort(uni.begin(), uni.end());
    uni.erase(std::unique(uni.begin(), uni.end()), uni.end());

    LogPotential out;
    for (int v : uni) {
        if (v != var) out.scope.push_back(v);
    }
    const std::size_t u = uni.size();
    // Per factor, the stride each union position contributes to its table index.
    std::vector<std::vector<std::size_t>> strides(fs.size(), std::vector<std::size_t>(u, 0));
    for (std::size_t i = 0; i < fs.size(); ++i) {
        const auto& sc = fs[i]->scope;
        for (std::size_t k = 0; k < sc.size(); ++k) {
            const auto pos = static_cast<std::size_t>(std::lower_bound(uni.begin(), uni.end(), sc[k]) - uni.begin());
            strides[i][pos] = std::size_t{1} << (sc.size() - 1 - k);
        }
    }
    std::size_t var_pos = u;
    for (std::size_t p = 0; p < u; ++p) {
        if (uni[p] == var) var_pos = p;
    }
    out.table.assign(std::size_t{1} << out.scope.size(), kNegInf);
    for (std::size_t code = 0; code < (std::size_t{1} << u); ++code) {
        double s = 0.0;
        for (std::size_t i = 0; i < fs.size(); ++i) {
            std::size_t t = 0;
            for (std::size_t p = 0; p < u; ++p) {
                if ((code >> (u - 1 - p)) & 1U) t += strides[i][p];
            }
            s += fs[i]->table[t];
        }
        std::size_t o = code;
        if (var_pos < u) {
            const std::size_t low_bits = u - 1 - var_pos;
            const std::size_t high = code >> (low_bits + 1);
            const std::size_t low = code & ((std::size_t{1} << low_bits) - 1);
            o = (high << low_bits) | low;
        }
        if (s > out.table[o]) out.table[o] = s;
    }
    return out;
}

inline std::vector<int> positions(const std::vector<int>& order, int num_vars) {
    std::vector<int> pos(static_cast<std::size_t>(num_vars), -1);
    for (std::size_t i = 0; i < order.size(); ++i) pos[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    return pos;
}

/// Restricts `order` to the free variables and checks it covers all of them.
inline std::vector<int> free_order(const EliminationOrder& order, const Assignment& evidence, const char* who) {
    std::vector<int> out;
    std::vector<char> seen(static_cast<std::size_t>(evidence.num_vars()), 0);
    for (int v : order.order) {
        if (v < 0 || v >= evidence.num_vars()) {
            throw ValidationError(std::string(who) + ": order contains invalid variable " + std::to_string(v));
        }
        if (seen[static_cast<std::size_t>(v)]) {
            throw ValidationError(std::string(who) + ": order repeats variable " + std::to_string(v));
        }
        seen[static_cast<std::size_t>(v)] = 1;
        if (!evidence.contains(v)) out.push_back(v);
    }
    for (int v = 0; v < evidence.num_vars(); ++v) {
        if (!evidence.contains(v) && !seen[static_cast<std::size_t>(v)]) {
            throw ValidationError(std::string(who) + ": order misses free variable " + std::to_string(v));
        }
    }
    return out;
}

inline int earliest(const std::vector<int>& scope, const std::vector<int>& pos) {
    int best = std::numeric_limits<int>::max();
    for (int v : scope) best = std::min(best, pos[static_cast<std::size_t>(v)]);
    return best;
}

} // namespace detail

/// Greedy min-fill; ties by current degree, then by smaller index.
inline EliminationOrder min_fill_order(const PrimalGraph& graph, const std::vector<int>& free) {
    return detail::greedy_order(graph, free, OrderHeuristic::MinFill);
}

inline EliminationOrder min_degree_order(const PrimalGraph& graph, const std::vector<int>& free) {
    return detail::greedy_order(graph, free, OrderHeuristic::MinDegree);
}

inline EliminationOrder make_order(const GraphicalModel& m, const Assignment& evidence,
                                   OrderHeuristic h = OrderHeuristic::MinFill) {
    return detail::greedy_order(primal_graph(m), evidence.free_vars(), h);
}

/// Largest intermediate scope minus one when eliminating `order` (restricted
/// to the free variables) from the conditioned model.
inline int induced_width(const GraphicalModel& m, const Assignment& evidence, const EliminationOrder& order) {
    const auto ord = detail::free_order(order, evidence, "induced_width");
    const PrimalGraph g = primal_graph(m);
    std::vector<std::set<int>> adj(static_cast<std::size_t>(m.num_vars));
    for (int v : ord) {
        for (int u : g.adjacency[static_cast<std::size_t>(v)]) {
            if (!evidence.contains(u)) adj[static_cast<std::size_t>(v)].insert(u);
        }
    }
    int width = 0;
    for (int v : ord) {
        auto& nb = adj[static_cast<std::size_t>(v)];
        width = std::max(width, static_cast<int>(nb.size()));
        for (int a : nb) {
            for (int b : nb) {
                if (a != b) adj[static_cast<std::size_t>(a)].insert(b);
            }
            adj[static_cast<std::size_t>(a)].erase(v);
        }
        nb.clear();
    }
    return width;
}

inline constexpr int kBucketEliminationMaxWidth = 20;

/// Exact MPE by max-sum bucket elimination along `order`. The order may list
/// evidence variables (they are skipped) but must cover every free variable.
/// Decoding runs in reverse elimination order and prefers value 0 on ties.
inline MpeSolution bucket_elimination_mpe(const GraphicalModel& model, const Assignment& evidence,
                                          const EliminationOrder& order) {
    const auto ord = detail::free_order(order, evidence, "bucket_elimination_mpe");
    const GraphicalModel reduced = condition(model, evidence);
    const auto pos = detail::positions(ord, model.num_vars);

    double total = 0.0;  // max value once every bucket is processed
    std::vector<std::vector<LogPotential>> buckets(ord.size());
    for (const auto& f : reduced.factors) {
        if (f.scope.empty()) {
            total += f.table[0];
            continue;
        }
        buckets[static_cast<std::size_t>(detail::earliest(f.scope, pos))].push_back(f);
    }
    for (std::size_t i = 0; i < ord.size(); ++i) {
        std::set<int> uni;
        for (const auto& f : buckets[i]) uni.insert(f.scope.begin(), f.scope.end());
        if (static_cast<int>(uni.size()) > kBucketEliminationMaxWidth + 1) {
            throw ValidationError("bucket_elimination_mpe: induced width " + std::to_string(uni.size() - 1) +
                                  " exceeds the limit of " + std::to_string(kBucketEliminationMaxWidth));
        }
        if (buckets[i].empty()) continue;
        std::vector<const LogPotential*> fs;
        for (const auto& f : buckets[i]) fs.push_back(&f);
        LogPotential msg = detail::sum_and_max_out(fs, ord[i]);
        if (msg.scope.empty()) {
            total += msg.table[0];
        } else {
            buckets[static_cast<std::size_t>(detail::earliest(msg.scope, pos))].push_back(std::move(msg));
        }
    }

    MpeSolution sol;
    sol.completion = Assignment(model.num_vars);
    Assignment x = evidence;
    if (total == kNegInf) {  // nothing feasible: every completion ties
        for (int v : ord) {
            x.set(v, 0);
            sol.completion.set(v, 0);
        }
        sol.log_score = log_score(model, x);
        return sol;
    }
    for (std::size_t i = ord.size(); i-- > 0;) {
        const int v = ord[i];
        double best = kNegInf;
        int arg = 0;
        for (int val = 0; val <= 1; ++val) {
            x.set(v, val);
            double s = 0.0;
            for (const auto& f : buckets[i]) s += f.at(x);
            if (val == 0 || s > best) {
                best = s;
                arg = val;
            }
        }
        x.set(v, arg);
        sol.completion.set(v, arg);
    }
    sol.log_score = log_score(model, x);
    return sol;
}

/// Mini-bucket upper bound on the MPE log-score of `evidence`'s extensions.
/// Each bucket is split first-fit (largest scopes first) into mini-buckets
/// whose joint scope holds at most `i_bound` variables.
inline BoundResult mini_bucket_bound(const GraphicalModel& model, const Assignment& evidence, int i_bound,
                                     const EliminationOrder& order) {
    if (i_bound < 1) throw ValidationError("mini_bucket_bound: i_bound must be >= 1");
    const auto ord = detail::free_order(order, evidence, "mini_bucket_bound");
    const GraphicalModel reduced = condition(model, evidence);
    const auto pos = detail::positions(ord, model.num_vars);

    double bound = 0.0;
    std::vector<std::vector<LogPotential>> buckets(ord.size());
    for (const auto& f : reduced.factors) {
        if (f.scope.empty()) {
            bound += f.table[0];
        } else {
            buckets[static_cast<std::size_t>(detail::earliest(f.scope, pos))].push_back(f);
        }
    }
    for (std::size_t i = 0; i < ord.size(); ++i) {
        auto& bucket = buckets[i];
        if (bucket.empty()) continue;
        std::stable_sort(bucket.begin(), bucket.end(), [](const LogPotential& a, const LogPotential& b) {
            return a.scope.size() > b.scope.size();
        });
        std::vector<std::vector<const LogPotential*>> minis;
        std::vector<std::vector<int>> mini_scopes;
        for (const auto& f : bucket) {
            std::vector<int> sc = f.scope;
            std::sort(sc.begin(), sc.end());
            bool placed = false;
            for (std::size_t k = 0; k < minis.size() && !placed; ++k) {
                std::vector<int> uni;
                std::set_union(mini_scopes[k].begin(), mini_scopes[k].end(), sc.begin(), sc.end(),
                               std::back_inserter(uni));
                if (static_cast<int>(uni.size()) <= i_bound) {
                    minis[k].push_back(&f);
                    mini_scopes[k] = std::move(uni);
                    placed = true;
                }
            }
            if (!placed) {
                minis.push_back({&f});
                mini_scopes.push_back(std::move(sc));
            }
        }
        std::vector<LogPotential> messages;
        for (const auto& mb : minis) messages.push_back(detail::sum_and_max_out(mb, ord[i]));
        for (auto& msg : messages) {
            if (msg.scope.empty()) {
                bound += msg.table[0];
            } else {
                buckets[static_cast<std::size_t>(detail::earliest(msg.scope, pos))].push_back(std::move(msg));
            }
        }
        bucket.clear();
    }
    BoundResult r;
    r.upper_bound = bound;
    r.i_bound = i_bound;
    r.order_used = order;
    return r;
}

} // namespace l2c
