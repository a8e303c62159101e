#pragma once

// Evaluation metrics and the experiment grid: percentage gaps in log-score,
// node reduction, win counts and per-decision scoring time.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "l2c/conditioning.hpp"
#include "l2c/dataset.hpp"

namespace l2c {

/// (1/N) Σ (a − b)/|a| × 100 over pairs (a, b).
inline double avg_pct_gap(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw ValidationError("avg_pct_gap: no pairs");
    double sum = 0.0;
    for (const auto& [s, d] : pairs) {
        if (s == 0.0 || !std::isfinite(s)) throw ValidationError("avg_pct_gap: reference score must be finite and non-zero");
        if (!std::isfinite(d)) throw ValidationError("avg_pct_gap: compared score must be finite");
        sum += (s - d) / std::abs(s) * 100.0;
    }
    return sum / static_cast<double>(pairs.size());
}

/// Gap of an L2C method against a default method; negative favours L2C.
inline double method_gap(const std::vector<std::pair<double, double>>& pairs) { return avg_pct_gap(pairs); }

/// (1/N) Σ (before − after)/before × 100; positive means fewer nodes after conditioning.
inline double node_reduction(const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs) {
    if (pairs.empty()) throw ValidationError("node_reduction: no pairs");
    double sum = 0.0;
    for (const auto& [before, after] : pairs) {
        if (before < 1) throw ValidationError("node_reduction: before-count must be >= 1");
        sum += static_cast<double>(before - after) / static_cast<double>(before) * 100.0;
    }
    return sum / static_cast<double>(pairs.size());
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct WinCell {
    std::string strategy;
    double budget_s = 0.0;
    std::vector<double> conditioned;
    std::vector<double> unconditioned;
};

/// A win is a strictly higher mean conditioned log-score. Counts per strategy and budget.
inline std::map<std::string, std::map<double, int>> win_count(const std::vector<WinCell>& cells) {
    std::map<std::string, std::map<double, int>> out;
    for (const auto& c : cells) {
        if (c.conditioned.size() != c.unconditioned.size()) throw ValidationError("win_count: mismatched instance counts");
        int& slot = out[c.strategy][c.budget_s];
        if (!c.conditioned.empty() && mean_of(c.conditioned) > mean_of(c.unconditioned)) ++slot;
    }
    return out;
}

inline int total_wins(const std::map<double, int>& per_budget) {
    int n = 0;
    for (const auto& [b, w] : per_budget) n += w;
    return n;
}

struct DecisionTime {
    double mean_s = 0.0;
    double std_s = 0.0;
    int calls = 0;
};

/// Wall time of single scoring calls. Absent when any call exceeds `timeout_s`.
inline std::optional<DecisionTime> per_decision_time(const ScoringFunction& f, const GraphicalModel& model,
                                                     const std::vector<Assignment>& instances, int repetitions,
                                                     double timeout_s = 30.0) {
    std::vector<double> t;
    for (const auto& ev : instances) {
        for (int r = 0; r < repetitions; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            (void)f.score(model, ev);
            const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (dt > timeout_s) return std::nullopt;
            t.push_back(dt);
        }
    }
    return DecisionTime{mean_of(t), sample_std(t), static_cast<int>(t.size())};
}

// ---- experiment grid ----

/// Builds the scorer for one instance (the oracle needs the evidence).
using ScorerFactory = std::function<ScoringFunction(const GraphicalModel&, const Assignment&)>;

struct ExperimentGrid {
    std::vector<double> depths{0.05, 0.10, 0.15, 0.25};  // fractions of the query variables
    std::vector<double> budgets_s{0.1, 0.3, 1.0};
    std::vector<std::string> strategies{"l2c-rank"};
    ConditioningConfig conditioning;  // d_max and final budget are set per cell
    int i_bound = 10;

    void validate() const {
        if (depths.empty() || budgets_s.empty() || strategies.empty()) throw ValidationError("grid: every axis must be non-empty");
        for (double d : depths) {
            if (!(d >= 0.0 && d <= 1.0)) throw ValidationError("grid: depths are fractions in [0,1]");
        }
        for (double b : budgets_s) {
            if (!(b > 0.0)) throw ValidationError("grid: budgets must be positive");
        }
    }
};

struct GridRow {
    std::string model;
    std::string strategy;
    double depth = 0.0;
    double budget_s = 0.0;
    int n = 0;       // instances with finite scores on both sides
    int failed = 0;  // instances dropped for lack of a solution
    std::optional<double> avg_pct_gap;
    std::optional<double> node_reduction;
    int wins = 0;
    std::optional<double> mean_decision_s;
    std::optional<double> std_decision_s;
    std::vector<double> conditioned_ll;
    std::vector<double> unconditioned_ll;
};

struct GridResult {
    std::vector<GridRow> rows;
    std::map<std::string, std::map<double, int>> wins;
};

inline GridResult run_grid(const GraphicalModel& model, const std::vector<Assignment>& instances,
                           const ExperimentGrid& grid, const std::map<std::string, ScorerFactory>& scorers,
                           double decision_timeout_s = 30.0) {
    grid.validate();
    for (const auto& s : grid.strategies) {
        if (!scorers.count(s)) throw MissingArtifactError("grid: no scorer available for strategy '" + s + "'");
    }
    SolverOptions base_opts;
    base_opts.i_bound = grid.i_bound;
    const auto branch = strong_branching_policy(grid.i_bound, 8);
    const auto nodes = dfs_node_policy();

    GridResult out;
    std::vector<WinCell> cells;
    for (double budget : grid.budgets_s) {
        std::vector<SolveRecord> plain;
        for (const auto& ev : instances) {
            SolverOptions o = base_opts;
            o.budget_s = budget;
            plain.push_back(solve_mpe(model, ev, branch, nodes, o));
        }
        for (const auto& strat : grid.strategies) {
            for (double depth : grid.depths) {
                GridRow row;
                row.model = model.name;
                row.strategy = strat;
                row.depth = depth;
                row.budget_s = budget;
                std::vector<std::pair<double, double>> gaps;
                std::vector<std::pair<std::int64_t, std::int64_t>> node_pairs;
                std::vector<double> times;
                bool timed_out = false;
                for (std::size_t i = 0; i < instances.size(); ++i) {
                    const auto& ev = instances[i];
                    ConditioningConfig cc = grid.conditioning;
                    cc.d_max = depth_for_fraction(depth, model.num_vars - ev.count());
                    cc.final_budget_s = budget;
                    const auto f = scorers.at(strat)(model, ev);
                    const auto r = solve_with_conditioning(model, f, ev, cc, branch, nodes, base_opts);
                    for (double t : r.conditioning.decision_times) {
                        if (t > decision_timeout_s) timed_out = true;
                        times.push_back(t);
                    }
                    const double ll_s = plain[i].log_score;
                    if (!std::isfinite(ll_s) || ll_s == 0.0 || !std::isfinite(r.log_score)) {
                        ++row.failed;
                        continue;
                    }
                    gaps.emplace_back(ll_s, r.log_score);
                    node_pairs.emplace_back(std::max<std::int64_t>(1, plain[i].nodes_explored), r.record.nodes_explored);
                    row.conditioned_ll.push_back(r.log_score);
                    row.unconditioned_ll.push_back(ll_s);
                }
                row.n = static_cast<int>(gaps.size());
                if (!gaps.empty()) {
                    row.avg_pct_gap = avg_pct_gap(gaps);
                    row.node_reduction = node_reduction(node_pairs);
                }
                if (!times.empty() && !timed_out) {
                    row.mean_decision_s = mean_of(times);
                    row.std_decision_s = sample_std(times);
                }
                row.wins = !row.conditioned_ll.empty() && mean_of(row.conditioned_ll) > mean_of(row.unconditioned_ll) ? 1 : 0;
                cells.push_back({strat, budget, row.conditioned_ll, row.unconditioned_ll});
                out.rows.push_back(std::move(row));
            }
        }
    }
    out.wins = win_count(cells);
    return out;
}

/// Test-split evidence sets of a dataset.
inline std::vector<Assignment> test_instances(const Dataset& ds) {
    std::vector<Assignment> out;
    for (const auto* r : ds.split(Split::Test)) out.push_back(r->evidence);
    return out;
}

inline GridResult run_grid(const GraphicalModel& model, const Dataset& ds, const ExperimentGrid& grid,
                           const std::map<std::string, ScorerFactory>& scorers, double decision_timeout_s = 30.0) {
    if (ds.num_vars != model.num_vars) throw ValidationError("grid: dataset and model disagree on the number of variables");
    return run_grid(model, test_instances(ds), grid, scorers, decision_timeout_s);
}

namespace detail {

inline std::string fmt_num(double x) {
    std::ostringstream s;
    s << std::setprecision(10) << x;
    return s.str();
}

inline std::string fmt_opt(const std::optional<double>& x) { return x ? fmt_num(*x) : std::string(); }

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

} // namespace detail

/// Empty decision-time cells mark a scoring call that exceeded the timeout.
inline std::string grid_csv(const GridResult& g) {
    std::string out = "model,strategy,depth,budget_ms,n,avg_pct_gap,node_reduction,wins,mean_decision_s,std_decision_s\n";
    for (const auto& r : g.rows) {
        out += detail::csv_field(r.model) + "," + detail::csv_field(r.strategy) + "," + detail::fmt_num(r.depth) + "," +
               detail::fmt_num(r.budget_s * 1000.0) + "," + std::to_string(r.n) + "," + detail::fmt_opt(r.avg_pct_gap) + "," +
               detail::fmt_opt(r.node_reduction) + "," + std::to_string(r.wins) + "," + detail::fmt_opt(r.mean_decision_s) +
               "," + detail::fmt_opt(r.std_decision_s) + "\n";
    }
    return out;
}

inline json grid_json(const GridResult& g) {
    auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
    json rows = json::array();
    for (const auto& r : g.rows) {
        rows.push_back({{"model", r.model},
                        {"strategy", r.strategy},
                        {"depth", r.depth},
                        {"budget_ms", r.budget_s * 1000.0},
                        {"n", r.n},
                        {"failed", r.failed},
                        {"avg_pct_gap", opt(r.avg_pct_gap)},
                        {"node_reduction", opt(r.node_reduction)},
                        {"wins", r.wins},
                        {"mean_decision_s", opt(r.mean_decision_s)},
                        {"std_decision_s", opt(r.std_decision_s)}});
    }
    json wins = json::object();
    for (const auto& [s, per] : g.wins) {
        json b = json::object();
        for (const auto& [budget, w] : per) b[detail::fmt_num(budget * 1000.0)] = w;
        wins[s] = {{"per_budget_ms", b}, {"total", total_wins(per)}};
    }
    return {{"rows", rows}, {"wins", wins}};
}

} // namespace l2c
