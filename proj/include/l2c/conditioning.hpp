#pragma once

// Inference-time conditioning: pick (variable, value) pairs to fix before the
// final solve, either greedily or with a beam, using a pluggable scorer. Also
// the network-guided branching and node-ordering policies for the solver.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "l2c/bnb.hpp"
#include "l2c/scorer.hpp"

namespace l2c {

inline constexpr double kMinProb = 1e-7;

/// Maps (model, current evidence) to scores for candidate pairs on free variables.
struct ScoringFunction {
    std::string name;
    std::function<std::vector<CandidateScore>(const GraphicalModel&, const Assignment&)> score;
};

enum class Strategy { Greedy, Beam };

inline std::string to_string(Strategy s) { return s == Strategy::Greedy ? "greedy" : "beam"; }

inline Strategy parse_strategy(const std::string& s) {
    if (s == "greedy") return Strategy::Greedy;
    if (s == "beam") return Strategy::Beam;
    throw ValidationError("unknown strategy '" + s + "' (expected greedy or beam)");
}

struct ConditioningConfig {
    Strategy strategy = Strategy::Greedy;
    double tau = 0.5;
    int d_max = 0;
    int beam_width = 1;
    double final_budget_s = kPosInf;
    double beta = 1.0;

    void validate() const {
        if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("tau must be in [0,1]");
        if (d_max < 0) throw ValidationError("d_max must be >= 0");
        if (beam_width < 1) throw ValidationError("beam width must be >= 1");
        if (!(final_budget_s > 0.0)) throw ValidationError("final budget must be positive");
        if (!std::isfinite(beta)) throw ValidationError("beta must be finite");
    }
};

/// Number of decisions for a fraction of the query variables.
inline int depth_for_fraction(double fraction, int num_query) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("depth fraction must be in [0,1]");
    return static_cast<int>(std::lround(fraction * num_query));
}

// ---- scorers ----

inline ScoringFunction l2c_rank_scorer(std::shared_ptr<const ScorerNetwork> net) {
    return {"l2c-rank", [net](const GraphicalModel& m, const Assignment& ev) {
                check_compatible(*net, m.num_vars);
                return score_candidates(*net, ev);
            }};
}

/// Optimality head only: the simplification score is replaced by ŷ.
inline ScoringFunction l2c_opt_scorer(std::shared_ptr<const ScorerNetwork> net) {
    return {"l2c-opt", [net](const GraphicalModel& m, const Assignment& ev) {
                check_compatible(*net, m.num_vars);
                auto sc = score_candidates(*net, ev);
                for (auto& c : sc) c.simp = c.opt;
                return sc;
            }};
}

/// Full strong branching: s is the variable's bound improvement, ŷ marks the
/// value whose child bound is larger.
inline ScoringFunction strong_branching_scorer(int i_bound) {
    return {"strong", [i_bound](const GraphicalModel& m, const Assignment& ev) {
                const auto free = ev.free_vars();
                std::vector<CandidateScore> out;
                if (free.empty()) return out;
                const EliminationOrder order = min_fill_order(primal_graph(m), free);
                const double parent = mini_bucket_bound(m, ev, i_bound, order).upper_bound;
                for (int v : free) {
                    const auto s = strong_branching_score(m, ev, v, i_bound, order, parent);
                    for (int q = 0; q < 2; ++q) out.push_back({v, q, q == s.best_value ? 1.0 : 0.0, s.score});
                }
                return out;
            }};
}

/// Graph baseline: s is the degree among free variables, ŷ marks the Gibbs majority value.
inline ScoringFunction max_degree_scorer(GibbsConfig gibbs = {50, 1, 7}, int num_samples = 100) {
    return {"max-degree", [gibbs, num_samples](const GraphicalModel& m, const Assignment& ev) {
                const auto deg = detail::free_degrees(primal_graph(m), ev);
                const Assignment modes = estimate_mode_values(m, ev, num_samples, gibbs);
                std::vector<CandidateScore> out;
                for (int v : ev.free_vars()) {
                    for (int q = 0; q < 2; ++q) {
                        out.push_back({v, q, modes[v] == q ? 1.0 : 0.0, static_cast<double>(deg[static_cast<std::size_t>(v)])});
                    }
                }
                return out;
            }};
}

/// Planted scorer from a known optimal completion: ŷ = 1 on its pairs and 0
/// elsewhere, s = variable index.
inline ScoringFunction planted_scorer(const Assignment& optimum) {
    return {"oracle", [optimum](const GraphicalModel&, const Assignment& ev) {
                std::vector<CandidateScore> out;
                for (int v : ev.free_vars()) {
                    for (int q = 0; q < 2; ++q) out.push_back({v, q, optimum[v] == q ? 1.0 : 0.0, static_cast<double>(v)});
                }
                return out;
            }};
}

/// Planted scorer built from the exact optimum under `evidence`.
inline ScoringFunction oracle_scorer(const GraphicalModel& model, const Assignment& evidence) {
    return planted_scorer(evidence.merged(brute_force_mpe(model, evidence).completion));
}

// ---- decisions ----

/// Greedy rule: among candidates with ŷ ≥ τ take the largest s; ties go to
/// larger ŷ, then the smaller variable, then value 0.
inline std::optional<CandidateScore> greedy_pick(const std::vector<CandidateScore>& cands, const Assignment& ev,
                                                 double tau) {
    std::optional<CandidateScore> best;
    for (const auto& c : cands) {
        if (c.var < 0 || c.var >= ev.num_vars() || ev.contains(c.var)) continue;
        if (!(c.opt >= tau)) continue;
        if (!best || c.simp > best->simp ||
            (c.simp == best->simp &&
             (c.opt > best->opt || (c.opt == best->opt && std::pair(c.var, c.value) < std::pair(best->var, best->value))))) {
            best = c;
        }
    }
    return best;
}

struct ConditionResult {
    Assignment evidence;                  // original evidence plus decisions
    std::vector<BranchChoice> decisions;  // in the order taken
    double score = 0.0;                   // beam: cumulative step score
    std::vector<double> decision_times;   // seconds per scorer call
};

inline ConditionResult greedy_condition(const GraphicalModel& model, const ScoringFunction& f,
                                        const Assignment& evidence, const ConditioningConfig& cfg) {
    cfg.validate();
    ConditionResult res{evidence, {}, 0.0, {}};
    for (int step = 0; step < cfg.d_max && res.evidence.count() < model.num_vars; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto cands = f.score(model, res.evidence);
        res.decision_times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        const auto pick = greedy_pick(cands, res.evidence, cfg.tau);
        if (!pick) break;
        res.evidence.set(pick->var, pick->value);
        res.decisions.push_back({pick->var, pick->value});
    }
    return res;
}

namespace detail {

inline std::vector<double> softmax_simp(const std::vector<CandidateScore>& cands) {
    std::vector<double> out(cands.size());
    if (cands.empty()) return out;
    double mx = kNegInf;
    for (const auto& c : cands) mx = std::max(mx, c.simp);
    double sum = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        out[i] = std::exp(cands[i].simp - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

} // namespace detail

/// Step score of each candidate: ln max(ŷ, 1e-7) + β·softmax(s).
inline std::vector<double> beam_step_scores(const std::vector<CandidateScore>& cands, double beta) {
    const auto sm = detail::softmax_simp(cands);
    std::vector<double> out(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) out[i] = std::log(std::max(cands[i].opt, kMinProb)) + beta * sm[i];
    return out;
}

inline ConditionResult beam_condition(const GraphicalModel& model, const ScoringFunction& f, const Assignment& evidence,
                                      const ConditioningConfig& cfg) {
    cfg.validate();
    struct Entry {
        double score;
        Assignment ev;
        std::vector<BranchChoice> path;
    };
    std::vector<Entry> beam{{0.0, evidence, {}}};
    std::vector<double> times;
    for (int depth = 0; depth < cfg.d_max; ++depth) {
        std::map<Assignment, Entry> expanded;  // deduplicates equal evidence sets
        for (const auto& e : beam) {
            const auto t0 = std::chrono::steady_clock::now();
            auto cands = f.score(model, e.ev);
            times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            cands.erase(std::remove_if(cands.begin(), cands.end(),
                                       [&](const CandidateScore& c) {
                                           return c.var < 0 || c.var >= e.ev.num_vars() || e.ev.contains(c.var);
                                       }),
                        cands.end());
            const auto step = beam_step_scores(cands, cfg.beta);
            for (std::size_t i = 0; i < cands.size(); ++i) {
                Entry child{e.score + step[i], e.ev.with(cands[i].var, cands[i].value), e.path};
                child.path.push_back({cands[i].var, cands[i].value});
                auto it = expanded.find(child.ev);
                if (it == expanded.end()) {
                    expanded.emplace(child.ev, std::move(child));
                } else if (child.score > it->second.score) {
                    it->second = std::move(child);
                }
            }
        }
        if (expanded.empty()) break;
        std::vector<Entry> next;
        for (auto& [k, v] : expanded) next.push_back(std::move(v));
        // map order is ascending evidence, so a stable sort keeps that as the tie-break
        std::stable_sort(next.begin(), next.end(), [](const Entry& a, const Entry& b) { return a.score > b.score; });
        if (static_cast<int>(next.size()) > cfg.beam_width) next.resize(static_cast<std::size_t>(cfg.beam_width));
        beam = std::move(next);
    }
    return {beam.front().ev, beam.front().path, beam.front().score, times};
}

inline ConditionResult condition(const GraphicalModel& model, const ScoringFunction& f, const Assignment& evidence,
                                 const ConditioningConfig& cfg) {
    return cfg.strategy == Strategy::Greedy ? greedy_condition(model, f, evidence, cfg)
                                            : beam_condition(model, f, evidence, cfg);
}

struct ConditionedSolve {
    ConditionResult conditioning;
    std::optional<Assignment> solution;  // complete: evidence, decisions and residual
    double log_score = kNegInf;
    SolveRecord record;
};

/// Conditions, then solves the residual problem within the final budget.
inline ConditionedSolve solve_with_conditioning(const GraphicalModel& model, const ScoringFunction& f,
                                                const Assignment& evidence, const ConditioningConfig& cfg,
                                                const BranchPolicy& branch, const NodePolicy& node_sel,
                                                SolverOptions opts) {
    ConditionedSolve out;
    out.conditioning = condition(model, f, evidence, cfg);
    opts.budget_s = cfg.final_budget_s;
    out.record = solve_mpe(model, out.conditioning.evidence, branch, node_sel, opts);
    if (out.record.assignment) {
        out.solution = out.record.assignment;
        out.log_score = log_score(model, *out.solution);
    }
    return out;
}

inline ConditionedSolve solve_with_conditioning(const GraphicalModel& model, const ScoringFunction& f,
                                                const Assignment& evidence, const ConditioningConfig& cfg,
                                                int i_bound = 10) {
    SolverOptions opts;
    opts.i_bound = i_bound;
    return solve_with_conditioning(model, f, evidence, cfg, strong_branching_policy(i_bound, 8), dfs_node_policy(),
                                   opts);
}

// ---- network-guided search ----

/// Branches on the greedy pick (falling back to the largest s when nothing
/// passes τ) and explores the scored value first. With `rank_by_opt` the
/// optimality head replaces s as the ranking key.
inline BranchPolicy nn_branch_policy(std::shared_ptr<const ScorerNetwork> net, double tau = 0.5,
                                     bool rank_by_opt = false) {
    BranchPolicy p;
    p.name = rank_by_opt ? "nn-opt" : "nn-rank";
    p.choose = [net, tau, rank_by_opt](const GraphicalModel& m, const Assignment& ev, const std::vector<int>&) {
        check_compatible(*net, m.num_vars);
        auto cands = score_candidates(*net, ev);
        if (rank_by_opt) {
            for (auto& c : cands) c.simp = c.opt;
        }
        auto pick = greedy_pick(cands, ev, tau);
        if (!pick) pick = greedy_pick(cands, ev, 0.0);
        if (!pick) return std::vector<BranchChoice>{};
        return std::vector<BranchChoice>{{pick->var, pick->value}};
    };
    return p;
}

/// Sibling priority is the running sum of ln ŷ over fixed pairs; the warm start
/// is the per-variable argmax of ŷ.
inline NodePolicy nn_node_policy(std::shared_ptr<const ScorerNetwork> net) {
    struct Memo {
        Assignment ev;
        std::vector<CandidateScore> scores;
        bool valid = false;
    };
    auto memo = std::make_shared<Memo>();
    NodePolicy p;
    p.name = "nn";
    p.priority = [net, memo](const NodeDescriptor& d) {
        if (!d.parent_evidence) return d.parent_priority;
        if (!memo->valid || !(memo->ev == *d.parent_evidence)) {
            memo->ev = *d.parent_evidence;
            memo->scores = score_candidates(*net, memo->ev);
            memo->valid = true;
        }
        for (const auto& c : memo->scores) {
            if (c.var == d.var && c.value == d.value) return d.parent_priority + std::log(std::max(c.opt, kMinProb));
        }
        return d.parent_priority;
    };
    p.warm_start = [net](const GraphicalModel& m, const Assignment& ev) -> std::optional<Assignment> {
        check_compatible(*net, m.num_vars);
        Assignment full = ev;
        const auto sc = score_candidates(*net, ev);
        for (std::size_t i = 0; i + 1 < sc.size(); i += 2) full.set(sc[i].var, sc[i + 1].opt > sc[i].opt ? 1 : 0);
        return full;
    };
    return p;
}

} // namespace l2c
