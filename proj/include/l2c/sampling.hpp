#pragma once

// Systematic-scan Gibbs sampling over binary models.

#include <cmath>
#include <cstdint>
#include <vector>

#include "l2c/pgm.hpp"

namespace l2c {

struct GibbsConfig {
    int burn_in = 500;
    int thinning = 2;
    std::uint64_t seed = 0;

    void validate() const {
        if (burn_in < 0) throw ValidationError("gibbs burn_in must be >= 0");
        if (thinning < 1) throw ValidationError("gibbs thinning must be >= 1");
    }
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Uniform in [0,1) keyed by (seed, sweep, site); no hidden state.
inline double counter_uniform(std::uint64_t seed, std::uint64_t sweep, std::uint64_t site) {
    const std::uint64_t h = mix64(mix64(mix64(seed) ^ sweep) ^ (site * 0xd1b54a32d192ed03ULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

} // namespace detail

/// Holds the variable-to-factor incidence so repeated conditionals are cheap.
class GibbsSampler {
public:
    explicit GibbsSampler(const GraphicalModel& model)
        : model_(model), var_factors_(model.var_factors()) {}

    /// P(var = 1 | every other variable in `state`).
    double conditional(const Assignment& state, int var) const {
        Assignment x = state;
        double l0 = 0.0;
        double l1 = 0.0;
        for (int f : var_factors_[static_cast<std::size_t>(var)]) {
            const auto& fac = model_.factors[static_cast<std::size_t>(f)];
            x.set(var, 0);
            l0 += fac.at(x);
            x.set(var, 1);
            l1 += fac.at(x);
        }
        return conditional_from_logs(l0, l1);
    }

    /// `n` states kept every `thinning` sweeps after `burn_in` sweeps. Variables
    /// assigned in `clamp` never move.
    std::vector<Assignment> sample(int n, const GibbsConfig& cfg, const Assignment& clamp) const {
        cfg.validate();
        std::vector<Assignment> out;
        if (n <= 0) return out;
        out.reserve(static_cast<std::size_t>(n));
        const int nv = model_.num_vars;
        Assignment x(nv);
        for (int v = 0; v < nv; ++v) {
            if (clamp.num_vars() == nv && clamp.contains(v)) {
                x.set(v, clamp[v]);
            } else {
                x.set(v, detail::counter_uniform(cfg.seed, 0, static_cast<std::uint64_t>(v)) < 0.5 ? 0 : 1);
            }
        }
        std::vector<int> movable;
        for (int v = 0; v < nv; ++v) {
            if (!(clamp.num_vars() == nv && clamp.contains(v))) movable.push_back(v);
        }
        std::uint64_t sweep = 1;
        auto run_sweep = [&]() {
            for (int v : movable) {
                const double p1 = conditional_in_place(x, v);
                const double u = detail::counter_uniform(cfg.seed, sweep, static_cast<std::uint64_t>(v));
                x.set(v, u < p1 ? 1 : 0);
            }
            ++sweep;
        };
        for (int s = 0; s < cfg.burn_in; ++s) run_sweep();
        for (int k = 0; k < n; ++k) {
            for (int t = 0; t < cfg.thinning; ++t) run_sweep();
            out.push_back(x);
        }
        return out;
    }

private:
    static double conditional_from_logs(double l0, double l1) {
        if (l0 == kNegInf && l1 == kNegInf) return 0.5;
        if (l1 == kNegInf) return 0.0;
        if (l0 == kNegInf) return 1.0;
        return 1.0 / (1.0 + std::exp(l0 - l1));
    }

    // Same as conditional() without copying the state; restores x[var].
    double conditional_in_place(Assignment& x, int var) const {
        const int saved = x[var];
        double l0 = 0.0;
        double l1 = 0.0;
        for (int f : var_factors_[static_cast<std::size_t>(var)]) {
            const auto& fac = model_.factors[static_cast<std::size_t>(f)];
            x.set(var, 0);
            l0 += fac.at(x);
            x.set(var, 1);
            l1 += fac.at(x);
        }
        x.set(var, saved);
        return conditional_from_logs(l0, l1);
    }

    const GraphicalModel& model_;
    std::vector<std::vector<int>> var_factors_;
};

/// P(var = 1 | rest). `state` may leave `var` unassigned.
inline double gibbs_conditional(const GraphicalModel& model, const Assignment& state, int var) {
    return GibbsSampler(model).conditional(state, var);
}

inline std::vector<Assignment> gibbs_sample(const GraphicalModel& model, int n, const GibbsConfig& cfg) {
    return GibbsSampler(model).sample(n, cfg, Assignment{});
}

/// Gibbs chain with `evidence` clamped.
inline std::vector<Assignment> gibbs_sample(const GraphicalModel& model, int n, const GibbsConfig& cfg,
                                            const Assignment& evidence) {
    return GibbsSampler(model).sample(n, cfg, evidence);
}

/// Per-variable majority over `samples` for the variables free in
/// `evidence`; an exact split gives 0.
inline Assignment majority_values(const std::vector<Assignment>& samples, const Assignment& evidence) {
    Assignment out(evidence.num_vars());
    for (int v : evidence.free_vars()) {
        int ones = 0;
        for (const auto& s : samples) ones += s[v];
        out.set(v, 2 * ones > static_cast<int>(samples.size()) ? 1 : 0);
    }
    return out;
}

/// Majority value of each free variable over `n` clamped samples; a tie gives 0.
/// The result assigns exactly the free variables.
inline Assignment estimate_mode_values(const GraphicalModel& model, const Assignment& evidence, int n,
                                       const GibbsConfig& cfg) {
    const Assignment clamp = evidence.num_vars() == model.num_vars ? evidence : Assignment(model.num_vars);
    return majority_values(GibbsSampler(model).sample(n, cfg, clamp), clamp);
}

} // namespace l2c
