#pragma once

// Seeded random binary models for tests, benchmarks and the `generate` tool.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "l2c/pgm.hpp"

namespace l2c {

struct RandomModelSpec {
    int num_vars = 10;
    double unary_scale = 1.0;     // std-dev of unary log entries
    double pairwise_scale = 1.0;  // std-dev of pairwise/ternary log entries
    double extra_edge_ratio = 0.5;  // extra pairwise factors per variable beyond a spanning chain
    double ternary_ratio = 0.2;     // ternary factors per variable
    double zero_prob = 0.0;         // probability that a non-unary entry is -inf
};

namespace detail {

inline std::vector<int> sample_distinct(std::mt19937_64& rng, int n, int k) {
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(k));
    return all;
}

} // namespace detail

/// Mixed unary/pairwise/ternary model. A random spanning chain keeps the
/// primal graph connected; extra edges and triples are drawn uniformly.
inline GraphicalModel random_model(const RandomModelSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unary(0.0, spec.unary_scale);
    std::normal_distribution<double> pair(0.0, spec.pairwise_scale);
    std::bernoulli_distribution zero(spec.zero_prob);

    GraphicalModel m;
    m.name = "random-" + std::to_string(spec.num_vars) + "-" + std::to_string(seed);
    m.num_vars = spec.num_vars;
    const int n = spec.num_vars;

    auto fill = [&](LogPotential& f, bool allow_zero) {
        f.table.resize(std::size_t{1} << f.scope.size());
        for (auto& t : f.table) {
            t = f.scope.size() == 1 ? unary(rng) : pair(rng);
            if (allow_zero && zero(rng)) t = kNegInf;
        }
        if (allow_zero && std::all_of(f.table.begin(), f.table.end(), [](double t) { return t == kNegInf; })) {
            f.table[0] = 0.0;
        }
    };

    for (int v = 0; v < n; ++v) {
        LogPotential f{{v}, {}};
        fill(f, false);
        m.factors.push_back(std::move(f));
    }
    if (n >= 2) {
        std::set<std::pair<int, int>> edges;
        std::vector<int> perm = detail::sample_distinct(rng, n, n);
        for (int i = 0; i + 1 < n; ++i) {
            edges.emplace(std::min(perm[i], perm[i + 1]), std::max(perm[i], perm[i + 1]));
        }
        const int extra = static_cast<int>(spec.extra_edge_ratio * n);
        const std::size_t max_edges = static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2;
        for (int e = 0; e < extra && edges.size() < max_edges; ++e) {
            auto ab = detail::sample_distinct(rng, n, 2);
            if (!edges.emplace(std::min(ab[0], ab[1]), std::max(ab[0], ab[1])).second) --e;
        }
        for (auto [a, b] : edges) {
            LogPotential f{{a, b}, {}};
            fill(f, true);
            m.factors.push_back(std::move(f));
        }
    }
    if (n >= 3) {
        const int triples = static_cast<int>(spec.ternary_ratio * n);
        for (int t = 0; t < triples; ++t) {
            LogPotential f{detail::sample_distinct(rng, n, 3), {}};
            fill(f, true);
            m.factors.push_back(std::move(f));
        }
    }
    return m;
}

/// Full assignment from the low bits of `code` (variable 0 is the most significant bit).
inline Assignment assignment_from_code(int num_vars, std::uint64_t code) {
    Assignment a(num_vars);
    for (int i = 0; i < num_vars; ++i) a.set(i, static_cast<int>((code >> (num_vars - 1 - i)) & 1U));
    return a;
}

} // namespace l2c
