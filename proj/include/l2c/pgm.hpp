#pragma once

// Binary graphical models in log space: representation, UAI I/O, scoring,
// conditioning and an exhaustive MPE oracle.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "l2c/error.hpp"

namespace l2c {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

/// Partial map from variable index to a binary value. Stored densely; an
/// unassigned slot holds kUnassigned.
class Assignment {
public:
    static constexpr std::int8_t kUnassigned = -1;

    Assignment() = default;
    explicit Assignment(int num_vars) : values_(static_cast<std::size_t>(num_vars), kUnassigned) {}

    int num_vars() const { return static_cast<int>(values_.size()); }

    bool contains(int var) const { return values_[static_cast<std::size_t>(var)] != kUnassigned; }

    /// Value of an assigned variable, kUnassigned otherwise.
    int operator[](int var) const { return values_[static_cast<std::size_t>(var)]; }

    void set(int var, int value) {
        if (var < 0 || var >= num_vars()) {
            throw ValidationError("assignment index " + std::to_string(var) + " out of range");
        }
        if (value != 0 && value != 1) {
            throw ValidationError("assignment value must be 0 or 1, got " + std::to_string(value));
        }
        values_[static_cast<std::size_t>(var)] = static_cast<std::int8_t>(value);
    }

    void erase(int var) { values_[static_cast<std::size_t>(var)] = kUnassigned; }

    int count() const {
        return static_cast<int>(std::count_if(values_.begin(), values_.end(),
                                              [](std::int8_t v) { return v != kUnassigned; }));
    }

    bool complete() const { return count() == num_vars(); }

    /// Assigned (variable, value) pairs in ascending variable order.
    std::vector<std::pair<int, int>> entries() const {
        std::vector<std::pair<int, int>> out;
        for (int i = 0; i < num_vars(); ++i) {
            if (contains(i)) out.emplace_back(i, (*this)[i]);
        }
        return out;
    }

    std::vector<int> free_vars() const {
        std::vector<int> out;
        for (int i = 0; i < num_vars(); ++i) {
            if (!contains(i)) out.push_back(i);
        }
        return out;
    }

    std::vector<int> assigned_vars() const {
        std::vector<int> out;
        for (int i = 0; i < num_vars(); ++i) {
            if (contains(i)) out.push_back(i);
        }
        return out;
    }

    /// Union with `other`; entries of `other` win on overlap.
    Assignment merged(const Assignment& other) const {
        Assignment out = *this;
        for (int i = 0; i < other.num_vars(); ++i) {
            if (other.contains(i)) out.set(i, other[i]);
        }
        return out;
    }

    Assignment with(int var, int value) const {
        Assignment out = *this;
        out.set(var, value);
        return out;
    }

    const std::vector<std::int8_t>& raw() const { return values_; }

    bool operator==(const Assignment&) const = default;

    /// Lexicographic order over the ascending (variable, value) pair lists.
    friend std::strong_ordering operator<=>(const Assignment& a, const Assignment& b) {
        const auto ea = a.entries();
        const auto eb = b.entries();
        return std::lexicographical_compare_three_way(ea.begin(), ea.end(), eb.begin(), eb.end());
    }

private:
    std::vector<std::int8_t> values_;
};

/// A factor stored in log space. The table is row-major over `scope`: the
/// last scope variable varies fastest, value 0 before value 1.
struct LogPotential {
    std::vector<int> scope;
    std::vector<double> table;

    std::size_t index_of(const Assignment& x) const {
        std::size_t idx = 0;
        for (int v : scope) idx = (idx << 1) | static_cast<std::size_t>(x[v]);
        return idx;
    }

    double at(const Assignment& x) const { return table[index_of(x)]; }

    double max_entry() const { return *std::max_element(table.begin(), table.end()); }

    bool operator==(const LogPotential&) const = default;
};

struct GraphicalModel {
    std::string name;
    int num_vars = 0;
    std::vector<LogPotential> factors;

    /// Throws ValidationError when a structural invariant is broken.
    void validate() const {
        if (num_vars < 0) throw ValidationError("negative variable count");
        for (std::size_t f = 0; f < factors.size(); ++f) {
            const auto& fac = factors[f];
            if (fac.scope.size() >= 8 * sizeof(std::size_t) - 1) {
                throw ValidationError("factor " + std::to_string(f) + " scope too large");
            }
            for (std::size_t k = 0; k < fac.scope.size(); ++k) {
                const int v = fac.scope[k];
                if (v < 0 || v >= num_vars) {
                    throw ValidationError("factor " + std::to_string(f) + " references variable " +
                                          std::to_string(v) + " outside [0, " +
                                          std::to_string(num_vars) + ")");
                }
                for (std::size_t j = 0; j < k; ++j) {
                    if (fac.scope[j] == v) {
                        throw ValidationError("factor " + std::to_string(f) +
                                              " has duplicate variable " + std::to_string(v));
                    }
                }
            }
            if (fac.table.size() != (std::size_t{1} << fac.scope.size())) {
                throw ValidationError("factor " + std::to_string(f) + " table has " +
                                      std::to_string(fac.table.size()) + " entries, expected " +
                                      std::to_string(std::size_t{1} << fac.scope.size()));
            }
            for (double t : fac.table) {
                if (std::isnan(t) || t == kPosInf) {
                    throw ValidationError("factor " + std::to_string(f) +
                                          " has a non-finite entry other than -inf");
                }
            }
        }
    }

    /// Factor indices touching each variable.
    std::vector<std::vector<int>> var_factors() const {
        std::vector<std::vector<int>> out(static_cast<std::size_t>(num_vars));
        for (std::size_t f = 0; f < factors.size(); ++f) {
            for (int v : factors[f].scope) out[static_cast<std::size_t>(v)].push_back(static_cast<int>(f));
        }
        return out;
    }

    /// Sum of the constant (empty-scope) factors.
    double offset() const {
        double c = 0.0;
        for (const auto& f : factors) {
            if (f.scope.empty()) c += f.table[0];
        }
        return c;
    }

    bool operator==(const GraphicalModel&) const = default;
};

struct PrimalGraph {
    std::vector<std::vector<int>> adjacency;  // sorted neighbor lists
    std::vector<int> degrees;

    int num_vertices() const { return static_cast<int>(adjacency.size()); }

    std::size_t num_edges() const {
        std::size_t n = 0;
        for (const auto& a : adjacency) n += a.size();
        return n / 2;
    }

    bool has_edge(int a, int b) const {
        const auto& adj = adjacency[static_cast<std::size_t>(a)];
        return std::binary_search(adj.begin(), adj.end(), b);
    }
};

namespace detail {

class Tokenizer {
public:
    explicit Tokenizer(const std::string& text) : in_(text) {}

    bool next(std::string& tok) { return static_cast<bool>(in_ >> tok); }

    std::string expect(const char* what) {
        std::string tok;
        if (!next(tok)) throw ValidationError(std::string("unexpected end of input reading ") + what);
        return tok;
    }

    long long integer(const char* what) {
        const std::string tok = expect(what);
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(tok, &used);
        } catch (const std::exception&) {
            throw ValidationError(std::string("expected integer for ") + what + ", got '" + tok + "'");
        }
        if (used != tok.size()) {
            throw ValidationError(std::string("expected integer for ") + what + ", got '" + tok + "'");
        }
        return v;
    }

    double real(const char* what) {
        const std::string tok = expect(what);
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            throw ValidationError(std::string("expected number for ") + what + ", got '" + tok + "'");
        }
        if (used != tok.size()) {
            throw ValidationError(std::string("expected number for ") + what + ", got '" + tok + "'");
        }
        return v;
    }

private:
    std::istringstream in_;
};

} // namespace detail

/// Reads a UAI-format model (MARKOV or BAYES preamble, probability tables).
/// Only binary variables are accepted.
inline GraphicalModel parse_uai(const std::string& text, std::string name = {}) {
    detail::Tokenizer tok(text);
    const std::string kind = tok.expect("preamble type");
    if (kind != "MARKOV" && kind != "BAYES") {
        throw ValidationError("preamble must start with MARKOV or BAYES, got '" + kind + "'");
    }
    GraphicalModel m;
    m.name = std::move(name);
    const long long n = tok.integer("variable count");
    if (n < 0) throw ValidationError("negative variable count");
    m.num_vars = static_cast<int>(n);
    for (long long i = 0; i < n; ++i) {
        const long long card = tok.integer("cardinality");
        if (card != 2) {
            throw ValidationError("variable " + std::to_string(i) + " has cardinality " +
                                  std::to_string(card) + "; only binary variables are supported");
        }
    }
    const long long nf = tok.integer("factor count");
    if (nf < 0) throw ValidationError("negative factor count");
    m.factors.resize(static_cast<std::size_t>(nf));
    for (auto& f : m.factors) {
        const long long sz = tok.integer("scope size");
        if (sz < 0 || sz > 62) throw ValidationError("invalid scope size " + std::to_string(sz));
        for (long long k = 0; k < sz; ++k) {
            const long long v = tok.integer("scope variable");
            if (v < 0 || v >= n) {
                throw ValidationError("scope variable " + std::to_string(v) + " out of range");
            }
            f.scope.push_back(static_cast<int>(v));
        }
    }
    for (std::size_t fi = 0; fi < m.factors.size(); ++fi) {
        auto& f = m.factors[fi];
        const long long count = tok.integer("table size");
        const long long expected = 1LL << f.scope.size();
        if (count != expected) {
            throw ValidationError("factor " + std::to_string(fi) + " declares " + std::to_string(count) +
                                  " entries, expected " + std::to_string(expected));
        }
        f.table.reserve(static_cast<std::size_t>(count));
        for (long long k = 0; k < count; ++k) {
            const double p = tok.real("table entry");
            if (std::isnan(p) || p < 0.0 || std::isinf(p)) {
                throw ValidationError("factor " + std::to_string(fi) + " has invalid probability " +
                                      std::to_string(p));
            }
            f.table.push_back(p == 0.0 ? kNegInf : std::log(p));
        }
    }
    std::string extra;
    if (tok.next(extra)) throw ValidationError("trailing token '" + extra + "' after last table");
    m.validate();
    return m;
}

/// Writes a MARKOV-preamble UAI document. Probabilities are exp(table) printed
/// with round-trip precision; -inf becomes 0.
inline std::string serialize_uai(const GraphicalModel& m) {
    std::ostringstream out;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "MARKOV\n" << m.num_vars << "\n";
    for (int i = 0; i < m.num_vars; ++i) out << (i ? " " : "") << 2;
    out << "\n" << m.factors.size() << "\n";
    for (const auto& f : m.factors) {
        out << f.scope.size();
        for (int v : f.scope) out << " " << v;
        out << "\n";
    }
    for (const auto& f : m.factors) {
        out << "\n" << f.table.size() << "\n";
        for (std::size_t k = 0; k < f.table.size(); ++k) {
            out << (k ? " " : "") << (f.table[k] == kNegInf ? 0.0 : std::exp(f.table[k]));
        }
        out << "\n";
    }
    return out.str();
}

/// Reads "count idx val idx val ..." evidence.
inline Assignment parse_evidence(const std::string& text, int num_vars) {
    detail::Tokenizer tok(text);
    Assignment a(num_vars);
    std::string first;
    if (!tok.next(first)) return a;  // empty file means no evidence
    long long count = 0;
    try {
        std::size_t used = 0;
        count = std::stoll(first, &used);
        if (used != first.size()) throw std::invalid_argument(first);
    } catch (const std::exception&) {
        throw ValidationError("evidence must start with a count, got '" + first + "'");
    }
    if (count < 0) throw ValidationError("negative evidence count");
    for (long long k = 0; k < count; ++k) {
        const long long idx = tok.integer("evidence index");
        const long long val = tok.integer("evidence value");
        if (idx < 0 || idx >= num_vars) {
            throw ValidationError("evidence index " + std::to_string(idx) + " out of range");
        }
        if (val != 0 && val != 1) {
            throw ValidationError("evidence value " + std::to_string(val) + " for variable " +
                                  std::to_string(idx) + " is not binary");
        }
        if (a.contains(static_cast<int>(idx))) {
            throw ValidationError("duplicate evidence index " + std::to_string(idx));
        }
        a.set(static_cast<int>(idx), static_cast<int>(val));
    }
    std::string extra;
    if (tok.next(extra)) throw ValidationError("trailing token '" + extra + "' in evidence");
    return a;
}

inline std::string serialize_evidence(const Assignment& a) {
    std::ostringstream out;
    const auto e = a.entries();
    out << e.size();
    for (auto [v, x] : e) out << " " << v << " " << x;
    out << "\n";
    return out.str();
}

/// Unnormalized log-probability of a full assignment.
inline double log_score(const GraphicalModel& m, const Assignment& full) {
    if (full.num_vars() != m.num_vars || !full.complete()) {
        throw ValidationError("log_score requires a complete assignment");
    }
    double s = 0.0;
    for (const auto& f : m.factors) s += f.at(full);
    return s;
}

inline PrimalGraph primal_graph(const GraphicalModel& m) {
    PrimalGraph g;
    g.adjacency.resize(static_cast<std::size_t>(m.num_vars));
    for (const auto& f : m.factors) {
        for (int a : f.scope) {
            for (int b : f.scope) {
                if (a != b) g.adjacency[static_cast<std::size_t>(a)].push_back(b);
            }
        }
    }
    g.degrees.resize(static_cast<std::size_t>(m.num_vars));
    for (std::size_t v = 0; v < g.adjacency.size(); ++v) {
        auto& adj = g.adjacency[v];
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
        g.degrees[v] = static_cast<int>(adj.size());
    }
    return g;
}

/// Restricts every factor to `partial`. Variables keep their indices. Factors
/// that become fully instantiated (and any existing constants) are folded
/// into one trailing empty-scope factor holding the log offset.
inline GraphicalModel condition(const GraphicalModel& m, const Assignment& partial) {
    if (partial.count() == 0) return m;
    GraphicalModel out;
    out.name = m.name;
    out.num_vars = m.num_vars;
    out.factors.reserve(m.factors.size() + 1);
    double offset = 0.0;
    bool collapsed = false;
    for (const auto& f : m.factors) {
        std::vector<int> kept;
        std::size_t base = 0;  // table index contributed by the assigned variables
        std::vector<std::size_t> kept_stride;
        const std::size_t r = f.scope.size();
        for (std::size_t k = 0; k < r; ++k) {
            const std::size_t stride = std::size_t{1} << (r - 1 - k);
            const int v = f.scope[k];
            if (partial.contains(v)) {
                base += stride * static_cast<std::size_t>(partial[v]);
            } else {
                kept.push_back(v);
                kept_stride.push_back(stride);
            }
        }
        if (kept.size() == r) {
            out.factors.push_back(f);
            continue;
        }
        if (kept.empty()) {
            offset += f.table[base];
            collapsed = true;
            continue;
        }
        LogPotential g;
        g.scope = kept;
        g.table.resize(std::size_t{1} << kept.size());
        for (std::size_t j = 0; j < g.table.size(); ++j) {
            std::size_t idx = base;
            for (std::size_t k = 0; k < kept.size(); ++k) {
                if ((j >> (kept.size() - 1 - k)) & 1U) idx += kept_stride[k];
            }
            g.table[j] = f.table[idx];
        }
        out.factors.push_back(std::move(g));
    }
    if (collapsed) out.factors.push_back(LogPotential{{}, {offset}});
    return out;
}

struct MpeSolution {
    Assignment completion;  // values for the variables free under the evidence
    double log_score = kNegInf;  // log_score of evidence ∪ completion
};

inline constexpr int kBruteForceMaxFree = 25;

/// Exhaustive MPE. Ties go to the lexicographically smallest completion
/// (ascending variable index, value 0 first).
inline MpeSolution brute_force_mpe(const GraphicalModel& m, const Assignment& evidence) {
    const std::vector<int> free = evidence.free_vars();
    if (static_cast<int>(free.size()) > kBruteForceMaxFree) {
        throw ValidationError("brute_force_mpe: " + std::to_string(free.size()) +
                              " free variables exceeds the limit of " +
                              std::to_string(kBruteForceMaxFree));
    }
    const GraphicalModel reduced = condition(m, evidence);
    const std::size_t k = free.size();
    Assignment x = evidence;
    double best = kNegInf;
    std::uint64_t best_code = 0;
    bool found = false;
    for (std::uint64_t code = 0; code < (std::uint64_t{1} << k); ++code) {
        for (std::size_t j = 0; j < k; ++j) x.set(free[j], static_cast<int>((code >> (k - 1 - j)) & 1U));
        double s = 0.0;
        for (const auto& f : reduced.factors) {
            s += f.at(x);
            if (s == kNegInf) break;
        }
        if (!found || s > best) {
            best = s;
            best_code = code;
            found = true;
        }
    }
    MpeSolution sol;
    sol.completion = Assignment(m.num_vars);
    for (std::size_t j = 0; j < k; ++j) {
        sol.completion.set(free[j], static_cast<int>((best_code >> (k - 1 - j)) & 1U));
    }
    sol.log_score = log_score(m, evidence.merged(sol.completion));
    return sol;
}

} // namespace l2c
