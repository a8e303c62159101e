#pragma once

// Supervised data collection from solver traces: random query/evidence splits,
// base and single-variable conditioned solves, composite difficulty stats and
// listwise rank targets. Persisted as JSON lines.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "l2c/bnb.hpp"
#include "l2c/record_io.hpp"
#include "l2c/sampling.hpp"

namespace l2c {

inline constexpr double kStatEpsilon = 1e-6;
inline constexpr int kDatasetVersion = 1;

struct CollectionConfig {
    double query_ratio = 0.75;
    int c_max = 3;
    double budget_s = 1.0;
    int num_samples = 100;
    std::uint64_t seed = 0;
    std::array<double, 3> stat_weights{1.0 / 3, 1.0 / 3, 1.0 / 3};  // time, nodes, objective
    double temperature = 1.0;
    int i_bound = 10;
    GibbsConfig gibbs{200, 5, 0};  // chain that proposes the evidence values
    int threads = 1;

    void validate(int num_vars) const {
        if (!(query_ratio > 0.0 && query_ratio < 1.0)) throw ValidationError("query_ratio must be in (0,1)");
        if (c_max < 0) throw ValidationError("c_max must be >= 0");
        if (c_max > static_cast<int>(std::ceil(query_ratio * num_vars))) {
            throw ValidationError("c_max exceeds ceil(query_ratio * num_vars)");
        }
        if (!(budget_s > 0.0)) throw ValidationError("budget must be positive");
        if (num_samples < 0) throw ValidationError("num_samples must be >= 0");
        double sum = 0.0;
        for (double w : stat_weights) {
            if (!(w >= 0.0)) throw ValidationError("stat weights must be non-negative");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("stat weights must sum to 1");
        if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
        if (i_bound < 1) throw ValidationError("i_bound must be >= 1");
        if (threads < 1) throw ValidationError("threads must be >= 1");
        gibbs.validate();
    }
};

/// c_max given as a fraction of the variable count.
inline int resolve_c_max(double fraction, int num_vars) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("c_max fraction must be in [0,1]");
    return static_cast<int>(std::lround(fraction * num_vars));
}

inline int query_size(double query_ratio, int num_vars) {
    return static_cast<int>(std::lround(query_ratio * num_vars));
}

struct CandidateKey {
    int var = -1;
    int value = 0;
    auto operator<=>(const CandidateKey&) const = default;
};

struct ConditionedResult {
    CandidateKey key;
    SolveRecord rec;
    bool surrogate = false;  // solver hit its budget; stats are from the incumbent and bound trace
};

enum class Split { Train, Val, Test };

inline std::string to_string(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "train";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ValidationError("unknown split '" + s + "'");
}

struct TrainingRecord {
    std::uint64_t seed = 0;
    Assignment evidence;
    SolveRecord base;
    std::vector<ConditionedResult> conditioned;  // sorted by key
    std::vector<std::pair<CandidateKey, double>> rank_targets;  // sorted by key
    Split split = Split::Train;

    bool has_opt_labels() const { return base.status == SolveStatus::Optimal && base.assignment.has_value(); }
    bool has_rank_targets() const { return !rank_targets.empty(); }
};

struct Dataset {
    std::string model_name;
    int num_vars = 0;
    std::vector<TrainingRecord> records;

    std::vector<const TrainingRecord*> split(Split s) const {
        std::vector<const TrainingRecord*> out;
        for (const auto& r : records) {
            if (r.split == s) out.push_back(&r);
        }
        return out;
    }
};

/// Improvement of the global bound between the root and the end of search.
inline double bound_improvement(const SolveRecord& r) {
    if (r.bound_trace.empty()) return 0.0;
    const double d = r.root_bound() - r.final_bound();
    return std::isfinite(d) ? d : 0.0;
}

struct RawStats {
    double time = 0.0;
    double nodes = 0.0;
    double regret = 0.0;
};

inline RawStats raw_stats(const SolveRecord& rec, const SolveRecord& base) {
    RawStats s;
    s.time = rec.wall_time;
    s.nodes = static_cast<double>(rec.nodes_explored);
    if (rec.log_score == kNegInf) {
        s.regret = base.log_score == kNegInf ? 0.0 : kPosInf;
    } else {
        s.regret = std::max(0.0, base.log_score - rec.log_score);
    }
    return s;
}

namespace detail {

// Min-max onto [eps, 1]. Infinite values go to 1 and are left out of the range.
inline std::vector<double> minmax_eps(const std::vector<double>& v) {
    double lo = kPosInf;
    double hi = kNegInf;
    for (double x : v) {
        if (std::isfinite(x)) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    std::vector<double> out(v.size(), kStatEpsilon);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            out[i] = 1.0;
        } else if (hi > lo) {
            out[i] = kStatEpsilon + (1.0 - kStatEpsilon) * (v[i] - lo) / (hi - lo);
        }
    }
    return out;
}

} // namespace detail

/// t_C for every candidate of one instance; smaller means more simplifying.
inline std::vector<double> composite_stats(const std::vector<RawStats>& stats, const std::array<double, 3>& weights) {
    std::vector<double> t(stats.size()), n(stats.size()), r(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) {
        t[i] = stats[i].time;
        n[i] = stats[i].nodes;
        r[i] = stats[i].regret;
    }
    const auto nt = detail::minmax_eps(t);
    const auto nn = detail::minmax_eps(n);
    const auto nr = detail::minmax_eps(r);
    std::vector<double> out(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) {
        out[i] = weights[0] * nt[i] + weights[1] * nn[i] + weights[2] * nr[i];
        // weights may zero out every term; keep t_C positive
        out[i] = std::max(out[i], kStatEpsilon);
    }
    return out;
}

inline std::vector<double> composite_stats(const SolveRecord& base, const std::vector<SolveRecord>& recs,
                                           const std::array<double, 3>& weights) {
    std::vector<RawStats> raw;
    raw.reserve(recs.size());
    for (const auto& r : recs) raw.push_back(raw_stats(r, base));
    return composite_stats(raw, weights);
}

/// softmax((1/t) / temperature).
inline std::vector<double> build_rank_targets(const std::vector<double>& t, double temperature = 1.0) {
    if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
    std::vector<double> z(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(t[i] > 0.0)) throw ValidationError("rank stats must be positive");
        z[i] = (1.0 / t[i]) / temperature;
    }
    if (z.empty()) return z;
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& x : z) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : z) x /= sum;
    return z;
}

/// Validation and test counts for n records at 12:1:1.
inline std::pair<int, int> split_sizes(int n) {
    if (n < 3) return {0, 0};
    const int val = std::max(1, static_cast<int>(std::lround(n / 14.0)));
    const int test = std::max(1, static_cast<int>(std::lround(n / 14.0)));
    return {val, test};
}

inline void assign_splits(Dataset& ds, std::uint64_t seed) {
    const int n = static_cast<int>(ds.records.size());
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(detail::mix64(seed ^ 0x5b11751ULL));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto [val, test] = split_sizes(n);
    for (int k = 0; k < n; ++k) {
        auto& r = ds.records[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
        r.split = k < val ? Split::Val : (k < val + test ? Split::Test : Split::Train);
    }
}

inline std::vector<int> sample_subset(std::vector<int> pool, int k, std::mt19937_64& rng) {
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(static_cast<std::size_t>(std::min<int>(k, static_cast<int>(pool.size()))));
    std::sort(pool.begin(), pool.end());
    return pool;
}

/// One record from a full state `x`.
inline TrainingRecord collect_one(const GraphicalModel& model, const Assignment& x, const CollectionConfig& cfg,
                                  std::uint64_t record_seed) {
    const int n = model.num_vars;
    std::mt19937_64 rng(record_seed);
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    const auto query = sample_subset(all, query_size(cfg.query_ratio, n), rng);

    TrainingRecord rec;
    rec.seed = record_seed;
    rec.evidence = Assignment(n);
    std::vector<bool> in_query(static_cast<std::size_t>(n), false);
    for (int q : query) in_query[static_cast<std::size_t>(q)] = true;
    for (int v = 0; v < n; ++v) {
        if (!in_query[static_cast<std::size_t>(v)]) rec.evidence.set(v, x[v]);
    }
    rec.base = solve_mpe(model, rec.evidence, cfg.budget_s, cfg.i_bound);

    const auto cands = sample_subset(query, cfg.c_max, rng);
    std::vector<SolveRecord> solved;
    for (int c : cands) {
        for (int val : {0, 1}) {
            ConditionedResult cr;
            cr.key = {c, val};
            cr.rec = solve_mpe(model, rec.evidence.with(c, val), cfg.budget_s, cfg.i_bound);
            cr.surrogate = cr.rec.status != SolveStatus::Optimal;
            solved.push_back(cr.rec);
            rec.conditioned.push_back(std::move(cr));
        }
    }
    if (!solved.empty()) {
        const auto p = build_rank_targets(composite_stats(rec.base, solved, cfg.stat_weights), cfg.temperature);
        for (std::size_t i = 0; i < p.size(); ++i) rec.rank_targets.emplace_back(rec.conditioned[i].key, p[i]);
    }
    return rec;
}

inline std::uint64_t record_seed(std::uint64_t seed, std::size_t index) {
    return detail::mix64(detail::mix64(seed) ^ (0x632be59bd9b4e019ULL * (index + 1)));
}

inline Dataset collect(const GraphicalModel& model, const CollectionConfig& cfg) {
    model.validate();
    cfg.validate(model.num_vars);
    Dataset ds;
    ds.model_name = model.name;
    ds.num_vars = model.num_vars;
    if (cfg.num_samples == 0) return ds;

    GibbsConfig g = cfg.gibbs;
    g.seed = detail::mix64(cfg.seed ^ 0x61bb5ULL);
    const auto states = gibbs_sample(model, cfg.num_samples, g);
    ds.records.resize(states.size());

    std::mutex err_mu;
    std::exception_ptr err;
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < states.size(); i += stride) {
            try {
                ds.records[i] = collect_one(model, states[i], cfg, record_seed(cfg.seed, i));
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    const auto nthreads = static_cast<std::size_t>(cfg.threads);
    if (nthreads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(work, t, nthreads);
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);
    assign_splits(ds, cfg.seed);
    return ds;
}

/// Field-by-field equality with wall times ignored.
inline bool same_content(const TrainingRecord& a, const TrainingRecord& b) {
    if (a.seed != b.seed || !(a.evidence == b.evidence) || !a.base.same_outcome(b.base) || a.split != b.split) {
        return false;
    }
    if (a.conditioned.size() != b.conditioned.size() || a.rank_targets != b.rank_targets) return false;
    for (std::size_t i = 0; i < a.conditioned.size(); ++i) {
        const auto& x = a.conditioned[i];
        const auto& y = b.conditioned[i];
        if (x.key != y.key || x.surrogate != y.surrogate || !x.rec.same_outcome(y.rec)) return false;
    }
    return true;
}

inline bool same_content(const Dataset& a, const Dataset& b) {
    if (a.model_name != b.model_name || a.num_vars != b.num_vars || a.records.size() != b.records.size()) return false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        if (!same_content(a.records[i], b.records[i])) return false;
    }
    return true;
}

inline json to_json(const TrainingRecord& r, const std::string& model_name) {
    json j;
    j["model"] = model_name;
    j["seed"] = r.seed;
    j["evidence"] = encode_pairs(r.evidence);
    j["base"] = to_json(r.base);
    json cond = json::array();
    for (const auto& c : r.conditioned) {
        cond.push_back({{"var", c.key.var}, {"val", c.key.value}, {"rec", to_json(c.rec)}, {"surrogate", c.surrogate}});
    }
    j["conditioned"] = std::move(cond);
    json rt = json::array();
    for (const auto& [k, p] : r.rank_targets) rt.push_back({k.var, k.value, p});
    j["rank_targets"] = std::move(rt);
    j["split"] = to_string(r.split);
    return j;
}

inline TrainingRecord training_record_from_json(const json& j, int num_vars) {
    for (const char* key : {"seed", "evidence", "base", "conditioned", "rank_targets", "split"}) {
        if (!j.contains(key)) throw ValidationError(std::string("dataset record missing field '") + key + "'");
    }
    TrainingRecord r;
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
        throw ValidationError("field 'seed' must be an integer");
    }
    r.seed = j["seed"].get<std::uint64_t>();
    r.evidence = decode_pairs(j["evidence"], num_vars);
    r.base = solve_record_from_json(j["base"]);
    auto check_key = [&](const json& var, const json& val) {
        if (!var.is_number_integer() || !val.is_number_integer()) throw ValidationError("candidate keys must be integers");
        CandidateKey k{var.get<int>(), val.get<int>()};
        if (k.var < 0 || k.var >= num_vars || (k.value != 0 && k.value != 1) || r.evidence.contains(k.var)) {
            throw ValidationError("invalid candidate key");
        }
        return k;
    };
    if (!j["conditioned"].is_array()) throw ValidationError("field 'conditioned' must be an array");
    for (const auto& c : j["conditioned"]) {
        if (!c.is_object() || !c.contains("var") || !c.contains("val") || !c.contains("rec") || !c.contains("surrogate")) {
            throw ValidationError("conditioned entries need var, val, rec and surrogate");
        }
        ConditionedResult cr;
        cr.key = check_key(c["var"], c["val"]);
        cr.rec = solve_record_from_json(c["rec"]);
        if (!c["surrogate"].is_boolean()) throw ValidationError("field 'surrogate' must be a boolean");
        cr.surrogate = c["surrogate"].get<bool>();
        r.conditioned.push_back(std::move(cr));
    }
    if (!j["rank_targets"].is_array()) throw ValidationError("field 'rank_targets' must be an array");
    for (const auto& t : j["rank_targets"]) {
        if (!t.is_array() || t.size() != 3) throw ValidationError("rank_targets entries must be [var, val, p]");
        r.rank_targets.emplace_back(check_key(t[0], t[1]), decode_real(t[2], "rank_targets"));
    }
    if (!j["split"].is_string()) throw ValidationError("field 'split' must be a string");
    r.split = parse_split(j["split"].get<std::string>());
    return r;
}

inline std::string serialize_dataset(const Dataset& ds) {
    std::string out;
    json header{{"format", "l2c-dataset"}, {"version", kDatasetVersion}, {"model", ds.model_name},
                {"num_vars", ds.num_vars}};
    out += header.dump() + "\n";
    for (const auto& r : ds.records) out += to_json(r, ds.model_name).dump() + "\n";
    return out;
}

inline Dataset parse_dataset(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("dataset: missing header line");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("dataset header: ") + e.what());
    }
    if (!header.is_object() || header.value("format", "") != "l2c-dataset") {
        throw ValidationError("dataset: not an l2c dataset file");
    }
    if (!header.contains("version") || header["version"] != kDatasetVersion) {
        throw ValidationError("dataset: unsupported version");
    }
    if (!header.contains("num_vars") || !header["num_vars"].is_number_integer() || !header.contains("model") ||
        !header["model"].is_string()) {
        throw ValidationError("dataset header needs model and num_vars");
    }
    Dataset ds;
    ds.model_name = header["model"].get<std::string>();
    ds.num_vars = header["num_vars"].get<int>();
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (!j.is_object()) throw ValidationError("record is not an object");
            ds.records.push_back(training_record_from_json(j, ds.num_vars));
        } catch (const json::exception& e) {
            throw ValidationError("dataset line " + std::to_string(lineno) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) { write_file(path, serialize_dataset(ds)); }

inline Dataset load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

} // namespace l2c
