#pragma once

// JSON encoding of solver records. Non-finite reals travel as the strings
// "-inf", "inf" and "nan" since JSON has no literal for them.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "l2c/bnb.hpp"

namespace l2c {

using json = nlohmann::json;

inline json encode_real(double v) {
    if (std::isnan(v)) return "nan";
    if (v == kPosInf) return "inf";
    if (v == kNegInf) return "-inf";
    return v;
}

inline double decode_real(const json& j, const char* field) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "-inf") return kNegInf;
        if (s == "inf") return kPosInf;
        if (s == "nan") return std::nan("");
    }
    throw ValidationError(std::string("field '") + field + "' is not a real number");
}

/// Dense list of bits; only valid for complete assignments.
inline json encode_full_assignment(const Assignment& a) {
    json arr = json::array();
    for (int i = 0; i < a.num_vars(); ++i) arr.push_back(a[i]);
    return arr;
}

inline Assignment decode_full_assignment(const json& j) {
    if (!j.is_array()) throw ValidationError("assignment must be an array of bits");
    Assignment a(static_cast<int>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number_integer()) throw ValidationError("assignment entries must be 0 or 1");
        a.set(static_cast<int>(i), j[i].get<int>());
    }
    return a;
}

/// [[idx, val], ...] in ascending index order.
inline json encode_pairs(const Assignment& a) {
    json arr = json::array();
    for (auto [v, x] : a.entries()) arr.push_back({v, x});
    return arr;
}

inline Assignment decode_pairs(const json& j, int num_vars) {
    if (!j.is_array()) throw ValidationError("evidence must be an array of [index, value] pairs");
    Assignment a(num_vars);
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
            throw ValidationError("evidence entries must be [index, value] pairs");
        }
        const int v = p[0].get<int>();
        if (v < 0 || v >= num_vars) throw ValidationError("evidence index out of range");
        if (a.contains(v)) throw ValidationError("duplicate evidence index " + std::to_string(v));
        a.set(v, p[1].get<int>());
    }
    return a;
}

inline json to_json(const SolveRecord& r) {
    json j;
    j["assignment"] = r.assignment ? encode_full_assignment(*r.assignment) : json(nullptr);
    j["log_score"] = encode_real(r.log_score);
    j["wall_time_s"] = r.wall_time;
    j["nodes"] = r.nodes_explored;
    j["status"] = to_string(r.status);
    json trace = json::array();
    for (const auto& [n, b] : r.bound_trace) trace.push_back({n, encode_real(b)});
    j["bound_trace"] = std::move(trace);
    return j;
}

inline SolveRecord solve_record_from_json(const json& j) {
    for (const char* key : {"assignment", "log_score", "wall_time_s", "nodes", "status", "bound_trace"}) {
        if (!j.contains(key)) throw ValidationError(std::string("solve record missing field '") + key + "'");
    }
    SolveRecord r;
    if (!j["assignment"].is_null()) r.assignment = decode_full_assignment(j["assignment"]);
    r.log_score = decode_real(j["log_score"], "log_score");
    r.wall_time = decode_real(j["wall_time_s"], "wall_time_s");
    if (!j["nodes"].is_number_integer()) throw ValidationError("field 'nodes' must be an integer");
    r.nodes_explored = j["nodes"].get<std::int64_t>();
    if (!j["status"].is_string()) throw ValidationError("field 'status' must be a string");
    r.status = parse_status(j["status"].get<std::string>());
    if (!j["bound_trace"].is_array()) throw ValidationError("field 'bound_trace' must be an array");
    for (const auto& e : j["bound_trace"]) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer()) {
            throw ValidationError("bound_trace entries must be [nodes, bound] pairs");
        }
        r.bound_trace.emplace_back(e[0].get<std::int64_t>(), decode_real(e[1], "bound_trace"));
    }
    if (r.status == SolveStatus::Optimal && !r.assignment) {
        throw ValidationError("optimal solve record without assignment");
    }
    return r;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write '" + path + "'");
    out << content;
    if (!out) throw MissingArtifactError("failed writing '" + path + "'");
}

} // namespace l2c
