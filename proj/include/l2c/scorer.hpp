#pragma once

// Dual-head attention scorer. Each free variable contributes two candidate
// tokens (value 0 and value 1) that cross-attend to the evidence tokens; a
// residual MLP encoder feeds an optimality head (probability the pair is in an
// optimal solution) and a simplification head (raw ranking score).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "l2c/dataset.hpp"
#include "l2c/record_io.hpp"
#include "l2c/tensor.hpp"

namespace l2c {

inline constexpr int kCheckpointVersion = 1;
inline constexpr double kProbClamp = 1e-7;

struct ScorerHyper {
    int num_vars = 0;
    int d = 32;
    int heads = 2;
    int attn_layers = 2;
    int blocks = 3;
    int hidden = 512;
    double dropout = 0.1;

    void validate() const {
        if (num_vars < 1) throw ValidationError("scorer: num_vars must be >= 1");
        if (d < 1 || heads < 1 || d % heads != 0) throw ValidationError("scorer: d must be a positive multiple of heads");
        if (attn_layers < 0) throw ValidationError("scorer: attn_layers must be >= 0");
        if (blocks < 1) throw ValidationError("scorer: need at least one encoder block");
        if (hidden < 1) throw ValidationError("scorer: hidden width must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("scorer: dropout must be in [0,1)");
    }
    bool operator==(const ScorerHyper&) const = default;
};

/// Parameter slots, in storage order.
struct ScorerLayout {
    int value_emb = 0;
    int status_emb = 1;
    int attn0 = 2;       // 4 per layer: wq wk wv wo
    int enc0 = 0;        // 4 per block: w1 b1 w2 b2
    int proj = 0;        // first block's input projection
    int opt0 = 0;        // w1 b1 w2 b2
    int simp0 = 0;
    int count = 0;

    explicit ScorerLayout(const ScorerHyper& h) {
        enc0 = attn0 + 4 * h.attn_layers;
        proj = enc0 + 4 * h.blocks;
        opt0 = proj + 1;
        simp0 = opt0 + 4;
        count = simp0 + 4;
    }
    int wq(int l) const { return attn0 + 4 * l; }
    int wk(int l) const { return attn0 + 4 * l + 1; }
    int wv(int l) const { return attn0 + 4 * l + 2; }
    int wo(int l) const { return attn0 + 4 * l + 3; }
    int w1(int b) const { return enc0 + 4 * b; }
    int b1(int b) const { return enc0 + 4 * b + 1; }
    int w2(int b) const { return enc0 + 4 * b + 2; }
    int b2(int b) const { return enc0 + 4 * b + 3; }
};

inline std::vector<std::pair<std::string, std::vector<int>>> parameter_specs(const ScorerHyper& h) {
    const int d = h.d;
    const int H = h.hidden;
    std::vector<std::pair<std::string, std::vector<int>>> s;
    s.push_back({"value_embeddings", {2 * h.num_vars, d}});
    s.push_back({"status_embeddings", {2, d}});
    for (int l = 0; l < h.attn_layers; ++l) {
        const std::string p = "attn." + std::to_string(l) + ".";
        for (const char* w : {"wq", "wk", "wv", "wo"}) s.push_back({p + w, {d, d}});
    }
    for (int b = 0; b < h.blocks; ++b) {
        const std::string p = "enc." + std::to_string(b) + ".";
        s.push_back({p + "w1", {b == 0 ? 2 * d : d, H}});
        s.push_back({p + "b1", {H}});
        s.push_back({p + "w2", {H, d}});
        s.push_back({p + "b2", {d}});
    }
    s.push_back({"enc.0.proj", {2 * d, d}});
    for (const char* head : {"opt.", "simp."}) {
        s.push_back({std::string(head) + "w1", {d, H}});
        s.push_back({std::string(head) + "b1", {H}});
        s.push_back({std::string(head) + "w2", {H, 1}});
        s.push_back({std::string(head) + "b2", {1}});
    }
    return s;
}

struct ScorerNetwork {
    ScorerHyper hyper;
    std::vector<std::string> names;
    std::vector<Tensor> params;

    ScorerNetwork() = default;
    /// All-zero parameters.
    explicit ScorerNetwork(const ScorerHyper& h) : hyper(h) {
        h.validate();
        for (auto& [name, shape] : parameter_specs(h)) {
            names.push_back(name);
            params.emplace_back(shape);
        }
    }

    std::size_t num_parameters() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p.size();
        return n;
    }
    Tensor& param(const std::string& name) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return params[i];
        }
        throw ValidationError("scorer: no parameter named '" + name + "'");
    }
    bool operator==(const ScorerNetwork&) const = default;
};

/// Seeded initialization: Glorot-uniform weights, zero biases, N(0, 0.5) embeddings.
inline ScorerNetwork init_network(const ScorerHyper& h, std::uint64_t seed) {
    ScorerNetwork net(h);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> emb(0.0, 0.5);
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        auto& t = net.params[i];
        if (i < 2) {
            for (auto& x : t.data) x = emb(rng);
        } else if (t.shape.size() == 2) {
            const double a = std::sqrt(6.0 / (t.shape[0] + t.shape[1]));
            std::uniform_real_distribution<double> u(-a, a);
            for (auto& x : t.data) x = u(rng);
        }
    }
    return net;
}

inline void check_compatible(const ScorerNetwork& net, int num_vars) {
    if (net.hyper.num_vars != num_vars) {
        throw ValidationError("checkpoint built for " + std::to_string(net.hyper.num_vars) +
                              " variables, model has " + std::to_string(num_vars));
    }
}

inline constexpr int kObserved = 0;
inline constexpr int kUnobserved = 1;

/// Evidence and candidate tokens. Candidates are ordered by variable, value 0 first.
template <class T = double>
std::pair<Mat<T>, Mat<T>> build_tokens_t(const ScorerHyper& h, const std::vector<const T*>& P,
                                         const Assignment& evidence, const std::vector<int>& free) {
    const int d = h.d;
    if (evidence.num_vars() != h.num_vars) throw ValidationError("build_tokens: evidence size mismatch");
    const auto ev = evidence.entries();
    Mat<T> E(static_cast<int>(ev.size()), d);
    Mat<T> X(2 * static_cast<int>(free.size()), d);
    const T* val = P[0];
    const T* st = P[1];
    for (std::size_t i = 0; i < ev.size(); ++i) {
        const auto [v, x] = ev[i];
        const T* e = val + static_cast<std::size_t>(2 * v + x) * static_cast<std::size_t>(d);
        for (int c = 0; c < d; ++c) E(static_cast<int>(i), c) = e[c] + st[kObserved * d + c];
    }
    for (std::size_t j = 0; j < free.size(); ++j) {
        const int v = free[j];
        if (v < 0 || v >= h.num_vars) throw ValidationError("build_tokens: variable out of range");
        if (evidence.contains(v)) throw ValidationError("build_tokens: variable " + std::to_string(v) + " is both evidence and free");
        if (j > 0 && free[j - 1] >= v) throw ValidationError("build_tokens: free set must be strictly ascending");
        for (int q = 0; q < 2; ++q) {
            const T* e = val + static_cast<std::size_t>(2 * v + q) * static_cast<std::size_t>(d);
            for (int c = 0; c < d; ++c) X(static_cast<int>(2 * j) + q, c) = e[c] + st[kUnobserved * d + c];
        }
    }
    return {std::move(E), std::move(X)};
}

template <class T>
std::vector<const T*> param_pointers(const std::vector<std::vector<T>>& p) {
    std::vector<const T*> out;
    for (const auto& v : p) out.push_back(v.data());
    return out;
}

inline std::vector<const double*> param_pointers(const ScorerNetwork& net) {
    std::vector<const double*> out;
    for (const auto& t : net.params) out.push_back(t.data.data());
    return out;
}

inline std::pair<Mat<double>, Mat<double>> build_tokens(const ScorerNetwork& net, const Assignment& evidence,
                                                        const std::vector<int>& free) {
    return build_tokens_t<double>(net.hyper, param_pointers(net), evidence, free);
}

template <class T>
struct ForwardCache {
    Mat<T> ev, x0;
    struct Attn {
        Mat<T> hin, q, k, v, c;
        std::vector<Mat<T>> a;  // per head [k, m]
    };
    std::vector<Attn> attn;
    Mat<T> z;
    struct Block {
        Mat<T> in, pre, u;
        std::vector<T> mask;  // empty when dropout is off
    };
    std::vector<Block> blocks;
    Mat<T> r;
    Mat<T> opt_pre, opt_h, simp_pre, simp_h;
    std::vector<T> logit, yhat, s;
};

template <class T>
T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <class T>
void forward_t(const ScorerHyper& h, const std::vector<const T*>& P, const Assignment& evidence,
               const std::vector<int>& free, std::mt19937_64* dropout_rng, ForwardCache<T>& c) {
    const ScorerLayout L(h);
    const int d = h.d;
    const int H = h.hidden;
    const int dh = d / h.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    std::tie(c.ev, c.x0) = build_tokens_t<T>(h, P, evidence, free);
    const int k = c.x0.rows;
    const int m = c.ev.rows;

    c.attn.assign(static_cast<std::size_t>(h.attn_layers), {});
    Mat<T> cur = c.x0;
    for (int l = 0; l < h.attn_layers; ++l) {
        auto& A = c.attn[static_cast<std::size_t>(l)];
        A.hin = cur;
        if (m == 0) {
            A.c = Mat<T>(k, d);
            cur = Mat<T>(k, d);
            continue;
        }
        A.q = matmul(cur, P[static_cast<std::size_t>(L.wq(l))], d);
        A.k = matmul(c.ev, P[static_cast<std::size_t>(L.wk(l))], d);
        A.v = matmul(c.ev, P[static_cast<std::size_t>(L.wv(l))], d);
        A.c = Mat<T>(k, d);
        A.a.assign(static_cast<std::size_t>(h.heads), Mat<T>(k, m));
        for (int hd = 0; hd < h.heads; ++hd) {
            auto& att = A.a[static_cast<std::size_t>(hd)];
            const int off = hd * dh;
            for (int i = 0; i < k; ++i) {
                T mx = -std::numeric_limits<T>::infinity();
                for (int j = 0; j < m; ++j) {
                    T sdot = 0;
                    for (int t = 0; t < dh; ++t) sdot += A.q(i, off + t) * A.k(j, off + t);
                    att(i, j) = sdot * scale;
                    mx = std::max(mx, att(i, j));
                }
                T sum = 0;
                for (int j = 0; j < m; ++j) {
                    att(i, j) = std::exp(att(i, j) - mx);
                    sum += att(i, j);
                }
                for (int j = 0; j < m; ++j) {
                    att(i, j) /= sum;
                    for (int t = 0; t < dh; ++t) A.c(i, off + t) += att(i, j) * A.v(j, off + t);
                }
            }
        }
        cur = matmul(A.c, P[static_cast<std::size_t>(L.wo(l))], d);
    }

    c.z = Mat<T>(k, 2 * d);
    for (int i = 0; i < k; ++i) {
        for (int t = 0; t < d; ++t) {
            c.z(i, t) = cur(i, t);
            c.z(i, d + t) = c.x0(i, t);
        }
    }

    c.blocks.assign(static_cast<std::size_t>(h.blocks), {});
    Mat<T> r;
    for (int b = 0; b < h.blocks; ++b) {
        auto& B = c.blocks[static_cast<std::size_t>(b)];
        B.in = b == 0 ? c.z : r;
        B.pre = matmul(B.in, P[static_cast<std::size_t>(L.w1(b))], H);
        add_bias(B.pre, P[static_cast<std::size_t>(L.b1(b))]);
        B.u = relu(B.pre);
        if (dropout_rng && h.dropout > 0.0) {
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            const T keep = T(1) / T(1.0 - h.dropout);
            B.mask.resize(B.u.a.size());
            for (std::size_t i = 0; i < B.u.a.size(); ++i) {
                B.mask[i] = u01(*dropout_rng) < h.dropout ? T(0) : keep;
                B.u.a[i] *= B.mask[i];
            }
        }
        Mat<T> out = matmul(B.u, P[static_cast<std::size_t>(L.w2(b))], d);
        add_bias(out, P[static_cast<std::size_t>(L.b2(b))]);
        if (b == 0) {
            add_inplace(out, matmul(c.z, P[static_cast<std::size_t>(L.proj)], d));
        } else {
            add_inplace(out, B.in);
        }
        r = std::move(out);
    }
    c.r = r;

    auto head = [&](int base, Mat<T>& pre, Mat<T>& hid) {
        pre = matmul(c.r, P[static_cast<std::size_t>(base)], H);
        add_bias(pre, P[static_cast<std::size_t>(base + 1)]);
        hid = relu(pre);
        Mat<T> o = matmul(hid, P[static_cast<std::size_t>(base + 2)], 1);
        add_bias(o, P[static_cast<std::size_t>(base + 3)]);
        return o.a;
    };
    c.logit = head(L.opt0, c.opt_pre, c.opt_h);
    c.s = head(L.simp0, c.simp_pre, c.simp_h);
    c.yhat.resize(c.logit.size());
    for (std::size_t i = 0; i < c.logit.size(); ++i) c.yhat[i] = sigmoid(c.logit[i]);
}

struct CandidateScore {
    int var = -1;
    int value = 0;
    double opt = 0.5;   // ŷ
    double simp = 0.0;  // s
};

/// Scores both values of every free variable of `evidence`.
inline std::vector<CandidateScore> score_candidates(const ScorerNetwork& net, const Assignment& evidence) {
    const auto free = evidence.free_vars();
    ForwardCache<double> c;
    forward_t<double>(net.hyper, param_pointers(net), evidence, free, nullptr, c);
    std::vector<CandidateScore> out;
    for (std::size_t j = 0; j < free.size(); ++j) {
        for (int q = 0; q < 2; ++q) {
            const std::size_t i = 2 * j + static_cast<std::size_t>(q);
            out.push_back({free[j], q, c.yhat[i], c.s[i]});
        }
    }
    return out;
}

// ---- losses ----

template <class T>
T loss_opt(const std::vector<T>& yhat, const std::vector<int>& y) {
    if (yhat.size() != y.size()) throw ValidationError("loss_opt: size mismatch");
    T loss = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const T p = std::clamp(yhat[i], T(kProbClamp), T(1 - kProbClamp));
        loss -= y[i] ? std::log(p) : std::log(T(1) - p);
    }
    return loss;
}

/// d loss_opt / d ŷ; zero where the clamp is active.
inline std::vector<double> loss_opt_grad(const std::vector<double>& yhat, const std::vector<int>& y) {
    std::vector<double> g(y.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = yhat[i];
        if (p < kProbClamp || p > 1 - kProbClamp) continue;
        g[i] = y[i] ? -1.0 / p : 1.0 / (1.0 - p);
    }
    return g;
}

template <class T>
T loss_rank(const std::vector<T>& s, const std::vector<double>& p, const std::vector<int>& mask) {
    if (mask.empty()) throw ValidationError("loss_rank: empty mask");
    if (p.size() != mask.size()) throw ValidationError("loss_rank: targets and mask differ in size");
    T mx = -std::numeric_limits<T>::infinity();
    for (int i : mask) mx = std::max(mx, s[static_cast<std::size_t>(i)]);
    T sum = 0;
    for (int i : mask) sum += std::exp(s[static_cast<std::size_t>(i)] - mx);
    const T lse = mx + std::log(sum);
    T loss = 0;
    for (std::size_t k = 0; k < mask.size(); ++k) loss -= T(p[k]) * (s[static_cast<std::size_t>(mask[k])] - lse);
    return loss;
}

/// Softmax of `s` over the masked entries, in mask order.
inline std::vector<double> masked_softmax(const std::vector<double>& s, const std::vector<int>& mask) {
    double mx = kNegInf;
    for (int i : mask) mx = std::max(mx, s[static_cast<std::size_t>(i)]);
    std::vector<double> out;
    double sum = 0;
    for (int i : mask) {
        out.push_back(std::exp(s[static_cast<std::size_t>(i)] - mx));
        sum += out.back();
    }
    for (double& x : out) x /= sum;
    return out;
}

/// d loss_rank / d s over all candidates; exactly zero off the mask.
inline std::vector<double> loss_rank_grad(const std::vector<double>& s, const std::vector<double>& p,
                                          const std::vector<int>& mask) {
    std::vector<double> g(s.size(), 0.0);
    const auto ph = masked_softmax(s, mask);
    double psum = 0;
    for (double x : p) psum += x;
    for (std::size_t k = 0; k < mask.size(); ++k) g[static_cast<std::size_t>(mask[k])] = ph[k] * psum - p[k];
    return g;
}

/// One supervised example: evidence, per-candidate optimality labels and the
/// ranking targets over the conditioned candidates.
struct ScorerInstance {
    Assignment evidence;
    std::vector<int> free;
    std::optional<std::vector<int>> labels;
    std::vector<int> rank_mask;  // candidate indices
    std::vector<double> rank_p;
};

inline ScorerInstance make_instance(const TrainingRecord& r) {
    ScorerInstance ins;
    ins.evidence = r.evidence;
    ins.free = r.evidence.free_vars();
    if (r.has_opt_labels()) {
        std::vector<int> y;
        for (int v : ins.free) {
            const int opt = (*r.base.assignment)[v];
            y.push_back(opt == 0 ? 1 : 0);
            y.push_back(opt == 1 ? 1 : 0);
        }
        ins.labels = std::move(y);
    }
    for (const auto& [key, p] : r.rank_targets) {
        const auto it = std::lower_bound(ins.free.begin(), ins.free.end(), key.var);
        if (it == ins.free.end() || *it != key.var) throw ValidationError("rank target on a non-free variable");
        ins.rank_mask.push_back(2 * static_cast<int>(it - ins.free.begin()) + key.value);
        ins.rank_p.push_back(p);
    }
    return ins;
}

inline bool has_supervision(const ScorerInstance& ins) { return ins.labels.has_value() || !ins.rank_mask.empty(); }

template <class T>
T loss_total_from(const ForwardCache<T>& c, const ScorerInstance& ins, double lambda_opt) {
    if (!has_supervision(ins)) throw ValidationError("loss_total: instance has neither supervision source");
    T loss = 0;
    if (ins.labels) loss += T(lambda_opt) * loss_opt(c.yhat, *ins.labels);
    if (!ins.rank_mask.empty()) loss += T(1.0 - lambda_opt) * loss_rank(c.s, ins.rank_p, ins.rank_mask);
    return loss;
}

template <class T>
T loss_total_t(const ScorerHyper& h, const std::vector<const T*>& P, const ScorerInstance& ins, double lambda_opt) {
    ForwardCache<T> c;
    forward_t<T>(h, P, ins.evidence, ins.free, nullptr, c);
    return loss_total_from(c, ins, lambda_opt);
}

inline double loss_total(const ScorerNetwork& net, const ScorerInstance& ins, double lambda_opt) {
    return loss_total_t<double>(net.hyper, param_pointers(net), ins, lambda_opt);
}

using Gradients = std::vector<std::vector<double>>;

inline Gradients zero_gradients(const ScorerNetwork& net) {
    Gradients g;
    for (const auto& p : net.params) g.emplace_back(p.size(), 0.0);
    return g;
}

/// Accumulates weight * dL/dθ into `grads`.
inline void backward(const ScorerNetwork& net, const ForwardCache<double>& c, const ScorerInstance& ins,
                     double lambda_opt, double weight, Gradients& grads) {
    const auto& h = net.hyper;
    const ScorerLayout L(h);
    const auto P = param_pointers(net);
    const int d = h.d;
    const int H = h.hidden;
    const int dh = d / h.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const int k = c.x0.rows;
    const int m = c.ev.rows;
    auto G = [&](int idx) { return grads[static_cast<std::size_t>(idx)].data(); };

    Mat<double> dlogit(k, 1), ds(k, 1);
    if (ins.labels) {
        const auto gy = loss_opt_grad(c.yhat, *ins.labels);
        for (int i = 0; i < k; ++i) {
            const double y = c.yhat[static_cast<std::size_t>(i)];
            dlogit(i, 0) = weight * lambda_opt * gy[static_cast<std::size_t>(i)] * y * (1 - y);
        }
    }
    if (!ins.rank_mask.empty()) {
        const auto gs = loss_rank_grad(c.s, ins.rank_p, ins.rank_mask);
        for (int i = 0; i < k; ++i) ds(i, 0) = weight * (1 - lambda_opt) * gs[static_cast<std::size_t>(i)];
    }

    Mat<double> dr(k, d);
    auto head_back = [&](int base, const Mat<double>& pre, const Mat<double>& hid, const Mat<double>& dout) {
        add_matmul_tn(hid, dout, G(base + 2));
        add_column_sums(dout, G(base + 3));
        Mat<double> dh_ = matmul_wt(dout, P[static_cast<std::size_t>(base + 2)], H);
        for (std::size_t i = 0; i < dh_.a.size(); ++i) {
            if (!(pre.a[i] > 0)) dh_.a[i] = 0;
        }
        add_matmul_tn(c.r, dh_, G(base));
        add_column_sums(dh_, G(base + 1));
        add_inplace(dr, matmul_wt(dh_, P[static_cast<std::size_t>(base)], d));
    };
    head_back(L.opt0, c.opt_pre, c.opt_h, dlogit);
    head_back(L.simp0, c.simp_pre, c.simp_h, ds);

    Mat<double> dz(k, 2 * d);
    for (int b = h.blocks - 1; b >= 0; --b) {
        const auto& B = c.blocks[static_cast<std::size_t>(b)];
        add_matmul_tn(B.u, dr, G(L.w2(b)));
        add_column_sums(dr, G(L.b2(b)));
        Mat<double> du = matmul_wt(dr, P[static_cast<std::size_t>(L.w2(b))], H);
        for (std::size_t i = 0; i < du.a.size(); ++i) {
            if (!B.mask.empty()) du.a[i] *= B.mask[i];
            if (!(B.pre.a[i] > 0)) du.a[i] = 0;
        }
        add_matmul_tn(B.in, du, G(L.w1(b)));
        add_column_sums(du, G(L.b1(b)));
        const int in_w = b == 0 ? 2 * d : d;
        Mat<double> din = matmul_wt(du, P[static_cast<std::size_t>(L.w1(b))], in_w);
        if (b == 0) {
            add_matmul_tn(c.z, dr, G(L.proj));
            add_inplace(din, matmul_wt(dr, P[static_cast<std::size_t>(L.proj)], 2 * d));
            dz = std::move(din);
        } else {
            add_inplace(din, dr);
            dr = std::move(din);
        }
    }

    Mat<double> dcur(k, d), dx0(k, d), dev(m, d);
    for (int i = 0; i < k; ++i) {
        for (int t = 0; t < d; ++t) {
            dcur(i, t) = dz(i, t);
            dx0(i, t) = dz(i, d + t);
        }
    }
    for (int l = h.attn_layers - 1; l >= 0; --l) {
        const auto& A = c.attn[static_cast<std::size_t>(l)];
        if (m == 0) {
            dcur = Mat<double>(k, d);  // the layer output is the constant 0
            continue;
        }
        add_matmul_tn(A.c, dcur, G(L.wo(l)));
        Mat<double> dc = matmul_wt(dcur, P[static_cast<std::size_t>(L.wo(l))], d);
        Mat<double> dq(k, d), dk(m, d), dv(m, d);
        for (int hd = 0; hd < h.heads; ++hd) {
            const auto& att = A.a[static_cast<std::size_t>(hd)];
            const int off = hd * dh;
            for (int i = 0; i < k; ++i) {
                std::vector<double> da(static_cast<std::size_t>(m));
                double dot = 0;
                for (int j = 0; j < m; ++j) {
                    double acc = 0;
                    for (int t = 0; t < dh; ++t) {
                        acc += dc(i, off + t) * A.v(j, off + t);
                        dv(j, off + t) += att(i, j) * dc(i, off + t);
                    }
                    da[static_cast<std::size_t>(j)] = acc;
                    dot += acc * att(i, j);
                }
                for (int j = 0; j < m; ++j) {
                    const double dsij = att(i, j) * (da[static_cast<std::size_t>(j)] - dot) * scale;
                    if (dsij == 0) continue;
                    for (int t = 0; t < dh; ++t) {
                        dq(i, off + t) += dsij * A.k(j, off + t);
                        dk(j, off + t) += dsij * A.q(i, off + t);
                    }
                }
            }
        }
        add_matmul_tn(A.hin, dq, G(L.wq(l)));
        add_matmul_tn(c.ev, dk, G(L.wk(l)));
        add_matmul_tn(c.ev, dv, G(L.wv(l)));
        add_inplace(dev, matmul_wt(dk, P[static_cast<std::size_t>(L.wk(l))], d));
        add_inplace(dev, matmul_wt(dv, P[static_cast<std::size_t>(L.wv(l))], d));
        dcur = matmul_wt(dq, P[static_cast<std::size_t>(L.wq(l))], d);
    }
    add_inplace(dx0, dcur);

    double* gval = G(L.value_emb);
    double* gst = G(L.status_emb);
    const auto ev = ins.evidence.entries();
    for (std::size_t i = 0; i < ev.size(); ++i) {
        const auto [v, x] = ev[i];
        for (int t = 0; t < d; ++t) {
            const double g = dev(static_cast<int>(i), t);
            gval[static_cast<std::size_t>((2 * v + x) * d + t)] += g;
            gst[static_cast<std::size_t>(kObserved * d + t)] += g;
        }
    }
    for (std::size_t j = 0; j < ins.free.size(); ++j) {
        for (int q = 0; q < 2; ++q) {
            const int row = static_cast<int>(2 * j) + q;
            for (int t = 0; t < d; ++t) {
                const double g = dx0(row, t);
                gval[static_cast<std::size_t>((2 * ins.free[j] + q) * d + t)] += g;
                gst[static_cast<std::size_t>(kUnobserved * d + t)] += g;
            }
        }
    }
}

/// Loss and gradient of one instance, dropout off.
inline double loss_and_gradient(const ScorerNetwork& net, const ScorerInstance& ins, double lambda_opt,
                                Gradients& grads) {
    ForwardCache<double> c;
    forward_t<double>(net.hyper, param_pointers(net), ins.evidence, ins.free, nullptr, c);
    const double loss = loss_total_from(c, ins, lambda_opt);
    backward(net, c, ins, lambda_opt, 1.0, grads);
    return loss;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Central differences over every parameter. The perturbed losses are
/// evaluated in extended precision so rounding noise stays far below `step`.
inline GradCheckResult grad_check(const ScorerNetwork& net, const ScorerInstance& ins, double lambda_opt,
                                  double step = 1e-5) {
    Gradients g = zero_gradients(net);
    loss_and_gradient(net, ins, lambda_opt, g);
    std::vector<std::vector<long double>> P;
    for (const auto& t : net.params) P.emplace_back(t.data.begin(), t.data.end());
    GradCheckResult res;
    for (std::size_t p = 0; p < P.size(); ++p) {
        for (std::size_t i = 0; i < P[p].size(); ++i) {
            const long double orig = P[p][i];
            P[p][i] = orig + step;
            const long double up = loss_total_t<long double>(net.hyper, param_pointers(P), ins, lambda_opt);
            P[p][i] = orig - step;
            const long double dn = loss_total_t<long double>(net.hyper, param_pointers(P), ins, lambda_opt);
            P[p][i] = orig;
            const double fd = static_cast<double>((up - dn) / (2.0L * step));
            const double ga = g[p][i];
            const double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
            if (rel > res.max_rel_error) res = {rel, net.names[p], i, ga, fd};
        }
    }
    return res;
}

// ---- optimization ----

struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    Gradients m, v;

    void step(std::vector<double*> params, const Gradients& grads, double lr) {
        if (m.empty()) {
            for (const auto& g : grads) {
                m.emplace_back(g.size(), 0.0);
                v.emplace_back(g.size(), 0.0);
            }
        }
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t p = 0; p < grads.size(); ++p) {
            for (std::size_t i = 0; i < grads[p].size(); ++i) {
                const double g = grads[p][i];
                m[p][i] = beta1 * m[p][i] + (1 - beta1) * g;
                v[p][i] = beta2 * v[p][i] + (1 - beta2) * g * g;
                params[p][i] -= lr * (m[p][i] / c1) / (std::sqrt(v[p][i] / c2) + eps);
            }
        }
    }

    void step(ScorerNetwork& net, const Gradients& grads, double lr) {
        std::vector<double*> ptrs;
        for (auto& t_ : net.params) ptrs.push_back(t_.data.data());
        step(ptrs, grads, lr);
    }
};

struct TrainConfig {
    double lr = 8e-4;
    double lr_decay = 0.97;
    int batch_size = 128;
    int max_epochs = 50;
    int patience = 5;
    double lambda_opt = 0.4;
    std::uint64_t seed = 0;
    bool dropout_enabled = true;

    void validate() const {
        if (!(lr > 0.0)) throw ValidationError("train: lr must be positive");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ValidationError("train: lr_decay must be in (0,1]");
        if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
        if (max_epochs < 1) throw ValidationError("train: max_epochs must be >= 1");
        if (patience < 1) throw ValidationError("train: patience must be >= 1");
        if (!(lambda_opt >= 0.0 && lambda_opt <= 1.0)) throw ValidationError("train: lambda_opt must be in [0,1]");
    }
};

inline double lr_at_epoch(const TrainConfig& cfg, int epoch) { return cfg.lr * std::pow(cfg.lr_decay, epoch); }

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    ScorerNetwork net;  // best validation epoch
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_loss = kPosInf;
};

/// One Adam step on the mean loss of `batch`. Returns that mean.
inline double train_step(ScorerNetwork& net, Adam& opt, const std::vector<const ScorerInstance*>& batch,
                         double lambda_opt, double lr, std::mt19937_64* dropout_rng) {
    Gradients g = zero_gradients(net);
    const auto P = param_pointers(net);
    const double w = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ForwardCache<double> c;
        forward_t<double>(net.hyper, P, batch[i]->evidence, batch[i]->free, dropout_rng, c);
        const double loss = loss_total_from(c, *batch[i], lambda_opt);
        if (!std::isfinite(loss)) {
            throw ValidationError("train: non-finite loss on batch instance " + std::to_string(i));
        }
        total += loss;
        backward(net, c, *batch[i], lambda_opt, w, g);
    }
    opt.step(net, g, lr);
    return total * w;
}

inline double mean_loss(const ScorerNetwork& net, const std::vector<ScorerInstance>& data, double lambda_opt) {
    if (data.empty()) return kPosInf;
    double s = 0.0;
    for (const auto& ins : data) s += loss_total(net, ins, lambda_opt);
    return s / static_cast<double>(data.size());
}

inline std::vector<ScorerInstance> instances_of(const Dataset& ds, Split split) {
    std::vector<ScorerInstance> out;
    for (const auto* r : ds.split(split)) {
        auto ins = make_instance(*r);
        if (has_supervision(ins)) out.push_back(std::move(ins));
    }
    return out;
}

/// Mini-batch Adam with per-epoch lr decay and early stopping on the
/// validation loss (training loss when there is no validation split).
inline TrainResult train(const std::vector<ScorerInstance>& train_set, const std::vector<ScorerInstance>& val_set,
                         ScorerNetwork net, const TrainConfig& cfg,
                         const std::function<void(const EpochStats&)>& on_epoch = nullptr) {
    cfg.validate();
    if (train_set.empty()) throw ValidationError("train: empty training split");
    TrainResult res;
    res.net = net;
    Adam opt;
    std::mt19937_64 rng(cfg.seed);
    std::mt19937_64 drop_rng(detail::mix64(cfg.seed ^ 0xd209ULL));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    int stale = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<const ScorerInstance*> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i) {
                batch.push_back(&train_set[order[i]]);
            }
            sum += train_step(net, opt, batch, cfg.lambda_opt, lr, cfg.dropout_enabled ? &drop_rng : nullptr) *
                   static_cast<double>(batch.size());
        }
        EpochStats st{epoch, lr, sum / static_cast<double>(train_set.size()), 0.0};
        st.val_loss = val_set.empty() ? mean_loss(net, train_set, cfg.lambda_opt) : mean_loss(net, val_set, cfg.lambda_opt);
        res.history.push_back(st);
        if (on_epoch) on_epoch(st);
        if (st.val_loss < res.best_val_loss) {
            res.best_val_loss = st.val_loss;
            res.best_epoch = epoch;
            res.net = net;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    return res;
}

inline TrainResult train(const Dataset& ds, ScorerNetwork net, const TrainConfig& cfg,
                         const std::function<void(const EpochStats&)>& on_epoch = nullptr) {
    check_compatible(net, ds.num_vars);
    return train(instances_of(ds, Split::Train), instances_of(ds, Split::Val), std::move(net), cfg, on_epoch);
}

/// Fraction of labelled candidates where ŷ ≥ 0.5 agrees with the label.
inline double opt_accuracy(const ScorerNetwork& net, const std::vector<ScorerInstance>& data) {
    std::size_t hit = 0;
    std::size_t total = 0;
    for (const auto& ins : data) {
        if (!ins.labels) continue;
        const auto sc = score_candidates(net, ins.evidence);
        for (std::size_t i = 0; i < sc.size(); ++i) {
            hit += ((sc[i].opt >= 0.5) == ((*ins.labels)[i] == 1)) ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

// ---- checkpoints ----

inline json checkpoint_to_json(const ScorerNetwork& net) {
    const auto& h = net.hyper;
    json j;
    j["format"] = "l2c-checkpoint";
    j["version"] = kCheckpointVersion;
    j["hyper"] = {{"num_vars", h.num_vars}, {"d", h.d},           {"heads", h.heads},   {"attn_layers", h.attn_layers},
                  {"blocks", h.blocks},     {"hidden", h.hidden}, {"dropout", h.dropout}};
    json tensors = json::object();
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        tensors[net.names[i]] = {{"shape", net.params[i].shape}, {"data", net.params[i].data}};
    }
    j["tensors"] = std::move(tensors);
    return j;
}

inline ScorerNetwork checkpoint_from_json(const json& j) {
    try {
        if (!j.is_object() || j.value("format", "") != "l2c-checkpoint") throw ValidationError("not an l2c checkpoint");
        if (j.at("version") != kCheckpointVersion) throw ValidationError("unsupported checkpoint version");
        const auto& hj = j.at("hyper");
        ScorerHyper h;
        h.num_vars = hj.at("num_vars").get<int>();
        h.d = hj.at("d").get<int>();
        h.heads = hj.at("heads").get<int>();
        h.attn_layers = hj.at("attn_layers").get<int>();
        h.blocks = hj.at("blocks").get<int>();
        h.hidden = hj.at("hidden").get<int>();
        h.dropout = hj.at("dropout").get<double>();
        ScorerNetwork net(h);
        const auto& tj = j.at("tensors");
        if (tj.size() != net.params.size()) throw ValidationError("checkpoint tensor count mismatch");
        for (std::size_t i = 0; i < net.params.size(); ++i) {
            const auto& t = tj.at(net.names[i]);
            if (t.at("shape").get<std::vector<int>>() != net.params[i].shape) {
                throw ValidationError("checkpoint tensor '" + net.names[i] + "' has the wrong shape");
            }
            auto data = t.at("data").get<std::vector<double>>();
            if (data.size() != net.params[i].size()) {
                throw ValidationError("checkpoint tensor '" + net.names[i] + "' has the wrong length");
            }
            net.params[i].data = std::move(data);
        }
        return net;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("checkpoint schema: ") + e.what());
    }
}

inline void save_checkpoint(const ScorerNetwork& net, const std::string& path) {
    write_file(path, checkpoint_to_json(net).dump());
}

inline ScorerNetwork load_checkpoint(const std::string& path, std::optional<int> expected_num_vars = std::nullopt) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("checkpoint: ") + e.what());
    }
    auto net = checkpoint_from_json(j);
    if (expected_num_vars) check_compatible(net, *expected_num_vars);
    return net;
}

} // namespace l2c
