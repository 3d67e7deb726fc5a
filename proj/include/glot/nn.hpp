#pragma once

// Network building blocks over the tape: parameter registry, dense layers,
// layer norm, multi-head attention, pre-norm transformer blocks, Adam with a
// warmup+cosine schedule, and a central-difference gradient checker.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "glot/core.hpp"
#include "glot/tensor.hpp"

namespace glot {

// ---------------------------------------------------------------------------
// Parameter registry. Iteration order is insertion order, which keeps
// optimizer updates and checkpoints deterministic.
// ---------------------------------------------------------------------------

class ParamStore {
public:
    Tensor add(const std::string& name, std::vector<int> shape, std::vector<double> values) {
        if (index_.count(name)) throw Error("duplicate parameter name: " + name);
        Tensor t = Tensor::from_values(std::move(shape), std::move(values), true);
        index_[name] = items_.size();
        items_.emplace_back(name, t);
        return t;
    }

    Tensor zeros(const std::string& name, std::vector<int> shape) {
        const std::size_t n = Tensor::numel(shape);
        return add(name, std::move(shape), std::vector<double>(n, 0.0));
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("unknown parameter: " + name);
        return items_[it->second].second;
    }

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

    std::size_t total_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : items_) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : items_) t.raw()->grad.assign(t.size(), 0.0);
    }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Initializers
// ---------------------------------------------------------------------------

inline std::vector<double> xavier_uniform(int fan_in, int fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> v(static_cast<std::size_t>(fan_in) * fan_out);
    for (auto& x : v) x = rng.uniform(-s, s);
    return v;
}

inline std::vector<double> normal_values(std::size_t n, double stddev, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return v;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct Linear {
    Tensor w;  // in x out
    Tensor b;  // out

    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng)
        : w(ps.add(name + ".w", {in, out}, xavier_uniform(in, out, rng))),
          b(ps.zeros(name + ".b", {out})) {}

    Tensor apply(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }
    int in_features() const { return w.shape()[0]; }
    int out_features() const { return w.shape()[1]; }
};

// Multi-head attention core: given already-projected Q, K, V (each n x d),
// slice heads, apply softmax(Q Kt / sqrt(C)) V per head, concatenate, and
// project. Attention weights can be captured for inspection.
struct AttnCapture {
    // one entry per recorded attention: tag, then per-head row-stochastic
    // matrices (n_q x n_k).
    struct Record {
        std::string tag;
        int n_heads, n_q, n_k;
        std::vector<std::vector<double>> head_weights;  // n_heads entries of n_q*n_k
    };
    std::vector<Record> records;
};

struct MultiHeadAttention {
    Linear wq, wk, wv, wo;
    int n_heads = 1;
    int d_model = 0;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore& ps, const std::string& name, int d_model_, int kv_dim, int n_heads_,
                       Rng& rng)
        : wq(ps, name + ".wq", d_model_, d_model_, rng),
          wk(ps, name + ".wk", kv_dim, d_model_, rng),
          wv(ps, name + ".wv", kv_dim, d_model_, rng),
          wo(ps, name + ".wo", d_model_, d_model_, rng),
          n_heads(n_heads_),
          d_model(d_model_) {
        if (d_model_ % n_heads_ != 0) throw ConfigMismatch("d_model not divisible by n_heads");
    }

    // The bare attention map on pre-projected q, k, v.
    Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, AttnCapture* cap = nullptr,
                  const std::string& tag = {}) const {
        if (q.cols() != d_model || k.cols() != d_model || v.cols() != d_model)
            throw ShapeMismatch("attend: feature dim mismatch");
        if (k.rows() != v.rows()) throw ShapeMismatch("attend: key/value count mismatch");
        if (k.rows() == 0) throw EmptyMemory("attend: no keys");
        const int C = d_model / n_heads;
        const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(C));
        AttnCapture::Record rec;
        if (cap) {
            rec.tag = tag;
            rec.n_heads = n_heads;
            rec.n_q = q.rows();
            rec.n_k = k.rows();
        }
        std::vector<Tensor> head_outs;
        head_outs.reserve(n_heads);
        for (int h = 0; h < n_heads; ++h) {
            Tensor qh = slice_cols(q, h * C, (h + 1) * C);
            Tensor kh = slice_cols(k, h * C, (h + 1) * C);
            Tensor vh = slice_cols(v, h * C, (h + 1) * C);
            Tensor logits = scale(matmul_nt(qh, kh), inv_sqrt_c);
            Tensor weights = softmax_rows(logits);
            if (cap) rec.head_weights.push_back(weights.values());
            head_outs.push_back(matmul(weights, vh));
        }
        if (cap) cap->records.push_back(std::move(rec));
        Tensor merged = n_heads == 1 ? head_outs[0] : concat_cols(head_outs);
        return wo.apply(merged);
    }

    // Full attention with input projections; kv is the (possibly
    // differently-sized) source of keys and values.
    Tensor apply(const Tensor& x_q, const Tensor& x_kv, AttnCapture* cap = nullptr,
                 const std::string& tag = {}) const {
        return attend(wq.apply(x_q), wk.apply(x_kv), wv.apply(x_kv), cap, tag);
    }
};

struct FeedForward {
    Linear fc1, fc2;

    FeedForward() = default;
    FeedForward(ParamStore& ps, const std::string& name, int d_model, int d_ff, Rng& rng)
        : fc1(ps, name + ".fc1", d_model, d_ff, rng), fc2(ps, name + ".fc2", d_ff, d_model, rng) {}

    Tensor apply(const Tensor& x) const { return fc2.apply(gelu(fc1.apply(x))); }
};

inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
    Tensor mu = mean_rows(x);
    Tensor centered = sub(x, matmul(mu, Tensor::from_values({1, x.cols()}, std::vector<double>(x.cols(), 1.0))));
    Tensor var = mean_rows(mul(centered, centered));
    Tensor denom = sqrt_t(add_scalar(var, eps));
    Tensor normed = div_colvec(centered, denom);
    return add_rowvec(mul_rowvec(normed, gamma), beta);
}

struct LayerNormLayer {
    Tensor gamma, beta;
    double eps = 1e-5;

    LayerNormLayer() = default;
    LayerNormLayer(ParamStore& ps, const std::string& name, int dim)
        : gamma(ps.add(name + ".gamma", {dim}, std::vector<double>(dim, 1.0))),
          beta(ps.zeros(name + ".beta", {dim})) {}

    Tensor apply(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
};

// Pre-norm residual block: x + Attn(LN(x)) then x + FFN(LN(x)).
// In cross mode the keys/values come from an external memory.
struct TransformerBlock {
    LayerNormLayer ln1, ln2;
    MultiHeadAttention attn;
    FeedForward ffn;
    bool cross = false;

    TransformerBlock() = default;
    TransformerBlock(ParamStore& ps, const std::string& name, int d_model, int kv_dim, int n_heads,
                     int d_ff, bool cross_, Rng& rng)
        : ln1(ps, name + ".ln1", d_model),
          ln2(ps, name + ".ln2", d_model),
          attn(ps, name + ".attn", d_model, kv_dim, n_heads, rng),
          ffn(ps, name + ".ffn", d_model, d_ff, rng),
          cross(cross_) {}

    Tensor apply(const Tensor& x, const Tensor& memory = Tensor(), AttnCapture* cap = nullptr,
                 const std::string& tag = {}) const {
        Tensor q_in = ln1.apply(x);
        Tensor attn_out;
        if (cross) {
            if (!memory.defined() || memory.rows() == 0) throw EmptyMemory("cross block without memory");
            attn_out = attn.apply(q_in, memory, cap, tag);
        } else {
            attn_out = attn.apply(q_in, q_in, cap, tag);
        }
        Tensor x1 = add(x, attn_out);
        return add(x1, ffn.apply(ln2.apply(x1)));
    }
};

// Plain MLP with GELU between layers. A small final-layer gain starts
// residual regressors near their identity path.
struct Mlp {
    std::vector<Linear> layers;

    Mlp() = default;
    Mlp(ParamStore& ps, const std::string& name, const std::vector<int>& dims, Rng& rng,
        double final_gain = 1.0) {
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            layers.emplace_back(ps, name + ".fc" + std::to_string(i), dims[i], dims[i + 1], rng);
            if (i + 2 == dims.size() && final_gain != 1.0)
                for (auto& w : layers.back().w.raw()->val) w *= final_gain;
        }
    }

    Tensor apply(const Tensor& x) const {
        Tensor h = x;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            h = layers[i].apply(h);
            if (i + 1 < layers.size()) h = gelu(h);
        }
        return h;
    }
};

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

// Linear warmup from 0 over `warmup_steps`, then cosine annealing to 0 at
// `horizon_steps`.
struct LrSchedule {
    double base_lr = 1e-4;
    int warmup_steps = 0;
    int horizon_steps = 1;

    double at(int step) const {
        if (warmup_steps > 0 && step < warmup_steps)
            return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
        if (step >= horizon_steps) return 0.0;
        const int span = horizon_steps - warmup_steps;
        if (span <= 0) return base_lr;
        const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
        return 0.5 * base_lr * (1.0 + std::cos(kPi * progress));
    }
};

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int step_count = 0;
    std::vector<std::vector<double>> m, v;

    void step(ParamStore& ps, const LrSchedule& schedule) {
        const auto& items = ps.items();
        if (m.size() != items.size()) {
            m.resize(items.size());
            v.resize(items.size());
            for (std::size_t i = 0; i < items.size(); ++i) {
                m[i].assign(items[i].second.size(), 0.0);
                v[i].assign(items[i].second.size(), 0.0);
            }
        }
        const double lr = schedule.at(step_count);
        const int t = step_count + 1;
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        for (std::size_t i = 0; i < items.size(); ++i) {
            auto* node = items[i].second.raw();
            if (node->grad.size() != node->val.size()) node->grad.assign(node->val.size(), 0.0);
            auto& mi = m[i];
            auto& vi = v[i];
            for (std::size_t j = 0; j < node->val.size(); ++j) {
                const double g = node->grad[j];
                if (std::isnan(g)) throw NaNGradient("parameter " + items[i].first);
                mi[j] = beta1 * mi[j] + (1.0 - beta1) * g;
                vi[j] = beta2 * vi[j] + (1.0 - beta2) * g * g;
                const double mhat = mi[j] / bc1;
                const double vhat = vi[j] / bc2;
                node->val[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
        ++step_count;
    }
};

// ---------------------------------------------------------------------------
// Gradient checker
// ---------------------------------------------------------------------------

struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_rel_err;
        double max_abs_err;
    };
    std::vector<Entry> entries;
    double max_rel_err = 0.0;
    double rtol = 1e-3;
    bool pass = true;
};

// Compares analytic gradients of a deterministic scalar loss against central
// finite differences, parameter entry by parameter entry. The loss function
// must rebuild its graph from the current parameter values on each call.
inline GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, ParamStore& ps,
                                  double fd_eps = 1e-5, double rtol = 1e-3,
                                  double abs_floor = 1e-8) {
    GradCheckReport report;
    report.rtol = rtol;

    ps.zero_grad();
    Tensor loss = loss_fn();
    backward(loss);

    // Snapshot analytic grads before perturbing anything.
    std::vector<std::vector<double>> analytic;
    for (const auto& [name, t] : ps.items()) {
        auto* node = t.raw();
        if (node->grad.size() != node->val.size())
            analytic.emplace_back(node->val.size(), 0.0);
        else
            analytic.push_back(node->grad);
    }

    NoGradGuard ng;
    std::size_t pidx = 0;
    for (const auto& [name, t] : ps.items()) {
        auto* node = t.raw();
        GradCheckReport::Entry entry{name, 0.0, 0.0};
        for (std::size_t j = 0; j < node->val.size(); ++j) {
            const double saved = node->val[j];
            node->val[j] = saved + fd_eps;
            const double up = loss_fn().item();
            node->val[j] = saved - fd_eps;
            const double dn = loss_fn().item();
            node->val[j] = saved;
            const double fd = (up - dn) / (2.0 * fd_eps);
            const double an = analytic[pidx][j];
            const double abs_err = std::abs(an - fd);
            // Absolute errors at or below the floor pass outright; everything
            // else is judged relative to the larger of the two gradients.
            const double rel = abs_err <= abs_floor ? 0.0 : abs_err / std::max(std::abs(an), std::abs(fd));
            if (rel > entry.max_rel_err) entry.max_rel_err = rel;
            if (abs_err > entry.max_abs_err) entry.max_abs_err = abs_err;
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
        ++pidx;
    }
    report.pass = report.max_rel_err < rtol;
    return report;
}

}  // namespace glot
