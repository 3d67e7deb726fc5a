#pragma once

// Reverse-mode automatic differentiation over small dense tensors.
//
// Every tensor is a shared node in an implicit tape. Operations record their
// parents and a backward closure when gradients are enabled; backward() walks
// the tape in reverse topological order with a fixed traversal, so repeated
// runs accumulate gradients in exactly the same order and produce
// bit-identical results. All storage is 64-bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "glot/core.hpp"

namespace glot {

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

// Scoped guard disabling tape recording (used for inference and finite
// differences, where only values are needed).
struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class Tensor;

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> val;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backfn;

    std::size_t size() const { return val.size(); }

    void ensure_grad() {
        if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode>();
        n->shape = std::move(shape);
        n->val.assign(numel(n->shape), 0.0);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                              bool requires_grad = false) {
        if (values.size() != numel(shape))
            throw ShapeMismatch("from_values: " + std::to_string(values.size()) + " values for shape of " +
                                std::to_string(numel(shape)));
        auto n = std::make_shared<TensorNode>();
        n->shape = std::move(shape);
        n->val = std::move(values);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor scalar(double v) { return from_values({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rows() const { return node_->shape.empty() ? 1 : node_->shape[0]; }
    int cols() const {
        int c = 1;
        for (std::size_t i = 1; i < node_->shape.size(); ++i) c *= node_->shape[i];
        return c;
    }
    std::size_t size() const { return node_->val.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& values() const { return node_->val; }
    std::vector<double>& values() { return node_->val; }
    const std::vector<double>& grad() const { return node_->grad; }

    double value_at(std::size_t i) const { return node_->val[i]; }
    double item() const {
        if (node_->val.size() != 1) throw ShapeMismatch("item() on non-scalar");
        return node_->val[0];
    }

    std::shared_ptr<TensorNode> node() const { return node_; }
    TensorNode* raw() const { return node_.get(); }

    static std::size_t numel(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

private:
    std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline Tensor make_op(std::vector<int> shape, std::vector<double> val,
                      std::vector<std::shared_ptr<TensorNode>> parents,
                      std::function<void(TensorNode&)> backfn) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->val = std::move(val);
    if (grad_enabled()) {
        bool need = false;
        for (const auto& p : parents)
            if (p->requires_grad) need = true;
        if (need) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backfn = std::move(backfn);
        }
    }
    return Tensor(std::move(n));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw ShapeMismatch(std::string(op) + ": operand shapes differ");
}

}  // namespace detail

// --------------------------------------------------------------------------
// Elementwise and scalar ops
// --------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return detail::make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = *n.parents[k];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return detail::make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return detail::make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.val[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.val[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    return detail::make_op(a.shape(), std::move(out), {a.node()}, [c](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * c;
    });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
    return detail::make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

inline Tensor sqrt_t(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(av[i]);
    return detail::make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        // Subgradient 0 at the origin avoids NaNs when an exact zero occurs.
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (n.val[i] > 0.0) p.grad[i] += n.grad[i] * 0.5 / n.val[i];
    });
}

inline Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * inv_sqrt2));
    return detail::make_op(a.shape(), std::move(out), {a.node()}, [=](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double x = p.val[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            p.grad[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

// Copies values and cuts the tape.
inline Tensor detach(const Tensor& a) {
    return Tensor::from_values(a.shape(), a.values(), false);
}

// Same data, new shape; gradient passes through unchanged.
inline Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (Tensor::numel(shape) != a.size()) throw ShapeMismatch("reshape: element count differs");
    return detail::make_op(std::move(shape), a.values(), {a.node()}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

// --------------------------------------------------------------------------
// Matrix ops (2-D row-major)
// --------------------------------------------------------------------------

// a: N x K, b: K x M -> N x M
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const int N = a.rows(), K = a.cols(), K2 = b.rows(), M = b.cols();
    if (K != K2) throw ShapeMismatch("matmul: inner dims " + std::to_string(K) + " vs " + std::to_string(K2));
    std::vector<double> out(static_cast<std::size_t>(N) * M, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < N; ++i)
        for (int k = 0; k < K; ++k) {
            const double aik = av[static_cast<std::size_t>(i) * K + k];
            const double* brow = &bv[static_cast<std::size_t>(k) * M];
            double* orow = &out[static_cast<std::size_t>(i) * M];
            for (int j = 0; j < M; ++j) orow[j] += aik * brow[j];
        }
    return detail::make_op({N, M}, std::move(out), {a.node(), b.node()}, [N, K, M](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA = G * B^T
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < M; ++j) {
                    const double g = n.grad[static_cast<std::size_t>(i) * M + j];
                    if (g == 0.0) continue;
                    const double* bcol = &pb.val[j];
                    double* garow = &pa.grad[static_cast<std::size_t>(i) * K];
                    for (int k = 0; k < K; ++k) garow[k] += g * bcol[static_cast<std::size_t>(k) * M];
                }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB = A^T * G
            for (int i = 0; i < N; ++i)
                for (int k = 0; k < K; ++k) {
                    const double aik = pa.val[static_cast<std::size_t>(i) * K + k];
                    if (aik == 0.0) continue;
                    const double* grow = &n.grad[static_cast<std::size_t>(i) * M];
                    double* gbrow = &pb.grad[static_cast<std::size_t>(k) * M];
                    for (int j = 0; j < M; ++j) gbrow[j] += aik * grow[j];
                }
        }
    });
}

// a: N x K, b: M x K -> N x M  (a times b transposed)
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    const int N = a.rows(), K = a.cols(), M = b.rows();
    if (b.cols() != K) throw ShapeMismatch("matmul_nt: inner dims differ");
    std::vector<double> out(static_cast<std::size_t>(N) * M, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < M; ++j) {
            const double* arow = &av[static_cast<std::size_t>(i) * K];
            const double* brow = &bv[static_cast<std::size_t>(j) * K];
            double s = 0.0;
            for (int k = 0; k < K; ++k) s += arow[k] * brow[k];
            out[static_cast<std::size_t>(i) * M + j] = s;
        }
    return detail::make_op({N, M}, std::move(out), {a.node(), b.node()}, [N, K, M](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA = G * B
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < M; ++j) {
                    const double g = n.grad[static_cast<std::size_t>(i) * M + j];
                    if (g == 0.0) continue;
                    const double* brow = &pb.val[static_cast<std::size_t>(j) * K];
                    double* garow = &pa.grad[static_cast<std::size_t>(i) * K];
                    for (int k = 0; k < K; ++k) garow[k] += g * brow[k];
                }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB = G^T * A
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < M; ++j) {
                    const double g = n.grad[static_cast<std::size_t>(i) * M + j];
                    if (g == 0.0) continue;
                    const double* arow = &pa.val[static_cast<std::size_t>(i) * K];
                    double* gbrow = &pb.grad[static_cast<std::size_t>(j) * K];
                    for (int k = 0; k < K; ++k) gbrow[k] += g * arow[k];
                }
        }
    });
}

// --------------------------------------------------------------------------
// Row / column structure ops
// --------------------------------------------------------------------------

// Gather rows by index; backward scatter-adds.
inline Tensor rows(const Tensor& a, std::vector<int> idx) {
    const int N = a.rows(), D = a.cols();
    for (int i : idx)
        if (i < 0 || i >= N) throw IndexOutOfRange("rows: index " + std::to_string(i));
    std::vector<double> out(idx.size() * static_cast<std::size_t>(D));
    const auto& av = a.values();
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(&av[static_cast<std::size_t>(idx[r]) * D], D, &out[r * D]);
    const int R = static_cast<int>(idx.size());
    return detail::make_op({R, D}, std::move(out), {a.node()}, [idx = std::move(idx), D](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const double* g = &n.grad[r * D];
            double* pg = &p.grad[static_cast<std::size_t>(idx[r]) * D];
            for (int j = 0; j < D; ++j) pg[j] += g[j];
        }
    });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw EmptyInput("concat_rows");
    const int D = parts[0].cols();
    int N = 0;
    std::vector<std::shared_ptr<TensorNode>> parents;
    for (const auto& t : parts) {
        if (t.cols() != D) throw ShapeMismatch("concat_rows: column counts differ");
        N += t.rows();
        parents.push_back(t.node());
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(N) * D);
    for (const auto& t : parts) out.insert(out.end(), t.values().begin(), t.values().end());
    return detail::make_op({N, D}, std::move(out), std::move(parents), [](TensorNode& n) {
        std::size_t off = 0;
        for (auto& pp : n.parents) {
            auto& p = *pp;
            if (p.requires_grad) {
                p.ensure_grad();
                for (std::size_t i = 0; i < p.val.size(); ++i) p.grad[i] += n.grad[off + i];
            }
            off += p.val.size();
        }
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw EmptyInput("concat_cols");
    const int N = parts[0].rows();
    int D = 0;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::vector<int> widths;
    for (const auto& t : parts) {
        if (t.rows() != N) throw ShapeMismatch("concat_cols: row counts differ");
        widths.push_back(t.cols());
        D += t.cols();
        parents.push_back(t.node());
    }
    std::vector<double> out(static_cast<std::size_t>(N) * D);
    int off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].values();
        const int w = widths[k];
        for (int i = 0; i < N; ++i)
            std::copy_n(&v[static_cast<std::size_t>(i) * w], w, &out[static_cast<std::size_t>(i) * D + off]);
        off += w;
    }
    return detail::make_op({N, D}, std::move(out), std::move(parents),
                           [widths = std::move(widths), N, D](TensorNode& n) {
                               int off = 0;
                               for (std::size_t k = 0; k < n.parents.size(); ++k) {
                                   auto& p = *n.parents[k];
                                   const int w = widths[k];
                                   if (p.requires_grad) {
                                       p.ensure_grad();
                                       for (int i = 0; i < N; ++i) {
                                           const double* g = &n.grad[static_cast<std::size_t>(i) * D + off];
                                           double* pg = &p.grad[static_cast<std::size_t>(i) * w];
                                           for (int j = 0; j < w; ++j) pg[j] += g[j];
                                       }
                                   }
                                   off += w;
                               }
                           });
}

// Columns [c0, c1) of a.
inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
    const int N = a.rows(), D = a.cols();
    if (c0 < 0 || c1 > D || c0 >= c1) throw IndexOutOfRange("slice_cols");
    const int W = c1 - c0;
    std::vector<double> out(static_cast<std::size_t>(N) * W);
    const auto& av = a.values();
    for (int i = 0; i < N; ++i)
        std::copy_n(&av[static_cast<std::size_t>(i) * D + c0], W, &out[static_cast<std::size_t>(i) * W]);
    return detail::make_op({N, W}, std::move(out), {a.node()}, [N, D, W, c0](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int i = 0; i < N; ++i) {
            const double* g = &n.grad[static_cast<std::size_t>(i) * W];
            double* pg = &p.grad[static_cast<std::size_t>(i) * D + c0];
            for (int j = 0; j < W; ++j) pg[j] += g[j];
        }
    });
}

// Each row of a repeated k times (row 0 k times, then row 1, ...).
inline Tensor repeat_rows(const Tensor& a, int k) {
    const int N = a.rows(), D = a.cols();
    std::vector<double> out(static_cast<std::size_t>(N) * k * D);
    const auto& av = a.values();
    for (int i = 0; i < N; ++i)
        for (int r = 0; r < k; ++r)
            std::copy_n(&av[static_cast<std::size_t>(i) * D], D,
                        &out[(static_cast<std::size_t>(i) * k + r) * D]);
    return detail::make_op({N * k, D}, std::move(out), {a.node()}, [N, D, k](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int i = 0; i < N; ++i)
            for (int r = 0; r < k; ++r) {
                const double* g = &n.grad[(static_cast<std::size_t>(i) * k + r) * D];
                double* pg = &p.grad[static_cast<std::size_t>(i) * D];
                for (int j = 0; j < D; ++j) pg[j] += g[j];
            }
    });
}

// Broadcast a length-D row vector across all rows of a.
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    const int N = a.rows(), D = a.cols();
    if (static_cast<int>(v.size()) != D) throw ShapeMismatch("add_rowvec");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& vv = v.values();
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < D; ++j)
            out[static_cast<std::size_t>(i) * D + j] = av[static_cast<std::size_t>(i) * D + j] + vv[j];
    return detail::make_op(a.shape(), std::move(out), {a.node(), v.node()}, [N, D](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pv = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < D; ++j) pv.grad[j] += n.grad[static_cast<std::size_t>(i) * D + j];
        }
    });
}

inline Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
    const int N = a.rows(), D = a.cols();
    if (static_cast<int>(v.size()) != D) throw ShapeMismatch("mul_rowvec");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& vv = v.values();
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < D; ++j)
            out[static_cast<std::size_t>(i) * D + j] = av[static_cast<std::size_t>(i) * D + j] * vv[j];
    return detail::make_op(a.shape(), std::move(out), {a.node(), v.node()}, [N, D](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pv = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < D; ++j)
                    pa.grad[static_cast<std::size_t>(i) * D + j] +=
                        n.grad[static_cast<std::size_t>(i) * D + j] * pv.val[j];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < D; ++j)
                    pv.grad[j] += n.grad[static_cast<std::size_t>(i) * D + j] *
                                  pa.val[static_cast<std::size_t>(i) * D + j];
        }
    });
}

// Broadcast an N x 1 column over the columns of a (N x D).
inline Tensor mul_colvec(const Tensor& a, const Tensor& v) {
    const int N = a.rows(), D = a.cols();
    if (v.rows() != N || v.cols() != 1) throw ShapeMismatch("mul_colvec");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& vv = v.values();
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < D; ++j)
            out[static_cast<std::size_t>(i) * D + j] = av[static_cast<std::size_t>(i) * D + j] * vv[i];
    return detail::make_op(a.shape(), std::move(out), {a.node(), v.node()}, [N, D](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pv = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < D; ++j)
                    pa.grad[static_cast<std::size_t>(i) * D + j] +=
                        n.grad[static_cast<std::size_t>(i) * D + j] * pv.val[i];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < N; ++i) {
                double s = 0.0;
                for (int j = 0; j < D; ++j)
                    s += n.grad[static_cast<std::size_t>(i) * D + j] *
                         pa.val[static_cast<std::size_t>(i) * D + j];
                pv.grad[i] += s;
            }
        }
    });
}

inline Tensor div_colvec(const Tensor& a, const Tensor& v) {
    const int N = a.rows(), D = a.cols();
    if (v.rows() != N || v.cols() != 1) throw ShapeMismatch("div_colvec");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& vv = v.values();
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < D; ++j)
            out[static_cast<std::size_t>(i) * D + j] = av[static_cast<std::size_t>(i) * D + j] / vv[i];
    return detail::make_op(a.shape(), std::move(out), {a.node(), v.node()}, [N, D](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pv = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < D; ++j)
                    pa.grad[static_cast<std::size_t>(i) * D + j] +=
                        n.grad[static_cast<std::size_t>(i) * D + j] / pv.val[i];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < N; ++i) {
                double s = 0.0;
                for (int j = 0; j < D; ++j)
                    s += n.grad[static_cast<std::size_t>(i) * D + j] * n.val[static_cast<std::size_t>(i) * D + j];
                pv.grad[i] -= s / pv.val[i];
            }
        }
    });
}

inline Tensor mean_rows(const Tensor& a) {
    const int N = a.rows(), D = a.cols();
    std::vector<double> out(N, 0.0);
    const auto& av = a.values();
    for (int i = 0; i < N; ++i) {
        double s = 0.0;
        for (int j = 0; j < D; ++j) s += av[static_cast<std::size_t>(i) * D + j];
        out[i] = s / D;
    }
    return detail::make_op({N, 1}, std::move(out), {a.node()}, [N, D](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int i = 0; i < N; ++i) {
            const double g = n.grad[i] / D;
            for (int j = 0; j < D; ++j) p.grad[static_cast<std::size_t>(i) * D + j] += g;
        }
    });
}

// --------------------------------------------------------------------------
// Reductions
// --------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return detail::make_op({1}, {s}, {a.node()}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[0];
    });
}

inline Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.size())); }

// --------------------------------------------------------------------------
// Softmax (rowwise, fused, max-shifted)
// --------------------------------------------------------------------------

inline Tensor softmax_rows(const Tensor& a) {
    const int N = a.rows(), D = a.cols();
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (int i = 0; i < N; ++i) {
        const double* row = &av[static_cast<std::size_t>(i) * D];
        double* orow = &out[static_cast<std::size_t>(i) * D];
        double m = row[0];
        for (int j = 1; j < D; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (int j = 0; j < D; ++j) {
            orow[j] = std::exp(row[j] - m);
            z += orow[j];
        }
        for (int j = 0; j < D; ++j) orow[j] /= z;
    }
    return detail::make_op(a.shape(), std::move(out), {a.node()}, [N, D](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int i = 0; i < N; ++i) {
            const double* y = &n.val[static_cast<std::size_t>(i) * D];
            const double* g = &n.grad[static_cast<std::size_t>(i) * D];
            double dot = 0.0;
            for (int j = 0; j < D; ++j) dot += y[j] * g[j];
            double* pg = &p.grad[static_cast<std::size_t>(i) * D];
            for (int j = 0; j < D; ++j) pg[j] += y[j] * (g[j] - dot);
        }
    });
}

// --------------------------------------------------------------------------
// Rowwise 3-vector ops (operands are N x 3)
// --------------------------------------------------------------------------

inline Tensor rowdot(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "rowdot");
    if (a.cols() != 3) throw ShapeMismatch("rowdot: expects N x 3");
    const int N = a.rows();
    std::vector<double> out(N);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < N; ++i) {
        const std::size_t o = static_cast<std::size_t>(i) * 3;
        out[i] = av[o] * bv[o] + av[o + 1] * bv[o + 1] + av[o + 2] * bv[o + 2];
    }
    return detail::make_op({N, 1}, std::move(out), {a.node(), b.node()}, [N](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int i = 0; i < N; ++i) {
            const double g = n.grad[i];
            const std::size_t o = static_cast<std::size_t>(i) * 3;
            for (int c = 0; c < 3; ++c) {
                if (pa.requires_grad) pa.grad[o + c] += g * pb.val[o + c];
                if (pb.requires_grad) pb.grad[o + c] += g * pa.val[o + c];
            }
        }
    });
}

// Euclidean norm per row of an N x D tensor -> N x 1.
inline Tensor rownorm(const Tensor& a) {
    const int N = a.rows(), D = a.cols();
    std::vector<double> out(N);
    const auto& av = a.values();
    for (int i = 0; i < N; ++i) {
        double s = 0.0;
        for (int j = 0; j < D; ++j) {
            const double x = av[static_cast<std::size_t>(i) * D + j];
            s += x * x;
        }
        out[i] = std::sqrt(s);
    }
    return detail::make_op({N, 1}, std::move(out), {a.node()}, [N, D](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int i = 0; i < N; ++i) {
            if (n.val[i] <= 0.0) continue;  // subgradient 0 at zero
            const double g = n.grad[i] / n.val[i];
            for (int j = 0; j < D; ++j)
                p.grad[static_cast<std::size_t>(i) * D + j] += g * p.val[static_cast<std::size_t>(i) * D + j];
        }
    });
}

inline Tensor cross_rows(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "cross_rows");
    if (a.cols() != 3) throw ShapeMismatch("cross_rows: expects N x 3");
    const int N = a.rows();
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < N; ++i) {
        const std::size_t o = static_cast<std::size_t>(i) * 3;
        out[o] = av[o + 1] * bv[o + 2] - av[o + 2] * bv[o + 1];
        out[o + 1] = av[o + 2] * bv[o] - av[o] * bv[o + 2];
        out[o + 2] = av[o] * bv[o + 1] - av[o + 1] * bv[o];
    }
    return detail::make_op(a.shape(), std::move(out), {a.node(), b.node()}, [N](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int i = 0; i < N; ++i) {
            const std::size_t o = static_cast<std::size_t>(i) * 3;
            const double gx = n.grad[o], gy = n.grad[o + 1], gz = n.grad[o + 2];
            // c = a x b:  dL/da = b x g, dL/db = g x a
            if (pa.requires_grad) {
                pa.grad[o] += pb.val[o + 1] * gz - pb.val[o + 2] * gy;
                pa.grad[o + 1] += pb.val[o + 2] * gx - pb.val[o] * gz;
                pa.grad[o + 2] += pb.val[o] * gy - pb.val[o + 1] * gx;
            }
            if (pb.requires_grad) {
                pb.grad[o] += gy * pa.val[o + 2] - gz * pa.val[o + 1];
                pb.grad[o + 1] += gz * pa.val[o] - gx * pa.val[o + 2];
                pb.grad[o + 2] += gx * pa.val[o + 1] - gy * pa.val[o];
            }
        }
    });
}

// --------------------------------------------------------------------------
// Batched 3x3 ops; rows hold row-major 3x3 matrices (N x 9) or 3-vectors.
// --------------------------------------------------------------------------

inline Tensor bmm3(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "bmm3");
    if (a.cols() != 9) throw ShapeMismatch("bmm3: expects N x 9");
    const int N = a.rows();
    std::vector<double> out(a.size(), 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int n = 0; n < N; ++n) {
        const double* A = &av[static_cast<std::size_t>(n) * 9];
        const double* B = &bv[static_cast<std::size_t>(n) * 9];
        double* C = &out[static_cast<std::size_t>(n) * 9];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                C[i * 3 + j] = A[i * 3] * B[j] + A[i * 3 + 1] * B[3 + j] + A[i * 3 + 2] * B[6 + j];
    }
    return detail::make_op(a.shape(), std::move(out), {a.node(), b.node()}, [N](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int m = 0; m < N; ++m) {
            const std::size_t o = static_cast<std::size_t>(m) * 9;
            const double* G = &n.grad[o];
            const double* A = &pa.val[o];
            const double* B = &pb.val[o];
            // dA = G * B^T ; dB = A^T * G
            if (pa.requires_grad)
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        pa.grad[o + i * 3 + j] +=
                            G[i * 3] * B[j * 3] + G[i * 3 + 1] * B[j * 3 + 1] + G[i * 3 + 2] * B[j * 3 + 2];
            if (pb.requires_grad)
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        pb.grad[o + i * 3 + j] +=
                            A[i] * G[j] + A[3 + i] * G[3 + j] + A[6 + i] * G[6 + j];
        }
    });
}

// (N x 9) 3x3 matrices applied to (N x 3) vectors.
inline Tensor matvec3(const Tensor& a, const Tensor& v) {
    if (a.cols() != 9 || v.cols() != 3 || a.rows() != v.rows()) throw ShapeMismatch("matvec3");
    const int N = a.rows();
    std::vector<double> out(static_cast<std::size_t>(N) * 3, 0.0);
    const auto& av = a.values();
    const auto& vv = v.values();
    for (int n = 0; n < N; ++n) {
        const double* A = &av[static_cast<std::size_t>(n) * 9];
        const double* x = &vv[static_cast<std::size_t>(n) * 3];
        double* y = &out[static_cast<std::size_t>(n) * 3];
        for (int i = 0; i < 3; ++i) y[i] = A[i * 3] * x[0] + A[i * 3 + 1] * x[1] + A[i * 3 + 2] * x[2];
    }
    return detail::make_op({N, 3}, std::move(out), {a.node(), v.node()}, [N](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pv = *n.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pv.requires_grad) pv.ensure_grad();
        for (int m = 0; m < N; ++m) {
            const double* G = &n.grad[static_cast<std::size_t>(m) * 3];
            const double* A = &pa.val[static_cast<std::size_t>(m) * 9];
            const double* x = &pv.val[static_cast<std::size_t>(m) * 3];
            if (pa.requires_grad) {
                double* gA = &pa.grad[static_cast<std::size_t>(m) * 9];
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) gA[i * 3 + j] += G[i] * x[j];
            }
            if (pv.requires_grad) {
                double* gx = &pv.grad[static_cast<std::size_t>(m) * 3];
                for (int j = 0; j < 3; ++j)
                    gx[j] += A[j] * G[0] + A[3 + j] * G[1] + A[6 + j] * G[2];
            }
        }
    });
}

// --------------------------------------------------------------------------
// Backward pass
// --------------------------------------------------------------------------

inline void backward(const Tensor& root) {
    if (root.size() != 1) throw ShapeMismatch("backward: root must be scalar");
    // Iterative post-order DFS; parents are visited in their stored order, so
    // the reverse order (and thus gradient accumulation) is deterministic.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    struct Frame {
        TensorNode* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (root.raw()->requires_grad) {
        stack.push_back({root.raw(), 0});
        seen.insert(root.raw());
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorNode* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    for (TensorNode* n : order) {
        n->grad.assign(n->val.size(), 0.0);
    }
    root.raw()->ensure_grad();
    root.raw()->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backfn) n->backfn(*n);
    }
}

}  // namespace glot
