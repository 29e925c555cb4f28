#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
// A TensorT is a cheap handle onto a tape node; ops build a DAG and
// backward() walks it once in reverse topological order. Float32 is the
// production scalar type; tests may instantiate the double engine when
// finite-difference oracles need the headroom.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "prospectr/errors.hpp"
#include "prospectr/parallel.hpp"
#include "prospectr/rng.hpp"

namespace prospectr {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline Shape row_major_strides(const Shape& s) {
    Shape st(s.size());
    int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<size_t>(i)] = acc;
        acc *= s[static_cast<size_t>(i)];
    }
    return st;
}

// numpy-style right-aligned broadcast
inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
        int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("broadcast mismatch " + shape_str(a) + " vs " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `in` viewed through `out` (0 on broadcast axes).
inline Shape broadcast_strides(const Shape& in, const Shape& out) {
    Shape ist = row_major_strides(in);
    Shape st(out.size(), 0);
    const size_t off = out.size() - in.size();
    for (size_t i = 0; i < in.size(); ++i)
        st[off + i] = (in[i] == 1 && out[off + i] != 1) ? 0 : ist[i];
    return st;
}

namespace autograd {
inline thread_local bool enabled = true;
}

// Disables tape construction in scope (inference paths).
class NoGradGuard {
public:
    NoGradGuard() : prev_(autograd::enabled) { autograd::enabled = false; }
    ~NoGradGuard() { autograd::enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
class TensorT {
public:
    struct Node {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;  // allocated on first use
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward_fn;

        void ensure_grad() {
            if (grad.empty()) grad.assign(data.size(), T(0));
        }
    };

    TensorT() = default;

    static TensorT zeros(Shape s, bool requires_grad = false) {
        return filled(std::move(s), T(0), requires_grad);
    }

    static TensorT filled(Shape s, T value, bool requires_grad = false) {
        TensorT t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(s);
        t.n_->data.assign(static_cast<size_t>(shape_numel(t.n_->shape)), value);
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static TensorT from_data(Shape s, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(s) != static_cast<int64_t>(data.size()))
            throw ShapeError("from_data: " + shape_str(s) + " does not hold " +
                             std::to_string(data.size()) + " values");
        TensorT t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(s);
        t.n_->data = std::move(data);
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static TensorT scalar(T v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    static TensorT randn(Shape s, Rng& rng, T stddev = T(1), bool requires_grad = false) {
        TensorT t = zeros(std::move(s), requires_grad);
        for (auto& v : t.n_->data) v = static_cast<T>(rng.normal()) * stddev;
        return t;
    }

    // Truncated normal: resample outside +-2 sigma (transformer init convention).
    static TensorT trunc_normal(Shape s, Rng& rng, T stddev, bool requires_grad = false) {
        TensorT t = zeros(std::move(s), requires_grad);
        for (auto& v : t.n_->data) {
            double z = rng.normal();
            while (std::fabs(z) > 2.0) z = rng.normal();
            v = static_cast<T>(z) * stddev;
        }
        return t;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    int64_t dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(n_->data.size()); }
    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }

    std::vector<T>& data() { return n_->data; }
    const std::vector<T>& data() const { return n_->data; }

    std::vector<T>& grad() {
        n_->ensure_grad();
        return n_->grad;
    }
    const std::vector<T>& grad() const {
        n_->ensure_grad();
        return n_->grad;
    }

    void zero_grad() {
        if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
    }

    T item() const {
        if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
        return n_->data[0];
    }

    bool is_leaf() const { return n_->parents.empty(); }

    // Reverse-mode sweep from a scalar root. Leaf grads accumulate across
    // calls; interior grads are recomputed each sweep.
    void backward() const {
        if (numel() != 1) throw ContractError("backward() requires a scalar root");
        if (!n_->requires_grad) return;

        std::vector<Node*> order;  // leaves-first post-order
        std::unordered_set<Node*> visited;
        std::vector<std::pair<Node*, size_t>> stack;
        stack.emplace_back(n_.get(), 0);
        visited.insert(n_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Node* p = node->parents[next++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        for (Node* node : order) {
            node->ensure_grad();
            if (!node->parents.empty()) std::fill(node->grad.begin(), node->grad.end(), T(0));
        }
        n_->grad[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* node = *it;
            if (node->backward_fn) node->backward_fn(*node);
        }
    }

    std::shared_ptr<Node> node() const { return n_; }

    // Result node wiring for ops. parents listed in input order.
    static TensorT make_op(Shape shape, std::vector<T> data,
                           std::initializer_list<TensorT> inputs,
                           std::function<void(Node&)> backward_fn) {
        TensorT out = from_data(std::move(shape), std::move(data));
        bool track = autograd::enabled;
        bool any = false;
        for (const TensorT& in : inputs) any = any || in.n_->requires_grad;
        if (track && any) {
            out.n_->requires_grad = true;
            for (const TensorT& in : inputs) out.n_->parents.push_back(in.n_);
            out.n_->backward_fn = std::move(backward_fn);
        }
        return out;
    }

private:
    std::shared_ptr<Node> n_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// ---------------------------------------------------------------------------
// GEMM kernels (row-major, parallel over independent output rows)

namespace kernels {

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    parallel_for(m, [&](int64_t i) {
        T* crow = c + i * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        const T* arow = a + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            if (av == T(0)) continue;
            const T* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    });
}

// c[m,n] (+)= a[m,k] * b[n,k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    parallel_for(m, [&](int64_t i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc = 0;
            for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    });
}

// c[k,n] (+)= a[m,k]^T * b[m,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    parallel_for(k, [&](int64_t kk) {
        T* crow = c + kk * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        for (int64_t i = 0; i < m; ++i) {
            const T av = a[i * k + kk];
            if (av == T(0)) continue;
            const T* brow = b + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    });
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Elementwise helpers

namespace detail {

template <typename T>
using Node = typename TensorT<T>::Node;

// out[i] = f(a[map_a(i)], b[map_b(i)]) over the broadcast shape
template <typename T, typename F>
std::vector<T> broadcast_zip(const TensorT<T>& a, const TensorT<T>& b, const Shape& out_shape,
                             F&& f) {
    const int64_t n = shape_numel(out_shape);
    std::vector<T> out(static_cast<size_t>(n));
    if (a.shape() == b.shape()) {
        const T* pa = a.data().data();
        const T* pb = b.data().data();
        for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = f(pa[i], pb[i]);
        return out;
    }
    const Shape ost = row_major_strides(out_shape);
    const Shape ast = broadcast_strides(a.shape(), out_shape);
    const Shape bst = broadcast_strides(b.shape(), out_shape);
    const size_t r = out_shape.size();
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    for (int64_t i = 0; i < n; ++i) {
        int64_t rem = i, ia = 0, ib = 0;
        for (size_t d = 0; d < r; ++d) {
            const int64_t c = rem / ost[d];
            rem -= c * ost[d];
            ia += c * ast[d];
            ib += c * bst[d];
        }
        out[static_cast<size_t>(i)] = f(pa[ia], pb[ib]);
    }
    return out;
}

// dst_grad[in_idx] += contribution(out_idx) for an input broadcast to out_shape
template <typename T, typename F>
void accumulate_to_input(Node<T>& in, const Shape& out_shape, F&& contribution) {
    if (!in.requires_grad) return;
    in.ensure_grad();
    const int64_t n = shape_numel(out_shape);
    if (in.shape == out_shape) {
        for (int64_t i = 0; i < n; ++i) in.grad[static_cast<size_t>(i)] += contribution(i);
        return;
    }
    const Shape ost = row_major_strides(out_shape);
    const Shape ist = broadcast_strides(in.shape, out_shape);
    const size_t r = out_shape.size();
    for (int64_t i = 0; i < n; ++i) {
        int64_t rem = i, ii = 0;
        for (size_t d = 0; d < r; ++d) {
            const int64_t c = rem / ost[d];
            rem -= c * ost[d];
            ii += c * ist[d];
        }
        in.grad[static_cast<size_t>(ii)] += contribution(i);
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binary elementwise ops (broadcasting over leading dims)

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    Shape os = broadcast_shapes(a.shape(), b.shape());
    auto data = detail::broadcast_zip(a, b, os, [](T x, T y) { return x + y; });
    auto an = a.node();
    auto bn = b.node();
    return TensorT<T>::make_op(os, std::move(data), {a, b}, [an, bn, os](auto& self) {
        detail::accumulate_to_input<T>(*an, os, [&](int64_t i) { return self.grad[i]; });
        detail::accumulate_to_input<T>(*bn, os, [&](int64_t i) { return self.grad[i]; });
    });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    Shape os = broadcast_shapes(a.shape(), b.shape());
    auto data = detail::broadcast_zip(a, b, os, [](T x, T y) { return x - y; });
    auto an = a.node();
    auto bn = b.node();
    return TensorT<T>::make_op(os, std::move(data), {a, b}, [an, bn, os](auto& self) {
        detail::accumulate_to_input<T>(*an, os, [&](int64_t i) { return self.grad[i]; });
        detail::accumulate_to_input<T>(*bn, os, [&](int64_t i) { return -self.grad[i]; });
    });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    Shape os = broadcast_shapes(a.shape(), b.shape());
    auto data = detail::broadcast_zip(a, b, os, [](T x, T y) { return x * y; });
    auto an = a.node();
    auto bn = b.node();
    // saved inputs are read through the parent nodes (kept alive by the tape)
    return TensorT<T>::make_op(os, std::move(data), {a, b}, [an, bn, os](auto& self) {
        const Shape ost = row_major_strides(os);
        const Shape ast = broadcast_strides(an->shape, os);
        const Shape bst = broadcast_strides(bn->shape, os);
        const size_t r = os.size();
        auto map_idx = [&](int64_t i, const Shape& st) {
            int64_t rem = i, ii = 0;
            for (size_t d = 0; d < r; ++d) {
                const int64_t c = rem / ost[d];
                rem -= c * ost[d];
                ii += c * st[d];
            }
            return ii;
        };
        detail::accumulate_to_input<T>(
            *an, os, [&](int64_t i) { return self.grad[i] * bn->data[map_idx(i, bst)]; });
        detail::accumulate_to_input<T>(
            *bn, os, [&](int64_t i) { return self.grad[i] * an->data[map_idx(i, ast)]; });
    });
}

template <typename T>
TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b) {
    Shape os = broadcast_shapes(a.shape(), b.shape());
    auto data = detail::broadcast_zip(a, b, os, [](T x, T y) { return x / y; });
    auto an = a.node();
    auto bn = b.node();
    return TensorT<T>::make_op(os, std::move(data), {a, b}, [an, bn, os](auto& self) {
        const Shape ost = row_major_strides(os);
        const Shape ast = broadcast_strides(an->shape, os);
        const Shape bst = broadcast_strides(bn->shape, os);
        const size_t r = os.size();
        auto map_idx = [&](int64_t i, const Shape& st) {
            int64_t rem = i, ii = 0;
            for (size_t d = 0; d < r; ++d) {
                const int64_t c = rem / ost[d];
                rem -= c * ost[d];
                ii += c * st[d];
            }
            return ii;
        };
        detail::accumulate_to_input<T>(
            *an, os, [&](int64_t i) { return self.grad[i] / bn->data[map_idx(i, bst)]; });
        detail::accumulate_to_input<T>(*bn, os, [&](int64_t i) {
            const T bv = bn->data[map_idx(i, bst)];
            return -self.grad[i] * an->data[map_idx(i, ast)] / (bv * bv);
        });
    });
}

template <typename T>
TensorT<T> operator+(const TensorT<T>& a, const TensorT<T>& b) { return add(a, b); }
template <typename T>
TensorT<T> operator-(const TensorT<T>& a, const TensorT<T>& b) { return sub(a, b); }
template <typename T>
TensorT<T> operator*(const TensorT<T>& a, const TensorT<T>& b) { return mul(a, b); }
template <typename T>
TensorT<T> operator/(const TensorT<T>& a, const TensorT<T>& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Scalar and unary ops

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& a, T s) {
    std::vector<T> data(a.data());
    for (auto& v : data) v += s;
    auto an = a.node();
    return TensorT<T>::make_op(a.shape(), std::move(data), {a}, [an](auto& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

template <typename T>
TensorT<T> mul_scalar(const TensorT<T>& a, T s) {
    std::vector<T> data(a.data());
    for (auto& v : data) v *= s;
    auto an = a.node();
    return TensorT<T>::make_op(a.shape(), std::move(data), {a}, [an, s](auto& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += s * self.grad[i];
    });
}

template <typename T>
TensorT<T> neg(const TensorT<T>& a) { return mul_scalar(a, T(-1)); }

namespace detail {

template <typename T, typename Fwd, typename Bwd>
TensorT<T> unary_op(const TensorT<T>& a, Fwd fwd, Bwd dydx_from_input_and_output) {
    std::vector<T> data(a.data().size());
    const T* pa = a.data().data();
    for (size_t i = 0; i < data.size(); ++i) data[i] = fwd(pa[i]);
    auto an = a.node();
    return TensorT<T>::make_op(a.shape(), std::move(data), {a},
                               [an, dydx_from_input_and_output](auto& self) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (size_t i = 0; i < self.grad.size(); ++i)
                                       an->grad[i] += self.grad[i] *
                                           dydx_from_input_and_output(an->data[i], self.data[i]);
                               });
}

}  // namespace detail

template <typename T>
TensorT<T> exp(const TensorT<T>& a) {
    return detail::unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
TensorT<T> log(const TensorT<T>& a) {
    return detail::unary_op(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
TensorT<T> sqrt(const TensorT<T>& a) {
    return detail::unary_op(a, [](T x) { return std::sqrt(x); },
                            [](T, T y) { return T(0.5) / y; });
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
    return detail::unary_op(a,
                            [](T x) {
                                return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                                                 : std::exp(x) / (T(1) + std::exp(x));
                            },
                            [](T, T y) { return y * (T(1) - y); });
}

// Elementwise power with a constant exponent; caller guards the domain.
template <typename T>
TensorT<T> pow(const TensorT<T>& a, T p) {
    return detail::unary_op(a, [p](T x) { return std::pow(x, p); },
                            [p](T x, T) { return p * std::pow(x, p - T(1)); });
}

// erf-based GELU
template <typename T>
TensorT<T> gelu(const TensorT<T>& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return detail::unary_op(
        a,
        [&](T x) {
            return static_cast<T>(0.5 * static_cast<double>(x) *
                                  (1.0 + std::erf(static_cast<double>(x) * inv_sqrt2)));
        },
        [&](T x, T) {
            const double xd = static_cast<double>(x);
            return static_cast<T>(0.5 * (1.0 + std::erf(xd * inv_sqrt2)) +
                                  xd * inv_sqrt2pi * std::exp(-0.5 * xd * xd));
        });
}

// Subgradient: passthrough strictly inside [lo, hi], zero outside.
template <typename T>
TensorT<T> clamp(const TensorT<T>& a, T lo, T hi) {
    return detail::unary_op(a, [lo, hi](T x) { return std::min(hi, std::max(lo, x)); },
                            [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

// PReLU with a single learned slope (slope tensor must hold one element).
template <typename T>
TensorT<T> prelu(const TensorT<T>& a, const TensorT<T>& slope) {
    if (slope.numel() != 1) throw ShapeError("prelu slope must be a scalar tensor");
    const T s = slope.data()[0];
    std::vector<T> data(a.data().size());
    const T* pa = a.data().data();
    for (size_t i = 0; i < data.size(); ++i) data[i] = pa[i] >= T(0) ? pa[i] : s * pa[i];
    auto an = a.node();
    auto sn = slope.node();
    return TensorT<T>::make_op(a.shape(), std::move(data), {a, slope}, [an, sn](auto& self) {
        const T sv = sn->data[0];
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * (an->data[i] >= T(0) ? T(1) : sv);
        }
        if (sn->requires_grad) {
            sn->ensure_grad();
            T acc = 0;
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (an->data[i] < T(0)) acc += self.grad[i] * an->data[i];
            sn->grad[0] += acc;
        }
    });
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape s) {
    // one -1 wildcard allowed
    int64_t known = 1, wild = -1;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == -1) {
            if (wild >= 0) throw ShapeError("reshape: more than one -1");
            wild = static_cast<int64_t>(i);
        } else {
            known *= s[i];
        }
    }
    if (wild >= 0) {
        if (known == 0 || a.numel() % known != 0) throw ShapeError("reshape: cannot infer -1");
        s[static_cast<size_t>(wild)] = a.numel() / known;
    }
    if (shape_numel(s) != a.numel())
        throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(s));
    auto an = a.node();
    return TensorT<T>::make_op(std::move(s), std::vector<T>(a.data()), {a}, [an](auto& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

template <typename T>
TensorT<T> permute(const TensorT<T>& a, const std::vector<int>& axes) {
    const size_t r = a.shape().size();
    if (axes.size() != r) throw ShapeError("permute: axes rank mismatch");
    std::vector<bool> seen(r, false);
    Shape os(r);
    for (size_t i = 0; i < r; ++i) {
        int ax = axes[i];
        if (ax < 0 || static_cast<size_t>(ax) >= r || seen[static_cast<size_t>(ax)])
            throw ShapeError("permute: bad axes");
        seen[static_cast<size_t>(ax)] = true;
        os[i] = a.shape()[static_cast<size_t>(ax)];
    }
    const Shape ist = row_major_strides(a.shape());
    const Shape ost = row_major_strides(os);
    const int64_t n = a.numel();
    std::vector<T> data(static_cast<size_t>(n));
    const T* pa = a.data().data();
    // out index -> in index through permuted strides
    Shape gather(r);
    for (size_t i = 0; i < r; ++i) gather[i] = ist[static_cast<size_t>(axes[i])];
    parallel_for(n, [&](int64_t i) {
        int64_t rem = i, ii = 0;
        for (size_t d = 0; d < r; ++d) {
            const int64_t c = rem / ost[d];
            rem -= c * ost[d];
            ii += c * gather[d];
        }
        data[static_cast<size_t>(i)] = pa[ii];
    });
    auto an = a.node();
    return TensorT<T>::make_op(os, std::move(data), {a}, [an, ost, gather, r](auto& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const int64_t n2 = static_cast<int64_t>(self.grad.size());
        for (int64_t i = 0; i < n2; ++i) {
            int64_t rem = i, ii = 0;
            for (size_t d = 0; d < r; ++d) {
                const int64_t c = rem / ost[d];
                rem -= c * ost[d];
                ii += c * gather[d];
            }
            an->grad[static_cast<size_t>(ii)] += self.grad[static_cast<size_t>(i)];
        }
    });
}

template <typename T>
TensorT<T> transpose(const TensorT<T>& a, int ax0, int ax1) {
    std::vector<int> axes(a.shape().size());
    std::iota(axes.begin(), axes.end(), 0);
    std::swap(axes[static_cast<size_t>(ax0)], axes[static_cast<size_t>(ax1)]);
    return permute(a, axes);
}

template <typename T>
TensorT<T> broadcast_to(const TensorT<T>& a, const Shape& os) {
    if (broadcast_shapes(a.shape(), os) != os)
        throw ShapeError("broadcast_to " + shape_str(a.shape()) + " -> " + shape_str(os));
    const Shape ost = row_major_strides(os);
    const Shape ast = broadcast_strides(a.shape(), os);
    const size_t r = os.size();
    const int64_t n = shape_numel(os);
    std::vector<T> data(static_cast<size_t>(n));
    const T* pa = a.data().data();
    for (int64_t i = 0; i < n; ++i) {
        int64_t rem = i, ii = 0;
        for (size_t d = 0; d < r; ++d) {
            const int64_t c = rem / ost[d];
            rem -= c * ost[d];
            ii += c * ast[d];
        }
        data[static_cast<size_t>(i)] = pa[ii];
    }
    auto an = a.node();
    return TensorT<T>::make_op(os, std::move(data), {a}, [an, os](auto& self) {
        detail::accumulate_to_input<T>(*an, os, [&](int64_t i) { return self.grad[i]; });
    });
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const size_t r = parts[0].shape().size();
    const size_t ax = static_cast<size_t>(axis);
    if (ax >= r) throw ShapeError("concat: axis out of range");
    Shape os = parts[0].shape();
    os[ax] = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != r) throw ShapeError("concat: rank mismatch");
        for (size_t d = 0; d < r; ++d)
            if (d != ax && p.shape()[d] != parts[0].shape()[d])
                throw ShapeError("concat: shape mismatch");
        os[ax] += p.shape()[ax];
    }
    int64_t outer = 1, inner = 1;
    for (size_t d = 0; d < ax; ++d) outer *= os[d];
    for (size_t d = ax + 1; d < r; ++d) inner *= os[d];
    std::vector<T> data(static_cast<size_t>(shape_numel(os)));
    const int64_t ostride = os[ax] * inner;
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t len = p.shape()[ax] * inner;
        const T* pp = p.data().data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pp + o * len, pp + (o + 1) * len, data.begin() + o * ostride + off);
        off += len;
    }
    // backward: route grad slices back to each part
    TensorT<T> out = TensorT<T>::from_data(os, std::move(data));
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (autograd::enabled && any) {
        auto on = out.node();
        on->requires_grad = true;
        std::vector<std::shared_ptr<typename TensorT<T>::Node>> pnodes;
        std::vector<int64_t> plens;
        for (const auto& p : parts) {
            on->parents.push_back(p.node());
            pnodes.push_back(p.node());
            plens.push_back(p.shape()[ax] * inner);
        }
        on->backward_fn = [pnodes, plens, outer, ostride](auto& self) {
            int64_t off2 = 0;
            for (size_t pi = 0; pi < pnodes.size(); ++pi) {
                const auto& pn = pnodes[pi];
                const int64_t plen = plens[pi];
                if (pn->requires_grad) {
                    pn->ensure_grad();
                    for (int64_t o = 0; o < outer; ++o)
                        for (int64_t i = 0; i < plen; ++i)
                            pn->grad[static_cast<size_t>(o * plen + i)] +=
                                self.grad[static_cast<size_t>(o * ostride + off2 + i)];
                }
                off2 += plen;
            }
        };
    }
    return out;
}

template <typename T>
TensorT<T> slice(const TensorT<T>& a, int axis, int64_t start, int64_t len) {
    const size_t r = a.shape().size();
    const size_t ax = static_cast<size_t>(axis);
    if (ax >= r) throw ShapeError("slice: axis out of range");
    if (start < 0 || len < 0 || start + len > a.shape()[ax]) throw ShapeError("slice: bad range");
    Shape os = a.shape();
    os[ax] = len;
    int64_t outer = 1, inner = 1;
    for (size_t d = 0; d < ax; ++d) outer *= a.shape()[d];
    for (size_t d = ax + 1; d < r; ++d) inner *= a.shape()[d];
    const int64_t istride = a.shape()[ax] * inner;
    const int64_t olen = len * inner;
    std::vector<T> data(static_cast<size_t>(shape_numel(os)));
    const T* pa = a.data().data();
    for (int64_t o = 0; o < outer; ++o)
        std::copy(pa + o * istride + start * inner, pa + o * istride + start * inner + olen,
                  data.begin() + o * olen);
    auto an = a.node();
    return TensorT<T>::make_op(os, std::move(data), {a},
                               [an, outer, inner, istride, olen, start](auto& self) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (int64_t o = 0; o < outer; ++o)
                                       for (int64_t i = 0; i < olen; ++i)
                                           an->grad[static_cast<size_t>(o * istride +
                                                                        start * inner + i)] +=
                                               self.grad[static_cast<size_t>(o * olen + i)];
                               });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
    T acc = 0;
    for (T v : a.data()) acc += v;
    auto an = a.node();
    return TensorT<T>::make_op({1}, {acc}, {a}, [an](auto& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const T g = self.grad[0];
        for (auto& v : an->grad) v += g;
    });
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a) {
    const T inv = T(1) / static_cast<T>(a.numel());
    return mul_scalar(sum(a), inv);
}

namespace detail {

struct AxisSplit {
    int64_t outer, n, inner;
};

inline AxisSplit axis_split(const Shape& s, int axis) {
    const size_t ax = static_cast<size_t>(axis);
    if (ax >= s.size()) throw ShapeError("reduction axis out of range");
    AxisSplit sp{1, s[ax], 1};
    for (size_t d = 0; d < ax; ++d) sp.outer *= s[d];
    for (size_t d = ax + 1; d < s.size(); ++d) sp.inner *= s[d];
    return sp;
}

}  // namespace detail

// keepdim reductions over one axis
template <typename T>
TensorT<T> sum(const TensorT<T>& a, int axis) {
    const auto sp = detail::axis_split(a.shape(), axis);
    Shape os = a.shape();
    os[static_cast<size_t>(axis)] = 1;
    std::vector<T> data(static_cast<size_t>(sp.outer * sp.inner), T(0));
    const T* pa = a.data().data();
    for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t k = 0; k < sp.n; ++k)
            for (int64_t i = 0; i < sp.inner; ++i)
                data[static_cast<size_t>(o * sp.inner + i)] +=
                    pa[(o * sp.n + k) * sp.inner + i];
    auto an = a.node();
    return TensorT<T>::make_op(os, std::move(data), {a}, [an, sp](auto& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int64_t o = 0; o < sp.outer; ++o)
            for (int64_t k = 0; k < sp.n; ++k)
                for (int64_t i = 0; i < sp.inner; ++i)
                    an->grad[static_cast<size_t>((o * sp.n + k) * sp.inner + i)] +=
                        self.grad[static_cast<size_t>(o * sp.inner + i)];
    });
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a, int axis) {
    const auto sp = detail::axis_split(a.shape(), axis);
    return mul_scalar(sum(a, axis), T(1) / static_cast<T>(sp.n));
}

// Population variance (keepdim over one axis, or all elements).
template <typename T>
TensorT<T> var(const TensorT<T>& a, int axis) {
    const auto sp = detail::axis_split(a.shape(), axis);
    Shape os = a.shape();
    os[static_cast<size_t>(axis)] = 1;
    const int64_t onum = sp.outer * sp.inner;
    std::vector<T> mu(static_cast<size_t>(onum), T(0));
    std::vector<T> data(static_cast<size_t>(onum), T(0));
    const T* pa = a.data().data();
    const T invn = T(1) / static_cast<T>(sp.n);
    for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t k = 0; k < sp.n; ++k)
            for (int64_t i = 0; i < sp.inner; ++i)
                mu[static_cast<size_t>(o * sp.inner + i)] += pa[(o * sp.n + k) * sp.inner + i];
    for (auto& v : mu) v *= invn;
    for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t k = 0; k < sp.n; ++k)
            for (int64_t i = 0; i < sp.inner; ++i) {
                const T d = pa[(o * sp.n + k) * sp.inner + i] -
                            mu[static_cast<size_t>(o * sp.inner + i)];
                data[static_cast<size_t>(o * sp.inner + i)] += d * d;
            }
    for (auto& v : data) v *= invn;
    auto an = a.node();
    return TensorT<T>::make_op(os, std::move(data), {a}, [an, sp, mu, invn](auto& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const T scale = T(2) * invn;
        for (int64_t o = 0; o < sp.outer; ++o)
            for (int64_t k = 0; k < sp.n; ++k)
                for (int64_t i = 0; i < sp.inner; ++i) {
                    const size_t ai = static_cast<size_t>((o * sp.n + k) * sp.inner + i);
                    const size_t oi = static_cast<size_t>(o * sp.inner + i);
                    an->grad[ai] += self.grad[oi] * scale * (an->data[ai] - mu[oi]);
                }
    });
}

template <typename T>
TensorT<T> var(const TensorT<T>& a) {
    TensorT<T> flat = reshape(a, {a.numel()});
    return reshape(var(flat, 0), {1});
}

// Max over one axis (keepdim). Grad goes to the first max element; callers
// keep inputs tie-free where gradients matter.
template <typename T>
TensorT<T> max(const TensorT<T>& a, int axis) {
    const auto sp = detail::axis_split(a.shape(), axis);
    Shape os = a.shape();
    os[static_cast<size_t>(axis)] = 1;
    const int64_t onum = sp.outer * sp.inner;
    std::vector<T> data(static_cast<size_t>(onum));
    std::vector<int64_t> arg(static_cast<size_t>(onum));
    const T* pa = a.data().data();
    for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t i = 0; i < sp.inner; ++i) {
            T best = pa[(o * sp.n) * sp.inner + i];
            int64_t bk = 0;
            for (int64_t k = 1; k < sp.n; ++k) {
                const T v = pa[(o * sp.n + k) * sp.inner + i];
                if (v > best) {
                    best = v;
                    bk = k;
                }
            }
            data[static_cast<size_t>(o * sp.inner + i)] = best;
            arg[static_cast<size_t>(o * sp.inner + i)] = bk;
        }
    auto an = a.node();
    return TensorT<T>::make_op(os, std::move(data), {a}, [an, sp, arg](auto& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int64_t o = 0; o < sp.outer; ++o)
            for (int64_t i = 0; i < sp.inner; ++i) {
                const size_t oi = static_cast<size_t>(o * sp.inner + i);
                an->grad[static_cast<size_t>((o * sp.n + arg[oi]) * sp.inner + i)] +=
                    self.grad[oi];
            }
    });
}

// ---------------------------------------------------------------------------
// Softmax (primitive: dx = y * (dy - sum(dy*y)))

template <typename T>
TensorT<T> softmax(const TensorT<T>& a, int axis) {
    const auto sp = detail::axis_split(a.shape(), axis);
    std::vector<T> data(a.data().size());
    const T* pa = a.data().data();
    parallel_for(sp.outer, [&](int64_t o) {
        for (int64_t i = 0; i < sp.inner; ++i) {
            T mx = pa[(o * sp.n) * sp.inner + i];
            for (int64_t k = 1; k < sp.n; ++k)
                mx = std::max(mx, pa[(o * sp.n + k) * sp.inner + i]);
            T z = 0;
            for (int64_t k = 0; k < sp.n; ++k) {
                const T e = std::exp(pa[(o * sp.n + k) * sp.inner + i] - mx);
                data[static_cast<size_t>((o * sp.n + k) * sp.inner + i)] = e;
                z += e;
            }
            const T inv = T(1) / z;
            for (int64_t k = 0; k < sp.n; ++k)
                data[static_cast<size_t>((o * sp.n + k) * sp.inner + i)] *= inv;
        }
    });
    auto an = a.node();
    return TensorT<T>::make_op(a.shape(), std::move(data), {a}, [an, sp](auto& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int64_t o = 0; o < sp.outer; ++o)
            for (int64_t i = 0; i < sp.inner; ++i) {
                T dot = 0;
                for (int64_t k = 0; k < sp.n; ++k) {
                    const size_t idx = static_cast<size_t>((o * sp.n + k) * sp.inner + i);
                    dot += self.grad[idx] * self.data[idx];
                }
                for (int64_t k = 0; k < sp.n; ++k) {
                    const size_t idx = static_cast<size_t>((o * sp.n + k) * sp.inner + i);
                    an->grad[idx] += self.data[idx] * (self.grad[idx] - dot);
                }
            }
    });
}

// ---------------------------------------------------------------------------
// Matmul: [m,k]x[k,n] or batched [b,m,k]x[b,k,n]

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() == 2 && bs.size() == 2) {
        if (as[1] != bs[0])
            throw ShapeError("matmul " + shape_str(as) + " x " + shape_str(bs));
        const int64_t m = as[0], k = as[1], n = bs[1];
        std::vector<T> data(static_cast<size_t>(m * n));
        kernels::gemm_nn(a.data().data(), b.data().data(), data.data(), m, k, n, false);
        auto an = a.node();
        auto bn = b.node();
        return TensorT<T>::make_op({m, n}, std::move(data), {a, b}, [an, bn, m, k, n](auto& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                kernels::gemm_nt(self.grad.data(), bn->data.data(), an->grad.data(), m, n, k,
                                 true);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                kernels::gemm_tn(an->data.data(), self.grad.data(), bn->grad.data(), m, k, n,
                                 true);
            }
        });
    }
    if (as.size() == 3 && bs.size() == 3) {
        if (as[0] != bs[0] || as[2] != bs[1])
            throw ShapeError("matmul " + shape_str(as) + " x " + shape_str(bs));
        const int64_t bt = as[0], m = as[1], k = as[2], n = bs[2];
        std::vector<T> data(static_cast<size_t>(bt * m * n));
        const T* pa = a.data().data();
        const T* pb = b.data().data();
        parallel_for(bt * m, [&](int64_t bm) {
            const int64_t bi = bm / m, i = bm % m;
            const T* arow = pa + bi * m * k + i * k;
            const T* bmat = pb + bi * k * n;
            T* crow = data.data() + bi * m * n + i * n;
            std::fill(crow, crow + n, T(0));
            for (int64_t kk = 0; kk < k; ++kk) {
                const T av = arow[kk];
                if (av == T(0)) continue;
                const T* brow = bmat + kk * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        });
        auto an = a.node();
        auto bn = b.node();
        return TensorT<T>::make_op({bt, m, n}, std::move(data), {a, b},
                                   [an, bn, bt, m, k, n](auto& self) {
                                       for (int64_t bi = 0; bi < bt; ++bi) {
                                           const T* dg = self.grad.data() + bi * m * n;
                                           if (an->requires_grad) {
                                               an->ensure_grad();
                                               kernels::gemm_nt(dg, bn->data.data() + bi * k * n,
                                                                an->grad.data() + bi * m * k, m,
                                                                n, k, true);
                                           }
                                           if (bn->requires_grad) {
                                               bn->ensure_grad();
                                               kernels::gemm_tn(an->data.data() + bi * m * k, dg,
                                                                bn->grad.data() + bi * k * n, m,
                                                                k, n, true);
                                           }
                                       }
                                   });
    }
    throw ShapeError("matmul expects rank 2x2 or 3x3, got " + shape_str(as) + " x " +
                     shape_str(bs));
}

// ---------------------------------------------------------------------------
// Row gather/scatter along dim 1 of [B,N,D] (mask bookkeeping for MAE)

using IndexRows = std::vector<std::vector<int64_t>>;

template <typename T>
TensorT<T> gather_rows(const TensorT<T>& x, const IndexRows& idx) {
    const auto& s = x.shape();
    if (s.size() != 3) throw ShapeError("gather_rows expects [B,N,D]");
    const int64_t bsz = s[0], n = s[1], d = s[2];
    if (static_cast<int64_t>(idx.size()) != bsz) throw ShapeError("gather_rows: batch mismatch");
    const int64_t k = static_cast<int64_t>(idx[0].size());
    std::vector<T> data(static_cast<size_t>(bsz * k * d));
    const T* px = x.data().data();
    for (int64_t b = 0; b < bsz; ++b) {
        if (static_cast<int64_t>(idx[static_cast<size_t>(b)].size()) != k)
            throw ShapeError("gather_rows: ragged index rows");
        for (int64_t j = 0; j < k; ++j) {
            const int64_t r = idx[static_cast<size_t>(b)][static_cast<size_t>(j)];
            if (r < 0 || r >= n) throw ShapeError("gather_rows: index out of range");
            std::copy(px + (b * n + r) * d, px + (b * n + r + 1) * d,
                      data.begin() + (b * k + j) * d);
        }
    }
    auto xn = x.node();
    return TensorT<T>::make_op({bsz, k, d}, std::move(data), {x}, [xn, idx, n, d, k](auto& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const int64_t bsz2 = static_cast<int64_t>(idx.size());
        for (int64_t b = 0; b < bsz2; ++b)
            for (int64_t j = 0; j < k; ++j) {
                const int64_t r = idx[static_cast<size_t>(b)][static_cast<size_t>(j)];
                for (int64_t c = 0; c < d; ++c)
                    xn->grad[static_cast<size_t>((b * n + r) * d + c)] +=
                        self.grad[static_cast<size_t>((b * k + j) * d + c)];
            }
    });
}

// out = base with out[b, idx[b][j], :] = src[b, j, :]. Rows must be unique per batch.
template <typename T>
TensorT<T> scatter_rows(const TensorT<T>& base, const IndexRows& idx, const TensorT<T>& src) {
    const auto& s = base.shape();
    const auto& ss = src.shape();
    if (s.size() != 3 || ss.size() != 3) throw ShapeError("scatter_rows expects [B,N,D]");
    const int64_t bsz = s[0], n = s[1], d = s[2];
    const int64_t k = ss[1];
    if (ss[0] != bsz || ss[2] != d || static_cast<int64_t>(idx.size()) != bsz)
        throw ShapeError("scatter_rows: shape mismatch");
    std::vector<T> data(base.data());
    const T* ps = src.data().data();
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t j = 0; j < k; ++j) {
            const int64_t r = idx[static_cast<size_t>(b)][static_cast<size_t>(j)];
            if (r < 0 || r >= n) throw ShapeError("scatter_rows: index out of range");
            std::copy(ps + (b * k + j) * d, ps + (b * k + j + 1) * d,
                      data.begin() + (b * n + r) * d);
        }
    auto basen = base.node();
    auto srcn = src.node();
    return TensorT<T>::make_op(s, std::move(data), {base, src},
                               [basen, srcn, idx, n, d, k](auto& self) {
                                   const int64_t bsz2 = static_cast<int64_t>(idx.size());
                                   if (srcn->requires_grad) {
                                       srcn->ensure_grad();
                                       for (int64_t b = 0; b < bsz2; ++b)
                                           for (int64_t j = 0; j < k; ++j) {
                                               const int64_t r =
                                                   idx[static_cast<size_t>(b)]
                                                      [static_cast<size_t>(j)];
                                               for (int64_t c = 0; c < d; ++c)
                                                   srcn->grad[static_cast<size_t>(
                                                       (b * k + j) * d + c)] +=
                                                       self.grad[static_cast<size_t>(
                                                           (b * n + r) * d + c)];
                                           }
                                   }
                                   if (basen->requires_grad) {
                                       basen->ensure_grad();
                                       std::vector<char> overwritten(
                                           static_cast<size_t>(bsz2 * n), 0);
                                       for (int64_t b = 0; b < bsz2; ++b)
                                           for (int64_t j = 0; j < k; ++j)
                                               overwritten[static_cast<size_t>(
                                                   b * n +
                                                   idx[static_cast<size_t>(b)]
                                                      [static_cast<size_t>(j)])] = 1;
                                       for (int64_t b = 0; b < bsz2; ++b)
                                           for (int64_t r = 0; r < n; ++r) {
                                               if (overwritten[static_cast<size_t>(b * n + r)])
                                                   continue;
                                               for (int64_t c = 0; c < d; ++c)
                                                   basen->grad[static_cast<size_t>(
                                                       (b * n + r) * d + c)] +=
                                                       self.grad[static_cast<size_t>(
                                                           (b * n + r) * d + c)];
                                           }
                                   }
                               });
}

// ---------------------------------------------------------------------------
// Gradient checking against central finite differences

template <typename T>
struct GradCheckReport {
    bool pass = false;
    T max_rel_err = 0;
    int64_t worst_index = -1;
};

// f must be deterministic and scalar-valued; detected by double evaluation.
// Relative error uses max(|ad|,|fd|,1) in the denominator so near-zero
// gradients are compared absolutely.
template <typename T, typename F>
GradCheckReport<T> grad_check(F&& f, const TensorT<T>& x0, T eps, T tol) {
    TensorT<T> x = TensorT<T>::from_data(x0.shape(), std::vector<T>(x0.data()), true);

    TensorT<T> y1 = f(x);
    TensorT<T> y2 = f(x);
    if (y1.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
    if (y1.data() != y2.data())
        throw ContractError("grad_check: f is not deterministic");

    x.zero_grad();
    TensorT<T> y = f(x);
    y.backward();
    std::vector<T> ad = x.grad();

    GradCheckReport<T> rep;
    NoGradGuard ng;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const T orig = x.data()[static_cast<size_t>(i)];
        x.data()[static_cast<size_t>(i)] = orig + eps;
        const T fp = f(x).item();
        x.data()[static_cast<size_t>(i)] = orig - eps;
        const T fm = f(x).item();
        x.data()[static_cast<size_t>(i)] = orig;
        const T fd = (fp - fm) / (T(2) * eps);
        const T a = ad[static_cast<size_t>(i)];
        const T denom = std::max(std::max(std::fabs(a), std::fabs(fd)), T(1));
        const T rel = std::fabs(a - fd) / denom;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_index = i;
        }
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace prospectr
