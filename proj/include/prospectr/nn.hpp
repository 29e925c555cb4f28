#pragma once

// Neural layers over the tensor engine: linear, layer/batch norm, dropout,
// multi-head self-attention, pre-norm transformer blocks, patch embedding
// with fixed 2-D sinusoidal positions, PReLU, Adam, and parameter/FLOP
// accounting. FLOPs are counted as 2*MACs for matmuls plus elementwise work.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prospectr/tensor.hpp"

namespace prospectr::nn {

template <typename T>
struct ParamRef {
    std::string name;
    TensorT<T> tensor;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

// non-trainable named state (batch-norm running stats)
template <typename T>
struct StateRef {
    std::string name;
    std::vector<T>* vec;
};

template <typename T>
int64_t count_params(const ParamList<T>& params) {
    int64_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
}

// ---------------------------------------------------------------------------

template <typename T>
struct Linear {
    TensorT<T> w, b;
    int64_t in = 0, out = 0;

    Linear() = default;
    Linear(int64_t in_dim, int64_t out_dim, Rng& rng)
        : w(TensorT<T>::trunc_normal({in_dim, out_dim}, rng, T(0.02), true)),
          b(TensorT<T>::zeros({out_dim}, true)),
          in(in_dim),
          out(out_dim) {}

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.rank() == 2) return add(matmul(x, w), b);
        Shape os = x.shape();
        os.back() = out;
        TensorT<T> flat = reshape(x, {-1, in});
        return reshape(add(matmul(flat, w), b), std::move(os));
    }

    void collect(const std::string& prefix, ParamList<T>& out_list) {
        out_list.push_back({prefix + ".w", w});
        out_list.push_back({prefix + ".b", b});
    }

    int64_t flops(int64_t n_rows) const { return n_rows * (2 * in * out + out); }
};

template <typename T>
struct LayerNorm {
    TensorT<T> gamma, beta;
    T eps = T(1e-5);
    int64_t dim = 0;

    LayerNorm() = default;
    explicit LayerNorm(int64_t d)
        : gamma(TensorT<T>::filled({d}, T(1), true)),
          beta(TensorT<T>::zeros({d}, true)),
          dim(d) {}

    TensorT<T> forward(const TensorT<T>& x) const {
        const int axis = x.rank() - 1;
        TensorT<T> mu = mean(x, axis);
        TensorT<T> v = var(x, axis);
        TensorT<T> xn = div(sub(x, mu), sqrt(add_scalar(v, eps)));
        return add(mul(xn, gamma), beta);
    }

    void collect(const std::string& prefix, ParamList<T>& out_list) {
        out_list.push_back({prefix + ".gamma", gamma});
        out_list.push_back({prefix + ".beta", beta});
    }

    int64_t flops(int64_t n_rows) const { return n_rows * dim * 8; }
};

// 1-D batch norm over [B, D]; population statistics both for normalization
// and for the EMA running stats (momentum 0.1).
template <typename T>
struct BatchNorm1d {
    TensorT<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);
    int64_t dim = 0;

    BatchNorm1d() = default;
    explicit BatchNorm1d(int64_t d)
        : gamma(TensorT<T>::filled({d}, T(1), true)),
          beta(TensorT<T>::zeros({d}, true)),
          running_mean(static_cast<size_t>(d), T(0)),
          running_var(static_cast<size_t>(d), T(1)),
          dim(d) {}

    TensorT<T> forward(const TensorT<T>& x, bool train) {
        if (x.rank() != 2 || x.dim(1) != dim) throw ShapeError("batchnorm expects [B,D]");
        if (train) {
            if (x.dim(0) < 2) throw ContractError("batchnorm train mode needs B >= 2");
            TensorT<T> mu = mean(x, 0);
            TensorT<T> v = var(x, 0);
            for (int64_t i = 0; i < dim; ++i) {
                running_mean[static_cast<size_t>(i)] =
                    (T(1) - momentum) * running_mean[static_cast<size_t>(i)] +
                    momentum * mu.data()[static_cast<size_t>(i)];
                running_var[static_cast<size_t>(i)] =
                    (T(1) - momentum) * running_var[static_cast<size_t>(i)] +
                    momentum * v.data()[static_cast<size_t>(i)];
            }
            TensorT<T> xn = div(sub(x, mu), sqrt(add_scalar(v, eps)));
            return add(mul(xn, gamma), beta);
        }
        TensorT<T> mu = TensorT<T>::from_data({1, dim}, std::vector<T>(running_mean));
        TensorT<T> v = TensorT<T>::from_data({1, dim}, std::vector<T>(running_var));
        TensorT<T> xn = div(sub(x, mu), sqrt(add_scalar(v, eps)));
        return add(mul(xn, gamma), beta);
    }

    void collect(const std::string& prefix, ParamList<T>& out_list) {
        out_list.push_back({prefix + ".gamma", gamma});
        out_list.push_back({prefix + ".beta", beta});
    }
    void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out_list) {
        out_list.push_back({prefix + ".running_mean", &running_mean});
        out_list.push_back({prefix + ".running_var", &running_var});
    }

    int64_t flops(int64_t n_rows) const { return n_rows * dim * 8; }
};

// Inverted dropout. The mask comes from an explicit stream so results do not
// depend on call order across threads.
template <typename T>
TensorT<T> dropout(const TensorT<T>& x, T p, bool active, Rng& stream) {
    if (p < T(0) || p >= T(1)) throw ContractError("dropout p must be in [0,1)");
    if (!active || p == T(0)) return x;
    std::vector<T> mask(static_cast<size_t>(x.numel()));
    const T keep_scale = T(1) / (T(1) - p);
    for (auto& m : mask)
        m = stream.uniform() < static_cast<double>(p) ? T(0) : keep_scale;
    return mul(x, TensorT<T>::from_data(x.shape(), std::move(mask)));
}

template <typename T>
struct PReLU {
    TensorT<T> slope;

    PReLU() = default;
    explicit PReLU(T init_slope) : slope(TensorT<T>::scalar(init_slope, true)) {}

    TensorT<T> forward(const TensorT<T>& x) const { return prelu(x, slope); }

    void collect(const std::string& prefix, ParamList<T>& out_list) {
        out_list.push_back({prefix + ".slope", slope});
    }
};

// ---------------------------------------------------------------------------

template <typename T>
struct MultiHeadAttention {
    Linear<T> wq, wk, wv, wo;
    int64_t dim = 0, heads = 0;

    MultiHeadAttention() = default;
    MultiHeadAttention(int64_t d, int64_t h, Rng& rng)
        : wq(d, d, rng), wk(d, d, rng), wv(d, d, rng), wo(d, d, rng), dim(d), heads(h) {
        if (d % h != 0) throw ConfigError("attention dim must be divisible by heads");
    }

    // x: [B,N,D]; attn_bias (optional): [N,N] additive logits (-inf masks)
    TensorT<T> forward(const TensorT<T>& x, const TensorT<T>* attn_bias = nullptr) const {
        const int64_t b = x.dim(0), n = x.dim(1);
        const int64_t dh = dim / heads;
        auto split_heads = [&](const TensorT<T>& t) {
            return reshape(permute(reshape(t, {b, n, heads, dh}), {0, 2, 1, 3}),
                           {b * heads, n, dh});
        };
        TensorT<T> q = split_heads(wq.forward(x));
        TensorT<T> k = split_heads(wk.forward(x));
        TensorT<T> v = split_heads(wv.forward(x));

        TensorT<T> scores = mul_scalar(matmul(q, transpose(k, 1, 2)),
                                       T(1) / std::sqrt(static_cast<T>(dh)));
        if (attn_bias) scores = add(scores, *attn_bias);
        TensorT<T> att = softmax(scores, 2);
        TensorT<T> ctx = matmul(att, v);  // [B*h, N, dh]
        TensorT<T> merged =
            reshape(permute(reshape(ctx, {b, heads, n, dh}), {0, 2, 1, 3}), {b, n, dim});
        return wo.forward(merged);
    }

    void collect(const std::string& prefix, ParamList<T>& out_list) {
        wq.collect(prefix + ".wq", out_list);
        wk.collect(prefix + ".wk", out_list);
        wv.collect(prefix + ".wv", out_list);
        wo.collect(prefix + ".wo", out_list);
    }

    int64_t flops(int64_t n_tokens) const {
        int64_t f = 4 * wq.flops(n_tokens);                 // q,k,v,o projections
        f += 2 * 2 * n_tokens * n_tokens * dim;             // QK^T and att*V
        f += 4 * heads * n_tokens * n_tokens;               // scale+softmax
        return f;
    }
};

// Pre-norm block: x + attn(ln1(x)), then x + mlp(ln2(x)).
template <typename T>
struct TransformerBlock {
    LayerNorm<T> ln1, ln2;
    MultiHeadAttention<T> attn;
    Linear<T> fc1, fc2;
    int64_t dim = 0;

    TransformerBlock() = default;
    TransformerBlock(int64_t d, int64_t heads, int64_t mlp_ratio, Rng& rng)
        : ln1(d), ln2(d), attn(d, heads, rng), fc1(d, d * mlp_ratio, rng),
          fc2(d * mlp_ratio, d, rng), dim(d) {}

    TensorT<T> forward(const TensorT<T>& x, const TensorT<T>* attn_bias = nullptr) const {
        TensorT<T> h = add(x, attn.forward(ln1.forward(x), attn_bias));
        TensorT<T> m = fc2.forward(gelu(fc1.forward(ln2.forward(h))));
        return add(h, m);
    }

    void collect(const std::string& prefix, ParamList<T>& out_list) {
        ln1.collect(prefix + ".ln1", out_list);
        attn.collect(prefix + ".attn", out_list);
        ln2.collect(prefix + ".ln2", out_list);
        fc1.collect(prefix + ".fc1", out_list);
        fc2.collect(prefix + ".fc2", out_list);
    }

    int64_t flops(int64_t n_tokens) const {
        int64_t f = ln1.flops(n_tokens) + ln2.flops(n_tokens) + attn.flops(n_tokens);
        f += fc1.flops(n_tokens) + fc2.flops(n_tokens);
        f += 8 * n_tokens * fc1.out;  // gelu
        f += 2 * n_tokens * dim;      // residual adds
        return f;
    }
};

// Fixed 2-D sine/cosine position table [grid*grid, dim]; dim % 4 == 0.
template <typename T>
TensorT<T> sincos_pos_embed_2d(int64_t grid, int64_t dim) {
    if (dim % 4 != 0) throw ConfigError("position embedding dim must be divisible by 4");
    const int64_t quarter = dim / 4;
    std::vector<T> table(static_cast<size_t>(grid * grid * dim));
    for (int64_t r = 0; r < grid; ++r)
        for (int64_t c = 0; c < grid; ++c) {
            T* row = table.data() + (r * grid + c) * dim;
            for (int64_t i = 0; i < quarter; ++i) {
                const double omega =
                    1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(quarter));
                row[2 * i] = static_cast<T>(std::sin(omega * static_cast<double>(r)));
                row[2 * i + 1] = static_cast<T>(std::cos(omega * static_cast<double>(r)));
                row[2 * quarter + 2 * i] =
                    static_cast<T>(std::sin(omega * static_cast<double>(c)));
                row[2 * quarter + 2 * i + 1] =
                    static_cast<T>(std::cos(omega * static_cast<double>(c)));
            }
        }
    return TensorT<T>::from_data({grid * grid, dim}, std::move(table));
}

// [B, m, w, w] -> [B, P, p*p*m] via reshape/permute (gradient-transparent)
template <typename T>
TensorT<T> patchify(const TensorT<T>& x, int64_t patch) {
    const int64_t b = x.dim(0), m = x.dim(1), w = x.dim(2);
    if (x.dim(3) != w || w % patch != 0) throw ConfigError("patch must divide window size");
    const int64_t g = w / patch;
    TensorT<T> t = reshape(x, {b, m, g, patch, g, patch});
    t = permute(t, {0, 2, 4, 3, 5, 1});  // [B,g,g,p,p,m]
    return reshape(t, {b, g * g, patch * patch * m});
}

template <typename T>
TensorT<T> unpatchify(const TensorT<T>& tokens, int64_t m, int64_t w, int64_t patch) {
    const int64_t b = tokens.dim(0), g = w / patch;
    TensorT<T> t = reshape(tokens, {b, g, g, patch, patch, m});
    t = permute(t, {0, 5, 1, 3, 2, 4});  // [B,m,g,p,g,p]
    return reshape(t, {b, m, w, w});
}

// Patch tokens + fixed sinusoidal positions.
template <typename T>
struct PatchEmbed {
    Linear<T> proj;
    TensorT<T> pos;  // [P, dim], not trainable
    int64_t bands = 0, window = 0, patch = 0, dim = 0;

    PatchEmbed() = default;
    PatchEmbed(int64_t m, int64_t w, int64_t p, int64_t d, Rng& rng)
        : proj(p * p * m, d, rng), pos(sincos_pos_embed_2d<T>(w / p, d)), bands(m), window(w),
          patch(p), dim(d) {
        if (w % p != 0) throw ConfigError("patch must divide window size");
    }

    int64_t n_patches() const { return (window / patch) * (window / patch); }

    // [B, m, w, w] -> [B, P, dim]
    TensorT<T> forward(const TensorT<T>& x) const {
        return add(proj.forward(patchify(x, patch)), pos);
    }

    void collect(const std::string& prefix, ParamList<T>& out_list) {
        proj.collect(prefix + ".proj", out_list);
    }

    int64_t flops() const { return proj.flops(n_patches()) + n_patches() * dim; }
};

// ---------------------------------------------------------------------------
// Adam with explicit zero_grad; lr may be reassigned per step (cosine decay).

template <typename T>
struct Adam {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);

    explicit Adam(ParamList<T> params, T learning_rate = T(1e-3))
        : lr(learning_rate), params_(std::move(params)) {
        for (auto& p : params_) {
            m_.emplace_back(p.tensor.numel(), T(0));
            v_.emplace_back(p.tensor.numel(), T(0));
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    void step() {
        ++t_;
        const T bc1 = T(1) - std::pow(beta1, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(beta2, static_cast<T>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& data = params_[i].tensor.data();
            auto& grad = params_[i].tensor.grad();
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < data.size(); ++j) {
                m[j] = beta1 * m[j] + (T(1) - beta1) * grad[j];
                v[j] = beta2 * v[j] + (T(1) - beta2) * grad[j] * grad[j];
                const T mhat = m[j] / bc1;
                const T vhat = v[j] / bc2;
                data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    const ParamList<T>& params() const { return params_; }

private:
    ParamList<T> params_;
    std::vector<std::vector<T>> m_, v_;
    int64_t t_ = 0;
};

template <typename T>
T cosine_lr(T base, int64_t step, int64_t total_steps) {
    if (total_steps <= 1) return base;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return static_cast<T>(0.5 * static_cast<double>(base) * (1.0 + std::cos(3.14159265358979323846 * frac)));
}

}  // namespace prospectr::nn

namespace prospectr {

// Checkpoints: JSON manifest (kind, architecture, per-tensor CRC) + raw
// float32 blobs. Load rejects kind/architecture mismatches.
void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::string& arch_json, const nn::ParamList<float>& params,
                     const std::vector<nn::StateRef<float>>& state = {});
void load_checkpoint(const std::string& path, const std::string& kind,
                     const std::string& expected_arch_json, nn::ParamList<float>& params,
                     const std::vector<nn::StateRef<float>>& state = {});
// Peek at the stored architecture without loading tensors.
std::string checkpoint_arch(const std::string& path, const std::string& kind);

// order-stable hash of parameter bytes, for freeze checks
uint64_t params_fingerprint(const nn::ParamList<float>& params);

}  // namespace prospectr
