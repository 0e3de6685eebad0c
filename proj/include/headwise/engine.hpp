#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "headwise/error.hpp"
#include "headwise/matrix.hpp"
#include "headwise/units.hpp"
#include "headwise/workload.hpp"

namespace headwise {

// --- deterministic synthetic parameters -------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Uniform in [-scale, scale) from the top 24 bits; independent of the
// standard library's distribution implementations.
inline void fill_uniform(std::span<float> out, std::uint64_t seed, std::uint64_t stream, float scale) {
    std::mt19937_64 gen(splitmix64(seed ^ splitmix64(stream)));
    for (float& v : out) {
        const auto bits = static_cast<std::uint32_t>(gen() >> 40);
        v = (static_cast<float>(bits) * (1.0f / 16777216.0f) * 2.0f - 1.0f) * scale;
    }
}

} // namespace detail

struct LayerWeights {
    Matrix wq;  // D x D
    Matrix wk;  // D x D_kv
    Matrix wv;  // D x D_kv
    Matrix wo;  // D x D
};

struct ModelWeights {
    std::uint64_t seed = 0;
    std::vector<LayerWeights> layers;
};

inline ModelWeights make_weights(const ModelSpec& m, std::uint64_t seed) {
    ModelWeights w;
    w.seed = seed;
    const auto d = static_cast<std::size_t>(m.hidden_dim);
    const auto dkv = static_cast<std::size_t>(m.kv_dim());
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    for (std::uint64_t l = 0; l < m.num_layers; ++l) {
        LayerWeights lw{Matrix(d, d), Matrix(d, dkv), Matrix(d, dkv), Matrix(d, d)};
        detail::fill_uniform(lw.wq.data(), seed, 4 * l + 0, scale);
        detail::fill_uniform(lw.wk.data(), seed, 4 * l + 1, scale);
        detail::fill_uniform(lw.wv.data(), seed, 4 * l + 2, scale);
        detail::fill_uniform(lw.wo.data(), seed, 4 * l + 3, scale);
        w.layers.push_back(std::move(lw));
    }
    return w;
}

/// Synthetic input embeddings for positions [first, first + count).
inline Matrix embed(const ModelSpec& m, std::uint64_t seed, Tokens first, Tokens count) {
    const auto d = static_cast<std::size_t>(m.hidden_dim);
    Matrix x(static_cast<std::size_t>(count), d);
    for (Tokens t = 0; t < count; ++t) {
        detail::fill_uniform(std::span<float>(x.data().data() + t * d, d), seed, 0x8000000000000000ULL + first + t,
                             1.0f);
    }
    return x;
}

// --- head-partitioned KV cache ----------------------------------------------

// Keys and values per (layer, kv head), each head's block contiguous and
// pre-allocated to `capacity` tokens. Layout: [layer][head][token][head_dim].
class HeadKvCache {
public:
    HeadKvCache() = default;
    HeadKvCache(std::uint64_t layers, std::uint64_t heads, std::uint64_t head_dim, Tokens capacity)
        : layers_(layers), heads_(heads), head_dim_(head_dim), capacity_(capacity),
          keys_(layers * heads * capacity * head_dim, 0.0f), values_(keys_.size(), 0.0f),
          lengths_(layers * heads, 0) {}

    [[nodiscard]] std::uint64_t layers() const noexcept { return layers_; }
    [[nodiscard]] std::uint64_t heads() const noexcept { return heads_; }
    [[nodiscard]] std::uint64_t head_dim() const noexcept { return head_dim_; }
    [[nodiscard]] Tokens capacity() const noexcept { return capacity_; }

    [[nodiscard]] Tokens length(std::uint64_t layer, std::uint64_t head) const { return lengths_[index(layer, head)]; }

    /// Common length of every block; throws if heads have diverged.
    [[nodiscard]] Tokens tokens() const {
        if (lengths_.empty()) {
            return 0;
        }
        const Tokens first = lengths_.front();
        for (Tokens n : lengths_) {
            if (n != first) {
                throw Error(ErrorKind::ShapeMismatch, "kv heads hold different token counts");
            }
        }
        return first;
    }

    [[nodiscard]] ConstMatrixView keys(std::uint64_t layer, std::uint64_t head) const {
        return {keys_.data() + offset(layer, head), static_cast<std::size_t>(length(layer, head)), head_dim_, head_dim_};
    }
    [[nodiscard]] ConstMatrixView values(std::uint64_t layer, std::uint64_t head) const {
        return {values_.data() + offset(layer, head), static_cast<std::size_t>(length(layer, head)), head_dim_,
                head_dim_};
    }

    // Whole pre-allocated block, including rows past the current length.
    [[nodiscard]] std::span<float> key_block(std::uint64_t layer, std::uint64_t head) {
        return {keys_.data() + offset(layer, head), capacity_ * head_dim_};
    }
    [[nodiscard]] std::span<float> value_block(std::uint64_t layer, std::uint64_t head) {
        return {values_.data() + offset(layer, head), capacity_ * head_dim_};
    }
    [[nodiscard]] std::span<const float> key_block(std::uint64_t layer, std::uint64_t head) const {
        return {keys_.data() + offset(layer, head), capacity_ * head_dim_};
    }
    [[nodiscard]] std::span<const float> value_block(std::uint64_t layer, std::uint64_t head) const {
        return {values_.data() + offset(layer, head), capacity_ * head_dim_};
    }

    /// Appends rows to one head. Earlier rows are untouched.
    Tokens append(std::uint64_t layer, std::uint64_t head, ConstMatrixView k_new, ConstMatrixView v_new) {
        if (k_new.cols != head_dim_ || v_new.cols != head_dim_ || k_new.rows != v_new.rows) {
            throw Error(ErrorKind::ShapeMismatch, "append expects matching rows x " + std::to_string(head_dim_));
        }
        Tokens& len = lengths_[index(layer, head)];
        if (len + k_new.rows > capacity_) {
            throw Error(ErrorKind::CapacityExceeded, "kv head (" + std::to_string(layer) + "," + std::to_string(head) +
                                                         ") holds " + std::to_string(len) + " of " +
                                                         std::to_string(capacity_) + " tokens, cannot add " +
                                                         std::to_string(k_new.rows));
        }
        float* kdst = keys_.data() + offset(layer, head) + len * head_dim_;
        float* vdst = values_.data() + offset(layer, head) + len * head_dim_;
        for (std::size_t r = 0; r < k_new.rows; ++r) {
            std::copy_n(k_new.row(r), head_dim_, kdst + r * head_dim_);
            std::copy_n(v_new.row(r), head_dim_, vdst + r * head_dim_);
        }
        len += k_new.rows;
        return len;
    }

    void set_length(std::uint64_t layer, std::uint64_t head, Tokens n) {
        if (n > capacity_) {
            throw Error(ErrorKind::CapacityExceeded, "length beyond capacity");
        }
        lengths_[index(layer, head)] = n;
    }

    void clear() { std::fill(lengths_.begin(), lengths_.end(), Tokens{0}); }

private:
    [[nodiscard]] std::size_t index(std::uint64_t layer, std::uint64_t head) const {
        if (layer >= layers_ || head >= heads_) {
            throw Error(ErrorKind::ShapeMismatch, "kv block (" + std::to_string(layer) + "," + std::to_string(head) +
                                                      ") out of range");
        }
        return static_cast<std::size_t>(layer * heads_ + head);
    }
    [[nodiscard]] std::size_t offset(std::uint64_t layer, std::uint64_t head) const {
        return index(layer, head) * capacity_ * head_dim_;
    }

    std::uint64_t layers_ = 0;
    std::uint64_t heads_ = 0;
    std::uint64_t head_dim_ = 0;
    Tokens capacity_ = 0;
    std::vector<float> keys_;
    std::vector<float> values_;
    std::vector<Tokens> lengths_;
};

inline Tokens append_kv(HeadKvCache& cache, std::uint64_t layer, std::uint64_t head, ConstMatrixView k_new,
                        ConstMatrixView v_new) {
    return cache.append(layer, head, k_new, v_new);
}

// --- attention ----------------------------------------------------------------

struct Projections {
    Matrix q;  // chunk x D
    Matrix k;  // chunk x D_kv
    Matrix v;  // chunk x D_kv
};

inline Projections project_qkv(const ModelSpec& m, const ModelWeights& w, const Matrix& x, std::uint64_t layer) {
    if (x.cols() != m.hidden_dim) {
        throw Error(ErrorKind::ShapeMismatch, "input has " + std::to_string(x.cols()) + " columns, model D is " +
                                                  std::to_string(m.hidden_dim));
    }
    if (layer >= w.layers.size()) {
        throw Error(ErrorKind::ShapeMismatch, "layer index out of range");
    }
    const LayerWeights& lw = w.layers[layer];
    return {matmul(x, lw.wq), matmul(x, lw.wk), matmul(x, lw.wv)};
}

/// softmax(q k^T / sqrt(D_h) + causal mask) v for one head. Query row i sits
/// at absolute position causal_offset + i and sees keys 0..causal_offset + i.
inline void attention_head_into(ConstMatrixView q, ConstMatrixView k, ConstMatrixView v, Tokens causal_offset,
                                MatrixView out) {
    const std::size_t dh = q.cols;
    if (k.cols != dh || v.cols != dh || k.rows != v.rows || out.rows != q.rows || out.cols != dh) {
        throw Error(ErrorKind::ShapeMismatch, "attention head shapes disagree");
    }
    if (causal_offset + q.rows > k.rows) {
        throw Error(ErrorKind::ShapeMismatch, "causal window " + std::to_string(causal_offset + q.rows) +
                                                  " exceeds cached tokens " + std::to_string(k.rows));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> scores;
    std::vector<double> acc(dh);
    for (std::size_t i = 0; i < q.rows; ++i) {
        const std::size_t visible = static_cast<std::size_t>(causal_offset) + i + 1;
        scores.resize(visible);
        double peak = -INFINITY;
        for (std::size_t j = 0; j < visible; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < dh; ++c) {
                dot += static_cast<double>(q(i, c)) * static_cast<double>(k(j, c));
            }
            scores[j] = dot * scale;
            peak = std::max(peak, scores[j]);
        }
        double denom = 0.0;
        for (double& s : scores) {
            s = std::exp(s - peak);
            denom += s;
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < visible; ++j) {
            const double p = scores[j] / denom;
            for (std::size_t c = 0; c < dh; ++c) {
                acc[c] += p * static_cast<double>(v(j, c));
            }
        }
        for (std::size_t c = 0; c < dh; ++c) {
            out(i, c) = static_cast<float>(acc[c]);
        }
    }
}

inline Matrix attention_head(ConstMatrixView q, ConstMatrixView k, ConstMatrixView v, Tokens causal_offset) {
    Matrix out(q.rows, q.cols);
    attention_head_into(q, k, v, causal_offset, out.view());
    return out;
}

/// Multi-head attention for one layer from per-kv-head caches. Query head h
/// reads kv head h / (H / H_kv); outputs are concatenated in query-head order.
inline Matrix full_attention_layer(const Matrix& q, std::span<const ConstMatrixView> keys,
                                   std::span<const ConstMatrixView> values, std::uint64_t num_q_heads,
                                   Tokens causal_offset) {
    if (keys.empty() || keys.size() != values.size() || num_q_heads % keys.size() != 0 ||
        q.cols() % num_q_heads != 0) {
        throw Error(ErrorKind::ShapeMismatch, "query heads must be a multiple of kv heads");
    }
    const std::size_t dh = q.cols() / num_q_heads;
    const std::size_t group = num_q_heads / keys.size();
    Matrix out(q.rows(), q.cols());
    for (std::size_t h = 0; h < num_q_heads; ++h) {
        attention_head_into(q.cols_view(h * dh, dh), keys[h / group], values[h / group], causal_offset,
                            out.cols_view(h * dh, dh));
    }
    return out;
}

inline Matrix full_attention_layer(const Matrix& q, const HeadKvCache& cache, std::uint64_t layer,
                                   std::uint64_t num_q_heads, Tokens causal_offset) {
    std::vector<ConstMatrixView> keys;
    std::vector<ConstMatrixView> values;
    for (std::uint64_t h = 0; h < cache.heads(); ++h) {
        keys.push_back(cache.keys(layer, h));
        values.push_back(cache.values(layer, h));
    }
    return full_attention_layer(q, keys, values, num_q_heads, causal_offset);
}

/// x + attn * W_O, in place.
inline void add_output_projection(Matrix& x, const Matrix& attn, const LayerWeights& lw) {
    const Matrix proj = matmul(attn, lw.wo);
    auto xs = x.data();
    auto ps = proj.data();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] += ps[i];
    }
}

// --- resident reference engine --------------------------------------------------

struct PrefillOutput {
    Matrix hidden;  // S x D, final-layer state for every position
    Matrix last;    // 1 x D, zeros when S = 0
};

// Attention-only decoder stack with the whole KV cache resident. This is the
// numeric reference every offload schedule is compared against.
class Engine {
public:
    Engine(ModelSpec m, std::uint64_t seed, Tokens capacity)
        : spec_(std::move(m)), weights_(make_weights(spec_, seed)),
          cache_(spec_.num_layers, spec_.num_kv_heads, spec_.head_dim, capacity) {
        validate(spec_);
    }

    [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const ModelWeights& weights() const noexcept { return weights_; }
    [[nodiscard]] const HeadKvCache& cache() const noexcept { return cache_; }
    [[nodiscard]] HeadKvCache& cache() noexcept { return cache_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return weights_.seed; }

    /// Runs `x` (rows = new tokens) through every layer, appending to the cache.
    Matrix forward(Matrix x) {
        const Tokens offset = cache_.tokens();
        if (offset + x.rows() > cache_.capacity()) {
            throw Error(ErrorKind::CapacityExceeded, "cache holds " + std::to_string(offset) + " of " +
                                                         std::to_string(cache_.capacity()) + " tokens, cannot add " +
                                                         std::to_string(x.rows()));
        }
        const std::size_t dh = spec_.head_dim;
        for (std::uint64_t l = 0; l < spec_.num_layers; ++l) {
            Projections p = project_qkv(spec_, weights_, x, l);
            for (std::uint64_t h = 0; h < spec_.num_kv_heads; ++h) {
                cache_.append(l, h, p.k.cols_view(h * dh, dh), p.v.cols_view(h * dh, dh));
            }
            const Matrix attn = full_attention_layer(p.q, cache_, l, spec_.num_q_heads, offset);
            add_output_projection(x, attn, weights_.layers[l]);
        }
        return x;
    }

    PrefillOutput prefill(Tokens tokens, Tokens chunk) {
        if (chunk == 0) {
            throw Error(ErrorKind::InvalidSpec, "chunk must be >= 1");
        }
        const Tokens start = cache_.tokens();
        if (start + tokens > cache_.capacity()) {
            throw Error(ErrorKind::CapacityExceeded, "prefill of " + std::to_string(tokens) +
                                                         " tokens exceeds cache capacity " +
                                                         std::to_string(cache_.capacity()));
        }
        PrefillOutput out{Matrix(static_cast<std::size_t>(tokens), spec_.hidden_dim), Matrix(1, spec_.hidden_dim)};
        for (Tokens done = 0; done < tokens; done += chunk) {
            const Tokens n = std::min(chunk, tokens - done);
            const Matrix y = forward(embed(spec_, seed(), start + done, n));
            std::copy(y.data().begin(), y.data().end(),
                      out.hidden.data().begin() + static_cast<std::ptrdiff_t>(done * spec_.hidden_dim));
        }
        if (tokens > 0) {
            out.last = Matrix::from_view(out.hidden.rows_view(static_cast<std::size_t>(tokens - 1), 1));
        }
        return out;
    }

    /// One new token at the next position, through every layer.
    Matrix decode_step(const Matrix& x_t) {
        if (cache_.tokens() == 0) {
            throw Error(ErrorKind::InvalidSpec, "decode requires a prefilled cache");
        }
        if (x_t.rows() != 1) {
            throw Error(ErrorKind::ShapeMismatch, "decode takes exactly one token");
        }
        return forward(x_t);
    }

    Matrix decode_step() { return decode_step(embed(spec_, seed(), cache_.tokens(), 1)); }

private:
    ModelSpec spec_;
    ModelWeights weights_;
    HeadKvCache cache_;
};

} // namespace headwise
