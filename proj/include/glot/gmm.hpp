#pragma once

// Global motion modeling: temporal token masking, a global encoder over the
// unmasked tokens, mean-template padding at the masked slots, a global
// decoder over the reassembled sequence, and an iterative regressor emitting
// per-frame parameters.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "glot/core.hpp"
#include "glot/geometry.hpp"
#include "glot/model_config.hpp"
#include "glot/nn.hpp"
#include "glot/tensor.hpp"

namespace glot {

// ---------------------------------------------------------------------------
// Masking
// ---------------------------------------------------------------------------

struct MaskSpec {
    std::vector<int> masked_indices;  // sorted
    double ratio = 0.0;

    bool is_masked(int t) const {
        return std::binary_search(masked_indices.begin(), masked_indices.end(), t);
    }

    std::vector<int> kept_indices(int t_len) const {
        std::vector<int> kept;
        kept.reserve(t_len - masked_indices.size());
        for (int t = 0; t < t_len; ++t)
            if (!is_masked(t)) kept.push_back(t);
        return kept;
    }

    // Pair mask for the velocity losses: entry t is 1 iff frame t is masked.
    std::vector<double> mask_vector(int t_len) const {
        std::vector<double> m(static_cast<std::size_t>(t_len) - 1, 0.0);
        for (int t : masked_indices)
            if (t < t_len - 1) m[t] = 1.0;
        return m;
    }

    static MaskSpec none() { return MaskSpec{}; }
};

// Uniform sample without replacement of round(alpha * T) frame indices. At
// least one frame is always left unmasked so the encoder has input.
inline MaskSpec sample_mask(int t_len, double alpha, Rng& rng) {
    if (alpha < 0.0 || alpha >= 1.0) throw ConfigMismatch("mask ratio must be in [0, 1)");
    MaskSpec spec;
    spec.ratio = alpha;
    int k = static_cast<int>(std::lround(alpha * t_len));
    k = std::min(k, t_len - 1);
    if (k <= 0) return spec;
    // Partial Fisher-Yates over [0, T).
    std::vector<int> perm(t_len);
    for (int i = 0; i < t_len; ++i) perm[i] = i;
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(t_len - i));
        std::swap(perm[i], perm[j]);
    }
    spec.masked_indices.assign(perm.begin(), perm.begin() + k);
    std::sort(spec.masked_indices.begin(), spec.masked_indices.end());
    return spec;
}

// ---------------------------------------------------------------------------
// Mean parameter template (identity rotations, zero shape, unit camera).
// ---------------------------------------------------------------------------

inline std::vector<double> mean_param_template() {
    std::vector<double> flat(kThetaDims, 0.0);
    for (int j = 0; j < kNumJoints; ++j) {
        flat[j * 6 + 0] = 1.0;
        flat[j * 6 + 4] = 1.0;
    }
    flat[kPoseDims + kShapeDims + 0] = 1.0;  // phi = (1, 0, 0)
    return flat;
}

// Fixed sinusoidal position table (rows are positions).
inline std::vector<double> sinusoidal_table(int n_positions, int dim) {
    std::vector<double> table(static_cast<std::size_t>(n_positions) * dim);
    for (int p = 0; p < n_positions; ++p)
        for (int i = 0; i < dim; ++i) {
            const double rate = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(dim));
            const double angle = p * rate;
            table[static_cast<std::size_t>(p) * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return table;
}

inline Tensor make_pos_table(ParamStore& ps, const std::string& name, int n_positions, int dim,
                             PosEmbedKind kind, Rng& rng) {
    if (kind == PosEmbedKind::kLearnable)
        return ps.add(name, {n_positions, dim}, normal_values(static_cast<std::size_t>(n_positions) * dim, 0.02, rng));
    return Tensor::from_values({n_positions, dim}, sinusoidal_table(n_positions, dim));
}

// ---------------------------------------------------------------------------
// Global branch
// ---------------------------------------------------------------------------

struct GmmOutput {
    Tensor theta;  // T x 144
    Tensor beta;   // T x 10
    Tensor phi;    // T x 3
    Tensor encoder_memory;           // kept x d_enc
    std::vector<int> memory_indices; // original frame index per memory row
    Tensor decoded;                  // T x d_dec
};

class GlobalBranch {
public:
    GlobalBranch() = default;

    GlobalBranch(ParamStore& ps, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
        const int d_enc = cfg.global_encoder.d_model;
        const int d_dec = cfg.global_decoder.d_model;
        input_proj_ = Linear(ps, "gmm/input_proj", cfg.feature_dim, d_enc, rng);
        enc_pos_ = make_pos_table(ps, "gmm/enc_pos", cfg.t_len, d_enc, cfg.global_encoder.pos_embed, rng);
        for (int l = 0; l < cfg.global_encoder.n_layers; ++l)
            enc_blocks_.emplace_back(ps, "gmm/enc_block" + std::to_string(l), d_enc, d_enc,
                                     cfg.global_encoder.n_heads, cfg.global_encoder.ff_dim(), false, rng);
        mem_proj_ = Linear(ps, "gmm/mem_proj", d_enc, d_dec, rng);
        dec_pos_ = make_pos_table(ps, "gmm/dec_pos", cfg.t_len, d_dec, cfg.global_decoder.pos_embed, rng);
        if (cfg.mask_token == MaskTokenKind::kSmpl)
            smpl_embed_ = Linear(ps, "gmm/smpl_embed", kThetaDims, d_dec, rng);
        else
            learnable_token_ = ps.add("gmm/mask_token", {1, d_dec}, normal_values(d_dec, 0.02, rng));
        for (int l = 0; l < cfg.global_decoder.n_layers; ++l)
            dec_blocks_.emplace_back(ps, "gmm/dec_block" + std::to_string(l), d_dec, d_dec,
                                     cfg.global_decoder.n_heads, cfg.global_decoder.ff_dim(), false, rng);
        regressor_ = Mlp(ps, "gmm/regressor",
                         {d_dec + kThetaDims, cfg.regressor_hidden, cfg.regressor_hidden, kThetaDims}, rng,
                         0.01);
        mean_template_ = Tensor::from_values({1, kThetaDims}, mean_param_template());
    }

    // Encoder over a position-tagged subset of tokens: project, add the
    // positional embedding of each token's original frame index, then the
    // self-attention stack. Token order is carried by `indices`.
    Tensor encode(const Tensor& features, const std::vector<int>& indices,
                  AttnCapture* cap = nullptr) const {
        if (indices.empty()) throw EmptyInput("gmm encode: no unmasked tokens");
        Tensor kept = rows(features, indices);
        Tensor x = add(input_proj_.apply(kept), rows(enc_pos_, indices));
        for (std::size_t l = 0; l < enc_blocks_.size(); ++l)
            x = enc_blocks_[l].apply(x, Tensor(), cap, "gmm.encoder." + std::to_string(l));
        return x;
    }

    GmmOutput forward(const Tensor& features, const MaskSpec& mask, AttnCapture* cap = nullptr) const {
        const int t_len = cfg_.t_len;
        if (features.rows() != t_len || features.cols() != cfg_.feature_dim)
            throw ShapeMismatch("gmm forward: features must be T x feature_dim");
        GmmOutput out;
        out.memory_indices = mask.kept_indices(t_len);
        if (static_cast<int>(out.memory_indices.size() + mask.masked_indices.size()) != t_len)
            throw IndexMismatch("gmm forward: kept + masked != [0, T)");
        {
            std::vector<int> check = out.memory_indices;
            check.insert(check.end(), mask.masked_indices.begin(), mask.masked_indices.end());
            std::sort(check.begin(), check.end());
            for (int t = 0; t < t_len; ++t)
                if (check[t] != t) throw IndexMismatch("gmm forward: kept + masked != [0, T)");
        }

        out.encoder_memory = encode(features, out.memory_indices, cap);
        Tensor x = out.encoder_memory;

        // Reassemble to full length: projected memory rows at kept slots, the
        // embedded template token (plus its position) at masked slots.
        Tensor mem_small = mem_proj_.apply(x);
        Tensor token;
        if (cfg_.mask_token == MaskTokenKind::kSmpl)
            token = smpl_embed_.apply(mean_template_);
        else
            token = learnable_token_;
        std::vector<Tensor> slots(t_len);
        for (std::size_t k = 0; k < out.memory_indices.size(); ++k)
            slots[out.memory_indices[k]] = rows(mem_small, {static_cast<int>(k)});
        for (int t : mask.masked_indices) slots[t] = add(token, rows(dec_pos_, {t}));
        Tensor seq = concat_rows(slots);
        for (std::size_t l = 0; l < dec_blocks_.size(); ++l)
            seq = dec_blocks_[l].apply(seq, Tensor(), cap, "gmm.decoder." + std::to_string(l));
        out.decoded = seq;

        // Iterative refinement from the mean template, batched over frames.
        Tensor params = repeat_rows(mean_template_, t_len);
        for (int it = 0; it < cfg_.regressor_iters; ++it)
            params = add(params, regressor_.apply(concat_cols({seq, params})));
        out.theta = slice_cols(params, 0, kPoseDims);
        out.beta = slice_cols(params, kPoseDims, kPoseDims + kShapeDims);
        out.phi = slice_cols(params, kPoseDims + kShapeDims, kThetaDims);
        return out;
    }

    const Tensor& mean_template() const { return mean_template_; }

private:
    ModelConfig cfg_;
    Linear input_proj_;
    Tensor enc_pos_;
    std::vector<TransformerBlock> enc_blocks_;
    Linear mem_proj_;
    Tensor dec_pos_;
    Linear smpl_embed_;
    Tensor learnable_token_;
    std::vector<TransformerBlock> dec_blocks_;
    Mlp regressor_;
    Tensor mean_template_;
};

}  // namespace glot
