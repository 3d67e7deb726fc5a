#pragma once

// Local parameter correction: nearby-frame selection, a local encoder, a
// cross-attention decoder producing the fused mid-frame feature, and the
// hierarchical per-joint correction regressor.

#include <algorithm>
#include <string>
#include <vector>

#include "glot/core.hpp"
#include "glot/geometry.hpp"
#include "glot/model_config.hpp"
#include "glot/nn.hpp"
#include "glot/tensor.hpp"

namespace glot {

// Indices of the nearby window around mid index m with half-width w;
// out-of-range positions duplicate the nearest boundary frame.
inline std::vector<int> nearby_indices(int t_len, int mid, int w) {
    if (mid < 0 || mid >= t_len) throw IndexOutOfRange("nearby_indices: mid " + std::to_string(mid));
    std::vector<int> idx;
    idx.reserve(2 * w + 1);
    for (int k = -w; k <= w; ++k) idx.push_back(std::clamp(mid + k, 0, t_len - 1));
    return idx;
}

struct LpcOutput {
    Tensor theta_r;  // 1 x 144
    Tensor beta_r;   // 1 x 10
    Tensor phi_r;    // 1 x 3
    Tensor theta_s;  // 1 x 144 per-joint corrections
    Tensor f_gl;     // 1 x d
};

class LpcBranch {
public:
    LpcBranch() = default;

    LpcBranch(ParamStore& ps, const ModelConfig& cfg, Rng& rng)
        : cfg_(cfg), tree_(standard_kinematic_tree()) {
        tree_.validate();
        const int d_loc = cfg.local_encoder.d_model;
        const int window = 2 * cfg.nearby_radius + 1;
        input_proj_ = Linear(ps, "lpc/input_proj", cfg.feature_dim, d_loc, rng);
        pos_ = make_pos_table(ps, "lpc/pos", window, d_loc, cfg.local_encoder.pos_embed, rng);
        for (int l = 0; l < cfg.local_encoder.n_layers; ++l)
            enc_blocks_.emplace_back(ps, "lpc/enc_block" + std::to_string(l), d_loc, d_loc,
                                     cfg.local_encoder.n_heads, cfg.local_encoder.ff_dim(), false, rng);
        for (int l = 0; l < cfg.cross_decoder.n_layers; ++l)
            cross_blocks_.emplace_back(ps, "lpc/cross_block" + std::to_string(l), cfg.cross_decoder.d_model,
                                       cfg.global_encoder.d_model, cfg.cross_decoder.n_heads,
                                       cfg.cross_decoder.ff_dim(), true, rng);
        const int d_fgl = cfg.cross_decoder.d_model;
        for (int j = 0; j < kNumJoints; ++j) {
            ancestors_.push_back(ancestors(tree_, j));
            const int in_dim = d_fgl + 6 * static_cast<int>(ancestors_.back().size()) + 6;
            joint_input_widths_.push_back(in_dim);
        }
        if (cfg.correction == CorrectionKind::kHscr) {
            for (int j = 0; j < kNumJoints; ++j)
                joint_mlps_.emplace_back(ps, "lpc/hscr_joint" + std::to_string(j),
                                         std::vector<int>{joint_input_widths_[j], cfg.hscr_hidden, 6}, rng,
                                         0.01);
        } else {
            theta_mlp_ = Mlp(ps, "lpc/residual_theta",
                             {d_fgl + kPoseDims, cfg.hscr_hidden, kPoseDims}, rng, 0.01);
        }
        beta_mlp_ = Mlp(ps, "lpc/beta_mlp", {d_fgl + kShapeDims, cfg.hscr_hidden, kShapeDims}, rng, 0.01);
        phi_mlp_ = Mlp(ps, "lpc/phi_mlp", {d_fgl + 3, cfg.hscr_hidden, 3}, rng, 0.01);
    }

    // Expected input width of each per-joint correction MLP.
    const std::vector<int>& joint_input_widths() const { return joint_input_widths_; }
    const KinematicTree& tree() const { return tree_; }

    // Projection, positional embedding and self-attention over the nearby
    // window tokens.
    Tensor encode_window(const Tensor& window_features, AttnCapture* cap = nullptr) const {
        const int window = 2 * cfg_.nearby_radius + 1;
        if (window_features.rows() != window || window_features.cols() != cfg_.feature_dim)
            throw ShapeMismatch("lpc encode: window features must be (2w+1) x feature_dim");
        Tensor x = add(input_proj_.apply(window_features), pos_);
        for (std::size_t l = 0; l < enc_blocks_.size(); ++l)
            x = enc_blocks_[l].apply(x, Tensor(), cap, "lpc.encoder." + std::to_string(l));
        return x;
    }

    // Local encoding of the nearby window and cross-attention of the
    // mid token against the global encoder memory.
    Tensor fuse(const Tensor& window_features, const Tensor& global_memory,
                AttnCapture* cap = nullptr) const {
        if (!global_memory.defined() || global_memory.rows() == 0)
            throw EmptyMemory("lpc fuse: global memory is empty");
        Tensor x = encode_window(window_features, cap);
        Tensor q_mid = rows(x, {cfg_.nearby_radius});
        for (std::size_t l = 0; l < cross_blocks_.size(); ++l)
            q_mid = cross_blocks_[l].apply(q_mid, global_memory, cap, "lpc.cross." + std::to_string(l));
        return q_mid;  // 1 x d, the fused global-local feature
    }

    // Correction of the mid-frame estimate. theta_l is 1 x 144, beta_l 1 x 10,
    // phi_l 1 x 3. When detach is set, no gradient flows from the correction
    // branch back into the global estimate. An explicit processing order may
    // be supplied; any topological order gives bit-identical output because a
    // joint's correction depends only on its ancestors.
    LpcOutput correct(const Tensor& f_gl, const Tensor& theta_l_in, const Tensor& beta_l_in,
                      const Tensor& phi_l_in, bool detach_global,
                      const std::vector<int>* order = nullptr) const {
        Tensor theta_l = detach_global ? detach(theta_l_in) : theta_l_in;
        Tensor beta_l = detach_global ? detach(beta_l_in) : beta_l_in;
        Tensor phi_l = detach_global ? detach(phi_l_in) : phi_l_in;

        LpcOutput out;
        out.f_gl = f_gl;
        if (cfg_.correction == CorrectionKind::kHscr) {
            std::vector<int> default_order;
            if (!order) {
                default_order.resize(kNumJoints);
                for (int j = 0; j < kNumJoints; ++j) default_order[j] = j;
                order = &default_order;
            }
            std::vector<Tensor> corrections(kNumJoints);
            for (int j : *order) {
                if (j < 0 || j >= kNumJoints) throw IndexOutOfRange("hscr order");
                std::vector<Tensor> inputs;
                inputs.reserve(2 + ancestors_[j].size());
                inputs.push_back(f_gl);
                for (int a : ancestors_[j]) {
                    if (!corrections[a].defined())
                        throw TopologyError("hscr order visits joint " + std::to_string(j) +
                                            " before its ancestor " + std::to_string(a));
                    inputs.push_back(corrections[a]);
                }
                inputs.push_back(slice_cols(theta_l, j * 6, j * 6 + 6));
                corrections[j] = joint_mlps_[j].apply(concat_cols(inputs));
            }
            for (int j = 0; j < kNumJoints; ++j)
                if (!corrections[j].defined()) throw TopologyError("hscr order misses a joint");
            out.theta_s = concat_cols(corrections);
        } else {
            out.theta_s = theta_mlp_.apply(concat_cols({f_gl, theta_l}));
        }
        out.theta_r = add(theta_l, out.theta_s);
        out.beta_r = add(beta_l, beta_mlp_.apply(concat_cols({f_gl, beta_l})));
        out.phi_r = add(phi_l, phi_mlp_.apply(concat_cols({f_gl, phi_l})));
        return out;
    }

private:
    ModelConfig cfg_;
    KinematicTree tree_;
    Linear input_proj_;
    Tensor pos_;
    std::vector<TransformerBlock> enc_blocks_;
    std::vector<TransformerBlock> cross_blocks_;
    std::vector<std::vector<int>> ancestors_;
    std::vector<int> joint_input_widths_;
    std::vector<Mlp> joint_mlps_;
    Mlp theta_mlp_;
    Mlp beta_mlp_;
    Mlp phi_mlp_;
};

}  // namespace glot
