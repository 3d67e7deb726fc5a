#pragma once

// The full two-branch model: global motion modeling plus local parameter
// correction of the mid-frame, with a closed-form parameter count that
// cross-checks the registry.

#include <cstdint>
#include <vector>

#include "glot/gmm.hpp"
#include "glot/lpc.hpp"
#include "glot/model_config.hpp"

namespace glot {

struct WindowForward {
    GmmOutput gmm;
    LpcOutput lpc;
    bool has_lpc = false;

    // Mid-frame prediction: corrected parameters when the local branch ran,
    // otherwise the global estimate.
    Tensor mid_theta(int mid) const { return has_lpc ? lpc.theta_r : rows(gmm.theta, {mid}); }
    Tensor mid_beta(int mid) const { return has_lpc ? lpc.beta_r : rows(gmm.beta, {mid}); }
    Tensor mid_phi(int mid) const { return has_lpc ? lpc.phi_r : rows(gmm.phi, {mid}); }
};

class GlotModel {
public:
    GlotModel(const ModelConfig& cfg, std::uint64_t seed, bool with_lpc = true)
        : cfg_(cfg), with_lpc_(with_lpc) {
        cfg_.validate();
        Rng rng(seed ^ 0x5b7f3a1dc2e94u);
        gmm_ = GlobalBranch(params_, cfg_, rng);
        if (with_lpc_) lpc_ = LpcBranch(params_, cfg_, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    bool has_lpc() const { return with_lpc_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const GlobalBranch& global_branch() const { return gmm_; }
    const LpcBranch& local_branch() const { return lpc_; }

    // Forward over one T-frame window. `features` is T x feature_dim.
    WindowForward forward(const Tensor& features, const MaskSpec& mask,
                          AttnCapture* cap = nullptr) const {
        WindowForward out;
        out.gmm = gmm_.forward(features, mask, cap);
        if (with_lpc_) {
            const int mid = cfg_.mid_index();
            Tensor win = rows(features, nearby_indices(cfg_.t_len, mid, cfg_.nearby_radius));
            Tensor f_gl = lpc_.fuse(win, out.gmm.encoder_memory, cap);
            out.lpc = lpc_.correct(f_gl, rows(out.gmm.theta, {mid}), rows(out.gmm.beta, {mid}),
                                   rows(out.gmm.phi, {mid}), cfg_.detach_global);
            out.has_lpc = true;
        }
        return out;
    }

private:
    ModelConfig cfg_;
    bool with_lpc_ = true;
    ParamStore params_;
    GlobalBranch gmm_;
    LpcBranch lpc_;
};

// ---------------------------------------------------------------------------
// Closed-form parameter count, kept independent of the registry so the two
// can cross-check each other.
// ---------------------------------------------------------------------------

namespace detail {
inline std::size_t linear_count(int in, int out) {
    return static_cast<std::size_t>(in) * out + out;
}
inline std::size_t block_count(int d, int kv, int ff) {
    const std::size_t ln = 2ull * d;
    const std::size_t attn =
        linear_count(d, d) + linear_count(kv, d) + linear_count(kv, d) + linear_count(d, d);
    return 2 * ln + attn + linear_count(d, ff) + linear_count(ff, d);
}
inline std::size_t mlp_count(const std::vector<int>& dims) {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) n += linear_count(dims[i], dims[i + 1]);
    return n;
}
}  // namespace detail

inline std::size_t gmm_param_count(const ModelConfig& cfg) {
    const int de = cfg.global_encoder.d_model;
    const int dd = cfg.global_decoder.d_model;
    std::size_t n = detail::linear_count(cfg.feature_dim, de);
    if (cfg.global_encoder.pos_embed == PosEmbedKind::kLearnable)
        n += static_cast<std::size_t>(cfg.t_len) * de;
    n += static_cast<std::size_t>(cfg.global_encoder.n_layers) *
         detail::block_count(de, de, cfg.global_encoder.ff_dim());
    n += detail::linear_count(de, dd);
    if (cfg.global_decoder.pos_embed == PosEmbedKind::kLearnable)
        n += static_cast<std::size_t>(cfg.t_len) * dd;
    n += cfg.mask_token == MaskTokenKind::kSmpl ? detail::linear_count(kThetaDims, dd)
                                                : static_cast<std::size_t>(dd);
    n += static_cast<std::size_t>(cfg.global_decoder.n_layers) *
         detail::block_count(dd, dd, cfg.global_decoder.ff_dim());
    n += detail::mlp_count({dd + kThetaDims, cfg.regressor_hidden, cfg.regressor_hidden, kThetaDims});
    return n;
}

inline std::size_t lpc_param_count(const ModelConfig& cfg) {
    const int dl = cfg.local_encoder.d_model;
    const int dc = cfg.cross_decoder.d_model;
    const int window = 2 * cfg.nearby_radius + 1;
    std::size_t n = detail::linear_count(cfg.feature_dim, dl);
    if (cfg.local_encoder.pos_embed == PosEmbedKind::kLearnable)
        n += static_cast<std::size_t>(window) * dl;
    n += static_cast<std::size_t>(cfg.local_encoder.n_layers) *
         detail::block_count(dl, dl, cfg.local_encoder.ff_dim());
    n += static_cast<std::size_t>(cfg.cross_decoder.n_layers) *
         detail::block_count(dc, cfg.global_encoder.d_model, cfg.cross_decoder.ff_dim());
    if (cfg.correction == CorrectionKind::kHscr) {
        const KinematicTree tree = standard_kinematic_tree();
        for (int j = 0; j < kNumJoints; ++j) {
            const int len = static_cast<int>(ancestors(tree, j).size());
            n += detail::mlp_count({dc + 6 * len + 6, cfg.hscr_hidden, 6});
        }
    } else {
        n += detail::mlp_count({dc + kPoseDims, cfg.hscr_hidden, kPoseDims});
    }
    n += detail::mlp_count({dc + kShapeDims, cfg.hscr_hidden, kShapeDims});
    n += detail::mlp_count({dc + 3, cfg.hscr_hidden, 3});
    return n;
}

inline std::size_t model_param_count(const ModelConfig& cfg, bool with_lpc = true) {
    return gmm_param_count(cfg) + (with_lpc ? lpc_param_count(cfg) : 0);
}

}  // namespace glot
