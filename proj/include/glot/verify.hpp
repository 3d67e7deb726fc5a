#pragma once

// End-to-end gradient verification of the full two-branch pipeline at a
// minimal configuration, including the masked-loss gating, the velocity
// terms, the kinematic correction chain, and the gradient-detachment
// contract.

#include <string>
#include <vector>

#include "glot/config.hpp"
#include "glot/train.hpp"

namespace glot {

struct PipelineGradCheck {
    GradCheckReport report;           // finite differences vs analytic, detach off
    bool detach_blocks_correction = false;  // correction-path grads into the
                                            // global-estimate parameters vanish
    bool detach_keeps_gmm_path = false;     // total-loss grads on those
                                            // parameters equal the GMM-only grads
    std::size_t n_params = 0;

    bool pass() const { return report.pass && detach_blocks_correction && detach_keeps_gmm_path; }
};

namespace detail {

// Parameters whose only influence on the correction branch passes through the
// global estimate.
inline bool produces_global_estimate(const std::string& name) {
    return name.rfind("gmm/regressor", 0) == 0 || name.rfind("gmm/dec_block", 0) == 0 ||
           name.rfind("gmm/mem_proj", 0) == 0 || name.rfind("gmm/smpl_embed", 0) == 0 ||
           name.rfind("gmm/mask_token", 0) == 0 || name.rfind("gmm/dec_pos", 0) == 0;
}

}  // namespace detail

inline PipelineGradCheck pipeline_grad_check(std::uint64_t seed = 5, double fd_eps = 1e-5,
                                             double rtol = 1e-3) {
    ModelConfig mc = ModelConfig::tiny();
    mc.global_encoder.d_ff = 64;
    mc.global_decoder.d_ff = 64;
    mc.local_encoder.d_ff = 64;
    mc.cross_decoder.d_ff = 64;

    DatasetMeta meta;
    meta.seed = seed;
    meta.count = 1;
    meta.length = mc.t_len * 2;
    meta.t_len = mc.t_len;
    meta.n_vertices = 12;
    meta.feature_dim = mc.feature_dim;
    meta.noise_level = 0.1;
    meta.body_seed = seed;
    const Dataset ds = generate_dataset(meta);
    const BodyModel body = build_body_model(meta.body_seed, meta.n_vertices);
    const BodyConstants bc = BodyConstants::build(body);
    const WindowSample win = window(ds.sequences[0], meta.length / 2, mc.t_len);
    Rng mask_rng(seed + 1);
    const MaskSpec mask = sample_mask(mc.t_len, 0.5, mask_rng);
    const LossWeights weights;

    PipelineGradCheck out;

    {
        // True derivatives flow everywhere only with detachment off.
        ModelConfig fd_cfg = mc;
        fd_cfg.detach_global = false;
        GlotModel model(fd_cfg, seed);
        out.n_params = model.params().total_count();
        Tensor features = features_tensor(win);
        // Normalize by the initial loss magnitude: central differences at
        // 64-bit resolve about one ulp of the function value, so the absolute
        // error floor is only meaningful for a loss of order one.
        double norm = 1.0;
        {
            NoGradGuard ng;
            const WindowForward fwd = model.forward(features, mask);
            norm = window_loss(bc, fd_cfg, fwd, win, mask, weights).total.item();
            if (!(norm > 0.0)) norm = 1.0;
        }
        auto loss_fn = [&, norm]() {
            const WindowForward fwd = model.forward(features, mask);
            return scale(window_loss(bc, fd_cfg, fwd, win, mask, weights).total, 1.0 / norm);
        };
        out.report = grad_check(loss_fn, model.params(), fd_eps, rtol);
    }

    {
        ModelConfig det_cfg = mc;
        det_cfg.detach_global = true;
        GlotModel model(det_cfg, seed);
        Tensor features = features_tensor(win);

        const auto correction_only_loss = [&]() {
            const WindowForward fwd = model.forward(features, mask);
            const int mid = det_cfg.mid_index();
            Tensor gt_theta_mid =
                Tensor::from_values({1, kPoseDims},
                                    std::vector<double>(win.gt_theta.begin() + mid * kPoseDims,
                                                        win.gt_theta.begin() + (mid + 1) * kPoseDims));
            Tensor d = sub(fwd.lpc.theta_r, gt_theta_mid);
            return mean_all(mul(d, d));
        };

        model.params().zero_grad();
        backward(correction_only_loss());
        out.detach_blocks_correction = true;
        for (const auto& [name, t] : model.params().items()) {
            if (!detail::produces_global_estimate(name)) continue;
            for (double g : t.raw()->grad)
                if (g != 0.0) out.detach_blocks_correction = false;
        }

        // The direct global-loss path is unaffected by the detachment: on the
        // global-estimate parameters, the total-loss gradient equals the
        // gradient of the global terms alone.
        std::vector<std::vector<double>> total_grads;
        model.params().zero_grad();
        {
            const WindowForward fwd = model.forward(features, mask);
            backward(window_loss(bc, det_cfg, fwd, win, mask, weights).total);
        }
        for (const auto& [name, t] : model.params().items()) total_grads.push_back(t.raw()->grad);

        GlotModel gmm_model(det_cfg, seed, false);  // same seed: identical gmm weights
        gmm_model.params().zero_grad();
        {
            const WindowForward fwd = gmm_model.forward(features, mask);
            backward(window_loss(bc, det_cfg, fwd, win, mask, weights).total);
        }
        out.detach_keeps_gmm_path = true;
        std::size_t idx = 0;
        for (const auto& [name, t] : model.params().items()) {
            if (detail::produces_global_estimate(name)) {
                const auto& gmm_grad = gmm_model.params().get(name).raw()->grad;
                if (total_grads[idx] != gmm_grad) out.detach_keeps_gmm_path = false;
            }
            ++idx;
        }
    }

    return out;
}

}  // namespace glot
