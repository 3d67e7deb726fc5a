#pragma once

// Architecture configuration shared by both branches.

#include <string>

#include "glot/core.hpp"
#include "glot/geometry.hpp"

namespace glot {

enum class PosEmbedKind { kLearnable, kSinusoidal };
enum class MaskTokenKind { kSmpl, kLearnable };
enum class CorrectionKind { kHscr, kResidual };

struct TransformerConfig {
    int n_layers = 2;
    int d_model = 512;
    int n_heads = 8;
    int d_ff = 0;  // 0 -> 4 * d_model
    double dropout = 0.0;
    PosEmbedKind pos_embed = PosEmbedKind::kLearnable;

    int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }

    void validate(const std::string& who) const {
        if (n_layers < 1) throw ConfigMismatch(who + ": n_layers must be >= 1");
        if (d_model < 1) throw ConfigMismatch(who + ": d_model must be >= 1");
        if (n_heads < 1 || d_model % n_heads != 0)
            throw ConfigMismatch(who + ": d_model must be divisible by n_heads");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigMismatch(who + ": dropout out of range");
    }
};

struct ModelConfig {
    int t_len = 16;
    int feature_dim = 2048;
    int nearby_radius = 4;  // w: local window spans 2w+1 frames
    TransformerConfig global_encoder{2, 512, 8};
    TransformerConfig global_decoder{1, 256, 8};
    TransformerConfig local_encoder{3, 256, 8};
    TransformerConfig cross_decoder{1, 256, 8};
    int regressor_hidden = 1024;
    int regressor_iters = 3;
    int hscr_hidden = 64;
    MaskTokenKind mask_token = MaskTokenKind::kSmpl;
    CorrectionKind correction = CorrectionKind::kHscr;
    bool detach_global = true;

    int mid_index() const { return t_len / 2 - 1; }

    void validate() const {
        if (t_len < 2 || t_len % 2 != 0) throw ConfigMismatch("t_len must be even and >= 2");
        if (feature_dim < 1) throw ConfigMismatch("feature_dim must be >= 1");
        if (nearby_radius < 0) throw ConfigMismatch("nearby_radius must be >= 0");
        if (regressor_iters < 1) throw ConfigMismatch("regressor_iters must be >= 1");
        global_encoder.validate("global_encoder");
        global_decoder.validate("global_decoder");
        local_encoder.validate("local_encoder");
        cross_decoder.validate("cross_decoder");
        if (cross_decoder.d_model != local_encoder.d_model)
            throw ConfigMismatch("cross_decoder.d_model must match local_encoder.d_model");
    }

    // Compact preset for CI-speed runs.
    static ModelConfig desk() {
        ModelConfig cfg;
        cfg.feature_dim = 128;
        cfg.global_encoder = {2, 64, 4};
        cfg.global_decoder = {1, 48, 4};
        cfg.local_encoder = {3, 48, 4};
        cfg.cross_decoder = {1, 48, 4};
        cfg.regressor_hidden = 128;
        return cfg;
    }

    // Dimensions matching the full-size reference configuration.
    static ModelConfig paper() { return ModelConfig{}; }

    // Minimal configuration for finite-difference gradient checks.
    static ModelConfig tiny() {
        ModelConfig cfg;
        cfg.t_len = 8;
        cfg.feature_dim = 32;
        cfg.nearby_radius = 2;
        cfg.global_encoder = {1, 32, 1};
        cfg.global_decoder = {1, 32, 1};
        cfg.local_encoder = {1, 32, 1};
        cfg.cross_decoder = {1, 32, 1};
        cfg.regressor_hidden = 32;
        cfg.hscr_hidden = 16;
        cfg.regressor_iters = 2;
        return cfg;
    }
};

}  // namespace glot
