#pragma once

// Checkpoint container: model parameters (sections gmm/ and lpc/), the body
// model under body_model/, and the architecture configuration as JSON meta.

#include <cstdint>
#include <filesystem>
#include <string>

#include "glot/container.hpp"
#include "glot/data.hpp"
#include "glot/geometry.hpp"
#include "glot/model.hpp"

#include <json.hpp>

namespace glot {

inline std::string to_string(PosEmbedKind k) {
    return k == PosEmbedKind::kLearnable ? "learnable" : "sinusoidal";
}
inline std::string to_string(MaskTokenKind k) {
    return k == MaskTokenKind::kSmpl ? "smpl" : "learnable";
}
inline std::string to_string(CorrectionKind k) {
    return k == CorrectionKind::kHscr ? "hscr" : "residual";
}

inline PosEmbedKind pos_embed_from_string(const std::string& s) {
    if (s == "learnable") return PosEmbedKind::kLearnable;
    if (s == "sinusoidal") return PosEmbedKind::kSinusoidal;
    throw ConfigMismatch("unknown positional embedding kind: " + s);
}
inline MaskTokenKind mask_token_from_string(const std::string& s) {
    if (s == "smpl") return MaskTokenKind::kSmpl;
    if (s == "learnable") return MaskTokenKind::kLearnable;
    throw ConfigMismatch("unknown mask token kind: " + s);
}
inline CorrectionKind correction_from_string(const std::string& s) {
    if (s == "hscr") return CorrectionKind::kHscr;
    if (s == "residual") return CorrectionKind::kResidual;
    throw ConfigMismatch("unknown correction kind: " + s);
}

inline nlohmann::json transformer_config_to_json(const TransformerConfig& c) {
    return {{"n_layers", c.n_layers}, {"d_model", c.d_model},   {"n_heads", c.n_heads},
            {"d_ff", c.d_ff},         {"dropout", c.dropout},   {"pos_embed", to_string(c.pos_embed)}};
}

inline TransformerConfig transformer_config_from_json(const nlohmann::json& j) {
    TransformerConfig c;
    c.n_layers = j.value("n_layers", c.n_layers);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.dropout = j.value("dropout", c.dropout);
    c.pos_embed = pos_embed_from_string(j.value("pos_embed", "learnable"));
    return c;
}

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    return {{"t_len", c.t_len},
            {"feature_dim", c.feature_dim},
            {"nearby_radius", c.nearby_radius},
            {"global_encoder", transformer_config_to_json(c.global_encoder)},
            {"global_decoder", transformer_config_to_json(c.global_decoder)},
            {"local_encoder", transformer_config_to_json(c.local_encoder)},
            {"cross_decoder", transformer_config_to_json(c.cross_decoder)},
            {"regressor_hidden", c.regressor_hidden},
            {"regressor_iters", c.regressor_iters},
            {"hscr_hidden", c.hscr_hidden},
            {"mask_token", to_string(c.mask_token)},
            {"correction", to_string(c.correction)},
            {"detach_global", c.detach_global}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.t_len = j.value("t_len", c.t_len);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.nearby_radius = j.value("nearby_radius", c.nearby_radius);
    if (j.contains("global_encoder")) c.global_encoder = transformer_config_from_json(j["global_encoder"]);
    if (j.contains("global_decoder")) c.global_decoder = transformer_config_from_json(j["global_decoder"]);
    if (j.contains("local_encoder")) c.local_encoder = transformer_config_from_json(j["local_encoder"]);
    if (j.contains("cross_decoder")) c.cross_decoder = transformer_config_from_json(j["cross_decoder"]);
    c.regressor_hidden = j.value("regressor_hidden", c.regressor_hidden);
    c.regressor_iters = j.value("regressor_iters", c.regressor_iters);
    c.hscr_hidden = j.value("hscr_hidden", c.hscr_hidden);
    c.mask_token = mask_token_from_string(j.value("mask_token", "smpl"));
    c.correction = correction_from_string(j.value("correction", "hscr"));
    c.detach_global = j.value("detach_global", c.detach_global);
    return c;
}

// ---------------------------------------------------------------------------
// Body model channels
// ---------------------------------------------------------------------------

inline void body_to_container(const BodyModel& body, Container& c) {
    std::vector<std::int32_t> parent(body.tree.parent.begin(), body.tree.parent.end());
    c.add(make_i32_channel("body_model/parent", {kNumJoints}, std::move(parent)));

    std::vector<double> tj(kNumJoints * 3);
    for (int j = 0; j < kNumJoints; ++j)
        for (int k = 0; k < 3; ++k) tj[j * 3 + k] = body.template_joints[j][k];
    c.add(make_f64_channel("body_model/template_joints", {kNumJoints, 3}, std::move(tj)));

    std::vector<double> sbj(static_cast<std::size_t>(kShapeDims) * kNumJoints * 3);
    for (int s = 0; s < kShapeDims; ++s)
        for (int j = 0; j < kNumJoints; ++j)
            for (int k = 0; k < 3; ++k)
                sbj[(static_cast<std::size_t>(s) * kNumJoints + j) * 3 + k] = body.shape_basis_joints[s][j][k];
    c.add(make_f64_channel("body_model/shape_basis_joints", {kShapeDims, kNumJoints, 3}, std::move(sbj)));

    const int v_count = body.n_vertices;
    std::vector<double> tv(static_cast<std::size_t>(v_count) * 3);
    for (int v = 0; v < v_count; ++v)
        for (int k = 0; k < 3; ++k) tv[static_cast<std::size_t>(v) * 3 + k] = body.template_vertices[v][k];
    c.add(make_f64_channel("body_model/template_vertices", {v_count, 3}, std::move(tv)));

    std::vector<double> sbv(static_cast<std::size_t>(kShapeDims) * v_count * 3);
    for (int s = 0; s < kShapeDims; ++s)
        for (int v = 0; v < v_count; ++v)
            for (int k = 0; k < 3; ++k)
                sbv[(static_cast<std::size_t>(s) * v_count + v) * 3 + k] = body.shape_basis_vertices[s][v][k];
    c.add(make_f64_channel("body_model/shape_basis_vertices", {kShapeDims, v_count, 3}, std::move(sbv)));

    c.add(make_f64_channel("body_model/skin_weights", {v_count, kNumJoints}, body.skin_weights));
}

inline BodyModel body_from_container(const Container& c) {
    BodyModel body;
    const Channel& parent = c.get("body_model/parent");
    if (parent.count() != kNumJoints) throw CorruptFile("body parent table size");
    for (int j = 0; j < kNumJoints; ++j) body.tree.parent[j] = parent.i32[j];
    body.tree.validate();

    const Channel& tj = c.get("body_model/template_joints");
    body.template_joints.resize(kNumJoints);
    for (int j = 0; j < kNumJoints; ++j)
        body.template_joints[j] = Vec3(tj.f64[j * 3], tj.f64[j * 3 + 1], tj.f64[j * 3 + 2]);

    const Channel& sbj = c.get("body_model/shape_basis_joints");
    body.shape_basis_joints.resize(kShapeDims);
    for (int s = 0; s < kShapeDims; ++s)
        for (int j = 0; j < kNumJoints; ++j) {
            const std::size_t off = (static_cast<std::size_t>(s) * kNumJoints + j) * 3;
            body.shape_basis_joints[s][j] = Vec3(sbj.f64[off], sbj.f64[off + 1], sbj.f64[off + 2]);
        }

    const Channel& tv = c.get("body_model/template_vertices");
    if (tv.shape.size() != 2 || tv.shape[1] != 3) throw CorruptFile("body template vertices shape");
    body.n_vertices = static_cast<int>(tv.shape[0]);
    body.template_vertices.resize(body.n_vertices);
    for (int v = 0; v < body.n_vertices; ++v)
        body.template_vertices[v] =
            Vec3(tv.f64[static_cast<std::size_t>(v) * 3], tv.f64[static_cast<std::size_t>(v) * 3 + 1],
                 tv.f64[static_cast<std::size_t>(v) * 3 + 2]);

    const Channel& sbv = c.get("body_model/shape_basis_vertices");
    body.shape_basis_vertices.assign(kShapeDims, std::vector<Vec3>(body.n_vertices));
    for (int s = 0; s < kShapeDims; ++s)
        for (int v = 0; v < body.n_vertices; ++v) {
            const std::size_t off = (static_cast<std::size_t>(s) * body.n_vertices + v) * 3;
            body.shape_basis_vertices[s][v] = Vec3(sbv.f64[off], sbv.f64[off + 1], sbv.f64[off + 2]);
        }

    body.skin_weights = c.get("body_model/skin_weights").f64;
    if (body.skin_weights.size() != static_cast<std::size_t>(body.n_vertices) * kNumJoints)
        throw CorruptFile("body skin weight size");
    return body;
}

// ---------------------------------------------------------------------------
// Checkpoint save / load
// ---------------------------------------------------------------------------

// dtype "f64" round-trips training state bit-exactly; "f32" halves the file
// for inference use at reduced precision.
inline void save_checkpoint(const std::filesystem::path& path, const GlotModel& model,
                            const BodyModel& body, nlohmann::json extra_meta = {},
                            const std::string& dtype = "f64") {
    if (dtype != "f64" && dtype != "f32") throw ConfigMismatch("checkpoint dtype must be f64 or f32");
    Container c;
    c.meta = nlohmann::json{{"kind", "glot_checkpoint"},
                            {"model_config", model_config_to_json(model.config())},
                            {"with_lpc", model.has_lpc()}};
    if (!extra_meta.is_null())
        for (auto& [k, v] : extra_meta.items()) c.meta[k] = v;
    body_to_container(body, c);
    for (const auto& [name, t] : model.params().items()) {
        std::vector<std::int64_t> shape(t.shape().begin(), t.shape().end());
        if (dtype == "f64") {
            c.add(make_f64_channel(name, std::move(shape), t.values()));
        } else {
            std::vector<float> narrow(t.values().begin(), t.values().end());
            c.add(make_f32_channel(name, std::move(shape), std::move(narrow)));
        }
    }
    c.write(path);
}

struct LoadedCheckpoint {
    GlotModel model;
    BodyModel body;
    nlohmann::json meta;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    Container c = Container::read(path);
    if (!c.meta.is_object() || c.meta.value("kind", "") != "glot_checkpoint")
        throw CorruptFile(path.string() + ": not a checkpoint");
    const ModelConfig cfg = model_config_from_json(c.meta.at("model_config"));
    const bool with_lpc = c.meta.value("with_lpc", true);
    LoadedCheckpoint out{GlotModel(cfg, 0, with_lpc), body_from_container(c), c.meta};
    for (auto& [name, t] : out.model.params().items()) {
        if (!c.has(name)) throw ConfigMismatch("checkpoint missing parameter " + name);
        const Channel& ch = c.get(name);
        if (ch.count() != t.size()) throw ConfigMismatch("checkpoint shape mismatch for " + name);
        if (ch.dtype == "f64")
            t.raw()->val = ch.f64;
        else if (ch.dtype == "f32")
            t.raw()->val.assign(ch.f32.begin(), ch.f32.end());
        else
            throw CorruptFile("parameter channel " + name + " has non-float dtype");
    }
    return out;
}

}  // namespace glot
