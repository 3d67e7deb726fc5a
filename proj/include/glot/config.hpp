#pragma once

// Flat key=value configuration with dotted sections, JSON input support,
// preset expansion and an echo writer whose output is itself a valid config.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "glot/checkpoint.hpp"
#include "glot/train.hpp"

#include <json.hpp>

namespace glot {

class ConfigMap {
public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    int get_int(const std::string& key, int fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const int v = std::stoi(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw UsageError("config key " + key + " expects an integer, got '" + it->second + "'");
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const std::uint64_t v = std::stoull(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw UsageError("config key " + key + " expects an unsigned integer, got '" + it->second + "'");
        }
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw UsageError("config key " + key + " expects a number, got '" + it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw UsageError("config key " + key + " expects true/false, got '" + it->second + "'");
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    // Every key must be consumed by a known-key check before use.
    void ensure_known(const std::set<std::string>& known) const {
        for (const auto& [k, v] : values_)
            if (!known.count(k)) throw UsageError("unknown config key: " + k);
    }

    std::string to_text() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
        return out.str();
    }

    static ConfigMap parse_text(const std::string& text) {
        ConfigMap cfg;
        std::istringstream in(text);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw UsageError("config line " + std::to_string(line_no) + " is not key=value: " + line);
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return cfg;
    }

    static void flatten_json(const nlohmann::json& j, const std::string& prefix, ConfigMap& out) {
        for (const auto& [k, v] : j.items()) {
            const std::string key = prefix.empty() ? k : prefix + "." + k;
            if (v.is_object()) {
                flatten_json(v, key, out);
            } else if (v.is_string()) {
                out.set(key, v.get<std::string>());
            } else {
                out.set(key, v.dump());
            }
        }
    }

    static ConfigMap parse_file(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot read config file: " + path.string());
        std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        const auto first = text.find_first_not_of(" \t\r\n");
        if (first != std::string::npos && text[first] == '{') {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(text);
            } catch (const nlohmann::json::exception& e) {
                throw UsageError("config file " + path.string() + ": " + e.what());
            }
            ConfigMap cfg;
            flatten_json(j, "", cfg);
            return cfg;
        }
        return parse_text(text);
    }

    // Later maps win.
    void overlay(const ConfigMap& other) {
        for (const auto& [k, v] : other.values()) values_[k] = v;
    }

private:
    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed extraction
// ---------------------------------------------------------------------------

struct DataGenConfig {
    std::uint64_t seed = 0;
    int count = 8;
    int length = 120;
    int t_len = 16;
    int n_vertices = 108;
    int feature_dim = 128;
    double noise_level = 0.1;
};

inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "seed",
        "preset",
        "data.count",
        "data.length",
        "data.t_len",
        "data.vertices",
        "data.feature_dim",
        "data.noise_level",
        "model.t_len",
        "model.feature_dim",
        "model.nearby_w",
        "model.genc.layers",
        "model.genc.d_model",
        "model.genc.heads",
        "model.genc.d_ff",
        "model.genc.pos",
        "model.gdec.layers",
        "model.gdec.d_model",
        "model.gdec.heads",
        "model.gdec.d_ff",
        "model.gdec.pos",
        "model.lenc.layers",
        "model.lenc.d_model",
        "model.lenc.heads",
        "model.lenc.d_ff",
        "model.lenc.pos",
        "model.cross.layers",
        "model.cross.d_model",
        "model.cross.heads",
        "model.cross.d_ff",
        "model.cross.pos",
        "model.regressor_hidden",
        "model.regressor_iters",
        "model.hscr_hidden",
        "model.mask_token",
        "model.correction",
        "model.detach",
        "train.mask_ratio",
        "train.batch",
        "train.steps",
        "train.lr",
        "train.warmup",
        "train.horizon",
        "train.gmm_only",
        "train.checkpoint_every",
        "loss.j3d",
        "loss.j2d",
        "loss.pose",
        "loss.shape",
        "loss.vel",
        "eval.fps",
    };
    return keys;
}

inline void apply_transformer_overrides(const ConfigMap& cfg, const std::string& prefix,
                                        TransformerConfig& tc) {
    tc.n_layers = cfg.get_int(prefix + ".layers", tc.n_layers);
    tc.d_model = cfg.get_int(prefix + ".d_model", tc.d_model);
    tc.n_heads = cfg.get_int(prefix + ".heads", tc.n_heads);
    tc.d_ff = cfg.get_int(prefix + ".d_ff", tc.d_ff);
    if (cfg.has(prefix + ".pos")) tc.pos_embed = pos_embed_from_string(cfg.get_string(prefix + ".pos", ""));
}

// Preset defaults, then config-file/override values on top.
inline TrainConfig train_config_from_map(const ConfigMap& cfg) {
    cfg.ensure_known(known_config_keys());
    const std::string preset = cfg.get_string("preset", "desk");
    TrainConfig tc;
    if (preset == "desk") {
        tc.model = ModelConfig::desk();
        tc.batch_size = 8;
        tc.steps = 500;
        tc.lr = 1e-3;
        tc.warmup_steps = 20;
    } else if (preset == "paper") {
        tc.model = ModelConfig::paper();
        tc.batch_size = 64;
        tc.steps = 20000;
        tc.lr = 1e-4;
        tc.warmup_steps = 500;
    } else if (preset == "tiny") {
        tc.model = ModelConfig::tiny();
        tc.batch_size = 2;
        tc.steps = 100;
        tc.lr = 1e-3;
        tc.warmup_steps = 5;
    } else {
        throw UsageError("unknown preset: " + preset + " (expected desk, paper or tiny)");
    }

    tc.model.t_len = cfg.get_int("model.t_len", tc.model.t_len);
    tc.model.feature_dim = cfg.get_int("model.feature_dim", tc.model.feature_dim);
    tc.model.nearby_radius = cfg.get_int("model.nearby_w", tc.model.nearby_radius);
    apply_transformer_overrides(cfg, "model.genc", tc.model.global_encoder);
    apply_transformer_overrides(cfg, "model.gdec", tc.model.global_decoder);
    apply_transformer_overrides(cfg, "model.lenc", tc.model.local_encoder);
    apply_transformer_overrides(cfg, "model.cross", tc.model.cross_decoder);
    tc.model.regressor_hidden = cfg.get_int("model.regressor_hidden", tc.model.regressor_hidden);
    tc.model.regressor_iters = cfg.get_int("model.regressor_iters", tc.model.regressor_iters);
    tc.model.hscr_hidden = cfg.get_int("model.hscr_hidden", tc.model.hscr_hidden);
    if (cfg.has("model.mask_token"))
        tc.model.mask_token = mask_token_from_string(cfg.get_string("model.mask_token", ""));
    if (cfg.has("model.correction"))
        tc.model.correction = correction_from_string(cfg.get_string("model.correction", ""));
    tc.model.detach_global = cfg.get_bool("model.detach", tc.model.detach_global);

    tc.mask_ratio = cfg.get_double("train.mask_ratio", tc.mask_ratio);
    tc.batch_size = cfg.get_int("train.batch", tc.batch_size);
    tc.steps = cfg.get_int("train.steps", tc.steps);
    tc.lr = cfg.get_double("train.lr", tc.lr);
    tc.warmup_steps = cfg.get_int("train.warmup", tc.warmup_steps);
    tc.horizon = cfg.get_int("train.horizon", tc.horizon);
    tc.gmm_only = cfg.get_bool("train.gmm_only", tc.gmm_only);
    tc.checkpoint_every = cfg.get_int("train.checkpoint_every", tc.checkpoint_every);

    tc.loss.j3d = cfg.get_double("loss.j3d", tc.loss.j3d);
    tc.loss.j2d = cfg.get_double("loss.j2d", tc.loss.j2d);
    tc.loss.pose = cfg.get_double("loss.pose", tc.loss.pose);
    tc.loss.shape = cfg.get_double("loss.shape", tc.loss.shape);
    tc.loss.vel = cfg.get_double("loss.vel", tc.loss.vel);

    tc.seed = cfg.get_u64("seed", tc.seed);
    return tc;
}

inline DataGenConfig data_config_from_map(const ConfigMap& cfg) {
    cfg.ensure_known(known_config_keys());
    DataGenConfig dc;
    dc.seed = cfg.get_u64("seed", dc.seed);
    dc.count = cfg.get_int("data.count", dc.count);
    dc.length = cfg.get_int("data.length", dc.length);
    dc.t_len = cfg.get_int("data.t_len", dc.t_len);
    dc.n_vertices = cfg.get_int("data.vertices", dc.n_vertices);
    dc.feature_dim = cfg.get_int("data.feature_dim", dc.feature_dim);
    dc.noise_level = cfg.get_double("data.noise_level", dc.noise_level);
    return dc;
}

namespace detail {
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace detail

// The fully-resolved run settings as a reparsable config.
inline ConfigMap effective_config(const TrainConfig& tc, const std::string& preset) {
    ConfigMap cfg;
    cfg.set("preset", preset);
    cfg.set("seed", std::to_string(tc.seed));
    cfg.set("model.t_len", std::to_string(tc.model.t_len));
    cfg.set("model.feature_dim", std::to_string(tc.model.feature_dim));
    cfg.set("model.nearby_w", std::to_string(tc.model.nearby_radius));
    const auto put_tf = [&](const std::string& prefix, const TransformerConfig& t) {
        cfg.set(prefix + ".layers", std::to_string(t.n_layers));
        cfg.set(prefix + ".d_model", std::to_string(t.d_model));
        cfg.set(prefix + ".heads", std::to_string(t.n_heads));
        cfg.set(prefix + ".d_ff", std::to_string(t.d_ff));
        cfg.set(prefix + ".pos", to_string(t.pos_embed));
    };
    put_tf("model.genc", tc.model.global_encoder);
    put_tf("model.gdec", tc.model.global_decoder);
    put_tf("model.lenc", tc.model.local_encoder);
    put_tf("model.cross", tc.model.cross_decoder);
    cfg.set("model.regressor_hidden", std::to_string(tc.model.regressor_hidden));
    cfg.set("model.regressor_iters", std::to_string(tc.model.regressor_iters));
    cfg.set("model.hscr_hidden", std::to_string(tc.model.hscr_hidden));
    cfg.set("model.mask_token", to_string(tc.model.mask_token));
    cfg.set("model.correction", to_string(tc.model.correction));
    cfg.set("model.detach", tc.model.detach_global ? "true" : "false");
    cfg.set("train.mask_ratio", detail::format_double(tc.mask_ratio));
    cfg.set("train.batch", std::to_string(tc.batch_size));
    cfg.set("train.steps", std::to_string(tc.steps));
    cfg.set("train.lr", detail::format_double(tc.lr));
    cfg.set("train.warmup", std::to_string(tc.warmup_steps));
    cfg.set("train.horizon", std::to_string(tc.horizon));
    cfg.set("train.gmm_only", tc.gmm_only ? "true" : "false");
    cfg.set("train.checkpoint_every", std::to_string(tc.checkpoint_every));
    cfg.set("loss.j3d", detail::format_double(tc.loss.j3d));
    cfg.set("loss.j2d", detail::format_double(tc.loss.j2d));
    cfg.set("loss.pose", detail::format_double(tc.loss.pose));
    cfg.set("loss.shape", detail::format_double(tc.loss.shape));
    cfg.set("loss.vel", detail::format_double(tc.loss.vel));
    return cfg;
}

}  // namespace glot
