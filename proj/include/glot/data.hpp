#pragma once

// Procedural motion-sequence generation (standing in for image features and
// mocap data), T-frame window extraction with nearest-padding, and dataset
// directory I/O.
//
// Each sequence carries band-limited sinusoidal joint trajectories, a fixed
// body shape, a smooth pseudo camera, and per-frame feature vectors obtained
// by a dataset-wide seeded affine encoding of the ground-truth state plus
// Gaussian noise. The temporal model has to denoise and in-fill these
// features, which is what gives the task content.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "glot/container.hpp"
#include "glot/core.hpp"
#include "glot/geometry.hpp"

#include <json.hpp>

namespace glot {

// Per-frame ground-truth state fed to the feature encoder:
// theta (144) + beta (10) + phi (3) + joints3d (72).
constexpr int kStateDims = kPoseDims + kShapeDims + 3 + kNumJoints * 3;  // 229

struct MotionSequence {
    int length = 0;
    int n_vertices = 0;
    int feature_dim = 0;
    std::vector<double> gt_theta;     // L x 144
    std::array<double, kShapeDims> gt_beta{};
    std::vector<double> gt_phi;       // L x 3
    std::vector<double> gt_joints3d;  // L x 72
    std::vector<double> gt_joints2d;  // L x 48
    std::vector<double> gt_vertices;  // L x V*3
    std::vector<float> features;      // L x F

    const double* theta_frame(int t) const { return &gt_theta[static_cast<std::size_t>(t) * kPoseDims]; }
    const double* phi_frame(int t) const { return &gt_phi[static_cast<std::size_t>(t) * 3]; }
    const double* joints3d_frame(int t) const { return &gt_joints3d[static_cast<std::size_t>(t) * kNumJoints * 3]; }
    const double* joints2d_frame(int t) const { return &gt_joints2d[static_cast<std::size_t>(t) * kNumJoints * 2]; }
    const double* vertices_frame(int t) const {
        return &gt_vertices[static_cast<std::size_t>(t) * n_vertices * 3];
    }
    const float* features_frame(int t) const { return &features[static_cast<std::size_t>(t) * feature_dim]; }
};

// Dataset-wide affine map from the 229-dim state to feature space. Built
// deterministically from a seed so readers can reconstruct it.
struct FeatureEncoder {
    int feature_dim = 0;
    std::vector<double> weight;  // feature_dim x kStateDims
    std::vector<double> bias;    // feature_dim

    static FeatureEncoder build(std::uint64_t seed, int feature_dim) {
        FeatureEncoder enc;
        enc.feature_dim = feature_dim;
        Rng rng(seed ^ 0xfeedf00dcafebeefULL);
        const double w_std = 1.0 / std::sqrt(static_cast<double>(kStateDims));
        enc.weight.resize(static_cast<std::size_t>(feature_dim) * kStateDims);
        for (auto& w : enc.weight) w = rng.normal(0.0, w_std);
        enc.bias.resize(feature_dim);
        for (auto& b : enc.bias) b = rng.normal(0.0, 0.1);
        return enc;
    }

    void encode(const double* state, double* out) const {
        for (int i = 0; i < feature_dim; ++i) {
            const double* wrow = &weight[static_cast<std::size_t>(i) * kStateDims];
            double s = bias[i];
            for (int k = 0; k < kStateDims; ++k) s += wrow[k] * state[k];
            out[i] = s;
        }
    }
};

namespace detail {

// Sum of 2-4 random-frequency sinusoids, band-limited to periods of 8-64
// frames, with total amplitude capped at 1.2 rad.
struct SinusoidSum {
    struct Term {
        double amplitude, omega, phase;
    };
    std::vector<Term> terms;

    static SinusoidSum sample(Rng& rng, double max_total_amplitude) {
        SinusoidSum s;
        const int k = 2 + static_cast<int>(rng.uniform_int(3));
        double raw_total = 0.0;
        std::vector<double> raw(k);
        for (int i = 0; i < k; ++i) {
            raw[i] = rng.uniform(0.2, 1.0);
            raw_total += raw[i];
        }
        // Most components swing gently, occasional ones approach the cap,
        // which is roughly how joint angles behave in natural motion.
        const double total = rng.uniform(0.08, 0.5) * max_total_amplitude;
        for (int i = 0; i < k; ++i) {
            const double period = rng.uniform(8.0, 64.0);
            s.terms.push_back({raw[i] / raw_total * total, 2.0 * kPi / period, rng.uniform(0.0, 2.0 * kPi)});
        }
        return s;
    }

    double at(double t) const {
        double v = 0.0;
        for (const auto& term : terms) v += term.amplitude * std::sin(term.omega * t + term.phase);
        return v;
    }
};

}  // namespace detail

constexpr double kMaxJointAmplitude = 1.2;  // rad, total per axis-angle component

inline MotionSequence gen_sequence(std::uint64_t seed, int length, const BodyModel& body,
                                   double noise_level, const FeatureEncoder& encoder) {
    MotionSequence seq;
    seq.length = length;
    seq.n_vertices = body.n_vertices;
    seq.feature_dim = encoder.feature_dim;
    Rng rng(seed);

    // One trajectory per joint per axis-angle component.
    std::vector<detail::SinusoidSum> traj;
    traj.reserve(kNumJoints * 3);
    for (int j = 0; j < kNumJoints; ++j)
        for (int c = 0; c < 3; ++c) traj.push_back(detail::SinusoidSum::sample(rng, kMaxJointAmplitude));

    for (int k = 0; k < kShapeDims; ++k)
        seq.gt_beta[k] = std::clamp(rng.normal(0.0, 0.5), -2.0, 2.0);

    // Smooth pseudo camera: positive scale around 1, drifting image offsets.
    detail::SinusoidSum cam_s = detail::SinusoidSum::sample(rng, 0.15);
    detail::SinusoidSum cam_tx = detail::SinusoidSum::sample(rng, 0.3);
    detail::SinusoidSum cam_ty = detail::SinusoidSum::sample(rng, 0.3);

    seq.gt_theta.resize(static_cast<std::size_t>(length) * kPoseDims);
    seq.gt_phi.resize(static_cast<std::size_t>(length) * 3);
    seq.gt_joints3d.resize(static_cast<std::size_t>(length) * kNumJoints * 3);
    seq.gt_joints2d.resize(static_cast<std::size_t>(length) * kNumJoints * 2);
    seq.gt_vertices.resize(static_cast<std::size_t>(length) * body.n_vertices * 3);
    seq.features.resize(static_cast<std::size_t>(length) * encoder.feature_dim);

    std::vector<double> state(kStateDims);
    std::vector<double> clean(static_cast<std::size_t>(length) * encoder.feature_dim);
    std::vector<double> encoded(encoder.feature_dim);
    for (int t = 0; t < length; ++t) {
        std::array<Mat3, kNumJoints> pose;
        for (int j = 0; j < kNumJoints; ++j) {
            const Vec3 aa(traj[j * 3 + 0].at(t), traj[j * 3 + 1].at(t), traj[j * 3 + 2].at(t));
            pose[j] = axis_angle_to_matrix(aa);
            const Rot6d r6 = matrix_to_rot6d(pose[j]);
            for (int c = 0; c < 6; ++c)
                seq.gt_theta[(static_cast<std::size_t>(t) * kNumJoints + j) * 6 + c] = r6.r[c];
        }
        const CameraParams cam{1.0 + cam_s.at(t), cam_tx.at(t), cam_ty.at(t)};
        seq.gt_phi[static_cast<std::size_t>(t) * 3 + 0] = cam.s;
        seq.gt_phi[static_cast<std::size_t>(t) * 3 + 1] = cam.tx;
        seq.gt_phi[static_cast<std::size_t>(t) * 3 + 2] = cam.ty;

        const JointSet joints = forward_kinematics(body, pose, seq.gt_beta);
        for (int j = 0; j < kNumJoints; ++j) {
            for (int c = 0; c < 3; ++c)
                seq.gt_joints3d[(static_cast<std::size_t>(t) * kNumJoints + j) * 3 + c] =
                    joints.positions[j][c];
            const Vec2 p2 = project_point_weak_perspective(joints.positions[j], cam);
            seq.gt_joints2d[(static_cast<std::size_t>(t) * kNumJoints + j) * 2 + 0] = p2.x();
            seq.gt_joints2d[(static_cast<std::size_t>(t) * kNumJoints + j) * 2 + 1] = p2.y();
        }
        const std::vector<Vec3> verts = skin_vertices(body, joints.transforms, seq.gt_beta);
        for (int v = 0; v < body.n_vertices; ++v)
            for (int c = 0; c < 3; ++c)
                seq.gt_vertices[(static_cast<std::size_t>(t) * body.n_vertices + v) * 3 + c] = verts[v][c];

        // State -> feature encoding (+ noise).
        int off = 0;
        for (int i = 0; i < kPoseDims; ++i) state[off++] = seq.gt_theta[static_cast<std::size_t>(t) * kPoseDims + i];
        for (int k = 0; k < kShapeDims; ++k) state[off++] = seq.gt_beta[k];
        for (int c = 0; c < 3; ++c) state[off++] = seq.gt_phi[static_cast<std::size_t>(t) * 3 + c];
        for (int i = 0; i < kNumJoints * 3; ++i)
            state[off++] = seq.gt_joints3d[static_cast<std::size_t>(t) * kNumJoints * 3 + i];
        encoder.encode(state.data(), encoded.data());
        std::copy(encoded.begin(), encoded.end(),
                  clean.begin() + static_cast<std::size_t>(t) * encoder.feature_dim);
    }

    // noise_level is a fraction of the clean features' standard deviation.
    double noise_std = 0.0;
    if (noise_level > 0.0) {
        double mean = 0.0;
        for (double v : clean) mean += v;
        mean /= static_cast<double>(clean.size());
        double var = 0.0;
        for (double v : clean) var += (v - mean) * (v - mean);
        var /= static_cast<double>(clean.size());
        noise_std = noise_level * std::sqrt(var);
    }
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double noisy = clean[i] + (noise_std > 0.0 ? rng.normal(0.0, noise_std) : 0.0);
        seq.features[i] = static_cast<float>(noisy);
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Window extraction
// ---------------------------------------------------------------------------

// Mid-frame slot of a T-frame window.
inline int mid_frame_index(int t_len) { return t_len / 2 - 1; }

struct WindowSample {
    int t_len = 0;
    int center = 0;
    int pad_left = 0;
    int pad_right = 0;
    std::vector<int> source_index;  // per slot, clamped into [0, L)
    std::vector<float> features;    // T x F
    std::vector<double> gt_theta;   // T x 144
    std::array<double, kShapeDims> gt_beta{};
    std::vector<double> gt_phi;       // T x 3
    std::vector<double> gt_joints3d;  // T x 72
    std::vector<double> gt_joints2d;  // T x 48
    int feature_dim = 0;
};

// Frames center-m .. center+(T-1-m) with m = T/2-1; out-of-range indices are
// clamped to the nearest boundary frame (bit-copies of it).
inline WindowSample window(const MotionSequence& seq, int center, int t_len) {
    if (center < 0 || center >= seq.length) throw IndexOutOfRange("window: center " + std::to_string(center));
    if (t_len < 2 || t_len % 2 != 0) throw ConfigMismatch("window length must be even and >= 2");
    const int m = mid_frame_index(t_len);
    WindowSample w;
    w.t_len = t_len;
    w.center = center;
    w.feature_dim = seq.feature_dim;
    w.gt_beta = seq.gt_beta;
    w.source_index.resize(t_len);
    w.features.resize(static_cast<std::size_t>(t_len) * seq.feature_dim);
    w.gt_theta.resize(static_cast<std::size_t>(t_len) * kPoseDims);
    w.gt_phi.resize(static_cast<std::size_t>(t_len) * 3);
    w.gt_joints3d.resize(static_cast<std::size_t>(t_len) * kNumJoints * 3);
    w.gt_joints2d.resize(static_cast<std::size_t>(t_len) * kNumJoints * 2);
    for (int k = 0; k < t_len; ++k) {
        const int raw = center - m + k;
        const int idx = std::clamp(raw, 0, seq.length - 1);
        if (raw < 0) ++w.pad_left;
        if (raw > seq.length - 1) ++w.pad_right;
        w.source_index[k] = idx;
        std::copy_n(seq.features_frame(idx), seq.feature_dim,
                    &w.features[static_cast<std::size_t>(k) * seq.feature_dim]);
        std::copy_n(seq.theta_frame(idx), kPoseDims, &w.gt_theta[static_cast<std::size_t>(k) * kPoseDims]);
        std::copy_n(seq.phi_frame(idx), 3, &w.gt_phi[static_cast<std::size_t>(k) * 3]);
        std::copy_n(seq.joints3d_frame(idx), kNumJoints * 3,
                    &w.gt_joints3d[static_cast<std::size_t>(k) * kNumJoints * 3]);
        std::copy_n(seq.joints2d_frame(idx), kNumJoints * 2,
                    &w.gt_joints2d[static_cast<std::size_t>(k) * kNumJoints * 2]);
    }
    return w;
}

// ---------------------------------------------------------------------------
// Dataset I/O
// ---------------------------------------------------------------------------

struct DatasetMeta {
    int version = 1;
    std::uint64_t seed = 0;
    int count = 0;
    int length = 0;
    int t_len = 16;
    int n_vertices = 108;
    int feature_dim = 2048;
    double noise_level = 0.1;
    std::uint64_t body_seed = 0;
};

struct Dataset {
    DatasetMeta meta;
    std::vector<MotionSequence> sequences;
};

inline Dataset generate_dataset(const DatasetMeta& meta_in) {
    Dataset ds;
    ds.meta = meta_in;
    const BodyModel body = build_body_model(ds.meta.body_seed, ds.meta.n_vertices);
    const FeatureEncoder enc = FeatureEncoder::build(ds.meta.seed, ds.meta.feature_dim);
    Rng master(ds.meta.seed);
    ds.sequences.reserve(ds.meta.count);
    for (int i = 0; i < ds.meta.count; ++i) {
        const std::uint64_t seq_seed = master.fork_seed();
        ds.sequences.push_back(gen_sequence(seq_seed, ds.meta.length, body, ds.meta.noise_level, enc));
    }
    return ds;
}

inline Container sequence_to_container(const MotionSequence& seq) {
    Container c;
    const std::int64_t L = seq.length, V = seq.n_vertices, F = seq.feature_dim;
    c.add(make_f32_channel("features", {L, F}, seq.features));
    c.add(make_f64_channel("gt_theta", {L, kNumJoints, 6}, seq.gt_theta));
    c.add(make_f64_channel("gt_beta", {kShapeDims},
                           std::vector<double>(seq.gt_beta.begin(), seq.gt_beta.end())));
    c.add(make_f64_channel("gt_phi", {L, 3}, seq.gt_phi));
    c.add(make_f64_channel("gt_joints3d", {L, kNumJoints, 3}, seq.gt_joints3d));
    c.add(make_f64_channel("gt_joints2d", {L, kNumJoints, 2}, seq.gt_joints2d));
    c.add(make_f64_channel("gt_vertices", {L, V, 3}, seq.gt_vertices));
    return c;
}

inline MotionSequence sequence_from_container(const Container& c) {
    MotionSequence seq;
    const Channel& feat = c.get("features");
    if (feat.shape.size() != 2) throw CorruptFile("features channel must be rank 2");
    seq.length = static_cast<int>(feat.shape[0]);
    seq.feature_dim = static_cast<int>(feat.shape[1]);
    seq.features = feat.f32;
    const Channel& theta = c.get("gt_theta");
    if (theta.shape != std::vector<std::int64_t>{seq.length, kNumJoints, 6})
        throw CorruptFile("gt_theta shape");
    seq.gt_theta = theta.f64;
    const Channel& beta = c.get("gt_beta");
    if (beta.count() != kShapeDims) throw CorruptFile("gt_beta shape");
    std::copy_n(beta.f64.begin(), kShapeDims, seq.gt_beta.begin());
    seq.gt_phi = c.get("gt_phi").f64;
    seq.gt_joints3d = c.get("gt_joints3d").f64;
    seq.gt_joints2d = c.get("gt_joints2d").f64;
    const Channel& verts = c.get("gt_vertices");
    if (verts.shape.size() != 3 || verts.shape[0] != seq.length) throw CorruptFile("gt_vertices shape");
    seq.n_vertices = static_cast<int>(verts.shape[1]);
    seq.gt_vertices = verts.f64;
    if (seq.gt_phi.size() != static_cast<std::size_t>(seq.length) * 3 ||
        seq.gt_joints3d.size() != static_cast<std::size_t>(seq.length) * kNumJoints * 3 ||
        seq.gt_joints2d.size() != static_cast<std::size_t>(seq.length) * kNumJoints * 2)
        throw CorruptFile("ground-truth channel sizes inconsistent");
    return seq;
}

inline std::string sequence_file_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "seq_%04d.bin", i);
    return buf;
}

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest{{"version", ds.meta.version},
                            {"seed", ds.meta.seed},
                            {"count", ds.meta.count},
                            {"length", ds.meta.length},
                            {"T", ds.meta.t_len},
                            {"V", ds.meta.n_vertices},
                            {"feature_dim", ds.meta.feature_dim},
                            {"noise_level", ds.meta.noise_level},
                            {"body_seed", ds.meta.body_seed}};
    nlohmann::json files = nlohmann::json::array();
    for (int i = 0; i < static_cast<int>(ds.sequences.size()); ++i) {
        const std::string name = sequence_file_name(i);
        files.push_back(name);
        sequence_to_container(ds.sequences[i]).write(dir / name);
    }
    manifest["sequences"] = files;
    std::ofstream f(dir / "manifest.json");
    if (!f) throw IoError("cannot write manifest: " + (dir / "manifest.json").string());
    f << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw IoError("cannot read manifest: " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile("manifest.json: " + std::string(e.what()));
    }
    Dataset ds;
    const int version = manifest.value("version", -1);
    if (version != 1) throw VersionMismatch("dataset manifest version " + std::to_string(version));
    ds.meta.version = version;
    ds.meta.seed = manifest.value("seed", 0ULL);
    ds.meta.count = manifest.value("count", 0);
    ds.meta.length = manifest.value("length", 0);
    ds.meta.t_len = manifest.value("T", 16);
    ds.meta.n_vertices = manifest.value("V", 108);
    ds.meta.feature_dim = manifest.value("feature_dim", 2048);
    ds.meta.noise_level = manifest.value("noise_level", 0.1);
    ds.meta.body_seed = manifest.value("body_seed", 0ULL);
    for (const auto& name : manifest.at("sequences"))
        ds.sequences.push_back(sequence_from_container(Container::read(dir / name.get<std::string>())));
    return ds;
}

}  // namespace glot
