#pragma once

// Loss assembly, the training loop, dataset evaluation and ablation sweeps.

#include <array>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "glot/checkpoint.hpp"
#include "glot/data.hpp"
#include "glot/diffgeo.hpp"
#include "glot/metrics.hpp"
#include "glot/model.hpp"

#include <json.hpp>

namespace glot {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossWeights {
    double j3d = 300.0;
    double j2d = 300.0;
    double pose = 60.0;
    double shape = 0.06;
    double vel = 100.0;
};

struct LossBreakdown {
    double gmm_j3d = 0, gmm_j2d = 0, gmm_pose = 0, gmm_shape = 0, gmm_vel2d = 0, gmm_vel3d = 0;
    double lpc_j3d = 0, lpc_j2d = 0, lpc_pose = 0, lpc_shape = 0;
    double total = 0;

    double weighted_sum(const LossWeights& w) const {
        return w.j3d * (gmm_j3d + lpc_j3d) + w.j2d * (gmm_j2d + lpc_j2d) +
               w.pose * (gmm_pose + lpc_pose) + w.shape * (gmm_shape + lpc_shape) +
               w.vel * (gmm_vel2d + gmm_vel3d);
    }

    nlohmann::json to_json() const {
        return {{"gmm_j3d", gmm_j3d},     {"gmm_j2d", gmm_j2d},   {"gmm_pose", gmm_pose},
                {"gmm_shape", gmm_shape}, {"gmm_vel2d", gmm_vel2d}, {"gmm_vel3d", gmm_vel3d},
                {"lpc_j3d", lpc_j3d},     {"lpc_j2d", lpc_j2d},   {"lpc_pose", lpc_pose},
                {"lpc_shape", lpc_shape}, {"total", total}};
    }

    void accumulate(const LossBreakdown& o, double w) {
        gmm_j3d += w * o.gmm_j3d;
        gmm_j2d += w * o.gmm_j2d;
        gmm_pose += w * o.gmm_pose;
        gmm_shape += w * o.gmm_shape;
        gmm_vel2d += w * o.gmm_vel2d;
        gmm_vel3d += w * o.gmm_vel3d;
        lpc_j3d += w * o.lpc_j3d;
        lpc_j2d += w * o.lpc_j2d;
        lpc_pose += w * o.lpc_pose;
        lpc_shape += w * o.lpc_shape;
        total += w * o.total;
    }
};

struct LossResult {
    Tensor total;
    LossBreakdown parts;
};

inline Tensor features_tensor(const WindowSample& w) {
    std::vector<double> vals(w.features.begin(), w.features.end());
    return Tensor::from_values({w.t_len, w.feature_dim}, std::move(vals));
}

namespace detail {

inline Tensor mse(const Tensor& pred, const Tensor& target) {
    Tensor d = sub(pred, target);
    return mean_all(mul(d, d));
}

// Sum over gated frame pairs and joints of the per-joint velocity-difference
// norm; `point_dim` is 2 or 3 and `mask_pair` has T-1 entries.
inline Tensor velocity_term(const Tensor& joints, const Tensor& gt_joints,
                            const std::vector<double>& mask_pair, int point_dim) {
    const int t_len = joints.rows();
    const int n_joints = joints.cols() / point_dim;
    std::vector<int> head(t_len - 1), tail(t_len - 1);
    for (int t = 0; t + 1 < t_len; ++t) {
        head[t] = t + 1;
        tail[t] = t;
    }
    Tensor vel_pred = sub(rows(joints, head), rows(joints, tail));
    Tensor vel_gt = sub(rows(gt_joints, head), rows(gt_joints, tail));
    Tensor diff = reshape(sub(vel_pred, vel_gt), {(t_len - 1) * n_joints, point_dim});
    Tensor norms = rownorm(diff);
    std::vector<double> gate(static_cast<std::size_t>(t_len - 1) * n_joints);
    for (int t = 0; t + 1 < t_len; ++t)
        for (int j = 0; j < n_joints; ++j) gate[static_cast<std::size_t>(t) * n_joints + j] = mask_pair[t];
    return sum_all(mul(norms, Tensor::from_values({(t_len - 1) * n_joints, 1}, std::move(gate))));
}

}  // namespace detail

// Differentiable training loss for one window. Per-frame parameter and joint
// terms are averaged over the masked frames only; the velocity terms run over
// frame pairs gated by the mask vector; the local branch constrains the
// mid-frame only.
inline LossResult window_loss(const BodyConstants& bc, const ModelConfig& cfg,
                              const WindowForward& fwd, const WindowSample& gt, const MaskSpec& mask,
                              const LossWeights& weights) {
    const int t_len = cfg.t_len;
    const int mid = cfg.mid_index();
    LossResult out;
    std::vector<Tensor> weighted_terms;

    Tensor gt_theta = Tensor::from_values({t_len, kPoseDims}, gt.gt_theta);
    std::vector<double> beta_rows(static_cast<std::size_t>(t_len) * kShapeDims);
    for (int t = 0; t < t_len; ++t)
        for (int k = 0; k < kShapeDims; ++k) beta_rows[static_cast<std::size_t>(t) * kShapeDims + k] = gt.gt_beta[k];
    Tensor gt_beta = Tensor::from_values({t_len, kShapeDims}, std::move(beta_rows));
    Tensor gt_phi = Tensor::from_values({t_len, 3}, gt.gt_phi);
    Tensor gt_j3d = Tensor::from_values({t_len, kNumJoints * 3}, gt.gt_joints3d);
    Tensor gt_j2d = Tensor::from_values({t_len, kNumJoints * 2}, gt.gt_joints2d);

    // Predicted joints for every frame (velocity terms need them all).
    Tensor rotmats = reshape(rot6d_rows_to_matrices(reshape(fwd.gmm.theta, {t_len * kNumJoints, 6})),
                             {t_len, kNumJoints * 9});
    Tensor pred_j3d = fk_positions(bc, rotmats, fwd.gmm.beta);
    Tensor pred_j2d = project_positions(pred_j3d, fwd.gmm.phi);

    const std::vector<int>& masked = mask.masked_indices;
    if (!masked.empty()) {
        Tensor pose_term = detail::mse(rows(fwd.gmm.theta, masked), rows(gt_theta, masked));
        Tensor shape_term = detail::mse(
            concat_cols({rows(fwd.gmm.beta, masked), rows(fwd.gmm.phi, masked)}),
            concat_cols({rows(gt_beta, masked), rows(gt_phi, masked)}));
        Tensor j3d_term = detail::mse(rows(pred_j3d, masked), rows(gt_j3d, masked));
        Tensor j2d_term = detail::mse(rows(pred_j2d, masked), rows(gt_j2d, masked));
        out.parts.gmm_pose = pose_term.item();
        out.parts.gmm_shape = shape_term.item();
        out.parts.gmm_j3d = j3d_term.item();
        out.parts.gmm_j2d = j2d_term.item();
        weighted_terms.push_back(scale(pose_term, weights.pose));
        weighted_terms.push_back(scale(shape_term, weights.shape));
        weighted_terms.push_back(scale(j3d_term, weights.j3d));
        weighted_terms.push_back(scale(j2d_term, weights.j2d));

        const std::vector<double> pair_mask = mask.mask_vector(t_len);
        bool any_pair = false;
        for (double m : pair_mask) any_pair = any_pair || m != 0.0;
        if (any_pair) {
            Tensor vel3d = detail::velocity_term(pred_j3d, gt_j3d, pair_mask, 3);
            Tensor vel2d = detail::velocity_term(pred_j2d, gt_j2d, pair_mask, 2);
            out.parts.gmm_vel3d = vel3d.item();
            out.parts.gmm_vel2d = vel2d.item();
            weighted_terms.push_back(scale(vel3d, weights.vel));
            weighted_terms.push_back(scale(vel2d, weights.vel));
        }
    }

    if (fwd.has_lpc) {
        Tensor gt_theta_mid = rows(gt_theta, {mid});
        Tensor gt_beta_mid = rows(gt_beta, {mid});
        Tensor gt_phi_mid = rows(gt_phi, {mid});
        Tensor pose_term = detail::mse(fwd.lpc.theta_r, gt_theta_mid);
        Tensor shape_term = detail::mse(concat_cols({fwd.lpc.beta_r, fwd.lpc.phi_r}),
                                        concat_cols({gt_beta_mid, gt_phi_mid}));
        Tensor mid_rot = rot6d_rows_to_matrices(reshape(fwd.lpc.theta_r, {kNumJoints, 6}));
        Tensor mid_j3d = fk_positions(bc, reshape(mid_rot, {1, kNumJoints * 9}), fwd.lpc.beta_r);
        Tensor mid_j2d = project_positions(mid_j3d, fwd.lpc.phi_r);
        Tensor j3d_term = detail::mse(mid_j3d, rows(gt_j3d, {mid}));
        Tensor j2d_term = detail::mse(mid_j2d, rows(gt_j2d, {mid}));
        out.parts.lpc_pose = pose_term.item();
        out.parts.lpc_shape = shape_term.item();
        out.parts.lpc_j3d = j3d_term.item();
        out.parts.lpc_j2d = j2d_term.item();
        weighted_terms.push_back(scale(pose_term, weights.pose));
        weighted_terms.push_back(scale(shape_term, weights.shape));
        weighted_terms.push_back(scale(j3d_term, weights.j3d));
        weighted_terms.push_back(scale(j2d_term, weights.j2d));
    }

    if (weighted_terms.empty()) {
        out.total = Tensor::scalar(0.0);
    } else {
        out.total = weighted_terms[0];
        for (std::size_t i = 1; i < weighted_terms.size(); ++i) out.total = add(out.total, weighted_terms[i]);
    }
    out.parts.total = out.total.item();
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    ModelConfig model;
    double mask_ratio = 0.5;
    LossWeights loss;
    int batch_size = 64;
    int steps = 1000;
    double lr = 1e-4;
    int warmup_steps = 50;
    int horizon = 0;  // 0 -> steps
    bool gmm_only = false;
    int checkpoint_every = 0;  // 0 -> final checkpoint only
    std::uint64_t seed = 0;

    LrSchedule schedule() const {
        return LrSchedule{lr, warmup_steps, horizon > 0 ? horizon : steps};
    }

    void validate() const {
        model.validate();
        if (mask_ratio < 0.0 || mask_ratio >= 1.0) throw ConfigMismatch("mask_ratio must be in [0, 1)");
        if (batch_size < 1) throw ConfigMismatch("batch_size must be >= 1");
        if (steps < 0) throw ConfigMismatch("steps must be >= 0");
        if (!(lr > 0.0)) throw ConfigMismatch("lr must be positive");
    }
};

struct TrainResult {
    std::filesystem::path checkpoint_path;
    std::vector<LossBreakdown> log;
};

// Deterministic single-writer training loop: per step, sample a batch of
// windows and fresh masks, run both branches, descend the summed loss, and
// log one JSON line. A NaN loss aborts with a diagnostic dump of the batch.
inline TrainResult train(const TrainConfig& cfg, const Dataset& ds,
                         const std::filesystem::path& out_dir) {
    cfg.validate();
    if (ds.sequences.empty()) throw EmptyInput("train: dataset has no sequences");
    if (ds.meta.feature_dim != cfg.model.feature_dim)
        throw ConfigMismatch("dataset feature_dim " + std::to_string(ds.meta.feature_dim) +
                             " != model feature_dim " + std::to_string(cfg.model.feature_dim));
    for (const auto& seq : ds.sequences)
        if (seq.length < cfg.model.t_len) throw ConfigMismatch("sequence shorter than window length");

    std::filesystem::create_directories(out_dir);
    const BodyModel body = build_body_model(ds.meta.body_seed, ds.meta.n_vertices);
    const BodyConstants bc = BodyConstants::build(body);
    GlotModel model(cfg.model, cfg.seed, !cfg.gmm_only);
    Adam opt;
    const LrSchedule schedule = cfg.schedule();
    Rng rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);

    std::ofstream log_file(out_dir / "train_log.jsonl");
    if (!log_file) throw IoError("cannot write training log in " + out_dir.string());

    TrainResult result;
    for (int step = 0; step < cfg.steps; ++step) {
        model.params().zero_grad();
        struct BatchItem {
            int seq_idx, center;
            std::vector<int> masked;
        };
        std::vector<BatchItem> batch_desc;
        Tensor batch_total;
        LossBreakdown batch_parts;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int seq_idx = static_cast<int>(rng.uniform_int(ds.sequences.size()));
            const MotionSequence& seq = ds.sequences[seq_idx];
            const int center = static_cast<int>(rng.uniform_int(seq.length));
            const WindowSample win = window(seq, center, cfg.model.t_len);
            const MaskSpec mask = sample_mask(cfg.model.t_len, cfg.mask_ratio, rng);
            batch_desc.push_back({seq_idx, center, mask.masked_indices});
            const WindowForward fwd = model.forward(features_tensor(win), mask);
            LossResult loss = window_loss(bc, cfg.model, fwd, win, mask, cfg.loss);
            batch_parts.accumulate(loss.parts, 1.0 / cfg.batch_size);
            batch_total = b == 0 ? loss.total : add(batch_total, loss.total);
        }
        Tensor total = scale(batch_total, 1.0 / cfg.batch_size);

        if (!std::isfinite(total.item())) {
            nlohmann::json dump{{"step", step}, {"loss", batch_parts.to_json()}, {"batch", nlohmann::json::array()}};
            for (const auto& item : batch_desc)
                dump["batch"].push_back(
                    {{"sequence", item.seq_idx}, {"center", item.center}, {"masked", item.masked}});
            std::ofstream dump_file(out_dir / "nan_dump.json");
            dump_file << dump.dump(2) << "\n";
            throw NaNLoss("training aborted at step " + std::to_string(step) + "; batch dumped to " +
                          (out_dir / "nan_dump.json").string());
        }

        backward(total);
        const double lr_now = schedule.at(opt.step_count);
        opt.step(model.params(), schedule);

        nlohmann::json line = batch_parts.to_json();
        line["step"] = step;
        line["lr"] = lr_now;
        log_file << line.dump() << "\n";
        result.log.push_back(batch_parts);

        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_%06d.bin", step + 1);
            save_checkpoint(out_dir / name, model, body, {{"step", step + 1}});
        }
    }

    result.checkpoint_path = out_dir / "checkpoint.bin";
    save_checkpoint(result.checkpoint_path, model, body,
                    {{"step", cfg.steps}, {"seed", cfg.seed}, {"gmm_only", cfg.gmm_only}});
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline int env_thread_cap() {
    if (const char* env = std::getenv("GLOT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

struct SequencePrediction {
    std::vector<double> theta;     // L x 144
    std::vector<double> beta;      // L x 10
    std::vector<double> phi;       // L x 3
    std::vector<double> joints3d;  // L x 72
    std::vector<double> vertices;  // L x V*3
};

// Predict every frame of a sequence through its nearest-padded window with no
// masking; the mid-frame (corrected when the local branch exists) is the
// prediction for that frame.
inline SequencePrediction predict_sequence(const GlotModel& model, const BodyModel& body,
                                           const MotionSequence& seq) {
    NoGradGuard ng;
    const ModelConfig& cfg = model.config();
    const int mid = cfg.mid_index();
    SequencePrediction pred;
    const int length = seq.length;
    pred.theta.resize(static_cast<std::size_t>(length) * kPoseDims);
    pred.beta.resize(static_cast<std::size_t>(length) * kShapeDims);
    pred.phi.resize(static_cast<std::size_t>(length) * 3);
    pred.joints3d.resize(static_cast<std::size_t>(length) * kNumJoints * 3);
    pred.vertices.resize(static_cast<std::size_t>(length) * body.n_vertices * 3);
    for (int t = 0; t < length; ++t) {
        const WindowSample win = window(seq, t, cfg.t_len);
        const WindowForward fwd = model.forward(features_tensor(win), MaskSpec::none());
        const Tensor theta = fwd.mid_theta(mid);
        const Tensor beta = fwd.mid_beta(mid);
        const Tensor phi = fwd.mid_phi(mid);
        std::copy_n(theta.values().begin(), kPoseDims, pred.theta.begin() + static_cast<std::size_t>(t) * kPoseDims);
        std::copy_n(beta.values().begin(), kShapeDims, pred.beta.begin() + static_cast<std::size_t>(t) * kShapeDims);
        std::copy_n(phi.values().begin(), 3, pred.phi.begin() + static_cast<std::size_t>(t) * 3);

        std::array<Mat3, kNumJoints> pose;
        for (int j = 0; j < kNumJoints; ++j) {
            Rot6d r;
            for (int c = 0; c < 6; ++c) r.r[c] = theta.values()[j * 6 + c];
            pose[j] = rot6d_to_matrix(r);
        }
        std::array<double, kShapeDims> beta_arr{};
        std::copy_n(beta.values().begin(), kShapeDims, beta_arr.begin());
        const JointSet joints = forward_kinematics(body, pose, beta_arr);
        for (int j = 0; j < kNumJoints; ++j)
            for (int c = 0; c < 3; ++c)
                pred.joints3d[(static_cast<std::size_t>(t) * kNumJoints + j) * 3 + c] = joints.positions[j][c];
        const std::vector<Vec3> verts = skin_vertices(body, joints.transforms, beta_arr);
        for (int v = 0; v < body.n_vertices; ++v)
            for (int c = 0; c < 3; ++c)
                pred.vertices[(static_cast<std::size_t>(t) * body.n_vertices + v) * 3 + c] = verts[v][c];
    }
    return pred;
}

inline Container prediction_to_container(const SequencePrediction& pred, int length, int n_vertices) {
    Container c;
    c.add(make_f64_channel("pred_theta", {length, kNumJoints, 6}, pred.theta));
    c.add(make_f64_channel("pred_beta", {length, kShapeDims}, pred.beta));
    c.add(make_f64_channel("pred_phi", {length, 3}, pred.phi));
    c.add(make_f64_channel("pred_joints3d", {length, kNumJoints, 3}, pred.joints3d));
    c.add(make_f64_channel("pred_vertices", {length, n_vertices, 3}, pred.vertices));
    return c;
}

// Score per-sequence predictions against the dataset ground truth: per-frame
// MPJPE / PA-MPJPE / MPVPE plus per-sequence Accel, aggregated in sequence
// order. Optionally exports predictions in the dataset container format.
inline MetricReport score_predictions(const std::vector<SequencePrediction>& preds, const Dataset& ds,
                                      const BodyModel& body, std::optional<double> fps = std::nullopt,
                                      const std::filesystem::path* export_dir = nullptr) {
    const int n_seq = static_cast<int>(ds.sequences.size());
    if (static_cast<int>(preds.size()) != n_seq) throw ShapeMismatch("one prediction per sequence");
    MetricReport report;
    for (int i = 0; i < n_seq; ++i) {
        const MotionSequence& seq = ds.sequences[i];
        const SequencePrediction& pred = preds[i];
        std::vector<std::vector<Vec3>> pred_traj(seq.length), gt_traj(seq.length);
        for (int t = 0; t < seq.length; ++t) {
            std::vector<Vec3> pj(kNumJoints), gj(kNumJoints);
            for (int j = 0; j < kNumJoints; ++j) {
                pj[j] = Vec3(pred.joints3d[(static_cast<std::size_t>(t) * kNumJoints + j) * 3],
                             pred.joints3d[(static_cast<std::size_t>(t) * kNumJoints + j) * 3 + 1],
                             pred.joints3d[(static_cast<std::size_t>(t) * kNumJoints + j) * 3 + 2]);
                gj[j] = Vec3(seq.gt_joints3d[(static_cast<std::size_t>(t) * kNumJoints + j) * 3],
                             seq.gt_joints3d[(static_cast<std::size_t>(t) * kNumJoints + j) * 3 + 1],
                             seq.gt_joints3d[(static_cast<std::size_t>(t) * kNumJoints + j) * 3 + 2]);
            }
            report.per_frame_mpjpe.push_back(mpjpe(pj, gj));
            report.per_frame_pa_mpjpe.push_back(pa_mpjpe(pj, gj));

            // Root-aligned vertices (joint-0 translation supplied here).
            std::vector<Vec3> pv(body.n_vertices), gv(body.n_vertices);
            for (int v = 0; v < body.n_vertices; ++v) {
                pv[v] = Vec3(pred.vertices[(static_cast<std::size_t>(t) * body.n_vertices + v) * 3],
                             pred.vertices[(static_cast<std::size_t>(t) * body.n_vertices + v) * 3 + 1],
                             pred.vertices[(static_cast<std::size_t>(t) * body.n_vertices + v) * 3 + 2]) -
                        pj[0];
                gv[v] = Vec3(seq.gt_vertices[(static_cast<std::size_t>(t) * body.n_vertices + v) * 3],
                             seq.gt_vertices[(static_cast<std::size_t>(t) * body.n_vertices + v) * 3 + 1],
                             seq.gt_vertices[(static_cast<std::size_t>(t) * body.n_vertices + v) * 3 + 2]) -
                        gj[0];
            }
            report.per_frame_mpvpe.push_back(mpvpe(pv, gv));
            pred_traj[t] = std::move(pj);
            gt_traj[t] = std::move(gj);
        }
        const std::vector<double> seq_accel = accel_error_per_frame(pred_traj, gt_traj, fps);
        report.per_frame_accel.insert(report.per_frame_accel.end(), seq_accel.begin(), seq_accel.end());

        if (export_dir) {
            std::filesystem::create_directories(*export_dir);
            char name[32];
            std::snprintf(name, sizeof(name), "pred_%04d.bin", i);
            prediction_to_container(pred, seq.length, body.n_vertices).write(*export_dir / name);
        }
    }
    report.finalize();
    return report;
}

// Evaluate a model over a dataset with masking disabled, sharding sequences
// across up to GLOT_THREADS workers (per-sequence results are independent, so
// the thread count never changes the report).
inline MetricReport evaluate(const GlotModel& model, const BodyModel& body, const Dataset& ds,
                             std::optional<double> fps = std::nullopt,
                             const std::filesystem::path* export_dir = nullptr) {
    if (ds.meta.feature_dim != model.config().feature_dim)
        throw ConfigMismatch("dataset feature_dim does not match the checkpoint");
    if (body.n_vertices != ds.meta.n_vertices)
        throw ConfigMismatch("body vertex count does not match the dataset");
    const int n_seq = static_cast<int>(ds.sequences.size());
    std::vector<SequencePrediction> preds(n_seq);

    const int n_threads = std::min(env_thread_cap(), n_seq);
    if (n_threads <= 1) {
        for (int i = 0; i < n_seq; ++i) preds[i] = predict_sequence(model, body, ds.sequences[i]);
    } else {
        std::vector<std::thread> workers;
        std::atomic<int> next{0};
        for (int w = 0; w < n_threads; ++w)
            workers.emplace_back([&] {
                for (int i = next.fetch_add(1); i < n_seq; i = next.fetch_add(1))
                    preds[i] = predict_sequence(model, body, ds.sequences[i]);
            });
        for (auto& t : workers) t.join();
    }
    return score_predictions(preds, ds, body, fps, export_dir);
}

// ---------------------------------------------------------------------------
// Ablation sweeps
// ---------------------------------------------------------------------------

enum class SweepAxis { kMaskRatio, kNearbyW, kMaskToken, kHscrVsResidual, kGmmOnly };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "mask_ratio") return SweepAxis::kMaskRatio;
    if (s == "nearby_w") return SweepAxis::kNearbyW;
    if (s == "mask_token") return SweepAxis::kMaskToken;
    if (s == "hscr_vs_residual") return SweepAxis::kHscrVsResidual;
    if (s == "gmm_only") return SweepAxis::kGmmOnly;
    throw UsageError("unknown sweep axis: " + s);
}

inline std::vector<std::string> default_sweep_values(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::kMaskRatio:
            return {"0", "0.125", "0.25", "0.375", "0.5", "0.625", "0.75", "0.875"};
        case SweepAxis::kNearbyW:
            return {"2", "3", "4", "5", "6"};
        case SweepAxis::kMaskToken:
            return {"smpl", "learnable"};
        case SweepAxis::kHscrVsResidual:
            return {"residual", "hscr"};
        case SweepAxis::kGmmOnly:
            return {"gmm", "gmm+lpc"};
    }
    throw UsageError("unhandled sweep axis");
}

struct SweepRow {
    std::string label;
    MetricReport report;
};

inline TrainConfig apply_sweep_value(TrainConfig cfg, SweepAxis axis, const std::string& value) {
    switch (axis) {
        case SweepAxis::kMaskRatio:
            cfg.mask_ratio = std::stod(value);
            break;
        case SweepAxis::kNearbyW:
            cfg.model.nearby_radius = std::stoi(value);
            break;
        case SweepAxis::kMaskToken:
            cfg.model.mask_token = mask_token_from_string(value);
            break;
        case SweepAxis::kHscrVsResidual:
            cfg.model.correction = correction_from_string(value);
            break;
        case SweepAxis::kGmmOnly:
            if (value == "gmm")
                cfg.gmm_only = true;
            else if (value == "gmm+lpc")
                cfg.gmm_only = false;
            else
                throw UsageError("gmm_only axis takes values gmm|gmm+lpc");
            break;
    }
    return cfg;
}

// Trains and evaluates one configuration per value with a shared seed.
inline std::vector<SweepRow> sweep(const TrainConfig& base, SweepAxis axis,
                                   const std::vector<std::string>& values, const Dataset& train_ds,
                                   const Dataset& eval_ds, const std::filesystem::path& out_dir) {
    std::vector<SweepRow> rows;
    for (const auto& value : values) {
        const TrainConfig cfg = apply_sweep_value(base, axis, value);
        const std::filesystem::path run_dir = out_dir / ("run_" + value);
        const TrainResult tr = train(cfg, train_ds, run_dir);
        const LoadedCheckpoint ckpt = load_checkpoint(tr.checkpoint_path);
        rows.push_back({value, evaluate(ckpt.model, ckpt.body, eval_ds)});
    }
    return rows;
}

inline std::string format_sweep_table(const std::string& axis_name, const std::vector<SweepRow>& rows) {
    char buf[160];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%-12s %12s %12s %12s %12s\n", axis_name.c_str(), "PA-MPJPE",
                  "MPJPE", "MPVPE", "Accel");
    out += buf;
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%-12s %12.4f %12.4f %12.4f %12.4f\n", row.label.c_str(),
                      row.report.pa_mpjpe, row.report.mpjpe, row.report.mpvpe, row.report.accel);
        out += buf;
    }
    return out;
}

inline nlohmann::json sweep_to_json(const std::string& axis_name, const std::vector<SweepRow>& rows) {
    nlohmann::json j{{"axis", axis_name}, {"rows", nlohmann::json::array()}};
    for (const auto& row : rows) {
        nlohmann::json r = row.report.to_json();
        r.erase("per_frame");
        r["value"] = row.label;
        j["rows"].push_back(r);
    }
    return j;
}

}  // namespace glot
