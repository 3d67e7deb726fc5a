#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "glot/train.hpp"
#include "test_helpers.hpp"

using namespace glot;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("glot_train_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

DatasetMeta tiny_meta(std::uint64_t seed, int count = 2, int length = 16) {
    DatasetMeta meta;
    meta.seed = seed;
    meta.count = count;
    meta.length = length;
    meta.t_len = 8;
    meta.n_vertices = 12;
    meta.feature_dim = 32;
    meta.noise_level = 0.05;
    meta.body_seed = seed;
    return meta;
}

TrainConfig tiny_train_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.model = ModelConfig::tiny();
    cfg.batch_size = 2;
    cfg.steps = 4;
    cfg.lr = 1e-3;
    cfg.warmup_steps = 1;
    cfg.mask_ratio = 0.25;
    cfg.seed = seed;
    return cfg;
}

// Builds a forward output whose values equal the ground truth of the window.
WindowForward oracle_forward(const WindowSample& win, int mid, bool with_lpc) {
    WindowForward fwd;
    fwd.gmm.theta = Tensor::from_values({win.t_len, kPoseDims}, win.gt_theta);
    std::vector<double> beta_rows(static_cast<std::size_t>(win.t_len) * kShapeDims);
    for (int t = 0; t < win.t_len; ++t)
        for (int k = 0; k < kShapeDims; ++k) beta_rows[t * kShapeDims + k] = win.gt_beta[k];
    fwd.gmm.beta = Tensor::from_values({win.t_len, kShapeDims}, beta_rows);
    fwd.gmm.phi = Tensor::from_values({win.t_len, 3}, win.gt_phi);
    if (with_lpc) {
        fwd.has_lpc = true;
        fwd.lpc.theta_r = rows(fwd.gmm.theta, {mid});
        fwd.lpc.beta_r = rows(fwd.gmm.beta, {mid});
        fwd.lpc.phi_r = rows(fwd.gmm.phi, {mid});
        fwd.lpc.theta_s = Tensor::zeros({1, kPoseDims});
    }
    return fwd;
}

}  // namespace

TEST_CASE("loss vanishes when predictions equal the ground truth") {
    const DatasetMeta meta = tiny_meta(900);
    const Dataset ds = generate_dataset(meta);
    const BodyModel body = build_body_model(meta.body_seed, meta.n_vertices);
    const BodyConstants bc = BodyConstants::build(body);
    const ModelConfig cfg = ModelConfig::tiny();

    const WindowSample win = window(ds.sequences[0], 8, cfg.t_len);
    Rng mask_rng(1);
    const MaskSpec mask = sample_mask(cfg.t_len, 0.5, mask_rng);
    const WindowForward fwd = oracle_forward(win, cfg.mid_index(), true);
    const LossResult loss = window_loss(bc, cfg, fwd, win, mask, LossWeights{});
    CHECK(loss.parts.gmm_pose == 0.0);
    CHECK(loss.parts.gmm_shape == 0.0);
    CHECK(loss.parts.lpc_pose == 0.0);
    CHECK(loss.parts.lpc_shape == 0.0);
    CHECK(loss.parts.gmm_j3d < 1e-18);
    CHECK(loss.parts.gmm_j2d < 1e-18);
    CHECK(loss.parts.lpc_j3d < 1e-18);
    CHECK(loss.parts.lpc_j2d < 1e-18);
    CHECK(loss.parts.gmm_vel3d < 1e-12);
    CHECK(loss.parts.gmm_vel2d < 1e-12);
    CHECK(loss.parts.total < 1e-9);
}

TEST_CASE("empty mask zeroes the global terms and leaves the local ones") {
    const DatasetMeta meta = tiny_meta(901);
    const Dataset ds = generate_dataset(meta);
    const BodyModel body = build_body_model(meta.body_seed, meta.n_vertices);
    const BodyConstants bc = BodyConstants::build(body);
    const ModelConfig cfg = ModelConfig::tiny();
    GlotModel model(cfg, 902);
    const WindowSample win = window(ds.sequences[0], 9, cfg.t_len);

    const WindowForward fwd = model.forward(features_tensor(win), MaskSpec::none());
    const LossResult loss = window_loss(bc, cfg, fwd, win, MaskSpec::none(), LossWeights{});
    CHECK(loss.parts.gmm_pose == 0.0);
    CHECK(loss.parts.gmm_j3d == 0.0);
    CHECK(loss.parts.gmm_vel3d == 0.0);
    CHECK(loss.parts.lpc_pose > 0.0);
    CHECK(loss.parts.lpc_j3d > 0.0);
}

TEST_CASE("loss terms match a plain-double reference computation") {
    const DatasetMeta meta = tiny_meta(903);
    const Dataset ds = generate_dataset(meta);
    const BodyModel body = build_body_model(meta.body_seed, meta.n_vertices);
    const BodyConstants bc = BodyConstants::build(body);
    const ModelConfig cfg = ModelConfig::tiny();
    GlotModel model(cfg, 904);

    const WindowSample win = window(ds.sequences[1], 7, cfg.t_len);
    Rng mask_rng(3);
    const MaskSpec mask = sample_mask(cfg.t_len, 0.5, mask_rng);
    const WindowForward fwd = model.forward(features_tensor(win), mask);
    const LossWeights weights;
    const LossResult loss = window_loss(bc, cfg, fwd, win, mask, weights);

    // Reference path: plain geometry per frame, explicit mean-square loops,
    // and the reference velocity_loss.
    const int t_len = cfg.t_len;
    std::vector<std::vector<double>> pred_j3d(t_len), pred_j2d(t_len), gt_j3d(t_len), gt_j2d(t_len);
    for (int t = 0; t < t_len; ++t) {
        std::array<Mat3, kNumJoints> pose;
        for (int j = 0; j < kNumJoints; ++j) {
            Rot6d r;
            for (int c = 0; c < 6; ++c) r.r[c] = fwd.gmm.theta.values()[(t * kNumJoints + j) * 6 + c];
            pose[j] = rot6d_to_matrix(r);
        }
        std::array<double, kShapeDims> beta{};
        for (int k = 0; k < kShapeDims; ++k) beta[k] = fwd.gmm.beta.values()[t * kShapeDims + k];
        const JointSet joints = forward_kinematics(body, pose, beta);
        // Raw projection formula; the predicted pseudo camera is
        // unconstrained during training.
        const double s = fwd.gmm.phi.values()[t * 3], tx = fwd.gmm.phi.values()[t * 3 + 1],
                     ty = fwd.gmm.phi.values()[t * 3 + 2];
        for (int j = 0; j < kNumJoints; ++j) {
            for (int c = 0; c < 3; ++c) pred_j3d[t].push_back(joints.positions[j][c]);
            pred_j2d[t].push_back(s * joints.positions[j].x() + tx);
            pred_j2d[t].push_back(s * joints.positions[j].y() + ty);
        }
        for (int j = 0; j < kNumJoints * 3; ++j) gt_j3d[t].push_back(win.gt_joints3d[t * kNumJoints * 3 + j]);
        for (int j = 0; j < kNumJoints * 2; ++j) gt_j2d[t].push_back(win.gt_joints2d[t * kNumJoints * 2 + j]);
    }

    double pose_ref = 0, shape_ref = 0, j3d_ref = 0, j2d_ref = 0;
    for (int t : mask.masked_indices) {
        for (int i = 0; i < kPoseDims; ++i) {
            const double d = fwd.gmm.theta.values()[t * kPoseDims + i] - win.gt_theta[t * kPoseDims + i];
            pose_ref += d * d;
        }
        for (int k = 0; k < kShapeDims; ++k) {
            const double d = fwd.gmm.beta.values()[t * kShapeDims + k] - win.gt_beta[k];
            shape_ref += d * d;
        }
        for (int c = 0; c < 3; ++c) {
            const double d = fwd.gmm.phi.values()[t * 3 + c] - win.gt_phi[t * 3 + c];
            shape_ref += d * d;
        }
        for (int i = 0; i < kNumJoints * 3; ++i) {
            const double d = pred_j3d[t][i] - gt_j3d[t][i];
            j3d_ref += d * d;
        }
        for (int i = 0; i < kNumJoints * 2; ++i) {
            const double d = pred_j2d[t][i] - gt_j2d[t][i];
            j2d_ref += d * d;
        }
    }
    const double n_masked = static_cast<double>(mask.masked_indices.size());
    pose_ref /= n_masked * kPoseDims;
    shape_ref /= n_masked * (kShapeDims + 3);
    j3d_ref /= n_masked * kNumJoints * 3;
    j2d_ref /= n_masked * kNumJoints * 2;
    CHECK(loss.parts.gmm_pose == Catch::Approx(pose_ref).epsilon(1e-9));
    CHECK(loss.parts.gmm_shape == Catch::Approx(shape_ref).epsilon(1e-9));
    CHECK(loss.parts.gmm_j3d == Catch::Approx(j3d_ref).epsilon(1e-9));
    CHECK(loss.parts.gmm_j2d == Catch::Approx(j2d_ref).epsilon(1e-9));

    MaskVector mv{mask.mask_vector(t_len)};
    CHECK(loss.parts.gmm_vel3d == Catch::Approx(velocity_loss(pred_j3d, gt_j3d, 3, mv)).epsilon(1e-9));
    CHECK(loss.parts.gmm_vel2d == Catch::Approx(velocity_loss(pred_j2d, gt_j2d, 2, mv)).epsilon(1e-9));

    // Total is the weighted sum of the logged components.
    CHECK(loss.parts.total == Catch::Approx(loss.parts.weighted_sum(weights)).margin(1e-9));
    CHECK(loss.total.item() == Catch::Approx(loss.parts.total).margin(1e-12));
}

TEST_CASE("perturbing ground truth outside the supervised set changes nothing") {
    const DatasetMeta meta = tiny_meta(905);
    const Dataset ds = generate_dataset(meta);
    const BodyModel body = build_body_model(meta.body_seed, meta.n_vertices);
    const BodyConstants bc = BodyConstants::build(body);
    const ModelConfig cfg = ModelConfig::tiny();
    GlotModel model(cfg, 906);
    Rng rng(907);

    for (int trial = 0; trial < 20; ++trial) {
        const WindowSample win = window(ds.sequences[0], 4 + trial % 8, cfg.t_len);
        Rng mask_rng(trial);
        const MaskSpec mask = sample_mask(cfg.t_len, 0.5, mask_rng);
        const WindowForward fwd = model.forward(features_tensor(win), mask);
        const LossResult base = window_loss(bc, cfg, fwd, win, mask, LossWeights{});

        // A frame is outside every active loss term when it is unmasked, not
        // the mid frame, and its predecessor pair is not gated (the velocity
        // term reads the successor of each masked frame).
        std::vector<int> free_frames;
        for (int t = 0; t < cfg.t_len; ++t) {
            if (mask.is_masked(t) || t == cfg.mid_index()) continue;
            if (t > 0 && mask.is_masked(t - 1)) continue;
            free_frames.push_back(t);
        }
        if (free_frames.empty()) continue;
        const int t = free_frames[rng.uniform_int(free_frames.size())];

        WindowSample mutated = win;
        for (int i = 0; i < kPoseDims; ++i) mutated.gt_theta[t * kPoseDims + i] += rng.normal();
        for (int c = 0; c < 3; ++c) mutated.gt_phi[t * 3 + c] += rng.normal();
        for (int i = 0; i < kNumJoints * 3; ++i) mutated.gt_joints3d[t * kNumJoints * 3 + i] += rng.normal();
        for (int i = 0; i < kNumJoints * 2; ++i) mutated.gt_joints2d[t * kNumJoints * 2 + i] += rng.normal();

        const LossResult after = window_loss(bc, cfg, fwd, mutated, mask, LossWeights{});
        CHECK(after.parts.gmm_pose == base.parts.gmm_pose);
        CHECK(after.parts.gmm_shape == base.parts.gmm_shape);
        CHECK(after.parts.gmm_j3d == base.parts.gmm_j3d);
        CHECK(after.parts.gmm_j2d == base.parts.gmm_j2d);
        CHECK(after.parts.gmm_vel3d == base.parts.gmm_vel3d);
        CHECK(after.parts.gmm_vel2d == base.parts.gmm_vel2d);
        CHECK(after.parts.lpc_pose == base.parts.lpc_pose);
        CHECK(after.parts.lpc_j3d == base.parts.lpc_j3d);
        CHECK(after.parts.total == base.parts.total);
    }
}

TEST_CASE("zero steps leaves the checkpoint at initialization") {
    const DatasetMeta meta = tiny_meta(908);
    const Dataset ds = generate_dataset(meta);
    TrainConfig cfg = tiny_train_config(909);
    cfg.steps = 0;
    const fs::path dir = temp_dir("zero_steps");
    const TrainResult tr = train(cfg, ds, dir);
    const LoadedCheckpoint ckpt = load_checkpoint(tr.checkpoint_path);

    GlotModel fresh(cfg.model, cfg.seed, true);
    for (const auto& [name, t] : fresh.params().items())
        CHECK(ckpt.model.params().get(name).values() == t.values());
}

TEST_CASE("training runs, logs and reduces the loss on a tiny problem") {
    const DatasetMeta meta = tiny_meta(910, 2, 16);
    const Dataset ds = generate_dataset(meta);
    TrainConfig cfg = tiny_train_config(911);
    cfg.steps = 60;
    cfg.batch_size = 4;
    cfg.lr = 2e-3;
    cfg.warmup_steps = 5;
    const fs::path dir = temp_dir("tiny_descent");
    const TrainResult tr = train(cfg, ds, dir);
    REQUIRE(tr.log.size() == 60);
    double first = 0, last = 0;
    for (int i = 0; i < 5; ++i) {
        first += tr.log[i].total / 5;
        last += tr.log[55 + i].total / 5;
    }
    CHECK(last < first);

    // The log file carries one JSON line per step with the closed-form lr.
    std::ifstream log(dir / "train_log.jsonl");
    REQUIRE(log.good());
    const LrSchedule schedule = cfg.schedule();
    std::string line;
    int step = 0;
    while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j["step"].get<int>() == step);
        CHECK(std::abs(j["lr"].get<double>() - schedule.at(step)) < 1e-12);
        CHECK(std::abs(j["total"].get<double>() - tr.log[step].total) < 1e-12);
        ++step;
    }
    CHECK(step == 60);
}

TEST_CASE("same-seed training runs produce bit-identical checkpoints") {
    const DatasetMeta meta = tiny_meta(912);
    const Dataset ds = generate_dataset(meta);
    TrainConfig cfg = tiny_train_config(913);
    cfg.steps = 6;
    const fs::path dir1 = temp_dir("det_a");
    const fs::path dir2 = temp_dir("det_b");
    train(cfg, ds, dir1);
    train(cfg, ds, dir2);
    std::ifstream f1(dir1 / "checkpoint.bin", std::ios::binary);
    std::ifstream f2(dir2 / "checkpoint.bin", std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(!s1.empty());
    CHECK(s1 == s2);
}

TEST_CASE("nan poisoned data aborts with a diagnostic dump") {
    const DatasetMeta meta = tiny_meta(914, 1, 8);
    Dataset ds = generate_dataset(meta);
    for (auto& f : ds.sequences[0].features) f = std::nanf("");
    TrainConfig cfg = tiny_train_config(915);
    const fs::path dir = temp_dir("nan_abort");
    CHECK_THROWS_AS(train(cfg, ds, dir), NaNLoss);
    CHECK(fs::exists(dir / "nan_dump.json"));
}

TEST_CASE("gt-oracle predictions evaluate to zero on every metric") {
    const DatasetMeta meta = tiny_meta(916, 2, 12);
    const Dataset ds = generate_dataset(meta);
    const BodyModel body = build_body_model(meta.body_seed, meta.n_vertices);
    std::vector<SequencePrediction> preds;
    for (const auto& seq : ds.sequences) {
        SequencePrediction p;
        p.theta = seq.gt_theta;
        p.beta.resize(static_cast<std::size_t>(seq.length) * kShapeDims);
        for (int t = 0; t < seq.length; ++t)
            for (int k = 0; k < kShapeDims; ++k) p.beta[t * kShapeDims + k] = seq.gt_beta[k];
        p.phi = seq.gt_phi;
        p.joints3d = seq.gt_joints3d;
        p.vertices = seq.gt_vertices;
        preds.push_back(std::move(p));
    }
    const MetricReport report = score_predictions(preds, ds, body);
    CHECK(report.mpjpe < 1e-9);
    CHECK(report.pa_mpjpe < 1e-6);
    CHECK(report.mpvpe < 1e-9);
    CHECK(report.accel < 1e-9);
    CHECK(report.n_frames == 24);
}

TEST_CASE("evaluation is a pure function of checkpoint and dataset") {
    const DatasetMeta meta = tiny_meta(917, 3, 10);
    const Dataset ds = generate_dataset(meta);
    TrainConfig cfg = tiny_train_config(918);
    cfg.steps = 3;
    const fs::path dir = temp_dir("eval_pure");
    const TrainResult tr = train(cfg, ds, dir);
    const LoadedCheckpoint ckpt = load_checkpoint(tr.checkpoint_path);

    setenv("GLOT_THREADS", "1", 1);
    const MetricReport a = evaluate(ckpt.model, ckpt.body, ds);
    setenv("GLOT_THREADS", "2", 1);
    const MetricReport b = evaluate(ckpt.model, ckpt.body, ds);
    unsetenv("GLOT_THREADS");
    CHECK(a.per_frame_mpjpe == b.per_frame_mpjpe);
    CHECK(a.per_frame_pa_mpjpe == b.per_frame_pa_mpjpe);
    CHECK(a.per_frame_mpvpe == b.per_frame_mpvpe);
    CHECK(a.per_frame_accel == b.per_frame_accel);
    CHECK(a.n_frames == 30);

    // Aggregates are the means of the per-frame traces.
    CHECK(a.mpjpe == Catch::Approx(MetricReport::mean(a.per_frame_mpjpe)).margin(1e-12));
    CHECK(a.accel == Catch::Approx(MetricReport::mean(a.per_frame_accel)).margin(1e-12));
}

TEST_CASE("exported trajectories reproduce the reported accel") {
    const DatasetMeta meta = tiny_meta(919, 2, 10);
    const Dataset ds = generate_dataset(meta);
    TrainConfig cfg = tiny_train_config(920);
    cfg.steps = 2;
    const fs::path dir = temp_dir("eval_export");
    const TrainResult tr = train(cfg, ds, dir);
    const LoadedCheckpoint ckpt = load_checkpoint(tr.checkpoint_path);
    const fs::path export_dir = dir / "preds";
    const MetricReport report = evaluate(ckpt.model, ckpt.body, ds, std::nullopt, &export_dir);

    std::vector<double> accel_values;
    for (int i = 0; i < 2; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "pred_%04d.bin", i);
        const Container c = Container::read(export_dir / name);
        const Channel& ch = c.get("pred_joints3d");
        const MotionSequence& seq = ds.sequences[i];
        std::vector<std::vector<Vec3>> pred(seq.length, std::vector<Vec3>(kNumJoints));
        std::vector<std::vector<Vec3>> gt(seq.length, std::vector<Vec3>(kNumJoints));
        for (int t = 0; t < seq.length; ++t)
            for (int j = 0; j < kNumJoints; ++j) {
                const std::size_t o = (static_cast<std::size_t>(t) * kNumJoints + j) * 3;
                pred[t][j] = Vec3(ch.f64[o], ch.f64[o + 1], ch.f64[o + 2]);
                gt[t][j] = Vec3(seq.gt_joints3d[o], seq.gt_joints3d[o + 1], seq.gt_joints3d[o + 2]);
            }
        const std::vector<double> seq_accel = accel_error_per_frame(pred, gt);
        accel_values.insert(accel_values.end(), seq_accel.begin(), seq_accel.end());
    }
    CHECK(report.accel == Catch::Approx(MetricReport::mean(accel_values)).margin(1e-12));
}

TEST_CASE("checkpoints round-trip through both dtypes") {
    const ModelConfig mc = ModelConfig::tiny();
    GlotModel model(mc, 921);
    const BodyModel body = build_body_model(3, 12);
    const fs::path dir = temp_dir("ckpt_roundtrip");

    save_checkpoint(dir / "f64.bin", model, body);
    const LoadedCheckpoint back = load_checkpoint(dir / "f64.bin");
    for (const auto& [name, t] : model.params().items())
        CHECK(back.model.params().get(name).values() == t.values());
    CHECK(back.body.skin_weights == body.skin_weights);
    CHECK(back.model.config().t_len == mc.t_len);

    save_checkpoint(dir / "f32.bin", model, body, {}, "f32");
    const LoadedCheckpoint narrow = load_checkpoint(dir / "f32.bin");
    for (const auto& [name, t] : model.params().items()) {
        const auto& loaded = narrow.model.params().get(name).values();
        for (std::size_t i = 0; i < t.size(); ++i)
            CHECK(loaded[i] == static_cast<double>(static_cast<float>(t.values()[i])));
    }
}

TEST_CASE("sweep trains one run per value with a shared seed") {
    const DatasetMeta meta = tiny_meta(922, 2, 10);
    const Dataset ds = generate_dataset(meta);
    TrainConfig cfg = tiny_train_config(923);
    cfg.steps = 2;
    const fs::path dir = temp_dir("sweep_smoke");
    const auto rows = sweep(cfg, SweepAxis::kHscrVsResidual, {"residual", "hscr"}, ds, ds, dir);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].label == "residual");
    CHECK(rows[1].label == "hscr");
    const std::string table = format_sweep_table("hscr_vs_residual", rows);
    CHECK(table.find("residual") != std::string::npos);
    CHECK(table.find("MPJPE") != std::string::npos);
    const auto j = sweep_to_json("hscr_vs_residual", rows);
    CHECK(j["rows"].size() == 2);

    CHECK(default_sweep_values(SweepAxis::kMaskRatio).size() == 8);
    CHECK_THROWS_AS(sweep_axis_from_string("bogus"), UsageError);
}
