#pragma once

// Evaluation metrics (MPJPE, PA-MPJPE, MPVPE, Accel) and the masked velocity
// loss in its reference (non-differentiable) form. Positions are in meters;
// every metric reports millimeters.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "glot/core.hpp"
#include "glot/geometry.hpp"

#include <json.hpp>

namespace glot {

struct SimilarityTransform {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

// Umeyama similarity alignment: argmin over (s, R, t) of sum |s R x + t - y|^2,
// with the reflection excluded by flipping the smallest singular direction.
inline SimilarityTransform procrustes_align(const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
    if (x.size() != y.size()) throw ShapeMismatch("procrustes_align: cloud sizes differ");
    const std::size_t n = x.size();
    if (n < 3) throw DegenerateCloud("procrustes_align: need at least 3 points");

    Vec3 mx = Vec3::Zero(), my = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);

    double var_x = 0.0;
    Mat3 cov = Mat3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 dx = x[i] - mx;
        const Vec3 dy = y[i] - my;
        var_x += dx.squaredNorm();
        cov += dy * dx.transpose();
    }
    var_x /= static_cast<double>(n);
    cov /= static_cast<double>(n);
    if (var_x < 1e-18) throw DegenerateCloud("procrustes_align: source cloud has zero variance");

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    Mat3 v = svd.matrixV();
    Vec3 d = svd.singularValues();
    Vec3 sign_fix = Vec3::Ones();
    if (u.determinant() * v.determinant() < 0.0) sign_fix.z() = -1.0;

    SimilarityTransform out;
    out.rotation = u * sign_fix.asDiagonal() * v.transpose();
    out.scale = (d.x() * sign_fix.x() + d.y() * sign_fix.y() + d.z() * sign_fix.z()) / var_x;
    out.translation = my - out.scale * (out.rotation * mx);
    return out;
}

namespace detail {
inline void check_cloud_pair(const std::vector<Vec3>& a, const std::vector<Vec3>& b, const char* op) {
    if (a.size() != b.size()) throw ShapeMismatch(std::string(op) + ": cloud sizes differ");
    if (a.empty()) throw ShapeMismatch(std::string(op) + ": empty clouds");
}
}  // namespace detail

// Root-aligned (joint 0) mean per-joint position error, in mm.
inline double mpjpe(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    detail::check_cloud_pair(pred, gt, "mpjpe");
    const Vec3 pr = pred[0];
    const Vec3 gr = gt[0];
    double acc = 0.0;
    for (std::size_t j = 0; j < pred.size(); ++j) acc += ((pred[j] - pr) - (gt[j] - gr)).norm();
    return acc / static_cast<double>(pred.size()) * 1000.0;
}

// Mean joint error after optimal similarity alignment of pred onto gt, in mm.
inline double pa_mpjpe(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    detail::check_cloud_pair(pred, gt, "pa_mpjpe");
    const SimilarityTransform t = procrustes_align(pred, gt);
    double acc = 0.0;
    for (std::size_t j = 0; j < pred.size(); ++j) acc += (t.apply(pred[j]) - gt[j]).norm();
    return acc / static_cast<double>(pred.size()) * 1000.0;
}

// Mean per-vertex error, in mm. Root alignment (joint-0 translation) is the
// caller's responsibility, matching how the evaluation loop uses it.
inline double mpvpe(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    detail::check_cloud_pair(pred, gt, "mpvpe");
    double acc = 0.0;
    for (std::size_t v = 0; v < pred.size(); ++v) acc += (pred[v] - gt[v]).norm();
    return acc / static_cast<double>(pred.size()) * 1000.0;
}

// Mean discrepancy of second finite differences over interior frames, in
// mm/frame^2, or mm/s^2 when fps is given. Sequences are T x J x 3.
inline double accel_error(const std::vector<std::vector<Vec3>>& pred,
                          const std::vector<std::vector<Vec3>>& gt,
                          std::optional<double> fps = std::nullopt) {
    if (pred.size() != gt.size()) throw ShapeMismatch("accel_error: sequence lengths differ");
    const std::size_t t_len = pred.size();
    if (t_len < 3) throw SequenceTooShort("accel_error: needs at least 3 frames");
    const std::size_t n_joints = pred[0].size();
    double acc = 0.0;
    for (std::size_t t = 1; t + 1 < t_len; ++t) {
        if (pred[t].size() != n_joints || gt[t].size() != n_joints)
            throw ShapeMismatch("accel_error: joint counts differ");
        for (std::size_t j = 0; j < n_joints; ++j) {
            const Vec3 ap = pred[t + 1][j] - 2.0 * pred[t][j] + pred[t - 1][j];
            const Vec3 ag = gt[t + 1][j] - 2.0 * gt[t][j] + gt[t - 1][j];
            acc += (ap - ag).norm();
        }
    }
    double result = acc / static_cast<double>((t_len - 2) * n_joints) * 1000.0;
    if (fps) result *= (*fps) * (*fps);
    return result;
}

// Per-interior-frame accel values (same convention as accel_error); useful
// for per-frame reports.
inline std::vector<double> accel_error_per_frame(const std::vector<std::vector<Vec3>>& pred,
                                                 const std::vector<std::vector<Vec3>>& gt,
                                                 std::optional<double> fps = std::nullopt) {
    if (pred.size() != gt.size()) throw ShapeMismatch("accel_error: sequence lengths differ");
    const std::size_t t_len = pred.size();
    if (t_len < 3) throw SequenceTooShort("accel_error: needs at least 3 frames");
    const std::size_t n_joints = pred[0].size();
    const double scale = fps ? (*fps) * (*fps) : 1.0;
    std::vector<double> out;
    out.reserve(t_len - 2);
    for (std::size_t t = 1; t + 1 < t_len; ++t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n_joints; ++j) {
            const Vec3 ap = pred[t + 1][j] - 2.0 * pred[t][j] + pred[t - 1][j];
            const Vec3 ag = gt[t + 1][j] - 2.0 * gt[t][j] + gt[t - 1][j];
            acc += (ap - ag).norm();
        }
        out.push_back(acc / static_cast<double>(n_joints) * 1000.0 * scale);
    }
    return out;
}

// Binary per-pair mask for the velocity losses; entry t gates the (t, t+1)
// frame pair and is 1 exactly when frame t is masked.
struct MaskVector {
    std::vector<double> m;  // length T-1, entries in {0, 1}

    void validate() const {
        for (double v : m)
            if (v != 0.0 && v != 1.0) throw Error("mask vector entries must be binary");
    }
};

// Masked velocity discrepancy: sum over gated frame pairs and joints of the
// Euclidean norm of the velocity difference. jt/gt are T x J x D with D in
// {2, 3}; rows are flattened J*D doubles.
inline double velocity_loss(const std::vector<std::vector<double>>& jt,
                            const std::vector<std::vector<double>>& gt, int point_dim,
                            const MaskVector& mask) {
    if (point_dim != 2 && point_dim != 3) throw ShapeMismatch("velocity_loss: D must be 2 or 3");
    if (jt.size() != gt.size()) throw ShapeMismatch("velocity_loss: sequence lengths differ");
    const std::size_t t_len = jt.size();
    if (mask.m.size() + 1 != t_len) throw ShapeMismatch("velocity_loss: mask length must be T-1");
    mask.validate();
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < t_len; ++t) {
        if (mask.m[t] == 0.0) continue;
        if (jt[t].size() != gt[t].size() || jt[t + 1].size() != gt[t + 1].size() ||
            jt[t].size() != jt[t + 1].size() || jt[t].size() % point_dim != 0)
            throw ShapeMismatch("velocity_loss: frame widths differ");
        const std::size_t n_joints = jt[t].size() / point_dim;
        for (std::size_t j = 0; j < n_joints; ++j) {
            double sq = 0.0;
            for (int c = 0; c < point_dim; ++c) {
                const std::size_t idx = j * point_dim + c;
                const double dv = (jt[t + 1][idx] - jt[t][idx]) - (gt[t + 1][idx] - gt[t][idx]);
                sq += dv * dv;
            }
            total += mask.m[t] * std::sqrt(sq);
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Metric report
// ---------------------------------------------------------------------------

struct MetricReport {
    double mpjpe = 0.0;
    double pa_mpjpe = 0.0;
    double mpvpe = 0.0;
    double accel = 0.0;
    std::size_t n_frames = 0;
    // Parallel per-frame traces; accel has two fewer entries per sequence.
    std::vector<double> per_frame_mpjpe;
    std::vector<double> per_frame_pa_mpjpe;
    std::vector<double> per_frame_mpvpe;
    std::vector<double> per_frame_accel;

    static double mean(const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    }

    void finalize() {
        mpjpe = mean(per_frame_mpjpe);
        pa_mpjpe = mean(per_frame_pa_mpjpe);
        mpvpe = mean(per_frame_mpvpe);
        accel = mean(per_frame_accel);
        n_frames = per_frame_mpjpe.size();
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"mpjpe", mpjpe},
                              {"pa_mpjpe", pa_mpjpe},
                              {"mpvpe", mpvpe},
                              {"accel", accel},
                              {"n_frames", n_frames},
                              {"per_frame",
                               {{"mpjpe", per_frame_mpjpe},
                                {"pa_mpjpe", per_frame_pa_mpjpe},
                                {"mpvpe", per_frame_mpvpe},
                                {"accel", per_frame_accel}}}};
    }

    std::string to_text() const {
        char buf[256];
        std::string out;
        std::snprintf(buf, sizeof(buf), "frames    %zu\n", n_frames);
        out += buf;
        std::snprintf(buf, sizeof(buf), "mpjpe     %.4f mm\n", mpjpe);
        out += buf;
        std::snprintf(buf, sizeof(buf), "pa-mpjpe  %.4f mm\n", pa_mpjpe);
        out += buf;
        std::snprintf(buf, sizeof(buf), "mpvpe     %.4f mm\n", mpvpe);
        out += buf;
        std::snprintf(buf, sizeof(buf), "accel     %.4f mm/frame^2\n", accel);
        out += buf;
        return out;
    }
};

}  // namespace glot
