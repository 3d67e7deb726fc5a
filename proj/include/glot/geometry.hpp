#pragma once

// Rotation representations, the 24-joint kinematic tree, a procedural body
// model, forward kinematics, linear-blend skinning, and weak-perspective
// projection. Everything here is a pure function of its inputs; the
// differentiable mirror used inside the network lives in diffgeo.hpp.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "glot/core.hpp"

namespace glot {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

constexpr int kNumJoints = 24;
constexpr int kShapeDims = 10;
constexpr int kPoseDims = kNumJoints * 6;   // 144
constexpr int kThetaDims = kPoseDims + kShapeDims + 3;  // 157, flattened (theta, beta, phi)

// 6D rotation: the first two columns of a rotation matrix, flattened
// column-major (r[0..2] = first column, r[3..5] = second column).
struct Rot6d {
    std::array<double, 6> r{1, 0, 0, 0, 1, 0};

    static Rot6d identity() { return Rot6d{}; }
};

inline Mat3 rot6d_to_matrix(const Rot6d& r) {
    const Vec3 a1(r.r[0], r.r[1], r.r[2]);
    const Vec3 a2(r.r[3], r.r[4], r.r[5]);
    for (int i = 0; i < 6; ++i)
        if (!std::isfinite(r.r[i])) throw DegenerateRotation("non-finite 6d input");
    const double n1 = a1.norm();
    if (n1 <= 1e-8) throw DegenerateRotation("first 6d column has near-zero norm");
    const Vec3 b1 = a1 / n1;
    const Vec3 u2 = a2 - a2.dot(b1) * b1;
    const double n2 = u2.norm();
    if (n2 <= 1e-8) throw DegenerateRotation("6d columns are near-parallel");
    const Vec3 b2 = u2 / n2;
    const Vec3 b3 = b1.cross(b2);
    Mat3 rot;
    rot.col(0) = b1;
    rot.col(1) = b2;
    rot.col(2) = b3;
    return rot;
}

inline Rot6d matrix_to_rot6d(const Mat3& m) {
    Rot6d r;
    for (int i = 0; i < 3; ++i) {
        r.r[i] = m(i, 0);
        r.r[3 + i] = m(i, 1);
    }
    return r;
}

inline bool is_rotation_matrix(const Mat3& m, double tol = 1e-6) {
    const double ortho = (m.transpose() * m - Mat3::Identity()).norm();
    return ortho < tol && std::abs(m.determinant() - 1.0) < tol;
}

inline Mat3 skew_symmetric(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

// Rodrigues formula.
inline Mat3 axis_angle_to_matrix(const Vec3& aa) {
    const double angle = aa.norm();
    if (angle < 1e-12) return Mat3::Identity() + skew_symmetric(aa);
    const Vec3 axis = aa / angle;
    Mat3 k = skew_symmetric(axis);
    return Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * (k * k);
}

// ---------------------------------------------------------------------------
// Kinematic tree
// ---------------------------------------------------------------------------

struct KinematicTree {
    std::array<int, kNumJoints> parent{};

    void validate() const {
        if (parent[0] != -1) throw TopologyError("joint 0 must be the root");
        for (int j = 1; j < kNumJoints; ++j) {
            if (parent[j] < 0 || parent[j] >= j)
                throw TopologyError("parent[" + std::to_string(j) + "] must be a smaller index");
        }
    }
};

// The canonical 24-joint parent table used by SMPL-family body models.
inline KinematicTree standard_kinematic_tree() {
    KinematicTree tree;
    constexpr std::array<int, kNumJoints> parents = {-1, 0, 0, 0, 1,  2,  3,  4,  5,  6,  7,  8,
                                                     9,  9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
    tree.parent = parents;
    return tree;
}

// Root-to-parent ancestor chain, root first, excluding j itself.
inline std::vector<int> ancestors(const KinematicTree& tree, int j) {
    if (j < 0 || j >= kNumJoints) throw IndexOutOfRange("ancestors: joint " + std::to_string(j));
    std::vector<int> chain;
    for (int p = tree.parent[j]; p != -1; p = tree.parent[p]) chain.push_back(p);
    std::reverse(chain.begin(), chain.end());
    return chain;
}

// ---------------------------------------------------------------------------
// Procedural body model
// ---------------------------------------------------------------------------

struct BodyModel {
    KinematicTree tree;
    int n_vertices = 0;
    // Joints: 24 x 3 rest positions plus 10 x 24 x 3 shape offsets.
    std::vector<Vec3> template_joints;                // 24
    std::vector<std::array<Vec3, kNumJoints>> shape_basis_joints;  // 10
    // Vertices: V x 3 rest positions plus 10 x V x 3 shape offsets.
    std::vector<Vec3> template_vertices;
    std::vector<std::vector<Vec3>> shape_basis_vertices;  // 10 x V
    // V x 24 convex weights, row-major.
    std::vector<double> skin_weights;

    double skin_weight(int v, int j) const { return skin_weights[static_cast<std::size_t>(v) * kNumJoints + j]; }
};

namespace detail {
inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 < 1e-18) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}
}  // namespace detail

// Deterministic procedural stand-in for a licensed body asset: the canonical
// parent table, seeded limb geometry, vertices scattered around bones, and
// skin weights from a softmax over negative bone distances.
inline BodyModel build_body_model(std::uint64_t seed, int n_vertices = 108) {
    BodyModel body;
    body.tree = standard_kinematic_tree();
    body.n_vertices = n_vertices;
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);

    body.template_joints.resize(kNumJoints);
    body.template_joints[0] = Vec3::Zero();
    for (int j = 1; j < kNumJoints; ++j) {
        const double len = rng.uniform(0.08, 0.45);
        Vec3 dir(rng.normal(), rng.normal(), rng.normal());
        double n = dir.norm();
        if (n < 1e-9) {
            dir = Vec3(0, 0, 1);
            n = 1.0;
        }
        body.template_joints[j] = body.template_joints[body.tree.parent[j]] + dir / n * len;
    }

    body.shape_basis_joints.resize(kShapeDims);
    for (int k = 0; k < kShapeDims; ++k) {
        body.shape_basis_joints[k][0] = Vec3::Zero();
        for (int j = 1; j < kNumJoints; ++j)
            body.shape_basis_joints[k][j] =
                Vec3(rng.normal(0.0, 0.005), rng.normal(0.0, 0.005), rng.normal(0.0, 0.005));
    }

    body.template_vertices.resize(n_vertices);
    for (int v = 0; v < n_vertices; ++v) {
        // Spread vertices evenly over bones, then jitter radially.
        const int j = 1 + static_cast<int>(rng.uniform_int(kNumJoints - 1));
        const Vec3& a = body.template_joints[body.tree.parent[j]];
        const Vec3& b = body.template_joints[j];
        const double t = rng.uniform();
        const Vec3 radial(rng.normal(0.0, 0.03), rng.normal(0.0, 0.03), rng.normal(0.0, 0.03));
        body.template_vertices[v] = a + t * (b - a) + radial;
    }

    body.shape_basis_vertices.assign(kShapeDims, std::vector<Vec3>(n_vertices));
    for (int k = 0; k < kShapeDims; ++k)
        for (int v = 0; v < n_vertices; ++v)
            body.shape_basis_vertices[k][v] =
                Vec3(rng.normal(0.0, 0.005), rng.normal(0.0, 0.005), rng.normal(0.0, 0.005));

    body.skin_weights.assign(static_cast<std::size_t>(n_vertices) * kNumJoints, 0.0);
    const double tau = 0.05;
    for (int v = 0; v < n_vertices; ++v) {
        double z = 0.0;
        std::array<double, kNumJoints> w{};
        for (int j = 0; j < kNumJoints; ++j) {
            double d;
            if (j == 0) {
                d = (body.template_vertices[v] - body.template_joints[0]).norm();
            } else {
                d = detail::point_segment_distance(body.template_vertices[v],
                                                   body.template_joints[body.tree.parent[j]],
                                                   body.template_joints[j]);
            }
            w[j] = std::exp(-d / tau);
            z += w[j];
        }
        for (int j = 0; j < kNumJoints; ++j)
            body.skin_weights[static_cast<std::size_t>(v) * kNumJoints + j] = w[j] / z;
    }
    return body;
}

// ---------------------------------------------------------------------------
// Forward kinematics and skinning
// ---------------------------------------------------------------------------

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

struct JointSet {
    std::array<Vec3, kNumJoints> positions;
    // Vertex-space transforms: map a rest-pose point to its posed location.
    std::array<RigidTransform, kNumJoints> transforms;
};

inline std::vector<Vec3> shaped_rest_joints(const BodyModel& body, const std::array<double, kShapeDims>& beta) {
    std::vector<Vec3> rest(body.template_joints);
    for (int k = 0; k < kShapeDims; ++k)
        for (int j = 0; j < kNumJoints; ++j) rest[j] += beta[k] * body.shape_basis_joints[k][j];
    return rest;
}

inline std::vector<Vec3> shaped_rest_vertices(const BodyModel& body, const std::array<double, kShapeDims>& beta) {
    std::vector<Vec3> rest(body.template_vertices);
    for (int k = 0; k < kShapeDims; ++k)
        for (int v = 0; v < body.n_vertices; ++v) rest[v] += beta[k] * body.shape_basis_vertices[k][v];
    return rest;
}

inline JointSet forward_kinematics(const BodyModel& body, const std::array<Mat3, kNumJoints>& pose,
                                   const std::array<double, kShapeDims>& beta) {
    const std::vector<Vec3> rest = shaped_rest_joints(body, beta);
    JointSet out;
    std::array<Mat3, kNumJoints> global;
    // Positions are accumulated as displacements from the rest pose so that
    // an identity pose reproduces the rest joints bit-exactly.
    std::array<Vec3, kNumJoints> disp;
    global[0] = pose[0];
    disp[0] = Vec3::Zero();
    out.positions[0] = rest[0];
    for (int j = 1; j < kNumJoints; ++j) {
        const int p = body.tree.parent[j];
        global[j] = global[p] * pose[j];
        disp[j] = disp[p] + (global[p] - Mat3::Identity()) * (rest[j] - rest[p]);
        out.positions[j] = rest[j] + disp[j];
    }
    for (int j = 0; j < kNumJoints; ++j) {
        out.transforms[j].rotation = global[j];
        out.transforms[j].translation = out.positions[j] - global[j] * rest[j];
    }
    return out;
}

inline std::vector<Vec3> skin_vertices(const BodyModel& body,
                                       const std::array<RigidTransform, kNumJoints>& transforms,
                                       const std::array<double, kShapeDims>& beta) {
    const std::vector<Vec3> rest = shaped_rest_vertices(body, beta);
    std::vector<Vec3> out(body.n_vertices, Vec3::Zero());
    // Blend in displacement form, v + sum w (T(v) - v); with convex weights
    // this equals sum w T(v) and keeps the rest pose bit-exact.
    for (int v = 0; v < body.n_vertices; ++v) {
        Vec3 acc = Vec3::Zero();
        for (int j = 0; j < kNumJoints; ++j) {
            const double w = body.skin_weight(v, j);
            if (w == 0.0) continue;
            acc += w * (transforms[j].apply(rest[v]) - rest[v]);
        }
        out[v] = rest[v] + acc;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weak-perspective projection
// ---------------------------------------------------------------------------

struct CameraParams {
    double s = 1.0;
    double tx = 0.0;
    double ty = 0.0;
};

inline Vec2 project_point_weak_perspective(const Vec3& p, const CameraParams& cam) {
    if (!(cam.s > 0.0)) throw Error("weak-perspective scale must be positive");
    return Vec2(cam.s * p.x() + cam.tx, cam.s * p.y() + cam.ty);
}

inline std::array<Vec2, kNumJoints> project_weak_perspective(const JointSet& joints,
                                                             const CameraParams& cam) {
    std::array<Vec2, kNumJoints> out;
    for (int j = 0; j < kNumJoints; ++j) out[j] = project_point_weak_perspective(joints.positions[j], cam);
    return out;
}

}  // namespace glot
