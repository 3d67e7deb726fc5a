#include <catch2/catch_amalgamated.hpp>

#include "glot/diffgeo.hpp"
#include "glot/geometry.hpp"
#include "test_helpers.hpp"

using namespace glot;

namespace {

Rot6d random_rot6d(Rng& rng) {
    const Vec3 aa(rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5));
    return matrix_to_rot6d(axis_angle_to_matrix(aa));
}

std::array<Mat3, kNumJoints> random_pose(Rng& rng, double amplitude = 1.5) {
    std::array<Mat3, kNumJoints> pose;
    for (auto& r : pose) {
        const Vec3 aa(rng.uniform(-amplitude, amplitude), rng.uniform(-amplitude, amplitude),
                      rng.uniform(-amplitude, amplitude));
        r = axis_angle_to_matrix(aa);
    }
    return pose;
}

std::array<double, kShapeDims> random_beta(Rng& rng) {
    std::array<double, kShapeDims> b{};
    for (auto& x : b) x = rng.uniform(-2.0, 2.0);
    return b;
}

// Independent chain-multiplication oracle: walk the explicit root-to-joint
// chain and accumulate homogeneous transforms left to right.
struct ChainOracle {
    Mat3 rotation;
    Vec3 position;
};

ChainOracle chain_oracle(const BodyModel& body, const std::array<Mat3, kNumJoints>& pose,
                         const std::array<double, kShapeDims>& beta, int joint) {
    const std::vector<Vec3> rest = shaped_rest_joints(body, beta);
    std::vector<int> chain = ancestors(body.tree, joint);
    chain.push_back(joint);
    Mat3 rot = Mat3::Identity();
    Vec3 pos = Vec3::Zero();
    for (int j : chain) {
        const int p = body.tree.parent[j];
        const Vec3 offset = p < 0 ? rest[j] : Vec3(rest[j] - rest[p]);
        pos = rot * offset + pos;
        rot = rot * pose[j];
    }
    return {rot, pos};
}

}  // namespace

TEST_CASE("rot6d identity and axis permutation cases") {
    const Mat3 eye = rot6d_to_matrix(Rot6d{{1, 0, 0, 0, 1, 0}});
    CHECK((eye - Mat3::Identity()).norm() < 1e-12);

    // 90 degree rotation about z: columns (0,1,0), (-1,0,0), (0,0,1).
    const Mat3 r = rot6d_to_matrix(Rot6d{{0, 1, 0, -1, 0, 0}});
    Mat3 expect;
    expect << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    CHECK((r - expect).norm() < 1e-12);

    const Rot6d back = matrix_to_rot6d(expect);
    for (int i = 0; i < 6; ++i) CHECK(back.r[i] == Catch::Approx(Rot6d{{0, 1, 0, -1, 0, 0}}.r[i]).margin(1e-12));

    const Rot6d id6 = matrix_to_rot6d(Mat3::Identity());
    CHECK(id6.r == std::array<double, 6>{1, 0, 0, 0, 1, 0});
}

TEST_CASE("rot6d conversion is orthonormal over seeded samples") {
    Rng rng(101);
    double worst_ortho = 0.0, worst_det = 0.0;
    for (int i = 0; i < 10000; ++i) {
        Rot6d r;
        for (auto& x : r.r) x = rng.uniform(-2.0, 2.0);
        const Vec3 a1(r.r[0], r.r[1], r.r[2]);
        const Vec3 a2(r.r[3], r.r[4], r.r[5]);
        if (a1.norm() < 1e-3 || a1.cross(a2).norm() < 1e-3) continue;
        const Mat3 m = rot6d_to_matrix(r);
        worst_ortho = std::max(worst_ortho, (m.transpose() * m - Mat3::Identity()).norm());
        worst_det = std::max(worst_det, std::abs(m.determinant() - 1.0));
    }
    CHECK(worst_ortho < 1e-6);
    CHECK(worst_det < 1e-6);
}

TEST_CASE("rot6d round-trip on random rotations") {
    Rng rng(102);
    for (int i = 0; i < 2000; ++i) {
        const Rot6d r = random_rot6d(rng);
        const Mat3 m = rot6d_to_matrix(r);
        const Rot6d r2 = matrix_to_rot6d(m);
        const Mat3 m2 = rot6d_to_matrix(r2);
        CHECK((m - m2).norm() < 1e-6);
        for (int c = 0; c < 6; ++c) CHECK(std::abs(r.r[c] - r2.r[c]) < 1e-6);
    }
}

TEST_CASE("degenerate rot6d inputs raise") {
    CHECK_THROWS_AS(rot6d_to_matrix(Rot6d{{0, 0, 0, 0, 1, 0}}), DegenerateRotation);
    CHECK_THROWS_AS(rot6d_to_matrix(Rot6d{{1, 0, 0, 2, 0, 0}}), DegenerateRotation);
    CHECK_THROWS_AS(rot6d_to_matrix(Rot6d{{1, 0, 0, 0, std::nan(""), 0}}), DegenerateRotation);
}

TEST_CASE("ancestors walk the fixed parent table") {
    const KinematicTree tree = standard_kinematic_tree();
    CHECK(ancestors(tree, 0).empty());
    CHECK(ancestors(tree, 1) == std::vector<int>{0});
    CHECK(ancestors(tree, 10) == std::vector<int>{0, 1, 4, 7});
    CHECK_THROWS_AS(ancestors(tree, 24), IndexOutOfRange);
    CHECK_THROWS_AS(ancestors(tree, -1), IndexOutOfRange);
    for (int j = 1; j < kNumJoints; ++j) CHECK(tree.parent[j] < j);
}

TEST_CASE("body model construction is deterministic and convex") {
    const BodyModel a = build_body_model(0);
    const BodyModel b = build_body_model(0);
    CHECK(a.skin_weights == b.skin_weights);
    for (int j = 0; j < kNumJoints; ++j) CHECK(a.template_joints[j] == b.template_joints[j]);
    CHECK(ancestors(a.tree, 10) == std::vector<int>{0, 1, 4, 7});

    const BodyModel c = build_body_model(7, 64);
    for (int v = 0; v < c.n_vertices; ++v) {
        double rowsum = 0.0;
        for (int j = 0; j < kNumJoints; ++j) {
            CHECK(c.skin_weight(v, j) >= 0.0);
            rowsum += c.skin_weight(v, j);
        }
        CHECK(std::abs(rowsum - 1.0) < 1e-9);
    }
    // limb lengths stay inside the documented band
    for (int j = 1; j < kNumJoints; ++j) {
        const double len = (c.template_joints[j] - c.template_joints[c.tree.parent[j]]).norm();
        CHECK(len >= 0.05);
        CHECK(len <= 0.6);
    }
}

TEST_CASE("forward kinematics identity and rigid root rotation") {
    const BodyModel body = build_body_model(3);
    std::array<Mat3, kNumJoints> pose;
    pose.fill(Mat3::Identity());
    std::array<double, kShapeDims> beta{};

    const JointSet rest = forward_kinematics(body, pose, beta);
    for (int j = 0; j < kNumJoints; ++j)
        CHECK((rest.positions[j] - body.template_joints[j]).norm() < 1e-12);

    Mat3 rz;
    rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    pose[0] = rz;
    const JointSet rotated = forward_kinematics(body, pose, beta);
    for (int j = 0; j < kNumJoints; ++j) {
        const Vec3 expected = body.template_joints[0] + rz * (body.template_joints[j] - body.template_joints[0]);
        CHECK((rotated.positions[j] - expected).norm() < 1e-12);
    }
}

TEST_CASE("forward kinematics matches the chain-product oracle") {
    const BodyModel body = build_body_model(4);
    Rng rng(103);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pose = random_pose(rng);
        const auto beta = random_beta(rng);
        const JointSet fk = forward_kinematics(body, pose, beta);
        for (int j = 0; j < kNumJoints; ++j) {
            const ChainOracle oracle = chain_oracle(body, pose, beta, j);
            CHECK((fk.positions[j] - oracle.position).norm() < 1e-9);
            CHECK((fk.transforms[j].rotation - oracle.rotation).norm() < 1e-9);
        }
    }
}

TEST_CASE("fk composition invariant holds against parent transforms") {
    const BodyModel body = build_body_model(5);
    Rng rng(104);
    const auto pose = random_pose(rng);
    const auto beta = random_beta(rng);
    const JointSet fk = forward_kinematics(body, pose, beta);
    const std::vector<Vec3> rest = shaped_rest_joints(body, beta);
    for (int j = 1; j < kNumJoints; ++j) {
        const int p = body.tree.parent[j];
        const Mat3 composed = fk.transforms[p].rotation * pose[j];
        CHECK((fk.transforms[j].rotation - composed).norm() < 1e-9);
        const Vec3 via_parent = fk.positions[p] + fk.transforms[p].rotation * (rest[j] - rest[p]);
        CHECK((fk.positions[j] - via_parent).norm() < 1e-9);
    }
}

TEST_CASE("skinning reproduces the template and rigid motions") {
    const BodyModel body = build_body_model(6, 50);
    std::array<Mat3, kNumJoints> pose;
    pose.fill(Mat3::Identity());
    std::array<double, kShapeDims> beta{};
    const JointSet rest = forward_kinematics(body, pose, beta);
    const std::vector<Vec3> verts = skin_vertices(body, rest.transforms, beta);
    for (int v = 0; v < body.n_vertices; ++v)
        CHECK((verts[v] - body.template_vertices[v]).norm() == 0.0);

    // A rigid root motion moves every vertex rigidly (weights sum to one).
    Rng rng(105);
    const Mat3 r0 = axis_angle_to_matrix(Vec3(0.3, -1.2, 0.7));
    pose[0] = r0;
    const JointSet posed = forward_kinematics(body, pose, beta);
    const std::vector<Vec3> moved = skin_vertices(body, posed.transforms, beta);
    const Vec3 pivot = body.template_joints[0];
    for (int v = 0; v < body.n_vertices; ++v) {
        const Vec3 expected = pivot + r0 * (body.template_vertices[v] - pivot);
        CHECK((moved[v] - expected).norm() < 1e-9);
    }
}

TEST_CASE("one-hot skin weights follow their joint transform exactly") {
    BodyModel body = build_body_model(8, 24);
    // re-assign one-hot weights: vertex v binds to joint v % 24
    std::fill(body.skin_weights.begin(), body.skin_weights.end(), 0.0);
    for (int v = 0; v < body.n_vertices; ++v)
        body.skin_weights[static_cast<std::size_t>(v) * kNumJoints + (v % kNumJoints)] = 1.0;
    Rng rng(106);
    const auto pose = random_pose(rng);
    const auto beta = random_beta(rng);
    const JointSet fk = forward_kinematics(body, pose, beta);
    const std::vector<Vec3> rest = shaped_rest_vertices(body, beta);
    const std::vector<Vec3> skinned = skin_vertices(body, fk.transforms, beta);
    for (int v = 0; v < body.n_vertices; ++v) {
        const Vec3 expected = fk.transforms[v % kNumJoints].apply(rest[v]);
        CHECK((skinned[v] - expected).norm() < 1e-12);
    }
}

TEST_CASE("weak perspective projection") {
    const BodyModel body = build_body_model(9);
    std::array<Mat3, kNumJoints> pose;
    pose.fill(Mat3::Identity());
    std::array<double, kShapeDims> beta{};
    const JointSet joints = forward_kinematics(body, pose, beta);

    const auto p1 = project_weak_perspective(joints, CameraParams{1.0, 0.0, 0.0});
    for (int j = 0; j < kNumJoints; ++j) {
        CHECK(p1[j].x() == Catch::Approx(joints.positions[j].x()).margin(1e-12));
        CHECK(p1[j].y() == Catch::Approx(joints.positions[j].y()).margin(1e-12));
    }

    const Vec2 p = project_point_weak_perspective(Vec3(0.5, -0.5, 3.0), CameraParams{2.0, 1.0, 1.0});
    CHECK(p.x() == Catch::Approx(2.0).margin(1e-12));
    CHECK(p.y() == Catch::Approx(0.0).margin(1e-12));

    CHECK_THROWS_AS(project_point_weak_perspective(Vec3(0, 0, 0), CameraParams{0.0, 0, 0}), Error);

    // Doubling the scale doubles the centered 2D spread for any translation.
    Rng rng(107);
    for (int trial = 0; trial < 20; ++trial) {
        const double s = rng.uniform(0.5, 2.0), tx = rng.uniform(-1, 1), ty = rng.uniform(-1, 1);
        const Vec3 a(rng.normal(), rng.normal(), rng.normal());
        const Vec3 b(rng.normal(), rng.normal(), rng.normal());
        const Vec2 d1 = project_point_weak_perspective(a, {s, tx, ty}) -
                        project_point_weak_perspective(b, {s, tx, ty});
        const Vec2 d2 = project_point_weak_perspective(a, {2 * s, tx, ty}) -
                        project_point_weak_perspective(b, {2 * s, tx, ty});
        CHECK((d2 - 2.0 * d1).norm() < 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Differentiable mirror
// ---------------------------------------------------------------------------

TEST_CASE("tensor rot6d path matches the reference conversion") {
    Rng rng(108);
    const int n = 40;
    std::vector<double> flat(n * 6);
    std::vector<Rot6d> refs(n);
    for (int i = 0; i < n; ++i) {
        refs[i] = random_rot6d(rng);
        for (int c = 0; c < 6; ++c) flat[i * 6 + c] = refs[i].r[c];
    }
    Tensor mats = rot6d_rows_to_matrices(Tensor::from_values({n, 6}, flat));
    for (int i = 0; i < n; ++i) {
        const Mat3 expect = rot6d_to_matrix(refs[i]);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                CHECK(mats.values()[i * 9 + r * 3 + c] == Catch::Approx(expect(r, c)).margin(1e-12));
    }
}

TEST_CASE("tensor fk path matches the reference forward kinematics") {
    const BodyModel body = build_body_model(11, 30);
    const BodyConstants bc = BodyConstants::build(body);
    Rng rng(109);
    const int frames = 5;
    std::vector<double> theta_flat(frames * kPoseDims);
    std::vector<double> beta_flat(frames * kShapeDims);
    std::vector<std::array<Mat3, kNumJoints>> poses(frames);
    std::vector<std::array<double, kShapeDims>> betas(frames);
    for (int f = 0; f < frames; ++f) {
        poses[f] = random_pose(rng);
        betas[f] = random_beta(rng);
        for (int j = 0; j < kNumJoints; ++j) {
            const Rot6d r6 = matrix_to_rot6d(poses[f][j]);
            for (int c = 0; c < 6; ++c) theta_flat[(f * kNumJoints + j) * 6 + c] = r6.r[c];
        }
        for (int k = 0; k < kShapeDims; ++k) beta_flat[f * kShapeDims + k] = betas[f][k];
    }
    Tensor theta = Tensor::from_values({frames, kPoseDims}, theta_flat);
    Tensor beta = Tensor::from_values({frames, kShapeDims}, beta_flat);
    Tensor rotmats = reshape(rot6d_rows_to_matrices(reshape(theta, {frames * kNumJoints, 6})),
                             {frames, kNumJoints * 9});
    Tensor pos = fk_positions(bc, rotmats, beta);
    for (int f = 0; f < frames; ++f) {
        const JointSet ref = forward_kinematics(body, poses[f], betas[f]);
        for (int j = 0; j < kNumJoints; ++j)
            for (int c = 0; c < 3; ++c)
                CHECK(pos.values()[(static_cast<std::size_t>(f) * kNumJoints + j) * 3 + c] ==
                      Catch::Approx(ref.positions[j][c]).margin(1e-9));
    }

    // Projection mirror against the reference path.
    std::vector<double> phis = {1.3, 0.2, -0.4, 0.8, -0.1, 0.5, 1.0, 0.0, 0.0, 2.0, 1.0, -1.0, 0.7, 0.3, 0.9};
    Tensor phi = Tensor::from_values({frames, 3}, phis);
    Tensor p2d = project_positions(pos, phi);
    for (int f = 0; f < frames; ++f) {
        const JointSet ref = forward_kinematics(body, poses[f], betas[f]);
        const CameraParams cam{phis[f * 3], phis[f * 3 + 1], phis[f * 3 + 2]};
        const auto proj = project_weak_perspective(ref, cam);
        for (int j = 0; j < kNumJoints; ++j) {
            CHECK(p2d.values()[(static_cast<std::size_t>(f) * kNumJoints + j) * 2] ==
                  Catch::Approx(proj[j].x()).margin(1e-9));
            CHECK(p2d.values()[(static_cast<std::size_t>(f) * kNumJoints + j) * 2 + 1] ==
                  Catch::Approx(proj[j].y()).margin(1e-9));
        }
    }
}

TEST_CASE("joint positions differentiate w.r.t. 6d pose and shape") {
    const BodyModel body = build_body_model(12, 16);
    const BodyConstants bc = BodyConstants::build(body);
    Rng rng(110);
    const int frames = 2;
    std::vector<double> theta_flat(frames * kPoseDims);
    for (int f = 0; f < frames; ++f)
        for (int j = 0; j < kNumJoints; ++j) {
            const Rot6d r6 = random_rot6d(rng);
            for (int c = 0; c < 6; ++c) theta_flat[(f * kNumJoints + j) * 6 + c] = r6.r[c];
        }
    Tensor theta = Tensor::from_values({frames, kPoseDims}, theta_flat, true);
    Tensor beta = glot_test::random_tensor({frames, kShapeDims}, rng, 1.0);

    const double err = glot_test::fd_check(
        [&](const std::vector<Tensor>& in) {
            Tensor rm = reshape(rot6d_rows_to_matrices(reshape(in[0], {frames * kNumJoints, 6})),
                                {frames, kNumJoints * 9});
            return fk_positions(bc, rm, in[1]);
        },
        {theta, beta}, rng);
    CHECK(err < 1e-3);
}
