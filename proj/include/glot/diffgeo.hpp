#pragma once

// Differentiable mirrors of the geometry operations, written against the
// tape so joint/projection losses can backpropagate into the network. The
// plain-double versions in geometry.hpp stay the reference; consistency
// between the two is pinned by tests.

#include <vector>

#include "glot/geometry.hpp"
#include "glot/tensor.hpp"

namespace glot {

// N x 6 rows -> N x 9 row-major rotation matrices via Gram-Schmidt on the
// two encoded columns.
inline Tensor rot6d_rows_to_matrices(const Tensor& r6) {
    if (r6.cols() != 6) throw ShapeMismatch("rot6d_rows_to_matrices: expects N x 6");
    Tensor a1 = slice_cols(r6, 0, 3);
    Tensor a2 = slice_cols(r6, 3, 6);
    Tensor b1 = div_colvec(a1, rownorm(a1));
    Tensor u2 = sub(a2, mul_colvec(b1, rowdot(a2, b1)));
    Tensor b2 = div_colvec(u2, rownorm(u2));
    Tensor b3 = cross_rows(b1, b2);
    // Row-major [b1 b2 b3] columns.
    std::vector<Tensor> cols;
    cols.reserve(9);
    for (int row = 0; row < 3; ++row) {
        cols.push_back(slice_cols(b1, row, row + 1));
        cols.push_back(slice_cols(b2, row, row + 1));
        cols.push_back(slice_cols(b3, row, row + 1));
    }
    return concat_cols(cols);
}

// Constant tensors derived from a body model, shared across forward passes.
struct BodyConstants {
    Tensor template_row;   // 1 x 72 rest joints
    Tensor shape_basis;    // 10 x 72
    Tensor offset_map;     // 72 x 72: rest positions -> parent-relative offsets
    std::array<int, kNumJoints> parent{};

    static BodyConstants build(const BodyModel& body) {
        BodyConstants bc;
        bc.parent = body.tree.parent;
        std::vector<double> tmpl(kNumJoints * 3);
        for (int j = 0; j < kNumJoints; ++j)
            for (int c = 0; c < 3; ++c) tmpl[j * 3 + c] = body.template_joints[j][c];
        bc.template_row = Tensor::from_values({1, kNumJoints * 3}, std::move(tmpl));

        std::vector<double> basis(static_cast<std::size_t>(kShapeDims) * kNumJoints * 3);
        for (int k = 0; k < kShapeDims; ++k)
            for (int j = 0; j < kNumJoints; ++j)
                for (int c = 0; c < 3; ++c)
                    basis[(static_cast<std::size_t>(k) * kNumJoints + j) * 3 + c] =
                        body.shape_basis_joints[k][j][c];
        bc.shape_basis = Tensor::from_values({kShapeDims, kNumJoints * 3}, std::move(basis));

        std::vector<double> omap(static_cast<std::size_t>(kNumJoints * 3) * kNumJoints * 3, 0.0);
        const int d = kNumJoints * 3;
        for (int j = 0; j < kNumJoints; ++j)
            for (int c = 0; c < 3; ++c) {
                omap[static_cast<std::size_t>(j * 3 + c) * d + (j * 3 + c)] += 1.0;
                const int p = body.tree.parent[j];
                if (p >= 0) omap[static_cast<std::size_t>(p * 3 + c) * d + (j * 3 + c)] -= 1.0;
            }
        bc.offset_map = Tensor::from_values({d, d}, std::move(omap));
        return bc;
    }
};

// Forward kinematics over a batch of frames.
//   rotmats: N x 216 (24 row-major 3x3 blocks per row)
//   beta:    N x 10
// Returns N x 72 joint positions.
inline Tensor fk_positions(const BodyConstants& bc, const Tensor& rotmats, const Tensor& beta) {
    if (rotmats.cols() != kNumJoints * 9) throw ShapeMismatch("fk_positions: rotmats must be N x 216");
    if (beta.cols() != kShapeDims || beta.rows() != rotmats.rows())
        throw ShapeMismatch("fk_positions: beta shape");
    Tensor rest = add_rowvec(matmul(beta, bc.shape_basis), bc.template_row);
    Tensor offsets = matmul(rest, bc.offset_map);

    std::array<Tensor, kNumJoints> global_rot;
    std::array<Tensor, kNumJoints> position;
    for (int j = 0; j < kNumJoints; ++j) {
        Tensor local = slice_cols(rotmats, j * 9, j * 9 + 9);
        Tensor offset = slice_cols(offsets, j * 3, j * 3 + 3);
        if (j == 0) {
            global_rot[0] = local;
            position[0] = offset;
        } else {
            const int p = bc.parent[j];
            global_rot[j] = bmm3(global_rot[p], local);
            position[j] = add(position[p], matvec3(global_rot[p], offset));
        }
    }
    return concat_cols(std::vector<Tensor>(position.begin(), position.end()));
}

// Weak-perspective projection of N x 72 joints with N x 3 camera rows
// (s, tx, ty). Returns N x 48.
inline Tensor project_positions(const Tensor& joints, const Tensor& phi) {
    const int n = joints.rows();
    if (joints.cols() != kNumJoints * 3) throw ShapeMismatch("project_positions: joints must be N x 72");
    if (phi.rows() != n || phi.cols() != 3) throw ShapeMismatch("project_positions: phi must be N x 3");
    Tensor pts = reshape(joints, {n * kNumJoints, 3});
    Tensor xy = slice_cols(pts, 0, 2);
    Tensor s_rep = repeat_rows(slice_cols(phi, 0, 1), kNumJoints);
    Tensor t_rep = repeat_rows(slice_cols(phi, 1, 3), kNumJoints);
    Tensor projected = add(mul_colvec(xy, s_rep), t_rep);
    return reshape(projected, {n, kNumJoints * 2});
}

}  // namespace glot
