#include <catch2/catch_amalgamated.hpp>

#include "glot/tensor.hpp"
#include "test_helpers.hpp"

using namespace glot;
using glot_test::fd_check;
using glot_test::random_tensor;

TEST_CASE("elementwise ops match finite differences") {
    Rng rng(7);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({3, 4}, rng);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return add(in[0], in[1]); }, {a, b}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return sub(in[0], in[1]); }, {a, b}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return mul(in[0], in[1]); }, {a, b}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return scale(in[0], -2.5); }, {a}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return gelu(in[0]); }, {a}, rng) < 2e-5);
}

TEST_CASE("sqrt gradient with zero-protection") {
    Rng rng(8);
    auto a = Tensor::from_values({2, 2}, {0.5, 1.5, 2.0, 3.0}, true);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return sqrt_t(in[0]); }, {a}, rng) < 2e-5);
    // An exact zero contributes no gradient instead of producing a NaN.
    auto z = Tensor::from_values({1}, {0.0}, true);
    Tensor out = sqrt_t(z);
    backward(sum_all(out));
    CHECK(z.grad()[0] == 0.0);
}

TEST_CASE("matmul variants match finite differences") {
    Rng rng(9);
    auto a = random_tensor({3, 5}, rng);
    auto b = random_tensor({5, 2}, rng);
    auto c = random_tensor({4, 5}, rng);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); }, {a, b}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return matmul_nt(in[0], in[1]); }, {a, c}, rng) < 2e-5);
}

TEST_CASE("structure ops match finite differences") {
    Rng rng(10);
    auto a = random_tensor({5, 3}, rng);
    auto b = random_tensor({2, 3}, rng);
    auto v = random_tensor({3}, rng);
    auto col = random_tensor({5, 1}, rng, 1.0);
    // keep the column values away from zero for div
    for (auto& x : col.values()) x = (x < 0 ? x - 0.5 : x + 0.5);

    CHECK(fd_check([](const std::vector<Tensor>& in) { return rows(in[0], {4, 0, 0, 2}); }, {a}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return concat_rows({in[0], in[1]}); }, {a, b}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return concat_cols({in[0], in[0]}); }, {a}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return slice_cols(in[0], 1, 3); }, {a}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return repeat_rows(in[0], 3); }, {b}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return add_rowvec(in[0], in[1]); }, {a, v}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return mul_rowvec(in[0], in[1]); }, {a, v}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return mul_colvec(in[0], in[1]); }, {a, col}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return div_colvec(in[0], in[1]); }, {a, col}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return mean_rows(in[0]); }, {a}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return reshape(in[0], {3, 5}); }, {a}, rng) < 2e-5);
}

TEST_CASE("softmax rows sum to one and differentiate") {
    Rng rng(11);
    auto a = random_tensor({4, 6}, rng, 3.0);
    Tensor s = softmax_rows(a);
    for (int i = 0; i < 4; ++i) {
        double rowsum = 0.0;
        for (int j = 0; j < 6; ++j) rowsum += s.values()[i * 6 + j];
        CHECK(std::abs(rowsum - 1.0) < 1e-9);
    }
    CHECK(fd_check([](const std::vector<Tensor>& in) { return softmax_rows(in[0]); }, {a}, rng) < 2e-5);

    // Shift invariance: adding a constant to all logits of a row changes nothing.
    std::vector<double> shifted = a.values();
    for (int j = 0; j < 6; ++j) shifted[2 * 6 + j] += 13.5;
    Tensor s2 = softmax_rows(Tensor::from_values({4, 6}, shifted));
    for (int j = 0; j < 6; ++j)
        CHECK(s.values()[2 * 6 + j] == Catch::Approx(s2.values()[2 * 6 + j]).margin(1e-12));
}

TEST_CASE("rowwise 3-vector ops match finite differences") {
    Rng rng(12);
    auto a = random_tensor({6, 3}, rng);
    auto b = random_tensor({6, 3}, rng);
    // keep norms clear of zero
    for (auto& x : a.values()) x += (x >= 0 ? 0.3 : -0.3);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return rowdot(in[0], in[1]); }, {a, b}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return rownorm(in[0]); }, {a}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return cross_rows(in[0], in[1]); }, {a, b}, rng) < 2e-5);
}

TEST_CASE("batched 3x3 ops match finite differences") {
    Rng rng(13);
    auto a = random_tensor({4, 9}, rng);
    auto b = random_tensor({4, 9}, rng);
    auto v = random_tensor({4, 3}, rng);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return bmm3(in[0], in[1]); }, {a, b}, rng) < 2e-5);
    CHECK(fd_check([](const std::vector<Tensor>& in) { return matvec3(in[0], in[1]); }, {a, v}, rng) < 2e-5);
}

TEST_CASE("bmm3 values agree with per-sample products") {
    Rng rng(14);
    auto a = random_tensor({3, 9}, rng, 1.0, false);
    auto b = random_tensor({3, 9}, rng, 1.0, false);
    Tensor c = bmm3(a, b);
    for (int n = 0; n < 3; ++n)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k)
                    s += a.values()[n * 9 + i * 3 + k] * b.values()[n * 9 + k * 3 + j];
                CHECK(c.values()[n * 9 + i * 3 + j] == Catch::Approx(s).margin(1e-12));
            }
}

TEST_CASE("detach cuts the tape") {
    auto a = Tensor::from_values({2}, {1.0, 2.0}, true);
    Tensor d = detach(scale(a, 3.0));
    CHECK_FALSE(d.requires_grad());
    Tensor loss = sum_all(mul(d, d));
    backward(loss);
    CHECK(a.raw()->grad.empty());
}

TEST_CASE("gradient accumulates through shared subexpressions") {
    auto a = Tensor::from_values({1}, {2.0}, true);
    Tensor y = add(mul(a, a), scale(a, 3.0));  // a^2 + 3a -> dy/da = 2a + 3 = 7
    backward(sum_all(y));
    CHECK(a.grad()[0] == Catch::Approx(7.0).margin(1e-12));
}

TEST_CASE("deterministic forward and backward") {
    Rng rng(15);
    auto run = [] {
        Rng local(99);
        auto a = random_tensor({8, 8}, local);
        auto b = random_tensor({8, 8}, local);
        Tensor loss = sum_all(mul(matmul(a, b), matmul(a, b)));
        backward(loss);
        std::vector<double> out = a.grad();
        out.push_back(loss.item());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("shape errors are reported") {
    auto a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(add(a, b), ShapeMismatch);
    CHECK_THROWS_AS(matmul(a, a), ShapeMismatch);
    CHECK_THROWS_AS(rows(a, {5}), IndexOutOfRange);
    CHECK_THROWS_AS(backward(a), ShapeMismatch);
}
