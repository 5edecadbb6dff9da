#include <adaptz/diffmath.hpp>

#include <gtest/gtest.h>

#include <support/oracles.hpp>

#include <cmath>
#include <limits>
#include <random>

using adaptz::AffineLayer;
using adaptz::Matrix;

TEST(Matrix, InitializerAndIndexing) {
    const Matrix m{{1, 2, 3}, {4, 5, 6}};
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    EXPECT_EQ(m(1, 2), 6.0);
    EXPECT_EQ(m.transposed()(2, 1), 6.0);
    EXPECT_THROW((Matrix{{1, 2}, {3}}), adaptz::ShapeError);
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), adaptz::ShapeError);
}

TEST(Matrix, ArithmeticRejectsShapeMismatch) {
    Matrix a(2, 2, 1.0), b(2, 3, 1.0);
    EXPECT_THROW(a += b, adaptz::ShapeError);
    EXPECT_THROW(a.axpy(1.0, b), adaptz::ShapeError);
    Matrix c(2, 2, 2.0);
    a.axpy(-0.5, c);
    EXPECT_EQ(a, Matrix(2, 2, 0.0));
}

TEST(Matrix, AllFiniteDetectsNanAndInf) {
    Matrix m(1, 2, 0.0);
    EXPECT_TRUE(adaptz::all_finite(m));
    m(0, 1) = std::numeric_limits<double>::infinity();
    EXPECT_FALSE(adaptz::all_finite(m));
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(adaptz::all_finite(m));
}

TEST(Affine, ForwardMatchesHandComputation) {
    const AffineLayer l(Matrix{{1, 2}, {-1, 0.5}}, {0.5, -1});
    const Matrix y = l.apply(Matrix{{3, 4}});
    EXPECT_EQ(y, (Matrix{{11.5, -2}}));
}

TEST(Affine, ShapeErrors) {
    AffineLayer l(3, 2);
    EXPECT_THROW(l.apply(Matrix(1, 3)), adaptz::ShapeError);
    EXPECT_THROW(AffineLayer(Matrix(2, 2), {1.0}), adaptz::ShapeError);
}

TEST(Affine, BackwardWithoutForwardIsRejected) {
    AffineLayer l(2, 2);
    EXPECT_THROW(l.backward(Matrix(1, 2)), std::logic_error);
    l.forward(Matrix(1, 2, 1.0));
    l.backward(Matrix(1, 2, 1.0));
    EXPECT_THROW(l.backward(Matrix(1, 2, 1.0)), std::logic_error);
}

TEST(Affine, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<std::size_t> dim(1, 6);
        const std::size_t n = dim(rng), in = dim(rng), out = dim(rng);
        AffineLayer l(out, in);
        l.init_uniform(rng);
        Matrix x = oracle::random_matrix(rng, n, in);
        const Matrix w = oracle::random_matrix(rng, n, out);
        l.forward(x);
        const auto back = l.backward(w);
        auto loss = [&] { return oracle::weighted_sum(l.apply(x), w); };
        EXPECT_LT(oracle::relative_error(back.grad_input.data(), oracle::numeric_gradient(x.data(), loss)),
                  oracle::kFdTolerance);
        EXPECT_LT(oracle::layer_error(l, back.grads, loss), oracle::kFdTolerance);
    }
}

TEST(Relu, ForwardAndSubgradientAtZero) {
    const Matrix x{{-1, 0, 2}};
    EXPECT_EQ(adaptz::relu(x), (Matrix{{0, 0, 2}}));
    EXPECT_EQ(adaptz::relu_backward(x, Matrix{{5, 5, 5}}), (Matrix{{0, 0, 5}}));
}

TEST(Relu, PropagatesNan) {
    Matrix x(1, 1, std::numeric_limits<double>::quiet_NaN());
    EXPECT_TRUE(std::isnan(adaptz::relu(x)(0, 0)));
}

TEST(Mse, ValueAndGradient) {
    const auto r = adaptz::mse_with_grad(Matrix{{1, 2}}, Matrix{{0, 4}});
    EXPECT_DOUBLE_EQ(r.loss, 2.5);
    EXPECT_EQ(r.grad, (Matrix{{1, -2}}));
    EXPECT_THROW(adaptz::mse_with_grad(Matrix(0, 0), Matrix(0, 0)), adaptz::ShapeError);
    EXPECT_THROW(adaptz::mse_with_grad(Matrix(1, 2), Matrix(2, 1)), adaptz::ShapeError);
}

TEST(Mse, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix p = oracle::random_matrix(rng, 3, 2);
        const Matrix y = oracle::random_matrix(rng, 3, 2);
        const auto r = adaptz::mse_with_grad(p, y);
        auto loss = [&] { return adaptz::mse(p, y); };
        EXPECT_LT(oracle::relative_error(r.grad.data(), oracle::numeric_gradient(p.data(), loss)),
                  oracle::kFdTolerance);
    }
}

TEST(Sgd, ZeroLearningRateLeavesParametersBitExact) {
    std::mt19937_64 rng(3);
    AffineLayer l(3, 4);
    l.init_uniform(rng);
    const AffineLayer before = l;
    adaptz::AffineGrads g(3, 4);
    g.weight = oracle::random_matrix(rng, 3, 4);
    l.sgd(g, 0.0);
    EXPECT_TRUE(l.same_params(before));
}
