#include <doctest.h>

#include <random>

#include "poskern/autograd.hpp"
#include "poskern/gradcheck.hpp"
#include "poskern/matrix.hpp"

using namespace poskern;

namespace {
Matrix randn(std::mt19937_64& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = d(rng);
    return m;
}

// scalar triple-loop oracle, independent of Eigen's product
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
    Matrix out = Matrix::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j)
            for (Eigen::Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
    return out;
}
}  // namespace

TEST_CASE("matmul basics") {
    Matrix a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    b << 0, 1, 1, 0;
    Matrix expect(2, 2);
    expect << 2, 1, 4, 3;
    CHECK(matmul(a, b) == expect);
    CHECK(matmul(a, b) == matmul_oracle(a, b));

    const Matrix id = Matrix::Identity(3, 3);
    std::mt19937_64 rng(1);
    const Matrix m = randn(rng, 3, 5);
    CHECK(matmul(id, m) == m);

    CHECK_THROWS_WITH_AS(matmul(Matrix::Zero(2, 3), Matrix::Zero(4, 2)),
                         doctest::Contains("2x3"), std::invalid_argument);
}

TEST_CASE("matmul associativity on random matrices") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 20; ++t) {
        const Matrix a = randn(rng, 4, 3), b = randn(rng, 3, 5), c = randn(rng, 5, 2);
        const Matrix lhs = matmul(matmul(a, b), c);
        const Matrix rhs = matmul(a, matmul(b, c));
        const double scale = std::max(1.0, lhs.cwiseAbs().maxCoeff());
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() / scale < 1e-10);
        CHECK((matmul(a, b) - matmul_oracle(a, b)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("masked_softmax_rows examples") {
    SUBCASE("uniform logits, fully admissible row") {
        Matrix logits = Matrix::Zero(3, 3);
        const Matrix s = masked_softmax_rows(logits);
        CHECK(s(2, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
        CHECK(s(2, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
        CHECK(s(2, 2) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    }
    SUBCASE("first row sees only itself") {
        std::mt19937_64 rng(2);
        const Matrix s = masked_softmax_rows(randn(rng, 4, 4, -50, 50));
        CHECK(s(0, 0) == 1.0);
        for (int j = 1; j < 4; ++j) CHECK(s(0, j) == 0.0);
    }
    SUBCASE("closed-form two-entry row") {
        Matrix logits(2, 2);
        logits << 0, 0, 1, 2;
        const Matrix s = masked_softmax_rows(logits);
        const double e = std::exp(1.0);
        CHECK(s(1, 0) == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-14));
        CHECK(s(1, 1) == doctest::Approx(e / (1.0 + e)).epsilon(1e-14));
    }
    CHECK_THROWS_AS(masked_softmax_rows(Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("masked_softmax_rows rows sum to one, masked entries exactly zero") {
    std::mt19937_64 rng(3);
    for (int k : {1, 2, 5, 17, 64}) {
        const Matrix s = masked_softmax_rows(randn(rng, k, k, -50.0, 50.0));
        for (int i = 0; i < k; ++i) {
            CHECK(s.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
            for (int j = i + 1; j < k; ++j) CHECK(s(i, j) == 0.0);
        }
    }
}

TEST_CASE("layer_norm examples") {
    SUBCASE("constant row collapses to bias") {
        Matrix x(1, 4);
        x << 5, 5, 5, 5;
        const Matrix out = layer_norm(x, Vector::Ones(4), Vector::Zero(4));
        for (int j = 0; j < 4; ++j) CHECK(out(0, j) == doctest::Approx(0.0));
    }
    SUBCASE("analytic two-entry row") {
        Matrix x(1, 2);
        x << 1, 3;
        const Matrix out = layer_norm(x, Vector::Ones(2), Vector::Zero(2), 1e-12);
        CHECK(out(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
        CHECK(out(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("zero gain yields broadcast bias") {
        std::mt19937_64 rng(4);
        Vector bias(3);
        bias << 1, 2, 3;
        const Matrix out = layer_norm(randn(rng, 2, 3), Vector::Zero(3), bias);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) CHECK(out(i, j) == bias(j));
    }
    CHECK_THROWS_AS(layer_norm(Matrix::Zero(2, 3), Vector::Ones(2), Vector::Zero(3)),
                    std::invalid_argument);
}

TEST_CASE("grad_check: linear map is exact to machine precision") {
    std::mt19937_64 rng(5);
    const Matrix x = randn(rng, 3, 4);
    Parameter w("w", randn(rng, 4, 2));
    auto loss = [&]() {
        Tape t;
        auto out = t.matmul(t.leaf(x), t.param(w));
        auto l = t.sum(out);
        t.backward(l);
        t.flush_param_grads();
        return t.val(l)(0, 0);
    };
    const auto rep = grad_check(loss, {&w}, 1e-5, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.max_rel_dev < 1e-8);
}

TEST_CASE("grad_check: step 1 on softmax is flagged and fails") {
    std::mt19937_64 rng(6);
    Parameter x("x", randn(rng, 4, 4, -2, 2));
    const Matrix wts = randn(rng, 4, 4);
    auto loss = [&]() {
        Tape t;
        auto s = t.masked_softmax_rows(t.param(x));
        auto l = t.weighted_sum(s, wts);
        t.backward(l);
        t.flush_param_grads();
        return t.val(l)(0, 0);
    };
    const auto rep = grad_check(loss, {&x}, 1.0, 1e-4);
    CHECK_FALSE(rep.pass);
    CHECK_FALSE(rep.step_in_range);
}

TEST_CASE("tape ops pass grad_check on 3 seeds") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        std::mt19937_64 rng(seed);
        Parameter a("a", randn(rng, 3, 4)), b("b", randn(rng, 1, 4));
        const Matrix wts = randn(rng, 3, 4);
        auto loss = [&]() {
            Tape t;
            auto h = t.relu(t.add_row_broadcast(t.param(a), t.param(b)));
            auto d = t.dropout(h, 0.0, rng);  // pass-through
            auto l = t.weighted_sum(d, wts);
            t.backward(l);
            t.flush_param_grads();
            return t.val(l)(0, 0);
        };
        const auto rep = grad_check(loss, {&a, &b}, 1e-5, 1e-4);
        CHECK(rep.pass);
    }
}

TEST_CASE("parameter grads accumulate until zeroed") {
    Parameter p("p", Matrix::Ones(2, 2));
    for (int i = 0; i < 2; ++i) {
        Tape t;
        auto l = t.sum(t.param(p));
        t.backward(l);
        t.flush_param_grads();
    }
    CHECK(p.grad == Matrix::Constant(2, 2, 2.0));
    p.zero_grad();
    CHECK(p.grad == Matrix::Zero(2, 2));
}

TEST_CASE("ce_loss_rows matches log-sum-exp and handles masks") {
    Tape t;
    SUBCASE("uniform logits over N=4") {
        auto logits = t.leaf(Matrix::Zero(2, 4));
        auto l = t.ce_loss_rows(logits, {1, 3});
        CHECK(t.val(l)(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("confident correct logit drives loss to zero") {
        Matrix m = Matrix::Zero(1, 4);
        m(0, 2) = 50.0;
        auto l = t.ce_loss_rows(t.leaf(m), {2});
        CHECK(t.val(l)(0, 0) < 1e-12);
    }
    SUBCASE("all rows masked defines loss 0 with zero grad") {
        Parameter p("p", Matrix::Ones(2, 3));
        auto l = t.ce_loss_rows(t.param(p), {-1, -1});
        CHECK(t.val(l)(0, 0) == 0.0);
        t.backward(l);
        t.flush_param_grads();
        CHECK(p.grad == Matrix::Zero(2, 3));
    }
}
