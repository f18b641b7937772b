#include <doctest.h>

#include <random>

#include "poskern/attention.hpp"
#include "poskern/kernel.hpp"

using namespace poskern;

namespace {
std::mt19937_64& rng() {
    static std::mt19937_64 r(31);
    return r;
}

Matrix randn(long rows, long cols) {
    std::normal_distribution<double> d(0.0, 1.0);
    Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j) m(i, j) = d(rng());
    return m;
}

AttentionWeights rand_weights(long d) { return {randn(d, d), randn(d, d), randn(d, d)}; }

// X is N x K with one-hot columns: column j selects item ids[j].
Matrix one_hot_cols(long n, const std::vector<int>& ids) {
    Matrix x = Matrix::Zero(n, static_cast<long>(ids.size()));
    for (size_t j = 0; j < ids.size(); ++j) x(ids[j], static_cast<long>(j)) = 1.0;
    return x;
}

// Column permutation matrix R with R(i, perm[i]) = 1, so X R permutes
// the sequence positions.
Matrix perm_matrix(const std::vector<int>& perm) {
    const long k = static_cast<long>(perm.size());
    Matrix r = Matrix::Zero(k, k);
    for (long i = 0; i < k; ++i) r(i, perm[i]) = 1.0;
    return r;
}
}  // namespace

TEST_CASE("scheme parsing round-trips") {
    for (auto s : {PositionalScheme::NoPE, PositionalScheme::ClassicAdditive,
                   PositionalScheme::Rotary, PositionalScheme::Kernel})
        CHECK(parse_scheme(scheme_str(s)) == s);
    CHECK_THROWS_AS(parse_scheme("alibi"), std::invalid_argument);
}

TEST_CASE("vanilla_qkv_oracle equals qkv_y times Wv and rejects non-one-hot input") {
    const long n = 8, k = 4, d = 3;
    const Matrix m = randn(n, d);
    const AttentionWeights w = rand_weights(d);
    const Matrix x = one_hot_cols(n, {2, 5, 5, 0});
    CHECK((vanilla_qkv_oracle(x, m, w) - qkv_y(x, m, w) * w.wv).cwiseAbs().maxCoeff() <
          1e-12);
    Matrix bad = x;
    bad(1, 0) = 0.5;
    CHECK_THROWS_AS(vanilla_qkv_oracle(bad, m, w), std::invalid_argument);
    CHECK(vanilla_qkv_oracle(x, m, w).rows() == k);
}

TEST_CASE("qkv_y is permutation equivariant: Y(XR) = R^T Y(X)") {
    const long n = 10, d = 4;
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix m = randn(n, d);
        const AttentionWeights w = rand_weights(d);
        const Matrix x = one_hot_cols(n, {1, 4, 7, 7, 2});
        std::vector<int> perm{0, 1, 2, 3, 4};
        std::shuffle(perm.begin(), perm.end(), rng());
        const Matrix r = perm_matrix(perm);
        const Matrix lhs = qkv_y(x * r, m, w);
        const Matrix rhs = r.transpose() * qkv_y(x, m, w);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() /
                  std::max(1.0, rhs.cwiseAbs().maxCoeff()) <
              1e-12);
    }
}

TEST_CASE("qkv_y_kernel intertwines the permutation with C") {
    const long n = 10, d = 4;
    const Matrix m = randn(n, d);
    const AttentionWeights w = rand_weights(d);
    const Matrix x = one_hot_cols(n, {3, 8, 0, 6});
    const Matrix c = randn(4, 4);
    const Matrix r = perm_matrix({2, 0, 3, 1});

    // Y(XR, C) = R^T Y(X, R C R^T) always holds...
    const Matrix lhs = qkv_y_kernel(x * r, m, w, c);
    const Matrix rhs = r.transpose() * qkv_y_kernel(x, m, w, r * c * r.transpose());
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);

    // ...but plain equivariance fails because R C R^T != C here.
    CHECK((r * c * r.transpose() - c).cwiseAbs().maxCoeff() > 1e-6);
    const Matrix naive = r.transpose() * qkv_y_kernel(x, m, w, c);
    CHECK((lhs - naive).cwiseAbs().maxCoeff() > 1e-6);

    // C = I restores equivariance exactly.
    const Matrix ident = qkv_y_kernel(x * r, m, w, Matrix::Identity(4, 4));
    CHECK((ident - r.transpose() * qkv_y(x, m, w)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("causal_attention is strictly causal") {
    const long k = 6, d = 4;
    const Matrix e = randn(k, d);
    const AttentionWeights w = rand_weights(d);
    for (double base : {0.0, 10000.0}) {
        const Matrix map = causal_attention_map(e, w, base);
        for (long i = 0; i < k; ++i) {
            double row = 0.0;
            for (long j = 0; j < k; ++j) {
                if (j > i) CHECK(map(i, j) == 0.0);
                row += map(i, j);
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
        // Perturbing a future row leaves earlier outputs bit-identical.
        Matrix e2 = e;
        e2.row(k - 1) += randn(1, d);
        const Matrix a = causal_attention(e, w, base);
        const Matrix b = causal_attention(e2, w, base);
        for (long i = 0; i + 1 < k; ++i)
            CHECK((a.row(i) - b.row(i)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("kernel_attention with identity factors reduces to causal_attention") {
    const long k = 7, d = 4;
    const Matrix e = randn(k, d);
    const AttentionWeights w = rand_weights(d);
    const Matrix id = Matrix::Identity(k, k);
    // The two paths associate the score product differently, so allow
    // rounding noise but nothing structural.
    CHECK((kernel_attention(e, w, id, id) - causal_attention(e, w))
              .cwiseAbs()
              .maxCoeff() < 1e-13);
}

TEST_CASE("kernel_attention validates factor shape and triangularity, stays causal") {
    const long k = 5, d = 4;
    const Matrix e = randn(k, d);
    const AttentionWeights w = rand_weights(d);
    CHECK_THROWS_AS(
        kernel_attention(e, w, Matrix::Identity(k + 1, k + 1), Matrix::Identity(k, k)),
        std::invalid_argument);
    Matrix bad = Matrix::Identity(k, k);
    bad(k - 1, 0) = 2.0;
    CHECK_THROWS_AS(kernel_attention(e, w, bad, Matrix::Identity(k, k)),
                    std::invalid_argument);

    const Matrix u =
        materialize_upper(FactorStructure::Toeplitz, randn(k, 1).col(0), k);
    const Matrix l = materialize_lower(FactorStructure::Full,
                                       randn(k * (k + 1) / 2, 1).col(0), k);
    Matrix e2 = e;
    e2.row(k - 1) += randn(1, d);
    const Matrix a = kernel_attention(e, w, u, l);
    const Matrix b = kernel_attention(e2, w, u, l);
    for (long i = 0; i + 1 < k; ++i)
        CHECK((a.row(i) - b.row(i)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rope_rotate") {
    SUBCASE("position 0 is untouched and norms are preserved") {
        const Matrix x = randn(5, 6);
        const Matrix y = rope_rotate(x, 10000.0);
        CHECK((y.row(0) - x.row(0)).cwiseAbs().maxCoeff() == 0.0);
        for (long p = 0; p < 5; ++p)
            CHECK(y.row(p).norm() == doctest::Approx(x.row(p).norm()).epsilon(1e-12));
    }
    SUBCASE("d=2 position 1 is a plain rotation by 1 radian") {
        Matrix x(2, 2);
        x << 1, 0, 1, 0;
        const Matrix y = rope_rotate(x, 10000.0);
        CHECK(y(1, 0) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
        CHECK(y(1, 1) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
    }
    SUBCASE("relative-position property of scores") {
        // Dot products of rotated rows depend only on position offsets:
        // shifting both rows by one position leaves q.k unchanged.
        const Matrix x = randn(4, 8);
        const Matrix rx = rope_rotate(x, 10000.0);
        double q0k1 = rx.row(0).dot(rx.row(1));
        Matrix stack(2, 8);
        stack << x.row(0), x.row(1);
        Matrix padded(3, 8);
        padded << Matrix::Zero(1, 8), stack;
        const Matrix rp = rope_rotate(padded, 10000.0);
        CHECK(rp.row(1).dot(rp.row(2)) == doctest::Approx(q0k1).epsilon(1e-10));
    }
    CHECK_THROWS_AS(rope_rotate(randn(3, 5), 10000.0), std::invalid_argument);
}
