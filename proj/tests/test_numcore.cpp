#include <doctest.h>

#include <cmath>

#include "adml/matrix.hpp"
#include "adml/rng.hpp"
#include "support/test_util.hpp"

using adml::Matrix;
using adml::Rng;

TEST_CASE("matmul identity and hand arithmetic") {
    const Matrix a(2, 2, {1.0, 2.0, 3.0, 4.0});
    const Matrix ia = adml::matmul(adml::identity(2), a);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(ia(i, j) == a(i, j));

    const Matrix row(1, 2, {1.0, 2.0});
    const Matrix col(2, 1, {3.0, 4.0});
    const Matrix prod = adml::matmul(row, col);
    CHECK(prod.rows == 1);
    CHECK(prod.cols == 1);
    CHECK(prod(0, 0) == doctest::Approx(11.0));
}

TEST_CASE("matmul matches triple-loop oracle on random instances") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = testutil::random_matrix(5, 4, rng);
        const Matrix b = testutil::random_matrix(4, 3, rng);
        const Matrix c = adml::matmul(a, b);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 3; ++j) {
                double expect = 0.0;
                for (int k = 0; k < 4; ++k) expect += a(i, k) * b(k, j);
                CHECK(std::abs(c(i, j) - expect) < 1e-12);
            }
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    const Matrix a(2, 3);
    const Matrix b(2, 3);
    CHECK_THROWS_AS((void)adml::matmul(a, b), std::invalid_argument);
}

TEST_CASE("matmul associativity on random instances") {
    Rng rng(19);
    const Matrix a = testutil::random_matrix(3, 5, rng);
    const Matrix b = testutil::random_matrix(5, 4, rng);
    const Matrix c = testutil::random_matrix(4, 6, rng);
    const Matrix lhs = adml::matmul(adml::matmul(a, b), c);
    const Matrix rhs = adml::matmul(a, adml::matmul(b, c));
    REQUIRE(lhs.same_shape(rhs));
    for (std::size_t i = 0; i < lhs.values.size(); ++i)
        CHECK(std::abs(lhs.values[i] - rhs.values[i]) < 1e-12);
}

TEST_CASE("transpose contract (AB)^T = B^T A^T") {
    Rng rng(7);
    const Matrix a = testutil::random_matrix(4, 6, rng);
    const Matrix b = testutil::random_matrix(6, 3, rng);
    const Matrix lhs = adml::transpose(adml::matmul(a, b));
    const Matrix rhs = adml::matmul(adml::transpose(b), adml::transpose(a));
    REQUIRE(lhs.same_shape(rhs));
    for (std::size_t i = 0; i < lhs.values.size(); ++i)
        CHECK(std::abs(lhs.values[i] - rhs.values[i]) < 1e-12);
}

TEST_CASE("l2_normalize_rows basics") {
    const Matrix m(1, 2, {3.0, 4.0});
    const Matrix n = adml::l2_normalize_rows(m);
    CHECK(n(0, 0) == doctest::Approx(0.6));
    CHECK(n(0, 1) == doctest::Approx(0.8));

    const Matrix zero(1, 2);
    const Matrix nz = adml::l2_normalize_rows(zero, 1e-12);
    CHECK(nz(0, 0) == 0.0);
    CHECK(nz(0, 1) == 0.0);
}

TEST_CASE("l2_normalize_rows is invariant to positive row rescaling") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m = testutil::random_matrix(3, 5, rng);
        Matrix scaled = m;
        const double c = rng.uniform(0.1, 10.0);
        for (double& v : scaled.values) v *= c;
        const Matrix a = adml::l2_normalize_rows(m);
        const Matrix b = adml::l2_normalize_rows(scaled);
        for (std::size_t i = 0; i < a.values.size(); ++i)
            CHECK(std::abs(a.values[i] - b.values[i]) < 1e-12);
    }
}

TEST_CASE("cosine_matrix self similarity and orthogonality") {
    Matrix x(2, 3, {1.0, 0.0, 0.0, 0.0, 2.0, 0.0});
    Matrix w(3, 2, {1.0, 0.0, 0.0, 0.0, 0.0, 1.0});
    // column 0 of w equals row 0 of x; column 1 is orthogonal to both rows
    const Matrix c = adml::cosine_matrix(x, w);
    CHECK(c(0, 0) == doctest::Approx(1.0));
    CHECK(c(0, 1) == doctest::Approx(0.0));
    CHECK(c(1, 0) == doctest::Approx(0.0));
    CHECK(c(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("cosine_matrix matches per-pair oracle and stays in range") {
    Rng rng(11);
    const Matrix x = testutil::random_matrix(4, 3, rng);
    const Matrix w = testutil::random_matrix(3, 5, rng);
    const Matrix c = adml::cosine_matrix(x, w);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) {
            double dot = 0.0, nx = 0.0, nw = 0.0;
            for (int k = 0; k < 3; ++k) {
                dot += x(i, k) * w(k, j);
                nx += x(i, k) * x(i, k);
                nw += w(k, j) * w(k, j);
            }
            const double expect = dot / (std::sqrt(nx) * std::sqrt(nw));
            CHECK(std::abs(c(i, j) - expect) < 1e-12);
            CHECK(c(i, j) >= -1.0);
            CHECK(c(i, j) <= 1.0);
        }
}

TEST_CASE("cosine_matrix invariant to positive rescaling of rows and columns") {
    Rng rng(13);
    Matrix x = testutil::random_matrix(4, 3, rng);
    Matrix w = testutil::random_matrix(3, 5, rng);
    Matrix x2 = x;
    Matrix w2 = w;
    for (int i = 0; i < x2.rows; ++i) {
        const double c = rng.uniform(0.1, 10.0);
        for (int j = 0; j < x2.cols; ++j) x2(i, j) *= c;
    }
    for (int j = 0; j < w2.cols; ++j) {
        const double c = rng.uniform(0.1, 10.0);
        for (int i = 0; i < w2.rows; ++i) w2(i, j) *= c;
    }
    const Matrix a = adml::cosine_matrix(x, w);
    const Matrix b = adml::cosine_matrix(x2, w2);
    for (std::size_t i = 0; i < a.values.size(); ++i)
        CHECK(std::abs(a.values[i] - b.values[i]) < 1e-12);
}

TEST_CASE("log_softmax_rows uniform, stability, shift invariance") {
    const Matrix two(1, 2, {0.0, 0.0});
    const Matrix u = adml::log_softmax_rows(two);
    CHECK(u(0, 0) == doctest::Approx(-std::log(2.0)));
    CHECK(u(0, 1) == doctest::Approx(-std::log(2.0)));

    const Matrix big(1, 2, {1000.0, 0.0});
    const Matrix s = adml::log_softmax_rows(big);
    CHECK(std::isfinite(s(0, 0)));
    CHECK(std::isfinite(s(0, 1)));
    CHECK(s(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s(0, 1) == doctest::Approx(-1000.0));

    Rng rng(5);
    Matrix r = testutil::random_matrix(3, 6, rng);
    Matrix shifted = r;
    for (int i = 0; i < r.rows; ++i) {
        const double c = rng.uniform(-50.0, 50.0);
        for (int j = 0; j < r.cols; ++j) shifted(i, j) += c;
    }
    const Matrix a = adml::log_softmax_rows(r);
    const Matrix b = adml::log_softmax_rows(shifted);
    for (std::size_t i = 0; i < a.values.size(); ++i)
        CHECK(std::abs(a.values[i] - b.values[i]) < 1e-10);
}

TEST_CASE("log_softmax_rows rows exponentiate to probability simplex") {
    Rng rng(17);
    const Matrix r = testutil::random_matrix(5, 7, rng, 3.0);
    const Matrix lp = adml::log_softmax_rows(r);
    for (int i = 0; i < lp.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < lp.cols; ++j) sum += std::exp(lp(i, j));
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("rng determinism and shuffle coverage") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());

    Rng c(9);
    std::vector<int> v(20);
    for (int i = 0; i < 20; ++i) v[static_cast<std::size_t>(i)] = i;
    c.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 20; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);

    // normal() must be a reproducible stream as well
    Rng d(77), e(77);
    for (int i = 0; i < 50; ++i) CHECK(d.normal() == e.normal());
}
