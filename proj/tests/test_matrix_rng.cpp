#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "fedbal/error.hpp"
#include "fedbal/matrix.hpp"
#include "fedbal/rng.hpp"

using namespace fedbal;

TEST_CASE("matrix construction and accessors") {
    Matrix m(2, 3, 1.5);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m.size() == 6);
    CHECK(m.at(1, 2) == 1.5);

    Matrix r = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(r.at(0, 1) == 2);
    CHECK(r.at(1, 0) == 3);
    CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), EngineError);

    Matrix rv = Matrix::row_vector({1, 2, 3});
    CHECK(rv.rows() == 1);
    CHECK(rv.cols() == 3);
    Matrix cv = Matrix::column({1, 2, 3});
    CHECK(cv.rows() == 3);
    CHECK(cv.cols() == 1);
}

TEST_CASE("matmul against hand computation") {
    Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
    Matrix c = matmul(a, b);
    CHECK(c.at(0, 0) == 19);
    CHECK(c.at(0, 1) == 22);
    CHECK(c.at(1, 0) == 43);
    CHECK(c.at(1, 1) == 50);

    Matrix eye = Matrix::from_rows({{1, 0}, {0, 1}});
    Matrix again = matmul(a, eye);
    CHECK(again.values() == a.values());

    Matrix bad(3, 3);
    CHECK_THROWS_AS(matmul(a, bad), EngineError);
}

TEST_CASE("non-finite values are rejected") {
    Matrix m(1, 2);
    m.at(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_FALSE(m.all_finite());
    CHECK_THROWS_AS(check_finite(m, "test"), EngineError);
    m.at(0, 0) = std::nan("");
    CHECK_THROWS_AS(check_finite(m, "test"), EngineError);
}

TEST_CASE("transpose") {
    Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    Matrix t = transposed(a);
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 2);
    CHECK(t.at(2, 1) == 6);
}

TEST_CASE("rng streams are deterministic") {
    Rng a(12345);
    Rng b(12345);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng frozen(12345);
    CHECK(frozen.next_u64() == 2454886589211414944ULL);
    CHECK(frozen.next_u64() == 3778200017661327597ULL);
    CHECK(frozen.next_u64() == 2205171434679333405ULL);
}

TEST_CASE("uniform stays in range") {
    Rng rng(7);
    CHECK(rng.uniform() == doctest::Approx(0.38982974839127149).epsilon(1e-15));
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform(-3.0, 5.0);
        CHECK(u >= -3.0);
        CHECK(u < 5.0);
    }
}

TEST_CASE("uniform_index bounds and coverage") {
    Rng rng(99);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        const auto k = rng.uniform_index(7);
        CHECK(k < 7);
        seen.insert(k);
    }
    CHECK(seen.size() == 7);
    CHECK(rng.uniform_index(1) == 0);
    CHECK_THROWS_AS(rng.uniform_index(0), EngineError);
}

TEST_CASE("gaussian moments") {
    Rng rng(2024);
    const int n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sumsq += g * g;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::fabs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 0.05);
}

TEST_CASE("shuffle yields a permutation") {
    Rng rng(5);
    auto p = rng.permutation(50);
    std::vector<std::size_t> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);

    Rng a(11), b(11);
    CHECK(a.permutation(20) == b.permutation(20));
}

TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(0, "client", 0) == 18409797095030913740ULL);
    CHECK(derive_seed(42, "client", 3) == 10678888784718900886ULL);

    std::set<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 100; ++i) {
        seeds.insert(derive_seed(1, "client", i));
        seeds.insert(derive_seed(1, "server", i));
        seeds.insert(derive_seed(2, "client", i));
    }
    CHECK(seeds.size() == 300);
    CHECK(derive_seed(9, "gan", 4) == derive_seed(9, "gan", 4));

    Rng masters(7);
    for (int t = 0; t < 10000; ++t) {
        const std::uint64_t s = masters.next_u64();
        CHECK(derive_seed(s, "client", 1) != derive_seed(s, "client", 2));
    }
}
