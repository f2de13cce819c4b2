#include <doctest.h>

#include <vector>

#include "orthodistill/kernels.hpp"
#include "orthodistill/util.hpp"

using namespace orthodistill;

namespace {
std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.gaussian();
    return v;
}
}  // namespace

TEST_CASE("matmul matches a naive triple loop") {
    Rng rng(42);
    std::size_t n = 7, k = 5, m = 9;
    auto a = random_vec(n * k, rng);
    auto b = random_vec(k * m, rng);
    std::vector<double> c(n * m), want(n * m, 0.0);
    kernels::matmul(a.data(), b.data(), c.data(), n, k, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t l = 0; l < k; ++l) want[i * m + j] += a[i * k + l] * b[l * m + j];
    for (std::size_t i = 0; i < n * m; ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("transposed operand layouts agree with explicit transposes") {
    Rng rng(7);
    std::size_t n = 6, k = 4, m = 5;
    auto a = random_vec(n * k, rng);   // n x k
    auto b = random_vec(k * m, rng);   // k x m
    std::vector<double> at(k * n), bt(m * k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < k; ++l) at[l * n + i] = a[i * k + l];
    for (std::size_t l = 0; l < k; ++l)
        for (std::size_t j = 0; j < m; ++j) bt[j * k + l] = b[l * m + j];

    std::vector<double> base(n * m), v1(n * m), v2(n * m), v3(n * m);
    kernels::matmul_serial(a.data(), b.data(), base.data(), n, k, m);
    kernels::matmul_serial(at.data(), b.data(), v1.data(), n, k, m, true, false);
    kernels::matmul_serial(a.data(), bt.data(), v2.data(), n, k, m, false, true);
    kernels::matmul_serial(at.data(), bt.data(), v3.data(), n, k, m, true, true);
    CHECK(v1 == base);
    CHECK(v2 == base);
    CHECK(v3 == base);
}

TEST_CASE("parallel kernels are bitwise identical to the serial references") {
    Rng rng(1234);
    // sizes straddling the parallelization cutoff
    for (std::size_t n : {4ul, 64ul, 128ul}) {
        std::size_t k = 96, m = 80;
        auto a = random_vec(n * k, rng);
        auto b = random_vec(k * m, rng);
        std::vector<double> serial(n * m), parallel(n * m);
        kernels::matmul_serial(a.data(), b.data(), serial.data(), n, k, m);
        kernels::matmul(a.data(), b.data(), parallel.data(), n, k, m);
        CHECK(serial == parallel);

        auto x = random_vec(n * k, rng);
        auto y = random_vec(m * k, rng);
        std::vector<double> ds(n * m), dp(n * m);
        kernels::pairwise_sqdist_serial(x.data(), n, y.data(), m, k, ds.data());
        kernels::pairwise_sqdist(x.data(), n, y.data(), m, k, dp.data());
        CHECK(ds == dp);

        std::vector<double> cs(n * m), cp(n * m);
        kernels::pairwise_cosine_serial(x.data(), n, y.data(), m, k, cs.data());
        kernels::pairwise_cosine(x.data(), n, y.data(), m, k, cp.data());
        CHECK(cs == cp);
    }
}

TEST_CASE("pairwise kernels compute what they claim") {
    Rng rng(5);
    std::size_t n = 3, m = 4, d = 6;
    auto x = random_vec(n * d, rng);
    auto y = random_vec(m * d, rng);
    std::vector<double> sq(n * m), cos(n * m);
    kernels::pairwise_sqdist(x.data(), n, y.data(), m, d, sq.data());
    kernels::pairwise_cosine(x.data(), n, y.data(), m, d, cos.data());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0, dot = 0.0, nx = 0.0, ny = 0.0;
            for (std::size_t l = 0; l < d; ++l) {
                double diff = x[i * d + l] - y[j * d + l];
                acc += diff * diff;
                dot += x[i * d + l] * y[j * d + l];
                nx += x[i * d + l] * x[i * d + l];
                ny += y[j * d + l] * y[j * d + l];
            }
            CHECK(sq[i * m + j] == doctest::Approx(acc).epsilon(1e-12));
            CHECK(cos[i * m + j] ==
                  doctest::Approx(dot / std::sqrt(nx * ny)).epsilon(1e-12));
        }
}
