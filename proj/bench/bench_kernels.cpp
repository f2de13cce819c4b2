// Times the serial reference kernels against the OpenMP versions.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "orthodistill/kernels.hpp"
#include "orthodistill/util.hpp"

using namespace orthodistill;
using clk = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    auto t0 = clk::now();
    for (int r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double, std::milli>(clk::now() - t0).count() / reps;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.gaussian();
    return v;
}

}  // namespace

int main() {
    Rng rng(20240601);
    std::printf("threads available: %d\n\n", kernels::max_threads());
    std::printf("%-28s %12s %12s %9s\n", "kernel", "serial ms", "parallel ms", "speedup");

    for (std::size_t n : {256ul, 512ul, 1024ul}) {
        std::size_t k = n, m = n;
        auto a = random_vec(n * k, rng);
        auto b = random_vec(k * m, rng);
        std::vector<double> c(n * m);
        int reps = n >= 1024 ? 3 : 10;
        double ts = time_ms([&] { kernels::matmul_serial(a.data(), b.data(), c.data(), n, k, m); },
                            reps);
        double tp = time_ms([&] { kernels::matmul(a.data(), b.data(), c.data(), n, k, m); }, reps);
        std::printf("matmul %4zux%-14zu %12.3f %12.3f %8.2fx\n", n, m, ts, tp, ts / tp);
    }

    for (std::size_t n : {1000ul, 4000ul}) {
        std::size_t m = n, d = 64;
        auto x = random_vec(n * d, rng);
        auto y = random_vec(m * d, rng);
        std::vector<double> out(n * m);
        double ts = time_ms(
            [&] { kernels::pairwise_sqdist_serial(x.data(), n, y.data(), m, d, out.data()); }, 5);
        double tp = time_ms(
            [&] { kernels::pairwise_sqdist(x.data(), n, y.data(), m, d, out.data()); }, 5);
        std::printf("pairwise_sqdist %zux%-8zu %12.3f %12.3f %8.2fx\n", n, m, ts, tp, ts / tp);

        ts = time_ms(
            [&] { kernels::pairwise_cosine_serial(x.data(), n, y.data(), m, d, out.data()); }, 5);
        tp = time_ms([&] { kernels::pairwise_cosine(x.data(), n, y.data(), m, d, out.data()); },
                     5);
        std::printf("pairwise_cosine %zux%-8zu %12.3f %12.3f %8.2fx\n", n, m, ts, tp, ts / tp);
    }
    return 0;
}
