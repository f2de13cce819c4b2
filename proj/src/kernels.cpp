#include "orthodistill/kernels.hpp"

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace orthodistill::kernels {

namespace {

// Below this many output elements the parallel entry points fall through
// to the serial loop; spawning a team costs more than the work.
constexpr std::size_t kParallelCutoff = 16 * 1024;

inline double cell(const double* p, std::size_t i, std::size_t j,
                   std::size_t rows, std::size_t cols, bool trans) {
    return trans ? p[j * rows + i] : p[i * cols + j];
}

inline void matmul_row(const double* a, const double* b, double* c,
                       std::size_t i, std::size_t k, std::size_t n, std::size_t m,
                       bool trans_a, bool trans_b) {
    for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < k; ++l)
            acc += cell(a, i, l, n, k, trans_a) * cell(b, l, j, k, m, trans_b);
        c[i * m + j] = acc;
    }
}

inline void sqdist_row(const double* x, const double* y, double* out,
                       std::size_t i, std::size_t m, std::size_t d) {
    for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < d; ++l) {
            double diff = x[i * d + l] - y[j * d + l];
            acc += diff * diff;
        }
        out[i * m + j] = acc;
    }
}

inline double row_inv_norm(const double* p, std::size_t i, std::size_t d, double eps) {
    double acc = 0.0;
    for (std::size_t l = 0; l < d; ++l) acc += p[i * d + l] * p[i * d + l];
    double n = std::sqrt(acc);
    return 1.0 / (n > eps ? n : eps);
}

inline void cosine_row(const double* x, const double* y, double* out,
                       std::size_t i, std::size_t m, std::size_t d,
                       double inv_nx, const double* inv_ny) {
    for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < d; ++l) acc += x[i * d + l] * y[j * d + l];
        out[i * m + j] = acc * inv_nx * inv_ny[j];
    }
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t n, std::size_t k, std::size_t m,
                   bool trans_a, bool trans_b) {
    for (std::size_t i = 0; i < n; ++i)
        matmul_row(a, b, c, i, k, n, m, trans_a, trans_b);
}

void matmul(const double* a, const double* b, double* c,
            std::size_t n, std::size_t k, std::size_t m,
            bool trans_a, bool trans_b) {
    if (n * m * k < kParallelCutoff) {
        matmul_serial(a, b, c, n, k, m, trans_a, trans_b);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        matmul_row(a, b, c, static_cast<std::size_t>(i), k, n, m, trans_a, trans_b);
}

void pairwise_sqdist_serial(const double* x, std::size_t n,
                            const double* y, std::size_t m,
                            std::size_t d, double* out) {
    for (std::size_t i = 0; i < n; ++i) sqdist_row(x, y, out, i, m, d);
}

void pairwise_sqdist(const double* x, std::size_t n,
                     const double* y, std::size_t m,
                     std::size_t d, double* out) {
    if (n * m * d < kParallelCutoff) {
        pairwise_sqdist_serial(x, n, y, m, d, out);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        sqdist_row(x, y, out, static_cast<std::size_t>(i), m, d);
}

void pairwise_cosine_serial(const double* x, std::size_t n,
                            const double* y, std::size_t m,
                            std::size_t d, double* out, double eps) {
    std::vector<double> inv_ny(m);
    for (std::size_t j = 0; j < m; ++j) inv_ny[j] = row_inv_norm(y, j, d, eps);
    for (std::size_t i = 0; i < n; ++i)
        cosine_row(x, y, out, i, m, d, row_inv_norm(x, i, d, eps), inv_ny.data());
}

void pairwise_cosine(const double* x, std::size_t n,
                     const double* y, std::size_t m,
                     std::size_t d, double* out, double eps) {
    if (n * m * d < kParallelCutoff) {
        pairwise_cosine_serial(x, n, y, m, d, out, eps);
        return;
    }
    std::vector<double> inv_ny(m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(m); ++j)
        inv_ny[j] = row_inv_norm(y, static_cast<std::size_t>(j), d, eps);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        cosine_row(x, y, out, static_cast<std::size_t>(i), m, d,
                   row_inv_norm(x, static_cast<std::size_t>(i), d, eps), inv_ny.data());
}

}  // namespace orthodistill::kernels
