#pragma once

#include <cstddef>

namespace orthodistill::kernels {

// Dense kernels used by the autodiff primitives and the metric stack.
// Each kernel exists twice: a serial reference and an OpenMP version that
// parallelizes over output rows. Every output element is written exactly
// once from a fixed-order inner loop, so the parallel versions are bitwise
// identical to the serial references for any thread count. Tests compare
// the two; the bench tool times them.

// c (n x m) = op(a) * op(b), contraction length k.
// a is stored n x k (or k x n when trans_a), b is k x m (or m x k when trans_b).
void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t n, std::size_t k, std::size_t m,
                   bool trans_a = false, bool trans_b = false);
void matmul(const double* a, const double* b, double* c,
            std::size_t n, std::size_t k, std::size_t m,
            bool trans_a = false, bool trans_b = false);

// out (n x m): squared Euclidean distances between rows of x (n x d) and y (m x d).
void pairwise_sqdist_serial(const double* x, std::size_t n,
                            const double* y, std::size_t m,
                            std::size_t d, double* out);
void pairwise_sqdist(const double* x, std::size_t n,
                     const double* y, std::size_t m,
                     std::size_t d, double* out);

// out (n x m): cosine similarities between rows of x and y; norms guarded by eps.
void pairwise_cosine_serial(const double* x, std::size_t n,
                            const double* y, std::size_t m,
                            std::size_t d, double* out, double eps = 1e-12);
void pairwise_cosine(const double* x, std::size_t n,
                     const double* y, std::size_t m,
                     std::size_t d, double* out, double eps = 1e-12);

int max_threads();

}  // namespace orthodistill::kernels
