#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "orthodistill/tensor.hpp"

namespace orthodistill {

// ---- scaled-Gram orthogonality ----------------------------------------------

enum class GramSide { wtw, wwt };

const char* gram_side_name(GramSide side);

struct GramReport {
    GramSide side = GramSide::wtw;
    double alpha = 0.0;  // mean of the diagonal of A
    double score = 0.0;  // ||A/alpha - I||_F
    std::size_t rows = 0, cols = 0;  // shape of W
};

// A = W^T W or W W^T; alpha = mean(diag A); score = ||A/alpha - I||_F.
// Scale-invariant: gram_orthogonality(c W) == gram_orthogonality(W).
GramReport gram_orthogonality(const Tensor& w, GramSide side);

struct GramDensity {
    std::vector<double> diagonal;      // entries of diag(A/alpha)
    std::vector<double> off_diagonal;  // remaining entries of A/alpha
};

GramDensity gram_density_data(const Tensor& w, GramSide side = GramSide::wtw);

// ---- kNN classification ------------------------------------------------------

// Cosine-distance majority vote; ties broken by smallest mean distance within
// the tied classes, then by lowest label id.
std::vector<int> knn_classify(const Tensor& train, const std::vector<int>& labels,
                              const Tensor& queries, std::size_t k);

double knn_accuracy(const Tensor& train, const std::vector<int>& labels, const Tensor& queries,
                    const std::vector<int>& truth, std::size_t k);

// ---- KNN+ OOD scoring ---------------------------------------------------------

// Distance to the k-th nearest point of a deterministic per-seed sample of
// the reference set; all embeddings L2-normalized first unless disabled.
// Higher score = more out-of-distribution.
std::vector<double> knn_plus_scores(const Tensor& reference, double fraction, std::size_t k,
                                    const Tensor& eval, std::uint64_t seed,
                                    bool normalize = true);

// Probability that a random OOD score exceeds a random ID score, ties 1/2
// (Mann-Whitney); invariant under strictly increasing score transforms.
double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores);

// Fraction of OOD scores at or below the 95th percentile of the ID scores
// (linear interpolation).
double fpr_at_95(const std::vector<double>& id_scores, const std::vector<double>& ood_scores);

struct OODResult {
    std::vector<double> id_scores, ood_scores;
    double auroc = 0.0;
    double fpr95 = 0.0;
    std::size_t k = 1;
    double fraction = 1.0;
};

OODResult ood_evaluate(const Tensor& reference, const Tensor& id_eval, const Tensor& ood_eval,
                       std::size_t k, double fraction, std::uint64_t seed, bool normalize = true);

// ---- Johnson-Lindenstrauss diagnostics ---------------------------------------

// f(x) = M x / sqrt(m) with M drawn entrywise from a standard normal.
struct JLMap {
    Tensor matrix;  // m x d
    std::uint64_t seed = 0;

    std::size_t d() const { return matrix.cols(); }
    std::size_t m() const { return matrix.rows(); }
};

JLMap jl_construct(std::size_t d, std::size_t m, std::uint64_t seed);
Tensor jl_apply(const JLMap& map, const Tensor& x);          // rank-1 d -> rank-1 m
Tensor jl_apply_rows(const JLMap& map, const Tensor& rows);  // n x d -> n x m

inline const std::vector<double>& jl_eps_grid() {
    static const std::vector<double> grid{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.40, 0.50};
    return grid;
}

struct JLNormReport {
    double mean_sq_norm = 0.0;               // mean of ||f(x)||^2 over trials
    std::vector<double> eps_grid;            // = jl_eps_grid()
    std::vector<double> success_fraction;    // P[ ||f(x)||^2 in (1 +- eps) ] per eps
};

// Fresh map and fresh random unit vector per trial.
JLNormReport jl_norm_preservation_check(std::size_t d, std::size_t m, std::size_t trials,
                                        std::uint64_t seed);

struct JLAngleReport {
    double median = 0.0, q25 = 0.0, q75 = 0.0, max_abs = 0.0;  // of |cos(f x, f y) - cos(x, y)|
};

JLAngleReport jl_angle_check(std::size_t d, std::size_t m, std::size_t trials,
                             std::uint64_t seed);

}  // namespace orthodistill
