#pragma once

#include <vector>

#include "orthodistill/autodiff.hpp"
#include "orthodistill/heads.hpp"
#include "orthodistill/synthdata.hpp"
#include "orthodistill/tensor.hpp"

namespace orthodistill {

// Ordered set of temperatures; strictly positive, no duplicates.
class TemperatureSet {
public:
    explicit TemperatureSet(std::vector<double> taus);
    TemperatureSet(std::initializer_list<double> taus)
        : TemperatureSet(std::vector<double>(taus)) {}

    const std::vector<double>& values() const { return taus_; }
    std::size_t size() const { return taus_.size(); }

    // [0.01, 0.02, ..., 0.10]
    static TemperatureSet paper_default();

private:
    std::vector<double> taus_;
};

// Symmetrized pairwise vMF-kernel affinities at one temperature.
// Invariants: exactly symmetric, zero diagonal, off-diagonal entries
// non-negative and summing to 1 up to roundoff.
struct SimilarityMatrix {
    std::size_t n = 0;
    double tau = 0.0;
    Tensor entries;  // n x n
};

// ---- plain evaluations ------------------------------------------------------

double cosine_sim(const Tensor& y, const Tensor& z, double eps = kGuardEps);
double vmf_kernel(const Tensor& y, const Tensor& z, double tau, double eps = kGuardEps);

// points: n x d matrix, one point per row, n >= 2, all rows nonzero.
SimilarityMatrix similarity_matrix(const Tensor& points, double tau);

// sum_{i != j} P_ij log(P_ij / Q_ij) with the 0 log 0 = 0 convention; logs
// are guarded by eps so the value can sit a hair below zero when many
// entries underflow the guard.
double kl_divergence(const SimilarityMatrix& P, const SimilarityMatrix& Q,
                     double eps = kGuardEps);

// mean over temperatures of KL(P^tau(p) || Q^tau(q)); p and q may live in
// spaces of different dimensionality but must have equal point counts.
double kl_loss_multi_temp(const Tensor& p, const Tensor& q, const TemperatureSet& taus);

double cosine_set_loss(const Tensor& z, const Tensor& y);  // rows paired; in [0, 2]
double l2_set_loss(const Tensor& z, const Tensor& y);      // mean over rows of mean sq. error

// Dimensionality-reduction loss for a batch of teacher token sets under head
// h: multi-temperature KL over class tokens across the batch, plus (when
// feature_term) the batch mean of the same loss over each sample's
// concatenated class+patch tokens; the head image is the target side.
double dim_red_loss(const std::vector<TokenSet>& batch, const HeadParams& h,
                    const TemperatureSet& taus, bool feature_term = true);

// ---- tape-recorded versions -------------------------------------------------

Var cosine_matrix(Var points);                        // n x n pairwise cosines
Var similarity_from_cosines(Var cosines, double tau); // one temperature layer
Var similarity_matrix(Var points, double tau);
Var kl_between(Var P, Var Q);                         // both built by similarity_from_cosines
Var kl_loss_multi_temp(Var p, Var q, const TemperatureSet& taus);
Var cosine_set_loss(Var z, Var y);
Var l2_set_loss(Var z, Var y);

// batch entries are recorded as constants on the tape; gradients flow into
// the head only.
Var dim_red_loss(Tape& tape, const std::vector<const TokenSet*>& batch, const HeadVars& h,
                 const TemperatureSet& taus, bool feature_term);

}  // namespace orthodistill
