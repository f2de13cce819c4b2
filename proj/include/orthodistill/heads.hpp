#pragma once

#include <cstdint>
#include <vector>

#include "orthodistill/autodiff.hpp"
#include "orthodistill/tensor.hpp"

namespace orthodistill {

enum class NormMode { layernorm, none };

inline constexpr double kLayerNormEps = 1e-6;

// Normalization-plus-linear head: u = norm(z); out = (u * gamma + beta1) W + beta2.
// Serves both the teacher head (D_T -> D_S) and the Proteus student heads
// (D_S -> D_T). The "none" mode skips normalization so that exact-zero
// oracle tests are possible; the default is standard layer normalization.
struct HeadParams {
    Tensor gamma;  // d_in
    Tensor beta1;  // d_in
    Tensor W;      // d_in x d_out
    Tensor beta2;  // d_out
    NormMode norm_mode = NormMode::layernorm;

    std::size_t d_in() const { return gamma.size(); }
    std::size_t d_out() const { return beta2.size(); }
};

// Fresh heads have beta1 = beta2 = 0 and gamma = 1 exactly; W entries are
// standard normal scaled by 1/sqrt(d_in).
HeadParams init_head(std::size_t d_in, std::size_t d_out, NormMode mode, std::uint64_t seed);

Tensor head_forward(const HeadParams& h, const Tensor& z);             // rank-1
Tensor head_forward_rows(const HeadParams& h, const Tensor& rows);     // n x d_in

// Tape-recorded mirror for training.
struct HeadVars {
    Var gamma, beta1, W, beta2;
    NormMode norm_mode = NormMode::layernorm;
};

HeadVars lift(Tape& tape, const HeadParams& h);
Var head_forward_rows(const HeadVars& h, Var rows);

// Parameter groups in a fixed order (gamma, beta1, W, beta2) for optimizers.
std::vector<Tensor*> param_ptrs(HeadParams& h);
std::vector<Var> param_vars(const HeadVars& h);

}  // namespace orthodistill
