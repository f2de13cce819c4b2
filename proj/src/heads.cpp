#include "orthodistill/heads.hpp"

#include <cmath>
#include <stdexcept>

#include "orthodistill/kernels.hpp"
#include "orthodistill/util.hpp"

namespace orthodistill {

HeadParams init_head(std::size_t d_in, std::size_t d_out, NormMode mode, std::uint64_t seed) {
    if (d_in == 0 || d_out == 0)
        throw std::invalid_argument(cat("init_head: dimensions must be >= 1, got ", d_in, " x ", d_out));
    HeadParams h;
    h.norm_mode = mode;
    h.gamma = Tensor::ones({d_in});
    h.beta1 = Tensor::zeros({d_in});
    h.beta2 = Tensor::zeros({d_out});
    h.W = Tensor({d_in, d_out});
    Rng rng(mix_seed(seed, 11));
    double s = 1.0 / std::sqrt(static_cast<double>(d_in));
    for (std::size_t i = 0; i < h.W.size(); ++i) h.W[i] = rng.gaussian() * s;
    return h;
}

namespace {
void require_head_input(const HeadParams& h, const Tensor& rows) {
    if (rows.rank() != 2 || rows.cols() != h.d_in())
        throw std::invalid_argument(cat("head_forward: input ", rows.shape_str(),
                                        " does not match head d_in ", h.d_in()));
}
}  // namespace

Tensor head_forward_rows(const HeadParams& h, const Tensor& rows) {
    require_head_input(h, rows);
    std::size_t n = rows.rows(), d = h.d_in(), d_out = h.d_out();
    Tensor pre({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        if (h.norm_mode == NormMode::layernorm) {
            double mu = 0.0;
            for (std::size_t j = 0; j < d; ++j) mu += rows.at(i, j);
            mu /= static_cast<double>(d);
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double c = rows.at(i, j) - mu;
                var += c * c;
            }
            var /= static_cast<double>(d);
            double inv = 1.0 / std::sqrt(var + kLayerNormEps);
            for (std::size_t j = 0; j < d; ++j)
                pre.at(i, j) = (rows.at(i, j) - mu) * inv * h.gamma[j] + h.beta1[j];
        } else {
            for (std::size_t j = 0; j < d; ++j)
                pre.at(i, j) = rows.at(i, j) * h.gamma[j] + h.beta1[j];
        }
    }
    Tensor out({n, d_out});
    kernels::matmul(pre.data(), h.W.data(), out.data(), n, d, d_out);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d_out; ++j) out.at(i, j) += h.beta2[j];
    return out;
}

Tensor head_forward(const HeadParams& h, const Tensor& z) {
    if (z.rank() != 1 || z.size() != h.d_in())
        throw std::invalid_argument(cat("head_forward: input ", z.shape_str(),
                                        " does not match head d_in ", h.d_in()));
    Tensor rows({1, z.size()}, std::vector<double>(z.data(), z.data() + z.size()));
    Tensor out = head_forward_rows(h, rows);
    return Tensor({h.d_out()}, std::vector<double>(out.data(), out.data() + out.size()));
}

HeadVars lift(Tape& tape, const HeadParams& h) {
    return HeadVars{tape.leaf(h.gamma), tape.leaf(h.beta1), tape.leaf(h.W), tape.leaf(h.beta2),
                    h.norm_mode};
}

Var head_forward_rows(const HeadVars& h, Var rows) {
    Var u = rows;
    if (h.norm_mode == NormMode::layernorm) {
        Var mu = rows_mean(rows);
        Var centered = colv_sub(rows, mu);
        Var var = rows_mean(mul(centered, centered));
        Var denom = sqrt(add_scalar(var, kLayerNormEps));
        u = colv_div(centered, denom);
    }
    Var affine = rows_add(rows_mul(u, h.gamma), h.beta1);
    return rows_add(matmul(affine, h.W), h.beta2);
}

std::vector<Tensor*> param_ptrs(HeadParams& h) { return {&h.gamma, &h.beta1, &h.W, &h.beta2}; }

std::vector<Var> param_vars(const HeadVars& h) { return {h.gamma, h.beta1, h.W, h.beta2}; }

}  // namespace orthodistill
