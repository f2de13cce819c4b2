#pragma once

#include <cstdint>
#include <vector>

#include "orthodistill/tensor.hpp"

namespace orthodistill {

// One sample's embeddings: a class token plus n_patch patch tokens, all of
// one dimensionality.
struct TokenSet {
    Tensor class_token;   // rank-1, length D
    Tensor patch_tokens;  // rank-2, n_patch x D (n_patch may be 0)

    std::size_t dim() const { return class_token.size(); }
    std::size_t n_patch() const { return patch_tokens.size() == 0 ? 0 : patch_tokens.rows(); }
    // class token first, then patch tokens, as a (1 + n_patch) x D matrix
    Tensor all_tokens() const;
};

TokenSet make_token_set(Tensor class_token, Tensor patch_tokens);  // validates dims

struct Sample {
    TokenSet tokens;
    int label = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    int n_classes = 0;
    std::uint64_t seed = 0;

    std::size_t size() const { return samples.size(); }
    std::size_t d_in() const { return samples.empty() ? 0 : samples.front().tokens.dim(); }
};

struct DatasetSpec {
    std::size_t n_samples = 0;
    std::size_t n_classes = 2;
    std::size_t d_in = 2;
    std::size_t n_patch = 0;
    double class_separation = 0.0;
};

// Tokens are drawn as (class-mean unit direction) * class_separation plus
// isotropic unit Gaussian noise, independently per token. Labels are
// assigned round-robin, so classes are balanced up to the remainder.
// Output is a pure function of (spec, seed).
Dataset gen_token_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Frozen stand-in for a large teacher backbone: a token-wise two-layer tanh
// network d_in -> d_out, plus a fixed offset added to the class-token output
// so class and patch statistics differ.
struct SyntheticTeacher {
    Tensor w1;            // d_in x hidden
    Tensor b1;            // hidden
    Tensor w2;            // hidden x d_out
    Tensor b2;            // d_out
    Tensor class_offset;  // d_out
    std::uint64_t seed = 0;

    std::size_t d_in() const { return w1.rows(); }
    std::size_t hidden() const { return w1.cols(); }
    std::size_t d_out() const { return w2.cols(); }
};

SyntheticTeacher make_teacher(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                              double class_offset_scale, std::uint64_t seed);

// tanh(x W1 + b1) W2 + b2 applied to each row
Tensor mlp_forward_rows(const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2,
                        const Tensor& rows);

TokenSet teacher_forward(const SyntheticTeacher& t, const TokenSet& x);

// Teacher outputs for a whole dataset; parallel over samples.
std::vector<TokenSet> teacher_forward_all(const SyntheticTeacher& t, const Dataset& data);

}  // namespace orthodistill
