#include "orthodistill/synthdata.hpp"

#include <cmath>
#include <stdexcept>

#include "orthodistill/kernels.hpp"
#include "orthodistill/util.hpp"

namespace orthodistill {

Tensor TokenSet::all_tokens() const {
    std::size_t d = dim(), np = n_patch();
    Tensor out({1 + np, d});
    for (std::size_t j = 0; j < d; ++j) out.at(0, j) = class_token[j];
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < d; ++j) out.at(1 + i, j) = patch_tokens.at(i, j);
    return out;
}

TokenSet make_token_set(Tensor class_token, Tensor patch_tokens) {
    if (class_token.rank() != 1)
        throw std::invalid_argument(cat("token set: class token must be rank-1, got ",
                                        class_token.shape_str()));
    if (patch_tokens.size() != 0 &&
        (patch_tokens.rank() != 2 || patch_tokens.cols() != class_token.size()))
        throw std::invalid_argument(cat("token set: patch tokens ", patch_tokens.shape_str(),
                                        " inconsistent with class token ",
                                        class_token.shape_str()));
    if (patch_tokens.size() == 0)
        patch_tokens = Tensor({0, class_token.size()});
    return TokenSet{std::move(class_token), std::move(patch_tokens)};
}

Dataset gen_token_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.n_classes < 2 || spec.n_samples < spec.n_classes)
        throw std::invalid_argument(cat("gen_token_dataset: need n_samples >= n_classes >= 2, got ",
                                        spec.n_samples, " and ", spec.n_classes));
    if (spec.d_in < 2)
        throw std::invalid_argument(cat("gen_token_dataset: need d_in >= 2, got ", spec.d_in));
    if (spec.class_separation < 0.0)
        throw std::invalid_argument("gen_token_dataset: class_separation must be >= 0");

    // class-mean unit directions, deterministic from the seed
    Rng mean_rng(mix_seed(seed, 0));
    std::vector<Tensor> means;
    means.reserve(spec.n_classes);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        Tensor dir({spec.d_in});
        double norm = 0.0;
        for (std::size_t j = 0; j < spec.d_in; ++j) {
            dir[j] = mean_rng.gaussian();
            norm += dir[j] * dir[j];
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) norm = 1.0;
        for (std::size_t j = 0; j < spec.d_in; ++j) dir[j] /= norm;
        means.push_back(std::move(dir));
    }

    Rng rng(mix_seed(seed, 1));
    Dataset data;
    data.n_classes = static_cast<int>(spec.n_classes);
    data.seed = seed;
    data.samples.reserve(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        int label = static_cast<int>(i % spec.n_classes);
        const Tensor& mu = means[static_cast<std::size_t>(label)];
        auto draw_token = [&](double* out) {
            for (std::size_t j = 0; j < spec.d_in; ++j)
                out[j] = spec.class_separation * mu[j] + rng.gaussian();
        };
        Tensor cls({spec.d_in});
        draw_token(cls.data());
        Tensor patches({spec.n_patch, spec.d_in});
        for (std::size_t p = 0; p < spec.n_patch; ++p) draw_token(patches.data() + p * spec.d_in);
        data.samples.push_back(Sample{TokenSet{std::move(cls), std::move(patches)}, label});
    }
    return data;
}

SyntheticTeacher make_teacher(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                              double class_offset_scale, std::uint64_t seed) {
    if (d_in == 0 || hidden == 0 || d_out == 0)
        throw std::invalid_argument("make_teacher: dimensions must be >= 1");
    Rng rng(mix_seed(seed, 7));
    SyntheticTeacher t;
    t.seed = seed;
    t.w1 = Tensor({d_in, hidden});
    // soft gain and small biases keep tanh out of saturation and the constant
    // output shift well below the signal, so the frozen map is roughly
    // distance-preserving the way a strong backbone is
    double s1 = 0.5 / std::sqrt(static_cast<double>(d_in));
    for (std::size_t i = 0; i < t.w1.size(); ++i) t.w1[i] = rng.gaussian() * s1;
    t.b1 = Tensor({hidden});
    for (std::size_t i = 0; i < hidden; ++i) t.b1[i] = 0.1 * rng.gaussian();
    t.w2 = Tensor({hidden, d_out});
    double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t i = 0; i < t.w2.size(); ++i) t.w2[i] = rng.gaussian() * s2;
    t.b2 = Tensor({d_out});
    for (std::size_t i = 0; i < d_out; ++i) t.b2[i] = 0.02 * rng.gaussian();
    t.class_offset = Tensor({d_out});
    double so = class_offset_scale / std::sqrt(static_cast<double>(d_out));
    for (std::size_t i = 0; i < d_out; ++i) t.class_offset[i] = so * rng.gaussian();
    return t;
}

Tensor mlp_forward_rows(const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2,
                        const Tensor& rows) {
    if (rows.rank() != 2 || rows.cols() != w1.rows())
        throw std::invalid_argument(cat("mlp_forward: input ", rows.shape_str(),
                                        " does not match first layer ", w1.shape_str()));
    std::size_t n = rows.rows(), h = w1.cols(), d_out = w2.cols();
    Tensor hidden({n, h});
    kernels::matmul(rows.data(), w1.data(), hidden.data(), n, rows.cols(), h);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < h; ++j) hidden.at(i, j) = std::tanh(hidden.at(i, j) + b1[j]);
    Tensor out({n, d_out});
    kernels::matmul(hidden.data(), w2.data(), out.data(), n, h, d_out);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d_out; ++j) out.at(i, j) += b2[j];
    return out;
}

TokenSet teacher_forward(const SyntheticTeacher& t, const TokenSet& x) {
    if (x.dim() != t.d_in())
        throw std::invalid_argument(cat("teacher_forward: token dim ", x.dim(),
                                        " does not match teacher d_in ", t.d_in()));
    Tensor mapped = mlp_forward_rows(t.w1, t.b1, t.w2, t.b2, x.all_tokens());
    std::size_t d = t.d_out(), np = x.n_patch();
    Tensor cls({d});
    for (std::size_t j = 0; j < d; ++j) cls[j] = mapped.at(0, j) + t.class_offset[j];
    Tensor patches({np, d});
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < d; ++j) patches.at(i, j) = mapped.at(1 + i, j);
    return TokenSet{std::move(cls), std::move(patches)};
}

std::vector<TokenSet> teacher_forward_all(const SyntheticTeacher& t, const Dataset& data) {
    std::vector<TokenSet> out(data.samples.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(data.samples.size()); ++i)
        out[static_cast<std::size_t>(i)] =
            teacher_forward(t, data.samples[static_cast<std::size_t>(i)].tokens);
    return out;
}

}  // namespace orthodistill
