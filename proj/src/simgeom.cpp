#include "orthodistill/simgeom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "orthodistill/kernels.hpp"
#include "orthodistill/util.hpp"

namespace orthodistill {

TemperatureSet::TemperatureSet(std::vector<double> taus) : taus_(std::move(taus)) {
    if (taus_.empty()) throw std::invalid_argument("temperature set: must be non-empty");
    for (std::size_t i = 0; i < taus_.size(); ++i) {
        if (!(taus_[i] > 0.0))
            throw std::invalid_argument(cat("temperature set: tau must be > 0, got ", taus_[i]));
        for (std::size_t j = 0; j < i; ++j)
            if (taus_[i] == taus_[j])
                throw std::invalid_argument(cat("temperature set: duplicate tau ", taus_[i]));
    }
}

TemperatureSet TemperatureSet::paper_default() {
    std::vector<double> taus;
    for (int i = 1; i <= 10; ++i) taus.push_back(static_cast<double>(i) / 100.0);
    return TemperatureSet(std::move(taus));
}

// ---- plain evaluations ------------------------------------------------------

namespace {

double vec_norm(const Tensor& v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * v[i];
    return std::sqrt(acc);
}

void require_vector_pair(const char* op, const Tensor& y, const Tensor& z) {
    if (y.rank() != 1 || z.rank() != 1 || y.size() != z.size())
        throw std::invalid_argument(cat(op, ": need equal-length vectors, got ", y.shape_str(),
                                        " vs ", z.shape_str()));
}

void require_point_rows(const char* op, const Tensor& pts) {
    if (pts.rank() != 2 || pts.rows() < 2)
        throw std::invalid_argument(cat(op, ": need an n x d point matrix with n >= 2, got ",
                                        pts.shape_str()));
}

void require_paired_rows(const char* op, const Tensor& z, const Tensor& y, bool same_dim) {
    if (z.rank() != 2 || y.rank() != 2 || z.rows() != y.rows() ||
        (same_dim && z.cols() != y.cols()))
        throw std::invalid_argument(cat(op, ": shape mismatch ", z.shape_str(), " vs ",
                                        y.shape_str()));
}

}  // namespace

double cosine_sim(const Tensor& y, const Tensor& z, double eps) {
    require_vector_pair("cosine_sim", y, z);
    double ny = vec_norm(y), nz = vec_norm(z);
    if (ny <= eps || nz <= eps)
        throw std::invalid_argument("cosine_sim: degenerate input (zero vector)");
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * z[i];
    return std::clamp(dot / (ny * nz), -1.0, 1.0);
}

double vmf_kernel(const Tensor& y, const Tensor& z, double tau, double eps) {
    if (!(tau > 0.0)) throw std::invalid_argument(cat("vmf_kernel: tau must be > 0, got ", tau));
    return std::exp(cosine_sim(y, z, eps) / tau);
}

SimilarityMatrix similarity_matrix(const Tensor& points, double tau) {
    require_point_rows("similarity_matrix", points);
    if (!(tau > 0.0))
        throw std::invalid_argument(cat("similarity_matrix: tau must be > 0, got ", tau));
    std::size_t n = points.rows(), d = points.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += points.at(i, j) * points.at(i, j);
        if (std::sqrt(acc) <= kGuardEps)
            throw std::invalid_argument(cat("similarity_matrix: zero vector at index ", i));
    }

    Tensor cos({n, n});
    kernels::pairwise_cosine(points.data(), n, points.data(), n, d, cos.data());

    // row-normalized conditionals with the diagonal excluded; max-shifted
    // exponentials so small temperatures stay finite
    Tensor cond({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -HUGE_VAL;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) mx = std::max(mx, cos.at(i, j) / tau);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                cond.at(i, j) = 0.0;
                continue;
            }
            double e = std::exp(cos.at(i, j) / tau - mx);
            cond.at(i, j) = e;
            denom += e;
        }
        denom = std::max(denom, kGuardEps);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) cond.at(i, j) /= denom;
    }

    SimilarityMatrix sim;
    sim.n = n;
    sim.tau = tau;
    sim.entries = Tensor({n, n});
    double inv = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            sim.entries.at(i, j) = (cond.at(i, j) + cond.at(j, i)) * inv;
    return sim;
}

double kl_divergence(const SimilarityMatrix& P, const SimilarityMatrix& Q, double eps) {
    if (P.n != Q.n || P.tau != Q.tau)
        throw std::invalid_argument(cat("kl_divergence: mismatched matrices (n ", P.n, " vs ",
                                        Q.n, ", tau ", P.tau, " vs ", Q.tau, ")"));
    double acc = 0.0;
    for (std::size_t i = 0; i < P.n; ++i)
        for (std::size_t j = 0; j < P.n; ++j) {
            if (i == j) continue;
            double p = P.entries.at(i, j);
            if (p <= 0.0) continue;  // 0 log 0 = 0
            double q = std::max(Q.entries.at(i, j), eps);
            acc += p * (std::log(std::max(p, eps)) - std::log(q));
        }
    return acc;
}

double kl_loss_multi_temp(const Tensor& p, const Tensor& q, const TemperatureSet& taus) {
    require_point_rows("kl_loss_multi_temp", p);
    require_point_rows("kl_loss_multi_temp", q);
    if (p.rows() != q.rows())
        throw std::invalid_argument(cat("kl_loss_multi_temp: point counts differ, ",
                                        p.shape_str(), " vs ", q.shape_str()));
    double acc = 0.0;
    for (double tau : taus.values())
        acc += kl_divergence(similarity_matrix(p, tau), similarity_matrix(q, tau));
    return acc / static_cast<double>(taus.size());
}

double cosine_set_loss(const Tensor& z, const Tensor& y) {
    require_paired_rows("cosine_set_loss", z, y, /*same_dim=*/true);
    std::size_t n = z.rows(), d = z.cols();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor zi({d}, std::vector<double>(z.data() + i * d, z.data() + (i + 1) * d));
        Tensor yi({d}, std::vector<double>(y.data() + i * d, y.data() + (i + 1) * d));
        acc += 1.0 - cosine_sim(zi, yi);
    }
    return acc / static_cast<double>(n);
}

double l2_set_loss(const Tensor& z, const Tensor& y) {
    require_paired_rows("l2_set_loss", z, y, /*same_dim=*/true);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        double diff = z[i] - y[i];
        acc += diff * diff;
    }
    return acc / static_cast<double>(z.size());
}

namespace {

Tensor stack_class_tokens(const std::vector<const TokenSet*>& batch) {
    std::size_t n = batch.size(), d = batch[0]->dim();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        if (batch[i]->dim() != d)
            throw std::invalid_argument("dim_red_loss: inconsistent token dimensions in batch");
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = batch[i]->class_token[j];
    }
    return out;
}

void require_dim_red_batch(const std::vector<const TokenSet*>& batch, bool feature_term) {
    if (batch.size() < 2)
        throw std::invalid_argument(cat("dim_red_loss: batch size must be >= 2, got ",
                                        batch.size()));
    if (feature_term)
        for (std::size_t i = 0; i < batch.size(); ++i)
            if (batch[i]->n_patch() < 1)
                throw std::invalid_argument(cat("dim_red_loss: sample ", i,
                                                " has fewer than 2 tokens with the feature term enabled"));
}

}  // namespace

double dim_red_loss(const std::vector<TokenSet>& batch, const HeadParams& h,
                    const TemperatureSet& taus, bool feature_term) {
    std::vector<const TokenSet*> ptrs;
    ptrs.reserve(batch.size());
    for (const TokenSet& t : batch) ptrs.push_back(&t);
    require_dim_red_batch(ptrs, feature_term);

    Tensor cls = stack_class_tokens(ptrs);
    double loss = kl_loss_multi_temp(cls, head_forward_rows(h, cls), taus);
    if (feature_term) {
        double acc = 0.0;
        for (const TokenSet* t : ptrs) {
            Tensor tokens = t->all_tokens();
            acc += kl_loss_multi_temp(tokens, head_forward_rows(h, tokens), taus);
        }
        loss += acc / static_cast<double>(ptrs.size());
    }
    return loss;
}

// ---- tape-recorded versions -------------------------------------------------

Var cosine_matrix(Var points) {
    require_point_rows("cosine_matrix", points.value());
    Var normed = colv_div(points, row_norms(points));
    return matmul(normed, transpose(normed));
}

Var similarity_from_cosines(Var cosines, double tau) {
    if (!(tau > 0.0))
        throw std::invalid_argument(cat("similarity_from_cosines: tau must be > 0, got ", tau));
    std::size_t n = cosines.value().rows();
    Var cond = row_softmax_nodiag(scale(cosines, 1.0 / tau));
    return scale(add(cond, transpose(cond)), 1.0 / (2.0 * static_cast<double>(n)));
}

Var similarity_matrix(Var points, double tau) {
    return similarity_from_cosines(cosine_matrix(points), tau);
}

Var kl_between(Var P, Var Q) {
    if (!P.value().same_shape(Q.value()))
        throw std::invalid_argument(cat("kl_between: shape mismatch ", P.value().shape_str(),
                                        " vs ", Q.value().shape_str()));
    // diagonals are exactly zero, so P * (log P - log Q) vanishes there and
    // no gradient leaks through the guarded logs
    return sum(mul(P, sub(log(P), log(Q))));
}

Var kl_loss_multi_temp(Var p, Var q, const TemperatureSet& taus) {
    require_point_rows("kl_loss_multi_temp", p.value());
    require_point_rows("kl_loss_multi_temp", q.value());
    if (p.value().rows() != q.value().rows())
        throw std::invalid_argument(cat("kl_loss_multi_temp: point counts differ, ",
                                        p.value().shape_str(), " vs ", q.value().shape_str()));
    Var cp = cosine_matrix(p);
    Var cq = cosine_matrix(q);
    Var acc{};
    bool first = true;
    for (double tau : taus.values()) {
        Var kl = kl_between(similarity_from_cosines(cp, tau), similarity_from_cosines(cq, tau));
        acc = first ? kl : add(acc, kl);
        first = false;
    }
    return scale(acc, 1.0 / static_cast<double>(taus.size()));
}

Var cosine_set_loss(Var z, Var y) {
    require_paired_rows("cosine_set_loss", z.value(), y.value(), /*same_dim=*/true);
    Var zn = colv_div(z, row_norms(z));
    Var yn = colv_div(y, row_norms(y));
    Var cos = row_sums(mul(zn, yn));
    return mean(add_scalar(scale(cos, -1.0), 1.0));
}

Var l2_set_loss(Var z, Var y) {
    require_paired_rows("l2_set_loss", z.value(), y.value(), /*same_dim=*/true);
    Var diff = sub(z, y);
    return mean(mul(diff, diff));
}

Var dim_red_loss(Tape& tape, const std::vector<const TokenSet*>& batch, const HeadVars& h,
                 const TemperatureSet& taus, bool feature_term) {
    require_dim_red_batch(batch, feature_term);
    Var cls = tape.constant(stack_class_tokens(batch));
    Var loss = kl_loss_multi_temp(cls, head_forward_rows(h, cls), taus);
    if (feature_term) {
        Var acc{};
        bool first = true;
        for (const TokenSet* t : batch) {
            Var tokens = tape.constant(t->all_tokens());
            Var kl = kl_loss_multi_temp(tokens, head_forward_rows(h, tokens), taus);
            acc = first ? kl : add(acc, kl);
            first = false;
        }
        loss = add(loss, scale(acc, 1.0 / static_cast<double>(batch.size())));
    }
    return loss;
}

}  // namespace orthodistill
