#include "orthodistill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "orthodistill/kernels.hpp"
#include "orthodistill/util.hpp"

namespace orthodistill {

const char* gram_side_name(GramSide side) { return side == GramSide::wtw ? "wtw" : "wwt"; }

namespace {

Tensor gram_matrix(const Tensor& w, GramSide side) {
    if (w.rank() != 2)
        throw std::invalid_argument(cat("gram_orthogonality: need a matrix, got ", w.shape_str()));
    std::size_t r = w.rows(), c = w.cols();
    if (side == GramSide::wtw) {
        Tensor a({c, c});
        kernels::matmul(w.data(), w.data(), a.data(), c, r, c, true, false);
        return a;
    }
    Tensor a({r, r});
    kernels::matmul(w.data(), w.data(), a.data(), r, c, r, false, true);
    return a;
}

double diag_mean(const Tensor& a) {
    std::size_t n = a.rows();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a.at(i, i);
    return acc / static_cast<double>(n);
}

}  // namespace

GramReport gram_orthogonality(const Tensor& w, GramSide side) {
    Tensor a = gram_matrix(w, side);
    double alpha = diag_mean(a);
    if (!(alpha > 0.0)) throw std::invalid_argument("gram_orthogonality: zero matrix");
    std::size_t n = a.rows();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double v = a.at(i, j) / alpha - (i == j ? 1.0 : 0.0);
            acc += v * v;
        }
    return GramReport{side, alpha, std::sqrt(acc), w.rows(), w.cols()};
}

GramDensity gram_density_data(const Tensor& w, GramSide side) {
    Tensor a = gram_matrix(w, side);
    double alpha = diag_mean(a);
    if (!(alpha > 0.0)) throw std::invalid_argument("gram_density_data: zero matrix");
    std::size_t n = a.rows();
    GramDensity out;
    out.diagonal.reserve(n);
    out.off_diagonal.reserve(n * (n - 1));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            (i == j ? out.diagonal : out.off_diagonal).push_back(a.at(i, j) / alpha);
    return out;
}

// ---- kNN ----------------------------------------------------------------------

std::vector<int> knn_classify(const Tensor& train, const std::vector<int>& labels,
                              const Tensor& queries, std::size_t k) {
    if (train.rank() != 2 || train.rows() == 0)
        throw std::invalid_argument("knn_classify: empty train set");
    if (labels.size() != train.rows())
        throw std::invalid_argument(cat("knn_classify: ", labels.size(), " labels for ",
                                        train.rows(), " train points"));
    if (k < 1 || k > train.rows())
        throw std::invalid_argument(cat("knn_classify: k = ", k, " out of range for train size ",
                                        train.rows()));
    if (queries.rank() != 2 || queries.cols() != train.cols())
        throw std::invalid_argument(cat("knn_classify: query shape ", queries.shape_str(),
                                        " vs train ", train.shape_str()));

    int n_classes = 0;
    for (int l : labels) n_classes = std::max(n_classes, l + 1);

    std::size_t nq = queries.rows(), nt = train.rows();
    Tensor cos({nq, nt});
    kernels::pairwise_cosine(queries.data(), nq, train.data(), nt, queries.cols(), cos.data());

    std::vector<int> pred(nq, 0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t qi = 0; qi < static_cast<std::ptrdiff_t>(nq); ++qi) {
        std::size_t q = static_cast<std::size_t>(qi);
        std::vector<std::size_t> order(nt);
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto closer = [&](std::size_t a, std::size_t b) {
            double da = 1.0 - cos.at(q, a), db = 1.0 - cos.at(q, b);
            if (da != db) return da < db;
            return a < b;
        };
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                          order.end(), closer);

        std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
        std::vector<double> dist_sum(static_cast<std::size_t>(n_classes), 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            int l = labels[order[i]];
            votes[static_cast<std::size_t>(l)] += 1;
            dist_sum[static_cast<std::size_t>(l)] += 1.0 - cos.at(q, order[i]);
        }
        int best = -1;
        for (int c = 0; c < n_classes; ++c) {
            std::size_t cc = static_cast<std::size_t>(c);
            if (votes[cc] == 0) continue;
            if (best < 0) {
                best = c;
                continue;
            }
            std::size_t bb = static_cast<std::size_t>(best);
            if (votes[cc] > votes[bb]) {
                best = c;
            } else if (votes[cc] == votes[bb]) {
                double mc = dist_sum[cc] / votes[cc], mb = dist_sum[bb] / votes[bb];
                if (mc < mb) best = c;  // equal mean keeps the lower label id
            }
        }
        pred[q] = best;
    }
    return pred;
}

double knn_accuracy(const Tensor& train, const std::vector<int>& labels, const Tensor& queries,
                    const std::vector<int>& truth, std::size_t k) {
    if (truth.size() != queries.rows())
        throw std::invalid_argument("knn_accuracy: truth length does not match queries");
    std::vector<int> pred = knn_classify(train, labels, queries, k);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// ---- KNN+ -----------------------------------------------------------------------

namespace {

Tensor l2_normalize_rows(const Tensor& rows) {
    Tensor out = rows;
    std::size_t n = rows.rows(), d = rows.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += out.at(i, j) * out.at(i, j);
        double norm = std::sqrt(acc);
        double inv = 1.0 / (norm > 1e-12 ? norm : 1e-12);
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) *= inv;
    }
    return out;
}

}  // namespace

std::vector<double> knn_plus_scores(const Tensor& reference, double fraction, std::size_t k,
                                    const Tensor& eval, std::uint64_t seed, bool normalize) {
    if (reference.rank() != 2 || eval.rank() != 2 || reference.cols() != eval.cols())
        throw std::invalid_argument(cat("knn_plus_scores: shape mismatch ", reference.shape_str(),
                                        " vs ", eval.shape_str()));
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument(cat("knn_plus_scores: fraction must be in (0, 1], got ",
                                        fraction));

    std::size_t n_ref = reference.rows();
    std::size_t n_keep = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(n_ref)));
    if (n_keep > n_ref) n_keep = n_ref;
    if (n_keep == 0)
        throw std::invalid_argument("knn_plus_scores: empty reference after sampling");
    if (k < 1 || k > n_keep)
        throw std::invalid_argument(cat("knn_plus_scores: k = ", k,
                                        " out of range for sampled reference size ", n_keep));

    std::vector<std::size_t> idx(n_ref);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(mix_seed(seed, 23));
    deterministic_shuffle(idx, rng);
    idx.resize(n_keep);

    std::size_t d = reference.cols();
    Tensor sampled({n_keep, d});
    for (std::size_t i = 0; i < n_keep; ++i)
        for (std::size_t j = 0; j < d; ++j) sampled.at(i, j) = reference.at(idx[i], j);

    Tensor ref_n = normalize ? l2_normalize_rows(sampled) : sampled;
    Tensor eval_n = normalize ? l2_normalize_rows(eval) : eval;

    std::size_t n_eval = eval.rows();
    std::vector<double> scores(n_eval, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ei = 0; ei < static_cast<std::ptrdiff_t>(n_eval); ++ei) {
        std::size_t e = static_cast<std::size_t>(ei);
        std::vector<double> dist(n_keep);
        for (std::size_t r = 0; r < n_keep; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double diff = eval_n.at(e, j) - ref_n.at(r, j);
                acc += diff * diff;
            }
            dist[r] = acc;
        }
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1),
                         dist.end());
        scores[e] = std::sqrt(std::max(dist[k - 1], 0.0));
    }
    return scores;
}

double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
    if (id_scores.empty() || ood_scores.empty())
        throw std::invalid_argument("auroc: empty input");
    double wins = 0.0;
    for (double o : ood_scores)
        for (double i : id_scores) {
            if (o > i)
                wins += 1.0;
            else if (o == i)
                wins += 0.5;
        }
    return wins / (static_cast<double>(id_scores.size()) * static_cast<double>(ood_scores.size()));
}

namespace {

// percentile with linear interpolation on the sorted sample
double percentile(std::vector<double> xs, double p) {
    std::sort(xs.begin(), xs.end());
    if (xs.size() == 1) return xs[0];
    double rank = p * static_cast<double>(xs.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    std::size_t hi = std::min(lo + 1, xs.size() - 1);
    double frac = rank - static_cast<double>(lo);
    return xs[lo] + frac * (xs[hi] - xs[lo]);
}

}  // namespace

double fpr_at_95(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
    if (id_scores.empty() || ood_scores.empty())
        throw std::invalid_argument("fpr_at_95: empty input");
    double threshold = percentile(id_scores, 0.95);
    std::size_t accepted = 0;
    for (double o : ood_scores)
        if (o <= threshold) ++accepted;
    return static_cast<double>(accepted) / static_cast<double>(ood_scores.size());
}

OODResult ood_evaluate(const Tensor& reference, const Tensor& id_eval, const Tensor& ood_eval,
                       std::size_t k, double fraction, std::uint64_t seed, bool normalize) {
    OODResult res;
    res.k = k;
    res.fraction = fraction;
    res.id_scores = knn_plus_scores(reference, fraction, k, id_eval, seed, normalize);
    res.ood_scores = knn_plus_scores(reference, fraction, k, ood_eval, seed, normalize);
    res.auroc = auroc(res.id_scores, res.ood_scores);
    res.fpr95 = fpr_at_95(res.id_scores, res.ood_scores);
    return res;
}

// ---- Johnson-Lindenstrauss -------------------------------------------------------

JLMap jl_construct(std::size_t d, std::size_t m, std::uint64_t seed) {
    if (d == 0 || m == 0)
        throw std::invalid_argument(cat("jl_construct: dimensions must be >= 1, got d=", d,
                                        " m=", m));
    JLMap map;
    map.seed = seed;
    map.matrix = Tensor({m, d});
    Rng rng(mix_seed(seed, 31));
    for (std::size_t i = 0; i < map.matrix.size(); ++i) map.matrix[i] = rng.gaussian();
    return map;
}

Tensor jl_apply(const JLMap& map, const Tensor& x) {
    if (x.rank() != 1 || x.size() != map.d())
        throw std::invalid_argument(cat("jl_apply: input ", x.shape_str(),
                                        " does not match map d=", map.d()));
    std::size_t m = map.m(), d = map.d();
    double inv = 1.0 / std::sqrt(static_cast<double>(m));
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += map.matrix.at(i, j) * x[j];
        out[i] = acc * inv;
    }
    return out;
}

Tensor jl_apply_rows(const JLMap& map, const Tensor& rows) {
    if (rows.rank() != 2 || rows.cols() != map.d())
        throw std::invalid_argument(cat("jl_apply_rows: input ", rows.shape_str(),
                                        " does not match map d=", map.d()));
    std::size_t n = rows.rows(), m = map.m(), d = map.d();
    Tensor out({n, m});
    kernels::matmul(rows.data(), map.matrix.data(), out.data(), n, d, m, false, true);
    double inv = 1.0 / std::sqrt(static_cast<double>(m));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
    return out;
}

namespace {

// Random unit vector; the zero-draw event has probability zero but the norm
// is guarded anyway.
void random_unit(Rng& rng, double* out, std::size_t d) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        out[j] = rng.gaussian();
        norm += out[j] * out[j];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        out[0] = 1.0;
        for (std::size_t j = 1; j < d; ++j) out[j] = 0.0;
        return;
    }
    for (std::size_t j = 0; j < d; ++j) out[j] /= norm;
}

}  // namespace

JLNormReport jl_norm_preservation_check(std::size_t d, std::size_t m, std::size_t trials,
                                        std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("jl_norm_preservation_check: trials must be >= 1");
    std::vector<double> sq_norms(trials, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ti = 0; ti < static_cast<std::ptrdiff_t>(trials); ++ti) {
        std::size_t trial = static_cast<std::size_t>(ti);
        Rng rng(mix_seed(seed, 1000 + trial));
        std::vector<double> mat(m * d);
        for (double& v : mat) v = rng.gaussian();
        std::vector<double> x(d);
        random_unit(rng, x.data(), d);
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < d; ++j) row += mat[i * d + j] * x[j];
            acc += row * row;
        }
        sq_norms[trial] = acc / static_cast<double>(m);
    }

    JLNormReport rep;
    rep.eps_grid = jl_eps_grid();
    rep.success_fraction.assign(rep.eps_grid.size(), 0.0);
    double mean_acc = 0.0;
    for (double v : sq_norms) {
        mean_acc += v;
        for (std::size_t e = 0; e < rep.eps_grid.size(); ++e)
            if (std::abs(v - 1.0) <= rep.eps_grid[e]) rep.success_fraction[e] += 1.0;
    }
    rep.mean_sq_norm = mean_acc / static_cast<double>(trials);
    for (double& f : rep.success_fraction) f /= static_cast<double>(trials);
    return rep;
}

JLAngleReport jl_angle_check(std::size_t d, std::size_t m, std::size_t trials,
                             std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("jl_angle_check: trials must be >= 1");
    std::vector<double> distortion(trials, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ti = 0; ti < static_cast<std::ptrdiff_t>(trials); ++ti) {
        std::size_t trial = static_cast<std::size_t>(ti);
        Rng rng(mix_seed(seed, 5000 + trial));
        std::vector<double> mat(m * d);
        for (double& v : mat) v = rng.gaussian();
        std::vector<double> x(d), y(d);
        random_unit(rng, x.data(), d);
        random_unit(rng, y.data(), d);
        double cos_in = 0.0;
        for (std::size_t j = 0; j < d; ++j) cos_in += x[j] * y[j];

        double fx_fy = 0.0, fx_fx = 0.0, fy_fy = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double rx = 0.0, ry = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                rx += mat[i * d + j] * x[j];
                ry += mat[i * d + j] * y[j];
            }
            fx_fy += rx * ry;
            fx_fx += rx * rx;
            fy_fy += ry * ry;
        }
        double denom = std::sqrt(fx_fx) * std::sqrt(fy_fy);
        double cos_out = denom > 1e-12 ? fx_fy / denom : 0.0;
        distortion[trial] = std::abs(cos_out - cos_in);
    }

    std::sort(distortion.begin(), distortion.end());
    auto quantile = [&](double p) {
        double rank = p * static_cast<double>(distortion.size() - 1);
        std::size_t lo = static_cast<std::size_t>(std::floor(rank));
        std::size_t hi = std::min(lo + 1, distortion.size() - 1);
        double frac = rank - static_cast<double>(lo);
        return distortion[lo] + frac * (distortion[hi] - distortion[lo]);
    };
    JLAngleReport rep;
    rep.median = quantile(0.5);
    rep.q25 = quantile(0.25);
    rep.q75 = quantile(0.75);
    rep.max_abs = distortion.back();
    return rep;
}

}  // namespace orthodistill
