#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "orthodistill/metrics.hpp"
#include "orthodistill/util.hpp"
#include "oracles.hpp"

using namespace orthodistill;

namespace {
Tensor random_rows(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
    Tensor t({n, d});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian() * scale;
    return t;
}
}  // namespace

TEST_CASE("gram score vanishes for scaled orthogonal maps and shows the rectangular asymmetry") {
    Rng rng(1);
    Tensor q = oracle::orthonormal_columns(6, 6, rng);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] *= 3.7;
    CHECK(gram_orthogonality(q, GramSide::wtw).score < 1e-10);
    CHECK(gram_orthogonality(q, GramSide::wwt).score < 1e-10);

    for (auto [dt, ds] : std::vector<std::pair<std::size_t, std::size_t>>{{8, 4}, {64, 16}}) {
        Tensor w = oracle::orthonormal_columns(dt, ds, rng);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] *= 1.9;
        GramReport in_side = gram_orthogonality(w, GramSide::wtw);
        GramReport out_side = gram_orthogonality(w, GramSide::wwt);
        CHECK(in_side.score < 1e-10);
        double want = std::sqrt(static_cast<double>((dt - ds) * dt) / static_cast<double>(ds));
        CHECK(out_side.score == doctest::Approx(want).epsilon(1e-10));
        CHECK(in_side.rows == dt);
        CHECK(in_side.cols == ds);
    }
}

TEST_CASE("gram score matches a direct dense oracle on a large random matrix") {
    Rng rng(2);
    Tensor w = random_rows(384, 768, rng);
    GramReport rep = gram_orthogonality(w, GramSide::wtw);

    // naive triple-loop evaluation
    std::size_t d = 768;
    std::vector<double> a(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < 384; ++r) acc += w.at(r, i) * w.at(r, j);
            a[i * d + j] = acc;
        }
    double alpha = 0.0;
    for (std::size_t i = 0; i < d; ++i) alpha += a[i * d + i];
    alpha /= static_cast<double>(d);
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double v = a[i * d + j] / alpha - (i == j ? 1.0 : 0.0);
            acc += v * v;
        }
    CHECK(rep.alpha == doctest::Approx(alpha).epsilon(1e-12));
    CHECK(rep.score == doctest::Approx(std::sqrt(acc)).epsilon(1e-9));
}

TEST_CASE("gram score is scale invariant and rejects the zero matrix") {
    Rng rng(3);
    Tensor w = random_rows(10, 6, rng);
    GramReport base = gram_orthogonality(w, GramSide::wtw);
    Tensor scaled = w;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= -17.5;
    CHECK(gram_orthogonality(scaled, GramSide::wtw).score ==
          doctest::Approx(base.score).epsilon(1e-10));
    CHECK_THROWS_AS(gram_orthogonality(Tensor::zeros({4, 3}), GramSide::wtw),
                    std::invalid_argument);
}

TEST_CASE("gram density data: identity case, counts, and score identity") {
    std::size_t d = 5;
    Tensor eye = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < d; ++i) eye.at(i, i) = 1.0;
    GramDensity gd = gram_density_data(eye);
    CHECK(gd.diagonal.size() == d);
    CHECK(gd.off_diagonal.size() == d * (d - 1));
    for (double v : gd.diagonal) CHECK(v == doctest::Approx(1.0));
    for (double v : gd.off_diagonal) CHECK(v == doctest::Approx(0.0));

    Rng rng(4);
    Tensor w = random_rows(9, 4, rng);
    GramDensity gw = gram_density_data(w, GramSide::wtw);
    double acc = 0.0;
    for (double v : gw.diagonal) acc += (v - 1.0) * (v - 1.0);
    for (double v : gw.off_diagonal) acc += v * v;
    double score = gram_orthogonality(w, GramSide::wtw).score;
    CHECK(score * score == doctest::Approx(acc).epsilon(1e-10));
}

TEST_CASE("knn classification basics") {
    Rng rng(5);
    Tensor train = random_rows(20, 4, rng);
    std::vector<int> labels(20);
    for (std::size_t i = 0; i < 20; ++i) labels[i] = static_cast<int>(i % 4);

    // query equal to a train point at k = 1 returns that point's label
    Tensor q({1, 4});
    for (std::size_t j = 0; j < 4; ++j) q.at(0, j) = train.at(7, j);
    CHECK(knn_classify(train, labels, q, 1)[0] == labels[7]);

    CHECK_THROWS_AS(knn_classify(train, labels, q, 0), std::invalid_argument);
    CHECK_THROWS_AS(knn_classify(train, labels, q, 21), std::invalid_argument);
    CHECK_THROWS_AS(knn_classify(Tensor({0, 4}), {}, q, 1), std::invalid_argument);
}

TEST_CASE("knn separates well-separated clusters (brute-force oracle)") {
    Rng rng(6);
    std::size_t n = 500, d = 8;
    Tensor pts({n, d});
    std::vector<int> labels(n);
    Tensor centers = random_rows(2, d, rng);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % 2);
        double nrm = 0.0;
        for (std::size_t j = 0; j < d; ++j) nrm += centers.at(labels[i], j) * centers.at(labels[i], j);
        nrm = std::sqrt(nrm);
        for (std::size_t j = 0; j < d; ++j)
            pts.at(i, j) = 50.0 * centers.at(labels[i], j) / nrm + rng.gaussian();
    }
    Tensor train({250, d}), query({250, d});
    std::vector<int> train_labels(250), truth(250);
    for (std::size_t i = 0; i < 250; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            train.at(i, j) = pts.at(i, j);
            query.at(i, j) = pts.at(250 + i, j);
        }
        train_labels[i] = labels[i];
        truth[i] = labels[250 + i];
    }
    double acc = knn_accuracy(train, train_labels, query, truth, 1);
    CHECK(acc > 0.99);
    // oracle agreement at k = 1
    std::vector<int> pred = knn_classify(train, train_labels, query, 1);
    for (std::size_t i = 0; i < 250; ++i)
        CHECK(pred[i] == oracle::nn1_label(train, train_labels, query.data() + i * d, d));
}

TEST_CASE("knn tie-break: k = train size, balanced labels, lowest mean distance wins") {
    // two classes, balanced; class 1 sits closer to the query on average
    Tensor train({4, 2}, {1.0, 0.0, 0.0, 1.0,     // class 0: one near, one far
                          0.9, 0.1, 0.8, 0.2});   // class 1: both near
    std::vector<int> labels{0, 0, 1, 1};
    Tensor q({1, 2}, {1.0, 0.0});
    CHECK(knn_classify(train, labels, q, 4)[0] == 1);

    // exact tie on mean distance resolves to the lowest label id
    Tensor sym({2, 2}, {1.0, 0.0, 1.0, 0.0});
    std::vector<int> sym_labels{1, 0};
    CHECK(knn_classify(sym, sym_labels, q, 2)[0] == 0);
}

TEST_CASE("knn+ scores: exact zero, brute-force parity, separation") {
    Rng rng(7);
    std::size_t d = 5;
    Tensor ref = random_rows(200, d, rng);

    Tensor eval({1, d});
    for (std::size_t j = 0; j < d; ++j) eval.at(0, j) = ref.at(13, j);
    std::vector<double> s = knn_plus_scores(ref, 1.0, 1, eval, 3);
    CHECK(s[0] == 0.0);

    // fraction=1, k=1 equals brute-force nearest-neighbour distance on
    // normalized embeddings
    Tensor queries = random_rows(50, d, rng);
    std::vector<double> scores = knn_plus_scores(ref, 1.0, 1, queries, 3);
    Tensor ref_n = ref, q_n = queries;
    for (Tensor* t : {&ref_n, &q_n})
        for (std::size_t i = 0; i < t->rows(); ++i) {
            double nrm = 0.0;
            for (std::size_t j = 0; j < d; ++j) nrm += t->at(i, j) * t->at(i, j);
            nrm = std::sqrt(nrm);
            for (std::size_t j = 0; j < d; ++j) t->at(i, j) /= nrm;
        }
    for (std::size_t i = 0; i < 50; ++i)
        CHECK(std::abs(scores[i] - oracle::nearest_distance(ref_n, q_n.data() + i * d, d)) <
              1e-12);

    // a far-away cluster scores above every in-distribution point
    Tensor far = random_rows(20, d, rng);
    for (std::size_t i = 0; i < far.rows(); ++i) far.at(i, 0) += 400.0;
    std::vector<double> id_scores = knn_plus_scores(ref, 1.0, 1, queries, 3, false);
    std::vector<double> ood_scores = knn_plus_scores(ref, 1.0, 1, far, 3, false);
    double max_id = *std::max_element(id_scores.begin(), id_scores.end());
    double min_ood = *std::min_element(ood_scores.begin(), ood_scores.end());
    CHECK(min_ood > max_id);

    CHECK_THROWS_AS(knn_plus_scores(ref, 0.0, 1, queries, 3), std::invalid_argument);
    CHECK_THROWS_AS(knn_plus_scores(ref, 0.001, 1, queries, 3), std::invalid_argument);
    CHECK_THROWS_AS(knn_plus_scores(ref, 1.0, 500, queries, 3), std::invalid_argument);

    // sampling is deterministic per seed
    std::vector<double> sf1 = knn_plus_scores(ref, 0.25, 2, queries, 11);
    std::vector<double> sf2 = knn_plus_scores(ref, 0.25, 2, queries, 11);
    CHECK(sf1 == sf2);
}

TEST_CASE("auroc: endpoints, the enumerated 5/6 instance, invariance") {
    CHECK(auroc({1, 2, 3}, {4, 5}) == 1.0);
    CHECK(auroc({1, 2, 3}, {1, 2, 3}) == 0.5);
    CHECK(auroc({1, 2, 3}, {2.5, 3.5}) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK_THROWS_AS(auroc({}, {1.0}), std::invalid_argument);

    Rng rng(8);
    std::vector<double> id(40), ood(30);
    for (double& v : id) v = rng.gaussian();
    for (double& v : ood) v = rng.gaussian() + 0.5;
    double base = auroc(id, ood);
    auto transform = [](std::vector<double> v) {
        for (double& x : v) x = std::exp(0.7 * x) + 3.0;  // strictly increasing
        return v;
    };
    CHECK(auroc(transform(id), transform(ood)) == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("fpr at 95: endpoints and the counted instance") {
    CHECK(fpr_at_95({1, 2, 3}, {4, 5, 6}) == 0.0);

    std::vector<double> same(100);
    for (std::size_t i = 0; i < 100; ++i) same[i] = static_cast<double>(i);
    CHECK(fpr_at_95(same, same) == doctest::Approx(0.95).epsilon(0.02));

    std::vector<double> id(100, 0.0), ood(100, 0.0);
    for (std::size_t i = 90; i < 100; ++i) ood[i] = 1.0;
    CHECK(fpr_at_95(id, ood) == doctest::Approx(0.90).epsilon(1e-15));
}

TEST_CASE("jl map: construction, linearity, entry statistics") {
    JLMap map = jl_construct(8, 4, 5);
    CHECK(map.d() == 8);
    CHECK(map.m() == 4);
    Tensor zero = jl_apply(map, Tensor::zeros({8}));
    for (std::size_t i = 0; i < 4; ++i) CHECK(zero[i] == 0.0);

    Rng rng(9);
    Tensor x({8}), y({8});
    for (std::size_t i = 0; i < 8; ++i) {
        x[i] = rng.gaussian();
        y[i] = rng.gaussian();
    }
    Tensor fx = jl_apply(map, x), fy = jl_apply(map, y);
    Tensor combo({8});
    for (std::size_t i = 0; i < 8; ++i) combo[i] = 2.5 * x[i] - 1.25 * y[i];
    Tensor fc = jl_apply(map, combo);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(std::abs(fc[i] - (2.5 * fx[i] - 1.25 * fy[i])) < 1e-12);

    // sample variance of one million standard-normal entries
    JLMap big = jl_construct(1000, 1000, 17);
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < big.matrix.size(); ++i) {
        mean += big.matrix[i];
        sq += big.matrix[i] * big.matrix[i];
    }
    mean /= 1e6;
    double var = sq / 1e6 - mean * mean;
    CHECK(var > 0.99);
    CHECK(var < 1.01);

    CHECK_THROWS_AS(jl_construct(0, 4, 1), std::invalid_argument);
}

TEST_CASE("jl norm preservation: unbiased mean, nested epsilons, better with larger m") {
    JLNormReport rep = jl_norm_preservation_check(64, 256, 2000, 31);
    CHECK(rep.mean_sq_norm > 0.97);
    CHECK(rep.mean_sq_norm < 1.03);
    for (std::size_t e = 1; e < rep.eps_grid.size(); ++e)
        CHECK(rep.success_fraction[e] >= rep.success_fraction[e - 1]);

    JLNormReport m16 = jl_norm_preservation_check(64, 16, 2000, 31);
    JLNormReport m64 = jl_norm_preservation_check(64, 64, 2000, 31);
    for (std::size_t e = 0; e < rep.eps_grid.size(); ++e) {
        CHECK(m64.success_fraction[e] >= m16.success_fraction[e]);
        CHECK(rep.success_fraction[e] >= m64.success_fraction[e]);
    }
}

TEST_CASE("jl angle distortion: zero for identical vectors, shrinks with m, bounded by 2") {
    JLMap map = jl_construct(32, 8, 3);
    Rng rng(10);
    Tensor x({32});
    for (std::size_t i = 0; i < 32; ++i) x[i] = rng.gaussian();
    Tensor fx = jl_apply(map, x);
    double nf = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        nf += fx[i] * fx[i];
        dot += fx[i] * fx[i];
    }
    CHECK(std::abs(dot / nf - 1.0) < 1e-12);  // cos(f(x), f(x)) = 1 = cos(x, x)

    JLAngleReport small = jl_angle_check(1024, 16, 500, 77);
    JLAngleReport large = jl_angle_check(1024, 256, 500, 77);
    CHECK(large.median < small.median);
    CHECK(small.max_abs <= 2.0);
    CHECK(large.max_abs <= 2.0);
}
