#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "orthodistill/simgeom.hpp"
#include "orthodistill/util.hpp"
#include "oracles.hpp"

using namespace orthodistill;

namespace {

Tensor random_points(std::size_t n, std::size_t d, Rng& rng, double lo = 0.5, double hi = 2.0) {
    // random directions with norms in [lo, hi]
    Tensor pts({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            pts.at(i, j) = rng.gaussian();
            norm += pts.at(i, j) * pts.at(i, j);
        }
        norm = std::sqrt(norm);
        double target = lo + (hi - lo) * rng.uniform();
        for (std::size_t j = 0; j < d; ++j) pts.at(i, j) *= target / norm;
    }
    return pts;
}

Tensor vec(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

}  // namespace

TEST_CASE("temperature set validation") {
    CHECK_THROWS_AS(TemperatureSet(std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(TemperatureSet({0.1, -0.2}), std::invalid_argument);
    CHECK_THROWS_AS(TemperatureSet({0.1, 0.1}), std::invalid_argument);
    CHECK(TemperatureSet::paper_default().size() == 10);
    CHECK(TemperatureSet::paper_default().values().front() == doctest::Approx(0.01));
    CHECK(TemperatureSet::paper_default().values().back() == doctest::Approx(0.10));
}

TEST_CASE("cosine_sim on the worked examples") {
    CHECK(cosine_sim(vec({1, 0}), vec({1, 0})) == doctest::Approx(1.0));
    CHECK(cosine_sim(vec({1, 0}), vec({0, 1})) == doctest::Approx(0.0));
    CHECK(cosine_sim(vec({1, 1}), vec({1, 0})) ==
          doctest::Approx(0.7071067811865475).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_sim(vec({0, 0}), vec({1, 0})), std::invalid_argument);
    CHECK_THROWS_AS(cosine_sim(vec({1, 0}), vec({1, 0, 0})), std::invalid_argument);
}

TEST_CASE("vmf_kernel on the worked examples") {
    CHECK(vmf_kernel(vec({2, 0}), vec({2, 0}), 1.0) ==
          doctest::Approx(2.718281828459045).epsilon(1e-12));
    CHECK(vmf_kernel(vec({1, 0}), vec({0, 3}), 0.37) == doctest::Approx(1.0));
    CHECK(vmf_kernel(vec({1, 0}), vec({-2, 0}), 0.5) ==
          doctest::Approx(0.1353352832366127).epsilon(1e-12));
    CHECK_THROWS_AS(vmf_kernel(vec({1, 0}), vec({1, 0}), 0.0), std::invalid_argument);
}

TEST_CASE("similarity matrix forced values") {
    // any distinct nonzero pair: row normalization forces 0.5
    Tensor two({2, 3}, {1, 2, 3, -1, 0.5, 2});
    SimilarityMatrix s2 = similarity_matrix(two, 0.2);
    CHECK(s2.entries.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s2.entries.at(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s2.entries.at(0, 0) == 0.0);

    // three identical points: all off-diagonals 1/6
    Tensor three({3, 2}, {1, 1, 1, 1, 1, 1});
    SimilarityMatrix s3 = similarity_matrix(three, 0.7);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            if (i == j)
                CHECK(s3.entries.at(i, j) == 0.0);
            else
                CHECK(s3.entries.at(i, j) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
        }
}

TEST_CASE("similarity matrix matches the straight-line oracle on the 3-point instance") {
    Tensor pts({3, 2}, {1, 0, 0, 1, -1, 0});
    SimilarityMatrix sim = similarity_matrix(pts, 1.0);
    // frozen values computed with the direct evaluation of the defining sums
    CHECK(sim.entries.at(0, 1) == doctest::Approx(0.20517642977166747).epsilon(1e-12));
    CHECK(sim.entries.at(1, 0) == doctest::Approx(0.20517642977166747).epsilon(1e-12));
    CHECK(sim.entries.at(1, 2) == doctest::Approx(0.20517642977166747).epsilon(1e-12));
    CHECK(sim.entries.at(0, 2) == doctest::Approx(0.089647140456665039).epsilon(1e-12));

    auto want = oracle::similarity_matrix(pts, 1.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(sim.entries.at(i, j) == doctest::Approx(want[i][j]).epsilon(1e-12));
}

TEST_CASE("similarity matrix invariants across sizes and temperatures") {
    Rng rng(404);
    for (std::size_t n : {2ul, 5ul, 17ul, 64ul}) {
        Tensor pts = random_points(n, 8, rng);
        for (double tau : {0.01, 0.1, 1.0}) {
            SimilarityMatrix sim = similarity_matrix(pts, tau);
            double off_sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(sim.entries.at(i, i) == 0.0);
                for (std::size_t j = 0; j < n; ++j) {
                    CHECK(sim.entries.at(i, j) == sim.entries.at(j, i));  // exact
                    CHECK(sim.entries.at(i, j) >= 0.0);
                    if (i != j) off_sum += sim.entries.at(i, j);
                }
            }
            CHECK(std::abs(off_sum - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("similarity matrix error paths") {
    Tensor one({1, 2}, {1, 0});
    CHECK_THROWS_AS(similarity_matrix(one, 1.0), std::invalid_argument);
    Tensor with_zero({3, 2}, {1, 0, 0, 0, 0, 1});
    try {
        similarity_matrix(with_zero, 1.0);
        FAIL("expected zero-vector error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("index 1") != std::string::npos);
    }
}

TEST_CASE("kl divergence basics and the derived instance") {
    Tensor pts({3, 2}, {1, 0, 0, 1, -1, 0});
    SimilarityMatrix p = similarity_matrix(pts, 1.0);
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-15));

    Tensor same({3, 2}, {2, 2, 2, 2, 2, 2});
    SimilarityMatrix q = similarity_matrix(same, 1.0);
    // frozen value from the direct-summation oracle
    CHECK(kl_divergence(p, q) == doctest::Approx(0.059420750818851044).epsilon(1e-12));
    CHECK(kl_divergence(p, q) == doctest::Approx(oracle::kl(
              oracle::similarity_matrix(pts, 1.0), oracle::similarity_matrix(same, 1.0))));

    SimilarityMatrix other_tau = similarity_matrix(pts, 0.5);
    CHECK_THROWS_AS(kl_divergence(p, other_tau), std::invalid_argument);
}

TEST_CASE("kl divergence is non-negative on random instances") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 2 + rng.integer(12);
        Tensor a = random_points(n, 6, rng);
        Tensor b = random_points(n, 4, rng);
        for (double tau : {0.01, 0.1, 1.0}) {
            double kl = kl_divergence(similarity_matrix(a, tau), similarity_matrix(b, tau));
            CHECK(kl >= -1e-9);
        }
    }
}

TEST_CASE("multi-temperature kl loss: zero cases and scale invariance") {
    Rng rng(5150);
    TemperatureSet taus{0.05, 0.2, 1.0};
    Tensor p = random_points(6, 4, rng);
    CHECK(kl_loss_multi_temp(p, p, taus) == doctest::Approx(0.0).epsilon(1e-12));

    Tensor scaled = p;
    for (std::size_t i = 0; i < scaled.rows(); ++i)
        for (std::size_t j = 0; j < scaled.cols(); ++j)
            scaled.at(i, j) *= 0.3 + static_cast<double>(i);
    CHECK(kl_loss_multi_temp(p, scaled, taus) < 1e-9);
}

TEST_CASE("multi-temperature kl loss vanishes exactly under orthonormal lifts") {
    Rng rng(606);
    TemperatureSet taus{0.05, 0.2};
    Tensor z = random_points(3, 2, rng);
    Tensor lift = oracle::orthonormal_columns(4, 2, rng);  // columns span a 2-plane in R^4
    // p = lift(z) lives in R^4; its exact image under the transposed
    // column-orthonormal 4 -> 2 map is z itself
    Tensor lift_t({2, 4});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 2; ++j) lift_t.at(j, i) = lift.at(i, j);
    Tensor p = oracle::apply_map(z, lift_t);  // rows z_i Q^T = (Q z_i)^T
    CHECK(kl_loss_multi_temp(p, z, taus) < 1e-9);

    // a generic non-orthogonal 4 -> 2 map distorts the similarities
    Tensor skew({4, 2});
    for (std::size_t i = 0; i < skew.size(); ++i) skew[i] = rng.gaussian();
    skew.at(0, 0) += 3.0;
    Tensor q_bad = oracle::apply_map(p, skew);
    CHECK(kl_loss_multi_temp(p, q_bad, taus) > 1e-4);
}

TEST_CASE("multi-temperature kl loss invariances") {
    Rng rng(321);
    TemperatureSet taus{0.05, 0.3};
    std::size_t n = 7;
    Tensor p = random_points(n, 5, rng);
    Tensor q = random_points(n, 3, rng);
    double base = kl_loss_multi_temp(p, q, taus);

    // per-point positive rescaling of q
    Tensor q_scaled = q;
    for (std::size_t i = 0; i < n; ++i) {
        double c = 0.2 + 3.0 * rng.uniform();
        for (std::size_t j = 0; j < q.cols(); ++j) q_scaled.at(i, j) *= c;
    }
    CHECK(kl_loss_multi_temp(p, q_scaled, taus) == doctest::Approx(base).epsilon(1e-9));

    // simultaneous rotation of all q
    Tensor rot = oracle::orthonormal_columns(3, 3, rng);
    CHECK(kl_loss_multi_temp(p, oracle::apply_map(q, rot), taus) ==
          doctest::Approx(base).epsilon(1e-9));

    // identical permutation of p and q
    std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
    Tensor pp({n, p.cols()}), qp({n, q.cols()});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p.cols(); ++j) pp.at(i, j) = p.at(perm[i], j);
        for (std::size_t j = 0; j < q.cols(); ++j) qp.at(i, j) = q.at(perm[i], j);
    }
    CHECK(kl_loss_multi_temp(pp, qp, taus) == doctest::Approx(base).epsilon(1e-9));

    Tensor q_short = random_points(n - 1, 3, rng);
    CHECK_THROWS_AS(kl_loss_multi_temp(p, q_short, taus), std::invalid_argument);
}

TEST_CASE("cosine set loss examples, bounds and errors") {
    Tensor z({2, 2}, {1, 0, 0, 2});
    CHECK(cosine_set_loss(z, z) == doctest::Approx(0.0));

    Tensor neg({2, 2}, {-1, 0, 0, -2});
    CHECK(cosine_set_loss(z, neg) == doctest::Approx(2.0));

    // one identical pair, one orthogonal pair
    Tensor a({2, 2}, {1, 0, 0, 1});
    Tensor b({2, 2}, {1, 0, 1, 0});
    CHECK(cosine_set_loss(a, b) == doctest::Approx(0.5));

    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = random_points(5, 3, rng);
        Tensor y = random_points(5, 3, rng);
        double loss = cosine_set_loss(x, y);
        CHECK(loss >= 0.0);
        CHECK(loss <= 2.0);
        CHECK(loss == doctest::Approx(oracle::cosine_set_loss(x, y)).epsilon(1e-12));
    }

    Tensor zero({2, 2}, {0, 0, 1, 0});
    CHECK_THROWS_AS(cosine_set_loss(zero, z), std::invalid_argument);
    Tensor short_set({1, 2}, {1, 0});
    CHECK_THROWS_AS(cosine_set_loss(z, short_set), std::invalid_argument);
}

TEST_CASE("l2 set loss examples and oracle parity") {
    Rng rng(12);
    Tensor z = random_points(4, 3, rng);
    CHECK(l2_set_loss(z, z) == doctest::Approx(0.0));

    Tensor shifted = z;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 1.0;
    CHECK(l2_set_loss(shifted, z) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor y = random_points(4, 3, rng);
    CHECK(l2_set_loss(z, y) == doctest::Approx(oracle::l2_set_loss(z, y)).epsilon(1e-12));

    // invariance under identical permutation of both sets
    std::vector<std::size_t> perm{2, 0, 3, 1};
    Tensor zp({4, 3}), yp({4, 3});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            zp.at(i, j) = z.at(perm[i], j);
            yp.at(i, j) = y.at(perm[i], j);
        }
    CHECK(l2_set_loss(zp, yp) == doctest::Approx(l2_set_loss(z, y)).epsilon(1e-12));

    Tensor wide({4, 2}, std::vector<double>(8, 1.0));
    CHECK_THROWS_AS(l2_set_loss(z, wide), std::invalid_argument);
}

namespace {
std::vector<TokenSet> random_batch(std::size_t n, std::size_t n_patch, std::size_t d, Rng& rng) {
    std::vector<TokenSet> batch;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor cls({d});
        for (std::size_t j = 0; j < d; ++j) cls[j] = rng.gaussian();
        Tensor patches({n_patch, d});
        for (std::size_t j = 0; j < patches.size(); ++j) patches[j] = rng.gaussian();
        batch.push_back(TokenSet{std::move(cls), std::move(patches)});
    }
    return batch;
}
}  // namespace

TEST_CASE("dim-red loss is zero for the identity head without normalization") {
    Rng rng(77);
    std::size_t d = 5;
    HeadParams h = init_head(d, d, NormMode::none, 3);
    h.W = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < d; ++i) h.W.at(i, i) = 1.0;
    std::vector<TokenSet> batch = random_batch(4, 2, d, rng);
    CHECK(dim_red_loss(batch, h, TemperatureSet{0.05, 0.2}, true) ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dim-red loss with the feature term disabled equals the class term") {
    Rng rng(78);
    std::vector<TokenSet> batch = random_batch(5, 0, 6, rng);
    HeadParams h = init_head(6, 3, NormMode::layernorm, 4);
    TemperatureSet taus{0.1, 0.5};
    Tensor cls({5, 6});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 6; ++j) cls.at(i, j) = batch[i].class_token[j];
    double class_term = kl_loss_multi_temp(cls, head_forward_rows(h, cls), taus);
    CHECK(dim_red_loss(batch, h, taus, false) == doctest::Approx(class_term).epsilon(1e-12));

    // feature term with patchless samples is an error
    CHECK_THROWS_AS(dim_red_loss(batch, h, taus, true), std::invalid_argument);
    std::vector<TokenSet> tiny = random_batch(1, 2, 6, rng);
    CHECK_THROWS_AS(dim_red_loss(tiny, h, taus, false), std::invalid_argument);
}

TEST_CASE("dim-red loss matches the straight-line oracle") {
    Rng rng(80);
    std::vector<TokenSet> batch = random_batch(4, 2, 6, rng);
    HeadParams h = init_head(6, 3, NormMode::layernorm, 5);
    TemperatureSet taus{0.05, 0.2, 1.0};

    Tensor cls({4, 6});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j) cls.at(i, j) = batch[i].class_token[j];
    double want = oracle::kl_loss_multi_temp(
        cls, oracle::head_forward(h.gamma, h.beta1, h.W, h.beta2, cls, true), taus.values());
    for (const TokenSet& t : batch) {
        Tensor tokens = t.all_tokens();
        want += oracle::kl_loss_multi_temp(
                    tokens,
                    oracle::head_forward(h.gamma, h.beta1, h.W, h.beta2, tokens, true),
                    taus.values()) /
                static_cast<double>(batch.size());
    }
    CHECK(dim_red_loss(batch, h, taus, true) == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("graph losses agree with the plain evaluations") {
    Rng rng(90);
    TemperatureSet taus{0.05, 0.2};
    Tensor p = random_points(6, 5, rng);
    Tensor q = random_points(6, 3, rng);

    Tape tape;
    Var vp = tape.constant(p), vq = tape.constant(q);
    CHECK(kl_loss_multi_temp(vp, vq, taus).value().value() ==
          doctest::Approx(kl_loss_multi_temp(p, q, taus)).epsilon(1e-12));

    Tensor y = random_points(6, 5, rng);
    Var vy = tape.constant(y);
    CHECK(cosine_set_loss(vp, vy).value().value() ==
          doctest::Approx(cosine_set_loss(p, y)).epsilon(1e-12));
    CHECK(l2_set_loss(vp, vy).value().value() ==
          doctest::Approx(l2_set_loss(p, y)).epsilon(1e-12));

    std::vector<TokenSet> batch = random_batch(4, 2, 5, rng);
    std::vector<const TokenSet*> ptrs;
    for (const TokenSet& t : batch) ptrs.push_back(&t);
    HeadParams h = init_head(5, 3, NormMode::layernorm, 6);
    Tape tape2;
    HeadVars hv = lift(tape2, h);
    CHECK(dim_red_loss(tape2, ptrs, hv, taus, true).value().value() ==
          doctest::Approx(dim_red_loss(batch, h, taus, true)).epsilon(1e-12));
}

TEST_CASE("losses pass finite-difference gradient checks") {
    Rng rng(100);
    TemperatureSet taus{0.05, 0.2};

    auto kl_fn = [&taus](Tape&, const std::vector<Var>& vs) {
        return kl_loss_multi_temp(vs[0], vs[1], taus);
    };
    auto cos_fn = [](Tape&, const std::vector<Var>& vs) {
        return cosine_set_loss(vs[0], vs[1]);
    };
    auto l2_fn = [](Tape&, const std::vector<Var>& vs) { return l2_set_loss(vs[0], vs[1]); };

    for (int trial = 0; trial < 3; ++trial) {
        std::vector<Tensor> pq{random_points(4, 4, rng), random_points(4, 2, rng)};
        CHECK(finite_diff_check(kl_fn, pq, 1e-5) < 1e-4);
        std::vector<Tensor> zy{random_points(5, 3, rng), random_points(5, 3, rng)};
        CHECK(finite_diff_check(cos_fn, zy, 1e-5) < 1e-4);
        CHECK(finite_diff_check(l2_fn, zy, 1e-5) < 1e-4);
    }

    // dim-red loss gradient w.r.t. all head parameter groups
    std::vector<TokenSet> batch = random_batch(3, 2, 5, rng);
    std::vector<const TokenSet*> ptrs;
    for (const TokenSet& t : batch) ptrs.push_back(&t);
    auto dimred_fn = [&](Tape& t, const std::vector<Var>& vs) {
        HeadVars h{vs[0], vs[1], vs[2], vs[3], NormMode::layernorm};
        return dim_red_loss(t, ptrs, h, taus, true);
    };
    HeadParams h = init_head(5, 3, NormMode::layernorm, 16);
    std::vector<Tensor> params{h.gamma, h.beta1, h.W, h.beta2};
    CHECK(finite_diff_check(dimred_fn, params, 1e-5) < 1e-4);
}
