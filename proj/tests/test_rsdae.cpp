#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bdl/rsdae.hpp"
#include "bdl/synth.hpp"
#include "helpers.hpp"

using namespace bdl;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed,
                              double scale = 1.0) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, scale);
    return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return gauss(rng); });
}

}  // namespace

TEST_CASE("edge-wise log-density term equals the dense trace form") {
    ItemGraph g = synth_graph(20, 4, 0.4, 0.1, 1);
    Eigen::MatrixXd S = random_matrix(3, 20, 2, 0.7);
    double lambda_l = 1.7;
    CHECK(matrix_normal_logdensity_term(S, g, lambda_l) ==
          doctest::Approx(matrix_normal_logdensity_term(S, laplacian(g), lambda_l)).epsilon(1e-10));
}

TEST_CASE("log-density term is zero on an empty graph") {
    ItemGraph g{5, {}};
    Eigen::MatrixXd S = random_matrix(2, 5, 3, 1.0);
    CHECK(matrix_normal_logdensity_term(S, g, 2.0) == 0.0);
}

TEST_CASE("product of Gaussians combines precisions and means") {
    auto [mean, prec] = pog_combine(1.0, 2.0, 4.0, 6.0);
    CHECK(prec == doctest::Approx(8.0));
    CHECK(mean == doctest::Approx((2.0 * 1.0 + 6.0 * 4.0) / 8.0));
    Eigen::VectorXd m1(2), m2(2);
    m1 << 1.0, 0.0;
    m2 << 0.0, 1.0;
    auto [mv, pv] = pog_combine(m1, 1.0, m2, 3.0);
    CHECK(pv == doctest::Approx(4.0));
    CHECK(mv[0] == doctest::Approx(0.25));
    CHECK(mv[1] == doctest::Approx(0.75));
    CHECK_THROWS_AS(pog_combine(0.0, -1.0, 0.0, 1.0), argument_error);
}

TEST_CASE("steepest descent matches a dense solve") {
    for (std::uint64_t seed : {1, 2, 3}) {
        ItemGraph g = synth_graph(40, 4, 0.3, 0.05, seed);
        Eigen::VectorXd x = random_matrix(40, 1, seed + 10, 1.0).col(0);
        double ll = 0.8, lr = 1.3;
        SteepestResult res = s_update_steepest(Eigen::VectorXd::Zero(40), g, x, ll, lr, 5000, 1e-10);
        Eigen::MatrixXd A =
            ll * laplacian(g) + lr * Eigen::MatrixXd::Identity(40, 40);
        Eigen::VectorXd dense = A.ldlt().solve(lr * x);
        CHECK((res.solution - dense).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("steepest descent residuals strictly decrease") {
    ItemGraph g = synth_graph(30, 3, 0.3, 0.05, 9);
    Eigen::VectorXd x = random_matrix(30, 1, 10, 1.0).col(0);
    SteepestResult res = s_update_steepest(Eigen::VectorXd::Zero(30), g, x, 1.0, 1.0, 200, 1e-8);
    REQUIRE(res.residual_norms.size() >= 2);
    for (std::size_t t = 1; t < res.residual_norms.size(); ++t)
        CHECK(res.residual_norms[t] < res.residual_norms[t - 1]);
}

TEST_CASE("lambda_l = 0 recovers the tether target in one step") {
    ItemGraph g = synth_graph(25, 5, 0.4, 0.1, 11);
    Eigen::VectorXd x = random_matrix(25, 1, 12, 1.0).col(0);
    SteepestResult res = s_update_steepest(Eigen::VectorXd::Zero(25), g, x, 0.0, 2.0, 200, 1e-8);
    CHECK(res.iterations == 1);
    CHECK((res.solution - x).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("rsdae objective is finite and penalizes graph disagreement") {
    ItemGraph g = synth_graph(12, 3, 0.5, 0.0, 13);
    Rng rng = make_rng(14);
    NetParams p = init_net({6, 2, 6}, rng);
    Eigen::MatrixXd x0 = random_matrix(12, 6, 15, 0.3).cwiseAbs();
    Eigen::MatrixXd xc = x0;
    Hyperparams h;
    Eigen::MatrixXd S_smooth = Eigen::MatrixXd::Zero(2, 12);
    Eigen::MatrixXd S_rough = random_matrix(2, 12, 16, 2.0);
    double smooth = rsdae_objective(S_smooth, p, x0, xc, g, h);
    double rough = rsdae_objective(S_rough, p, x0, xc, g, h);
    CHECK(std::isfinite(smooth));
    CHECK(smooth > rough);  // constant embedding has zero Laplacian penalty
}

TEST_CASE("train_rsdae improves the objective and separates communities") {
    // two content clusters aligned with two graph communities
    Eigen::Index J = 24, B = 10;
    Eigen::MatrixXd xc = Eigen::MatrixXd::Zero(J, B);
    Rng rng = make_rng(17);
    std::uniform_real_distribution<double> unif(0.4, 1.0);
    for (Eigen::Index j = 0; j < J; ++j)
        for (Eigen::Index w = 0; w < B / 2; ++w) xc(j, (j % 2) * (B / 2) + w) = unif(rng);
    ItemGraph g;
    g.nodes = J;
    for (Eigen::Index u = 0; u < J; ++u)
        for (Eigen::Index v = u + 1; v < J; ++v)
            if (u % 2 == v % 2) g.edges.emplace_back(u, v);
    RsdaeData data{xc, xc, g};
    Hyperparams h;
    h.eta = 0.005;
    h.lambda_n = 10.0;
    h.lambda_r = 1.0;
    h.lambda_l = 1.0;
    Rng nrng = make_rng(18);
    NetParams init = init_net({B, 3, B}, nrng);
    RsdaeResult res = train_rsdae(data, init, h, 8, 5, 40);
    REQUIRE(res.objective_trace.size() == 8);
    for (double v : res.objective_trace) CHECK(std::isfinite(v));

    auto cosine = [&](Eigen::Index a, Eigen::Index b) {
        double na = res.S.col(a).norm(), nb = res.S.col(b).norm();
        return res.S.col(a).dot(res.S.col(b)) / std::max(1e-12, na * nb);
    };
    double intra = 0.0, inter = 0.0;
    int ni = 0, nx = 0;
    for (Eigen::Index u = 0; u < J; ++u)
        for (Eigen::Index v = u + 1; v < J; ++v) {
            if (u % 2 == v % 2) {
                intra += cosine(u, v);
                ++ni;
            } else {
                inter += cosine(u, v);
                ++nx;
            }
        }
    CHECK(intra / ni > inter / nx);
}
