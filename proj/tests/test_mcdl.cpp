#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bdl/mcdl.hpp"
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

McdlData small_data(std::uint64_t seed, bool with_y = false) {
    auto src = synth_cf(8, 14, 10, 3, 4, seed);
    McdlData data;
    data.x = src.content.normalized();
    data.ratings = src.ratings;
    if (with_y) data.y = random_matrix(8, 6, seed + 1, 0.3).cwiseAbs();
    return data;
}

}  // namespace

TEST_CASE("expected_scatter closed form vs Monte Carlo") {
    Eigen::MatrixXd x = random_matrix(40, 6, 1, 1.0);
    double p = 0.3;
    ScatterMoments m = expected_scatter(x, p);
    Rng rng = make_rng(2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd lin = Eigen::MatrixXd::Zero(40, 6);
    Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(6, 6);
    int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        Eigen::MatrixXd xt = x;
        for (Eigen::Index i = 0; i < xt.size(); ++i)
            if (unif(rng) < p) xt.data()[i] = 0.0;
        lin += xt;
        quad += xt.transpose() * xt;
    }
    lin /= trials;
    quad /= trials;
    CHECK((lin - m.linear).cwiseAbs().maxCoeff() / m.linear.cwiseAbs().maxCoeff() < 0.03);
    CHECK((quad - m.quad).cwiseAbs().maxCoeff() / m.quad.cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("expected_scatter endpoints") {
    Eigen::MatrixXd x = random_matrix(5, 3, 3, 1.0);
    ScatterMoments clean = expected_scatter(x, 0.0);
    CHECK(clean.linear == x);
    CHECK((clean.quad - x.transpose() * x).cwiseAbs().maxCoeff() < 1e-12);
    ScatterMoments dead = expected_scatter(x, 1.0);
    CHECK(dead.linear.cwiseAbs().maxCoeff() == 0);
    CHECK(dead.quad.cwiseAbs().maxCoeff() == 0);
    CHECK_THROWS_AS(expected_scatter(x, -0.1), argument_error);
}

TEST_CASE("solve_w1 zeroes the block gradient") {
    McdlData data = small_data(10);
    Eigen::Index B = data.x.cols();
    Eigen::MatrixXd V = random_matrix(data.x.rows(), 4, 11, 0.3);
    Eigen::MatrixXd P1 = random_matrix(4, B, 12, 0.3);
    double lambda_v = 2.0;
    ScatterMoments m = expected_scatter(data.x, 0.3);
    Eigen::MatrixXd W1 = solve_w1(data.x, m, V, P1, lambda_v);
    // gradient of the negative objective wrt W1:
    // 2 E[X~^T X~] W - 2 E[X~]^T X + lambda_v X^T (X W - V P1)
    Eigen::MatrixXd grad = 2.0 * m.quad * W1 - 2.0 * m.linear.transpose() * data.x +
                           lambda_v * data.x.transpose() * (data.x * W1 - V * P1);
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("solve_w2 mirrors solve_w1") {
    Eigen::MatrixXd y = random_matrix(9, 5, 20, 0.4).cwiseAbs();
    Eigen::MatrixXd U = random_matrix(9, 3, 21, 0.3);
    Eigen::MatrixXd P2 = random_matrix(3, 5, 22, 0.3);
    ScatterMoments m = expected_scatter(y, 0.2);
    CHECK(solve_w2(y, m, U, P2, 1.5) == solve_w1(y, m, U, P2, 1.5));
}

TEST_CASE("solve_projection satisfies ridge normal equations") {
    Eigen::MatrixXd V = random_matrix(12, 3, 30, 0.5);
    Eigen::MatrixXd x = random_matrix(12, 7, 31, 0.5);
    Eigen::MatrixXd W = random_matrix(7, 7, 32, 0.3);
    Eigen::MatrixXd P = solve_projection(V, x, W);
    Eigen::MatrixXd resid = V.transpose() * (x * W - V * P) - 1e-8 * P;
    CHECK(resid.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("train_mcdl trace is finite and non-decreasing") {
    McdlData data = small_data(40);
    McdlResult res = train_mcdl(data, 4, 0.3, 0.1, 2.0, 6, false, 7);
    REQUIRE(res.objective_trace.size() == 6);
    for (std::size_t t = 1; t < res.objective_trace.size(); ++t)
        CHECK(res.objective_trace[t] >=
              res.objective_trace[t - 1] - 1e-9 * (1.0 + std::abs(res.objective_trace[t - 1])));
}

TEST_CASE("train_mcdl symmetric mode consumes user attributes") {
    McdlData data = small_data(50, true);
    McdlResult res = train_mcdl(data, 3, 0.3, 0.5, 2.0, 4, true, 8);
    CHECK(res.state.W2.has_value());
    CHECK(res.state.P2.has_value());
    for (double v : res.objective_trace) CHECK(std::isfinite(v));
    McdlData no_y = small_data(50);
    CHECK_THROWS_AS(train_mcdl(no_y, 3, 0.3, 0.5, 2.0, 2, true, 8), config_error);
}

TEST_CASE("train_mcdl is deterministic") {
    McdlData data = small_data(60);
    McdlResult a = train_mcdl(data, 3, 0.3, 0.1, 2.0, 3, false, 5);
    McdlResult b = train_mcdl(data, 3, 0.3, 0.1, 2.0, 3, false, 5);
    CHECK(a.factors.U == b.factors.U);
    CHECK(a.objective_trace == b.objective_trace);
}
