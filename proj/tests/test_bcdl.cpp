#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bdl/bcdl.hpp"
#include "bdl/synth.hpp"
#include "helpers.hpp"

using namespace bdl;

namespace {

ImplicitRatings tiny_ratings() {
    ImplicitRatings r;
    r.users = 4;
    r.items = 6;
    r.positives = {{0, 2}, {1, 2, 5}, {3}, {0, 4}};
    return r;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed,
                              double scale = 1.0) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, scale);
    return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return gauss(rng); });
}

// Single-unit two-layer chain state used for 1-D target checks.
GibbsState scalar_state() {
    GibbsState s;
    s.params.W = {Eigen::MatrixXd::Constant(1, 1, 0.7), Eigen::MatrixXd::Constant(1, 1, -0.4)};
    s.params.b = {Eigen::VectorXd::Constant(1, 0.1), Eigen::VectorXd::Constant(1, 0.2)};
    s.x0 = Eigen::MatrixXd::Constant(1, 1, 0.8);
    s.xc = Eigen::MatrixXd::Constant(1, 1, 0.9);
    s.acts = {Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::MatrixXd::Constant(1, 1, 0.6)};
    s.U = Eigen::MatrixXd::Constant(1, 1, 0.3);
    s.V = Eigen::MatrixXd::Constant(1, 1, 0.4);
    s.ratings.users = 1;
    s.ratings.items = 1;
    s.ratings.positives = {{0}};
    s.hyper.lambda_s = 4.0;
    s.hyper.lambda_v = 2.0;
    return s;
}

}  // namespace

TEST_CASE("gaussian_precision_sample moments") {
    Eigen::MatrixXd prec(2, 2);
    prec << 2.0, 0.5, 0.5, 1.0;
    Eigen::VectorXd mean(2);
    mean << 1.0, -1.0;
    Rng rng = make_rng(1);
    int n = 50000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(2, 2);
    for (int t = 0; t < n; ++t) {
        Eigen::VectorXd x = gaussian_precision_sample(mean, prec, rng);
        sum += x;
        sq += (x - mean) * (x - mean).transpose();
    }
    Eigen::VectorXd emp_mean = sum / n;
    Eigen::MatrixXd emp_cov = sq / n;
    CHECK((emp_mean - mean).cwiseAbs().maxCoeff() < 0.03);
    CHECK((emp_cov - prec.inverse()).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("gaussian_precision_sample rejects indefinite precision") {
    Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(2, 2);
    Rng rng = make_rng(2);
    CHECK_THROWS_AS(gaussian_precision_sample(Eigen::VectorXd::Zero(2), bad, rng), numeric_error);
}

TEST_CASE("mh_accept identities") {
    Rng rng = make_rng(3);
    CHECK(mh_accept(0.0, 0.0, rng));  // self-proposal
    CHECK(mh_accept(5.0, 0.0, rng));
    int accepted = 0;
    for (int t = 0; t < 1000; ++t) accepted += mh_accept(-40.0, 0.0, rng);
    CHECK(accepted == 0);
}

TEST_CASE("conjugate posterior means equal MAP coordinate solves") {
    ImplicitRatings r = tiny_ratings();
    Eigen::MatrixXd U = random_matrix(4, 3, 10, 0.5);
    Eigen::MatrixXd V = random_matrix(6, 3, 11, 0.5);
    for (Eigen::Index i = 0; i < r.users; ++i) {
        auto [mean, prec] = cond_u_posterior(i, V, r, 0.1);
        CHECK((mean - update_user(i, V, r, 0.1)).cwiseAbs().maxCoeff() < 1e-12);
    }
    for (Eigen::Index j = 0; j < r.items; ++j) {
        Eigen::RowVectorXd enc = random_matrix(1, 3, 20 + j, 0.4);
        auto [mean, prec] = cond_v_posterior(j, U, r, 10.0, enc);
        CHECK((mean - update_item(j, U, r, 10.0, enc)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("activation sampler matches grid quadrature (1-D, TV)") {
    GibbsState s = scalar_state();
    s.act_scale = 0.6;
    Rng rng = make_rng(42);
    // burn in, then collect the mid-layer scalar
    for (int t = 0; t < 2000; ++t) mh_sample_activation(s, 0, 1, rng);
    const double lo = -2.5, hi = 3.5;
    const int bins = 40;
    std::vector<double> hist(bins, 0.0);
    int n = 200000;
    for (int t = 0; t < n; ++t) {
        mh_sample_activation(s, 0, 1, rng);
        double v = s.acts[0](0, 0);
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        if (b >= 0 && b < bins) hist[b] += 1.0;
    }
    for (double& h : hist) h /= n;
    // quadrature of the unnormalized target over the same bins
    std::vector<double> quad(bins, 0.0);
    double total = 0.0;
    int sub = 64;
    for (int b = 0; b < bins; ++b) {
        for (int q = 0; q < sub; ++q) {
            double v = lo + (hi - lo) * (b + (q + 0.5) / sub) / bins;
            Eigen::RowVectorXd cand = Eigen::RowVectorXd::Constant(1, v);
            quad[b] += std::exp(activation_log_target(s, 0, 1, cand));
        }
        total += quad[b];
    }
    double tv = 0.0;
    for (int b = 0; b < bins; ++b) tv += 0.5 * std::abs(hist[b] - quad[b] / total);
    CHECK(tv < 0.05);
}

TEST_CASE("weight_log_target gradient matches finite differences") {
    GibbsState s = scalar_state();
    // widen the layer so the gradient has several coordinates
    s.params.W[0] = random_matrix(1, 3, 30, 0.5);
    s.params.b[0] = random_matrix(3, 1, 31, 0.2).col(0);
    s.params.W[1] = random_matrix(3, 1, 32, 0.5);
    s.acts[0] = random_matrix(1, 3, 33, 0.2).array() + 0.5;
    Eigen::VectorXd wplus = random_matrix(2, 1, 34, 0.4).col(0);
    Eigen::VectorXd grad;
    weight_log_target(s, 1, 1, wplus, &grad);
    auto f = [&] { return weight_log_target(s, 1, 1, wplus); };
    CHECK(testutil::max_grad_rel_err_vec(f, wplus, grad) < 1e-6);
}

TEST_CASE("run_gibbs is deterministic and well-formed") {
    auto src = synth_cf(6, 10, 8, 3, 3, 5);
    Eigen::MatrixXd xc = src.content.normalized();
    CdlData data{xc, xc, src.ratings};
    Hyperparams h;
    h.lambda_s = 10.0;
    auto a = run_gibbs(data, {8, 2, 8}, h, 12, 6, 2, 7);
    auto b = run_gibbs(data, {8, 2, 8}, h, 12, 6, 2, 7);
    CHECK(a.log_density_trace == b.log_density_trace);
    CHECK(a.posterior_mean_scores == b.posterior_mean_scores);
    auto c = run_gibbs(data, {8, 2, 8}, h, 12, 6, 2, 8);
    CHECK(a.log_density_trace != c.log_density_trace);
    CHECK(a.samples.size() == 3);
    CHECK(a.posterior_mean_scores.rows() == 6);
    CHECK(a.activation_acceptance >= 0.0);
    CHECK(a.activation_acceptance <= 1.0);
    CHECK(a.weight_acceptance >= 0.0);
    CHECK(a.weight_acceptance <= 1.0);
    CHECK_THROWS_AS(run_gibbs(data, {8, 2, 8}, h, 5, 5, 1, 7), argument_error);
}
