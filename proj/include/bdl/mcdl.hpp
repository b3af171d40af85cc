#ifndef BDL_MCDL_HPP
#define BDL_MCDL_HPP

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bdl/cdl.hpp"
#include "bdl/corpus.hpp"
#include "bdl/errors.hpp"

namespace bdl {

/// Closed-form corruption moments for masking noise with probability p:
/// E[X~] = (1-p) X; E[X~^T X~] has off-diagonal (1-p)^2 (X^T X) and
/// diagonal (1-p) diag(X^T X).
struct ScatterMoments {
    Eigen::MatrixXd linear;  // E[X~]
    Eigen::MatrixXd quad;    // E[X~^T X~]
};

inline ScatterMoments expected_scatter(const Eigen::MatrixXd& x, double p) {
    if (p < 0.0 || p > 1.0) throw argument_error("expected_scatter: p must be in [0,1]");
    double q = 1.0 - p;  // p = 1 degenerates to zero moments
    ScatterMoments m;
    m.linear = q * x;
    Eigen::MatrixXd gram = x.transpose() * x;
    m.quad = q * q * gram;
    m.quad.diagonal() = q * gram.diagonal();
    return m;
}

/// Linear maps of the marginalized model. W2/P2 are present only in
/// symmetric mode (user attributes Y).
struct MarginalizedState {
    Eigen::MatrixXd W1;  // B x B
    Eigen::MatrixXd P1;  // K x B
    std::optional<Eigen::MatrixXd> W2;  // D x D
    std::optional<Eigen::MatrixXd> P2;  // K x D
    double p = 0.3;      // corruption probability marginalized over
};

namespace detail {

constexpr double kRidgeJitter = 1e-8;

// Expected reconstruction error E||X~ W - X||^2 under masking noise.
inline double expected_recon_error(const Eigen::MatrixXd& x, const ScatterMoments& m,
                                   const Eigen::MatrixXd& w) {
    return (w.transpose() * m.quad * w).trace() - 2.0 * (w.transpose() * m.linear.transpose() * x).trace() +
           x.squaredNorm();
}

}  // namespace detail

/// W1 = Q1^{-1} S1 with Q1 = E[X~^T X~] + (lambda_v/2) X^T X and
/// S1 = E[X~]^T X + (lambda_v/2) X^T V P1; this is the stationary point
/// of the marginalized objective in W1.
inline Eigen::MatrixXd solve_w1(const Eigen::MatrixXd& x, const ScatterMoments& moments,
                                const Eigen::MatrixXd& V, const Eigen::MatrixXd& P1,
                                double lambda_v) {
    Eigen::Index B = x.cols();
    Eigen::MatrixXd Q = moments.quad + 0.5 * lambda_v * (x.transpose() * x) +
                        detail::kRidgeJitter * Eigen::MatrixXd::Identity(B, B);
    Eigen::MatrixXd S = moments.linear.transpose() * x + 0.5 * lambda_v * (x.transpose() * V * P1);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(Q);
    if (ldlt.info() != Eigen::Success) throw solve_error("solve_w1: singular Q1");
    Eigen::MatrixXd w = ldlt.solve(S);
    if (!w.allFinite()) throw solve_error("solve_w1: non-finite solution");
    return w;
}

/// Mirror of solve_w1 over user attributes Y with U and P2.
inline Eigen::MatrixXd solve_w2(const Eigen::MatrixXd& y, const ScatterMoments& moments,
                                const Eigen::MatrixXd& U, const Eigen::MatrixXd& P2,
                                double lambda_u) {
    return solve_w1(y, moments, U, P2, lambda_u);
}

/// Ridge least squares for the projection: P1 = (V^T V + jitter)^{-1} V^T X W1.
inline Eigen::MatrixXd solve_projection(const Eigen::MatrixXd& factors, const Eigen::MatrixXd& x,
                                        const Eigen::MatrixXd& w) {
    Eigen::Index K = factors.cols();
    Eigen::MatrixXd gram = factors.transpose() * factors +
                           detail::kRidgeJitter * Eigen::MatrixXd::Identity(K, K);
    return gram.ldlt().solve(factors.transpose() * (x * w));
}

struct McdlData {
    Eigen::MatrixXd x;  // clean item content, J x B
    ImplicitRatings ratings;
    std::optional<Eigen::MatrixXd> y;  // clean user attributes, I x D (symmetric mode)
};

/// Marginalized objective (higher is better); symmetric terms included
/// when the state carries W2/P2 and data carries Y.
inline double mcdl_objective(const McdlData& data, const MarginalizedState& state,
                             const Eigen::MatrixXd& U, const Eigen::MatrixXd& V, double lambda_u,
                             double lambda_v) {
    ScatterMoments mx = expected_scatter(data.x, state.p);
    double obj = -detail::expected_recon_error(data.x, mx, state.W1);
    detail::check_finite(obj, "marginalized reconstruction");
    obj += rating_term(U, V, data.ratings);
    obj += -0.5 * lambda_u * U.squaredNorm();
    obj += -0.5 * lambda_v * (V * state.P1 - data.x * state.W1).squaredNorm();
    if (state.W2 && data.y) {
        ScatterMoments my = expected_scatter(*data.y, state.p);
        obj += -detail::expected_recon_error(*data.y, my, *state.W2);
        obj += -0.5 * lambda_u * (U * *state.P2 - *data.y * *state.W2).squaredNorm();
    }
    detail::check_finite(obj, "marginalized objective");
    return obj;
}

namespace detail {

// Exact minimizer of the mcdl objective in one factor row.
// system = b*gram + (a-b) sum_pos f f^T + tether_weight P P^T (+ridge I),
// rhs = a sum_pos f + tether_weight P target.
inline Eigen::VectorXd mcdl_factor_solve(const Eigen::MatrixXd& gram,
                                         const Eigen::MatrixXd& factors,
                                         const std::vector<Eigen::Index>& neighbors, double a,
                                         double b, const Eigen::MatrixXd& P, double tether_weight,
                                         const Eigen::VectorXd& target, double ridge) {
    Eigen::Index K = gram.rows();
    Eigen::MatrixXd A = b * gram + tether_weight * (P * P.transpose()) +
                        ridge * Eigen::MatrixXd::Identity(K, K);
    Eigen::VectorXd rhs = tether_weight * (P * target);
    for (Eigen::Index n : neighbors) {
        A.noalias() += (a - b) * factors.row(n).transpose() * factors.row(n);
        rhs.noalias() += a * factors.row(n).transpose();
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw solve_error("mcdl factor update: singular system");
    return ldlt.solve(rhs);
}

}  // namespace detail

struct McdlResult {
    MarginalizedState state;
    LatentFactors factors;
    std::vector<double> objective_trace;  // per iteration, after all blocks
};

/// Block-coordinate training: closed-form W1 (and W2), ridge P1 (and
/// P2), then exact U and V solves. Every block is an exact minimizer, so
/// the objective is non-decreasing per block.
inline McdlResult train_mcdl(const McdlData& data, Eigen::Index K, double corruption_p,
                             double lambda_u, double lambda_v, int iters, bool symmetric,
                             std::uint64_t seed) {
    if (symmetric && !data.y) throw config_error("symmetric mode requires user attributes Y");
    Eigen::Index J = data.x.rows(), B = data.x.cols(), I = data.ratings.users;

    McdlResult res;
    res.state.p = corruption_p;
    res.state.W1 = Eigen::MatrixXd::Identity(B, B);
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.1);
    res.state.P1 = Eigen::MatrixXd::NullaryExpr(K, B, [&] { return gauss(rng); });
    if (symmetric) {
        Eigen::Index D = data.y->cols();
        res.state.W2 = Eigen::MatrixXd::Identity(D, D);
        res.state.P2 = Eigen::MatrixXd::NullaryExpr(K, D, [&] { return gauss(rng); });
    }
    res.factors.U = Eigen::MatrixXd::NullaryExpr(I, K, [&] { return 0.1 * gauss(rng); });
    res.factors.V = Eigen::MatrixXd::NullaryExpr(J, K, [&] { return 0.1 * gauss(rng); });

    ScatterMoments mx = expected_scatter(data.x, corruption_p);
    std::optional<ScatterMoments> my;
    if (symmetric) my = expected_scatter(*data.y, corruption_p);

    auto objective = [&] {
        return mcdl_objective(data, res.state, res.factors.U, res.factors.V, lambda_u, lambda_v);
    };
    double prev = objective();
    auto check_block = [&](const char* block) {
        double cur = objective();
        if (!std::isfinite(cur)) throw numeric_error(std::string("train_mcdl diverged in ") + block);
        if (cur < prev - 1e-9 * (1.0 + std::abs(prev)))
            throw numeric_error(std::string("train_mcdl: block decreased objective: ") + block);
        prev = cur;
        return cur;
    };

    std::vector<std::vector<Eigen::Index>> raters(data.ratings.items);
    for (Eigen::Index i = 0; i < I; ++i)
        for (Eigen::Index j : data.ratings.positives[i]) raters[j].push_back(i);

    for (int it = 0; it < iters; ++it) {
        res.state.W1 = solve_w1(data.x, mx, res.factors.V, res.state.P1, lambda_v);
        check_block("W1");
        res.state.P1 = solve_projection(res.factors.V, data.x, res.state.W1);
        check_block("P1");
        if (symmetric) {
            res.state.W2 = solve_w2(*data.y, *my, res.factors.U, *res.state.P2, lambda_u);
            check_block("W2");
            res.state.P2 = solve_projection(res.factors.U, *data.y, *res.state.W2);
            check_block("P2");
        }

        // U sweep: prior lambda_u I, plus the P2 tether in symmetric mode
        Eigen::MatrixXd gramV = res.factors.V.transpose() * res.factors.V;
        Eigen::MatrixXd yw;
        if (symmetric) yw = *data.y * *res.state.W2;
        for (Eigen::Index i = 0; i < I; ++i) {
            if (symmetric) {
                res.factors.U.row(i) =
                    detail::mcdl_factor_solve(gramV, res.factors.V, data.ratings.positives[i],
                                              data.ratings.a, data.ratings.b, *res.state.P2,
                                              lambda_u, yw.row(i).transpose(), lambda_u)
                        .transpose();
            } else {
                res.factors.U.row(i) = update_user(i, res.factors.V, data.ratings, lambda_u)
                                           .transpose();
                // reuse of the gram-free path is fine at desk scale
            }
        }
        check_block("U");

        // V sweep: tether P1^T v_j to the denoised content projection
        Eigen::MatrixXd gramU = res.factors.U.transpose() * res.factors.U;
        Eigen::MatrixXd xw = data.x * res.state.W1;
        for (Eigen::Index j = 0; j < J; ++j)
            res.factors.V.row(j) =
                detail::mcdl_factor_solve(gramU, res.factors.U, raters[j], data.ratings.a,
                                          data.ratings.b, res.state.P1, lambda_v,
                                          xw.row(j).transpose(), 1e-12)
                    .transpose();
        res.objective_trace.push_back(check_block("V"));
    }
    return res;
}

}  // namespace bdl

#endif
