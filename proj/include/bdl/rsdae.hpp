#ifndef BDL_RSDAE_HPP
#define BDL_RSDAE_HPP

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "bdl/corpus.hpp"
#include "bdl/errors.hpp"
#include "bdl/net.hpp"

namespace bdl {

/// -(lambda_l/2) tr(S L_a S^T), computed edge-wise:
/// tr(S L_a S^T) = sum_k sum_{(u,v) in E} (S_ku - S_kv)^2.
inline double matrix_normal_logdensity_term(const Eigen::MatrixXd& S, const ItemGraph& graph,
                                            double lambda_l) {
    if (S.cols() != graph.nodes)
        throw dimension_error("matrix_normal_logdensity_term: S columns must match graph nodes");
    double tr = 0.0;
    for (const auto& [u, v] : graph.edges) tr += (S.col(u) - S.col(v)).squaredNorm();
    return -0.5 * lambda_l * tr;
}

/// Dense-matrix form: -(lambda_l/2) sum_k S_k* L_a S_k*^T.
inline double matrix_normal_logdensity_term(const Eigen::MatrixXd& S,
                                            const Eigen::MatrixXd& laplacian_matrix,
                                            double lambda_l) {
    if (S.cols() != laplacian_matrix.rows())
        throw dimension_error("matrix_normal_logdensity_term: shape mismatch");
    return -0.5 * lambda_l * (S * laplacian_matrix * S.transpose()).trace();
}

/// Product of two isotropic Gaussians: precision adds, mean is the
/// precision-weighted average.
inline std::pair<Eigen::VectorXd, double> pog_combine(const Eigen::VectorXd& mean1, double prec1,
                                                      const Eigen::VectorXd& mean2, double prec2) {
    if (!(prec1 > 0) || !(prec2 > 0)) throw argument_error("pog_combine: precisions must be positive");
    if (mean1.size() != mean2.size()) throw dimension_error("pog_combine: mean size mismatch");
    double prec = prec1 + prec2;
    return {(prec1 * mean1 + prec2 * mean2) / prec, prec};
}

inline std::pair<double, double> pog_combine(double mean1, double prec1, double mean2,
                                             double prec2) {
    auto [m, p] = pog_combine(Eigen::VectorXd::Constant(1, mean1), prec1,
                              Eigen::VectorXd::Constant(1, mean2), prec2);
    return {m[0], p};
}

struct SteepestResult {
    Eigen::VectorXd solution;
    std::vector<double> residual_norms;  // strictly decreasing for PD systems
    int iterations = 0;
};

/// Steepest descent on (lambda_l L_a + lambda_r I) s = lambda_r x,
/// O(J + E) per iteration via edge-wise Laplacian products.
///   s(t+1) = s(t) + delta(t) r(t)
///   r(t)   = lambda_r x - (lambda_l L_a + lambda_r I) s(t)
///   delta  = r^T r / (r^T (lambda_l L_a + lambda_r I) r)
inline SteepestResult s_update_steepest(const Eigen::VectorXd& init, const ItemGraph& graph,
                                        const Eigen::VectorXd& midlayer_col, double lambda_l,
                                        double lambda_r, int max_iters = 200, double tol = 1e-8) {
    if (!(lambda_r > 0)) throw solve_error("s_update_steepest: lambda_r must be positive");
    if (init.size() != graph.nodes || midlayer_col.size() != graph.nodes)
        throw dimension_error("s_update_steepest: size mismatch");
    auto apply = [&](const Eigen::VectorXd& v) {
        return (lambda_l * graph.apply_laplacian(v) + lambda_r * v).eval();
    };
    SteepestResult res;
    res.solution = init;
    Eigen::VectorXd r = lambda_r * midlayer_col - apply(res.solution);
    res.residual_norms.push_back(r.norm());
    while (res.iterations < max_iters && res.residual_norms.back() > tol) {
        Eigen::VectorXd ar = apply(r);
        double denom = r.dot(ar);
        if (!(denom > 0)) throw solve_error("s_update_steepest: system not positive definite");
        double delta = r.dot(r) / denom;
        res.solution += delta * r;
        r -= delta * ar;  // algebraically lambda_r x - A s(t+1)
        ++res.iterations;
        res.residual_norms.push_back(r.norm());
    }
    return res;
}

/// Joint log-likelihood of RSDAE in the lambda_s -> inf mode
/// (deterministic activations). S is K x J.
inline double rsdae_objective(const Eigen::MatrixXd& S, const NetParams& params,
                              const Eigen::MatrixXd& x0, const Eigen::MatrixXd& xc,
                              const ItemGraph& graph, const Hyperparams& hyper) {
    double lap = matrix_normal_logdensity_term(S, graph, hyper.lambda_l);
    detail::check_finite(lap, "laplacian prior");

    auto acts = forward(x0, params, params.layers());
    const Eigen::MatrixXd& mid = acts[params.layers() / 2 - 1];
    const Eigen::MatrixXd& rec = acts[params.layers() - 1];

    double tether = -0.5 * hyper.lambda_r * (S.transpose() - mid).squaredNorm();
    detail::check_finite(tether, "representation tether");

    double decay = 0.0;
    for (int l = 0; l < params.layers(); ++l)
        decay += params.W[l].squaredNorm() + params.b[l].squaredNorm();
    decay *= -0.5 * hyper.lambda_w;

    double recon = -0.5 * hyper.lambda_n * (rec - xc).squaredNorm();
    detail::check_finite(recon, "reconstruction");

    return lap + tether + decay + recon;
}

struct RsdaeData {
    Eigen::MatrixXd x0;  // corrupted content, J x B
    Eigen::MatrixXd xc;  // clean content, J x B
    ItemGraph graph;
};

struct RsdaeResult {
    NetParams params;
    Eigen::MatrixXd S;  // K x J
    std::vector<double> objective_trace;
};

/// EM-style MAP training: rows of S solved by steepest descent, the net
/// trained with a PoG-tethered middle layer (target s_j^T, weight
/// lambda_r) plus the reconstruction head. S is initialized from a
/// reconstruction-only pre-training pass.
inline RsdaeResult train_rsdae(const RsdaeData& data, const NetParams& init,
                               const Hyperparams& hyper, int epochs, int net_steps = 5,
                               int pretrain_steps = 20, int sd_iters = 200, double sd_tol = 1e-8) {
    hyper.validate();
    RsdaeResult res;
    res.params = init;
    SgdState sgd = SgdState::zeros_like(res.params);
    for (int s = 0; s < pretrain_steps; ++s) {
        auto g = two_head_gradients(res.params, data.x0, nullptr, 0.0, &data.xc, hyper.lambda_n,
                                    hyper.lambda_w);
        sgd_step(res.params, g, sgd, hyper);
    }
    Eigen::MatrixXd mid = encode(data.x0, res.params);  // J x K
    res.S = mid.transpose();

    for (int epoch = 0; epoch < epochs; ++epoch) {
        double before = rsdae_objective(res.S, res.params, data.x0, data.xc, data.graph, hyper);
        for (Eigen::Index k = 0; k < res.S.rows(); ++k)
            res.S.row(k) = s_update_steepest(res.S.row(k).transpose(), data.graph, mid.col(k),
                                             hyper.lambda_l, hyper.lambda_r, sd_iters, sd_tol)
                               .solution.transpose();
        double after = rsdae_objective(res.S, res.params, data.x0, data.xc, data.graph, hyper);
        if (!std::isfinite(after)) throw numeric_error("train_rsdae: objective diverged");
        if (after < before - 1e-9 * (1.0 + std::abs(before)))
            throw numeric_error("train_rsdae: S sweep decreased the objective");
        res.objective_trace.push_back(after);

        Eigen::MatrixXd mid_target = res.S.transpose();
        for (int s = 0; s < net_steps; ++s) {
            auto g = two_head_gradients(res.params, data.x0, &mid_target, hyper.lambda_r, &data.xc,
                                        hyper.lambda_n, hyper.lambda_w);
            sgd_step(res.params, g, sgd, hyper);
        }
        mid = encode(data.x0, res.params);
    }
    return res;
}

}  // namespace bdl

#endif
