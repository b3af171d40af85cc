#ifndef BDL_BCDL_HPP
#define BDL_BCDL_HPP

#include <cmath>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "bdl/cdl.hpp"
#include "bdl/errors.hpp"
#include "bdl/net.hpp"
#include "bdl/rng.hpp"

namespace bdl {

/// Exact draw from N(mean, precision^{-1}) via the Cholesky factor of
/// the precision.
inline Eigen::VectorXd gaussian_precision_sample(const Eigen::VectorXd& mean,
                                                 const Eigen::MatrixXd& precision, Rng& rng) {
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success)
        throw numeric_error("gaussian_precision_sample: precision not positive definite");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = gauss(rng);
    // solve L^T x = z so that cov(x) = precision^{-1}
    return mean + llt.matrixU().solve(z);
}

/// Generic Metropolis-Hastings accept decision from exact log-density
/// and log-proposal differences. A self-proposal (both zero) is always
/// accepted.
inline bool mh_accept(double log_target_diff, double log_proposal_correction, Rng& rng) {
    double log_ratio = log_target_diff + log_proposal_correction;
    if (log_ratio >= 0.0) return true;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return std::log(unif(rng)) < log_ratio;
}

/// Posterior of u_i: precision lambda_u I + sum_j C_ij v_j v_j^T,
/// mean precision^{-1} sum_j C_ij R_ij v_j.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> cond_u_posterior(Eigen::Index i,
                                                                    const Eigen::MatrixXd& V,
                                                                    const ImplicitRatings& ratings,
                                                                    double lambda_u) {
    Eigen::Index K = V.cols();
    Eigen::MatrixXd prec = lambda_u * Eigen::MatrixXd::Identity(K, K) +
                           ratings.b * (V.transpose() * V);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K);
    for (Eigen::Index j : ratings.positives[i]) {
        prec.noalias() += (ratings.a - ratings.b) * V.row(j).transpose() * V.row(j);
        rhs.noalias() += ratings.a * V.row(j).transpose();
    }
    Eigen::VectorXd mean = prec.ldlt().solve(rhs);
    return {mean, prec};
}

inline Eigen::VectorXd cond_u_sample(Eigen::Index i, const Eigen::MatrixXd& V,
                                     const ImplicitRatings& ratings, double lambda_u, Rng& rng) {
    auto [mean, prec] = cond_u_posterior(i, V, ratings, lambda_u);
    return gaussian_precision_sample(mean, prec, rng);
}

/// Posterior of v_j: precision lambda_v I + sum_i C_ij u_i u_i^T,
/// mean shifted by lambda_v times the middle-layer activation row.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> cond_v_posterior(
    Eigen::Index j, const Eigen::MatrixXd& U, const ImplicitRatings& ratings, double lambda_v,
    const Eigen::RowVectorXd& midlayer_row) {
    Eigen::Index K = U.cols();
    Eigen::MatrixXd prec = lambda_v * Eigen::MatrixXd::Identity(K, K) +
                           ratings.b * (U.transpose() * U);
    Eigen::VectorXd rhs = lambda_v * midlayer_row.transpose();
    for (Eigen::Index i = 0; i < ratings.users; ++i)
        if (std::binary_search(ratings.positives[i].begin(), ratings.positives[i].end(), j)) {
            prec.noalias() += (ratings.a - ratings.b) * U.row(i).transpose() * U.row(i);
            rhs.noalias() += ratings.a * U.row(i).transpose();
        }
    Eigen::VectorXd mean = prec.ldlt().solve(rhs);
    return {mean, prec};
}

inline Eigen::VectorXd cond_v_sample(Eigen::Index j, const Eigen::MatrixXd& U,
                                     const ImplicitRatings& ratings, double lambda_v,
                                     const Eigen::RowVectorXd& midlayer_row, Rng& rng) {
    auto [mean, prec] = cond_v_posterior(j, U, ratings, lambda_v, midlayer_row);
    return gaussian_precision_sample(mean, prec, rng);
}

/// Chain state for Metropolis-within-Gibbs over the generalized
/// Bayesian SDAE with finite lambda_s. Activations of every layer are
/// latent and drawn through the sigmoid (no affine last layer here).
struct GibbsState {
    NetParams params;
    std::vector<Eigen::MatrixXd> acts;  // sampled X_1..X_L, each J x K_l
    Eigen::MatrixXd x0;                 // observed corrupted input
    Eigen::MatrixXd xc;                 // observed clean input
    Eigen::MatrixXd U, V;
    ImplicitRatings ratings;
    Hyperparams hyper;  // lambda_s finite here
    double act_scale = 0.1;     // random-walk proposal std for activations
    double weight_step = 1e-3;  // Langevin step for weight columns
    long step = 0;

    int layers() const { return params.layers(); }

    const Eigen::MatrixXd& layer_below(int l) const { return l >= 2 ? acts[l - 2] : x0; }

    // sigma(x_{l-1,j*} W_l + b_l) evaluated on an arbitrary input row
    Eigen::RowVectorXd layer_mean(int l, const Eigen::RowVectorXd& below) const {
        return sigmoid((below * params.W[l - 1]).eval() +
                       params.b[l - 1].transpose());
    }
};

/// Unnormalized log conditional density of activation row X_{l,j*}.
inline double activation_log_target(const GibbsState& s, Eigen::Index j, int l,
                                    const Eigen::RowVectorXd& candidate) {
    int L = s.layers();
    double ls = s.hyper.lambda_s;
    Eigen::RowVectorXd mean = s.layer_mean(l, s.layer_below(l).row(j));
    double lp = -0.5 * ls * (candidate - mean).squaredNorm();
    if (l < L) {
        Eigen::RowVectorXd above_mean = s.layer_mean(l + 1, candidate);
        lp += -0.5 * ls * (s.acts[l].row(j) - above_mean).squaredNorm();
    } else {
        lp += -0.5 * ls * (s.xc.row(j) - candidate).squaredNorm();
    }
    if (l == L / 2) lp += -0.5 * s.hyper.lambda_v * (s.V.row(j) - candidate).squaredNorm();
    return lp;
}

/// One random-walk Metropolis step on X_{l,j*}. Returns whether the
/// proposal was accepted (rejection keeps the state).
inline bool mh_sample_activation(GibbsState& s, Eigen::Index j, int l, Rng& rng) {
    Eigen::RowVectorXd current = s.acts[l - 1].row(j);
    std::normal_distribution<double> gauss(0.0, s.act_scale);
    Eigen::RowVectorXd proposal = current;
    for (Eigen::Index k = 0; k < proposal.size(); ++k) proposal[k] += gauss(rng);
    double diff = activation_log_target(s, j, l, proposal) - activation_log_target(s, j, l, current);
    if (mh_accept(diff, 0.0, rng)) {
        s.acts[l - 1].row(j) = proposal;
        return true;
    }
    return false;
}

/// Unnormalized log conditional of the augmented weight column
/// w+ = [W_l(:,n); b_l(n)], and its gradient.
inline double weight_log_target(const GibbsState& s, int l, Eigen::Index n,
                                const Eigen::VectorXd& wplus, Eigen::VectorXd* grad = nullptr) {
    const Eigen::MatrixXd& below = s.layer_below(l);
    Eigen::Index J = below.rows();
    double lp = -0.5 * s.hyper.lambda_w * wplus.squaredNorm();
    if (grad) *grad = -s.hyper.lambda_w * wplus;
    Eigen::VectorXd z = below * wplus.head(wplus.size() - 1) +
                        Eigen::VectorXd::Constant(J, wplus[wplus.size() - 1]);
    Eigen::VectorXd sig = 1.0 / (1.0 + (-z.array()).exp());
    Eigen::VectorXd resid = s.acts[l - 1].col(n) - sig;
    lp += -0.5 * s.hyper.lambda_s * resid.squaredNorm();
    if (grad) {
        Eigen::VectorXd w = s.hyper.lambda_s * resid.array() * sig.array() * (1.0 - sig.array());
        grad->head(wplus.size() - 1) += below.transpose() * w;
        (*grad)[wplus.size() - 1] += w.sum();
    }
    return lp;
}

/// One Langevin-proposal Metropolis step on weight column n of layer l
/// (bias included as the last coordinate). Gradient-informed proposal
/// with exact MH correction, so the stationary law is the stated
/// conditional.
inline bool mh_sample_weights(GibbsState& s, int l, Eigen::Index n, Rng& rng) {
    Eigen::Index dim = s.params.W[l - 1].rows() + 1;
    Eigen::VectorXd current(dim);
    current.head(dim - 1) = s.params.W[l - 1].col(n);
    current[dim - 1] = s.params.b[l - 1][n];

    double eps = s.weight_step;
    Eigen::VectorXd grad_cur;
    double lp_cur = weight_log_target(s, l, n, current, &grad_cur);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd noise(dim);
    for (Eigen::Index k = 0; k < dim; ++k) noise[k] = gauss(rng);
    Eigen::VectorXd proposal = current + 0.5 * eps * eps * grad_cur + eps * noise;

    Eigen::VectorXd grad_prop;
    double lp_prop = weight_log_target(s, l, n, proposal, &grad_prop);
    auto log_q = [eps](const Eigen::VectorXd& to, const Eigen::VectorXd& from,
                       const Eigen::VectorXd& grad_from) {
        return -(to - from - 0.5 * eps * eps * grad_from).squaredNorm() / (2.0 * eps * eps);
    };
    double correction = log_q(current, proposal, grad_prop) - log_q(proposal, current, grad_cur);
    if (mh_accept(lp_prop - lp_cur, correction, rng)) {
        s.params.W[l - 1].col(n) = proposal.head(dim - 1);
        s.params.b[l - 1][n] = proposal[dim - 1];
        return true;
    }
    return false;
}

/// Joint log density of the chain state (constants dropped).
inline double gibbs_log_density(const GibbsState& s) {
    int L = s.layers();
    double lp = 0.0;
    for (int l = 0; l < L; ++l)
        lp += -0.5 * s.hyper.lambda_w * (s.params.W[l].squaredNorm() + s.params.b[l].squaredNorm());
    for (int l = 1; l <= L; ++l) {
        const Eigen::MatrixXd& below = s.layer_below(l);
        Eigen::MatrixXd mean = sigmoid((below * s.params.W[l - 1]).rowwise() +
                                       s.params.b[l - 1].transpose());
        lp += -0.5 * s.hyper.lambda_s * (s.acts[l - 1] - mean).squaredNorm();
    }
    lp += -0.5 * s.hyper.lambda_s * (s.xc - s.acts[L - 1]).squaredNorm();
    lp += -0.5 * s.hyper.lambda_v * (s.V - s.acts[L / 2 - 1]).squaredNorm();
    lp += -0.5 * s.hyper.lambda_u * s.U.squaredNorm();
    lp += rating_term(s.U, s.V, s.ratings);
    return lp;
}

struct GibbsSample {
    Eigen::MatrixXd U, V;
};

struct GibbsResult {
    std::vector<GibbsSample> samples;          // post-burn-in, thinned
    Eigen::MatrixXd posterior_mean_scores;     // mean of U V^T over retained samples
    std::vector<double> log_density_trace;     // per sweep
    double activation_acceptance = 0.0;        // post-burn-in rates
    double weight_acceptance = 0.0;
    GibbsState final_state;
};

/// Systematic-scan Metropolis-within-Gibbs: all u_i, all v_j, all
/// activation rows, all weight columns, once per sweep. Proposal scales
/// are auto-tuned during burn-in toward 0.23-0.44 acceptance.
inline GibbsResult run_gibbs(const CdlData& data, const std::vector<Eigen::Index>& dims,
                             const Hyperparams& hyper, int sweeps, int burn_in, int thin,
                             std::uint64_t seed) {
    if (sweeps <= burn_in) throw argument_error("run_gibbs: sweeps must exceed burn_in");
    if (thin < 1) throw argument_error("run_gibbs: thin must be >= 1");
    if (!(hyper.lambda_s > 0)) throw validation_error("run_gibbs: lambda_s must be finite positive");

    GibbsState s;
    Rng init_rng = split_rng(seed, 0);
    s.params = init_net(dims, init_rng);
    s.x0 = data.x0;
    s.xc = data.xc;
    s.ratings = data.ratings;
    s.hyper = hyper;
    int L = s.layers();
    // initialize activations at their conditional means (all-sigmoid chain)
    s.acts.clear();
    const Eigen::MatrixXd* below = &s.x0;
    for (int l = 1; l <= L; ++l) {
        s.acts.push_back(sigmoid((*below * s.params.W[l - 1]).rowwise() +
                                 s.params.b[l - 1].transpose()));
        below = &s.acts.back();
    }
    Eigen::Index K = s.params.latent_width();
    s.U = Eigen::MatrixXd::Zero(data.ratings.users, K);
    s.V = s.acts[L / 2 - 1];

    GibbsResult res;
    Eigen::MatrixXd score_sum = Eigen::MatrixXd::Zero(data.ratings.users, data.ratings.items);
    long act_acc = 0, act_tot = 0, w_acc = 0, w_tot = 0;

    for (int sweep = 0; sweep < sweeps; ++sweep) {
        Rng rng = split_rng(seed, 1000 + static_cast<std::uint64_t>(sweep));
        for (Eigen::Index i = 0; i < s.ratings.users; ++i)
            s.U.row(i) = cond_u_sample(i, s.V, s.ratings, hyper.lambda_u, rng).transpose();
        for (Eigen::Index j = 0; j < s.ratings.items; ++j)
            s.V.row(j) = cond_v_sample(j, s.U, s.ratings, hyper.lambda_v,
                                       s.acts[L / 2 - 1].row(j), rng)
                             .transpose();
        long sweep_act_acc = 0, sweep_act_tot = 0, sweep_w_acc = 0, sweep_w_tot = 0;
        for (Eigen::Index j = 0; j < s.x0.rows(); ++j)
            for (int l = 1; l <= L; ++l) {
                sweep_act_acc += mh_sample_activation(s, j, l, rng);
                ++sweep_act_tot;
            }
        for (int l = 1; l <= L; ++l)
            for (Eigen::Index n = 0; n < s.params.W[l - 1].cols(); ++n) {
                sweep_w_acc += mh_sample_weights(s, l, n, rng);
                ++sweep_w_tot;
            }

        double lp = gibbs_log_density(s);
        if (!std::isfinite(lp)) throw numeric_error("run_gibbs: log density diverged");
        res.log_density_trace.push_back(lp);
        ++s.step;

        if (sweep < burn_in) {
            auto tune = [](double& scale, long acc, long tot) {
                double rate = tot > 0 ? static_cast<double>(acc) / tot : 0.0;
                if (rate > 0.44) scale *= 1.1;
                if (rate < 0.23) scale /= 1.1;
            };
            tune(s.act_scale, sweep_act_acc, sweep_act_tot);
            tune(s.weight_step, sweep_w_acc, sweep_w_tot);
        } else {
            act_acc += sweep_act_acc;
            act_tot += sweep_act_tot;
            w_acc += sweep_w_acc;
            w_tot += sweep_w_tot;
            if ((sweep - burn_in) % thin == 0) {
                res.samples.push_back({s.U, s.V});
                score_sum.noalias() += s.U * s.V.transpose();
            }
        }
    }
    if (!res.samples.empty())
        res.posterior_mean_scores = score_sum / static_cast<double>(res.samples.size());
    res.activation_acceptance = act_tot > 0 ? static_cast<double>(act_acc) / act_tot : 0.0;
    res.weight_acceptance = w_tot > 0 ? static_cast<double>(w_acc) / w_tot : 0.0;
    res.final_state = std::move(s);
    return res;
}

}  // namespace bdl

#endif
