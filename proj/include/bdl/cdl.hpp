#ifndef BDL_CDL_HPP
#define BDL_CDL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bdl/corpus.hpp"
#include "bdl/errors.hpp"
#include "bdl/net.hpp"
#include "bdl/rng.hpp"

namespace bdl {

/// User matrix U (I x K) and item matrix V (J x K).
struct LatentFactors {
    Eigen::MatrixXd U;
    Eigen::MatrixXd V;
};

/// Confidence-weighted rating fit: -sum_ij C_ij/2 (R_ij - u_i^T v_j)^2
/// over all I*J pairs (C = a on positives, b elsewhere).
inline double rating_term(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V,
                          const ImplicitRatings& ratings) {
    Eigen::MatrixXd S = U * V.transpose();
    double term = ratings.b * S.squaredNorm();
    for (Eigen::Index i = 0; i < ratings.users; ++i)
        for (Eigen::Index j : ratings.positives[i]) {
            double s = S(i, j);
            term += -ratings.b * s * s + ratings.a * (1.0 - s) * (1.0 - s);
        }
    return -0.5 * term;
}

/// Joint log-likelihood of CDL in the lambda_s -> inf limit (higher is
/// better). x0 is the corrupted content batch, xc the clean target.
inline double cdl_objective(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V,
                            const NetParams& params, const Eigen::MatrixXd& x0,
                            const Eigen::MatrixXd& xc, const ImplicitRatings& ratings,
                            const Hyperparams& hyper) {
    double user_prior = -0.5 * hyper.lambda_u * U.squaredNorm();
    detail::check_finite(user_prior, "user prior");

    double weight_decay = 0.0;
    for (int l = 0; l < params.layers(); ++l)
        weight_decay += params.W[l].squaredNorm() + params.b[l].squaredNorm();
    weight_decay *= -0.5 * hyper.lambda_w;
    detail::check_finite(weight_decay, "weight decay");

    auto acts = forward(x0, params, params.layers());
    const Eigen::MatrixXd& enc = acts[params.layers() / 2 - 1];
    const Eigen::MatrixXd& rec = acts[params.layers() - 1];

    double hinge = -0.5 * hyper.lambda_v * (V - enc).squaredNorm();
    detail::check_finite(hinge, "item offset");

    double recon = -0.5 * hyper.lambda_n * (rec - xc).squaredNorm();
    detail::check_finite(recon, "reconstruction");

    double fit = rating_term(U, V, ratings);
    detail::check_finite(fit, "rating fit");

    return user_prior + weight_decay + hinge + recon + fit;
}

namespace detail {

// Shared ridge solve for user/item coordinate updates.
// system = base_gram + lambda*I + (a-b) * sum_neighbors x x^T,
// rhs    = a * sum_neighbors x + prior_rhs.
inline Eigen::VectorXd coordinate_solve(const Eigen::MatrixXd& base_gram,
                                        const Eigen::MatrixXd& factors,
                                        const std::vector<Eigen::Index>& neighbors, double a,
                                        double b, double lambda, const Eigen::VectorXd& prior_rhs) {
    Eigen::Index K = base_gram.rows();
    Eigen::MatrixXd A = b * base_gram + lambda * Eigen::MatrixXd::Identity(K, K);
    Eigen::VectorXd rhs = prior_rhs;
    for (Eigen::Index n : neighbors) {
        A.noalias() += (a - b) * factors.row(n).transpose() * factors.row(n);
        rhs.noalias() += a * factors.row(n).transpose();
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw solve_error("coordinate update: singular system");
    Eigen::VectorXd x = ldlt.solve(rhs);
    if (!x.allFinite()) throw solve_error("coordinate update: non-finite solution");
    return x;
}

}  // namespace detail

/// Exact minimizer of the objective in u_i with everything else fixed:
/// u_i <- (V C_i V^T + lambda_u I)^{-1} V C_i R_i.
inline Eigen::VectorXd update_user(Eigen::Index i, const Eigen::MatrixXd& V,
                                   const ImplicitRatings& ratings, double lambda_u) {
    return detail::coordinate_solve(V.transpose() * V, V, ratings.positives[i], ratings.a,
                                    ratings.b, lambda_u,
                                    Eigen::VectorXd::Zero(V.cols()));
}

/// v_j <- (U C_j U^T + lambda_v I)^{-1} (U C_j R_j + lambda_v enc^T)
/// where enc is the encoder output row for item j.
inline Eigen::VectorXd update_item(Eigen::Index j, const Eigen::MatrixXd& U,
                                   const ImplicitRatings& ratings, double lambda_v,
                                   const Eigen::RowVectorXd& enc) {
    std::vector<Eigen::Index> raters;
    for (Eigen::Index i = 0; i < ratings.users; ++i)
        if (std::binary_search(ratings.positives[i].begin(), ratings.positives[i].end(), j))
            raters.push_back(i);
    return detail::coordinate_solve(U.transpose() * U, U, raters, ratings.a, ratings.b, lambda_v,
                                    lambda_v * enc.transpose());
}

/// Full U then V sweep using cached Gram matrices; O(K^2 N_R + K^3 (I+J)).
inline void sweep_factors(Eigen::MatrixXd& U, Eigen::MatrixXd& V, const ImplicitRatings& ratings,
                          const Eigen::MatrixXd& enc, double lambda_u, double lambda_v) {
    Eigen::Index K = U.cols();
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(K);
    Eigen::MatrixXd gramV = V.transpose() * V;
    for (Eigen::Index i = 0; i < ratings.users; ++i)
        U.row(i) = detail::coordinate_solve(gramV, V, ratings.positives[i], ratings.a, ratings.b,
                                            lambda_u, zero)
                       .transpose();
    // invert positives to per-item rater lists
    std::vector<std::vector<Eigen::Index>> raters(ratings.items);
    for (Eigen::Index i = 0; i < ratings.users; ++i)
        for (Eigen::Index j : ratings.positives[i]) raters[j].push_back(i);
    Eigen::MatrixXd gramU = U.transpose() * U;
    for (Eigen::Index j = 0; j < ratings.items; ++j)
        V.row(j) = detail::coordinate_solve(gramU, U, raters[j], ratings.a, ratings.b, lambda_v,
                                            lambda_v * enc.row(j).transpose())
                       .transpose();
}

/// Gradients of the negative CDL objective (descent direction) with
/// respect to the network parameters: weight decay plus the two-headed
/// loss with target V at layer L/2 (weight lambda_v) and target xc at
/// layer L (weight lambda_n).
inline NetGrads net_gradients_cdl(const NetParams& params, const Eigen::MatrixXd& x0,
                                  const Eigen::MatrixXd& xc, const Eigen::MatrixXd& V,
                                  const Hyperparams& hyper) {
    return two_head_gradients(params, x0, &V, hyper.lambda_v, &xc, hyper.lambda_n, hyper.lambda_w);
}

enum class CdlMode {
    Joint,        // alternate factor sweeps and net epochs
    TwoStep,      // lambda_n/lambda_v -> inf: train the net alone, then factors
    DecoderFree,  // lambda_n/lambda_v -> 0: drop the reconstruction head
};

inline CdlMode cdl_mode_from_string(const std::string& s) {
    if (s == "joint") return CdlMode::Joint;
    if (s == "two-step") return CdlMode::TwoStep;
    if (s == "decoder-free") return CdlMode::DecoderFree;
    throw config_error("unknown cdl mode: " + s);
}

struct CdlData {
    Eigen::MatrixXd x0;  // corrupted content, J x B
    Eigen::MatrixXd xc;  // clean content, J x B
    ImplicitRatings ratings;
};

struct CdlResult {
    NetParams params;
    LatentFactors factors;
    std::vector<double> objective_trace;  // one value per epoch, after the factor sweep
};

/// Alternating MAP training. Each epoch runs one exact U,V sweep
/// followed by `net_steps` full-batch gradient steps on the network.
/// The objective never decreases across a factor sweep; training aborts
/// on numeric divergence.
inline CdlResult train_cdl(const CdlData& data, const NetParams& init, const Hyperparams& hyper,
                           int epochs, CdlMode mode = CdlMode::Joint, int net_steps = 5) {
    hyper.validate();
    Hyperparams h = hyper;
    if (mode == CdlMode::DecoderFree) h.lambda_n = 0.0;

    CdlResult res;
    res.params = init;
    Eigen::Index K = init.latent_width();
    res.factors.U = Eigen::MatrixXd::Zero(data.ratings.users, K);
    SgdState sgd = SgdState::zeros_like(res.params);

    if (mode == CdlMode::TwoStep) {
        // perception trained alone on reconstruction, then frozen
        for (int e = 0; e < epochs * net_steps; ++e) {
            auto g = two_head_gradients(res.params, data.x0, nullptr, 0.0, &data.xc, h.lambda_n,
                                        h.lambda_w);
            sgd_step(res.params, g, sgd, h);
        }
    }

    Eigen::MatrixXd enc = encode(data.x0, res.params);
    res.factors.V = enc;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        double before = cdl_objective(res.factors.U, res.factors.V, res.params, data.x0, data.xc,
                                      data.ratings, h);
        sweep_factors(res.factors.U, res.factors.V, data.ratings, enc, h.lambda_u, h.lambda_v);
        double after = cdl_objective(res.factors.U, res.factors.V, res.params, data.x0, data.xc,
                                     data.ratings, h);
        if (!std::isfinite(after)) throw numeric_error("train_cdl: objective diverged");
        if (after < before - 1e-9 * (1.0 + std::abs(before)))
            throw numeric_error("train_cdl: factor sweep decreased the objective");
        res.objective_trace.push_back(after);

        if (mode != CdlMode::TwoStep) {
            for (int s = 0; s < net_steps; ++s) {
                auto g = net_gradients_cdl(res.params, data.x0, data.xc, res.factors.V, h);
                sgd_step(res.params, g, sgd, h);
            }
            enc = encode(data.x0, res.params);
        }
    }
    return res;
}

/// Dense score matrix: u_i^T v_j for warm items; for cold items (no
/// training positives) the offset is zero and the encoder output stands
/// in for v_j.
inline Eigen::MatrixXd predict(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V,
                               const NetParams& params, const Eigen::MatrixXd& x0,
                               const std::vector<bool>& cold) {
    Eigen::MatrixXd scores = U * V.transpose();
    if (std::find(cold.begin(), cold.end(), true) != cold.end()) {
        Eigen::MatrixXd enc = encode(x0, params);
        for (Eigen::Index j = 0; j < scores.cols(); ++j)
            if (cold[static_cast<std::size_t>(j)]) scores.col(j) = U * enc.row(j).transpose();
    }
    return scores;
}

inline std::vector<bool> cold_items(const ImplicitRatings& train) {
    std::vector<bool> cold(static_cast<std::size_t>(train.items), true);
    for (const auto& pos : train.positives)
        for (Eigen::Index j : pos) cold[static_cast<std::size_t>(j)] = false;
    return cold;
}

/// Per-user recall@M (train positives excluded from the candidate set)
/// and the mean over users with at least one test positive.
inline std::pair<std::vector<double>, double> recall_at_m(const Eigen::MatrixXd& scores,
                                                          const ImplicitRatings& train,
                                                          const ImplicitRatings& test, int M) {
    if (M <= 0) throw argument_error("recall_at_m: M must be positive");
    std::vector<double> per_user(static_cast<std::size_t>(scores.rows()),
                                 std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    int counted = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const auto& test_pos = test.positives[i];
        if (test_pos.empty()) continue;
        const auto& train_pos = train.positives[i];
        std::vector<Eigen::Index> candidates;
        candidates.reserve(scores.cols());
        for (Eigen::Index j = 0; j < scores.cols(); ++j)
            if (!std::binary_search(train_pos.begin(), train_pos.end(), j)) candidates.push_back(j);
        Eigen::Index top = std::min<Eigen::Index>(M, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + top, candidates.end(),
                          [&](Eigen::Index x, Eigen::Index y) { return scores(i, x) > scores(i, y); });
        int hits = 0;
        for (Eigen::Index t = 0; t < top; ++t)
            if (std::binary_search(test_pos.begin(), test_pos.end(), candidates[t])) ++hits;
        double rec = static_cast<double>(hits) / static_cast<double>(test_pos.size());
        per_user[static_cast<std::size_t>(i)] = rec;
        sum += rec;
        ++counted;
    }
    return {per_user, counted > 0 ? sum / counted : 0.0};
}

// ---------------------------------------------------------------------------
// Collaborative deep ranking: pairwise preferences replace pointwise ratings.

struct Preference {
    Eigen::Index user;
    Eigen::Index liked;     // R = 1
    Eigen::Index disliked;  // R = 0
    double delta = 1.0;
    double confidence = 1.0;
};

using PreferenceSet = std::vector<Preference>;

/// Uniformly sample up to max_pairs_per_user (positive, negative) pairs
/// per user. Deterministic given seed.
inline PreferenceSet sample_preferences(const ImplicitRatings& ratings, int max_pairs_per_user,
                                        std::uint64_t seed) {
    PreferenceSet prefs;
    for (Eigen::Index i = 0; i < ratings.users; ++i) {
        const auto& pos = ratings.positives[i];
        if (pos.empty() || static_cast<Eigen::Index>(pos.size()) == ratings.items) continue;
        Rng rng = split_rng(seed, static_cast<std::uint64_t>(i));
        std::uniform_int_distribution<Eigen::Index> pick_pos(0, static_cast<Eigen::Index>(pos.size()) - 1);
        std::uniform_int_distribution<Eigen::Index> pick_item(0, ratings.items - 1);
        for (int t = 0; t < max_pairs_per_user; ++t) {
            Eigen::Index j = pos[pick_pos(rng)];
            Eigen::Index k = pick_item(rng);
            int guard = 0;
            while (std::binary_search(pos.begin(), pos.end(), k) && ++guard < 1000)
                k = pick_item(rng);
            if (guard >= 1000) break;
            prefs.push_back({i, j, k, 1.0, ratings.a});
        }
    }
    return prefs;
}

inline void validate_preferences(const PreferenceSet& prefs, const ImplicitRatings& ratings) {
    for (const auto& p : prefs) {
        const auto& pos = ratings.positives[p.user];
        bool jp = std::binary_search(pos.begin(), pos.end(), p.liked);
        bool kp = std::binary_search(pos.begin(), pos.end(), p.disliked);
        if (!jp || kp)
            throw validation_error("preference pair violates R_ij > R_ik for user " +
                                   std::to_string(p.user));
    }
}

/// -sum C_ijk/2 (Delta_ijk - (u_i^T v_j - u_i^T v_k))^2.
inline double cdr_objective_term(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V,
                                 const PreferenceSet& prefs) {
    double term = 0.0;
    for (const auto& p : prefs) {
        double margin = U.row(p.user).dot(V.row(p.liked) - V.row(p.disliked));
        double resid = p.delta - margin;
        term -= 0.5 * p.confidence * resid * resid;
    }
    return term;
}

/// Ascent gradients of cdr_objective_term with respect to U and V.
inline void cdr_gradients(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V,
                          const PreferenceSet& prefs, Eigen::MatrixXd& gU, Eigen::MatrixXd& gV) {
    gU.setZero(U.rows(), U.cols());
    gV.setZero(V.rows(), V.cols());
    for (const auto& p : prefs) {
        Eigen::RowVectorXd diff = V.row(p.liked) - V.row(p.disliked);
        double resid = p.delta - U.row(p.user).dot(diff);
        double w = p.confidence * resid;
        gU.row(p.user) += w * diff;
        gV.row(p.liked) += w * U.row(p.user);
        gV.row(p.disliked) -= w * U.row(p.user);
    }
}

/// CDR: the pointwise rating term of CDL replaced with the pairwise
/// preference term; factors learned by gradient ascent, net as in CDL.
inline CdlResult train_cdr(const CdlData& data, const NetParams& init, const Hyperparams& hyper,
                           int epochs, std::uint64_t seed, int max_pairs_per_user = 50,
                           int net_steps = 5, double factor_eta = 0.01, int factor_steps = 20) {
    hyper.validate();
    CdlResult res;
    res.params = init;
    Eigen::Index K = init.latent_width();
    res.factors.U = Eigen::MatrixXd::Zero(data.ratings.users, K);
    SgdState sgd = SgdState::zeros_like(res.params);
    Eigen::MatrixXd enc = encode(data.x0, res.params);
    res.factors.V = enc;
    Eigen::MatrixXd gU, gV;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        PreferenceSet prefs =
            sample_preferences(data.ratings, max_pairs_per_user, seed + static_cast<std::uint64_t>(epoch));
        for (int s = 0; s < factor_steps; ++s) {
            cdr_gradients(res.factors.U, res.factors.V, prefs, gU, gV);
            gU -= hyper.lambda_u * res.factors.U;
            gV -= hyper.lambda_v * (res.factors.V - enc);
            res.factors.U += factor_eta * gU;
            res.factors.V += factor_eta * gV;
        }
        double obj = cdr_objective_term(res.factors.U, res.factors.V, prefs) -
                     0.5 * hyper.lambda_u * res.factors.U.squaredNorm() -
                     0.5 * hyper.lambda_v * (res.factors.V - enc).squaredNorm();
        if (!std::isfinite(obj)) throw numeric_error("train_cdr: objective diverged");
        res.objective_trace.push_back(obj);
        for (int s = 0; s < net_steps; ++s) {
            auto g = net_gradients_cdl(res.params, data.x0, data.xc, res.factors.V, hyper);
            sgd_step(res.params, g, sgd, hyper);
        }
        enc = encode(data.x0, res.params);
    }
    return res;
}

}  // namespace bdl

#endif
