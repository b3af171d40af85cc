#ifndef BDL_DPFA_HPP
#define BDL_DPFA_HPP

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

#include "bdl/errors.hpp"
#include "bdl/rng.hpp"

namespace bdl {

inline double sigmoid_scalar(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Prior constants and SGNHT settings for deep Poisson factor analysis.
struct PfaHyper {
    double a_phi = 1.0;  // Dirichlet concentration for topics
    double e0 = 1.0, f0 = 1.0;  // gamma_0 ~ Gamma(e0, 1/f0)
    double c0 = 1.0;            // r_k ~ Gamma(gamma_0, 1/c0)
    double a0 = 1.0, b0 = 1.0;  // p_n ~ Beta(a0, b0)
    double sgnht_D = 1.0;       // injected variance
    double sgnht_h = 1e-4;      // SDE step size
    double sgnht_M = 1.0;       // thermostat mass

    void validate() const {
        if (a_phi <= 0 || e0 <= 0 || f0 <= 0 || c0 <= 0 || a0 <= 0 || b0 <= 0 || sgnht_D < 0 ||
            sgnht_h <= 0 || sgnht_M <= 0)
            throw validation_error("PfaHyper: all constants must be positive");
    }
};

/// Sigmoid belief network prior on topic usage. For layers l = 1..L-1,
/// h^(l)_k ~ Ber(sigma(h^(l+1) w^(l)_k + b^(l)_k)); the top layer uses
/// its bias alone. weight[l-1] has shape K_{l+1} x K_l.
struct SbnParams {
    std::vector<Eigen::MatrixXd> weight;  // size L-1
    std::vector<Eigen::VectorXd> bias;    // size L; bias[l-1] has length K_l

    int layers() const { return static_cast<int>(bias.size()); }
    Eigen::Index width(int l) const { return bias[l - 1].size(); }

    static SbnParams random(const std::vector<Eigen::Index>& widths, Rng& rng, double stddev = 0.5) {
        SbnParams s;
        std::normal_distribution<double> gauss(0.0, stddev);
        for (std::size_t l = 0; l + 1 < widths.size(); ++l)
            s.weight.push_back(
                Eigen::MatrixXd::NullaryExpr(widths[l + 1], widths[l], [&] { return gauss(rng); }));
        for (std::size_t l = 0; l < widths.size(); ++l)
            s.bias.push_back(
                Eigen::VectorXd::NullaryExpr(widths[l], [&] { return gauss(rng); }));
        return s;
    }

    // Bernoulli mean of unit k in layer l given the layer above (ignored
    // for the top layer).
    double prior_prob(int l, Eigen::Index k, const Eigen::RowVectorXd& h_above) const {
        if (l == layers()) return sigmoid_scalar(bias[l - 1][k]);
        return sigmoid_scalar(h_above.dot(weight[l - 1].col(k)) + bias[l - 1][k]);
    }
};

/// Full DPFA latent state.
struct PfaState {
    Eigen::MatrixXd phi;    // K x P, rows on the simplex
    Eigen::MatrixXd theta;  // N x K, nonnegative
    std::vector<Eigen::MatrixXd> h;  // h[l-1] is N x K_l with 0/1 entries
    Eigen::VectorXd r;      // K, positive
    double gamma0 = 1.0;
    Eigen::VectorXd p;      // N, in (0,1)

    void validate() const {
        for (Eigen::Index k = 0; k < phi.rows(); ++k)
            if (std::abs(phi.row(k).sum() - 1.0) > 1e-12)
                throw validation_error("phi row off the simplex");
        if ((theta.array() < 0).any()) throw validation_error("theta must be nonnegative");
        for (const auto& hl : h)
            if (((hl.array() != 0.0) && (hl.array() != 1.0)).any())
                throw validation_error("h entries must be binary");
    }
};

namespace detail {

inline double gamma_draw(double shape, double scale, Rng& rng) {
    std::gamma_distribution<double> g(shape, scale);
    return g(rng);
}

inline double beta_draw(double a, double b, Rng& rng) {
    double x = gamma_draw(a, 1.0, rng), y = gamma_draw(b, 1.0, rng);
    return x / (x + y);
}

inline Eigen::VectorXd dirichlet_draw(const Eigen::VectorXd& alpha, Rng& rng) {
    Eigen::VectorXd g(alpha.size());
    for (Eigen::Index i = 0; i < alpha.size(); ++i) g[i] = gamma_draw(alpha[i], 1.0, rng);
    double sum = g.sum();
    if (sum <= 0) {  // extremely small alphas: fall back to argmax mass
        g.setZero();
        g[0] = 1.0;
        return g;
    }
    return g / sum;
}

// log Gamma(x; shape, scale) density
inline double log_gamma_pdf(double x, double shape, double scale) {
    return (shape - 1.0) * std::log(x) - x / scale - std::lgamma(shape) - shape * std::log(scale);
}

}  // namespace detail

/// Ancestral draw from the full generative process; returns counts and
/// the generating state.
inline std::pair<Eigen::MatrixXi, PfaState> generate_synthetic(const PfaHyper& hyper,
                                                               const SbnParams& sbn,
                                                               Eigen::Index N, Eigen::Index P,
                                                               Eigen::Index K, Rng& rng) {
    hyper.validate();
    if (sbn.width(1) != K) throw dimension_error("generate_synthetic: SBN bottom width must be K");
    PfaState st;
    st.gamma0 = detail::gamma_draw(hyper.e0, 1.0 / hyper.f0, rng);
    st.r = Eigen::VectorXd::NullaryExpr(
        K, [&] { return detail::gamma_draw(st.gamma0, 1.0 / hyper.c0, rng); });
    st.p = Eigen::VectorXd::NullaryExpr(N, [&] { return detail::beta_draw(hyper.a0, hyper.b0, rng); });
    st.phi.resize(K, P);
    for (Eigen::Index k = 0; k < K; ++k)
        st.phi.row(k) =
            detail::dirichlet_draw(Eigen::VectorXd::Constant(P, hyper.a_phi), rng).transpose();

    int L = sbn.layers();
    st.h.resize(L);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int l = L; l >= 1; --l) {
        st.h[l - 1].resize(N, sbn.width(l));
        for (Eigen::Index n = 0; n < N; ++n)
            for (Eigen::Index k = 0; k < sbn.width(l); ++k) {
                double prob = sbn.prior_prob(
                    l, k, l == L ? Eigen::RowVectorXd() : Eigen::RowVectorXd(st.h[l].row(n)));
                st.h[l - 1](n, k) = unif(rng) < prob ? 1.0 : 0.0;
            }
    }

    st.theta.resize(N, K);
    for (Eigen::Index n = 0; n < N; ++n)
        for (Eigen::Index k = 0; k < K; ++k)
            st.theta(n, k) = detail::gamma_draw(st.r[k], st.p[n] / (1.0 - st.p[n]), rng);

    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(N, P);
    for (Eigen::Index n = 0; n < N; ++n)
        for (Eigen::Index pp = 0; pp < P; ++pp) {
            long total = 0;
            for (Eigen::Index k = 0; k < K; ++k) {
                double rate = st.phi(k, pp) * st.theta(n, k) * st.h[0](n, k);
                if (rate > 0) {
                    std::poisson_distribution<long> pois(rate);
                    total += pois(rng);
                }
            }
            counts(n, pp) = static_cast<int>(total);
        }
    return {counts, st};
}

/// Multinomial allocation of an observed count x_np over topics with
/// zeta_k proportional to phi_kp * theta_nk, hard-zeroed where h = 0.
/// The allocation resums to x_np exactly.
inline Eigen::VectorXi sample_counts(int x_np, const Eigen::VectorXd& phi_col,
                                     const Eigen::RowVectorXd& theta_row,
                                     const Eigen::RowVectorXd& h_row, Rng& rng) {
    Eigen::Index K = phi_col.size();
    Eigen::VectorXi alloc = Eigen::VectorXi::Zero(K);
    if (x_np == 0) return alloc;
    if (x_np < 0) throw argument_error("sample_counts: negative count");
    Eigen::VectorXd zeta(K);
    for (Eigen::Index k = 0; k < K; ++k)
        zeta[k] = h_row[k] > 0 ? phi_col[k] * theta_row[k] : 0.0;
    double total = zeta.sum();
    if (total <= 0) throw numeric_error("sample_counts: all allocation probabilities are zero");
    // sequential binomial decomposition of the multinomial
    int remaining = x_np;
    double mass = total;
    for (Eigen::Index k = 0; k < K && remaining > 0; ++k) {
        if (k == K - 1) {
            alloc[k] = remaining;
            break;
        }
        double pk = zeta[k] / mass;
        pk = std::min(1.0, std::max(0.0, pk));
        std::binomial_distribution<int> bin(remaining, pk);
        int c = bin(rng);
        alloc[k] = c;
        remaining -= c;
        mass -= zeta[k];
        if (mass <= 0 && remaining > 0) {
            alloc[k] += remaining;
            remaining = 0;
        }
    }
    return alloc;
}

/// phi_k ~ Dir(a_phi + x_.1k, ..., a_phi + x_.Pk); rows renormalized to
/// machine precision.
inline Eigen::MatrixXd sample_phi(const Eigen::MatrixXd& word_topic_sums /*K x P*/, double a_phi,
                                  Rng& rng) {
    Eigen::MatrixXd phi(word_topic_sums.rows(), word_topic_sums.cols());
    for (Eigen::Index k = 0; k < phi.rows(); ++k) {
        Eigen::VectorXd alpha =
            word_topic_sums.row(k).transpose().array() + a_phi;
        phi.row(k) = detail::dirichlet_draw(alpha, rng).transpose();
        phi.row(k) /= phi.row(k).sum();
    }
    return phi;
}

/// theta_nk ~ Gamma(r_k h + x_n.k, scale p_n); degenerate zero when the
/// shape would be zero (h = 0 and no counts).
inline double sample_theta(double x_nk, double r_k, double h_nk, double p_n, Rng& rng) {
    double shape = r_k * h_nk + x_nk;
    if (shape <= 0) return 0.0;
    return detail::gamma_draw(shape, p_n, rng);
}

/// h^(1)_nk: forced to 1 when the topic has allocated counts; otherwise
/// Bernoulli with odds pi~ / (pi~ + (1 - pi)), pi~ = pi (1-p_n)^{r_k}.
inline double sample_h1(double x_nk, double pi_nk, double r_k, double p_n, Rng& rng) {
    if (pi_nk < 0 || pi_nk > 1) throw argument_error("sample_h1: pi must be in [0,1]");
    if (x_nk > 0) return 1.0;
    double pi_tilde = pi_nk * std::pow(1.0 - p_n, r_k);
    double denom = pi_tilde + (1.0 - pi_nk);
    double prob = denom > 0 ? pi_tilde / denom : 0.0;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return unif(rng) < prob ? 1.0 : 0.0;
}

/// Single-site Gibbs over a deep layer l >= 2: each unit's two-state
/// posterior combines its own prior with the Bernoulli likelihood of
/// every unit it parents in layer l-1. h_l is updated in place.
inline void sample_h_deep(int l, const Eigen::MatrixXd& h_below, const SbnParams& sbn,
                          Eigen::MatrixXd& h_l, const Eigen::MatrixXd* h_above, Rng& rng) {
    if (l < 2 || l > sbn.layers()) throw argument_error("sample_h_deep: layer out of range");
    Eigen::Index N = h_l.rows(), Kl = h_l.cols();
    const Eigen::MatrixXd& w_down = sbn.weight[l - 2];  // K_l x K_{l-1}
    const Eigen::VectorXd& b_down = sbn.bias[l - 2];
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index n = 0; n < N; ++n) {
        for (Eigen::Index k = 0; k < Kl; ++k) {
            double prior = sbn.prior_prob(
                l, k, h_above ? Eigen::RowVectorXd(h_above->row(n)) : Eigen::RowVectorXd());
            double logp[2];
            for (int val = 0; val <= 1; ++val) {
                double lp = val ? std::log(prior) : std::log1p(-prior);
                Eigen::RowVectorXd h_cand = h_l.row(n);
                h_cand[k] = val;
                Eigen::RowVectorXd z = h_cand * w_down;
                for (Eigen::Index kk = 0; kk < h_below.cols(); ++kk) {
                    double q = sigmoid_scalar(z[kk] + b_down[kk]);
                    lp += h_below(n, kk) > 0 ? std::log(q) : std::log1p(-q);
                }
                logp[val] = lp;
            }
            double p1 = 1.0 / (1.0 + std::exp(logp[0] - logp[1]));
            h_l(n, k) = unif(rng) < p1 ? 1.0 : 0.0;
        }
    }
}

/// Log conditional of r_k given theta draws for the documents where the
/// topic is active.
inline double r_log_conditional(double r_k, double gamma0, double c0,
                                const std::vector<std::pair<double, double>>& active_theta_p) {
    double lp = detail::log_gamma_pdf(r_k, gamma0, 1.0 / c0);
    for (const auto& [theta, p] : active_theta_p)
        lp += detail::log_gamma_pdf(theta, r_k, p / (1.0 - p));
    return lp;
}

inline double gamma0_log_conditional(double gamma0, const PfaHyper& hyper,
                                     const Eigen::VectorXd& r) {
    double lp = detail::log_gamma_pdf(gamma0, hyper.e0, 1.0 / hyper.f0);
    for (Eigen::Index k = 0; k < r.size(); ++k)
        lp += detail::log_gamma_pdf(r[k], gamma0, 1.0 / hyper.c0);
    return lp;
}

struct RGammaAcceptance {
    long r_accepted = 0, r_total = 0;
    long gamma_accepted = 0, gamma_total = 0;
};

/// Conjugate Beta update for p_n and random-walk Metropolis on the log
/// scale for r_k and gamma_0.
inline void sample_r_gamma(PfaState& st, const Eigen::MatrixXd& doc_topic_sums /*N x K*/,
                           const PfaHyper& hyper, Rng& rng, RGammaAcceptance* acc = nullptr,
                           double step = 0.3) {
    Eigen::Index N = st.theta.rows(), K = st.theta.cols();
    // p_n | - ~ Beta(a0 + sum_k x_n.k, b0 + sum_k r_k h_nk)
    for (Eigen::Index n = 0; n < N; ++n) {
        double xa = doc_topic_sums.row(n).sum();
        double rb = st.h[0].row(n).dot(st.r.transpose());
        st.p[n] = detail::beta_draw(hyper.a0 + xa, hyper.b0 + rb, rng);
        st.p[n] = std::min(1.0 - 1e-12, std::max(1e-12, st.p[n]));
    }
    std::normal_distribution<double> gauss(0.0, step);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index k = 0; k < K; ++k) {
        std::vector<std::pair<double, double>> active;
        for (Eigen::Index n = 0; n < N; ++n)
            if (st.h[0](n, k) > 0 && st.theta(n, k) > 0) active.push_back({st.theta(n, k), st.p[n]});
        double cur = st.r[k];
        double prop = cur * std::exp(gauss(rng));
        // log-scale walk: Jacobian contributes log(prop) - log(cur)
        double diff = r_log_conditional(prop, st.gamma0, hyper.c0, active) -
                      r_log_conditional(cur, st.gamma0, hyper.c0, active) + std::log(prop) -
                      std::log(cur);
        bool accepted = diff >= 0 || std::log(unif(rng)) < diff;
        if (accepted) st.r[k] = prop;
        if (acc) {
            acc->r_accepted += accepted;
            ++acc->r_total;
        }
    }
    {
        double cur = st.gamma0;
        double prop = cur * std::exp(gauss(rng));
        double diff = gamma0_log_conditional(prop, hyper, st.r) -
                      gamma0_log_conditional(cur, hyper, st.r) + std::log(prop) - std::log(cur);
        bool accepted = diff >= 0 || std::log(unif(rng)) < diff;
        if (accepted) st.gamma0 = prop;
        if (acc) {
            acc->gamma_accepted += accepted;
            ++acc->gamma_total;
        }
    }
}

// ---------------------------------------------------------------------------
// Stochastic gradient Nose-Hoover thermostat.

struct SgnhtState {
    Eigen::VectorXd position;  // unconstrained reparameterization
    Eigen::VectorXd momentum;
    double thermostat = 0.0;   // xi
};

/// Euler-Maruyama discretization of the SGNHT SDEs:
///   v  += h f - h xi v + sqrt(2 D h) N(0, I)
///   th += h v
///   xi += h (v^T v / M - 1)
/// where f is the negative gradient of the log-posterior energy U.
inline void sgnht_step(SgnhtState& s, const Eigen::VectorXd& force, const PfaHyper& hyper,
                       Rng& rng) {
    if (!force.allFinite()) throw numeric_error("sgnht_step: non-finite gradient, step aborted");
    double h = hyper.sgnht_h;
    std::normal_distribution<double> gauss(0.0, 1.0);
    double noise_scale = std::sqrt(2.0 * hyper.sgnht_D * h);
    for (Eigen::Index i = 0; i < s.momentum.size(); ++i)
        s.momentum[i] += h * force[i] - h * s.thermostat * s.momentum[i] + noise_scale * gauss(rng);
    s.position += h * s.momentum;
    s.thermostat += h * (s.momentum.squaredNorm() / hyper.sgnht_M - 1.0);
}

// ---------------------------------------------------------------------------
// Full samplers.

enum class DpfaBackend { Gibbs, SgnhtHybrid };

struct DpfaResult {
    PfaState state;                            // final chain state
    std::vector<Eigen::MatrixXd> phi_samples;  // retained post-burn-in
    std::vector<double> loglik_trace;          // Poisson log-likelihood per sweep
    RGammaAcceptance mh_acceptance;
};

/// Poisson log-likelihood of counts under (Theta o H) Phi.
inline double poisson_loglik(const Eigen::MatrixXi& counts, const PfaState& st) {
    Eigen::MatrixXd rate = (st.theta.array() * st.h[0].array()).matrix() * st.phi;
    double lp = 0.0;
    for (Eigen::Index n = 0; n < counts.rows(); ++n)
        for (Eigen::Index p = 0; p < counts.cols(); ++p) {
            double lam = std::max(rate(n, p), 1e-12);
            lp += counts(n, p) * std::log(lam) - lam - std::lgamma(counts(n, p) + 1.0);
        }
    return lp;
}

namespace detail {

// Gradient of the negative energy (the SGNHT force) for the global
// parameters given the current local state; layout documented in
// pack_globals below.
struct GlobalPack {
    Eigen::Index K, P;
    int sbn_layers;
    std::vector<Eigen::Index> widths;

    Eigen::Index phi_size() const { return K * P; }  // eta with first entry pinned
    Eigen::Index size(const SbnParams& sbn) const {
        Eigen::Index s = phi_size() + K + 1;  // eta, log r, log gamma0
        for (const auto& w : sbn.weight) s += w.size();
        for (const auto& b : sbn.bias) s += b.size();
        return s;
    }
};

}  // namespace detail

/// Systematic-scan sampler over all DPFA conditionals; the sgnht-hybrid
/// backend replaces the global draws (phi via softmax reparam, r/gamma0
/// via log reparam, SBN parameters raw) with SGNHT steps on the exact
/// full-batch energy gradient.
inline DpfaResult run_dpfa(const Eigen::MatrixXi& counts,
                           const std::vector<Eigen::Index>& layer_widths, const PfaHyper& hyper,
                           int sweeps, int burn_in, int thin, DpfaBackend backend,
                           std::uint64_t seed, SbnParams* sbn_inout = nullptr) {
    hyper.validate();
    if ((counts.array() < 0).any()) throw validation_error("run_dpfa: counts must be nonnegative");
    if (sweeps <= burn_in) throw argument_error("run_dpfa: sweeps must exceed burn_in");
    Eigen::Index N = counts.rows(), P = counts.cols(), K = layer_widths.front();
    int L = static_cast<int>(layer_widths.size());

    Rng init_rng = split_rng(seed, 0);
    SbnParams local_sbn = SbnParams::random(layer_widths, init_rng);
    SbnParams& sbn = sbn_inout ? *sbn_inout : local_sbn;

    DpfaResult res;
    PfaState& st = res.state;
    st.gamma0 = 1.0;
    st.r = Eigen::VectorXd::Ones(K);
    st.p = Eigen::VectorXd::Constant(N, 0.5);
    st.phi = Eigen::MatrixXd::Constant(K, P, 1.0 / static_cast<double>(P));
    {
        // slight random perturbation so topics can separate
        std::uniform_real_distribution<double> unif(0.5, 1.5);
        for (Eigen::Index k = 0; k < K; ++k) {
            for (Eigen::Index pp = 0; pp < P; ++pp) st.phi(k, pp) *= unif(init_rng);
            st.phi.row(k) /= st.phi.row(k).sum();
        }
    }
    st.h.resize(L);
    for (int l = 1; l <= L; ++l) st.h[l - 1] = Eigen::MatrixXd::Ones(N, layer_widths[l - 1]);
    st.theta = Eigen::MatrixXd::Ones(N, K);

    // nonzero count entries
    struct Entry {
        Eigen::Index n, p;
        int count;
    };
    std::vector<Entry> entries;
    for (Eigen::Index n = 0; n < N; ++n)
        for (Eigen::Index pp = 0; pp < P; ++pp)
            if (counts(n, pp) > 0) entries.push_back({n, pp, counts(n, pp)});

    Eigen::MatrixXd doc_topic = Eigen::MatrixXd::Zero(N, K);   // x_{n.k}
    Eigen::MatrixXd word_topic = Eigen::MatrixXd::Zero(K, P);  // x_{.pk}

    SgnhtState sg;
    if (backend == DpfaBackend::SgnhtHybrid) {
        // position layout: [eta (K*P), log r (K), log gamma0, sbn weights, sbn biases]
        Eigen::Index dim = K * P + K + 1;
        for (const auto& w : sbn.weight) dim += w.size();
        for (const auto& b : sbn.bias) dim += b.size();
        sg.position = Eigen::VectorXd::Zero(dim);
        sg.momentum = Eigen::VectorXd::Zero(dim);
        Eigen::Index off = 0;
        for (Eigen::Index k = 0; k < K; ++k)
            for (Eigen::Index pp = 0; pp < P; ++pp)
                sg.position[off++] = std::log(st.phi(k, pp)) - std::log(st.phi(k, 0));
        for (Eigen::Index k = 0; k < K; ++k) sg.position[off++] = std::log(st.r[k]);
        sg.position[off++] = std::log(st.gamma0);
        for (const auto& w : sbn.weight)
            for (Eigen::Index i = 0; i < w.size(); ++i) sg.position[off++] = w.data()[i];
        for (const auto& b : sbn.bias)
            for (Eigen::Index i = 0; i < b.size(); ++i) sg.position[off++] = b.data()[i];
    }

    auto unpack_globals = [&]() {
        Eigen::Index off = 0;
        for (Eigen::Index k = 0; k < K; ++k) {
            double mx = -1e300;
            for (Eigen::Index pp = 0; pp < P; ++pp) mx = std::max(mx, sg.position[off + pp]);
            double sum = 0.0;
            for (Eigen::Index pp = 0; pp < P; ++pp) sum += std::exp(sg.position[off + pp] - mx);
            for (Eigen::Index pp = 0; pp < P; ++pp)
                st.phi(k, pp) = std::exp(sg.position[off + pp] - mx) / sum;
            st.phi.row(k) /= st.phi.row(k).sum();
            off += P;
        }
        for (Eigen::Index k = 0; k < K; ++k) st.r[k] = std::exp(sg.position[off++]);
        st.gamma0 = std::exp(sg.position[off++]);
        for (auto& w : sbn.weight)
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sg.position[off++];
        for (auto& b : sbn.bias)
            for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = sg.position[off++];
    };

    auto global_force = [&]() {
        // negative gradient of the energy U = -log posterior of globals
        Eigen::VectorXd f = Eigen::VectorXd::Zero(sg.position.size());
        Eigen::Index off = 0;
        // phi via softmax: d logpost / d eta_kp = c_p - (sum c) phi_kp,
        // c_p = x_.pk + a_phi (Jacobian folded in)
        for (Eigen::Index k = 0; k < K; ++k) {
            double csum = word_topic.row(k).sum() + hyper.a_phi * static_cast<double>(P);
            for (Eigen::Index pp = 0; pp < P; ++pp)
                f[off + pp] = (word_topic(k, pp) + hyper.a_phi) - csum * st.phi(k, pp);
            off += P;
        }
        // log r_k
        for (Eigen::Index k = 0; k < K; ++k) {
            double rk = st.r[k];
            double d = (st.gamma0 - 1.0) / rk - hyper.c0;
            for (Eigen::Index n = 0; n < N; ++n)
                if (st.h[0](n, k) > 0 && st.theta(n, k) > 0)
                    d += std::log(st.theta(n, k)) - boost::math::digamma(rk) -
                         std::log(st.p[n] / (1.0 - st.p[n]));
            f[off++] = d * rk + 1.0;  // log-scale chain rule + Jacobian
        }
        // log gamma0
        {
            double g0 = st.gamma0;
            double d = (hyper.e0 - 1.0) / g0 - hyper.f0;
            for (Eigen::Index k = 0; k < K; ++k)
                d += std::log(st.r[k]) + std::log(hyper.c0) - boost::math::digamma(g0);
            f[off++] = d * g0 + 1.0;
        }
        // SBN weights/biases: logistic-regression gradients with N(0,1) prior
        for (int l = 1; l < L; ++l) {
            Eigen::MatrixXd z = st.h[l] * sbn.weight[l - 1];  // N x K_l
            z.rowwise() += sbn.bias[l - 1].transpose();
            Eigen::MatrixXd resid =
                st.h[l - 1] - (1.0 / (1.0 + (-z.array()).exp())).matrix();  // N x K_l
            Eigen::MatrixXd gw = st.h[l].transpose() * resid - sbn.weight[l - 1];
            for (Eigen::Index i = 0; i < gw.size(); ++i) f[off++] = gw.data()[i];
        }
        // all biases (weights already consumed above in layer order)
        for (int l = 1; l <= L; ++l) {
            Eigen::VectorXd gb;
            if (l < L) {
                Eigen::MatrixXd z = st.h[l] * sbn.weight[l - 1];
                z.rowwise() += sbn.bias[l - 1].transpose();
                Eigen::MatrixXd resid = st.h[l - 1] - (1.0 / (1.0 + (-z.array()).exp())).matrix();
                gb = resid.colwise().sum().transpose() - sbn.bias[l - 1];
            } else {
                Eigen::VectorXd sig = (1.0 / (1.0 + (-sbn.bias[L - 1].array()).exp())).matrix();
                gb = st.h[L - 1].colwise().sum().transpose() -
                     static_cast<double>(N) * sig - sbn.bias[L - 1];
            }
            for (Eigen::Index i = 0; i < gb.size(); ++i) f[off++] = gb[i];
        }
        return f;
    };

    for (int sweep = 0; sweep < sweeps; ++sweep) {
        Rng rng = split_rng(seed, 1000 + static_cast<std::uint64_t>(sweep));

        // allocations
        doc_topic.setZero();
        word_topic.setZero();
        for (const auto& e : entries) {
            Eigen::VectorXi alloc =
                sample_counts(e.count, st.phi.col(e.p), st.theta.row(e.n), st.h[0].row(e.n), rng);
            if (alloc.sum() != e.count)
                throw numeric_error("run_dpfa: allocation lost counts");  // conservation invariant
            for (Eigen::Index k = 0; k < K; ++k) {
                doc_topic(e.n, k) += alloc[k];
                word_topic(k, e.p) += alloc[k];
            }
        }

        // h layers, top-down prior availability: sample h1 then deeper
        for (Eigen::Index n = 0; n < N; ++n)
            for (Eigen::Index k = 0; k < K; ++k) {
                double pi = sbn.prior_prob(
                    1, k, L > 1 ? Eigen::RowVectorXd(st.h[1].row(n)) : Eigen::RowVectorXd());
                st.h[0](n, k) = sample_h1(doc_topic(n, k), pi, st.r[k], st.p[n], rng);
                if (doc_topic(n, k) > 0 && st.h[0](n, k) != 1.0)
                    throw numeric_error("run_dpfa: active topic left off");  // forcing invariant
            }
        for (int l = 2; l <= L; ++l)
            sample_h_deep(l, st.h[l - 2], sbn, st.h[l - 1], l < L ? &st.h[l] : nullptr, rng);

        // theta
        for (Eigen::Index n = 0; n < N; ++n)
            for (Eigen::Index k = 0; k < K; ++k)
                st.theta(n, k) = sample_theta(doc_topic(n, k), st.r[k], st.h[0](n, k), st.p[n], rng);

        if (backend == DpfaBackend::Gibbs) {
            st.phi = sample_phi(word_topic, hyper.a_phi, rng);
            sample_r_gamma(st, doc_topic, hyper, rng, &res.mh_acceptance);
        } else {
            // conjugate p_n update stays Gibbs; other globals move by SGNHT
            for (Eigen::Index n = 0; n < N; ++n) {
                double xa = doc_topic.row(n).sum();
                double rb = st.h[0].row(n).dot(st.r.transpose());
                st.p[n] = detail::beta_draw(hyper.a0 + xa, hyper.b0 + rb, rng);
                st.p[n] = std::min(1.0 - 1e-12, std::max(1e-12, st.p[n]));
            }
            sgnht_step(sg, global_force(), hyper, rng);
            unpack_globals();
        }

        for (Eigen::Index k = 0; k < K; ++k)
            if (std::abs(st.phi.row(k).sum() - 1.0) > 1e-12)
                throw numeric_error("run_dpfa: topic left the simplex");

        double lp = poisson_loglik(counts, st);
        if (!std::isfinite(lp)) throw numeric_error("run_dpfa: log-likelihood diverged");
        res.loglik_trace.push_back(lp);
        if (sweep >= burn_in && (sweep - burn_in) % thin == 0) res.phi_samples.push_back(st.phi);
    }
    return res;
}

}  // namespace bdl

#endif
