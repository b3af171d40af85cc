#ifndef BDL_NET_HPP
#define BDL_NET_HPP

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bdl/checkpoint.hpp"
#include "bdl/errors.hpp"
#include "bdl/rng.hpp"

namespace bdl {

inline Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
    return 1.0 / (1.0 + (-z.array()).exp());
}

/// Weights and biases of an L-layer network. Layer l maps width
/// K_{l-1} -> K_l; K_0 = K_L = B and K_{L/2} is the latent width.
/// Layers 1..L-1 are sigmoid, layer L is affine.
struct NetParams {
    std::vector<Eigen::MatrixXd> W;  // W[l-1] is K_{l-1} x K_l
    std::vector<Eigen::VectorXd> b;  // b[l-1] has length K_l

    int layers() const { return static_cast<int>(W.size()); }
    Eigen::Index input_width() const { return W.front().rows(); }
    Eigen::Index latent_width() const { return W[W.size() / 2 - 1].cols(); }

    void validate() const {
        int L = layers();
        if (L < 2 || L % 2 != 0) throw dimension_error("layer count must be even and >= 2");
        if (b.size() != W.size()) throw dimension_error("weight/bias count mismatch");
        for (int l = 0; l < L; ++l) {
            if (b[l].size() != W[l].cols()) throw dimension_error("bias width mismatch");
            if (l + 1 < L && W[l].cols() != W[l + 1].rows())
                throw dimension_error("adjacent layer shapes do not chain");
            if (!W[l].allFinite() || !b[l].allFinite())
                throw numeric_error("non-finite network parameter");
        }
    }
};

/// Zero-mean Gaussian init, std 0.1; biases zero.
/// dims = {K_0, K_1, ..., K_L}.
inline NetParams init_net(const std::vector<Eigen::Index>& dims, Rng& rng, double stddev = 0.1) {
    if (dims.size() < 3 || (dims.size() - 1) % 2 != 0)
        throw dimension_error("init_net: need an even number of layers >= 2");
    std::normal_distribution<double> gauss(0.0, stddev);
    NetParams p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Eigen::MatrixXd w(dims[l], dims[l + 1]);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = gauss(rng);
        p.W.push_back(std::move(w));
        p.b.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
    }
    return p;
}

/// Shared precision-style hyperparameters.
struct Hyperparams {
    double lambda_w = 1e-4;
    double lambda_n = 1000.0;
    double lambda_v = 10.0;
    double lambda_u = 0.1;
    double lambda_s = 10.0;
    double lambda_r = 1.0;
    double lambda_l = 1.0;
    double a = 1.0;    // confidence for observed positives
    double b = 0.01;   // confidence for unobserved
    double eta = 0.1;  // learning rate
    double momentum = 0.9;
    double corruption_p = 0.3;
    int batch = 128;

    void validate() const {
        if (lambda_w < 0 || lambda_n < 0 || lambda_v < 0 || lambda_u < 0 || lambda_s < 0 ||
            lambda_r < 0 || lambda_l < 0)
            throw validation_error("lambda hyperparameters must be nonnegative");
        if (!(a > b && b > 0)) throw validation_error("confidence constants require a > b > 0");
        if (!(eta > 0)) throw validation_error("learning rate must be positive");
        if (momentum < 0 || momentum >= 1) throw validation_error("momentum must be in [0,1)");
        if (corruption_p < 0 || corruption_p > 1)
            throw validation_error("corruption probability must be in [0,1]");
    }
};

/// Activations X_1..X_upto for a batch x0 (rows are data points).
/// X_l = sigmoid(X_{l-1} W_l + b_l) for l < L; X_L is affine.
inline std::vector<Eigen::MatrixXd> forward(const Eigen::MatrixXd& x0, const NetParams& params,
                                            int upto) {
    int L = params.layers();
    if (upto < 0 || upto > L) throw dimension_error("forward: layer index out of range");
    if (x0.cols() != params.input_width())
        throw dimension_error("forward: input width mismatch");
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(upto);
    const Eigen::MatrixXd* prev = &x0;
    for (int l = 1; l <= upto; ++l) {
        Eigen::MatrixXd z = (*prev * params.W[l - 1]).rowwise() + params.b[l - 1].transpose();
        acts.push_back(l < L ? sigmoid(z) : std::move(z));
        if (!acts.back().allFinite()) throw numeric_error("non-finite activation at layer " +
                                                          std::to_string(l));
        prev = &acts.back();
    }
    return acts;
}

/// f_e: output of layer L/2.
inline Eigen::MatrixXd encode(const Eigen::MatrixXd& x0, const NetParams& params) {
    return forward(x0, params, params.layers() / 2).back();
}

/// f_r: output of layer L.
inline Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& x0, const NetParams& params) {
    return forward(x0, params, params.layers()).back();
}

struct NetGrads {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;

    bool all_finite() const {
        for (const auto& g : dW)
            if (!g.allFinite()) return false;
        for (const auto& g : db)
            if (!g.allFinite()) return false;
        return true;
    }
};

/// Backprop for E = ||X_L - Y||_F^2.
/// dE/dW_l = X_{l-1}^T bracket_l and dE/db_l = column-wise mean of
/// bracket_l over the batch, where bracket_l folds in the sigmoid
/// derivative (layer L is affine, so its bracket is dE/dX_L itself).
/// Weight decay is not included; add lambda_w * W separately.
inline NetGrads mlp_gradients(const NetParams& params, const Eigen::MatrixXd& x0,
                              const Eigen::MatrixXd& target) {
    int L = params.layers();
    if (target.cols() != params.W.back().cols())
        throw dimension_error("mlp_gradients: target width mismatch");
    auto acts = forward(x0, params, L);
    NetGrads g;
    g.dW.resize(L);
    g.db.resize(L);
    Eigen::MatrixXd dX = 2.0 * (acts[L - 1] - target);  // dE/dX_L
    for (int l = L; l >= 1; --l) {
        const Eigen::MatrixXd& xl = acts[l - 1];
        Eigen::MatrixXd bracket =
            (l == L) ? dX : Eigen::MatrixXd(dX.array() * xl.array() * (1.0 - xl.array()));
        const Eigen::MatrixXd& below = (l >= 2) ? acts[l - 2] : x0;
        g.dW[l - 1] = below.transpose() * bracket;
        g.db[l - 1] = bracket.colwise().mean();
        if (l >= 2) dX = bracket * params.W[l - 1].transpose();
    }
    return g;
}

/// Backprop for the two-headed loss shared by CDL and RSDAE:
///   mid_weight/2 * ||X_{L/2} - mid_target||^2
/// + out_weight/2 * ||X_L - out_target||^2
/// + lambda_w/2 * sum_l (||W_l||^2 + ||b_l||^2).
/// Either head may be disabled by passing weight 0 (its target is then
/// ignored). Returns exact descent gradients (bias gradients are column
/// sums, not means).
inline NetGrads two_head_gradients(const NetParams& params, const Eigen::MatrixXd& x0,
                                   const Eigen::MatrixXd* mid_target, double mid_weight,
                                   const Eigen::MatrixXd* out_target, double out_weight,
                                   double lambda_w) {
    int L = params.layers();
    int mid = L / 2;
    auto acts = forward(x0, params, L);
    NetGrads g;
    g.dW.resize(L);
    g.db.resize(L);
    Eigen::MatrixXd dX;  // dLoss/dX_l for the layer being processed
    for (int l = L; l >= 1; --l) {
        const Eigen::MatrixXd& xl = acts[l - 1];
        if (l == L) {
            dX = out_weight > 0 ? Eigen::MatrixXd(out_weight * (xl - *out_target))
                                : Eigen::MatrixXd::Zero(xl.rows(), xl.cols());
        }
        if (l == mid && mid_weight > 0) dX += mid_weight * (xl - *mid_target);
        Eigen::MatrixXd bracket =
            (l == L) ? dX : Eigen::MatrixXd(dX.array() * xl.array() * (1.0 - xl.array()));
        const Eigen::MatrixXd& below = (l >= 2) ? acts[l - 2] : x0;
        g.dW[l - 1] = below.transpose() * bracket + lambda_w * params.W[l - 1];
        g.db[l - 1] = bracket.colwise().sum().transpose() + lambda_w * params.b[l - 1];
        if (l >= 2) dX = bracket * params.W[l - 1].transpose();
    }
    return g;
}

/// Momentum buffers for sgd_step.
struct SgdState {
    std::vector<Eigen::MatrixXd> mW;
    std::vector<Eigen::VectorXd> mb;

    static SgdState zeros_like(const NetParams& p) {
        SgdState s;
        for (const auto& w : p.W) s.mW.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        for (const auto& v : p.b) s.mb.push_back(Eigen::VectorXd::Zero(v.size()));
        return s;
    }
};

/// buffer <- momentum*buffer + grad; param <- param - eta*buffer.
/// Refuses the step on non-finite gradients.
inline void sgd_step(NetParams& params, const NetGrads& grads, SgdState& state,
                     const Hyperparams& hyper) {
    if (!grads.all_finite()) throw numeric_error("sgd_step: non-finite gradient, step refused");
    for (std::size_t l = 0; l < params.W.size(); ++l) {
        state.mW[l] = hyper.momentum * state.mW[l] + grads.dW[l];
        state.mb[l] = hyper.momentum * state.mb[l] + grads.db[l];
        params.W[l] -= hyper.eta * state.mW[l];
        params.b[l] -= hyper.eta * state.mb[l];
    }
}

inline void save_net(const std::string& path, const NetParams& params) {
    NamedTensors t;
    for (int l = 0; l < params.layers(); ++l) {
        t.emplace_back("W" + std::to_string(l + 1), params.W[l]);
        t.emplace_back("b" + std::to_string(l + 1), params.b[l]);
    }
    save_tensors(path, t);
}

inline NetParams load_net(const std::string& path) {
    auto tensors = load_tensors(path);
    NetParams p;
    for (int l = 1;; ++l) {
        bool found = false;
        for (const auto& [n, m] : tensors)
            if (n == "W" + std::to_string(l)) {
                p.W.push_back(m);
                p.b.push_back(find_tensor(tensors, "b" + std::to_string(l)).col(0));
                found = true;
            }
        if (!found) break;
    }
    if (p.W.empty()) throw validation_error("no network tensors in checkpoint: " + path);
    p.validate();
    return p;
}

}  // namespace bdl

#endif
