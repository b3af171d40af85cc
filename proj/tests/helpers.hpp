#ifndef BDL_TEST_HELPERS_HPP
#define BDL_TEST_HELPERS_HPP

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <Eigen/Dense>

namespace testutil {

inline std::string write_temp(const std::string& name, const std::string& text) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::binary);
    out << text;
    return path;
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

// Central finite difference of a scalar function along one coordinate of
// a matrix, mutating a scratch copy owned by the caller via the setter.
inline double central_fd(const std::function<double()>& f, double& cell, double h = 1e-5) {
    double orig = cell;
    cell = orig + h;
    double up = f();
    cell = orig - h;
    double down = f();
    cell = orig;
    return (up - down) / (2.0 * h);
}

// Max relative error between an analytic gradient matrix and central
// finite differences of f over every coordinate of param.
inline double max_grad_rel_err(const std::function<double()>& f, Eigen::MatrixXd& param,
                               const Eigen::MatrixXd& analytic, double h = 1e-5) {
    double worst = 0.0;
    for (Eigen::Index r = 0; r < param.rows(); ++r)
        for (Eigen::Index c = 0; c < param.cols(); ++c) {
            double fd = central_fd(f, param(r, c), h);
            double denom = std::max({1.0, std::abs(fd), std::abs(analytic(r, c))});
            worst = std::max(worst, std::abs(fd - analytic(r, c)) / denom);
        }
    return worst;
}

inline double max_grad_rel_err_vec(const std::function<double()>& f, Eigen::VectorXd& param,
                                   const Eigen::VectorXd& analytic, double h = 1e-5) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < param.size(); ++i) {
        double fd = central_fd(f, param[i], h);
        double denom = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace testutil

#endif
