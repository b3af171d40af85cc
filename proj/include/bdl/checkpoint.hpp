#ifndef BDL_CHECKPOINT_HPP
#define BDL_CHECKPOINT_HPP

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bdl/errors.hpp"

namespace bdl {

// Checkpoint format: per tensor, an ASCII header line `name rows cols\n`
// followed by rows*cols little-endian f64 in row-major order.

using NamedTensors = std::vector<std::pair<std::string, Eigen::MatrixXd>>;

inline void save_tensors(const std::string& path, const NamedTensors& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write checkpoint: " + path);
    for (const auto& [name, m] : tensors) {
        out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                double v = m(r, c);
                out.write(reinterpret_cast<const char*>(&v), sizeof v);
            }
    }
    if (!out) throw io_error("short write on checkpoint: " + path);
}

inline NamedTensors load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    NamedTensors tensors;
    std::string name;
    while (in >> name) {
        Eigen::Index rows, cols;
        if (!(in >> rows >> cols) || rows < 0 || cols < 0)
            throw parse_error("bad tensor header in " + path);
        in.ignore(1);  // trailing newline
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                double v;
                in.read(reinterpret_cast<char*>(&v), sizeof v);
                if (!in) throw parse_error("truncated tensor data in " + path);
                m(r, c) = v;
            }
        tensors.emplace_back(name, std::move(m));
    }
    return tensors;
}

inline const Eigen::MatrixXd& find_tensor(const NamedTensors& tensors, const std::string& name) {
    for (const auto& [n, m] : tensors)
        if (n == name) return m;
    throw validation_error("tensor not found in checkpoint: " + name);
}

}  // namespace bdl

#endif
