#ifndef BDL_CORPUS_HPP
#define BDL_CORPUS_HPP

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bdl/errors.hpp"
#include "bdl/rng.hpp"

namespace bdl {

/// Sparse J x B nonnegative count matrix of item content.
struct BagOfWords {
    Eigen::Index rows = 0;  // J, number of items
    Eigen::Index cols = 0;  // B, vocabulary size
    // Per-row (column, count) pairs, columns unique within a row.
    std::vector<std::vector<std::pair<Eigen::Index, double>>> entries;

    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
        for (Eigen::Index j = 0; j < rows; ++j)
            for (const auto& [c, v] : entries[j]) m(j, c) = v;
        return m;
    }

    // Each row divided by its max count, so sigmoid output layers can
    // reconstruct it. All-zero rows stay zero.
    Eigen::MatrixXd normalized() const {
        Eigen::MatrixXd m = dense();
        for (Eigen::Index j = 0; j < rows; ++j) {
            double mx = m.row(j).maxCoeff();
            if (mx > 0) m.row(j) /= mx;
        }
        return m;
    }

    std::size_t nnz() const {
        std::size_t n = 0;
        for (const auto& r : entries) n += r.size();
        return n;
    }
};

/// Binary implicit-feedback matrix with confidence constants a > b > 0.
/// Only the positives are stored; everything else is an implicit zero
/// with confidence b.
struct ImplicitRatings {
    Eigen::Index users = 0;  // I
    Eigen::Index items = 0;  // J
    double a = 1.0;
    double b = 0.01;
    std::vector<std::vector<Eigen::Index>> positives;  // sorted item ids per user

    std::size_t positive_count() const {
        std::size_t n = 0;
        for (const auto& p : positives) n += p.size();
        return n;
    }
};

/// Undirected, unweighted item graph.
struct ItemGraph {
    Eigen::Index nodes = 0;  // J
    std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;  // u < v, unique

    std::vector<Eigen::Index> degrees() const {
        std::vector<Eigen::Index> d(nodes, 0);
        for (const auto& [u, v] : edges) {
            ++d[u];
            ++d[v];
        }
        return d;
    }

    // y = (D - A) x without forming the matrix; O(J + E).
    Eigen::VectorXd apply_laplacian(const Eigen::VectorXd& x) const {
        if (x.size() != nodes) throw dimension_error("apply_laplacian: size mismatch");
        Eigen::VectorXd y = Eigen::VectorXd::Zero(nodes);
        for (const auto& [u, v] : edges) {
            y[u] += x[u] - x[v];
            y[v] += x[v] - x[u];
        }
        return y;
    }
};

struct CorruptionSpec {
    double p = 0.3;             // masking probability
    std::uint64_t seed = 0;

    void validate() const {
        if (p < 0.0 || p > 1.0) throw validation_error("corruption probability must be in [0,1]");
    }
};

namespace detail {

inline std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open file: " + path);
    return in;
}

}  // namespace detail

/// Bag-of-words file: header `J B`, then J lines `n idx:cnt idx:cnt ...`.
inline BagOfWords load_bow(const std::string& path) {
    auto in = detail::open_or_throw(path);
    std::string line;
    if (!std::getline(in, line)) {
        // empty file: valid, J = 0
        return {};
    }
    BagOfWords bow;
    {
        std::istringstream hs(line);
        if (!(hs >> bow.rows >> bow.cols) || bow.rows < 0 || bow.cols < 0)
            throw parse_error(path + ":1: bad bag-of-words header, expected `J B`");
    }
    bow.entries.resize(bow.rows);
    for (Eigen::Index j = 0; j < bow.rows; ++j) {
        if (!std::getline(in, line))
            throw parse_error(path + ": expected " + std::to_string(bow.rows) + " rows, got " +
                              std::to_string(j));
        std::istringstream ls(line);
        long n;
        if (!(ls >> n) || n < 0)
            throw parse_error(path + ":" + std::to_string(j + 2) + ": bad pair count");
        std::set<Eigen::Index> seen;
        for (long t = 0; t < n; ++t) {
            std::string tok;
            if (!(ls >> tok))
                throw parse_error(path + ":" + std::to_string(j + 2) +
                                  ": pair count mismatch (declared " + std::to_string(n) + ")");
            auto colon = tok.find(':');
            if (colon == std::string::npos)
                throw parse_error(path + ":" + std::to_string(j + 2) + ": expected idx:cnt, got `" +
                                  tok + "`");
            Eigen::Index idx;
            long long cnt;
            try {
                idx = std::stoll(tok.substr(0, colon));
                cnt = std::stoll(tok.substr(colon + 1));
            } catch (const std::exception&) {
                throw parse_error(path + ":" + std::to_string(j + 2) + ": unparseable pair `" + tok +
                                  "`");
            }
            if (idx < 0 || idx >= bow.cols)
                throw validation_error(path + ":" + std::to_string(j + 2) + ": word index " +
                                       std::to_string(idx) + " out of range [0," +
                                       std::to_string(bow.cols) + ")");
            if (cnt < 0)
                throw validation_error(path + ":" + std::to_string(j + 2) + ": negative count");
            if (!seen.insert(idx).second)
                throw validation_error(path + ":" + std::to_string(j + 2) + ": duplicate index " +
                                       std::to_string(idx));
            bow.entries[j].emplace_back(idx, static_cast<double>(cnt));
        }
        std::string extra;
        if (ls >> extra)
            throw parse_error(path + ":" + std::to_string(j + 2) +
                              ": pair count mismatch (extra token `" + extra + "`)");
        std::sort(bow.entries[j].begin(), bow.entries[j].end());
    }
    return bow;
}

/// Ratings file: header `I J`, then I lines `n id id ...` listing each
/// user's positive items.
inline ImplicitRatings load_ratings(const std::string& path, double a, double b) {
    if (!(a > b && b > 0)) throw config_error("confidence constants require a > b > 0");
    auto in = detail::open_or_throw(path);
    ImplicitRatings r;
    r.a = a;
    r.b = b;
    std::string line;
    if (!std::getline(in, line)) throw parse_error(path + ":1: missing header `I J`");
    {
        std::istringstream hs(line);
        if (!(hs >> r.users >> r.items) || r.users < 0 || r.items < 0)
            throw parse_error(path + ":1: bad ratings header, expected `I J`");
    }
    r.positives.resize(r.users);
    for (Eigen::Index i = 0; i < r.users; ++i) {
        if (!std::getline(in, line))
            throw parse_error(path + ": expected " + std::to_string(r.users) + " user lines");
        std::istringstream ls(line);
        long n;
        if (!(ls >> n) || n < 0)
            throw parse_error(path + ":" + std::to_string(i + 2) + ": bad item count");
        for (long t = 0; t < n; ++t) {
            Eigen::Index id;
            if (!(ls >> id))
                throw parse_error(path + ":" + std::to_string(i + 2) + ": item count mismatch");
            if (id < 0 || id >= r.items)
                throw validation_error(path + ":" + std::to_string(i + 2) + ": item id " +
                                       std::to_string(id) + " out of range");
            r.positives[i].push_back(id);
        }
        std::sort(r.positives[i].begin(), r.positives[i].end());
        r.positives[i].erase(std::unique(r.positives[i].begin(), r.positives[i].end()),
                             r.positives[i].end());
    }
    return r;
}

/// Graph file: header `J E`, then E lines `u v`.
inline ItemGraph load_graph(const std::string& path) {
    auto in = detail::open_or_throw(path);
    ItemGraph g;
    std::string line;
    if (!std::getline(in, line)) throw parse_error(path + ":1: missing header `J E`");
    Eigen::Index edge_count;
    {
        std::istringstream hs(line);
        if (!(hs >> g.nodes >> edge_count) || g.nodes < 0 || edge_count < 0)
            throw parse_error(path + ":1: bad graph header, expected `J E`");
    }
    std::set<std::pair<Eigen::Index, Eigen::Index>> seen;
    for (Eigen::Index e = 0; e < edge_count; ++e) {
        if (!std::getline(in, line))
            throw parse_error(path + ": expected " + std::to_string(edge_count) + " edges");
        std::istringstream ls(line);
        Eigen::Index u, v;
        if (!(ls >> u >> v))
            throw parse_error(path + ":" + std::to_string(e + 2) + ": bad edge line");
        if (u < 0 || u >= g.nodes || v < 0 || v >= g.nodes)
            throw validation_error(path + ":" + std::to_string(e + 2) + ": node id out of range");
        if (u == v)
            throw validation_error(path + ":" + std::to_string(e + 2) + ": self-loop not allowed");
        if (u > v) std::swap(u, v);
        if (seen.insert({u, v}).second) g.edges.emplace_back(u, v);
    }
    return g;
}

inline void save_bow(const std::string& path, const BagOfWords& bow) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write file: " + path);
    out << bow.rows << ' ' << bow.cols << '\n';
    for (Eigen::Index j = 0; j < bow.rows; ++j) {
        out << bow.entries[j].size();
        for (const auto& [c, v] : bow.entries[j]) out << ' ' << c << ':' << static_cast<long long>(v);
        out << '\n';
    }
    if (!out) throw io_error("short write: " + path);
}

inline void save_ratings(const std::string& path, const ImplicitRatings& r) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write file: " + path);
    out << r.users << ' ' << r.items << '\n';
    for (const auto& pos : r.positives) {
        out << pos.size();
        for (Eigen::Index j : pos) out << ' ' << j;
        out << '\n';
    }
    if (!out) throw io_error("short write: " + path);
}

inline void save_graph(const std::string& path, const ItemGraph& g) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write file: " + path);
    out << g.nodes << ' ' << g.edges.size() << '\n';
    for (const auto& [u, v] : g.edges) out << u << ' ' << v << '\n';
    if (!out) throw io_error("short write: " + path);
}

/// Masking noise: each nonzero entry independently zeroed with
/// probability p. Pure function of (x, spec); equal seeds give
/// bit-identical outputs.
inline BagOfWords corrupt(const BagOfWords& x, const CorruptionSpec& spec) {
    spec.validate();
    BagOfWords out;
    out.rows = x.rows;
    out.cols = x.cols;
    out.entries.resize(x.rows);
    Rng rng = make_rng(spec.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index j = 0; j < x.rows; ++j)
        for (const auto& e : x.entries[j])
            if (unif(rng) >= spec.p) out.entries[j].push_back(e);
    return out;
}

/// L_a = D - A as a dense matrix. Row sums are exactly zero.
inline Eigen::MatrixXd laplacian(const ItemGraph& g) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(g.nodes, g.nodes);
    for (const auto& [u, v] : g.edges) {
        L(u, u) += 1.0;
        L(v, v) += 1.0;
        L(u, v) -= 1.0;
        L(v, u) -= 1.0;
    }
    return L;
}

/// Validates an adjacency matrix and returns its Laplacian.
inline Eigen::MatrixXd laplacian(const Eigen::MatrixXd& adjacency) {
    if (adjacency.rows() != adjacency.cols())
        throw dimension_error("laplacian: adjacency must be square");
    if ((adjacency - adjacency.transpose()).cwiseAbs().maxCoeff() > 0)
        throw validation_error("laplacian: adjacency must be symmetric");
    Eigen::VectorXd deg = adjacency.rowwise().sum();
    Eigen::MatrixXd L = -adjacency;
    L.diagonal() += deg;
    return L;
}

/// Per-user hold-out: users with more than `held_out_per_user` positives
/// contribute exactly that many to the test set; the rest keep all their
/// positives in train. Total positives are preserved exactly.
inline std::pair<ImplicitRatings, ImplicitRatings> split_ratings(const ImplicitRatings& r,
                                                                 int held_out_per_user,
                                                                 std::uint64_t seed) {
    if (held_out_per_user < 1) throw argument_error("held_out_per_user must be >= 1");
    ImplicitRatings train = r, test = r;
    for (auto& p : train.positives) p.clear();
    for (auto& p : test.positives) p.clear();
    for (Eigen::Index i = 0; i < r.users; ++i) {
        std::vector<Eigen::Index> items = r.positives[i];
        if (static_cast<int>(items.size()) <= held_out_per_user) {
            train.positives[i] = items;
            continue;
        }
        Rng rng = split_rng(seed, static_cast<std::uint64_t>(i));
        std::shuffle(items.begin(), items.end(), rng);
        test.positives[i].assign(items.begin(), items.begin() + held_out_per_user);
        train.positives[i].assign(items.begin() + held_out_per_user, items.end());
        std::sort(train.positives[i].begin(), train.positives[i].end());
        std::sort(test.positives[i].begin(), test.positives[i].end());
    }
    return {train, test};
}

}  // namespace bdl

#endif
