#ifndef BDL_CONFIG_HPP
#define BDL_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "bdl/cdl.hpp"
#include "bdl/dpfa.hpp"
#include "bdl/errors.hpp"
#include "bdl/net.hpp"

namespace bdl {

/// Everything an experiment run needs, parsed from `key = value` lines.
struct ExperimentConfig {
    std::string task;          // cdl, cdr, mcdl, mcdl-sym, bcdl, rsdae, dpfa
    std::string content;       // bag-of-words path (item content)
    std::string user_content;  // bag-of-words path (user attributes, mcdl-sym)
    std::string ratings;       // ratings path
    std::string graph;         // graph path (rsdae)
    std::string counts;        // counts path, bag-of-words format (dpfa)
    std::string output_dir;
    std::string mode = "joint";     // cdl: joint, two-step, decoder-free
    std::string backend = "gibbs";  // dpfa: gibbs, sgnht-hybrid
    std::uint64_t seed = 0;
    int epochs = 10;
    int sweeps = 100;
    int burn_in = -1;  // -1 means sweeps / 2
    int thin = 1;
    int k = 50;          // latent width
    int recall_m = 50;
    int held_out = 1;    // test positives per user
    int max_pairs_per_user = 50;
    int net_steps = 5;
    double init_std = 0.1;
    std::string dpfa_layers = "10";  // comma-separated widths, bottom first
    Hyperparams hyper;
    PfaHyper pfa;
};

inline const char* variance_mode_label(const std::string& task) {
    if (task == "mcdl" || task == "mcdl-sym") return "LV";
    if (task == "dpfa") return "ZV";
    return "HV";  // cdl, cdr, bcdl, rsdae
}

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
    std::istringstream ss(value);
    T out;
    ss >> out;
    std::string rest;
    if (ss.fail() || (ss >> rest))
        throw config_error("unparseable value for key `" + key + "`: " + value);
    return out;
}

}  // namespace detail

/// Canonical echo of the effective config: every recognized key with its
/// effective (post-default) value, one per line, in fixed order.
inline std::string echo_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "task = " << c.task << "\n";
    os << "content = " << c.content << "\n";
    os << "user_content = " << c.user_content << "\n";
    os << "ratings = " << c.ratings << "\n";
    os << "graph = " << c.graph << "\n";
    os << "counts = " << c.counts << "\n";
    os << "output_dir = " << c.output_dir << "\n";
    os << "mode = " << c.mode << "\n";
    os << "backend = " << c.backend << "\n";
    os << "seed = " << c.seed << "\n";
    os << "epochs = " << c.epochs << "\n";
    os << "sweeps = " << c.sweeps << "\n";
    os << "burn_in = " << c.burn_in << "\n";
    os << "thin = " << c.thin << "\n";
    os << "k = " << c.k << "\n";
    os << "recall_m = " << c.recall_m << "\n";
    os << "held_out = " << c.held_out << "\n";
    os << "max_pairs_per_user = " << c.max_pairs_per_user << "\n";
    os << "net_steps = " << c.net_steps << "\n";
    os << "init_std = " << c.init_std << "\n";
    os << "dpfa_layers = " << c.dpfa_layers << "\n";
    os << "lambda_u = " << c.hyper.lambda_u << "\n";
    os << "lambda_v = " << c.hyper.lambda_v << "\n";
    os << "lambda_n = " << c.hyper.lambda_n << "\n";
    os << "lambda_w = " << c.hyper.lambda_w << "\n";
    os << "lambda_s = " << c.hyper.lambda_s << "\n";
    os << "lambda_r = " << c.hyper.lambda_r << "\n";
    os << "lambda_l = " << c.hyper.lambda_l << "\n";
    os << "a = " << c.hyper.a << "\n";
    os << "b = " << c.hyper.b << "\n";
    os << "eta = " << c.hyper.eta << "\n";
    os << "momentum = " << c.hyper.momentum << "\n";
    os << "corruption_p = " << c.hyper.corruption_p << "\n";
    os << "batch = " << c.hyper.batch << "\n";
    os << "a_phi = " << c.pfa.a_phi << "\n";
    os << "e0 = " << c.pfa.e0 << "\n";
    os << "f0 = " << c.pfa.f0 << "\n";
    os << "c0 = " << c.pfa.c0 << "\n";
    os << "a0 = " << c.pfa.a0 << "\n";
    os << "b0 = " << c.pfa.b0 << "\n";
    os << "sgnht_d = " << c.pfa.sgnht_D << "\n";
    os << "sgnht_h = " << c.pfa.sgnht_h << "\n";
    os << "sgnht_m = " << c.pfa.sgnht_M << "\n";
    return os.str();
}

/// FNV-1a over the canonical echo; ties the manifest to the exact
/// effective configuration.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : echo_config(c)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

/// `key = value` lines, `#` comments, blank lines ignored. Unknown keys
/// are rejected; omitted keys keep their defaults.
inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config: " + path);
    ExperimentConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(lineno) + ": expected `key = value`");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw config_error(path + ":" + std::to_string(lineno) + ": empty key");

        if (key == "task") c.task = value;
        else if (key == "content") c.content = value;
        else if (key == "user_content") c.user_content = value;
        else if (key == "ratings") c.ratings = value;
        else if (key == "graph") c.graph = value;
        else if (key == "counts") c.counts = value;
        else if (key == "output_dir") c.output_dir = value;
        else if (key == "mode") c.mode = value;
        else if (key == "backend") c.backend = value;
        else if (key == "seed") c.seed = detail::parse_value<std::uint64_t>(key, value);
        else if (key == "epochs") c.epochs = detail::parse_value<int>(key, value);
        else if (key == "sweeps") c.sweeps = detail::parse_value<int>(key, value);
        else if (key == "burn_in") c.burn_in = detail::parse_value<int>(key, value);
        else if (key == "thin") c.thin = detail::parse_value<int>(key, value);
        else if (key == "k") c.k = detail::parse_value<int>(key, value);
        else if (key == "recall_m") c.recall_m = detail::parse_value<int>(key, value);
        else if (key == "held_out") c.held_out = detail::parse_value<int>(key, value);
        else if (key == "max_pairs_per_user")
            c.max_pairs_per_user = detail::parse_value<int>(key, value);
        else if (key == "net_steps") c.net_steps = detail::parse_value<int>(key, value);
        else if (key == "init_std") c.init_std = detail::parse_value<double>(key, value);
        else if (key == "dpfa_layers") c.dpfa_layers = value;
        else if (key == "lambda_u") c.hyper.lambda_u = detail::parse_value<double>(key, value);
        else if (key == "lambda_v") c.hyper.lambda_v = detail::parse_value<double>(key, value);
        else if (key == "lambda_n") c.hyper.lambda_n = detail::parse_value<double>(key, value);
        else if (key == "lambda_w") c.hyper.lambda_w = detail::parse_value<double>(key, value);
        else if (key == "lambda_s") c.hyper.lambda_s = detail::parse_value<double>(key, value);
        else if (key == "lambda_r") c.hyper.lambda_r = detail::parse_value<double>(key, value);
        else if (key == "lambda_l") c.hyper.lambda_l = detail::parse_value<double>(key, value);
        else if (key == "a") c.hyper.a = detail::parse_value<double>(key, value);
        else if (key == "b") c.hyper.b = detail::parse_value<double>(key, value);
        else if (key == "eta") c.hyper.eta = detail::parse_value<double>(key, value);
        else if (key == "momentum") c.hyper.momentum = detail::parse_value<double>(key, value);
        else if (key == "corruption_p")
            c.hyper.corruption_p = detail::parse_value<double>(key, value);
        else if (key == "batch") c.hyper.batch = detail::parse_value<int>(key, value);
        else if (key == "a_phi") c.pfa.a_phi = detail::parse_value<double>(key, value);
        else if (key == "e0") c.pfa.e0 = detail::parse_value<double>(key, value);
        else if (key == "f0") c.pfa.f0 = detail::parse_value<double>(key, value);
        else if (key == "c0") c.pfa.c0 = detail::parse_value<double>(key, value);
        else if (key == "a0") c.pfa.a0 = detail::parse_value<double>(key, value);
        else if (key == "b0") c.pfa.b0 = detail::parse_value<double>(key, value);
        else if (key == "sgnht_d") c.pfa.sgnht_D = detail::parse_value<double>(key, value);
        else if (key == "sgnht_h") c.pfa.sgnht_h = detail::parse_value<double>(key, value);
        else if (key == "sgnht_m") c.pfa.sgnht_M = detail::parse_value<double>(key, value);
        else
            throw config_error(path + ":" + std::to_string(lineno) + ": unknown key `" + key + "`");
    }

    static const std::map<std::string, int> tasks = {{"cdl", 0},  {"cdr", 1},   {"mcdl", 2},
                                                     {"mcdl-sym", 3}, {"bcdl", 4}, {"rsdae", 5},
                                                     {"dpfa", 6}};
    if (c.task.empty()) throw config_error("missing required key `task`");
    if (!tasks.count(c.task)) throw config_error("unknown value for key `task`: " + c.task);
    if (c.output_dir.empty()) throw config_error("missing required key `output_dir`");
    bool cf = c.task == "cdl" || c.task == "cdr" || c.task == "mcdl" || c.task == "mcdl-sym" ||
              c.task == "bcdl";
    if (cf || c.task == "rsdae") {
        if (c.content.empty()) throw config_error("missing required key `content`");
    }
    if (cf && c.ratings.empty()) throw config_error("missing required key `ratings`");
    if (c.task == "mcdl-sym" && c.user_content.empty())
        throw config_error("missing required key `user_content`");
    if (c.task == "rsdae" && c.graph.empty()) throw config_error("missing required key `graph`");
    if (c.task == "dpfa" && c.counts.empty()) throw config_error("missing required key `counts`");
    if (c.task == "cdl") cdl_mode_from_string(c.mode);  // validates
    if (c.task == "dpfa" && c.backend != "gibbs" && c.backend != "sgnht-hybrid")
        throw config_error("unknown value for key `backend`: " + c.backend);
    if (c.epochs < 1) throw config_error("key `epochs` must be >= 1");
    if (c.sweeps < 1) throw config_error("key `sweeps` must be >= 1");
    if (c.thin < 1) throw config_error("key `thin` must be >= 1");
    if (c.k < 1) throw config_error("key `k` must be >= 1");
    if (c.burn_in < 0) c.burn_in = c.sweeps / 2;
    if (c.burn_in >= c.sweeps) throw config_error("key `burn_in` must be < sweeps");
    try {
        c.hyper.validate();
        c.pfa.validate();
    } catch (const validation_error& e) {
        throw config_error(e.what());
    }
    return c;
}

}  // namespace bdl

#endif
