// Command-line front end: run experiments from config files, evaluate
// checkpoints, and generate synthetic datasets.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bdl/config.hpp"
#include "bdl/dpfa.hpp"
#include "bdl/harness.hpp"
#include "bdl/synth.hpp"

namespace {

int dispatch(int argc, char** argv) {
    CLI::App app{"Bayesian deep learning models for recommendation and topic modeling"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run an experiment from a config file");
    run->add_option("config", config_path, "Path to a key = value config file")->required();

    std::string ckpt_path, ratings_path;
    int m = 50;
    auto* eval = app.add_subcommand("eval", "Recall@M of a factor checkpoint against ratings");
    eval->add_option("checkpoint", ckpt_path, "Checkpoint with U and V tensors")->required();
    eval->add_option("--ratings", ratings_path, "Held-out ratings file")->required();
    eval->add_option("--m", m, "Ranking cutoff M");

    auto* synth = app.add_subcommand("synth", "Generate synthetic datasets");
    synth->require_subcommand(1);
    std::uint64_t seed = 0;
    std::string out_dir = ".";

    auto* cf = synth->add_subcommand("cf", "Planted-cluster content + ratings");
    long users = 100, items = 200, vocab = 50;
    int clusters = 8, per_user = 10;
    cf->add_option("--users", users);
    cf->add_option("--items", items);
    cf->add_option("--vocab", vocab);
    cf->add_option("--clusters", clusters);
    cf->add_option("--positives-per-user", per_user);
    cf->add_option("--seed", seed);
    cf->add_option("--out", out_dir, "Output directory");

    auto* graph = synth->add_subcommand("graph", "Planted-community item graph");
    long nodes = 100;
    int communities = 4;
    double intra_p = 0.2, inter_p = 0.01;
    graph->add_option("--nodes", nodes);
    graph->add_option("--communities", communities);
    graph->add_option("--intra-p", intra_p);
    graph->add_option("--inter-p", inter_p);
    graph->add_option("--seed", seed);
    graph->add_option("--out", out_dir, "Output directory");

    auto* counts = synth->add_subcommand("counts", "Topic-model count matrix");
    long docs = 200, words = 30;
    int topics = 3;
    counts->add_option("--docs", docs);
    counts->add_option("--vocab", words);
    counts->add_option("--topics", topics);
    counts->add_option("--seed", seed);
    counts->add_option("--out", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*run) {
        bdl::ExperimentConfig cfg = bdl::parse_config(config_path);
        auto outcome = bdl::run_experiment(cfg);
        std::cout << "wrote " << outcome.metrics_path << "\n";
        if (outcome.recall >= 0) std::cout << "recall@" << cfg.recall_m << " = " << outcome.recall
                                           << "\n";
        return 0;
    }
    if (*eval) {
        double recall = bdl::evaluate_checkpoint(ckpt_path, ratings_path, m);
        std::cout << "recall@" << m << " = " << recall << "\n";
        return 0;
    }
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    if (*cf) {
        auto data = bdl::synth_cf(users, items, vocab, clusters, per_user, seed);
        bdl::save_bow((fs::path(out_dir) / "content.bow").string(), data.content);
        bdl::save_ratings((fs::path(out_dir) / "ratings.txt").string(), data.ratings);
        std::cout << "wrote content.bow and ratings.txt to " << out_dir << "\n";
    } else if (*graph) {
        auto g = bdl::synth_graph(nodes, communities, intra_p, inter_p, seed);
        bdl::save_graph((fs::path(out_dir) / "graph.txt").string(), g);
        std::cout << "wrote graph.txt to " << out_dir << "\n";
    } else {  // counts
        bdl::Rng rng = bdl::make_rng(seed);
        auto sbn = bdl::SbnParams::random({static_cast<Eigen::Index>(topics)}, rng);
        auto [x, state] = bdl::generate_synthetic(bdl::PfaHyper{}, sbn, docs, words, topics, rng);
        bdl::BagOfWords bow;
        bow.rows = x.rows();
        bow.cols = x.cols();
        bow.entries.resize(bow.rows);
        for (Eigen::Index n = 0; n < x.rows(); ++n)
            for (Eigen::Index p = 0; p < x.cols(); ++p)
                if (x(n, p) > 0) bow.entries[n].emplace_back(p, x(n, p));
        bdl::save_bow((fs::path(out_dir) / "counts.bow").string(), bow);
        std::cout << "wrote counts.bow to " << out_dir << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const bdl::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const bdl::argument_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const bdl::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const bdl::solve_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const bdl::io_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const bdl::parse_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const bdl::validation_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
