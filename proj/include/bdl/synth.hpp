#ifndef BDL_SYNTH_HPP
#define BDL_SYNTH_HPP

#include <vector>

#include <Eigen/Dense>

#include "bdl/corpus.hpp"
#include "bdl/errors.hpp"
#include "bdl/rng.hpp"

namespace bdl {

/// Planted-structure recommendation instance. Items carry a cluster
/// label expressed through a small block of signal words plus a larger
/// block of high-count nuisance words whose grouping is independent of
/// the clusters; users like a subset of clusters and rate items drawn
/// from them. Content alone over-weights the nuisance block, ratings
/// alone are sparse, so the instance separates joint training from the
/// two degenerate regimes.
struct SynthCf {
    BagOfWords content;
    ImplicitRatings ratings;
    std::vector<int> item_cluster;
};

inline SynthCf synth_cf(Eigen::Index users, Eigen::Index items, Eigen::Index vocab, int clusters,
                        int positives_per_user, std::uint64_t seed, int signal_words_per_cluster = 2,
                        int signal_count = 2, int nuisance_count = 8, int liked_clusters = 2) {
    if (users < 1 || items < 1 || clusters < 1) throw argument_error("synth_cf: sizes must be >= 1");
    Eigen::Index signal_block = static_cast<Eigen::Index>(clusters) * signal_words_per_cluster;
    if (vocab <= signal_block) throw argument_error("synth_cf: vocab too small for signal block");
    Eigen::Index nuisance_block = vocab - signal_block;
    int nuisance_groups = clusters;

    SynthCf out;
    out.content.rows = items;
    out.content.cols = vocab;
    out.content.entries.resize(items);
    out.item_cluster.resize(items);

    Rng rng = make_rng(seed);
    std::uniform_int_distribution<int> pick_cluster(0, clusters - 1);
    std::uniform_int_distribution<int> pick_group(0, nuisance_groups - 1);
    std::uniform_int_distribution<int> jitter(0, 1);

    Eigen::Index per_group = nuisance_block / nuisance_groups;
    if (per_group < 1) per_group = 1;
    for (Eigen::Index j = 0; j < items; ++j) {
        int c = static_cast<int>(j) % clusters;  // balanced clusters
        out.item_cluster[j] = c;
        int g = pick_group(rng);                 // independent of c
        for (int w = 0; w < signal_words_per_cluster; ++w)
            out.content.entries[j].emplace_back(c * signal_words_per_cluster + w,
                                                signal_count + jitter(rng));
        for (Eigen::Index w = 0; w < per_group; ++w) {
            Eigen::Index idx = signal_block + (g * per_group + w) % nuisance_block;
            out.content.entries[j].emplace_back(idx, nuisance_count + jitter(rng));
        }
        std::sort(out.content.entries[j].begin(), out.content.entries[j].end());
    }

    out.ratings.users = users;
    out.ratings.items = items;
    out.ratings.positives.resize(users);
    std::vector<std::vector<Eigen::Index>> cluster_items(clusters);
    for (Eigen::Index j = 0; j < items; ++j) cluster_items[out.item_cluster[j]].push_back(j);
    for (Eigen::Index i = 0; i < users; ++i) {
        std::vector<int> liked;
        while (static_cast<int>(liked.size()) < std::min(liked_clusters, clusters)) {
            int c = pick_cluster(rng);
            if (std::find(liked.begin(), liked.end(), c) == liked.end()) liked.push_back(c);
        }
        std::set<Eigen::Index> pos;
        int guard = 0;
        while (static_cast<int>(pos.size()) < positives_per_user && ++guard < 10000) {
            int c = liked[static_cast<std::size_t>(rng() % liked.size())];
            const auto& pool = cluster_items[c];
            pos.insert(pool[static_cast<std::size_t>(rng() % pool.size())]);
        }
        out.ratings.positives[i].assign(pos.begin(), pos.end());
    }
    return out;
}

/// Planted-community graph: nodes split into equal communities, edges
/// drawn independently with intra- and inter-community probabilities.
inline ItemGraph synth_graph(Eigen::Index nodes, int communities, double intra_p, double inter_p,
                             std::uint64_t seed) {
    if (communities < 1) throw argument_error("synth_graph: communities must be >= 1");
    if (intra_p < 0 || intra_p > 1 || inter_p < 0 || inter_p > 1)
        throw argument_error("synth_graph: probabilities must be in [0,1]");
    ItemGraph g;
    g.nodes = nodes;
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index u = 0; u < nodes; ++u)
        for (Eigen::Index v = u + 1; v < nodes; ++v) {
            bool same = (u % communities) == (v % communities);
            if (unif(rng) < (same ? intra_p : inter_p)) g.edges.emplace_back(u, v);
        }
    return g;
}

}  // namespace bdl

#endif
