#ifndef ATTRLAB_GBDT_HPP
#define ATTRLAB_GBDT_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attrlab/common.hpp"
#include "attrlab/dataset.hpp"

namespace attrlab::gbdt {

struct TrainConfig {
    int rounds = 100;            // T
    int max_depth = 3;
    double learning_rate = 0.1;  // eta
    double subsample = 1.0;      // row fraction per tree, (0, 1]
    double colsample = 1.0;      // feature fraction per tree, (0, 1]
    int min_leaf = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

// feature == -1 marks a leaf. Internal nodes route x[feature] < threshold
// to `left`, otherwise to `right`. Thresholds are midpoints of adjacent
// observed values, so no training value ever sits on a threshold.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output (mean residual of covered rows)
    int cover = 0;       // training rows reaching this node
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double evaluate(std::span<const double> x) const {
        int idx = 0;
        while (nodes[static_cast<std::size_t>(idx)].feature >= 0) {
            const TreeNode& nd = nodes[static_cast<std::size_t>(idx)];
            idx = x[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(idx)].value;
    }
};

struct SplitRecord {
    int tree;
    int depth;
    int feature;
};

struct Ensemble {
    double base_score = 0.0;           // training-target mean
    double learning_rate = 0.1;
    std::vector<Tree> trees;
    std::vector<SplitRecord> split_log;
    TrainConfig config;                // echo
    std::uint64_t seed = 0;            // echo
    int n_features = 0;
    bool degenerate = false;           // constant training target

    double predict(std::span<const double> x) const;
    std::vector<double> predict_batch(const Matrix& rows) const;
};

// Squared-error gradient boosting with exact greedy variance-reduction
// splits. Ties break toward the lower feature index, then the lower
// threshold, so subsampling is the only stochasticity source; with
// subsample = colsample = 1 the fit is seed-independent. A constant target
// yields a degenerate ensemble with zero trees.
Ensemble fit(const synthdata::Dataset& dataset, const TrainConfig& config);

// Per-feature count of internal nodes across all trees. The counts sum to
// the total number of internal nodes.
std::vector<int> split_counts(const Ensemble& ensemble);

// For each group, the root-split feature of the earliest tree whose root
// splits inside that group; -1 when no tree root does.
std::vector<int> first_mover(const Ensemble& ensemble, const std::vector<int>& group_of,
                             int n_groups);

// JSON round-trip; predictions reproduce to better than 1e-12.
std::string to_json(const Ensemble& ensemble);
Ensemble from_json(const std::string& text);
void save_model(const Ensemble& ensemble, const std::string& path);
Ensemble load_model(const std::string& path);

}  // namespace attrlab::gbdt

#endif
