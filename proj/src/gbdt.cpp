#include "attrlab/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "attrlab/rng.hpp"
#include "attrlab/stats.hpp"

namespace attrlab::gbdt {

namespace {

// Gains below this are treated as zero so float cancellation on flat
// residuals cannot manufacture a split.
constexpr double kMinGain = 1e-12;

struct NodeBuild {
    int node_id;      // index into Tree::nodes
    int depth;
    long count;       // sampled rows in the node
    double sum;       // residual sum over those rows
    // best split found so far
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    // per-feature sweep state
    long left_count = 0;
    double left_sum = 0.0;
    double prev_value = 0.0;
    bool seen_any = false;
};

class TreeGrower {
public:
    TreeGrower(const Matrix& x, std::span<const std::size_t> const* sorted_orders)
        : x_(x), sorted_orders_(sorted_orders), node_of_row_(x.rows(), -1) {}

    // Grows one tree on `rows` against `residual`; appends split records.
    Tree grow(const std::vector<std::size_t>& rows, const std::vector<double>& residual,
              const std::vector<int>& features, int max_depth, int min_leaf, int tree_index,
              std::vector<SplitRecord>& split_log) {
        Tree tree;
        std::fill(node_of_row_.begin(), node_of_row_.end(), -1);

        double root_sum = 0.0;
        for (std::size_t r : rows) {
            node_of_row_[r] = 0;
            root_sum += residual[r];
        }
        tree.nodes.push_back(TreeNode{});
        tree.nodes[0].cover = static_cast<int>(rows.size());

        std::vector<NodeBuild> level;
        level.push_back(
            NodeBuild{0, 0, static_cast<long>(rows.size()), root_sum});

        while (!level.empty()) {
            // node_slot_[id] maps a tree node id to its index in `level`.
            node_slot_.assign(tree.nodes.size(), -1);
            for (std::size_t i = 0; i < level.size(); ++i)
                node_slot_[static_cast<std::size_t>(level[i].node_id)] = static_cast<int>(i);

            find_best_splits(level, residual, features, min_leaf);

            std::vector<NodeBuild> next;
            for (NodeBuild& nb : level) {
                TreeNode& node = tree.nodes[static_cast<std::size_t>(nb.node_id)];
                const bool can_split = nb.depth < max_depth && nb.best_feature >= 0;
                if (!can_split) {
                    node.value = nb.sum / static_cast<double>(nb.count);
                    continue;
                }
                const int left_id = static_cast<int>(tree.nodes.size());
                const int right_id = left_id + 1;
                node.feature = nb.best_feature;
                node.threshold = nb.best_threshold;
                node.left = left_id;
                node.right = right_id;
                split_log.push_back(SplitRecord{tree_index, nb.depth, nb.best_feature});
                // push_back may reallocate; `node` must not be touched past here
                tree.nodes.push_back(TreeNode{});
                tree.nodes.push_back(TreeNode{});
                next.push_back(NodeBuild{left_id, nb.depth + 1, 0, 0.0});
                next.push_back(NodeBuild{right_id, nb.depth + 1, 0, 0.0});
            }
            if (next.empty()) break;

            // Reassign rows of split nodes to their children.
            node_slot_.assign(tree.nodes.size(), -1);
            for (std::size_t i = 0; i < next.size(); ++i)
                node_slot_[static_cast<std::size_t>(next[i].node_id)] = static_cast<int>(i);
            for (std::size_t r : rows) {
                const int id = node_of_row_[r];
                if (id < 0) continue;
                const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
                if (node.feature < 0) continue;
                const int child = x_(r, static_cast<std::size_t>(node.feature)) < node.threshold
                                      ? node.left
                                      : node.right;
                node_of_row_[r] = child;
                NodeBuild& nb = next[static_cast<std::size_t>(node_slot_[static_cast<std::size_t>(child)])];
                nb.count += 1;
                nb.sum += residual[r];
            }
            for (const NodeBuild& nb : next)
                tree.nodes[static_cast<std::size_t>(nb.node_id)].cover = static_cast<int>(nb.count);
            level = std::move(next);
        }
        return tree;
    }

private:
    // One pass per feature over the presorted global order, scanning all
    // active nodes simultaneously. Features ascend and candidate thresholds
    // ascend within a feature, so requiring a strictly greater gain keeps
    // the (lowest feature, lowest threshold) winner on ties.
    void find_best_splits(std::vector<NodeBuild>& level, const std::vector<double>& residual,
                          const std::vector<int>& features, int min_leaf) {
        for (int f : features) {
            for (NodeBuild& nb : level) {
                nb.left_count = 0;
                nb.left_sum = 0.0;
                nb.seen_any = false;
            }
            for (std::size_t r : sorted_orders_[f]) {
                const int id = node_of_row_[r];
                if (id < 0 || static_cast<std::size_t>(id) >= node_slot_.size()) continue;
                const int slot = node_slot_[static_cast<std::size_t>(id)];
                if (slot < 0) continue;
                NodeBuild& nb = level[static_cast<std::size_t>(slot)];
                const double value = x_(r, static_cast<std::size_t>(f));
                if (nb.seen_any && value > nb.prev_value && nb.left_count >= min_leaf &&
                    nb.count - nb.left_count >= min_leaf) {
                    const double right_sum = nb.sum - nb.left_sum;
                    const long right_count = nb.count - nb.left_count;
                    const double gain =
                        nb.left_sum * nb.left_sum / static_cast<double>(nb.left_count) +
                        right_sum * right_sum / static_cast<double>(right_count) -
                        nb.sum * nb.sum / static_cast<double>(nb.count);
                    if (gain > kMinGain && gain > nb.best_gain) {
                        nb.best_gain = gain;
                        nb.best_feature = f;
                        nb.best_threshold = 0.5 * (nb.prev_value + value);
                    }
                }
                nb.left_count += 1;
                nb.left_sum += residual[r];
                nb.prev_value = value;
                nb.seen_any = true;
            }
        }
    }

    const Matrix& x_;
    std::span<const std::size_t> const* sorted_orders_;
    std::vector<int> node_of_row_;
    std::vector<int> node_slot_;
};

}  // namespace

void TrainConfig::validate() const {
    if (rounds < 1) throw ParameterError("rounds must be >= 1");
    if (max_depth < 1) throw ParameterError("max_depth must be >= 1");
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw ParameterError("subsample must be in (0, 1]");
    if (!(colsample > 0.0 && colsample <= 1.0)) throw ParameterError("colsample must be in (0, 1]");
    if (min_leaf < 1) throw ParameterError("min_leaf must be >= 1");
}

double Ensemble::predict(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(n_features))
        throw ParameterError("predict: expected " + std::to_string(n_features) + " features, got " +
                             std::to_string(x.size()));
    double out = base_score;
    for (const Tree& tree : trees) out += learning_rate * tree.evaluate(x);
    return out;
}

std::vector<double> Ensemble::predict_batch(const Matrix& rows) const {
    std::vector<double> out(rows.rows());
    for (std::size_t r = 0; r < rows.rows(); ++r) out[r] = predict(rows.row(r));
    return out;
}

Ensemble fit(const synthdata::Dataset& dataset, const TrainConfig& config) {
    config.validate();
    dataset.validate();
    const std::size_t n = dataset.n_rows();
    const std::size_t p = dataset.n_features();
    if (n < 2 * static_cast<std::size_t>(config.min_leaf))
        throw ParameterError("fit: need at least 2*min_leaf rows");
    if (p == 0) throw ParameterError("fit: dataset has no features");

    Ensemble ens;
    ens.config = config;
    ens.seed = config.seed;
    ens.learning_rate = config.learning_rate;
    ens.n_features = static_cast<int>(p);
    ens.base_score = mean(dataset.target);

    bool constant_target = true;
    for (double y : dataset.target)
        if (y != dataset.target[0]) {
            constant_target = false;
            break;
        }
    if (constant_target) {
        ens.degenerate = true;
        return ens;
    }

    // Global per-feature sort orders, computed once per fit.
    std::vector<std::vector<std::size_t>> order_storage(p);
    std::vector<std::span<const std::size_t>> orders(p);
    for (std::size_t f = 0; f < p; ++f) {
        auto& ord = order_storage[f];
        ord.resize(n);
        std::iota(ord.begin(), ord.end(), std::size_t{0});
        std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) {
            return dataset.features(a, f) < dataset.features(b, f);
        });
        orders[f] = ord;
    }

    std::vector<double> residual(dataset.target.begin(), dataset.target.end());
    for (double& r : residual) r -= ens.base_score;

    const std::size_t rows_per_tree =
        config.subsample < 1.0
            ? std::max<std::size_t>(1, static_cast<std::size_t>(config.subsample * static_cast<double>(n)))
            : n;
    const std::size_t cols_per_tree =
        config.colsample < 1.0
            ? std::min(p, static_cast<std::size_t>(
                              std::ceil(config.colsample * static_cast<double>(p))))
            : p;

    Rng rng(config.seed);
    TreeGrower grower(dataset.features, orders.data());
    std::vector<std::size_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
    std::vector<int> all_features(p);
    std::iota(all_features.begin(), all_features.end(), 0);

    for (int t = 0; t < config.rounds; ++t) {
        std::vector<std::size_t> rows =
            rows_per_tree < n ? sample_without_replacement(n, rows_per_tree, rng) : all_rows;
        std::vector<int> features;
        if (cols_per_tree < p) {
            auto picked = sample_without_replacement(p, cols_per_tree, rng);
            features.assign(picked.begin(), picked.end());
        } else {
            features = all_features;
        }
        Tree tree = grower.grow(rows, residual, features, config.max_depth, config.min_leaf, t,
                                ens.split_log);
        for (std::size_t r = 0; r < n; ++r)
            residual[r] -= config.learning_rate * tree.evaluate(dataset.features.row(r));
        ens.trees.push_back(std::move(tree));
    }
    return ens;
}

std::vector<int> split_counts(const Ensemble& ensemble) {
    std::vector<int> counts(static_cast<std::size_t>(ensemble.n_features), 0);
    for (const SplitRecord& rec : ensemble.split_log)
        counts[static_cast<std::size_t>(rec.feature)] += 1;
    return counts;
}

std::vector<int> first_mover(const Ensemble& ensemble, const std::vector<int>& group_of,
                             int n_groups) {
    if (group_of.size() != static_cast<std::size_t>(ensemble.n_features))
        throw ParameterError("first_mover: group_of length mismatch");
    std::vector<int> movers(static_cast<std::size_t>(n_groups), -1);
    for (const Tree& tree : ensemble.trees) {
        const int root_feature = tree.nodes.empty() ? -1 : tree.nodes[0].feature;
        if (root_feature < 0) continue;
        const int g = group_of[static_cast<std::size_t>(root_feature)];
        if (g >= 0 && g < n_groups && movers[static_cast<std::size_t>(g)] < 0)
            movers[static_cast<std::size_t>(g)] = root_feature;
    }
    return movers;
}

namespace {

using nlohmann::json;

json node_to_json(const TreeNode& nd) {
    return json{{"feature", nd.feature}, {"threshold", nd.threshold}, {"left", nd.left},
                {"right", nd.right},     {"value", nd.value},         {"cover", nd.cover}};
}

TreeNode node_from_json(const json& j) {
    TreeNode nd;
    nd.feature = j.at("feature").get<int>();
    nd.threshold = j.at("threshold").get<double>();
    nd.left = j.at("left").get<int>();
    nd.right = j.at("right").get<int>();
    nd.value = j.at("value").get<double>();
    nd.cover = j.at("cover").get<int>();
    return nd;
}

}  // namespace

std::string to_json(const Ensemble& ensemble) {
    json trees = json::array();
    for (const Tree& tree : ensemble.trees) {
        json nodes = json::array();
        for (const TreeNode& nd : tree.nodes) nodes.push_back(node_to_json(nd));
        trees.push_back(json{{"nodes", std::move(nodes)}});
    }
    json log = json::array();
    for (const SplitRecord& rec : ensemble.split_log)
        log.push_back(json{{"tree", rec.tree}, {"depth", rec.depth}, {"feature", rec.feature}});
    const TrainConfig& c = ensemble.config;
    json doc{{"base_score", ensemble.base_score},
             {"learning_rate", ensemble.learning_rate},
             {"trees", std::move(trees)},
             {"split_log", std::move(log)},
             {"config",
              {{"rounds", c.rounds},
               {"max_depth", c.max_depth},
               {"learning_rate", c.learning_rate},
               {"subsample", c.subsample},
               {"colsample", c.colsample},
               {"min_leaf", c.min_leaf},
               {"seed", c.seed}}},
             {"seed", ensemble.seed},
             {"n_features", ensemble.n_features},
             {"degenerate", ensemble.degenerate}};
    return doc.dump(2);
}

Ensemble from_json(const std::string& text) {
    json doc = json::parse(text);
    Ensemble ens;
    ens.base_score = doc.at("base_score").get<double>();
    ens.learning_rate = doc.at("learning_rate").get<double>();
    for (const json& jt : doc.at("trees")) {
        Tree tree;
        for (const json& jn : jt.at("nodes")) tree.nodes.push_back(node_from_json(jn));
        ens.trees.push_back(std::move(tree));
    }
    for (const json& jr : doc.at("split_log"))
        ens.split_log.push_back(SplitRecord{jr.at("tree").get<int>(), jr.at("depth").get<int>(),
                                            jr.at("feature").get<int>()});
    const json& jc = doc.at("config");
    ens.config.rounds = jc.at("rounds").get<int>();
    ens.config.max_depth = jc.at("max_depth").get<int>();
    ens.config.learning_rate = jc.at("learning_rate").get<double>();
    ens.config.subsample = jc.at("subsample").get<double>();
    ens.config.colsample = jc.at("colsample").get<double>();
    ens.config.min_leaf = jc.at("min_leaf").get<int>();
    ens.config.seed = jc.at("seed").get<std::uint64_t>();
    ens.seed = doc.at("seed").get<std::uint64_t>();
    ens.n_features = doc.at("n_features").get<int>();
    ens.degenerate = doc.at("degenerate").get<bool>();
    return ens;
}

void save_model(const Ensemble& ensemble, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << to_json(ensemble) << '\n';
    if (!out) throw IoError("failed writing " + path);
}

Ensemble load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

}  // namespace attrlab::gbdt
