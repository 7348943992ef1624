#ifndef ATTRLAB_ATTRIBUTION_HPP
#define ATTRLAB_ATTRIBUTION_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attrlab/common.hpp"
#include "attrlab/dataset.hpp"
#include "attrlab/gbdt.hpp"

namespace attrlab::attribution {

// Reference rows for interventional conditioning.
struct BackgroundSet {
    Matrix rows;  // B x P
    std::size_t size() const { return rows.rows(); }
};

enum class Kind { local_signed, global_mean_abs };

struct AttributionVector {
    std::vector<double> values;
    Kind kind = Kind::local_signed;
    bool degenerate = false;  // e.g. split-count importance with zero splits
};

enum class Method { shap, permutation, split_count };

Method method_from_string(const std::string& name);
std::string method_name(Method method);

// One global attribution row per model, trained with seeds
// seed_base + 0 .. seed_base + M-1 on a shared train/eval/background split.
struct AttributionMatrix {
    Matrix values;                      // M x P, nonnegative
    std::vector<std::uint64_t> seeds;   // per-row seed echo
    std::vector<std::string> names;     // feature names
    Method method = Method::shap;
    std::uint64_t eval_seed = 0;
    std::uint64_t background_seed = 0;

    std::size_t n_models() const { return values.rows(); }
    std::size_t n_features() const { return values.cols(); }
};

// Exact interventional Shapley values for one prediction, summed over trees.
// Per tree and background row the coalition game is a sum of leaf indicator
// terms whose Shapley values have a closed form, so the result equals the
// full subset enumeration at O(leaves * depth) cost. Features absent from a
// tree receive zero from that tree. Efficiency holds to float precision:
// sum_j phi_j = f(x) - mean background prediction.
AttributionVector shap_local(const gbdt::Ensemble& ensemble, std::span<const double> x,
                             const BackgroundSet& background);

// Mean |shap_local| per feature over the evaluation rows.
AttributionVector shap_global(const gbdt::Ensemble& ensemble, const Matrix& eval_rows,
                              const BackgroundSet& background);

// Increase in MSE when one column of the evaluation slice is permuted
// (single seeded pass per feature), floored at zero.
AttributionVector permutation_importance(const gbdt::Ensemble& ensemble, const Matrix& eval_rows,
                                         std::span<const double> eval_target, std::uint64_t seed);

// Normalized split counts n_j / sum(n); all-zero and degenerate when the
// ensemble contains no splits.
AttributionVector split_count_importance(const gbdt::Ensemble& ensemble);

// Shared slice protocol: eval rows are held out of training and fixed
// across all models of a matrix; the background is drawn from the training
// rows. This isolates model-level noise.
struct EvalProtocol {
    std::size_t eval_count = 200;
    std::size_t background_count = 50;
    std::uint64_t eval_seed = 20240;
    std::uint64_t background_seed = 20241;
    unsigned threads = 0;  // 0 = hardware concurrency
};

// The train/eval/background split induced by an EvalProtocol.
struct DataSplit {
    synthdata::Dataset train;
    Matrix eval_rows;
    std::vector<double> eval_target;
    BackgroundSet background;
};

DataSplit make_split(const synthdata::Dataset& dataset, const EvalProtocol& protocol);

AttributionMatrix attribution_matrix(const synthdata::Dataset& dataset,
                                     const gbdt::TrainConfig& train_config, int n_models,
                                     std::uint64_t seed_base, Method method,
                                     const EvalProtocol& protocol = {});

// CSV (header = feature names, one row per model) plus a JSON sidecar with
// seeds, method and slice seeds at <path>.meta.json.
void save_matrix(const AttributionMatrix& matrix, const std::string& path);
AttributionMatrix load_matrix(const std::string& path);

}  // namespace attrlab::attribution

#endif
