#ifndef ATTRLAB_DASH_HPP
#define ATTRLAB_DASH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "attrlab/attribution.hpp"
#include "attrlab/common.hpp"
#include "attrlab/gbdt.hpp"
#include "attrlab/stability.hpp"

namespace attrlab::dash {

enum class Aggregator { mean, trimmed, median };

Aggregator aggregator_from_string(const std::string& name);

struct ConsensusMethod {
    Aggregator aggregator = Aggregator::mean;
    double trim = 0.0;  // per-tail fraction for Aggregator::trimmed, [0, 0.5)

    std::string describe() const;
};

// Column-wise aggregate of an attribution matrix plus balance/tie metadata.
struct ConsensusResult {
    std::vector<double> values;
    ConsensusMethod method;
    int n_models = 0;
    bool balanced = false;                       // every group's first-mover counts equal
    std::vector<int> first_mover_counts;         // per feature, over the contributing models
    std::vector<std::vector<int>> tied_groups;   // features reported as ties
};

// Plain column aggregation; trimming drops floor(trim*M) rows per tail and
// must leave at least one row.
ConsensusResult consensus(const attribution::AttributionMatrix& attr,
                          const ConsensusMethod& method = {});

// True iff every feature of the group is first-mover equally often.
// first_movers holds one feature index (or -1) per model.
bool is_balanced(const std::vector<int>& first_movers, const std::vector<int>& group);

// Stability of the consensus ordering of (j, k) under resampling M_sub of
// the matrix rows without replacement. M_sub == M has a single possible
// consensus (0); M_sub == 1 enumerates rows and equals the empirical flip
// rate exactly.
double consensus_flip_rate(const attribution::AttributionMatrix& attr, int j, int k, int m_sub,
                           int n_resamples, std::uint64_t seed);

// Exact but expensive variant: trains n_trials disjoint ensembles of m_sub
// fresh models each and measures consensus flips across the trials.
double consensus_flip_rate_retrain(const synthdata::Dataset& dataset,
                                   const gbdt::TrainConfig& train_config, int j, int k, int m_sub,
                                   int n_trials, std::uint64_t seed_base,
                                   const attribution::EvalProtocol& protocol = {});

// Within each correlation group, features connected by an unstable z-test
// pair are merged into one tied set.
std::vector<std::vector<int>> tied_groups(const attribution::AttributionMatrix& attr,
                                          const stability::CorrelationGroups& groups);

// Ranking as ordered blocks: tied sets move as one block ordered by their
// mean consensus value; everything else ranks alone.
std::vector<std::vector<int>> ranking_blocks(const std::vector<double>& consensus_values,
                                             const std::vector<std::vector<int>>& ties);

enum class ProgressiveStage { screen_at_5, confirm_at_10, resolve_at_25 };

std::string stage_name(ProgressiveStage stage);

struct ProgressivePairOutcome {
    int j = 0;
    int k = 0;
    double z_split = 0.0;
    bool screen_flagged = false;
    double z10 = 0.0;      // z-test at M=10 (when reached)
    double z25 = 0.0;      // z-test at M=25 (when reached)
    stability::Verdict verdict = stability::Verdict::stable;
};

struct ProgressiveOutcome {
    ProgressiveStage stage_reached = ProgressiveStage::screen_at_5;
    int models_trained = 0;  // 5, 10 or 25
    std::vector<ProgressivePairOutcome> pairs;
};

// Adaptive sizing: screen one model at M=5; confirm flagged pairs with the
// 10-model z-test; extend borderline pairs (1.5 < Z < 2.5) to M=25. The
// 1.96 / (1.5, 2.5) thresholds are fixed.
ProgressiveOutcome progressive_dash(const synthdata::Dataset& dataset,
                                    const gbdt::TrainConfig& train_config,
                                    const std::vector<std::pair<int, int>>& pairs_of_interest,
                                    std::uint64_t seed_base,
                                    const attribution::EvalProtocol& protocol = {});

// Bits of within-group ordering discarded by a tie: log2(m!).
double info_loss_within(int m);

// Mutual information (bits) between the M-model consensus ordering and the
// true between-group ordering: 1 - H2(Phi(-delta*sqrt(M)/sigma)).
double info_between(int m_models, double delta, double sigma);

// Full consensus report for the CLI: consensus values enriched with tie and
// balance metadata from trained models.
std::string consensus_report_json(const ConsensusResult& result,
                                  const std::vector<std::string>& names,
                                  const std::vector<std::vector<int>>& blocks);

}  // namespace attrlab::dash

#endif
