#ifndef ATTRLAB_EXPERIMENTS_HPP
#define ATTRLAB_EXPERIMENTS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "attrlab/attribution.hpp"
#include "attrlab/gbdt.hpp"
#include "attrlab/synthdata.hpp"

namespace attrlab::experiments {

// One sweep cell. Every row carries its parameters and seed range so it can
// be re-run standalone; theory columns always come from the stability
// module's analytic operations.
struct ResultRow {
    std::string experiment;
    std::vector<std::pair<std::string, double>> params;
    std::vector<std::pair<std::string, double>> measured;
    std::vector<std::pair<std::string, double>> theory;
    std::uint64_t seed_lo = 0;
    std::uint64_t seed_hi = 0;
};

struct PlotSpec {
    std::string x;
    std::vector<std::string> y;  // measured/theory keys
    std::string series;          // param key, empty for single series
};

// Writes <dir>/results.csv, <dir>/results.json and <dir>/plotdata.csv.
// Output bytes are a pure function of the rows.
void write_results(const std::string& dir, const std::vector<ResultRow>& rows,
                   const PlotSpec& plot);

// Trains one model per seed on a freshly drawn dataset (data-level
// randomness, the protocol behind the coin-flip predictions) and stacks the
// global attributions.
attribution::AttributionMatrix fresh_data_matrix(const synthdata::DgpConfig& dgp,
                                                 const gbdt::TrainConfig& train, int n_models,
                                                 std::uint64_t seed_base,
                                                 const attribution::EvalProtocol& protocol);

struct RatioSweepConfig {
    std::vector<int> depths{1};
    std::vector<double> rhos{0.3, 0.5, 0.7, 0.9, 0.95};
    int n_seeds = 30;
    int n_samples = 2000;
    int rounds = 100;
    double eta = 1.0;
    std::uint64_t seed_base = 1000;
    unsigned threads = 0;
    std::string out_dir;  // empty: no files
};

struct RatioSweepResult {
    std::vector<ResultRow> rows;
    std::map<int, double> fitted_alpha;  // per depth, least-squares in 1/(1-a*rho^2)
};

// Within-group split-count ratio (first mover over mean of the others) per
// (depth, rho), averaged over seeds; each seed draws a fresh two-group
// dataset and fits without subsampling.
RatioSweepResult run_ratio_sweep(const RatioSweepConfig& config);

struct FlipSweepConfig {
    std::vector<double> rhos{0.1, 0.3, 0.5, 0.7, 0.9, 0.95};
    int n_models = 50;
    int group_count = 2;
    int group_size = 2;
    std::vector<double> group_weights{1.0, 0.6};  // per-group response weight
    int n_samples = 2000;
    gbdt::TrainConfig train{100, 3, 0.1, 1.0, 1.0, 1, 0};
    std::uint64_t seed_base = 2000;
    std::size_t eval_count = 200;
    std::size_t background_count = 50;
    unsigned threads = 0;
    std::string out_dir;
};

// Mean within-group and between-group flip rate per rho over fresh-data
// models. Weights are symmetric inside each group and graded across groups.
std::vector<ResultRow> run_flip_sweep(const FlipSweepConfig& config);

struct ConvergenceConfig {
    double rho = 0.9;
    std::vector<int> ensemble_sizes{1, 2, 5, 10, 25};
    int n_models = 50;      // master matrix size
    int n_resamples = 400;
    int n_samples = 2000;
    gbdt::TrainConfig train{100, 3, 0.1, 0.8, 1.0, 1, 0};
    std::uint64_t data_seed = 7;
    std::uint64_t seed_base = 3000;
    std::size_t eval_count = 200;
    std::size_t background_count = 50;
    unsigned threads = 0;
    std::string out_dir;
};

// Consensus flip rate and consensus attribution CV of a symmetric pair as a
// function of ensemble size, on one fixed dataset with subsampled models.
std::vector<ResultRow> run_convergence(const ConvergenceConfig& config);

struct ConditionalSweepConfig {
    std::vector<double> rhos{0.5, 0.7, 0.8, 0.9, 0.95, 0.99};
    std::vector<double> delta_betas{0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0};
    int n_models = 30;
    int n_samples = 2000;
    gbdt::TrainConfig train{100, 3, 0.1, 1.0, 1.0, 1, 0};
    std::uint64_t seed_base = 4000;
    std::size_t eval_count = 200;
    std::size_t background_count = 50;
    unsigned threads = 0;
    std::string out_dir;
};

// Flip rate of a two-feature pair with response weights 1 +- delta_beta/2
// per (rho, delta_beta) cell, fresh data per model.
std::vector<ResultRow> run_conditional_sweep(const ConditionalSweepConfig& config);

struct SnrCalibrationConfig {
    double rho = 0.85;
    int group_count = 4;
    int group_size = 5;
    double beta_step = 0.25;  // within-group grading: beta_i = 1 + step*i
    int n_models = 50;
    int n_samples = 2000;
    gbdt::TrainConfig train{100, 3, 0.1, 0.8, 1.0, 1, 0};
    std::uint64_t data_seed = 11;
    std::uint64_t seed_base = 5000;
    std::size_t eval_count = 200;
    std::size_t background_count = 50;
    unsigned threads = 0;
    std::string out_dir;
};

// Bins within-group pairs by estimated SNR and compares the empirical flip
// rate to Phi(-SNR) per bin. Also reports the pair-level diagnostics.
struct SnrCalibrationResult {
    std::vector<ResultRow> bin_rows;
    std::vector<double> pair_snr;
    std::vector<double> pair_flip;
    double pearson_r_z_flip = 0.0;
};

SnrCalibrationResult run_snr_calibration(const SnrCalibrationConfig& config);

struct AxiomValidationConfig {
    double rho = 0.5;
    int rounds = 100;
    int n_seeds = 30;
    int n_samples = 2000;
    double eta = 1.0;
    std::uint64_t seed_base = 6000;
    unsigned threads = 0;
    std::string out_dir;
};

// First-mover and non-first-mover split counts of a single symmetric pair
// (stumps, fresh data per seed) against T/(2-rho^2) and (1-rho^2)T/(2-rho^2).
std::vector<ResultRow> run_axiom_validation(const AxiomValidationConfig& config);

struct BenchmarkConfig {
    std::vector<double> rhos{0.5, 0.7, 0.9};
    int m_dash = 25;
    int n_models = 50;
    int n_resamples = 200;
    int group_count = 2;
    int group_size = 5;
    std::vector<double> group_weights{1.0, 0.7};
    int n_samples = 1000;
    gbdt::TrainConfig train{100, 3, 0.1, 0.8, 1.0, 1, 0};
    std::uint64_t data_seed = 13;
    std::uint64_t seed_base = 7000;
    std::size_t eval_count = 200;
    std::size_t background_count = 50;
    unsigned threads = 0;
    std::string out_dir;
};

// Mean within-group flip rate of single models vs. the M-model consensus,
// per rho.
std::vector<ResultRow> run_benchmark(const BenchmarkConfig& config);

}  // namespace attrlab::experiments

#endif
