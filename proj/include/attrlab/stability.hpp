#ifndef ATTRLAB_STABILITY_HPP
#define ATTRLAB_STABILITY_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "attrlab/attribution.hpp"
#include "attrlab/common.hpp"
#include "attrlab/gbdt.hpp"

namespace attrlab::stability {

// Transitive closure over |pearson| > threshold edges. Zero-variance
// columns are flagged and excluded from grouping.
struct CorrelationGroups {
    double threshold = 0.5;
    std::vector<std::vector<int>> groups;   // size >= 2 each, sorted members
    std::vector<int> singletons;
    std::vector<int> flagged_zero_variance;

    // Group index per feature, -1 for singletons and flagged columns.
    std::vector<int> group_of(std::size_t n_features) const;
};

CorrelationGroups correlate_groups(const Matrix& features, double threshold = 0.5);

enum class Verdict { stable, unstable, degenerate };

std::string verdict_name(Verdict verdict);

// Multi-model pairwise diagnostic on D_i = phi_j(f_i) - phi_k(f_i).
struct PairDiagnostic {
    int j = 0;
    int k = 0;
    double mean_gap = 0.0;        // |mean(D)|
    double noise_sd = 0.0;        // sample sd of D (M-1 divisor)
    double z = 0.0;               // mean_gap * sqrt(M) / noise_sd; +inf sentinel when sd == 0
    double snr = 0.0;             // mean_gap / noise_sd
    double flip_empirical = 0.0;  // min-count flip rate in [0, 1/2]
    double flip_predicted = 0.0;  // Phi(-snr)
    Verdict verdict = Verdict::stable;
};

// min(#(j>k), #(k>j)) / M; exact ties count in neither direction.
double empirical_flip_rate(const attribution::AttributionMatrix& attr, int j, int k);

// Disagreement probability of two models drawn without replacement from the
// matrix: 2*c_jk*c_kj / (M*(M-1)). Can exceed 1/2 in finite samples; never
// feeds a verdict.
double pairwise_flip_rate(const attribution::AttributionMatrix& attr, int j, int k);

// Z = |mean(D)| * sqrt(M) / sd(D); unstable iff Z < 1.96. sd = 0 with a
// nonzero mean reports stable with a +inf sentinel; sd = 0 with zero mean
// is degenerate. Requires M >= 2.
PairDiagnostic z_test(const attribution::AttributionMatrix& attr, int j, int k);

// Single-model split-frequency screen. p_hat is the fraction of trees using
// the feature in at least one split. Without row/column subsampling the
// effective tree count shrinks to (T - ceil(1/eta)) * (1-eta) / (1+eta).
struct ScreenResult {
    int j = 0;
    int k = 0;
    double p_hat_j = 0.0;
    double p_hat_k = 0.0;
    double t_eff = 0.0;
    double z_split = 0.0;
    bool flagged = false;  // z_split < 1.96
};

ScreenResult screen(const gbdt::Ensemble& ensemble, int j, int k);
ScreenResult screen(const gbdt::Ensemble& ensemble, int j, int k, double eta, bool subsampled);

// Flip rate implied by a signal-to-noise ratio: Phi(-snr).
double flip_from_snr(double snr);

// Worst-case Gaussian-approximation error 0.4748 * gamma / sigma^3, with
// gamma the third absolute central moment.
double berry_esseen_bound(double gamma, double sigma);

// Smallest M with between-pair flip <= delta_risk at gap/noise delta_gap,
// sigma: ceil((sigma/delta_gap)^2 * quantile(1-delta_risk)^2), at least 1.
int min_ensemble_size(double sigma, double delta_gap, double delta_risk);

// Information-theoretic floor on the model trainings needed to certify a
// gap of delta0 against noise sigma: sigma^2 / (8 * delta0^2).
double query_lower_bound(double sigma, double delta0);

// Within-group attribution ratio 1 / (1 - alpha * rho^2).
double theoretical_ratio(double rho, double alpha = 1.0);

// First-mover split-count surplus rho^2 * T / (2 - rho^2).
double split_gap(double rho, double T);

// Closed-form ranking model for a symmetric group of size m.
struct ExactFlipModel {
    double p_top;           // 1/m
    double tie_prob;        // (m-2)/m
    double flip_no_ties;    // 2/m^2
    double flip_tiebroken;  // 1/2
};

ExactFlipModel exact_flip_model(int m);

// Spearman ceiling when two models disagree on one group's internal order.
double spearman_bound(int p, int m);

// Expected pairwise ranking disagreements between two independent models:
// within-group coin flips plus between-group noise terms. between_gaps and
// between_sds are ordered over group pairs (l, l') with l < l'.
double expected_kendall(const std::vector<int>& group_sizes,
                        const std::vector<double>& between_gaps,
                        const std::vector<double>& between_sds);

// Fraction of feature pairs that are within-group: sum C(m_l,2) / C(P,2).
double rashomon_coefficient(const std::vector<int>& group_sizes, int p);

// Curvature along the credit-swap direction of an equicorrelated pair.
struct FimAnalysis {
    double lambda_minus;       // (1-rho)/sigma^2
    double semi_axis;          // sigma * sqrt(2*epsilon/(1-rho))
    double cr_variance_scale;  // 2*sigma^2/(1-rho), per sample
};

FimAnalysis fim_analysis(double rho, double sigma, double epsilon);

// Coefficient of variation of phi_j / n_j over features with n_j > 0.
double proportionality_cv(const gbdt::Ensemble& ensemble,
                          const std::vector<double>& shap_global_values);

// Monte Carlo mean Spearman correlation between a fixed ranking of P items
// and uniformly random permutations. Exposed for inspection only; no
// invariant is asserted beyond the [-1, 1] range.
double spearman_vs_random_mc(int p, int reps, std::uint64_t seed);

// Report over every within-group pair of the detected groups.
struct DiagnosticReport {
    std::vector<PairDiagnostic> pairs;
    std::size_t n_pairs = 0;
    std::size_t n_unstable = 0;
    double pearson_r_between_z_and_flip = 0.0;  // over finite-Z pairs
};

DiagnosticReport diagnose_pairs(const attribution::AttributionMatrix& attr,
                                const CorrelationGroups& groups);

std::string report_to_json(const DiagnosticReport& report,
                           const std::vector<std::string>& names);
void report_to_csv(const DiagnosticReport& report, const std::vector<std::string>& names,
                   const std::string& path);

}  // namespace attrlab::stability

#endif
