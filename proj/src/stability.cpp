#include "attrlab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "attrlab/rng.hpp"
#include "attrlab/stats.hpp"

namespace attrlab::stability {

namespace {

constexpr double kZThreshold = 1.96;

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void merge(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

std::vector<int> CorrelationGroups::group_of(std::size_t n_features) const {
    std::vector<int> out(n_features, -1);
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (int j : groups[g]) out[static_cast<std::size_t>(j)] = static_cast<int>(g);
    return out;
}

CorrelationGroups correlate_groups(const Matrix& features, double threshold) {
    if (features.rows() < 2) throw ParameterError("correlate_groups: need at least 2 rows");
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ParameterError("correlate_groups: threshold must be in (0, 1]");
    const std::size_t p = features.cols();

    CorrelationGroups out;
    out.threshold = threshold;

    std::vector<std::vector<double>> cols(p);
    std::vector<bool> zero_variance(p, false);
    for (std::size_t j = 0; j < p; ++j) {
        cols[j] = features.col(j);
        double first = cols[j].empty() ? 0.0 : cols[j][0];
        zero_variance[j] =
            std::all_of(cols[j].begin(), cols[j].end(), [&](double v) { return v == first; });
        if (zero_variance[j]) out.flagged_zero_variance.push_back(static_cast<int>(j));
    }

    UnionFind uf(p);
    for (std::size_t j = 0; j < p; ++j) {
        if (zero_variance[j]) continue;
        for (std::size_t k = j + 1; k < p; ++k) {
            if (zero_variance[k]) continue;
            if (std::abs(pearson(cols[j], cols[k])) > threshold) uf.merge(j, k);
        }
    }

    std::vector<std::vector<int>> buckets(p);
    for (std::size_t j = 0; j < p; ++j)
        if (!zero_variance[j]) buckets[uf.find(j)].push_back(static_cast<int>(j));
    for (auto& bucket : buckets) {
        if (bucket.size() >= 2) {
            std::sort(bucket.begin(), bucket.end());
            out.groups.push_back(std::move(bucket));
        } else if (bucket.size() == 1) {
            out.singletons.push_back(bucket[0]);
        }
    }
    std::sort(out.groups.begin(), out.groups.end());
    std::sort(out.singletons.begin(), out.singletons.end());
    return out;
}

std::string verdict_name(Verdict verdict) {
    switch (verdict) {
        case Verdict::stable: return "stable";
        case Verdict::unstable: return "unstable";
        case Verdict::degenerate: return "degenerate";
    }
    return "stable";
}

namespace {

void check_pair(const attribution::AttributionMatrix& attr, int j, int k) {
    const int p = static_cast<int>(attr.n_features());
    if (j < 0 || k < 0 || j >= p || k >= p || j == k)
        throw ParameterError("invalid feature pair");
}

std::pair<long, long> direction_counts(const attribution::AttributionMatrix& attr, int j, int k) {
    long cj = 0, ck = 0;
    for (std::size_t i = 0; i < attr.n_models(); ++i) {
        const double a = attr.values(i, static_cast<std::size_t>(j));
        const double b = attr.values(i, static_cast<std::size_t>(k));
        if (a > b)
            ++cj;
        else if (b > a)
            ++ck;
    }
    return {cj, ck};
}

}  // namespace

double empirical_flip_rate(const attribution::AttributionMatrix& attr, int j, int k) {
    check_pair(attr, j, k);
    if (attr.n_models() < 2) throw ParameterError("empirical_flip_rate: need M >= 2");
    const auto [cj, ck] = direction_counts(attr, j, k);
    return static_cast<double>(std::min(cj, ck)) / static_cast<double>(attr.n_models());
}

double pairwise_flip_rate(const attribution::AttributionMatrix& attr, int j, int k) {
    check_pair(attr, j, k);
    const long m = static_cast<long>(attr.n_models());
    if (m < 2) throw ParameterError("pairwise_flip_rate: need M >= 2");
    const auto [cj, ck] = direction_counts(attr, j, k);
    return 2.0 * static_cast<double>(cj) * static_cast<double>(ck) /
           (static_cast<double>(m) * static_cast<double>(m - 1));
}

PairDiagnostic z_test(const attribution::AttributionMatrix& attr, int j, int k) {
    check_pair(attr, j, k);
    const std::size_t m = attr.n_models();
    if (m < 2) throw ParameterError("z_test: need M >= 2");

    std::vector<double> diff(m);
    for (std::size_t i = 0; i < m; ++i)
        diff[i] = attr.values(i, static_cast<std::size_t>(j)) -
                  attr.values(i, static_cast<std::size_t>(k));
    const double mu = mean(diff);
    const double sd = sample_sd(diff);

    PairDiagnostic d;
    d.j = j;
    d.k = k;
    d.mean_gap = std::abs(mu);
    d.noise_sd = sd;
    d.flip_empirical = empirical_flip_rate(attr, j, k);
    if (sd > 0.0) {
        d.snr = d.mean_gap / sd;
        d.z = d.snr * std::sqrt(static_cast<double>(m));
        d.flip_predicted = normal_cdf(-d.snr);
        d.verdict = d.z < kZThreshold ? Verdict::unstable : Verdict::stable;
    } else if (d.mean_gap > 0.0) {
        d.snr = std::numeric_limits<double>::infinity();
        d.z = std::numeric_limits<double>::infinity();
        d.flip_predicted = 0.0;
        d.verdict = Verdict::stable;
    } else {
        d.snr = 0.0;
        d.z = 0.0;
        d.flip_predicted = 0.5;
        d.verdict = Verdict::degenerate;
    }
    return d;
}

ScreenResult screen(const gbdt::Ensemble& ensemble, int j, int k) {
    const bool subsampled = ensemble.config.subsample < 1.0 || ensemble.config.colsample < 1.0;
    return screen(ensemble, j, k, ensemble.config.learning_rate, subsampled);
}

ScreenResult screen(const gbdt::Ensemble& ensemble, int j, int k, double eta, bool subsampled) {
    const int p = ensemble.n_features;
    if (j < 0 || k < 0 || j >= p || k >= p || j == k)
        throw ParameterError("screen: invalid feature pair");
    const int t = static_cast<int>(ensemble.trees.size());
    if (t < 10) throw ParameterError("screen: need an ensemble with at least 10 trees");
    if (!(eta > 0.0)) throw ParameterError("screen: eta must be positive");

    // A tree counts once per feature no matter how many nodes split on it.
    std::vector<char> uses_j(static_cast<std::size_t>(t), 0);
    std::vector<char> uses_k(static_cast<std::size_t>(t), 0);
    for (const gbdt::SplitRecord& rec : ensemble.split_log) {
        if (rec.feature == j) uses_j[static_cast<std::size_t>(rec.tree)] = 1;
        if (rec.feature == k) uses_k[static_cast<std::size_t>(rec.tree)] = 1;
    }
    ScreenResult res;
    res.j = j;
    res.k = k;
    long nj = 0, nk = 0;
    for (int i = 0; i < t; ++i) {
        nj += uses_j[static_cast<std::size_t>(i)];
        nk += uses_k[static_cast<std::size_t>(i)];
    }
    res.p_hat_j = static_cast<double>(nj) / static_cast<double>(t);
    res.p_hat_k = static_cast<double>(nk) / static_cast<double>(t);

    if (subsampled) {
        res.t_eff = static_cast<double>(t);
    } else {
        const double t0 = std::ceil(1.0 / eta);
        res.t_eff = (static_cast<double>(t) - t0) * (1.0 - eta) / (1.0 + eta);
        res.t_eff = std::min(std::max(res.t_eff, 1.0), static_cast<double>(t));
    }

    const double spread = res.p_hat_j * (1.0 - res.p_hat_j) + res.p_hat_k * (1.0 - res.p_hat_k);
    if (spread <= 0.0) {
        // Both frequencies pinned at 0 or 1: no evidence either way.
        res.z_split = 0.0;
        res.flagged = true;
        return res;
    }
    res.z_split = std::abs(res.p_hat_j - res.p_hat_k) / std::sqrt(spread / res.t_eff);
    res.flagged = res.z_split < kZThreshold;
    return res;
}

double flip_from_snr(double snr) {
    if (snr < 0.0) throw ParameterError("flip_from_snr: snr must be >= 0");
    return normal_cdf(-snr);
}

double berry_esseen_bound(double gamma, double sigma) {
    if (!(sigma > 0.0)) throw ParameterError("berry_esseen_bound: sigma must be positive");
    if (gamma < 0.0) throw ParameterError("berry_esseen_bound: gamma must be >= 0");
    return 0.4748 * gamma / (sigma * sigma * sigma);
}

int min_ensemble_size(double sigma, double delta_gap, double delta_risk) {
    if (!(sigma > 0.0)) throw ParameterError("min_ensemble_size: sigma must be positive");
    if (!(delta_gap > 0.0))
        throw ParameterError("min_ensemble_size: symmetric pair: no finite ensemble separates");
    if (!(delta_risk > 0.0 && delta_risk < 0.5))
        throw ParameterError("min_ensemble_size: delta_risk must be in (0, 0.5)");
    const double quantile = normal_quantile(1.0 - delta_risk);
    const double ratio = sigma / delta_gap;
    const double bound = ratio * ratio * quantile * quantile;
    return std::max(1, static_cast<int>(std::ceil(bound)));
}

double query_lower_bound(double sigma, double delta0) {
    if (!(sigma > 0.0)) throw ParameterError("query_lower_bound: sigma must be positive");
    if (!(delta0 > 0.0)) throw ParameterError("query_lower_bound: delta0 must be positive");
    return sigma * sigma / (8.0 * delta0 * delta0);
}

double theoretical_ratio(double rho, double alpha) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ParameterError("theoretical_ratio: rho must be in [0, 1)");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ParameterError("theoretical_ratio: alpha must be in [0, 1]");
    const double denom = 1.0 - alpha * rho * rho;
    if (denom <= 0.0) throw ParameterError("theoretical_ratio: alpha*rho^2 >= 1 diverges");
    return 1.0 / denom;
}

double split_gap(double rho, double T) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ParameterError("split_gap: rho must be in [0, 1)");
    if (!(T > 0.0)) throw ParameterError("split_gap: T must be positive");
    return rho * rho * T / (2.0 - rho * rho);
}

ExactFlipModel exact_flip_model(int m) {
    if (m < 2) throw ParameterError("exact_flip_model: m must be >= 2");
    const double md = static_cast<double>(m);
    return ExactFlipModel{1.0 / md, (md - 2.0) / md, 2.0 / (md * md), 0.5};
}

double spearman_bound(int p, int m) {
    if (p < 2) throw ParameterError("spearman_bound: P must be >= 2");
    if (m < 2 || m > p) throw ParameterError("spearman_bound: need 2 <= m <= P");
    const double pd = static_cast<double>(p);
    return 1.0 - 3.0 * static_cast<double>(m) * static_cast<double>(m) / (pd * pd * pd - pd);
}

double expected_kendall(const std::vector<int>& group_sizes,
                        const std::vector<double>& between_gaps,
                        const std::vector<double>& between_sds) {
    if (group_sizes.empty()) throw ParameterError("expected_kendall: no groups");
    const std::size_t n_groups = group_sizes.size();
    const std::size_t n_pairs = n_groups * (n_groups - 1) / 2;
    if (between_gaps.size() != n_pairs || between_sds.size() != n_pairs)
        throw ParameterError("expected_kendall: need one gap/sd per group pair");
    double total = 0.0;
    for (int m : group_sizes) {
        if (m < 1) throw ParameterError("expected_kendall: group sizes must be positive");
        total += choose2(static_cast<double>(m)) * 0.5;
    }
    std::size_t idx = 0;
    for (std::size_t a = 0; a < n_groups; ++a)
        for (std::size_t b = a + 1; b < n_groups; ++b, ++idx) {
            if (!(between_sds[idx] > 0.0))
                throw ParameterError("expected_kendall: between sds must be positive");
            total += static_cast<double>(group_sizes[a]) * static_cast<double>(group_sizes[b]) *
                     normal_cdf(-between_gaps[idx] / between_sds[idx]);
        }
    return total;
}

double rashomon_coefficient(const std::vector<int>& group_sizes, int p) {
    if (p < 2) throw ParameterError("rashomon_coefficient: P must be >= 2");
    int covered = 0;
    double within = 0.0;
    for (int m : group_sizes) {
        if (m < 2) throw ParameterError("rashomon_coefficient: group sizes must be >= 2");
        covered += m;
        within += choose2(static_cast<double>(m));
    }
    if (covered > p) throw ParameterError("rashomon_coefficient: group sizes exceed P");
    return within / choose2(static_cast<double>(p));
}

FimAnalysis fim_analysis(double rho, double sigma, double epsilon) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ParameterError("fim_analysis: rho must be in [0, 1)");
    if (!(sigma > 0.0)) throw ParameterError("fim_analysis: sigma must be positive");
    if (!(epsilon > 0.0)) throw ParameterError("fim_analysis: epsilon must be positive");
    FimAnalysis out;
    out.lambda_minus = (1.0 - rho) / (sigma * sigma);
    out.semi_axis = sigma * std::sqrt(2.0 * epsilon / (1.0 - rho));
    out.cr_variance_scale = 2.0 * sigma * sigma / (1.0 - rho);
    return out;
}

double proportionality_cv(const gbdt::Ensemble& ensemble,
                          const std::vector<double>& shap_global_values) {
    if (shap_global_values.size() != static_cast<std::size_t>(ensemble.n_features))
        throw ParameterError("proportionality_cv: attribution length mismatch");
    const std::vector<int> counts = gbdt::split_counts(ensemble);
    std::vector<double> ratios;
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (counts[j] > 0) ratios.push_back(shap_global_values[j] / counts[j]);
    if (ratios.size() < 2)
        throw ParameterError("proportionality_cv: need at least 2 features with splits");
    const double m = mean(ratios);
    if (m == 0.0) return 0.0;
    return sample_sd(ratios) / m;
}

double spearman_vs_random_mc(int p, int reps, std::uint64_t seed) {
    if (p < 2) throw ParameterError("spearman_vs_random_mc: P must be >= 2");
    if (reps < 1) throw ParameterError("spearman_vs_random_mc: reps must be >= 1");
    Rng rng(seed);
    std::vector<int> perm(static_cast<std::size_t>(p));
    const double pd = static_cast<double>(p);
    double total = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
        std::iota(perm.begin(), perm.end(), 0);
        shuffle(perm, rng);
        double d2 = 0.0;
        for (int i = 0; i < p; ++i) {
            const double d = static_cast<double>(i - perm[static_cast<std::size_t>(i)]);
            d2 += d * d;
        }
        total += 1.0 - 6.0 * d2 / (pd * (pd * pd - 1.0));
    }
    return total / reps;
}

DiagnosticReport diagnose_pairs(const attribution::AttributionMatrix& attr,
                                const CorrelationGroups& groups) {
    DiagnosticReport report;
    for (const auto& group : groups.groups)
        for (std::size_t a = 0; a < group.size(); ++a)
            for (std::size_t b = a + 1; b < group.size(); ++b)
                report.pairs.push_back(z_test(attr, group[a], group[b]));
    report.n_pairs = report.pairs.size();
    for (const PairDiagnostic& d : report.pairs)
        if (d.verdict == Verdict::unstable || d.verdict == Verdict::degenerate)
            ++report.n_unstable;

    std::vector<double> zs, flips;
    for (const PairDiagnostic& d : report.pairs) {
        if (!std::isfinite(d.z)) continue;
        zs.push_back(d.z);
        flips.push_back(d.flip_empirical);
    }
    report.pearson_r_between_z_and_flip = zs.size() >= 2 ? pearson(zs, flips) : 0.0;
    return report;
}

std::string report_to_json(const DiagnosticReport& report,
                           const std::vector<std::string>& names) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const PairDiagnostic& d : report.pairs) {
        pairs.push_back(
            {{"j", d.j},
             {"k", d.k},
             {"feature_j", names[static_cast<std::size_t>(d.j)]},
             {"feature_k", names[static_cast<std::size_t>(d.k)]},
             {"mean_gap", d.mean_gap},
             {"noise_sd", d.noise_sd},
             {"z", std::isfinite(d.z) ? nlohmann::json(d.z) : nlohmann::json("inf")},
             {"snr", std::isfinite(d.snr) ? nlohmann::json(d.snr) : nlohmann::json("inf")},
             {"flip_empirical", d.flip_empirical},
             {"flip_predicted", d.flip_predicted},
             {"verdict", verdict_name(d.verdict)}});
    }
    nlohmann::json doc{{"pairs", std::move(pairs)},
                       {"summary",
                        {{"n_pairs", report.n_pairs},
                         {"n_unstable", report.n_unstable},
                         {"pearson_r_between_z_and_flip", report.pearson_r_between_z_and_flip}}}};
    return doc.dump(2);
}

void report_to_csv(const DiagnosticReport& report, const std::vector<std::string>& names,
                   const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "j,k,feature_j,feature_k,mean_gap,noise_sd,z,snr,flip_empirical,flip_predicted,"
           "verdict\n";
    for (const PairDiagnostic& d : report.pairs) {
        out << d.j << ',' << d.k << ',' << names[static_cast<std::size_t>(d.j)] << ','
            << names[static_cast<std::size_t>(d.k)] << ',' << d.mean_gap << ',' << d.noise_sd
            << ',' << d.z << ',' << d.snr << ',' << d.flip_empirical << ',' << d.flip_predicted
            << ',' << verdict_name(d.verdict) << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace attrlab::stability
