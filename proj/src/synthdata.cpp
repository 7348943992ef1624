#include "attrlab/synthdata.hpp"

#include <cmath>
#include <string>

#include "attrlab/rng.hpp"

namespace attrlab::synthdata {

void GroupSpec::validate() const {
    if (group_count < 1) throw ParameterError("group_count must be >= 1");
    if (group_size < 1) throw ParameterError("group_size must be >= 1");
    if (group_size > 1) {
        const double lower = -1.0 / (group_size - 1);
        if (!(rho > lower && rho < 1.0))
            throw ParameterError("rho must be in (" + std::to_string(lower) +
                                 ", 1) for group size " + std::to_string(group_size));
    }
}

std::vector<double> DgpConfig::resolved_betas() const {
    if (!betas.empty()) return betas;
    std::vector<double> out(static_cast<std::size_t>(n_features()), 0.0);
    for (int j = 0; j < groups.grouped_features(); ++j) out[j] = 1.0;
    return out;
}

void DgpConfig::validate() const {
    groups.validate();
    if (extras < 0) throw ParameterError("extras must be >= 0");
    if (n_samples < 2) throw ParameterError("n_samples must be >= 2");
    if (noise_sd < 0.0) throw ParameterError("noise_sd must be >= 0");
    if (!betas.empty() && betas.size() != static_cast<std::size_t>(n_features()))
        throw ParameterError("betas length must equal feature count " +
                             std::to_string(n_features()));
}

std::vector<std::string> feature_names(const DgpConfig& config) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(config.n_features()));
    for (int g = 0; g < config.groups.group_count; ++g)
        for (int i = 0; i < config.groups.group_size; ++i)
            names.push_back("g" + std::to_string(g) + "f" + std::to_string(i));
    for (int e = 0; e < config.extras; ++e) names.push_back("u" + std::to_string(e));
    return names;
}

std::vector<int> feature_groups(const DgpConfig& config) {
    std::vector<int> groups;
    groups.reserve(static_cast<std::size_t>(config.n_features()));
    for (int g = 0; g < config.groups.group_count; ++g)
        for (int i = 0; i < config.groups.group_size; ++i) groups.push_back(g);
    for (int e = 0; e < config.extras; ++e) groups.push_back(-1);
    return groups;
}

Matrix equicorrelated_cov(int m, double rho) {
    if (m < 1) throw ParameterError("equicorrelated_cov: m must be >= 1");
    if (m == 1) return Matrix(1, 1, 1.0);
    GroupSpec probe{1, m, rho};
    probe.validate();
    Matrix cov(m, m, rho);
    for (int i = 0; i < m; ++i) cov(i, i) = 1.0;
    return cov;
}

Matrix cholesky_factor(const Matrix& cov) {
    const std::size_t m = cov.rows();
    if (m != cov.cols()) throw ParameterError("cholesky_factor: matrix must be square");
    Matrix lower(m, m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = cov(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
            if (i == j) {
                if (s <= 0.0)
                    throw ParameterError("cholesky_factor: matrix is not positive definite");
                lower(i, i) = std::sqrt(s);
            } else {
                lower(i, j) = s / lower(j, j);
            }
        }
    }
    return lower;
}

Dataset sample_dataset(const DgpConfig& config) {
    config.validate();
    const int n = config.n_samples;
    const int m = config.groups.group_size;
    const int n_groups = config.groups.group_count;
    const int p = config.n_features();
    const std::vector<double> betas = config.resolved_betas();
    const Matrix lower = cholesky_factor(equicorrelated_cov(m, config.groups.rho));

    Dataset out;
    out.features = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(p));
    out.target.assign(static_cast<std::size_t>(n), 0.0);
    out.names = feature_names(config);
    out.group_of = feature_groups(config);

    Rng rng(config.seed);
    std::vector<double> iid(static_cast<std::size_t>(m));
    for (int r = 0; r < n; ++r) {
        auto row = out.features.row(static_cast<std::size_t>(r));
        for (int g = 0; g < n_groups; ++g) {
            for (int i = 0; i < m; ++i) iid[static_cast<std::size_t>(i)] = rng.next_normal();
            for (int i = 0; i < m; ++i) {
                double v = 0.0;
                for (int k = 0; k <= i; ++k)
                    v += lower(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) *
                         iid[static_cast<std::size_t>(k)];
                row[static_cast<std::size_t>(g * m + i)] = v;
            }
        }
        for (int e = 0; e < config.extras; ++e)
            row[static_cast<std::size_t>(n_groups * m + e)] = rng.next_normal();
        double y = 0.0;
        for (int j = 0; j < p; ++j)
            y += betas[static_cast<std::size_t>(j)] * row[static_cast<std::size_t>(j)];
        if (config.noise_sd > 0.0) y += config.noise_sd * rng.next_normal();
        out.target[static_cast<std::size_t>(r)] = y;
    }
    out.validate();
    return out;
}

}  // namespace attrlab::synthdata
