#ifndef ATTRLAB_SYNTHDATA_HPP
#define ATTRLAB_SYNTHDATA_HPP

#include <cstdint>
#include <vector>

#include "attrlab/common.hpp"
#include "attrlab/dataset.hpp"

namespace attrlab::synthdata {

// L equicorrelated groups of m features each. rho is the common pairwise
// correlation within a group; groups are mutually independent.
struct GroupSpec {
    int group_count = 1;   // L
    int group_size = 2;    // m
    double rho = 0.0;      // in (-1/(m-1), 1)

    int grouped_features() const { return group_count * group_size; }
    void validate() const;
};

struct DgpConfig {
    GroupSpec groups;
    int extras = 0;                  // independent N(0,1) features appended after the groups
    std::vector<double> betas;       // response weights; empty => 1 for group features, 0 for extras
    double noise_sd = 1.0;
    int n_samples = 1000;
    std::uint64_t seed = 0;

    int n_features() const { return groups.grouped_features() + extras; }
    // Resolves the default weights described above.
    std::vector<double> resolved_betas() const;
    void validate() const;
};

// Feature names ("g<group>f<index>", extras "u<index>") and group indices
// implied by a config, without sampling.
std::vector<std::string> feature_names(const DgpConfig& config);
std::vector<int> feature_groups(const DgpConfig& config);

// m x m matrix with unit diagonal and rho off-diagonal. Eigenvalues are
// 1+(m-1)rho (once) and 1-rho (m-1 times); rho outside the PSD-admissible
// range (-1/(m-1), 1) raises ParameterError.
Matrix equicorrelated_cov(int m, double rho);

// Lower-triangular Cholesky factor; throws ParameterError if not PD.
Matrix cholesky_factor(const Matrix& cov);

// Draws features block-by-block (per-group Cholesky applied to i.i.d.
// standard normals; groups independent) and the target
// y = sum_j beta_j x_j + N(0, noise_sd^2). Identical seeds give
// bit-identical output.
Dataset sample_dataset(const DgpConfig& config);

}  // namespace attrlab::synthdata

#endif
