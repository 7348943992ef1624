#ifndef ATTRLAB_DATASET_HPP
#define ATTRLAB_DATASET_HPP

#include <string>
#include <vector>

#include "attrlab/common.hpp"

namespace attrlab::synthdata {

// A feature matrix with target and optional group metadata. group_of[j] is
// the collinear-group index of feature j, or -1 for an independent feature.
struct Dataset {
    Matrix features;                  // n x P
    std::vector<double> target;       // length n
    std::vector<std::string> names;   // length P
    std::vector<int> group_of;        // length P; empty when unknown (CSV load)

    std::size_t n_rows() const { return features.rows(); }
    std::size_t n_features() const { return features.cols(); }

    // Row-subset view materialized as a new dataset (keeps metadata).
    Dataset select_rows(const std::vector<std::size_t>& rows) const;

    void validate() const;  // finite entries, consistent shapes
};

// RFC-4180-style CSV with a header row, '.' decimal separator, UTF-8.
// The target column is selected by name or by zero-based index and removed
// from the feature matrix. Non-numeric cells raise ParseError with the
// 1-based row and column of the offending cell.
Dataset load_csv(const std::string& path, const std::string& target_column);
Dataset load_csv(const std::string& path, std::size_t target_index);

// Writes features plus a final "target" column. Values are printed with 17
// significant digits so a round-trip is lossless.
void save_csv(const Dataset& dataset, const std::string& path,
              const std::string& target_name = "target");

}  // namespace attrlab::synthdata

#endif
