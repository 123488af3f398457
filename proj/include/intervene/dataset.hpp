#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace intervene {

// Tabular sample: n rows of d covariates plus one outcome per row.
// All entries are finite; loaders and constructors enforce this.
struct Dataset {
  Eigen::MatrixXd covariates;            // n x d
  Eigen::VectorXd outcomes;              // n
  std::vector<std::string> column_names; // d covariate names
  std::string outcome_name;

  Eigen::Index rows() const { return covariates.rows(); }
  Eigen::Index dim() const { return covariates.cols(); }

  void validate() const;  // throws std::invalid_argument on shape/NaN issues
};

// Per-column affine transform captured by standardize(): column order is the
// d covariates followed by the outcome.
struct ScalingInfo {
  Eigen::VectorXd means;   // d + 1
  Eigen::VectorXd scales;  // d + 1, strictly positive
  std::vector<std::string> columns;  // d + 1 names

  nlohmann::json to_json() const;
  static ScalingInfo from_json(const nlohmann::json& j);
};

// Reads a CSV file with one header row; every other row must hold one finite
// number per column.  The named outcome column becomes `outcomes`, the rest
// keep file order as covariates.  Errors carry the offending row / column.
Dataset load_dataset(const std::string& path, const std::string& outcome_column);

// Centers each column and divides by its sample standard deviation
// (n - 1 denominator).  A constant column is an error naming that column.
std::pair<Dataset, ScalingInfo> standardize(const Dataset& data);

// Inverse of standardize(): x * scale + mean per column.
Dataset unstandardize(const Dataset& data, const ScalingInfo& scaling);

void save_csv(const Dataset& data, const std::string& path);

// 64-bit FNV-1a over the raw covariate/outcome bytes; ties a serialized model
// to the exact training table.
std::uint64_t dataset_checksum(const Dataset& data);

}  // namespace intervene
