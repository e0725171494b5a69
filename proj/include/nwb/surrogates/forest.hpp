#pragma once

// Random forest of multi-output CART trees. Splits maximize the variance
// reduction summed over all outputs; leaves store the mean target vector.

#include <cstdint>
#include <vector>

#include "nwb/matrix.hpp"

namespace nwb::surrogates {

struct ForestConfig {
  std::size_t trees = 100;
  std::size_t max_depth = 0;  // 0: unlimited
  std::size_t min_samples_leaf = 1;
  std::size_t max_features = 0;  // features tried per split, 0: all
  bool bootstrap = true;
  unsigned workers = 1;

  void validate() const;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 for leaves
  double threshold = 0.0;     // x <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
};

class RegressionTree {
 public:
  /// Grows a tree on the given rows (repeats allowed).
  static RegressionTree fit(const Matrix& x, const Matrix& y, const std::vector<Eigen::Index>& rows,
                            const ForestConfig& config, std::uint64_t seed);

  void predict_row(const double* x, double* out) const;
  Matrix predict(const Matrix& x) const;

  std::size_t outputs() const noexcept { return outputs_; }
  std::size_t depth() const;
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& values() const noexcept { return values_; }
  /// Rebuilds a tree from stored nodes and per-node values (nodes x outputs).
  static RegressionTree from_parts(std::vector<TreeNode> nodes, std::vector<double> values, std::size_t outputs);

 private:
  std::vector<TreeNode> nodes_;
  std::vector<double> values_;  // per node, row-major nodes x outputs
  std::size_t outputs_ = 0;
};

struct ForestModel {
  std::vector<RegressionTree> trees;

  /// Mean of the trees' predictions, accumulated in tree order.
  Matrix predict(const Matrix& x) const;
};

ForestModel fit_forest(const Matrix& x, const Matrix& y, const ForestConfig& config, std::uint64_t seed);

}  // namespace nwb::surrogates
