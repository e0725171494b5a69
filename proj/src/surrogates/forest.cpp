#include "nwb/surrogates/forest.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "nwb/error.hpp"
#include "nwb/parallel.hpp"
#include "nwb/rng.hpp"

namespace nwb::surrogates {

void ForestConfig::validate() const {
  if (trees == 0) throw ValidationError("forest needs at least one tree", {"trees"});
  if (min_samples_leaf == 0) throw ValidationError("min_samples_leaf must be >= 1", {"min_samples_leaf"});
}

namespace {

struct Builder {
  const Matrix& x;
  const Matrix& y;
  const ForestConfig& config;
  rng::Engine eng;
  std::vector<TreeNode> nodes;
  std::vector<double> values;
  std::size_t n_out;

  std::int32_t grow(std::vector<Eigen::Index>& idx, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(nodes.size());
    nodes.emplace_back();
    const std::size_t m = idx.size();
    std::vector<double> total(n_out, 0.0);
    for (auto r : idx)
      for (std::size_t k = 0; k < n_out; ++k) total[k] += y(r, static_cast<Eigen::Index>(k));
    for (std::size_t k = 0; k < n_out; ++k) values.push_back(total[k] / static_cast<double>(m));

    const bool depth_ok = config.max_depth == 0 || depth < config.max_depth;
    if (!depth_ok || m < 2 * config.min_samples_leaf) return id;

    bool pure = true;
    for (std::size_t i = 1; i < m && pure; ++i)
      pure = (y.row(idx[i]).array() == y.row(idx[0]).array()).all();
    if (pure) return id;

    const auto p = static_cast<std::size_t>(x.cols());
    std::vector<std::size_t> features(p);
    std::iota(features.begin(), features.end(), std::size_t{0});
    if (config.max_features != 0 && config.max_features < p) {
      eng.shuffle(std::span(features));
      features.resize(config.max_features);
      std::sort(features.begin(), features.end());
    }

    double parent = 0.0;
    for (std::size_t k = 0; k < n_out; ++k) parent += total[k] * total[k] / static_cast<double>(m);
    double best = parent;
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;
    std::vector<Eigen::Index> order(idx);
    std::vector<double> left(n_out);
    for (auto f : features) {
      const auto fe = static_cast<Eigen::Index>(f);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a, fe) < x(b, fe); });
      std::fill(left.begin(), left.end(), 0.0);
      for (std::size_t q = 1; q < m; ++q) {
        for (std::size_t k = 0; k < n_out; ++k) left[k] += y(order[q - 1], static_cast<Eigen::Index>(k));
        const double lo = x(order[q - 1], fe), hi = x(order[q], fe);
        if (!(lo < hi)) continue;
        if (q < config.min_samples_leaf || m - q < config.min_samples_leaf) continue;
        double score = 0.0;
        const auto nl = static_cast<double>(q), nr = static_cast<double>(m - q);
        for (std::size_t k = 0; k < n_out; ++k) {
          const double r = total[k] - left[k];
          score += left[k] * left[k] / nl + r * r / nr;
        }
        if (score > best) {
          best = score;
          best_feature = static_cast<std::int32_t>(f);
          const double mid = lo + 0.5 * (hi - lo);
          best_threshold = mid < hi ? mid : lo;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<Eigen::Index> li, ri;
    for (auto r : idx) (x(r, best_feature) <= best_threshold ? li : ri).push_back(r);
    idx.clear();
    idx.shrink_to_fit();
    nodes[id].feature = best_feature;
    nodes[id].threshold = best_threshold;
    const std::int32_t l = grow(li, depth + 1);
    nodes[id].left = l;
    const std::int32_t r = grow(ri, depth + 1);
    nodes[id].right = r;
    return id;
  }
};

}  // namespace

RegressionTree RegressionTree::fit(const Matrix& x, const Matrix& y, const std::vector<Eigen::Index>& rows,
                                   const ForestConfig& config, std::uint64_t seed) {
  config.validate();
  if (rows.empty() || x.rows() != y.rows()) throw ValidationError("tree needs matching nonempty x and y", {"x"});
  Builder b{x, y, config, rng::Engine(seed), {}, {}, static_cast<std::size_t>(y.cols())};
  std::vector<Eigen::Index> idx(rows);
  b.grow(idx, 0);
  RegressionTree t;
  t.nodes_ = std::move(b.nodes);
  t.values_ = std::move(b.values);
  t.outputs_ = b.n_out;
  return t;
}

RegressionTree RegressionTree::from_parts(std::vector<TreeNode> nodes, std::vector<double> values,
                                          std::size_t outputs) {
  if (nodes.empty() || values.size() != nodes.size() * outputs)
    throw FormatError("tree node and value counts disagree");
  const auto n = static_cast<std::int32_t>(nodes.size());
  for (std::int32_t i = 0; i < n; ++i) {
    const auto& nd = nodes[static_cast<std::size_t>(i)];
    if (nd.feature >= 0 && (nd.left <= i || nd.right <= i || nd.left >= n || nd.right >= n))
      throw FormatError("tree node " + std::to_string(i) + " has invalid children");
  }
  RegressionTree t;
  t.nodes_ = std::move(nodes);
  t.values_ = std::move(values);
  t.outputs_ = outputs;
  return t;
}

void RegressionTree::predict_row(const double* x, double* out) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0)
    i = static_cast<std::size_t>(x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right);
  std::copy_n(values_.data() + i * outputs_, outputs_, out);
}

Matrix RegressionTree::predict(const Matrix& x) const {
  Matrix out(x.rows(), static_cast<Eigen::Index>(outputs_));
  for (Eigen::Index r = 0; r < x.rows(); ++r) predict_row(x.row(r).data(), out.row(r).data());
  return out;
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes_[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

Matrix ForestModel::predict(const Matrix& x) const {
  if (trees.empty()) throw ValidationError("forest has no trees", {"trees"});
  Matrix sum = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(trees.front().outputs()));
  for (const auto& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

ForestModel fit_forest(const Matrix& x, const Matrix& y, const ForestConfig& config, std::uint64_t seed) {
  config.validate();
  if (x.rows() == 0 || x.rows() != y.rows()) throw ValidationError("forest needs matching nonempty x and y", {"x"});
  ForestModel model;
  model.trees.resize(config.trees);
  parallel_for(config.trees, config.workers, [&](std::size_t t, unsigned) {
    const std::uint64_t s = rng::derive(seed, {0x7EE, t});
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
    if (config.bootstrap) {
      rng::Engine eng(rng::derive(s, {0xB0075}));
      for (auto& r : rows) r = static_cast<Eigen::Index>(eng.below(static_cast<std::uint64_t>(x.rows())));
    } else {
      std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    }
    model.trees[t] = RegressionTree::fit(x, y, rows, config, s);
  });
  return model;
}

}  // namespace nwb::surrogates
