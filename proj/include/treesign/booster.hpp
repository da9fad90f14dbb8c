#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "treesign/dataset.hpp"

namespace treesign {

enum class Criterion { logit, mart };

std::string to_string(Criterion c);
Criterion criterion_from_string(const std::string& name);

// Binary tree node. Internal nodes route "go left iff bin(x_d) <= threshold";
// leaves store the shrinkage-applied contribution added to the class score.
struct TreeNode {
  std::int32_t feature = -1;  // 0-based; -1 marks a leaf
  std::uint32_t threshold = 0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // root at index 0

  std::int32_t route(std::span<const std::uint32_t> bins) const;
  int leaf_count() const;
  std::vector<std::int32_t> leaf_ids() const;
};

// M x K regression trees plus the binning tables and hyperparameters they
// were trained with; trees[m][k] contributes to class k+1 at iteration m.
struct Ensemble {
  int num_classes = 0;
  int iterations = 0;
  int max_leaves = 0;
  double learning_rate = 0.1;
  double damping = 1e-6;
  Criterion criterion = Criterion::logit;
  std::uint64_t seed = 0;
  BinningMap bins;
  std::vector<std::vector<RegressionTree>> trees;
};

struct TrainConfig {
  int num_classes = 0;
  int iterations = 0;
  int max_leaves = 2;
  double learning_rate = 0.1;
  Criterion criterion = Criterion::logit;
  double damping = 1e-6;
  std::uint64_t seed = 0;
};

// Second-order split gain: squared residual sums over damped weight sums,
// summed for both sides, minus the parent term.
double split_gain_logit(double left_sum_r, double left_sum_w,
                        double total_sum_r, double total_sum_w,
                        double damping);

// First-order split gain over instance counts. Throws std::invalid_argument
// when either side would be empty.
double split_gain_mart(double left_sum_r, std::size_t left_count,
                       double total_sum_r, std::size_t total_count);

// Grows a regression tree best-first: always split the leaf whose best
// (feature, threshold) has the largest gain, until max_leaves leaves or no
// leaf has positive gain. Stored leaf values include the learning rate.
RegressionTree build_tree(std::span<const double> residuals,
                          std::span<const double> weights,
                          const BinnedDataset& data, int max_leaves,
                          Criterion criterion, double damping, int num_classes,
                          double learning_rate);

// LogitBoost/MART training loop. Per-iteration negative log-likelihood is
// appended to *loss_per_iter when given.
Ensemble train(const BinnedDataset& data, const TrainConfig& config,
               std::vector<double>* loss_per_iter = nullptr);

// Resumes boosting on an existing ensemble: scores are recomputed from the
// current trees, then extra_iterations more tree rows are appended. When
// loss_per_iter is given, the first entry is the loss before any new tree.
void continue_training(Ensemble& model, const BinnedDataset& data,
                       int extra_iterations,
                       std::vector<double>* loss_per_iter = nullptr);

// Score accumulation routes the instance through every tree in (m, k) order
// and sums the stored leaf values per class.
std::vector<double> predict_scores(const Ensemble& model,
                                   std::span<const double> raw);
std::vector<double> predict_scores_binned(const Ensemble& model,
                                          std::span<const std::uint32_t> bins);

// Softmax with max-subtraction.
std::vector<double> predict_proba(std::span<const double> scores);

// 1-based argmax class; ties break toward the smallest index.
int predict_class(const Ensemble& model, std::span<const double> raw);
int argmax_class(std::span<const double> scores);

std::vector<std::uint32_t> bin_instance(const BinningMap& map,
                                        std::span<const double> raw);
std::vector<double> dense_features(const Instance& inst, int num_features);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

Evaluation evaluate(const Ensemble& model, const RawDataset& data);

}  // namespace treesign
