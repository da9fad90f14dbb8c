#include "treesign/booster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace treesign {

std::string to_string(Criterion c) {
  return c == Criterion::logit ? "logit" : "mart";
}

Criterion criterion_from_string(const std::string& name) {
  if (name == "logit") return Criterion::logit;
  if (name == "mart") return Criterion::mart;
  throw std::invalid_argument("unknown criterion: " + name);
}

std::int32_t RegressionTree::route(std::span<const std::uint32_t> bins) const {
  std::int32_t node = 0;
  while (!nodes[node].is_leaf()) {
    const TreeNode& n = nodes[node];
    node = bins[n.feature] <= n.threshold ? n.left : n.right;
  }
  return node;
}

int RegressionTree::leaf_count() const {
  int count = 0;
  for (const TreeNode& n : nodes) count += n.is_leaf() ? 1 : 0;
  return count;
}

std::vector<std::int32_t> RegressionTree::leaf_ids() const {
  std::vector<std::int32_t> ids;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) ids.push_back(static_cast<std::int32_t>(i));
  }
  return ids;
}

double split_gain_logit(double left_sum_r, double left_sum_w,
                        double total_sum_r, double total_sum_w,
                        double damping) {
  const double right_sum_r = total_sum_r - left_sum_r;
  const double right_sum_w = total_sum_w - left_sum_w;
  return left_sum_r * left_sum_r / (left_sum_w + damping) +
         right_sum_r * right_sum_r / (right_sum_w + damping) -
         total_sum_r * total_sum_r / (total_sum_w + damping);
}

double split_gain_mart(double left_sum_r, std::size_t left_count,
                       double total_sum_r, std::size_t total_count) {
  if (left_count == 0 || left_count >= total_count) {
    throw std::invalid_argument("infeasible split: both sides need instances");
  }
  const double right_sum_r = total_sum_r - left_sum_r;
  const double s = static_cast<double>(left_count);
  const double n = static_cast<double>(total_count);
  return left_sum_r * left_sum_r / s + right_sum_r * right_sum_r / (n - s) -
         total_sum_r * total_sum_r / n;
}

namespace {

struct BestSplit {
  double gain = 0.0;
  int feature = -1;
  std::uint32_t threshold = 0;
  bool valid() const { return feature >= 0; }
};

struct HistEntry {
  double sum_r = 0.0;
  double sum_w = 0.0;
  std::size_t count = 0;
};

// Argmax over all (feature, threshold) pairs for one leaf; ties break toward
// the smallest feature id, then the smallest threshold.
BestSplit find_best_split(std::span<const std::uint32_t> rows,
                          std::span<const double> residuals,
                          std::span<const double> weights,
                          const BinnedDataset& data, Criterion criterion,
                          double damping, double total_r, double total_w) {
  BestSplit best;
  const std::size_t total_count = rows.size();
  if (total_count < 2) return best;

  std::vector<HistEntry> hist;
  for (int d = 0; d < data.num_features; ++d) {
    const std::uint32_t bins = data.map.bin_count(d);
    if (bins < 2) continue;
    hist.assign(bins, HistEntry{});
    for (std::uint32_t i : rows) {
      HistEntry& h = hist[data.at(i, d)];
      h.sum_r += residuals[i];
      if (criterion == Criterion::logit) h.sum_w += weights[i];
      ++h.count;
    }
    double left_r = 0.0;
    double left_w = 0.0;
    std::size_t left_count = 0;
    for (std::uint32_t t = 0; t + 1 < bins; ++t) {
      if (hist[t].count == 0) continue;
      left_r += hist[t].sum_r;
      left_w += hist[t].sum_w;
      left_count += hist[t].count;
      if (left_count == total_count) break;
      const double gain =
          criterion == Criterion::logit
              ? split_gain_logit(left_r, left_w, total_r, total_w, damping)
              : split_gain_mart(left_r, left_count, total_r, total_count);
      if (gain > best.gain) {
        best.gain = gain;
        best.feature = d;
        best.threshold = t;
      }
    }
  }
  return best;
}

struct PendingSplit {
  double gain;
  std::int32_t node;
  int feature;
  std::uint32_t threshold;
};

struct PendingOrder {
  bool operator()(const PendingSplit& a, const PendingSplit& b) const {
    if (a.gain != b.gain) return a.gain < b.gain;
    return a.node > b.node;  // equal gains: expand the older leaf first
  }
};

}  // namespace

RegressionTree build_tree(std::span<const double> residuals,
                          std::span<const double> weights,
                          const BinnedDataset& data, int max_leaves,
                          Criterion criterion, double damping, int num_classes,
                          double learning_rate) {
  const std::size_t N = data.size();
  if (N == 0) throw std::runtime_error("cannot build a tree on empty data");
  if (max_leaves < 2) throw std::invalid_argument("max_leaves must be >= 2");
  if (criterion == Criterion::logit && weights.size() != N) {
    throw std::invalid_argument("logit trees need one weight per instance");
  }

  RegressionTree tree;
  std::vector<std::vector<std::uint32_t>> rows_of_node;

  auto leaf_value = [&](double sum_r, double sum_w, std::size_t count) {
    if (criterion == Criterion::logit) {
      const double k = static_cast<double>(num_classes);
      return learning_rate * ((k - 1.0) / k) * sum_r / (damping + sum_w);
    }
    return learning_rate * sum_r / static_cast<double>(count);
  };

  auto make_leaf = [&](std::vector<std::uint32_t> rows, double sum_r,
                       double sum_w) -> std::int32_t {
    TreeNode node;
    node.value = leaf_value(sum_r, sum_w, rows.size());
    tree.nodes.push_back(node);
    rows_of_node.push_back(std::move(rows));
    return static_cast<std::int32_t>(tree.nodes.size() - 1);
  };

  std::vector<std::uint32_t> all(N);
  for (std::size_t i = 0; i < N; ++i) all[i] = static_cast<std::uint32_t>(i);
  double root_r = 0.0;
  double root_w = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    root_r += residuals[i];
    root_w += weights.empty() ? 0.0 : weights[i];
  }

  std::priority_queue<PendingSplit, std::vector<PendingSplit>, PendingOrder>
      frontier;
  std::vector<std::pair<double, double>> totals_of_node;  // (sum_r, sum_w)

  auto consider = [&](std::int32_t node) {
    const auto [sum_r, sum_w] = totals_of_node[node];
    const BestSplit split =
        find_best_split(rows_of_node[node], residuals, weights, data,
                        criterion, damping, sum_r, sum_w);
    if (split.valid() && split.gain > 0.0) {
      frontier.push({split.gain, node, split.feature, split.threshold});
    }
  };

  make_leaf(std::move(all), root_r, root_w);
  totals_of_node.emplace_back(root_r, root_w);
  consider(0);

  int leaves = 1;
  while (leaves < max_leaves && !frontier.empty()) {
    const PendingSplit top = frontier.top();
    frontier.pop();

    std::vector<std::uint32_t> left_rows;
    std::vector<std::uint32_t> right_rows;
    double left_r = 0.0;
    double left_w = 0.0;
    for (std::uint32_t i : rows_of_node[top.node]) {
      if (data.at(i, top.feature) <= top.threshold) {
        left_rows.push_back(i);
        left_r += residuals[i];
        left_w += weights.empty() ? 0.0 : weights[i];
      } else {
        right_rows.push_back(i);
      }
    }
    const auto [node_r, node_w] = totals_of_node[top.node];

    rows_of_node[top.node].clear();
    const std::int32_t left = make_leaf(std::move(left_rows), left_r, left_w);
    totals_of_node.emplace_back(left_r, left_w);
    const std::int32_t right =
        make_leaf(std::move(right_rows), node_r - left_r, node_w - left_w);
    totals_of_node.emplace_back(node_r - left_r, node_w - left_w);

    TreeNode& parent = tree.nodes[top.node];
    parent.feature = top.feature;
    parent.threshold = top.threshold;
    parent.left = left;
    parent.right = right;
    parent.value = 0.0;
    ++leaves;

    consider(left);
    consider(right);
  }
  return tree;
}

namespace {

void softmax_row(std::span<const double> scores, std::span<double> out) {
  double max_score = scores[0];
  for (double s : scores) max_score = std::max(max_score, s);
  double sum = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    out[k] = std::exp(scores[k] - max_score);
    sum += out[k];
  }
  for (std::size_t k = 0; k < scores.size(); ++k) out[k] /= sum;
}

// Shared boosting loop; F and p carry the running state across rounds.
void boost_rounds(Ensemble& model, const BinnedDataset& data, int rounds,
                  std::vector<double>& F, std::vector<double>& p,
                  std::vector<double>* loss_per_iter) {
  const std::size_t N = data.size();
  const int K = model.num_classes;
  const int D = data.num_features;
  std::vector<double> residuals(N);
  std::vector<double> weights(N);

  for (int round = 0; round < rounds; ++round) {
    std::vector<RegressionTree> row;
    row.reserve(K);
    for (int k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < N; ++i) {
        const double pik = p[i * K + k];
        residuals[i] = (data.labels[i] == k + 1 ? 1.0 : 0.0) - pik;
        weights[i] = pik * (1.0 - pik);
      }
      RegressionTree tree = build_tree(
          residuals, weights, data, model.max_leaves, model.criterion,
          model.damping, K, model.learning_rate);
      for (std::size_t i = 0; i < N; ++i) {
        std::span<const std::uint32_t> bins(
            data.bins.data() + i * static_cast<std::size_t>(D),
            static_cast<std::size_t>(D));
        F[i * K + k] += tree.nodes[tree.route(bins)].value;
      }
      row.push_back(std::move(tree));
    }
    model.trees.push_back(std::move(row));
    ++model.iterations;

    double loss = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      std::span<const double> fi(F.data() + i * K, K);
      std::span<double> pi(p.data() + i * K, K);
      softmax_row(fi, pi);
      loss -= std::log(pi[data.labels[i] - 1]);
    }
    if (!std::isfinite(loss)) {
      throw std::runtime_error(
          "training loss became non-finite at iteration " +
          std::to_string(model.iterations));
    }
    if (loss_per_iter) loss_per_iter->push_back(loss);
  }
}

void check_labels(const BinnedDataset& data, int num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("need at least 2 classes");
  }
  std::vector<std::size_t> counts(num_classes, 0);
  for (int label : data.labels) {
    if (label < 1 || label > num_classes) {
      throw std::runtime_error("label " + std::to_string(label) +
                               " outside 1.." + std::to_string(num_classes));
    }
    ++counts[label - 1];
  }
  for (int k = 0; k < num_classes; ++k) {
    if (counts[k] == 0) {
      throw std::runtime_error("class " + std::to_string(k + 1) +
                               " absent from training data");
    }
  }
}

}  // namespace

Ensemble train(const BinnedDataset& data, const TrainConfig& config,
               std::vector<double>* loss_per_iter) {
  if (data.size() == 0) throw std::runtime_error("empty training data");
  check_labels(data, config.num_classes);
  if (config.learning_rate <= 0.0 || config.learning_rate > 1.0) {
    throw std::invalid_argument("learning rate must be in (0, 1]");
  }
  if (config.iterations < 0) {
    throw std::invalid_argument("iterations must be >= 0");
  }

  Ensemble model;
  model.num_classes = config.num_classes;
  model.iterations = 0;
  model.max_leaves = config.max_leaves;
  model.learning_rate = config.learning_rate;
  model.damping = config.damping;
  model.criterion = config.criterion;
  model.seed = config.seed;
  model.bins = data.map;

  const std::size_t N = data.size();
  const int K = config.num_classes;
  std::vector<double> F(N * K, 0.0);
  std::vector<double> p(N * K, 1.0 / K);
  boost_rounds(model, data, config.iterations, F, p, loss_per_iter);
  return model;
}

void continue_training(Ensemble& model, const BinnedDataset& data,
                       int extra_iterations,
                       std::vector<double>* loss_per_iter) {
  if (data.size() == 0) throw std::runtime_error("empty training data");
  if (data.num_features != model.bins.num_features()) {
    throw std::runtime_error("dataset feature count does not match model");
  }
  check_labels(data, model.num_classes);

  const std::size_t N = data.size();
  const int K = model.num_classes;
  const int D = data.num_features;
  std::vector<double> F(N * K, 0.0);
  std::vector<double> p(N * K, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    std::span<const std::uint32_t> bins(
        data.bins.data() + i * static_cast<std::size_t>(D),
        static_cast<std::size_t>(D));
    const std::vector<double> scores = predict_scores_binned(model, bins);
    std::copy(scores.begin(), scores.end(), F.begin() + i * K);
    std::span<double> pi(p.data() + i * K, K);
    softmax_row(scores, pi);
    loss -= std::log(pi[data.labels[i] - 1]);
  }
  if (loss_per_iter) loss_per_iter->push_back(loss);
  boost_rounds(model, data, extra_iterations, F, p, loss_per_iter);
}

std::vector<std::uint32_t> bin_instance(const BinningMap& map,
                                        std::span<const double> raw) {
  std::vector<std::uint32_t> bins(map.num_features());
  for (int d = 0; d < map.num_features(); ++d) {
    const double value = d < static_cast<int>(raw.size()) ? raw[d] : 0.0;
    bins[d] = map.bin_of(d, value);
  }
  return bins;
}

std::vector<double> dense_features(const Instance& inst, int num_features) {
  std::vector<double> raw(num_features, 0.0);
  for (const auto& [id, value] : inst.features) {
    if (id <= num_features) raw[id - 1] = value;
  }
  return raw;
}

std::vector<double> predict_scores_binned(
    const Ensemble& model, std::span<const std::uint32_t> bins) {
  std::vector<double> scores(model.num_classes, 0.0);
  for (const auto& row : model.trees) {
    for (int k = 0; k < model.num_classes; ++k) {
      const RegressionTree& tree = row[k];
      scores[k] += tree.nodes[tree.route(bins)].value;
    }
  }
  return scores;
}

std::vector<double> predict_scores(const Ensemble& model,
                                   std::span<const double> raw) {
  return predict_scores_binned(model, bin_instance(model.bins, raw));
}

std::vector<double> predict_proba(std::span<const double> scores) {
  std::vector<double> proba(scores.size());
  softmax_row(scores, proba);
  return proba;
}

int argmax_class(std::span<const double> scores) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(scores.size()); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return best + 1;
}

int predict_class(const Ensemble& model, std::span<const double> raw) {
  return argmax_class(predict_scores(model, raw));
}

Evaluation evaluate(const Ensemble& model, const RawDataset& data) {
  if (data.instances.empty()) {
    throw std::runtime_error("cannot evaluate on an empty dataset");
  }
  Evaluation result;
  std::size_t correct = 0;
  for (const Instance& inst : data.instances) {
    if (inst.label < 1 || inst.label > model.num_classes) {
      throw std::runtime_error("label " + std::to_string(inst.label) +
                               " outside model classes");
    }
    const std::vector<double> raw = dense_features(inst, model.bins.num_features());
    const std::vector<double> scores = predict_scores(model, raw);
    const std::vector<double> proba = predict_proba(scores);
    result.loss -= std::log(proba[inst.label - 1]);
    if (argmax_class(scores) == inst.label) ++correct;
  }
  result.accuracy =
      static_cast<double>(correct) / static_cast<double>(data.size());
  return result;
}

}  // namespace treesign
