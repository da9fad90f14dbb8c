#include "treesign/signing.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <tuple>

#include "treesign/detail/rng.hpp"
#include "treesign/errors.hpp"
#include "treesign/model_io.hpp"

namespace treesign {

std::string SignatureMessage::to_string() const {
  std::string out(bits.size(), '0');
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) out[i] = '1';
  }
  return out;
}

SignatureMessage SignatureMessage::from_string(const std::string& text) {
  SignatureMessage msg;
  msg.bits.reserve(text.size());
  for (char c : text) {
    if (c != '0' && c != '1') {
      throw std::invalid_argument("message must be a string of 0s and 1s");
    }
    msg.bits.push_back(c == '1' ? 1 : 0);
  }
  return msg;
}

SignatureMessage SignatureMessage::random(std::size_t length,
                                          std::uint64_t seed) {
  detail::SplitMix64 rng(seed ^ 0x6d65737361676573ULL);
  SignatureMessage msg;
  msg.bits.resize(length);
  for (auto& b : msg.bits) b = static_cast<std::uint8_t>(rng.next() & 1);
  return msg;
}

namespace {

// Split conditions of one leaf, consolidated to intervals over the features
// that actually appear on its root path.
struct LeafCondition {
  std::int32_t leaf = -1;
  std::vector<std::tuple<int, std::uint32_t, std::uint32_t>> ranges;
};

void collect_conditions(const RegressionTree& tree, std::int32_t node,
                        std::vector<std::uint32_t>& lo,
                        std::vector<std::uint32_t>& hi,
                        std::vector<int>& touched,
                        std::vector<LeafCondition>& out) {
  const TreeNode& n = tree.nodes[node];
  if (n.is_leaf()) {
    LeafCondition cond;
    cond.leaf = node;
    for (int d : touched) {
      if (lo[d] > 0 || hi[d] != ConstraintBox::kUnbounded) {
        cond.ranges.emplace_back(d, lo[d], hi[d]);
      }
    }
    // a feature may appear several times on the path; drop duplicates
    std::sort(cond.ranges.begin(), cond.ranges.end());
    cond.ranges.erase(std::unique(cond.ranges.begin(), cond.ranges.end()),
                      cond.ranges.end());
    out.push_back(std::move(cond));
    return;
  }
  const int d = n.feature;
  const std::uint32_t old_lo = lo[d];
  const std::uint32_t old_hi = hi[d];
  touched.push_back(d);

  hi[d] = std::min(old_hi, n.threshold + 1);  // left: bin <= threshold
  if (lo[d] < hi[d]) collect_conditions(tree, n.left, lo, hi, touched, out);
  hi[d] = old_hi;

  lo[d] = std::max(old_lo, n.threshold + 1);  // right: bin > threshold
  if (lo[d] < hi[d]) collect_conditions(tree, n.right, lo, hi, touched, out);
  lo[d] = old_lo;

  touched.pop_back();
}

std::vector<LeafCondition> leaf_conditions(const RegressionTree& tree,
                                           int num_features) {
  std::vector<std::uint32_t> lo(num_features, 0);
  std::vector<std::uint32_t> hi(num_features, ConstraintBox::kUnbounded);
  std::vector<int> touched;
  std::vector<LeafCondition> out;
  collect_conditions(tree, 0, lo, hi, touched, out);
  return out;
}

std::vector<double> raw_point_of(const BinningMap& map,
                                 std::span<const std::uint32_t> bin_point) {
  std::vector<double> raw(bin_point.size());
  for (std::size_t d = 0; d < bin_point.size(); ++d) {
    const int f = static_cast<int>(d);
    // boxes live in unbounded bin space; values past the last real bin
    // behave like the last bin
    const std::uint32_t bin = std::min(bin_point[d], map.bin_count(f) - 1);
    raw[d] = map.representative(f, bin);
  }
  return raw;
}

// Scores summed in the same (m, k) order as inference so the two routes
// agree bitwise.
std::vector<double> scores_of_assignment(
    const Ensemble& model, std::span<const std::int32_t> assignment) {
  const int K = model.num_classes;
  std::vector<double> scores(K, 0.0);
  for (int m = 0; m < model.iterations; ++m) {
    for (int k = 0; k < K; ++k) {
      scores[k] += model.trees[m][k].nodes[assignment[m * K + k]].value;
    }
  }
  return scores;
}

struct TopTwo {
  int top = 0;       // 1-based
  int runner = 0;    // 1-based
  double gap = 0.0;
};

TopTwo top_two(std::span<const double> scores) {
  TopTwo result;
  int top = 0;
  for (int k = 1; k < static_cast<int>(scores.size()); ++k) {
    if (scores[k] > scores[top]) top = k;
  }
  int runner = top == 0 ? 1 : 0;
  for (int k = 0; k < static_cast<int>(scores.size()); ++k) {
    if (k != top && scores[k] > scores[runner]) runner = k;
  }
  result.top = top + 1;
  result.runner = runner + 1;
  result.gap = scores[top] - scores[runner];
  return result;
}

// Best candidates keyed by gap. Assignments that differ only on trees of
// classes outside a candidate's top two produce bitwise-identical gaps;
// keeping one candidate per distinct gap keeps the pool spread over genuinely
// different regions instead of flooding it with such variants. Ties keep the
// lexicographically smallest representative, so the pool is a deterministic
// function of the set of assignments discovered.
class CandidatePool {
 public:
  explicit CandidatePool(std::size_t capacity) : capacity_(capacity) {}

  bool worth_inserting(double gap) const {
    return best_.size() < capacity_ || gap <= std::prev(best_.end())->first;
  }

  void insert(KeyCandidate candidate) {
    auto [it, inserted] = best_.try_emplace(candidate.gap);
    if (inserted) {
      it->second = std::move(candidate);
      if (best_.size() > capacity_) best_.erase(std::prev(best_.end()));
    } else if (candidate.bin_point < it->second.bin_point) {
      it->second = std::move(candidate);
    }
  }

  std::vector<KeyCandidate> take_sorted() {
    std::vector<KeyCandidate> out;
    out.reserve(best_.size());
    for (auto& [gap, candidate] : best_) out.push_back(std::move(candidate));
    return out;
  }

  bool empty() const { return best_.empty(); }

 private:
  std::size_t capacity_;
  std::map<double, KeyCandidate> best_;
};

// One Random-DFS pass (one outer repeat of the locating loop): walks the
// trees class-major, iteration ascending, visiting terminal nodes in a
// seeded random order and pruning assignments whose constraint box empties.
// The step budget counts complete assignments and stops the whole pass.
class RandomDfs {
 public:
  using ConditionTable = std::vector<std::vector<std::vector<LeafCondition>>>;

  RandomDfs(const Ensemble& model, const ConditionTable& conditions,
            int max_steps, std::uint64_t run_seed, CandidatePool& pool)
      : model_(model),
        conditions_(conditions),
        max_steps_(max_steps),
        rng_(run_seed),
        pool_(pool) {
    const int D = model.bins.num_features();
    lo_.assign(D, 0);
    hi_.assign(D, ConstraintBox::kUnbounded);
    assignment_.assign(
        static_cast<std::size_t>(model.iterations) * model.num_classes, -1);
    order_scratch_.resize(assignment_.size());
  }

  void run() { walk(0, 0); }

 private:
  void walk(int class_k, int iteration) {
    if (steps_ >= max_steps_) return;
    if (iteration == model_.iterations) {
      if (class_k + 1 == model_.num_classes) {
        complete();
        return;
      }
      walk(class_k + 1, 0);
      return;
    }

    const std::vector<LeafCondition>& leaves = conditions_[iteration][class_k];
    const std::size_t level =
        static_cast<std::size_t>(class_k) * model_.iterations + iteration;
    std::vector<std::uint32_t>& order = order_scratch_[level];
    order.resize(leaves.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    rng_.shuffle(order);

    for (std::uint32_t pick : order) {
      if (steps_ >= max_steps_) return;
      const LeafCondition& cond = leaves[pick];
      const std::size_t undo_mark = undo_.size();
      bool feasible = true;
      for (const auto& [d, clo, chi] : cond.ranges) {
        const std::uint32_t new_lo = std::max(lo_[d], clo);
        const std::uint32_t new_hi = std::min(hi_[d], chi);
        if (new_lo >= new_hi) {
          feasible = false;
          break;
        }
        undo_.emplace_back(d, lo_[d], hi_[d]);
        lo_[d] = new_lo;
        hi_[d] = new_hi;
      }
      if (feasible) {
        assignment_[static_cast<std::size_t>(iteration) * model_.num_classes +
                    class_k] = cond.leaf;
        walk(class_k, iteration + 1);
      }
      while (undo_.size() > undo_mark) {
        const auto& [d, old_lo, old_hi] = undo_.back();
        lo_[d] = old_lo;
        hi_[d] = old_hi;
        undo_.pop_back();
      }
    }
  }

  void complete() {
    ++steps_;

    std::vector<double> scores = scores_of_assignment(model_, assignment_);
    const TopTwo ranking = top_two(scores);
    if (!pool_.worth_inserting(ranking.gap)) return;

    KeyCandidate candidate;
    candidate.bin_point = lo_;
    candidate.scores = std::move(scores);
    candidate.top_class = ranking.top;
    candidate.runner_up = ranking.runner;
    candidate.gap = ranking.gap;
    candidate.box.lo = lo_;
    candidate.box.hi = hi_;
    candidate.raw_point = raw_point_of(model_.bins, candidate.bin_point);
    candidate.leaf_assignment = assignment_;
    pool_.insert(std::move(candidate));
  }

  const Ensemble& model_;
  const ConditionTable& conditions_;
  const int max_steps_;
  detail::SplitMix64 rng_;
  CandidatePool& pool_;

  int steps_ = 0;
  std::vector<std::uint32_t> lo_;
  std::vector<std::uint32_t> hi_;
  std::vector<std::int32_t> assignment_;
  std::vector<std::tuple<int, std::uint32_t, std::uint32_t>> undo_;
  std::vector<std::vector<std::uint32_t>> order_scratch_;
};

}  // namespace

ConstraintBox leaf_constraint(const RegressionTree& tree, std::int32_t leaf,
                              int num_features) {
  ConstraintBox box = ConstraintBox::full(num_features);
  for (const LeafCondition& cond : leaf_conditions(tree, num_features)) {
    if (cond.leaf != leaf) continue;
    for (const auto& [d, lo, hi] : cond.ranges) {
      box.lo[d] = lo;
      box.hi[d] = hi;
    }
    return box;
  }
  throw std::invalid_argument("node " + std::to_string(leaf) +
                              " is not a leaf of this tree");
}

GapInfo candidate_gap(const Ensemble& model, const ConstraintBox& box) {
  if (model.num_classes < 2) {
    throw std::invalid_argument("model needs at least 2 classes");
  }
  if (static_cast<int>(box.lo.size()) != model.bins.num_features()) {
    throw std::invalid_argument("box feature count does not match model");
  }
  if (box.empty()) throw SearchError("constraint box is empty");

  GapInfo info;
  info.scores = predict_scores_binned(model, box.lo);
  const TopTwo ranking = top_two(info.scores);
  info.top_class = ranking.top;
  info.runner_up = ranking.runner;
  info.gap = ranking.gap;
  return info;
}

std::vector<KeyCandidate> locate_candidates(const Ensemble& model,
                                            int num_keys, int alpha,
                                            int max_steps,
                                            std::uint64_t seed) {
  if (num_keys < 1 || alpha < 1 || max_steps < 1) {
    throw std::invalid_argument("num_keys, alpha and max_steps must be >= 1");
  }
  if (model.num_classes < 2) {
    throw std::invalid_argument("model needs at least 2 classes");
  }

  // per-tree leaf conditions, shared across all passes
  RandomDfs::ConditionTable conditions(model.iterations);
  const int D = model.bins.num_features();
  for (int m = 0; m < model.iterations; ++m) {
    conditions[m].reserve(model.num_classes);
    for (int k = 0; k < model.num_classes; ++k) {
      conditions[m].push_back(leaf_conditions(model.trees[m][k], D));
    }
  }

  const std::size_t capacity =
      static_cast<std::size_t>(num_keys) * static_cast<std::size_t>(alpha);
  CandidatePool pool(capacity);

  detail::SplitMix64 master(seed);
  for (std::size_t pass = 0; pass < capacity; ++pass) {
    const std::uint64_t run_seed = master.next();
    RandomDfs dfs(model, conditions, max_steps, run_seed, pool);
    dfs.run();
  }

  if (pool.empty()) {
    throw SearchError("random search found no complete leaf assignment");
  }
  return pool.take_sorted();
}

SignatureKeySet select_keys(const Ensemble& model,
                            const std::vector<KeyCandidate>& candidates,
                            int num_keys) {
  if (num_keys < 1) throw std::invalid_argument("num_keys must be >= 1");
  const int K = model.num_classes;
  const int M = model.iterations;

  // ref_freq over (iteration, class, node): how many candidates route
  // through each terminal node, and which candidate did when unique.
  std::map<std::uint64_t, std::pair<std::size_t, std::size_t>> ref_freq;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto& assignment = candidates[c].leaf_assignment;
    if (assignment.size() != static_cast<std::size_t>(M) * K) {
      throw std::invalid_argument("candidate assignment of wrong size");
    }
    for (std::size_t slot = 0; slot < assignment.size(); ++slot) {
      const std::uint64_t node_key =
          (static_cast<std::uint64_t>(slot) << 32) |
          static_cast<std::uint32_t>(assignment[slot]);
      auto& entry = ref_freq[node_key];
      ++entry.first;
      entry.second = c;
    }
  }

  SignatureKeySet selected;
  std::vector<bool> taken(candidates.size(), false);
  for (const auto& [node_key, entry] : ref_freq) {
    if (entry.first != 1) continue;
    const std::size_t c = entry.second;
    const KeyCandidate& candidate = candidates[c];
    const int slot = static_cast<int>(node_key >> 32);
    const int tree_class = slot % K + 1;  // 1-based
    int direction = 0;
    if (tree_class == candidate.runner_up) {
      direction = +1;
    } else if (tree_class == candidate.top_class) {
      direction = -1;
    } else {
      continue;  // free leaf must sit on the candidate's top-two classes
    }
    if (taken[c]) continue;
    taken[c] = true;

    SignatureKey key;
    key.raw_point = candidate.raw_point;
    key.bin_point = candidate.bin_point;
    key.original_class = candidate.top_class;
    key.flip_class = candidate.runner_up;
    key.gap = candidate.gap;
    key.free_leaf = LeafRef{slot / K, tree_class,
                            static_cast<std::int32_t>(node_key & 0xffffffff)};
    key.direction = direction;
    selected.keys.push_back(std::move(key));
    if (static_cast<int>(selected.keys.size()) == num_keys) break;
  }

  if (selected.keys.empty()) {
    throw SearchError(
        "no independent key could be selected; raise alpha to search more "
        "candidates");
  }
  selected.model_fingerprint = model_fingerprint(model);
  selected.expected = SignatureMessage::zeros(selected.keys.size());
  return selected;
}

double third_class_margin(std::span<const double> scores, int top_class,
                          int flip_class) {
  double third = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < static_cast<int>(scores.size()); ++k) {
    if (k + 1 == top_class || k + 1 == flip_class) continue;
    third = std::max(third, scores[k]);
  }
  return scores[flip_class - 1] - third;
}

Ensemble embed(const Ensemble& model, SignatureKeySet& keys,
               const SignatureMessage& message, double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
  if (message.size() != keys.size()) {
    throw std::invalid_argument("message length does not match key count");
  }
  if (keys.model_fingerprint != model_fingerprint(model)) {
    throw IntegrityError(
        "keys were not selected from this model (fingerprint mismatch)");
  }

  Ensemble signed_model = model;
  for (std::size_t i = 0; i < keys.keys.size(); ++i) {
    SignatureKey& key = keys.keys[i];
    const std::vector<double> scores =
        predict_scores_binned(model, key.bin_point);
    const TopTwo ranking = top_two(scores);
    if (ranking.top != key.original_class ||
        ranking.runner != key.flip_class) {
      throw IntegrityError("key " + std::to_string(i) +
                           " no longer matches the model's predictions");
    }
    if (model.num_classes > 2) {
      const double margin =
          third_class_margin(scores, key.original_class, key.flip_class);
      if (margin <= key.gap + 2.0 * epsilon) {
        throw SearchError("key " + std::to_string(i) +
                          " cannot be flipped safely: a third class is too "
                          "close to the flip class");
      }
    }

    RegressionTree& tree =
        signed_model.trees[key.free_leaf.iteration][key.free_leaf.tree_class - 1];
    TreeNode& leaf = tree.nodes[key.free_leaf.node];
    if (!leaf.is_leaf()) {
      throw IntegrityError("designated node of key " + std::to_string(i) +
                           " is not a leaf");
    }
    key.restore_value = leaf.value;
    if (message.bits[i]) {
      key.perturbation = key.direction * (key.gap + epsilon);
      leaf.value += key.perturbation;
    } else {
      key.perturbation = 0.0;
    }
  }
  keys.expected = message;
  return signed_model;
}

Ensemble unembed(const Ensemble& signed_model, const SignatureKeySet& keys) {
  Ensemble restored = signed_model;
  for (const SignatureKey& key : keys.keys) {
    RegressionTree& tree =
        restored.trees[key.free_leaf.iteration][key.free_leaf.tree_class - 1];
    tree.nodes[key.free_leaf.node].value = key.restore_value;
  }
  return restored;
}

Predictor model_predictor(const Ensemble& model) {
  return [&model](std::span<const double> raw) {
    return predict_class(model, raw);
  };
}

ExtractResult extract(const Predictor& predict, const SignatureKeySet& keys) {
  ExtractResult result;
  result.message.bits.reserve(keys.size());
  for (const SignatureKey& key : keys.keys) {
    const int answered = predict(key.raw_point);
    if (answered == key.flip_class) {
      result.message.bits.push_back(1);
    } else if (answered == key.original_class) {
      result.message.bits.push_back(0);
    } else {
      result.message.bits.push_back(1);
      result.foreign_class = true;
    }
  }
  return result;
}

Verdict verify(const ExtractResult& extracted,
               const SignatureMessage& expected) {
  if (extracted.message.size() != expected.size()) {
    throw std::invalid_argument(
        "extracted message length does not match the expected message");
  }
  if (extracted.foreign_class) return Verdict::tampered;
  return extracted.message == expected ? Verdict::authentic
                                       : Verdict::tampered;
}

SignResult sign_model(const Ensemble& model, int num_keys, int alpha,
                      int max_steps, double epsilon, std::uint64_t seed,
                      const SignatureMessage& message) {
  if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
  std::vector<KeyCandidate> candidates =
      locate_candidates(model, num_keys, alpha, max_steps, seed);

  if (model.num_classes > 2) {
    std::erase_if(candidates, [&](const KeyCandidate& c) {
      return third_class_margin(c.scores, c.top_class, c.runner_up) <=
             c.gap + 2.0 * epsilon;
    });
    if (candidates.empty()) {
      throw SearchError(
          "every candidate had a third class too close to its flip class");
    }
  }

  SignResult result;
  result.keys = select_keys(model, candidates, num_keys);
  SignatureMessage msg = message;
  if (msg.size() == 0) {
    msg = SignatureMessage::random(result.keys.size(), seed);
  } else if (msg.size() != result.keys.size()) {
    throw std::invalid_argument(
        "message length " + std::to_string(msg.size()) +
        " does not match the " + std::to_string(result.keys.size()) +
        " selected keys");
  }
  result.signed_model = embed(model, result.keys, msg, epsilon);
  return result;
}

}  // namespace treesign
