#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "treesign/booster.hpp"

namespace treesign {

// Per-feature integer interval [lo, hi) in bin units describing the inputs
// that realize one fixed leaf assignment; hi == kUnbounded means +inf.
struct ConstraintBox {
  static constexpr std::uint32_t kUnbounded =
      std::numeric_limits<std::uint32_t>::max();

  std::vector<std::uint32_t> lo;
  std::vector<std::uint32_t> hi;

  static ConstraintBox full(int num_features) {
    ConstraintBox box;
    box.lo.assign(num_features, 0);
    box.hi.assign(num_features, kUnbounded);
    return box;
  }

  bool empty() const {
    for (std::size_t d = 0; d < lo.size(); ++d) {
      if (lo[d] >= hi[d]) return true;
    }
    return false;
  }

  bool contains(std::span<const std::uint32_t> point) const {
    for (std::size_t d = 0; d < lo.size(); ++d) {
      if (point[d] < lo[d] || point[d] >= hi[d]) return false;
    }
    return true;
  }

  bool operator==(const ConstraintBox&) const = default;
};

// Intersection of the split conditions on the path from the root to a leaf.
ConstraintBox leaf_constraint(const RegressionTree& tree, std::int32_t leaf,
                              int num_features);

struct GapInfo {
  int top_class = 0;        // 1-based
  int runner_up = 0;        // 1-based
  double gap = 0.0;         // F[top] - F[runner_up] >= 0
  std::vector<double> scores;
};

// Scores are constant over a box because every tree's leaf is fixed, so the
// gap is well-defined per box. Throws SearchError on an empty box.
GapInfo candidate_gap(const Ensemble& model, const ConstraintBox& box);

struct KeyCandidate {
  ConstraintBox box;
  std::vector<std::uint32_t> bin_point;  // per-feature lower bound of the box
  std::vector<double> raw_point;         // bin_point through representatives
  std::vector<std::int32_t> leaf_assignment;  // node id per (m * K + k)
  std::vector<double> scores;
  int top_class = 0;
  int runner_up = 0;
  double gap = 0.0;
};

// Seeded random depth-first search over the trees' terminal nodes, pruning
// when the running constraint box becomes empty. Runs num_keys * alpha
// searches, each budgeted to max_steps complete assignments, and keeps the
// num_keys * alpha smallest-gap candidates, deduplicated by representative
// instance. Same seed, same result.
std::vector<KeyCandidate> locate_candidates(const Ensemble& model,
                                            int num_keys, int alpha,
                                            int max_steps, std::uint64_t seed);

struct LeafRef {
  int iteration = 0;   // 0-based
  int tree_class = 0;  // 1-based
  std::int32_t node = -1;

  bool operator==(const LeafRef&) const = default;
};

struct SignatureKey {
  std::vector<double> raw_point;
  std::vector<std::uint32_t> bin_point;
  int original_class = 0;  // k
  int flip_class = 0;      // k'
  double gap = 0.0;
  LeafRef free_leaf;       // referenced by no other candidate
  int direction = 0;       // +1 raises the flip class, -1 lowers the original
  double perturbation = 0.0;    // value added at embed time (0 for bit 0)
  double restore_value = 0.0;   // pre-embed value of the free leaf
};

struct SignatureMessage {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  std::string to_string() const;
  static SignatureMessage from_string(const std::string& text);
  static SignatureMessage random(std::size_t length, std::uint64_t seed);
  static SignatureMessage zeros(std::size_t length) {
    return SignatureMessage{std::vector<std::uint8_t>(length, 0)};
  }

  bool operator==(const SignatureMessage&) const = default;
};

struct SignatureKeySet {
  std::string model_fingerprint;  // of the model the keys were selected from
  std::vector<SignatureKey> keys;
  SignatureMessage expected;      // message embedded in the distributed model

  std::size_t size() const { return keys.size(); }
};

// Greedy selection of up to num_keys candidates, each owning a terminal node
// on its top-two classes that no other candidate references. Throws
// SearchError when nothing is selectable. The returned set is bound to the
// model by fingerprint.
SignatureKeySet select_keys(const Ensemble& model,
                            const std::vector<KeyCandidate>& candidates,
                            int num_keys);

// Flips each message-bit-1 key by moving its free leaf value past the gap
// plus epsilon; records the applied perturbations and the expected message
// into `keys`. The input model is untouched.
Ensemble embed(const Ensemble& model, SignatureKeySet& keys,
               const SignatureMessage& message, double epsilon);

// Reverts the recorded perturbations, restoring the pre-embed leaf values
// exactly.
Ensemble unembed(const Ensemble& signed_model, const SignatureKeySet& keys);

// Black-box prediction interface: raw instance in, 1-based class out.
using Predictor = std::function<int(std::span<const double>)>;

Predictor model_predictor(const Ensemble& model);

struct ExtractResult {
  SignatureMessage message;
  bool foreign_class = false;  // some key answered neither k nor k'
};

ExtractResult extract(const Predictor& predict, const SignatureKeySet& keys);

enum class Verdict { authentic, tampered };

Verdict verify(const ExtractResult& extracted,
               const SignatureMessage& expected);

// Margin between the flip class and the best remaining class; a key can be
// flipped cleanly only when this clears the gap plus twice the perturbation
// epsilon. Infinite for two-class models.
double third_class_margin(std::span<const double> scores, int top_class,
                          int flip_class);

struct SignResult {
  Ensemble signed_model;
  SignatureKeySet keys;
};

// Full pipeline: locate candidates, drop the ones whose third-class margin
// could interfere with a flip, select independent keys, embed the message.
// The message length must equal the number of selected keys (a random
// message of the right length is drawn from `seed` when empty).
SignResult sign_model(const Ensemble& model, int num_keys, int alpha,
                      int max_steps, double epsilon, std::uint64_t seed,
                      const SignatureMessage& message = {});

}  // namespace treesign
