#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "treesign/booster.hpp"
#include "treesign/signing.hpp"

namespace treesign {

// Attack 1: resume boosting on the distributed (signed) model. Scores are
// recomputed from the signed trees, so the appended iterations actively
// correct the embedded flips. Existing trees are never rewritten.
Ensemble attack_append(const Ensemble& signed_model,
                       const RawDataset& train_data, int extra_iterations,
                       std::vector<double>* loss_per_iter = nullptr);

// Attack 2: delete the last n iteration rows (n x K trees).
Ensemble attack_remove(const Ensemble& signed_model, int n);

// Baseline beyond the append/remove pair: uniform noise in
// [-magnitude, magnitude] added to every leaf.
Ensemble attack_noise(const Ensemble& signed_model, double magnitude,
                      std::uint64_t seed);

struct KeyOutcome {
  int before = 0;  // class the signed model answered
  int after = 0;   // class the attacked model answers
  bool changed() const { return before != after; }
};

struct AttackReport {
  std::string attack;                 // append | remove | noise | none
  int parameter = 0;                  // iterations appended/removed
  std::vector<KeyOutcome> per_key;
  double changed_fraction = 0.0;
  Verdict verdict = Verdict::authentic;
  std::optional<double> accuracy_before;
  std::optional<double> accuracy_after;
};

// Extracts the signature from the attacked model and diffs it against the
// key set's expected message. Accuracy columns are filled when the test
// data (and, for the before column, the signed model) are given.
AttackReport measure_fragility(const SignatureKeySet& keys,
                               const Ensemble& attacked,
                               const std::string& attack_name, int parameter,
                               const RawDataset* test_data = nullptr,
                               const Ensemble* signed_model = nullptr);

void write_report_text(const AttackReport& report, std::ostream& out);
void write_report_csv(const AttackReport& report, std::ostream& out);

}  // namespace treesign
