#include "treesign/attacks.hpp"

#include <ostream>
#include <stdexcept>

#include "treesign/detail/rng.hpp"

namespace treesign {

Ensemble attack_append(const Ensemble& signed_model,
                       const RawDataset& train_data, int extra_iterations,
                       std::vector<double>* loss_per_iter) {
  if (extra_iterations < 0) {
    throw std::invalid_argument("extra_iterations must be >= 0");
  }
  if (train_data.num_features > signed_model.bins.num_features()) {
    throw std::runtime_error(
        "training data has more features than the model knows");
  }
  Ensemble attacked = signed_model;
  if (extra_iterations == 0) return attacked;

  const BinnedDataset binned = [&] {
    RawDataset padded = train_data;
    padded.num_features = signed_model.bins.num_features();
    return apply_bins(padded, signed_model.bins);
  }();
  continue_training(attacked, binned, extra_iterations, loss_per_iter);
  return attacked;
}

Ensemble attack_remove(const Ensemble& signed_model, int n) {
  if (n < 1 || n >= signed_model.iterations) {
    throw std::invalid_argument(
        "must remove between 1 and iterations-1 rows");
  }
  Ensemble attacked = signed_model;
  attacked.trees.resize(signed_model.iterations - n);
  attacked.iterations -= n;
  return attacked;
}

Ensemble attack_noise(const Ensemble& signed_model, double magnitude,
                      std::uint64_t seed) {
  if (magnitude <= 0.0) throw std::invalid_argument("magnitude must be > 0");
  Ensemble attacked = signed_model;
  detail::SplitMix64 rng(seed);
  for (auto& row : attacked.trees) {
    for (auto& tree : row) {
      for (auto& node : tree.nodes) {
        if (node.is_leaf()) {
          node.value += magnitude * (2.0 * rng.next_real() - 1.0);
        }
      }
    }
  }
  return attacked;
}

AttackReport measure_fragility(const SignatureKeySet& keys,
                               const Ensemble& attacked,
                               const std::string& attack_name, int parameter,
                               const RawDataset* test_data,
                               const Ensemble* signed_model) {
  AttackReport report;
  report.attack = attack_name;
  report.parameter = parameter;

  std::size_t changed = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const SignatureKey& key = keys.keys[i];
    KeyOutcome outcome;
    outcome.before =
        keys.expected.bits[i] ? key.flip_class : key.original_class;
    outcome.after = predict_class(attacked, key.raw_point);
    if (outcome.changed()) ++changed;
    report.per_key.push_back(outcome);
  }
  report.changed_fraction =
      static_cast<double>(changed) / static_cast<double>(keys.size());
  report.verdict =
      verify(extract(model_predictor(attacked), keys), keys.expected);

  if (test_data) {
    report.accuracy_after = evaluate(attacked, *test_data).accuracy;
    if (signed_model) {
      report.accuracy_before = evaluate(*signed_model, *test_data).accuracy;
    }
  }
  return report;
}

void write_report_text(const AttackReport& report, std::ostream& out) {
  out << "attack: " << report.attack << "\n";
  out << "parameter: " << report.parameter << "\n";
  out << "keys: " << report.per_key.size() << "\n";
  std::size_t changed = 0;
  for (const KeyOutcome& k : report.per_key) changed += k.changed() ? 1 : 0;
  out << "changed: " << changed << " (" << report.changed_fraction * 100.0
      << "%)\n";
  out << "verdict: "
      << (report.verdict == Verdict::authentic ? "authentic" : "tampered")
      << "\n";
  if (report.accuracy_before) {
    out << "accuracy_before: " << *report.accuracy_before << "\n";
  }
  if (report.accuracy_after) {
    out << "accuracy_after: " << *report.accuracy_after << "\n";
  }
  for (std::size_t i = 0; i < report.per_key.size(); ++i) {
    out << "key " << i << ": before " << report.per_key[i].before << " after "
        << report.per_key[i].after << "\n";
  }
}

void write_report_csv(const AttackReport& report, std::ostream& out) {
  out << "key,before,after,changed\n";
  for (std::size_t i = 0; i < report.per_key.size(); ++i) {
    out << i << ',' << report.per_key[i].before << ','
        << report.per_key[i].after << ','
        << (report.per_key[i].changed() ? 1 : 0) << "\n";
  }
}

}  // namespace treesign
