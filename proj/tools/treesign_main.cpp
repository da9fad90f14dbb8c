// treesign: train boosted trees, embed fragile integrity signatures in
// their leaves, and check deployed models over a prediction-only interface.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "treesign/attacks.hpp"
#include "treesign/booster.hpp"
#include "treesign/dataset.hpp"
#include "treesign/model_io.hpp"
#include "treesign/signing.hpp"
#include "treesign/synth.hpp"

namespace {

using namespace treesign;

constexpr int kExitTampered = 3;

struct Options {
  std::string data_path;
  std::string test_path;
  std::string model_path;
  std::string signed_model_path;
  std::string keys_path;
  std::string out_path;
  std::string report_path;
  std::string loss_log_path;
  std::string message;
  std::string attack_kind;
  std::string predict_cmd;

  int leaves = 20;       // J
  int iterations = 100;  // M
  double learning_rate = 0.1;
  std::string criterion = "logit";
  double damping = 1e-6;
  std::uint32_t max_bins = kDefaultMaxBins;

  int num_keys = 40;  // S
  int alpha = 8;
  int max_steps = 1000;
  double epsilon = 1e-5;
  std::uint64_t seed = 0;

  int count = 1;  // attack --n
  double noise_magnitude = 1e-3;

  // synth
  int synth_n = 1000;
  int synth_test_n = 0;
  int classes = 10;
  int features = 16;
  int prototypes = 6;
  double noise_sigma = 10.0;
  std::string test_out_path;
};

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
}

int cmd_synth(const Options& opt) {
  ClusterSpec spec;
  spec.num_classes = opt.classes;
  spec.num_features = opt.features;
  spec.prototypes_per_class = opt.prototypes;
  spec.noise_sigma = opt.noise_sigma;
  spec.seed = opt.seed;

  const RawDataset train_set = sample_clustered(spec, opt.synth_n, opt.seed + 1);
  std::ostringstream train_text;
  write_libsvm(train_set, train_text);
  write_text_file(opt.out_path, train_text.str());
  std::printf("wrote %d instances (%d classes, %d features) to %s\n",
              opt.synth_n, opt.classes, opt.features, opt.out_path.c_str());

  if (!opt.test_out_path.empty()) {
    const RawDataset test_set =
        sample_clustered(spec, opt.synth_test_n, opt.seed + 2);
    std::ostringstream test_text;
    write_libsvm(test_set, test_text);
    write_text_file(opt.test_out_path, test_text.str());
    std::printf("wrote %d instances to %s\n", opt.synth_test_n,
                opt.test_out_path.c_str());
  }
  return 0;
}

int cmd_train(const Options& opt) {
  const RawDataset raw = load_libsvm_file(opt.data_path);
  if (raw.size() == 0) throw std::runtime_error("training data is empty");
  const BinnedDataset data = apply_bins(raw, build_bins(raw, opt.max_bins));

  TrainConfig config;
  config.num_classes = raw.num_classes;
  config.iterations = opt.iterations;
  config.max_leaves = opt.leaves;
  config.learning_rate = opt.learning_rate;
  config.criterion = criterion_from_string(opt.criterion);
  config.damping = opt.damping;
  config.seed = opt.seed;

  std::vector<double> losses;
  const Ensemble model = train(data, config, &losses);
  save_model_file(model, opt.model_path);

  std::printf("trained %d x %d trees (J=%d, nu=%g, %s) on %zu instances\n",
              config.iterations, config.num_classes, config.max_leaves,
              config.learning_rate, opt.criterion.c_str(), raw.size());
  if (!losses.empty()) {
    std::printf("training loss: %.6f -> %.6f\n", losses.front(),
                losses.back());
  }
  if (!opt.loss_log_path.empty()) {
    std::ostringstream log;
    log << "iteration,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
      log << i + 1 << ',' << losses[i] << '\n';
    }
    write_text_file(opt.loss_log_path, log.str());
  }
  if (!opt.test_path.empty()) {
    const Evaluation held_out = evaluate(model, load_libsvm_file(opt.test_path));
    std::printf("test accuracy %.4f, loss %.6f\n", held_out.accuracy,
                held_out.loss);
  }
  std::printf("model written to %s\n", opt.model_path.c_str());
  return 0;
}

int cmd_sign(const Options& opt) {
  const Ensemble model = load_model_file(opt.model_path);
  SignatureMessage message;
  if (!opt.message.empty()) {
    message = SignatureMessage::from_string(opt.message);
  }
  const SignResult result =
      sign_model(model, opt.num_keys, opt.alpha, opt.max_steps, opt.epsilon,
                 opt.seed, message);

  save_model_file(result.signed_model, opt.signed_model_path);
  save_keys_file(result.keys, opt.keys_path);

  std::printf("selected %zu independent keys (requested %d)\n",
              result.keys.size(), opt.num_keys);
  std::printf("message: %s\n", result.keys.expected.to_string().c_str());
  std::printf("signed model written to %s\n", opt.signed_model_path.c_str());
  std::printf("keys written to %s\n", opt.keys_path.c_str());
  return 0;
}

// Runs `command < instances > answers` and reads one class per line; the
// remote side sees raw feature vectors only.
std::vector<int> query_subprocess(const std::string& command,
                                  const SignatureKeySet& keys) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path();
  const auto tag = std::to_string(
      std::hash<std::string>{}(command) ^
      static_cast<std::size_t>(
          std::chrono::steady_clock::now().time_since_epoch().count()));
  const fs::path in_path = dir / ("treesign_query_" + tag + ".in");
  const fs::path out_path = dir / ("treesign_query_" + tag + ".out");

  {
    std::ofstream in_file(in_path);
    for (const SignatureKey& key : keys.keys) {
      in_file << 0;  // dummy label column
      for (std::size_t d = 0; d < key.raw_point.size(); ++d) {
        if (key.raw_point[d] != 0.0) {
          in_file << ' ' << d + 1 << ':' << key.raw_point[d];
        }
      }
      in_file << '\n';
    }
  }
  const std::string full =
      command + " < " + in_path.string() + " > " + out_path.string();
  const int rc = std::system(full.c_str());
  std::vector<int> answers;
  if (rc == 0) {
    std::ifstream out_file(out_path);
    int cls = 0;
    while (out_file >> cls) answers.push_back(cls);
  }
  fs::remove(in_path);
  fs::remove(out_path);
  if (rc != 0) {
    throw std::runtime_error("predictor command failed: " + command);
  }
  if (answers.size() != keys.size()) {
    throw std::runtime_error("predictor returned " +
                             std::to_string(answers.size()) + " answers for " +
                             std::to_string(keys.size()) + " keys");
  }
  return answers;
}

int cmd_verify(const Options& opt) {
  const SignatureKeySet keys = load_keys_file(opt.keys_path);

  ExtractResult extracted;
  std::optional<Ensemble> model;
  if (!opt.predict_cmd.empty()) {
    const std::vector<int> answers = query_subprocess(opt.predict_cmd, keys);
    std::size_t next = 0;
    const Predictor remote = [&](std::span<const double>) {
      return answers[next++];
    };
    extracted = extract(remote, keys);
  } else {
    model = load_model_file(opt.signed_model_path);
    extracted = extract(model_predictor(*model), keys);
  }

  const Verdict verdict = verify(extracted, keys.expected);
  std::printf("expected:  %s\n", keys.expected.to_string().c_str());
  std::printf("extracted: %s\n", extracted.message.to_string().c_str());
  std::string diff(keys.size(), ' ');
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (extracted.message.bits[i] != keys.expected.bits[i]) diff[i] = '^';
  }
  if (diff.find('^') != std::string::npos) {
    std::printf("           %s\n", diff.c_str());
  }
  if (extracted.foreign_class) {
    std::printf("note: some key answered a class outside its pair\n");
  }
  if (verdict == Verdict::authentic) {
    std::printf("verdict: authentic\n");
    return 0;
  }
  std::printf("verdict: tampered\n");
  return kExitTampered;
}

int cmd_attack(const Options& opt) {
  const Ensemble signed_model = load_model_file(opt.signed_model_path);

  Ensemble attacked;
  if (opt.attack_kind == "append") {
    if (opt.data_path.empty()) {
      throw std::runtime_error("--attack append needs --data (training set)");
    }
    attacked = attack_append(signed_model, load_libsvm_file(opt.data_path),
                             opt.count);
  } else if (opt.attack_kind == "remove") {
    attacked = attack_remove(signed_model, opt.count);
  } else if (opt.attack_kind == "noise") {
    attacked = attack_noise(signed_model, opt.noise_magnitude, opt.seed);
  } else {
    throw std::runtime_error("unknown attack: " + opt.attack_kind);
  }
  save_model_file(attacked, opt.out_path);
  std::printf("attacked model written to %s\n", opt.out_path.c_str());

  if (!opt.keys_path.empty()) {
    const SignatureKeySet keys = load_keys_file(opt.keys_path);
    std::optional<RawDataset> test_data;
    if (!opt.test_path.empty()) {
      test_data = load_libsvm_file(opt.test_path);
    }
    const AttackReport report = measure_fragility(
        keys, attacked, opt.attack_kind, opt.count,
        test_data ? &*test_data : nullptr, &signed_model);
    write_report_text(report, std::cout);
    if (!opt.report_path.empty()) {
      std::ostringstream csv;
      write_report_csv(report, csv);
      write_text_file(opt.report_path, csv.str());
      std::printf("report written to %s\n", opt.report_path.c_str());
    }
  }
  return 0;
}

int cmd_eval(const Options& opt) {
  const Ensemble model = load_model_file(opt.model_path);
  const RawDataset data = load_libsvm_file(opt.data_path);
  const Evaluation result = evaluate(model, data);
  std::printf("accuracy %.6f, loss %.6f over %zu instances\n", result.accuracy,
              result.loss, data.size());

  if (!opt.signed_model_path.empty()) {
    const Ensemble signed_model = load_model_file(opt.signed_model_path);
    std::size_t changed = 0;
    for (const Instance& inst : data.instances) {
      const std::vector<double> raw =
          dense_features(inst, model.bins.num_features());
      if (predict_class(model, raw) != predict_class(signed_model, raw)) {
        ++changed;
      }
    }
    std::printf("changed predictions: %zu/%zu\n", changed, data.size());
  }
  return 0;
}

int cmd_inspect(const Options& opt) {
  const Ensemble model = load_model_file(opt.model_path);
  std::printf("criterion: %s\n", to_string(model.criterion).c_str());
  std::printf("classes: %d\n", model.num_classes);
  std::printf("iterations: %d\n", model.iterations);
  std::printf("max leaves: %d\n", model.max_leaves);
  std::printf("learning rate: %g\n", model.learning_rate);
  std::printf("damping: %g\n", model.damping);
  std::printf("seed: %llu\n", static_cast<unsigned long long>(model.seed));
  std::printf("features: %d\n", model.bins.num_features());

  std::uint32_t max_bins_seen = 0;
  for (int d = 0; d < model.bins.num_features(); ++d) {
    max_bins_seen = std::max(max_bins_seen, model.bins.bin_count(d));
  }
  std::printf("largest feature bin count: %u\n", max_bins_seen);

  std::size_t leaves = 0;
  double min_leaf = 0.0;
  double max_leaf = 0.0;
  bool first = true;
  for (const auto& row : model.trees) {
    for (const auto& tree : row) {
      for (const auto& node : tree.nodes) {
        if (!node.is_leaf()) continue;
        ++leaves;
        if (first || node.value < min_leaf) min_leaf = node.value;
        if (first || node.value > max_leaf) max_leaf = node.value;
        first = false;
      }
    }
  }
  std::printf("trees: %zu, leaves: %zu", static_cast<std::size_t>(
                  model.iterations) * model.num_classes, leaves);
  if (!first) std::printf(", leaf values in [%g, %g]", min_leaf, max_leaf);
  std::printf("\n");
  std::printf("fingerprint: %s\n", model_fingerprint(model).c_str());
  return 0;
}

int cmd_predict(const Options& opt) {
  const Ensemble model = load_model_file(opt.model_path);
  std::string text;
  if (!opt.data_path.empty()) {
    std::ifstream in(opt.data_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + opt.data_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  } else {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    text = buf.str();
  }
  const RawDataset data = parse_libsvm(text);
  for (const Instance& inst : data.instances) {
    const std::vector<double> raw =
        dense_features(inst, model.bins.num_features());
    std::printf("%d\n", predict_class(model, raw));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"boosted-tree training and fragile signature toolkit"};
  app.require_subcommand(1);
  Options opt;

  CLI::App* synth = app.add_subcommand("synth", "generate clustered demo data");
  synth->add_option("--out", opt.out_path, "training output path")->required();
  synth->add_option("--test-out", opt.test_out_path, "test output path");
  synth->add_option("--n", opt.synth_n, "training instances");
  synth->add_option("--test-n", opt.synth_test_n, "test instances");
  synth->add_option("-K,--classes", opt.classes, "classes");
  synth->add_option("-D,--features", opt.features, "features");
  synth->add_option("--prototypes", opt.prototypes, "prototypes per class");
  synth->add_option("--noise", opt.noise_sigma, "noise sigma");
  synth->add_option("--seed", opt.seed, "seed");

  CLI::App* train_cmd = app.add_subcommand("train", "train a boosted model");
  train_cmd->add_option("--data", opt.data_path, "LIBSVM training data")
      ->required();
  train_cmd->add_option("--model", opt.model_path, "model output path")
      ->required();
  train_cmd->add_option("--test", opt.test_path, "held-out LIBSVM data");
  train_cmd->add_option("-J,--leaves", opt.leaves, "terminal nodes per tree");
  train_cmd->add_option("-M,--iterations", opt.iterations,
                        "boosting iterations");
  train_cmd->add_option("--nu", opt.learning_rate, "learning rate");
  train_cmd->add_option("--criterion", opt.criterion, "logit or mart")
      ->check(CLI::IsMember({"logit", "mart"}));
  train_cmd->add_option("--damping", opt.damping, "denominator damping");
  train_cmd->add_option("--max-bins", opt.max_bins, "bin budget per feature");
  train_cmd->add_option("--seed", opt.seed, "seed");
  train_cmd->add_option("--loss-log", opt.loss_log_path,
                        "per-iteration loss CSV");

  CLI::App* sign = app.add_subcommand("sign", "embed a signature");
  sign->add_option("--model", opt.model_path, "model to sign")->required();
  sign->add_option("--signed-model", opt.signed_model_path,
                   "signed model output")
      ->required();
  sign->add_option("--keys", opt.keys_path, "key file output")->required();
  sign->add_option("-S,--keys-count", opt.num_keys, "signature keys");
  sign->add_option("--alpha", opt.alpha, "candidate oversampling factor");
  sign->add_option("--max-steps", opt.max_steps,
                   "complete assignments per search pass");
  sign->add_option("--epsilon", opt.epsilon, "flip perturbation");
  sign->add_option("--seed", opt.seed, "seed");
  sign->add_option("--message", opt.message,
                   "bit string (random when omitted)");

  CLI::App* verify_cmd =
      app.add_subcommand("verify", "check a deployed model's signature");
  verify_cmd->add_option("--keys", opt.keys_path, "key file")->required();
  verify_cmd->add_option("--signed-model", opt.signed_model_path,
                         "model file to query locally");
  verify_cmd->add_option("--predict-cmd", opt.predict_cmd,
                         "shell command answering classes on stdout");

  CLI::App* attack = app.add_subcommand("attack", "tamper with a model");
  attack->add_option("--signed-model", opt.signed_model_path, "input model")
      ->required();
  attack->add_option("--attack", opt.attack_kind, "append, remove or noise")
      ->required()
      ->check(CLI::IsMember({"append", "remove", "noise"}));
  attack->add_option("--out", opt.out_path, "attacked model output")
      ->required();
  attack->add_option("--n", opt.count, "iterations to append/remove");
  attack->add_option("--data", opt.data_path, "training data (append)");
  attack->add_option("--keys", opt.keys_path, "key file for a report");
  attack->add_option("--test", opt.test_path, "test data for accuracy");
  attack->add_option("--report", opt.report_path, "CSV report path");
  attack->add_option("--noise-magnitude", opt.noise_magnitude,
                     "leaf noise range");
  attack->add_option("--seed", opt.seed, "seed (noise)");

  CLI::App* eval = app.add_subcommand("eval", "accuracy and loss on data");
  eval->add_option("--model", opt.model_path, "model file")->required();
  eval->add_option("--data", opt.data_path, "LIBSVM data")->required();
  eval->add_option("--signed-model", opt.signed_model_path,
                   "signed model for a changed-prediction count");

  CLI::App* inspect = app.add_subcommand("inspect", "model summary");
  inspect->add_option("--model", opt.model_path, "model file")->required();

  CLI::App* predict = app.add_subcommand(
      "predict", "answer predicted classes (LIBSVM lines on stdin or --data)");
  predict->add_option("--model", opt.model_path, "model file")->required();
  predict->add_option("--data", opt.data_path, "LIBSVM data");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(opt);
    if (*train_cmd) return cmd_train(opt);
    if (*sign) return cmd_sign(opt);
    if (*verify_cmd) {
      if (opt.signed_model_path.empty() && opt.predict_cmd.empty()) {
        throw std::runtime_error(
            "verify needs --signed-model or --predict-cmd");
      }
      return cmd_verify(opt);
    }
    if (*attack) return cmd_attack(opt);
    if (*eval) return cmd_eval(opt);
    if (*inspect) return cmd_inspect(opt);
    if (*predict) return cmd_predict(opt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
