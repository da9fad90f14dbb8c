#include "treesign/model_io.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "treesign/detail/sha256.hpp"
#include "treesign/errors.hpp"

namespace treesign {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

// Cursor over whitespace-separated tokens; line structure is only cosmetic
// in the format, tokens are what carry the data.
class TokenReader {
 public:
  explicit TokenReader(std::string_view text) : text_(text) {}

  std::string_view next(const char* what) {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    if (pos_ >= text_.size()) {
      throw IntegrityError(std::string("truncated file: expected ") + what);
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void expect(std::string_view literal) {
    const std::string_view tok = next(std::string(literal).c_str());
    if (tok != literal) {
      throw IntegrityError("malformed file: expected '" +
                           std::string(literal) + "', got '" +
                           std::string(tok) + "'");
    }
  }

  std::int64_t next_int(const char* what) {
    const std::string_view tok = next(what);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
      throw IntegrityError(std::string("malformed integer for ") + what +
                           ": '" + std::string(tok) + "'");
    }
    return v;
  }

  double next_double(const char* what) {
    const std::string_view tok = next(what);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
      throw IntegrityError(std::string("malformed number for ") + what +
                           ": '" + std::string(tok) + "'");
    }
    return v;
  }

  bool at_end() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    return pos_ >= text_.size();
  }

 private:
  static bool is_space(char c) {
    return c == ' ' || c == '\n' || c == '\r' || c == '\t';
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void validate_tree(const RegressionTree& tree, int num_features,
                   const BinningMap& map) {
  const std::size_t n = tree.nodes.size();
  if (n == 0) throw IntegrityError("tree with no nodes");
  std::vector<int> parents(n, 0);
  std::size_t edges = 0;
  for (std::size_t id = 0; id < n; ++id) {
    const TreeNode& node = tree.nodes[id];
    if (node.is_leaf()) continue;
    if (node.feature >= num_features) {
      throw IntegrityError("node " + std::to_string(id) +
                           " splits on unknown feature " +
                           std::to_string(node.feature));
    }
    if (node.threshold >= map.bin_count(node.feature)) {
      throw IntegrityError("node " + std::to_string(id) +
                           " threshold outside feature bins");
    }
    for (const std::int32_t child : {node.left, node.right}) {
      if (child < 0 || child >= static_cast<std::int32_t>(n)) {
        throw IntegrityError("node " + std::to_string(id) +
                             " references out-of-range child " +
                             std::to_string(child));
      }
      if (child == 0) {
        throw IntegrityError("node " + std::to_string(id) +
                             " references the root as a child");
      }
      if (++parents[child] > 1) {
        throw IntegrityError("node " + std::to_string(child) +
                             " has more than one parent");
      }
      ++edges;
    }
  }
  if (edges != n - 1) {
    throw IntegrityError("node graph is not a single rooted tree");
  }
}

void write_keyset(std::string& out, const SignatureKeySet& keys) {
  out += "tsk 1\n";
  out += "model " + keys.model_fingerprint + "\n";
  out += "keys " + std::to_string(keys.keys.size()) + "\n";
  out += "message " + keys.expected.to_string() + "\n";
  for (std::size_t i = 0; i < keys.keys.size(); ++i) {
    const SignatureKey& key = keys.keys[i];
    out += "key " + std::to_string(i) + "\n";
    out += "classes " + std::to_string(key.original_class) + " " +
           std::to_string(key.flip_class) + "\n";
    out += "gap ";
    append_double(out, key.gap);
    out += "\nleaf " + std::to_string(key.free_leaf.iteration) + " " +
           std::to_string(key.free_leaf.tree_class) + " " +
           std::to_string(key.free_leaf.node) + "\n";
    out += "direction " + std::to_string(key.direction) + "\n";
    out += "perturbation ";
    append_double(out, key.perturbation);
    out += "\nrestore ";
    append_double(out, key.restore_value);
    out += "\npoint " + std::to_string(key.raw_point.size());
    for (double v : key.raw_point) {
      out += ' ';
      append_double(out, v);
    }
    out += "\nbins " + std::to_string(key.bin_point.size());
    for (std::uint32_t b : key.bin_point) {
      out += ' ';
      out += std::to_string(b);
    }
    out += "\n";
  }
  out += "end tsk\n";
}

}  // namespace

std::string save_model(const Ensemble& model) {
  std::string out;
  out += "tsm 1\n";
  out += "criterion " + to_string(model.criterion) + "\n";
  out += "classes " + std::to_string(model.num_classes) + "\n";
  out += "iterations " + std::to_string(model.iterations) + "\n";
  out += "max_leaves " + std::to_string(model.max_leaves) + "\n";
  out += "learning_rate ";
  append_double(out, model.learning_rate);
  out += "\ndamping ";
  append_double(out, model.damping);
  out += "\nseed " + std::to_string(model.seed) + "\n";

  const int D = model.bins.num_features();
  out += "features " + std::to_string(D) + "\n";
  for (int d = 0; d < D; ++d) {
    const FeatureBins& fb = model.bins.feature(d);
    out += "feature " + std::to_string(d) + " bins " +
           std::to_string(fb.representatives.size()) + "\n";
    out += "reps";
    for (double v : fb.representatives) {
      out += ' ';
      append_double(out, v);
    }
    out += "\ncuts";
    for (double v : fb.cuts) {
      out += ' ';
      append_double(out, v);
    }
    out += "\n";
  }

  out += "trees " +
         std::to_string(static_cast<std::size_t>(model.iterations) *
                        model.num_classes) +
         "\n";
  for (int m = 0; m < model.iterations; ++m) {
    for (int k = 0; k < model.num_classes; ++k) {
      const RegressionTree& tree = model.trees[m][k];
      out += "tree " + std::to_string(m) + " " + std::to_string(k) +
             " nodes " + std::to_string(tree.nodes.size()) + "\n";
      for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const TreeNode& node = tree.nodes[id];
        if (node.is_leaf()) {
          out += "n " + std::to_string(id) + " l ";
          append_double(out, node.value);
          out += "\n";
        } else {
          out += "n " + std::to_string(id) + " s " +
                 std::to_string(node.feature) + " " +
                 std::to_string(node.threshold) + " " +
                 std::to_string(node.left) + " " + std::to_string(node.right) +
                 "\n";
        }
      }
    }
  }
  out += "end tsm\n";
  return out;
}

Ensemble load_model(std::string_view bytes) {
  TokenReader in(bytes);
  in.expect("tsm");
  const std::int64_t version = in.next_int("format version");
  if (version != 1) {
    throw IntegrityError("unsupported model format version " +
                         std::to_string(version));
  }

  Ensemble model;
  in.expect("criterion");
  model.criterion = criterion_from_string(std::string(in.next("criterion")));
  in.expect("classes");
  model.num_classes = static_cast<int>(in.next_int("classes"));
  in.expect("iterations");
  model.iterations = static_cast<int>(in.next_int("iterations"));
  in.expect("max_leaves");
  model.max_leaves = static_cast<int>(in.next_int("max_leaves"));
  in.expect("learning_rate");
  model.learning_rate = in.next_double("learning_rate");
  in.expect("damping");
  model.damping = in.next_double("damping");
  in.expect("seed");
  model.seed = static_cast<std::uint64_t>(in.next_int("seed"));

  if (model.num_classes < 2) throw IntegrityError("model needs >= 2 classes");
  if (model.iterations < 0) throw IntegrityError("negative iteration count");
  if (model.learning_rate <= 0.0 || model.learning_rate > 1.0) {
    throw IntegrityError("learning rate outside (0, 1]");
  }

  in.expect("features");
  const int D = static_cast<int>(in.next_int("feature count"));
  if (D < 0) throw IntegrityError("negative feature count");
  std::vector<FeatureBins> features(D);
  for (int d = 0; d < D; ++d) {
    in.expect("feature");
    if (in.next_int("feature id") != d) {
      throw IntegrityError("feature table out of order");
    }
    in.expect("bins");
    const std::int64_t bins = in.next_int("bin count");
    if (bins < 1) throw IntegrityError("feature with no bins");
    in.expect("reps");
    features[d].representatives.resize(bins);
    for (auto& v : features[d].representatives) v = in.next_double("rep");
    in.expect("cuts");
    features[d].cuts.resize(bins - 1);
    for (auto& v : features[d].cuts) v = in.next_double("cut");
    for (std::size_t c = 1; c < features[d].cuts.size(); ++c) {
      if (features[d].cuts[c] <= features[d].cuts[c - 1]) {
        throw IntegrityError("cuts not strictly increasing for feature " +
                             std::to_string(d));
      }
    }
  }
  model.bins = BinningMap(std::move(features));

  in.expect("trees");
  const std::int64_t tree_count = in.next_int("tree count");
  if (tree_count !=
      static_cast<std::int64_t>(model.iterations) * model.num_classes) {
    throw IntegrityError("tree count does not equal iterations x classes");
  }
  model.trees.assign(model.iterations,
                     std::vector<RegressionTree>(model.num_classes));
  for (int m = 0; m < model.iterations; ++m) {
    for (int k = 0; k < model.num_classes; ++k) {
      in.expect("tree");
      if (in.next_int("tree iteration") != m ||
          in.next_int("tree class") != k) {
        throw IntegrityError("tree list out of order");
      }
      in.expect("nodes");
      const std::int64_t node_count = in.next_int("node count");
      if (node_count < 1) throw IntegrityError("tree with no nodes");
      RegressionTree& tree = model.trees[m][k];
      tree.nodes.resize(node_count);
      for (std::int64_t id = 0; id < node_count; ++id) {
        in.expect("n");
        if (in.next_int("node id") != id) {
          throw IntegrityError("node records out of order");
        }
        const std::string_view kind = in.next("node kind");
        TreeNode& node = tree.nodes[id];
        if (kind == "l") {
          node.value = in.next_double("leaf value");
        } else if (kind == "s") {
          node.feature = static_cast<std::int32_t>(in.next_int("feature"));
          node.threshold =
              static_cast<std::uint32_t>(in.next_int("threshold"));
          node.left = static_cast<std::int32_t>(in.next_int("left child"));
          node.right = static_cast<std::int32_t>(in.next_int("right child"));
          if (node.feature < 0) {
            throw IntegrityError("node " + std::to_string(id) +
                                 " has negative feature id");
          }
        } else {
          throw IntegrityError("unknown node kind '" + std::string(kind) +
                               "'");
        }
      }
      validate_tree(tree, D, model.bins);
    }
  }
  in.expect("end");
  in.expect("tsm");
  if (!in.at_end()) throw IntegrityError("trailing data after model");
  return model;
}

void save_model_file(const Ensemble& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const std::string bytes = save_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Ensemble load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_model(buf.str());
}

std::string model_fingerprint(const Ensemble& model) {
  return detail::sha256_hex(save_model(model));
}

std::string save_keys(const SignatureKeySet& keys) {
  if (keys.keys.empty()) {
    throw std::invalid_argument("refusing to save an empty key set");
  }
  if (keys.expected.size() != keys.keys.size()) {
    throw std::invalid_argument("message length does not match key count");
  }
  std::string out;
  write_keyset(out, keys);
  return out;
}

SignatureKeySet load_keys(std::string_view bytes,
                          std::string_view expected_fingerprint) {
  TokenReader in(bytes);
  in.expect("tsk");
  if (in.next_int("format version") != 1) {
    throw IntegrityError("unsupported key format version");
  }
  SignatureKeySet keys;
  in.expect("model");
  keys.model_fingerprint = std::string(in.next("fingerprint"));
  if (keys.model_fingerprint.size() != 64) {
    throw IntegrityError("fingerprint is not a sha256 hex digest");
  }
  if (!expected_fingerprint.empty() &&
      keys.model_fingerprint != expected_fingerprint) {
    throw IntegrityError(
        "key file belongs to a different model (fingerprint mismatch)");
  }
  in.expect("keys");
  const std::int64_t count = in.next_int("key count");
  if (count < 1) throw IntegrityError("key set must hold at least one key");
  in.expect("message");
  keys.expected = SignatureMessage::from_string(std::string(in.next("message")));
  if (static_cast<std::int64_t>(keys.expected.size()) != count) {
    throw IntegrityError("message length does not match key count");
  }

  std::set<std::tuple<int, int, std::int32_t>> seen_leaves;
  for (std::int64_t i = 0; i < count; ++i) {
    in.expect("key");
    if (in.next_int("key index") != i) {
      throw IntegrityError("key records out of order");
    }
    SignatureKey key;
    in.expect("classes");
    key.original_class = static_cast<int>(in.next_int("original class"));
    key.flip_class = static_cast<int>(in.next_int("flip class"));
    if (key.original_class == key.flip_class) {
      throw IntegrityError("key flips to its own class");
    }
    in.expect("gap");
    key.gap = in.next_double("gap");
    in.expect("leaf");
    key.free_leaf.iteration = static_cast<int>(in.next_int("leaf iteration"));
    key.free_leaf.tree_class = static_cast<int>(in.next_int("leaf class"));
    key.free_leaf.node = static_cast<std::int32_t>(in.next_int("leaf node"));
    in.expect("direction");
    key.direction = static_cast<int>(in.next_int("direction"));
    in.expect("perturbation");
    key.perturbation = in.next_double("perturbation");
    in.expect("restore");
    key.restore_value = in.next_double("restore value");
    in.expect("point");
    const std::int64_t point_size = in.next_int("point size");
    if (point_size < 0 || point_size > (1 << 24)) {
      throw IntegrityError("implausible point size");
    }
    key.raw_point.resize(point_size);
    for (auto& v : key.raw_point) v = in.next_double("point value");
    in.expect("bins");
    const std::int64_t bin_size = in.next_int("bin point size");
    if (bin_size != point_size) {
      throw IntegrityError("bin point size does not match raw point size");
    }
    key.bin_point.resize(bin_size);
    for (auto& b : key.bin_point) {
      b = static_cast<std::uint32_t>(in.next_int("bin value"));
    }
    const auto leaf_id = std::make_tuple(
        key.free_leaf.iteration, key.free_leaf.tree_class, key.free_leaf.node);
    if (!seen_leaves.insert(leaf_id).second) {
      throw IntegrityError("key " + std::to_string(i) +
                           " shares its free leaf with another key");
    }
    keys.keys.push_back(std::move(key));
  }
  in.expect("end");
  in.expect("tsk");
  if (!in.at_end()) throw IntegrityError("trailing data after key set");
  return keys;
}

void save_keys_file(const SignatureKeySet& keys, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const std::string bytes = save_keys(keys);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

SignatureKeySet load_keys_file(const std::string& path,
                               std::string_view expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open key file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_keys(buf.str(), expected_fingerprint);
}

}  // namespace treesign
