#pragma once

#include <stdexcept>
#include <string>

namespace treesign {

// Malformed input text (datasets, model files). Carries a message that
// names the offending line or field.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structural damage in a loaded artifact: bad node graph, truncated file,
// fingerprint mismatch between a key file and the model it is used with.
class IntegrityError : public std::runtime_error {
 public:
  explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Candidate search or key selection produced nothing usable.
class SearchError : public std::runtime_error {
 public:
  explicit SearchError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace treesign
