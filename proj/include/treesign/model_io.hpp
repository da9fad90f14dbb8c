#pragma once

#include <string>
#include <string_view>

#include "treesign/booster.hpp"
#include "treesign/signing.hpp"

namespace treesign {

// Canonical text serialization (.tsm): stable field order, exact decimal
// round-trip floats, no timestamps. Identical ensembles give identical bytes.
std::string save_model(const Ensemble& model);
Ensemble load_model(std::string_view bytes);

void save_model_file(const Ensemble& model, const std::string& path);
Ensemble load_model_file(const std::string& path);

// SHA-256 of the canonical model bytes, lowercase hex.
std::string model_fingerprint(const Ensemble& model);

// Key set serialization (.tsk); the stored fingerprint binds the keys to the
// exact model they were selected from.
std::string save_keys(const SignatureKeySet& keys);

// expected_fingerprint, when non-empty, must match the stored one
// (IntegrityError otherwise — wrong model for these keys).
SignatureKeySet load_keys(std::string_view bytes,
                          std::string_view expected_fingerprint = {});

void save_keys_file(const SignatureKeySet& keys, const std::string& path);
SignatureKeySet load_keys_file(const std::string& path,
                               std::string_view expected_fingerprint = {});

}  // namespace treesign
