#pragma once

#include <stdexcept>
#include <string>

namespace wmdl {

// Bad configuration, schema mismatch, or malformed input files.
// The CLI maps these to exit code 2.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures that arise while fitting or evaluating on valid inputs
// (degenerate folds, single-class training data, ...). CLI exit code 1.
struct fit_error : std::runtime_error {
  explicit fit_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wmdl
