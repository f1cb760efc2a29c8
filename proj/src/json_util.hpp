#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <utility>

#include "errors.hpp"

namespace wmdl {

// Run a JSON-reading block, surfacing malformed documents as config errors.
template <typename F>
auto with_config_errors(const char* context, F&& f) {
  try {
    return std::forward<F>(f)();
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string(context) + ": " + e.what());
  }
}

inline nlohmann::json parse_json(const std::string& text, const char* context) {
  return with_config_errors(context, [&] { return nlohmann::json::parse(text); });
}

}  // namespace wmdl
