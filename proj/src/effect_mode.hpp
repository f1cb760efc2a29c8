#pragma once

#include <string>

#include "errors.hpp"

namespace wmdl {

// Is the treatment effect shared across sources, or source-specific? In the
// heterogeneous case the final effect regression takes the source as input.
enum class EffectMode { homogeneous, heterogeneous };

inline EffectMode effect_mode_from_string(const std::string& s) {
  if (s == "homogeneous" || s == "hom") return EffectMode::homogeneous;
  if (s == "heterogeneous" || s == "het") return EffectMode::heterogeneous;
  throw config_error("unknown effect mode '" + s + "' (want homogeneous|heterogeneous)");
}

inline std::string to_string(EffectMode m) {
  return m == EffectMode::homogeneous ? "homogeneous" : "heterogeneous";
}

}  // namespace wmdl
