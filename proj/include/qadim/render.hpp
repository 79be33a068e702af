#pragma once

// Plain-text renderings shared by the CLI and the determinism checks.

#include <string>

#include "qadim/dimension.hpp"
#include "qadim/experiments.hpp"

namespace qadim {

inline std::string witness_string(const NodePath& p) {
  return branching(p.dim()) <= 36 ? (p.is_root() ? std::string("-") : p.str()) : std::string("?");
}

inline std::string render_stat(const RatioPair& s, const LevelChoice& lc) {
  std::string out;
  out += "level " + std::to_string(lc.level) + "\n";
  out += std::string("capped ") + (lc.capped ? "true" : "false") + "\n";
  out += std::string("multi_level ") + (s.upper.multi_level ? "true" : "false") + "\n";
  out += "m " + std::to_string(s.upper.m) + "\n";
  out += "upper_log2 " + format_double(s.upper.log2_value) + "\n";
  out += "upper_exponent " + format_double(s.upper.exponent()) + "\n";
  out += "upper_witness " + witness_string(s.upper.witness) + "\n";
  out += "lower_log2 " + format_double(s.lower.log2_value) + "\n";
  out += "lower_exponent " + format_double(s.lower.exponent()) + "\n";
  out += "lower_witness " + witness_string(s.lower.witness) + "\n";
  return out;
}

inline std::string render_profile(const DimensionProfile& profile) {
  std::string out = "m,scale,level,capped,upper_exponent,lower_exponent\n";
  for (const auto& r : profile.rows) {
    out += std::to_string(r.m) + "," + r.scale_tag + "," + std::to_string(r.level) + "," +
           (r.capped ? "true" : "false") + "," + format_double(r.upper_exponent) + "," +
           format_double(r.lower_exponent) + "\n";
  }
  return out;
}

}  // namespace qadim
