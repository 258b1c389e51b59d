#include "prosteval/grade.hpp"

#include <string>

namespace prosteval {

std::string_view grade_name(Grade g) {
  switch (g) {
    case Grade::gs6: return "GS6";
    case Grade::gs3_4: return "GS3+4";
    case Grade::gs4_3: return "GS4+3";
    case Grade::gs8_plus: return "GS>=8";
  }
  return "?";
}

std::string_view grade_slug(Grade g) {
  switch (g) {
    case Grade::gs6: return "gs6";
    case Grade::gs3_4: return "gs3_4";
    case Grade::gs4_3: return "gs4_3";
    case Grade::gs8_plus: return "gs8";
  }
  return "?";
}

std::optional<Grade> parse_grade(std::string_view text) {
  std::string t;
  for (char c : text) {
    if (c != ' ') t.push_back(static_cast<char>(c >= 'a' && c <= 'z' ? c - 'a' + 'A' : c));
  }
  if (t == "GS6" || t == "6" || t == "3+3" || t == "1") return Grade::gs6;
  if (t == "GS3+4" || t == "GS3_4" || t == "3+4" || t == "2") return Grade::gs3_4;
  if (t == "GS4+3" || t == "GS4_3" || t == "4+3" || t == "3") return Grade::gs4_3;
  if (t == "GS>=8" || t == "GS8" || t == "GS\xE2\x89\xA5" "8" || t == ">=8" || t == "4" || t == "5" ||
      t == "8" || t == "9" || t == "10")
    return Grade::gs8_plus;
  return std::nullopt;
}

std::string_view zone_name(Zone z) {
  switch (z) {
    case Zone::pz: return "PZ";
    case Zone::tz: return "TZ";
    case Zone::unknown: return "unknown";
  }
  return "unknown";
}

std::optional<Zone> parse_zone(std::string_view text) {
  if (text == "PZ" || text == "pz") return Zone::pz;
  if (text == "TZ" || text == "tz") return Zone::tz;
  if (text == "unknown" || text.empty() || text == "AS" || text == "SV") return Zone::unknown;
  return std::nullopt;
}

}  // namespace prosteval
