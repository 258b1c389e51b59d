#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace prosteval {

// Class-label mapping used on disk and in memory:
//
//   label  class        network channel
//   0      background   1
//   1      prostate     2
//   2      GS 6         3
//   3      GS 3+4       4
//   4      GS 4+3       5
//   5      GS >= 8      6
inline constexpr int kNumClasses = 6;
inline constexpr int kNumGrades = 4;

namespace label {
inline constexpr std::uint8_t background = 0;
inline constexpr std::uint8_t prostate = 1;
inline constexpr std::uint8_t gs6 = 2;
inline constexpr std::uint8_t gs3_4 = 3;
inline constexpr std::uint8_t gs4_3 = 4;
inline constexpr std::uint8_t gs8_plus = 5;
}  // namespace label

/// Gleason score group, in ordinal order.
enum class Grade : std::uint8_t { gs6 = 0, gs3_4 = 1, gs4_3 = 2, gs8_plus = 3 };

inline constexpr std::array<Grade, kNumGrades> kAllGrades = {Grade::gs6, Grade::gs3_4, Grade::gs4_3,
                                                             Grade::gs8_plus};

constexpr int grade_index(Grade g) { return static_cast<int>(g); }
constexpr Grade grade_from_index(int i) { return static_cast<Grade>(i); }
constexpr std::uint8_t label_of(Grade g) { return static_cast<std::uint8_t>(label::gs6 + grade_index(g)); }

/// Clinically significant means GS > 6.
constexpr bool is_clinically_significant(Grade g) { return g != Grade::gs6; }
constexpr bool is_cs_label(int l) { return l >= label::gs3_4 && l <= label::gs8_plus; }

constexpr std::optional<Grade> grade_of_label(int l) {
  if (l < label::gs6 || l > label::gs8_plus) return std::nullopt;
  return grade_from_index(l - label::gs6);
}

/// Display name: "GS6", "GS3+4", "GS4+3", "GS>=8".
std::string_view grade_name(Grade g);

/// Short identifier usable in file names: "gs6", "gs3_4", "gs4_3", "gs8".
std::string_view grade_slug(Grade g);

/// Accepts display names, slugs, "GS8", "GS≥8", and ISUP grade groups "1".."5"
/// (4 and 5 both map to GS>=8).
std::optional<Grade> parse_grade(std::string_view text);

/// Prostate zone a cluster or lesion is assigned to.
enum class Zone : std::uint8_t { pz, tz, unknown };

std::string_view zone_name(Zone z);  // "PZ", "TZ", "unknown"
std::optional<Zone> parse_zone(std::string_view text);

}  // namespace prosteval
