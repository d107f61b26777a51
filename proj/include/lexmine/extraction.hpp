#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lexmine/corpus.hpp"
#include "lexmine/schema.hpp"

// Turns model replies into categories or scores.
namespace lexmine::extraction {

enum class Mode { result, cot, score };

Mode mode_from_string(std::string_view s);
std::string_view to_string(Mode m) noexcept;

enum class MalformedPolicy { count_as_wrong, fallback_to_none_category };

MalformedPolicy malformed_policy_from_string(std::string_view s);

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string match;  // category id or integer text
};

struct ExtractionOutcome {
  std::optional<Gold> value;
  Mode mode = Mode::result;
  std::map<CategoryId, std::size_t> counts;  // only categories that were mentioned
  std::vector<Span> spans;
  bool malformed = false;
  bool ambiguous = false;  // result mode named more than one category

  nlohmann::json to_json() const;
};

/// Category extraction with a prebuilt matcher.
///
/// result: one distinct category mentioned -> that category. Several -> the
/// most mentioned, ties to the latest mention, flagged ambiguous.
/// cot: the most mentioned category, ties to the latest mention.
/// No mention -> malformed; the value stays empty unless the policy falls
/// back to the schema's none category.
class CategoryExtractor {
 public:
  explicit CategoryExtractor(const LabelSchema& schema, MalformedPolicy policy = MalformedPolicy::count_as_wrong);

  ExtractionOutcome extract(std::string_view response, Mode mode) const;
  const LabelSchema& schema() const noexcept { return schema_; }

 private:
  const LabelSchema& schema_;
  SurfaceMatcher matcher_;
  MalformedPolicy policy_;
};

ExtractionOutcome extract_category(std::string_view response, const LabelSchema& schema, Mode mode,
                                   MalformedPolicy policy = MalformedPolicy::count_as_wrong);

/// Integer scores. Integers glued to letters, decimals and both ends of a
/// dash-joined pair ("10-60", "10 – 60") are skipped, as are values outside
/// the range. score mode takes the first remaining integer, cot mode the last.
ExtractionOutcome extract_score(std::string_view response, const ScoreRange& range, Mode mode = Mode::score);

}  // namespace lexmine::extraction
