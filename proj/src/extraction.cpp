#include "lexmine/extraction.hpp"

#include <cctype>

#include "lexmine/error.hpp"

namespace lexmine::extraction {

Mode mode_from_string(std::string_view s) {
  if (s == "result") return Mode::result;
  if (s == "cot") return Mode::cot;
  if (s == "score") return Mode::score;
  throw Error("unknown extraction mode " + std::string(s));
}

std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::result: return "result";
    case Mode::cot: return "cot";
    case Mode::score: return "score";
  }
  return "?";
}

MalformedPolicy malformed_policy_from_string(std::string_view s) {
  if (s == "count_as_wrong") return MalformedPolicy::count_as_wrong;
  if (s == "fallback_to_none_category") return MalformedPolicy::fallback_to_none_category;
  throw Error("unknown malformed policy " + std::string(s));
}

nlohmann::json ExtractionOutcome::to_json() const {
  nlohmann::json j;
  j["value"] = value ? gold_to_json(*value) : nlohmann::json(nullptr);
  j["mode"] = to_string(mode);
  j["counts"] = counts;
  j["spans"] = nlohmann::json::array();
  for (const auto& s : spans) j["spans"].push_back({s.begin, s.end, s.match});
  j["malformed"] = malformed;
  j["ambiguous"] = ambiguous;
  return j;
}

CategoryExtractor::CategoryExtractor(const LabelSchema& schema, MalformedPolicy policy)
    : schema_(schema), matcher_(schema), policy_(policy) {
  if (policy_ == MalformedPolicy::fallback_to_none_category && !schema_.none_category()) {
    throw SchemaError("fallback_to_none_category needs a schema with a none category");
  }
}

ExtractionOutcome CategoryExtractor::extract(std::string_view response, Mode mode) const {
  if (mode == Mode::score) throw Error("category extraction does not take score mode");
  ExtractionOutcome out;
  out.mode = mode;
  const auto mentions = matcher_.find_all(response);

  std::vector<std::size_t> count(schema_.size(), 0);
  std::vector<std::size_t> last(schema_.size(), 0);
  for (const auto& m : mentions) {
    ++count[m.category];
    last[m.category] = m.begin + 1;
    out.spans.push_back(Span{m.begin, m.end, schema_.category(m.category)});
  }
  std::size_t distinct = 0;
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < count.size(); ++c) {
    if (!count[c]) continue;
    ++distinct;
    out.counts[schema_.category(c)] = count[c];
    if (!best || count[c] > count[*best] || (count[c] == count[*best] && last[c] > last[*best])) best = c;
  }
  if (!best) {
    out.malformed = true;
    if (policy_ == MalformedPolicy::fallback_to_none_category) out.value = *schema_.none_category();
    return out;
  }
  out.ambiguous = mode == Mode::result && distinct > 1;
  out.value = schema_.category(*best);
  return out;
}

ExtractionOutcome extract_category(std::string_view response, const LabelSchema& schema, Mode mode,
                                   MalformedPolicy policy) {
  return CategoryExtractor(schema, policy).extract(response, mode);
}

namespace {

struct Number {
  std::size_t begin, end;
  long long value;
  bool skip;
};

bool is_alpha_byte(unsigned char c) { return std::isalpha(c) || c >= 0x80; }

// Length of a dash (ASCII hyphen, en dash, em dash) at `pos`, else 0.
std::size_t dash_at(std::string_view s, std::size_t pos) {
  if (pos < s.size() && s[pos] == '-') return 1;
  if (pos + 2 < s.size() && static_cast<unsigned char>(s[pos]) == 0xE2 &&
      static_cast<unsigned char>(s[pos + 1]) == 0x80 &&
      (static_cast<unsigned char>(s[pos + 2]) == 0x93 || static_cast<unsigned char>(s[pos + 2]) == 0x94)) {
    return 3;
  }
  return 0;
}

std::vector<Number> scan_numbers(std::string_view s) {
  std::vector<Number> nums;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    Number n{i, j, 0, false};
    if (j - i > 9) {
      n.skip = true;
    } else {
      n.value = std::stoll(std::string(s.substr(i, j - i)));
    }
    const bool letter_before = i > 0 && is_alpha_byte(static_cast<unsigned char>(s[i - 1]));
    const bool letter_after = j < s.size() && is_alpha_byte(static_cast<unsigned char>(s[j]));
    const bool decimal_before = i > 1 && (s[i - 1] == '.' || s[i - 1] == ',') &&
                                std::isdigit(static_cast<unsigned char>(s[i - 2]));
    const bool decimal_after = j + 1 < s.size() && (s[j] == '.' || s[j] == ',') &&
                               std::isdigit(static_cast<unsigned char>(s[j + 1]));
    if (letter_before || letter_after || decimal_before || decimal_after) n.skip = true;
    nums.push_back(n);
    i = j;
  }
  // dash-joined pairs
  for (std::size_t k = 0; k + 1 < nums.size(); ++k) {
    std::size_t p = nums[k].end;
    while (p < nums[k + 1].begin && s[p] == ' ') ++p;
    const std::size_t d = dash_at(s, p);
    if (!d) continue;
    p += d;
    while (p < nums[k + 1].begin && s[p] == ' ') ++p;
    if (p == nums[k + 1].begin) nums[k].skip = nums[k + 1].skip = true;
  }
  return nums;
}

}  // namespace

ExtractionOutcome extract_score(std::string_view response, const ScoreRange& range, Mode mode) {
  range.validate();
  if (mode == Mode::result) mode = Mode::score;
  ExtractionOutcome out;
  out.mode = mode;
  std::optional<Number> pick;
  for (const auto& n : scan_numbers(response)) {
    if (n.skip || n.value < range.min || n.value > range.max) continue;
    out.spans.push_back(Span{n.begin, n.end, std::to_string(n.value)});
    if (!pick || mode == Mode::cot) pick = n;
  }
  if (!pick) {
    out.malformed = true;
    return out;
  }
  out.value = static_cast<int>(pick->value);
  return out;
}

}  // namespace lexmine::extraction
