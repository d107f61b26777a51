#include <doctest.h>

#include <fstream>

#include "lexmine/extraction.hpp"
#include "support.hpp"

using namespace lexmine;
using namespace lexmine::extraction;

namespace {

const LabelSchema& spwsle() {
  static const LabelSchema s = LabelSchema::load(testing::source_dir() / "experiments/schemas/spwsle.json");
  return s;
}

std::optional<std::string> category(std::string_view reply, Mode mode = Mode::cot) {
  auto out = extract_category(reply, spwsle(), mode);
  if (!out.value) return std::nullopt;
  return std::get<CategoryId>(*out.value);
}

std::optional<int> score(std::string_view reply, ScoreRange r, Mode mode = Mode::score) {
  auto out = extract_score(reply, r, mode);
  if (!out.value) return std::nullopt;
  return std::get<int>(*out.value);
}

}  // namespace

TEST_CASE("result mode: single mention, ambiguity flag") {
  auto one = extract_category("Definition", spwsle(), Mode::result);
  CHECK(std::get<CategoryId>(*one.value) == "D");
  CHECK_FALSE(one.ambiguous);
  CHECK_FALSE(one.malformed);
  REQUIRE(one.spans.size() == 1);
  CHECK(one.spans[0].begin == 0);
  CHECK(one.spans[0].end == 10);

  auto two = extract_category("Premise or Definition", spwsle(), Mode::result);
  CHECK(two.ambiguous);
  CHECK(std::get<CategoryId>(*two.value) == "D");
  CHECK(two.counts.at("P") == 1);
}

TEST_CASE("cot mode: counts and the latest-mention tie rule") {
  CHECK(category("Dies ist Teil der Subsumtion; die Prämisse nennt den Sachverhalt … also: Prämisse.") == "P");
  CHECK(category("It might be a Definition. Or a Conclusion.") == "C");
  CHECK(category("It might be a Conclusion. Or a Definition.") == "D");
  auto out = extract_category("Premise Premise Conclusion", spwsle(), Mode::cot);
  CHECK(out.counts == std::map<CategoryId, std::size_t>{{"P", 2}, {"C", 1}});
}

TEST_CASE("no mention is malformed unless the none fallback applies") {
  auto out = extract_category("This is clearly the RESULT-CLAUSE.", spwsle(), Mode::cot);
  CHECK(out.malformed);
  CHECK_FALSE(out.value.has_value());
  auto fb = extract_category("This is clearly the RESULT-CLAUSE.", spwsle(), Mode::cot,
                             MalformedPolicy::fallback_to_none_category);
  CHECK(fb.malformed);
  CHECK(std::get<CategoryId>(*fb.value) == "N");
}

TEST_CASE("hand-labeled CoT fixture agrees fully") {
  std::ifstream in(testing::source_dir() / "tests/fixtures/cot_extraction.jsonl");
  REQUIRE(in);
  int n = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto response = j.at("response").get<std::string>();
    std::optional<std::string> expected;
    if (!j.at("expected").is_null()) expected = j.at("expected").get<std::string>();
    CAPTURE(response);
    CHECK(category(response) == expected);
    ++n;
  }
  CHECK(n == 50);
}

TEST_CASE("score extraction") {
  CHECK(score("12", {0, 18}) == 12);
  CHECK(score("I would award 95, no \u2014 within 10-60, the essay merits 42.", {10, 60}) == 42);
  CHECK(score("excellent work", {0, 18}) == std::nullopt);
  CHECK(score("Score: 7.5, rounded 8", {0, 18}) == 8);
  CHECK(score("Score: 7,5 then 9", {0, 18}) == 9);
  CHECK(score("the 3rd point; 11 points", {0, 18}) == 11);
  CHECK(score("between 10 – 60 I give 33", {10, 60}) == 33);
  CHECK(score("between 10 \u201460 I give 34", {10, 60}) == 34);
  CHECK(score("1234567890123 or 5", {0, 18}) == 5);
  CHECK(score("First 4, finally 6", {0, 18}, Mode::cot) == 6);
  CHECK(score("First 4, finally 6", {0, 18}, Mode::score) == 4);
  CHECK(extract_score("excellent", {0, 18}).malformed);
}

TEST_CASE("mode and policy names") {
  CHECK(mode_from_string("cot") == Mode::cot);
  CHECK(to_string(Mode::score) == "score");
  CHECK_THROWS(mode_from_string("chain"));
  CHECK(malformed_policy_from_string("fallback_to_none_category") == MalformedPolicy::fallback_to_none_category);
}
