#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "lexmine/error.hpp"
#include "lexmine/prompting.hpp"
#include "lexmine/rng.hpp"
#include "lexmine/synth.hpp"
#include "support.hpp"

using namespace lexmine;
using namespace lexmine::prompting;

namespace {

LabelSchema six() { return synth::six_class_schema(); }

PromptBuilder builder(bool with_explanation = true) {
  auto t = PromptTemplateSet::defaults();
  if (with_explanation) t.explanation = "Explanation of the Definition and the Subsumption.";
  return PromptBuilder(t, Target(six()));
}

Item item(const std::string& id, const std::string& text, const std::string& label) {
  return Item{id, "doc", 0, text, CategoryId(label)};
}

std::vector<Exemplar> shots(std::size_t n, bool rationale = false) {
  const char* labels[] = {"MC", "C", "D", "S", "LC", "P"};
  std::vector<Exemplar> out;
  for (std::size_t i = 0; i < n; ++i) {
    Exemplar e{"s" + std::to_string(i), "shot text about the Premise " + std::to_string(i), CategoryId(labels[i % 6]),
               std::nullopt};
    if (rationale) e.rationale = "It reads like a " + std::string(labels[i % 6]) + ".";
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("render fills slots and rejects unknown ones") {
  CHECK(render("a {{x}} b {{y}}", {{"x", "1"}, {"y", "2"}}) == "a 1 b 2");
  CHECK_THROWS(render("{{missing}}", {}));
  CHECK(render("no slots", {}) == "no slots");
}

TEST_CASE("zero-shot and ten-shot arities") {
  auto b = builder();
  auto q = item("q", "query text", "D");
  auto zero = b.build(q, {}, {});
  REQUIRE(zero.messages.size() == 2);
  CHECK(zero.messages[0].role == llm::Role::system);
  CHECK(zero.messages[1].role == llm::Role::user);
  CHECK(zero.messages[1].content.find("query text") != std::string::npos);

  auto s = shots(10);
  auto ten = b.build(q, s, {});
  CHECK(ten.messages.size() == 22);
  CHECK(ten.messages[2].role == llm::Role::assistant);
  CHECK(ten.messages[2].content == "Major Claim");
  CHECK(ten.messages.back().content == zero.messages.back().content);
}

TEST_CASE("system prompt names the categories and the default query wording") {
  auto b = builder();
  const auto sys = b.system_prompt(true);
  CHECK(sys.find("Annotate texts according to the Gutachtenstil.") == 0);
  CHECK(sys.find("“Major Claim”, “Conclusion”, “Definition”, “Subsumption”, “Legal Claim” or “Premise”") !=
        std::string::npos);
  CHECK(b.render_query("T", extraction::Mode::result).find("Which part of the Gutachtenstil is this?") !=
        std::string::npos);
  const auto cot = b.render_query("T", extraction::Mode::cot);
  CHECK(cot.find("Briefly explain your decision in German, up to 100 words.") != std::string::npos);
}

TEST_CASE("explanation off removes exactly the explanation block") {
  auto b = builder();
  const auto on = b.system_prompt(true);
  const auto off = b.system_prompt(false);
  const auto block = b.explanation_block();
  REQUIRE_FALSE(block.empty());
  CHECK(on.size() - off.size() == block.size());
  auto stripped = on;
  stripped.erase(stripped.find(block), block.size());
  CHECK(stripped == off);
  CHECK(builder(false).system_prompt(true) == off);
}

TEST_CASE("CoT shots need rationales, zero-shot CoT does not") {
  auto b = builder();
  auto q = item("q", "query", "S");
  PromptOptions cot;
  cot.mode = extraction::Mode::cot;
  auto plain = shots(2);
  CHECK_THROWS_WITH(b.build(q, plain, cot), doctest::Contains("CoT shots require rationales"));
  CHECK(b.build(q, {}, cot).messages.size() == 2);
  auto with = shots(2, true);
  auto bundle = b.build(q, with, cot);
  CHECK(bundle.messages[2].content == "It reads like a MC.");
}

TEST_CASE("pseudonym maps are seeded bijections") {
  auto s = six();
  auto m = pseudonymize(s, 99, "r");
  auto m2 = pseudonymize(s, 99, "r");
  CHECK(m.forward == m2.forward);
  std::set<CategoryId> images;
  for (auto& [k, v] : m.forward) images.insert(v);
  CHECK(images.size() == 6);
  auto inv = m.inverse();
  for (auto c : s.categories()) {
    CHECK(m.invert(m.apply(c)) == c);
    CHECK(inv.apply(m.apply(c)) == c);
  }
  LabelSchema::Spec one;
  one.name = "one";
  one.categories = {"A"};
  one.display = {{"A", {"Alpha"}}};
  CHECK_THROWS(pseudonymize(LabelSchema(one), 1));
}

TEST_CASE("two categories: identity and swap are equally likely") {
  LabelSchema::Spec sp;
  sp.name = "two";
  sp.categories = {"A", "B"};
  sp.display = {{"A", {"Alpha"}}, {"B", {"Beta"}}};
  LabelSchema two(sp);
  // Both permutations have probability 1/2; n = 4000 gives sd ~31.6.
  const int n = 4000;
  int identity = 0;
  for (int s = 0; s < n; ++s) identity += pseudonymize(two, derive_seed(5, std::to_string(s))).apply("A") == "A";
  CHECK(std::abs(identity - n / 2) < 4 * 31.7);
}

TEST_CASE("pseudonymized bundle round-trips to the plain bundle") {
  auto b = builder();
  auto q = item("q", "query mentions a Legal Claim and Prämisse", "LC");
  auto s = shots(6);
  auto plain = b.build(q, s, {});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PromptOptions o;
    o.pseudonyms = pseudonymize(b.target().schema(), seed, "q");
    auto p = b.build(q, s, o);
    CHECK(p.restored() == plain.messages);
    CHECK(p.answer_key == b.target().schema().primary_form(o.pseudonyms->apply("LC")));
    // every rendered category name in the prompt is a pseudonym image
    for (auto& sub : p.substitutions) {
      auto got = p.messages[sub.message].content.substr(sub.begin, sub.end - sub.begin);
      CHECK(std::find(p.choices.begin(), p.choices.end(), got) != p.choices.end());
    }
  }
}

TEST_CASE("oracle mock answers the primary form and decoding inverts pseudonyms") {
  auto b = builder();
  extraction::CategoryExtractor ex(b.target().schema());
  llm::MockChatBackend oracle("oracle", llm::MockPolicy{});
  auto q = item("q", "query", "P");
  auto plain = b.build(q, {}, {});
  const auto reply = oracle.complete(make_request(plain, "oracle", "m", 64));
  CHECK(reply == "Premise");
  CHECK(std::get<CategoryId>(*decode_reply(reply, plain, b.target(), &ex).value) == "P");

  PromptOptions o;
  o.pseudonyms = pseudonymize(b.target().schema(), 3, "q");
  auto pb = b.build(q, {}, o);
  const auto preply = oracle.complete(make_request(pb, "oracle", "m", 64));
  CHECK(preply == b.target().schema().primary_form(o.pseudonyms->apply("P")));
  auto out = decode_reply(preply, pb, b.target(), &ex);
  CHECK(std::get<CategoryId>(*out.value) == "P");
  CHECK(out.counts.at("P") == 1);
}

TEST_CASE("request metadata lists the admissible answers") {
  auto b = builder();
  auto bundle = b.build(item("q", "t", "D"), {}, {});
  auto r = make_request(bundle, "x", "m", 32, 0.0);
  CHECK(r.metadata.at(llm::meta::answer) == "Definition");
  CHECK(r.metadata.at(llm::meta::choices).find("Legal Claim\n") != std::string::npos);
  CHECK(r.metadata.at(llm::meta::mode) == "result");
  CHECK(r.wire_json().dump().find("Legal Claim\\n") == std::string::npos);
}

TEST_CASE("scoring prompts carry the range") {
  PromptBuilder b(PromptTemplateSet::defaults(), Target(ScoreRange{10, 60}));
  Item q{"e1", "e1", 0, "An essay.", 42};
  auto bundle = b.build(q, {}, {});
  CHECK(bundle.messages[0].content.find("10") != std::string::npos);
  CHECK(bundle.messages[0].content.find("60") != std::string::npos);
  CHECK(bundle.answer_key == "42");
  CHECK(bundle.choices.size() == 51);
  PromptOptions o;
  o.pseudonyms = PseudonymMap{};
  CHECK_THROWS(b.build(q, {}, o));
  auto out = decode_reply("I give 42.", bundle, b.target(), nullptr);
  CHECK(std::get<int>(*out.value) == 42);
}

TEST_CASE("templates load from json with an explanation file") {
  testing::TempDir dir;
  testing::write_file(dir / "expl.txt", "Explained.\n");
  testing::write_file(dir / "t.json", R"({"explanation_file": "expl.txt", "language": "English", "word_budget": 50})");
  auto t = PromptTemplateSet::load(dir / "t.json");
  CHECK(t.explanation == "Explained.\n");
  CHECK(t.language == "English");
  PromptBuilder b(t, Target(six()));
  CHECK(b.explanation_block() == "Explained.\n\n");
  CHECK(b.render_query("x", extraction::Mode::cot).find("in English, up to 50 words") != std::string::npos);
  testing::write_file(dir / "bad.json", R"({"system": "{{nonsense}}"})");
  CHECK_THROWS(PromptTemplateSet::load(dir / "bad.json"));
  auto shipped = PromptTemplateSet::load(testing::source_dir() / "experiments/templates/spwsle.json");
  CHECK_FALSE(shipped.explanation.empty());
}
