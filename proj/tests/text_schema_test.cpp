#include <doctest.h>

#include <map>
#include <set>

#include "lexmine/digest.hpp"
#include "lexmine/error.hpp"
#include "lexmine/rng.hpp"
#include "lexmine/schema.hpp"
#include "lexmine/synth.hpp"
#include "lexmine/text.hpp"
#include "support.hpp"

using namespace lexmine;

TEST_CASE("sha256 and fnv reference vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("derive_seed separates tags and bases") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
}

TEST_CASE("Rng uniform_index covers its range evenly") {
  Rng r(5);
  std::map<std::size_t, int> counts;
  for (int i = 0; i < 60000; ++i) counts[r.uniform_index(6)]++;
  CHECK(counts.size() == 6);
  for (auto& [k, c] : counts) CHECK(std::abs(c - 10000) < 500);  // ~5 sd
  Rng a(9), b(9);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("tokenize splits on punctuation and folds case") {
  auto t = text::tokenize("Die Prämisse, also: ÄRGER-frei 42x!");
  std::vector<std::string> words;
  for (auto& x : t) words.push_back(x.folded);
  CHECK(words == std::vector<std::string>{"die", "prämisse", "also", "ärger", "frei", "42x"});
  CHECK(t[1].begin == 4);
  CHECK(t[1].end == 4 + std::string("Prämisse").size());
  CHECK(text::casefold("ΣΟΦΙΑ Жук Straße") == "σοφια жук straße");
}

TEST_CASE("utf8 validation and latin1 transcoding") {
  CHECK(text::is_valid_utf8("Prämisse"));
  CHECK_FALSE(text::is_valid_utf8(std::string("Pr\xe4misse")));
  CHECK(text::latin1_to_utf8(std::string("Pr\xe4misse")) == "Prämisse");
  CHECK(text::trim("  a b \n") == "a b");
}

TEST_CASE("schema rejects inconsistent specs") {
  LabelSchema::Spec s;
  s.name = "x";
  CHECK_THROWS_AS(LabelSchema{s}, SchemaError);
  s.categories = {"A", "A"};
  CHECK_THROWS_AS(LabelSchema{s}, SchemaError);
  s.categories = {"A", "B"};
  s.display = {{"A", {"Same"}}, {"B", {"same"}}};
  CHECK_THROWS_AS(LabelSchema{s}, SchemaError);
  s.display = {{"A", {"Alpha"}}, {"B", {"Beta"}}};
  s.none_category = "Z";
  CHECK_THROWS_AS(LabelSchema{s}, SchemaError);
  s.none_category.reset();
  s.tier1_map = {{"A", "Q"}};
  CHECK_THROWS_AS(LabelSchema{s}, SchemaError);
}

TEST_CASE("spwsle schema file resolves markers and tier-1 map") {
  auto schema = LabelSchema::load(testing::source_dir() / "experiments/schemas/spwsle.json");
  CHECK(schema.size() == 7);
  CHECK(schema.resolve_label("e1").category == CategoryId("MC"));
  CHECK(schema.resolve_label("e2").category == CategoryId("C"));
  CHECK(schema.resolve_label("e3").kind == LabelSchema::LabelKind::unused_marker);
  CHECK(schema.resolve_label("P").kind == LabelSchema::LabelKind::category);
  CHECK(schema.resolve_label("X").kind == LabelSchema::LabelKind::unknown);
  CHECK(schema.tier1("P") == "S");
  CHECK(schema.tier1("LC") == "S");
  CHECK(schema.tier1("D") == "D");
  CHECK(schema.primary_form("S") == "Subsumption");
  auto round = LabelSchema::from_json(schema.to_json());
  CHECK(round.to_json() == schema.to_json());
}

TEST_CASE("surface matcher respects word edges and prefers longer forms") {
  auto schema = synth::six_class_schema();
  SurfaceMatcher m(schema);
  auto count = [&](std::string_view text) {
    std::map<std::string, int> c;
    for (auto& x : m.find_all(text)) c[schema.category(x.category)]++;
    return c;
  };
  CHECK(count("Subsumtionsschluss").empty());
  CHECK(count("major-claim").at("MC") == 1);
  CHECK(count("MAJOR   CLAIM.") .at("MC") == 1);
  CHECK(count("Legal Claim") == std::map<std::string, int>{{"LC", 1}});
  CHECK(count("Prämisse und Subsumtion") == std::map<std::string, int>{{"P", 1}, {"S", 1}});
  auto ms = m.find_all("x Definition");
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].begin == 2);
  CHECK(ms[0].end == 12);
}
