#include <doctest.h>

#include <cmath>
#include <set>

#include "lexmine/error.hpp"
#include "lexmine/gar.hpp"
#include "lexmine/synth.hpp"
#include "support.hpp"

using namespace lexmine;
using namespace lexmine::prompting;

namespace {

struct Fixture {
  Corpus corpus;
  std::vector<const Item*> pool;
  PromptBuilder builder;
  extraction::CategoryExtractor extractor;
  llm::ChatGateway gateway;

  explicit Fixture(std::size_t docs = 25, std::size_t per_doc = 20)
      : corpus(make(docs, per_doc)),
        pool(corpus.items()),
        builder(PromptTemplateSet::defaults(), corpus.target()),
        extractor(corpus.target().schema()) {}

  static Corpus make(std::size_t docs, std::size_t per_doc) {
    synth::ClassificationSpec spec;
    spec.documents = docs;
    spec.items_per_document = per_doc;
    spec.seed = 17;
    return synth::classification_corpus(synth::six_class_schema(), spec);
  }

  void add_mock(const std::string& id, llm::MockPolicy policy) {
    gateway.register_backend(std::make_shared<llm::MockChatBackend>(id, policy));
  }
  GarBackend backend(const std::string& id, std::size_t concurrency = 4) {
    return GarBackend{gateway, id, "m", 256, concurrency};
  }
  std::vector<retrieval::Embedding> embeddings() {
    std::vector<std::string> texts;
    for (auto* it : pool) texts.push_back(it->text);
    retrieval::HashingEmbedder e(128);
    return retrieval::embed_batch(texts, e);
  }
};

llm::MockPolicy noisy(double p, std::uint64_t seed) {
  llm::MockPolicy m;
  m.mode = llm::MockPolicy::Mode::noisy_oracle;
  m.p = p;
  m.seed = seed;
  return m;
}

}  // namespace

TEST_CASE("oracle mock: rate 1.0 and exactly budget shots under both samplers") {
  Fixture f(5, 20);
  f.add_mock("oracle", llm::MockPolicy{});
  auto emb = f.embeddings();
  for (auto sampler : {Sampler::uniform, Sampler::diversity}) {
    GarConfig c;
    c.budget = 12;
    c.sampler = sampler;
    c.seed = 3;
    auto r = generate_rationales(f.pool, f.builder, &f.extractor, f.backend("oracle"), c, emb);
    CHECK(r.shots.size() == 12);
    CHECK(r.attempts.size() == 12);
    CHECK(r.acceptance_rate == 1.0);
    std::set<std::string> ids;
    for (auto& s : r.shots) {
      CHECK(s.accepted);
      CHECK(s.extracted == std::optional<Gold>(s.gold));
      ids.insert(s.item_id);
    }
    CHECK(ids.size() == 12);
  }
}

TEST_CASE("always-wrong mock exhausts the pool and fails") {
  Fixture f(2, 5);
  llm::MockPolicy wrong;
  wrong.mode = llm::MockPolicy::Mode::fixed;
  wrong.fixed_response = "The RESULT-CLAUSE, clearly.";
  f.add_mock("wrong", wrong);
  GarConfig c;
  c.budget = 3;
  c.sampler = Sampler::uniform;
  CHECK_THROWS_WITH(generate_rationales(f.pool, f.builder, &f.extractor, f.backend("wrong"), c),
                    doctest::Contains("GAR produced no valid rationales"));
  c.budget = 11;
  CHECK_THROWS(generate_rationales(f.pool, f.builder, &f.extractor, f.backend("wrong"), c));
}

TEST_CASE("noisy oracle p=0.8: acceptance rate inside the 3-sigma binomial band") {
  Fixture f;  // 500 items
  REQUIRE(f.pool.size() == 500);
  auto emb = f.embeddings();
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const std::string id = "noisy" + std::to_string(seed);
    f.add_mock(id, noisy(0.8, seed));
    GarConfig c;
    c.budget = 50;
    c.seed = seed;
    c.sampler = seed % 2 ? Sampler::diversity : Sampler::uniform;
    auto r = generate_rationales(f.pool, f.builder, &f.extractor, f.backend(id), c, emb);
    const double n = static_cast<double>(r.attempts.size());
    CAPTURE(seed);
    CAPTURE(n);
    CAPTURE(r.acceptance_rate);
    CHECK(r.shots.size() == 50);
    CHECK(std::abs(r.acceptance_rate - 0.8) <= 3 * std::sqrt(0.8 * 0.2 / n));
    for (auto& s : r.shots) CHECK(s.extracted == std::optional<Gold>(s.gold));
    std::size_t rejected = 0;
    for (auto& a : r.attempts) rejected += !a.accepted;
    CHECK(rejected == r.attempts.size() - 50);
  }
}

TEST_CASE("results do not depend on concurrency") {
  Fixture f(10, 20);
  f.add_mock("noisy", noisy(0.6, 9));
  auto emb = f.embeddings();
  GarConfig c;
  c.budget = 20;
  c.seed = 4;
  auto a = generate_rationales(f.pool, f.builder, &f.extractor, f.backend("noisy", 1), c, emb);
  auto b = generate_rationales(f.pool, f.builder, &f.extractor, f.backend("noisy", 8), c, emb);
  REQUIRE(a.attempts.size() == b.attempts.size());
  for (std::size_t i = 0; i < a.attempts.size(); ++i) CHECK(a.attempts[i].to_json() == b.attempts[i].to_json());
}

TEST_CASE("kmeans separates clear blobs and the diversity sampler spreads draws") {
  std::vector<retrieval::Embedding> pts;
  const float centers[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int i = 0; i < 30; ++i) {
    const auto& c = centers[i % 3];
    const float jitter = 0.01f * static_cast<float>(i / 3);
    pts.push_back(retrieval::Embedding::unit({c[0] + jitter, c[1] + jitter * 0.5f, c[2] + 0.02f}));
  }
  auto labels = kmeans(pts, 3, 1, 25);
  CHECK(labels[0] == 0);
  CHECK(labels[1] == 1);
  CHECK(labels[2] == 2);
  for (int i = 0; i < 30; ++i) CHECK(labels[i] == labels[i % 3]);

  GarConfig c;
  c.budget = 3;
  c.seed = 2;
  auto groups = sampling_groups(pts.size(), c, pts);
  REQUIRE(groups.size() == 3);
  std::set<std::size_t> first_cluster;
  for (auto& g : groups) first_cluster.insert(labels[g.front()]);
  CHECK(first_cluster.size() == 3);

  c.sampler = Sampler::uniform;
  auto u = sampling_groups(pts.size(), c, {});
  REQUIRE(u.size() == 1);
  CHECK(u[0].size() == 30);
}

TEST_CASE("rationales persist and reload with their checks") {
  testing::TempDir dir;
  Fixture f(2, 10);
  f.add_mock("oracle", llm::MockPolicy{});
  GarConfig c;
  c.budget = 5;
  c.sampler = Sampler::uniform;
  auto r = generate_rationales(f.pool, f.builder, &f.extractor, f.backend("oracle"), c);
  save_rationales(r.shots, dir / "r.jsonl");
  auto back = load_rationales(dir / "r.jsonl", f.corpus.target());
  REQUIRE(back.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(back[i].to_json() == r.shots[i].to_json());

  auto bad = r.shots;
  bad[0].rationale = "Clearly a Definition, but actually a Conclusion. Conclusion.";
  bad[0].gold = CategoryId("D");
  bad[0].extracted = CategoryId("D");
  save_rationales(bad, dir / "bad.jsonl");
  CHECK_THROWS_AS(load_rationales(dir / "bad.jsonl", f.corpus.target()), ParseError);
}
