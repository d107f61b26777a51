#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lexmine/error.hpp"
#include "lexmine/runner.hpp"
#include "lexmine/synth.hpp"
#include "support.hpp"

using namespace lexmine;
using namespace lexmine::runner;
using nlohmann::json;

namespace {

std::string schema_path() { return (testing::source_dir() / "experiments/schemas/synthetic6.json").string(); }
std::string templates_path() { return (testing::source_dir() / "experiments/templates/spwsle.json").string(); }

std::string write_synth(const testing::TempDir& dir, std::size_t docs, std::size_t items, std::uint64_t seed = 1) {
  synth::ClassificationSpec spec;
  spec.documents = docs;
  spec.items_per_document = items;
  spec.seed = seed;
  std::ostringstream out;
  write_corpus(synth::classification_corpus(synth::six_class_schema(), spec), out);
  const auto path = dir / "data.jsonl";
  testing::write_file(path, out.str());
  return path.string();
}

json mock_backends() {
  return {{"oracle", {{"type", "mock"}, {"mode", "oracle"}}},
          {"fixed", {{"type", "mock"}, {"mode", "fixed"}, {"fixed", "Definition"}}},
          {"tight", {{"type", "mock"}, {"mode", "oracle"}, {"max_prompt_chars", 1400}}}};
}

json prompt_config(const testing::TempDir& dir, const std::string& data, json prompt) {
  json p = {{"backend", "oracle"}, {"embedder", "hash"}, {"k", 10}, {"templates", templates_path()}};
  p.update(prompt);
  return {{"name", "t"},
          {"seed", 7},
          {"dataset", {{"path", data}, {"schema", schema_path()}, {"split", {{"kind", "holdout"}, {"test_ratio", 0.2}}}}},
          {"method", {{"prompt", p}}},
          {"backends", mock_backends()},
          {"embedders",
           {{"hash", {{"type", "hashing"}, {"dimension", 128}}}, {"label-oracle", {{"type", "label_oracle"}}}}},
          {"cache_dir", (dir / "cache").string()},
          {"output", (dir / "out").string()}};
}

ExperimentConfig parse(const json& j) { return ExperimentConfig::from_json(j, "/"); }

int run_cli(const std::string& args, std::string* output = nullptr) {
  const std::string cmd = std::string(LEXMINE_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::string out;
  char buf[4096];
  while (auto n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  if (output) *output = out;
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("baseline on a four-item corpus gives the hand-computed confusion matrix") {
  testing::TempDir dir;
  testing::write_file(dir / "four.jsonl",
                      "{\"doc_id\":\"a\",\"text\":\"apple pear\",\"label\":\"D\"}\n"
                      "{\"doc_id\":\"b\",\"text\":\"stone rock\",\"label\":\"C\"}\n"
                      "{\"doc_id\":\"c\",\"text\":\"apple\",\"label\":\"D\"}\n"
                      "{\"doc_id\":\"d\",\"text\":\"pear\",\"label\":\"C\"}\n");
  json j = {{"name", "four"},
            {"seed", 1},
            {"dataset", {{"path", (dir / "four.jsonl").string()}, {"schema", schema_path()}}},
            {"method", {{"baseline", json::object()}}},
            {"output", (dir / "out").string()}};
  Experiment e(parse(j));
  const auto& c = e.corpus();
  // train on a, b; test on c (apple -> D, right) and d (pear -> D, wrong)
  // D: tp1 fp1 fn0 -> F1 2/3; C: tp0 fp0 fn1 -> 0; macro over gold-present {D, C} = 1/3
  auto m = e.run_fold(c.subset({0, 1}), c.subset({2, 3}), 0);
  CHECK(m.at("accuracy") == doctest::Approx(0.5));
  CHECK(m.at("f1/D") == doctest::Approx(2.0 / 3.0));
  CHECK(m.at("f1/C") == doctest::Approx(0.0));
  CHECK(m.at("macro_f1") == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("oracle mock with RAG k=10 scores perfectly and writes every output") {
  testing::TempDir dir;
  const auto data = write_synth(dir, 10, 12);
  auto cfg = parse(prompt_config(dir, data, json::object()));
  auto out = run(cfg);
  CHECK(out.report.aggregate.metrics.at("macro_f1").mean == 1.0);
  CHECK(out.report.aggregate.metrics.at("accuracy").mean == 1.0);
  for (auto f : {"report.json", "table.txt", "transcript.jsonl", "manifest.json"}) {
    CHECK(std::filesystem::exists(dir / "out" / f));
  }
  const auto manifest = json::parse(testing::read_file(dir / "out/manifest.json"));
  CHECK(manifest.at("config_sha256").get<std::string>().size() == 64);
  CHECK(manifest.contains("chat_cache"));
  const auto first = testing::read_file(dir / "out/transcript.jsonl");
  const auto line = json::parse(first.substr(0, first.find('\n')));
  CHECK(line.at("selection").at("shots").size() == 10);
  CHECK(line.contains("prompt"));
  CHECK(line.contains("response"));
}

TEST_CASE("warm-cache rerun reproduces report.json byte for byte") {
  testing::TempDir dir;
  const auto data = write_synth(dir, 8, 10);
  auto cfg = parse(prompt_config(dir, data, {{"backend", "fixed"}, {"pseudonymize", true}}));
  run(cfg);
  const auto a = testing::read_file(dir / "out/report.json");
  auto second = run(cfg);
  const auto b = testing::read_file(dir / "out/report.json");
  CHECK(a == b);
  const auto stats = second.manifest.at("chat_cache");
  CHECK(stats.at("cache_hits") == stats.at("requests"));
  CHECK(stats.at("backend_calls") == 0);
}

TEST_CASE("prompts that overflow the context shed the least similar shots") {
  testing::TempDir dir;
  const auto data = write_synth(dir, 8, 10);
  auto out = run(parse(prompt_config(dir, data, {{"backend", "tight"}})));
  CHECK(out.report.aggregate.metrics.at("accuracy").mean == 1.0);
  CHECK(out.report.extra.value("shots_shed", 0) > 0);
  bool seen = false;
  for (auto& r : out.transcript) seen = seen || r.contains("shots_shed");
  CHECK(seen);
}

TEST_CASE("config validation fails before any output is written") {
  testing::TempDir dir;
  const auto data = write_synth(dir, 4, 4);
  auto j = prompt_config(dir, data, json::object());
  j["dataset"]["path"] = (dir / "missing.jsonl").string();
  CHECK_THROWS_WITH(run(parse(j)), doctest::Contains("missing.jsonl"));
  CHECK_FALSE(std::filesystem::exists(dir / "out"));

  auto unknown = prompt_config(dir, data, json::object());
  unknown["colour"] = "blue";
  CHECK_THROWS_WITH(parse(unknown), doctest::Contains("colour"));

  auto cot = parse(prompt_config(dir, data, {{"mode", "cot"}}));
  CHECK_THROWS_WITH(cot.validate(), doctest::Contains("CoT shots require rationales"));

  auto no_backend = parse(prompt_config(dir, data, {{"backend", "nobody"}}));
  CHECK_THROWS(no_backend.validate());
}

TEST_CASE("seed override reaches every derived seed") {
  testing::TempDir dir;
  const auto data = write_synth(dir, 4, 4);
  auto c = parse(prompt_config(dir, data, json::object()));
  c.set_seed(99);
  CHECK(c.seed == 99);
  CHECK(c.dataset.split.seed == 99);
  CHECK(c.to_json().at("seed") == 99);
}

TEST_CASE("ablation variants") {
  testing::TempDir dir;
  const auto data = write_synth(dir, 4, 4);
  auto base = parse(prompt_config(dir, data, json::object()));
  auto p = ablation_variants(base, "pseudonymize");
  REQUIRE(p.size() == 2);
  CHECK_FALSE(p[0].second.prompt().pseudonymize);
  CHECK(p[1].second.prompt().pseudonymize);
  CHECK(p[1].second.output == base.output / p[1].first);
  auto inv = ablation_variants(base, "inverse-rag");
  REQUIRE(inv.size() == 3);
  CHECK(inv[1].second.prompt().strategy == retrieval::Strategy::inverse_rag);
  auto z = ablation_variants(base, "zero-shot-cot");
  REQUIRE(z.size() == 2);
  CHECK(z[1].second.prompt().k == 0);
  CHECK(z[1].second.prompt().mode == extraction::Mode::cot);
  CHECK(ablation_variants(base, "no-explanation")[1].second.prompt().explanation == false);
  CHECK_THROWS(ablation_variants(base, "everything"));
}

TEST_CASE("cli: usage errors exit nonzero") {
  std::string out;
  CHECK(run_cli("frobnicate", &out) != 0);
  CHECK(run_cli("baseline --config /nonexistent.json", &out) != 0);
  CHECK(run_cli("", &out) != 0);
  CHECK(out.find("Usage") != std::string::npos);
}

TEST_CASE("cli: ablate pseudonymize with the oracle keeps accuracy 1.0") {
  testing::TempDir dir;
  const auto data = write_synth(dir, 6, 10);
  testing::write_file(dir / "c.json", prompt_config(dir, data, json::object()).dump());
  std::string out;
  REQUIRE(run_cli("ablate pseudonymize --config " + (dir / "c.json").string(), &out) == 0);
  for (auto v : {"plain", "pseudonyms"}) {
    auto r = json::parse(testing::read_file(dir / "out" / v / "report.json"));
    CHECK(r["metrics"]["accuracy"]["mean"] == 1.0);
  }
  CHECK(std::filesystem::exists(dir / "out/table.txt"));
}

TEST_CASE("cli: inverse-rag picks fewer same-label shots than random under an oracle embedder") {
  testing::TempDir dir;
  const auto data = write_synth(dir, 10, 12);
  testing::write_file(dir / "c.json", prompt_config(dir, data, {{"embedder", "label-oracle"}}).dump());
  std::string out;
  REQUIRE(run_cli("ablate inverse-rag --config " + (dir / "c.json").string(), &out) == 0);
  auto match = [&](const char* v) {
    return json::parse(testing::read_file(dir / "out" / v / "report.json"))["metrics"]
        ["shot_label_match"]["mean"]
            .get<double>();
  };
  CHECK(match("rag") == 1.0);
  CHECK(match("inverse_rag") <= match("random"));
}

TEST_CASE("cli: transfer over three tasks writes a nine-cell matrix") {
  testing::TempDir dir;
  std::ostringstream all;
  for (int t = 1; t <= 3; ++t) {
    synth::ScoringSpec spec;
    spec.documents = 15;
    spec.task_id = std::to_string(t);
    spec.seed = static_cast<std::uint64_t>(t);
    auto c = synth::scoring_corpus(spec);
    for (auto& d : c.documents()) {
      for (auto& it : d.items) {
        json rec = {{"doc_id", "t" + spec.task_id + d.id}, {"text", it.text}, {"score", it.score()},
                    {"task_id", spec.task_id}};
        all << rec.dump() << '\n';
      }
    }
  }
  testing::write_file(dir / "essays.jsonl", all.str());
  json cfg = {{"name", "tr"},
              {"seed", 3},
              {"dataset",
               {{"path", (dir / "essays.jsonl").string()},
                {"score_range", {0, 18}},
                {"split", {{"kind", "kfold"}, {"k", 3}}}}},
              {"method", {{"baseline", {{"train", {{"loss", "epsilon_insensitive"}}}}}}},
              {"output", (dir / "out").string()}};
  testing::write_file(dir / "c.json", cfg.dump());
  std::string out;
  REQUIRE(run_cli("transfer --config " + (dir / "c.json").string(), &out) == 0);
  auto r = json::parse(testing::read_file(dir / "out/report.json"));
  CHECK(r["extra"]["transfer"].size() == 9);
  REQUIRE(run_cli("report " + (dir / "out").string() + " --out " + (dir / "t.txt").string(), &out) == 0);
  CHECK(testing::read_file(dir / "t.txt").find("Spearman") != std::string::npos);
}
