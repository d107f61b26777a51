#include "lexmine/config.hpp"

#include <fstream>
#include <set>

#include "lexmine/error.hpp"

namespace lexmine::runner {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error("unknown key '" + key + "' in " + where);
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_relative() ? base / path : path).lexically_normal();
}

std::string mode_name(evaluation::MacroAverage m) { return m == evaluation::MacroAverage::all ? "all" : "gold_present"; }

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  reject_unknown(j,
                 {"name", "seed", "dataset", "method", "backends", "embedders", "cache_dir", "output", "concurrency",
                  "evaluation", "transfer", "description"},
                 "config");
  ExperimentConfig c;
  try {
    c.name = j.value("name", std::string("run"));
    c.seed = j.value("seed", std::uint64_t{0});

    const auto& d = j.at("dataset");
    reject_unknown(d, {"path", "format", "schema", "score_range", "essay_set", "task", "split"}, "dataset");
    c.dataset.path = resolve(base_dir, d.at("path").get<std::string>());
    c.dataset.format = d.value("format", std::string("jsonl"));
    if (d.contains("schema")) c.dataset.schema = resolve(base_dir, d.at("schema").get<std::string>());
    if (d.contains("score_range")) {
      const auto& r = d.at("score_range");
      c.dataset.score_range = ScoreRange{r.at(0).get<int>(), r.at(1).get<int>()};
    }
    if (d.contains("essay_set")) c.dataset.essay_set = d.at("essay_set").get<int>();
    if (d.contains("task")) c.dataset.task = d.at("task").get<std::string>();
    c.dataset.split = SplitSpec::from_json(d.value("split", nlohmann::json::object()), c.seed);

    const auto& m = j.at("method");
    reject_unknown(m, {"baseline", "prompt"}, "method");
    if (m.size() != 1) throw Error("method must hold exactly one of baseline, prompt");
    if (m.contains("baseline")) {
      const auto& b = m.at("baseline");
      reject_unknown(b, {"vectorizer", "train"}, "method.baseline");
      BaselineSpec spec;
      if (b.contains("vectorizer")) spec.vectorizer = baseline::VectorizerConfig::from_json(b.at("vectorizer"));
      if (b.contains("train")) spec.train = baseline::TrainConfig::from_json(b.at("train"));
      spec.train.seed = c.seed;
      c.method = spec;
    } else {
      const auto& p = m.at("prompt");
      reject_unknown(p,
                     {"backend", "model", "embedder", "strategy", "k", "mode", "explanation", "pseudonymize", "gar",
                      "templates", "max_tokens", "temperature", "malformed", "context_window", "log_prompts"},
                     "method.prompt");
      PromptSpec spec;
      spec.backend = p.at("backend").get<std::string>();
      spec.model = p.value("model", std::string());
      spec.embedder = p.value("embedder", std::string());
      spec.strategy = retrieval::strategy_from_string(p.value("strategy", std::string("rag")));
      spec.k = p.value("k", std::size_t{10});
      spec.mode = extraction::mode_from_string(p.value("mode", std::string("result")));
      spec.explanation = p.value("explanation", true);
      spec.pseudonymize = p.value("pseudonymize", false);
      if (p.contains("gar") && !p.at("gar").is_null()) {
        const auto& g = p.at("gar");
        reject_unknown(g, {"budget", "sampler"}, "method.prompt.gar");
        spec.gar = GarSpec{g.value("budget", std::size_t{10}),
                           prompting::sampler_from_string(g.value("sampler", std::string("diversity")))};
      }
      if (p.contains("templates")) spec.templates = resolve(base_dir, p.at("templates").get<std::string>());
      spec.max_tokens = p.value("max_tokens", 512);
      spec.temperature = p.value("temperature", 0.0);
      spec.malformed = extraction::malformed_policy_from_string(p.value("malformed", std::string("count_as_wrong")));
      spec.context_window = p.value("context_window", std::size_t{0});
      spec.log_prompts = p.value("log_prompts", true);
      c.method = spec;
    }

    if (j.contains("backends")) c.backends = j.at("backends").get<std::map<std::string, nlohmann::json>>();
    if (j.contains("embedders")) c.embedders = j.at("embedders").get<std::map<std::string, nlohmann::json>>();
    if (j.contains("cache_dir") && !j.at("cache_dir").is_null()) {
      c.cache_dir = resolve(base_dir, j.at("cache_dir").get<std::string>());
    }
    c.output = resolve(base_dir, j.value("output", std::string("runs/") + c.name));
    c.concurrency = j.value("concurrency", std::size_t{4});
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      reject_unknown(e, {"two_tier", "include_none", "macro"}, "evaluation");
      c.evaluation.two_tier = e.value("two_tier", false);
      c.evaluation.include_none = e.value("include_none", true);
      const auto macro = e.value("macro", std::string("gold_present"));
      if (macro == "gold_present") {
        c.evaluation.macro = evaluation::MacroAverage::gold_present;
      } else if (macro == "all") {
        c.evaluation.macro = evaluation::MacroAverage::all;
      } else {
        throw Error("evaluation.macro must be gold_present or all");
      }
    }
    if (j.contains("transfer")) {
      const auto& t = j.at("transfer");
      reject_unknown(t, {"tasks"}, "transfer");
      c.transfer_tasks = t.value("tasks", std::vector<std::string>{});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["seed"] = seed;
  auto& d = j["dataset"];
  d["path"] = dataset.path.string();
  d["format"] = dataset.format;
  if (dataset.schema) d["schema"] = dataset.schema->string();
  if (dataset.score_range) d["score_range"] = {dataset.score_range->min, dataset.score_range->max};
  if (dataset.essay_set) d["essay_set"] = *dataset.essay_set;
  if (dataset.task) d["task"] = *dataset.task;
  d["split"] = dataset.split.to_json();
  if (is_baseline()) {
    const auto& b = std::get<BaselineSpec>(method);
    j["method"]["baseline"] = {{"vectorizer", b.vectorizer.to_json()}, {"train", b.train.to_json()}};
  } else {
    const auto& p = prompt();
    nlohmann::json pj{{"backend", p.backend},
                      {"model", p.model},
                      {"embedder", p.embedder},
                      {"strategy", retrieval::to_string(p.strategy)},
                      {"k", p.k},
                      {"mode", extraction::to_string(p.mode)},
                      {"explanation", p.explanation},
                      {"pseudonymize", p.pseudonymize},
                      {"max_tokens", p.max_tokens},
                      {"temperature", p.temperature},
                      {"malformed", p.malformed == extraction::MalformedPolicy::count_as_wrong
                                        ? "count_as_wrong"
                                        : "fallback_to_none_category"},
                      {"context_window", p.context_window},
                      {"log_prompts", p.log_prompts}};
    if (p.gar) {
      pj["gar"] = {{"budget", p.gar->budget},
                   {"sampler", p.gar->sampler == prompting::Sampler::diversity ? "diversity" : "uniform"}};
    }
    if (p.templates) pj["templates"] = p.templates->string();
    j["method"]["prompt"] = pj;
  }
  j["backends"] = backends;
  j["embedders"] = embedders;
  if (cache_dir) j["cache_dir"] = cache_dir->string();
  j["output"] = output.string();
  j["concurrency"] = concurrency;
  j["evaluation"] = {{"two_tier", evaluation.two_tier},
                     {"include_none", evaluation.include_none},
                     {"macro", mode_name(evaluation.macro)}};
  if (!transfer_tasks.empty()) j["transfer"] = {{"tasks", transfer_tasks}};
  return j;
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  dataset.split.seed = s;
  if (is_baseline()) std::get<BaselineSpec>(method).train.seed = s;
}

std::vector<fs::path> ExperimentConfig::input_files() const {
  std::vector<fs::path> files{dataset.path};
  if (dataset.schema) files.push_back(*dataset.schema);
  if (!is_baseline() && prompt().templates) {
    files.push_back(*prompt().templates);
    std::ifstream in(*prompt().templates);
    if (in) {
      try {
        const auto j = nlohmann::json::parse(in);
        if (j.contains("explanation_file")) {
          files.push_back(resolve(prompt().templates->parent_path(), j.at("explanation_file").get<std::string>()));
        }
      } catch (const nlohmann::json::exception&) {
        // reported when the templates are loaded
      }
    }
  }
  return files;
}

void ExperimentConfig::validate() const {
  if (dataset.format != "jsonl" && dataset.format != "essay_tsv") {
    throw Error("dataset.format must be jsonl or essay_tsv, got " + dataset.format);
  }
  if (dataset.schema.has_value() == dataset.score_range.has_value()) {
    throw Error("dataset needs exactly one of schema, score_range");
  }
  if (dataset.format == "essay_tsv" && !dataset.score_range) throw Error("essay_tsv datasets need a score_range");
  if (dataset.score_range) dataset.score_range->validate();
  dataset.split.validate();
  if (concurrency == 0) throw Error("concurrency must be positive");
  if (!is_baseline()) {
    const auto& p = prompt();
    if (!backends.count(p.backend)) throw Error("method.prompt.backend '" + p.backend + "' is not a configured backend");
    const bool needs_embedder = (p.k > 0 && p.strategy != retrieval::Strategy::random) ||
                                (p.gar && p.gar->sampler == prompting::Sampler::diversity);
    if (needs_embedder && !embedders.count(p.embedder)) {
      throw Error("method.prompt.embedder '" + p.embedder + "' is not a configured embedder");
    }
    if (p.mode == extraction::Mode::score) throw Error("method.prompt.mode must be result or cot");
    if (p.mode == extraction::Mode::cot && p.k > 0 && !p.gar) throw Error("CoT shots require rationales (set method.prompt.gar or k=0)");
    if (p.pseudonymize && !dataset.schema) throw Error("pseudonymize needs a classification dataset");
    if (p.max_tokens <= 0) throw Error("method.prompt.max_tokens must be positive");
    if (p.gar && p.gar->budget == 0) throw Error("method.prompt.gar.budget must be positive");
  }
  for (const auto& f : input_files()) {
    if (!fs::is_regular_file(f)) throw Error("input file not found: " + f.string());
  }
}

}  // namespace lexmine::runner
