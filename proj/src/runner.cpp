#include "lexmine/runner.hpp"

#include <cstdlib>
#include <fstream>
#include <unordered_set>

#include "lexmine/baseline.hpp"
#include "lexmine/digest.hpp"
#include "lexmine/error.hpp"
#include "lexmine/gar.hpp"
#include "lexmine/kernels.hpp"
#include "lexmine/parallel.hpp"
#include "lexmine/retrieval.hpp"
#include "lexmine/rng.hpp"

namespace lexmine::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error("stage " + name + ": " + e.what());
  }
}

http::Endpoint endpoint_from(const json& spec) {
  http::Endpoint ep;
  ep.base_url = spec.at("base_url").get<std::string>();
  if (spec.contains("token_env")) {
    const auto var = spec.at("token_env").get<std::string>();
    if (const char* v = std::getenv(var.c_str())) ep.bearer_token = v;
  }
  ep.timeout = std::chrono::seconds(spec.value("timeout_s", 300));
  return ep;
}

std::string gold_string(const Gold& g) { return gold_to_string(g); }

}  // namespace

std::shared_ptr<llm::ChatBackend> make_chat_backend(const std::string& id, const json& spec,
                                                    std::uint64_t default_seed) {
  const auto type = spec.value("type", std::string("http"));
  if (type == "http") {
    return std::make_shared<llm::HttpChatBackend>(
        llm::HttpChatConfig{id, endpoint_from(spec), spec.value("model", std::string())});
  }
  if (type == "mock") {
    llm::MockPolicy p;
    p.mode = llm::MockPolicy::mode_from_string(spec.value("mode", std::string("oracle")));
    p.fixed_response = spec.value("fixed", std::string());
    if (spec.contains("script")) p.script = spec.at("script").get<std::map<std::string, std::string>>();
    if (spec.contains("script_default")) p.script_default = spec.at("script_default").get<std::string>();
    p.p = spec.value("p", 1.0);
    p.seed = spec.value("seed", default_seed);
    if (spec.contains("max_prompt_chars")) p.max_prompt_chars = spec.at("max_prompt_chars").get<std::size_t>();
    p.transient_failures = spec.value("transient_failures", 0);
    return std::make_shared<llm::MockChatBackend>(id, p);
  }
  throw Error("backend " + id + ": unknown type " + type);
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
  stage("validate", [&] { config_.validate(); });
  stage("load", [&] {
    std::optional<Target> target;
    if (config_.dataset.schema) {
      target.emplace(LabelSchema::load(*config_.dataset.schema));
    } else {
      target.emplace(*config_.dataset.score_range);
    }
    Corpus c = config_.dataset.format == "essay_tsv"
                   ? load_essay_tsv(config_.dataset.path, *config_.dataset.score_range, config_.dataset.essay_set)
                   : load_corpus(config_.dataset.path, *target);
    if (config_.dataset.task) c = c.task(*config_.dataset.task);
    if (c.document_count() == 0) throw Error("dataset holds no documents");
    corpus_.emplace(std::move(c));
    for (const auto& d : corpus_->documents()) documents_[d.id] = &d;

    if (!config_.is_baseline()) {
      const auto& p = config_.prompt();
      auto templates = p.templates ? prompting::PromptTemplateSet::load(*p.templates)
                                   : prompting::PromptTemplateSet::defaults();
      builder_.emplace(std::move(templates), corpus_->target());
      if (corpus_->is_classification()) extractor_.emplace(corpus_->target().schema(), p.malformed);

      llm::GatewayOptions options;
      options.concurrency = config_.concurrency;
      std::optional<fs::path> responses;
      if (config_.cache_dir) responses = *config_.cache_dir / "responses";
      gateway_ = std::make_unique<llm::ChatGateway>(responses, options);
      for (const auto& [id, spec] : config_.backends) gateway_->register_backend(make_chat_backend(id, spec, config_.seed));
      if (config_.cache_dir) embedding_cache_ = std::make_unique<retrieval::EmbeddingCache>(*config_.cache_dir / "embeddings");
    }
  });
}

Experiment::~Experiment() = default;

std::string Experiment::embedding_text(const Item& item) const {
  const std::size_t w = config_.is_baseline() ? 0 : config_.prompt().context_window;
  if (w == 0) return item.text;
  const Document& doc = *documents_.at(item.doc_id);
  const std::size_t lo = item.position >= w ? item.position - w : 0;
  const std::size_t hi = std::min(doc.items.size(), item.position + w + 1);
  std::string out;
  for (std::size_t i = lo; i < hi; ++i) {
    if (!out.empty()) out += ' ';
    out += doc.items[i].text;
  }
  return out;
}

retrieval::EmbeddingBackend& Experiment::embedder() {
  if (embedder_) return *embedder_;
  const auto& id = config_.prompt().embedder;
  auto it = config_.embedders.find(id);
  if (it == config_.embedders.end()) throw Error("no embedder configured");
  const auto& spec = it->second;
  const auto type = spec.value("type", std::string("http"));
  if (type == "hashing") {
    embedder_ = std::make_unique<retrieval::HashingEmbedder>(spec.value("dimension", std::size_t{256}));
  } else if (type == "label_oracle") {
    std::unordered_map<std::string, std::string> map;
    std::vector<std::string> labels;
    if (corpus_->is_classification()) {
      for (const auto& c : corpus_->target().schema().categories()) labels.push_back(c);
    } else {
      for (int v = corpus_->target().range().min; v <= corpus_->target().range().max; ++v) labels.push_back(std::to_string(v));
    }
    for (const Item* item : corpus_->items()) map[embedding_text(*item)] = gold_string(item->gold);
    embedder_ = std::make_unique<retrieval::LabelOracleEmbedder>(std::move(map), std::move(labels));
  } else if (type == "http") {
    retrieval::HttpEmbedderConfig c;
    c.endpoint = endpoint_from(spec);
    c.model = spec.value("model", std::string());
    c.parallel = spec.value("parallel", std::size_t{4});
    embedder_ = std::make_unique<retrieval::HttpEmbedder>(c);
  } else {
    throw Error("embedder " + id + ": unknown type " + type);
  }
  return *embedder_;
}

std::vector<retrieval::Embedding> Experiment::embed(const std::vector<const Item*>& items) {
  std::vector<std::string> texts;
  for (const Item* item : items) texts.push_back(embedding_text(*item));
  return retrieval::embed_batch(texts, embedder(), embedding_cache_.get());
}

evaluation::MetricMap Experiment::classification_fold_metrics(const std::vector<std::optional<CategoryId>>& preds,
                                                              const std::vector<CategoryId>& golds) const {
  const auto& schema = corpus_->target().schema();
  std::vector<CategoryId> classes(schema.categories().begin(), schema.categories().end());
  std::vector<CategoryId> exclude;
  if (!config_.evaluation.include_none && schema.none_category()) exclude.push_back(*schema.none_category());
  auto m = evaluation::classification_metrics(preds, golds, classes, config_.evaluation.macro, exclude).metrics();
  if (config_.evaluation.two_tier) {
    const auto tt = evaluation::project_two_tier(preds, golds, schema, config_.evaluation.include_none,
                                                 config_.evaluation.macro);
    m.merge(tt.tier1.metrics("tier1/"));
    m.merge(tt.subsumption.metrics("subsumption/"));
  }
  std::size_t malformed = 0;
  for (const auto& p : preds) malformed += !p.has_value();
  m["malformed_rate"] = static_cast<double>(malformed) / static_cast<double>(preds.size());
  return m;
}

evaluation::MetricMap Experiment::baseline_fold(const Corpus& train, const Corpus& test, int fold,
                                                std::vector<json>* transcript) {
  const auto& spec = std::get<BaselineSpec>(config_.method);
  const auto train_items = train.items();
  const auto test_items = test.items();
  if (train_items.empty() || test_items.empty()) throw Error("fold " + std::to_string(fold) + " has an empty side");

  std::vector<std::string> texts;
  for (const Item* item : train_items) texts.push_back(item->text);
  const auto vocab = baseline::Vocabulary::fit(texts, spec.vectorizer);
  std::vector<baseline::SparseVector> X;
  for (const auto& t : texts) X.push_back(baseline::transform(t, vocab));

  evaluation::MetricMap m;
  if (corpus_->is_classification()) {
    std::vector<CategoryId> y;
    for (const Item* item : train_items) y.push_back(item->label());
    const auto model = baseline::train_classifier(X, y, corpus_->target().schema(), spec.train);
    std::vector<std::optional<CategoryId>> preds;
    std::vector<CategoryId> golds;
    for (const Item* item : test_items) {
      preds.emplace_back(model.predict_label(baseline::transform(item->text, vocab)));
      golds.push_back(item->label());
      if (transcript) {
        transcript->push_back({{"fold", fold}, {"item_id", item->id}, {"gold", golds.back()}, {"prediction", *preds.back()}});
      }
    }
    m = classification_fold_metrics(preds, golds);
  } else {
    std::vector<int> y;
    for (const Item* item : train_items) y.push_back(item->score());
    const auto& range = corpus_->target().range();
    const auto model = baseline::train_regressor(X, y, range, spec.train);
    std::vector<std::optional<int>> preds;
    std::vector<int> golds;
    std::vector<double> raw;
    for (const Item* item : test_items) {
      const double v = model.predict_score(baseline::transform(item->text, vocab));
      raw.push_back(v);
      preds.emplace_back(static_cast<int>(std::lround(v)));
      golds.push_back(item->score());
      if (transcript) {
        transcript->push_back({{"fold", fold}, {"item_id", item->id}, {"gold", golds.back()}, {"prediction", v}});
      }
    }
    // correlations on the real-valued output, accuracy on the rounded score
    auto report = evaluation::scoring_metrics(preds, golds, range);
    std::vector<double> g(golds.begin(), golds.end());
    report.correlation = evaluation::correlation_metrics(raw, g);
    m = report.metrics();
  }
  return m;
}

evaluation::MetricMap Experiment::prompt_fold(const Corpus& train, const Corpus& test, int fold,
                                              std::vector<json>* transcript) {
  const auto& p = config_.prompt();
  const auto train_items = train.items();
  const auto test_items = test.items();
  if (test_items.empty()) throw Error("fold " + std::to_string(fold) + " has no test items");
  const std::string tag = "fold" + std::to_string(fold) + "/";

  std::string model = p.model;
  if (model.empty()) model = config_.backends.at(p.backend).value("model", std::string());

  // shot pool: training items, or accepted rationales under GAR
  std::vector<prompting::Exemplar> pool;
  std::vector<const Item*> pool_items;
  if (p.gar) {
    const auto result = stage(tag + "gar", [&] {
      std::vector<retrieval::Embedding> emb;
      if (p.gar->sampler == prompting::Sampler::diversity) emb = embed(train_items);
      prompting::GarConfig gc;
      gc.budget = std::min(p.gar->budget, train_items.size());
      gc.sampler = p.gar->sampler;
      gc.seed = derive_seed(config_.seed, tag + "gar");
      gc.explanation = p.explanation;
      prompting::GarBackend gb{*gateway_, p.backend, model, p.max_tokens, config_.concurrency};
      return prompting::generate_rationales(train_items, *builder_, extractor_ ? &*extractor_ : nullptr, gb, gc, emb);
    });
    std::unordered_map<std::string, const Item*> by_id;
    for (const Item* item : train_items) by_id[item->id] = item;
    for (const auto& s : result.shots) {
      pool.push_back(s.exemplar());
      pool_items.push_back(by_id.at(s.item_id));
    }
    run_extra_["gar_acceptance_rate"].push_back(result.acceptance_rate);
  } else {
    for (const Item* item : train_items) {
      pool.push_back({item->id, item->text, item->gold, std::nullopt});
      pool_items.push_back(item);
    }
  }
  if (p.k > pool.size()) {
    throw Error("stage " + tag + "select: k=" + std::to_string(p.k) + " exceeds shot pool of " +
                std::to_string(pool.size()));
  }

  const bool use_embeddings = p.k > 0 && !p.embedder.empty() && config_.embedders.count(p.embedder);
  std::optional<retrieval::RetrievalIndex> index;
  std::vector<retrieval::Embedding> query_emb;
  stage(tag + "index", [&] {
    if (p.k == 0) return;
    if (use_embeddings) {
      const auto pool_emb = embed(pool_items);
      query_emb = embed(test_items);
      index.emplace(pool_emb.front().dimension());
      for (std::size_t i = 0; i < pool.size(); ++i) index->add(pool[i].item_id, pool_emb[i], pool[i].gold);
    } else {
      // random selection without an embedder: constant vectors, similarity 1
      index.emplace(1);
      for (const auto& e : pool) index->add(e.item_id, retrieval::Embedding{{1.0f}, true}, e.gold);
    }
  });
  std::unordered_map<std::string, std::size_t> pool_index;
  for (std::size_t i = 0; i < pool.size(); ++i) pool_index[pool[i].item_id] = i;

  struct ItemResult {
    extraction::ExtractionOutcome outcome;
    json record;
    double shot_match = 0.0;
    bool failed = false;
    std::size_t shed = 0;
  };
  std::vector<ItemResult> results(test_items.size());

  stage(tag + "prompt", [&] {
    parallel_for(test_items.size(), config_.concurrency, [&](std::size_t i) {
      const Item& item = *test_items[i];
      ItemResult& r = results[i];
      std::vector<prompting::Exemplar> shots;
      retrieval::ShotSelection sel;
      if (p.k > 0) {
        retrieval::SelectionConfig sc{p.strategy, p.k, derive_seed(config_.seed, tag + "shots/" + item.id)};
        const std::vector<float> one{1.0f};
        sel = retrieval::select_shots(*index, use_embeddings ? std::span<const float>(query_emb[i].values)
                                                             : std::span<const float>(one),
                                      sc);
        std::size_t match = 0;
        for (const auto& s : sel.shots) {
          shots.push_back(pool[pool_index.at(s.item_id)]);
          match += s.gold == item.gold;
        }
        r.shot_match = static_cast<double>(match) / static_cast<double>(sel.shots.size());
      }
      prompting::PromptOptions options;
      options.explanation = p.explanation;
      options.mode = p.mode;
      if (p.pseudonymize) {
        options.pseudonyms = prompting::pseudonymize(corpus_->target().schema(),
                                                     derive_seed(config_.seed, "pseudonym/" + item.id), item.id);
      }
      std::string reply;
      std::optional<prompting::PromptBundle> bundle;
      std::string error;
      while (true) {
        bundle = builder_->build(item, shots, options);
        try {
          reply = gateway_->chat(prompting::make_request(*bundle, p.backend, model, p.max_tokens, p.temperature));
          break;
        } catch (const ContextLengthError& e) {
          if (shots.empty()) {
            error = e.what();
            break;
          }
          shots.erase(shots.begin());  // least similar shot comes first
          ++r.shed;
        } catch (const BackendError& e) {
          error = e.what();
          break;
        }
      }
      json rec{{"fold", fold}, {"item_id", item.id}, {"gold", gold_to_json(item.gold)}};
      if (p.k > 0) rec["selection"] = sel.to_json();
      if (r.shed) rec["shots_shed"] = r.shed;
      if (p.log_prompts) rec["prompt"] = bundle->to_json();
      if (!error.empty()) {
        r.failed = true;
        r.outcome.malformed = true;
        r.outcome.mode = p.mode;
        rec["error"] = error;
      } else {
        r.outcome = prompting::decode_reply(reply, *bundle, corpus_->target(), extractor_ ? &*extractor_ : nullptr);
        rec["response"] = reply;
      }
      rec["extraction"] = r.outcome.to_json();
      r.record = std::move(rec);
    });
  });

  std::size_t failed = 0, shed = 0;
  double shot_match = 0.0;
  for (auto& r : results) {
    failed += r.failed;
    shed += r.shed;
    shot_match += r.shot_match;
    if (transcript) transcript->push_back(std::move(r.record));
  }
  if (failed) run_extra_["failed_items"] = run_extra_.value("failed_items", std::size_t{0}) + failed;
  if (shed) run_extra_["shots_shed"] = run_extra_.value("shots_shed", std::size_t{0}) + shed;

  evaluation::MetricMap m;
  if (corpus_->is_classification()) {
    std::vector<std::optional<CategoryId>> preds;
    std::vector<CategoryId> golds;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& o = results[i].outcome;
      preds.push_back(o.value ? std::optional<CategoryId>(std::get<CategoryId>(*o.value)) : std::nullopt);
      golds.push_back(test_items[i]->label());
    }
    m = classification_fold_metrics(preds, golds);
  } else {
    std::vector<std::optional<int>> preds;
    std::vector<int> golds;
    std::size_t malformed = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& o = results[i].outcome;
      preds.push_back(o.value ? std::optional<int>(std::get<int>(*o.value)) : std::nullopt);
      malformed += !o.value;
      golds.push_back(test_items[i]->score());
    }
    const auto report = evaluation::scoring_metrics(preds, golds, corpus_->target().range());
    if (report.correlation.degenerate) run_extra_["degenerate_folds"].push_back(fold);
    m = report.metrics();
    m["malformed_rate"] = static_cast<double>(malformed) / static_cast<double>(preds.size());
  }
  if (p.k > 0) m["shot_label_match"] = shot_match / static_cast<double>(results.size());
  return m;
}

evaluation::MetricMap Experiment::run_fold(const Corpus& train, const Corpus& test, int fold,
                                           std::vector<json>* transcript) {
  return config_.is_baseline() ? baseline_fold(train, test, fold, transcript)
                               : prompt_fold(train, test, fold, transcript);
}

json Experiment::metadata() const {
  json m;
  m["label"] = config_.name;
  m["seed"] = config_.seed;
  m["dataset"] = config_.dataset.path.filename().string();
  m["split"] = config_.dataset.split.to_json();
  m["documents"] = corpus_->document_count();
  m["items"] = corpus_->item_count();
  if (corpus_->is_classification()) {
    m["classes"] = std::vector<std::string>(corpus_->target().schema().categories().begin(),
                                            corpus_->target().schema().categories().end());
  }
  if (config_.is_baseline()) {
    m["method"] = "baseline";
  } else {
    const auto& p = config_.prompt();
    m["method"] = "prompt";
    m["backend"] = p.backend;
    m["model"] = p.model;
    m["strategy"] = retrieval::to_string(p.strategy);
    m["k"] = p.k;
    m["mode"] = extraction::to_string(p.mode);
    m["explanation"] = p.explanation;
    m["pseudonymize"] = p.pseudonymize;
    if (p.gar) m["gar_budget"] = p.gar->budget;
  }
  if (config_.evaluation.two_tier) {
    m["two_tier"] = {{"include_none", config_.evaluation.include_none}, {"subsumption_conditioned_on", "gold"}};
  }
  return m;
}

json Experiment::manifest() const {
  json m;
  m["tool"] = "lexmine";
  m["version"] = kVersion;
  const auto cfg = config_.to_json();
  m["config"] = cfg;
  m["config_sha256"] = sha256_hex(cfg.dump());
  m["inputs"] = json::array();
  for (const auto& f : config_.input_files()) m["inputs"].push_back({{"path", f.string()}, {"sha256", sha256_file(f)}});
  m["isa"] = kernels::name(kernels::active());
  if (gateway_) m["chat_cache"] = gateway_->stats().to_json();
  if (embedding_cache_) {
    m["embedding_cache"] = {{"hits", embedding_cache_->hits()}, {"misses", embedding_cache_->misses()}};
  }
  return m;
}

RunOutput Experiment::run() {
  RunOutput out;
  run_extra_ = json::object();
  const auto folds = stage("split", [&] { return make_folds(*corpus_, config_.dataset.split); });
  std::vector<evaluation::MetricMap> metrics;
  for (const auto& f : folds) {
    const int index = static_cast<int>(metrics.size());
    metrics.push_back(stage("fold " + std::to_string(index), [&] { return run_fold(f.train, f.test, index, &out.transcript); }));
  }
  out.report.metadata = metadata();
  out.report.aggregate = stage("aggregate", [&] { return evaluation::aggregate_folds(metrics); });
  out.report.extra = run_extra_;
  out.manifest = manifest();
  out.table = evaluation::render_table(std::span<const evaluation::EvalReport>(&out.report, 1));
  return out;
}

RunOutput Experiment::run_transfer() {
  RunOutput out;
  run_extra_ = json::object();
  auto tasks = config_.transfer_tasks.empty() ? corpus_->task_ids() : config_.transfer_tasks;
  const auto cells = evaluation::transfer_matrix(
      *corpus_, tasks, config_.dataset.split, [&](const Corpus& train, const Corpus& test, int fold) {
        std::vector<json> lines;
        auto m = run_fold(train, test, fold, &lines);
        const std::string pair = train.documents().front().task_id + "->" + test.documents().front().task_id;
        for (auto& l : lines) {
          l["transfer"] = pair;
          out.transcript.push_back(std::move(l));
        }
        return m;
      });
  std::vector<evaluation::MetricMap> ok;
  json cell_json = json::array();
  for (const auto& c : cells) {
    cell_json.push_back(c.to_json());
    if (!c.failed) ok.push_back(c.metrics);
  }
  out.report.metadata = metadata();
  out.report.metadata["transfer_tasks"] = tasks;
  if (!ok.empty()) out.report.aggregate = evaluation::aggregate_folds(ok);
  out.report.extra = run_extra_;
  out.report.extra["transfer"] = cell_json;
  out.manifest = manifest();
  const std::string metric = corpus_->is_classification() ? "macro_f1" : "spearman";
  out.table = evaluation::render_transfer(cells, metric);
  return out;
}

RunOutput run(const ExperimentConfig& config) {
  Experiment e(config);
  auto out = e.run();
  write_outputs(out, config.output);
  return out;
}

RunOutput run_transfer(const ExperimentConfig& config) {
  Experiment e(config);
  auto out = e.run_transfer();
  write_outputs(out, config.output);
  return out;
}

void write_outputs(const RunOutput& output, const fs::path& dir) {
  fs::create_directories(dir);
  auto write = [&](const char* name, const std::string& body) {
    const auto path = dir / name;
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
      if (!out) throw Error("cannot write " + tmp);
      out << body;
    }
    fs::rename(tmp, path);
  };
  write("report.json", output.report.to_json().dump(2) + "\n");
  write("table.txt", output.table);
  std::string lines;
  for (const auto& l : output.transcript) lines += l.dump() + "\n";
  write("transcript.jsonl", lines);
  write("manifest.json", output.manifest.dump(2) + "\n");
}

std::vector<std::pair<std::string, ExperimentConfig>> ablation_variants(const ExperimentConfig& base,
                                                                        std::string_view ablation) {
  if (base.is_baseline()) throw Error("ablations apply to prompt methods");
  std::vector<std::pair<std::string, ExperimentConfig>> out;
  auto variant = [&](const std::string& name, auto&& edit) {
    ExperimentConfig c = base;
    edit(c.prompt());
    c.name = base.name + "/" + name;
    c.output = base.output / name;
    out.emplace_back(name, std::move(c));
  };
  if (ablation == "pseudonymize") {
    variant("plain", [](PromptSpec& p) { p.pseudonymize = false; });
    variant("pseudonyms", [](PromptSpec& p) { p.pseudonymize = true; });
  } else if (ablation == "inverse-rag") {
    variant("rag", [](PromptSpec& p) { p.strategy = retrieval::Strategy::rag; });
    variant("inverse_rag", [](PromptSpec& p) { p.strategy = retrieval::Strategy::inverse_rag; });
    variant("random", [](PromptSpec& p) { p.strategy = retrieval::Strategy::random; });
  } else if (ablation == "no-explanation") {
    variant("explanation", [](PromptSpec& p) { p.explanation = true; });
    variant("no_explanation", [](PromptSpec& p) { p.explanation = false; });
  } else if (ablation == "zero-shot-cot") {
    variant("result_k0", [](PromptSpec& p) {
      p.k = 0;
      p.mode = extraction::Mode::result;
      p.gar.reset();
    });
    variant("cot_k0", [](PromptSpec& p) {
      p.k = 0;
      p.mode = extraction::Mode::cot;
      p.gar.reset();
    });
  } else {
    throw Error("unknown ablation " + std::string(ablation));
  }
  return out;
}

}  // namespace lexmine::runner
