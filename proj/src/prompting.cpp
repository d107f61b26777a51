#include "lexmine/prompting.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lexmine/error.hpp"
#include "lexmine/rng.hpp"
#include "lexmine/text.hpp"

namespace lexmine::prompting {

PromptTemplateSet PromptTemplateSet::defaults() {
  PromptTemplateSet t;
  t.system =
      "Annotate texts according to the Gutachtenstil.\n\n"
      "{{explanation}}"
      "The text must be assigned to exactly one of the following categories: {{categories}}\n\n"
      "Answer in one word.\n\n"
      "Your answer should only mention the relevant component.";
  t.result_query = "Text:\n\n{{text}}\n\nAnswer in one word. Which part of the Gutachtenstil is this?";
  t.cot_query =
      "Text:\n\n{{text}}\n\n"
      "Explain: What part of the Gutachtenstil is this?\n"
      "Briefly explain your decision in {{language}}, up to {{word_budget}} words.\n"
      "End your answer with the category.";
  t.score_system =
      "Grade essays according to the grading instructions.\n\n"
      "{{explanation}}"
      "Each essay receives a whole number of points between {{min}} and {{max}}.\n\n"
      "Answer with a single integer.";
  t.score_query = "Essay:\n\n{{text}}\n\nAnswer with a single integer. How many points does this essay receive?";
  t.score_cot_query =
      "Essay:\n\n{{text}}\n\n"
      "Explain: How many points does this essay receive?\n"
      "Briefly explain your decision in {{language}}, up to {{word_budget}} words.\n"
      "End your answer with the score as a single integer.";
  return t;
}

PromptTemplateSet PromptTemplateSet::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  auto t = defaults();
  auto take = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j.at(key).get<std::string>();
  };
  take("system", t.system);
  take("result_query", t.result_query);
  take("cot_query", t.cot_query);
  take("score_system", t.score_system);
  take("score_query", t.score_query);
  take("score_cot_query", t.score_cot_query);
  take("explanation", t.explanation);
  take("quote_open", t.quote_open);
  take("quote_close", t.quote_close);
  take("list_separator", t.list_separator);
  take("list_last", t.list_last);
  take("language", t.language);
  if (j.contains("word_budget")) t.word_budget = j.at("word_budget").get<int>();
  if (j.contains("explanation_file")) {
    auto path = std::filesystem::path(j.at("explanation_file").get<std::string>());
    if (path.is_relative()) path = base_dir / path;
    std::ifstream in(path);
    if (!in) throw Error("cannot read explanation file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    t.explanation = ss.str();
  }
  t.validate();
  return t;
}

PromptTemplateSet PromptTemplateSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read template file " + path.string());
  try {
    return from_json(nlohmann::json::parse(in), path.parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw Error("template file " + path.string() + ": " + e.what());
  }
}

nlohmann::json PromptTemplateSet::to_json() const {
  return {{"system", system},
          {"result_query", result_query},
          {"cot_query", cot_query},
          {"score_system", score_system},
          {"score_query", score_query},
          {"score_cot_query", score_cot_query},
          {"explanation", explanation},
          {"quote_open", quote_open},
          {"quote_close", quote_close},
          {"list_separator", list_separator},
          {"list_last", list_last},
          {"language", language},
          {"word_budget", word_budget}};
}

void PromptTemplateSet::validate() const {
  auto need = [](const std::string& tmpl, const char* slot, const char* name) {
    if (tmpl.find(std::string("{{") + slot + "}}") == std::string::npos) {
      throw Error(std::string("template ") + name + " lacks {{" + slot + "}}");
    }
  };
  need(system, "categories", "system");
  need(system, "explanation", "system");
  need(result_query, "text", "result_query");
  need(cot_query, "text", "cot_query");
  need(score_system, "explanation", "score_system");
  need(score_query, "text", "score_query");
  need(score_cot_query, "text", "score_cot_query");
  if (word_budget <= 0) throw Error("template word_budget must be positive");
}

std::string render(const std::string& tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string::npos) throw Error("template: unterminated slot");
    const auto name = tmpl.substr(open + 2, close - open - 2);
    auto it = values.find(name);
    if (it == values.end()) throw Error("template: unknown slot {{" + name + "}}");
    out.append(tmpl, pos, open - pos);
    out += it->second;
    pos = close + 2;
  }
  out.append(tmpl, pos, std::string::npos);
  return out;
}

const CategoryId& PseudonymMap::apply(const CategoryId& c) const {
  auto it = forward.find(c);
  if (it == forward.end()) throw Error("pseudonym map: unknown category " + c);
  return it->second;
}

const CategoryId& PseudonymMap::invert(const CategoryId& c) const {
  for (const auto& [k, v] : forward) {
    if (v == c) return k;
  }
  throw Error("pseudonym map: no preimage for " + c);
}

PseudonymMap PseudonymMap::inverse() const {
  PseudonymMap inv{{}, seed, request_id};
  for (const auto& [k, v] : forward) inv.forward[v] = k;
  return inv;
}

nlohmann::json PseudonymMap::to_json() const {
  return {{"forward", forward}, {"seed", seed}, {"request_id", request_id}};
}

PseudonymMap pseudonymize(const LabelSchema& schema, std::uint64_t seed, std::string request_id) {
  if (schema.size() < 2) throw Error("pseudonymize: needs at least 2 categories");
  std::vector<CategoryId> perm(schema.categories().begin(), schema.categories().end());
  Rng rng(derive_seed(seed, "pseudonymize"));
  rng.shuffle(perm);
  PseudonymMap map{{}, seed, std::move(request_id)};
  for (std::size_t i = 0; i < schema.size(); ++i) map.forward[schema.category(i)] = perm[i];
  return map;
}

std::vector<llm::ChatMessage> PromptBundle::restored() const {
  auto out = messages;
  // back to front so earlier offsets stay valid
  for (auto it = substitutions.rbegin(); it != substitutions.rend(); ++it) {
    out.at(it->message).content.replace(it->begin, it->end - it->begin, it->original);
  }
  return out;
}

nlohmann::json PromptBundle::to_json() const {
  nlohmann::json j;
  j["query_item_id"] = query_item_id;
  j["mode"] = extraction::to_string(mode);
  j["messages"] = nlohmann::json::array();
  for (const auto& m : messages) j["messages"].push_back({{"role", llm::to_string(m.role)}, {"content", m.content}});
  j["answer_key"] = answer_key;
  if (pseudonyms) {
    j["pseudonyms"] = pseudonyms->to_json();
    j["substitutions"] = substitutions.size();
  }
  return j;
}

PromptBuilder::PromptBuilder(PromptTemplateSet templates, Target target)
    : templates_(std::move(templates)), target_(std::move(target)) {
  templates_.validate();
  if (target_.is_classification()) matcher_.emplace(target_.schema());
}

std::string PromptBuilder::explanation_block() const {
  const auto body = text::trim(templates_.explanation);
  return body.empty() ? std::string() : body + "\n\n";
}

std::string PromptBuilder::category_list() const {
  const auto& schema = target_.schema();
  std::string out;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i > 0) out += (i + 1 == schema.size()) ? templates_.list_last : templates_.list_separator;
    out += templates_.quote_open + schema.primary_form(schema.category(i)) + templates_.quote_close;
  }
  return out;
}

std::string PromptBuilder::system_prompt(bool explanation) const {
  const std::string block = explanation ? explanation_block() : std::string();
  if (target_.is_classification()) {
    return render(templates_.system, {{"explanation", block}, {"categories", category_list()}});
  }
  const auto& r = target_.range();
  return render(templates_.score_system,
                {{"explanation", block}, {"min", std::to_string(r.min)}, {"max", std::to_string(r.max)}});
}

std::string PromptBuilder::render_query(const std::string& item_text, extraction::Mode mode) const {
  const bool cot = mode == extraction::Mode::cot;
  std::map<std::string, std::string> values{{"text", item_text},
                                            {"language", templates_.language},
                                            {"word_budget", std::to_string(templates_.word_budget)}};
  if (target_.is_classification()) return render(cot ? templates_.cot_query : templates_.result_query, values);
  values["min"] = std::to_string(target_.range().min);
  values["max"] = std::to_string(target_.range().max);
  return render(cot ? templates_.score_cot_query : templates_.score_query, values);
}

std::string PromptBuilder::render_answer(const Exemplar& shot, extraction::Mode mode) const {
  if (mode == extraction::Mode::cot) {
    if (!shot.rationale) throw Error("CoT shots require rationales");
    return *shot.rationale;
  }
  if (target_.is_classification()) return target_.schema().primary_form(std::get<CategoryId>(shot.gold));
  return std::to_string(std::get<int>(shot.gold));
}

PromptBundle PromptBuilder::build(const Item& query, std::span<const Exemplar> shots,
                                  const PromptOptions& options) const {
  if (options.mode == extraction::Mode::score) throw Error("prompt mode must be result or cot");
  if (options.mode == extraction::Mode::cot) {
    for (const auto& s : shots) {
      if (!s.rationale) throw Error("CoT shots require rationales");
    }
  }
  if (options.pseudonyms && !target_.is_classification()) throw Error("pseudonyms apply to classification only");

  PromptBundle b;
  b.query_item_id = query.id;
  b.mode = options.mode;
  b.messages.push_back({llm::Role::system, system_prompt(options.explanation)});
  for (const auto& s : shots) {
    b.messages.push_back({llm::Role::user, render_query(s.text, options.mode)});
    b.messages.push_back({llm::Role::assistant, render_answer(s, options.mode)});
  }
  b.messages.push_back({llm::Role::user, render_query(query.text, options.mode)});

  if (target_.is_classification()) {
    const auto& schema = target_.schema();
    for (const auto& c : schema.categories()) b.choices.push_back(schema.primary_form(c));
    b.answer_key = schema.primary_form(std::get<CategoryId>(query.gold));
  } else {
    for (int v = target_.range().min; v <= target_.range().max; ++v) b.choices.push_back(std::to_string(v));
    b.answer_key = std::to_string(std::get<int>(query.gold));
  }
  if (options.pseudonyms) {
    pseudonymize_bundle(b, *options.pseudonyms);
    b.answer_key = target_.schema().primary_form(options.pseudonyms->apply(std::get<CategoryId>(query.gold)));
  }
  return b;
}

void PromptBuilder::pseudonymize_bundle(PromptBundle& bundle, const PseudonymMap& map) const {
  const auto& schema = target_.schema();
  for (std::size_t m = 0; m < bundle.messages.size(); ++m) {
    const std::string original = bundle.messages[m].content;
    std::string out;
    std::size_t pos = 0;
    for (const auto& mention : matcher_->find_all(original)) {
      out.append(original, pos, mention.begin - pos);
      const auto& replacement = schema.primary_form(map.apply(schema.category(mention.category)));
      bundle.substitutions.push_back(
          {m, out.size(), out.size() + replacement.size(), original.substr(mention.begin, mention.end - mention.begin)});
      out += replacement;
      pos = mention.end;
    }
    out.append(original, pos, std::string::npos);
    bundle.messages[m].content = std::move(out);
  }
  bundle.pseudonyms = map;
}

llm::ChatRequest make_request(const PromptBundle& bundle, const std::string& backend, const std::string& model,
                              int max_tokens, double temperature) {
  llm::ChatRequest r;
  r.backend = backend;
  r.model = model;
  r.messages = bundle.messages;
  r.max_tokens = max_tokens;
  r.temperature = temperature;
  r.metadata[llm::meta::item_id] = bundle.query_item_id;
  r.metadata[llm::meta::mode] = std::string(extraction::to_string(bundle.mode));
  r.metadata[llm::meta::answer] = bundle.answer_key;
  std::string choices;
  for (const auto& c : bundle.choices) choices += c + '\n';
  r.metadata[llm::meta::choices] = choices;
  return r;
}

extraction::ExtractionOutcome decode_reply(const std::string& reply, const PromptBundle& bundle, const Target& target,
                                           const extraction::CategoryExtractor* extractor) {
  if (!target.is_classification()) {
    return extraction::extract_score(reply, target.range(),
                                     bundle.mode == extraction::Mode::cot ? extraction::Mode::cot
                                                                          : extraction::Mode::score);
  }
  if (!extractor) throw Error("decode_reply: classification needs an extractor");
  auto out = extractor->extract(reply, bundle.mode);
  if (bundle.pseudonyms) {
    if (out.value && !out.malformed) out.value = bundle.pseudonyms->invert(std::get<CategoryId>(*out.value));
    std::map<CategoryId, std::size_t> counts;
    for (const auto& [c, n] : out.counts) counts[bundle.pseudonyms->invert(c)] = n;
    out.counts = std::move(counts);
    for (auto& s : out.spans) s.match = bundle.pseudonyms->invert(s.match);
  }
  return out;
}

}  // namespace lexmine::prompting
