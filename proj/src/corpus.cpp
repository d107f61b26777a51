#include "lexmine/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "lexmine/error.hpp"
#include "lexmine/rng.hpp"
#include "lexmine/text.hpp"

namespace lexmine {

void ScoreRange::validate() const {
  if (!(min < max)) {
    throw Error("score range requires min < max, got " + std::to_string(min) + ".." + std::to_string(max));
  }
}

std::string gold_to_string(const Gold& g) {
  if (const auto* c = std::get_if<CategoryId>(&g)) return *c;
  return std::to_string(std::get<int>(g));
}

nlohmann::json gold_to_json(const Gold& g) {
  if (const auto* c = std::get_if<CategoryId>(&g)) return *c;
  return std::get<int>(g);
}

const LabelSchema& Target::schema() const {
  if (!schema_) throw Error("corpus is a scoring corpus; no label schema");
  return *schema_;
}

const ScoreRange& Target::range() const {
  if (!range_) throw Error("corpus is a classification corpus; no score range");
  return *range_;
}

Corpus::Corpus(std::vector<Document> documents, Target target, std::size_t rejected_markers)
    : documents_(std::move(documents)), target_(std::move(target)), rejected_markers_(rejected_markers) {
  std::set<std::string> item_ids;
  std::set<std::string> doc_ids;
  for (const auto& doc : documents_) {
    if (!doc_ids.insert(doc.id).second) throw Error("duplicate document id " + doc.id);
    for (std::size_t i = 0; i < doc.items.size(); ++i) {
      const auto& item = doc.items[i];
      if (item.position != i) throw Error("document " + doc.id + ": positions are not contiguous");
      if (item.doc_id != doc.id) throw Error("item " + item.id + " does not belong to document " + doc.id);
      if (!item_ids.insert(item.id).second) throw Error("duplicate item id " + item.id);
      if (text::trim(item.text).empty()) throw Error("item " + item.id + ": empty text");
      if (target_.is_classification()) {
        const auto* label = std::get_if<CategoryId>(&item.gold);
        if (!label || !target_.schema().contains(*label)) {
          throw Error("item " + item.id + ": gold is not a schema category");
        }
      } else {
        const auto* score = std::get_if<int>(&item.gold);
        if (!score || !target_.range().contains(*score)) {
          throw Error("item " + item.id + ": gold score outside range");
        }
      }
    }
    item_count_ += doc.items.size();
  }
}

std::vector<const Item*> Corpus::items() const {
  std::vector<const Item*> out;
  out.reserve(item_count_);
  for (const auto& doc : documents_) {
    for (const auto& item : doc.items) out.push_back(&item);
  }
  return out;
}

Corpus Corpus::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Document> docs;
  docs.reserve(indices.size());
  for (auto i : indices) docs.push_back(documents_.at(i));
  return Corpus(std::move(docs), target_);
}

Corpus Corpus::task(const std::string& task_id) const {
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    if (documents_[i].task_id == task_id) indices.push_back(i);
  }
  return subset(indices);
}

std::vector<std::string> Corpus::task_ids() const {
  std::set<std::string> ids;
  for (const auto& doc : documents_) ids.insert(doc.task_id);
  return {ids.begin(), ids.end()};
}

namespace {

std::string as_id(const nlohmann::json& v, const char* field, std::size_t line) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw ParseError(std::string("field '") + field + "' must be a string or integer", line);
}

struct PendingItem {
  std::optional<std::string> id;
  std::optional<long long> position;
  std::size_t order;
  std::size_t line;
  std::string text;
  Gold gold;
};

struct PendingDoc {
  std::string id;
  std::string task_id;
  std::vector<PendingItem> items;
};

Corpus assemble(std::vector<PendingDoc> pending, const Target& target, std::size_t rejected) {
  std::vector<Document> docs;
  docs.reserve(pending.size());
  for (auto& pd : pending) {
    const bool positioned = std::all_of(pd.items.begin(), pd.items.end(),
                                        [](const PendingItem& p) { return p.position.has_value(); });
    if (positioned) {
      std::stable_sort(pd.items.begin(), pd.items.end(),
                       [](const PendingItem& a, const PendingItem& b) { return *a.position < *b.position; });
      for (std::size_t i = 1; i < pd.items.size(); ++i) {
        if (*pd.items[i].position == *pd.items[i - 1].position) {
          throw ParseError("document " + pd.id + ": duplicate position " +
                               std::to_string(*pd.items[i].position),
                           pd.items[i].line);
        }
      }
    }
    Document doc{pd.id, pd.task_id, {}};
    doc.items.reserve(pd.items.size());
    for (std::size_t i = 0; i < pd.items.size(); ++i) {
      auto& p = pd.items[i];
      Item item;
      item.doc_id = pd.id;
      item.position = i;
      item.id = p.id ? *p.id : pd.id + ":" + std::to_string(i);
      item.text = std::move(p.text);
      item.gold = std::move(p.gold);
      doc.items.push_back(std::move(item));
    }
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs), target, rejected);
}

}  // namespace

Corpus parse_corpus(std::istream& in, const Target& target) {
  std::vector<PendingDoc> pending;
  std::unordered_map<std::string, std::size_t> doc_index;
  std::set<std::string> item_ids;
  std::size_t rejected = 0;
  std::size_t order = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), line_no);
    }
    if (!rec.is_object()) throw ParseError("malformed record: not an object", line_no);
    if (!rec.contains("doc_id")) throw ParseError("malformed record: missing doc_id", line_no);
    if (!rec.contains("text") || !rec["text"].is_string()) {
      throw ParseError("malformed record: missing text", line_no);
    }
    PendingItem item;
    item.order = order++;
    item.line = line_no;
    item.text = rec["text"].get<std::string>();
    if (text::trim(item.text).empty()) throw ParseError("empty text", line_no);
    if (rec.contains("item_id")) item.id = as_id(rec["item_id"], "item_id", line_no);
    if (rec.contains("position")) {
      if (!rec["position"].is_number_integer() || rec["position"].get<long long>() < 0) {
        throw ParseError("malformed record: position must be a non-negative integer", line_no);
      }
      item.position = rec["position"].get<long long>();
    }

    if (target.is_classification()) {
      if (!rec.contains("label") || !rec["label"].is_string()) {
        throw ParseError("malformed record: missing label", line_no);
      }
      const auto raw = rec["label"].get<std::string>();
      const auto resolved = target.schema().resolve_label(raw);
      using Kind = LabelSchema::LabelKind;
      if (resolved.kind == Kind::unknown) throw ParseError("unknown category " + raw, line_no);
      if (resolved.kind == Kind::unused_marker) {
        ++rejected;
        continue;
      }
      item.gold = *resolved.category;
    } else {
      if (!rec.contains("score") || !rec["score"].is_number()) {
        throw ParseError("malformed record: missing score", line_no);
      }
      const double s = rec["score"].get<double>();
      if (s != std::floor(s)) throw ParseError("score must be an integer", line_no);
      const int score = static_cast<int>(s);
      if (!target.range().contains(score)) {
        throw ParseError("score " + std::to_string(score) + " outside range", line_no);
      }
      item.gold = score;
    }
    if (item.id && !item_ids.insert(*item.id).second) {
      throw ParseError("duplicate item_id " + *item.id, line_no);
    }

    const auto doc_id = as_id(rec["doc_id"], "doc_id", line_no);
    const std::string task_id = rec.contains("task_id") ? as_id(rec["task_id"], "task_id", line_no) : "";
    auto [it, inserted] = doc_index.emplace(doc_id, pending.size());
    if (inserted) pending.push_back({doc_id, task_id, {}});
    auto& doc = pending[it->second];
    if (doc.task_id != task_id) throw ParseError("document " + doc_id + ": conflicting task_id", line_no);
    doc.items.push_back(std::move(item));
  }
  for (const auto& doc : pending) {
    const bool any = std::any_of(doc.items.begin(), doc.items.end(), [](auto& p) { return p.position.has_value(); });
    const bool all = std::all_of(doc.items.begin(), doc.items.end(), [](auto& p) { return p.position.has_value(); });
    if (any && !all) throw ParseError("document " + doc.id + ": position given for some items only", 0);
  }
  return assemble(std::move(pending), target, rejected);
}

Corpus load_corpus(const std::filesystem::path& path, const Target& target) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return parse_corpus(in, target);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& doc : corpus.documents()) {
    for (const auto& item : doc.items) {
      nlohmann::json rec;
      rec["doc_id"] = doc.id;
      rec["item_id"] = item.id;
      rec["position"] = item.position;
      rec["text"] = item.text;
      rec[corpus.is_classification() ? "label" : "score"] = gold_to_json(item.gold);
      rec["task_id"] = doc.task_id;
      out << rec.dump() << '\n';
    }
  }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (!cols.empty() && !cols.back().empty() && cols.back().back() == '\r') cols.back().pop_back();
  return cols;
}

}  // namespace

Corpus load_essay_tsv(const std::filesystem::path& path, const ScoreRange& range,
                      std::optional<int> essay_set) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open essay file " + path.string());
  std::string line;
  if (!std::getline(in, line)) return Corpus({}, range);
  if (!text::is_valid_utf8(line)) line = text::latin1_to_utf8(line);
  const auto header = split_tabs(line);
  auto column = [&](const char* name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(std::string("essay TSV lacks column ") + name, 1);
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_id = column("essay_id");
  const auto c_set = column("essay_set");
  const auto c_text = column("essay");
  const auto c_score = column("domain1_score");

  std::vector<Document> docs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    if (!text::is_valid_utf8(line)) line = text::latin1_to_utf8(line);
    const auto cols = split_tabs(line);
    const auto need = std::max({c_id, c_set, c_text, c_score});
    if (cols.size() <= need) throw ParseError("malformed record: too few columns", line_no);
    int set = 0;
    int score = 0;
    try {
      set = std::stoi(cols[c_set]);
      score = std::stoi(cols[c_score]);
    } catch (const std::exception&) {
      throw ParseError("malformed record: non-numeric essay_set or score", line_no);
    }
    if (essay_set && set != *essay_set) continue;
    if (!range.contains(score)) {
      throw ParseError("score " + std::to_string(score) + " outside range", line_no);
    }
    Document doc{cols[c_id], std::to_string(set), {}};
    doc.items.push_back(Item{cols[c_id], cols[c_id], 0, cols[c_text], score});
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs), range);
}

SplitSpec SplitSpec::from_json(const nlohmann::json& j, std::uint64_t default_seed) {
  SplitSpec s;
  const auto kind = j.value("kind", std::string("holdout"));
  if (kind == "holdout") {
    s.kind = Kind::holdout;
  } else if (kind == "kfold") {
    s.kind = Kind::kfold;
  } else {
    throw Error("split kind must be holdout or kfold, got " + kind);
  }
  s.test_ratio = j.value("test_ratio", 0.2);
  s.k = j.value("k", 3);
  s.repeats = j.value("repeats", 1);
  s.seed = j.value("seed", default_seed);
  s.validate();
  return s;
}

nlohmann::json SplitSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = kind == Kind::holdout ? "holdout" : "kfold";
  if (kind == Kind::holdout) {
    j["test_ratio"] = test_ratio;
  } else {
    j["k"] = k;
    j["repeats"] = repeats;
  }
  j["seed"] = seed;
  return j;
}

void SplitSpec::validate() const {
  if (kind == Kind::holdout && !(test_ratio > 0.0 && test_ratio < 1.0)) {
    throw Error("holdout test_ratio must lie in (0, 1)");
  }
  if (kind == Kind::kfold && (k < 2 || repeats < 1)) throw Error("kfold requires k >= 2 and repeats >= 1");
}

namespace {

// Document indices ordered by id, then shuffled; independent of file order.
std::vector<std::size_t> shuffled_documents(const Corpus& corpus, std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.document_count());
  std::iota(order.begin(), order.end(), 0);
  const auto& docs = corpus.documents();
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return docs[a].id < docs[b].id; });
  Rng rng(seed);
  rng.shuffle(order);
  return order;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> partition(
    const std::vector<std::size_t>& order, std::size_t test_begin, std::size_t test_end) {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i >= test_begin && i < test_end ? test : train).push_back(order[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

}  // namespace

std::pair<Corpus, Corpus> holdout_split(const Corpus& corpus, const SplitSpec& spec) {
  if (spec.kind != SplitSpec::Kind::holdout) throw Error("holdout_split requires a holdout spec");
  spec.validate();
  const std::size_t n = corpus.document_count();
  if (n < 2) throw Error("cannot split: corpus has " + std::to_string(n) + " document(s)");
  auto n_test = static_cast<std::size_t>(std::llround(spec.test_ratio * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  const auto order = shuffled_documents(corpus, derive_seed(spec.seed, "holdout"));
  auto [train, test] = partition(order, 0, n_test);
  return {corpus.subset(train), corpus.subset(test)};
}

std::vector<Fold> kfold_splits(const Corpus& corpus, const SplitSpec& spec) {
  if (spec.kind != SplitSpec::Kind::kfold) throw Error("kfold_splits requires a kfold spec");
  spec.validate();
  const std::size_t n = corpus.document_count();
  const auto k = static_cast<std::size_t>(spec.k);
  if (k > n) {
    throw Error("cannot split: k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " documents");
  }
  std::vector<Fold> folds;
  for (int r = 0; r < spec.repeats; ++r) {
    const auto order = shuffled_documents(corpus, derive_seed(spec.seed, "kfold/" + std::to_string(r)));
    for (std::size_t f = 0; f < k; ++f) {
      auto [train, test] = partition(order, f * n / k, (f + 1) * n / k);
      folds.push_back({corpus.subset(train), corpus.subset(test), r, static_cast<int>(f)});
    }
  }
  return folds;
}

std::vector<Fold> make_folds(const Corpus& corpus, const SplitSpec& spec) {
  if (spec.kind == SplitSpec::Kind::kfold) return kfold_splits(corpus, spec);
  auto [train, test] = holdout_split(corpus, spec);
  std::vector<Fold> folds;
  folds.push_back({std::move(train), std::move(test), 0, 0});
  return folds;
}

}  // namespace lexmine
