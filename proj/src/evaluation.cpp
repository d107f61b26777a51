#include "lexmine/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "lexmine/error.hpp"

namespace lexmine::evaluation {

MetricMap ClassificationReport::metrics(const std::string& prefix) const {
  MetricMap m;
  m[prefix + "macro_f1"] = macro_f1;
  m[prefix + "accuracy"] = accuracy;
  for (const auto& c : classes) m[prefix + "f1/" + c] = per_class.at(c).f1;
  return m;
}

ClassificationReport classification_metrics(std::span<const std::optional<CategoryId>> preds,
                                            std::span<const CategoryId> golds, std::span<const CategoryId> classes,
                                            MacroAverage average, std::span<const CategoryId> exclude_from_macro) {
  if (preds.size() != golds.size()) {
    throw Error("classification_metrics: " + std::to_string(preds.size()) + " predictions for " +
                std::to_string(golds.size()) + " golds");
  }
  if (golds.empty()) throw Error("classification_metrics: no items");
  ClassificationReport r;
  r.classes.assign(classes.begin(), classes.end());
  r.n = golds.size();
  for (const auto& c : classes) r.per_class[c];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    auto g = r.per_class.find(golds[i]);
    if (g == r.per_class.end()) throw Error("classification_metrics: gold label " + golds[i] + " not in class list");
    ++g->second.support;
    if (!preds[i]) {
      ++r.malformed;
      ++g->second.fn;
      continue;
    }
    if (*preds[i] == golds[i]) {
      ++correct;
      ++g->second.tp;
      continue;
    }
    ++g->second.fn;
    if (auto p = r.per_class.find(*preds[i]); p != r.per_class.end()) ++p->second.fp;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);

  double sum = 0.0;
  for (const auto& c : classes) {
    auto& s = r.per_class[c];
    s.precision = (s.tp + s.fp) ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp) : 0.0;
    s.recall = (s.tp + s.fn) ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn) : 0.0;
    const auto denom = 2 * s.tp + s.fp + s.fn;
    s.f1 = denom ? 2.0 * static_cast<double>(s.tp) / static_cast<double>(denom) : 0.0;
    const bool excluded = std::find(exclude_from_macro.begin(), exclude_from_macro.end(), c) != exclude_from_macro.end();
    if (excluded || (average == MacroAverage::gold_present && s.support == 0)) continue;
    r.macro_classes.push_back(c);
    sum += s.f1;
  }
  r.macro_f1 = r.macro_classes.empty() ? 0.0 : sum / static_cast<double>(r.macro_classes.size());
  return r;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw Error("pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {
bool constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}
}  // namespace

Correlation correlation_metrics(std::span<const double> preds, std::span<const double> golds) {
  if (preds.size() != golds.size()) throw Error("correlation_metrics: length mismatch");
  if (golds.size() < 3) throw Error("correlation_metrics: need at least 3 pairs");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!std::isfinite(preds[i]) || !std::isfinite(golds[i])) throw Error("correlation_metrics: non-finite value");
  }
  if (constant(golds)) throw Error("correlation_metrics: gold scores have zero variance");
  Correlation c;
  if (constant(preds)) {
    c.degenerate = true;
    return c;
  }
  c.pearson = pearson(preds, golds);
  const auto rp = average_ranks(preds);
  const auto rg = average_ranks(golds);
  c.spearman = pearson(rp, rg);
  return c;
}

MetricMap ScoringReport::metrics() const {
  return {{"spearman", correlation.spearman}, {"pearson", correlation.pearson}, {"accuracy", accuracy}};
}

ScoringReport scoring_metrics(std::span<const std::optional<int>> preds, std::span<const int> golds,
                              const ScoreRange& range) {
  if (preds.size() != golds.size()) throw Error("scoring_metrics: length mismatch");
  ScoringReport r;
  r.n = golds.size();
  std::vector<double> p, g;
  std::size_t correct = 0;
  const double mid = (range.min + range.max) / 2.0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    g.push_back(golds[i]);
    if (!preds[i]) {
      ++r.malformed;
      p.push_back(mid);
      continue;
    }
    p.push_back(*preds[i]);
    if (*preds[i] == golds[i]) ++correct;
  }
  r.accuracy = r.n ? static_cast<double>(correct) / static_cast<double>(r.n) : 0.0;
  r.correlation = correlation_metrics(p, g);
  return r;
}

TwoTierReport project_two_tier(std::span<const std::optional<CategoryId>> preds, std::span<const CategoryId> golds,
                               const LabelSchema& schema, bool include_none, MacroAverage average) {
  if (preds.size() != golds.size()) throw Error("project_two_tier: length mismatch");
  TwoTierReport out;

  std::vector<CategoryId> tier1_classes;
  std::vector<CategoryId> children;
  for (const auto& c : schema.categories()) {
    const auto& t = schema.tier1(c);
    if (std::find(tier1_classes.begin(), tier1_classes.end(), t) == tier1_classes.end()) tier1_classes.push_back(t);
    if (t != c) {
      if (!out.parent.empty() && out.parent != t) {
        throw SchemaError("project_two_tier: schema sub-divides more than one tier-1 class");
      }
      out.parent = t;
      children.push_back(c);
    }
  }
  if (out.parent.empty()) throw SchemaError("project_two_tier: tier-1 map sub-divides no class");

  const auto& none = schema.none_category();
  std::vector<CategoryId> exclude;
  if (!include_none && none) exclude.push_back(*none);

  std::vector<std::optional<CategoryId>> p1;
  std::vector<CategoryId> g1;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    g1.push_back(schema.tier1(golds[i]));
    p1.push_back(preds[i] ? std::optional<CategoryId>(schema.tier1(*preds[i])) : std::nullopt);
  }
  out.tier1 = classification_metrics(p1, g1, tier1_classes, average, exclude);

  std::vector<CategoryId> sub_classes = children;
  const CategoryId other = none ? *none : CategoryId("N");
  sub_classes.push_back(other);
  auto sub_label = [&](const CategoryId& c) {
    return std::find(children.begin(), children.end(), c) != children.end() ? c : other;
  };
  std::vector<std::optional<CategoryId>> p2;
  std::vector<CategoryId> g2;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (g1[i] != out.parent) continue;
    g2.push_back(sub_label(golds[i]));
    p2.push_back(preds[i] ? std::optional<CategoryId>(sub_label(*preds[i])) : std::nullopt);
  }
  if (!g2.empty()) {
    out.subsumption = classification_metrics(p2, g2, sub_classes, average, exclude);
  } else {
    out.subsumption.classes = sub_classes;
    for (const auto& c : sub_classes) out.subsumption.per_class[c];
  }
  return out;
}

Aggregate aggregate_folds(std::span<const MetricMap> folds) {
  if (folds.empty()) throw Error("aggregate_folds: no folds");
  Aggregate a;
  a.folds = folds.size();
  a.single_fold = folds.size() == 1;
  for (const auto& f : folds) {
    if (f.size() != folds[0].size() ||
        !std::equal(f.begin(), f.end(), folds[0].begin(), [](const auto& x, const auto& y) { return x.first == y.first; })) {
      throw Error("aggregate_folds: folds carry different metric keys");
    }
  }
  for (const auto& [key, _] : folds[0]) {
    MetricSummary s;
    for (const auto& f : folds) s.folds.push_back(f.at(key));
    const double n = static_cast<double>(s.folds.size());
    s.mean = std::accumulate(s.folds.begin(), s.folds.end(), 0.0) / n;
    if (s.folds.size() > 1) {
      double ss = 0.0;
      for (double v : s.folds) ss += (v - s.mean) * (v - s.mean);
      s.sd = std::sqrt(ss / (n - 1.0));
    }
    a.metrics[key] = std::move(s);
  }
  return a;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["metadata"] = metadata;
  j["folds"] = aggregate.folds;
  j["single_fold"] = aggregate.single_fold;
  j["metrics"] = nlohmann::json::object();
  for (const auto& [k, s] : aggregate.metrics) {
    j["metrics"][k] = {{"mean", s.mean}, {"sd", s.sd}, {"folds", s.folds}};
  }
  j["extra"] = extra;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.metadata = j.at("metadata");
    r.aggregate.folds = j.at("folds").get<std::size_t>();
    r.aggregate.single_fold = j.at("single_fold").get<bool>();
    for (const auto& [k, v] : j.at("metrics").items()) {
      r.aggregate.metrics[k] = {v.at("mean").get<double>(), v.at("sd").get<double>(),
                                v.at("folds").get<std::vector<double>>()};
    }
    if (j.contains("extra")) r.extra = j.at("extra");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string format_metric(double v, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << std::abs(v);
  std::string s = os.str();
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  if (v < 0 && s.find_first_not_of("0.") != std::string::npos) s.insert(0, "-");
  return s;
}

namespace {

std::string cell(const Aggregate& a, const std::string& key, int decimals) {
  auto it = a.metrics.find(key);
  if (it == a.metrics.end()) return "-";
  std::string s = format_metric(it->second.mean, decimals);
  if (a.folds > 1) s += " ±" + format_metric(it->second.sd, 2);
  return s;
}

std::string pad(const std::string& s, std::size_t width) {
  // count code points, not bytes, so "±" lines up
  std::size_t len = 0;
  for (unsigned char c : s) len += (c & 0xC0) != 0x80;
  return s + std::string(width > len ? width - len : 0, ' ');
}

}  // namespace

std::string render_table(std::span<const EvalReport> reports) {
  struct Column {
    std::string title, key;
    int decimals;
  };
  std::vector<Column> cols;
  bool classification = false;
  for (const auto& r : reports) classification = classification || r.aggregate.metrics.count("macro_f1");
  if (classification) {
    cols = {{"Macro F1", "macro_f1", 3}, {"Acc.", "accuracy", 3}};
    std::vector<std::string> classes;
    for (const auto& r : reports) {
      if (r.metadata.contains("classes")) {
        for (const auto& c : r.metadata["classes"]) {
          auto name = c.get<std::string>();
          if (std::find(classes.begin(), classes.end(), name) == classes.end()) classes.push_back(name);
        }
      }
    }
    for (const auto& c : classes) cols.push_back({c, "f1/" + c, 2});
  } else {
    cols = {{"Spearman", "spearman", 3}, {"Pearson", "pearson", 3}, {"Acc.", "accuracy", 3}};
  }
  for (const auto& r : reports) {
    if (r.aggregate.metrics.count("shot_label_match")) {
      cols.push_back({"Shot label", "shot_label_match", 3});
      break;
    }
  }

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Method"});
  for (const auto& c : cols) rows[0].push_back(c.title);
  for (const auto& r : reports) {
    std::vector<std::string> row{r.metadata.value("label", std::string("run"))};
    for (const auto& c : cols) row.push_back(cell(r.aggregate, c.key, c.decimals));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (std::size_t i = 0; i < width.size(); ++i) {
    for (const auto& row : rows) {
      std::size_t len = 0;
      for (unsigned char ch : row[i]) len += (ch & 0xC0) != 0x80;
      width[i] = std::max(width[i], len);
    }
  }
  std::ostringstream os;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      line += pad(rows[r][i], width[i]);
      if (i + 1 < rows[r].size()) line += i == 0 ? " || " : " | ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i + 1 < width.size() ? 3 : 0);
      os << std::string(total + 1, '=') << '\n';
    }
  }
  return os.str();
}

nlohmann::json TransferCell::to_json() const {
  nlohmann::json j{{"source", source}, {"target", target}, {"metrics", metrics}, {"failed", failed}};
  if (failed) j["error"] = error;
  return j;
}

std::vector<TransferCell> transfer_matrix(const Corpus& corpus, const std::vector<std::string>& tasks,
                                          const SplitSpec& split, const CellRunner& runner) {
  if (tasks.size() < 2) throw Error("transfer_matrix: needs at least 2 tasks");
  std::map<std::string, std::vector<Fold>> folds;
  std::map<std::string, std::string> fold_errors;
  for (const auto& t : tasks) {
    try {
      folds.emplace(t, make_folds(corpus.task(t), split));
    } catch (const std::exception& e) {
      fold_errors[t] = e.what();
    }
  }
  std::vector<TransferCell> cells;
  for (const auto& s : tasks) {
    for (const auto& t : tasks) {
      TransferCell c{s, t, {}, false, {}};
      try {
        if (fold_errors.count(s)) throw Error("task " + s + ": " + fold_errors[s]);
        if (fold_errors.count(t)) throw Error("task " + t + ": " + fold_errors[t]);
        const auto& fs = folds.at(s);
        const auto& ft = folds.at(t);
        const std::size_t n = std::min(fs.size(), ft.size());
        std::vector<MetricMap> per_fold;
        for (std::size_t i = 0; i < n; ++i) per_fold.push_back(runner(fs[i].train, ft[i].test, static_cast<int>(i)));
        for (const auto& [k, v] : aggregate_folds(per_fold).metrics) c.metrics[k] = v.mean;
      } catch (const std::exception& e) {
        c.failed = true;
        c.error = e.what();
      }
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

std::string render_transfer(std::span<const TransferCell> cells, const std::string& metric) {
  std::vector<std::string> sources, targets;
  for (const auto& c : cells) {
    if (std::find(sources.begin(), sources.end(), c.source) == sources.end()) sources.push_back(c.source);
    if (std::find(targets.begin(), targets.end(), c.target) == targets.end()) targets.push_back(c.target);
  }
  std::ostringstream os;
  os << metric << " (rows: source, columns: target)\n";
  os << std::setw(8) << "";
  for (const auto& t : targets) os << ' ' << std::setw(7) << t;
  os << '\n';
  for (const auto& s : sources) {
    os << std::setw(8) << s;
    for (const auto& t : targets) {
      std::string v = "n/a";
      for (const auto& c : cells) {
        if (c.source != s || c.target != t) continue;
        if (c.failed) {
          v = "failed";
        } else if (auto it = c.metrics.find(metric); it != c.metrics.end()) {
          v = format_metric(it->second);
        }
      }
      os << ' ' << std::setw(7) << v;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace lexmine::evaluation
