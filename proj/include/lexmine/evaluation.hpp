#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexmine/corpus.hpp"

namespace lexmine::evaluation {

/// Metric name -> value for one fold, e.g. "macro_f1", "accuracy", "f1/D".
using MetricMap = std::map<std::string, double>;

enum class MacroAverage {
  gold_present,  // classes with gold support
  all            // every listed class
};

struct ClassStats {
  std::size_t tp = 0, fp = 0, fn = 0, support = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct ClassificationReport {
  std::vector<CategoryId> classes;
  std::map<CategoryId, ClassStats> per_class;
  std::vector<CategoryId> macro_classes;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t n = 0;
  std::size_t malformed = 0;

  /// macro_f1, accuracy and f1/<class> for classes in `classes`.
  MetricMap metrics(const std::string& prefix = {}) const;
};

/// Missing predictions (malformed replies) are wrong for every class: they
/// add a false negative to the gold class and nothing else. Classes outside
/// `exclude_from_macro` enter the macro mean per `average`.
ClassificationReport classification_metrics(std::span<const std::optional<CategoryId>> preds,
                                            std::span<const CategoryId> golds, std::span<const CategoryId> classes,
                                            MacroAverage average = MacroAverage::gold_present,
                                            std::span<const CategoryId> exclude_from_macro = {});

struct Correlation {
  double spearman = 0.0;
  double pearson = 0.0;
  bool degenerate = false;  // predictions had zero variance
};

double pearson(std::span<const double> x, std::span<const double> y);
/// Ranks from 1, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> x);

/// n >= 3 and non-constant golds are required.
Correlation correlation_metrics(std::span<const double> preds, std::span<const double> golds);

struct ScoringReport {
  Correlation correlation;
  double accuracy = 0.0;  // exact agreement
  std::size_t n = 0;
  std::size_t malformed = 0;

  MetricMap metrics() const;
};

/// Malformed predictions are wrong for accuracy and take the range midpoint
/// for the correlations.
ScoringReport scoring_metrics(std::span<const std::optional<int>> preds, std::span<const int> golds,
                              const ScoreRange& range);

struct TwoTierReport {
  ClassificationReport tier1;
  ClassificationReport subsumption;
  CategoryId parent;  // the tier-1 class that is sub-divided
};

/// Tier 1 projects every label through the schema's tier-1 map. The second
/// tier keeps items whose gold projects to the sub-divided class and scores
/// them over its sub-classes plus the none category (all other labels map
/// to none). `include_none` controls whether none enters the macro means.
TwoTierReport project_two_tier(std::span<const std::optional<CategoryId>> preds, std::span<const CategoryId> golds,
                               const LabelSchema& schema, bool include_none = true,
                               MacroAverage average = MacroAverage::gold_present);

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for one fold
  std::vector<double> folds;
};

struct Aggregate {
  std::map<std::string, MetricSummary> metrics;
  std::size_t folds = 0;
  bool single_fold = false;
};

/// Every fold must carry the same metric keys.
Aggregate aggregate_folds(std::span<const MetricMap> folds);

/// A finished run: aggregated metrics plus free-form metadata.
struct EvalReport {
  nlohmann::json metadata = nlohmann::json::object();
  Aggregate aggregate;
  nlohmann::json extra = nlohmann::json::object();  // e.g. transfer cells, flags

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// ".761" style: three decimals, no leading zero.
std::string format_metric(double v, int decimals = 3);

/// Plain-text table, one row per report: metric columns then per-class F1.
std::string render_table(std::span<const EvalReport> reports);

struct TransferCell {
  std::string source;
  std::string target;
  MetricMap metrics;  // fold means
  bool failed = false;
  std::string error;

  nlohmann::json to_json() const;
};

/// Trains on `train` (source task, fold i) and scores on `test` (target
/// task, fold i).
using CellRunner = std::function<MetricMap(const Corpus& train, const Corpus& test, int fold)>;

/// Every ordered (source, target) pair; folds come from the same split spec
/// applied to each task, so the diagonal equals the in-domain run. A cell
/// that throws is marked failed and the matrix continues.
std::vector<TransferCell> transfer_matrix(const Corpus& corpus, const std::vector<std::string>& tasks,
                                          const SplitSpec& split, const CellRunner& runner);

std::string render_transfer(std::span<const TransferCell> cells, const std::string& metric);

}  // namespace lexmine::evaluation
