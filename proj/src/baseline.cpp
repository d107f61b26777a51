#include "lexmine/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "lexmine/error.hpp"
#include "lexmine/kernels.hpp"
#include "lexmine/rng.hpp"
#include "lexmine/text.hpp"

namespace lexmine::baseline {

namespace {

const char* weighting_name(Weighting w) {
  switch (w) {
    case Weighting::counts:
      return "counts";
    case Weighting::binary:
      return "binary";
    case Weighting::tfidf:
      return "tfidf";
  }
  return "counts";
}

const char* loss_name(Loss l) {
  switch (l) {
    case Loss::hinge:
      return "hinge";
    case Loss::epsilon_insensitive:
      return "epsilon_insensitive";
    case Loss::squared:
      return "squared";
  }
  return "hinge";
}

}  // namespace

VectorizerConfig VectorizerConfig::from_json(const nlohmann::json& j) {
  VectorizerConfig c;
  c.lowercase = j.value("lowercase", c.lowercase);
  c.min_df = j.value("min_df", c.min_df);
  c.max_features = j.value("max_features", c.max_features);
  c.l2_normalize = j.value("l2_normalize", c.l2_normalize);
  const auto w = j.value("weighting", std::string("counts"));
  if (w == "counts") {
    c.weighting = Weighting::counts;
  } else if (w == "binary") {
    c.weighting = Weighting::binary;
  } else if (w == "tfidf") {
    c.weighting = Weighting::tfidf;
  } else {
    throw Error("unknown weighting " + w);
  }
  if (c.min_df < 1) throw Error("min_df must be >= 1");
  return c;
}

nlohmann::json VectorizerConfig::to_json() const {
  return {{"lowercase", lowercase},
          {"min_df", min_df},
          {"max_features", max_features},
          {"weighting", weighting_name(weighting)},
          {"l2_normalize", l2_normalize}};
}

std::vector<std::string> tokenize(std::string_view text_in, bool lowercase) {
  std::vector<std::string> out;
  for (auto& tok : text::tokenize(text_in, lowercase)) out.push_back(std::move(tok.folded));
  return out;
}

Vocabulary Vocabulary::fit(std::span<const std::string> texts, const VectorizerConfig& config) {
  if (texts.empty()) throw Error("fit_vocabulary: no texts");
  std::map<std::string, std::size_t> df;
  for (const auto& t : texts) {
    auto words = tokenize(t, config.lowercase);
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    for (auto& w : words) ++df[w];
  }
  if (df.empty()) throw Error("fit_vocabulary: all texts are empty");

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [term, count] : df) {
    if (count >= config.min_df) kept.emplace_back(term, count);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (config.max_features > 0 && kept.size() > config.max_features) kept.resize(config.max_features);

  Vocabulary v;
  v.config_ = config;
  v.n_docs_ = texts.size();
  for (auto& [term, count] : kept) {
    v.index_.emplace(term, static_cast<std::uint32_t>(v.terms_.size()));
    v.terms_.push_back(term);
    v.df_.push_back(count);
  }
  return v;
}

std::optional<std::uint32_t> Vocabulary::index_of(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

nlohmann::json Vocabulary::to_json() const {
  return {{"config", config_.to_json()}, {"terms", terms_}, {"df", df_}, {"documents", n_docs_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  v.config_ = VectorizerConfig::from_json(j.at("config"));
  v.terms_ = j.at("terms").get<std::vector<std::string>>();
  v.df_ = j.at("df").get<std::vector<std::size_t>>();
  v.n_docs_ = j.at("documents").get<std::size_t>();
  if (v.df_.size() != v.terms_.size()) throw Error("vocabulary: terms/df length mismatch");
  for (std::size_t i = 0; i < v.terms_.size(); ++i) {
    if (!v.index_.emplace(v.terms_[i], static_cast<std::uint32_t>(i)).second) {
      throw Error("vocabulary: duplicate term " + v.terms_[i]);
    }
  }
  return v;
}

double SparseVector::squared_norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s;
}

void SparseVector::validate() const {
  if (indices.size() != values.size()) throw Error("sparse vector: index/value length mismatch");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= dimension) throw Error("sparse vector: index out of range");
    if (i > 0 && indices[i] <= indices[i - 1]) throw Error("sparse vector: indices not increasing");
    if (!std::isfinite(values[i])) throw Error("sparse vector: non-finite weight");
  }
}

SparseVector transform(std::string_view text_in, const Vocabulary& vocab) {
  const auto& cfg = vocab.config();
  std::map<std::uint32_t, double> counts;
  for (const auto& w : tokenize(text_in, cfg.lowercase)) {
    if (auto idx = vocab.index_of(w)) counts[*idx] += 1.0;
  }
  SparseVector x;
  x.dimension = vocab.size();
  for (auto [idx, count] : counts) {
    double value = count;
    if (cfg.weighting == Weighting::binary) {
      value = 1.0;
    } else if (cfg.weighting == Weighting::tfidf) {
      const double n = static_cast<double>(vocab.document_count());
      const double df = static_cast<double>(vocab.document_frequency(idx));
      value = count * (std::log((1.0 + n) / (1.0 + df)) + 1.0);
    }
    x.indices.push_back(idx);
    x.values.push_back(value);
  }
  if (cfg.l2_normalize && !x.values.empty()) {
    const double norm = std::sqrt(x.squared_norm());
    for (auto& v : x.values) v /= norm;
  }
  return x;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.eta0 = j.value("eta0", c.eta0);
  c.power_t = j.value("power_t", c.power_t);
  const auto loss = j.value("loss", std::string("hinge"));
  if (loss == "hinge") {
    c.loss = Loss::hinge;
  } else if (loss == "epsilon_insensitive") {
    c.loss = Loss::epsilon_insensitive;
  } else if (loss == "squared") {
    c.loss = Loss::squared;
  } else {
    throw Error("unknown loss " + loss);
  }
  if (!(c.lambda > 0.0) || c.epochs < 1) throw Error("train config requires lambda > 0 and epochs >= 1");
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lambda", lambda}, {"epochs", epochs},   {"seed", seed},       {"loss", loss_name(loss)},
          {"epsilon", epsilon}, {"eta0", eta0}, {"power_t", power_t}};
}

std::span<const double> LinearModel::weights(std::size_t row) const {
  if (row >= rows()) throw Error("linear model: row out of range");
  return std::span<const double>(weights_).subspan(row * dimension_, dimension_);
}

void LinearModel::check_input(const SparseVector& x) const {
  if (x.dimension != dimension_) {
    throw Error("dimension mismatch: model " + std::to_string(dimension_) + ", input " +
                std::to_string(x.dimension));
  }
}

std::vector<double> LinearModel::decision(const SparseVector& x) const {
  check_input(x);
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) {
    out[r] = kernels::sparse_dot(x.indices, x.values, weights(r)) + bias_[r];
  }
  return out;
}

const CategoryId& LinearModel::predict_label(const SparseVector& x) const {
  if (kind_ != Kind::classification) throw Error("predict_label on a regression model");
  const auto scores = decision(x);
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    if (!active_[r]) continue;
    if (!best || scores[r] > scores[*best]) best = r;
  }
  if (!best) throw Error("classifier has no active classes");
  return classes_[*best];
}

double LinearModel::predict_score(const SparseVector& x) const {
  if (kind_ != Kind::regression) throw Error("predict_score on a classification model");
  return range_->clamp(decision(x)[0]);
}

void LinearModel::check_finite() const {
  for (double w : weights_) {
    if (!std::isfinite(w)) throw Error("linear model: non-finite weight");
  }
  for (double b : bias_) {
    if (!std::isfinite(b)) throw Error("linear model: non-finite bias");
  }
}

nlohmann::json LinearModel::to_json() const {
  nlohmann::json j;
  j["kind"] = kind_ == Kind::classification ? "classification" : "regression";
  j["dimension"] = dimension_;
  j["classes"] = classes_;
  j["bias"] = bias_;
  std::vector<int> active(active_.begin(), active_.end());
  j["active"] = active;
  auto rows_json = nlohmann::json::array();
  for (std::size_t r = 0; r < rows(); ++r) {
    auto w = weights(r);
    rows_json.push_back(std::vector<double>(w.begin(), w.end()));
  }
  j["weights"] = std::move(rows_json);
  if (range_) j["range"] = {{"min", range_->min}, {"max", range_->max}};
  j["config"] = config_.to_json();
  return j;
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
  LinearModel m;
  m.kind_ = j.at("kind").get<std::string>() == "classification" ? Kind::classification : Kind::regression;
  m.dimension_ = j.at("dimension").get<std::size_t>();
  m.classes_ = j.at("classes").get<std::vector<CategoryId>>();
  m.bias_ = j.at("bias").get<std::vector<double>>();
  for (int a : j.at("active").get<std::vector<int>>()) m.active_.push_back(static_cast<char>(a != 0));
  for (const auto& row : j.at("weights")) {
    auto w = row.get<std::vector<double>>();
    if (w.size() != m.dimension_) throw Error("linear model: weight row has wrong dimension");
    m.weights_.insert(m.weights_.end(), w.begin(), w.end());
  }
  if (m.active_.size() != m.bias_.size() || m.weights_.size() != m.bias_.size() * m.dimension_) {
    throw Error("linear model: inconsistent shapes");
  }
  if (j.contains("range")) m.range_ = ScoreRange{j["range"].at("min").get<int>(), j["range"].at("max").get<int>()};
  m.config_ = TrainConfig::from_json(j.at("config"));
  m.check_finite();
  return m;
}

namespace {

void check_design(std::span<const SparseVector> X, std::size_t n_targets) {
  if (X.empty()) throw Error("training set is empty");
  if (X.size() != n_targets) throw Error("training set: feature/target count mismatch");
  const std::size_t dim = X.front().dimension;
  for (const auto& x : X) {
    if (x.dimension != dim) throw Error("dimension mismatch in training set");
    x.validate();
  }
}

// w = scale * v keeps the per-step L2 shrink O(1).
struct ScaledRow {
  std::vector<double> v;
  double scale = 1.0;
  double bias = 0.0;

  explicit ScaledRow(std::size_t dim) : v(dim, 0.0) {}

  double dot(const SparseVector& x) const { return scale * kernels::sparse_dot(x.indices, x.values, v); }
  void shrink(double factor) {
    scale *= factor;
    if (scale < 1e-9) {
      for (auto& w : v) w *= scale;
      scale = 1.0;
    }
  }
  void add(const SparseVector& x, double step) {
    const double s = step / scale;
    for (std::size_t i = 0; i < x.nnz(); ++i) v[x.indices[i]] += s * x.values[i];
  }
  std::vector<double> materialize() const {
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = scale * v[i];
    return w;
  }
};

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "sgd/epoch/" + std::to_string(epoch)));
  rng.shuffle(order);
  return order;
}

}  // namespace

LinearModel train_classifier(std::span<const SparseVector> X, std::span<const CategoryId> y,
                             const LabelSchema& schema, const TrainConfig& config) {
  check_design(X, y.size());
  if (config.loss != Loss::hinge) throw Error("classifier supports hinge loss only");
  const std::size_t dim = X.front().dimension;
  const std::size_t n_classes = schema.size();

  std::vector<std::size_t> label(y.size());
  std::vector<char> present(n_classes, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto idx = schema.index_of(y[i]);
    if (!idx) throw Error("training label " + y[i] + " is not in the schema");
    label[i] = *idx;
    present[*idx] = 1;
  }

  // Inverse-scaling rate eta_t = 1 / (lambda (t0 + t)), with t0 from the
  // typical-weight heuristic so the first step has size eta0.
  const double lambda = config.lambda;
  const double eta0 = config.eta0 > 0.0 ? config.eta0 : std::sqrt(1.0 / std::sqrt(lambda));
  const double t0 = 1.0 / (eta0 * lambda);

  std::vector<ScaledRow> rows(n_classes, ScaledRow(dim));
  double t = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i : epoch_order(X.size(), config.seed, epoch)) {
      const double eta = 1.0 / (lambda * (t0 + t));
      const auto& x = X[i];
      for (std::size_t c = 0; c < n_classes; ++c) {
        if (!present[c]) continue;
        auto& row = rows[c];
        const double target = label[i] == c ? 1.0 : -1.0;
        const double margin = target * (row.dot(x) + row.bias);
        row.shrink(1.0 - eta * lambda);
        if (margin < 1.0) {
          row.add(x, eta * target);
          row.bias += eta * target;
        }
      }
      t += 1.0;
    }
  }

  LinearModel m;
  m.kind_ = LinearModel::Kind::classification;
  m.dimension_ = dim;
  m.classes_.assign(schema.categories().begin(), schema.categories().end());
  m.active_ = present;
  m.config_ = config;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const auto w = rows[c].materialize();
    m.weights_.insert(m.weights_.end(), w.begin(), w.end());
    m.bias_.push_back(rows[c].bias);
  }
  m.check_finite();
  return m;
}

LinearModel train_regressor(std::span<const SparseVector> X, std::span<const int> y, const ScoreRange& range,
                            const TrainConfig& config) {
  check_design(X, y.size());
  range.validate();
  if (config.loss == Loss::hinge) throw Error("regressor needs epsilon_insensitive or squared loss");
  const std::size_t dim = X.front().dimension;

  // Targets are centred so a zero-variance target needs no updates at all.
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double mean_sq_norm = 0.0;
  for (const auto& x : X) mean_sq_norm += x.squared_norm();
  mean_sq_norm /= static_cast<double>(X.size());
  const double norm = std::max(1.0, mean_sq_norm);
  const double span = static_cast<double>(range.max - range.min);
  const double eta0 = config.eta0 > 0.0 ? config.eta0 : (config.loss == Loss::squared ? 0.1 : 0.02 * span);

  ScaledRow row(dim);
  std::vector<double> avg_w(dim, 0.0);
  double avg_b = 0.0;
  int averaged = 0;
  const int tail_start = config.epochs / 2;
  double t = 1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i : epoch_order(X.size(), config.seed, epoch)) {
      const double eta = eta0 / std::pow(t, config.power_t) / norm;
      const auto& x = X[i];
      const double residual = row.dot(x) + row.bias - (y[i] - mean);
      double grad = 0.0;
      if (config.loss == Loss::squared) {
        grad = residual;
      } else if (std::abs(residual) > config.epsilon) {
        grad = residual > 0 ? 1.0 : -1.0;
      }
      row.shrink(1.0 - std::min(0.5, eta * config.lambda));
      if (grad != 0.0) {
        row.add(x, -eta * grad);
        row.bias -= eta * grad;
      }
      t += 1.0;
    }
    if (epoch >= tail_start) {
      const auto w = row.materialize();
      kernels::axpy(1.0, w, avg_w);
      avg_b += row.bias;
      ++averaged;
    }
  }
  for (auto& w : avg_w) w /= averaged;

  LinearModel m;
  m.kind_ = LinearModel::Kind::regression;
  m.dimension_ = dim;
  m.classes_ = {"score"};
  m.active_ = {1};
  m.range_ = range;
  m.config_ = config;
  m.weights_ = std::move(avg_w);
  m.bias_ = {mean + avg_b / averaged};
  m.check_finite();
  return m;
}

double hinge_objective(const LinearModel& model, std::span<const SparseVector> X,
                       std::span<const CategoryId> y) {
  if (model.kind() != LinearModel::Kind::classification) throw Error("hinge_objective needs a classifier");
  check_design(X, y.size());
  double total = 0.0;
  std::size_t active_rows = 0;
  for (std::size_t r = 0; r < model.rows(); ++r) {
    if (!model.active(r)) continue;
    const auto w = model.weights(r);
    double reg = 0.0;
    for (double v : w) reg += v * v;
    double loss = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
      const double target = y[i] == model.classes()[r] ? 1.0 : -1.0;
      const double score = kernels::sparse_dot(X[i].indices, X[i].values, w) + model.bias(r);
      loss += std::max(0.0, 1.0 - target * score);
    }
    total += 0.5 * model.config().lambda * reg + loss / static_cast<double>(X.size());
    ++active_rows;
  }
  return active_rows ? total / static_cast<double>(active_rows) : 0.0;
}

void BowModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "lexmine-bow";
  j["version"] = kFormatVersion;
  j["vocabulary"] = vocabulary.to_json();
  j["model"] = model.to_json();
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << '\n';
}

BowModel BowModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", std::string()) != "lexmine-bow") throw Error(path.string() + ": not a bow model");
  if (j.value("version", 0) != kFormatVersion) throw Error(path.string() + ": unsupported model version");
  BowModel m{Vocabulary::from_json(j.at("vocabulary")), LinearModel::from_json(j.at("model"))};
  if (m.model.dimension() != m.vocabulary.size()) throw Error(path.string() + ": vocabulary/model mismatch");
  return m;
}

}  // namespace lexmine::baseline
