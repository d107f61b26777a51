#include <doctest.h>

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "lexmine/baseline.hpp"
#include "lexmine/error.hpp"
#include "support.hpp"

using namespace lexmine;
using namespace lexmine::baseline;

namespace {

LabelSchema ab_schema() {
  LabelSchema::Spec s;
  s.name = "ab";
  s.categories = {"A", "B"};
  s.display = {{"A", {"Alpha"}}, {"B", {"Beta"}}};
  return LabelSchema(s);
}

std::vector<SparseVector> featurize(const std::vector<std::string>& texts, const Vocabulary& v) {
  std::vector<SparseVector> out;
  for (auto& t : texts) out.push_back(transform(t, v));
  return out;
}

TrainConfig regression_config() {
  TrainConfig c;
  c.loss = Loss::epsilon_insensitive;
  c.seed = 3;
  return c;
}

// Plain perceptron with bias; returns true once an epoch makes no mistake.
bool perceptron_separable(const std::vector<SparseVector>& X, const std::vector<int>& y, std::size_t dim) {
  std::vector<double> w(dim, 0.0);
  double b = 0;
  for (int epoch = 0; epoch < 1000; ++epoch) {
    bool clean = true;
    for (std::size_t i = 0; i < X.size(); ++i) {
      double s = b;
      for (std::size_t k = 0; k < X[i].nnz(); ++k) s += w[X[i].indices[k]] * X[i].values[k];
      if (y[i] * s <= 0) {
        clean = false;
        for (std::size_t k = 0; k < X[i].nnz(); ++k) w[X[i].indices[k]] += y[i] * X[i].values[k];
        b += y[i];
      }
    }
    if (clean) return true;
  }
  return false;
}

double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("vocabulary enumerates terms and filters by document frequency") {
  std::vector<std::string> texts{"a b", "b c"};
  auto v = Vocabulary::fit(texts);
  CHECK(v.size() == 3);
  CHECK(v.terms() == std::vector<std::string>{"b", "a", "c"});  // df desc, then term
  VectorizerConfig c;
  c.min_df = 2;
  auto v2 = Vocabulary::fit(texts, c);
  CHECK(v2.terms() == std::vector<std::string>{"b"});
  CHECK(Vocabulary::fit(texts).to_json() == v.to_json());
  std::vector<std::string> empty{"", "  "};
  CHECK_THROWS(Vocabulary::fit(empty));
}

TEST_CASE("transform counts terms and drops unknown ones") {
  std::vector<std::string> texts{"a b", "a"};
  auto v = Vocabulary::fit(texts);
  REQUIRE(*v.index_of("a") == 0);
  REQUIRE(*v.index_of("b") == 1);
  auto x = transform("b b a", v);
  CHECK(x.indices == std::vector<std::uint32_t>{0, 1});
  CHECK(x.values == std::vector<double>{1, 2});
  CHECK(transform("z z", v).nnz() == 0);
  CHECK(transform("", v).nnz() == 0);
  CHECK(transform("B A", v).values == std::vector<double>{1, 1});
}

TEST_CASE("tfidf and binary weighting") {
  std::vector<std::string> texts{"a a b", "a"};
  VectorizerConfig c;
  c.weighting = Weighting::binary;
  auto v = Vocabulary::fit(texts, c);
  CHECK(transform("a a b", v).values == std::vector<double>{1, 1});
  c.weighting = Weighting::tfidf;
  c.l2_normalize = true;
  auto t = transform("a a b", Vocabulary::fit(texts, c));
  CHECK(t.squared_norm() == doctest::Approx(1.0));
}

TEST_CASE("separable two-class set reaches full training accuracy") {
  std::vector<std::string> texts;
  std::vector<CategoryId> y;
  std::vector<int> sign;
  const char* left[] = {"apple", "pear", "plum", "fig"};
  const char* right[] = {"stone", "rock", "sand", "clay"};
  for (int i = 0; i < 40; ++i) {
    const bool a = i % 2 == 0;
    const auto& words = a ? left : right;
    texts.push_back(std::string(words[i % 4]) + " " + words[(i / 2) % 4] + " shared");
    y.push_back(a ? "A" : "B");
    sign.push_back(a ? 1 : -1);
  }
  auto v = Vocabulary::fit(texts);
  auto X = featurize(texts, v);
  REQUIRE(perceptron_separable(X, sign, v.size()));

  TrainConfig cfg;
  cfg.seed = 1;
  auto m = train_classifier(X, y, ab_schema(), cfg);
  for (std::size_t i = 0; i < X.size(); ++i) CHECK(m.predict_label(X[i]) == y[i]);

  auto m2 = train_classifier(X, y, ab_schema(), cfg);
  CHECK(m.to_json().dump() == m2.to_json().dump());
  cfg.seed = 2;
  CHECK(train_classifier(X, y, ab_schema(), cfg).predict_label(X[0]) == "A");
}

TEST_CASE("single-class training predicts that class everywhere") {
  std::vector<std::string> texts{"x y", "y z"};
  auto v = Vocabulary::fit(texts);
  auto X = featurize(texts, v);
  std::vector<CategoryId> y{"B", "B"};
  auto m = train_classifier(X, y, ab_schema(), TrainConfig{});
  CHECK_FALSE(m.active(0));
  CHECK(m.predict_label(transform("x", v)) == "B");
  CHECK(m.predict_label(transform("", v)) == "B");
}

TEST_CASE("hand-set models: largest bias, ties, clamping, dimension checks") {
  nlohmann::json j = {{"kind", "classification"},
                      {"dimension", 2},
                      {"classes", {"A", "B"}},
                      {"bias", {0.1, 0.7}},
                      {"active", {1, 1}},
                      {"weights", {{1.0, 0.0}, {0.0, 1.0}}},
                      {"config", TrainConfig{}.to_json()}};
  auto m = LinearModel::from_json(j);
  SparseVector zero{{}, {}, 2};
  CHECK(m.predict_label(zero) == "B");
  SparseVector tie{{0}, {0.6}, 2};  // 0.7 vs 0.7
  CHECK(m.predict_label(tie) == "A");
  SparseVector wrong{{0}, {1.0}, 3};
  CHECK_THROWS(m.predict_label(wrong));

  nlohmann::json r = {{"kind", "regression"},   {"dimension", 1}, {"classes", nlohmann::json::array()},
                      {"bias", {0.0}},          {"active", {1}},  {"weights", {{-100.0}}},
                      {"range", {{"min", 2}, {"max", 9}}}, {"config", regression_config().to_json()}};
  auto reg = LinearModel::from_json(r);
  SparseVector one{{0}, {1.0}, 1};
  CHECK(reg.predict_score(one) == 2.0);
}

TEST_CASE("constant target regression predicts the constant") {
  std::vector<std::string> texts{"a b", "b c d", "e", "a e e"};
  std::vector<int> y{7, 7, 7, 7};
  auto v = Vocabulary::fit(texts);
  auto X = featurize(texts, v);
  auto m = train_regressor(X, y, ScoreRange{0, 10}, regression_config());
  for (auto& x : X) CHECK(m.predict_score(x) == doctest::Approx(7.0).epsilon(0.01));
  CHECK(m.predict_score(transform("unseen", v)) == doctest::Approx(7.0).epsilon(0.01));
}

TEST_CASE("target linear in one feature is recovered") {
  std::vector<std::string> texts;
  std::vector<int> y;
  std::vector<double> c, gold;
  for (int i = 0; i < 30; ++i) {
    const int k = i % 10;
    std::string t = "base";
    for (int w = 0; w < k; ++w) t += " word";
    texts.push_back(t);
    y.push_back(2 * k);
    c.push_back(k);
    gold.push_back(2 * k);
  }
  REQUIRE(oracle_pearson(c, gold) == doctest::Approx(1.0));  // least-squares fit is exact
  auto v = Vocabulary::fit(texts);
  auto X = featurize(texts, v);
  auto m = train_regressor(X, y, ScoreRange{0, 18}, regression_config());
  std::vector<double> pred;
  for (auto& x : X) pred.push_back(m.predict_score(x));
  CHECK(oracle_pearson(pred, gold) >= 0.999);
}

TEST_CASE("bow model persists and reloads") {
  testing::TempDir dir;
  std::vector<std::string> texts{"apple pear", "stone rock"};
  auto v = Vocabulary::fit(texts);
  auto X = featurize(texts, v);
  std::vector<CategoryId> y{"A", "B"};
  BowModel bow{v, train_classifier(X, y, ab_schema(), TrainConfig{})};
  bow.save(dir / "m.json");
  auto back = BowModel::load(dir / "m.json");
  CHECK(back.model.to_json() == bow.model.to_json());
  CHECK(back.vocabulary.terms() == v.terms());
  testing::write_file(dir / "bad.json", "{\"format_version\": 99}");
  CHECK_THROWS(BowModel::load(dir / "bad.json"));
}
