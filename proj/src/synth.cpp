#include "lexmine/synth.hpp"

#include <string>
#include <vector>

#include "lexmine/rng.hpp"

namespace lexmine::synth {
namespace {

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "tu", "re", "sa", "no", "vi", "de", "ru",
                                      "pa", "zo", "fe", "gi", "ha", "ne", "bo", "ti", "la", "wu"};

std::string pseudo_word(Rng& rng) {
  std::string w;
  const std::size_t n = 2 + rng.uniform_index(2);
  for (std::size_t i = 0; i < n; ++i) w += kSyllables[rng.uniform_index(std::size(kSyllables))];
  return w;
}

std::vector<std::string> lexicon(Rng& rng, std::size_t size, const std::string& suffix) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < size; ++i) words.push_back(pseudo_word(rng) + suffix);
  return words;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

}  // namespace

LabelSchema six_class_schema() {
  LabelSchema::Spec spec;
  spec.name = "six-class";
  spec.categories = {"MC", "C", "D", "S", "LC", "P"};
  spec.display = {
      {"MC", {"Major Claim", "Obersatz"}},
      {"C", {"Conclusion", "Ergebnis"}},
      {"D", {"Definition"}},
      {"S", {"Subsumption", "Subsumtion"}},
      {"LC", {"Legal Claim", "Rechtsbehauptung"}},
      {"P", {"Premise", "Prämisse"}},
  };
  spec.tier1_map = {{"MC", "MC"}, {"C", "C"}, {"D", "D"}, {"S", "S"}, {"LC", "S"}, {"P", "S"}};
  return LabelSchema(std::move(spec));
}

Corpus classification_corpus(const LabelSchema& schema, const ClassificationSpec& spec) {
  Rng rng(derive_seed(spec.seed, "synth/classification"));
  std::vector<std::vector<std::string>> lexicons;
  for (std::size_t c = 0; c < schema.size(); ++c) lexicons.push_back(lexicon(rng, 12, "x" + std::to_string(c)));
  const auto filler = lexicon(rng, 60, "");
  std::vector<Document> docs;
  std::size_t serial = 0;
  for (std::size_t d = 0; d < spec.documents; ++d) {
    Document doc{"doc" + std::to_string(1000 + d), "case" + std::to_string(d % 4), {}};
    for (std::size_t p = 0; p < spec.items_per_document; ++p) {
      const std::size_t c = rng.uniform_index(schema.size());
      std::vector<std::string> words;
      for (std::size_t w = 0; w < spec.signature_words; ++w) {
        std::size_t source = c;
        if (spec.confusion > 0.0 && rng.uniform01() < spec.confusion) source = rng.uniform_index(schema.size());
        words.push_back(lexicons[source][rng.uniform_index(lexicons[source].size())]);
      }
      for (std::size_t w = 0; w < spec.filler_words; ++w) words.push_back(filler[rng.uniform_index(filler.size())]);
      rng.shuffle(words);
      words.push_back("ref" + std::to_string(serial++));
      doc.items.push_back(Item{doc.id + ":" + std::to_string(p), doc.id, p, join(words), schema.category(c)});
    }
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs), schema);
}

Corpus scoring_corpus(const ScoringSpec& spec) {
  spec.range.validate();
  Rng rng(derive_seed(spec.seed, "synth/scoring/" + spec.task_id));
  const auto quality = lexicon(rng, 20, "q");
  const auto filler = lexicon(rng, 80, "");
  std::vector<Document> docs;
  const int span = spec.range.max - spec.range.min;
  for (std::size_t d = 0; d < spec.documents; ++d) {
    const int score = spec.range.min + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(span) + 1));
    const double share = 0.6 * (score - spec.range.min) / span;
    std::vector<std::string> words;
    for (std::size_t w = 0; w < spec.length; ++w) {
      bool good = rng.uniform01() < share;
      if (rng.uniform01() < spec.noise) good = !good;
      words.push_back(good ? quality[rng.uniform_index(quality.size())] : filler[rng.uniform_index(filler.size())]);
    }
    words.push_back("essay" + spec.task_id + "n" + std::to_string(d));
    const std::string id = "t" + spec.task_id + "e" + std::to_string(d);
    Document doc{id, spec.task_id, {}};
    doc.items.push_back(Item{id, id, 0, join(words), score});
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs), spec.range);
}

}  // namespace lexmine::synth
