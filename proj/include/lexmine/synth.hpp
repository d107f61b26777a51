#pragma once

#include <cstddef>
#include <cstdint>

#include "lexmine/corpus.hpp"

// Seeded synthetic corpora for offline runs and tests. Texts are built from
// per-category pseudo-word lexicons plus shared filler, so a bag-of-words
// model and a hashing embedder both find real signal.
namespace lexmine::synth {

/// Six argument-component categories (MC, C, D, S, LC, P) with English and
/// German surface forms; P and LC project to S at tier 1.
LabelSchema six_class_schema();

struct ClassificationSpec {
  std::size_t documents = 30;
  std::size_t items_per_document = 20;
  std::size_t signature_words = 5;  // per item, drawn from the item's category lexicon
  std::size_t filler_words = 4;
  double confusion = 0.0;  // probability a signature word comes from another category
  std::uint64_t seed = 1;
};

Corpus classification_corpus(const LabelSchema& schema, const ClassificationSpec& spec);

struct ScoringSpec {
  std::size_t documents = 120;
  ScoreRange range{0, 18};
  std::size_t length = 40;  // words per essay
  double noise = 0.1;       // fraction of quality words replaced at random
  std::string task_id = "1";
  std::uint64_t seed = 1;
};

/// One essay per document; the share of "quality" words grows with the score.
Corpus scoring_corpus(const ScoringSpec& spec);

}  // namespace lexmine::synth
