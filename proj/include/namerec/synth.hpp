#pragma once

#include <cstdint>
#include <vector>

#include "namerec/corpus.hpp"

namespace namerec {

// Homepage-like documents built from sections:
//   biography  high-context sentences ("Dr Kalo Bernit is a Professor at Sovani .")
//   members    a header line followed by name list lines
//   partners   a header line followed by organisation list lines
//   papers     publication lines ("Bernit K. , Mora T. and Lusa R. 2019 . ...")
//   filler     sentences without names
// Person and organisation words are drawn from one pseudo-word pool, so a word's role is fixed
// within a document but varies across documents. With full ambiguity, member and partner list
// lines look the same ("Kalo , Sovani , Mora .") and only the section header or an earlier
// high-context mention resolves them.
struct SynthParams {
  std::size_t num_docs = 20;
  std::size_t min_sections = 2;  // length profile: sections per document
  std::size_t max_sections = 6;
  std::size_t min_lines = 2;  // lines per section
  std::size_t max_lines = 5;
  double repetition_rate = 0.5;   // chance a person mention reuses an already mentioned person
  double context_richness = 0.5;  // share of sections that are biographies
  double ambiguity = 0.5;         // share of list lines rendered as bare single words
  std::size_t pool_size = 300;    // pseudo-words shared by all documents
};

/// Deterministic given (seed, params). Every returned document passes check_document.
std::vector<AnnotatedDocument> synth_generate(std::uint64_t seed, const SynthParams& params);

/// Sentence-level variant: `count` standalone sentences mixing high-context and list styles.
std::vector<AnnotatedDocument> synth_sentences(std::uint64_t seed, std::size_t count, std::size_t pool_size = 200);

}  // namespace namerec
