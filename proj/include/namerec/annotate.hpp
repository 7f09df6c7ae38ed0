#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "namerec/corpus.hpp"

namespace namerec {

/// Code point range [begin, end) of one name occurrence.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend auto operator<=>(const CharSpan&, const CharSpan&) = default;
};

// Group labelling.
//
// A template is whitespace-separated tokens, each one of
//   Full      a capitalised word of two or more letters ("Doe", "Joon-gi")
//   Initial   a single capital letter ("J")
//   Initial.  a single capital letter with a dot ("J.")
//   X         any single capital letter: shorthand for Full
//   X.        shorthand for Initial.
//   ,  .  ... punctuation, matched literally and never labelled
// Any other token is matched literally and labelled. So "X, Y." covers "Doe, J." and "Full Initial"
// covers both "Doe J" and "Joon-gi L".

struct GroupLabelResult {
  AnnotatedDocument doc;
  std::vector<CharSpan> applied;
  std::vector<CharSpan> skipped;  // matches overlapping an existing annotation
};

/// Labels every unannotated occurrence matching `name_template`. Existing records are left as they
/// are; new records are appended, one per distinct matched text. Throws std::invalid_argument when
/// the label count differs from the number of labelled template tokens or a label is not a
/// complete fused label.
GroupLabelResult group_label(const AnnotatedDocument& doc, std::string_view name_template,
                             const std::vector<std::string>& labels);

/// Number of template tokens that receive a label.
std::size_t template_arity(std::string_view name_template);

/// Non-overlapping occurrences of `name_text`, left to right, whose ends fall on token boundaries.
/// Case-insensitive matching folds ASCII letters only.
std::vector<std::size_t> index_positions(const AnnotatedDocument& doc, std::string_view name_text,
                                         bool case_insensitive = false);

inline constexpr std::string_view kMaskToken = "ANNOTATED";

/// Replaces each annotated occurrence with kMaskToken. Throws CorpusError on an invalid document.
std::string mask(const AnnotatedDocument& doc);

enum class ViolationKind { PositionMismatch, IncompleteForm, Overlap };
std::string_view to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  int record = -1;
  std::size_t position = 0;  // offending position, 0 when the violation is about labels
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Collects every violation rather than stopping at the first.
ValidationReport validate(const AnnotatedDocument& doc);

enum class DisagreementKind { SpanOnlyInA, SpanOnlyInB, FormMismatch };
std::string_view to_string(DisagreementKind k);

struct Disagreement {
  std::string doc_id;
  DisagreementKind kind;
  CharSpan span;
  std::string text;
  std::vector<std::string> labels_a;  // empty for SpanOnlyInB
  std::vector<std::string> labels_b;  // empty for SpanOnlyInA
  std::string details;
};

/// Occurrence-level comparison ordered by (span, kind). Throws std::invalid_argument when the two
/// documents have different texts.
std::vector<Disagreement> compare(const AnnotatedDocument& a, const AnnotatedDocument& b);

/// Cohen's kappa over per-token fused labels of two annotations of one text.
double token_agreement(const AnnotatedDocument& a, const AnnotatedDocument& b);

}  // namespace namerec
