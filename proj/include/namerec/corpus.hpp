#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "namerec/labels.hpp"
#include "namerec/tokenizer.hpp"

namespace namerec {

inline constexpr std::string_view kTextFile = "page.txt";
inline constexpr std::string_view kSidecarFile = "names.json";

struct AnnotationRecord {
  std::string text;
  std::vector<std::size_t> positions;  // code point offsets into the document text
  std::vector<std::string> labels;     // one fused label per name token
  std::optional<std::string> comment;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct AnnotatedDocument {
  std::string doc_id;
  std::string text;
  std::vector<AnnotationRecord> records;

  friend bool operator==(const AnnotatedDocument&, const AnnotatedDocument&) = default;
};

/// Structured corpus failure; `record` is -1 when the problem is not tied to one record.
class CorpusError : public std::runtime_error {
 public:
  CorpusError(std::string doc_id, int record, const std::string& what);
  const std::string& doc_id() const { return doc_id_; }
  int record() const { return record_; }

 private:
  std::string doc_id_;
  int record_;
};

/// Name tokens of a name string: basic_tokenize without standalone punctuation.
std::vector<Token> name_tokens(std::string_view name_text);

/// Canonical sidecar JSON (sorted keys, two-space indent, trailing newline).
std::string sidecar_json(const AnnotatedDocument& doc);
/// Parses sidecar JSON into records; throws CorpusError on schema violations.
std::vector<AnnotationRecord> parse_sidecar(std::string_view json, const std::string& doc_id);

/// Throws CorpusError naming the first record whose positions or labels do not fit the text.
void check_document(const AnnotatedDocument& doc);

/// With `check`, the document must pass check_document. Sidecar schema errors always throw.
AnnotatedDocument read_document(const std::filesystem::path& doc_dir, bool check = true);
/// Every subfolder holding page.txt, sorted by name.
std::vector<AnnotatedDocument> read_corpus(const std::filesystem::path& dir, bool check = true);
/// Atomic per file (temporary file then rename).
void write_document(const AnnotatedDocument& doc, const std::filesystem::path& corpus_dir);
void write_corpus(const std::vector<AnnotatedDocument>& docs, const std::filesystem::path& dir);

/// A document with per-token gold labels.
struct LabeledDocument {
  std::string doc_id;
  std::string text;
  std::vector<Token> tokens;
  std::vector<TokenLabel> labels;
  std::vector<std::size_t> sentence_ends;  // exclusive token indices

  std::vector<std::string> words() const;
};

/// Aligns records to basic_tokenize tokens. Throws CorpusError when a record does not cover whole
/// tokens or its label count differs from its name-token count.
LabeledDocument materialize(const AnnotatedDocument& doc);

/// Inverse of materialize for decoded spans: one record per distinct name string.
AnnotatedDocument to_annotated(const std::string& doc_id, const std::string& text, std::span<const Token> tokens,
                               std::span<const TokenLabel> labels);

// CoNLL-2003 style input.

struct ConllToken {
  std::string word, pos, chunk, tag;
};
using ConllSentence = std::vector<ConllToken>;
struct ConllDocument {
  std::vector<ConllSentence> sentences;
};

/// Four whitespace-separated columns per line, blank lines between sentences, -DOCSTART- lines
/// between documents. Throws std::runtime_error naming the line on malformed input.
std::vector<ConllDocument> read_conll(std::istream& in);
std::vector<ConllDocument> read_conll(const std::filesystem::path& path);

struct EntitySpan {
  std::string type;
  int start = 0;
  int end = 0;  // inclusive
};
/// Entity spans from IOB1 or IOB2 tags.
std::vector<EntitySpan> entity_spans(std::span<const std::string> tags);

enum class LabelConfig { Per, Fml, Conll, FmlPlusConll };
std::optional<LabelConfig> parse_label_config(std::string_view s);

struct LabeledSequence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
};

/// Heuristic fused labels for a person span: first token First, last token Last, interior Middle,
/// single token Last; a single capital letter with an optional dot is an Initial.
std::vector<TokenLabel> heuristic_person_labels(std::span<const std::string> words);

/// PER: B-PER/I-PER only. CONLL: IOB2 over all entity types. FML: fused labels for persons, O
/// elsewhere. FML_PLUS_CONLL: fused labels for persons, IOB2 for the other types.
std::vector<LabeledSequence> map_labels(const std::vector<ConllDocument>& docs, LabelConfig config);

}  // namespace namerec
