#include "namerec/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "namerec/chunker.hpp"
#include "namerec/utf8.hpp"

namespace namerec {

namespace fs = std::filesystem;
using nlohmann::json;

CorpusError::CorpusError(std::string doc_id, int record, const std::string& what)
    : std::runtime_error("document '" + doc_id + "'" + (record >= 0 ? ", record " + std::to_string(record) : "") +
                         ": " + what),
      doc_id_(std::move(doc_id)),
      record_(record) {}

std::vector<Token> name_tokens(std::string_view name_text) {
  std::vector<Token> out;
  for (auto& t : basic_tokenize(name_text))
    if (!is_punctuation_token(t.text)) out.push_back(std::move(t));
  return out;
}

std::string sidecar_json(const AnnotatedDocument& doc) {
  json names = json::array();
  for (const auto& r : doc.records) {
    json j;
    j["text"] = r.text;
    j["positions"] = r.positions;
    j["labels"] = r.labels;
    if (r.comment) j["comment"] = *r.comment;
    names.push_back(std::move(j));
  }
  json root;
  root["names"] = std::move(names);
  return root.dump(2) + "\n";
}

std::vector<AnnotationRecord> parse_sidecar(std::string_view text, const std::string& doc_id) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CorpusError(doc_id, -1, std::string("sidecar is not valid JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("names") || !root["names"].is_array())
    throw CorpusError(doc_id, -1, "sidecar needs a \"names\" array");
  std::vector<AnnotationRecord> out;
  int index = 0;
  for (const auto& j : root["names"]) {
    auto fail = [&](const std::string& what) { throw CorpusError(doc_id, index, what); };
    if (!j.is_object()) fail("record is not an object");
    if (!j.contains("text") || !j["text"].is_string()) fail("missing string field \"text\"");
    if (!j.contains("positions") || !j["positions"].is_array()) fail("missing array field \"positions\"");
    if (!j.contains("labels") || !j["labels"].is_array()) fail("missing array field \"labels\"");
    AnnotationRecord r;
    r.text = j["text"].get<std::string>();
    for (const auto& p : j["positions"]) {
      if (!p.is_number_unsigned()) fail("positions must be non-negative integers");
      r.positions.push_back(p.get<std::size_t>());
    }
    for (const auto& l : j["labels"]) {
      if (!l.is_string()) fail("labels must be strings");
      r.labels.push_back(l.get<std::string>());
    }
    if (j.contains("comment")) {
      if (!j["comment"].is_string()) fail("comment must be a string");
      r.comment = j["comment"].get<std::string>();
    }
    out.push_back(std::move(r));
    ++index;
  }
  return out;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& p, const std::string& content) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

struct Occurrence {
  std::size_t begin;  // bytes
  std::size_t end;
  int record;
};

std::vector<Occurrence> occurrences(const AnnotatedDocument& doc, const utf8::OffsetMap& map) {
  std::vector<Occurrence> occ;
  for (std::size_t ri = 0; ri < doc.records.size(); ++ri) {
    const auto& r = doc.records[ri];
    std::size_t len = utf8::length(r.text);
    for (std::size_t p : r.positions) {
      if (p + len > map.char_count())
        throw CorpusError(doc.doc_id, static_cast<int>(ri), "position " + std::to_string(p) + " runs past the text");
      std::size_t b = map.to_byte(p), e = map.to_byte(p + len);
      if (std::string_view(doc.text).substr(b, e - b) != r.text)
        throw CorpusError(doc.doc_id, static_cast<int>(ri),
                          "text at position " + std::to_string(p) + " differs from \"" + r.text + "\"");
      occ.push_back({b, e, static_cast<int>(ri)});
    }
  }
  std::sort(occ.begin(), occ.end(), [](const Occurrence& a, const Occurrence& b) { return a.begin < b.begin; });
  return occ;
}

}  // namespace

void check_document(const AnnotatedDocument& doc) {
  utf8::OffsetMap map(doc.text);
  for (std::size_t ri = 0; ri < doc.records.size(); ++ri) {
    const auto& r = doc.records[ri];
    if (r.text.empty()) throw CorpusError(doc.doc_id, static_cast<int>(ri), "empty name text");
    if (name_tokens(r.text).size() != r.labels.size())
      throw CorpusError(doc.doc_id, static_cast<int>(ri), "label count differs from name-token count");
    for (const auto& l : r.labels) {
      auto parsed = TokenLabel::parse(l);
      if (!parsed || parsed->is_outside())
        throw CorpusError(doc.doc_id, static_cast<int>(ri), "incomplete fused label \"" + l + "\"");
    }
  }
  auto occ = occurrences(doc, map);
  for (std::size_t i = 1; i < occ.size(); ++i)
    if (occ[i].begin < occ[i - 1].end) throw CorpusError(doc.doc_id, occ[i].record, "annotation overlaps another");
}

AnnotatedDocument read_document(const fs::path& doc_dir, bool check) {
  AnnotatedDocument doc;
  doc.doc_id = doc_dir.filename().string();
  doc.text = read_file(doc_dir / kTextFile);
  fs::path sidecar = doc_dir / kSidecarFile;
  if (fs::exists(sidecar)) doc.records = parse_sidecar(read_file(sidecar), doc.doc_id);
  if (check) check_document(doc);
  return doc;
}

std::vector<AnnotatedDocument> read_corpus(const fs::path& dir, bool check) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a corpus directory: " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / kTextFile)) subdirs.push_back(entry.path());
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<AnnotatedDocument> docs;
  for (const auto& d : subdirs) docs.push_back(read_document(d, check));
  return docs;
}

void write_document(const AnnotatedDocument& doc, const fs::path& corpus_dir) {
  if (doc.doc_id.empty() || doc.doc_id.find('/') != std::string::npos || doc.doc_id == "." || doc.doc_id == "..")
    throw std::invalid_argument("invalid document id: '" + doc.doc_id + "'");
  fs::path d = corpus_dir / doc.doc_id;
  fs::create_directories(d);
  write_atomic(d / kTextFile, doc.text);
  write_atomic(d / kSidecarFile, sidecar_json(doc));
}

void write_corpus(const std::vector<AnnotatedDocument>& docs, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& d : docs) write_document(d, dir);
}

std::vector<std::string> LabeledDocument::words() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

LabeledDocument materialize(const AnnotatedDocument& doc) {
  LabeledDocument out;
  out.doc_id = doc.doc_id;
  out.text = doc.text;
  out.tokens = basic_tokenize(doc.text);
  out.labels.assign(out.tokens.size(), TokenLabel::outside());
  out.sentence_ends = split_sentences(out.tokens, doc.text);
  utf8::OffsetMap map(doc.text);
  auto occ = occurrences(doc, map);
  std::size_t t = 0;
  for (const auto& o : occ) {
    const auto& r = doc.records[static_cast<std::size_t>(o.record)];
    while (t < out.tokens.size() && out.tokens[t].end <= o.begin) ++t;
    std::size_t label = 0;
    for (std::size_t u = t; u < out.tokens.size() && out.tokens[u].begin < o.end; ++u) {
      const Token& tok = out.tokens[u];
      if (tok.begin < o.begin || tok.end > o.end)
        throw CorpusError(doc.doc_id, o.record, "annotation does not cover whole tokens near \"" + tok.text + "\"");
      if (is_punctuation_token(tok.text)) continue;
      if (label >= r.labels.size()) throw CorpusError(doc.doc_id, o.record, "more name tokens than labels");
      auto parsed = TokenLabel::parse(r.labels[label++]);
      if (!parsed || parsed->is_outside()) throw CorpusError(doc.doc_id, o.record, "incomplete fused label");
      out.labels[u] = *parsed;
    }
    if (label != r.labels.size()) throw CorpusError(doc.doc_id, o.record, "fewer name tokens than labels");
  }
  return out;
}

AnnotatedDocument to_annotated(const std::string& doc_id, const std::string& text, std::span<const Token> tokens,
                               std::span<const TokenLabel> labels) {
  AnnotatedDocument doc;
  doc.doc_id = doc_id;
  doc.text = text;
  utf8::OffsetMap map(text);
  std::map<std::pair<std::string, std::vector<std::string>>, std::size_t> index;
  for (const auto& s : decode_spans(labels)) {
    const Token& first = tokens[static_cast<std::size_t>(s.start_token)];
    const Token& last = tokens[static_cast<std::size_t>(s.end_token)];
    std::string name = text.substr(first.begin, last.end - first.begin);
    std::vector<std::string> ls;
    for (int t = s.start_token; t <= s.end_token; ++t)
      if (!is_punctuation_token(tokens[static_cast<std::size_t>(t)].text)) ls.push_back(labels[static_cast<std::size_t>(t)].str());
    if (ls.empty()) continue;
    auto key = std::make_pair(name, ls);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, doc.records.size()).first;
      doc.records.push_back(AnnotationRecord{name, {}, ls, std::nullopt});
    }
    doc.records[it->second].positions.push_back(map.to_char(first.begin));
  }
  return doc;
}

std::vector<ConllDocument> read_conll(std::istream& in) {
  std::vector<ConllDocument> docs;
  ConllSentence sentence;
  bool doc_open = false;
  auto flush_sentence = [&] {
    if (sentence.empty()) return;
    if (!doc_open) {
      docs.emplace_back();
      doc_open = true;
    }
    docs.back().sentences.push_back(std::move(sentence));
    sentence.clear();
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::vector<std::string> cols;
    for (std::string c; ss >> c;) cols.push_back(c);
    if (cols.empty()) {
      flush_sentence();
      continue;
    }
    if (cols[0] == "-DOCSTART-") {
      flush_sentence();
      docs.emplace_back();
      doc_open = true;
      continue;
    }
    if (cols.size() != 4)
      throw std::runtime_error("conll line " + std::to_string(lineno) + ": expected 4 columns, found " +
                               std::to_string(cols.size()));
    sentence.push_back({cols[0], cols[1], cols[2], cols[3]});
  }
  flush_sentence();
  std::erase_if(docs, [](const ConllDocument& d) { return d.sentences.empty(); });
  return docs;
}

std::vector<ConllDocument> read_conll(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_conll(in);
}

std::vector<EntitySpan> entity_spans(std::span<const std::string> tags) {
  std::vector<EntitySpan> spans;
  bool open = false;
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    const std::string& tag = tags[static_cast<std::size_t>(i)];
    if (tag == "O" || tag.size() < 3 || tag[1] != '-') {
      open = false;
      continue;
    }
    char prefix = tag[0];
    std::string type = tag.substr(2);
    // IOB1 uses I- to start a span and B- only between two abutting spans of one type.
    bool continues = open && spans.back().type == type && prefix == 'I';
    if (continues) {
      spans.back().end = i;
    } else {
      spans.push_back({type, i, i});
      open = true;
    }
  }
  return spans;
}

std::optional<LabelConfig> parse_label_config(std::string_view s) {
  if (s == "PER") return LabelConfig::Per;
  if (s == "FML") return LabelConfig::Fml;
  if (s == "CONLL") return LabelConfig::Conll;
  if (s == "FML_PLUS_CONLL" || s == "FML+CONLL") return LabelConfig::FmlPlusConll;
  return std::nullopt;
}

std::vector<TokenLabel> heuristic_person_labels(std::span<const std::string> words) {
  std::vector<TokenLabel> out;
  const std::size_t n = words.size();
  for (std::size_t i = 0; i < n; ++i) {
    Bie b = i == 0 ? Bie::Begin : (i + 1 == n ? Bie::End : Bie::Inside);
    Fml f = n == 1 || i + 1 == n ? Fml::Last : (i == 0 ? Fml::First : Fml::Middle);
    const std::string& w = words[i];
    auto first = utf8::decode(w, 0);
    bool initial = !w.empty() && utf8::is_upper(first.cp) &&
                   (first.len == w.size() || (first.len + 1 == w.size() && w.back() == '.'));
    out.push_back(TokenLabel::name(b, f, initial ? Fi::Initial : Fi::Full));
  }
  return out;
}

std::vector<LabeledSequence> map_labels(const std::vector<ConllDocument>& docs, LabelConfig config) {
  std::vector<LabeledSequence> out;
  for (const auto& doc : docs) {
    for (const auto& sentence : doc.sentences) {
      LabeledSequence seq;
      std::vector<std::string> tags;
      for (const auto& t : sentence) {
        seq.tokens.push_back(t.word);
        tags.push_back(t.tag);
      }
      seq.tags.assign(sentence.size(), std::string(kOutside));
      for (const auto& span : entity_spans(tags)) {
        bool person = span.type == "PER";
        if (!person && (config == LabelConfig::Per || config == LabelConfig::Fml)) continue;
        if (person && (config == LabelConfig::Fml || config == LabelConfig::FmlPlusConll)) {
          std::vector<std::string> words(seq.tokens.begin() + span.start, seq.tokens.begin() + span.end + 1);
          auto labels = heuristic_person_labels(words);
          for (int i = span.start; i <= span.end; ++i)
            seq.tags[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i - span.start)].str();
          continue;
        }
        for (int i = span.start; i <= span.end; ++i)
          seq.tags[static_cast<std::size_t>(i)] = (i == span.start ? "B-" : "I-") + span.type;
      }
      out.push_back(std::move(seq));
    }
  }
  return out;
}

}  // namespace namerec
