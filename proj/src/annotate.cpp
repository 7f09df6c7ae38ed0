#include "namerec/annotate.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "namerec/metrics.hpp"
#include "namerec/utf8.hpp"

namespace namerec {

namespace {

enum class Slot { Full, Initial, DottedInitial, Punct, Literal };

struct TemplateToken {
  Slot slot;
  std::string text;
};

bool single_capital(std::string_view s) {
  if (s.empty()) return false;
  auto d = utf8::decode(s, 0);
  return d.len == s.size() && utf8::is_upper(d.cp);
}

std::vector<TemplateToken> parse_template(std::string_view tpl) {
  std::vector<TemplateToken> out;
  std::size_t i = 0;
  while (i < tpl.size()) {
    while (i < tpl.size() && (tpl[i] == ' ' || tpl[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < tpl.size() && tpl[j] != ' ' && tpl[j] != '\t') ++j;
    if (j == i) break;
    std::string_view word = tpl.substr(i, j - i);
    i = j;
    if (word == "Full") {
      out.push_back({Slot::Full, {}});
      continue;
    }
    if (word == "Initial") {
      out.push_back({Slot::Initial, {}});
      continue;
    }
    if (word == "Initial.") {
      out.push_back({Slot::DottedInitial, {}});
      continue;
    }
    for (const auto& t : basic_tokenize(word)) {
      if (single_capital(t.text)) {
        out.push_back({Slot::Full, {}});
      } else if (t.text.size() >= 2 && t.text.back() == '.' && single_capital(std::string_view(t.text).substr(0, t.text.size() - 1))) {
        out.push_back({Slot::DottedInitial, {}});
      } else if (is_punctuation_token(t.text)) {
        out.push_back({Slot::Punct, t.text});
      } else {
        out.push_back({Slot::Literal, t.text});
      }
    }
  }
  if (out.empty()) throw std::invalid_argument("empty name template");
  if (out.front().slot == Slot::Punct) throw std::invalid_argument("name template cannot start with punctuation");
  return out;
}

bool matches(const TemplateToken& t, std::string_view word) {
  switch (t.slot) {
    case Slot::Full: {
      if (word.empty() || is_punctuation_token(word)) return false;
      auto d = utf8::decode(word, 0);
      if (!utf8::is_upper(d.cp) || utf8::length(word) < 2) return false;
      for (std::size_t p = 0; p < word.size();) {
        auto c = utf8::decode(word, p);
        if (!utf8::is_letter(c.cp) && c.cp != U'-' && c.cp != U'\'') return false;
        p += c.len;
      }
      return true;
    }
    case Slot::Initial:
      return single_capital(word);
    case Slot::DottedInitial:
      return word.size() >= 2 && word.back() == '.' && single_capital(word.substr(0, word.size() - 1));
    case Slot::Punct:
    case Slot::Literal:
      return word == t.text;
  }
  return false;
}

struct Occ {
  std::size_t begin, end;  // code points
  int record;
};

// Occurrences that fit the text; malformed positions are reported by validate instead.
std::vector<Occ> valid_occurrences(const AnnotatedDocument& doc, const utf8::OffsetMap& map) {
  std::vector<Occ> out;
  for (std::size_t r = 0; r < doc.records.size(); ++r) {
    std::size_t len = utf8::length(doc.records[r].text);
    for (std::size_t p : doc.records[r].positions) {
      if (p + len > map.char_count()) continue;
      std::size_t b = map.to_byte(p), e = map.to_byte(p + len);
      if (std::string_view(doc.text).substr(b, e - b) != doc.records[r].text) continue;
      out.push_back({p, p + len, static_cast<int>(r)});
    }
  }
  std::sort(out.begin(), out.end(), [](const Occ& a, const Occ& b) {
    return a.begin != b.begin ? a.begin < b.begin : a.record < b.record;
  });
  return out;
}

void check_labels(const std::vector<std::string>& labels) {
  for (const auto& l : labels) {
    auto p = TokenLabel::parse(l);
    if (!p || p->is_outside()) throw std::invalid_argument("not a complete fused label: \"" + l + "\"");
  }
}

char fold(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

std::size_t template_arity(std::string_view name_template) {
  std::size_t n = 0;
  for (const auto& t : parse_template(name_template)) n += t.slot != Slot::Punct;
  return n;
}

GroupLabelResult group_label(const AnnotatedDocument& doc, std::string_view name_template,
                             const std::vector<std::string>& labels) {
  auto tpl = parse_template(name_template);
  if (template_arity(name_template) != labels.size())
    throw std::invalid_argument("template has " + std::to_string(template_arity(name_template)) +
                                " labelled tokens but " + std::to_string(labels.size()) + " labels were given");
  check_labels(labels);

  GroupLabelResult res{doc, {}, {}};
  utf8::OffsetMap map(doc.text);
  auto existing = valid_occurrences(doc, map);
  auto tokens = basic_tokenize(doc.text);
  std::map<std::string, std::size_t> added;  // matched text -> new record index
  const std::size_t m = tpl.size();
  for (std::size_t i = 0; i + m <= tokens.size();) {
    bool ok = true;
    for (std::size_t k = 0; k < m && ok; ++k) ok = matches(tpl[k], tokens[i + k].text);
    if (!ok) {
      ++i;
      continue;
    }
    CharSpan span{map.to_char(tokens[i].begin), map.to_char(tokens[i + m - 1].end)};
    bool collides = std::any_of(existing.begin(), existing.end(),
                                [&](const Occ& o) { return o.begin < span.end && span.begin < o.end; });
    if (collides) {
      res.skipped.push_back(span);
    } else {
      std::string text = doc.text.substr(tokens[i].begin, tokens[i + m - 1].end - tokens[i].begin);
      auto it = added.find(text);
      if (it == added.end()) {
        it = added.emplace(text, res.doc.records.size()).first;
        res.doc.records.push_back(AnnotationRecord{text, {}, labels, std::nullopt});
      }
      res.doc.records[it->second].positions.push_back(span.begin);
      res.applied.push_back(span);
    }
    i += m;
  }
  return res;
}

std::vector<std::size_t> index_positions(const AnnotatedDocument& doc, std::string_view name_text,
                                         bool case_insensitive) {
  std::vector<std::size_t> out;
  if (name_text.empty()) return out;
  std::string hay = doc.text, needle(name_text);
  if (case_insensitive) {
    std::transform(hay.begin(), hay.end(), hay.begin(), fold);
    std::transform(needle.begin(), needle.end(), needle.begin(), fold);
  }
  auto tokens = basic_tokenize(doc.text);
  std::vector<bool> starts(doc.text.size() + 1, false), ends(doc.text.size() + 1, false);
  for (const auto& t : tokens) {
    starts[t.begin] = true;
    ends[t.end] = true;
  }
  utf8::OffsetMap map(doc.text);
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;) {
    std::size_t end = pos + needle.size();
    if (starts[pos] && ends[end]) {
      out.push_back(map.to_char(pos));
      pos = hay.find(needle, end);
    } else {
      pos = hay.find(needle, pos + 1);
    }
  }
  return out;
}

std::string mask(const AnnotatedDocument& doc) {
  check_document(doc);
  utf8::OffsetMap map(doc.text);
  auto occ = valid_occurrences(doc, map);
  std::string out;
  std::size_t cursor = 0;
  for (const auto& o : occ) {
    std::size_t b = map.to_byte(o.begin);
    out.append(doc.text, cursor, b - cursor);
    out += kMaskToken;
    cursor = map.to_byte(o.end);
  }
  out.append(doc.text, cursor, std::string::npos);
  return out;
}

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::PositionMismatch: return "PositionMismatch";
    case ViolationKind::IncompleteForm: return "IncompleteForm";
    case ViolationKind::Overlap: return "Overlap";
  }
  return "?";
}

ValidationReport validate(const AnnotatedDocument& doc) {
  ValidationReport rep;
  utf8::OffsetMap map(doc.text);
  for (std::size_t ri = 0; ri < doc.records.size(); ++ri) {
    const auto& r = doc.records[ri];
    const int rec = static_cast<int>(ri);
    std::size_t name_count = name_tokens(r.text).size();
    if (name_count != r.labels.size())
      rep.violations.push_back({ViolationKind::IncompleteForm, rec, 0,
                                "\"" + r.text + "\" has " + std::to_string(name_count) + " name tokens but " +
                                    std::to_string(r.labels.size()) + " labels"});
    for (const auto& l : r.labels) {
      auto p = TokenLabel::parse(l);
      if (!p || p->is_outside())
        rep.violations.push_back(
            {ViolationKind::IncompleteForm, rec, 0, "\"" + r.text + "\" has incomplete label \"" + l + "\""});
    }
    std::size_t len = utf8::length(r.text);
    for (std::size_t p : r.positions) {
      if (p + len > map.char_count()) {
        rep.violations.push_back(
            {ViolationKind::PositionMismatch, rec, p, "position " + std::to_string(p) + " runs past the text"});
        continue;
      }
      std::size_t b = map.to_byte(p), e = map.to_byte(p + len);
      if (std::string_view(doc.text).substr(b, e - b) != r.text)
        rep.violations.push_back({ViolationKind::PositionMismatch, rec, p,
                                  "text at " + std::to_string(p) + " is \"" + doc.text.substr(b, e - b) +
                                      "\", not \"" + r.text + "\""});
    }
  }
  auto occ = valid_occurrences(doc, map);
  for (std::size_t i = 1; i < occ.size(); ++i)
    if (occ[i].begin < occ[i - 1].end)
      rep.violations.push_back({ViolationKind::Overlap, occ[i].record, occ[i].begin,
                                "occurrence at " + std::to_string(occ[i].begin) + " overlaps record " +
                                    std::to_string(occ[i - 1].record)});
  return rep;
}

std::string_view to_string(DisagreementKind k) {
  switch (k) {
    case DisagreementKind::SpanOnlyInA: return "SpanOnlyInA";
    case DisagreementKind::SpanOnlyInB: return "SpanOnlyInB";
    case DisagreementKind::FormMismatch: return "FormMismatch";
  }
  return "?";
}

std::vector<Disagreement> compare(const AnnotatedDocument& a, const AnnotatedDocument& b) {
  if (a.text != b.text) throw std::invalid_argument("compare needs two annotations of the same text");
  utf8::OffsetMap map(a.text);
  auto spans = [&](const AnnotatedDocument& d) {
    std::map<CharSpan, std::vector<std::string>> out;
    for (const auto& o : valid_occurrences(d, map)) out.emplace(CharSpan{o.begin, o.end}, d.records[o.record].labels);
    return out;
  };
  auto sa = spans(a), sb = spans(b);
  auto text_of = [&](CharSpan s) {
    return a.text.substr(map.to_byte(s.begin), map.to_byte(s.end) - map.to_byte(s.begin));
  };
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
    return s;
  };
  std::vector<Disagreement> out;
  for (const auto& [span, la] : sa) {
    auto it = sb.find(span);
    if (it == sb.end()) {
      out.push_back({a.doc_id, DisagreementKind::SpanOnlyInA, span, text_of(span), la, {}, "annotated only in A"});
    } else if (it->second != la) {
      out.push_back({a.doc_id, DisagreementKind::FormMismatch, span, text_of(span), la, it->second,
                     join(la) + " vs " + join(it->second)});
    }
  }
  for (const auto& [span, lb] : sb)
    if (!sa.contains(span))
      out.push_back({a.doc_id, DisagreementKind::SpanOnlyInB, span, text_of(span), {}, lb, "annotated only in B"});
  std::sort(out.begin(), out.end(), [](const Disagreement& x, const Disagreement& y) {
    return x.span != y.span ? x.span < y.span : x.kind < y.kind;
  });
  return out;
}

double token_agreement(const AnnotatedDocument& a, const AnnotatedDocument& b) {
  if (a.text != b.text) throw std::invalid_argument("agreement needs two annotations of the same text");
  auto la = materialize(a), lb = materialize(b);
  std::vector<std::string> xa, xb;
  for (std::size_t i = 0; i < la.labels.size(); ++i) {
    xa.push_back(la.labels[i].str());
    xb.push_back(lb.labels[i].str());
  }
  return cohen_kappa(xa, xb);
}

}  // namespace namerec
