#include "namerec/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

#include "namerec/utf8.hpp"

namespace namerec {

namespace {

bool is_joiner(char32_t cp) {
  return cp == '-' || cp == '\'' || cp == 0x2010 || cp == 0x2011 || cp == 0x2019;
}

}  // namespace

std::vector<Token> basic_tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t word_start = std::string_view::npos;
  int word_chars = 0;
  bool word_single_upper = false;

  auto flush = [&](std::size_t end) {
    if (word_start != std::string_view::npos && end > word_start)
      out.push_back(Token{std::string(text.substr(word_start, end - word_start)), word_start, end});
    word_start = std::string_view::npos;
    word_chars = 0;
    word_single_upper = false;
  };

  std::size_t i = 0;
  while (i < text.size()) {
    auto [cp, len] = utf8::decode(text, i);
    if (utf8::is_whitespace(cp)) {
      flush(i);
      i += len;
      continue;
    }
    if (utf8::is_punctuation(cp)) {
      bool in_word = word_start != std::string_view::npos;
      if (in_word && is_joiner(cp) && i + len < text.size()) {
        auto next = utf8::decode(text, i + len);
        if (utf8::is_word_char(next.cp) && !utf8::is_punctuation(next.cp)) {
          ++word_chars;
          word_single_upper = false;
          i += len;
          continue;
        }
      }
      if (in_word && cp == '.' && word_chars == 1 && word_single_upper) {
        i += len;
        flush(i);
        continue;
      }
      flush(i);
      out.push_back(Token{std::string(text.substr(i, len)), i, i + len});
      i += len;
      continue;
    }
    if (word_start == std::string_view::npos) word_start = i;
    ++word_chars;
    word_single_upper = word_chars == 1 && utf8::is_upper(cp);
    i += len;
  }
  flush(text.size());
  return out;
}

bool is_punctuation_token(std::string_view token) {
  if (token.empty()) return false;
  auto d = utf8::decode(token, 0);
  return d.len == token.size() && utf8::is_punctuation(d.cp);
}

Vocabulary::Vocabulary(std::string unknown_piece, std::vector<std::string> pieces) {
  pieces_.reserve(pieces.size() + 1);
  pieces_.push_back(std::move(unknown_piece));
  for (auto& p : pieces)
    if (p != pieces_.front()) pieces_.push_back(std::move(p));
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].empty() || pieces_[i] == "##") throw std::invalid_argument("empty vocabulary piece");
    if (!index_.emplace(pieces_[i], static_cast<int>(i)).second)
      throw std::invalid_argument("duplicate vocabulary piece: " + pieces_[i]);
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw std::invalid_argument("vocabulary file is empty: " + path.string());
  std::string unk = lines.front();
  lines.erase(lines.begin());
  return Vocabulary(std::move(unk), std::move(lines));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (const auto& p : pieces_) out << p << '\n';
}

Vocabulary Vocabulary::build(std::span<const std::string> words, std::size_t max_words,
                             std::size_t min_count, std::string unknown_piece) {
  std::map<std::string, std::size_t> counts;
  std::set<std::string> chars;
  for (const auto& w : words) {
    ++counts[w];
    for (std::size_t i = 0; i < w.size();) {
      auto d = utf8::decode(w, i);
      chars.insert(w.substr(i, d.len));
      i += d.len;
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> pieces;
  std::set<std::string> seen;
  for (const auto& [w, c] : ranked) {
    if (pieces.size() >= max_words || c < min_count) break;
    if (seen.insert(w).second) pieces.push_back(w);
  }
  for (const auto& c : chars) {
    if (seen.insert(c).second) pieces.push_back(c);
    if (seen.insert("##" + c).second) pieces.push_back("##" + c);
  }
  return Vocabulary(std::move(unknown_piece), std::move(pieces));
}

bool Vocabulary::contains(std::string_view piece) const {
  return index_.find(std::string(piece)) != index_.end();
}

int Vocabulary::id(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  return it == index_.end() ? unknown_id() : it->second;
}

std::vector<std::string> wordpiece(std::string_view token, const Vocabulary& vocab) {
  std::vector<std::size_t> bounds;
  for (std::size_t i = 0; i < token.size(); i += utf8::decode(token, i).len) bounds.push_back(i);
  bounds.push_back(token.size());

  std::vector<std::string> out;
  std::size_t bi = 0;
  while (bi + 1 < bounds.size()) {
    bool found = false;
    for (std::size_t bj = bounds.size() - 1; bj > bi; --bj) {
      std::string candidate(token.substr(bounds[bi], bounds[bj] - bounds[bi]));
      if (bi > 0) candidate = "##" + candidate;
      if (vocab.contains(candidate)) {
        out.push_back(std::move(candidate));
        bi = bj;
        found = true;
        break;
      }
    }
    if (!found) return {vocab.unknown_piece()};
  }
  return out;
}

std::vector<int> TokenizedDocument::parents() const {
  std::vector<int> out;
  out.reserve(subtokens.size());
  for (const auto& s : subtokens) out.push_back(s.parent);
  return out;
}

TokenizedDocument tokenize_tokens(std::vector<Token> tokens, const Vocabulary& vocab) {
  TokenizedDocument doc;
  doc.tokens = std::move(tokens);
  for (std::size_t t = 0; t < doc.tokens.size(); ++t)
    for (auto& p : wordpiece(doc.tokens[t].text, vocab))
      doc.subtokens.push_back(SubToken{std::move(p), static_cast<int>(t)});
  return doc;
}

TokenizedDocument tokenize_document(std::string_view text, const Vocabulary& vocab) {
  return tokenize_tokens(basic_tokenize(text), vocab);
}

std::vector<int> resolve_predictions(std::span<const int> subtoken_predictions,
                                     std::span<const int> parents, std::size_t token_count,
                                     std::uint64_t seed) {
  if (subtoken_predictions.size() != parents.size())
    throw std::invalid_argument("resolve_predictions: predictions and parents differ in length");
  std::mt19937_64 rng(seed);
  std::vector<int> out(token_count, kOutsideId);

  std::size_t i = 0;
  while (i < parents.size()) {
    std::size_t j = i;
    while (j < parents.size() && parents[j] == parents[i]) ++j;
    // Votes in first-seen order so tie candidates are enumerated deterministically.
    std::vector<std::pair<int, int>> votes;
    for (std::size_t k = i; k < j; ++k) {
      auto it = std::find_if(votes.begin(), votes.end(),
                             [&](const auto& v) { return v.first == subtoken_predictions[k]; });
      if (it == votes.end())
        votes.emplace_back(subtoken_predictions[k], 1);
      else
        ++it->second;
    }
    int best = 0;
    for (const auto& v : votes) best = std::max(best, v.second);
    std::vector<int> tied;
    for (const auto& v : votes)
      if (v.second == best) tied.push_back(v.first);
    int choice = tied.front();
    if (tied.size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, tied.size() - 1);
      choice = tied[pick(rng)];
    }
    out.at(static_cast<std::size_t>(parents[i])) = choice;
    i = j;
  }
  return out;
}

}  // namespace namerec
