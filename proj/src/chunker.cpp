#include "namerec/chunker.hpp"

#include <algorithm>
#include <cmath>

namespace namerec {

namespace {

bool is_sentence_final(std::string_view t) { return t == "." || t == "!" || t == "?"; }

bool blank_line_between(std::string_view text, std::size_t from, std::size_t to) {
  int newlines = 0;
  for (std::size_t i = from; i < to && i < text.size(); ++i) {
    if (text[i] == '\n') {
      if (++newlines == 2) return true;
    } else if (text[i] != ' ' && text[i] != '\t' && text[i] != '\r') {
      newlines = 0;
    }
  }
  return false;
}

}  // namespace

std::vector<std::size_t> split_sentences(std::span<const Token> tokens, std::string_view text) {
  std::vector<std::size_t> ends;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    bool end = false;
    if (is_sentence_final(tokens[i].text)) {
      // A standalone dot glued to a lone capital is still an initial ("J" + ".").
      bool glued_initial = tokens[i].text == "." && i > 0 && tokens[i - 1].end == tokens[i].begin &&
                           tokens[i - 1].text.size() == 1 && tokens[i - 1].text[0] >= 'A' &&
                           tokens[i - 1].text[0] <= 'Z';
      end = !glued_initial;
    }
    if (!end && !text.empty() && i + 1 < tokens.size())
      end = blank_line_between(text, tokens[i].end, tokens[i + 1].begin);
    if (end) ends.push_back(i + 1);
  }
  if (!tokens.empty() && (ends.empty() || ends.back() != tokens.size())) ends.push_back(tokens.size());
  return ends;
}

PieceStream to_piece_stream(const TokenizedDocument& doc, std::span<const std::size_t> token_sentence_ends) {
  PieceStream out;
  out.pieces.reserve(doc.subtokens.size());
  std::size_t s = 0;
  for (std::size_t i = 0; i < doc.subtokens.size(); ++i) {
    out.pieces.push_back(doc.subtokens[i].piece);
    bool last_of_token = i + 1 == doc.subtokens.size() || doc.subtokens[i + 1].parent != doc.subtokens[i].parent;
    if (!last_of_token) continue;
    auto parent = static_cast<std::size_t>(doc.subtokens[i].parent);
    while (s < token_sentence_ends.size() && token_sentence_ends[s] <= parent) ++s;
    if (s < token_sentence_ends.size() && token_sentence_ends[s] == parent + 1) out.sentence_ends.push_back(i + 1);
  }
  if (!out.pieces.empty() && (out.sentence_ends.empty() || out.sentence_ends.back() != out.pieces.size()))
    out.sentence_ends.push_back(out.pieces.size());
  return out;
}

OverlapPolicy OverlapPolicy::adaptive_default(std::size_t capacity) {
  AdaptiveOverlap a;
  a.thresholds = {capacity, 2 * capacity, 3 * capacity, 4 * capacity, 6 * capacity, 8 * capacity};
  a.ratios = {0.0, 0.10, 0.20, 0.30, 0.40, 0.50};
  return {a};
}

void OverlapPolicy::validate() const {
  if (const auto* f = std::get_if<FixedOverlap>(&mode)) {
    if (!(f->ratio >= 0.0 && f->ratio < 1.0)) throw std::invalid_argument("fixed overlap ratio must be in [0, 1)");
    return;
  }
  const auto& a = std::get<AdaptiveOverlap>(mode);
  if (a.thresholds.empty() || a.thresholds.size() != a.ratios.size())
    throw std::invalid_argument("adaptive policy needs equal-length, non-empty threshold and ratio lists");
  for (std::size_t i = 1; i < a.thresholds.size(); ++i)
    if (a.thresholds[i] <= a.thresholds[i - 1])
      throw std::invalid_argument("adaptive thresholds must be strictly ascending");
  for (double r : a.ratios)
    if (!(r >= 0.0 && r <= 0.5)) throw std::invalid_argument("adaptive ratios must lie in [0, 0.5]");
}

double select_ratio(std::size_t doc_length, const AdaptiveOverlap& policy) {
  for (std::size_t i = 0; i < policy.thresholds.size(); ++i)
    if (policy.thresholds[i] >= doc_length) return policy.ratios[i];
  return policy.ratios.back();
}

std::size_t effective_overlap(double ratio, std::size_t capacity) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(capacity) + 1e-9));
}

std::vector<std::size_t> Chunk::content_positions() const {
  std::vector<std::size_t> out;
  out.reserve(content_size());
  for (std::size_t p = 0; p < source.size(); ++p)
    if (source[p] >= 0) out.push_back(p);
  return out;
}

ChunkedDocument chunk_document(const PieceStream& doc, std::size_t capacity, const OverlapPolicy& policy,
                               std::string doc_id) {
  policy.validate();
  const std::size_t n = doc.pieces.size();
  double ratio = 0.0;
  if (const auto* f = std::get_if<FixedOverlap>(&policy.mode))
    ratio = f->ratio;
  else
    ratio = select_ratio(n, std::get<AdaptiveOverlap>(policy.mode));
  const std::size_t k = effective_overlap(ratio, capacity);
  // One leading special and one separator must fit next to the overlap plus one new piece.
  if (capacity < k + 3)
    throw ChunkError("capacity " + std::to_string(capacity) + " too small for overlap " + std::to_string(k));

  std::vector<bool> ends_sentence(n, false);
  for (std::size_t e : doc.sentence_ends)
    if (e > 0 && e <= n) ends_sentence[e - 1] = true;

  ChunkedDocument cd;
  cd.doc_id = std::move(doc_id);
  cd.capacity = capacity;
  cd.effective_k = k;
  cd.ratio = ratio;
  if (n == 0) return cd;

  std::size_t start = 0;
  while (true) {
    // Largest end that fits, and the largest sentence end among those that advance past the overlap.
    std::size_t used = 1;
    std::size_t fit_end = start;
    std::size_t sentence_end = 0;
    for (std::size_t e = start; e < n; ++e) {
      std::size_t cost = ends_sentence[e] ? 2 : 1;
      if (used + cost > capacity) break;
      used += cost;
      fit_end = e + 1;
      if (ends_sentence[e] && fit_end > start + k) sentence_end = fit_end;
    }
    std::size_t end = fit_end;
    if (fit_end < n && sentence_end > 0) end = sentence_end;
    bool first = cd.chunks.empty();
    if (end < n && end <= start + k)
      throw ChunkError("capacity " + std::to_string(capacity) + " cannot advance past overlap " + std::to_string(k));
    if (end == start) throw ChunkError("capacity too small for a single piece");

    Chunk c;
    c.content_begin = start;
    c.content_end = end;
    c.overlap_prev = first ? 0 : k;
    c.pieces.emplace_back(first ? kClsToken : kContinuationToken);
    c.source.push_back(-1);
    for (std::size_t i = start; i < end; ++i) {
      c.pieces.push_back(doc.pieces[i]);
      c.source.push_back(static_cast<int>(i));
      if (ends_sentence[i]) {
        c.pieces.emplace_back(kSepToken);
        c.source.push_back(-1);
      }
    }
    cd.chunks.push_back(std::move(c));
    if (end >= n) break;
    start = end - k;
  }
  return cd;
}

std::vector<std::string> reassemble(const ChunkedDocument& cd) {
  std::vector<std::string> out;
  for (std::size_t ci = 0; ci < cd.chunks.size(); ++ci) {
    const Chunk& c = cd.chunks[ci];
    auto fail = [&](const std::string& what) {
      throw ChunkError("chunk " + std::to_string(ci) + " of '" + cd.doc_id + "': " + what);
    };
    if (c.pieces.size() != c.source.size()) fail("piece/source length mismatch");
    if (c.pieces.size() > cd.capacity) fail("exceeds capacity");
    if (c.pieces.empty() || c.source.front() != -1) fail("missing leading special");
    if (c.pieces.front() != (ci == 0 ? kClsToken : kContinuationToken)) fail("wrong leading special");
    if (c.content_end < c.content_begin) fail("inverted content range");

    std::size_t expected_begin = 0;
    if (ci == 0) {
      if (c.overlap_prev != 0) fail("first chunk declares an overlap");
    } else {
      const Chunk& prev = cd.chunks[ci - 1];
      if (c.overlap_prev > prev.content_size()) fail("overlap longer than predecessor");
      expected_begin = prev.content_end - c.overlap_prev;
      if (c.overlap_prev != cd.effective_k) fail("overlap differs from effective_k");
    }
    if (c.content_begin != expected_begin) fail("content range does not follow predecessor overlap");

    std::size_t content_seen = 0;
    for (std::size_t p = 0; p < c.pieces.size(); ++p) {
      if (c.source[p] < 0) continue;
      std::size_t doc_index = c.content_begin + content_seen;
      if (static_cast<std::size_t>(c.source[p]) != doc_index) fail("content pieces out of order");
      if (content_seen < c.overlap_prev) {
        if (out.at(doc_index) != c.pieces[p]) fail("overlap pieces disagree with predecessor");
      } else {
        if (out.size() != doc_index) fail("content gap");
        out.push_back(c.pieces[p]);
      }
      ++content_seen;
    }
    if (content_seen != c.content_size()) fail("content count does not match range");
  }
  return out;
}

}  // namespace namerec
