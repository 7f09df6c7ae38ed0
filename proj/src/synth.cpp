#include "namerec/synth.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

#include "namerec/utf8.hpp"

namespace namerec {

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }
bool chance(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }
template <typename T>
const T& choose(Rng& rng, const std::vector<T>& v) {
  return v[pick(rng, v.size())];
}

const std::vector<std::string> kOnsets{"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"};
const std::vector<std::string> kVowels{"a", "e", "i", "o", "u", "a", "e", "i", "o", "ai", "é"};
const std::vector<std::string> kCodas{"", "", "", "n", "r", "s", "l"};

std::string pseudo_word(Rng& rng) {
  std::string w;
  std::size_t syllables = 2 + pick(rng, 2);
  for (std::size_t s = 0; s < syllables; ++s) w += choose(rng, kOnsets) + choose(rng, kVowels) + choose(rng, kCodas);
  w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

std::vector<std::string> make_pool(Rng& rng, std::size_t size) {
  std::set<std::string> seen;
  std::vector<std::string> pool;
  while (pool.size() < size) {
    std::string w = pseudo_word(rng);
    if (seen.insert(w).second) pool.push_back(w);
  }
  return pool;
}

std::string initial_of(const std::string& w) { return w.substr(0, 1) + "."; }

struct Person {
  std::string first, middle, particle, last;
};

// Piece of a name: text plus its fused label.
using NamePart = std::pair<std::string, std::string>;

std::string lab(Bie b, Fml f, Fi i) { return fused_string(b, f, i); }

std::vector<NamePart> with_bie(const std::vector<std::pair<std::string, std::pair<Fml, Fi>>>& parts) {
  std::vector<NamePart> out;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    Bie b = k == 0 ? Bie::Begin : (k + 1 == parts.size() ? Bie::End : Bie::Inside);
    out.emplace_back(parts[k].first, lab(b, parts[k].second.first, parts[k].second.second));
  }
  return out;
}

enum class Style { Full, MiddleInitial, InitialFirst, LastInitial, BareLast };

std::vector<NamePart> render(const Person& p, Style style) {
  using F = std::pair<Fml, Fi>;
  std::vector<std::pair<std::string, F>> parts;
  auto add_last = [&] {
    if (!p.particle.empty()) parts.push_back({p.particle, F{Fml::Last, Fi::Full}});
    parts.push_back({p.last, F{Fml::Last, Fi::Full}});
  };
  switch (style) {
    case Style::Full:
      parts.push_back({p.first, F{Fml::First, Fi::Full}});
      add_last();
      break;
    case Style::MiddleInitial:
      parts.push_back({p.first, F{Fml::First, Fi::Full}});
      parts.push_back({initial_of(p.middle), F{Fml::Middle, Fi::Initial}});
      add_last();
      break;
    case Style::InitialFirst:
      parts.push_back({initial_of(p.first), F{Fml::First, Fi::Initial}});
      add_last();
      break;
    case Style::LastInitial:
      parts.push_back({p.last, F{Fml::Last, Fi::Full}});
      parts.push_back({initial_of(p.first), F{Fml::First, Fi::Initial}});
      break;
    case Style::BareLast:
      parts.push_back({p.last, F{Fml::Last, Fi::Full}});
      break;
  }
  return with_bie(parts);
}

class DocBuilder {
 public:
  void word(const std::string& w) {
    space();
    append(w);
  }
  void words(std::initializer_list<std::string> ws) {
    for (const auto& w : ws) word(w);
  }
  void name(const std::vector<NamePart>& parts) {
    space();
    std::size_t start = chars_;
    std::string text;
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i > 0) {
        append(" ");
        text += " ";
      }
      append(parts[i].first);
      text += parts[i].first;
      labels.push_back(parts[i].second);
    }
    auto key = std::make_pair(text, labels);
    auto it = index_.find(key);
    if (it == index_.end()) {
      it = index_.emplace(key, records_.size()).first;
      records_.push_back(AnnotationRecord{text, {}, labels, std::nullopt});
    }
    records_[it->second].positions.push_back(start);
  }
  void newline() { append("\n"); }
  void blank_line() { append("\n\n"); }

  AnnotatedDocument finish(std::string doc_id) {
    while (!text_.empty() && text_.back() == '\n') text_.pop_back();
    text_ += "\n";
    return AnnotatedDocument{std::move(doc_id), std::move(text_), std::move(records_)};
  }

 private:
  void space() {
    if (!text_.empty() && text_.back() != '\n') append(" ");
  }
  void append(const std::string& s) {
    text_ += s;
    chars_ += utf8::length(s);
  }
  std::string text_;
  std::size_t chars_ = 0;
  std::vector<AnnotationRecord> records_;
  std::map<std::pair<std::string, std::vector<std::string>>, std::size_t> index_;
};

const std::vector<std::string> kParticles{"van", "de", "von"};
const std::vector<std::string> kTopics{"databases", "query processing", "spatial data", "machine learning",
                                       "text mining", "graph analytics", "information retrieval"};
const std::vector<std::string> kTitleWords{"efficient", "scalable", "learning", "queries", "over", "large",
                                           "graphs", "streams", "towards", "robust", "indexing", "models"};
const std::vector<std::string> kVenues{"SIGMOD", "VLDB", "ICDE", "TKDE", "KDD", "WWW"};
const std::vector<std::string> kMemberHeaders{"Members :", "Current students :", "People :", "Alumni :"};
const std::vector<std::string> kPartnerHeaders{"Partners :", "Sponsors :", "Funding :", "Collaborating institutes :"};
const std::vector<std::string> kOrgSuffix{"University", "Labs", "Institute", "Foundation"};

class DocGenerator {
 public:
  DocGenerator(Rng& rng, const std::vector<std::string>& pool, const SynthParams& p)
      : rng_(rng), params_(p), order_(pool) {
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  AnnotatedDocument generate(std::string doc_id) {
    std::size_t sections = params_.min_sections + pick(rng_, params_.max_sections - params_.min_sections + 1);
    for (std::size_t s = 0; s < sections; ++s) {
      if (s > 0) b_.blank_line();
      double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
      if (r < params_.context_richness) {
        biography();
      } else {
        switch (pick(rng_, 4)) {
          case 0: members(); break;
          case 1: partners(); break;
          case 2: papers(); break;
          default: filler(); break;
        }
      }
    }
    return b_.finish(std::move(doc_id));
  }

 private:
  std::string fresh_word() {
    if (next_ < order_.size()) return order_[next_++];
    // Pool exhausted: extend deterministically with words not yet used in this document.
    while (true) {
      std::string w = pseudo_word(rng_) + "x";
      if (extra_.insert(w).second) return w;
    }
  }
  const std::string& org() {
    if (orgs_.empty() || chance(rng_, 0.4)) orgs_.push_back(fresh_word());
    return choose(rng_, orgs_);
  }
  const Person& person() {
    if (!people_.empty() && chance(rng_, params_.repetition_rate)) return choose(rng_, people_);
    Person p;
    p.first = fresh_word();
    p.middle = fresh_word();
    p.last = fresh_word();
    if (chance(rng_, 0.1)) p.particle = choose(rng_, kParticles);
    people_.push_back(p);
    return people_.back();
  }
  // A new person when repetition is off, so every rendered string stays unique.
  void mention(Style style) { b_.name(render(person(), style)); }

  std::string year() { return std::to_string(1995 + pick(rng_, 28)); }

  void biography() {
    std::size_t lines = params_.min_lines + pick(rng_, params_.max_lines - params_.min_lines + 1);
    for (std::size_t i = 0; i < lines; ++i) {
      if (i > 0) b_.newline();
      switch (pick(rng_, 5)) {
        case 0:
          b_.word("Dr");
          mention(Style::Full);
          b_.words({"is", "a", "Professor", "at", org(), "."});
          break;
        case 1:
          mention(chance(rng_, 0.5) ? Style::Full : Style::MiddleInitial);
          b_.words({"joined", org(), "as", "a", "lecturer", "in", year(), "."});
          break;
        case 2:
          b_.words({"Our", "group", "is", "led", "by", "Professor"});
          mention(Style::Full);
          b_.word(".");
          break;
        case 3:
          b_.words({"She", "collaborates", "with"});
          mention(Style::Full);
          b_.word("and");
          mention(Style::MiddleInitial);
          b_.words({"from", org(), "."});
          break;
        default:
          mention(Style::Full);
          b_.words({"received", "the", "best", "paper", "award", "in", year(), "."});
          break;
      }
    }
  }

  void list_section(const std::vector<std::string>& headers, bool people) {
    b_.words({choose(rng_, headers)});
    std::size_t lines = params_.min_lines + pick(rng_, params_.max_lines - params_.min_lines + 1);
    for (std::size_t i = 0; i < lines; ++i) {
      b_.newline();
      std::size_t entries = 2 + pick(rng_, 3);
      for (std::size_t e = 0; e < entries; ++e) {
        if (e > 0) b_.word(",");
        bool bare = chance(rng_, params_.ambiguity);
        if (people) {
          mention(bare ? Style::BareLast : (chance(rng_, 0.5) ? Style::Full : Style::InitialFirst));
        } else {
          b_.word(org());
          if (!bare) b_.word(choose(rng_, kOrgSuffix));
        }
      }
      b_.word(".");
    }
  }

  void members() { list_section(kMemberHeaders, true); }
  void partners() { list_section(kPartnerHeaders, false); }

  void papers() {
    b_.words({"Publications", ":"});
    std::size_t lines = params_.min_lines + pick(rng_, params_.max_lines - params_.min_lines + 1);
    for (std::size_t i = 0; i < lines; ++i) {
      b_.newline();
      std::size_t authors = 1 + pick(rng_, 3);
      Style style = chance(rng_, 0.5) ? Style::LastInitial : Style::InitialFirst;
      for (std::size_t a = 0; a < authors; ++a) {
        if (a > 0) b_.word(a + 1 == authors ? "and" : ",");
        mention(style);
      }
      b_.word(year());
      b_.word(".");
      std::size_t title = 3 + pick(rng_, 4);
      for (std::size_t t = 0; t < title; ++t) b_.word(choose(rng_, kTitleWords));
      b_.words({".", choose(rng_, kVenues), "."});
    }
  }

  void filler() {
    std::size_t lines = params_.min_lines + pick(rng_, params_.max_lines - params_.min_lines + 1);
    for (std::size_t i = 0; i < lines; ++i) {
      if (i > 0) b_.newline();
      b_.words({"The", "group", "works", "on", choose(rng_, kTopics), "and", choose(rng_, kTopics), "."});
    }
  }

  Rng& rng_;
  const SynthParams& params_;
  std::vector<std::string> order_;
  std::size_t next_ = 0;
  std::set<std::string> extra_;
  std::vector<Person> people_;
  std::vector<std::string> orgs_;
  DocBuilder b_;
};

std::string doc_name(std::size_t i) {
  std::string n = std::to_string(i);
  return "doc" + std::string(n.size() < 4 ? 4 - n.size() : 0, '0') + n;
}

}  // namespace

std::vector<AnnotatedDocument> synth_generate(std::uint64_t seed, const SynthParams& params) {
  if (params.min_sections < 1 || params.max_sections < params.min_sections || params.min_lines < 1 ||
      params.max_lines < params.min_lines || params.pool_size < 8)
    throw std::invalid_argument("synth: inconsistent length profile");
  for (double p : {params.repetition_rate, params.context_richness, params.ambiguity})
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("synth: rates must lie in [0, 1]");
  Rng rng(seed);
  auto pool = make_pool(rng, params.pool_size);
  std::vector<AnnotatedDocument> docs;
  for (std::size_t i = 0; i < params.num_docs; ++i) {
    DocGenerator g(rng, pool, params);
    docs.push_back(g.generate(doc_name(i)));
  }
  return docs;
}

std::vector<AnnotatedDocument> synth_sentences(std::uint64_t seed, std::size_t count, std::size_t pool_size) {
  SynthParams p;
  p.num_docs = count;
  p.min_sections = p.max_sections = 1;
  p.min_lines = p.max_lines = 1;
  p.repetition_rate = 0.0;
  p.context_richness = 0.5;
  p.ambiguity = 0.3;
  p.pool_size = pool_size;
  return synth_generate(seed, p);
}

}  // namespace namerec
