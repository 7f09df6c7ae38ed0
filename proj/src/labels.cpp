#include "namerec/labels.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace namerec {

namespace {

constexpr std::array<std::string_view, 3> kBieNames = {"Begin", "Inside", "End"};
constexpr std::array<std::string_view, 3> kFmlNames = {"First", "Middle", "Last"};
constexpr std::array<std::string_view, 2> kFiNames = {"Full", "Initial"};

template <typename E, std::size_t N>
std::optional<E> parse_enum(std::string_view s, const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  return std::nullopt;
}

std::vector<std::string> axis_values(Axis axis) {
  std::vector<std::string> out;
  switch (axis) {
    case Axis::Bie:
      for (auto n : kBieNames) out.emplace_back(n);
      break;
    case Axis::Fml:
      for (auto n : kFmlNames) out.emplace_back(n);
      break;
    case Axis::Fi:
      for (auto n : kFiNames) out.emplace_back(n);
      break;
  }
  return out;
}

}  // namespace

std::string_view to_string(Bie v) { return kBieNames[static_cast<int>(v)]; }
std::string_view to_string(Fml v) { return kFmlNames[static_cast<int>(v)]; }
std::string_view to_string(Fi v) { return kFiNames[static_cast<int>(v)]; }

std::string_view to_string(Axis a) {
  switch (a) {
    case Axis::Bie: return "BIE";
    case Axis::Fml: return "FML";
    case Axis::Fi: return "FI";
  }
  return "?";
}

std::optional<Bie> parse_bie(std::string_view s) { return parse_enum<Bie>(s, kBieNames); }
std::optional<Fml> parse_fml(std::string_view s) { return parse_enum<Fml>(s, kFmlNames); }
std::optional<Fi> parse_fi(std::string_view s) { return parse_enum<Fi>(s, kFiNames); }

std::optional<Axis> parse_axis(std::string_view s) {
  if (s == "BIE" || s == "bie") return Axis::Bie;
  if (s == "FML" || s == "fml") return Axis::Fml;
  if (s == "FI" || s == "fi") return Axis::Fi;
  return std::nullopt;
}

int axis_cardinality(Axis a) { return a == Axis::Fi ? 2 : 3; }

std::string TokenLabel::str() const {
  if (!form_) return std::string(kOutside);
  return fused_string(form_->bie, form_->fml, form_->fi);
}

std::optional<TokenLabel> TokenLabel::parse(std::string_view s) {
  if (s == kOutside) return TokenLabel::outside();
  auto p1 = s.find('_');
  if (p1 == std::string_view::npos) return std::nullopt;
  auto p2 = s.find('_', p1 + 1);
  if (p2 == std::string_view::npos) return std::nullopt;
  auto b = parse_bie(s.substr(0, p1));
  auto f = parse_fml(s.substr(p1 + 1, p2 - p1 - 1));
  auto i = parse_fi(s.substr(p2 + 1));
  if (!b || !f || !i) return std::nullopt;
  return TokenLabel::name(*b, *f, *i);
}

std::string_view TokenLabel::project(Axis axis) const {
  if (!form_) return kOutside;
  switch (axis) {
    case Axis::Bie: return to_string(form_->bie);
    case Axis::Fml: return to_string(form_->fml);
    case Axis::Fi: return to_string(form_->fi);
  }
  return kOutside;
}

void LabelScheme::validate() const {
  auto has = [&](Axis a) { return std::find(axes.begin(), axes.end(), a) != axes.end(); };
  std::vector<Axis> sorted = axes;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("label scheme lists an axis twice");
  switch (fusion) {
    case Fusion::NoFusion:
      if (axes.size() != 1) throw std::invalid_argument("no-fusion scheme needs exactly one axis");
      break;
    case Fusion::Early:
      if (axes.size() != 3) throw std::invalid_argument("early fusion uses all three axes");
      break;
    case Fusion::Late:
      if (axes.size() < 2) throw std::invalid_argument("late fusion needs at least two axes");
      break;
    case Fusion::InNetwork:
      if (axes.size() != 2 || !has(Axis::Bie))
        throw std::invalid_argument("in-network fusion pairs BIE with one form axis");
      break;
  }
}

LabelSpace axis_space(Axis axis) {
  LabelSpace out{std::string(kOutside)};
  for (auto& v : axis_values(axis)) out.push_back(std::move(v));
  return out;
}

LabelSpace build_label_space(const LabelScheme& scheme) {
  scheme.validate();
  if (scheme.fusion == Fusion::NoFusion) return axis_space(scheme.axes.front());

  // Product over the scheme's axes, taken in canonical BIE, FML, FI order.
  std::vector<Axis> ordered = scheme.axes;
  std::sort(ordered.begin(), ordered.end());
  std::vector<std::string> product{""};
  for (Axis a : ordered) {
    std::vector<std::string> next;
    for (const auto& prefix : product)
      for (const auto& v : axis_values(a)) next.push_back(prefix.empty() ? v : prefix + "_" + v);
    product = std::move(next);
  }
  LabelSpace out{std::string(kOutside)};
  out.insert(out.end(), product.begin(), product.end());
  return out;
}

std::vector<LabelSpace> build_view_spaces(const LabelScheme& scheme) {
  scheme.validate();
  if (scheme.fusion == Fusion::NoFusion || scheme.fusion == Fusion::Early)
    return {build_label_space(scheme)};
  std::vector<LabelSpace> out;
  for (Axis a : scheme.axes) out.push_back(axis_space(a));
  return out;
}

int class_index(const LabelSpace& space, std::string_view label) {
  for (std::size_t i = 0; i < space.size(); ++i)
    if (space[i] == label) return static_cast<int>(i);
  return -1;
}

std::string fused_string(Bie b, Fml f, Fi i) {
  std::string out(to_string(b));
  out += '_';
  out += to_string(f);
  out += '_';
  out += to_string(i);
  return out;
}

int fuse_early(Bie b, Fml f, Fi i) {
  return 1 + static_cast<int>(b) * 6 + static_cast<int>(f) * 2 + static_cast<int>(i);
}

long long early_name_combinations(int tokens) {
  long long per_token = 3LL * 3LL * 2LL;
  long long out = 1;
  for (int t = 0; t < tokens; ++t) out *= per_token;
  return out;
}

std::vector<NameSpan> decode_spans(std::span<const TokenLabel> labels) {
  std::vector<NameSpan> spans;
  bool open = false;
  for (int t = 0; t < static_cast<int>(labels.size()); ++t) {
    const auto& l = labels[t];
    if (l.is_outside()) {
      open = false;
      continue;
    }
    auto form = std::make_pair(l.form().fml, l.form().fi);
    if (!open || l.form().bie == Bie::Begin) {
      spans.push_back(NameSpan{t, t, std::vector<std::pair<Fml, Fi>>{form}});
      open = true;
    } else {
      spans.back().end_token = t;
      spans.back().forms->push_back(form);
    }
  }
  return spans;
}

std::vector<TokenLabel> spans_to_labels(std::span<const NameSpan> spans, int length) {
  std::vector<TokenLabel> out(length);
  for (const auto& s : spans) {
    for (int t = s.start_token; t <= s.end_token; ++t) {
      Bie b = t == s.start_token ? Bie::Begin : (t == s.end_token ? Bie::End : Bie::Inside);
      Fml f = Fml::Last;
      Fi i = Fi::Full;
      if (s.forms) std::tie(f, i) = (*s.forms)[t - s.start_token];
      out.at(t) = TokenLabel::name(b, f, i);
    }
  }
  return out;
}

std::vector<NameSpan> merge_late(std::span<const std::vector<int>> predictions) {
  if (predictions.empty()) return {};
  const std::size_t n = predictions.front().size();
  for (const auto& p : predictions)
    if (p.size() != n) throw std::invalid_argument("merge_late: prediction lengths differ");

  std::vector<NameSpan> spans;
  bool open = false;
  for (std::size_t t = 0; t < n; ++t) {
    bool name = std::any_of(predictions.begin(), predictions.end(),
                            [&](const std::vector<int>& p) { return p[t] != kOutsideId; });
    if (!name) {
      open = false;
    } else if (open) {
      spans.back().end_token = static_cast<int>(t);
    } else {
      spans.push_back(NameSpan{static_cast<int>(t), static_cast<int>(t), std::nullopt});
      open = true;
    }
  }
  return spans;
}

TokenLabel combine_views(std::optional<Bie> bie, std::optional<Fml> fml, std::optional<Fi> fi) {
  if (!bie) return TokenLabel::outside();
  return TokenLabel::name(*bie, fml.value_or(Fml::Last), fi.value_or(Fi::Full));
}

}  // namespace namerec
