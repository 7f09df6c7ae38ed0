#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace namerec {

enum class Bie : std::uint8_t { Begin, Inside, End };
enum class Fml : std::uint8_t { First, Middle, Last };
enum class Fi : std::uint8_t { Full, Initial };

enum class Axis : std::uint8_t { Bie, Fml, Fi };

inline constexpr std::string_view kOutside = "O";

/// Class index of Outside in every label space built here.
inline constexpr int kOutsideId = 0;

std::string_view to_string(Bie v);
std::string_view to_string(Fml v);
std::string_view to_string(Fi v);
std::string_view to_string(Axis a);

std::optional<Bie> parse_bie(std::string_view s);
std::optional<Fml> parse_fml(std::string_view s);
std::optional<Fi> parse_fi(std::string_view s);
std::optional<Axis> parse_axis(std::string_view s);

/// Number of values on an axis (Outside not included).
int axis_cardinality(Axis a);

struct NameForm {
  Bie bie = Bie::Begin;
  Fml fml = Fml::First;
  Fi fi = Fi::Full;

  friend bool operator==(const NameForm&, const NameForm&) = default;
};

/// A per-token label: either Outside or a name token carrying all three axes.
class TokenLabel {
 public:
  TokenLabel() = default;

  static TokenLabel outside() { return TokenLabel(); }
  static TokenLabel name(Bie b, Fml f, Fi i) { return TokenLabel(NameForm{b, f, i}); }
  static TokenLabel name(NameForm form) { return TokenLabel(form); }

  bool is_name() const { return form_.has_value(); }
  bool is_outside() const { return !form_.has_value(); }
  const NameForm& form() const { return form_.value(); }

  /// "O" or "BIE_FML_FI", e.g. "Begin_First_Full".
  std::string str() const;

  /// Inverse of str(); nullopt for anything that is not "O" or a complete fused label.
  static std::optional<TokenLabel> parse(std::string_view s);

  /// Axis value as its class string, "O" for Outside.
  std::string_view project(Axis axis) const;

  friend bool operator==(const TokenLabel&, const TokenLabel&) = default;

 private:
  explicit TokenLabel(NameForm f) : form_(f) {}
  std::optional<NameForm> form_;
};

enum class Fusion : std::uint8_t { NoFusion, Early, Late, InNetwork };

struct LabelScheme {
  std::vector<Axis> axes;
  Fusion fusion = Fusion::Early;

  static LabelScheme no_fusion(Axis axis) { return {{axis}, Fusion::NoFusion}; }
  static LabelScheme early() { return {{Axis::Bie, Axis::Fml, Axis::Fi}, Fusion::Early}; }
  static LabelScheme late(std::vector<Axis> axes) { return {std::move(axes), Fusion::Late}; }
  static LabelScheme in_network(Axis form_axis) { return {{Axis::Bie, form_axis}, Fusion::InNetwork}; }

  /// Throws std::invalid_argument when the axis set does not fit the fusion mode.
  void validate() const;
};

using LabelSpace = std::vector<std::string>;

/// Outside followed by the values of one axis in declaration order.
LabelSpace axis_space(Axis axis);

/// Ordered, duplicate-free class identifiers. Outside is always first.
/// Multi-view schemes (late, in-network) yield the product space over their axes.
LabelSpace build_label_space(const LabelScheme& scheme);

/// One space per model the scheme trains (one for no-fusion/early, one per axis otherwise).
std::vector<LabelSpace> build_view_spaces(const LabelScheme& scheme);

/// Index of `label` within `space`, or -1.
int class_index(const LabelSpace& space, std::string_view label);

std::string fused_string(Bie b, Fml f, Fi i);

/// Class index of (b, f, i) inside the early space (1..18).
int fuse_early(Bie b, Fml f, Fi i);

/// Number of label combinations for a name of `tokens` tokens under early fusion.
long long early_name_combinations(int tokens);

struct NameSpan {
  int start_token = 0;
  int end_token = 0;  // inclusive
  std::optional<std::vector<std::pair<Fml, Fi>>> forms;

  int length() const { return end_token - start_token + 1; }
  friend bool operator==(const NameSpan&, const NameSpan&) = default;
};

/// Maximal runs of name labels; Outside breaks a run and a Begin inside a run starts a new span.
std::vector<NameSpan> decode_spans(std::span<const TokenLabel> labels);

/// Inverse of decode_spans for non-adjacent spans. Spans without forms get (Last, Full).
std::vector<TokenLabel> spans_to_labels(std::span<const NameSpan> spans, int length);

/// Late fusion: a token is a name token iff any axis model predicts a non-Outside class id.
/// Throws std::invalid_argument on length mismatch.
std::vector<NameSpan> merge_late(std::span<const std::vector<int>> predictions);

/// Fused label of a token given separate BIE and form-axis predictions. Missing axes default to
/// Last / Full. Returns Outside when `bie` is nullopt.
TokenLabel combine_views(std::optional<Bie> bie, std::optional<Fml> fml, std::optional<Fi> fi);

}  // namespace namerec
