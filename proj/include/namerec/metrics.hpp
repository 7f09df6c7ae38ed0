#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "namerec/labels.hpp"

namespace namerec {

struct PrfReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  /// Derives P/R/F from the counts. Empty denominators give 0.
  static PrfReport from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
  PrfReport& operator+=(const PrfReport& other);
};

enum class TokenMode { SpanOnly, FineGrained };

/// Labels are class strings with "O" as Outside. Throws std::invalid_argument on length mismatch.
PrfReport token_prf(std::span<const std::string> pred, std::span<const std::string> gold, TokenMode mode);
PrfReport token_prf(std::span<const TokenLabel> pred, std::span<const TokenLabel> gold, TokenMode mode);

/// Exact (start, end) matches; `strict` additionally requires identical per-token forms.
PrfReport name_prf(std::span<const NameSpan> pred, std::span<const NameSpan> gold, bool strict = false);

/// Cohen's kappa over two aligned categorical sequences. Throws on empty or mismatched input.
double cohen_kappa(std::span<const std::string> a, std::span<const std::string> b);

/// Kappa from a square contingency table (rows: annotator A, columns: annotator B).
double cohen_kappa(const std::vector<std::vector<double>>& table);

inline constexpr double kChiSquare95 = 3.841;

struct McNemarResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;  // statistic > 3.841
};

/// Continuity-corrected McNemar test over the discordant counts. Throws when b + c == 0.
McNemarResult mcnemar(std::size_t b, std::size_t c);

/// Discordant counts from per-item correctness of two systems, then mcnemar().
McNemarResult mcnemar(const std::vector<bool>& correct_a, const std::vector<bool>& correct_b);

}  // namespace namerec
