#include "namerec/metrics.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace namerec {

PrfReport PrfReport::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  PrfReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

PrfReport& PrfReport::operator+=(const PrfReport& other) {
  *this = from_counts(tp + other.tp, fp + other.fp, fn + other.fn);
  return *this;
}

PrfReport token_prf(std::span<const std::string> pred, std::span<const std::string> gold, TokenMode mode) {
  if (pred.size() != gold.size()) throw std::invalid_argument("token_prf: sequences differ in length");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != kOutside;
    bool g = gold[i] != kOutside;
    if (p && g) {
      if (mode == TokenMode::SpanOnly || pred[i] == gold[i]) {
        ++tp;
      } else {
        ++fp;
        ++fn;
      }
    } else if (p) {
      ++fp;
    } else if (g) {
      ++fn;
    }
  }
  return PrfReport::from_counts(tp, fp, fn);
}

PrfReport token_prf(std::span<const TokenLabel> pred, std::span<const TokenLabel> gold, TokenMode mode) {
  std::vector<std::string> p, g;
  p.reserve(pred.size());
  g.reserve(gold.size());
  for (const auto& l : pred) p.push_back(l.str());
  for (const auto& l : gold) g.push_back(l.str());
  return token_prf(p, g, mode);
}

PrfReport name_prf(std::span<const NameSpan> pred, std::span<const NameSpan> gold, bool strict) {
  std::size_t tp = 0;
  std::vector<bool> used(gold.size(), false);
  for (const auto& p : pred) {
    for (std::size_t j = 0; j < gold.size(); ++j) {
      if (used[j] || gold[j].start_token != p.start_token || gold[j].end_token != p.end_token) continue;
      if (strict && gold[j].forms != p.forms) continue;
      used[j] = true;
      ++tp;
      break;
    }
  }
  return PrfReport::from_counts(tp, pred.size() - tp, gold.size() - tp);
}

double cohen_kappa(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("cohen_kappa: empty input");
  if (a.size() != b.size()) throw std::invalid_argument("cohen_kappa: sequences differ in length");
  std::map<std::string, std::size_t> index;
  for (const auto& s : a) index.emplace(s, 0);
  for (const auto& s : b) index.emplace(s, 0);
  std::size_t k = 0;
  for (auto& [_, v] : index) v = k++;
  std::vector<std::vector<double>> table(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) table[index[a[i]]][index[b[i]]] += 1.0;
  return cohen_kappa(table);
}

double cohen_kappa(const std::vector<std::vector<double>>& table) {
  const std::size_t k = table.size();
  double total = 0.0, agree = 0.0;
  std::vector<double> rows(k, 0.0), cols(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (table[i].size() != k) throw std::invalid_argument("cohen_kappa: table is not square");
    for (std::size_t j = 0; j < k; ++j) {
      total += table[i][j];
      rows[i] += table[i][j];
      cols[j] += table[i][j];
    }
    agree += table[i][i];
  }
  if (total <= 0.0) throw std::invalid_argument("cohen_kappa: empty table");
  double po = agree / total;
  double pe = 0.0;
  for (std::size_t i = 0; i < k; ++i) pe += (rows[i] / total) * (cols[i] / total);
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

McNemarResult mcnemar(std::size_t b, std::size_t c) {
  if (b + c == 0) throw std::invalid_argument("mcnemar: no discordant pairs");
  double diff = std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
  McNemarResult r;
  r.statistic = diff * diff / static_cast<double>(b + c);
  // Chi-square with one degree of freedom: P(X > s) = erfc(sqrt(s / 2)).
  r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
  r.significant = r.statistic > kChiSquare95;
  return r;
}

McNemarResult mcnemar(const std::vector<bool>& correct_a, const std::vector<bool>& correct_b) {
  if (correct_a.size() != correct_b.size()) throw std::invalid_argument("mcnemar: decision lists differ in length");
  std::size_t b = 0, c = 0;
  for (std::size_t i = 0; i < correct_a.size(); ++i) {
    if (correct_a[i] && !correct_b[i]) ++b;
    if (!correct_a[i] && correct_b[i]) ++c;
  }
  return mcnemar(b, c);
}

}  // namespace namerec
