#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "gradcheck.hpp"
#include "namerec/crf.hpp"

using namespace namerec;
using namerec::nn::Matrix;
using gradcheck::random_matrix;

namespace {

// Exhaustive enumeration oracle, scoring each sequence from the definition.
struct Brute {
  double logZ = 0.0;
  std::vector<int> best;
  double best_score = -INFINITY;
  double total_prob = 0.0;
};

double score_by_definition(const Matrix& E, const Matrix& T, const std::vector<int>& y) {
  const int C = static_cast<int>(E.cols());
  double s = T(C, y[0]) + T(y.back(), C + 1);
  for (std::size_t t = 0; t < y.size(); ++t) s += E(static_cast<Eigen::Index>(t), y[t]);
  for (std::size_t t = 1; t < y.size(); ++t) s += T(y[t - 1], y[t]);
  return s;
}

Brute enumerate(const Matrix& E, const Matrix& T) {
  const int n = static_cast<int>(E.rows()), C = static_cast<int>(E.cols());
  std::vector<int> y(n, 0);
  std::vector<double> scores;
  std::vector<std::vector<int>> seqs;
  while (true) {
    seqs.push_back(y);
    scores.push_back(score_by_definition(E, T, y));
    int pos = n - 1;
    while (pos >= 0 && ++y[pos] == C) y[pos--] = 0;
    if (pos < 0) break;
  }
  Brute b;
  double m = *std::max_element(scores.begin(), scores.end());
  double acc = 0.0;
  for (double s : scores) acc += std::exp(s - m);
  b.logZ = m + std::log(acc);
  // Enumeration is in lexicographic order, so the first maximum is the lexicographically smallest.
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > b.best_score) {
      b.best_score = scores[i];
      b.best = seqs[i];
    }
    b.total_prob += std::exp(scores[i] - b.logZ);
  }
  return b;
}

}  // namespace

TEST_CASE("uniform potentials give the uniform distribution") {
  Matrix E = Matrix::Zero(4, 3), T = Matrix::Zero(5, 5);
  std::vector<int> y{0, 2, 1, 1};
  CHECK(crf::log_likelihood(E, T, y) == doctest::Approx(-4 * std::log(3.0)).epsilon(1e-14));
  auto g = crf::nll_gradient(E, T, y);
  for (Eigen::Index t = 0; t < 4; ++t)
    for (Eigen::Index c = 0; c < 3; ++c) {
      double onehot = y[t] == c ? 1.0 : 0.0;
      // d(-log p)/dE is the negation of onehot - uniform.
      CHECK(-g.d_emissions(t, c) == doctest::Approx(onehot - 1.0 / 3.0).epsilon(1e-12));
    }
  CHECK(std::abs(g.d_transitions.sum()) < 1e-12);
}

TEST_CASE("forward algorithm and viterbi match enumeration") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 1 + static_cast<int>(rng() % 6), C = 1 + static_cast<int>(rng() % 4);
    Matrix E = random_matrix(n, C, rng, 2.0), T = random_matrix(C + 2, C + 2, rng, 2.0);
    Brute b = enumerate(E, T);
    CHECK(std::abs(crf::log_partition(E, T) - b.logZ) < 1e-8);
    CHECK(std::abs(b.total_prob - 1.0) < 1e-8);
    auto v = crf::viterbi_decode(E, T);
    CHECK(v.path == b.best);
    CHECK(std::abs(v.score - b.best_score) < 1e-9);
    std::vector<int> y(n);
    for (auto& l : y) l = static_cast<int>(rng() % C);
    double ll = crf::log_likelihood(E, T, y);
    CHECK(std::abs(ll - (score_by_definition(E, T, y) - b.logZ)) < 1e-8);
    CHECK(ll <= 1e-12);
    CHECK(v.score >= score_by_definition(E, T, y) - 1e-9);
  }
}

TEST_CASE("viterbi ties go to the lowest index") {
  Matrix E = Matrix::Zero(3, 3), T = Matrix::Zero(5, 5);
  CHECK(crf::viterbi_decode(E, T).path == std::vector<int>{0, 0, 0});
  Matrix strong(3, 3);
  strong << 0, 5, 0, 9, 0, 0, 0, 0, 4;
  CHECK(crf::viterbi_decode(strong, T).path == std::vector<int>{1, 0, 2});
}

TEST_CASE("large potentials stay finite") {
  std::mt19937_64 rng(7);
  Matrix E = random_matrix(30, 4, rng) * 50.0, T = random_matrix(6, 6, rng) * 50.0;
  E = E.cwiseMax(-50.0).cwiseMin(50.0);
  T = T.cwiseMax(-50.0).cwiseMin(50.0);
  CHECK(std::isfinite(crf::log_partition(E, T)));
  auto g = crf::nll_gradient(E, T, std::vector<int>(30, 1));
  CHECK(g.d_emissions.allFinite());
  CHECK(g.d_transitions.allFinite());
}

TEST_CASE("marginals sum to one per position") {
  std::mt19937_64 rng(8);
  Matrix m = crf::marginals(random_matrix(6, 4, rng), random_matrix(6, 6, rng));
  CHECK((m.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("crf gradient matches finite differences") {
  std::mt19937_64 rng(10);
  nn::ParameterSet ps;
  auto head = crf::CrfHead::create(ps, "crf", 5, 4, rng);
  head.transitions->value = random_matrix(6, 6, rng);
  head.emission.b->value = random_matrix(1, 4, rng);
  nn::Parameter& F = ps.add("F", random_matrix(6, 5, rng));
  std::vector<int> y{0, 3, 3, 1, 2, 0};
  auto r = gradcheck::check(ps.all(), [&](nn::Tape& t) { return head.loss(t, t.param(F), y); });
  INFO(r.worst_param);
  CHECK(r.worst < 1e-4);
}

TEST_CASE("label errors") {
  Matrix E = Matrix::Zero(2, 3), T = Matrix::Zero(5, 5);
  CHECK_THROWS_AS(crf::log_likelihood(E, T, std::vector<int>{0, 3}), std::out_of_range);
  CHECK_THROWS_AS(crf::log_likelihood(E, T, std::vector<int>{0}), std::invalid_argument);
  CHECK_THROWS_AS(crf::log_partition(E, Matrix::Zero(4, 4)), std::invalid_argument);
}
