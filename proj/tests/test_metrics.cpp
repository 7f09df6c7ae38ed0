#include <stdexcept>
#include <random>

#include "doctest.h"
#include "namerec/metrics.hpp"

using namespace namerec;

TEST_CASE("token_prf fixtures") {
  std::vector<std::string> gold{"O", "N", "N", "N", "N", "O"};
  std::vector<std::string> pred{"N", "N", "N", "N", "O", "O"};
  auto r = token_prf(pred, gold, TokenMode::SpanOnly);
  CHECK(r.tp == 3);
  CHECK(r.precision == 0.75);
  CHECK(r.recall == 0.75);
  CHECK(r.f1 == 0.75);
  auto same = token_prf(gold, gold, TokenMode::FineGrained);
  CHECK(same.f1 == 1.0);
  std::vector<std::string> outside(6, "O");
  auto empty = token_prf(outside, gold, TokenMode::SpanOnly);
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.f1 == 0.0);
  CHECK_THROWS_AS(token_prf(std::vector<std::string>{"O"}, gold, TokenMode::SpanOnly), std::invalid_argument);
}

TEST_CASE("fine-grained mismatch counts once as fp and once as fn") {
  std::vector<std::string> gold{"Begin_First_Full", "End_Last_Full"};
  std::vector<std::string> pred{"Begin_First_Full", "End_Last_Initial"};
  auto r = token_prf(pred, gold, TokenMode::FineGrained);
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(token_prf(pred, gold, TokenMode::SpanOnly).f1 == 1.0);
}

TEST_CASE("token_prf swaps precision and recall under argument swap") {
  std::mt19937_64 rng(4);
  const std::vector<std::string> classes{"O", "O", "A", "B"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> a, b;
    for (int i = 0; i < 12; ++i) {
      a.push_back(classes[rng() % 4]);
      b.push_back(classes[rng() % 4]);
    }
    for (auto mode : {TokenMode::SpanOnly, TokenMode::FineGrained}) {
      auto ab = token_prf(a, b, mode), ba = token_prf(b, a, mode);
      CHECK(ab.precision == ba.recall);
      CHECK(ab.recall == ba.precision);
    }
  }
}

TEST_CASE("name_prf fixture") {
  std::vector<NameSpan> gold{{0, 1, std::nullopt}, {5, 6, std::nullopt}};
  std::vector<NameSpan> pred{{0, 1, std::nullopt}, {5, 5, std::nullopt}};
  auto r = name_prf(pred, gold);
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == 0.5);
  CHECK(name_prf(gold, gold).f1 == 1.0);
  CHECK(name_prf(std::vector<NameSpan>{}, gold).f1 == 0.0);
}

TEST_CASE("strict name matching never exceeds span matching") {
  using Forms = std::vector<std::pair<Fml, Fi>>;
  std::vector<NameSpan> gold{{0, 1, Forms{{Fml::First, Fi::Full}, {Fml::Last, Fi::Full}}}};
  std::vector<NameSpan> pred{{0, 1, Forms{{Fml::Last, Fi::Full}, {Fml::First, Fi::Full}}}};
  CHECK(name_prf(pred, gold, false).tp == 1);
  CHECK(name_prf(pred, gold, true).tp == 0);
}

TEST_CASE("cohen kappa") {
  std::vector<std::vector<double>> table{{20, 5}, {10, 15}};
  CHECK(cohen_kappa(table) == doctest::Approx(0.4).epsilon(1e-12));
  // Same table from raw sequences.
  std::vector<std::string> a, b;
  auto push = [&](const char* x, const char* y, int n) {
    for (int i = 0; i < n; ++i) {
      a.push_back(x);
      b.push_back(y);
    }
  };
  push("N", "N", 20);
  push("N", "O", 5);
  push("O", "N", 10);
  push("O", "O", 15);
  CHECK(cohen_kappa(a, b) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(cohen_kappa(a, a) == 1.0);
  std::vector<std::string> constant(5, "O");
  CHECK(cohen_kappa(constant, constant) == 1.0);
  // Consistent relabelling leaves kappa unchanged.
  std::vector<std::string> a2, b2;
  for (auto& s : a) a2.push_back(s == "N" ? "Z" : "Y");
  for (auto& s : b) b2.push_back(s == "N" ? "Z" : "Y");
  CHECK(cohen_kappa(a2, b2) == doctest::Approx(cohen_kappa(a, b)).epsilon(1e-12));
  CHECK_THROWS_AS(cohen_kappa(std::vector<std::string>{}, std::vector<std::string>{}), std::invalid_argument);
}

TEST_CASE("mcnemar") {
  auto r = mcnemar(10, 2);
  CHECK(r.statistic == doctest::Approx(49.0 / 12.0).epsilon(1e-12));
  CHECK(r.significant);
  CHECK(r.p_value < 0.05);
  auto eq = mcnemar(4, 4);
  CHECK(eq.statistic == doctest::Approx(1.0 / 8.0));
  CHECK_FALSE(eq.significant);
  CHECK(mcnemar(1, 0).statistic == 0.0);
  CHECK_FALSE(mcnemar(1, 0).significant);
  CHECK_THROWS_AS(mcnemar(0, 0), std::invalid_argument);
  std::vector<bool> x{true, true, false, true}, y{false, true, true, false};
  CHECK(mcnemar(x, y).statistic == doctest::Approx(0.0));
}
