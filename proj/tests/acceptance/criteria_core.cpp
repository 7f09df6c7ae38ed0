// Criteria that need no training: CRF oracle, gradients, chunking, context flow, metrics, labels
// and annotation operations.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "../gradcheck.hpp"
#include "../temp_dir.hpp"
#include "acceptance.hpp"
#include "namerec/annotate.hpp"
#include "namerec/chunker.hpp"
#include "namerec/crf.hpp"
#include "namerec/isbert.hpp"
#include "namerec/labels.hpp"
#include "namerec/metrics.hpp"
#include "namerec/synth.hpp"

namespace acceptance {

using namespace namerec;
using nn::Matrix;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Sequence score written out from the definition: start, emissions, pair transitions, stop.
double score_by_definition(const Matrix& E, const Matrix& T, const std::vector<int>& y) {
  const int C = static_cast<int>(E.cols());
  double s = T(C, y[0]) + T(y.back(), C + 1);
  for (std::size_t t = 0; t < y.size(); ++t) s += E(static_cast<Eigen::Index>(t), y[t]);
  for (std::size_t t = 1; t < y.size(); ++t) s += T(y[t - 1], y[t]);
  return s;
}

}  // namespace

Outcome crf_oracle() {
  auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  double worst_ll = 0.0;
  int path_mismatches = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const int n = 1 + static_cast<int>(rng() % 6), C = 1 + static_cast<int>(rng() % 4);
    Matrix E = gradcheck::random_matrix(n, C, rng, 2.0);
    Matrix T = gradcheck::random_matrix(C + 2, C + 2, rng, 2.0);
    // Enumerate all C^n sequences.
    std::vector<int> y(n, 0);
    std::vector<std::vector<int>> seqs;
    std::vector<double> scores;
    for (;;) {
      seqs.push_back(y);
      scores.push_back(score_by_definition(E, T, y));
      int pos = n - 1;
      while (pos >= 0 && ++y[pos] == C) y[pos--] = 0;
      if (pos < 0) break;
    }
    double m = *std::max_element(scores.begin(), scores.end());
    double acc = 0.0;
    for (double s : scores) acc += std::exp(s - m);
    double logZ = m + std::log(acc);
    std::size_t best = std::max_element(scores.begin(), scores.end()) - scores.begin();
    // Gold sequence drawn at random; compare its log-probability.
    const auto& gold = seqs[rng() % seqs.size()];
    double oracle = score_by_definition(E, T, gold) - logZ;
    worst_ll = std::max(worst_ll, std::abs(crf::log_likelihood(E, T, gold) - oracle));
    if (crf::viterbi_decode(E, T).path != seqs[best]) ++path_mismatches;
  }
  double secs = since(t0);
  bool pass = worst_ll <= 1e-8 && path_mismatches == 0 && secs < 10.0;
  return {pass, fmt("max |loglik - oracle| = %.2e, viterbi mismatches = %.0f of 200, %.2fs (limit 10s)", worst_ll,
                    path_mismatches, secs)};
}

Outcome gradient_suite() {
  using gradcheck::random_matrix;
  using gradcheck::weighted_sum;
  using nn::Parameter;
  using nn::ParameterSet;
  using nn::Tape;
  auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  std::vector<std::pair<std::string, double>> errors;
  bool pass = true;
  auto record = [&](const std::string& name, double err, double tol) {
    errors.emplace_back(name, err);
    pass = pass && err < tol;
  };
  {
    ParameterSet ps;
    Parameter& table = ps.add("table", random_matrix(6, 4, rng));
    std::vector<int> ids{1, 5, 1, 0};
    Matrix cases = nn::case_matrix(std::vector<std::string>{"Doe", "van", "USA", "x"});
    record("embed", gradcheck::check({&table}, [&](Tape& t) { return weighted_sum(nn::embed(t, table, ids, cases), 1); }).worst, 1e-4);
  }
  {
    ParameterSet ps;
    auto enc = nn::BiLstm::create(ps, "enc", 4, 3, rng);
    Parameter& x = ps.add("x", random_matrix(5, 4, rng));
    record("birnn_encode", gradcheck::check(ps.all(), [&](Tape& t) { return weighted_sum(enc(t, t.param(x)), 2); }).worst, 1e-4);
  }
  {
    ParameterSet ps;
    auto co = nn::Coattention::create(ps, "co", 4, 6, 5, rng);
    co.bh2->value = random_matrix(1, 5, rng);
    co.bp->value = random_matrix(1, 1, rng);
    Parameter& H = ps.add("H", random_matrix(7, 4, rng));
    Parameter& H2 = ps.add("H2", random_matrix(7, 6, rng));
    record("coattention", gradcheck::check(ps.all(), [&](Tape& t) {
             auto out = co(t, t.param(H), t.param(H2));
             return nn::sum(weighted_sum(out.H_tilde, 3) + weighted_sum(out.H2_tilde, 4));
           }).worst, 1e-4);
  }
  {
    ParameterSet ps;
    auto gf = nn::GatedFusion::create(ps, "gf", 4, rng);
    gf.bt->value = random_matrix(1, 4, rng);
    gf.bh->value = random_matrix(1, 4, rng);
    Parameter& H = ps.add("H", random_matrix(6, 4, rng));
    Parameter& Ht = ps.add("Ht", random_matrix(6, 4, rng));
    record("gated_fusion", gradcheck::check(ps.all(), [&](Tape& t) { return weighted_sum(gf(t, t.param(H), t.param(Ht)), 5); }).worst, 1e-4);
  }
  {
    ParameterSet ps;
    nn::TransformerEncoder enc(ps, "tf", nn::TransformerConfig{2, 2, 16, 4, 12}, rng);
    for (Parameter* p : ps.all())
      if (p->name.find(".ln") != std::string::npos || p->name.ends_with(".b")) p->value += 0.1 * random_matrix(1, p->value.cols(), rng);
    Parameter& x = ps.add("x", random_matrix(6, 16, rng));
    record("transformer_encode", gradcheck::check(ps.all(), [&](Tape& t) { return weighted_sum(enc(t, t.param(x)), 6); }).worst, 1e-3);
  }
  {
    ParameterSet ps;
    auto lin = nn::Linear::create(ps, "lin", 5, 3, rng);
    lin.b->value = random_matrix(1, 3, rng);
    Parameter& x = ps.add("x", random_matrix(4, 5, rng));
    record("linear_project", gradcheck::check(ps.all(), [&](Tape& t) { return weighted_sum(lin(t, t.param(x)), 7); }).worst, 1e-4);
  }
  {
    ParameterSet ps;
    auto head = crf::CrfHead::create(ps, "crf", 5, 4, rng);
    head.transitions->value = random_matrix(6, 6, rng);
    head.emission.b->value = random_matrix(1, 4, rng);
    Parameter& F = ps.add("F", random_matrix(6, 5, rng));
    std::vector<int> y{0, 3, 3, 1, 2, 0};
    record("crf_loss_grad", gradcheck::check(ps.all(), [&](Tape& t) { return head.loss(t, t.param(F), y); }).worst, 1e-4);
  }
  double secs = since(t0);
  pass = pass && secs < 60.0;
  std::string detail;
  for (const auto& [name, err] : errors) detail += name + fmt(" %.1e, ", err);
  return {pass, detail + fmt("%.1fs (limit 60s)", secs)};
}

Outcome chunker_round_trip() {
  std::mt19937_64 rng(3141);
  std::uniform_real_distribution<double> ratio(0.0, 0.9);
  int ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t cap = 4 + rng() % 125;
    std::size_t n = rng() % 600;
    PieceStream s;
    for (std::size_t i = 0; i < n; ++i) s.pieces.push_back("w" + std::to_string(rng() % 80));
    for (std::size_t e = 0; e < n;) {
      e = std::min(n, e + 1 + rng() % 60);
      s.sentence_ends.push_back(e);
    }
    if (s.sentence_ends.empty()) s.sentence_ends.push_back(0);
    double r = trial % 5 == 0 ? 0.0 : ratio(rng);
    // A chunk must hold its overlap plus one new piece even when every piece ends a sentence and so
    // costs a separator; ratios beyond that are rejected by the chunker, so the generator avoids them.
    if (2 * (effective_overlap(r, cap) + 1) + 1 > cap) r = 0.0;
    auto cd = chunk_document(s, cap, OverlapPolicy::fixed(r));
    if (reassemble(cd) == s.pieces) ++ok;
  }
  PieceStream big;
  for (int i = 0; i < 3000; ++i) big.pieces.push_back("p" + std::to_string(i));
  big.sentence_ends = {3000};
  auto cd = chunk_document(big, 512, OverlapPolicy::fixed(0.5));
  bool shares = cd.effective_k == 256 && cd.chunks.size() > 2;
  for (std::size_t i = 1; i < cd.chunks.size(); ++i)
    shares = shares && cd.chunks[i - 1].content_end - cd.chunks[i].content_begin == 256 && cd.chunks[i].overlap_prev == 256;
  return {ok == 1000 && shares,
          fmt("%.0f of 1000 round trips exact; capacity 512 ratio 0.5 -> k = %.0f over %.0f chunks", ok,
              static_cast<double>(cd.effective_k), static_cast<double>(cd.chunks.size()))};
}

Outcome context_propagation() {
  // Tiny randomly initialised model; the invariants are structural, so training is irrelevant.
  SynthParams sp;
  sp.num_docs = 50;
  sp.min_sections = 2;
  sp.max_sections = 4;
  auto raw = synth_generate(99, sp);
  std::vector<LabeledDocument> docs;
  for (const auto& d : raw) docs.push_back(materialize(d));
  Vocabulary vocab = build_piece_vocab(docs, 500, 1);

  auto make = [&](double ratio, int hops) {
    IsConfig c;
    c.encoder = nn::TransformerConfig{1, 2, 8, 2, 16};
    c.capacity = 16;
    c.policy = OverlapPolicy::fixed(ratio);
    c.hops = hops;
    c.dropout = 0.0;
    return IsBert(c, vocab, 5);
  };
  IsBert zero1 = make(0.0, 1), zero2 = make(0.0, 2), half = make(0.5, 1);

  auto max_diff = [](const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); };
  int zero_ok = 0, forward_ok = 0, backward_ok = 0, tested = 0;
  double min_fwd = INFINITY, min_bwd = INFINITY, worst_zero = 0.0;
  std::mt19937_64 rng(8);
  for (const auto& doc : docs) {
    // k = 0: a perturbation in chunk i leaves every other chunk bit-identical, for one and two hops.
    bool zero_pass = true;
    for (IsBert* m : {&zero1, &zero2}) {
      auto prep = m->prepare(doc);
      const std::size_t M = prep.chunks.chunks.size();
      if (M < 3) {
        zero_pass = false;
        break;
      }
      std::size_t i = M / 2;
      nn::Tape t;
      auto E = m->embed(t, prep);
      std::vector<nn::Var> E2;
      for (std::size_t j = 0; j < M; ++j) {
        Matrix v = E[j].value();
        if (j == i) v += gradcheck::random_matrix(v.rows(), v.cols(), rng);
        E2.push_back(t.constant(v));
      }
      auto a = m->multi_hop(t, E, prep.chunks, m->config().hops);
      auto b = m->multi_hop(t, E2, prep.chunks, m->config().hops);
      for (std::size_t j = 0; j < M; ++j) {
        if (j == i) continue;
        double d = max_diff(a[j].value(), b[j].value());
        worst_zero = std::max(worst_zero, d);
        zero_pass = zero_pass && d == 0.0;
      }
    }
    // k > 0: perturbing the last content row of chunk i reaches chunk i + 1 through the forward sweep
    // and chunk i - 1 only through the backward sweep (its forward block is untouched).
    auto prep = half.prepare(doc);
    const std::size_t M = prep.chunks.chunks.size();
    if (M < 3) continue;
    ++tested;
    zero_ok += zero_pass;
    std::size_t i = M / 2, k = prep.chunks.effective_k;
    nn::Tape t;
    auto E = half.embed(t, prep);
    std::vector<nn::Var> E2;
    for (std::size_t j = 0; j < M; ++j) {
      Matrix v = E[j].value();
      if (j == i) {
        auto pos = prep.chunks.chunks[j].content_positions();
        v.row(static_cast<Eigen::Index>(pos.back())) += gradcheck::random_matrix(1, v.cols(), rng);
      }
      E2.push_back(t.constant(v));
    }
    auto fa = half.forward_pass(t, E, prep.chunks, k), fb = half.forward_pass(t, E2, prep.chunks, k);
    auto ba = half.backward_pass(t, fa, prep.chunks, k), bb = half.backward_pass(t, fb, prep.chunks, k);
    double fwd = max_diff(fa[i + 1].value(), fb[i + 1].value());
    double prev_fw = max_diff(fa[i - 1].value(), fb[i - 1].value());
    double bwd = max_diff(ba[i - 1].value(), bb[i - 1].value());
    min_fwd = std::min(min_fwd, fwd);
    min_bwd = std::min(min_bwd, bwd);
    forward_ok += fwd > 1e-9;
    backward_ok += bwd > 1e-9 && prev_fw == 0.0;
  }
  bool pass = tested == 50 && zero_ok == 50 && forward_ok == 50 && backward_ok == 50;
  return {pass, fmt("%.0f docs; k=0 isolated %.0f (max cross-chunk |d| %.1e); ", tested, zero_ok, worst_zero) +
                    fmt("forward reach %.0f (min %.1e); backward reach %.0f (min %.1e)", forward_ok, min_fwd,
                        backward_ok, min_bwd)};
}

Outcome metrics_exactness() {
  std::vector<std::string> gold{"O", "N", "N", "N", "N", "O"};
  std::vector<std::string> pred{"N", "N", "N", "N", "O", "O"};
  auto tok = token_prf(pred, gold, TokenMode::SpanOnly);
  bool tok_ok = tok.precision == 0.75 && tok.recall == 0.75 && tok.f1 == 0.75 && tok.tp == 3;

  std::vector<NameSpan> g{{0, 1, std::nullopt}, {5, 6, std::nullopt}}, p{{0, 1, std::nullopt}, {5, 5, std::nullopt}};
  auto nm = name_prf(p, g);
  bool name_ok = nm.tp == 1 && nm.fp == 1 && nm.fn == 1 && nm.precision == 0.5 && nm.recall == 0.5 && nm.f1 == 0.5;

  // Kappa from the table and from the expanded sequences: p_o = 0.7, p_e = 0.5.
  double k_table = cohen_kappa(std::vector<std::vector<double>>{{20, 5}, {10, 15}});
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
  double k_seq = cohen_kappa(a, b);
  double expected_k = (0.7 - 0.5) / (1 - 0.5);
  bool kappa_ok = std::abs(k_table - expected_k) < 1e-12 && std::abs(k_seq - expected_k) < 1e-12 &&
                  cohen_kappa(a, a) == 1.0;

  auto mc = mcnemar(10, 2);
  bool mc_ok = std::abs(mc.statistic - 49.0 / 12.0) < 1e-12 && mc.significant;
  return {tok_ok && name_ok && kappa_ok && mc_ok,
          fmt("token P/R/F %.2f/%.2f/%.2f, name P/R/F %.2f/", tok.precision, tok.recall, tok.f1, nm.precision) +
              fmt("%.2f/%.2f, kappa %.12f, mcnemar %.6f", nm.recall, nm.f1, k_table, mc.statistic)};
}

Outcome label_algebra() {
  std::size_t early = build_label_space(LabelScheme::early()).size();
  std::size_t bie = build_label_space(LabelScheme::no_fusion(Axis::Bie)).size();
  std::size_t fml = build_label_space(LabelScheme::no_fusion(Axis::Fml)).size();
  std::size_t fi = build_label_space(LabelScheme::no_fusion(Axis::Fi)).size();
  // Every ordered pair of non-Outside early classes.
  long long pairs = static_cast<long long>(early - 1) * static_cast<long long>(early - 1);

  // merge_late against connected components of the union of marked tokens, exhaustively.
  int mismatches = 0;
  for (int mask = 0; mask < (1 << 15); ++mask) {
    std::vector<std::vector<int>> preds(3, std::vector<int>(5, 0));
    for (int ax = 0; ax < 3; ++ax)
      for (int t = 0; t < 5; ++t)
        if (mask >> (ax * 5 + t) & 1) preds[ax][t] = 1 + (ax + t) % 3;
    std::vector<std::pair<int, int>> want;
    int start = -1;
    for (int t = 0; t <= 5; ++t) {
      bool marked = t < 5 && (preds[0][t] || preds[1][t] || preds[2][t]);
      if (marked && start < 0) start = t;
      if (!marked && start >= 0) {
        want.emplace_back(start, t - 1);
        start = -1;
      }
    }
    auto got = merge_late(preds);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
      same = got[i].start_token == want[i].first && got[i].end_token == want[i].second;
    mismatches += !same;
  }
  bool pass = early == 19 && bie == 4 && fml == 4 && fi == 3 && pairs == 324 && early_name_combinations(2) == 324 &&
              mismatches == 0;
  return {pass, fmt("spaces %.0f/%.0f/%.0f/", early, bie, fml) +
                    fmt("%.0f, two-token combinations %.0f, merge_late mismatches %.0f of 32768", fi,
                        static_cast<double>(early_name_combinations(2)), mismatches)};
}

Outcome annotation_ops() {
  const fs::path fx = NAMEREC_FIXTURES;
  std::vector<std::string> failures;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  };

  // index
  AnnotatedDocument plain{"d", "John Doe met Doe . Doesn't matter , said doe .", {}};
  expect(index_positions(plain, "Doe") == std::vector<std::size_t>{5, 13}, "index case-sensitive");
  expect(index_positions(plain, "Doe", true) == std::vector<std::size_t>{5, 13, 41}, "index case-insensitive");
  AnnotatedDocument uni{"d", "Zoë Ñuñez and Ñuñez Ñuñez", {}};
  expect(index_positions(uni, "Ñuñez") == std::vector<std::size_t>{4, 14, 20}, "index code points");

  // mask
  auto corpus = read_corpus(fx / "corpus");
  expect(corpus.size() == 3, "fixture corpus size");
  expect(mask(corpus[0]) == "Dr ANNOTATED is a Professor at Sovani .\nMembers :\nANNOTATED ANNOTATED , ANNOTATED .\n",
         "mask alpha");

  // validate
  for (const auto& d : corpus) expect(validate(d).ok(), "validate " + d.doc_id);
  auto broken = read_corpus(fx / "broken", false);
  auto rep = validate(broken.at(0));
  expect(rep.violations.size() == 1 && rep.violations[0].kind == ViolationKind::IncompleteForm, "validate broken");
  auto shifted = corpus[0];
  shifted.records[0].positions[0] += 1;
  auto r2 = validate(shifted);
  expect(r2.violations.size() == 1 && r2.violations[0].kind == ViolationKind::PositionMismatch, "validate shifted");

  // compare
  auto a = read_corpus(fx / "disagree" / "annotator_a").at(0);
  auto b = read_corpus(fx / "disagree" / "annotator_b").at(0);
  auto dis = compare(a, b);
  expect(dis.size() == 2 && dis[0].kind == DisagreementKind::SpanOnlyInB && dis[0].text == "Joon-gi L" &&
             dis[1].kind == DisagreementKind::FormMismatch && dis[1].span == CharSpan{41, 49},
         "compare fixture");
  expect(compare(a, a).empty(), "compare self");

  // group_label
  AnnotatedDocument gl{"d", "Doe J and Joon-gi L wrote with Smith , K. and Lee , M. .", {}};
  auto r = group_label(gl, "Full Initial", {"Begin_Last_Full", "End_First_Initial"});
  expect(r.applied.size() == 2 && r.doc.records.size() == 2 && r.doc.records[1].text == "Joon-gi L" &&
             validate(r.doc).ok(),
         "group_label Full Initial");
  auto c = group_label(gl, "X, Y.", {"Begin_Last_Full", "End_First_Initial"});
  expect(c.applied.size() == 2 && c.doc.records[0].text == "Smith , K.", "group_label X, Y.");
  AnnotatedDocument pre{"d", "Doe J and Roe K .", {{"Doe", {0}, {"Begin_Last_Full"}, {}}}};
  auto s = group_label(pre, "Full Initial", {"Begin_Last_Full", "End_First_Initial"});
  expect(s.skipped.size() == 1 && s.applied.size() == 1 && s.applied[0] == CharSpan{10, 15}, "group_label skip");

  // Corpus round trip over 100 generator seeds: read equals written, and a rewrite is byte-identical.
  TempDir tmp;
  SynthParams sp;
  sp.num_docs = 3;
  int round_trips = 0;
  auto bytes = [](const fs::path& dir) {
    std::string all;
    for (const auto& d : read_corpus(dir)) all += d.doc_id + '\0' + d.text + '\0' + sidecar_json(d);
    return all;
  };
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto docs = synth_generate(seed, sp);
    fs::path d1 = tmp.path() / ("a" + std::to_string(seed)), d2 = tmp.path() / ("b" + std::to_string(seed));
    write_corpus(docs, d1);
    auto back = read_corpus(d1);
    write_corpus(back, d2);
    bool files_equal = true;
    for (const auto& doc : docs)
      for (auto f : {kTextFile, kSidecarFile}) {
        std::ifstream x(d1 / doc.doc_id / std::string(f), std::ios::binary), y(d2 / doc.doc_id / std::string(f), std::ios::binary);
        std::stringstream sx, sy;
        sx << x.rdbuf();
        sy << y.rdbuf();
        files_equal = files_equal && sx.str() == sy.str();
      }
    if (back == docs && files_equal && bytes(d1) == bytes(d2)) ++round_trips;
  }
  expect(round_trips == 100, "corpus round trip");

  std::string detail = fmt("%.0f of 100 corpus round trips; ", round_trips);
  if (failures.empty()) return {true, detail + "all fixtures match"};
  for (const auto& f : failures) detail += "failed: " + f + "; ";
  return {false, detail};
}

}  // namespace acceptance
