#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "gradcheck.hpp"
#include "namerec/checkpoint.hpp"
#include "namerec/cognn.hpp"
#include "namerec/optim.hpp"
#include "namerec/synth.hpp"
#include "temp_dir.hpp"

using namespace namerec;
using nn::Matrix;

namespace {

TokenLabel L(Bie b, Fml f, Fi i) { return TokenLabel::name(b, f, i); }
const TokenLabel O = TokenLabel::outside();

Sequence toy() {
  return {{"Dr", "Kalo", "Bernit", "."}, {O, L(Bie::Begin, Fml::First, Fi::Full), L(Bie::End, Fml::Last, Fi::Full), O}};
}

std::vector<Sequence> toy_set() {
  return {toy(),
          {{"Members", ":", "Mora", ",", "T.", "Lusa", "."},
           {O, O, L(Bie::Begin, Fml::Last, Fi::Full), O, L(Bie::Begin, Fml::First, Fi::Initial),
            L(Bie::End, Fml::Last, Fi::Full), O}},
          {{"Partners", ":", "Sovani", "Labs", "."}, {O, O, O, O, O}}};
}

CogNNConfig tiny(bool in_network = true) {
  CogNNConfig c;
  c.embed_dim = 4;
  c.hidden = 3;
  c.attention_dim = 3;
  c.dropout = 0.0;
  c.in_network = in_network;
  return c;
}

void randomize(nn::ParameterSet& ps, std::uint64_t seed, double sd = 0.5) {
  std::mt19937_64 rng(seed);
  for (auto* p : ps.all()) p->value = gradcheck::random_matrix(p->value.rows(), p->value.cols(), rng, sd);
}

double total_loss(const CogNN& m, const Sequence& s) {
  nn::Tape t;
  return m.loss(t, s).total.value()(0, 0);
}

std::vector<Sequence> grammar(std::uint64_t seed, std::size_t from, std::size_t to) {
  auto docs = synth_sentences(seed, to);
  std::vector<Sequence> out;
  for (std::size_t i = from; i < to; ++i)
    for (auto& s : sentences_of(materialize(docs[i]))) out.push_back(std::move(s));
  return out;
}

}  // namespace

TEST_CASE("cognn output shapes") {
  CogNN m(tiny(), build_word_vocab(toy_set(), 1), 1);
  for (int n : {1, 5, 40}) {
    std::vector<std::string> words(static_cast<std::size_t>(n), "Kalo");
    nn::Tape t;
    auto f = m.forward(t, words);
    CHECK(f.F.rows() == n);
    CHECK(f.F_form.rows() == n);
    CHECK(f.F.cols() == 6);
    CHECK(f.attention.weights.rows() == n);
    CHECK(m.predict(words).labels.size() == static_cast<std::size_t>(n));
  }
  nn::Tape t;
  CHECK_THROWS_AS(m.forward(t, {}), std::invalid_argument);
}

TEST_CASE("zeroed coattention gives uniform weights and finite features") {
  CogNN m(tiny(), build_word_vocab(toy_set(), 1), 2);
  auto& c = m.coattention();
  for (auto* p : {c.Wh, c.Wh2, c.bh2, c.Wp, c.bp}) p->value.setZero();
  nn::Tape t;
  auto f = m.forward(t, toy().words);
  CHECK((f.attention.weights.value().array() - 0.25).abs().maxCoeff() < 1e-15);
  CHECK(f.F.value().allFinite());
  CHECK(f.F_form.value().allFinite());
}

TEST_CASE("cognn end-to-end gradient check") {
  for (Axis axis : {Axis::Fml, Axis::Fi}) {
    auto cfg = tiny();
    cfg.form_axis = axis;
    CogNN m(cfg, build_word_vocab(toy_set(), 1), 3);
    randomize(m.params(), 4);
    Sequence s = toy();
    auto r = gradcheck::check(m.params().all(), [&](nn::Tape& t) { return m.loss(t, s).total; });
    INFO("worst parameter " << r.worst_param);
    CHECK(r.worst < 1e-3);
  }
  CogNN base(tiny(false), build_word_vocab(toy_set(), 1), 3);
  randomize(base.params(), 5);
  Sequence s = toy();
  CHECK(gradcheck::check(base.params().all(), [&](nn::Tape& t) { return base.loss(t, s).total; }).worst < 1e-3);
}

TEST_CASE("joint loss is the sum of both views") {
  CogNN m(tiny(), build_word_vocab(toy_set(), 1), 6);
  randomize(m.params(), 7);
  for (const auto& s : toy_set()) {
    nn::Tape t;
    auto l = m.loss(t, s);
    CHECK(l.total.value()(0, 0) == doctest::Approx(l.token.value()(0, 0) + l.form.value()(0, 0)).epsilon(1e-14));
    CHECK(l.token.value()(0, 0) >= 0.0);
    CHECK(l.form.value()(0, 0) >= 0.0);
  }

  // Uniform potentials: each view contributes n log 4 (BIE and FML both have four classes).
  for (const crf::CrfHead* h : {&m.token_head(), &m.form_head()}) {
    h->emission.W->value.setZero();
    h->emission.b->value.setZero();
    h->transitions->value.setZero();
  }
  Sequence s = toy();
  CHECK(total_loss(m, s) == doctest::Approx(2.0 * 4.0 * std::log(4.0)).epsilon(1e-12));

  Sequence unlabelled{{"a", "b"}, {}};
  nn::Tape t;
  CHECK_THROWS_AS(m.loss(t, unlabelled), std::invalid_argument);
}

TEST_CASE("either view's loss reaches both encoders through the attention") {
  CogNN m(tiny(), build_word_vocab(toy_set(), 1), 8);
  randomize(m.params(), 9);
  Sequence s = toy();
  auto grad_mass = [](const std::vector<nn::Parameter*>& ps) {
    double g = 0.0;
    for (auto* p : ps) g += p->grad.size() ? p->grad.cwiseAbs().sum() : 0.0;
    return g;
  };
  m.params().zero_grad();
  {
    nn::Tape t;
    t.backward(m.loss(t, s).token);
  }
  CHECK(grad_mass(m.form_network_encoder()) > 1e-9);
  CHECK(grad_mass(m.token_network_encoder()) > 1e-9);

  m.params().zero_grad();
  {
    nn::Tape t;
    t.backward(m.loss(t, s).form);
  }
  CHECK(grad_mass(m.token_network_encoder()) > 1e-9);

  // Without coupling the form network is cut off from the token loss.
  CogNN base(tiny(false), build_word_vocab(toy_set(), 1), 8);
  CHECK(base.form_network_encoder().empty());
}

TEST_CASE("one small step lowers the loss on its batch") {
  CogNN m(tiny(), build_word_vocab(toy_set(), 1), 10);
  auto data = toy_set();
  auto batch_loss = [&] {
    double l = 0;
    for (const auto& s : data) l += total_loss(m, s);
    return l;
  };
  double before = batch_loss();
  m.params().zero_grad();
  for (const auto& s : data) {
    nn::Tape t;
    t.backward(m.loss(t, s).total);
  }
  nn::Sgd{1e-3}.step(m.params().all());
  CHECK(batch_loss() < before);
}

TEST_CASE("training is deterministic and restores the best epoch") {
  auto train = grammar(3, 0, 12), dev = grammar(3, 12, 18);
  auto cfg = tiny();
  cfg.dropout = 0.3;
  TrainConfig tc;
  tc.max_epochs = 4;
  tc.batch_size = 4;
  tc.lr = 0.05;
  tc.seed = 9;
  auto run = [&] {
    CogNN m(cfg, build_word_vocab(train, 1), 4);
    auto r = train_cognn(m, train, dev, tc);
    std::vector<Matrix> values;
    for (auto* p : m.params().all()) values.push_back(p->value);
    return std::make_pair(metrics_csv(r.log), values);
  };
  auto a = run(), b = run();
  CHECK(a.first == b.first);
  REQUIRE(a.second.size() == b.second.size());
  for (std::size_t i = 0; i < a.second.size(); ++i) CHECK(a.second[i] == b.second[i]);

  CogNN m(cfg, build_word_vocab(train, 1), 4);
  auto r = train_cognn(m, train, dev, tc);
  CHECK(r.log.size() == 4);
  CHECK(r.best_epoch >= 1);
  CHECK(evaluate_cognn(m, dev).accuracy == doctest::Approx(r.best_accuracy).epsilon(1e-12));
  CHECK(metrics_csv(r.log).rfind("epoch,split,tokenP,tokenR,tokenF,nameF\n1,dev,", 0) == 0);

  CHECK_THROWS_AS(train_cognn(m, {}, dev, tc), std::invalid_argument);
  CHECK_THROWS_AS(train_cognn(m, train, {}, tc), std::invalid_argument);
}

TEST_CASE("a memorising model reproduces its training labels") {
  auto data = toy_set();
  auto cfg = tiny();
  cfg.hidden = 8;
  CogNN m(cfg, build_word_vocab(data, 1), 11);
  // Plain full-batch descent: train_cognn would restore the first epoch with perfect BIE accuracy.
  for (int epoch = 0; epoch < 300; ++epoch) {
    m.params().zero_grad();
    for (const auto& s : data) {
      nn::Tape t;
      t.backward(m.loss(t, s).total);
    }
    nn::Sgd{0.1}.step(m.params().all());
  }
  for (const auto& s : data) {
    auto p = m.predict(s.words);
    CHECK(p.bie_path == m.bie_targets(s.labels));
    CHECK(p.form_path == m.form_targets(s.labels));
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      CHECK(p.labels[i].project(Axis::Bie) == s.labels[i].project(Axis::Bie));
      CHECK(p.labels[i].project(Axis::Fml) == s.labels[i].project(Axis::Fml));
    }
    CHECK(p.spans == decode_spans(p.labels));
  }
}

TEST_CASE("predictions combine the two views") {
  CogNN m(tiny(), build_word_vocab(toy_set(), 1), 12);
  // Force Outside everywhere through the token head: huge bias on class 0.
  m.token_head().emission.b->value.setZero();
  m.token_head().emission.b->value(0, 0) = 1e3;
  auto p = m.predict(toy().words);
  CHECK(p.spans.empty());
  for (const auto& l : p.labels) CHECK(l.is_outside());

  // Force Begin in the token view and Last in the form view.
  m.token_head().emission.b->value.setZero();
  m.token_head().emission.b->value(0, 1) = 1e3;
  m.form_head().emission.b->value.setZero();
  m.form_head().emission.b->value(0, 3) = 1e3;
  p = m.predict({"x", "y"});
  REQUIRE(p.labels.size() == 2);
  CHECK(p.labels[0] == L(Bie::Begin, Fml::Last, Fi::Full));
  CHECK(p.spans.size() == 2);
}

TEST_CASE("config text round trip") {
  CogNNConfig m;
  TrainConfig t;
  parse_config_text("# comment\nhidden = 32\nform_axis = FI\nlr=0.05\nshared_embedding = true\nseed = 12\n", m, t);
  CHECK(m.hidden == 32);
  CHECK(m.form_axis == Axis::Fi);
  CHECK(m.shared_embedding);
  CHECK(t.lr == 0.05);
  CHECK(t.seed == 12);
  CogNNConfig m2;
  TrainConfig t2;
  parse_config_text(config_text(m, t), m2, t2);
  CHECK(config_text(m2, t2) == config_text(m, t));
  CHECK_THROWS_AS(parse_config_text("bogus = 1\n", m2, t2), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("hidden\n", m2, t2), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("form_axis = BIE\n", m2, t2), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("patience = 0\n", m2, t2), std::invalid_argument);
}

TEST_CASE("cognn checkpoint round trip") {
  TempDir tmp;
  auto cfg = tiny();
  cfg.form_axis = Axis::Fi;
  CogNN m(cfg, build_word_vocab(toy_set(), 1), 13);
  randomize(m.params(), 14);
  auto path = tmp.path() / "model.ckpt";
  m.save(path);
  CogNN back = CogNN::load(path);
  CHECK(back.config().form_axis == Axis::Fi);
  CHECK(back.vocabulary().pieces() == m.vocabulary().pieces());
  auto a = m.params().all();
  auto b = back.params().all();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value == b[i]->value);
  }
  for (const auto& s : toy_set()) CHECK(back.predict(s.words).labels == m.predict(s.words).labels);
}

TEST_CASE("checkpoint container errors") {
  TempDir tmp;
  nn::ParameterSet ps;
  ps.add("w", Matrix::Constant(2, 3, 1.5));
  auto path = tmp.path() / "c.ckpt";
  save_checkpoint(path, {{"model", "x"}}, ps);
  auto c = load_checkpoint(path);
  CHECK(c.header["model"] == "x");
  REQUIRE(c.tensors.size() == 1);
  CHECK(c.tensors[0].second == Matrix::Constant(2, 3, 1.5));

  nn::ParameterSet other;
  other.add("w", Matrix::Zero(3, 2));
  CHECK_THROWS_AS(apply_checkpoint(c, other), std::runtime_error);
  nn::ParameterSet missing;
  missing.add("v", Matrix::Zero(2, 3));
  CHECK_THROWS_AS(apply_checkpoint(c, missing), std::runtime_error);

  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 4);
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  CHECK_THROWS_AS(CogNN::load(path), std::runtime_error);
}

TEST_CASE("optimisers") {
  nn::ParameterSet ps;
  auto& p = ps.add("x", Matrix::Constant(1, 2, 3.0));
  nn::Adam adam(0.1);
  for (int i = 0; i < 500; ++i) {
    p.grad = 2.0 * p.value;  // gradient of |x|^2
    adam.step(ps.all());
  }
  CHECK(p.value.norm() < 1e-2);

  p.grad = Matrix::Constant(1, 2, 3.0);
  nn::Sgd{0.5}.step(ps.all());
  p.grad = Matrix::Constant(1, 2, 4.0);
  double before = nn::clip_grad_norm(ps.all(), 1.0);
  CHECK(before == doctest::Approx(std::sqrt(32.0)));
  CHECK(nn::grad_norm(ps.all()) == doctest::Approx(1.0));

  p.trainable = false;
  Matrix frozen = p.value;
  nn::Sgd{1.0}.step(ps.all());
  CHECK(p.value == frozen);
}
