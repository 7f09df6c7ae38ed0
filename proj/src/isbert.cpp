#include "namerec/isbert.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "namerec/checkpoint.hpp"
#include "namerec/metrics.hpp"
#include "namerec/optim.hpp"

namespace namerec {

using nn::Matrix;
using nn::Tape;
using nn::Var;

std::string_view to_string(OverlapOwner o) {
  switch (o) {
    case OverlapOwner::First: return "first";
    case OverlapOwner::Last: return "last";
    case OverlapOwner::Average: return "average";
  }
  return "last";
}

std::optional<OverlapOwner> parse_owner(std::string_view s) {
  if (s == "first") return OverlapOwner::First;
  if (s == "last") return OverlapOwner::Last;
  if (s == "average") return OverlapOwner::Average;
  return std::nullopt;
}

void IsConfig::validate() const {
  policy.validate();
  if (hops < 1) throw std::invalid_argument("hops must be at least 1");
  if (capacity < 4) throw std::invalid_argument("capacity must be at least 4");
  if (encoder.d_model <= 3) throw std::invalid_argument("d_model must exceed the 3 case bits");
  if (encoder.heads < 1 || encoder.d_model % encoder.heads != 0)
    throw std::invalid_argument("d_model must be a multiple of heads");
  if (encoder.layers < 1 || encoder.ff_mult < 1) throw std::invalid_argument("layers and ff_mult must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
  // The largest ratio the policy can pick must leave room to advance.
  double worst = 0.0;
  if (const auto* f = std::get_if<FixedOverlap>(&policy.mode))
    worst = f->ratio;
  else
    for (double r : std::get<AdaptiveOverlap>(policy.mode).ratios) worst = std::max(worst, r);
  if (effective_overlap(worst, capacity) + 3 > capacity)
    throw std::invalid_argument("overlap leaves no room for new pieces at this capacity");
}

Vocabulary build_piece_vocab(const std::vector<LabeledDocument>& docs, std::size_t max_words, std::size_t min_count) {
  std::vector<std::string> words;
  for (const auto& d : docs)
    for (const auto& t : d.tokens) words.push_back(t.text);
  Vocabulary base = Vocabulary::build(words, max_words, min_count);
  std::vector<std::string> pieces(base.pieces().begin() + 1, base.pieces().end());
  for (std::string_view s : {kClsToken, kContinuationToken, kSepToken})
    if (!base.contains(s)) pieces.emplace_back(s);
  return Vocabulary(base.unknown_piece(), std::move(pieces));
}

IsBert::IsBert(const IsConfig& cfg, Vocabulary pieces, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(pieces)), space_(build_label_space(LabelScheme::early())) {
  cfg_.encoder.max_len = static_cast<int>(cfg_.capacity);
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const auto d = static_cast<Eigen::Index>(cfg_.encoder.d_model);
  table_ = &params_.add("embedding", nn::uniform_matrix(static_cast<Eigen::Index>(vocab_.size()), d - 3, 0.1, rng));
  encoder_ = nn::TransformerEncoder(params_, "encoder", cfg_.encoder, rng);
  out_ = nn::Linear::create(params_, "output", d, static_cast<Eigen::Index>(space_.size()), rng);
}

PreparedDocument IsBert::prepare(const LabeledDocument& doc) const {
  PreparedDocument p;
  TokenizedDocument td = tokenize_tokens(doc.tokens, vocab_);
  p.parents = td.parents();
  p.token_count = doc.tokens.size();
  PieceStream stream = to_piece_stream(td, doc.sentence_ends);
  p.chunks = chunk_document(stream, cfg_.capacity, cfg_.policy, doc.doc_id);

  std::vector<int> piece_targets;
  const bool labelled = !doc.labels.empty();
  if (labelled) {
    if (doc.labels.size() != doc.tokens.size()) throw std::invalid_argument("labels and tokens differ in length");
    for (int parent : p.parents) {
      int c = class_index(space_, doc.labels[static_cast<std::size_t>(parent)].str());
      if (c < 0) throw std::invalid_argument("label outside the early-fused space");
      piece_targets.push_back(c);
    }
  }
  for (const Chunk& c : p.chunks.chunks) {
    std::vector<int> ids, targets;
    for (std::size_t i = 0; i < c.pieces.size(); ++i) {
      ids.push_back(vocab_.id(c.pieces[i]));
      if (labelled) targets.push_back(c.source[i] < 0 ? -1 : piece_targets[static_cast<std::size_t>(c.source[i])]);
    }
    p.ids.push_back(std::move(ids));
    p.cases.push_back(nn::case_matrix(c.pieces));
    p.targets.push_back(std::move(targets));
  }
  return p;
}

std::vector<Var> IsBert::embed(Tape& t, const PreparedDocument& d, std::mt19937_64* rng) const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < d.ids.size(); ++i) {
    Var e = nn::embed(t, *table_, d.ids[i], d.cases[i]);
    out.push_back(rng ? nn::dropout(e, cfg_.dropout, *rng) : e);
  }
  return out;
}

Var IsBert::encode(Tape& t, Var x) const { return encoder_(t, x); }

namespace {

void check_blocks(const std::vector<Var>& blocks, const ChunkedDocument& cd, std::size_t k) {
  if (blocks.size() != cd.chunks.size()) throw ChunkError("block count differs from chunk count");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Chunk& c = cd.chunks[i];
    if (static_cast<std::size_t>(blocks[i].rows()) != c.pieces.size())
      throw ChunkError("block " + std::to_string(i) + " does not match its chunk length");
    std::size_t expected = i == 0 ? 0 : k;
    if (c.overlap_prev != expected)
      throw ChunkError("chunk " + std::to_string(i) + " declares overlap " + std::to_string(c.overlap_prev) +
                       ", expected " + std::to_string(expected));
  }
}

// Rows of `base` with the positions `at` taken from `from` rows `src` (same length).
Var replace_rows(Var base, const std::vector<std::size_t>& at, Var from, const std::vector<std::size_t>& src) {
  std::vector<nn::RowRef> rows;
  rows.reserve(static_cast<std::size_t>(base.rows()));
  for (Eigen::Index r = 0; r < base.rows(); ++r) rows.push_back({base, r});
  for (std::size_t j = 0; j < at.size(); ++j) rows[at[j]] = {from, static_cast<Eigen::Index>(src[j])};
  return nn::stack_rows(rows);
}

}  // namespace

std::vector<Var> IsBert::forward_pass(Tape& t, const std::vector<Var>& blocks, const ChunkedDocument& cd,
                                      std::size_t k) const {
  check_blocks(blocks, cd, k);
  std::vector<Var> out;
  out.reserve(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Var input = blocks[i];
    if (i > 0 && k > 0) {
      auto mine = cd.chunks[i].content_positions();
      auto prev = cd.chunks[i - 1].content_positions();
      std::vector<std::size_t> at(mine.begin(), mine.begin() + static_cast<long>(k));
      std::vector<std::size_t> src(prev.end() - static_cast<long>(k), prev.end());
      input = replace_rows(input, at, out[i - 1], src);
    }
    out.push_back(encode(t, input));
  }
  return out;
}

std::vector<Var> IsBert::backward_pass(Tape& t, const std::vector<Var>& forward, const ChunkedDocument& cd,
                                       std::size_t k) const {
  check_blocks(forward, cd, k);
  std::vector<Var> out(forward.size());
  if (forward.empty()) return out;
  const std::size_t M = forward.size();
  out[M - 1] = forward[M - 1];
  for (std::size_t i = M - 1; i-- > 0;) {
    Var input = forward[i];
    if (k > 0) {
      auto mine = cd.chunks[i].content_positions();
      auto next = cd.chunks[i + 1].content_positions();
      std::vector<std::size_t> at(mine.end() - static_cast<long>(k), mine.end());
      std::vector<std::size_t> src(next.begin(), next.begin() + static_cast<long>(k));
      input = replace_rows(input, at, out[i + 1], src);
    }
    out[i] = encode(t, input);
  }
  return out;
}

std::vector<Var> IsBert::multi_hop(Tape& t, const std::vector<Var>& E, const ChunkedDocument& cd, int hops) const {
  if (hops < 1) throw std::invalid_argument("hops must be at least 1");
  const std::size_t k = cd.effective_k;
  std::vector<Var> before = E, input = E, output;
  for (int h = 1; h <= hops; ++h) {
    output = backward_pass(t, forward_pass(t, input, cd, k), cd, k);
    for (std::size_t i = 0; i < output.size(); ++i)
      if (output[i].rows() != E[i].rows() || output[i].cols() != E[i].cols())
        throw std::logic_error("hop changed a block shape");
    if (h == hops) break;
    input.clear();
    for (std::size_t i = 0; i < output.size(); ++i) input.push_back(output[i] + before[i]);
    before = output;
  }
  return output;
}

std::vector<Var> IsBert::logits(Tape& t, const PreparedDocument& d, std::mt19937_64* rng) const {
  auto blocks = multi_hop(t, embed(t, d, rng), d.chunks, cfg_.hops);
  std::vector<Var> out;
  out.reserve(blocks.size());
  for (const Var& b : blocks) out.push_back(out_(t, b));
  return out;
}

Var IsBert::loss(Tape& t, const PreparedDocument& d, std::mt19937_64* rng) const {
  if (d.targets.size() != d.chunks.chunks.size() || (!d.targets.empty() && d.targets[0].empty()))
    throw std::invalid_argument("document has no gold labels");
  if (d.chunks.chunks.empty()) return t.constant(Matrix::Zero(1, 1));
  auto lg = logits(t, d, rng);
  Var total = nn::softmax_cross_entropy(lg[0], d.targets[0]);
  for (std::size_t i = 1; i < lg.size(); ++i) total = total + nn::softmax_cross_entropy(lg[i], d.targets[i]);
  return total;
}

IsPrediction IsBert::predict(const PreparedDocument& d) const {
  IsPrediction p;
  const std::size_t n = d.parents.size();
  const auto C = static_cast<Eigen::Index>(space_.size());
  Tape t;
  auto lg = logits(t, d);

  Matrix acc = Matrix::Zero(static_cast<Eigen::Index>(n), C);
  std::vector<int> copies(n, 0);
  for (std::size_t ci = 0; ci < lg.size(); ++ci) {
    const Chunk& c = d.chunks.chunks[ci];
    const Matrix& L = lg[ci].value();
    for (std::size_t pos = 0; pos < c.source.size(); ++pos) {
      if (c.source[pos] < 0) continue;
      auto s = static_cast<std::size_t>(c.source[pos]);
      auto row = static_cast<Eigen::Index>(s);
      switch (cfg_.owner) {
        case OverlapOwner::First:
          if (copies[s] == 0) acc.row(row) = L.row(static_cast<Eigen::Index>(pos));
          break;
        case OverlapOwner::Last: acc.row(row) = L.row(static_cast<Eigen::Index>(pos)); break;
        case OverlapOwner::Average: acc.row(row) += L.row(static_cast<Eigen::Index>(pos)); break;
      }
      ++copies[s];
    }
  }
  p.piece_classes.resize(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    Eigen::Index best = 0;
    acc.row(static_cast<Eigen::Index>(s)).maxCoeff(&best);
    p.piece_classes[s] = static_cast<int>(best);
  }
  auto token_classes = resolve_predictions(p.piece_classes, d.parents, d.token_count, 0);
  for (int c : token_classes) p.labels.push_back(*TokenLabel::parse(space_[static_cast<std::size_t>(c)]));
  p.spans = decode_spans(p.labels);
  return p;
}

namespace {

nlohmann::json policy_json(const OverlapPolicy& p) {
  if (const auto* f = std::get_if<FixedOverlap>(&p.mode)) return {{"mode", "fixed"}, {"ratio", f->ratio}};
  const auto& a = std::get<AdaptiveOverlap>(p.mode);
  return {{"mode", "adaptive"}, {"thresholds", a.thresholds}, {"ratios", a.ratios}};
}

OverlapPolicy policy_from_json(const nlohmann::json& j) {
  if (j.at("mode") == "fixed") return OverlapPolicy::fixed(j.at("ratio").get<double>());
  AdaptiveOverlap a;
  a.thresholds = j.at("thresholds").get<std::vector<std::size_t>>();
  a.ratios = j.at("ratios").get<std::vector<double>>();
  return {a};
}

nlohmann::json config_json(const IsConfig& c) {
  return {{"d_model", c.encoder.d_model}, {"layers", c.encoder.layers},     {"heads", c.encoder.heads},
          {"ff_mult", c.encoder.ff_mult}, {"capacity", c.capacity},         {"policy", policy_json(c.policy)},
          {"hops", c.hops},               {"owner", to_string(c.owner)},    {"dropout", c.dropout}};
}

IsConfig config_from_json(const nlohmann::json& j) {
  IsConfig c;
  c.encoder.d_model = j.at("d_model").get<int>();
  c.encoder.layers = j.at("layers").get<int>();
  c.encoder.heads = j.at("heads").get<int>();
  c.encoder.ff_mult = j.at("ff_mult").get<int>();
  c.capacity = j.at("capacity").get<std::size_t>();
  c.policy = policy_from_json(j.at("policy"));
  c.hops = j.at("hops").get<int>();
  auto owner = parse_owner(j.at("owner").get<std::string>());
  if (!owner) throw std::runtime_error("checkpoint has an unknown overlap owner");
  c.owner = *owner;
  c.dropout = j.at("dropout").get<double>();
  return c;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void IsBert::save(const std::filesystem::path& path) const {
  nlohmann::json h;
  h["model"] = "isbert";
  h["config"] = config_json(cfg_);
  h["vocabulary"] = vocab_.pieces();
  h["label_space"] = space_;
  save_checkpoint(path, h, params_);
}

IsBert IsBert::load(const std::filesystem::path& path) {
  auto ck = load_checkpoint(path);
  if (ck.header.value("model", "") != "isbert") throw std::runtime_error(path.string() + " is not an IsBERT checkpoint");
  auto pieces = ck.header.at("vocabulary").get<std::vector<std::string>>();
  if (pieces.empty()) throw std::runtime_error("checkpoint vocabulary is empty");
  std::string unk = pieces.front();
  pieces.erase(pieces.begin());
  IsBert m(config_from_json(ck.header.at("config")), Vocabulary(unk, pieces), 0);
  apply_checkpoint(ck, m.params_);
  return m;
}

void parse_isbert_config(const std::string& text, IsConfig& model, IsTrainConfig& train) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    try {
      if (key == "d_model") model.encoder.d_model = std::stoi(v);
      else if (key == "layers") model.encoder.layers = std::stoi(v);
      else if (key == "heads") model.encoder.heads = std::stoi(v);
      else if (key == "ff_mult") model.encoder.ff_mult = std::stoi(v);
      else if (key == "capacity") model.capacity = std::stoul(v);
      else if (key == "overlap") {
        if (v == "adaptive") model.policy = OverlapPolicy::adaptive_default(model.capacity);
        else model.policy = OverlapPolicy::fixed(std::stod(v));
      } else if (key == "hops") model.hops = std::stoi(v);
      else if (key == "owner") {
        auto o = parse_owner(v);
        if (!o) throw std::invalid_argument("owner must be first, last or average");
        model.owner = *o;
      } else if (key == "dropout") model.dropout = std::stod(v);
      else if (key == "max_epochs") train.max_epochs = std::stoi(v);
      else if (key == "patience") train.patience = std::stoi(v);
      else if (key == "batch_docs") train.batch_docs = std::stoi(v);
      else if (key == "lr") train.lr = std::stod(v);
      else if (key == "lr_decay") train.lr_decay = std::stod(v);
      else if (key == "clip") train.clip = std::stod(v);
      else if (key == "seed") train.seed = std::stoull(v);
      else if (key == "max_words") train.max_words = std::stoul(v);
      else if (key == "min_word_count") train.min_word_count = std::stoul(v);
      else throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": value out of range");
    }
  }
  if (train.patience < 1) throw std::invalid_argument("patience must be at least 1");
  if (train.batch_docs < 1) throw std::invalid_argument("batch_docs must be at least 1");
  model.encoder.max_len = static_cast<int>(model.capacity);
  model.validate();
}

std::string metrics_csv(const std::vector<IsMetrics>& log) {
  std::ostringstream o;
  o << "epoch,split,tokenP,tokenR,tokenF,nameF\n";
  o.setf(std::ios::fixed);
  o.precision(6);
  for (const auto& m : log)
    o << m.epoch << ',' << m.split << ',' << m.token_p << ',' << m.token_r << ',' << m.token_f << ',' << m.name_f << '\n';
  return o.str();
}

IsEvaluation evaluate_isbert(const IsBert& model, const std::vector<PreparedDocument>& docs,
                             const std::vector<LabeledDocument>& gold) {
  if (docs.size() != gold.size()) throw std::invalid_argument("prepared and gold documents differ in number");
  PrfReport tok, fine, name;
  IsEvaluation ev;
  std::size_t right = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto p = model.predict(docs[i]);
    std::span<const TokenLabel> pl(p.labels), gl(gold[i].labels);
    tok += token_prf(pl, gl, TokenMode::SpanOnly);
    fine += token_prf(pl, gl, TokenMode::FineGrained);
    name += name_prf(p.spans, decode_spans(gl));
    for (std::size_t j = 0; j < gl.size(); ++j) {
      bool ok = pl[j] == gl[j];
      right += ok;
      ev.token_correct.push_back(ok);
    }
  }
  auto& m = ev.metrics;
  m.token_p = tok.precision;
  m.token_r = tok.recall;
  m.token_f = tok.f1;
  m.fine_f = fine.f1;
  m.name_p = name.precision;
  m.name_r = name.recall;
  m.name_f = name.f1;
  m.accuracy = ev.token_correct.empty() ? 0.0 : static_cast<double>(right) / static_cast<double>(ev.token_correct.size());
  return ev;
}

IsTrainResult train_isbert(IsBert& model, const std::vector<LabeledDocument>& train,
                           const std::vector<LabeledDocument>& dev, const IsTrainConfig& cfg,
                           const std::function<void(const IsMetrics&)>& on_epoch) {
  if (train.empty() || dev.empty()) throw std::invalid_argument("training needs non-empty train and dev splits");
  if (cfg.patience < 1 || cfg.batch_docs < 1) throw std::invalid_argument("patience and batch size must be positive");
  std::vector<PreparedDocument> tr, dv;
  for (const auto& d : train) tr.push_back(model.prepare(d));
  for (const auto& d : dev) dv.push_back(model.prepare(d));

  std::mt19937_64 rng(cfg.seed);
  auto params = model.params().all();
  nn::Adam adam(cfg.lr);
  std::vector<std::size_t> order(tr.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  IsTrainResult res;
  res.best_accuracy = -1.0;
  std::vector<Matrix> best;
  int since = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    adam.lr = cfg.lr * std::pow(1.0 - cfg.lr_decay, epoch - 1);
    order = shuffle_dataset(std::move(order), rng());
    double epoch_loss = 0.0;
    const auto B = static_cast<std::size_t>(cfg.batch_docs);
    for (std::size_t b = 0; b < order.size(); b += B) {
      model.params().zero_grad();
      for (std::size_t i = b; i < std::min(order.size(), b + B); ++i) {
        const auto& d = tr[order[i]];
        if (d.chunks.chunks.empty()) continue;
        Tape t;
        Var L = model.loss(t, d, &rng);
        epoch_loss += L.value()(0, 0);
        t.backward(L);
      }
      if (cfg.clip > 0) nn::clip_grad_norm(params, cfg.clip);
      adam.step(params);
    }
    IsMetrics m = evaluate_isbert(model, dv, dev).metrics;
    m.epoch = epoch;
    m.split = "dev";
    m.loss = epoch_loss;
    res.log.push_back(m);
    if (on_epoch) on_epoch(m);
    if (m.accuracy > res.best_accuracy) {
      res.best_accuracy = m.accuracy;
      res.best_epoch = epoch;
      best.clear();
      for (const auto* p : params) best.push_back(p->value);
      since = 0;
    } else if (++since >= cfg.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return res;
}

}  // namespace namerec
