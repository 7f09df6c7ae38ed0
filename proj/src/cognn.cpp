#include "namerec/cognn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "namerec/checkpoint.hpp"
#include "namerec/metrics.hpp"
#include "namerec/optim.hpp"

namespace namerec {

using nn::Matrix;
using nn::Tape;
using nn::Var;

std::vector<Sequence> sentences_of(const LabeledDocument& doc) {
  std::vector<Sequence> out;
  std::size_t begin = 0;
  for (std::size_t end : doc.sentence_ends) {
    if (end > begin) {
      Sequence s;
      for (std::size_t i = begin; i < end; ++i) {
        s.words.push_back(doc.tokens[i].text);
        s.labels.push_back(doc.labels[i]);
      }
      out.push_back(std::move(s));
    }
    begin = end;
  }
  return out;
}

Vocabulary build_word_vocab(const std::vector<Sequence>& data, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : data)
    for (const auto& w : s.words) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, c] : counts)
    if (c >= min_count) kept.emplace_back(w, c);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (auto& [w, c] : kept) words.push_back(w);
  return Vocabulary("[UNK]", std::move(words));
}

namespace {

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got \"" + v + "\"");
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

nlohmann::json config_json(const CogNNConfig& c) {
  return {{"embed_dim", c.embed_dim}, {"hidden", c.hidden},          {"attention_dim", c.attention_dim},
          {"dropout", c.dropout},     {"form_axis", to_string(c.form_axis)}, {"separate_maps", c.separate_maps},
          {"in_network", c.in_network}, {"shared_embedding", c.shared_embedding}};
}

CogNNConfig config_from_json(const nlohmann::json& j) {
  CogNNConfig c;
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.attention_dim = j.at("attention_dim").get<int>();
  c.dropout = j.at("dropout").get<double>();
  auto axis = parse_axis(j.at("form_axis").get<std::string>());
  if (!axis) throw std::runtime_error("checkpoint has an unknown form axis");
  c.form_axis = *axis;
  c.separate_maps = j.at("separate_maps").get<bool>();
  c.in_network = j.at("in_network").get<bool>();
  c.shared_embedding = j.value("shared_embedding", false);
  return c;
}

}  // namespace

void parse_config_text(const std::string& text, CogNNConfig& model, TrainConfig& train) {
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
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      if (key == "embed_dim") model.embed_dim = std::stoi(value);
      else if (key == "hidden") model.hidden = std::stoi(value);
      else if (key == "attention_dim") model.attention_dim = std::stoi(value);
      else if (key == "dropout") model.dropout = std::stod(value);
      else if (key == "form_axis") {
        auto a = parse_axis(value);
        if (!a || *a == Axis::Bie) throw std::invalid_argument("form_axis must be FML or FI");
        model.form_axis = *a;
      } else if (key == "separate_maps") model.separate_maps = parse_bool(value);
      else if (key == "in_network") model.in_network = parse_bool(value);
      else if (key == "shared_embedding") model.shared_embedding = parse_bool(value);
      else if (key == "max_epochs") train.max_epochs = std::stoi(value);
      else if (key == "patience") train.patience = std::stoi(value);
      else if (key == "batch_size") train.batch_size = std::stoi(value);
      else if (key == "lr") train.lr = std::stod(value);
      else if (key == "lr_decay") train.lr_decay = std::stod(value);
      else if (key == "clip") train.clip = std::stod(value);
      else if (key == "seed") train.seed = std::stoull(value);
      else if (key == "min_word_count") train.min_word_count = std::stoull(value);
      else throw std::invalid_argument("unknown key \"" + key + "\"");
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": value out of range");
    }
  }
  if (train.patience < 1) throw std::invalid_argument("patience must be at least 1");
  if (train.batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (model.dropout < 0.0 || model.dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
}

std::string config_text(const CogNNConfig& m, const TrainConfig& t) {
  std::ostringstream o;
  o << "embed_dim = " << m.embed_dim << "\nhidden = " << m.hidden << "\nattention_dim = " << m.attention_dim
    << "\ndropout = " << m.dropout << "\nform_axis = " << to_string(m.form_axis)
    << "\nseparate_maps = " << (m.separate_maps ? "true" : "false")
    << "\nin_network = " << (m.in_network ? "true" : "false")
    << "\nshared_embedding = " << (m.shared_embedding ? "true" : "false") << "\nmax_epochs = " << t.max_epochs
    << "\npatience = " << t.patience << "\nbatch_size = " << t.batch_size << "\nlr = " << t.lr
    << "\nlr_decay = " << t.lr_decay << "\nclip = " << t.clip << "\nseed = " << t.seed
    << "\nmin_word_count = " << t.min_word_count << "\n";
  return o.str();
}

CogNN::CogNN(const CogNNConfig& cfg, Vocabulary words, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(words)), bie_space_(axis_space(Axis::Bie)), form_space_(axis_space(cfg.form_axis)) {
  if (cfg_.form_axis == Axis::Bie) throw std::invalid_argument("the form network needs the FML or FI axis");
  if (cfg_.embed_dim < 1 || cfg_.hidden < 1) throw std::invalid_argument("embedding and hidden sizes must be positive");
  std::mt19937_64 rng(seed);
  const auto V = static_cast<Eigen::Index>(vocab_.size());
  const Eigen::Index in = cfg_.embed_dim + 3, d = 2 * cfg_.hidden;
  Matrix table = nn::uniform_matrix(V, cfg_.embed_dim, 0.1, rng);
  emb_y_ = &params_.add("token.embedding", table);
  enc_y_ = nn::BiLstm::create(params_, "token.encoder", in, cfg_.hidden, rng);
  if (cfg_.in_network) {
    emb_f_ = cfg_.shared_embedding ? emb_y_ : &params_.add("form.embedding", table);  // identical initialisation
    enc_f_ = nn::BiLstm::create(params_, "form.encoder", in, cfg_.hidden, rng);
    const Eigen::Index k = cfg_.attention_dim > 0 ? cfg_.attention_dim : d;
    coatt_ = nn::Coattention::create(params_, "coattention", d, d, k, rng, cfg_.separate_maps);
    fuse_y_ = nn::GatedFusion::create(params_, "token.fusion", d, rng);
    fuse_f_ = nn::GatedFusion::create(params_, "form.fusion", d, rng);
  }
  crf_y_ = crf::CrfHead::create(params_, "token.crf", d, static_cast<Eigen::Index>(bie_space_.size()), rng);
  if (cfg_.in_network)
    crf_f_ = crf::CrfHead::create(params_, "form.crf", d, static_cast<Eigen::Index>(form_space_.size()), rng);
}

std::vector<int> CogNN::ids(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(vocab_.id(w));
  return out;
}

CogNN::Forward CogNN::forward(Tape& t, const std::vector<std::string>& words, std::mt19937_64* rng) const {
  if (words.empty()) throw std::invalid_argument("cannot encode an empty sequence");
  auto id = ids(words);
  Matrix cases = nn::case_matrix(words);
  auto drop = [&](Var v) { return rng ? nn::dropout(v, cfg_.dropout, *rng) : v; };
  Forward f;
  Var H = drop((enc_y_)(t, drop(nn::embed(t, *emb_y_, id, cases))));
  if (!cfg_.in_network) {
    f.F = H;
    return f;
  }
  Var H2 = drop((enc_f_)(t, drop(nn::embed(t, *emb_f_, id, cases))));
  f.attention = coatt_(t, H, H2);
  f.F = fuse_y_(t, H, f.attention.H_tilde);
  f.F_form = fuse_f_(t, H2, f.attention.H2_tilde);
  return f;
}

std::vector<int> CogNN::bie_targets(const std::vector<TokenLabel>& labels) const {
  std::vector<int> out;
  for (const auto& l : labels) out.push_back(class_index(bie_space_, l.project(Axis::Bie)));
  return out;
}

std::vector<int> CogNN::form_targets(const std::vector<TokenLabel>& labels) const {
  std::vector<int> out;
  for (const auto& l : labels) out.push_back(class_index(form_space_, l.project(cfg_.form_axis)));
  return out;
}

CogNN::Losses CogNN::loss(Tape& t, const Sequence& s, std::mt19937_64* rng) const {
  if (s.labels.size() != s.words.size()) throw std::invalid_argument("sequence lacks gold labels for every token");
  auto f = forward(t, s.words, rng);
  Losses out;
  out.token = crf_y_.loss(t, f.F, bie_targets(s.labels));
  if (!cfg_.in_network) {
    out.total = out.token;
    return out;
  }
  out.form = crf_f_.loss(t, f.F_form, form_targets(s.labels));
  out.total = out.token + out.form;
  return out;
}

CogNNPrediction CogNN::predict(const std::vector<std::string>& words) const {
  CogNNPrediction p;
  if (words.empty()) return p;
  Tape t;
  auto f = forward(t, words);
  p.bie_path = crf_y_.decode(t, f.F).path;
  if (cfg_.in_network) p.form_path = crf_f_.decode(t, f.F_form).path;
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto bie = parse_bie(bie_space_[static_cast<std::size_t>(p.bie_path[i])]);
    std::optional<Fml> fml;
    std::optional<Fi> fi;
    if (cfg_.in_network) {
      const std::string& form = form_space_[static_cast<std::size_t>(p.form_path[i])];
      if (cfg_.form_axis == Axis::Fml) fml = parse_fml(form);
      else fi = parse_fi(form);
    }
    p.labels.push_back(combine_views(bie, fml, fi));
  }
  p.spans = decode_spans(p.labels);
  return p;
}

std::vector<nn::Parameter*> CogNN::token_network_encoder() {
  return {emb_y_, enc_y_.Wf, enc_y_.Uf, enc_y_.bf, enc_y_.Wb, enc_y_.Ub, enc_y_.bb};
}

std::vector<nn::Parameter*> CogNN::form_network_encoder() {
  if (!cfg_.in_network) return {};
  if (cfg_.shared_embedding) return {enc_f_.Wf, enc_f_.Uf, enc_f_.bf, enc_f_.Wb, enc_f_.Ub, enc_f_.bb};
  return {emb_f_, enc_f_.Wf, enc_f_.Uf, enc_f_.bf, enc_f_.Wb, enc_f_.Ub, enc_f_.bb};
}

void CogNN::save(const std::filesystem::path& path) const {
  nlohmann::json h;
  h["model"] = "cognn";
  h["config"] = config_json(cfg_);
  h["vocabulary"] = vocab_.pieces();
  h["label_spaces"] = nlohmann::json::array({bie_space_, form_space_});
  save_checkpoint(path, h, params_);
}

CogNN CogNN::load(const std::filesystem::path& path) {
  auto ck = load_checkpoint(path);
  if (ck.header.value("model", "") != "cognn") throw std::runtime_error(path.string() + " is not a CogNN checkpoint");
  auto pieces = ck.header.at("vocabulary").get<std::vector<std::string>>();
  if (pieces.empty()) throw std::runtime_error("checkpoint vocabulary is empty");
  std::string unk = pieces.front();
  pieces.erase(pieces.begin());
  CogNN m(config_from_json(ck.header.at("config")), Vocabulary(unk, pieces), 0);
  apply_checkpoint(ck, m.params_);
  return m;
}

std::string metrics_csv(const std::vector<EpochMetrics>& log) {
  std::ostringstream o;
  o << "epoch,split,tokenP,tokenR,tokenF,nameF\n";
  o.setf(std::ios::fixed);
  o.precision(6);
  for (const auto& m : log)
    o << m.epoch << ',' << m.split << ',' << m.token_p << ',' << m.token_r << ',' << m.token_f << ',' << m.name_f << '\n';
  return o.str();
}

EpochMetrics evaluate_cognn(const CogNN& model, const std::vector<Sequence>& data) {
  PrfReport tok, name;
  std::size_t right = 0, total = 0;
  for (const auto& s : data) {
    auto p = model.predict(s.words);
    tok += token_prf(std::span<const TokenLabel>(p.labels), std::span<const TokenLabel>(s.labels), TokenMode::SpanOnly);
    auto gold_spans = decode_spans(s.labels);
    name += name_prf(p.spans, gold_spans);
    auto gb = model.bie_targets(s.labels);
    for (std::size_t i = 0; i < s.words.size(); ++i) right += p.bie_path[i] == gb[i];
    total += s.words.size();
  }
  EpochMetrics m;
  m.token_p = tok.precision;
  m.token_r = tok.recall;
  m.token_f = tok.f1;
  m.name_f = name.f1;
  m.accuracy = total ? static_cast<double>(right) / static_cast<double>(total) : 0.0;
  return m;
}

TrainResult train_cognn(CogNN& model, const std::vector<Sequence>& train, const std::vector<Sequence>& dev,
                        const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (train.empty() || dev.empty()) throw std::invalid_argument("training needs non-empty train and dev splits");
  if (cfg.patience < 1 || cfg.batch_size < 1) throw std::invalid_argument("patience and batch size must be positive");
  std::mt19937_64 rng(cfg.seed);
  auto params = model.params().all();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult res;
  res.best_accuracy = -1.0;
  std::vector<Matrix> best;
  int since = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    nn::Sgd sgd{cfg.lr * std::pow(1.0 - cfg.lr_decay, epoch - 1)};
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      model.params().zero_grad();
      std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t i = b; i < e; ++i) {
        const auto& s = train[order[i]];
        if (s.words.empty()) continue;
        Tape t;
        auto L = model.loss(t, s, &rng);
        epoch_loss += L.total.value()(0, 0);
        t.backward(L.total);
      }
      nn::clip_grad_norm(params, cfg.clip);
      sgd.step(params);
    }
    EpochMetrics m = evaluate_cognn(model, dev);
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
