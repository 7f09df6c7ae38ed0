#include "namerec/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "namerec/utf8.hpp"

namespace namerec::nn {

std::array<double, 3> case_vector(std::string_view token) {
  bool seen_alpha = false, first_upper = false, all_upper = true, any_upper = false;
  for (std::size_t pos = 0; pos < token.size();) {
    auto d = utf8::decode(token, pos);
    pos += d.len;
    bool up = utf8::is_upper(d.cp);
    any_upper = any_upper || up;
    if (!utf8::is_letter(d.cp)) continue;
    if (!seen_alpha) first_upper = up;
    seen_alpha = true;
    all_upper = all_upper && up;
  }
  return {first_upper ? 1.0 : 0.0, seen_alpha && all_upper ? 1.0 : 0.0, any_upper ? 1.0 : 0.0};
}

Matrix case_matrix(std::span<const std::string> tokens) {
  Matrix m(static_cast<Eigen::Index>(tokens.size()), 3);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto c = case_vector(tokens[i]);
    for (int j = 0; j < 3; ++j) m(static_cast<Eigen::Index>(i), j) = c[static_cast<std::size_t>(j)];
  }
  return m;
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Matrix xavier_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  return uniform_matrix(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

Var embed(Tape& t, Parameter& table, std::span<const int> ids, const Matrix& case_bits) {
  if (case_bits.rows() != static_cast<Eigen::Index>(ids.size()))
    throw std::invalid_argument("embed: case rows differ from id count");
  Var rows = gather_rows(t.param(table), ids);
  Var parts[] = {rows, t.constant(case_bits)};
  return concat_cols(parts);
}

Linear Linear::create(ParameterSet& ps, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                      std::mt19937_64& rng) {
  Linear l;
  l.W = &ps.add(prefix + ".W", xavier_matrix(in, out, rng));
  l.b = &ps.add(prefix + ".b", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(Tape& t, Var x) const { return add_row(matmul(x, t.param(*W)), t.param(*b)); }

BiLstm BiLstm::create(ParameterSet& ps, const std::string& prefix, Eigen::Index in, Eigen::Index hidden,
                      std::mt19937_64& rng) {
  BiLstm m;
  m.hidden = hidden;
  auto bias = [hidden] {
    Matrix b = Matrix::Zero(1, 4 * hidden);
    b.middleCols(hidden, hidden).setOnes();
    return b;
  };
  m.Wf = &ps.add(prefix + ".fwd.W", xavier_matrix(in, 4 * hidden, rng));
  m.Uf = &ps.add(prefix + ".fwd.U", xavier_matrix(hidden, 4 * hidden, rng));
  m.bf = &ps.add(prefix + ".fwd.b", bias());
  m.Wb = &ps.add(prefix + ".bwd.W", xavier_matrix(in, 4 * hidden, rng));
  m.Ub = &ps.add(prefix + ".bwd.U", xavier_matrix(hidden, 4 * hidden, rng));
  m.bb = &ps.add(prefix + ".bwd.b", bias());
  return m;
}

Var BiLstm::operator()(Tape& t, Var x) const {
  Var f = lstm(x, t.param(*Wf), t.param(*Uf), t.param(*bf), false);
  Var b = lstm(x, t.param(*Wb), t.param(*Ub), t.param(*bb), true);
  Var parts[] = {f, b};
  return concat_cols(parts);
}

Coattention Coattention::create(ParameterSet& ps, const std::string& prefix, Eigen::Index d, Eigen::Index d2,
                                Eigen::Index k, std::mt19937_64& rng, bool separate_maps) {
  Coattention c;
  c.Wh = &ps.add(prefix + ".Wh", xavier_matrix(d, k, rng));
  c.Wh2 = &ps.add(prefix + ".Wh2", xavier_matrix(d2, k, rng));
  c.bh2 = &ps.add(prefix + ".bh2", Matrix::Zero(1, k));
  c.Wp = &ps.add(prefix + ".Wp", xavier_matrix(2 * k, 1, rng));
  c.bp = &ps.add(prefix + ".bp", Matrix::Zero(1, 1));
  c.separate_maps = separate_maps;
  if (separate_maps) {
    c.Wh_b = &ps.add(prefix + ".b.Wh", xavier_matrix(d, k, rng));
    c.Wh2_b = &ps.add(prefix + ".b.Wh2", xavier_matrix(d2, k, rng));
    c.bh2_b = &ps.add(prefix + ".b.bh2", Matrix::Zero(1, k));
    c.Wp_b = &ps.add(prefix + ".b.Wp", xavier_matrix(2 * k, 1, rng));
    c.bp_b = &ps.add(prefix + ".b.bp", Matrix::Zero(1, 1));
  }
  return c;
}

namespace {

Var attention_map(Tape& t, Var H, Var H2, Parameter& Wh, Parameter& Wh2, Parameter& bh2, Parameter& Wp,
                  Parameter& bp) {
  Var left = matmul(H, t.param(Wh));
  Var right = add_row(matmul(H2, t.param(Wh2)), t.param(bh2));
  Var parts[] = {left, right};
  Var P = tanh(concat_cols(parts));
  Var logits = add_row(matmul(P, t.param(Wp)), t.param(bp));
  return softmax_all(logits);
}

}  // namespace

CoattentionOutput Coattention::operator()(Tape& t, Var H, Var H2) const {
  if (H.rows() != H2.rows()) throw std::invalid_argument("coattention: sequence lengths differ");
  if (H.cols() != Wh->value.rows() || H2.cols() != Wh2->value.rows())
    throw std::invalid_argument("coattention: hidden widths do not match parameters");
  CoattentionOutput out;
  out.weights = attention_map(t, H, H2, *Wh, *Wh2, *bh2, *Wp, *bp);
  out.weights2 = separate_maps ? attention_map(t, H, H2, *Wh_b, *Wh2_b, *bh2_b, *Wp_b, *bp_b) : out.weights;
  out.H_tilde = scale_rows(H, out.weights);
  out.H2_tilde = scale_rows(H2, out.weights2);
  return out;
}

GatedFusion GatedFusion::create(ParameterSet& ps, const std::string& prefix, Eigen::Index d, std::mt19937_64& rng) {
  GatedFusion g;
  g.Wt = &ps.add(prefix + ".Wt", xavier_matrix(d, d, rng));
  g.bt = &ps.add(prefix + ".bt", Matrix::Zero(1, d));
  g.Wh = &ps.add(prefix + ".Wh", xavier_matrix(d, d, rng));
  g.bh = &ps.add(prefix + ".bh", Matrix::Zero(1, d));
  g.Wg = &ps.add(prefix + ".Wg", xavier_matrix(2 * d, d, rng));
  return g;
}

Var GatedFusion::operator()(Tape& t, Var H, Var H_tilde) const {
  if (H.rows() != H_tilde.rows() || H.cols() != H_tilde.cols())
    throw std::invalid_argument("gated_fusion: shape mismatch");
  Var ht = tanh(add_row(matmul(H_tilde, t.param(*Wt)), t.param(*bt)));
  Var hh = tanh(add_row(matmul(H, t.param(*Wh)), t.param(*bh)));
  Var parts[] = {ht, hh};
  Var g = sigmoid(matmul(concat_cols(parts), t.param(*Wg)));
  return add(ht, mul(g, sub(hh, ht)));
}

Matrix sinusoidal_positions(int max_len, int d) {
  Matrix pe(max_len, d);
  for (int p = 0; p < max_len; ++p) {
    for (int i = 0; i < d; ++i) {
      double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe(p, i) = i % 2 == 0 ? std::sin(p * rate) : std::cos(p * rate);
    }
  }
  return pe;
}

TransformerEncoder::TransformerEncoder(ParameterSet& ps, const std::string& prefix, const TransformerConfig& cfg,
                                       std::mt19937_64& rng)
    : cfg_(cfg) {
  if (cfg.layers < 1 || cfg.heads < 1 || cfg.d_model % cfg.heads != 0 || cfg.max_len < 1)
    throw std::invalid_argument("transformer: d_model must be divisible by heads; layers and max_len >= 1");
  const Eigen::Index d = cfg.d_model, ff = static_cast<Eigen::Index>(cfg.ff_mult) * d;
  for (int l = 0; l < cfg.layers; ++l) {
    std::string p = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.q = Linear::create(ps, p + ".q", d, d, rng);
    layer.k = Linear::create(ps, p + ".k", d, d, rng);
    layer.v = Linear::create(ps, p + ".v", d, d, rng);
    layer.o = Linear::create(ps, p + ".o", d, d, rng);
    layer.ff1 = Linear::create(ps, p + ".ff1", d, ff, rng);
    layer.ff2 = Linear::create(ps, p + ".ff2", ff, d, rng);
    layer.ln1_g = &ps.add(p + ".ln1.g", Matrix::Ones(1, d));
    layer.ln1_b = &ps.add(p + ".ln1.b", Matrix::Zero(1, d));
    layer.ln2_g = &ps.add(p + ".ln2.g", Matrix::Ones(1, d));
    layer.ln2_b = &ps.add(p + ".ln2.b", Matrix::Zero(1, d));
    layers_.push_back(layer);
  }
  positions_ = sinusoidal_positions(cfg.max_len, cfg.d_model);
}

Var TransformerEncoder::operator()(Tape& t, Var x) const { return encode_with_attention(t, x, nullptr); }

Var TransformerEncoder::encode_with_attention(Tape& t, Var x, std::vector<Matrix>* attention) const {
  const Eigen::Index n = x.rows(), d = cfg_.d_model;
  if (n > cfg_.max_len) throw std::invalid_argument("transformer: sequence longer than capacity");
  if (x.cols() != d) throw std::invalid_argument("transformer: input width differs from d_model");
  const Eigen::Index dh = d / cfg_.heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var h = add(x, t.constant(positions_.topRows(n)));
  for (const Layer& layer : layers_) {
    Var q = layer.q(t, h), k = layer.k(t, h), v = layer.v(t, h);
    std::vector<Var> heads;
    for (int hd = 0; hd < cfg_.heads; ++hd) {
      Var qh = slice_cols(q, hd * dh, dh), kh = slice_cols(k, hd * dh, dh), vh = slice_cols(v, hd * dh, dh);
      Var a = softmax_rows(scale(matmul_nt(qh, kh), inv_scale));
      if (attention) attention->push_back(a.value());
      heads.push_back(matmul(a, vh));
    }
    Var att = layer.o(t, concat_cols(heads));
    h = layer_norm(add(h, att), t.param(*layer.ln1_g), t.param(*layer.ln1_b));
    Var ff = layer.ff2(t, gelu(layer.ff1(t, h)));
    h = layer_norm(add(h, ff), t.param(*layer.ln2_g), t.param(*layer.ln2_b));
  }
  return h;
}

}  // namespace namerec::nn
