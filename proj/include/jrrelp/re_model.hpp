#pragma once

// The RE side: a prediction function f mapping a sentence (tokens, context
// features, entity-type markers) to a relation representation r_hat, then
// logits_k = R[:,k] . r_hat + b_re[k] softmaxed over relations. Two concrete
// f's: an attention LSTM over position features ("palstm-mini") and a graph
// convolution over the pruned dependency tree ("cgcn-mini").
//
// Masking discipline: padded timesteps are held (h_t = h_{t-1}) via exact
// {0,1} column scales, attention gives them weight exactly 0, and pooling
// masks exclude them, so a padded position can never leak gradient.

#include <optional>
#include <string>
#include <vector>

#include "jrrelp/autodiff.hpp"
#include "jrrelp/batch.hpp"
#include "jrrelp/embeddings.hpp"

namespace jrrelp {

enum class REArch { palstm_mini, cgcn_mini };

inline const char* to_string(REArch a) {
  return a == REArch::palstm_mini ? "palstm-mini" : "cgcn-mini";
}

inline REArch re_arch_from_string(const std::string& s) {
  if (s == "palstm-mini") return REArch::palstm_mini;
  if (s == "cgcn-mini") return REArch::cgcn_mini;
  throw ConfigError("unknown RE architecture: " + s);
}

struct REModelConfig {
  REArch architecture = REArch::palstm_mini;
  int hidden_dim = 50;
  int num_layers = 1;        // stacked LSTM layers / GCN layers
  double dropout_rate = 0.0;
  int prune_k = 1;           // cgcn only
  int attention_dim = 50;    // palstm only

  void validate() const {
    if (hidden_dim < 1) throw ConfigError("re_model: hidden_dim must be >= 1");
    if (num_layers < 1) throw ConfigError("re_model: num_layers must be >= 1");
    if (dropout_rate < 0 || dropout_rate >= 1)
      throw ConfigError("re_model: dropout_rate must be in [0, 1)");
    if (prune_k < 0) throw ConfigError("re_model: prune_k must be >= 0");
    if (attention_dim < 1) throw ConfigError("re_model: attention_dim must be >= 1");
  }
};

template <typename S>
struct REOutput {
  ad::Var<S> r_hat;   // d_r x batch
  ad::Var<S> logits;  // N_r x batch
  ad::Mat<S> probs;   // N_r x batch, softmax of logits (value only)
};

// One LSTM cell, gate order [i, f, o, g]. The mask row holds state exactly
// at padded positions: h_t = m.h~ + (1-m).h_{t-1}.
template <typename S>
struct LstmCell {
  ad::Parameter<S> wx, wh, b;
  int hidden;

  LstmCell(const std::string& prefix, int in_dim, int h)
      : wx(prefix + ".wx", 4 * h, in_dim),
        wh(prefix + ".wh", 4 * h, h),
        b(prefix + ".b", 4 * h, 1),
        hidden(h) {}

  void init(Rng& rng, double scale) {
    wx.init_uniform(rng, scale);
    wh.init_uniform(rng, scale);
    b.value.setZero();
  }

  void collect(std::vector<ad::Parameter<S>*>& out) {
    out.push_back(&wx);
    out.push_back(&wh);
    out.push_back(&b);
  }

  std::pair<ad::Var<S>, ad::Var<S>> step(ad::Tape<S>& t, ad::Var<S> x,
                                         ad::Var<S> h, ad::Var<S> c,
                                         const ad::RowVec<S>& m) {
    using namespace ad;
    auto z = add(affine(t.leaf(wx), x, t.leaf(b)), matmul(t.leaf(wh), h));
    auto i = sigmoid(slice_rows(z, 0, hidden));
    auto f = sigmoid(slice_rows(z, hidden, hidden));
    auto o = sigmoid(slice_rows(z, 2 * hidden, hidden));
    auto g = tanh_act(slice_rows(z, 3 * hidden, hidden));
    auto c_new = add(mul(f, c), mul(i, g));
    auto h_new = mul(o, tanh_act(c_new));
    const RowVec<S> inv = RowVec<S>::Ones(m.cols()) - m;
    auto c_held = add(scale_cols_const(c_new, m), scale_cols_const(c, inv));
    auto h_held = add(scale_cols_const(h_new, m), scale_cols_const(h, inv));
    return {h_held, c_held};
  }
};

namespace re_detail {

// [word; pos; ner] embedding column per token, batched per timestep.
template <typename S>
std::vector<ad::Var<S>> embed_inputs(ad::Tape<S>& t, const Batch<S>& batch,
                                     EmbeddingBank<S>& bank, double dropout_rate,
                                     bool training, Rng& rng) {
  std::vector<ad::Var<S>> xs;
  xs.reserve(batch.n);
  for (int step = 0; step < batch.n; ++step) {
    auto x = ad::concat_rows(std::vector<ad::Var<S>>{
        bank.embed_tokens(t, batch.tok[step]),
        bank.embed_attributes(t, batch.pos[step]),
        bank.embed_attributes(t, batch.ner[step])});
    xs.push_back(ad::dropout(x, dropout_rate, rng, training));
  }
  return xs;
}

// Run a (possibly stacked) LSTM over all timesteps; returns the top-layer
// hidden state per timestep. reverse=true scans right-to-left (times stay
// indexed left-to-right in the result).
template <typename S>
std::vector<ad::Var<S>> run_lstm(ad::Tape<S>& t, std::vector<LstmCell<S>>& cells,
                                 const std::vector<ad::Var<S>>& xs,
                                 const Batch<S>& batch, double dropout_rate,
                                 bool training, Rng& rng, bool reverse = false) {
  const int n = batch.n;
  std::vector<ad::Var<S>> inputs = xs;
  for (size_t layer = 0; layer < cells.size(); ++layer) {
    std::vector<ad::Var<S>> outputs(n);
    auto h = t.zeros(cells[layer].hidden, batch.size);
    auto c = t.zeros(cells[layer].hidden, batch.size);
    for (int k = 0; k < n; ++k) {
      const int step = reverse ? n - 1 - k : k;
      const ad::RowVec<S> m = batch.mask.row(step);
      std::tie(h, c) = cells[layer].step(t, inputs[step], h, c, m);
      outputs[step] = h;
    }
    if (layer + 1 < cells.size())
      for (auto& o : outputs) o = ad::dropout(o, dropout_rate, rng, training);
    inputs = std::move(outputs);
  }
  return inputs;
}

}  // namespace re_detail

// Unidirectional LSTM + additive position-aware attention:
// score_i = v . tanh(Wa [h_i; h_final; so_emb_i; oo_emb_i] + ba), masked
// softmax over real tokens, r_hat = Wo (sum_i a_i h_i) + bo.
template <typename S>
struct PaLstm {
  REModelConfig cfg;
  std::vector<LstmCell<S>> cells;
  ad::Parameter<S> attn_w, attn_b, attn_v;
  ad::Parameter<S> out_w, out_b;

  PaLstm(const REModelConfig& c, const EmbeddingDims& dims)
      : cfg(c),
        attn_w("re.attn.w", c.attention_dim, 2 * c.hidden_dim + 2 * dims.d_c),
        attn_b("re.attn.b", c.attention_dim, 1),
        attn_v("re.attn.v", 1, c.attention_dim),
        out_w("re.out.w", dims.d_r, c.hidden_dim),
        out_b("re.out.b", dims.d_r, 1) {
    const int in_dim = dims.d_v + 2 * dims.d_c;
    for (int l = 0; l < c.num_layers; ++l)
      cells.emplace_back("re.lstm" + std::to_string(l),
                         l == 0 ? in_dim : c.hidden_dim, c.hidden_dim);
  }

  void init(Rng& rng, double scale = 0.1) {
    for (auto& cell : cells) cell.init(rng, scale);
    attn_w.init_uniform(rng, scale);
    attn_v.init_uniform(rng, scale);
    attn_b.value.setZero();
    out_w.init_uniform(rng, scale);
    out_b.value.setZero();
  }

  void collect(std::vector<ad::Parameter<S>*>& out) {
    for (auto& cell : cells) cell.collect(out);
    out.push_back(&attn_w);
    out.push_back(&attn_b);
    out.push_back(&attn_v);
    out.push_back(&out_w);
    out.push_back(&out_b);
  }

  ad::Var<S> predict(ad::Tape<S>& t, const Batch<S>& batch, EmbeddingBank<S>& bank,
                     bool training, Rng& rng) {
    using namespace ad;
    auto xs = re_detail::embed_inputs(t, batch, bank, cfg.dropout_rate, training, rng);
    auto hs = re_detail::run_lstm(t, cells, xs, batch, cfg.dropout_rate, training, rng);
    auto h_final = hs.back();  // mask-hold carries each sentence's last real h

    std::vector<Var<S>> score_rows;
    score_rows.reserve(batch.n);
    for (int step = 0; step < batch.n; ++step) {
      auto feats = concat_rows(std::vector<Var<S>>{
          hs[step], h_final, bank.embed_attributes(t, batch.so[step]),
          bank.embed_attributes(t, batch.oo[step])});
      auto hidden = tanh_act(affine(t.leaf(attn_w), feats, t.leaf(attn_b)));
      score_rows.push_back(matmul(t.leaf(attn_v), hidden));
    }
    auto attn = masked_softmax(concat_rows(score_rows), batch.mask);

    Var<S> context;
    for (int step = 0; step < batch.n; ++step) {
      auto weighted = scale_cols(hs[step], row(attn, step));
      context = step == 0 ? weighted : add(context, weighted);
    }
    context = dropout(context, cfg.dropout_rate, rng, training);
    return affine(t.leaf(out_w), context, t.leaf(out_b));
  }
};

// BiLSTM encoder + L degree-normalized graph convolutions over the pruned
// dependency tree + (sentence, subject, object) max-pools -> linear to d_r.
template <typename S>
struct Cgcn {
  REModelConfig cfg;
  std::vector<LstmCell<S>> fwd, bwd;
  std::vector<ad::Parameter<S>> gcn_w, gcn_b;
  ad::Parameter<S> out_w, out_b;

  Cgcn(const REModelConfig& c, const EmbeddingDims& dims)
      : cfg(c), out_w("re.out.w", dims.d_r, 3 * c.hidden_dim),
        out_b("re.out.b", dims.d_r, 1) {
    const int in_dim = dims.d_v + 2 * dims.d_c;
    fwd.emplace_back("re.lstm.fwd", in_dim, c.hidden_dim);
    bwd.emplace_back("re.lstm.bwd", in_dim, c.hidden_dim);
    for (int l = 0; l < c.num_layers; ++l) {
      const int in = l == 0 ? 2 * c.hidden_dim : c.hidden_dim;
      gcn_w.emplace_back("re.gcn" + std::to_string(l) + ".w", c.hidden_dim, in);
      gcn_b.emplace_back("re.gcn" + std::to_string(l) + ".b", c.hidden_dim, 1);
    }
  }

  void init(Rng& rng, double scale = 0.1) {
    fwd.front().init(rng, scale);
    bwd.front().init(rng, scale);
    for (auto& w : gcn_w) w.init_uniform(rng, scale);
    for (auto& b : gcn_b) b.value.setZero();
    out_w.init_uniform(rng, scale);
    out_b.value.setZero();
  }

  void collect(std::vector<ad::Parameter<S>*>& out) {
    fwd.front().collect(out);
    bwd.front().collect(out);
    for (size_t l = 0; l < gcn_w.size(); ++l) {
      out.push_back(&gcn_w[l]);
      out.push_back(&gcn_b[l]);
    }
    out.push_back(&out_w);
    out.push_back(&out_b);
  }

  ad::Var<S> predict(ad::Tape<S>& t, const Batch<S>& batch, EmbeddingBank<S>& bank,
                     bool training, Rng& rng) {
    using namespace ad;
    auto xs = re_detail::embed_inputs(t, batch, bank, cfg.dropout_rate, training, rng);
    auto hf = re_detail::run_lstm(t, fwd, xs, batch, cfg.dropout_rate, training, rng);
    auto hb = re_detail::run_lstm(t, bwd, xs, batch, cfg.dropout_rate, training, rng,
                               /*reverse=*/true);
    std::vector<Var<S>> both;
    both.reserve(batch.n);
    for (int step = 0; step < batch.n; ++step)
      both.push_back(concat_rows(std::vector<Var<S>>{hf[step], hb[step]}));
    auto h = stack_timesteps(both);  // 2H x (size*n), sentence-contiguous
    h = dropout(h, cfg.dropout_rate, rng, training);

    for (size_t l = 0; l < gcn_w.size(); ++l) {
      auto agg = graph_aggregate(h, batch.gcn_norm, batch.n, batch.size);
      h = relu(affine(t.leaf(gcn_w[l]), agg, t.leaf(gcn_b[l])));
      if (l + 1 < gcn_w.size())
        h = dropout(h, cfg.dropout_rate, rng, training);
    }

    auto pooled = concat_rows(std::vector<Var<S>>{
        masked_max_tokens(h, batch.gcn_mask, batch.n, batch.size),
        masked_max_tokens(h, batch.subj_mask, batch.n, batch.size),
        masked_max_tokens(h, batch.obj_mask, batch.n, batch.size)});
    pooled = dropout(pooled, cfg.dropout_rate, rng, training);
    return affine(t.leaf(out_w), pooled, t.leaf(out_b));
  }
};

template <typename S>
struct REModel {
  REModelConfig cfg;
  std::optional<PaLstm<S>> palstm;
  std::optional<Cgcn<S>> cgcn;

  REModel(const REModelConfig& c, const EmbeddingDims& dims) : cfg(c) {
    cfg.validate();
    if (cfg.architecture == REArch::palstm_mini)
      palstm.emplace(cfg, dims);
    else
      cgcn.emplace(cfg, dims);
  }

  void init(Rng& rng, double scale = 0.1) {
    if (palstm)
      palstm->init(rng, scale);
    else
      cgcn->init(rng, scale);
  }

  void collect(std::vector<ad::Parameter<S>*>& out) {
    if (palstm)
      palstm->collect(out);
    else
      cgcn->collect(out);
  }

  ad::Var<S> predict(ad::Tape<S>& t, const Batch<S>& batch, EmbeddingBank<S>& bank,
                     bool training, Rng& rng) {
    return palstm ? palstm->predict(t, batch, bank, training, rng)
                  : cgcn->predict(t, batch, bank, training, rng);
  }
};

// Stable columnwise softmax of a logits matrix (values only; used for the
// probability view and for prediction).
template <typename S>
ad::Mat<S> softmax_columns(const ad::Mat<S>& logits) {
  ad::Mat<S> probs(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const S mx = logits.col(b).maxCoeff();
    ad::Vec<S> e = (logits.col(b).array() - mx).exp();
    probs.col(b) = e / e.sum();
  }
  return probs;
}

// r_hat -> logits_k = R[:,k] . r_hat + b_re[k] -> softmax distribution.
template <typename S>
REOutput<S> forward_re(ad::Tape<S>& t, const Batch<S>& batch, EmbeddingBank<S>& bank,
                       REModel<S>& model, bool training, Rng& rng) {
  auto r_hat = model.predict(t, batch, bank, training, rng);
  if (r_hat.rows() != bank.dims.d_r)
    throw ConfigError("forward_re: model output dimension != d_r");
  auto logits = ad::affine(ad::transpose(t.leaf(bank.R)), r_hat, t.leaf(bank.b_re));
  return {r_hat, logits, softmax_columns<S>(logits.value())};
}

// Argmax prediction per sentence; ties resolve to the lowest index.
template <typename S>
std::vector<int> predict_relations(const REOutput<S>& out) {
  std::vector<int> preds(out.logits.cols());
  for (Eigen::Index b = 0; b < out.logits.cols(); ++b) {
    Eigen::Index arg = 0;
    out.logits.value().col(b).maxCoeff(&arg);
    preds[b] = static_cast<int>(arg);
  }
  return preds;
}

}  // namespace jrrelp
