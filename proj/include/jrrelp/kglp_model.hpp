#pragma once

// The KGLP side: merge g(subject-type embedding, relation embedding) -> z,
// scored against the candidate-domain columns of shared V with a sigmoid.
// Two merges: ConvE (reshape both embeddings to grids, stack vertically,
// convolve, project) and DistMult (Hadamard product). The merge is only ever
// called in the (s, r) -> o direction.

#include <optional>
#include <string>
#include <vector>

#include "jrrelp/autodiff.hpp"
#include "jrrelp/batch.hpp"
#include "jrrelp/embeddings.hpp"

namespace jrrelp {

enum class MergeKind { conve, distmult };

inline const char* to_string(MergeKind m) {
  return m == MergeKind::conve ? "conve" : "distmult";
}

inline MergeKind merge_from_string(const std::string& s) {
  if (s == "conve") return MergeKind::conve;
  if (s == "distmult") return MergeKind::distmult;
  throw ConfigError("unknown KGLP merge: " + s);
}

struct KGLPModelConfig {
  MergeKind merge = MergeKind::conve;
  int conve_filters = 8;
  int conve_kernel = 3;      // square k x k
  int reshape_rows = 5;
  int reshape_cols = 10;
  double dropout_rate = 0.0;

  void validate(const EmbeddingDims& dims) const {
    if (dims.d_v != dims.d_r)
      throw ConfigError("kglp_model: merge requires d_v == d_r");
    if (dropout_rate < 0 || dropout_rate >= 1)
      throw ConfigError("kglp_model: dropout_rate must be in [0, 1)");
    if (merge == MergeKind::distmult) return;
    if (reshape_rows < 1 || reshape_cols < 1 ||
        reshape_rows * reshape_cols != dims.d_v)
      throw ConfigError("kglp_model: reshape_rows*reshape_cols must equal d_v");
    if (conve_filters < 1) throw ConfigError("kglp_model: conve_filters must be >= 1");
    const int out_h = 2 * reshape_rows - conve_kernel + 1;
    const int out_w = reshape_cols - conve_kernel + 1;
    if (conve_kernel < 1 || out_h < 1 || out_w < 1)
      throw ConfigError("kglp_model: kernel does not fit the stacked reshape grid");
  }
};

template <typename S>
struct KGLPOutput {
  ad::Var<S> z;           // d_v x batch
  ad::Var<S> logits;      // |candidate_domain| x batch
  ad::Mat<S> obj_probs;   // sigmoid(logits), value only
};

template <typename S>
ad::Mat<S> sigmoid_values(const ad::Mat<S>& x) {
  return x.unaryExpr([](S v) {
    return v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                     : std::exp(v) / (S(1) + std::exp(v));
  });
}

template <typename S>
struct KGLPModel {
  KGLPModelConfig cfg;
  EmbeddingDims dims;
  // ConvE parameters (absent for DistMult, which is parameter-free).
  std::optional<ad::Parameter<S>> conv_k, conv_b, proj_w, proj_b;

  KGLPModel(const KGLPModelConfig& c, const EmbeddingDims& d) : cfg(c), dims(d) {
    cfg.validate(d);
    if (cfg.merge == MergeKind::conve) {
      const int k = cfg.conve_kernel, f = cfg.conve_filters;
      const int out_h = 2 * cfg.reshape_rows - k + 1;
      const int out_w = cfg.reshape_cols - k + 1;
      conv_k.emplace("kglp.conv.k", k * k, f);
      conv_b.emplace("kglp.conv.b", f, 1);
      proj_w.emplace("kglp.proj.w", d.d_v, f * out_h * out_w);
      proj_b.emplace("kglp.proj.b", d.d_v, 1);
    }
  }

  void init(Rng& rng, double scale = 0.1) {
    if (!conv_k) return;
    conv_k->init_uniform(rng, scale);
    conv_b->value.setZero();
    proj_w->init_uniform(rng, scale);
    proj_b->value.setZero();
  }

  void collect(std::vector<ad::Parameter<S>*>& out) {
    if (!conv_k) return;
    out.push_back(&*conv_k);
    out.push_back(&*conv_b);
    out.push_back(&*proj_w);
    out.push_back(&*proj_b);
  }

  // s_emb: d_v x B, r_emb: d_r x B (true relation embedding or the RE model's
  // r_hat — the coupling substitution). Row-major reshape of each embedding
  // to rows x cols stacked vertically is exactly row-concatenation of the
  // flattened vectors, so the stacked image is concat_rows(s, r).
  ad::Var<S> merge(ad::Tape<S>& t, ad::Var<S> s_emb, ad::Var<S> r_emb,
                   bool training, Rng& rng) {
    using namespace ad;
    if (s_emb.rows() != dims.d_v || r_emb.rows() != dims.d_r)
      throw ValidationError("kglp merge: embedding dimension mismatch");
    if (cfg.merge == MergeKind::distmult) return mul(s_emb, r_emb);
    auto img = concat_rows(std::vector<Var<S>>{s_emb, r_emb});
    auto conv = relu(conv2d_valid(img, t.leaf(*conv_k), t.leaf(*conv_b),
                                  2 * cfg.reshape_rows, cfg.reshape_cols,
                                  cfg.conve_kernel, cfg.conve_kernel));
    conv = dropout(conv, cfg.dropout_rate, rng, training);
    return relu(affine(t.leaf(*proj_w), conv, t.leaf(*proj_b)));
  }
};

// obj_probs[p] = sigmoid(V[:,domain[p]] . z + b_kglp[p]).
template <typename S>
KGLPOutput<S> score_objects(ad::Tape<S>& t, ad::Var<S> z, EmbeddingBank<S>& bank,
                            const AnswerSets& answers) {
  auto vdom = bank.valid_object_matrix(t, answers);
  auto logits = ad::affine(ad::transpose(vdom), z, t.leaf(bank.b_kglp));
  return {z, logits, sigmoid_values<S>(logits.value())};
}

// Full KGLP pass with a caller-supplied relation representation.
template <typename S>
KGLPOutput<S> forward_kglp(ad::Tape<S>& t, const Batch<S>& batch,
                           EmbeddingBank<S>& bank, KGLPModel<S>& model,
                           const AnswerSets& answers, ad::Var<S> r_emb,
                           bool training, Rng& rng) {
  auto s_emb = bank.embed_tokens(t, batch.subj_type_tok);
  auto z = model.merge(t, s_emb, r_emb, training, rng);
  return score_objects(t, z, bank, answers);
}

// Convenience overload: true relation embeddings from the shared bank.
template <typename S>
KGLPOutput<S> forward_kglp(ad::Tape<S>& t, const Batch<S>& batch,
                           EmbeddingBank<S>& bank, KGLPModel<S>& model,
                           const AnswerSets& answers, bool training, Rng& rng) {
  return forward_kglp(t, batch, bank, model, answers,
                      bank.embed_relations(t, batch.relations), training, rng);
}

}  // namespace jrrelp
