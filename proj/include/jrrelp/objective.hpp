#pragma once

// Joint objective: L = L_RE + lambda_kglp * L_KGLP + lambda_coupling * L_COUPLING.
// L_RE is softmax cross-entropy over relation labels; L_KGLP is per-example
// mean binary cross-entropy over the candidate-object domain, averaged over
// the examples that carry an answer set; L_COUPLING is the same scoring with
// the RE model's r_hat substituted for the true relation embedding (same
// targets, same mask). A lambda of zero skips that term's graph entirely:
// no forward work, no gradient work, no dropout draws.

#include <optional>

#include "jrrelp/autodiff.hpp"
#include "jrrelp/batch.hpp"
#include "jrrelp/embeddings.hpp"
#include "jrrelp/kglp_model.hpp"
#include "jrrelp/re_model.hpp"

namespace jrrelp {

struct ObjectiveConfig {
  double lambda_kglp = 1.0;
  double lambda_coupling = 1.0;
  bool mean_reduce = true;  // false: sum over examples instead of mean

  void validate() const {
    if (lambda_kglp < 0) throw ConfigError("objective: lambda_kglp must be >= 0");
    if (lambda_coupling < 0)
      throw ConfigError("objective: lambda_coupling must be >= 0");
  }
};

struct LossBreakdown {
  double l_re = 0;
  double l_kglp = 0;      // 0 when the term was skipped
  double l_coupling = 0;  // 0 when the term was skipped
  double l_joint = 0;
  double lambda_kglp = 0;
  double lambda_coupling = 0;

  // Recomputing the sum from the parts reproduces l_joint exactly: skipped
  // terms contribute a literal 0.0 both here and on the tape.
  double recombined() const {
    return l_re + (lambda_kglp * l_kglp + lambda_coupling * l_coupling);
  }
};

template <typename S>
struct JointOutput {
  REOutput<S> re;
  std::optional<KGLPOutput<S>> kglp;
  std::optional<KGLPOutput<S>> coupling;
  ad::Var<S> loss;  // 1x1 root for backward
  LossBreakdown breakdown;
};

template <typename S>
ad::Var<S> loss_re(const Batch<S>& batch, const REOutput<S>& out, bool mean) {
  auto rows = ad::softmax_xent_rows(out.logits, batch.relations);
  const ad::RowVec<S> all = ad::RowVec<S>::Ones(batch.size);
  return ad::masked_batch_reduce(rows, all, mean);
}

template <typename S>
ad::Var<S> loss_kglp(const Batch<S>& batch, const KGLPOutput<S>& out, bool mean) {
  auto rows = ad::bce_logits_rowmean(out.logits, batch.kg_targets);
  return ad::masked_batch_reduce(rows, batch.kg_mask, mean);
}

template <typename S>
JointOutput<S> joint_forward(ad::Tape<S>& t, const Batch<S>& batch,
                             EmbeddingBank<S>& bank, REModel<S>& re_model,
                             KGLPModel<S>& kglp_model, const AnswerSets& answers,
                             const ObjectiveConfig& cfg, bool training, Rng& rng) {
  cfg.validate();
  const S lk = static_cast<S>(cfg.lambda_kglp);
  const S lc = static_cast<S>(cfg.lambda_coupling);

  JointOutput<S> out{forward_re(t, batch, bank, re_model, training, rng),
                     std::nullopt,
                     std::nullopt,
                     ad::Var<S>{},
                     {}};
  auto l_re = loss_re(batch, out.re, cfg.mean_reduce);

  std::optional<ad::Var<S>> side;  // lk*l_kglp + lc*l_coupling, if any
  if (lk > S(0)) {
    out.kglp = forward_kglp(t, batch, bank, kglp_model, answers, training, rng);
    auto lkv = loss_kglp(batch, *out.kglp, cfg.mean_reduce);
    out.breakdown.l_kglp = static_cast<double>(lkv.value()(0, 0));
    side = ad::scale(lkv, lk);
  }
  if (lc > S(0)) {
    out.coupling = forward_kglp(t, batch, bank, kglp_model, answers,
                                out.re.r_hat, training, rng);
    auto lcv = loss_kglp(batch, *out.coupling, cfg.mean_reduce);
    out.breakdown.l_coupling = static_cast<double>(lcv.value()(0, 0));
    auto term = ad::scale(lcv, lc);
    side = side ? ad::add(*side, term) : term;
  }

  out.loss = side ? ad::add(l_re, *side) : l_re;
  out.breakdown.l_re = static_cast<double>(l_re.value()(0, 0));
  out.breakdown.l_joint = static_cast<double>(out.loss.value()(0, 0));
  out.breakdown.lambda_kglp = cfg.lambda_kglp;
  out.breakdown.lambda_coupling = cfg.lambda_coupling;
  return out;
}

}  // namespace jrrelp
