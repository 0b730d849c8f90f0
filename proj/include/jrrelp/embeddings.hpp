#pragma once

// The shared parameter bank. V (tokens), R (relations), A (attributes) and
// the two output biases live here exactly once; the RE and KGLP paths both
// read and write these same objects, which is what makes the parameter
// sharing real rather than a pair of synchronized copies.

#include <string>
#include <vector>

#include "jrrelp/autodiff.hpp"
#include "jrrelp/corpus.hpp"

namespace jrrelp {

struct EmbeddingDims {
  int d_v = 50;  // token embedding size
  int d_r = 50;  // relation embedding size
  int d_c = 10;  // attribute embedding size
};

template <typename S>
struct EmbeddingBank {
  EmbeddingDims dims;
  ad::Parameter<S> V;       // d_v x N_v, PAD column frozen
  ad::Parameter<S> R;       // d_r x N_r
  ad::Parameter<S> A;       // d_c x N_c, PAD column frozen
  ad::Parameter<S> b_re;    // N_r x 1
  ad::Parameter<S> b_kglp;  // |candidate_domain| x 1

  EmbeddingBank(EmbeddingDims d, int n_tokens, int n_relations, int n_attributes,
                int domain_size)
      : dims(d),
        V("V", d.d_v, n_tokens),
        R("R", d.d_r, n_relations),
        A("A", d.d_c, n_attributes),
        b_re("b_re", n_relations, 1),
        b_kglp("b_kglp", domain_size, 1) {
    if (d.d_v < 1 || d.d_r < 1 || d.d_c < 1)
      throw ConfigError("embedding dims must be >= 1");
    if (n_tokens < 2 || n_relations < 1 || n_attributes < 2 || domain_size < 1)
      throw ConfigError("embedding bank sized below its reserved slots");
    V.frozen_col = Vocab::kPad;
    A.frozen_col = Vocab::kPad;
  }

  EmbeddingBank(EmbeddingDims d, const Vocab& vocab, const AnswerSets& answers)
      : EmbeddingBank(d, vocab.num_tokens(), vocab.num_relations(),
                      vocab.num_attributes(),
                      static_cast<int>(answers.domain_size())) {}

  // uniform(-0.1, 0.1) for the embedding matrices, zero biases.
  void init(Rng& rng, double scale = 0.1) {
    V.init_uniform(rng, scale);
    R.init_uniform(rng, scale);
    A.init_uniform(rng, scale);
    b_re.value.setZero();
    b_kglp.value.setZero();
  }

  ad::Var<S> embed_tokens(ad::Tape<S>& t, const std::vector<int>& idx) {
    return t.gather_cols(V, idx);
  }
  ad::Var<S> embed_relations(ad::Tape<S>& t, const std::vector<int>& idx) {
    return t.gather_cols(R, idx);
  }
  ad::Var<S> embed_attributes(ad::Tape<S>& t, const std::vector<int>& idx) {
    return t.gather_cols(A, idx);
  }

  // Gather of V at the candidate-domain columns; gradients flow back into V.
  ad::Var<S> valid_object_matrix(ad::Tape<S>& t, const AnswerSets& answers) {
    if (answers.candidate_domain.empty())
      throw ConfigError("valid_object_matrix: empty candidate domain");
    return t.gather_cols(V, answers.candidate_domain);
  }

  void collect(std::vector<ad::Parameter<S>*>& out) {
    out.push_back(&V);
    out.push_back(&R);
    out.push_back(&A);
    out.push_back(&b_re);
    out.push_back(&b_kglp);
  }
};

// Stable enumeration of every learnable tensor exactly once.
template <typename S, typename... Owners>
std::vector<ad::Parameter<S>*> parameters(EmbeddingBank<S>& bank, Owners&... owners) {
  std::vector<ad::Parameter<S>*> out;
  bank.collect(out);
  (owners.collect(out), ...);
  return out;
}

}  // namespace jrrelp
