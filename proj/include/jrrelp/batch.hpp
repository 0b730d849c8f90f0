#pragma once

// Dense packing of a list of (type-substituted) sentences for the models.
// Index matrices are stored per timestep so embedding gathers batch across
// sentences; all masks are exact {0,1} so padded positions cancel bitwise.

#include <vector>

#include "jrrelp/autodiff.hpp"
#include "jrrelp/corpus.hpp"

namespace jrrelp {

template <typename S>
struct Batch {
  int n = 0;      // max sentence length
  int size = 0;   // number of sentences

  // idx[t][b] = index of sentence b at position t (PAD beyond length).
  std::vector<std::vector<int>> tok, pos, ner, so, oo;

  ad::Mat<S> mask;        // n x size, 1 where a real token sits
  ad::Mat<S> subj_mask;   // n x size, 1 on subject span
  ad::Mat<S> obj_mask;    // n x size, 1 on object span
  ad::Mat<S> gcn_mask;    // n x size, 1 on tokens kept by pruning

  // Per-sentence degree-normalized pruned adjacency, zero-padded to n x n.
  std::vector<ad::Mat<S>> gcn_norm;

  std::vector<int> relations;       // gold relation index per sentence
  std::vector<int> subj_type_tok;   // vocab index of SUBJ-<type>
  std::vector<int> obj_type_tok;    // vocab index of OBJ-<type>

  ad::Mat<S> kg_targets;    // |candidate_domain| x size multi-hot
  ad::RowVec<S> kg_mask;    // 1 x size, 1 iff (s_type, r) has an answer set
};

template <typename S>
Batch<S> make_batch(const std::vector<const Sentence*>& sents, const Vocab& vocab,
                    const AnswerSets& answers, int prune_k) {
  if (sents.empty()) throw ValidationError("make_batch: empty sentence list");
  Batch<S> b;
  b.size = static_cast<int>(sents.size());
  for (const Sentence* s : sents) b.n = std::max(b.n, s->size());

  const auto pad_grid = [&b]() {
    return std::vector<std::vector<int>>(
        b.n, std::vector<int>(b.size, Vocab::kPad));
  };
  b.tok = pad_grid();
  b.pos = pad_grid();
  b.ner = pad_grid();
  b.so = pad_grid();
  b.oo = pad_grid();
  b.mask = ad::Mat<S>::Zero(b.n, b.size);
  b.subj_mask = ad::Mat<S>::Zero(b.n, b.size);
  b.obj_mask = ad::Mat<S>::Zero(b.n, b.size);
  b.gcn_mask = ad::Mat<S>::Zero(b.n, b.size);
  b.kg_targets = ad::Mat<S>::Zero(
      static_cast<Eigen::Index>(answers.domain_size()), b.size);
  b.kg_mask = ad::RowVec<S>::Zero(b.size);

  for (int i = 0; i < b.size; ++i) {
    const Sentence& s = *sents[i];
    validate_sentence(s, i);
    const auto [so_off, oo_off] = positional_offsets(s);
    for (int t = 0; t < s.size(); ++t) {
      b.tok[t][i] = vocab.token_id(s.tokens[t]);
      b.pos[t][i] = vocab.attribute_id(Vocab::pos_attr(s.pos_tags[t]));
      b.ner[t][i] = vocab.attribute_id(Vocab::ner_attr(s.ner_tags[t]));
      b.so[t][i] = vocab.attribute_id(Vocab::so_attr(so_off[t]));
      b.oo[t][i] = vocab.attribute_id(Vocab::oo_attr(oo_off[t]));
      b.mask(t, i) = S(1);
    }
    for (int t = s.subj_start; t <= s.subj_end; ++t) b.subj_mask(t, i) = S(1);
    for (int t = s.obj_start; t <= s.obj_end; ++t) b.obj_mask(t, i) = S(1);

    const BoolMat adj = prune_dependency_tree(s, prune_k);
    ad::Mat<S> norm = ad::Mat<S>::Zero(b.n, b.n);
    for (int r = 0; r < s.size(); ++r) {
      S deg = S(0);
      for (int c = 0; c < s.size(); ++c) deg += static_cast<S>(adj(r, c));
      if (deg > S(0)) {
        b.gcn_mask(r, i) = S(1);
        for (int c = 0; c < s.size(); ++c)
          norm(r, c) = static_cast<S>(adj(r, c)) / deg;
      }
    }
    b.gcn_norm.push_back(std::move(norm));

    b.relations.push_back(vocab.relation_id(s.relation));
    b.subj_type_tok.push_back(vocab.token_id("SUBJ-" + s.subj_type));
    b.obj_type_tok.push_back(vocab.token_id("OBJ-" + s.obj_type));

    const auto* set = answers.find(b.subj_type_tok.back(), b.relations.back());
    if (set != nullptr) {
      b.kg_mask(0, i) = S(1);
      for (int obj : *set) {
        const int p = answers.domain_index(obj);
        if (p >= 0) b.kg_targets(p, i) = S(1);
      }
    }
  }
  return b;
}

// Convenience: whole dataset as one batch (tests, tiny corpora).
template <typename S>
Batch<S> make_batch(const Dataset& d, const Vocab& vocab, const AnswerSets& answers,
                    int prune_k) {
  std::vector<const Sentence*> ptrs;
  ptrs.reserve(d.sentences.size());
  for (const auto& s : d.sentences) ptrs.push_back(&s);
  return make_batch<S>(ptrs, vocab, answers, prune_k);
}

}  // namespace jrrelp
