#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "jrrelp/synthetic.hpp"

using namespace jrrelp;

TEST_CASE("generation is byte-identical under the same seed") {
  auto spec = default_synthetic_spec();
  spec.train_size = 200;
  spec.dev_size = 50;
  spec.test_size = 50;
  auto [tr1, dv1, te1] = generate_synthetic(spec, 7);
  auto [tr2, dv2, te2] = generate_synthetic(spec, 7);
  auto [tr3, dv3, te3] = generate_synthetic(spec, 8);
  CHECK(tacred_json_string(tr1) == tacred_json_string(tr2));
  CHECK(tacred_json_string(dv1) == tacred_json_string(dv2));
  CHECK(tacred_json_string(te1) == tacred_json_string(te2));
  CHECK(tacred_json_string(tr1) != tacred_json_string(tr3));
  CHECK(tr1.sentences.size() == 200);
  CHECK(dv1.sentences.size() == 50);
  CHECK(te1.sentences.size() == 50);
  CHECK(tr1.split == "train");
  CHECK(dv1.split == "dev");
  CHECK(te1.split == "test");
}

TEST_CASE("every labeled sentence respects the type-constraint table") {
  auto spec = default_synthetic_spec();
  spec.train_size = 600;
  auto [tr, dv, te] = generate_synthetic(spec, 3);
  std::set<std::tuple<std::string, std::string, std::string>> legal;
  for (const auto& [st, r, ot] : spec.legal)
    legal.insert({spec.entity_types[st], spec.relations[r], spec.entity_types[ot]});
  for (const Dataset* d : {&tr, &dv, &te})
    for (const auto& s : d->sentences) {
      CHECK_NOTHROW(validate_sentence(s));
      if (s.relation != kNoRelation)
        CHECK(legal.count({s.subj_type, s.relation, s.obj_type}) == 1);
    }
}

TEST_CASE("negative fraction holds up to rounding") {
  auto spec = default_synthetic_spec();
  spec.train_size = 500;
  spec.negative_fraction = 0.8;
  auto [tr, dv, te] = generate_synthetic(spec, 11);
  int neg = 0;
  for (const auto& s : tr.sentences) neg += s.relation == kNoRelation;
  CHECK(neg == 400);
}

TEST_CASE("hard negatives reuse trigger templates with globally illegal pairs") {
  auto spec = default_synthetic_spec();
  spec.train_size = 400;
  spec.negative_fraction = 1.0;
  spec.hard_negative_fraction = 1.0;
  auto [tr, dv, te] = generate_synthetic(spec, 13);
  std::set<std::pair<std::string, std::string>> legal_pairs;
  for (const auto& [st, r, ot] : spec.legal)
    legal_pairs.insert({spec.entity_types[st], spec.entity_types[ot]});
  for (const auto& s : tr.sentences) {
    CHECK(s.relation == kNoRelation);
    CHECK(legal_pairs.count({s.subj_type, s.obj_type}) == 0);
  }
}

TEST_CASE("held-out fillers appear only outside the train split") {
  auto spec = default_synthetic_spec();
  spec.train_size = 2000;
  spec.dev_size = 500;
  spec.test_size = 500;
  auto [tr, dv, te] = generate_synthetic(spec, 17);
  const size_t n = spec.fillers.size();
  const size_t train_n =
      n - static_cast<size_t>(spec.heldout_filler_fraction * n);
  std::set<std::string> heldout(spec.fillers.begin() + train_n, spec.fillers.end());
  std::set<std::string> fillers_seen_eval;
  for (const auto& s : tr.sentences)
    for (const auto& t : s.tokens) CHECK(heldout.count(t) == 0);
  for (const Dataset* d : {&dv, &te})
    for (const auto& s : d->sentences)
      for (const auto& t : s.tokens)
        if (heldout.count(t)) fillers_seen_eval.insert(t);
  CHECK(!fillers_seen_eval.empty());  // eval splits do exercise held-out words
}

TEST_CASE("infeasible specs are rejected") {
  auto spec = default_synthetic_spec();
  spec.legal.clear();
  CHECK_THROWS_AS(generate_synthetic(spec, 1), ConfigError);

  spec = default_synthetic_spec();
  spec.templates.erase(
      std::remove_if(spec.templates.begin(), spec.templates.end(),
                     [](const SyntheticTemplate& t) {
                       return t.relation == "born_on";
                     }),
      spec.templates.end());
  CHECK_THROWS_AS(generate_synthetic(spec, 1), ConfigError);

  spec = default_synthetic_spec();
  spec.templates[0].heads[0] = 99;  // broken fixed parse
  CHECK_THROWS_AS(generate_synthetic(spec, 1), ValidationError);

  spec = default_synthetic_spec();
  spec.train_size = 0;
  CHECK_THROWS_AS(generate_synthetic(spec, 1), ConfigError);
}

TEST_CASE("generated corpora compose with the preprocessing pipeline") {
  auto spec = default_synthetic_spec();
  spec.train_size = 300;
  auto [tr, dv, te] = generate_synthetic(spec, 19);
  auto sub = type_substitute(tr);
  auto vocab = build_vocab(sub, 1);
  auto answers = build_answer_sets(sub, vocab, true);
  CHECK(answers.domain_size() == 4);  // OBJ-PERSON/ORG/CITY/DATE all observed
  // Closure: each sentence's own object type belongs to its answer set.
  for (const auto& s : sub.sentences) {
    const auto* set = answers.find(vocab.token_id_strict("SUBJ-" + s.subj_type),
                                   vocab.relation_id(s.relation));
    REQUIRE(set != nullptr);
    const int obj = vocab.token_id_strict("OBJ-" + s.obj_type);
    CHECK(std::find(set->begin(), set->end(), obj) != set->end());
  }
  // Every sentence prunes cleanly at the default distance.
  for (const auto& s : sub.sentences) {
    auto adj = prune_dependency_tree(s, 1);
    CHECK(adj.rows() == s.size());
    CHECK((adj.transpose() == adj));
  }
}
