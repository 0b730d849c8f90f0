#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "jrrelp/corpus.hpp"
#include "jrrelp/rng.hpp"

using namespace jrrelp;

namespace {

Sentence mk(std::vector<std::string> tokens, int ss, int se, int os, int oe,
            std::string st = "PERSON", std::string ot = "CITY",
            std::string rel = "lives_in") {
  Sentence s;
  const int n = static_cast<int>(tokens.size());
  s.tokens = std::move(tokens);
  s.subj_start = ss;
  s.subj_end = se;
  s.obj_start = os;
  s.obj_end = oe;
  s.subj_type = std::move(st);
  s.obj_type = std::move(ot);
  s.relation = std::move(rel);
  s.pos_tags.assign(n, "NN");
  s.ner_tags.assign(n, "O");
  s.dep_heads.resize(n);
  for (int i = 0; i < n; ++i) s.dep_heads[i] = i;  // chain rooted at token 0
  return s;
}

std::filesystem::path tmpdir() {
  auto d = std::filesystem::temp_directory_path() / "jrrelp_corpus_test";
  std::filesystem::create_directories(d);
  return d;
}

// ---- independent reimplementation of LCA pruning, used as the oracle ----

std::vector<int> ancestor_chain(const Sentence& s, int u) {
  std::vector<int> chain{u};
  while (s.dep_heads[chain.back()] != 0) chain.push_back(s.dep_heads[chain.back()] - 1);
  return chain;
}

BoolMat prune_oracle(const Sentence& s, int k) {
  const int n = s.size();
  // All-pairs tree distances by BFS from every node.
  std::vector<std::vector<int>> adj(n), dist(n, std::vector<int>(n, -1));
  for (int i = 0; i < n; ++i)
    if (s.dep_heads[i] != 0) {
      adj[i].push_back(s.dep_heads[i] - 1);
      adj[s.dep_heads[i] - 1].push_back(i);
    }
  for (int src = 0; src < n; ++src) {
    std::vector<int> q{src};
    dist[src][src] = 0;
    for (size_t qi = 0; qi < q.size(); ++qi)
      for (int w : adj[q[qi]])
        if (dist[src][w] < 0) {
          dist[src][w] = dist[src][q[qi]] + 1;
          q.push_back(w);
        }
  }
  // LCA of all entity tokens = common ancestor with the longest chain suffix.
  std::vector<int> ends;
  for (int i = s.subj_start; i <= s.subj_end; ++i) ends.push_back(i);
  for (int i = s.obj_start; i <= s.obj_end; ++i) ends.push_back(i);
  const auto chain0 = ancestor_chain(s, ends[0]);
  std::set<int> common(chain0.begin(), chain0.end());
  for (int e : ends) {
    const auto chain = ancestor_chain(s, e);
    std::set<int> cs(chain.begin(), chain.end());
    std::set<int> keep;
    std::set_intersection(common.begin(), common.end(), cs.begin(), cs.end(),
                          std::inserter(keep, keep.begin()));
    common = keep;
  }
  int lca = -1, best_depth = -1;
  for (int c : common) {
    const int depth = static_cast<int>(ancestor_chain(s, c).size());
    if (depth > best_depth) {
      best_depth = depth;
      lca = c;
    }
  }
  std::set<int> path;
  for (int e : ends)
    for (int a : ancestor_chain(s, e)) {
      path.insert(a);
      if (a == lca) break;
    }
  std::set<int> kept;
  for (int v = 0; v < n; ++v)
    for (int p : path)
      if (dist[v][p] >= 0 && dist[v][p] <= k) kept.insert(v);
  BoolMat out = BoolMat::Zero(n, n);
  for (int v : kept) {
    out(v, v) = 1;
    const int par = s.dep_heads[v] - 1;
    if (par >= 0 && kept.count(par)) {
      out(v, par) = 1;
      out(par, v) = 1;
    }
  }
  return out;
}

Sentence random_tree_sentence(Rng& rng, int n) {
  std::vector<std::string> toks;
  for (int i = 0; i < n; ++i) toks.push_back("w" + std::to_string(i));
  // Random recursive tree over a random node order.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<int> heads(n, 0);
  for (int i = 1; i < n; ++i)
    heads[order[i]] = order[rng.int_below(i)] + 1;  // parent among earlier nodes
  // Two disjoint spans.
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) pos[i] = i;
  rng.shuffle(pos);
  std::vector<int> four(pos.begin(), pos.begin() + std::min(n, 4));
  std::sort(four.begin(), four.end());
  int ss, se, os, oe;
  if (n >= 4 && rng.bernoulli(0.5)) {
    ss = four[0];
    se = four[1];
    os = four[2];
    oe = four[3];
  } else {
    ss = four[0];
    se = four[0];
    os = four[1];
    oe = four[1];
  }
  if (rng.bernoulli(0.5)) {
    std::swap(ss, os);
    std::swap(se, oe);
  }
  Sentence s = mk(toks, ss, se, os, oe);
  s.dep_heads = heads;
  return s;
}

}  // namespace

TEST_CASE("sentence validation rejects malformed records") {
  auto ok = mk({"a", "b", "c", "d"}, 0, 0, 2, 3);
  CHECK_NOTHROW(validate_sentence(ok));

  auto bad = ok;
  bad.subj_end = 4;
  CHECK_THROWS_AS(validate_sentence(bad), ValidationError);
  bad = ok;
  bad.obj_start = 3;
  bad.obj_end = 2;
  CHECK_THROWS_AS(validate_sentence(bad), ValidationError);
  bad = ok;
  bad.subj_start = 2;  // overlaps object span
  bad.subj_end = 2;
  CHECK_THROWS_AS(validate_sentence(bad), ValidationError);
  bad = ok;
  bad.pos_tags.pop_back();
  CHECK_THROWS_AS(validate_sentence(bad), ValidationError);
  bad = ok;
  bad.dep_heads = {0, 1, 2, 0};  // two roots
  CHECK_THROWS_AS(validate_sentence(bad), ValidationError);
  bad = ok;
  bad.dep_heads = {0, 3, 2, 2};  // 1<->2 cycle, unreachable from root
  CHECK_THROWS_AS(validate_sentence(bad), ValidationError);
  bad = ok;
  bad.dep_heads = {0, 1, 9, 3};  // head out of range
  CHECK_THROWS_AS(validate_sentence(bad), ValidationError);
  bad = ok;
  bad.relation.clear();
  CHECK_THROWS_AS(validate_sentence(bad), ValidationError);

  // Error message names the record when an index is supplied.
  try {
    bad = ok;
    bad.subj_end = 9;
    validate_sentence(bad, 17);
    FAIL("expected throw");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("record 17") != std::string::npos);
  }
}

TEST_CASE("type substitution rewrites both spans") {
  auto s = mk({"Ana", "Maria", "moved", "to", "Lisbon"}, 0, 1, 4, 4);
  auto out = type_substitute(s);
  CHECK(out.tokens == std::vector<std::string>{"SUBJ-PERSON", "SUBJ-PERSON",
                                               "moved", "to", "OBJ-CITY"});
  CHECK(s.tokens[0] == "Ana");  // input untouched
}

TEST_CASE("positional offsets are zero on the span and count outward") {
  auto s = mk({"a", "b", "c", "d", "e", "f"}, 2, 3, 5, 5);
  auto [so, oo] = positional_offsets(s);
  CHECK(so == std::vector<int>{-2, -1, 0, 0, 1, 2});
  CHECK(oo == std::vector<int>{-5, -4, -3, -2, -1, 0});
}

TEST_CASE("offset attribute names clamp to +-60") {
  CHECK(Vocab::so_attr(3) == "SO:3");
  CHECK(Vocab::so_attr(200) == "SO:60");
  CHECK(Vocab::oo_attr(-200) == "OO:-60");
}

TEST_CASE("vocab layout: reserved slots, forced type tokens, frequency order") {
  Dataset d;
  d.split = "train";
  d.sentences.push_back(mk({"x", "rare", "x", "y"}, 0, 0, 3, 3, "PERSON", "CITY",
                           "lives_in"));
  d.sentences.push_back(mk({"y", "x", "q", "q"}, 0, 0, 2, 3, "ORG", "CITY",
                           "NoRelation"));
  auto v = build_vocab(d, 2);

  CHECK(v.tokens[Vocab::kPad] == "<PAD>");
  CHECK(v.tokens[Vocab::kUnk] == "<UNK>");
  CHECK(v.relations[0] == kNoRelation);
  CHECK(v.attributes[0] == "<PAD>");
  CHECK(v.attributes[1] == "<UNK>");

  // Type tokens survive regardless of count; "rare" (count 1) does not.
  CHECK(v.token_id_strict("SUBJ-PERSON") > 1);
  CHECK(v.token_id_strict("SUBJ-ORG") > 1);
  CHECK(v.token_id_strict("OBJ-CITY") > 1);
  CHECK(v.token_id("rare") == Vocab::kUnk);
  // x:3 beats y:2 beats q:2 (tie broken lexicographically).
  CHECK(v.token_id_strict("x") < v.token_id_strict("q"));
  CHECK(v.token_id_strict("q") < v.token_id_strict("y"));

  CHECK(v.relation_id("NoRelation") == 0);
  CHECK_THROWS_AS(v.relation_id("nope"), ValidationError);
  CHECK(v.attribute_id("POS:NN") > 1);
  CHECK(v.attribute_id("NER:O") > 1);
  CHECK(v.attribute_id("SO:0") > 1);
  CHECK(v.attribute_id("garbage") == Vocab::kUnk);

  CHECK_THROWS_AS(build_vocab(d, 0), ConfigError);

  // Deterministic: same corpus, same hash.
  CHECK(build_vocab(d, 2).hash() == v.hash());
  CHECK(build_vocab(d, 1).hash() != v.hash());
}

TEST_CASE("vocab round-trips through disk") {
  Dataset d;
  d.split = "train";
  d.sentences.push_back(mk({"a", "b", "c"}, 0, 0, 2, 2));
  auto v = build_vocab(d, 1);
  const auto path = (tmpdir() / "vocab.json").string();
  v.save(path);
  auto back = Vocab::load(path);
  CHECK(back.hash() == v.hash());
  CHECK(back.token_id_strict("a") == v.token_id_strict("a"));
  CHECK_THROWS_AS(Vocab::load((tmpdir() / "missing.json").string()), IoError);
}

TEST_CASE("answer sets match a brute-force scan on random corpora") {
  Rng rng(101);
  const std::vector<std::string> stypes{"PERSON", "ORG"};
  const std::vector<std::string> otypes{"CITY", "PERSON", "DATE"};
  const std::vector<std::string> rels{"NoRelation", "born_in", "works_for",
                                      "spouse"};
  for (int include_neg = 0; include_neg < 2; ++include_neg) {
    Dataset d;
    d.split = "train";
    for (int i = 0; i < 400; ++i)
      d.sentences.push_back(mk({"a", "b", "c"}, 0, 0, 2, 2, rng.pick(stypes),
                               rng.pick(otypes), rng.pick(rels)));
    auto v = build_vocab(type_substitute(d), 1);
    auto as = build_answer_sets(d, v, include_neg == 1);

    // Oracle: string-keyed scan, re-derived from scratch.
    std::map<std::pair<std::string, std::string>, std::set<std::string>> expect;
    std::set<std::string> domain;
    for (const auto& s : d.sentences) {
      domain.insert("OBJ-" + s.obj_type);
      if (s.relation == "NoRelation" && include_neg == 0) continue;
      expect[{"SUBJ-" + s.subj_type, s.relation}].insert("OBJ-" + s.obj_type);
    }
    std::set<int> expect_domain;
    for (const auto& t : domain) expect_domain.insert(v.token_id_strict(t));
    CHECK(std::vector<int>(expect_domain.begin(), expect_domain.end()) ==
          as.candidate_domain);
    CHECK(as.sets.size() == expect.size());
    for (const auto& [key, objs] : expect) {
      const auto* got =
          as.find(v.token_id_strict(key.first), v.relation_id(key.second));
      REQUIRE(got != nullptr);
      std::set<int> want;
      for (const auto& o : objs) want.insert(v.token_id_strict(o));
      CHECK(std::vector<int>(want.begin(), want.end()) == *got);
      CHECK(std::is_sorted(got->begin(), got->end()));
    }
    // Domain indices are positions in the sorted domain.
    for (size_t i = 0; i < as.candidate_domain.size(); ++i)
      CHECK(as.domain_index(as.candidate_domain[i]) == static_cast<int>(i));
    CHECK(as.domain_index(-5) == -1);
  }
}

TEST_CASE("answer sets require at least one triple") {
  Dataset d;
  d.split = "train";
  d.sentences.push_back(mk({"a", "b"}, 0, 0, 1, 1, "PERSON", "CITY", "NoRelation"));
  auto v = build_vocab(type_substitute(d), 1);
  CHECK_THROWS_AS(build_answer_sets(d, v, false), ValidationError);
  CHECK_NOTHROW(build_answer_sets(d, v, true));
}

TEST_CASE("answer sets round-trip through disk") {
  Rng rng(5);
  Dataset d;
  d.split = "train";
  for (int i = 0; i < 50; ++i)
    d.sentences.push_back(mk({"a", "b", "c"}, 0, 0, 2, 2, "PERSON",
                             rng.bernoulli(0.5) ? "CITY" : "DATE", "born_in"));
  auto v = build_vocab(type_substitute(d), 1);
  auto as = build_answer_sets(d, v, false);
  const auto path = (tmpdir() / "answers.json").string();
  as.save(path);
  auto back = AnswerSets::load(path);
  CHECK(back.hash() == as.hash());
  CHECK(back.candidate_domain == as.candidate_domain);
}

TEST_CASE("LCA pruning on the worked four-token example") {
  // heads: token1 is the root, tokens 0, 2, 3 hang off it.
  auto s = mk({"t0", "t1", "t2", "t3"}, 0, 0, 2, 2);
  s.dep_heads = {2, 0, 2, 2};
  auto adj = prune_dependency_tree(s, 0);
  BoolMat want = BoolMat::Zero(4, 4);
  want(0, 0) = want(1, 1) = want(2, 2) = 1;
  want(0, 1) = want(1, 0) = 1;
  want(2, 1) = want(1, 2) = 1;
  CHECK(adj == want);
  // K=1 pulls token 3 (distance 1 from the path) back in.
  auto adj1 = prune_dependency_tree(s, 1);
  CHECK(adj1(3, 3) == 1);
  CHECK(adj1(3, 1) == 1);
  CHECK(adj1(1, 3) == 1);
}

TEST_CASE("LCA pruning matches the brute-force oracle on random trees") {
  Rng rng(2024);
  for (int trial = 0; trial < 120; ++trial) {
    const int n = 2 + rng.int_below(11);  // up to 12 tokens
    auto s = random_tree_sentence(rng, n);
    const int k = rng.int_below(3);
    BoolMat got = prune_dependency_tree(s, k);
    BoolMat want = prune_oracle(s, k);
    if (got != want) {
      CAPTURE(n);
      CAPTURE(k);
      CAPTURE(trial);
    }
    REQUIRE(got == want);
  }
}

TEST_CASE("pruning validates its inputs") {
  auto s = mk({"a", "b", "c"}, 0, 0, 2, 2);
  CHECK_THROWS_AS(prune_dependency_tree(s, -1), ConfigError);
}

TEST_CASE("dataset JSON round-trips and normalizes no_relation") {
  Dataset d;
  d.split = "train";
  d.sentences.push_back(mk({"Ana", "visited", "Lisbon"}, 0, 0, 2, 2));
  d.sentences.push_back(
      mk({"Bo", "works", "at", "Acme"}, 0, 0, 3, 3, "PERSON", "ORG", "NoRelation"));
  const auto path = (tmpdir() / "data.json").string();
  save_tacred_json(d, path);
  auto back = load_tacred_json(path, "train");
  REQUIRE(back.sentences.size() == 2);
  CHECK(back.sentences[0].tokens == d.sentences[0].tokens);
  CHECK(back.sentences[1].relation == "NoRelation");
  CHECK(dataset_hash(back) == dataset_hash(d));

  // Writing the lowercase TACRED label reads back normalized.
  std::string text = tacred_json_string(d);
  const auto at = text.find("\"NoRelation\"");
  REQUIRE(at != std::string::npos);
  text.replace(at, 12, "\"no_relation\"");
  const auto path2 = (tmpdir() / "data2.json").string();
  std::ofstream(path2) << text;
  CHECK(load_tacred_json(path2, "train").sentences[1].relation == "NoRelation");
}

TEST_CASE("dataset loading reports record index and field on errors") {
  const auto dir = tmpdir();
  const auto missing = (dir / "missing_field.json").string();
  std::ofstream(missing)
      << R"([{"token": ["a"], "subj_start": 0, "subj_end": 0, "obj_start": 0,
              "obj_end": 0, "subj_type": "X", "obj_type": "Y",
              "stanford_pos": ["NN"], "stanford_ner": ["O"],
              "stanford_head": [0]}])";
  try {
    load_tacred_json(missing, "train");
    FAIL("expected throw");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("record 0") != std::string::npos);
    CHECK(msg.find("relation") != std::string::npos);
  }

  const auto garbage = (dir / "garbage.json").string();
  std::ofstream(garbage) << "not json";
  CHECK_THROWS_AS(load_tacred_json(garbage, "train"), IoError);
  CHECK_THROWS_AS(load_tacred_json((dir / "nope.json").string(), "train"), IoError);

  const auto empty = (dir / "empty.json").string();
  std::ofstream(empty) << "[]";
  CHECK_THROWS_AS(load_tacred_json(empty, "train"), ValidationError);
}

TEST_CASE("dev carve is deterministic, disjoint and size-exact") {
  Dataset d;
  d.split = "train";
  for (int i = 0; i < 40; ++i)
    d.sentences.push_back(mk({"tok" + std::to_string(i), "b", "c"}, 0, 0, 2, 2));
  auto [tr1, dev1] = carve_dev(d, 10, 99);
  auto [tr2, dev2] = carve_dev(d, 10, 99);
  auto [tr3, dev3] = carve_dev(d, 10, 100);
  CHECK(dev1.sentences.size() == 10);
  CHECK(tr1.sentences.size() == 30);
  CHECK(dataset_hash(dev1) == dataset_hash(dev2));
  CHECK(dataset_hash(tr1) == dataset_hash(tr2));
  CHECK(dataset_hash(dev1) != dataset_hash(dev3));

  std::multiset<std::string> all, split;
  for (const auto& s : d.sentences) all.insert(s.tokens[0]);
  for (const auto& s : tr1.sentences) split.insert(s.tokens[0]);
  for (const auto& s : dev1.sentences) split.insert(s.tokens[0]);
  CHECK(all == split);

  CHECK_THROWS_AS(carve_dev(d, 0, 1), ConfigError);
  CHECK_THROWS_AS(carve_dev(d, 40, 1), ConfigError);
}
