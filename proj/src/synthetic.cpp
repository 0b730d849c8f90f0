#include "jrrelp/synthetic.hpp"

#include <algorithm>
#include <set>

#include "jrrelp/hashing.hpp"

namespace jrrelp {

namespace {

int find_placeholder(const SyntheticTemplate& t, const std::string& ph) {
  for (size_t i = 0; i < t.tokens.size(); ++i)
    if (t.tokens[i] == ph) return static_cast<int>(i);
  return -1;
}

int index_of(const std::vector<std::string>& v, const std::string& s) {
  for (size_t i = 0; i < v.size(); ++i)
    if (v[i] == s) return static_cast<int>(i);
  return -1;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (entity_types.empty()) throw ConfigError("synthetic spec: no entity types");
  if (relations.empty()) throw ConfigError("synthetic spec: no relations");
  if (legal.empty()) throw ConfigError("synthetic spec: no legal triple");
  if (train_size <= 0 || dev_size <= 0 || test_size <= 0)
    throw ConfigError("synthetic spec: split sizes must be positive");
  if (negative_fraction < 0 || negative_fraction > 1 ||
      hard_negative_fraction < 0 || hard_negative_fraction > 1 ||
      heldout_filler_fraction < 0 || heldout_filler_fraction >= 1)
    throw ConfigError("synthetic spec: fractions out of range");
  if (fillers.empty()) throw ConfigError("synthetic spec: empty filler pool");
  for (const auto& [st, r, ot] : legal) {
    if (st < 0 || st >= static_cast<int>(entity_types.size()) || ot < 0 ||
        ot >= static_cast<int>(entity_types.size()) || r < 0 ||
        r >= static_cast<int>(relations.size()))
      throw ConfigError("synthetic spec: legal-triple index out of range");
  }
  for (const auto& rel : relations) {
    bool has_template = false, has_triple = false;
    for (const auto& t : templates) has_template |= t.relation == rel;
    for (const auto& [st, r, ot] : legal) has_triple |= relations[r] == rel;
    if (!has_template)
      throw ConfigError("synthetic spec: relation without template: " + rel);
    if (!has_triple)
      throw ConfigError("synthetic spec: relation without legal triple: " + rel);
  }
  bool has_neutral = false;
  for (const auto& t : templates) {
    if (t.relation.empty())
      has_neutral = true;
    else if (index_of(relations, t.relation) < 0)
      throw ConfigError("synthetic spec: template names unknown relation: " +
                        t.relation);
    const int n = static_cast<int>(t.tokens.size());
    if (static_cast<int>(t.heads.size()) != n ||
        static_cast<int>(t.pos.size()) != n)
      throw ConfigError("synthetic spec: template arrays disagree in length");
    const int sp = find_placeholder(t, "$SUBJ"), op = find_placeholder(t, "$OBJ");
    if (sp < 0 || op < 0 || sp == op)
      throw ConfigError("synthetic spec: template needs one $SUBJ and one $OBJ");
    // The fixed parse must be a valid tree: borrow the sentence validator.
    Sentence probe;
    probe.tokens = t.tokens;
    probe.subj_start = probe.subj_end = sp;
    probe.obj_start = probe.obj_end = op;
    probe.subj_type = "T";
    probe.obj_type = "T";
    probe.relation = t.relation.empty() ? std::string(kNoRelation) : t.relation;
    probe.pos_tags = t.pos;
    probe.ner_tags.assign(t.tokens.size(), "O");
    probe.dep_heads = t.heads;
    validate_sentence(probe);
  }
  if (negative_fraction > 0 && !has_neutral && hard_negative_fraction < 1)
    throw ConfigError("synthetic spec: negatives requested but no neutral template");
}

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec s;
  s.entity_types = {"PERSON", "ORG", "CITY", "DATE"};
  s.relations = {"lives_in", "based_in", "works_for", "founded_on", "born_on"};
  const int P = 0, O = 1, C = 2, D = 3;
  s.legal = {{P, 0, C}, {O, 1, C}, {P, 2, O}, {O, 3, D}, {P, 4, D}};

  auto add = [&s](std::string rel, std::vector<std::string> toks,
                  std::vector<int> heads, std::vector<std::string> pos) {
    s.templates.push_back({std::move(rel), std::move(toks), std::move(heads),
                           std::move(pos)});
  };
  add("lives_in", {"$SUBJ", "has", "lived", "in", "$OBJ", "since", "$F"},
      {3, 3, 0, 5, 3, 7, 3}, {"NNP", "VBZ", "VBN", "IN", "NNP", "IN", "NN"});
  add("lives_in", {"$SUBJ", "resides", "near", "the", "$F", "district", "of", "$OBJ"},
      {2, 0, 6, 6, 6, 2, 8, 6},
      {"NNP", "VBZ", "IN", "DT", "NN", "NN", "IN", "NNP"});
  add("based_in", {"$SUBJ", "is", "headquartered", "in", "$OBJ", "$F"},
      {3, 3, 0, 5, 3, 3}, {"NNP", "VBZ", "VBN", "IN", "NNP", "RB"});
  add("based_in", {"the", "$F", "firm", "$SUBJ", "operates", "from", "$OBJ"},
      {3, 3, 4, 5, 0, 7, 5}, {"DT", "NN", "NN", "NNP", "VBZ", "IN", "NNP"});
  add("works_for", {"$SUBJ", "works", "for", "$OBJ", "as", "a", "$F"},
      {2, 0, 4, 2, 7, 7, 2}, {"NNP", "VBZ", "IN", "NNP", "IN", "DT", "NN"});
  add("works_for", {"$SUBJ", "joined", "$OBJ", "after", "the", "$F"},
      {2, 0, 2, 6, 6, 2}, {"NNP", "VBD", "NNP", "IN", "DT", "NN"});
  add("founded_on", {"$SUBJ", "was", "established", "on", "$OBJ", "in", "$F"},
      {3, 3, 0, 5, 3, 7, 3}, {"NNP", "VBD", "VBN", "IN", "NNP", "IN", "NN"});
  add("founded_on", {"records", "show", "$SUBJ", "began", "operations", "on", "$OBJ"},
      {2, 0, 4, 2, 4, 7, 4}, {"NNS", "VBP", "NNP", "VBD", "NNS", "IN", "NNP"});
  add("born_on", {"$SUBJ", "was", "born", "on", "$OBJ", "in", "the", "$F"},
      {3, 3, 0, 5, 3, 8, 8, 3},
      {"NNP", "VBD", "VBN", "IN", "NNP", "IN", "DT", "NN"});
  add("born_on", {"$SUBJ", "celebrated", "a", "birthday", "on", "$OBJ"},
      {2, 0, 4, 2, 6, 2}, {"NNP", "VBD", "DT", "NN", "IN", "NNP"});
  add("", {"$SUBJ", "and", "$OBJ", "appeared", "in", "the", "$F", "report"},
      {4, 3, 1, 0, 8, 8, 8, 4},
      {"NNP", "CC", "NNP", "VBD", "IN", "DT", "NN", "NN"});
  add("", {"$SUBJ", "mentioned", "$OBJ", "during", "the", "$F"},
      {2, 0, 2, 6, 6, 2}, {"NNP", "VBD", "NNP", "IN", "DT", "NN"});

  s.entity_pool["PERSON"] = {"Alice", "Boris",  "Chioma", "Dmitri", "Elena",
                             "Farid", "Greta",  "Hiro",   "Iris",   "Jonas"};
  s.entity_pool["ORG"] = {"Acme",    "Borealis", "Cobalt", "Dynacorp", "Everline",
                          "Fulcrum", "Gantry",   "Helix",  "Ionix",    "Juniper"};
  s.entity_pool["CITY"] = {"Amsterdam", "Bergen", "Cairo", "Denver", "Esbjerg",
                           "Fukuoka",   "Geneva", "Hanoi", "Izmir",  "Jakarta"};
  s.entity_pool["DATE"] = {"1870", "1912", "1955", "1968", "1977",
                           "1984", "1991", "2003", "2010", "2018"};
  s.fillers = {"report",     "meeting", "village", "harbor",  "festival",
               "winter",     "summer",  "library", "market",  "garden",
               "bridge",     "station", "journal", "season",  "morning",
               "conference", "archive", "museum",  "quarter", "review"};
  return s;
}

namespace {

struct Generator {
  const SyntheticSpec& spec;
  std::vector<int> relation_templates;          // indices of trigger templates
  std::vector<int> neutral_templates;
  std::vector<std::pair<int, int>> illegal_pairs;  // legal under no relation
  std::unordered_map<std::string, std::vector<std::string>> pools;

  explicit Generator(const SyntheticSpec& sp) : spec(sp) {
    for (size_t i = 0; i < sp.templates.size(); ++i) {
      if (sp.templates[i].relation.empty())
        neutral_templates.push_back(static_cast<int>(i));
      else
        relation_templates.push_back(static_cast<int>(i));
    }
    std::set<std::pair<int, int>> legal_pairs;
    for (const auto& [st, r, ot] : sp.legal) legal_pairs.insert({st, ot});
    const int E = static_cast<int>(sp.entity_types.size());
    for (int a = 0; a < E; ++a)
      for (int b = 0; b < E; ++b)
        if (!legal_pairs.count({a, b})) illegal_pairs.push_back({a, b});
    for (const auto& ty : sp.entity_types) {
      auto it = sp.entity_pool.find(ty);
      if (it != sp.entity_pool.end() && !it->second.empty()) {
        pools[ty] = it->second;
      } else {
        std::vector<std::string> names;
        for (int k = 0; k < 10; ++k) names.push_back(ty + "_" + std::to_string(k));
        pools[ty] = std::move(names);
      }
    }
  }

  std::string filler(Rng& rng, bool train_split) const {
    const size_t n = spec.fillers.size();
    const size_t train_n = std::max<size_t>(
        1, n - static_cast<size_t>(spec.heldout_filler_fraction * n));
    const size_t limit = train_split ? train_n : n;
    return spec.fillers[rng.below(limit)];
  }

  Sentence instantiate(const SyntheticTemplate& t, int s_type, int o_type,
                       const std::string& relation, Rng& rng,
                       bool train_split) const {
    Sentence s;
    const auto& st = spec.entity_types[s_type];
    const auto& ot = spec.entity_types[o_type];
    s.subj_type = st;
    s.obj_type = ot;
    s.relation = relation;
    s.pos_tags = t.pos;
    s.dep_heads = t.heads;
    s.ner_tags.assign(t.tokens.size(), "O");
    for (size_t i = 0; i < t.tokens.size(); ++i) {
      const auto& tok = t.tokens[i];
      if (tok == "$SUBJ") {
        s.subj_start = s.subj_end = static_cast<int>(i);
        s.tokens.push_back(pools.at(st)[rng.below(pools.at(st).size())]);
        s.ner_tags[i] = st;
      } else if (tok == "$OBJ") {
        s.obj_start = s.obj_end = static_cast<int>(i);
        s.tokens.push_back(pools.at(ot)[rng.below(pools.at(ot).size())]);
        s.ner_tags[i] = ot;
      } else if (tok == "$F") {
        s.tokens.push_back(filler(rng, train_split));
      } else {
        s.tokens.push_back(tok);
      }
    }
    validate_sentence(s);
    return s;
  }

  Dataset make_split(const std::string& split, int size, Rng& rng) const {
    const bool train_split = split == "train";
    const int n_neg = static_cast<int>(spec.negative_fraction * size + 0.5);
    const int n_hard =
        static_cast<int>(spec.hard_negative_fraction * n_neg + 0.5);
    std::vector<int> kinds;  // 0 positive, 1 hard negative, 2 neutral negative
    for (int i = 0; i < size - n_neg; ++i) kinds.push_back(0);
    for (int i = 0; i < n_hard; ++i) kinds.push_back(1);
    for (int i = 0; i < n_neg - n_hard; ++i) kinds.push_back(2);
    rng.shuffle(kinds);

    Dataset d;
    d.split = split;
    for (int kind : kinds) {
      if (kind == 1 && illegal_pairs.empty()) kind = 2;
      if (kind == 2 && neutral_templates.empty()) kind = 1;
      if (kind == 1 && illegal_pairs.empty())
        throw ValidationError(
            "synthetic spec: negatives requested but every type pair is legal "
            "and no neutral template exists");
      if (kind == 0) {
        const auto& [st, r, ot] = spec.legal[rng.below(spec.legal.size())];
        std::vector<int> cands;
        for (int ti : relation_templates)
          if (spec.templates[ti].relation == spec.relations[r]) cands.push_back(ti);
        const int ti = cands[rng.below(cands.size())];
        d.sentences.push_back(instantiate(spec.templates[ti], st, ot,
                                          spec.relations[r], rng, train_split));
      } else if (kind == 1) {
        const int ti = relation_templates[rng.below(relation_templates.size())];
        const auto [st, ot] = illegal_pairs[rng.below(illegal_pairs.size())];
        d.sentences.push_back(instantiate(spec.templates[ti], st, ot,
                                          kNoRelation, rng, train_split));
      } else {
        const int ti = neutral_templates[rng.below(neutral_templates.size())];
        const int st = rng.int_below(static_cast<int>(spec.entity_types.size()));
        const int ot = rng.int_below(static_cast<int>(spec.entity_types.size()));
        d.sentences.push_back(instantiate(spec.templates[ti], st, ot,
                                          kNoRelation, rng, train_split));
      }
    }
    return d;
  }
};

}  // namespace

std::tuple<Dataset, Dataset, Dataset> generate_synthetic(const SyntheticSpec& spec,
                                                         uint64_t seed) {
  spec.validate();
  Generator gen(spec);
  Rng tr = Rng::derive(seed, fnv1a("synth.train"));
  Rng dv = Rng::derive(seed, fnv1a("synth.dev"));
  Rng te = Rng::derive(seed, fnv1a("synth.test"));
  return {gen.make_split("train", spec.train_size, tr),
          gen.make_split("dev", spec.dev_size, dv),
          gen.make_split("test", spec.test_size, te)};
}

}  // namespace jrrelp
