#include "jrrelp/corpus.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "jrrelp/hashing.hpp"

namespace jrrelp {

namespace {

using ordered_json = nlohmann::ordered_json;

int tree_root(const Sentence& s) {
  for (int i = 0; i < s.size(); ++i)
    if (s.dep_heads[i] == 0) return i;
  return -1;
}

std::vector<int> parents(const Sentence& s) {
  std::vector<int> p(s.size());
  for (int i = 0; i < s.size(); ++i) p[i] = s.dep_heads[i] - 1;
  return p;
}

}  // namespace

// --- Vocab -------------------------------------------------------------------

int Vocab::token_id(const std::string& t) const {
  auto it = token_ids.find(t);
  return it == token_ids.end() ? kUnk : it->second;
}

int Vocab::token_id_strict(const std::string& t) const {
  auto it = token_ids.find(t);
  if (it == token_ids.end())
    throw ValidationError("token not in vocabulary: " + t);
  return it->second;
}

int Vocab::relation_id(const std::string& r) const {
  auto it = relation_ids.find(r);
  if (it == relation_ids.end())
    throw ValidationError("unknown relation: " + r);
  return it->second;
}

int Vocab::attribute_id(const std::string& a) const {
  auto it = attribute_ids.find(a);
  return it == attribute_ids.end() ? kUnk : it->second;
}

std::string Vocab::so_attr(int offset) {
  offset = std::clamp(offset, -kMaxOffset, kMaxOffset);
  return "SO:" + std::to_string(offset);
}

std::string Vocab::oo_attr(int offset) {
  offset = std::clamp(offset, -kMaxOffset, kMaxOffset);
  return "OO:" + std::to_string(offset);
}

uint64_t Vocab::hash() const {
  Fnv1a h;
  for (const auto& t : tokens) h.update(t).update("\x1f");
  h.update("\x1e");
  for (const auto& r : relations) h.update(r).update("\x1f");
  h.update("\x1e");
  for (const auto& a : attributes) h.update(a).update("\x1f");
  return h.digest();
}

void Vocab::rebuild_maps() {
  token_ids.clear();
  relation_ids.clear();
  attribute_ids.clear();
  for (size_t i = 0; i < tokens.size(); ++i) token_ids[tokens[i]] = static_cast<int>(i);
  for (size_t i = 0; i < relations.size(); ++i)
    relation_ids[relations[i]] = static_cast<int>(i);
  for (size_t i = 0; i < attributes.size(); ++i)
    attribute_ids[attributes[i]] = static_cast<int>(i);
}

void Vocab::save(const std::string& path) const {
  ordered_json j;
  j["tokens"] = tokens;
  j["relations"] = relations;
  j["attributes"] = attributes;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocab file: " + path);
  out << j.dump(1, '\t') << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocab file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("failed to parse vocab file " + path + ": " + e.what());
  }
  Vocab v;
  v.tokens = j.at("tokens").get<std::vector<std::string>>();
  v.relations = j.at("relations").get<std::vector<std::string>>();
  v.attributes = j.at("attributes").get<std::vector<std::string>>();
  v.rebuild_maps();
  return v;
}

// --- AnswerSets ----------------------------------------------------------------

const std::vector<int>* AnswerSets::find(int subj_type_id, int relation_id) const {
  auto it = sets.find({subj_type_id, relation_id});
  return it == sets.end() ? nullptr : &it->second;
}

int AnswerSets::domain_index(int obj_type_token) const {
  auto it = domain_pos.find(obj_type_token);
  return it == domain_pos.end() ? -1 : it->second;
}

uint64_t AnswerSets::hash() const {
  Fnv1a h;
  for (int d : candidate_domain) h.update_u64(static_cast<uint64_t>(d));
  for (const auto& [key, objs] : sets) {
    h.update_u64(static_cast<uint64_t>(key.first));
    h.update_u64(static_cast<uint64_t>(key.second));
    for (int o : objs) h.update_u64(static_cast<uint64_t>(o));
    h.update_u64(UINT64_MAX);
  }
  return h.digest();
}

void AnswerSets::save(const std::string& path) const {
  ordered_json j;
  j["candidate_domain"] = candidate_domain;
  ordered_json entries = ordered_json::array();
  for (const auto& [key, objs] : sets) {
    ordered_json e;
    e["subj_type"] = key.first;
    e["relation"] = key.second;
    e["objects"] = objs;
    entries.push_back(e);
  }
  j["sets"] = entries;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write answer-set file: " + path);
  out << j.dump(1, '\t') << "\n";
}

AnswerSets AnswerSets::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read answer-set file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("failed to parse answer-set file " + path + ": " + e.what());
  }
  AnswerSets a;
  a.candidate_domain = j.at("candidate_domain").get<std::vector<int>>();
  for (size_t i = 0; i < a.candidate_domain.size(); ++i)
    a.domain_pos[a.candidate_domain[i]] = static_cast<int>(i);
  for (const auto& e : j.at("sets")) {
    a.sets[{e.at("subj_type").get<int>(), e.at("relation").get<int>()}] =
        e.at("objects").get<std::vector<int>>();
  }
  return a;
}

// --- validation ---------------------------------------------------------------

void validate_sentence(const Sentence& s, int record_index) {
  const auto fail = [record_index](const std::string& msg) {
    std::ostringstream os;
    if (record_index >= 0) os << "record " << record_index << ": ";
    os << msg;
    throw ValidationError(os.str());
  };
  const int n = s.size();
  if (n == 0) fail("sentence has no tokens");
  if (static_cast<int>(s.pos_tags.size()) != n) fail("pos tag count != token count");
  if (static_cast<int>(s.ner_tags.size()) != n) fail("ner tag count != token count");
  if (static_cast<int>(s.dep_heads.size()) != n) fail("head count != token count");
  if (s.subj_start < 0 || s.subj_start > s.subj_end || s.subj_end >= n)
    fail("subject span out of range");
  if (s.obj_start < 0 || s.obj_start > s.obj_end || s.obj_end >= n)
    fail("object span out of range");
  if (s.subj_start <= s.obj_end && s.obj_start <= s.subj_end)
    fail("subject and object spans overlap");
  if (s.subj_type.empty() || s.obj_type.empty()) fail("missing entity type");
  if (s.relation.empty()) fail("missing relation");

  int roots = 0;
  for (int i = 0; i < n; ++i) {
    if (s.dep_heads[i] < 0 || s.dep_heads[i] > n) fail("head index out of range");
    if (s.dep_heads[i] == 0) ++roots;
  }
  if (roots != 1) fail("dependency tree must have exactly one root");
  // every node must reach the root in at most n steps
  for (int i = 0; i < n; ++i) {
    int cur = i, steps = 0;
    while (s.dep_heads[cur] != 0) {
      cur = s.dep_heads[cur] - 1;
      if (++steps > n) fail("dependency heads contain a cycle");
    }
  }
}

// --- preprocessing ---------------------------------------------------------------

Sentence type_substitute(const Sentence& s) {
  validate_sentence(s);
  Sentence out = s;
  const std::string subj = "SUBJ-" + s.subj_type;
  const std::string obj = "OBJ-" + s.obj_type;
  for (int i = s.subj_start; i <= s.subj_end; ++i) out.tokens[i] = subj;
  for (int i = s.obj_start; i <= s.obj_end; ++i) out.tokens[i] = obj;
  return out;
}

Dataset type_substitute(const Dataset& d) {
  Dataset out;
  out.split = d.split;
  out.sentences.reserve(d.sentences.size());
  for (const auto& s : d.sentences) out.sentences.push_back(type_substitute(s));
  return out;
}

std::pair<std::vector<int>, std::vector<int>> positional_offsets(const Sentence& s) {
  const int n = s.size();
  std::vector<int> so(n), oo(n);
  for (int i = 0; i < n; ++i) {
    so[i] = i < s.subj_start ? i - s.subj_start : (i > s.subj_end ? i - s.subj_end : 0);
    oo[i] = i < s.obj_start ? i - s.obj_start : (i > s.obj_end ? i - s.obj_end : 0);
  }
  return {so, oo};
}

Vocab build_vocab(const Dataset& train, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  Vocab v;
  v.tokens = {"<PAD>", "<UNK>"};
  v.relations = {kNoRelation};
  v.attributes = {"<PAD>", "<UNK>"};

  // Type tokens are always retained, independent of frequency.
  std::set<std::string> type_tokens;
  std::unordered_map<std::string, int> counts;
  std::set<std::string> rels, attrs;
  for (const auto& s : train.sentences) {
    type_tokens.insert("SUBJ-" + s.subj_type);
    type_tokens.insert("OBJ-" + s.obj_type);
    for (const auto& t : s.tokens) ++counts[t];
    rels.insert(s.relation);
    for (const auto& p : s.pos_tags) attrs.insert(Vocab::pos_attr(p));
    for (const auto& t : s.ner_tags) attrs.insert(Vocab::ner_attr(t));
    auto [so, oo] = positional_offsets(s);
    for (int x : so) attrs.insert(Vocab::so_attr(x));
    for (int x : oo) attrs.insert(Vocab::oo_attr(x));
  }
  for (const auto& t : type_tokens) v.tokens.push_back(t);

  // Remaining tokens by descending frequency, ties lexicographic.
  std::vector<std::pair<int, std::string>> freq;
  for (const auto& [tok, c] : counts)
    if (c >= min_count && !type_tokens.count(tok)) freq.emplace_back(-c, tok);
  std::sort(freq.begin(), freq.end());
  for (const auto& [negc, tok] : freq) v.tokens.push_back(tok);

  for (const auto& r : rels)
    if (r != kNoRelation) v.relations.push_back(r);
  for (const auto& a : attrs) v.attributes.push_back(a);

  v.rebuild_maps();
  return v;
}

AnswerSets build_answer_sets(const Dataset& train, const Vocab& vocab,
                             bool include_negative_relation) {
  AnswerSets out;
  std::set<int> domain;
  std::map<std::pair<int, int>, std::set<int>> accum;
  for (const auto& s : train.sentences) {
    const int subj = vocab.token_id_strict("SUBJ-" + s.subj_type);
    const int obj = vocab.token_id_strict("OBJ-" + s.obj_type);
    domain.insert(obj);
    if (s.relation == kNoRelation && !include_negative_relation) continue;
    accum[{subj, vocab.relation_id(s.relation)}].insert(obj);
  }
  if (accum.empty()) throw ValidationError("no triples extracted");
  out.candidate_domain.assign(domain.begin(), domain.end());
  for (size_t i = 0; i < out.candidate_domain.size(); ++i)
    out.domain_pos[out.candidate_domain[i]] = static_cast<int>(i);
  for (auto& [key, objs] : accum)
    out.sets[key] = std::vector<int>(objs.begin(), objs.end());
  return out;
}

BoolMat prune_dependency_tree(const Sentence& s, int k) {
  validate_sentence(s);
  if (k < 0) throw ConfigError("prune distance must be >= 0");
  const int n = s.size();
  const std::vector<int> par = parents(s);

  std::vector<int> depth(n, -1);
  std::vector<int> order;  // nodes in non-decreasing depth
  {
    const int root = tree_root(s);
    depth[root] = 0;
    std::deque<int> q{root};
    std::vector<std::vector<int>> children(n);
    for (int i = 0; i < n; ++i)
      if (par[i] >= 0) children[par[i]].push_back(i);
    while (!q.empty()) {
      const int u = q.front();
      q.pop_front();
      order.push_back(u);
      for (int c : children[u]) {
        depth[c] = depth[u] + 1;
        q.push_back(c);
      }
    }
  }

  auto lca2 = [&](int a, int b) {
    while (depth[a] > depth[b]) a = par[a];
    while (depth[b] > depth[a]) b = par[b];
    while (a != b) {
      a = par[a];
      b = par[b];
    }
    return a;
  };

  std::vector<int> endpoints;
  for (int i = s.subj_start; i <= s.subj_end; ++i) endpoints.push_back(i);
  for (int i = s.obj_start; i <= s.obj_end; ++i) endpoints.push_back(i);
  int lca = endpoints.front();
  for (int e : endpoints) lca = lca2(lca, e);

  std::vector<char> keep(n, 0);
  for (int e : endpoints) {
    int cur = e;
    while (true) {
      keep[cur] = 1;
      if (cur == lca) break;
      cur = par[cur];
    }
  }

  // Expand by tree distance <= k around the path (BFS over undirected edges).
  if (k > 0) {
    std::vector<int> dist(n, -1);
    std::deque<int> q;
    for (int i = 0; i < n; ++i)
      if (keep[i]) {
        dist[i] = 0;
        q.push_back(i);
      }
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i)
      if (par[i] >= 0) {
        adj[i].push_back(par[i]);
        adj[par[i]].push_back(i);
      }
    while (!q.empty()) {
      const int u = q.front();
      q.pop_front();
      if (dist[u] == k) continue;
      for (int w : adj[u])
        if (dist[w] < 0) {
          dist[w] = dist[u] + 1;
          keep[w] = 1;
          q.push_back(w);
        }
    }
  }

  BoolMat adj = BoolMat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    adj(i, i) = 1;
    if (par[i] >= 0 && keep[par[i]]) {
      adj(i, par[i]) = 1;
      adj(par[i], i) = 1;
    }
  }
  return adj;
}

// --- TACRED-style JSON I/O ---------------------------------------------------

namespace {

const char* kFields[] = {"token",        "subj_start",   "subj_end",
                         "obj_start",    "obj_end",      "subj_type",
                         "obj_type",     "stanford_pos", "stanford_ner",
                         "stanford_head", "relation"};

Sentence record_to_sentence(const ordered_json& rec, int index) {
  for (const char* f : kFields)
    if (!rec.contains(f))
      throw ValidationError("record " + std::to_string(index) +
                            ": missing field " + f);
  Sentence s;
  try {
    s.tokens = rec.at("token").get<std::vector<std::string>>();
    s.subj_start = rec.at("subj_start").get<int>();
    s.subj_end = rec.at("subj_end").get<int>();
    s.obj_start = rec.at("obj_start").get<int>();
    s.obj_end = rec.at("obj_end").get<int>();
    s.subj_type = rec.at("subj_type").get<std::string>();
    s.obj_type = rec.at("obj_type").get<std::string>();
    s.pos_tags = rec.at("stanford_pos").get<std::vector<std::string>>();
    s.ner_tags = rec.at("stanford_ner").get<std::vector<std::string>>();
    s.dep_heads = rec.at("stanford_head").get<std::vector<int>>();
    s.relation = rec.at("relation").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("record " + std::to_string(index) +
                          ": malformed field: " + e.what());
  }
  if (s.relation == "no_relation") s.relation = kNoRelation;
  validate_sentence(s, index);
  return s;
}

}  // namespace

Dataset load_tacred_json(const std::string& path, const std::string& split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read dataset file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("failed to parse dataset file " + path + ": " + e.what());
  }
  if (!j.is_array()) throw ValidationError("dataset file must be a JSON array");
  if (j.empty()) throw ValidationError("empty dataset");
  Dataset d;
  d.split = split;
  d.sentences.reserve(j.size());
  for (size_t i = 0; i < j.size(); ++i)
    d.sentences.push_back(record_to_sentence(j[i], static_cast<int>(i)));
  return d;
}

std::string tacred_json_string(const Dataset& d) {
  ordered_json arr = ordered_json::array();
  for (const auto& s : d.sentences) {
    ordered_json rec;
    rec["token"] = s.tokens;
    rec["subj_start"] = s.subj_start;
    rec["subj_end"] = s.subj_end;
    rec["obj_start"] = s.obj_start;
    rec["obj_end"] = s.obj_end;
    rec["subj_type"] = s.subj_type;
    rec["obj_type"] = s.obj_type;
    rec["stanford_pos"] = s.pos_tags;
    rec["stanford_ner"] = s.ner_tags;
    rec["stanford_head"] = s.dep_heads;
    rec["relation"] = s.relation;
    arr.push_back(std::move(rec));
  }
  return arr.dump(1, '\t') + "\n";
}

void save_tacred_json(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset file: " + path);
  out << tacred_json_string(d);
}

uint64_t dataset_hash(const Dataset& d) { return fnv1a(tacred_json_string(d)); }

std::pair<Dataset, Dataset> carve_dev(const Dataset& train, int dev_size,
                                      uint64_t seed) {
  if (dev_size <= 0 || dev_size >= static_cast<int>(train.sentences.size()))
    throw ConfigError("dev carve size must be in (0, len(train))");
  std::vector<int> idx(train.sentences.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  Rng rng = Rng::derive(seed, fnv1a("carve_dev"));
  rng.shuffle(idx);
  Dataset new_train{{}, "train"}, dev{{}, "dev"};
  for (size_t i = 0; i < idx.size(); ++i) {
    if (i < static_cast<size_t>(dev_size))
      dev.sentences.push_back(train.sentences[idx[i]]);
    else
      new_train.sentences.push_back(train.sentences[idx[i]]);
  }
  return {new_train, dev};
}

}  // namespace jrrelp
