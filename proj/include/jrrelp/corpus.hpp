#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "jrrelp/errors.hpp"
#include "jrrelp/rng.hpp"

namespace jrrelp {

using BoolMat = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr const char* kNoRelation = "NoRelation";

// One training example. Spans are inclusive, 0-based. dep_heads are 1-based
// with 0 marking the root, one root per sentence.
struct Sentence {
  std::vector<std::string> tokens;
  int subj_start = 0, subj_end = 0;
  int obj_start = 0, obj_end = 0;
  std::string subj_type, obj_type;
  std::vector<std::string> pos_tags;
  std::vector<std::string> ner_tags;
  std::vector<int> dep_heads;
  std::string relation;

  int size() const { return static_cast<int>(tokens.size()); }
};

struct Dataset {
  std::vector<Sentence> sentences;
  std::string split;  // train / dev / test
};

// Dense string<->index maps for tokens, relations and attributes. Attribute
// values are namespaced ("POS:NN", "NER:O", "SO:-3", "OO:0") so the four
// feature families share one embedding matrix without collisions.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMaxOffset = 60;  // SO/OO offsets clamp to +-this

  std::vector<std::string> tokens;      // index -> token, [0]=PAD, [1]=UNK
  std::vector<std::string> relations;   // [0]=NoRelation
  std::vector<std::string> attributes;  // [0]=PAD, [1]=UNK

  std::unordered_map<std::string, int> token_ids;
  std::unordered_map<std::string, int> relation_ids;
  std::unordered_map<std::string, int> attribute_ids;

  int num_tokens() const { return static_cast<int>(tokens.size()); }
  int num_relations() const { return static_cast<int>(relations.size()); }
  int num_attributes() const { return static_cast<int>(attributes.size()); }

  int token_id(const std::string& t) const;       // UNK fallback
  int token_id_strict(const std::string& t) const;
  int relation_id(const std::string& r) const;    // throws on unknown
  int attribute_id(const std::string& a) const;   // UNK fallback

  static std::string so_attr(int offset);
  static std::string oo_attr(int offset);
  static std::string pos_attr(const std::string& v) { return "POS:" + v; }
  static std::string ner_attr(const std::string& v) { return "NER:" + v; }

  uint64_t hash() const;
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  void rebuild_maps();
};

// (subject-type token, relation) -> observed object-type tokens, plus the
// global candidate domain KGLP probabilities are defined over.
struct AnswerSets {
  std::map<std::pair<int, int>, std::vector<int>> sets;  // values sorted asc
  std::vector<int> candidate_domain;                     // sorted asc token ids
  std::unordered_map<int, int> domain_pos;               // token id -> position

  const std::vector<int>* find(int subj_type_id, int relation_id) const;
  int domain_index(int obj_type_token) const;  // -1 if absent
  size_t domain_size() const { return candidate_domain.size(); }

  uint64_t hash() const;
  void save(const std::string& path) const;
  static AnswerSets load(const std::string& path);
};

// --- validation & preprocessing -------------------------------------------

void validate_sentence(const Sentence& s, int record_index = -1);

Sentence type_substitute(const Sentence& s);
Dataset type_substitute(const Dataset& d);

// so[i] = 0 within the subject span, i - subj_end right of it, i - subj_start
// (negative) left of it; oo analogous for the object span.
std::pair<std::vector<int>, std::vector<int>> positional_offsets(const Sentence& s);

Vocab build_vocab(const Dataset& train, int min_count);

AnswerSets build_answer_sets(const Dataset& train, const Vocab& vocab,
                             bool include_negative_relation);

// LCA-path pruning: keep tokens on the dependency paths from the subject and
// object tokens to their least common ancestor, plus tokens within tree
// distance k of that path. Returns tree edges among kept tokens, symmetric,
// with self-loops on kept tokens.
BoolMat prune_dependency_tree(const Sentence& s, int k);

// --- TACRED-style JSON I/O --------------------------------------------------

Dataset load_tacred_json(const std::string& path, const std::string& split);
void save_tacred_json(const Dataset& d, const std::string& path);
std::string tacred_json_string(const Dataset& d);
uint64_t dataset_hash(const Dataset& d);

// Seeded split utility for corpora shipping without a dev set.
std::pair<Dataset, Dataset> carve_dev(const Dataset& train, int dev_size,
                                      uint64_t seed);

}  // namespace jrrelp
