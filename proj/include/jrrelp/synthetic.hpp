#pragma once

// Typed-template corpus generator. Every template carries a fixed parse
// tree, so the graph-convolution path stays deterministic and testable.
// Sentences instantiate a template with entity surfaces and filler words;
// negatives come in two flavors: neutral templates (no relation trigger) and
// hard negatives (a relation template instantiated with a type pair that is
// legal for no relation at all).

#include <array>
#include <cstdint>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "jrrelp/corpus.hpp"

namespace jrrelp {

struct SyntheticTemplate {
  std::string relation;             // empty => neutral NoRelation template
  std::vector<std::string> tokens;  // "$SUBJ", "$OBJ", "$F" are placeholders
  std::vector<int> heads;           // fixed parse, 1-based, 0 = root
  std::vector<std::string> pos;
};

struct SyntheticSpec {
  std::vector<std::string> entity_types;
  std::vector<std::string> relations;              // NoRelation excluded
  std::vector<std::array<int, 3>> legal;           // (s_type, relation, o_type)
  std::vector<SyntheticTemplate> templates;
  std::unordered_map<std::string, std::vector<std::string>> entity_pool;
  std::vector<std::string> fillers;
  int train_size = 200;
  int dev_size = 50;
  int test_size = 50;
  double negative_fraction = 0.6;
  double hard_negative_fraction = 0.5;   // share of negatives that carry triggers
  double heldout_filler_fraction = 0.2;  // fillers reserved for dev/test

  void validate() const;  // throws ConfigError / ValidationError
};

// The stock corpus: 4 entity types, 5 relations with sharp type constraints,
// 2 templates per relation, 2 neutral templates.
SyntheticSpec default_synthetic_spec();

std::tuple<Dataset, Dataset, Dataset> generate_synthetic(const SyntheticSpec& spec,
                                                         uint64_t seed);

}  // namespace jrrelp
