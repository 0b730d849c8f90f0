#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "jrrelp/config.hpp"

using namespace jrrelp;

TEST_CASE("parse handles sections, comments and whitespace") {
  const std::string text =
      "# leading comment\n"
      "[trainer]\n"
      "seed = 13\n"
      "  lr =   0.25\n"
      "; another comment style\n"
      "\n"
      "[re_model]\n"
      "architecture = cgcn-mini\n"
      "note =\n";
  auto kv = KVConfig::parse(text);
  CHECK(kv.get_int("trainer", "seed", 0) == 13);
  CHECK(kv.get_double("trainer", "lr", 0) == 0.25);
  CHECK(kv.get_string("re_model", "architecture", "") == "cgcn-mini");
  CHECK(kv.get_string("re_model", "note", "missing") == "");
  CHECK(kv.get_string("re_model", "absent", "fallback") == "fallback");
  CHECK(kv.has("trainer", "seed"));
  CHECK_FALSE(kv.has("trainer", "nope"));
}

TEST_CASE("malformed input is rejected with the line number") {
  CHECK_THROWS_AS(KVConfig::parse("key = 1\n"), ConfigError);   // before section
  CHECK_THROWS_AS(KVConfig::parse("[a]\nnoequals\n"), ConfigError);
  CHECK_THROWS_AS(KVConfig::parse("[broken\nk = v\n"), ConfigError);
  CHECK_THROWS_AS(KVConfig::parse("[]\n"), ConfigError);
  CHECK_THROWS_AS(KVConfig::parse("[a]\n= v\n"), ConfigError);
  CHECK_THROWS_AS(KVConfig::parse("[a]\nk = 1\nk = 2\n"), ConfigError);
  try {
    KVConfig::parse("[a]\nok = 1\nbad\n");
    FAIL("expected throw");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("typed getters reject junk values") {
  auto kv = KVConfig::parse("[s]\na = notanint\nb = 1.5x\nc = maybe\n");
  CHECK_THROWS_AS(kv.get_int("s", "a", 0), ConfigError);
  CHECK_THROWS_AS(kv.get_double("s", "b", 0), ConfigError);
  CHECK_THROWS_AS(kv.get_bool("s", "c", false), ConfigError);
  auto kv2 = KVConfig::parse("[s]\nt = yes\nf = 0\n");
  CHECK(kv2.get_bool("s", "t", false));
  CHECK_FALSE(kv2.get_bool("s", "f", true));
}

TEST_CASE("canonical form is input-order independent and hash-stable") {
  auto a = KVConfig::parse("[z]\nk = 1\n[a]\ny = 2\nx = 3\n");
  auto b = KVConfig::parse("[a]\nx = 3\ny = 2\n[z]\nk = 1\n");
  CHECK(a.canonical() == b.canonical());
  CHECK(a.hash() == b.hash());
  CHECK(a.canonical() == "[a]\nx = 3\ny = 2\n[z]\nk = 1\n");
  KVConfig c;
  c.set("a", "x", "3");
  CHECK(a.hash() != c.hash());
}

TEST_CASE("doubles round-trip through canonical text exactly") {
  KVConfig kv;
  const double v = 1.0 / 3.0;
  kv.set_double("s", "x", v);
  auto back = KVConfig::parse(kv.canonical());
  CHECK(back.get_double("s", "x", 0) == v);  // bitwise
  kv.set_double("s", "y", 0.1);
  CHECK(KVConfig::parse(kv.canonical()).get_double("s", "y", 0) == 0.1);
}

TEST_CASE("unread keys are flagged as unknown") {
  auto kv = KVConfig::parse("[s]\nknown = 1\ntypo = 2\n");
  (void)kv.get_int("s", "known", 0);
  try {
    kv.check_fully_read();
    FAIL("expected throw");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("s.typo") != std::string::npos);
  }
  (void)kv.get_int("s", "typo", 0);
  CHECK_NOTHROW(kv.check_fully_read());
}

TEST_CASE("parse_file reads from disk and reports missing files") {
  CHECK_THROWS_AS(KVConfig::parse_file("/nonexistent/config.ini"), IoError);
  const std::string path = "test_config_tmp.ini";
  {
    std::ofstream out(path);
    out << "[s]\nk = v\n";
  }
  auto kv = KVConfig::parse_file(path);
  CHECK(kv.get_string("s", "k", "") == "v");
  std::remove(path.c_str());
}
