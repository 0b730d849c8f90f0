#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "jrrelp/corpus.hpp"
#include "jrrelp/manifest.hpp"

using namespace jrrelp;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int rc = -1;
  std::string output;  // stdout + stderr interleaved
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(JRRELP_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  while (fgets(buf, sizeof(buf), pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json last_json_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty() && line.front() == '{') last = line;
  REQUIRE_FALSE(last.empty());
  return nlohmann::json::parse(last);
}

const std::string kRoot = "cli_test_out";

// One shared tiny corpus + run for the whole suite (built once).
struct World {
  std::string raw = kRoot + "/raw";
  std::string data = kRoot + "/data";
  std::string run = kRoot + "/run";
  std::string cfg = kRoot + "/train.ini";

  World() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    {
      std::ofstream spec(kRoot + "/synth.ini");
      spec << "[synth]\ntrain_size = 60\ndev_size = 16\ntest_size = 16\n";
    }
    REQUIRE(run_cli("synth --spec " + kRoot + "/synth.ini --seed 5 --out " + raw).rc == 0);
    REQUIRE(run_cli("preprocess --input " + raw + "/train.json --dev " + raw +
                    "/dev.json --test " + raw + "/test.json --out " + data)
                .rc == 0);
    {
      std::ofstream out(cfg);
      out << "[trainer]\nseed = 13\nepochs = 6\nbatch_size = 16\n"
             "optimizer = adam\nlr = 0.01\nlr_decay = 1.0\n"
             "[embeddings]\nd_v = 16\nd_r = 16\nd_c = 4\n"
             "[re_model]\nhidden_dim = 8\nattention_dim = 6\n"
             "[kglp_model]\nmerge = distmult\n";
    }
    REQUIRE(run_cli("train --config " + cfg + " --data " + data + " --out " + run).rc == 0);
  }
};

World& world() {
  static World w;
  return w;
}

}  // namespace

TEST_CASE("preprocess artifacts are byte-stable across reruns") {
  auto& w = world();
  const std::string again = kRoot + "/data_again";
  REQUIRE(run_cli("preprocess --input " + w.raw + "/train.json --dev " + w.raw +
                  "/dev.json --test " + w.raw + "/test.json --out " + again)
              .rc == 0);
  for (const char* f : {"train.json", "dev.json", "test.json", "vocab.txt",
                        "answers.txt", "preprocess.ini"})
    CHECK(slurp(w.data + "/" + f) == slurp(again + "/" + std::string(f)));

  // Manifests agree on everything except the timestamp.
  auto a = RunManifest::load_dir(w.data);
  auto b = RunManifest::load_dir(again);
  a.timestamp.clear();
  b.timestamp.clear();
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("manifest verification catches tampered artifacts") {
  auto& w = world();
  const std::string tampered = kRoot + "/tampered";
  fs::remove_all(tampered);
  fs::copy(w.data, tampered, fs::copy_options::recursive);
  {
    std::ofstream out(tampered + "/train.json", std::ios::app);
    out << " ";
  }
  const auto r = run_cli("train --config " + w.cfg + " --data " + tampered +
                         " --out " + kRoot + "/should_not_exist");
  CHECK(r.rc == 2);
  const auto err = last_json_line(r.output);
  CHECK(err["error"]["type"] == "validation");
  CHECK(err["error"]["message"].get<std::string>().find("hash mismatch") !=
        std::string::npos);
}

TEST_CASE("eval on the dev split reproduces the recorded best dev F1") {
  auto& w = world();
  nlohmann::json hist = nlohmann::json::parse(slurp(w.run + "/history.json"));
  const double recorded = hist["best_dev_f1"].get<double>();

  const auto r = run_cli("eval --checkpoint " + w.run + "/best.ckpt --data " +
                         w.data + " --split dev --json");
  REQUIRE(r.rc == 0);
  std::istringstream lines(r.output);
  std::string first;
  std::getline(lines, first);
  const auto micro = nlohmann::json::parse(first);
  CHECK(micro["mode"] == "micro");
  CHECK(micro["f1"].get<double>() == recorded);  // exact round-trip
}

TEST_CASE("eval rejects a checkpoint whose config does not match") {
  auto& w = world();
  const std::string other_cfg = kRoot + "/other.ini";
  {
    std::ofstream out(other_cfg);
    out << "[re_model]\nhidden_dim = 9\n[embeddings]\nd_v = 16\nd_r = 16\n"
           "[kglp_model]\nmerge = distmult\n";
  }
  const auto r = run_cli("eval --checkpoint " + w.run + "/best.ckpt --data " +
                         w.data + " --split dev --config " + other_cfg);
  CHECK(r.rc == 2);
  CHECK(last_json_line(r.output)["error"]["type"] == "validation");
}

TEST_CASE("include-negative-kg changes only the answer sets") {
  auto& w = world();
  const std::string with_neg = kRoot + "/data_neg";
  REQUIRE(run_cli("preprocess --input " + w.raw + "/train.json --out " + with_neg +
                  " --include-negative-kg")
              .rc == 0);
  CHECK(slurp(with_neg + "/vocab.txt") == slurp(w.data + "/vocab.txt"));
  CHECK(slurp(with_neg + "/answers.txt") != slurp(w.data + "/answers.txt"));
  const auto plain = AnswerSets::load(w.data + "/answers.txt");
  const auto neg = AnswerSets::load(with_neg + "/answers.txt");
  CHECK(neg.sets.size() > plain.sets.size());
}

TEST_CASE("report renders the comparison table and plot-ready loss curves") {
  auto& w = world();
  const std::string rep = kRoot + "/rep";
  const auto r = run_cli("report --runs " + w.run + " --out " + rep + " --select-best");
  REQUIRE(r.rc == 0);
  CHECK(r.output.find("system") != std::string::npos);
  CHECK(r.output.find("run") != std::string::npos);
  CHECK(r.output.find("selected: run (best dev F1)") != std::string::npos);

  const std::string csv = slurp(rep + "/loss_curves.csv");
  CHECK(csv.rfind("run,epoch,step,global_step,l_re,l_kglp,l_coupling,l_joint\n", 0) == 0);
  // 60 train sentences, batch 16 -> 4 steps/epoch, 6 epochs -> 24 rows.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 25);
  const std::string table = slurp(rep + "/report.txt");
  CHECK(table.find("system") != std::string::npos);
}

TEST_CASE("ablate emits the four-arm grid with medians") {
  auto& w = world();
  const std::string abl = kRoot + "/abl";
  std::string cfg_fast = kRoot + "/ablate.ini";
  {
    std::ofstream out(cfg_fast);
    out << "[trainer]\nseed = 13\nepochs = 1\nbatch_size = 16\n"
           "[embeddings]\nd_v = 16\nd_r = 16\nd_c = 4\n"
           "[re_model]\nhidden_dim = 6\nattention_dim = 4\n"
           "[kglp_model]\nmerge = distmult\n";
  }
  const auto r = run_cli("ablate --config " + cfg_fast + " --data " + w.data +
                         " --seeds 1,2 --out " + abl);
  REQUIRE(r.rc == 0);
  for (const char* arm : {"full", "no_coupling", "no_kglp", "baseline"})
    CHECK(r.output.find(arm) != std::string::npos);

  const auto j = nlohmann::json::parse(slurp(abl + "/ablation.json"));
  REQUIRE(j["arms"].size() == 4);
  for (const auto& arm : j["arms"]) {
    CHECK(arm["per_seed"].size() == 2);
    CHECK_FALSE(arm["diverged"].get<bool>());
    CHECK(arm["median"].contains("f1"));
  }
  CHECK(fs::exists(abl + "/full_seed1/train_log.jsonl"));
  CHECK(fs::exists(abl + "/baseline_seed2/best.ckpt"));
}

TEST_CASE("exit codes: io=4, validation=2, divergence=3, parse errors=2") {
  auto& w = world();
  CHECK(run_cli("train --config /nonexistent.ini --data " + w.data +
                " --out " + kRoot + "/x").rc == 4);

  const std::string typo = kRoot + "/typo.ini";
  {
    std::ofstream out(typo);
    out << "[trainer]\nepohcs = 2\n";
  }
  const auto r2 = run_cli("train --config " + typo + " --data " + w.data + " --out " +
                          kRoot + "/x");
  CHECK(r2.rc == 2);
  CHECK(last_json_line(r2.output)["error"]["message"].get<std::string>().find(
            "trainer.epohcs") != std::string::npos);

  const std::string diverge = kRoot + "/diverge.ini";
  {
    std::ofstream out(diverge);
    out << "[trainer]\nseed = 13\nepochs = 40\nbatch_size = 16\nlr = 1e8\n"
           "clip_norm = 0\n"
           "[embeddings]\nd_v = 16\nd_r = 16\nd_c = 4\n"
           "[re_model]\narchitecture = cgcn-mini\nhidden_dim = 8\n"
           "[kglp_model]\nmerge = distmult\n";
  }
  const auto r3 = run_cli("train --config " + diverge + " --data " + w.data +
                          " --out " + kRoot + "/diverge_run");
  CHECK(r3.rc == 3);
  const auto err = last_json_line(r3.output);
  CHECK(err["error"]["type"] == "divergence");
  CHECK(err["error"]["message"].get<std::string>().find("non-finite") !=
        std::string::npos);

  CHECK(run_cli("eval --checkpoint " + w.run + "/best.ckpt --data " + w.data +
                " --split bogus").rc == 2);
  CHECK(run_cli("definitely-not-a-command").rc == 2);
}

TEST_CASE("print-config dumps every default and honors overrides") {
  const auto r = run_cli("train --print-config");
  REQUIRE(r.rc == 0);
  for (const char* key : {"[trainer]", "seed = 13", "optimizer = sgd",
                          "clip_norm = 5", "[objective]", "lambda = 1",
                          "[re_model]", "architecture = palstm-mini",
                          "[kglp_model]", "merge = conve", "[embeddings]"})
    CHECK(r.output.find(key) != std::string::npos);

  const std::string cfg = kRoot + "/pc.ini";
  {
    std::ofstream out(cfg);
    out << "[trainer]\nepochs = 99\n";
  }
  const auto r2 = run_cli("train --print-config --config " + cfg);
  REQUIRE(r2.rc == 0);
  CHECK(r2.output.find("epochs = 99") != std::string::npos);
}

TEST_CASE("commands never mutate their inputs") {
  auto& w = world();
  const uint64_t raw_before = file_hash(w.raw + "/train.json");
  const uint64_t data_before = file_hash(w.data + "/train.json");
  const uint64_t ckpt_before = file_hash(w.run + "/best.ckpt");
  run_cli("eval --checkpoint " + w.run + "/best.ckpt --data " + w.data + " --split dev");
  run_cli("train --config " + w.cfg + " --data " + w.data + " --out " + kRoot +
          "/mut_check");
  CHECK(file_hash(w.raw + "/train.json") == raw_before);
  CHECK(file_hash(w.data + "/train.json") == data_before);
  CHECK(file_hash(w.run + "/best.ckpt") == ckpt_before);
}

TEST_CASE("train is reproducible from its recorded config") {
  auto& w = world();
  // Re-train from the canonical config the run itself wrote.
  const std::string rerun = kRoot + "/rerun";
  REQUIRE(run_cli("train --config " + w.run + "/config.ini --data " + w.data +
                  " --out " + rerun)
              .rc == 0);
  CHECK(slurp(rerun + "/best.ckpt") == slurp(w.run + "/best.ckpt"));

  // Histories match exactly once wall-clock timings and the output path
  // (the only run-dependent fields) are stripped.
  auto scrub = [](const std::string& path) {
    auto j = nlohmann::json::parse(slurp(path));
    j.erase("checkpoint");
    for (auto& e : j["epochs"]) {
      e.erase("batch_ms_mean");
      e.erase("batch_ms_stdev");
    }
    return j;
  };
  CHECK(scrub(rerun + "/history.json") == scrub(w.run + "/history.json"));
}
