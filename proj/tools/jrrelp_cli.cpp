// Operator surface: preprocess corpora, generate synthetic data, train,
// evaluate, ablate and report without writing code. Exit codes: 0 ok,
// 2 validation, 3 divergence, 4 IO; errors also go to stderr as one JSON
// line. Commands never mutate their inputs; artifacts land under --out.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "jrrelp/checkpoint.hpp"
#include "jrrelp/config.hpp"
#include "jrrelp/corpus.hpp"
#include "jrrelp/manifest.hpp"
#include "jrrelp/metrics.hpp"
#include "jrrelp/synthetic.hpp"
#include "jrrelp/trainer.hpp"

namespace fs = std::filesystem;
using namespace jrrelp;

namespace {

int fail_json(const char* type, const std::string& msg, int code) {
  nlohmann::ordered_json j;
  j["error"] = {{"type", type}, {"message", msg}};
  std::cerr << j.dump() << std::endl;
  return code;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write: " + path);
  out << text;
}

std::string run_label(const std::string& dir) {
  fs::path p = fs::path(dir).lexically_normal();
  if (p.filename().empty() || p.filename() == ".") p = p.parent_path();
  const std::string name = p.filename().string();
  return name.empty() ? dir : name;
}

struct DataDir {
  Dataset train, dev, test;  // splits that exist in the directory
  Vocab vocab;
  AnswerSets answers;
};

// Loads a preprocess/synth output directory, verifying its manifest first
// when one is present.
DataDir load_data_dir(const std::string& dir, bool need_train) {
  if (fs::exists(dir + "/manifest.json")) RunManifest::load_dir(dir).verify(dir);
  DataDir d;
  d.vocab = Vocab::load(dir + "/vocab.txt");
  d.answers = AnswerSets::load(dir + "/answers.txt");
  if (fs::exists(dir + "/train.json"))
    d.train = load_tacred_json(dir + "/train.json", "train");
  else if (need_train)
    throw IoError("data dir has no train.json: " + dir);
  if (fs::exists(dir + "/dev.json")) d.dev = load_tacred_json(dir + "/dev.json", "dev");
  if (fs::exists(dir + "/test.json"))
    d.test = load_tacred_json(dir + "/test.json", "test");
  return d;
}

// ---- preprocess -----------------------------------------------------------

struct PreprocessArgs {
  std::string input, dev, test, out;
  std::string format = "tacred-json";
  int min_count = 1;
  bool include_negative_kg = false;
};

int cmd_preprocess(const PreprocessArgs& a) {
  fs::create_directories(a.out);

  const Dataset train = type_substitute(load_tacred_json(a.input, "train"));
  const Vocab vocab = build_vocab(train, a.min_count);
  const AnswerSets answers = build_answer_sets(train, vocab, a.include_negative_kg);

  KVConfig opts;
  opts.set("preprocess", "format", a.format);
  opts.set_int("preprocess", "min_count", a.min_count);
  opts.set_bool("preprocess", "include_negative_kg", a.include_negative_kg);
  write_text(a.out + "/preprocess.ini", opts.canonical());

  RunManifest m;
  m.command = "preprocess";
  m.config_hash = opts.hash();
  m.vocab_hash = vocab.hash();
  m.timestamp = utc_timestamp();

  save_tacred_json(train, a.out + "/train.json");
  m.dataset_hashes["train"] = dataset_hash(train);
  vocab.save(a.out + "/vocab.txt");
  answers.save(a.out + "/answers.txt");
  m.add_artifact(a.out, "preprocess.ini");
  m.add_artifact(a.out, "train.json");
  m.add_artifact(a.out, "vocab.txt");
  m.add_artifact(a.out, "answers.txt");

  const auto emit_split = [&](const std::string& path, const std::string& split) {
    if (path.empty()) return;
    const Dataset d = type_substitute(load_tacred_json(path, split));
    save_tacred_json(d, a.out + "/" + split + ".json");
    m.dataset_hashes[split] = dataset_hash(d);
    m.add_artifact(a.out, split + ".json");
  };
  emit_split(a.dev, "dev");
  emit_split(a.test, "test");

  m.save(a.out);
  std::printf("preprocessed %zu train sentences, %d tokens, %d relations -> %s\n",
              train.sentences.size(), vocab.num_tokens(), vocab.num_relations(),
              a.out.c_str());
  return 0;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string spec_path, out;
  uint64_t seed = 7;
};

int cmd_synth(const SynthArgs& a) {
  SyntheticSpec spec = default_synthetic_spec();
  if (!a.spec_path.empty()) {
    const KVConfig kv = KVConfig::parse_file(a.spec_path);
    spec.train_size = static_cast<int>(kv.get_int("synth", "train_size", spec.train_size));
    spec.dev_size = static_cast<int>(kv.get_int("synth", "dev_size", spec.dev_size));
    spec.test_size = static_cast<int>(kv.get_int("synth", "test_size", spec.test_size));
    spec.negative_fraction =
        kv.get_double("synth", "negative_fraction", spec.negative_fraction);
    spec.hard_negative_fraction =
        kv.get_double("synth", "hard_negative_fraction", spec.hard_negative_fraction);
    spec.heldout_filler_fraction = kv.get_double("synth", "heldout_filler_fraction",
                                                 spec.heldout_filler_fraction);
    kv.check_fully_read();
  }
  spec.validate();

  fs::create_directories(a.out);
  const auto [train, dev, test] = generate_synthetic(spec, a.seed);

  KVConfig eff;
  eff.set_int("synth", "train_size", spec.train_size);
  eff.set_int("synth", "dev_size", spec.dev_size);
  eff.set_int("synth", "test_size", spec.test_size);
  eff.set_double("synth", "negative_fraction", spec.negative_fraction);
  eff.set_double("synth", "hard_negative_fraction", spec.hard_negative_fraction);
  eff.set_double("synth", "heldout_filler_fraction", spec.heldout_filler_fraction);
  write_text(a.out + "/synth.ini", eff.canonical());

  save_tacred_json(train, a.out + "/train.json");
  save_tacred_json(dev, a.out + "/dev.json");
  save_tacred_json(test, a.out + "/test.json");

  RunManifest m;
  m.command = "synth";
  m.config_hash = eff.hash();
  m.seed = a.seed;
  m.dataset_hashes["train"] = dataset_hash(train);
  m.dataset_hashes["dev"] = dataset_hash(dev);
  m.dataset_hashes["test"] = dataset_hash(test);
  m.timestamp = utc_timestamp();
  m.add_artifact(a.out, "synth.ini");
  m.add_artifact(a.out, "train.json");
  m.add_artifact(a.out, "dev.json");
  m.add_artifact(a.out, "test.json");
  m.save(a.out);

  std::printf("synthesized %zu/%zu/%zu train/dev/test sentences -> %s\n",
              train.sentences.size(), dev.sentences.size(), test.sentences.size(),
              a.out.c_str());
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out;
  bool print_config = false;
};

TrainConfig load_train_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  const KVConfig kv = KVConfig::parse_file(path);
  const TrainConfig cfg = TrainConfig::from_kv(kv);
  kv.check_fully_read();
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  if (a.print_config) {
    std::cout << load_train_config(a.config).to_kv().canonical();
    return 0;
  }
  if (a.data.empty() || a.out.empty())
    throw ConfigError("train: --data and --out are required");
  const TrainConfig cfg = load_train_config(a.config);
  cfg.validate();
  const DataDir dd = load_data_dir(a.data, true);

  fs::create_directories(a.out);
  write_text(a.out + "/config.ini", cfg.to_kv().canonical());

  auto model = build_model(cfg, dd.vocab, dd.answers);
  const TrainHistory hist =
      train(cfg, model, dd.train, dd.dev, dd.vocab, dd.answers, a.out);

  RunManifest m;
  m.command = "train";
  m.config_hash = cfg.hash();
  m.vocab_hash = dd.vocab.hash();
  m.dataset_hashes["train"] = dataset_hash(dd.train);
  if (!dd.dev.sentences.empty()) m.dataset_hashes["dev"] = dataset_hash(dd.dev);
  m.seed = cfg.seed;
  m.timestamp = utc_timestamp();
  m.add_artifact(a.out, "config.ini");
  m.add_artifact(a.out, "best.ckpt");
  m.add_artifact(a.out, "train_log.jsonl");
  m.add_artifact(a.out, "history.json");
  m.save(a.out);

  std::printf("best epoch %d, dev F1 %.1f%% -> %s\n", hist.best_epoch,
              100.0 * hist.best_dev_f1, hist.checkpoint_path.c_str());
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, config;
  std::string split = "test";
  bool json = false;
};

int cmd_eval(const EvalArgs& a) {
  std::string cfg_path = a.config;
  if (cfg_path.empty()) {
    const fs::path side = fs::path(a.checkpoint).parent_path() / "config.ini";
    cfg_path = side.string();
  }
  const TrainConfig cfg = load_train_config(cfg_path);
  cfg.validate();
  const DataDir dd = load_data_dir(a.data, false);

  const Dataset* split = nullptr;
  if (a.split == "train")
    split = &dd.train;
  else if (a.split == "dev")
    split = &dd.dev;
  else if (a.split == "test")
    split = &dd.test;
  else
    throw ConfigError("eval: unknown split '" + a.split + "'");
  if (split->sentences.empty())
    throw IoError("eval: split '" + a.split + "' not present in " + a.data);

  auto model = build_model(cfg, dd.vocab, dd.answers);
  const auto hashes = load_checkpoint(a.checkpoint, model.params());
  if (hashes.first != dd.vocab.hash())
    throw ValidationError("eval: checkpoint was trained with a different vocab");
  if (hashes.second != cfg.hash())
    throw ValidationError("eval: checkpoint was trained with a different config");

  const EvalReport micro =
      evaluate(model, *split, dd.vocab, dd.answers, cfg.batch_size, Averaging::micro);
  const EvalReport macro =
      evaluate(model, *split, dd.vocab, dd.answers, cfg.batch_size, Averaging::macro);
  if (a.json) {
    std::cout << eval_report_json(micro, dd.vocab) << '\n'
              << eval_report_json(macro, dd.vocab) << '\n';
  } else {
    std::cout << format_metrics_table({{"micro", micro}, {"macro", macro}});
  }
  return 0;
}

// ---- ablate -----------------------------------------------------------------

struct AblateArgs {
  std::string config, data, out;
  std::vector<uint64_t> seeds;
};

int cmd_ablate(const AblateArgs& a) {
  const TrainConfig cfg = load_train_config(a.config);
  cfg.validate();
  const DataDir dd = load_data_dir(a.data, true);
  if (dd.test.sentences.empty())
    throw ValidationError("ablate: data dir has no test.json to score arms on");

  fs::create_directories(a.out);
  write_text(a.out + "/config.ini", cfg.to_kv().canonical());
  const AblationTable table = ablate(cfg, dd.train, dd.dev, dd.test, dd.vocab,
                                     dd.answers, a.seeds, a.out);

  nlohmann::ordered_json j;
  j["seeds"] = a.seeds;
  j["arms"] = nlohmann::ordered_json::array();
  for (const auto& arm : table.arms) {
    nlohmann::ordered_json row;
    row["arm"] = to_string(arm.arm);
    row["diverged"] = arm.diverged;
    if (arm.diverged) row["error"] = arm.error;
    row["median"] = {{"precision", arm.median.precision},
                     {"recall", arm.median.recall},
                     {"f1", arm.median.f1}};
    row["per_seed"] = nlohmann::ordered_json::array();
    for (const auto& rep : arm.per_seed)
      row["per_seed"].push_back({{"precision", rep.precision},
                                 {"recall", rep.recall},
                                 {"f1", rep.f1}});
    j["arms"].push_back(std::move(row));
  }
  write_text(a.out + "/ablation.json", j.dump(2) + "\n");
  write_text(a.out + "/ablation.txt", table.format());

  RunManifest m;
  m.command = "ablate";
  m.config_hash = cfg.hash();
  m.vocab_hash = dd.vocab.hash();
  m.dataset_hashes["train"] = dataset_hash(dd.train);
  if (!dd.dev.sentences.empty()) m.dataset_hashes["dev"] = dataset_hash(dd.dev);
  m.dataset_hashes["test"] = dataset_hash(dd.test);
  m.seed = a.seeds.front();
  m.timestamp = utc_timestamp();
  m.add_artifact(a.out, "config.ini");
  m.add_artifact(a.out, "ablation.json");
  m.add_artifact(a.out, "ablation.txt");
  m.save(a.out);

  std::cout << table.format();
  return 0;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
  bool select_best = false;  // best-of-N by recorded dev F1
};

int cmd_report(const ReportArgs& a) {
  std::vector<std::pair<std::string, EvalReport>> rows;
  std::string csv = "run,epoch,step,global_step,l_re,l_kglp,l_coupling,l_joint\n";
  std::string best_run;
  double best_f1 = -1;

  for (const std::string& dir : a.runs) {
    std::ifstream hin(dir + "/history.json");
    if (!hin) throw IoError("report: cannot read " + dir + "/history.json");
    nlohmann::json hist;
    try {
      hin >> hist;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("report: bad history.json in " + dir + ": " + e.what());
    }
    const int best_epoch = hist.at("best_epoch").get<int>();
    EvalReport rep;
    if (best_epoch >= 1) {
      const auto& e = hist.at("epochs").at(static_cast<size_t>(best_epoch - 1));
      rep.precision = e.at("dev_precision").get<double>();
      rep.recall = e.at("dev_recall").get<double>();
      rep.f1 = e.at("dev_f1").get<double>();
    }
    const std::string label = run_label(dir);
    rows.emplace_back(label, rep);
    if (rep.f1 > best_f1) {
      best_f1 = rep.f1;
      best_run = label;
    }

    std::ifstream lin(dir + "/train_log.jsonl");
    if (!lin) throw IoError("report: cannot read " + dir + "/train_log.jsonl");
    std::string line;
    while (std::getline(lin, line)) {
      if (line.empty()) continue;
      nlohmann::json r;
      try {
        r = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError("report: bad log line in " + dir + ": " + e.what());
      }
      std::ostringstream row;
      row.precision(17);
      row << label << ',' << r.at("epoch").get<long>() << ','
          << r.at("step").get<long>() << ',' << r.at("global_step").get<long>() << ','
          << r.at("l_re").get<double>() << ',' << r.at("l_kglp").get<double>() << ','
          << r.at("l_coupling").get<double>() << ','
          << r.at("l_joint").get<double>() << '\n';
      csv += row.str();
    }
  }

  std::string table = format_metrics_table(rows);
  if (a.select_best && !best_run.empty())
    table += "selected: " + best_run + " (best dev F1)\n";
  std::cout << table;

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(a.out + "/report.txt", table);
    write_text(a.out + "/loss_curves.csv", csv);
    RunManifest m;
    m.command = "report";
    m.timestamp = utc_timestamp();
    m.add_artifact(a.out, "report.txt");
    m.add_artifact(a.out, "loss_curves.csv");
    m.save(a.out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint relation-extraction + link-prediction lab"};
  app.require_subcommand(1);

  PreprocessArgs pa;
  auto* pp = app.add_subcommand("preprocess",
                                "validate, type-substitute and index a corpus");
  pp->add_option("--input", pa.input, "train split (tacred-style JSON)")->required();
  pp->add_option("--dev", pa.dev, "optional dev split");
  pp->add_option("--test", pa.test, "optional test split");
  pp->add_option("--format", pa.format, "input format")
      ->check(CLI::IsMember({"tacred-json"}));
  pp->add_option("--out", pa.out, "output directory")->required();
  pp->add_option("--min-count", pa.min_count, "token frequency cutoff for the vocab");
  pp->add_flag("--include-negative-kg", pa.include_negative_kg,
               "keep NoRelation triples in the answer sets");

  SynthArgs sa;
  auto* sp = app.add_subcommand("synth", "generate a typed synthetic corpus");
  sp->add_option("--spec", sa.spec_path, "overrides for the [synth] section");
  sp->add_option("--seed", sa.seed, "generation seed");
  sp->add_option("--out", sa.out, "output directory")->required();

  TrainArgs ta;
  auto* tp = app.add_subcommand("train", "train the joint model");
  tp->add_option("--config", ta.config, "training config file");
  tp->add_option("--data", ta.data, "preprocessed data directory");
  tp->add_option("--out", ta.out, "run output directory");
  tp->add_flag("--print-config", ta.print_config,
               "print the effective config (all defaults filled in) and exit");

  EvalArgs ea;
  auto* ep = app.add_subcommand("eval", "score a checkpoint on one split");
  ep->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
  ep->add_option("--data", ea.data, "preprocessed data directory")->required();
  ep->add_option("--split", ea.split, "train|dev|test")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  ep->add_option("--config", ea.config,
                 "config file (default: config.ini beside the checkpoint)");
  ep->add_flag("--json", ea.json, "emit JSON reports instead of the table");

  AblateArgs aa;
  auto* ap = app.add_subcommand("ablate", "run the four-arm ablation grid");
  ap->add_option("--config", aa.config, "training config file");
  ap->add_option("--data", aa.data, "preprocessed data directory")->required();
  ap->add_option("--seeds", aa.seeds, "comma-separated seeds")
      ->required()
      ->delimiter(',');
  ap->add_option("--out", aa.out, "output directory")->required();

  ReportArgs ra;
  auto* rp = app.add_subcommand("report", "compare runs and dump loss curves");
  rp->add_option("--runs", ra.runs, "run directories")->required();
  rp->add_option("--out", ra.out, "optional output directory for table + CSV");
  rp->add_flag("--select-best", ra.select_best,
               "mark the run with the best recorded dev F1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return fail_json("validation", e.what(), 2);
  }

  try {
    if (pp->parsed()) return cmd_preprocess(pa);
    if (sp->parsed()) return cmd_synth(sa);
    if (tp->parsed()) return cmd_train(ta);
    if (ep->parsed()) return cmd_eval(ea);
    if (ap->parsed()) return cmd_ablate(aa);
    if (rp->parsed()) return cmd_report(ra);
  } catch (const ValidationError& e) {
    return fail_json("validation", e.what(), 2);
  } catch (const DivergenceError& e) {
    return fail_json("divergence", e.what(), 3);
  } catch (const IoError& e) {
    return fail_json("io", e.what(), 4);
  }
  return 0;
}
