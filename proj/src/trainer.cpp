#include "jrrelp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "jrrelp/batch.hpp"
#include "jrrelp/checkpoint.hpp"
#include "jrrelp/hashing.hpp"

namespace jrrelp {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_finite(const LossBreakdown& bd, bool kglp_on, bool coupling_on,
                  int epoch, int step) {
  const char* term = nullptr;
  if (!std::isfinite(bd.l_re))
    term = "l_re";
  else if (kglp_on && !std::isfinite(bd.l_kglp))
    term = "l_kglp";
  else if (coupling_on && !std::isfinite(bd.l_coupling))
    term = "l_coupling";
  else if (!std::isfinite(bd.l_joint))
    term = "l_joint";
  if (!term) return;
  throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                        ", step " + std::to_string(step) + ": " + term +
                        " is non-finite");
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::ordered_json epoch_json(const EpochStats& e) {
  return {{"epoch", e.epoch},
          {"l_re", e.mean_losses.l_re},
          {"l_kglp", e.mean_losses.l_kglp},
          {"l_coupling", e.mean_losses.l_coupling},
          {"l_joint", e.mean_losses.l_joint},
          {"dev_precision", e.dev_precision},
          {"dev_recall", e.dev_recall},
          {"dev_f1", e.dev_f1},
          {"batch_ms_mean", e.batch_ms_mean},
          {"batch_ms_stdev", e.batch_ms_stdev},
          {"lr", e.lr}};
}

}  // namespace

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_coupling: return "no_coupling";
    case Ablation::no_kglp: return "no_kglp";
    case Ablation::baseline: return "baseline";
  }
  return "?";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no_coupling") return Ablation::no_coupling;
  if (s == "no_kglp") return Ablation::no_kglp;
  if (s == "baseline") return Ablation::baseline;
  throw ConfigError("unknown ablation: '" + s +
                    "' (want full|no_coupling|no_kglp|baseline)");
}

ObjectiveConfig TrainConfig::objective() const {
  ObjectiveConfig obj;
  obj.lambda_kglp = lambda_kglp.value_or(lambda);
  obj.lambda_coupling = lambda_coupling.value_or(lambda);
  switch (ablation) {
    case Ablation::full: break;
    case Ablation::no_coupling: obj.lambda_coupling = 0; break;
    case Ablation::no_kglp: obj.lambda_kglp = 0; break;
    case Ablation::baseline:
      obj.lambda_kglp = 0;
      obj.lambda_coupling = 0;
      break;
  }
  if (re_only) {
    obj.lambda_kglp = 0;
    obj.lambda_coupling = 0;
  }
  return obj;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("trainer: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("trainer: batch_size must be >= 1");
  if (lr_decay <= 0 || lr_decay > 1)
    throw ConfigError("trainer: lr_decay must be in (0, 1]");
  if (decay_patience < 1) throw ConfigError("trainer: decay_patience must be >= 1");
  if (lambda < 0) throw ConfigError("trainer: lambda must be >= 0");
  if (lambda_kglp && *lambda_kglp < 0)
    throw ConfigError("trainer: lambda_kglp must be >= 0");
  if (lambda_coupling && *lambda_coupling < 0)
    throw ConfigError("trainer: lambda_coupling must be >= 0");
  if (init_scale <= 0) throw ConfigError("trainer: init_scale must be > 0");
  if (dev_size < 1) throw ConfigError("trainer: dev_size must be >= 1");
  optimizer.validate();
  re.validate();
  if (!re_only) kglp.validate(dims);
}

KVConfig TrainConfig::to_kv() const {
  KVConfig kv;
  kv.set_int("trainer", "seed", static_cast<long>(seed));
  kv.set_int("trainer", "epochs", epochs);
  kv.set_int("trainer", "batch_size", batch_size);
  kv.set("trainer", "optimizer", to_string(optimizer.kind));
  kv.set_double("trainer", "lr", optimizer.lr);
  kv.set_double("trainer", "clip_norm", optimizer.clip_norm);
  kv.set_double("trainer", "adam_beta1", optimizer.beta1);
  kv.set_double("trainer", "adam_beta2", optimizer.beta2);
  kv.set_double("trainer", "opt_eps", optimizer.eps);
  kv.set_double("trainer", "lr_decay", lr_decay);
  kv.set_int("trainer", "decay_patience", decay_patience);
  kv.set_double("trainer", "init_scale", init_scale);
  kv.set_int("trainer", "dev_size", dev_size);
  kv.set("trainer", "selection", to_string(selection));
  kv.set("trainer", "ablation", to_string(ablation));
  kv.set_bool("trainer", "re_only", re_only);
  kv.set_double("objective", "lambda", lambda);
  if (lambda_kglp) kv.set_double("objective", "lambda_kglp", *lambda_kglp);
  if (lambda_coupling)
    kv.set_double("objective", "lambda_coupling", *lambda_coupling);
  kv.set_int("embeddings", "d_v", dims.d_v);
  kv.set_int("embeddings", "d_r", dims.d_r);
  kv.set_int("embeddings", "d_c", dims.d_c);
  kv.set("re_model", "architecture", to_string(re.architecture));
  kv.set_int("re_model", "hidden_dim", re.hidden_dim);
  kv.set_int("re_model", "num_layers", re.num_layers);
  kv.set_double("re_model", "dropout", re.dropout_rate);
  kv.set_int("re_model", "prune_k", re.prune_k);
  kv.set_int("re_model", "attention_dim", re.attention_dim);
  kv.set("kglp_model", "merge", to_string(kglp.merge));
  kv.set_int("kglp_model", "conve_filters", kglp.conve_filters);
  kv.set_int("kglp_model", "conve_kernel", kglp.conve_kernel);
  kv.set_int("kglp_model", "reshape_rows", kglp.reshape_rows);
  kv.set_int("kglp_model", "reshape_cols", kglp.reshape_cols);
  kv.set_double("kglp_model", "dropout", kglp.dropout_rate);
  return kv;
}

TrainConfig TrainConfig::from_kv(const KVConfig& kv) {
  TrainConfig c;
  c.seed = static_cast<uint64_t>(kv.get_int("trainer", "seed", static_cast<long>(c.seed)));
  c.epochs = static_cast<int>(kv.get_int("trainer", "epochs", c.epochs));
  c.batch_size = static_cast<int>(kv.get_int("trainer", "batch_size", c.batch_size));
  c.optimizer.kind = optimizer_from_string(
      kv.get_string("trainer", "optimizer", to_string(c.optimizer.kind)));
  c.optimizer.lr = kv.get_double("trainer", "lr", c.optimizer.lr);
  c.optimizer.clip_norm = kv.get_double("trainer", "clip_norm", c.optimizer.clip_norm);
  c.optimizer.beta1 = kv.get_double("trainer", "adam_beta1", c.optimizer.beta1);
  c.optimizer.beta2 = kv.get_double("trainer", "adam_beta2", c.optimizer.beta2);
  c.optimizer.eps = kv.get_double("trainer", "opt_eps", c.optimizer.eps);
  c.lr_decay = kv.get_double("trainer", "lr_decay", c.lr_decay);
  c.decay_patience =
      static_cast<int>(kv.get_int("trainer", "decay_patience", c.decay_patience));
  c.init_scale = kv.get_double("trainer", "init_scale", c.init_scale);
  c.dev_size = static_cast<int>(kv.get_int("trainer", "dev_size", c.dev_size));
  c.selection = averaging_from_string(
      kv.get_string("trainer", "selection", to_string(c.selection)));
  c.ablation =
      ablation_from_string(kv.get_string("trainer", "ablation", to_string(c.ablation)));
  c.re_only = kv.get_bool("trainer", "re_only", c.re_only);
  c.lambda = kv.get_double("objective", "lambda", c.lambda);
  if (kv.has("objective", "lambda_kglp"))
    c.lambda_kglp = kv.get_double("objective", "lambda_kglp", 0);
  if (kv.has("objective", "lambda_coupling"))
    c.lambda_coupling = kv.get_double("objective", "lambda_coupling", 0);
  c.dims.d_v = static_cast<int>(kv.get_int("embeddings", "d_v", c.dims.d_v));
  c.dims.d_r = static_cast<int>(kv.get_int("embeddings", "d_r", c.dims.d_r));
  c.dims.d_c = static_cast<int>(kv.get_int("embeddings", "d_c", c.dims.d_c));
  c.re.architecture = re_arch_from_string(
      kv.get_string("re_model", "architecture", to_string(c.re.architecture)));
  c.re.hidden_dim = static_cast<int>(kv.get_int("re_model", "hidden_dim", c.re.hidden_dim));
  c.re.num_layers = static_cast<int>(kv.get_int("re_model", "num_layers", c.re.num_layers));
  c.re.dropout_rate = kv.get_double("re_model", "dropout", c.re.dropout_rate);
  c.re.prune_k = static_cast<int>(kv.get_int("re_model", "prune_k", c.re.prune_k));
  c.re.attention_dim =
      static_cast<int>(kv.get_int("re_model", "attention_dim", c.re.attention_dim));
  c.kglp.merge =
      merge_from_string(kv.get_string("kglp_model", "merge", to_string(c.kglp.merge)));
  c.kglp.conve_filters =
      static_cast<int>(kv.get_int("kglp_model", "conve_filters", c.kglp.conve_filters));
  c.kglp.conve_kernel =
      static_cast<int>(kv.get_int("kglp_model", "conve_kernel", c.kglp.conve_kernel));
  c.kglp.reshape_rows =
      static_cast<int>(kv.get_int("kglp_model", "reshape_rows", c.kglp.reshape_rows));
  c.kglp.reshape_cols =
      static_cast<int>(kv.get_int("kglp_model", "reshape_cols", c.kglp.reshape_cols));
  c.kglp.dropout_rate = kv.get_double("kglp_model", "dropout", c.kglp.dropout_rate);
  return c;
}

uint64_t TrainConfig::hash() const { return to_kv().hash(); }

std::vector<ad::Parameter<Scalar>*> JointModel::params() {
  return kglp ? parameters(bank, re, *kglp) : parameters(bank, re);
}

JointModel build_model(const TrainConfig& cfg, const Vocab& vocab,
                       const AnswerSets& answers) {
  cfg.validate();
  JointModel m{EmbeddingBank<Scalar>(cfg.dims, vocab, answers),
               REModel<Scalar>(cfg.re, cfg.dims), std::nullopt};
  Rng bank_rng = Rng::derive(cfg.seed, fnv1a("init/bank"));
  m.bank.init(bank_rng, cfg.init_scale);
  Rng re_rng = Rng::derive(cfg.seed, fnv1a("init/re"));
  m.re.init(re_rng, cfg.init_scale);
  if (!cfg.re_only) {
    m.kglp.emplace(cfg.kglp, cfg.dims);
    Rng kglp_rng = Rng::derive(cfg.seed, fnv1a("init/kglp"));
    m.kglp->init(kglp_rng, cfg.init_scale);
  }
  return m;
}

std::vector<int> predict_dataset(JointModel& model, const Dataset& data,
                                 const Vocab& vocab, const AnswerSets& answers,
                                 int batch_size) {
  std::vector<int> preds;
  preds.reserve(data.sentences.size());
  Rng eval_rng(0);  // eval mode consumes no draws
  for (size_t start = 0; start < data.sentences.size();
       start += static_cast<size_t>(batch_size)) {
    std::vector<const Sentence*> ptrs;
    const size_t stop =
        std::min(data.sentences.size(), start + static_cast<size_t>(batch_size));
    for (size_t i = start; i < stop; ++i) ptrs.push_back(&data.sentences[i]);
    auto batch = make_batch<Scalar>(ptrs, vocab, answers, model.re.cfg.prune_k);
    ad::Tape<Scalar> tape;
    auto out = forward_re(tape, batch, model.bank, model.re, false, eval_rng);
    for (int p : predict_relations(out)) preds.push_back(p);
  }
  return preds;
}

EvalReport evaluate(JointModel& model, const Dataset& data, const Vocab& vocab,
                    const AnswerSets& answers, int batch_size, Averaging mode) {
  const auto preds = predict_dataset(model, data, vocab, answers, batch_size);
  std::vector<int> golds;
  golds.reserve(data.sentences.size());
  for (const auto& s : data.sentences) golds.push_back(vocab.relation_id(s.relation));
  return mode == Averaging::micro ? micro_prf(preds, golds) : macro_prf(preds, golds);
}

TrainHistory train(const TrainConfig& cfg, JointModel& model,
                   const Dataset& train_data, const Dataset& dev_data,
                   const Vocab& vocab, const AnswerSets& answers,
                   const std::string& out_dir) {
  cfg.validate();
  if (!cfg.re_only && !model.kglp)
    throw ConfigError("train: joint objective requested but the model has no KGLP side");
  std::filesystem::create_directories(out_dir);

  Dataset carved_train, carved_dev;
  const Dataset* tr = &train_data;
  const Dataset* dv = &dev_data;
  if (dev_data.sentences.empty()) {
    std::tie(carved_train, carved_dev) = carve_dev(train_data, cfg.dev_size, cfg.seed);
    tr = &carved_train;
    dv = &carved_dev;
  }

  const ObjectiveConfig obj = cfg.objective();
  const bool kglp_on = obj.lambda_kglp > 0;
  const bool coupling_on = obj.lambda_coupling > 0;

  Optimizer<Scalar> opt(cfg.optimizer, model.params());
  Rng shuffle_rng = Rng::derive(cfg.seed, fnv1a("shuffle"));
  Rng dropout_rng = Rng::derive(cfg.seed, fnv1a("dropout"));

  const std::string log_path = out_dir + "/train_log.jsonl";
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write training log: " + log_path);

  TrainHistory hist;
  hist.checkpoint_path = out_dir + "/best.ckpt";
  const uint64_t vocab_hash = vocab.hash();
  const uint64_t config_hash = cfg.hash();
  int flat_epochs = 0;
  long global_step = 0;

  std::vector<size_t> order(tr->sentences.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    LossBreakdown sum{};
    std::vector<double> batch_ms;
    int step = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<const Sentence*> ptrs;
      const size_t stop =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      for (size_t i = start; i < stop; ++i) ptrs.push_back(&tr->sentences[order[i]]);
      auto batch = make_batch<Scalar>(ptrs, vocab, answers, cfg.re.prune_k);

      ++step;
      const auto t0 = Clock::now();
      ad::Tape<Scalar> tape;
      LossBreakdown bd;
      if (cfg.re_only) {
        auto out = forward_re(tape, batch, model.bank, model.re, true, dropout_rng);
        auto loss = loss_re(batch, out, obj.mean_reduce);
        bd.l_re = loss.value()(0, 0);
        bd.l_joint = bd.l_re;
        check_finite(bd, false, false, epoch, step);
        tape.backward(loss);
      } else {
        auto out = joint_forward(tape, batch, model.bank, model.re, *model.kglp,
                                 answers, obj, true, dropout_rng);
        bd = out.breakdown;
        check_finite(bd, kglp_on, coupling_on, epoch, step);
        tape.backward(out.loss);
      }
      const double grad_norm = opt.clip();
      opt.step();
      opt.zero_grad();
      const double ms = ms_since(t0);

      batch_ms.push_back(ms);
      sum.l_re += bd.l_re;
      sum.l_kglp += bd.l_kglp;
      sum.l_coupling += bd.l_coupling;
      sum.l_joint += bd.l_joint;
      ++global_step;
      const nlohmann::ordered_json rec = {{"epoch", epoch},
                                          {"step", step},
                                          {"global_step", global_step},
                                          {"l_re", bd.l_re},
                                          {"l_kglp", bd.l_kglp},
                                          {"l_coupling", bd.l_coupling},
                                          {"l_joint", bd.l_joint},
                                          {"lambda_kglp", obj.lambda_kglp},
                                          {"lambda_coupling", obj.lambda_coupling},
                                          {"lr", opt.lr()},
                                          {"grad_norm", grad_norm},
                                          {"batch_ms", ms}};
      log << rec.dump() << '\n';
    }

    EpochStats es;
    es.epoch = epoch;
    const double steps = static_cast<double>(std::max(step, 1));
    es.mean_losses.l_re = sum.l_re / steps;
    es.mean_losses.l_kglp = sum.l_kglp / steps;
    es.mean_losses.l_coupling = sum.l_coupling / steps;
    es.mean_losses.l_joint = sum.l_joint / steps;
    es.mean_losses.lambda_kglp = obj.lambda_kglp;
    es.mean_losses.lambda_coupling = obj.lambda_coupling;
    es.lr = opt.lr();
    double mean = 0;
    for (double v : batch_ms) mean += v;
    mean /= std::max<size_t>(batch_ms.size(), 1);
    double var = 0;
    for (double v : batch_ms) var += (v - mean) * (v - mean);
    var /= std::max<size_t>(batch_ms.size(), 1);
    es.batch_ms_mean = mean;
    es.batch_ms_stdev = std::sqrt(var);

    const EvalReport devrep =
        evaluate(model, *dv, vocab, answers, cfg.batch_size, cfg.selection);
    es.dev_precision = devrep.precision;
    es.dev_recall = devrep.recall;
    es.dev_f1 = devrep.f1;
    hist.epochs.push_back(es);

    // Strict improvement keeps the earliest epoch on ties.
    if (hist.best_epoch == 0 || devrep.f1 > hist.best_dev_f1) {
      hist.best_epoch = epoch;
      hist.best_dev_f1 = devrep.f1;
      save_checkpoint(hist.checkpoint_path, opt.params(), vocab_hash, config_hash);
      flat_epochs = 0;
    } else if (++flat_epochs >= cfg.decay_patience) {
      opt.set_lr(opt.lr() * cfg.lr_decay);
      flat_epochs = 0;
    }
  }

  const std::string hist_path = out_dir + "/history.json";
  std::ofstream hist_out(hist_path);
  if (!hist_out) throw IoError("cannot write history: " + hist_path);
  hist_out << hist.to_json() << '\n';
  return hist;
}

std::string TrainHistory::to_json() const {
  nlohmann::ordered_json j;
  j["best_epoch"] = best_epoch;
  j["best_dev_f1"] = best_dev_f1;
  j["checkpoint"] = checkpoint_path;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : epochs) j["epochs"].push_back(epoch_json(e));
  return j.dump(2);
}

AblationTable ablate(const TrainConfig& base, const Dataset& train_data,
                     const Dataset& dev_data, const Dataset& test_data,
                     const Vocab& vocab, const AnswerSets& answers,
                     const std::vector<uint64_t>& seeds, const std::string& out_dir) {
  if (seeds.empty()) throw ConfigError("ablate: need at least one seed");
  AblationTable table;
  for (Ablation arm : {Ablation::full, Ablation::no_coupling, Ablation::no_kglp,
                       Ablation::baseline}) {
    AblationArm row;
    row.arm = arm;
    for (uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.ablation = arm;
      cfg.seed = seed;
      const std::string run_dir = out_dir + "/" + to_string(arm) + "_seed" +
                                  std::to_string(seed);
      try {
        auto model = build_model(cfg, vocab, answers);
        train(cfg, model, train_data, dev_data, vocab, answers, run_dir);
        row.per_seed.push_back(evaluate(model, test_data, vocab, answers,
                                        cfg.batch_size, base.selection));
      } catch (const DivergenceError& e) {
        row.diverged = true;
        if (row.error.empty()) row.error = e.what();
      }
    }
    std::vector<double> ps, rs, fs;
    for (const auto& rep : row.per_seed) {
      ps.push_back(rep.precision);
      rs.push_back(rep.recall);
      fs.push_back(rep.f1);
    }
    row.median.mode = base.selection;
    row.median.precision = median(ps);
    row.median.recall = median(rs);
    row.median.f1 = median(fs);
    table.arms.push_back(std::move(row));
  }
  return table;
}

std::string AblationTable::format() const {
  std::vector<std::pair<std::string, EvalReport>> rows;
  for (const auto& arm : arms) {
    std::string label = to_string(arm.arm);
    if (arm.diverged) label += " [DIVERGED]";
    rows.emplace_back(label, arm.median);
  }
  return format_metrics_table(rows);
}

OverheadReport measure_overhead(const TrainConfig& cfg, const Dataset& train_data,
                                const Dataset& dev_data, const Vocab& vocab,
                                const AnswerSets& answers,
                                const std::string& out_dir) {
  if (cfg.epochs < 2)
    throw ConfigError("measure_overhead: need epochs >= 2 (first epoch is warmup)");
  OverheadReport rep;
  // Mean of per-epoch means, warmup epoch discarded: every epoch sees the
  // same batch count, so epochs weigh equally.
  const auto timed_run = [&](Ablation arm, bool re_only, const std::string& tag) {
    TrainConfig run_cfg = cfg;
    run_cfg.ablation = arm;
    run_cfg.re_only = re_only;
    auto model = build_model(run_cfg, vocab, answers);
    const auto hist = train(run_cfg, model, train_data, dev_data, vocab, answers,
                            out_dir + "/" + tag);
    double mean = 0;
    int counted = 0;
    for (const auto& e : hist.epochs) {
      if (e.epoch <= rep.warmup_epochs) continue;
      mean += e.batch_ms_mean;
      ++counted;
    }
    return mean / std::max(counted, 1);
  };
  rep.full_batch_ms = timed_run(Ablation::full, false, "overhead_full");
  rep.baseline_batch_ms = timed_run(Ablation::baseline, true, "overhead_baseline");
  rep.ratio = rep.full_batch_ms / rep.baseline_batch_ms;
  return rep;
}

}  // namespace jrrelp
