#pragma once

// Seeded joint optimization loop, checkpointing, the ablation protocol and
// the per-batch overhead measurement. Test-time evaluation uses the RE path
// only. Deterministic given the seed: fixed init/shuffle/dropout streams,
// single-threaded numerics.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jrrelp/config.hpp"
#include "jrrelp/corpus.hpp"
#include "jrrelp/embeddings.hpp"
#include "jrrelp/kglp_model.hpp"
#include "jrrelp/metrics.hpp"
#include "jrrelp/objective.hpp"
#include "jrrelp/optimizer.hpp"
#include "jrrelp/re_model.hpp"

namespace jrrelp {

// Production scalar. Double everywhere keeps training, finite-difference
// checks and checkpoints in a single width.
using Scalar = double;

enum class Ablation { full, no_coupling, no_kglp, baseline };

const char* to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct TrainConfig {
  uint64_t seed = 13;
  int epochs = 30;
  int batch_size = 32;
  OptimizerConfig optimizer;  // sgd, lr 0.3, global-norm clip 5.0
  double lr_decay = 0.9;      // lr *= lr_decay after decay_patience flat epochs
  int decay_patience = 1;     // dev-F1 plateau length that triggers decay
  double lambda = 1.0;        // shared λ for both side terms
  std::optional<double> lambda_kglp;      // explicit split overrides shared λ
  std::optional<double> lambda_coupling;  // ditto
  Ablation ablation = Ablation::full;
  // Strict baseline: the KGLP side is never even constructed and the loop
  // calls the RE forward/loss directly. Forces both λ to 0.
  bool re_only = false;
  double init_scale = 0.1;
  int dev_size = 800;  // carved from train when no dev split exists
  Averaging selection = Averaging::micro;  // dev metric for checkpoint choice
  EmbeddingDims dims;
  REModelConfig re;
  KGLPModelConfig kglp;

  // Effective λ values after the ablation forcing: no_coupling ⇒ λ_C = 0,
  // no_kglp ⇒ λ_K = 0, baseline (or re_only) ⇒ both 0.
  ObjectiveConfig objective() const;
  void validate() const;

  KVConfig to_kv() const;
  // Reads known keys only; callers with extra sections (e.g. CLI [data])
  // run kv.check_fully_read() themselves after consuming theirs.
  static TrainConfig from_kv(const KVConfig& kv);
  uint64_t hash() const;  // fingerprint of the canonical serialization
};

// Everything a run owns. Callers construct via build_model, then train,
// evaluate, save or load through it. Parameter pointers are taken after
// construction, so keep the object in place once training starts.
struct JointModel {
  EmbeddingBank<Scalar> bank;
  REModel<Scalar> re;
  std::optional<KGLPModel<Scalar>> kglp;  // absent when cfg.re_only

  std::vector<ad::Parameter<Scalar>*> params();
};

// Constructs and initializes the model from independent named RNG streams
// derived from cfg.seed, so the bank/RE init bits do not depend on whether
// the KGLP side exists.
JointModel build_model(const TrainConfig& cfg, const Vocab& vocab,
                       const AnswerSets& answers);

struct EpochStats {
  int epoch = 0;              // 1-based
  LossBreakdown mean_losses;  // per-step means over the epoch
  double dev_precision = 0, dev_recall = 0, dev_f1 = 0;
  double batch_ms_mean = 0, batch_ms_stdev = 0;
  double lr = 0;  // learning rate in effect during the epoch
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based argmax dev F1; ties keep the earliest
  double best_dev_f1 = 0;
  std::string checkpoint_path;

  std::string to_json() const;
};

// Runs the loop and writes train_log.jsonl (one JSON record per step),
// best.ckpt (at each new best dev F1) and history.json under out_dir.
// When dev_data is empty a seeded dev split of cfg.dev_size examples is
// carved from train_data. Throws DivergenceError naming the offending term
// when a loss goes non-finite.
TrainHistory train(const TrainConfig& cfg, JointModel& model,
                   const Dataset& train_data, const Dataset& dev_data,
                   const Vocab& vocab, const AnswerSets& answers,
                   const std::string& out_dir);

// Argmax RE predictions over a dataset in order; eval mode, no RNG use.
std::vector<int> predict_dataset(JointModel& model, const Dataset& data,
                                 const Vocab& vocab, const AnswerSets& answers,
                                 int batch_size);

EvalReport evaluate(JointModel& model, const Dataset& data, const Vocab& vocab,
                    const AnswerSets& answers, int batch_size, Averaging mode);

struct AblationArm {
  Ablation arm = Ablation::full;
  std::vector<EvalReport> per_seed;  // test-set reports in seed order
  bool diverged = false;
  std::string error;       // first divergence message, if any
  EvalReport median;       // elementwise median of P/R/F1 over seeds
};

struct AblationTable {
  std::vector<AblationArm> arms;  // full, no_coupling, no_kglp, baseline
  std::string format() const;     // fixed-width percent table over medians
};

// Same data and seeds across arms; only the λ switches differ. A diverging
// arm is marked and the table stays partial instead of aborting the sweep.
AblationTable ablate(const TrainConfig& base, const Dataset& train_data,
                     const Dataset& dev_data, const Dataset& test_data,
                     const Vocab& vocab, const AnswerSets& answers,
                     const std::vector<uint64_t>& seeds, const std::string& out_dir);

struct OverheadReport {
  double full_batch_ms = 0;      // mean per-batch over post-warmup epochs
  double baseline_batch_ms = 0;
  double ratio = 0;              // full / baseline
  int warmup_epochs = 1;         // leading epochs discarded from the means
};

// Times the full joint configuration against the λ=0 baseline on the same
// data, seed and hardware. The first epoch is warmup and is discarded.
OverheadReport measure_overhead(const TrainConfig& cfg, const Dataset& train_data,
                                const Dataset& dev_data, const Vocab& vocab,
                                const AnswerSets& answers,
                                const std::string& out_dir);

}  // namespace jrrelp
