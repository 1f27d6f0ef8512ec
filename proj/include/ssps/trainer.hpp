#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ssps/clustering.hpp"
#include "ssps/losses.hpp"
#include "ssps/metrics.hpp"
#include "ssps/model.hpp"
#include "ssps/sampler.hpp"
#include "ssps/synthdata.hpp"

namespace ssps {

enum class Framework { simclr, moco, swav, vicreg, dino };
enum class OptimizerKind { sgd, adam };
enum class LrDecay { step, cosine };

std::string_view to_string(Framework f);
Framework parse_framework(std::string_view name);
std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(LrDecay d);
LrDecay parse_lr_decay(std::string_view name);

struct TrainConfig {
  // [data]
  GenConfig data;
  std::size_t n_target_trials = 3000;
  std::size_t n_nontarget_trials = 3000;

  // [model]
  std::vector<std::size_t> encoder_hidden = {64, 64};
  std::size_t d_repr = 32;
  bool use_projector = false;
  std::size_t projector_hidden = 64;
  std::size_t d_emb = 16;
  std::size_t dino_head_dim = 256;

  // [framework]
  Framework framework = Framework::simclr;
  double tau = 0.03;
  bool symmetric = true;
  std::size_t moco_queue = 1024;
  std::size_t swav_prototypes = 64;
  std::size_t swav_queue = 256;
  std::size_t swav_queue_start_epoch = 5;
  std::size_t swav_freeze_prototypes_epochs = 1;
  double swav_tau = 0.1;
  int sinkhorn_iters = 3;
  double sinkhorn_epsilon = 0.05;
  VicregParams vicreg;
  double dino_tau_s = 0.1;
  double dino_tau_t = 0.04;
  double dino_center_decay = 0.9;
  std::size_t dino_local_views = 4;
  double grad_clip = 0.0;  // 0 disables
  double ema_m = 0.99;
  double ema_m_final = 0.99;  // cosine ramp from ema_m when different

  // [sampler]
  SamplerConfig sampler{.activation_epoch = 30};

  // [schedule]
  std::size_t epochs = 50;
  std::size_t warmup_epochs_before_ssps = 30;
  std::size_t batch_size = 64;
  double lr = 0.05;
  LrDecay lr_decay = LrDecay::step;
  double lr_decay_factor = 0.95;
  std::size_t lr_decay_every = 5;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.0;
  bool restart_lr_at_activation = false;
  bool reset_optimizer_at_activation = false;
  std::uint64_t seed = 0;
  // When false, views carry no augmentation noise from the activation epoch on.
  bool augmentation_enabled = true;
  std::size_t averaging_window = 10;
  // k-means clusters for the per-epoch NMI ratio; 0 means one per recording
  std::size_t nmi_clusters = 0;

  std::size_t activation_epoch() const noexcept { return sampler.activation_epoch; }
  std::size_t resolved_k() const;
  std::size_t resolved_pos_capacity() const;
  // Embedding width stored per index in the positive queue.
  std::size_t pos_entry_dim() const;
  std::size_t embedding_dim() const;
  ModelSpec model_spec() const;
  // Throws ConfigError.
  void validate() const;
};

// Framework-specific defaults (projector, temperatures, schedules).
TrainConfig default_config(Framework f);

struct EpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double eer = 0.0;
  double min_dcf = 0.0;
  double speaker_acc = 1.0;
  double recording_acc = 1.0;
  double fallback_rate = 0.0;
  double nmi_ratio = 0.0;

  bool operator==(const EpochReport&) const = default;
};

struct EvalResult {
  double eer = 0.0;
  double min_dcf = 0.0;
  std::vector<ScoredTrial> scores;
};

// Encodes reference views (the base vectors), cosine-scores the trials.
EvalResult evaluate(const ModelParams& params, std::span<const TrialPair> trials,
                    const std::vector<UtteranceRecord>& records);

struct Dataset {
  std::vector<UtteranceRecord> records;
  std::vector<TrialPair> trials;
};

Dataset make_dataset(const TrainConfig& cfg);

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double momentum) : kind_(kind), momentum_(momentum) {}

  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads, double lr);
  void reset();
  std::uint64_t steps() const noexcept { return t_; }

 private:
  OptimizerKind kind_ = OptimizerKind::adam;
  double momentum_ = 0.0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<Vec> m_;
  std::vector<Vec> v_;
};

// Drives one run epoch by epoch. WithSampler=false compiles out every queue,
// sampler and audit path, which gives the reference trajectory for the
// ssl_default null-integration check.
template <bool WithSampler>
class BasicTrainer {
 public:
  BasicTrainer(TrainConfig cfg, const std::vector<UtteranceRecord>& records,
               const std::vector<TrialPair>& trials);

  // Schedules, clustering epoch initialization, batch shuffling.
  void begin_epoch();
  const std::vector<std::vector<std::size_t>>& batches() const noexcept { return batches_; }
  double train_iteration(std::span<const std::size_t> batch);
  EpochReport end_epoch();

  std::size_t epoch() const noexcept { return epoch_; }
  bool sampler_active() const noexcept;
  double current_lr() const noexcept { return lr_now_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  const ModelParams& model() const noexcept { return student_; }
  const TeacherParams& teacher() const noexcept { return teacher_; }
  const RefQueue& ref_queue() const noexcept { return q_ref_; }
  const PosQueue& pos_queue() const noexcept { return q_pos_; }
  const std::optional<ClusterState>& cluster_state() const noexcept { return clusters_; }
  const std::vector<SampleDecision>& last_decisions() const noexcept { return last_decisions_; }
  const std::vector<AuditRow>& epoch_audit() const noexcept { return audit_; }
  const std::vector<double>& epoch_losses() const noexcept { return losses_; }
  // Eval k-means assignments from the last end_epoch().
  const std::vector<std::size_t>& eval_clusters() const noexcept { return eval_clusters_; }
  const std::vector<ScoredTrial>& eval_scores() const noexcept { return eval_scores_; }

 private:
  struct Grads {
    ModelParams model;
    Mat prototypes;
  };

  Mat view_batch(std::span<const std::size_t> batch, ViewKind kind, double sigma);
  void decide(std::span<const std::size_t> batch);
  void apply_step(Grads& grads);
  double ema_momentum() const;

  TrainConfig cfg_;
  const std::vector<UtteranceRecord>* records_;
  const std::vector<TrialPair>* trials_;
  std::vector<std::size_t> speakers_;
  std::vector<std::size_t> recordings_;

  ModelParams student_;
  TeacherParams teacher_;
  Prototypes prototypes_;
  DinoCenter center_;
  std::deque<Vec> moco_keys_;
  std::deque<Vec> swav_queue_;
  Optimizer opt_;
  Optimizer proto_opt_;

  Rng shuffle_rng_;
  Rng augment_rng_;
  Rng sampler_rng_;

  RefQueue q_ref_;
  PosQueue q_pos_;
  std::optional<ClusterState> clusters_;
  std::optional<OracleIndex> oracle_;
  std::vector<SampleDecision> last_decisions_;
  std::vector<AuditRow> audit_;

  std::size_t epoch_ = 0;
  std::uint64_t iteration_ = 0;
  std::uint64_t total_iterations_ = 0;
  double lr_now_ = 0.0;
  bool in_epoch_ = false;
  std::vector<std::vector<std::size_t>> batches_;
  std::vector<double> losses_;
  std::vector<std::size_t> eval_clusters_;
  std::vector<ScoredTrial> eval_scores_;
};

using Trainer = BasicTrainer<true>;
using BaselineTrainer = BasicTrainer<false>;

struct EpochLog {
  std::vector<double> losses;
  std::vector<ScoredTrial> scores;
  std::vector<std::size_t> clusters;
};

struct ExperimentResult {
  std::vector<EpochReport> reports;
  ModelParams initial_model;
  std::vector<ModelParams> checkpoints;  // one per epoch
  ModelParams final_model;               // average of the last W checkpoints
  EvalResult final_eval;
  // Average of the last W checkpoints before the activation epoch.
  std::optional<EvalResult> activation_eval;
  std::vector<AuditRow> audit;
  std::vector<EpochLog> epoch_logs;
};

ExperimentResult run_experiment(const TrainConfig& cfg, const Dataset& data);
ExperimentResult run_baseline_experiment(const TrainConfig& cfg, const Dataset& data);

// Average of the last `window` entries (all when fewer).
ModelParams average_last(std::span<const ModelParams> checkpoints, std::size_t window);

}  // namespace ssps
