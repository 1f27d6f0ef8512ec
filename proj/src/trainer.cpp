#include "ssps/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>

#include "ssps/error.hpp"

namespace ssps {

namespace {

// Rng stream ids; every consumer of randomness owns one.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kAugmentStream = 3;
constexpr std::uint64_t kSamplerStream = 4;
constexpr std::uint64_t kTrialStream = 5;
constexpr std::uint64_t kEvalStreamBase = 1000;

constexpr std::size_t kEvalKmeansIters = 10;

bool has_teacher(Framework f) { return f == Framework::moco || f == Framework::dino; }

template <typename T>
void fifo_push(std::deque<T>& q, T item, std::size_t capacity) {
  if (capacity == 0) return;
  q.push_back(std::move(item));
  while (q.size() > capacity) q.pop_front();
}

Mat stack_queue(const std::deque<Vec>& q, std::size_t dim) {
  Mat m(q.size(), dim);
  for (std::size_t r = 0; r < q.size(); ++r) m.set_row(r, q[r]);
  return m;
}

}  // namespace

std::string_view to_string(Framework f) {
  switch (f) {
    case Framework::simclr: return "simclr";
    case Framework::moco: return "moco";
    case Framework::swav: return "swav";
    case Framework::vicreg: return "vicreg";
    case Framework::dino: return "dino";
  }
  return "unknown";
}

Framework parse_framework(std::string_view name) {
  for (auto f : {Framework::simclr, Framework::moco, Framework::swav, Framework::vicreg, Framework::dino}) {
    if (name == to_string(f)) return f;
  }
  throw ConfigError("unknown framework '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(LrDecay d) { return d == LrDecay::step ? "step" : "cosine"; }

LrDecay parse_lr_decay(std::string_view name) {
  if (name == "step") return LrDecay::step;
  if (name == "cosine") return LrDecay::cosine;
  throw ConfigError("unknown lr_decay '" + std::string(name) + "'");
}

// ---- config ---------------------------------------------------------------

std::size_t TrainConfig::resolved_k() const { return sampler.k ? sampler.k : 4 * data.n_speakers; }

std::size_t TrainConfig::resolved_pos_capacity() const {
  return sampler.pos_queue_capacity ? sampler.pos_queue_capacity : data.total();
}

std::size_t TrainConfig::embedding_dim() const {
  if (framework == Framework::dino) return dino_head_dim;
  return use_projector ? d_emb : d_repr;
}

std::size_t TrainConfig::pos_entry_dim() const {
  return framework == Framework::dino ? 2 * embedding_dim() : embedding_dim();
}

ModelSpec TrainConfig::model_spec() const {
  ModelSpec spec;
  spec.encoder.layer_dims.push_back(data.dim_input);
  for (auto h : encoder_hidden) spec.encoder.layer_dims.push_back(h);
  spec.encoder.layer_dims.push_back(d_repr);
  if (use_projector) {
    spec.projector.layer_dims = {d_repr, projector_hidden, d_emb};
    spec.projector.standardize_hidden = true;
    spec.projector.normalize_output = framework == Framework::dino;
  }
  if (framework == Framework::dino) spec.head.layer_dims = {d_emb, dino_head_dim};
  return spec;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  data.validate();
  const std::size_t n = data.total();
  if (n < 2) fail("dataset needs at least two utterances");
  if (batch_size < 2 || batch_size > n) fail("batch_size must lie in [2, N]");
  if (sampler.activation_epoch != warmup_epochs_before_ssps) {
    fail("sampler.activation_epoch (" + std::to_string(sampler.activation_epoch) +
         ") must equal warmup_epochs_before_ssps (" + std::to_string(warmup_epochs_before_ssps) + ")");
  }
  if (activation_epoch() > epochs) fail("activation_epoch must not exceed epochs");
  if (averaging_window == 0) fail("averaging_window must be >= 1");
  if (nmi_clusters > n) fail("nmi_clusters must not exceed N");
  if (d_repr == 0 || d_emb == 0 || dino_head_dim == 0) fail("model dimensions must be positive");
  for (auto h : encoder_hidden)
    if (h == 0) fail("encoder_hidden entries must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
  if (!(lr_decay_factor > 0.0) || lr_decay_every == 0) fail("lr_decay_factor must be > 0 and lr_decay_every >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(tau > 0.0) || !(swav_tau > 0.0) || !(dino_tau_s > 0.0) || !(dino_tau_t > 0.0)) fail("temperatures must be > 0");
  if (!(ema_m >= 0.0 && ema_m <= 1.0) || !(ema_m_final >= 0.0 && ema_m_final <= 1.0)) fail("ema_m must lie in [0, 1]");
  if (!(grad_clip >= 0.0)) fail("grad_clip must be >= 0");
  if (sinkhorn_iters < 1 || !(sinkhorn_epsilon > 0.0)) fail("sinkhorn_iters >= 1 and sinkhorn_epsilon > 0 required");
  if (framework == Framework::swav && swav_prototypes < 2) fail("swav_prototypes must be >= 2");
  if (framework == Framework::dino && !use_projector) fail("dino needs the projector");
  if (!(dino_center_decay >= 0.0 && dino_center_decay <= 1.0)) fail("dino_center_decay must lie in [0, 1]");

  const auto s = sampler.strategy;
  if (s == Strategy::ssps_nn) {
    if (sampler.m < 1) fail("ssps_nn requires M >= 1");
    if (sampler.m >= n) fail("ssps_nn requires M < N");
  }
  if (sampler.uses_clustering()) {
    const std::size_t k = resolved_k();
    if (k < 1 || k > n) fail("K must lie in [1, N]");
    if (sampler.m >= k) fail("cluster neighborhood M must be < K");
    if (sampler.kmeans_iters == 0) fail("kmeans_iters must be >= 1");
  }
  if (s == Strategy::ssps_cluster_centroid && embedding_dim() != d_repr) {
    fail("cluster-centroid sampling needs embeddings in the representation space (framework without projector)");
  }
  if (s == Strategy::supervised_oracle && data.recs_per_speaker < 2) {
    fail("supervised oracle needs at least two recordings per speaker");
  }
  if (resolved_pos_capacity() == 0) fail("pos_queue_capacity must be positive");
}

TrainConfig default_config(Framework f) {
  TrainConfig c;
  c.framework = f;
  c.sampler.activation_epoch = c.warmup_epochs_before_ssps;
  switch (f) {
    case Framework::simclr:
    case Framework::moco:
      c.use_projector = false;
      c.tau = 0.03;
      break;
    case Framework::swav:
    case Framework::vicreg:
      // plain SGD barely moves these two at desk scale
      c.use_projector = true;
      c.optimizer = OptimizerKind::adam;
      c.lr = 3e-3;
      break;
    case Framework::dino:
      c.use_projector = true;
      c.grad_clip = 3.0;
      c.lr_decay = LrDecay::cosine;
      c.ema_m = 0.99;
      c.ema_m_final = 1.0;
      break;
  }
  return c;
}

// ---- evaluation -----------------------------------------------------------

EvalResult evaluate(const ModelParams& params, std::span<const TrialPair> trials,
                    const std::vector<UtteranceRecord>& records) {
  const Mat reps = encode(params, stack_bases(records));
  EvalResult r;
  r.scores = score_trials(reps, trials);
  r.eer = eer(r.scores);
  r.min_dcf = min_dcf(r.scores);
  return r;
}

Dataset make_dataset(const TrainConfig& cfg) {
  cfg.data.validate();
  Dataset d;
  d.records = generate_dataset(cfg.data);
  Rng rng = Rng::stream(cfg.data.seed, kTrialStream);
  d.trials = make_trials(d.records, cfg.n_target_trials, cfg.n_nontarget_trials, rng);
  return d;
}

// ---- optimizer ------------------------------------------------------------

void Optimizer::step(const std::vector<std::span<double>>& params,
                     const std::vector<std::span<const double>>& grads, double lr) {
  if (params.size() != grads.size()) throw DimensionError("Optimizer: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (auto p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(kind_ == OptimizerKind::adam ? p.size() : 0, 0.0);
    }
  }
  if (m_.size() != params.size()) throw DimensionError("Optimizer: parameter layout changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto g = grads[k];
    if (p.size() != g.size() || p.size() != m_[k].size()) throw DimensionError("Optimizer: tensor size mismatch");
    Vec& m = m_[k];
    if (kind_ == OptimizerKind::adam) {
      Vec& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      }
    } else if (momentum_ > 0.0) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = momentum_ * m[i] + g[i];
        p[i] -= lr * m[i];
      }
    } else {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
  }
}

void Optimizer::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
}

// ---- trainer --------------------------------------------------------------

template <bool WithSampler>
BasicTrainer<WithSampler>::BasicTrainer(TrainConfig cfg, const std::vector<UtteranceRecord>& records,
                                        const std::vector<TrialPair>& trials)
    : cfg_(std::move(cfg)), records_(&records), trials_(&trials) {
  cfg_.validate();
  if (records.size() != cfg_.data.total()) {
    throw ConfigError("dataset has " + std::to_string(records.size()) + " records, config expects " +
                      std::to_string(cfg_.data.total()));
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].index != i || records[i].base.size() != cfg_.data.dim_input) {
      throw ConfigError("dataset records must be indexed 0..N-1 with dim_input features");
    }
  }
  speakers_ = speaker_labels(records);
  recordings_ = recording_labels(records);

  Rng init = Rng::stream(cfg_.seed, kInitStream);
  student_ = build_model(cfg_.model_spec(), init);
  if (has_teacher(cfg_.framework)) teacher_.model = student_;
  if (cfg_.framework == Framework::swav) prototypes_ = make_prototypes(cfg_.swav_prototypes, cfg_.d_emb, init);
  center_.decay = cfg_.dino_center_decay;
  opt_ = Optimizer(cfg_.optimizer, cfg_.momentum);
  proto_opt_ = Optimizer(cfg_.optimizer, cfg_.momentum);

  shuffle_rng_ = Rng::stream(cfg_.seed, kShuffleStream);
  augment_rng_ = Rng::stream(cfg_.seed, kAugmentStream);
  sampler_rng_ = Rng::stream(cfg_.seed, kSamplerStream);

  const std::size_t n = records.size();
  const std::size_t per_epoch = n / cfg_.batch_size + (n % cfg_.batch_size >= 2 ? 1 : 0);
  total_iterations_ = per_epoch * cfg_.epochs;

  if constexpr (WithSampler) {
    q_ref_ = RefQueue(n, cfg_.d_repr);
    q_pos_ = PosQueue(cfg_.resolved_pos_capacity(), cfg_.pos_entry_dim());
    if (cfg_.sampler.strategy == Strategy::supervised_oracle) oracle_.emplace(records);
  }
}

template <bool WithSampler>
bool BasicTrainer<WithSampler>::sampler_active() const noexcept {
  if constexpr (!WithSampler) {
    return false;
  } else {
    return cfg_.sampler.strategy != Strategy::ssl_default && epoch_ >= cfg_.activation_epoch();
  }
}

template <bool WithSampler>
void BasicTrainer<WithSampler>::begin_epoch() {
  if (in_epoch_) throw InvalidArgument("begin_epoch: previous epoch not finished");
  if (epoch_ >= cfg_.epochs) throw InvalidArgument("begin_epoch: all configured epochs already ran");
  const std::size_t act = cfg_.activation_epoch();

  std::size_t e = epoch_;
  std::size_t span = cfg_.epochs;
  if (cfg_.restart_lr_at_activation && act > 0) {
    if (e >= act) {
      e -= act;
      span = cfg_.epochs - act;
    } else {
      span = act;
    }
  }
  if (cfg_.lr_decay == LrDecay::step) {
    lr_now_ = cfg_.lr * std::pow(cfg_.lr_decay_factor, static_cast<double>(e / cfg_.lr_decay_every));
  } else {
    lr_now_ = cfg_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * double(e) / double(std::max<std::size_t>(span, 1))));
  }
  if (cfg_.reset_optimizer_at_activation && act > 0 && epoch_ == act) {
    opt_.reset();
    proto_opt_.reset();
  }

  if constexpr (WithSampler) {
    clusters_.reset();
    // Epoch initialization needs every reference row; before a full pass the
    // clustering sampler falls back for the whole epoch.
    if (sampler_active() && cfg_.sampler.uses_clustering() && q_ref_.filled_count() == q_ref_.capacity()) {
      clusters_ = ssps_cluster_epoch_init(q_ref_, cfg_.resolved_k(), cfg_.sampler.m, cfg_.sampler.kmeans_iters,
                                          sampler_rng_);
    }
  }

  std::vector<std::size_t> order(records_->size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_rng_.shuffle(order);
  batches_.clear();
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    const std::size_t stop = std::min(order.size(), start + cfg_.batch_size);
    if (stop - start < 2) break;  // a single leftover row cannot form negatives
    batches_.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                          order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  audit_.clear();
  losses_.clear();
  last_decisions_.clear();
  in_epoch_ = true;
}

template <bool WithSampler>
Mat BasicTrainer<WithSampler>::view_batch(std::span<const std::size_t> batch, ViewKind kind, double sigma) {
  Mat x(batch.size(), cfg_.data.dim_input);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    x.set_row(r, make_view((*records_)[batch[r]], kind, sigma, augment_rng_).features);
  }
  return x;
}

template <bool WithSampler>
void BasicTrainer<WithSampler>::decide(std::span<const std::size_t> batch) {
  last_decisions_.clear();
  if (!sampler_active()) return;
  const auto& sc = cfg_.sampler;
  const bool centroid = sc.strategy == Strategy::ssps_cluster_centroid;
  for (std::size_t i : batch) {
    std::optional<std::size_t> cand;
    std::optional<std::size_t> cluster;
    switch (sc.strategy) {
      case Strategy::ssps_nn:
        if (q_ref_.filled(i) && q_ref_.filled_count() > sc.m) cand = ssps_nn_select(i, q_ref_, sc.m, sampler_rng_);
        break;
      case Strategy::ssps_cluster:
      case Strategy::ssps_cluster_centroid:
        if (clusters_) {
          const ClusterPick pick = ssps_cluster_select(i, *clusters_, sc.m, sampler_rng_);
          cand = pick.pos_index;
          cluster = pick.cluster;
        }
        break;
      case Strategy::supervised_oracle:
        cand = supervised_oracle_select(i, *oracle_, sampler_rng_);
        break;
      case Strategy::ssl_default:
        break;
    }
    SampleDecision d = resolve_pseudo_positive(cand, q_pos_, centroid, clusters_ ? &*clusters_ : nullptr, cluster);
    AuditRow row;
    row.epoch = epoch_;
    row.index = i;
    row.pos_index = cand;
    if (cand) {
      row.same_speaker = speakers_[*cand] == speakers_[i];
      row.same_recording = recordings_[*cand] == recordings_[i];
    }
    row.fallback = d.use_default();
    audit_.push_back(row);
    last_decisions_.push_back(std::move(d));
  }
}

template <bool WithSampler>
double BasicTrainer<WithSampler>::ema_momentum() const {
  if (cfg_.ema_m_final == cfg_.ema_m || total_iterations_ == 0) return cfg_.ema_m;
  const double t = static_cast<double>(iteration_) / static_cast<double>(total_iterations_);
  return cfg_.ema_m_final - (cfg_.ema_m_final - cfg_.ema_m) * 0.5 * (std::cos(std::numbers::pi * t) + 1.0);
}

template <bool WithSampler>
void BasicTrainer<WithSampler>::apply_step(Grads& g) {
  const bool swav = cfg_.framework == Framework::swav;
  const bool protos_train = swav && epoch_ >= cfg_.swav_freeze_prototypes_epochs;
  if (cfg_.grad_clip > 0.0) {
    double sq = global_grad_norm(g.model);
    sq *= sq;
    if (protos_train)
      for (double v : g.prototypes.values()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) {
      const double f = cfg_.grad_clip / norm;
      scale_grads(g.model, f);
      for (double& v : g.prototypes.values()) v *= f;
    }
  }
  opt_.step(parameter_spans(student_), parameter_spans(std::as_const(g.model)), lr_now_);
  student_.touch();
  if (protos_train) {
    proto_opt_.step({prototypes_.vectors.values()}, {std::as_const(g.prototypes).values()}, lr_now_);
    prototypes_.renormalize();
  }
  if (has_teacher(cfg_.framework)) ema_update(teacher_, student_, ema_momentum());
}

template <bool WithSampler>
double BasicTrainer<WithSampler>::train_iteration(std::span<const std::size_t> batch) {
  if (!in_epoch_) throw InvalidArgument("train_iteration: call begin_epoch first");
  if (batch.size() < 2) throw InvalidArgument("train_iteration: batch needs at least two rows");
  for (std::size_t i : batch)
    if (i >= records_->size()) throw InvalidArgument("train_iteration: index out of range");

  const std::size_t b = batch.size();
  const bool augment = cfg_.augmentation_enabled || epoch_ < cfg_.activation_epoch();
  const double sigma = augment ? cfg_.data.sigma_augment : 0.0;

  Mat yref;
  if constexpr (WithSampler) {
    yref = encode(student_, view_batch(batch, ViewKind::reference, 0.0));
    decide(batch);
  }
  // Row r of the positive branch is replaced when this returns non-null.
  auto pseudo = [&](std::size_t r) -> const Vec* {
    if constexpr (WithSampler) {
      if (r < last_decisions_.size() && !last_decisions_[r].use_default()) return &last_decisions_[r].pseudo_positive;
    }
    return nullptr;
  };

  Grads g{zeros_like(student_), Mat()};
  if (cfg_.framework == Framework::swav) g.prototypes = Mat(prototypes_.count(), cfg_.d_emb);
  double loss = 0.0;
  Mat pos_entries;
  std::vector<Mat> dino_teacher;
  Mat moco_keys;
  Mat swav_anchor;

  switch (cfg_.framework) {
    case Framework::simclr:
    case Framework::vicreg:
    case Framework::swav: {
      const Mat xa = view_batch(batch, ViewKind::anchor, sigma);
      const Mat xp = view_batch(batch, ViewKind::positive, sigma);
      const ForwardResult fa = forward(student_, xa);
      const ForwardResult fp = forward(student_, xp);
      pos_entries = fp.z;
      Mat zp = fp.z;
      for (std::size_t r = 0; r < b; ++r)
        if (const Vec* q = pseudo(r)) zp.set_row(r, *q);

      Mat ga;
      Mat gp;
      if (cfg_.framework == Framework::simclr) {
        LossResult res = simclr_loss(fa.z, zp, cfg_.tau, cfg_.symmetric);
        loss = res.value;
        ga = std::move(res.grad_anchor);
        gp = std::move(res.grad_positive);
      } else if (cfg_.framework == Framework::vicreg) {
        LossResult res = vicreg_loss(fa.z, zp, cfg_.vicreg);
        loss = res.value;
        ga = std::move(res.grad_anchor);
        gp = std::move(res.grad_positive);
      } else {
        const bool use_queue = epoch_ >= cfg_.swav_queue_start_epoch && !swav_queue_.empty();
        auto codes_for = [&](const Mat& z) {
          Mat all = normalize_rows(z);
          if (use_queue) {
            Mat grown(b + swav_queue_.size(), z.cols());
            for (std::size_t r = 0; r < b; ++r) grown.set_row(r, all.row(r));
            for (std::size_t r = 0; r < swav_queue_.size(); ++r) grown.set_row(b + r, swav_queue_[r]);
            all = std::move(grown);
          }
          const Mat codes = sinkhorn_codes(matmul_transposed(all, prototypes_.vectors), cfg_.sinkhorn_iters,
                                           cfg_.sinkhorn_epsilon);
          // rows carry mass 1/B_eff; rescale so each batch row sums to one
          const double b_eff = static_cast<double>(all.rows());
          Mat out(b, codes.cols());
          for (std::size_t r = 0; r < b; ++r)
            for (std::size_t k = 0; k < codes.cols(); ++k) out(r, k) = codes(r, k) * b_eff;
          return out;
        };
        const Mat codes_a = codes_for(fa.z);
        const Mat codes_p = codes_for(zp);
        const SwavResult r1 = swav_loss(fa.z, codes_p, prototypes_, cfg_.swav_tau);
        const SwavResult r2 = swav_loss(zp, codes_a, prototypes_, cfg_.swav_tau);
        loss = 0.5 * (r1.value + r2.value);
        ga = r1.grad_prediction;
        gp = r2.grad_prediction;
        for (double& v : ga.values()) v *= 0.5;
        for (double& v : gp.values()) v *= 0.5;
        for (std::size_t k = 0; k < g.prototypes.values().size(); ++k) {
          g.prototypes.values()[k] = 0.5 * (r1.grad_prototypes.values()[k] + r2.grad_prototypes.values()[k]);
        }
        swav_anchor = normalize_rows(fa.z);
      }
      // substituted rows are queue constants
      for (std::size_t r = 0; r < b; ++r)
        if (pseudo(r))
          for (double& v : gp.row(r)) v = 0.0;
      backward_accumulate(student_, fa.cache, ga, Mat(), g.model);
      backward_accumulate(student_, fp.cache, gp, Mat(), g.model);
      break;
    }
    case Framework::moco: {
      const Mat xa = view_batch(batch, ViewKind::anchor, sigma);
      const Mat xp = view_batch(batch, ViewKind::positive, sigma);
      const ForwardResult fa = forward(student_, xa);
      const Mat zt = forward(teacher_.model, xp).z;
      pos_entries = zt;
      Mat zp = zt;
      for (std::size_t r = 0; r < b; ++r)
        if (const Vec* q = pseudo(r)) zp.set_row(r, *q);
      const Mat queue = stack_queue(moco_keys_, zt.cols());
      LossResult res = moco_loss(fa.z, zp, queue, cfg_.tau);
      loss = res.value;
      backward_accumulate(student_, fa.cache, res.grad_anchor, Mat(), g.model);
      moco_keys = normalize_rows(zt);
      break;
    }
    case Framework::dino: {
      std::vector<Mat> inputs;
      inputs.push_back(view_batch(batch, ViewKind::global, sigma));
      inputs.push_back(view_batch(batch, ViewKind::global, sigma));
      for (std::size_t l = 0; l < cfg_.dino_local_views; ++l) inputs.push_back(view_batch(batch, ViewKind::local, sigma));
      std::vector<ForwardResult> fs;
      std::vector<Mat> student_out;
      for (const auto& x : inputs) {
        fs.push_back(forward(student_, x));
        student_out.push_back(fs.back().z);
      }
      dino_teacher.push_back(forward(teacher_.model, inputs[0]).z);
      dino_teacher.push_back(forward(teacher_.model, inputs[1]).z);
      const std::size_t h = dino_teacher[0].cols();
      pos_entries = Mat(b, 2 * h);
      std::vector<Mat> targets = dino_teacher;
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t k = 0; k < h; ++k) {
          pos_entries(r, k) = dino_teacher[0](r, k);
          pos_entries(r, h + k) = dino_teacher[1](r, k);
        }
        if (const Vec* q = pseudo(r)) {
          for (std::size_t k = 0; k < h; ++k) {
            targets[0](r, k) = (*q)[k];
            targets[1](r, k) = (*q)[h + k];
          }
        }
      }
      const DinoResult res = dino_loss(student_out, targets, center_, cfg_.dino_tau_s, cfg_.dino_tau_t);
      loss = res.value;
      for (std::size_t v = 0; v < fs.size(); ++v) {
        backward_accumulate(student_, fs[v].cache, res.grad_student[v], Mat(), g.model);
      }
      break;
    }
  }

  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite loss (" << loss << ") at epoch " << epoch_ << ", iteration " << iteration_ << ", framework "
        << to_string(cfg_.framework) << ", lr " << lr_now_;
    throw NumericalError(msg.str());
  }

  apply_step(g);

  // state that must not influence the loss just computed
  if (cfg_.framework == Framework::moco) {
    for (std::size_t r = 0; r < moco_keys.rows(); ++r) fifo_push(moco_keys_, moco_keys.row_vec(r), cfg_.moco_queue);
  } else if (cfg_.framework == Framework::dino) {
    center_.update(dino_teacher);
  } else if (cfg_.framework == Framework::swav && epoch_ >= cfg_.swav_queue_start_epoch) {
    for (std::size_t r = 0; r < swav_anchor.rows(); ++r) fifo_push(swav_queue_, swav_anchor.row_vec(r), cfg_.swav_queue);
  }
  if constexpr (WithSampler) update_queues(q_ref_, q_pos_, batch, yref, pos_entries);

  ++iteration_;
  losses_.push_back(loss);
  return loss;
}

template <bool WithSampler>
EpochReport BasicTrainer<WithSampler>::end_epoch() {
  if (!in_epoch_) throw InvalidArgument("end_epoch: no epoch in progress");
  in_epoch_ = false;
  EpochReport rep;
  rep.epoch = epoch_;
  double sum = 0.0;
  for (double l : losses_) sum += l;
  rep.mean_loss = losses_.empty() ? 0.0 : sum / static_cast<double>(losses_.size());

  const Mat reps = encode(student_, stack_bases(*records_));
  eval_scores_ = score_trials(reps, *trials_);
  rep.eer = eer(eval_scores_);
  rep.min_dcf = min_dcf(eval_scores_);
  Rng erng = Rng::stream(cfg_.seed, kEvalStreamBase + epoch_);
  const std::size_t k_eval = cfg_.nmi_clusters ? cfg_.nmi_clusters : cfg_.data.n_recordings();
  const ClusterState cs = kmeans(normalize_rows(reps), k_eval, kEvalKmeansIters, erng);
  eval_clusters_ = cs.assignments;
  rep.nmi_ratio = nmi_ratio(eval_clusters_, speakers_, recordings_);

  if constexpr (WithSampler) {
    if (sampler_active() && !audit_.empty()) {
      std::size_t fallbacks = 0;
      for (const auto& row : audit_) fallbacks += row.fallback;
      rep.fallback_rate = static_cast<double>(fallbacks) / static_cast<double>(audit_.size());
      if (fallbacks == audit_.size()) {
        rep.speaker_acc = 0.0;
        rep.recording_acc = 0.0;
      } else {
        const SamplingAccuracy acc = pseudo_positive_accuracy(audit_, speakers_, recordings_);
        rep.speaker_acc = acc.speaker;
        rep.recording_acc = acc.recording;
      }
    }
  }
  ++epoch_;
  return rep;
}

template class BasicTrainer<true>;
template class BasicTrainer<false>;

// ---- experiment -----------------------------------------------------------

ModelParams average_last(std::span<const ModelParams> checkpoints, std::size_t window) {
  if (checkpoints.empty()) throw EmptyInputError("average_last: no checkpoints");
  const std::size_t w = std::min(std::max<std::size_t>(window, 1), checkpoints.size());
  return average_checkpoints(checkpoints.subspan(checkpoints.size() - w));
}

namespace {

template <bool WithSampler>
ExperimentResult run_impl(const TrainConfig& cfg, const Dataset& data) {
  BasicTrainer<WithSampler> tr(cfg, data.records, data.trials);
  ExperimentResult res;
  res.initial_model = tr.model();
  const std::size_t act = cfg.activation_epoch();
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    tr.begin_epoch();
    const auto batches = tr.batches();
    for (const auto& batch : batches) tr.train_iteration(batch);
    res.reports.push_back(tr.end_epoch());
    res.checkpoints.push_back(tr.model());
    const auto& audit = tr.epoch_audit();
    res.audit.insert(res.audit.end(), audit.begin(), audit.end());
    res.epoch_logs.push_back({tr.epoch_losses(), tr.eval_scores(), tr.eval_clusters()});
    if (e + 1 == act) {
      res.activation_eval = evaluate(average_last(res.checkpoints, cfg.averaging_window), data.trials, data.records);
    }
  }
  res.final_model = res.checkpoints.empty() ? res.initial_model
                                            : average_last(res.checkpoints, cfg.averaging_window);
  res.final_eval = evaluate(res.final_model, data.trials, data.records);
  return res;
}

}  // namespace

ExperimentResult run_experiment(const TrainConfig& cfg, const Dataset& data) { return run_impl<true>(cfg, data); }

ExperimentResult run_baseline_experiment(const TrainConfig& cfg, const Dataset& data) {
  return run_impl<false>(cfg, data);
}

}  // namespace ssps
