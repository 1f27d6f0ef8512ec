#include "ssps/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ssps/error.hpp"

namespace ssps {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  unsigned long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + raw + "'");
  }
  return static_cast<std::size_t>(out);
}

double to_double(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + raw + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + raw + "'");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& raw) {
  std::vector<std::size_t> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(to_size(key, item));
  }
  return out;
}

using Setter = std::function<void(TrainConfig&, const std::string&)>;
using SectionTable = std::map<std::string, Setter>;

#define SSPS_SIZE(field) [](TrainConfig& c, const std::string& v) { c.field = to_size(#field, v); }
#define SSPS_DOUBLE(field) [](TrainConfig& c, const std::string& v) { c.field = to_double(#field, v); }
#define SSPS_BOOL(field) [](TrainConfig& c, const std::string& v) { c.field = to_bool(#field, v); }

const std::map<std::string, SectionTable>& config_schema() {
  static const std::map<std::string, SectionTable> schema = {
      {"data",
       {
           {"n_speakers", SSPS_SIZE(data.n_speakers)},
           {"recs_per_speaker", SSPS_SIZE(data.recs_per_speaker)},
           {"utts_per_recording", SSPS_SIZE(data.utts_per_recording)},
           {"dim_input", SSPS_SIZE(data.dim_input)},
           {"channel_dims", SSPS_SIZE(data.channel_dims)},
           {"sigma_recording", SSPS_DOUBLE(data.sigma_recording)},
           {"sigma_utterance", SSPS_DOUBLE(data.sigma_utterance)},
           {"sigma_augment", SSPS_DOUBLE(data.sigma_augment)},
           {"seed", [](TrainConfig& c, const std::string& v) { c.data.seed = to_size("data.seed", v); }},
           {"n_target_trials", SSPS_SIZE(n_target_trials)},
           {"n_nontarget_trials", SSPS_SIZE(n_nontarget_trials)},
       }},
      {"model",
       {
           {"encoder_hidden",
            [](TrainConfig& c, const std::string& v) { c.encoder_hidden = to_size_list("encoder_hidden", v); }},
           {"d_repr", SSPS_SIZE(d_repr)},
           {"use_projector", SSPS_BOOL(use_projector)},
           {"projector_hidden", SSPS_SIZE(projector_hidden)},
           {"d_emb", SSPS_SIZE(d_emb)},
           {"dino_head_dim", SSPS_SIZE(dino_head_dim)},
       }},
      {"framework",
       {
           {"framework", [](TrainConfig& c, const std::string& v) { c.framework = parse_framework(trim(v)); }},
           {"tau", SSPS_DOUBLE(tau)},
           {"symmetric", SSPS_BOOL(symmetric)},
           {"moco_queue", SSPS_SIZE(moco_queue)},
           {"swav_prototypes", SSPS_SIZE(swav_prototypes)},
           {"swav_queue", SSPS_SIZE(swav_queue)},
           {"swav_queue_start_epoch", SSPS_SIZE(swav_queue_start_epoch)},
           {"swav_freeze_prototypes_epochs", SSPS_SIZE(swav_freeze_prototypes_epochs)},
           {"swav_tau", SSPS_DOUBLE(swav_tau)},
           {"sinkhorn_iters",
            [](TrainConfig& c, const std::string& v) {
              const std::size_t n = to_size("sinkhorn_iters", v);
              if (n > 1000000) throw ConfigError("sinkhorn_iters: too large");
              c.sinkhorn_iters = static_cast<int>(n);
            }},
           {"sinkhorn_epsilon", SSPS_DOUBLE(sinkhorn_epsilon)},
           {"vicreg_lambda", SSPS_DOUBLE(vicreg.lambda)},
           {"vicreg_mu", SSPS_DOUBLE(vicreg.mu)},
           {"vicreg_nu", SSPS_DOUBLE(vicreg.nu)},
           {"vicreg_eps", SSPS_DOUBLE(vicreg.eps_v)},
           {"dino_tau_s", SSPS_DOUBLE(dino_tau_s)},
           {"dino_tau_t", SSPS_DOUBLE(dino_tau_t)},
           {"dino_center_decay", SSPS_DOUBLE(dino_center_decay)},
           {"dino_local_views", SSPS_SIZE(dino_local_views)},
           {"grad_clip", SSPS_DOUBLE(grad_clip)},
           {"ema_m", SSPS_DOUBLE(ema_m)},
           {"ema_m_final", SSPS_DOUBLE(ema_m_final)},
       }},
      {"sampler",
       {
           {"strategy", [](TrainConfig& c, const std::string& v) { c.sampler.strategy = parse_strategy(trim(v)); }},
           {"M", SSPS_SIZE(sampler.m)},
           {"K", SSPS_SIZE(sampler.k)},
           {"activation_epoch", SSPS_SIZE(sampler.activation_epoch)},
           {"pos_queue_capacity", SSPS_SIZE(sampler.pos_queue_capacity)},
           {"kmeans_iters", SSPS_SIZE(sampler.kmeans_iters)},
       }},
      {"schedule",
       {
           {"epochs", SSPS_SIZE(epochs)},
           {"warmup_epochs_before_ssps", SSPS_SIZE(warmup_epochs_before_ssps)},
           {"batch_size", SSPS_SIZE(batch_size)},
           {"lr", SSPS_DOUBLE(lr)},
           {"lr_decay", [](TrainConfig& c, const std::string& v) { c.lr_decay = parse_lr_decay(trim(v)); }},
           {"lr_decay_factor", SSPS_DOUBLE(lr_decay_factor)},
           {"lr_decay_every", SSPS_SIZE(lr_decay_every)},
           {"optimizer", [](TrainConfig& c, const std::string& v) { c.optimizer = parse_optimizer(trim(v)); }},
           {"momentum", SSPS_DOUBLE(momentum)},
           {"restart_lr_at_activation", SSPS_BOOL(restart_lr_at_activation)},
           {"reset_optimizer_at_activation", SSPS_BOOL(reset_optimizer_at_activation)},
           {"seed", [](TrainConfig& c, const std::string& v) { c.seed = to_size("seed", v); }},
           {"augmentation_enabled", SSPS_BOOL(augmentation_enabled)},
           {"averaging_window", SSPS_SIZE(averaging_window)},
           {"nmi_clusters", SSPS_SIZE(nmi_clusters)},
       }},
  };
  return schema;
}

#undef SSPS_SIZE
#undef SSPS_DOUBLE
#undef SSPS_BOOL

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  return is;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

TrainConfig parse_config(std::istream& is) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  const auto& schema = config_schema();
  for (const auto& [section, body] : tree) {
    if (!schema.count(section)) throw ConfigError("unknown config section [" + section + "]");
    if (body.empty() && !body.data().empty()) throw ConfigError("top-level key '" + section + "' outside a section");
  }

  Framework f = Framework::simclr;
  if (auto fw = tree.get_optional<std::string>("framework.framework")) f = parse_framework(trim(*fw));
  TrainConfig cfg = default_config(f);

  bool saw_activation = false;
  bool saw_warmup = false;
  for (const auto& [section, body] : tree) {
    const auto& table = schema.at(section);
    for (const auto& [key, node] : body) {
      auto it = table.find(key);
      if (it == table.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      it->second(cfg, node.data());
      saw_activation |= section == "sampler" && key == "activation_epoch";
      saw_warmup |= section == "schedule" && key == "warmup_epochs_before_ssps";
    }
  }
  if (saw_activation && !saw_warmup) cfg.warmup_epochs_before_ssps = cfg.sampler.activation_epoch;
  if (saw_warmup && !saw_activation) cfg.sampler.activation_epoch = cfg.warmup_epochs_before_ssps;
  return cfg;
}

TrainConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  return parse_config(is);
}

void write_config(std::ostream& os, const TrainConfig& c) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "[data]\n"
     << "n_speakers = " << c.data.n_speakers << '\n'
     << "recs_per_speaker = " << c.data.recs_per_speaker << '\n'
     << "utts_per_recording = " << c.data.utts_per_recording << '\n'
     << "dim_input = " << c.data.dim_input << '\n'
     << "channel_dims = " << c.data.channel_dims << '\n'
     << "sigma_recording = " << fmt(c.data.sigma_recording) << '\n'
     << "sigma_utterance = " << fmt(c.data.sigma_utterance) << '\n'
     << "sigma_augment = " << fmt(c.data.sigma_augment) << '\n'
     << "seed = " << c.data.seed << '\n'
     << "n_target_trials = " << c.n_target_trials << '\n'
     << "n_nontarget_trials = " << c.n_nontarget_trials << "\n\n";
  os << "[model]\nencoder_hidden = ";
  for (std::size_t i = 0; i < c.encoder_hidden.size(); ++i) os << (i ? "," : "") << c.encoder_hidden[i];
  os << '\n'
     << "d_repr = " << c.d_repr << '\n'
     << "use_projector = " << b(c.use_projector) << '\n'
     << "projector_hidden = " << c.projector_hidden << '\n'
     << "d_emb = " << c.d_emb << '\n'
     << "dino_head_dim = " << c.dino_head_dim << "\n\n";
  os << "[framework]\n"
     << "framework = " << to_string(c.framework) << '\n'
     << "tau = " << fmt(c.tau) << '\n'
     << "symmetric = " << b(c.symmetric) << '\n'
     << "moco_queue = " << c.moco_queue << '\n'
     << "swav_prototypes = " << c.swav_prototypes << '\n'
     << "swav_queue = " << c.swav_queue << '\n'
     << "swav_queue_start_epoch = " << c.swav_queue_start_epoch << '\n'
     << "swav_freeze_prototypes_epochs = " << c.swav_freeze_prototypes_epochs << '\n'
     << "swav_tau = " << fmt(c.swav_tau) << '\n'
     << "sinkhorn_iters = " << c.sinkhorn_iters << '\n'
     << "sinkhorn_epsilon = " << fmt(c.sinkhorn_epsilon) << '\n'
     << "vicreg_lambda = " << fmt(c.vicreg.lambda) << '\n'
     << "vicreg_mu = " << fmt(c.vicreg.mu) << '\n'
     << "vicreg_nu = " << fmt(c.vicreg.nu) << '\n'
     << "vicreg_eps = " << fmt(c.vicreg.eps_v) << '\n'
     << "dino_tau_s = " << fmt(c.dino_tau_s) << '\n'
     << "dino_tau_t = " << fmt(c.dino_tau_t) << '\n'
     << "dino_center_decay = " << fmt(c.dino_center_decay) << '\n'
     << "dino_local_views = " << c.dino_local_views << '\n'
     << "grad_clip = " << fmt(c.grad_clip) << '\n'
     << "ema_m = " << fmt(c.ema_m) << '\n'
     << "ema_m_final = " << fmt(c.ema_m_final) << "\n\n";
  os << "[sampler]\n"
     << "strategy = " << to_string(c.sampler.strategy) << '\n'
     << "M = " << c.sampler.m << '\n'
     << "K = " << c.sampler.k << '\n'
     << "activation_epoch = " << c.sampler.activation_epoch << '\n'
     << "pos_queue_capacity = " << c.sampler.pos_queue_capacity << '\n'
     << "kmeans_iters = " << c.sampler.kmeans_iters << "\n\n";
  os << "[schedule]\n"
     << "epochs = " << c.epochs << '\n'
     << "warmup_epochs_before_ssps = " << c.warmup_epochs_before_ssps << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "lr = " << fmt(c.lr) << '\n'
     << "lr_decay = " << to_string(c.lr_decay) << '\n'
     << "lr_decay_factor = " << fmt(c.lr_decay_factor) << '\n'
     << "lr_decay_every = " << c.lr_decay_every << '\n'
     << "optimizer = " << to_string(c.optimizer) << '\n'
     << "momentum = " << fmt(c.momentum) << '\n'
     << "restart_lr_at_activation = " << b(c.restart_lr_at_activation) << '\n'
     << "reset_optimizer_at_activation = " << b(c.reset_optimizer_at_activation) << '\n'
     << "seed = " << c.seed << '\n'
     << "augmentation_enabled = " << b(c.augmentation_enabled) << '\n'
     << "averaging_window = " << c.averaging_window << '\n'
     << "nmi_clusters = " << c.nmi_clusters << '\n';
}

// ---- report / summary / loss log ------------------------------------------

void write_report_csv(std::ostream& os, const std::vector<EpochReport>& reports) {
  os << "epoch,mean_loss,eer,min_dcf,speaker_acc,recording_acc,fallback_rate,nmi_ratio\n";
  for (const auto& r : reports) {
    os << r.epoch << ',' << fmt(r.mean_loss) << ',' << fmt(r.eer) << ',' << fmt(r.min_dcf) << ','
       << fmt(r.speaker_acc) << ',' << fmt(r.recording_acc) << ',' << fmt(r.fallback_rate) << ','
       << fmt(r.nmi_ratio) << '\n';
  }
}

std::vector<EpochReport> read_report_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line).rfind("epoch,", 0) != 0) throw IoError("report.csv: missing header");
  std::vector<EpochReport> out;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw IoError("report.csv: expected 8 columns in '" + line + "'");
    try {
      EpochReport r;
      r.epoch = to_size("epoch", cells[0]);
      r.mean_loss = to_double("mean_loss", cells[1]);
      r.eer = to_double("eer", cells[2]);
      r.min_dcf = to_double("min_dcf", cells[3]);
      r.speaker_acc = to_double("speaker_acc", cells[4]);
      r.recording_acc = to_double("recording_acc", cells[5]);
      r.fallback_rate = to_double("fallback_rate", cells[6]);
      r.nmi_ratio = to_double("nmi_ratio", cells[7]);
      out.push_back(r);
    } catch (const ConfigError& e) {
      throw IoError(std::string("report.csv: ") + e.what());
    }
  }
  return out;
}

void write_summary_csv(std::ostream& os, const Summary& s) {
  os << "final_eer,final_min_dcf,activation_eer,activation_min_dcf\n"
     << fmt(s.final_eer) << ',' << fmt(s.final_min_dcf) << ','
     << (s.activation_eer ? fmt(*s.activation_eer) : "") << ','
     << (s.activation_min_dcf ? fmt(*s.activation_min_dcf) : "") << '\n';
}

Summary read_summary_csv(std::istream& is) {
  std::string header;
  std::string line;
  if (!std::getline(is, header) || !std::getline(is, line)) throw IoError("summary.csv: truncated");
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  while (cells.size() < 4) cells.emplace_back();
  try {
    Summary s;
    s.final_eer = to_double("final_eer", cells[0]);
    s.final_min_dcf = to_double("final_min_dcf", cells[1]);
    if (!trim(cells[2]).empty()) s.activation_eer = to_double("activation_eer", cells[2]);
    if (!trim(cells[3]).empty()) s.activation_min_dcf = to_double("activation_min_dcf", cells[3]);
    return s;
  } catch (const ConfigError& e) {
    throw IoError(std::string("summary.csv: ") + e.what());
  }
}

void write_loss_log(std::ostream& os, const std::vector<LossEntry>& entries) {
  os << std::setprecision(17);
  for (const auto& e : entries) os << e.epoch << ' ' << e.iteration << ' ' << e.loss << '\n';
}

std::vector<LossEntry> read_loss_log(std::istream& is) {
  std::vector<LossEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    LossEntry e;
    std::string loss;
    if (!(ls >> e.epoch >> e.iteration >> loss)) throw IoError("loss.log: malformed row '" + line + "'");
    try {
      e.loss = to_double("loss", loss);
    } catch (const ConfigError&) {
      throw IoError("loss.log: bad loss '" + loss + "'");
    }
    out.push_back(e);
  }
  return out;
}

// ---- experiment directory -------------------------------------------------

std::string epoch_file_name(std::size_t epoch, const char* prefix, const char* ext) {
  std::ostringstream os;
  os << prefix << std::setw(4) << std::setfill('0') << epoch << ext;
  return os.str();
}

void write_dataset_files(const fs::path& dir, const TrainConfig& cfg, const Dataset& data) {
  fs::create_directories(dir);
  {
    auto os = open_out(dir / "config.ini");
    write_config(os, cfg);
  }
  {
    auto os = open_out(dir / "dataset.txt");
    write_dataset(os, data.records);
  }
  {
    auto os = open_out(dir / "trials.txt");
    write_trials(os, data.trials);
  }
}

Dataset read_dataset_files(const fs::path& dir) {
  Dataset d;
  {
    auto is = open_in(dir / "dataset.txt");
    d.records = read_dataset(is);
  }
  {
    auto is = open_in(dir / "trials.txt");
    d.trials = read_trials(is);
  }
  return d;
}

void write_experiment(const fs::path& dir, const TrainConfig& cfg, const Dataset& data,
                      const ExperimentResult& result) {
  write_dataset_files(dir, cfg, data);
  fs::create_directories(dir / "scores");
  fs::create_directories(dir / "clusters");
  {
    auto os = open_out(dir / "report.csv");
    write_report_csv(os, result.reports);
  }
  {
    Summary s;
    s.final_eer = result.final_eval.eer;
    s.final_min_dcf = result.final_eval.min_dcf;
    if (result.activation_eval) {
      s.activation_eer = result.activation_eval->eer;
      s.activation_min_dcf = result.activation_eval->min_dcf;
    }
    auto os = open_out(dir / "summary.csv");
    write_summary_csv(os, s);
  }
  {
    auto os = open_out(dir / "audit.log");
    write_audit(os, result.audit);
  }
  {
    std::vector<LossEntry> entries;
    for (std::size_t e = 0; e < result.epoch_logs.size(); ++e) {
      const auto& losses = result.epoch_logs[e].losses;
      for (std::size_t t = 0; t < losses.size(); ++t) entries.push_back({e, t, losses[t]});
    }
    auto os = open_out(dir / "loss.log");
    write_loss_log(os, entries);
  }
  {
    auto os = open_out(dir / "scores.txt");
    write_scored_trials(os, result.final_eval.scores);
  }
  for (std::size_t e = 0; e < result.epoch_logs.size(); ++e) {
    {
      auto os = open_out(dir / "scores" / epoch_file_name(e, "epoch-", ".txt"));
      write_scored_trials(os, result.epoch_logs[e].scores);
    }
    {
      auto os = open_out(dir / "clusters" / epoch_file_name(e, "epoch-", ".txt"));
      write_assignments(os, result.epoch_logs[e].clusters);
    }
  }
  for (std::size_t e = 0; e < result.checkpoints.size(); ++e) {
    save_checkpoint(dir / epoch_file_name(e, "checkpoint-", ".bin"), result.checkpoints[e]);
  }
  save_checkpoint(dir / "final.bin", result.final_model);
}

std::vector<EpochReport> recompute_reports(const fs::path& dir) {
  const TrainConfig cfg = load_config(dir / "config.ini");
  const Dataset data = read_dataset_files(dir);
  const auto speakers = speaker_labels(data.records);
  const auto recordings = recording_labels(data.records);

  std::vector<LossEntry> losses;
  {
    auto is = open_in(dir / "loss.log");
    losses = read_loss_log(is);
  }
  std::vector<AuditRow> audit;
  {
    auto is = open_in(dir / "audit.log");
    audit = read_audit(is);
  }

  std::vector<EpochReport> out;
  for (std::size_t e = 0;; ++e) {
    const fs::path score_path = dir / "scores" / epoch_file_name(e, "epoch-", ".txt");
    if (!fs::exists(score_path)) break;
    EpochReport r;
    r.epoch = e;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& l : losses) {
      if (l.epoch != e) continue;
      sum += l.loss;
      ++n;
    }
    r.mean_loss = n ? sum / static_cast<double>(n) : 0.0;
    {
      auto is = open_in(score_path);
      const auto scores = read_scored_trials(is);
      r.eer = eer(scores);
      r.min_dcf = min_dcf(scores);
    }
    {
      auto is = open_in(dir / "clusters" / epoch_file_name(e, "epoch-", ".txt"));
      const auto clusters = read_assignments(is);
      r.nmi_ratio = nmi_ratio(clusters, speakers, recordings);
    }
    std::vector<AuditRow> rows;
    for (const auto& a : audit)
      if (a.epoch == e) rows.push_back(a);
    const bool active = cfg.sampler.strategy != Strategy::ssl_default && e >= cfg.activation_epoch();
    if (active && !rows.empty()) {
      std::size_t fallbacks = 0;
      for (const auto& a : rows) fallbacks += a.fallback;
      r.fallback_rate = static_cast<double>(fallbacks) / static_cast<double>(rows.size());
      if (fallbacks == rows.size()) {
        r.speaker_acc = 0.0;
        r.recording_acc = 0.0;
      } else {
        const auto acc = pseudo_positive_accuracy(rows, speakers, recordings);
        r.speaker_acc = acc.speaker;
        r.recording_acc = acc.recording;
      }
    }
    out.push_back(r);
  }
  return out;
}

Summary recompute_summary(const fs::path& dir) {
  auto is = open_in(dir / "scores.txt");
  const auto scores = read_scored_trials(is);
  Summary s;
  s.final_eer = eer(scores);
  s.final_min_dcf = min_dcf(scores);
  return s;
}

double max_report_difference(const std::vector<EpochReport>& a, const std::vector<EpochReport>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].epoch != b[i].epoch) return std::numeric_limits<double>::infinity();
    for (auto [x, y] : {std::pair{a[i].mean_loss, b[i].mean_loss}, std::pair{a[i].eer, b[i].eer},
                        std::pair{a[i].min_dcf, b[i].min_dcf}, std::pair{a[i].speaker_acc, b[i].speaker_acc},
                        std::pair{a[i].recording_acc, b[i].recording_acc},
                        std::pair{a[i].fallback_rate, b[i].fallback_rate}, std::pair{a[i].nmi_ratio, b[i].nmi_ratio}}) {
      worst = std::max(worst, std::abs(x - y));
    }
  }
  return worst;
}

}  // namespace ssps
