#include "ssps/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "ssps/error.hpp"
#include "ssps/io.hpp"
#include "ssps/trainer.hpp"

namespace ssps {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool no_augment = false;
  std::optional<std::string> sampler;
  std::optional<std::size_t> k;
  std::optional<std::size_t> m;
  std::string checkpoint;
  std::string trial_file;
  std::string baseline_dir;
  std::vector<std::size_t> ks;
  std::vector<std::size_t> ms;
  double tolerance = 1e-12;
};

std::string g17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

TrainConfig base_config(const Options& o) {
  if (!o.config_path.empty()) return load_config(o.config_path);
  return default_config(Framework::simclr);
}

void apply_run_overrides(TrainConfig& cfg, const Options& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.no_augment) cfg.augmentation_enabled = false;
  if (o.sampler) cfg.sampler.strategy = parse_strategy(*o.sampler);
  if (o.k) cfg.sampler.k = *o.k;
  if (o.m) cfg.sampler.m = *o.m;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  return is;
}

int cmd_generate(const Options& o, std::ostream& out) {
  TrainConfig cfg = base_config(o);
  if (o.seed) cfg.data.seed = *o.seed;
  cfg.validate();
  const Dataset data = make_dataset(cfg);
  write_dataset_files(o.out_dir, cfg, data);
  out << "utterances=" << data.records.size() << "\ntrials=" << data.trials.size() << '\n';
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  TrainConfig cfg = base_config(o);
  apply_run_overrides(cfg, o);
  cfg.validate();
  const Dataset data = make_dataset(cfg);
  const ExperimentResult result = run_experiment(cfg, data);
  write_experiment(o.out_dir, cfg, data, result);
  out << "epochs=" << result.reports.size() << "\nfinal_eer=" << g17(result.final_eval.eer)
      << "\nfinal_min_dcf=" << g17(result.final_eval.min_dcf) << '\n';
  if (result.activation_eval) out << "activation_eer=" << g17(result.activation_eval->eer) << '\n';
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const fs::path dir = o.out_dir;
  const fs::path ckpt = o.checkpoint.empty() ? dir / "final.bin" : fs::path(o.checkpoint);
  const Dataset data = read_dataset_files(dir);
  const ModelParams params = load_checkpoint(ckpt);
  const EvalResult r = evaluate(params, data.trials, data.records);
  out << "eer=" << g17(r.eer) << "\nmin_dcf=" << g17(r.min_dcf) << '\n';
  return 0;
}

int cmd_score(const Options& o, std::ostream& out) {
  auto is = open_in(o.trial_file);
  const auto trials = read_scored_trials(is);
  std::size_t targets = 0;
  for (const auto& t : trials) targets += t.is_target;
  out << "trials=" << trials.size() << "\ntargets=" << targets << "\neer=" << g17(eer(trials))
      << "\nmin_dcf=" << g17(min_dcf(trials)) << '\n';
  return 0;
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SSPS_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<std::size_t>(v);
  }
  return std::min(n, std::max<std::size_t>(jobs, 1));
}

struct SweepRow {
  std::size_t k = 0;
  std::size_t m = 0;
  double eer = 0.0;
  double min_dcf = 0.0;
  double speaker_acc = 0.0;
  double recording_acc = 0.0;
};

int cmd_sweep(const Options& o, std::ostream& out) {
  TrainConfig cfg = base_config(o);
  apply_run_overrides(cfg, o);
  if (!o.sampler) cfg.sampler.strategy = Strategy::ssps_cluster;
  if (!cfg.sampler.uses_clustering()) throw ConfigError("sweep: sampler must be cluster or cluster-centroid");
  const std::vector<std::size_t> ks =
      o.ks.empty() ? std::vector<std::size_t>{cfg.data.n_speakers, 2 * cfg.data.n_recordings()} : o.ks;
  const std::vector<std::size_t> ms = o.ms.empty() ? std::vector<std::size_t>{0, 1} : o.ms;

  std::vector<TrainConfig> grid;
  for (std::size_t k : ks) {
    for (std::size_t m : ms) {
      TrainConfig c = cfg;
      c.sampler.k = k;
      c.sampler.m = m;
      c.validate();
      grid.push_back(c);
    }
  }
  const Dataset data = make_dataset(cfg);
  const auto speakers = speaker_labels(data.records);
  const auto recordings = recording_labels(data.records);
  fs::create_directories(o.out_dir);

  std::vector<SweepRow> rows(grid.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < grid.size(); j = next++) {
      try {
        const TrainConfig& c = grid[j];
        const ExperimentResult r = run_experiment(c, data);
        std::ostringstream name;
        name << "K" << c.sampler.k << "_M" << c.sampler.m;
        write_experiment(fs::path(o.out_dir) / name.str(), c, data, r);
        SweepRow row{c.sampler.k, c.sampler.m, r.final_eval.eer, r.final_eval.min_dcf, 0.0, 0.0};
        std::vector<AuditRow> used;
        for (const auto& a : r.audit)
          if (!a.fallback && a.pos_index) used.push_back(a);
        if (!used.empty()) {
          const auto acc = pseudo_positive_accuracy(used, speakers, recordings);
          row.speaker_acc = acc.speaker;
          row.recording_acc = acc.recording;
        }
        rows[j] = row;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n_workers = worker_count(grid.size());
  for (std::size_t t = 0; t + 1 < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::ofstream csv(fs::path(o.out_dir) / "sweep.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write sweep.csv");
  csv << "K,M,eer,min_dcf,speaker_acc,recording_acc\n";
  for (const auto& r : rows) {
    csv << r.k << ',' << r.m << ',' << g17(r.eer) << ',' << g17(r.min_dcf) << ',' << g17(r.speaker_acc) << ','
        << g17(r.recording_acc) << '\n';
  }
  out << "points=" << rows.size() << '\n';
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  const fs::path dir = o.out_dir;
  const auto recomputed = recompute_reports(dir);
  std::vector<EpochReport> stored;
  {
    auto is = open_in(dir / "report.csv");
    stored = read_report_csv(is);
  }
  const double diff = max_report_difference(recomputed, stored);
  if (!(diff <= o.tolerance)) {
    throw NumericalError("report.csv disagrees with raw logs (max abs difference " + g17(diff) + ")");
  }
  const Summary summary = recompute_summary(dir);
  Summary stored_summary;
  {
    auto is = open_in(dir / "summary.csv");
    stored_summary = read_summary_csv(is);
  }
  const double sdiff = std::max(std::abs(summary.final_eer - stored_summary.final_eer),
                                std::abs(summary.final_min_dcf - stored_summary.final_min_dcf));
  if (!(sdiff <= o.tolerance)) {
    throw NumericalError("summary.csv disagrees with scores.txt (max abs difference " + g17(sdiff) + ")");
  }

  // Per-speaker similarity of the final model, as plot-ready CSV.
  const Dataset data = read_dataset_files(dir);
  const ModelParams final_model = load_checkpoint(dir / "final.bin");
  const auto sims = intra_speaker_similarity(normalize_rows(encode(final_model, stack_bases(data.records))),
                                             speaker_labels(data.records));
  {
    std::ofstream os(dir / "similarity.csv", std::ios::binary);
    if (!os) throw IoError("cannot write similarity.csv");
    os << "speaker,median_cosine\n";
    for (const auto& s : sims) os << s.speaker << ',' << g17(s.median_cosine) << '\n';
  }

  out << "epochs=" << recomputed.size() << "\nreport_max_abs_diff=" << g17(diff)
      << "\nfinal_eer=" << g17(summary.final_eer) << "\nfinal_min_dcf=" << g17(summary.final_min_dcf) << '\n';
  if (stored_summary.activation_eer) out << "activation_eer=" << g17(*stored_summary.activation_eer) << '\n';
  if (!recomputed.empty()) out << "final_nmi_ratio=" << g17(recomputed.back().nmi_ratio) << '\n';

  if (!o.baseline_dir.empty()) {
    const Summary base = recompute_summary(o.baseline_dir);
    auto delta = [](double b, double r) { return b == 0.0 ? 0.0 : 100.0 * (b - r) / b; };
    out << "baseline_eer=" << g17(base.final_eer) << "\nbaseline_min_dcf=" << g17(base.final_min_dcf)
        << "\ndelta_eer_pct=" << g17(delta(base.final_eer, summary.final_eer))
        << "\ndelta_min_dcf_pct=" << g17(delta(base.final_min_dcf, summary.final_min_dcf)) << '\n';
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised positive sampling experiments on synthetic speakers", "ssps"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", o.config_path, "INI config file"); };
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", o.out_dir, "Output directory")->required(); };
  auto add_run = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Run seed override");
    sub->add_flag("--no-augment", o.no_augment, "Disable view noise from the activation epoch on");
    sub->add_option("--sampler", o.sampler, "ssl | nn | cluster | cluster-centroid | oracle");
    sub->add_option("--k", o.k, "Number of clusters");
    sub->add_option("--m", o.m, "Neighborhood size");
  };

  auto* gen = app.add_subcommand("generate-data", "Write dataset.txt and trials.txt");
  add_config(gen);
  add_out(gen);
  gen->add_option("--seed", o.seed, "Data seed override");

  auto* train = app.add_subcommand("train", "Run one experiment and write its logs");
  add_config(train);
  add_out(train);
  add_run(train);

  auto* ev = app.add_subcommand("evaluate", "Score the trial list with a checkpoint");
  add_out(ev);
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint (default OUT/final.bin)");

  auto* score = app.add_subcommand("score-trials", "EER and minDCF of a trial-score file");
  score->add_option("file", o.trial_file, "label enroll test score rows")->required();

  auto* sweep = app.add_subcommand("sweep", "Grid over (K, M) for a clustering sampler");
  add_config(sweep);
  add_out(sweep);
  add_run(sweep);
  sweep->add_option("--ks", o.ks, "K values")->delimiter(',');
  sweep->add_option("--ms", o.ms, "M values")->delimiter(',');

  auto* report = app.add_subcommand("report", "Recompute and check headline numbers from raw logs");
  add_out(report);
  report->add_option("--baseline", o.baseline_dir, "Paired baseline run for relative reductions");
  report->add_option("--tolerance", o.tolerance, "Allowed absolute disagreement");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: UsageError: " << e.what() << '\n';
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_evaluate(o, out);
    if (score->parsed()) return cmd_score(o, out);
    if (sweep->parsed()) return cmd_sweep(o, out);
    if (report->parsed()) return cmd_report(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: RuntimeError: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace ssps
