#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ssps/trainer.hpp"

namespace ssps {

// INI-style experiment config with sections [data], [model], [framework],
// [sampler] and [schedule]. The framework key selects the defaults every
// other key overrides. Unknown sections or keys are a ConfigError.
TrainConfig parse_config(std::istream& is);
TrainConfig load_config(const std::filesystem::path& path);
// Every field, in a form parse_config reads back unchanged.
void write_config(std::ostream& os, const TrainConfig& cfg);

void write_report_csv(std::ostream& os, const std::vector<EpochReport>& reports);
std::vector<EpochReport> read_report_csv(std::istream& is);

struct Summary {
  double final_eer = 0.0;
  double final_min_dcf = 0.0;
  std::optional<double> activation_eer;
  std::optional<double> activation_min_dcf;
};

void write_summary_csv(std::ostream& os, const Summary& s);
Summary read_summary_csv(std::istream& is);

// "epoch iteration loss"
struct LossEntry {
  std::size_t epoch = 0;
  std::size_t iteration = 0;
  double loss = 0.0;
};
void write_loss_log(std::ostream& os, const std::vector<LossEntry>& entries);
std::vector<LossEntry> read_loss_log(std::istream& is);

// Output directory layout:
//   config.ini dataset.txt trials.txt report.csv summary.csv audit.log
//   loss.log scores.txt scores/epoch-NNNN.txt clusters/epoch-NNNN.txt
//   checkpoint-NNNN.bin final.bin
void write_dataset_files(const std::filesystem::path& dir, const TrainConfig& cfg, const Dataset& data);
Dataset read_dataset_files(const std::filesystem::path& dir);
void write_experiment(const std::filesystem::path& dir, const TrainConfig& cfg, const Dataset& data,
                      const ExperimentResult& result);

// Per-epoch reports rebuilt from the raw logs of an output directory alone.
std::vector<EpochReport> recompute_reports(const std::filesystem::path& dir);
// Final metrics rebuilt from scores.txt.
Summary recompute_summary(const std::filesystem::path& dir);

// Largest absolute difference over every numeric report field; the epoch
// columns and row counts must match exactly (infinity otherwise).
double max_report_difference(const std::vector<EpochReport>& a, const std::vector<EpochReport>& b);

std::string epoch_file_name(std::size_t epoch, const char* prefix, const char* ext);

}  // namespace ssps
