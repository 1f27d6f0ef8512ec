#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "ssps/core_math.hpp"

namespace ssps {

// Speakers -> recordings -> utterances. Each utterance's base vector is
//   unit(s_speaker) + sigma_recording * unit(r_recording) + sigma_utterance * eps
// with every direction drawn from a standard Gaussian. When channel_dims > 0
// the speaker directions are drawn in the leading dim_input - channel_dims
// coordinates and the recording directions in the trailing channel_dims
// coordinates; channel_dims == 0 draws both over all coordinates.
struct GenConfig {
  std::size_t n_speakers = 32;
  std::size_t recs_per_speaker = 4;
  std::size_t utts_per_recording = 8;
  std::size_t dim_input = 16;
  std::size_t channel_dims = 8;
  double sigma_recording = 0.5;
  double sigma_utterance = 0.1;
  double sigma_augment = 0.3;
  std::uint64_t seed = 0;

  std::size_t total() const noexcept {
    return n_speakers * recs_per_speaker * utts_per_recording;
  }
  std::size_t n_recordings() const noexcept { return n_speakers * recs_per_speaker; }
  void validate() const;
};

struct UtteranceRecord {
  std::size_t index = 0;
  std::size_t speaker_id = 0;
  std::size_t recording_id = 0;
  Vec base;
};

enum class ViewKind { anchor, positive, reference, global, local };

struct View {
  std::size_t source_index = 0;
  Vec features;
  ViewKind kind = ViewKind::anchor;
};

struct TrialPair {
  std::size_t enroll_index = 0;
  std::size_t test_index = 0;
  bool is_target = false;

  bool operator==(const TrialPair&) const = default;
};

std::vector<UtteranceRecord> generate_dataset(const GenConfig& cfg);

// Reference views are the base vector exactly; global views use half the
// augmentation noise of anchor/positive/local views.
View make_view(const UtteranceRecord& rec, ViewKind kind, double sigma_augment, Rng& rng);

// Target trials pair utterances of one speaker from different recordings;
// nontarget trials pair different speakers. No unordered pair repeats.
std::vector<TrialPair> make_trials(const std::vector<UtteranceRecord>& records,
                                   std::size_t n_target, std::size_t n_nontarget, Rng& rng);

// Base vectors stacked as rows (row i = record i).
Mat stack_bases(const std::vector<UtteranceRecord>& records);

std::vector<std::size_t> speaker_labels(const std::vector<UtteranceRecord>& records);
std::vector<std::size_t> recording_labels(const std::vector<UtteranceRecord>& records);

// Text formats: "index speaker_id recording_id v0 ... v{D-1}" with 17
// significant digits, and "label enroll_index test_index".
void write_dataset(std::ostream& os, const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> read_dataset(std::istream& is);
void write_trials(std::ostream& os, const std::vector<TrialPair>& trials);
std::vector<TrialPair> read_trials(std::istream& is);

std::string_view to_string(ViewKind kind);

}  // namespace ssps
