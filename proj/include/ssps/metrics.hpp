#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ssps/core_math.hpp"
#include "ssps/synthdata.hpp"

namespace ssps {

struct ScoredTrial {
  double score = 0.0;
  bool is_target = false;
  std::size_t enroll_index = 0;
  std::size_t test_index = 0;

  bool operator==(const ScoredTrial&) const = default;
};

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

// Thresholds sweep every distinct score (accept when score >= threshold) plus
// the reject-all point. The EER is read at the FAR/FRR crossing, linearly
// interpolated between the two operating points that bracket it.
double eer(std::span<const ScoredTrial> trials);

// Minimum detection cost over the same thresholds, divided by
// min(c_miss * p_target, c_fa * (1 - p_target)).
double min_dcf(std::span<const ScoredTrial> trials, const DcfParams& params = {});

// One sampling decision. pos_index is the sampler's candidate (absent when the
// candidate set was empty); fallback rows used the default positive.
struct AuditRow {
  std::size_t epoch = 0;
  std::size_t index = 0;
  std::optional<std::size_t> pos_index;
  bool same_speaker = false;
  bool same_recording = false;
  bool fallback = false;

  bool operator==(const AuditRow&) const = default;
};

struct SamplingAccuracy {
  double speaker = 0.0;
  double recording = 0.0;
};

// Fallback rows are excluded; labels are indexed by training index.
SamplingAccuracy pseudo_positive_accuracy(std::span<const AuditRow> rows,
                                          std::span<const std::size_t> speaker_labels,
                                          std::span<const std::size_t> recording_labels);

// 2 I(U;V) / (H(U) + H(V)) with natural logs; 0 when both entropies vanish.
double nmi(std::span<const std::size_t> u, std::span<const std::size_t> v);

// nmi(clusters, speakers) / nmi(clusters, recordings)
double nmi_ratio(std::span<const std::size_t> clusters, std::span<const std::size_t> speakers,
                 std::span<const std::size_t> recordings);

// Fraction of points whose cluster's majority label matches their own label.
double cluster_purity(std::span<const std::size_t> clusters, std::span<const std::size_t> labels);

struct SpeakerSimilarity {
  std::size_t speaker = 0;
  double median_cosine = 0.0;
};

// Median cosine over all same-speaker pairs, ascending speaker id. Speakers
// with fewer than two rows are skipped.
std::vector<SpeakerSimilarity> intra_speaker_similarity(const Mat& reps,
                                                        std::span<const std::size_t> speakers);

// Cosine scores of trial pairs over the rows of reps.
std::vector<ScoredTrial> score_trials(const Mat& reps, std::span<const TrialPair> trials);

// "label enroll_index test_index score"
void write_scored_trials(std::ostream& os, std::span<const ScoredTrial> trials);
std::vector<ScoredTrial> read_scored_trials(std::istream& is);

// "epoch i pos_index same_speaker same_recording fallback_flag"; a missing
// pos_index is written as "-".
void write_audit(std::ostream& os, std::span<const AuditRow> rows);
std::vector<AuditRow> read_audit(std::istream& is);

}  // namespace ssps
