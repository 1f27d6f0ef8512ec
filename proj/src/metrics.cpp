#include "ssps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>

#include "ssps/error.hpp"

namespace ssps {

namespace {

struct Counts {
  std::size_t targets = 0;
  std::size_t nontargets = 0;
};

Counts count_classes(std::span<const ScoredTrial> trials) {
  Counts c;
  for (const auto& t : trials) (t.is_target ? c.targets : c.nontargets)++;
  if (c.targets == 0 || c.nontargets == 0) {
    throw InvalidArgument("trial list needs at least one target and one nontarget");
  }
  return c;
}

// (P_fa, P_miss) for every threshold, rising thresholds: first the lowest
// distinct score (accept all), last the reject-all point.
std::vector<std::pair<double, double>> operating_points(std::span<const ScoredTrial> trials) {
  const Counts c = count_classes(trials);
  std::vector<ScoredTrial> sorted(trials.begin(), trials.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredTrial& a, const ScoredTrial& b) { return a.score < b.score; });
  std::vector<std::pair<double, double>> pts;
  std::size_t miss = 0;      // targets below threshold
  std::size_t rejected = 0;  // nontargets below threshold
  std::size_t i = 0;
  while (i < sorted.size()) {
    pts.emplace_back(double(c.nontargets - rejected) / double(c.nontargets),
                     double(miss) / double(c.targets));
    const double s = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == s; ++i) (sorted[i].is_target ? miss : rejected)++;
  }
  pts.emplace_back(0.0, 1.0);
  return pts;
}

double entropy(const std::map<std::size_t, std::size_t>& counts, double n) {
  double h = 0.0;
  for (const auto& [label, k] : counts) {
    const double p = double(k) / n;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double eer(std::span<const ScoredTrial> trials) {
  const auto pts = operating_points(trials);
  // d = P_miss - P_fa rises from <= 0 (accept all) to 1 (reject all)
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const auto [fa1, miss1] = pts[k];
    const auto [fa2, miss2] = pts[k + 1];
    const double d1 = miss1 - fa1;
    const double d2 = miss2 - fa2;
    if (d1 == 0.0) return fa1;
    if (d1 < 0.0 && d2 > 0.0) {
      const double a = d1 / (d1 - d2);
      return fa1 + a * (fa2 - fa1);
    }
  }
  return pts.back().first;
}

double min_dcf(std::span<const ScoredTrial> trials, const DcfParams& params) {
  if (!(params.p_target > 0.0 && params.p_target < 1.0) || !(params.c_miss > 0.0) || !(params.c_fa > 0.0)) {
    throw InvalidArgument("min_dcf: p_target must be in (0,1) and costs positive");
  }
  const auto pts = operating_points(trials);
  const double w_miss = params.c_miss * params.p_target;
  const double w_fa = params.c_fa * (1.0 - params.p_target);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [fa, miss] : pts) best = std::min(best, w_miss * miss + w_fa * fa);
  return best / std::min(w_miss, w_fa);
}

SamplingAccuracy pseudo_positive_accuracy(std::span<const AuditRow> rows,
                                          std::span<const std::size_t> speaker_labels,
                                          std::span<const std::size_t> recording_labels) {
  if (speaker_labels.size() != recording_labels.size()) {
    throw DimensionError("pseudo_positive_accuracy: label arrays differ in length");
  }
  std::size_t n = 0;
  std::size_t spk = 0;
  std::size_t rec = 0;
  for (const auto& r : rows) {
    if (r.fallback || !r.pos_index) continue;
    const std::size_t j = *r.pos_index;
    if (r.index >= speaker_labels.size() || j >= speaker_labels.size()) {
      throw InvalidArgument("pseudo_positive_accuracy: index out of range");
    }
    ++n;
    spk += speaker_labels[r.index] == speaker_labels[j];
    rec += recording_labels[r.index] == recording_labels[j];
  }
  if (n == 0) throw EmptyInputError("pseudo_positive_accuracy: no non-fallback decisions");
  return {double(spk) / double(n), double(rec) / double(n)};
}

double nmi(std::span<const std::size_t> u, std::span<const std::size_t> v) {
  if (u.size() != v.size()) throw DimensionError("nmi: assignment lengths differ");
  if (u.empty()) throw EmptyInputError("nmi: empty assignments");
  const double n = double(u.size());
  std::map<std::size_t, std::size_t> cu;
  std::map<std::size_t, std::size_t> cv;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> joint;
  for (std::size_t i = 0; i < u.size(); ++i) {
    ++cu[u[i]];
    ++cv[v[i]];
    ++joint[{u[i], v[i]}];
  }
  const double hu = entropy(cu, n);
  const double hv = entropy(cv, n);
  if (hu + hv == 0.0) return 0.0;
  double mi = 0.0;
  for (const auto& [key, k] : joint) {
    const double puv = double(k) / n;
    const double pu = double(cu[key.first]) / n;
    const double pv = double(cv[key.second]) / n;
    mi += puv * std::log(puv / (pu * pv));
  }
  return std::clamp(2.0 * mi / (hu + hv), 0.0, 1.0);
}

double nmi_ratio(std::span<const std::size_t> clusters, std::span<const std::size_t> speakers,
                 std::span<const std::size_t> recordings) {
  const double den = nmi(clusters, recordings);
  if (den == 0.0) throw NumericalError("nmi_ratio: NMI with recordings is zero");
  return nmi(clusters, speakers) / den;
}

double cluster_purity(std::span<const std::size_t> clusters, std::span<const std::size_t> labels) {
  if (clusters.size() != labels.size()) throw DimensionError("cluster_purity: lengths differ");
  if (clusters.empty()) throw EmptyInputError("cluster_purity: empty input");
  std::map<std::size_t, std::map<std::size_t, std::size_t>> table;
  for (std::size_t i = 0; i < clusters.size(); ++i) ++table[clusters[i]][labels[i]];
  std::size_t hit = 0;
  for (const auto& [c, row] : table) {
    std::size_t best = 0;
    for (const auto& [l, k] : row) best = std::max(best, k);
    hit += best;
  }
  return double(hit) / double(clusters.size());
}

std::vector<SpeakerSimilarity> intra_speaker_similarity(const Mat& reps,
                                                        std::span<const std::size_t> speakers) {
  if (reps.rows() != speakers.size()) throw DimensionError("intra_speaker_similarity: label count mismatch");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < speakers.size(); ++i) groups[speakers[i]].push_back(i);
  const Mat unit = normalize_rows(reps);
  std::vector<SpeakerSimilarity> out;
  for (const auto& [spk, idx] : groups) {
    if (idx.size() < 2) continue;
    Vec sims;
    sims.reserve(idx.size() * (idx.size() - 1) / 2);
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a + 1; b < idx.size(); ++b)
        sims.push_back(std::clamp(dot(unit.row(idx[a]), unit.row(idx[b])), -1.0, 1.0));
    std::sort(sims.begin(), sims.end());
    const std::size_t h = sims.size() / 2;
    const double med = sims.size() % 2 ? sims[h] : 0.5 * (sims[h - 1] + sims[h]);
    out.push_back({spk, med});
  }
  return out;
}

std::vector<ScoredTrial> score_trials(const Mat& reps, std::span<const TrialPair> trials) {
  const Mat unit = normalize_rows(reps);
  std::vector<ScoredTrial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    if (t.enroll_index >= unit.rows() || t.test_index >= unit.rows()) {
      throw InvalidArgument("score_trials: trial index out of range");
    }
    const double s = std::clamp(dot(unit.row(t.enroll_index), unit.row(t.test_index)), -1.0, 1.0);
    out.push_back({s, t.is_target, t.enroll_index, t.test_index});
  }
  return out;
}

void write_scored_trials(std::ostream& os, std::span<const ScoredTrial> trials) {
  os << std::setprecision(17);
  for (const auto& t : trials) {
    os << (t.is_target ? 1 : 0) << ' ' << t.enroll_index << ' ' << t.test_index << ' ' << t.score << '\n';
  }
}

std::vector<ScoredTrial> read_scored_trials(std::istream& is) {
  std::vector<ScoredTrial> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int label = 0;
    ScoredTrial t;
    if (!(ls >> label >> t.enroll_index >> t.test_index >> t.score) || (label != 0 && label != 1)) {
      throw IoError("scored trials: malformed row '" + line + "'");
    }
    t.is_target = label == 1;
    out.push_back(t);
  }
  return out;
}

void write_audit(std::ostream& os, std::span<const AuditRow> rows) {
  for (const auto& r : rows) {
    os << r.epoch << ' ' << r.index << ' ';
    if (r.pos_index) {
      os << *r.pos_index;
    } else {
      os << '-';
    }
    os << ' ' << int(r.same_speaker) << ' ' << int(r.same_recording) << ' ' << int(r.fallback) << '\n';
  }
}

std::vector<AuditRow> read_audit(std::istream& is) {
  std::vector<AuditRow> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    AuditRow r;
    std::string pos;
    int spk = 0;
    int rec = 0;
    int fb = 0;
    if (!(ls >> r.epoch >> r.index >> pos >> spk >> rec >> fb)) {
      throw IoError("audit log: malformed row '" + line + "'");
    }
    if (pos != "-") {
      try {
        r.pos_index = std::stoull(pos);
      } catch (const std::exception&) {
        throw IoError("audit log: bad pos_index '" + pos + "'");
      }
    }
    r.same_speaker = spk != 0;
    r.same_recording = rec != 0;
    r.fallback = fb != 0;
    out.push_back(r);
  }
  return out;
}

}  // namespace ssps
