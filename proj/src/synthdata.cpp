#include "ssps/synthdata.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>

#include "ssps/error.hpp"

namespace ssps {

void GenConfig::validate() const {
  if (n_speakers == 0 || recs_per_speaker == 0 || utts_per_recording == 0 || dim_input == 0) {
    throw ConfigError("GenConfig: counts and dim_input must be positive");
  }
  if (channel_dims >= dim_input) {
    throw ConfigError("GenConfig: channel_dims must be smaller than dim_input");
  }
  for (double s : {sigma_recording, sigma_utterance, sigma_augment}) {
    if (!std::isfinite(s) || s < 0.0) throw ConfigError("GenConfig: sigmas must be finite and >= 0");
  }
}

namespace {

// Gaussian direction restricted to coordinates [begin, end), unit norm.
Vec random_direction(std::size_t dim, std::size_t begin, std::size_t end, Rng& rng) {
  Vec v(dim, 0.0);
  for (std::size_t d = begin; d < end; ++d) v[d] = rng.normal();
  return l2_normalize(v);
}

}  // namespace

std::vector<UtteranceRecord> generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t dim = cfg.dim_input;
  const std::size_t speaker_end = cfg.channel_dims == 0 ? dim : dim - cfg.channel_dims;
  const std::size_t channel_begin = cfg.channel_dims == 0 ? 0 : speaker_end;

  std::vector<UtteranceRecord> records;
  records.reserve(cfg.total());
  std::size_t recording_id = 0;
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    const Vec speaker = random_direction(dim, 0, speaker_end, rng);
    for (std::size_t r = 0; r < cfg.recs_per_speaker; ++r, ++recording_id) {
      const Vec channel = random_direction(dim, channel_begin, dim, rng);
      for (std::size_t u = 0; u < cfg.utts_per_recording; ++u) {
        UtteranceRecord rec;
        rec.index = records.size();
        rec.speaker_id = s;
        rec.recording_id = recording_id;
        rec.base.resize(dim);
        for (std::size_t d = 0; d < dim; ++d) {
          rec.base[d] = speaker[d] + cfg.sigma_recording * channel[d] +
                        cfg.sigma_utterance * rng.normal();
        }
        records.push_back(std::move(rec));
      }
    }
  }
  return records;
}

View make_view(const UtteranceRecord& rec, ViewKind kind, double sigma_augment, Rng& rng) {
  if (!(sigma_augment >= 0.0)) throw InvalidArgument("make_view: sigma_augment must be >= 0");
  View view{rec.index, rec.base, kind};
  if (kind == ViewKind::reference) return view;
  const double sigma = kind == ViewKind::global ? sigma_augment / 2.0 : sigma_augment;
  if (sigma == 0.0) return view;
  for (double& x : view.features) x += sigma * rng.normal();
  return view;
}

namespace {

using PairKey = std::pair<std::size_t, std::size_t>;

PairKey key(std::size_t a, std::size_t b) { return a < b ? PairKey{a, b} : PairKey{b, a}; }

// Draws n distinct unordered pairs. `candidates` enumerates every admissible
// pair; `draw` proposes one at random. Dense requests are served from the
// enumeration, sparse ones by rejection.
template <typename Enumerate, typename Draw>
void draw_unique_pairs(std::size_t n, std::size_t possible, bool target, Enumerate&& candidates,
                       Draw&& draw, Rng& rng, std::set<PairKey>& seen,
                       std::vector<TrialPair>& out) {
  if (n == 0) return;
  if (n > possible) {
    throw InvalidArgument("make_trials: requested " + std::to_string(n) + (target ? " target" : " nontarget") +
                          " pairs but only " + std::to_string(possible) + " exist");
  }
  if (2 * n > possible) {
    std::vector<PairKey> all = candidates();
    rng.shuffle(all);
    for (std::size_t i = 0; i < n; ++i) {
      seen.insert(all[i]);
      out.push_back({all[i].first, all[i].second, target});
    }
    return;
  }
  std::size_t made = 0;
  while (made < n) {
    auto [a, b] = draw();
    if (seen.insert(key(a, b)).second) {
      out.push_back({a, b, target});
      ++made;
    }
  }
}

}  // namespace

std::vector<TrialPair> make_trials(const std::vector<UtteranceRecord>& records,
                                   std::size_t n_target, std::size_t n_nontarget, Rng& rng) {
  const std::size_t n = records.size();
  std::size_t n_speakers = 0;
  for (const auto& r : records) n_speakers = std::max(n_speakers, r.speaker_id + 1);
  std::vector<std::vector<std::size_t>> by_speaker(n_speakers);
  for (const auto& r : records) by_speaker[r.speaker_id].push_back(r.index);

  std::size_t possible_target = 0;
  std::size_t same_speaker_pairs = 0;
  for (const auto& members : by_speaker) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        ++same_speaker_pairs;
        if (records[members[a]].recording_id != records[members[b]].recording_id) ++possible_target;
      }
    }
  }
  const std::size_t possible_nontarget = n * (n > 0 ? n - 1 : 0) / 2 - same_speaker_pairs;
  if (n_target > 0 && possible_target == 0) {
    throw InvalidArgument("make_trials: no speaker has two recordings; cross-recording targets impossible");
  }

  std::set<PairKey> seen;
  std::vector<TrialPair> trials;
  trials.reserve(n_target + n_nontarget);

  draw_unique_pairs(
      n_target, possible_target, true,
      [&] {
        std::vector<PairKey> all;
        for (const auto& members : by_speaker)
          for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b)
              if (records[members[a]].recording_id != records[members[b]].recording_id)
                all.emplace_back(members[a], members[b]);
        return all;
      },
      [&]() -> PairKey {
        while (true) {
          const auto& a = records[rng.index(n)];
          const auto& members = by_speaker[a.speaker_id];
          const auto& b = records[members[rng.index(members.size())]];
          if (a.recording_id != b.recording_id) return {a.index, b.index};
        }
      },
      rng, seen, trials);

  draw_unique_pairs(
      n_nontarget, possible_nontarget, false,
      [&] {
        std::vector<PairKey> all;
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = a + 1; b < n; ++b)
            if (records[a].speaker_id != records[b].speaker_id) all.emplace_back(a, b);
        return all;
      },
      [&]() -> PairKey {
        while (true) {
          const std::size_t a = rng.index(n);
          const std::size_t b = rng.index(n);
          if (records[a].speaker_id != records[b].speaker_id) return {a, b};
        }
      },
      rng, seen, trials);
  return trials;
}

Mat stack_bases(const std::vector<UtteranceRecord>& records) {
  if (records.empty()) return {};
  Mat m(records.size(), records.front().base.size());
  for (const auto& r : records) m.set_row(r.index, r.base);
  return m;
}

std::vector<std::size_t> speaker_labels(const std::vector<UtteranceRecord>& records) {
  std::vector<std::size_t> out(records.size());
  for (const auto& r : records) out[r.index] = r.speaker_id;
  return out;
}

std::vector<std::size_t> recording_labels(const std::vector<UtteranceRecord>& records) {
  std::vector<std::size_t> out(records.size());
  for (const auto& r : records) out[r.index] = r.recording_id;
  return out;
}

void write_dataset(std::ostream& os, const std::vector<UtteranceRecord>& records) {
  os << std::setprecision(17);
  for (const auto& r : records) {
    os << r.index << ' ' << r.speaker_id << ' ' << r.recording_id;
    for (double v : r.base) os << ' ' << v;
    os << '\n';
  }
}

std::vector<UtteranceRecord> read_dataset(std::istream& is) {
  std::vector<UtteranceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    UtteranceRecord rec;
    if (!(ls >> rec.index >> rec.speaker_id >> rec.recording_id)) {
      throw IoError("dataset line " + std::to_string(line_no) + ": expected index speaker recording");
    }
    double v = 0.0;
    while (ls >> v) rec.base.push_back(v);
    if (rec.base.empty()) throw IoError("dataset line " + std::to_string(line_no) + ": no features");
    if (!records.empty() && rec.base.size() != records.front().base.size()) {
      throw IoError("dataset line " + std::to_string(line_no) + ": inconsistent dimension");
    }
    if (rec.index != records.size()) {
      throw IoError("dataset line " + std::to_string(line_no) + ": indices must be 0..N-1 in order");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_trials(std::ostream& os, const std::vector<TrialPair>& trials) {
  for (const auto& t : trials) {
    os << (t.is_target ? 1 : 0) << ' ' << t.enroll_index << ' ' << t.test_index << '\n';
  }
}

std::vector<TrialPair> read_trials(std::istream& is) {
  std::vector<TrialPair> trials;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int label = 0;
    TrialPair t;
    if (!(ls >> label >> t.enroll_index >> t.test_index) || (label != 0 && label != 1)) {
      throw IoError("trial line " + std::to_string(line_no) + ": expected 'label enroll test'");
    }
    t.is_target = label == 1;
    trials.push_back(t);
  }
  return trials;
}

std::string_view to_string(ViewKind kind) {
  switch (kind) {
    case ViewKind::anchor: return "anchor";
    case ViewKind::positive: return "positive";
    case ViewKind::reference: return "reference";
    case ViewKind::global: return "global";
    case ViewKind::local: return "local";
  }
  return "unknown";
}

}  // namespace ssps
