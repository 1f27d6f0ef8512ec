// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. `--only N[,M...]` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssps/cli.hpp"
#include "ssps/error.hpp"
#include "ssps/io.hpp"
#include "ssps/trainer.hpp"
#include "support.hpp"

using namespace ssps;
using namespace ssps::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string pct(double v) { return fmt("%.2f%%", 100.0 * v); }

// Cached experiment runs shared between criteria.
struct Runs {
  Dataset data;
  std::map<std::string, ExperimentResult> cache;

  Runs() : data(make_dataset(TrainConfig{})) {}

  const ExperimentResult& get(const std::string& key, const TrainConfig& cfg) {
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    cfg.validate();
    return cache.emplace(key, run_experiment(cfg, data)).first->second;
  }
};

TrainConfig simclr(Strategy s, std::size_t k = 0, std::size_t m = 1) {
  TrainConfig c = default_config(Framework::simclr);
  c.sampler.strategy = s;
  c.sampler.k = k;
  c.sampler.m = m;
  return c;
}

std::size_t large_k() { return 2 * TrainConfig{}.data.n_recordings(); }

// ---- 1 --------------------------------------------------------------------

Outcome gradients() {
  Rng rng(101);
  const std::size_t b = 8, d = 16, probes = 64;
  std::vector<std::string> parts;
  double worst = 0.0;
  std::size_t min_probes = SIZE_MAX;
  auto note = [&](const char* name, FdStats st) {
    worst = std::max(worst, st.max_rel);
    min_probes = std::min(min_probes, st.probes);
    parts.push_back(std::string(name) + fmt("=%.1e", st.max_rel));
  };
  {
    Mat z = random_mat(b, d, rng), zp = random_mat(b, d, rng);
    const LossResult r = simclr_loss(z, zp, 0.1, true);
    auto f = [&] { return simclr_loss(z, zp, 0.1, true).value; };
    FdStats st = fd_probe(z.values(), r.grad_anchor.values(), f, probes / 2, rng);
    note("simclr", fd_probe(zp.values(), r.grad_positive.values(), f, probes / 2, rng, 1e-5, st));
  }
  {
    Mat z = random_mat(b, d, rng), zp = random_mat(b, d, rng);
    const Mat q = random_mat(32, d, rng);
    const LossResult r = moco_loss(z, zp, q, 0.2);
    auto f = [&] { return moco_loss(z, zp, q, 0.2).value; };
    FdStats st = fd_probe(z.values(), r.grad_anchor.values(), f, probes / 2, rng);
    note("moco", fd_probe(zp.values(), r.grad_positive.values(), f, probes / 2, rng, 1e-5, st));
  }
  {
    Prototypes p = make_prototypes(10, d, rng);
    Mat z = random_mat(b, d, rng);
    Mat codes = sinkhorn_codes(matmul_transposed(random_unit_rows(b, d, rng), p.vectors), 3);
    for (double& v : codes.values()) v *= static_cast<double>(b);
    const SwavResult r = swav_loss(z, codes, p, 0.1);
    auto f = [&] { return swav_loss(z, codes, p, 0.1).value; };
    FdStats st = fd_probe(z.values(), r.grad_prediction.values(), f, probes / 2, rng);
    note("swav", fd_probe(p.vectors.values(), r.grad_prototypes.values(), f, probes / 2, rng, 1e-5, st));
  }
  {
    Mat z = random_mat(b, d, rng, 0.5), zp = random_mat(b, d, rng, 0.5);
    const LossResult r = vicreg_loss(z, zp);
    auto f = [&] { return vicreg_loss(z, zp).value; };
    FdStats st = fd_probe(z.values(), r.grad_anchor.values(), f, probes / 2, rng);
    note("vicreg", fd_probe(zp.values(), r.grad_positive.values(), f, probes / 2, rng, 1e-5, st));
  }
  {
    std::vector<Mat> s, t;
    for (int v = 0; v < 6; ++v) s.push_back(random_mat(b, d, rng, 0.1));
    for (int v = 0; v < 2; ++v) t.push_back(random_mat(b, d, rng, 0.1));
    DinoCenter c;
    c.c.assign(d, 0.05);
    const DinoResult r = dino_loss(s, t, c, 0.1, 0.04);
    auto f = [&] { return dino_loss(s, t, c, 0.1, 0.04).value; };
    FdStats st;
    for (std::size_t v = 0; v < s.size(); ++v) st = fd_probe(s[v].values(), r.grad_student[v].values(), f, 11, rng, 1e-5, st);
    note("dino", st);
  }
  {
    const TrainConfig cfg = default_config(Framework::swav);
    ModelParams p = build_model(cfg.model_spec(), rng);
    const Mat x = random_mat(b, cfg.data.dim_input, rng);
    const ForwardResult fr = forward(p, x);
    const Mat gz = random_mat(b, fr.z.cols(), rng);
    const ModelParams g = backward(p, fr.cache, gz, Mat{});
    auto f = [&] {
      const Mat z = forward(p, x).z;
      double v = 0.0;
      for (std::size_t k = 0; k < z.values().size(); ++k) v += gz.values()[k] * z.values()[k];
      return v;
    };
    auto ps = parameter_spans(p);
    const auto gs = parameter_spans(g);
    double magnitude = 0.0;
    for (std::size_t k = 0; k < gz.values().size(); ++k) magnitude += std::abs(gz.values()[k] * fr.z.values()[k]);
    FdStats st;
    for (std::size_t k = 0; k < ps.size(); ++k) st = fd_probe(ps[k], gs[k], f, 8, rng, 1e-5, st, magnitude);
    note("model", st);
  }
  std::string detail = "max rel err " + fmt("%.2e", worst) + " over >= " + std::to_string(min_probes) +
                       " probes each (";
  for (std::size_t i = 0; i < parts.size(); ++i) detail += (i ? " " : "") + parts[i];
  detail += ")";
  return {worst < 1e-4 && min_probes >= 64, detail};
}

// ---- 2 --------------------------------------------------------------------

Outcome sinkhorn() {
  Rng rng(202);
  MarginalError worst;
  for (int t = 0; t < 100; ++t) {
    Mat s(8, 5);
    for (double& v : s.values()) v = 2.0 * rng.uniform() - 1.0;
    const MarginalError e = sinkhorn_marginal_error(sinkhorn_codes(s, 3, 0.05));
    worst.rows = std::max(worst.rows, e.rows);
    worst.cols = std::max(worst.cols, e.cols);
  }
  Mat adversarial(8, 5);
  for (double& v : adversarial.values()) v = 1e4 * (2.0 * rng.uniform() - 1.0);
  bool retry_ok = false;
  MarginalError adv;
  try {
    const Mat c = sinkhorn_codes(adversarial, 3, 0.05);
    adv = sinkhorn_marginal_error(c);
    retry_ok = all_finite(c.values());
  } catch (const Error&) {
    retry_ok = false;
  }
  const bool pass = worst.rows < 1e-6 && worst.cols < 1e-6 && retry_ok && adv.rows < 1e-6 && adv.cols < 1e-6;
  return {pass, "100 random 8x5, 3 iters: max row err " + fmt("%.1e", worst.rows) + ", max col err " +
                    fmt("%.1e", worst.cols) + " (tol 1e-6); scaled x1e4 input " +
                    (retry_ok ? "finite, row err " + fmt("%.1e", adv.rows) + ", col err " + fmt("%.1e", adv.cols)
                              : std::string("failed"))};
}

// ---- 3 --------------------------------------------------------------------

Outcome oracles() {
  Rng rng(303);
  const int n = 150;
  int ok_eer = 0, ok_dcf = 0, ok_topk = 0, ok_members = 0, ok_purity = 0, ok_nmi = 0;
  for (int t = 0; t < n; ++t) {
    const auto trials = random_trials(1 + rng.index(20), 1 + rng.index(20), rng, t % 3 == 0);
    ok_eer += std::abs(eer(trials) - brute_eer(trials)) <= 1e-12;
    ok_dcf += std::abs(min_dcf(trials) - brute_min_dcf(trials)) <= 1e-12;

    const std::size_t len = 2 + rng.index(30);
    Vec scores(len);
    for (double& v : scores) v = static_cast<double>(rng.index(6));
    const std::optional<std::size_t> ex = rng.index(len);
    const std::size_t k = 1 + rng.index(len - 1);
    ok_topk += topk_desc(scores, k, ex) == brute_topk(scores, k, ex);

    const std::size_t pts_n = 6 + rng.index(30);
    const std::size_t kk = 1 + rng.index(5);
    const Mat pts = random_unit_rows(pts_n, 4, rng);
    const ClusterState st = kmeans(pts, kk, 5, rng);
    ok_members += st.member_sets == brute_member_sets(st.assignments, kk);
    std::vector<std::size_t> labels(pts_n);
    for (auto& l : labels) l = rng.index(3);
    ok_purity += std::abs(cluster_purity(st.assignments, labels) - brute_purity(st.assignments, labels)) <= 1e-12;
    ok_nmi += std::abs(nmi(st.assignments, labels) - brute_nmi(st.assignments, labels)) <= 1e-12;
  }
  const bool pass = ok_eer == n && ok_dcf == n && ok_topk == n && ok_members == n && ok_purity == n && ok_nmi == n;
  std::ostringstream os;
  os << "agreeing instances of " << n << ": eer " << ok_eer << ", min_dcf " << ok_dcf << ", topk " << ok_topk
     << ", member sets " << ok_members << ", kmeans purity " << ok_purity << ", nmi " << ok_nmi;
  return {pass, os.str()};
}

// ---- 4 --------------------------------------------------------------------

Outcome latent_ordering(Runs& runs) {
  const auto& recs = runs.data.records;
  const Mat x = normalize_rows(stack_bases(recs));
  struct Acc {
    double n = 0, s = 0, sq = 0;
    void add(double v) { n += 1, s += v, sq += v * v; }
    double mean() const { return s / n; }
    double se() const { return std::sqrt((sq / n - mean() * mean()) / n); }
  } same_rec, same_spk, cross;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (std::size_t j = i + 1; j < recs.size(); ++j) {
      const double c = dot(x.row(i), x.row(j));
      if (recs[i].recording_id == recs[j].recording_id) same_rec.add(c);
      else if (recs[i].speaker_id == recs[j].speaker_id) same_spk.add(c);
      else cross.add(c);
    }
  }
  const double g1 = (same_rec.mean() - same_spk.mean()) / std::hypot(same_rec.se(), same_spk.se());
  const double g2 = (same_spk.mean() - cross.mean()) / std::hypot(same_spk.se(), cross.se());
  std::ostringstream os;
  os << "mean cos same-recording " << fmt("%.4f", same_rec.mean()) << " > same-speaker " << fmt("%.4f", same_spk.mean())
     << " > cross-speaker " << fmt("%.4f", cross.mean()) << "; gaps " << fmt("%.1f", g1) << " and " << fmt("%.1f", g2)
     << " SE";
  return {g1 > 3.0 && g2 > 3.0, os.str()};
}

// ---- 5 --------------------------------------------------------------------

Outcome simclr_row(Runs& runs) {
  const auto& a = runs.get("ssl", simclr(Strategy::ssl_default));
  const auto& b = runs.get("cluster-large", simclr(Strategy::ssps_cluster, large_k(), 1));
  const auto& c = runs.get("oracle", simclr(Strategy::supervised_oracle));
  const double ea = a.final_eval.eer, eb = b.final_eval.eer, ec = c.final_eval.eer;
  const double warm = b.activation_eval->eer;
  const double gain = (warm - eb) / warm;
  std::ostringstream os;
  os << "final EER oracle " << pct(ec) << " <= cluster(K=" << large_k() << ",M=1) " << pct(eb) << " < ssl "
     << pct(ea) << "; cluster vs warmup-end " << pct(warm) << ": " << fmt("%.1f", 100 * gain) << "% relative gain";
  return {ec <= eb && eb < ea && gain >= 0.20, os.str()};
}

// ---- 6 --------------------------------------------------------------------

SamplingAccuracy accuracy_of(const std::vector<std::size_t>& picks, const std::vector<UtteranceRecord>& recs) {
  double spk = 0, rec = 0;
  for (std::size_t i = 0; i < picks.size(); ++i) {
    spk += recs[picks[i]].speaker_id == recs[i].speaker_id;
    rec += recs[picks[i]].recording_id == recs[i].recording_id;
  }
  return {spk / picks.size(), rec / picks.size()};
}

Outcome sampling_tradeoff(Runs& runs) {
  TrainConfig cfg = simclr(Strategy::ssps_nn);
  cfg.epochs = cfg.warmup_epochs_before_ssps;
  const auto& recs = runs.data.records;
  Trainer tr(cfg, recs, runs.data.trials);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    tr.begin_epoch();
    for (const auto& batch : tr.batches()) tr.train_iteration(batch);
    tr.end_epoch();
  }
  const RefQueue& q = tr.ref_queue();
  const std::size_t n = recs.size();
  Rng rng = Rng::stream(cfg.seed, 4);

  std::vector<SamplingAccuracy> nn;
  for (std::size_t m : {1, 10, 50}) {
    std::vector<std::size_t> picks(n);
    for (std::size_t i = 0; i < n; ++i) picks[i] = ssps_nn_select(i, q, m, rng);
    nn.push_back(accuracy_of(picks, recs));
  }
  const ClusterState st = ssps_cluster_epoch_init(q, large_k(), 1, cfg.sampler.kmeans_iters, rng);
  std::vector<std::size_t> picks;
  for (std::size_t i = 0; i < n; ++i) {
    const ClusterPick p = ssps_cluster_select(i, st, 1, rng);
    if (p.pos_index) picks.push_back(*p.pos_index);
    else picks.push_back(i);  // empty neighbor cluster; cannot happen with k-means reseeding
  }
  const SamplingAccuracy cl = accuracy_of(picks, recs);

  const bool lower = cl.recording <= nn[0].recording - 0.15;
  const bool matched = cl.speaker >= nn[0].speaker - 0.01;
  const bool monotone = nn[1].recording <= nn[0].recording && nn[2].recording <= nn[1].recording;
  std::ostringstream os;
  os << "cluster(K=" << large_k() << ",M=1) spk/rec " << fmt("%.3f", cl.speaker) << "/" << fmt("%.3f", cl.recording)
     << " vs NN M=1 " << fmt("%.3f", nn[0].speaker) << "/" << fmt("%.3f", nn[0].recording) << "; NN rec acc over M=1,10,50: "
     << fmt("%.3f", nn[0].recording) << ", " << fmt("%.3f", nn[1].recording) << ", " << fmt("%.3f", nn[2].recording);
  return {lower && matched && monotone, os.str()};
}

// ---- 7 --------------------------------------------------------------------

Outcome nmi_direction(Runs& runs) {
  const TrainConfig ref;
  const std::size_t act = ref.activation_epoch();
  const auto& a = runs.get("ssl", simclr(Strategy::ssl_default));
  const auto& b = runs.get("cluster-large", simclr(Strategy::ssps_cluster, large_k(), 1));
  const double a0 = a.reports[act - 1].nmi_ratio, a1 = a.reports.back().nmi_ratio;
  const double b0 = b.reports[act - 1].nmi_ratio, b1 = b.reports.back().nmi_ratio;
  std::ostringstream os;
  os << "speaker/recording NMI ratio, activation -> end: ssps " << fmt("%.4f", b0) << " -> " << fmt("%.4f", b1)
     << ", ssl " << fmt("%.4f", a0) << " -> " << fmt("%.4f", a1);
  return {b1 > b0 && a1 - a0 <= 0.01, os.str()};
}

// ---- 8 --------------------------------------------------------------------

Outcome no_augmentation(Runs& runs) {
  auto noaug = [](TrainConfig c) {
    c.augmentation_enabled = false;
    return c;
  };
  const auto& ssl = runs.get("ssl", simclr(Strategy::ssl_default));
  const auto& ssl_na = runs.get("ssl-noaug", noaug(simclr(Strategy::ssl_default)));
  const auto& cl = runs.get("cluster-default", simclr(Strategy::ssps_cluster));
  const auto& cl_na = runs.get("cluster-default-noaug", noaug(simclr(Strategy::ssps_cluster)));
  const double r_ssl = ssl_na.final_eval.eer / ssl.final_eval.eer;
  const double r_cl = cl_na.final_eval.eer / cl.final_eval.eer;
  std::ostringstream os;
  os << "EER without/with augmentation: ssl " << pct(ssl_na.final_eval.eer) << "/" << pct(ssl.final_eval.eer) << " = "
     << fmt("%.2f", r_ssl) << "x (need >= 2), cluster(K=" << TrainConfig{}.resolved_k() << ",M=1) "
     << pct(cl_na.final_eval.eer) << "/" << pct(cl.final_eval.eer) << " = " << fmt("%.2f", r_cl) << "x (need <= 1.25)";
  return {r_ssl >= 2.0 && r_cl <= 1.25, os.str()};
}

// ---- 9 --------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli_args(std::vector<std::string> args) {
  args.insert(args.begin(), "ssps");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Outcome null_integration(Runs& runs) {
  bool identical = true;
  for (Framework f : {Framework::simclr, Framework::moco, Framework::swav, Framework::vicreg, Framework::dino}) {
    TrainConfig c = default_config(f);
    c.epochs = 12;
    c.warmup_epochs_before_ssps = 6;
    c.sampler.activation_epoch = 6;
    const ExperimentResult a = run_experiment(c, runs.data);
    const ExperimentResult b = run_baseline_experiment(c, runs.data);
    identical &= a.reports == b.reports && a.final_model.same_weights(b.final_model) &&
                 a.final_eval.scores == b.final_eval.scores;
    for (std::size_t e = 0; e < a.checkpoints.size(); ++e) identical &= a.checkpoints[e].same_weights(b.checkpoints[e]);
  }

  const fs::path tmp = fs::temp_directory_path() / "ssps-acceptance-9";
  fs::remove_all(tmp);
  bool bytes_equal = true;
  std::size_t runs_done = 0;
  for (const char* sampler : {"ssl", "cluster", "nn"}) {
    const std::string d1 = (tmp / (std::string(sampler) + "-1")).string();
    const std::string d2 = (tmp / (std::string(sampler) + "-2")).string();
    if (run_cli_args({"train", "--out", d1, "--sampler", sampler, "--seed", "3"}) != 0 ||
        run_cli_args({"train", "--out", d2, "--sampler", sampler, "--seed", "3"}) != 0) {
      bytes_equal = false;
      continue;
    }
    ++runs_done;
    for (const char* f : {"report.csv", "summary.csv", "audit.log", "loss.log", "final.bin"}) {
      const std::string a = slurp(fs::path(d1) / f);
      // The ssl run samples no pseudo-positives, so its audit log is legitimately empty.
      const bool expect_content = std::string(f) != "audit.log" || std::string(sampler) != "ssl";
      bytes_equal &= a == slurp(fs::path(d2) / f) && (!expect_content || !a.empty());
    }
  }
  fs::remove_all(tmp);
  std::ostringstream os;
  os << "ssl_default vs sampler-free build over 5 frameworks: " << (identical ? "bitwise identical" : "DIFFERENT")
     << "; CLI reruns (ssl, cluster, nn): report.csv and logs " << (bytes_equal ? "byte-identical" : "DIFFER")
     << " (" << runs_done << "/3 pairs)";
  return {identical && bytes_equal && runs_done == 3, os.str()};
}

// ---- 10 -------------------------------------------------------------------

Outcome fallback_bookkeeping(Runs& runs) {
  TrainConfig cfg = simclr(Strategy::ssps_cluster);
  cfg.sampler.pos_queue_capacity = cfg.data.total() / 4;
  Trainer tr(cfg, runs.data.records, runs.data.trials);
  bool exact = true;
  double min_rate = 1.0, max_rate = 0.0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    tr.begin_epoch();
    std::size_t decisions = 0, misses = 0;
    for (const auto& batch : tr.batches()) {
      const std::vector<std::size_t> live = tr.pos_queue().indices();
      const std::set<std::size_t> snapshot(live.begin(), live.end());
      tr.train_iteration(batch);
      for (const auto& d : tr.last_decisions()) {
        ++decisions;
        misses += !d.candidate || !snapshot.count(*d.candidate);
      }
    }
    const EpochReport rep = tr.end_epoch();
    const double expected = decisions ? static_cast<double>(misses) / static_cast<double>(decisions) : 0.0;
    exact &= rep.fallback_rate == expected;
    if (tr.sampler_active()) {
      min_rate = std::min(min_rate, rep.fallback_rate);
      max_rate = std::max(max_rate, rep.fallback_rate);
    }
  }

  TrainConfig full = simclr(Strategy::ssps_cluster);
  full.epochs = 4;
  full.warmup_epochs_before_ssps = 1;
  full.sampler.activation_epoch = 1;
  const ExperimentResult r = run_experiment(full, runs.data);
  const auto& long_run = runs.get("cluster-default", simclr(Strategy::ssps_cluster));
  bool zero = true;
  for (std::size_t e = 1; e < r.reports.size(); ++e) zero &= r.reports[e].fallback_rate == 0.0;
  for (std::size_t e = TrainConfig{}.activation_epoch(); e < long_run.reports.size(); ++e)
    zero &= long_run.reports[e].fallback_rate == 0.0;

  std::ostringstream os;
  os << "|Q'|=N/4: logged fallback_rate " << (exact ? "equals" : "DIFFERS FROM") << " the replayed miss rate in every epoch"
     << " (active range " << fmt("%.3f", min_rate) << ".." << fmt("%.3f", max_rate) << "); |Q'|=N after a warm epoch: "
     << (zero ? "0 in every active epoch" : "NONZERO");
  return {exact && zero && max_rate > 0.0, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
    }
  }
  Runs runs;
  // Criteria with a stated runtime budget, in seconds.
  const std::map<int, double> budget = {{1, 30.0}, {4, 10.0}, {5, 300.0}};
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, gradients},
      {2, sinkhorn},
      {3, oracles},
      {4, [&] { return latent_ordering(runs); }},
      {5, [&] { return simclr_row(runs); }},
      {6, [&] { return sampling_tradeoff(runs); }},
      {7, [&] { return nmi_direction(runs); }},
      {8, [&] { return no_augmentation(runs); }},
      {9, [&] { return null_integration(runs); }},
      {10, [&] { return fallback_bookkeeping(runs); }},
  };
  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (auto b = budget.find(id); b != budget.end() && secs >= b->second) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", b->second) + " s budget";
    }
    failures += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " | " << o.detail << " ["
              << fmt("%.1f", secs) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
