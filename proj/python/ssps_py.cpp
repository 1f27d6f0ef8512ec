#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

#include "ssps/cli.hpp"
#include "ssps/clustering.hpp"
#include "ssps/error.hpp"
#include "ssps/io.hpp"
#include "ssps/losses.hpp"
#include "ssps/metrics.hpp"
#include "ssps/trainer.hpp"

namespace py = pybind11;
using namespace ssps;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Mat to_mat(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Mat(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Mat& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

std::vector<ScoredTrial> to_trials(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  std::vector<ScoredTrial> t(scores.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = {scores[i], labels[i], i, i};
  return t;
}

TrainConfig config_from_text(const std::string& ini) {
  std::istringstream is(ini);
  return parse_config(is);
}

py::dict report_dict(const EpochReport& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["mean_loss"] = r.mean_loss;
  d["eer"] = r.eer;
  d["min_dcf"] = r.min_dcf;
  d["speaker_acc"] = r.speaker_acc;
  d["recording_acc"] = r.recording_acc;
  d["fallback_rate"] = r.fallback_rate;
  d["nmi_ratio"] = r.nmi_ratio;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ssps, m) {
  auto base = py::register_exception<Error>(m, "SspsError", PyExc_RuntimeError);
  py::register_exception<ZeroNormError>(m, "ZeroNormError", base);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<EmptyInputError>(m, "EmptyInputError", base);
  py::register_exception<NumericalError>(m, "NumericalError", base);
  py::register_exception<StaleCacheError>(m, "StaleCacheError", base);
  py::register_exception<IoError>(m, "IoError", base);

  m.def(
      "eer", [](const std::vector<double>& s, const std::vector<bool>& l) { return eer(to_trials(s, l)); },
      py::arg("scores"), py::arg("is_target"));
  m.def(
      "min_dcf",
      [](const std::vector<double>& s, const std::vector<bool>& l, double p_target, double c_miss, double c_fa) {
        return min_dcf(to_trials(s, l), DcfParams{p_target, c_miss, c_fa});
      },
      py::arg("scores"), py::arg("is_target"), py::arg("p_target") = 0.01, py::arg("c_miss") = 1.0,
      py::arg("c_fa") = 1.0);
  m.def(
      "nmi", [](const std::vector<std::size_t>& u, const std::vector<std::size_t>& v) { return nmi(u, v); },
      py::arg("u"), py::arg("v"));
  m.def(
      "cluster_purity",
      [](const std::vector<std::size_t>& c, const std::vector<std::size_t>& l) { return cluster_purity(c, l); },
      py::arg("clusters"), py::arg("labels"));

  m.def(
      "sinkhorn_codes", [](const Array& s, int n_iters, double eps) { return to_array(sinkhorn_codes(to_mat(s), n_iters, eps)); },
      py::arg("scores"), py::arg("n_iters") = 3, py::arg("epsilon") = 0.05);
  m.def(
      "kmeans",
      [](const Array& points, std::size_t k, std::size_t n_iters, std::uint64_t seed) {
        Rng rng(seed);
        const ClusterState st = kmeans(to_mat(points), k, n_iters, rng);
        return py::make_tuple(st.assignments, to_array(st.centroids));
      },
      py::arg("points"), py::arg("k"), py::arg("n_iters") = 10, py::arg("seed") = 0);

  m.def(
      "default_config",
      [](const std::string& framework) {
        std::ostringstream os;
        write_config(os, default_config(parse_framework(framework)));
        return os.str();
      },
      py::arg("framework") = "simclr", "Default configuration for a framework, as INI text.");
  m.def(
      "normalize_config",
      [](const std::string& ini) {
        std::ostringstream os;
        write_config(os, config_from_text(ini));
        return os.str();
      },
      py::arg("ini"), "Parse INI text and write it back with every key filled in.");

  m.def(
      "generate_dataset",
      [](const std::string& ini) {
        const Dataset data = make_dataset(config_from_text(ini));
        py::dict d;
        d["speaker"] = speaker_labels(data.records);
        d["recording"] = recording_labels(data.records);
        d["base"] = to_array(stack_bases(data.records));
        std::vector<py::tuple> trials;
        for (const auto& t : data.trials) trials.push_back(py::make_tuple(t.enroll_index, t.test_index, t.is_target));
        d["trials"] = trials;
        return d;
      },
      py::arg("ini") = "");

  m.def(
      "run_experiment",
      [](const std::string& ini) {
        const TrainConfig cfg = config_from_text(ini);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg, make_dataset(cfg));
        }
        py::dict d;
        py::list reports;
        for (const auto& rep : r.reports) reports.append(report_dict(rep));
        d["reports"] = reports;
        d["final_eer"] = r.final_eval.eer;
        d["final_min_dcf"] = r.final_eval.min_dcf;
        d["activation_eer"] = r.activation_eval ? py::cast(r.activation_eval->eer) : py::none();
        d["activation_min_dcf"] = r.activation_eval ? py::cast(r.activation_eval->min_dcf) : py::none();
        return d;
      },
      py::arg("ini") = "");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> full{"ssps"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
