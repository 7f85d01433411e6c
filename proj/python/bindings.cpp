#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "adenet/cli.hpp"
#include "adenet/error.hpp"
#include "adenet/experiment.hpp"
#include "adenet/features.hpp"
#include "adenet/metrics.hpp"
#include "adenet/model.hpp"
#include "adenet/synth.hpp"

namespace py = pybind11;
using namespace adenet;

namespace {

Image image_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ArgumentError("expected an (H, W, 3) uint8 array");
  Image img(static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

py::dict report_dict(const metrics::MetricsReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["macro_precision"] = r.macro_precision;
  d["macro_recall"] = r.macro_recall;
  d["macro_f1"] = r.macro_f1;
  d["fn_rate"] = r.fn_rate;
  d["roc_auc"] = r.roc_auc ? py::object(py::float_(*r.roc_auc)) : py::object(py::none());
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "AdeNet engine: parameter counts, metrics, features, synthetic data and the CLI";

  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "param_counts",
      [](const std::string& arch) {
        const auto c = model::count_params(experiment::build_arm(experiment::parse_arm(arch), 0));
        return py::make_tuple(c.trainable, c.non_trainable);
      },
      py::arg("arch") = "adenet", "(trainable, non_trainable) for adenet, adenet-nobn or lenet5");

  m.def(
      "metrics_from_confusion",
      [](std::size_t tp, std::size_t fn, std::size_t fp, std::size_t tn) {
        return report_dict(metrics::metrics_from_confusion({tp, fn, fp, tn}));
      },
      py::arg("tp"), py::arg("fn"), py::arg("fp"), py::arg("tn"));

  m.def(
      "evaluate",
      [](const std::vector<int>& labels, const std::vector<double>& scores, double threshold) {
        return report_dict(metrics::evaluate(labels, scores, threshold));
      },
      py::arg("labels"), py::arg("scores"), py::arg("threshold") = 0.5);

  m.def(
      "roc_auc", [](const std::vector<double>& scores, const std::vector<int>& labels) { return metrics::roc_auc(scores, labels).auc; },
      py::arg("scores"), py::arg("labels"));

  m.def("feature_names", &features::feature_names);
  m.def(
      "extract_features",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& crop) {
        const auto f = features::extract_features(image_from_array(crop));
        return std::vector<double>(f.begin(), f.end());
      },
      py::arg("crop"), "68 shallow descriptors of an (H, W, 3) uint8 crop");

  m.def(
      "synth",
      [](const std::filesystem::path& out, std::size_t n, double damaged_ratio, std::size_t image_size, std::uint64_t seed) {
        data::SynthConfig cfg;
        cfg.n_images = n;
        cfg.damaged_ratio = damaged_ratio;
        cfg.image_size = image_size;
        const auto r = data::synth_dataset(cfg, seed, out);
        return py::make_tuple(r.manifest, r.sidecar, r.damaged, r.undamaged);
      },
      py::arg("out"), py::arg("n") = 600, py::arg("damaged_ratio") = 1.0 / 3.0, py::arg("image_size") = 96,
      py::arg("seed") = 0, "Writes a synthetic dataset; returns (manifest, sidecar, damaged, undamaged)");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line interface in-process; returns (exit_code, stdout, stderr)");
}
