#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedsim/client_opt.hpp"
#include "fedsim/config.hpp"
#include "fedsim/data.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/server.hpp"

namespace py = pybind11;
using namespace fedsim;

namespace {

Batch make_batch(const std::vector<double>& features, const std::vector<int>& labels,
                 int dim, int num_classes) {
  return Batch(features, labels, dim, num_classes);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deterministic federated-learning simulation engine";

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init([](std::vector<int> layers, bool norm) {
             ModelSpec s;
             s.layer_sizes = std::move(layers);
             s.has_norm_layer = norm;
             s.validate();
             return s;
           }),
           py::arg("layer_sizes"), py::arg("has_norm_layer") = false)
      .def_readonly("layer_sizes", &ModelSpec::layer_sizes)
      .def_readonly("has_norm_layer", &ModelSpec::has_norm_layer)
      .def("param_count", &ModelSpec::param_count);

  py::class_<Batch>(m, "Batch")
      .def(py::init(&make_batch), py::arg("features"), py::arg("labels"), py::arg("dim"),
           py::arg("num_classes"))
      .def_readonly("n", &Batch::n)
      .def_readonly("dim", &Batch::dim)
      .def_readonly("features", &Batch::features)
      .def_readonly("labels", &Batch::labels);

  m.def("init_model", &init_model, py::arg("spec"), py::arg("seed"));
  m.def("loss_and_grad", &loss_and_grad, py::arg("params"), py::arg("batch"), py::arg("spec"));
  m.def("finite_diff_grad", &finite_diff_grad, py::arg("params"), py::arg("batch"),
        py::arg("spec"), py::arg("step"));
  m.def("evaluate", &evaluate, py::arg("params"), py::arg("dataset"), py::arg("spec"));
  m.def("norm_layer_mask", &norm_layer_mask, py::arg("spec"));

  m.def(
      "fedfor_reg_term",
      [](const ParamVector& w, const ParamVector& w_prev, const ParamVector& w_prevprev,
         double alpha, double eta, bool rectified) {
        return fedfor_reg_term(w, w_prev, w_prevprev, alpha, eta, rectified);
      },
      py::arg("w"), py::arg("w_prev"), py::arg("w_prevprev"), py::arg("alpha"),
      py::arg("eta"), py::arg("rectified") = true);
  m.def("compute_fisher_diag", &compute_fisher_diag, py::arg("params"), py::arg("data"),
        py::arg("spec"));

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("features", &Dataset::features)
      .def_readwrite("labels", &Dataset::labels)
      .def_readwrite("dim", &Dataset::dim)
      .def_readwrite("num_classes", &Dataset::num_classes)
      .def("n", &Dataset::n)
      .def("to_batch", &Dataset::to_batch);

  m.def("gen_synthetic", &gen_synthetic, py::arg("num_classes"), py::arg("dim"),
        py::arg("n_per_class"), py::arg("seed"));
  m.def(
      "partition_prior_shift",
      [](const Dataset& d, std::uint64_t seed, double imbalance_ratio, double sample_fraction) {
        ShiftConfig cfg;
        cfg.imbalance_ratio = imbalance_ratio;
        cfg.sample_fraction = sample_fraction;
        auto shard = partition_prior_shift(d, seed, cfg);
        return py::make_tuple(shard.data, shard.meta.class_order);
      },
      py::arg("dataset"), py::arg("client_seed"), py::arg("imbalance_ratio") = 0.01,
      py::arg("sample_fraction") = 0.1);
  m.def("load_table", &load_table, py::arg("path"));
  m.def("save_table", &save_table, py::arg("dataset"), py::arg("path"));

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_readonly("rounds", &ExperimentConfig::rounds)
      .def_readonly("out_dir", &ExperimentConfig::out_dir)
      .def("digest", &ExperimentConfig::digest)
      .def("serialize", &ExperimentConfig::serialize);

  m.def("parse_config", &parse_config, py::arg("text"));
  m.def("parse_config_file", &parse_config_file, py::arg("path"));
  m.def("run_experiment", &run_experiment, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "run_single",
      [](const ExperimentConfig& cfg, const std::string& method, std::uint64_t seed) {
        auto m_ = method_from_name(method);
        if (!m_) throw std::invalid_argument("unknown method " + method);
        RunHistory h;
        {
          py::gil_scoped_release release;
          h = run_single(cfg, *m_, seed);
        }
        py::list rounds;
        for (const auto& r : h.rounds) {
          py::dict d;
          d["round"] = r.round;
          d["val_acc"] = r.val_acc;
          d["s2c_floats"] = r.s2c_floats;
          d["c2s_floats"] = r.c2s_floats;
          d["labelmap_version"] = r.labelmap_version;
          rounds.append(d);
        }
        return rounds;
      },
      py::arg("config"), py::arg("method"), py::arg("seed"));
}
