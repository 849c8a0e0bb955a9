#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "r2dl/checkpoint.hpp"
#include "r2dl/errors.hpp"
#include "r2dl/experiment.hpp"
#include "r2dl/numerics.hpp"
#include "r2dl/reprogram.hpp"
#include "r2dl/sparse_coding.hpp"

namespace py = pybind11;
using namespace r2dl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Vector to_vector(const Array& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-d array");
  return Vector(a.data(), a.data() + a.shape(0));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Array to_array(const Vector& v) {
  Array out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

KsvdConfig ksvd_config(double epsilon, std::size_t max_atoms, std::size_t sweeps, bool update_dictionary) {
  KsvdConfig cfg;
  cfg.epsilon = epsilon;
  cfg.max_atoms = max_atoms;
  cfg.sweeps = sweeps;
  cfg.update_dictionary = update_dictionary;
  return cfg;
}

ExperimentConfig config_from(const std::string& json_text) {
  return json_text.empty() ? default_experiment_config() : parse_experiment_config(json_text);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sparse-coding model reprogramming core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<NumericError>(m, "NumericError", base);
  py::register_exception<IndexError>(m, "IndexError", base);
  py::register_exception<InvalidDictionaryError>(m, "InvalidDictionaryError", base);
  py::register_exception<DegenerateDataError>(m, "DegenerateDataError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<FormatError>(m, "FormatError", base);

  m.def("softmax", [](const Array& z) { return to_array(softmax(to_vector(z))); });
  m.def("thin_svd", [](const Array& a) {
    const auto s = thin_svd(to_matrix(a));
    return py::make_tuple(to_array(s.u), to_array(s.singular_values), to_array(s.vt));
  }, "Returns (U, s, Vt) with A = U diag(s) Vt.");

  m.def("normalize_dictionary", [](const Array& raw) {
    const auto n = Dictionary::normalize(to_matrix(raw));
    return py::make_tuple(to_array(n.dictionary.atoms()), to_array(n.norms));
  }, "Unit-norm atoms and the original column norms.");

  m.def("omp_encode",
        [](const Array& atoms, const Array& signal, double epsilon, std::size_t max_atoms) {
          const Dictionary dict(to_matrix(atoms));
          const auto code = omp_encode(dict, to_vector(signal), ksvd_config(epsilon, max_atoms, 1, false));
          py::dict out;
          out["support"] = code.support;
          out["coefficients"] = to_array(code.coefficients);
          out["residual_norm"] = code.residual_norm;
          out["dense"] = to_array(code.densify(dict.num_atoms()));
          return out;
        },
        py::arg("atoms"), py::arg("signal"), py::arg("epsilon") = 0.045, py::arg("max_atoms") = 8);

  m.def("ksvd_run",
        [](const Array& signals, const Array& atoms, double epsilon, std::size_t max_atoms, std::size_t sweeps,
           bool update_dictionary) {
          const auto r = ksvd_run(to_matrix(signals), Dictionary(to_matrix(atoms)),
                                  ksvd_config(epsilon, max_atoms, sweeps, update_dictionary));
          return py::make_tuple(to_array(r.dictionary.atoms()), to_array(r.codes), r.error_trace);
        },
        py::arg("signals"), py::arg("atoms"), py::arg("epsilon") = 0.045, py::arg("max_atoms") = 8,
        py::arg("sweeps") = 100, py::arg("update_dictionary") = false,
        "Returns (atoms, codes, error_trace).");

  m.def("codes_to_theta", [](const Array& codes, const Array& norms) {
    return to_array(codes_to_theta(to_matrix(codes), to_vector(norms)));
  });

  py::class_<ClassifierCheckpoint>(m, "SourceModel")
      .def_static("load", &load_classifier, py::arg("path"))
      .def_property_readonly("embeddings", [](const ClassifierCheckpoint& c) { return to_array(c.model.embeddings()); })
      .def_property_readonly("vocab", [](const ClassifierCheckpoint& c) { return c.vocab.tokens(); })
      .def_property_readonly("class_names", [](const ClassifierCheckpoint& c) { return c.class_names; })
      .def_property_readonly("architecture", [](const ClassifierCheckpoint& c) { return to_string(c.model.architecture()); })
      .def_property_readonly("fingerprint", [](const ClassifierCheckpoint& c) { return hex64(c.model.fingerprint()); })
      .def("logits", [](const ClassifierCheckpoint& c, const std::vector<std::size_t>& tokens) {
        return to_array(forward_tokens(c.model, tokens));
      });

  py::class_<ProgramCheckpoint>(m, "Program")
      .def_static("load", &load_program, py::arg("path"))
      .def_property_readonly("theta", [](const ProgramCheckpoint& p) { return to_array(p.program.theta); })
      .def_property_readonly("support_sizes", [](const ProgramCheckpoint& p) { return p.program.support_sizes; });

  m.def("train_source",
        [](const std::filesystem::path& out_dir, const std::string& config_json) {
          std::ostringstream log;
          const auto r = cmd_train_source(config_from(config_json), out_dir, log);
          py::dict out;
          out["train_accuracy"] = r.train_accuracy;
          out["valid_accuracy"] = r.valid_accuracy;
          out["test_accuracy"] = r.test_accuracy;
          out["majority_class_accuracy"] = r.majority_class_accuracy;
          return out;
        },
        py::arg("out_dir"), py::arg("config_json") = "");

  m.def("reprogram",
        [](const std::filesystem::path& source, const std::filesystem::path& out_dir, const std::string& config_json) {
          std::ostringstream log;
          const auto r = cmd_reprogram(config_from(config_json), source, out_dir, log);
          py::dict out;
          out["train_accuracy"] = r.train_accuracy;
          out["valid_accuracy"] = r.valid_accuracy;
          out["test_accuracy"] = r.test_accuracy;
          out["random_theta_test_accuracy"] = r.random_theta_test_accuracy;
          out["best_iteration"] = r.best_iteration;
          out["source_checkpoint_unchanged"] = r.source_checkpoint_unchanged;
          return out;
        },
        py::arg("source"), py::arg("out_dir"), py::arg("config_json") = "");

  m.def("evaluate",
        [](const std::filesystem::path& program, const std::filesystem::path& source,
           const std::filesystem::path& dataset) {
          std::ostringstream log;
          const auto r = cmd_eval(program, source, dataset, {}, std::nullopt, log);
          py::dict out;
          out["accuracy"] = r.evaluation.accuracy;
          out["size"] = r.size;
          out["confusion"] = r.evaluation.confusion;
          return out;
        },
        py::arg("program"), py::arg("source"), py::arg("dataset"));
}
