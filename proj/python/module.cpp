#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "s2fp8/codec.hpp"
#include "s2fp8/error.hpp"
#include "s2fp8/experiment.hpp"
#include "s2fp8/float_format.hpp"

namespace py = pybind11;
using namespace s2fp8;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) shape = {1};
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t, const std::vector<py::ssize_t>& shape) {
  FloatArray out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<py::ssize_t> shape_of(const FloatArray& a) { return {a.shape(), a.shape() + a.ndim()}; }

py::dict stats_dict(const S2Stats& s) {
  py::dict d;
  d["mu"] = s.mu;
  d["m"] = s.m;
  d["alpha"] = s.alpha;
  d["beta"] = s.beta;
  d["n_nonzero"] = s.n_nonzero;
  d["target_max"] = s.target_max;
  return d;
}

}  // namespace

PYBIND11_MODULE(_s2fp8, m) {
  m.doc() = "Shifted-and-squeezed FP8 codec and training simulator";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "truncate_rne",
      [](const FloatArray& x, int exp_bits, int man_bits) {
        return to_array(truncate_tensor(to_tensor(x), FloatFormat(exp_bits, man_bits)), shape_of(x));
      },
      py::arg("x"), py::arg("exp_bits") = 5, py::arg("man_bits") = 2);

  m.def("compute_statistics", [](const FloatArray& x, double target_max) {
    return stats_dict(compute_statistics(to_tensor(x), target_max));
  }, py::arg("x"), py::arg("target_max") = kDefaultTargetMax);

  m.def(
      "s2fp8_truncate",
      [](const FloatArray& x, double target_max) {
        return to_array(s2fp8_truncate(to_tensor(x), target_max), shape_of(x));
      },
      py::arg("x"), py::arg("target_max") = kDefaultTargetMax);

  // (codes, stats); codes keep the input shape
  m.def(
      "encode",
      [](const FloatArray& x, double target_max) {
        const S2Encoded e = encode(to_tensor(x), target_max);
        py::array_t<std::uint8_t> codes(shape_of(x));
        std::copy(e.codes.begin(), e.codes.end(), codes.mutable_data());
        return py::make_tuple(codes, stats_dict(e.stats));
      },
      py::arg("x"), py::arg("target_max") = kDefaultTargetMax);

  m.def(
      "decode",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& codes, double alpha, double beta,
         double target_max) {
        S2Encoded e;
        e.stats.alpha = alpha;
        e.stats.beta = beta;
        e.stats.target_max = target_max;
        e.codes.assign(codes.data(), codes.data() + codes.size());
        for (std::uint8_t c : e.codes) e.stats.n_nonzero += (c & 0x7f) != 0;
        Shape shape(codes.shape(), codes.shape() + codes.ndim());
        if (shape.empty()) shape = {1};
        e.shape = shape;
        return to_array(decode(e), {codes.shape(), codes.shape() + codes.ndim()});
      },
      py::arg("codes"), py::arg("alpha"), py::arg("beta"), py::arg("target_max") = kDefaultTargetMax);

  m.def("format_table", [] { return format_table(); });

  m.def("format_properties", [](int exp_bits, int man_bits) {
    const FormatProperties p = format_properties(FloatFormat(exp_bits, man_bits));
    py::dict d;
    for (const auto& [key, value] : {std::pair{"min_subnormal", p.min_subnormal}, std::pair{"min_normal", p.min_normal},
                                     std::pair{"max_normal", p.max_normal},
                                     std::pair{"machine_epsilon", p.machine_epsilon}}) {
      d[key] = value.to_double();
      d[(std::string(key) + "_text").c_str()] = value.to_string();
    }
    d["range_log2"] = p.range_log2;
    return d;
  }, py::arg("exp_bits"), py::arg("man_bits"));

  // config as a JSON string; returns summary.json as a string
  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::string& out_dir) {
        const ExperimentConfig config = parse_config(nlohmann::json::parse(config_json));
        py::gil_scoped_release release;
        return run_experiment(config, out_dir).summary.dump();
      },
      py::arg("config_json"), py::arg("out_dir") = "");

  m.def("checkgrad", [](const std::string& config_json) {
    const GradcheckRun r = run_checkgrad(parse_config(nlohmann::json::parse(config_json)));
    py::dict d;
    d["passed"] = r.report.passed;
    d["max_relative_error"] = r.report.max_relative_error;
    d["checked"] = r.report.checked;
    d["parameters"] = r.parameters;
    return d;
  }, py::arg("config_json"));
}
