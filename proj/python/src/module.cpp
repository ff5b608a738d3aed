// Copyright 2026 The qbit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>

#include "qbit/bittensor.hpp"
#include "qbit/config.hpp"
#include "qbit/deploy.hpp"
#include "qbit/error.hpp"
#include "qbit/experiment.hpp"
#include "qbit/network.hpp"
#include "qbit/quant.hpp"
#include "qbit/schedule.hpp"
#include "qbit/serialize.hpp"

namespace py = pybind11;
using qbit::QuantizedTensor;
using qbit::RealTensor;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

RealTensor to_tensor(const Array& a) {
  qbit::Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<double> values(a.data(), a.data() + a.size());
  return RealTensor(std::move(shape), std::move(values));
}

py::array_t<double> to_array(const RealTensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::memcpy(out.mutable_data(), t.data(), t.size() * sizeof(double));
  return out;
}

qbit::Signedness parse_signedness(const std::string& s) {
  if (s == "unit") return qbit::Signedness::Unit;
  if (s == "symmetric_odd") return qbit::Signedness::SymmetricOdd;
  if (s == "binary") return qbit::Signedness::Binary;
  throw qbit::InvalidArgument("unknown signedness '" + s + "'");
}

std::string signedness_name(qbit::Signedness s) {
  switch (s) {
    case qbit::Signedness::Unit: return "unit";
    case qbit::Signedness::SymmetricOdd: return "symmetric_odd";
    case qbit::Signedness::Binary: return "binary";
  }
  return "unit";
}

py::dict size_report(const std::string& arch, const std::string& schedule, int baseline,
                     int k_a) {
  const qbit::NetworkDef net = qbit::parse_architecture(qbit::ConfigFile::load(arch));
  const auto groups = net.weight_groups();
  const auto s = qbit::assign_schedule(groups, qbit::parse_schedule_string(schedule), k_a);
  const auto r = qbit::size_report(s, qbit::quantized_counts(groups), baseline);
  py::list layers;
  for (const auto& l : r.layers) {
    layers.append(py::dict(py::arg("name") = l.name, py::arg("params") = l.params,
                           py::arg("k_w") = l.k_w, py::arg("bytes") = l.bytes));
  }
  py::list violations;
  for (const auto& v : qbit::validate_schedule(s)) violations.append(v.message);
  return py::dict(py::arg("layers") = layers, py::arg("average_bits") = r.average_bits,
                  py::arg("average_bits_rounded") = r.average_bits_rounded,
                  py::arg("total_bytes") = r.total_bytes,
                  py::arg("baseline_bytes") = r.baseline_bytes, py::arg("savings") = r.savings,
                  py::arg("violations") = violations,
                  py::arg("table") = qbit::format_size_report(r));
}

qbit::PackedModel init_model(const std::string& arch, const std::string& schedule, int k_a,
                             std::uint64_t seed) {
  qbit::NetworkDef def = qbit::parse_architecture(qbit::ConfigFile::load(arch));
  qbit::apply_schedule_text(def, schedule, k_a);
  return qbit::deploy(qbit::Network(std::move(def), seed));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mixed-precision quantized network engine";

  py::object base = py::exception<std::runtime_error>(m, "QbitError");
  py::register_exception<qbit::ConfigError>(m, "ConfigError", base);
  py::register_exception<qbit::DatasetError>(m, "DatasetError", base);
  py::register_exception<qbit::FormatError>(m, "FormatError", base);
  py::register_exception<qbit::CorruptionError>(m, "CorruptionError", base);
  py::register_exception<qbit::NumericFailure>(m, "NumericFailure", base);

  py::class_<QuantizedTensor>(m, "QuantizedTensor")
      .def_property_readonly("shape", [](const QuantizedTensor& q) { return q.shape; })
      .def_property_readonly("bits", [](const QuantizedTensor& q) { return q.bits; })
      .def_property_readonly("signedness",
                             [](const QuantizedTensor& q) { return signedness_name(q.signedness); })
      .def_property_readonly("scales", [](const QuantizedTensor& q) { return q.scales; })
      .def_property_readonly("codes",
                             [](const QuantizedTensor& q) {
                               py::array_t<std::int32_t> out(std::vector<py::ssize_t>(
                                   q.shape.begin(), q.shape.end()));
                               std::memcpy(out.mutable_data(), q.codes.data(),
                                           q.codes.size() * sizeof(std::int32_t));
                               return out;
                             })
      .def("reconstruct", [](const QuantizedTensor& q) { return to_array(q.reconstruct()); })
      .def("pack",
           [](const QuantizedTensor& q) {
             const auto p = qbit::pack(q);
             return py::bytes(reinterpret_cast<const char*>(p.payload.data()), p.payload.size());
           })
      .def("__eq__", [](const QuantizedTensor& a, const QuantizedTensor& b) { return a == b; });

  m.def("unpack",
        [](py::bytes payload, const qbit::Shape& shape, int bits, const std::string& signedness,
           std::vector<double> scales) {
          qbit::PackedTensor p;
          p.shape = shape;
          p.bits = bits;
          p.signedness = parse_signedness(signedness);
          p.scales = std::move(scales);
          const std::string raw = payload;
          p.payload.assign(raw.begin(), raw.end());
          return qbit::unpack(p);
        },
        py::arg("payload"), py::arg("shape"), py::arg("bits"), py::arg("signedness"),
        py::arg("scales"));

  m.def("round_half_away", &qbit::round_half_away);
  m.def("binarize", [](const Array& x) { return qbit::binarize(to_tensor(x)); });
  m.def("binarize_channels", [](const Array& w) { return qbit::binarize_channels(to_tensor(w)); });
  m.def("quantize_unit", [](const Array& x, int bits) { return qbit::quantize_unit(to_tensor(x), bits); },
        py::arg("x"), py::arg("bits"));
  m.def("quantize_weights",
        [](const Array& w, int bits) { return qbit::quantize_weights(to_tensor(w), bits); },
        py::arg("w"), py::arg("bits"));
  m.def("quantize_activations",
        [](const Array& s, int bits) { return qbit::quantize_activations(to_tensor(s), bits); },
        py::arg("s"), py::arg("bits"));

  m.def("parse_schedule",
        [](const std::string& text) {
          const auto s = qbit::parse_schedule_string(text);
          return py::make_tuple(s.conv, s.fc);
        });
  m.def("size_report", &size_report, py::arg("arch"), py::arg("schedule"),
        py::arg("baseline") = 2, py::arg("activations") = 2);

  m.def("init_model", &init_model, py::arg("arch"), py::arg("schedule"),
        py::arg("activations") = 2, py::arg("seed") = 1,
        "Deploys a freshly initialized network (no training).");

  py::class_<qbit::PackedModel>(m, "Model")
      .def_static("load", [](const std::string& path) { return qbit::load_model(path); })
      .def_static("from_bytes",
                  [](py::bytes data) {
                    const std::string raw = data;
                    return qbit::decode_model(std::span<const std::uint8_t>(
                        reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
                  })
      .def("to_bytes",
           [](const qbit::PackedModel& model) {
             const auto b = qbit::encode_model(model);
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def("save", [](const qbit::PackedModel& model, const std::string& path) {
        qbit::save_model(model, path);
      })
      .def_property_readonly("input_shape", [](const qbit::PackedModel& model) { return model.input; })
      .def_property_readonly("classes", [](const qbit::PackedModel& model) { return model.classes; })
      .def_property_readonly("payload_bytes", &qbit::quantized_payload_bytes)
      .def("infer", [](const qbit::PackedModel& model, const Array& batch) {
        return to_array(qbit::infer(model, to_tensor(batch)));
      })
      .def("__eq__", [](const qbit::PackedModel& a, const qbit::PackedModel& b) { return a == b; });
}
