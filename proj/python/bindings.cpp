#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <sstream>

#include "fpnseg/checkpoint.hpp"
#include "fpnseg/cli.hpp"
#include "fpnseg/error.hpp"
#include "fpnseg/inference.hpp"
#include "fpnseg/kernels.hpp"
#include "fpnseg/loss.hpp"
#include "fpnseg/mask_codec.hpp"
#include "fpnseg/model.hpp"
#include "fpnseg/run_config.hpp"
#include "fpnseg/synth.hpp"

namespace py = pybind11;
using namespace fpnseg;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
BasicTensor<T> to_tensor(const Array<T>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return BasicTensor<T>(shape, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
Array<T> to_array(const BasicTensor<T>& t) {
  Array<T> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::memcpy(out.mutable_data(), t.ptr(), sizeof(T) * static_cast<size_t>(t.numel()));
  return out;
}

LabelMap to_labels(const Array<uint8_t>& a) {
  if (a.ndim() != 2) throw ShapeError("label map must be 2-D");
  LabelMap m(a.shape(0), a.shape(1));
  std::memcpy(m.labels.data(), a.data(), m.labels.size());
  m.validate();
  return m;
}

Array<uint8_t> from_labels(const LabelMap& m) {
  Array<uint8_t> out({m.height, m.width});
  std::memcpy(out.mutable_data(), m.labels.data(), m.labels.size());
  return out;
}

RgbImage to_rgb(const Array<uint8_t>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("RGB image must be H x W x 3");
  RgbImage img(a.shape(0), a.shape(1));
  std::memcpy(img.pixels.data(), a.data(), img.pixels.size());
  return img;
}

Array<uint8_t> from_rgb(const RgbImage& img) {
  Array<uint8_t> out({img.height, img.width, int64_t{3}});
  std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size());
  return out;
}

Tensor onehot_of(const Array<uint8_t>& labels) {
  if (labels.ndim() != 3) throw ShapeError("labels must be N x H x W");
  std::vector<LabelMap> maps;
  for (py::ssize_t n = 0; n < labels.shape(0); ++n) {
    LabelMap m(labels.shape(1), labels.shape(2));
    std::memcpy(m.labels.data(), labels.data(n, 0, 0), m.labels.size());
    m.validate();
    maps.push_back(std::move(m));
  }
  std::vector<const LabelMap*> ptrs;
  for (const auto& m : maps) ptrs.push_back(&m);
  return onehot_batch(ptrs);
}

// A model together with the configuration it was built from.
struct PyModel {
  RunConfig config;
  ModelState state;

  static PyModel build(const std::map<std::string, std::string>& settings, uint64_t seed) {
    PyModel m;
    KeyValues kv(settings.begin(), settings.end());
    apply_key_values(m.config, kv);
    m.config.validate();
    m.state = build_model(m.config.model, RngStream(seed).derive("model"));
    return m;
  }

  static PyModel load(const std::filesystem::path& path) {
    Checkpoint c = load_checkpoint(path);
    return PyModel{std::move(c.config), std::move(c.model)};
  }
};

}  // namespace

PYBIND11_MODULE(_fpnseg, m) {
  m.doc() = "Feature pyramid network land-cover segmentation";

  auto base = py::register_exception<Error>(m, "FpnsegError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ValueError>(m, "InvalidValueError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

  py::list names, colors;
  for (const auto& e : kClassTable) {
    names.append(std::string(e.name));
    colors.append(py::make_tuple(e.color.r, e.color.g, e.color.b));
  }
  m.attr("CLASS_NAMES") = py::tuple(names);
  m.attr("CLASS_COLORS") = py::tuple(colors);

  m.def("decode_mask", [](const Array<uint8_t>& rgb) { return from_labels(decode_mask(to_rgb(rgb))); },
        py::arg("rgb"), "H x W x 3 colour mask to H x W class indices.");
  m.def("encode_mask", [](const Array<uint8_t>& labels) { return from_rgb(encode_mask(to_labels(labels))); },
        py::arg("labels"), "H x W class indices to H x W x 3 colour mask.");

  m.def("softmax", [](const Array<float>& logits) {
    return to_array(kernels::softmax_channels(to_tensor(logits)));
  }, py::arg("logits"), "Softmax over axis 1 of an N x C x H x W array.");
  m.def("soft_jaccard", [](const Array<float>& probs, const Array<uint8_t>& labels) {
    return soft_jaccard_value(to_tensor(probs), onehot_of(labels));
  }, py::arg("probs"), py::arg("labels"));
  m.def("cross_entropy", [](const Array<float>& probs, const Array<uint8_t>& labels) {
    return cross_entropy_value(to_tensor(probs), onehot_of(labels));
  }, py::arg("probs"), py::arg("labels"));
  m.def("combined_loss", [](const Array<double>& logits, const Array<uint8_t>& labels,
                            double alpha, double beta) {
    LossWeights w;
    w.alpha = alpha;
    w.beta = beta;
    NoGradGuard guard;
    const Tensor64 target = onehot_of(labels).cast<double>();
    return combined_loss(Var<double>::leaf(to_tensor(logits)), target, w).value()[0];
  }, py::arg("logits"), py::arg("labels"), py::arg("alpha") = 1.0, py::arg("beta") = 0.5);
  m.def("iou", [](const Array<uint8_t>& pred, const Array<uint8_t>& truth) {
    const IoUReport r = eval_iou(to_labels(pred), to_labels(truth));
    py::list per_class;
    for (const auto& v : r.per_class) per_class.append(v ? py::cast(*v) : py::none());
    return py::make_tuple(per_class, r.mean);
  }, py::arg("pred"), py::arg("truth"), "Per-class IoU (None when undefined) and their mean.");

  m.def("conv2d", [](const Array<double>& x, const Array<double>& w,
                     std::optional<Array<double>> b, int64_t stride, int64_t padding) {
    std::optional<Tensor64> bias;
    if (b) bias = to_tensor(*b);
    return to_array(kernels::conv2d(to_tensor(x), to_tensor(w), bias ? &*bias : nullptr,
                                    stride, padding));
  }, py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("stride") = 1,
     py::arg("padding") = 0);
  m.def("pad_to_multiple", [](const Array<float>& image, int64_t multiple) {
    const PaddedImage p = pad_to_multiple(to_tensor(image), multiple);
    return py::make_tuple(to_array(p.image), py::make_tuple(p.top, p.bottom, p.left, p.right));
  }, py::arg("image"), py::arg("multiple") = 32,
     "Reflection-pads a C x H x W array; returns it with (top, bottom, left, right).");
  m.def("rotate90", [](const Array<float>& t, int k) { return to_array(rotate90(to_tensor(t), k)); },
        py::arg("array"), py::arg("k"));

  m.def("write_synth_dataset", &write_synth_dataset, py::arg("directory"), py::arg("count") = 8,
        py::arg("size") = 96, py::arg("seed") = 0);
  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "fpnseg");
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs a command-line invocation; returns (exit code, stdout, stderr).");

  py::class_<PyModel>(m, "Model")
      .def(py::init(&PyModel::build), py::arg("settings") = std::map<std::string, std::string>{},
           py::arg("seed") = 0,
           "Builds a freshly initialised model from dotted config keys, e.g. "
           "{'model.preset': 'tiny'}.")
      .def_static("load", &PyModel::load, py::arg("path"))
      .def("save", [](const PyModel& self, const std::filesystem::path& path) {
        save_checkpoint(path, self.state, self.config);
      }, py::arg("path"))
      .def("predict", [](PyModel& self, const Array<float>& image, bool tta) {
        const Tensor x = to_tensor(image);
        Tensor p;
        {
          py::gil_scoped_release release;
          p = tta ? tta_predict(self.state, x) : predict(self.state, x);
        }
        return to_array(p);
      }, py::arg("image"), py::arg("tta") = false,
         "Class probabilities 7 x H x W for a 3 x H x W image in [0, 1].")
      .def("forward", [](PyModel& self, const Array<float>& batch) {
        RngStream unused(0);
        return to_array(forward(self.state, to_tensor(batch), Mode::Eval, unused));
      }, py::arg("batch"), "Eval-mode logits for an N x 3 x H x W batch.")
      .def_property_readonly("config", [](const PyModel& self) {
        std::map<std::string, std::string> out;
        for (auto& [k, v] : self.config.items()) out[k] = v;
        return out;
      })
      .def_property_readonly("step", [](const PyModel& self) { return self.state.step; })
      .def_property_readonly("parameter_count",
                             [](const PyModel& self) { return self.state.params.scalar_count(); })
      .def_property_readonly("parameter_names", [](const PyModel& self) {
        std::vector<std::string> out;
        for (const auto& p : self.state.params) out.push_back(p.name);
        return out;
      })
      .def("parameter", [](const PyModel& self, const std::string& name) {
        return to_array(self.state.params.get(name).value);
      }, py::arg("name"));
}
