#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lamnet/analysis.hpp"
#include "lamnet/image.hpp"
#include "lamnet/model.hpp"

namespace py = pybind11;
using namespace lamnet;

namespace {

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_numpy(const NpArray& a, DType dtype = DType::f64) {
  if (a.ndim() != 4) throw std::invalid_argument("expected a 4-d (N,C,H,W) array");
  Shape4 s{a.shape(0), a.shape(1), a.shape(2), a.shape(3)};
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor::from_data(s, std::move(data), dtype);
}

py::array numpy_from_tensor(const Tensor& t) {
  const Shape4 s = t.shape();
  py::array_t<double> out({s.n, s.c, s.h, s.w});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Arch arch_from_name(const std::string& name) {
  if (name == "swinir") return Arch::swinir;
  if (name == "dlgsanet") return Arch::dlgsanet;
  if (name == "lamnet") return Arch::lamnet;
  throw std::invalid_argument("unknown arch '" + name + "' (swinir, dlgsanet, lamnet)");
}

Part part_from_name(const std::string& name) {
  if (name == "mixer") return Part::mixer;
  if (name == "ffn") return Part::ffn;
  if (name == "total") return Part::total;
  throw std::invalid_argument("unknown part '" + name + "' (mixer, ffn, total)");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "focal-attention super-resolution core";

  m.def(
      "kernel_len",
      [](std::vector<int64_t> strides, std::vector<int64_t> steps) {
        return kernel_len(FocalSpec{std::move(strides), std::move(steps)});
      },
      py::arg("strides"), py::arg("steps"),
      "Number of agent slots K = 1 + 2*sum(steps).");
  m.def(
      "receptive_field",
      [](std::vector<int64_t> strides, std::vector<int64_t> steps) {
        return receptive_field(FocalSpec{std::move(strides), std::move(steps)});
      },
      py::arg("strides"), py::arg("steps"),
      "Pixel span R = 1 + 2*sum(strides*steps) covered by the K slots.");

  m.def(
      "closed_form",
      [](const std::string& arch, const std::string& part, int64_t c, int64_t k, int64_t g,
         int64_t h, int64_t w) {
        Cost cost = closed_form(arch_from_name(arch), part_from_name(part), c, k, g, h, w);
        py::dict out;
        out["params"] = cost.params;
        out["flops"] = cost.flops;
        return out;
      },
      py::arg("arch"), py::arg("part"), py::arg("c"), py::arg("k"), py::arg("g") = 4,
      py::arg("h") = 720, py::arg("w") = 1280,
      "Per-layer parameter and FLOP cost of one mixer + FFN pair.");

  py::class_<Model>(m, "Model")
      .def_property_readonly("scale", [](const Model& mo) { return mo.config.scale; })
      .def_property_readonly("channels", [](const Model& mo) { return mo.config.channels; })
      .def("parameter_count", &Model::parameter_count, py::arg("include_bias") = true,
           py::arg("include_norm") = true)
      .def(
          "forward",
          [](const Model& mo, const NpArray& x) {
            return numpy_from_tensor(mo.forward(tensor_from_numpy(x, mo.config.dtype)));
          },
          py::arg("x"), "Upscale a (N,3,H,W) array in [0,1].")
      .def("save", [](const Model& mo, const std::string& path) { save(mo, path); },
           py::arg("path"));

  m.def(
      "build_model",
      [](int64_t scale, int64_t channels, int64_t num_blocks, int64_t pairs_per_block,
         int64_t groups, uint64_t seed) {
        LamNetConfig cfg;
        cfg.scale = scale;
        cfg.channels = channels;
        cfg.num_blocks = num_blocks;
        cfg.pairs_per_block = pairs_per_block;
        cfg.groups = groups;
        return build(cfg, seed);
      },
      py::arg("scale") = 2, py::arg("channels") = 64, py::arg("num_blocks") = 4,
      py::arg("pairs_per_block") = 4, py::arg("groups") = 4, py::arg("seed") = 0);
  m.def("load_model", [](const std::string& path) { return load(path); }, py::arg("path"));

  m.def(
      "bicubic_resize",
      [](const NpArray& img, int64_t out_h, int64_t out_w) {
        return numpy_from_tensor(bicubic_resize(tensor_from_numpy(img), out_h, out_w));
      },
      py::arg("img"), py::arg("out_h"), py::arg("out_w"));
  m.def(
      "rgb_to_y",
      [](const NpArray& img) { return numpy_from_tensor(rgb_to_y(tensor_from_numpy(img))); },
      py::arg("img"));
  m.def(
      "psnr",
      [](const NpArray& a, const NpArray& b, int64_t shave) {
        return psnr(tensor_from_numpy(a), tensor_from_numpy(b), shave);
      },
      py::arg("a"), py::arg("b"), py::arg("shave") = 0);
  m.def(
      "ssim",
      [](const NpArray& a, const NpArray& b) {
        return ssim(tensor_from_numpy(a), tensor_from_numpy(b));
      },
      py::arg("a"), py::arg("b"));
}
