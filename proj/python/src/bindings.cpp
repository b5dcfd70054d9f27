#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dimma/brightnet.hpp"
#include "dimma/dimmer.hpp"
#include "dimma/errors.hpp"
#include "dimma/illumstats.hpp"
#include "dimma/image.hpp"
#include "dimma/mdn.hpp"
#include "dimma/metrics.hpp"
#include "dimma/retinex.hpp"
#include "dimma/seed.hpp"

namespace py = pybind11;
using namespace dimma;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Field field_from(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("expected an HxW or HxWxC array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Field f(h, w, c);
  std::copy(a.data(), a.data() + f.size(), f.values().begin());
  return f;
}

Image image_from(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected an HxWx3 array");
  return Image::from_field(field_from(a));
}

FloatArray to_array(const Field& f) {
  std::vector<py::ssize_t> shape{f.height(), f.width()};
  if (f.channels() != 1) shape.push_back(f.channels());
  FloatArray out(shape);
  std::copy(f.values().begin(), f.values().end(), out.mutable_data());
  return out;
}

FloatArray to_array(const Image& img) { return to_array(img.field()); }

std::vector<ImagePair> pairs_from(const std::vector<std::pair<FloatArray, FloatArray>>& pairs) {
  std::vector<ImagePair> out;
  for (const auto& [light, dark] : pairs) out.push_back({image_from(light), image_from(dark)});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "dimming and brightening pipeline for low-light images";

  static py::exception<Error> error(m, "DimmaError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  m.def("derive_seed", py::overload_cast<std::uint64_t, std::string_view>(&derive_seed), py::arg("master"),
        py::arg("role"));

  // imagecore
  m.def("load_image", [](const std::filesystem::path& p) { return to_array(load_image(p)); }, py::arg("path"));
  m.def("save_image", [](const FloatArray& a, const std::filesystem::path& p) { save_image(image_from(a), p); },
        py::arg("image"), py::arg("path"));
  m.def("hist_equalize", [](const FloatArray& a) { return to_array(hist_equalize(image_from(a))); },
        py::arg("image"));
  m.def("mean_lightness", [](const FloatArray& a) { return mean_lightness(image_from(a)); }, py::arg("image"));

  // retinex
  m.def(
      "decompose",
      [](const FloatArray& a, double eps) {
        const RetinexPair r = decompose(image_from(a), eps);
        return py::make_tuple(to_array(r.reflectance), to_array(r.illumination));
      },
      py::arg("image"), py::arg("epsilon") = kRetinexEpsilon);
  m.def(
      "recompose",
      [](const FloatArray& reflectance, const FloatArray& illumination) {
        return to_array(recompose(field_from(reflectance), field_from(illumination)));
      },
      py::arg("reflectance"), py::arg("illumination"));

  // illumstats
  py::class_<IlluminationStats>(m, "IlluminationStats")
      .def_property_readonly("mu", [](const IlluminationStats& s) { return std::vector<float>(s.mu.begin(), s.mu.end()); })
      .def_property_readonly("sigma",
                             [](const IlluminationStats& s) { return std::vector<float>(s.sigma.begin(), s.sigma.end()); })
      .def_property_readonly(
          "count", [](const IlluminationStats& s) { return std::vector<std::uint64_t>(s.count.begin(), s.count.end()); })
      .def_readonly("fitted", &IlluminationStats::fitted)
      .def("save", [](const IlluminationStats& s, const std::filesystem::path& p) { save_stats(s, p); })
      .def_static("load", &load_stats);
  m.def("fit_stats", [](const std::vector<std::pair<FloatArray, FloatArray>>& pairs) {
    return fit_stats(pairs_from(pairs));
  }, py::arg("pairs"));

  py::enum_<DimMode>(m, "DimMode")
      .value("STOCHASTIC", DimMode::kStochastic)
      .value("EXPECTATION", DimMode::kExpectation);
  py::class_<DimConfig>(m, "DimConfig")
      .def(py::init<>())
      .def_readwrite("gamma_min", &DimConfig::gamma_min)
      .def_readwrite("gamma_max", &DimConfig::gamma_max)
      .def_readwrite("alpha", &DimConfig::alpha)
      .def_readwrite("ratio_clamp_max", &DimConfig::ratio_clamp_max)
      .def_readwrite("seed", &DimConfig::seed)
      .def_readwrite("mode", &DimConfig::mode)
      .def("validate", &DimConfig::validate);

  // mdn
  py::class_<MDNConfig>(m, "MDNConfig")
      .def(py::init<>())
      .def_static("toy", &MDNConfig::toy)
      .def_readwrite("components", &MDNConfig::components)
      .def_readwrite("hidden_widths", &MDNConfig::hidden_widths)
      .def_readwrite("epochs", &MDNConfig::epochs)
      .def_readwrite("learning_rate", &MDNConfig::learning_rate)
      .def_readwrite("seed", &MDNConfig::seed)
      .def_readwrite("batch_pixels", &MDNConfig::batch_pixels)
      .def("validate", &MDNConfig::validate);
  py::class_<MDNParams>(m, "MDNParams")
      .def_readonly("config", &MDNParams::config)
      .def("parameter_count", &MDNParams::parameter_count)
      .def("save", [](const MDNParams& p, const std::filesystem::path& path) { save_mdn(p, path); })
      .def_static("load", &load_mdn);
  m.def("init_mdn", &init_mdn, py::arg("config"));
  m.def(
      "train_mdn",
      [](const std::vector<std::pair<FloatArray, FloatArray>>& pairs, const MDNConfig& config) {
        const auto images = pairs_from(pairs);
        MDNTrainResult r;
        {
          py::gil_scoped_release release;
          r = train_mdn(images, config);
        }
        return py::make_tuple(r.params, r.loss_history);
      },
      py::arg("pairs"), py::arg("config"));
  m.def(
      "mdn_pdf_curve",
      [](const MDNParams& p, const std::array<double, kMdnInputs>& probe, int channel, const std::vector<double>& grid) {
        std::vector<std::pair<double, double>> out;
        for (const auto& pt : mdn_pdf_curve(p, probe, channel, grid)) out.emplace_back(pt.value, pt.density);
        return out;
      },
      py::arg("params"), py::arg("probe"), py::arg("channel"), py::arg("grid"));

  // dimmer
  m.def(
      "dim_image",
      [](const FloatArray& light, const MDNParams& mdn, const IlluminationStats& stats, const DimConfig& config,
         std::uint64_t seed) {
        Rng rng(seed);
        const DimmedSample s = dim_image(image_from(light), mdn, stats, config, rng);
        py::dict out;
        out["dark"] = to_array(s.dark);
        out["delta_m"] = s.delta_m;
        out["gamma"] = s.gamma_used;
        return out;
      },
      py::arg("light"), py::arg("mdn"), py::arg("stats"), py::arg("config"), py::arg("seed"));

  // brightnet
  py::class_<NetConfig>(m, "NetConfig")
      .def(py::init<>())
      .def_static("full", &NetConfig::full)
      .def_static("toy", &NetConfig::toy)
      .def_readwrite("base_channels", &NetConfig::base_channels)
      .def_readwrite("channel_mult", &NetConfig::channel_mult)
      .def_readwrite("blocks_per_stage", &NetConfig::blocks_per_stage)
      .def_readwrite("attention_heads", &NetConfig::attention_heads)
      .def_readwrite("use_attention", &NetConfig::use_attention)
      .def_readwrite("use_norm", &NetConfig::use_norm)
      .def_readwrite("embed_dim", &NetConfig::embed_dim)
      .def_readwrite("zero_init_output", &NetConfig::zero_init_output)
      .def_readwrite("seed", &NetConfig::seed)
      .def("validate", &NetConfig::validate);
  py::class_<BrightNet>(m, "BrightNet")
      .def(py::init<const NetConfig&>(), py::arg("config"))
      .def_property_readonly("config", &BrightNet::config)
      .def("parameter_count", &BrightNet::parameter_count)
      .def(
          "enhance",
          [](const BrightNet& net, const FloatArray& dark, double delta_m) {
            const Image img = image_from(dark);
            EnhanceResult r;
            {
              py::gil_scoped_release release;
              r = net.enhance(img, delta_m);
            }
            return py::make_tuple(to_array(r.output), to_array(r.residual));
          },
          py::arg("dark"), py::arg("delta_m"))
      .def("save", &BrightNet::save)
      .def_static("load", &BrightNet::load);
  m.def("embed_lightness", &embed_lightness, py::arg("delta_m"), py::arg("embed_dim"));

  // metrics
  m.def("psnr", [](const FloatArray& a, const FloatArray& b) { return psnr(image_from(a), image_from(b)); });
  m.def("ssim", [](const FloatArray& a, const FloatArray& b) { return ssim_gray(image_from(a), image_from(b)); });
  m.def("ssim_rgb", [](const FloatArray& a, const FloatArray& b) { return ssim_rgb(image_from(a), image_from(b)); });
  m.def("delta_e", [](const FloatArray& a, const FloatArray& b) { return delta_e(image_from(a), image_from(b)); });
}
