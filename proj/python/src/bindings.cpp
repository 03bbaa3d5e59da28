#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>

#include "uqih/cli.hpp"
#include "uqih/cwssim.hpp"
#include "uqih/fid.hpp"
#include "uqih/image.hpp"
#include "uqih/preprocess.hpp"
#include "uqih/protocol.hpp"
#include "uqih/uq.hpp"

namespace py = pybind11;
using namespace uqih;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) arrays map to images.
Image to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw InvalidArgument("expected a 2-D or 3-D array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  return Image(w, h, c, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Image& img) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (img.channels() > 1) shape.push_back(img.channels());
  Array out(shape);
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

// (M, H, W) or (M, H, W, C) arrays map to sample stacks.
uq::SampleStack to_stack(const Array& a) {
  if (a.ndim() != 3 && a.ndim() != 4) throw InvalidArgument("expected a stack of shape (M, H, W[, C])");
  const auto m = a.shape(0);
  const auto per = static_cast<std::size_t>(a.size() / std::max<py::ssize_t>(m, 1));
  const int h = static_cast<int>(a.shape(1));
  const int w = static_cast<int>(a.shape(2));
  const int c = a.ndim() == 4 ? static_cast<int>(a.shape(3)) : 1;
  uq::SampleStack s{"stack", {}, uq::StackKind::McDropout, {}};
  for (py::ssize_t i = 0; i < m; ++i) {
    const double* p = a.data() + i * per;
    s.samples.emplace_back(w, h, c, std::vector<double>(p, p + per));
  }
  return s;
}

std::vector<Image> to_images(const std::vector<Array>& arrays) {
  std::vector<Image> out;
  for (const auto& a : arrays) out.push_back(to_image(a));
  return out;
}

}  // namespace

PYBIND11_MODULE(_uqih, m) {
  m.doc() = "Uncertainty calibration harness for unpaired image translation";

  // Translators run newest first, so subclasses are registered after the base.
  auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", error.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", error.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", error.ptr());

  m.def("normalize_minmax", [](const Array& a) { return to_array(normalize_minmax(to_image(a)).value); },
        py::arg("image"));
  m.def("add_gaussian_noise",
        [](const Array& a, double level, std::uint64_t seed) { return to_array(add_gaussian_noise(to_image(a), level, seed)); },
        py::arg("image"), py::arg("level_percent"), py::arg("seed"));

  m.def("otsu_threshold", [](const Array& a, int bins) { return preprocess::otsu_threshold(to_image(a), bins).value; },
        py::arg("image"), py::arg("bins") = 256);
  m.def(
      "parse_patches",
      [](const Array& a, int patch_size, int stride, double fill, int canvas) {
        const preprocess::PatchSpec spec{patch_size, stride, fill, canvas};
        py::list out;
        for (const auto& p : preprocess::parse_patches(to_image(a), spec)) {
          out.append(py::make_tuple(p.row, p.col, to_array(p.image)));
        }
        return out;
      },
      py::arg("image"), py::arg("patch_size") = 256, py::arg("stride") = 246, py::arg("fill_threshold") = 0.99,
      py::arg("canvas") = 2224);

  m.def("sqrtm_psd", &fid::sqrtm_psd, py::arg("matrix"));
  m.def(
      "frechet_distance",
      [](Eigen::VectorXd mu1, Eigen::MatrixXd s1, Eigen::VectorXd mu2, Eigen::MatrixXd s2) {
        return fid::frechet_distance({std::move(mu1), std::move(s1)}, {std::move(mu2), std::move(s2)});
      },
      py::arg("mu1"), py::arg("sigma1"), py::arg("mu2"), py::arg("sigma2"));
  m.def(
      "embed_toy",
      [](const std::vector<Array>& images, int projection, std::uint64_t seed) {
        return fid::embed_toy(to_images(images), projection, seed).matrix;
      },
      py::arg("images"), py::arg("projection") = 0, py::arg("seed") = 0);
  m.def(
      "fid_embeddings",
      [](Eigen::MatrixXd real, Eigen::MatrixXd generated) {
        return fid::fid(fid::EmbeddingSet{std::move(real), "external"}, fid::EmbeddingSet{std::move(generated), "external"},
                        nullptr);
      },
      py::arg("real"), py::arg("generated"));
  m.def(
      "fid_images",
      [](const std::vector<Array>& real, const std::vector<Array>& generated, const std::string& provider) {
        const auto p = cli::make_provider(provider);
        return fid::fid(to_images(real), to_images(generated), p.get());
      },
      py::arg("real"), py::arg("generated"), py::arg("provider") = "toy-8x8");

  m.def(
      "cwssim",
      [](const Array& a, const Array& b, int levels, int orientations, int window, double k) {
        return cwssim::cwssim(to_image(a), to_image(b), {levels, orientations, window, k});
      },
      py::arg("a"), py::arg("b"), py::arg("levels") = 4, py::arg("orientations") = 6, py::arg("window") = 7,
      py::arg("stability_k") = 0.01);

  m.def("pixelwise_std", [](const Array& stack) { return to_array(uq::pixelwise_std(to_stack(stack))); },
        py::arg("stack"));
  m.def("psd", [](const Array& sigma) { return uq::psd(to_image(sigma)); }, py::arg("sigma_map"));
  m.def(
      "register_translation",
      [](const Array& moving, const Array& fixed, int max_shift) {
        const auto s = uq::register_translation(to_image(moving), to_image(fixed), max_shift).value;
        return py::make_tuple(s.dy, s.dx);
      },
      py::arg("moving"), py::arg("fixed"), py::arg("max_shift") = 10);
  m.def(
      "evaluate_stacks",
      [](const std::string& manifest, bool align, int crop) {
        uq::EvaluateOptions opts;
        opts.align = align;
        opts.align_opts.crop = crop;
        const auto r = uq::evaluate_stacks(manifest, opts);
        py::dict psds;
        for (const auto& rec : r.records) psds[py::str(rec.source_id)] = rec.psd;
        return py::make_tuple(r.mpsd, psds);
      },
      py::arg("manifest"), py::arg("align") = false, py::arg("crop") = 5);

  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return protocol::pearson(x, y); },
        py::arg("xs"), py::arg("ys"));
  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return protocol::spearman(x, y); },
        py::arg("xs"), py::arg("ys"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        const int code = cli::run(args);
        std::cout.flush();
        return code;
      },
      py::arg("args"));
}
