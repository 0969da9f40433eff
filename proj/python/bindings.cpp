#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "snapspec/cli.hpp"
#include "snapspec/errors.hpp"
#include "snapspec/imaging.hpp"
#include "snapspec/manifest.hpp"
#include "snapspec/metrics.hpp"
#include "snapspec/selection.hpp"
#include "snapspec/spectra.hpp"
#include "snapspec/unfolding.hpp"

namespace py = pybind11;
using namespace snapspec;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Cubes cross the boundary as (H, W, bands) float64 arrays.
HyperCube to_cube(const Array& a, const std::vector<double>& grid = {}) {
  if (a.ndim() != 3) throw ShapeError("expected an (H, W, bands) array");
  const auto bands = static_cast<std::size_t>(a.shape(2));
  HyperCube c(a.shape(0), a.shape(1), grid.size() == bands ? grid : uniform_grid(bands));
  std::copy(a.data(), a.data() + a.size(), c.data.begin());
  return c;
}

Array from_cube(const HyperCube& c) {
  Array out({c.height, c.width, c.bands});
  std::copy(c.data.begin(), c.data.end(), out.mutable_data());
  return out;
}

Measurement to_measurement(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected an (H, W) array");
  Measurement m;
  m.height = a.shape(0);
  m.width = a.shape(1);
  m.y.assign(a.data(), a.data() + a.size());
  return m;
}

Array from_measurement(const Measurement& m) {
  Array out({m.height, m.width});
  std::copy(m.y.begin(), m.y.end(), out.mutable_data());
  return out;
}

Array square(const std::vector<double>& v, std::size_t n) {
  Array out({n, n});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

MetasurfaceDataset dataset_from_array(const Array& rows, std::optional<std::vector<double>> grid) {
  if (rows.ndim() != 2) throw ShapeError("expected an (N, bands) array");
  MetasurfaceDataset ds;
  ds.grid = grid ? *grid : uniform_grid(rows.shape(1));
  if (ds.grid.size() != static_cast<std::size_t>(rows.shape(1))) throw ShapeError("grid length != bands");
  ds.values.assign(rows.data(), rows.data() + rows.size());
  ds.provenance = "python";
  return ds;
}

}  // namespace

PYBIND11_MODULE(_snapspec, m) {
  m.doc() = "Metasurface filter selection and unfolding reconstruction for snapshot spectral imaging.";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  py::class_<MetasurfaceDataset>(m, "Spectra")
      .def(py::init(&dataset_from_array), py::arg("rows"), py::arg("grid") = std::nullopt)
      .def_property_readonly("grid", [](const MetasurfaceDataset& d) { return d.grid; })
      .def_property_readonly("values",
                             [](const MetasurfaceDataset& d) {
                               py::array_t<float> out({d.size(), d.bands()});
                               std::copy(d.values.begin(), d.values.end(), out.mutable_data());
                               return out;
                             })
      .def_readonly("provenance", &MetasurfaceDataset::provenance)
      .def("__len__", &MetasurfaceDataset::size)
      .def_property_readonly("bands", &MetasurfaceDataset::bands)
      .def("save", [](const MetasurfaceDataset& d, const std::filesystem::path& p) { save_spectra(d, p); });

  m.def(
      "generate_spectra",
      [](std::size_t count, std::size_t bands, std::uint64_t seed, double g_max, double r_min) {
        SyntheticSpectraOptions o;
        o.count = count;
        o.bands = bands;
        o.seed = seed;
        o.constraints.g_max = g_max;
        o.constraints.r_min = r_min;
        return generate_synthetic(o);
      },
      py::arg("count") = 1000, py::arg("bands") = 300, py::arg("seed") = 0, py::arg("g_max") = 0.08,
      py::arg("r_min") = 0.3);
  m.def("load_spectra", [](const std::filesystem::path& p) { return load_spectra(p); });
  m.def("pearson", [](const MetasurfaceDataset& d) { return square(pearson_stats(d).p, d.size()); },
        "N x N Pearson coefficient matrix.");

  py::class_<SelectionResult>(m, "Selection")
      .def_readonly("indices", &SelectionResult::indices)
      .def_readonly("theta", &SelectionResult::theta)
      .def_readonly("max_offdiag", &SelectionResult::max_offdiag)
      .def_readonly("converged", &SelectionResult::converged)
      .def_readonly("iterations", &SelectionResult::iterations)
      .def_property_readonly("pairwise", [](const SelectionResult& s) { return square(s.pairwise, s.k()); });

  m.def("select_fps", py::overload_cast<const MetasurfaceDataset&, std::size_t, bool>(&select_fps),
        py::arg("spectra"), py::arg("k"), py::arg("use_abs") = true);
  m.def(
      "select_innerproduct_baseline",
      [](const MetasurfaceDataset& d, std::size_t k, double tau, std::uint64_t seed, std::size_t max_iterations) {
        return select_innerproduct_baseline(d, k, InnerProductOptions{tau, seed, max_iterations});
      },
      py::arg("spectra"), py::arg("k"), py::arg("tau") = 0.9, py::arg("seed") = 0, py::arg("max_iterations") = 1000);
  m.def("brute_force_oracle", &brute_force_oracle, py::arg("spectra"), py::arg("k"),
        py::arg("budget") = 1'000'000);

  py::class_<FilterArray>(m, "FilterArray")
      .def_readonly("period", &FilterArray::period)
      .def_readonly("height", &FilterArray::height)
      .def_readonly("width", &FilterArray::width)
      .def_readonly("grid", &FilterArray::grid)
      .def("lipschitz", &FilterArray::lipschitz)
      .def_property_readonly("mosaic", [](const FilterArray& f) {
        Array out({f.height, f.width, f.bands()});
        std::copy(f.mosaic.begin(), f.mosaic.end(), out.mutable_data());
        return out;
      });

  m.def("build_mosaic", py::overload_cast<const MetasurfaceDataset&, std::size_t, std::size_t, std::size_t>(&build_mosaic),
        py::arg("theta"), py::arg("height"), py::arg("width"), py::arg("period"));
  m.def("build_mosaic", py::overload_cast<const SelectionResult&, std::size_t, std::size_t, std::size_t>(&build_mosaic),
        py::arg("selection"), py::arg("height"), py::arg("width"), py::arg("period"));

  m.def(
      "encode",
      [](const Array& x, const FilterArray& phi, double sigma, std::uint64_t seed) {
        return from_measurement(encode(to_cube(x, phi.grid), phi, sigma, seed));
      },
      py::arg("x"), py::arg("phi"), py::arg("sigma") = 0.0, py::arg("seed") = 0);
  m.def("adjoint", [](const Array& y, const FilterArray& phi) { return from_cube(adjoint(to_measurement(y), phi)); });
  m.def("init_estimate",
        [](const Array& y, const FilterArray& phi) { return from_cube(init_estimate(to_measurement(y), phi)); });
  m.def(
      "generate_scene",
      [](std::size_t height, std::size_t width, std::size_t bands, std::uint64_t seed) {
        return from_cube(generate_scene(SceneOptions{height, width, bands}, seed));
      },
      py::arg("height") = 32, py::arg("width") = 32, py::arg("bands") = 8, py::arg("seed") = 0);

  m.def("psnr", [](const Array& x, const Array& ref) { return psnr(to_cube(x), to_cube(ref)); },
        "PSNR in dB for data on [0, 1]; inf for identical inputs.");
  m.def("ssim", [](const Array& x, const Array& ref) { return ssim(to_cube(x), to_cube(ref)); });

  m.def(
      "reconstruct_classical",
      [](const Array& y, const FilterArray& phi, std::size_t stages, std::optional<double> rho, double threshold) {
        UnfoldingConfig c;
        c.stages = stages;
        c.rho_init = rho ? *rho : 1.0 / phi.lipschitz();
        c.prox = ProxKind::kSoftThreshold;
        c.threshold = threshold;
        const auto res = run_unfolding(to_measurement(y), phi, c);
        return py::make_tuple(from_cube(res.estimate), res.stage_fidelity);
      },
      py::arg("y"), py::arg("phi"), py::arg("stages") = 9, py::arg("rho") = std::nullopt, py::arg("threshold") = 0.0,
      "Soft-threshold unfolding; returns (estimate, per-stage fidelity).");

  py::class_<UnfoldingModel<float>>(m, "Model")
      .def_static("load", &UnfoldingModel<float>::from_checkpoint, py::arg("path"))
      .def_property_readonly("stages", &UnfoldingModel<float>::stages)
      .def_property_readonly("parameter_count",
                             [](const UnfoldingModel<float>& u) { return u.parameters().scalar_count(); })
      .def("describe", &UnfoldingModel<float>::describe)
      .def("reconstruct", [](const UnfoldingModel<float>& u, const Array& y, const FilterArray& phi) {
        const Measurement meas = to_measurement(y);
        HyperCube est;
        {
          py::gil_scoped_release release;
          est = u.reconstruct(meas, phi).estimate;
        }
        return from_cube(est);
      });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      "Runs one snapspec command in-process; returns (exit code, stdout, stderr).");

  m.attr("__version__") = kToolVersion;
}
