#include "tfcodit/conditioning.hpp"
#include "tfcodit/config.hpp"
#include "tfcodit/diffusion.hpp"
#include "tfcodit/errors.hpp"
#include "tfcodit/evalharness.hpp"
#include "tfcodit/pipeline.hpp"
#include "tfcodit/preprocess.hpp"
#include "tfcodit/signal.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace tfcodit;
using nlohmann::json;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

TimeSeries series_from(const RowMat& values) {
  if (values.rows() != kNumChannels)
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(kNumChannels) + " rows");
  TimeSeries s;
  s.values = values;
  s.normalized = true;
  return s;
}

config::RunConfig config_from(const std::string& text) {
  return text.empty() ? config::with_overrides(config::RunConfig{}, {})
                      : config::from_json(json::parse(text));
}

// records: N x 8 columns open, high, low, close, settle, value, volume, open_interest
std::vector<preprocess::RawDailyRecord> records_from(const RowMat& m, const std::string& start) {
  if (m.cols() != 8) throw Error(ErrorCode::ShapeMismatch, "records need 8 columns");
  std::vector<preprocess::RawDailyRecord> out;
  Date d = parse_date(start);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    preprocess::RawDailyRecord r;
    r.date = d;
    r.open = m(i, 0);
    r.high = m(i, 1);
    r.low = m(i, 2);
    r.close = m(i, 3);
    r.settle = m(i, 4);
    r.value = m(i, 5);
    r.volume = m(i, 6);
    r.open_interest = m(i, 7);
    out.push_back(r);
    d = next_business_day(d);
  }
  return out;
}

RowMat records_to(const std::vector<preprocess::RawDailyRecord>& rs) {
  RowMat m(static_cast<Eigen::Index>(rs.size()), 8);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& r = rs[i];
    m.row(static_cast<Eigen::Index>(i)) << r.open, r.high, r.low, r.close, r.settle, r.value,
        r.volume, r.open_interest;
  }
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "tfcodit native core";

  py::register_exception<Error>(m, "TfcoditError");

  m.def("haar_analysis", [](const std::vector<double>& x, int level) {
    signal::DecompositionConfig c;
    c.level = level;
    return signal::haar_analysis(x, c);
  }, py::arg("x"), py::arg("level"));
  m.def("haar_synthesis", [](const std::vector<std::vector<double>>& coeffs, int level) {
    signal::DecompositionConfig c;
    c.level = level;
    return signal::haar_synthesis(coeffs, c);
  }, py::arg("coeffs"), py::arg("level"));

  m.def("dwt", [](const RowMat& values, int level) {
    signal::DecompositionConfig c;
    c.level = level;
    const auto g = signal::dwt_decompose(series_from(values), c);
    py::array_t<double> out({g.channels(), g.rows(), g.steps()});
    auto v = out.mutable_unchecked<3>();
    for (int ch = 0; ch < g.channels(); ++ch)
      for (int r = 0; r < g.rows(); ++r)
        for (int t = 0; t < g.steps(); ++t) v(ch, r, t) = g.maps[ch](r, t);
    return out;
  }, py::arg("values"), py::arg("level") = 3, "(8, T) -> (8, J+1, T) time-frequency grid");

  m.def("idwt", [](py::array_t<double, py::array::c_style | py::array::forcecast> grid,
                   int level) {
    if (grid.ndim() != 3) throw Error(ErrorCode::ShapeMismatch, "grid must be 3-d");
    auto v = grid.unchecked<3>();
    signal::WaveletGrid g;
    g.row_scales = signal::row_scales(level);
    for (py::ssize_t ch = 0; ch < v.shape(0); ++ch) {
      Mat mat(v.shape(1), v.shape(2));
      for (py::ssize_t r = 0; r < v.shape(1); ++r)
        for (py::ssize_t t = 0; t < v.shape(2); ++t) mat(r, t) = v(ch, r, t);
      g.maps.push_back(mat);
    }
    signal::DecompositionConfig c;
    c.level = level;
    return RowMat(signal::idwt_reconstruct(g, c).values);
  }, py::arg("grid"), py::arg("level") = 3);

  m.def("normalize", [](const RowMat& records, const std::string& start_date,
                        const std::string& contract) {
    const auto n = preprocess::normalize(records_from(records, start_date),
                                         parse_contract(contract));
    return py::make_tuple(RowMat(n.series.values),
                          pipeline::anchors_to_json(n.state).dump());
  }, py::arg("records"), py::arg("start_date") = "2024-01-02", py::arg("contract") = "T",
     "records (N, 8) -> (normalized (8, N-1), state JSON)");
  m.def("denormalize", [](const RowMat& values, const std::string& state) {
    return records_to(
        preprocess::denormalize(series_from(values), pipeline::anchors_from_json(json::parse(state))));
  }, py::arg("values"), py::arg("state"));

  m.def("build_mask", &diffusion::build_mask, py::arg("n_text"), py::arg("m_latent"));

  m.def("validate_document", [](const std::string& text) {
    const auto r = conditioning::validate_json(json::parse(text));
    py::dict d;
    d["ok"] = r.ok();
    d["violations"] = r.violations;
    d["warnings"] = r.warnings;
    return d;
  }, py::arg("text"));
  m.def("taxonomy", [](const std::string& level) {
    const auto& tax = level == "daily" ? conditioning::daily_taxonomy()
                                       : conditioning::periodic_taxonomy();
    py::dict d;
    for (const auto& c : tax) d[py::str(c.name)] = c.items;
    return d;
  }, py::arg("level"));

  m.def("score", [](const RowMat& pred, const RowMat& truth) {
    const auto s = evalharness::score(series_from(pred), series_from(truth));
    py::dict d;
    d["mse"] = s.mse;
    d["mae"] = s.mae;
    return d;
  }, py::arg("pred"), py::arg("truth"));

  m.def("default_config", [] { return config::to_json(config::with_overrides(config::RunConfig{}, {})).dump(); });
  m.def("load_config", [](const std::filesystem::path& p, const std::vector<std::string>& ov) {
    return config::to_json(config::load(p, ov)).dump();
  }, py::arg("path"), py::arg("overrides") = std::vector<std::string>{});
  m.def("override_config", [](const std::string& cfg, const std::vector<std::string>& ov) {
    return config::to_json(config::with_overrides(config_from(cfg), ov)).dump();
  }, py::arg("config"), py::arg("overrides"));

  m.def("gen_synthetic", [](const std::string& cfg) { pipeline::cmd_gen_synthetic(config_from(cfg)); },
        py::arg("config"));
  m.def("preprocess", [](const std::string& cfg) { pipeline::cmd_preprocess(config_from(cfg)); },
        py::arg("config"));
  m.def("train_vae", [](const std::string& cfg, bool resume) {
    py::gil_scoped_release nogil;
    return pipeline::cmd_train_vae(config_from(cfg), resume).size();
  }, py::arg("config"), py::arg("resume") = false);
  m.def("train_diffusion", [](const std::string& cfg, bool resume) {
    py::gil_scoped_release nogil;
    return pipeline::cmd_train_diffusion(config_from(cfg), resume).size();
  }, py::arg("config"), py::arg("resume") = false);
  m.def("generate", [](const std::string& cfg, const std::filesystem::path& prompts, int k,
                       const std::filesystem::path& out) {
    py::gil_scoped_release nogil;
    return pipeline::cmd_generate(config_from(cfg), prompts, k, out);
  }, py::arg("config"), py::arg("prompts"), py::arg("k"), py::arg("out") = std::filesystem::path{});
  m.def("evaluate", [](const std::string& cfg, const std::filesystem::path& pred,
                       const std::filesystem::path& truth, const std::filesystem::path& out) {
    return evalharness::to_json(pipeline::cmd_evaluate(config_from(cfg), pred, truth, out)).dump();
  }, py::arg("config"), py::arg("predictions"), py::arg("truth"), py::arg("out"));
  m.def("paths", [](const std::string& cfg) {
    const auto c = config_from(cfg);
    py::dict d;
    d["raw"] = pipeline::raw_path(c).string();
    d["processed"] = pipeline::processed_dir(c).string();
    d["test"] = pipeline::test_dir(c).string();
    d["vae"] = pipeline::vae_dir(c).string();
    d["diffusion"] = pipeline::diffusion_dir(c).string();
    d["generated"] = pipeline::generated_dir(c).string();
    return d;
  }, py::arg("config"));
}
