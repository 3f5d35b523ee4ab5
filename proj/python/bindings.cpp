#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "heterrec/data/synthetic.hpp"
#include "heterrec/diagnostics.hpp"
#include "heterrec/errors.hpp"
#include "heterrec/eval/metrics.hpp"
#include "heterrec/hct/attention.hpp"
#include "heterrec/htfl/codebook.hpp"
#include "heterrec/train/studies.hpp"
#include "heterrec/train/trainer.hpp"

namespace py = pybind11;
using namespace heterrec;

// JSON crosses the boundary as text; the Python package wraps these in dicts.
namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

nlohmann::json parse(const std::string& s) { return s.empty() ? nlohmann::json::object() : nlohmann::json::parse(s); }

py::array_t<float> as_array(const std::vector<float>& v, std::size_t rows, std::size_t cols) {
  py::array_t<float> out({rows, cols});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::span<const float> view(const FloatArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

class PyTrainer {
 public:
  PyTrainer(const train::PreparedData& data, const std::string& config)
      : data_(data), trainer_(data, train::TrainConfig::from_json(parse(config))) {}

  std::string train_epoch() { return trainer_.train_epoch().to_json().dump(); }
  std::string evaluate() const { return trainer_.evaluate().to_json().dump(); }
  double train_step(const std::vector<std::size_t>& users) {
    std::vector<UserSequence> batch;
    for (auto u : users) batch.push_back(data_.split().train.at(u));
    return trainer_.train_step(batch);
  }
  py::array_t<float> item_embeddings() const {
    auto v = trainer_.model().item_embeddings(trainer_.params());
    const std::size_t d = trainer_.model().model_config().item_dim;
    return as_array(v, v.size() / d, d);
  }
  py::array_t<float> user_embeddings() const {
    const auto& hist = data_.split().eval_history;
    auto v = trainer_.model().user_embeddings(trainer_.params(), hist);
    return as_array(v, hist.size(), trainer_.model().model_config().item_dim);
  }
  std::size_t epochs_completed() const { return trainer_.epochs_completed(); }
  std::size_t parameter_count() const { return trainer_.params().scalar_count(); }
  void save(const std::string& p) const { trainer_.save(p); }
  void load(const std::string& p) { trainer_.load(p); }

 private:
  const train::PreparedData& data_;
  train::Trainer trainer_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the heterrec package";

  auto base = py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  (void)base;

  m.def("generate_synthetic", [](const std::string& spec, const std::filesystem::path& out) {
    auto s = data::SyntheticSpec::from_json(parse(spec));
    auto gen = data::generate_synthetic(s);
    data::write_synthetic(out, gen);
    return gen.rules.to_json().dump();
  }, py::arg("spec_json"), py::arg("out_dir"));

  py::class_<train::PreparedData>(m, "Data")
      .def(py::init([](const std::filesystem::path& dir) { return train::load_data_dir(dir); }), py::arg("directory"))
      .def("summary_json", [](const train::PreparedData& d) { return d.dataset().summary().dump(); })
      .def_property_readonly("num_items", [](const train::PreparedData& d) { return d.catalog().num_items(); })
      .def_property_readonly("num_train_users", [](const train::PreparedData& d) { return d.split().train.size(); })
      .def_property_readonly("eval_truth", [](const train::PreparedData& d) { return d.split().eval_truth; });

  py::class_<PyTrainer>(m, "Trainer")
      .def(py::init<const train::PreparedData&, const std::string&>(), py::arg("data"), py::arg("config_json"),
           py::keep_alive<1, 2>())
      .def("train_epoch_json", &PyTrainer::train_epoch)
      .def("evaluate_json", &PyTrainer::evaluate)
      .def("train_step", &PyTrainer::train_step, py::arg("user_indices"))
      .def("item_embeddings", &PyTrainer::item_embeddings)
      .def("user_embeddings", &PyTrainer::user_embeddings)
      .def("save", &PyTrainer::save)
      .def("load", &PyTrainer::load)
      .def_property_readonly("epochs_completed", &PyTrainer::epochs_completed)
      .def_property_readonly("parameter_count", &PyTrainer::parameter_count);

  m.def("run_experiment", [](const std::string& config, const train::PreparedData& data,
                             std::optional<std::filesystem::path> out) {
    train::ExperimentOptions opt;
    opt.out_dir = std::move(out);
    py::gil_scoped_release release;
    return train::run_experiment(train::TrainConfig::from_json(parse(config)), data, opt).dump();
  }, py::arg("config_json"), py::arg("data"), py::arg("out_dir") = std::nullopt);

  m.def("gradient_suite", [](std::uint64_t seed, const std::string& corrupt) {
    auto r = diagnostics::gradient_suite(seed, corrupt);
    std::vector<std::tuple<std::string, double, bool>> out;
    for (const auto& c : r.checks) out.emplace_back(c.name, c.max_rel_error, c.passed);
    return out;
  }, py::arg("seed") = 0, py::arg("corrupt_op") = "");

  m.def("score_catalog", [](const FloatArray& user, const FloatArray& catalog) {
    if (catalog.ndim() != 2 || user.ndim() != 1 || user.shape(0) != catalog.shape(1))
      throw DimensionError("score_catalog expects user [d] and catalog [n, d]");
    return eval::score_catalog(view(user), view(catalog), static_cast<std::size_t>(user.shape(0)));
  }, py::arg("user"), py::arg("catalog"));
  m.def("recall_at_n", &eval::recall_at_n, py::arg("rank"), py::arg("n"));
  m.def("ndcg_at_n", &eval::ndcg_at_n, py::arg("rank"), py::arg("n"));

  m.def("time_gap_bucket", &hct::time_gap_bucket, py::arg("delta_seconds"), py::arg("buckets"));
  m.def("token_mask", [](const std::vector<std::int64_t>& item_index, bool strict) {
    auto mask = hct::build_token_mask<float>(item_index, strict);
    const std::size_t L = item_index.size();
    return as_array(mask, L, L);
  }, py::arg("item_index"), py::arg("strict") = false);

  py::class_<htfl::MultimodalCodebook>(m, "QuantileCodebook")
      .def_readonly("dim", &htfl::MultimodalCodebook::dim)
      .def_readonly("groups", &htfl::MultimodalCodebook::groups)
      .def_readonly("quantiles", &htfl::MultimodalCodebook::quantiles)
      .def("quantize", [](const htfl::MultimodalCodebook& cb, const FloatArray& v) { return cb.quantize(view(v)); })
      .def("quantile_index", &htfl::MultimodalCodebook::quantile_index);
  m.def("fit_quantile_codebook", [](const FloatArray& corpus, std::size_t groups, std::size_t quantiles) {
    if (corpus.ndim() != 2) throw DimensionError("corpus must be [n_items, dim]");
    return htfl::fit_quantile_codebook(view(corpus), corpus.shape(0), corpus.shape(1), groups, quantiles);
  }, py::arg("corpus"), py::arg("groups"), py::arg("quantiles"));
}
