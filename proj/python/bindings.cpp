#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "llnn/errors.hpp"
#include "llnn/experiments.hpp"

namespace py = pybind11;
using namespace llnn;

namespace {

ExperimentConfig config_from(const std::string& text) { return parse_config(nlohmann::json::parse(text)); }

py::list rows_of(const RunLog& log) {
    py::list rows;
    for (const auto& r : log.rows) rows.append(py::make_tuple(r.phase, r.epoch, r.task, r.metric, r.value));
    return rows;
}

ExpansionPolicy policy_from(const std::string& kind, std::size_t units) {
    if (kind == "Constant") return expansion::Constant{units};
    if (kind == "SimilarityScaled") return expansion::SimilarityScaled{units};
    throw ConfigError("unknown expansion kind '" + kind + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Columnar lifelong learning networks";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    m.attr("experiment_ids") = std::vector<std::string>(std::begin(kExperimentIds), std::end(kExperimentIds));
    m.attr("csv_header") = std::string(kCsvHeader);

    m.def("auc", [](const std::vector<double>& scores, const std::vector<int>& labels) { return auc(scores, labels); },
          py::arg("scores"), py::arg("labels"));
    m.def("expansion_size",
          [](const std::string& kind, std::size_t units, const std::vector<double>& sims) {
              return expansion_size(policy_from(kind, units), sims);
          },
          py::arg("kind"), py::arg("units"), py::arg("similarities"));
    m.def("normalize_strategy", [](const std::string& name) { return strategy_name(parse_strategy(name)); });

    m.def("default_config_json", [](const std::string& id) { return config_to_json(default_config(id)).dump(); });
    m.def("parse_config_json", [](const std::string& text) { return config_to_json(config_from(text)).dump(); });

    m.def(
        "run_experiment_json",
        [](const std::string& text, bool write_files) {
            const ExperimentConfig cfg = config_from(text);
            std::vector<RunResult> results;
            {
                py::gil_scoped_release release;
                const DataSource source = load_source(cfg.data);
                results = run_experiment(cfg, source, write_files);
            }
            py::list out;
            for (const auto& r : results) {
                py::dict d;
                d["seed"] = r.log.seed;
                d["rows"] = rows_of(r.log);
                d["csv"] = to_csv(r.log);
                out.append(d);
            }
            return out;
        },
        py::arg("config"), py::arg("write_files") = false);

    m.def(
        "synthetic_images",
        [](const std::string& chars, std::size_t per_char, std::uint64_t seed) {
            const auto [train, test] = synthetic_glyphs(std::vector<char>(chars.begin(), chars.end()), per_char, seed);
            py::array_t<std::uint8_t> images({train.count(), kImageSide, kImageSide});
            std::copy(train.pixels.begin(), train.pixels.end(), images.mutable_data());
            const CharMap map = synthetic_mapping();
            std::string labels;
            for (auto l : train.labels) labels += static_cast<char>(map.char_of(l));
            return py::make_tuple(images, labels);
        },
        py::arg("chars"), py::arg("per_char"), py::arg("seed") = 0);

    py::class_<LifelongNetwork>(m, "Network")
        .def(py::init<std::size_t, std::uint64_t>(), py::arg("input_dim"), py::arg("seed") = 0)
        .def_property_readonly("num_tasks", &LifelongNetwork::num_tasks)
        .def_property_readonly("input_dim", &LifelongNetwork::input_dim)
        .def(
            "add_task",
            [](LifelongNetwork& net, std::size_t units, const std::set<std::size_t>& sources,
               std::optional<std::size_t> copy_from) {
                TransferDecision d;
                d.enabled_sources = sources;
                d.copy_source = copy_from;
                return net.add_task(units, d).index;
            },
            py::arg("units"), py::arg("sources") = std::set<std::size_t>{}, py::arg("copy_from") = py::none())
        .def(
            "forward", [](const LifelongNetwork& net, const Matrix& inputs) { return net.forward_batch(inputs); },
            py::arg("inputs"), "Head probabilities (tasks x samples) for inputs given one sample per column.")
        .def(
            "freeze_all", [](LifelongNetwork& net) { net.set_consolidation(Selector::all(), kFrozen); })
        .def("train_task",
             [](LifelongNetwork& net, std::size_t task, const Matrix& inputs, const Vector& labels, std::size_t epochs,
                std::size_t batch_size, std::uint64_t shuffle_seed) {
                 TrainingSet set;
                 set.inputs = inputs;
                 set.labels[task] = labels;
                 TrainConfig cfg;
                 cfg.epochs = epochs;
                 cfg.batch_size = batch_size;
                 cfg.shuffle_seed = shuffle_seed;
                 std::vector<double> losses;
                 for (const auto& r : train(net, {task}, set, cfg)) losses.push_back(r.loss);
                 return losses;
             },
             py::arg("task"), py::arg("inputs"), py::arg("labels"), py::arg("epochs") = 10,
             py::arg("batch_size") = 64, py::arg("shuffle_seed") = 0);
}
