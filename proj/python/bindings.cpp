#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "xmh/data.hpp"
#include "xmh/errors.hpp"
#include "xmh/gradcheck_suite.hpp"
#include "xmh/mask_stats.hpp"
#include "xmh/model.hpp"
#include "xmh/retrieval.hpp"
#include "xmh/trainer.hpp"

namespace py = pybind11;
using namespace xmh;

namespace {

py::array_t<std::int8_t> codes_to_array(const CodeDatabase& db) {
  py::array_t<std::int8_t> out({db.size(), db.bits()});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < db.size(); ++i) {
    const BinaryCode c = db.code(i);
    for (std::size_t b = 0; b < db.bits(); ++b) view(i, b) = c.bits[b];
  }
  return out;
}

CodeDatabase array_to_codes(py::array_t<std::int8_t, py::array::c_style | py::array::forcecast> codes,
                            const std::vector<std::uint64_t>& ids, Modality modality) {
  if (codes.ndim() != 2) throw DimensionError("codes must be a 2-D array");
  if (static_cast<std::size_t>(codes.shape(0)) != ids.size()) throw DimensionError("one id per code row is required");
  CodeDatabase db(modality, static_cast<std::size_t>(codes.shape(1)));
  auto view = codes.unchecked<2>();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    BinaryCode c;
    for (py::ssize_t b = 0; b < codes.shape(1); ++b) c.bits.push_back(view(i, b) > 0 ? 1 : -1);
    db.add(ids[i], c);
  }
  return db;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["map"] = r.map;
  d["ap"] = r.ap;
  d["query_ids"] = r.query_ids;
  std::vector<std::pair<double, double>> pr;
  for (const auto& p : r.pr) pr.emplace_back(p.recall, p.precision);
  d["pr"] = pr;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Attention-aware adversarial cross-modal hashing";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::enum_<Modality>(m, "Modality").value("IMAGE", Modality::Image).value("TEXT", Modality::Text);

  py::class_<PairedDataset>(m, "Dataset")
      .def_property_readonly("size", &PairedDataset::size)
      .def_readonly("vocab", &PairedDataset::vocab)
      .def_readonly("classes", &PairedDataset::classes)
      .def_readonly("grid_height", &PairedDataset::grid_height)
      .def_readonly("grid_width", &PairedDataset::grid_width)
      .def_property_readonly("labels", [](const PairedDataset& d) { return d.labels; })
      .def_property_readonly("test", [](const PairedDataset& d) { return d.splits.test; })
      .def_property_readonly("retrieval", [](const PairedDataset& d) { return d.splits.retrieval; })
      .def_property_readonly("train", [](const PairedDataset& d) { return d.splits.train; })
      .def("images", [](const PairedDataset& d) {
        py::array_t<float> a({d.size(), d.image.height, d.image.width, d.image.channels});
        std::copy(d.images.begin(), d.images.end(), a.mutable_data());
        return a;
      })
      .def("bow", [](const PairedDataset& d) {
        py::array_t<float> a({d.size(), d.vocab});
        std::copy(d.bow.begin(), d.bow.end(), a.mutable_data());
        return a;
      })
      .def("masks", [](const PairedDataset& d) {
        py::array_t<std::uint8_t> a({d.has_masks() ? d.size() : 0, d.grid_height, d.grid_width});
        std::copy(d.masks.begin(), d.masks.end(), a.mutable_data());
        return a;
      });

  m.def(
      "generate_synthetic",
      [](std::size_t n, std::size_t classes, std::size_t vocab, double noise, std::uint64_t seed, std::size_t n_test,
         std::size_t n_train) {
        SyntheticConfig cfg;
        cfg.n = n;
        cfg.classes = classes;
        cfg.vocab = vocab;
        cfg.noise = noise;
        cfg.seed = seed;
        PairedDataset d = generate_synthetic(cfg);
        d.splits = make_splits(d.size(), n_test, n_train, seed);
        return d;
      },
      py::arg("n") = 2400, py::arg("classes") = 4, py::arg("vocab") = 256, py::arg("noise") = 0.5,
      py::arg("seed") = 1, py::arg("n_test") = 200, py::arg("n_train") = 1000);
  m.def("save_dataset", &save_dataset, py::arg("data"), py::arg("path"));
  m.def("load_dataset", &load_dataset, py::arg("path"));

  py::class_<Model>(m, "Model")
      .def_property_readonly("bits", [](const Model& md) { return md.config.bits; })
      .def("save", [](Model& md, const std::filesystem::path& p) { save_checkpoint(md, p); });
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "train",
      [](const PairedDataset& data, const std::string& config_text, std::optional<std::filesystem::path> out) {
        std::istringstream is(config_text);
        const TrainConfig cfg = TrainConfig::parse(is, "<python>");
        TrainOutputs outputs;
        outputs.dir = out;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(data, cfg, outputs);
        }
        std::vector<std::string> log;
        for (const auto& rec : r.log) log.push_back(format_log_line(rec));
        return py::make_tuple(std::move(r.model), log);
      },
      py::arg("data"), py::arg("config") = "", py::arg("out") = py::none(),
      "Train with a `key = value` config; returns (model, log lines).");

  m.def(
      "encode",
      [](const PairedDataset& data, const std::vector<std::uint32_t>& ids, const Model& model, Modality modality,
         bool with_background) {
        EncodeOptions opts;
        opts.with_background = with_background;
        const EncodedCorpus c = encode_corpus(data, ids, model, modality, opts);
        py::object bg = py::none();
        if (c.background) bg = codes_to_array(*c.background);
        return py::make_tuple(codes_to_array(c.foreground), bg);
      },
      py::arg("data"), py::arg("ids"), py::arg("model"), py::arg("modality"), py::arg("with_background") = false,
      "Returns (foreground codes, background codes or None) as int8 arrays of +-1.");

  m.def(
      "evaluate",
      [](py::array_t<std::int8_t> query_codes, const std::vector<std::uint64_t>& query_ids,
         py::array_t<std::int8_t> db_codes, const std::vector<std::uint64_t>& db_ids,
         const std::vector<LabelSet>& labels, std::size_t map_at) {
        const CodeDatabase q = array_to_codes(query_codes, query_ids, Modality::Text);
        const CodeDatabase db = array_to_codes(db_codes, db_ids, Modality::Image);
        EvalOptions opts;
        opts.map_at = map_at;
        return report_dict(evaluate(q, db, build_similarity(labels), opts));
      },
      py::arg("query_codes"), py::arg("query_ids"), py::arg("db_codes"), py::arg("db_ids"), py::arg("labels"),
      py::arg("map_at") = 0);

  m.def(
      "hamming_rank",
      [](py::array_t<std::int8_t> query, py::array_t<std::int8_t> db_codes, const std::vector<std::uint64_t>& ids) {
        py::array_t<std::int8_t> q2 = query.reshape({py::ssize_t{1}, query.size()});
        const CodeDatabase qdb = array_to_codes(q2, {0}, Modality::Image);
        const CodeDatabase db = array_to_codes(db_codes, ids, Modality::Image);
        std::vector<std::pair<std::uint64_t, std::uint32_t>> out;
        for (const auto& item : hamming_rank(qdb.code(0), db).ranking) out.emplace_back(item.id, item.distance);
        return out;
      },
      py::arg("query"), py::arg("db_codes"), py::arg("ids"), "Full ranking as (id, distance), ties by ascending id.");

  m.def(
      "average_precision",
      [](const std::vector<std::uint8_t>& relevant, std::size_t cutoff) { return average_precision(relevant, cutoff); },
      py::arg("relevant"), py::arg("cutoff") = 0);

  m.def(
      "gradcheck",
      [](std::uint64_t seed, double tol, std::size_t instances) {
        GradcheckSuiteOptions opts;
        opts.seed = seed;
        opts.tol = tol;
        opts.instances = instances;
        const GradcheckSuiteReport r = run_gradcheck_suite(opts);
        py::dict d;
        for (const auto& e : r.entries) d[py::str(e.name)] = py::make_tuple(e.max_rel_error, e.passed);
        return py::make_tuple(r.passed(), d);
      },
      py::arg("seed") = 1, py::arg("tol") = 1e-4, py::arg("instances") = 20);

  m.def(
      "mask_stats",
      [](const PairedDataset& data, const std::vector<std::uint32_t>& ids, const Model& model) {
        const MaskStats s = compute_mask_stats(data, ids, model);
        py::dict d;
        d["mean_occupancy"] = s.mean_occupancy;
        d["mean_iou"] = s.mean_iou ? py::cast(*s.mean_iou) : py::none();
        d["baseline_iou"] = s.baseline_iou ? py::cast(*s.baseline_iou) : py::none();
        return d;
      },
      py::arg("data"), py::arg("ids"), py::arg("model"));
}
