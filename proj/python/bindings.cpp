// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Native half of the Python package. Structured values cross the boundary
// as JSON text; the pure-Python wrapper turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "json.hpp"
#include "tempadapt/corpus.hpp"
#include "tempadapt/error.hpp"
#include "tempadapt/evaluation.hpp"
#include "tempadapt/model.hpp"
#include "tempadapt/orchestrator.hpp"
#include "tempadapt/synthgen.hpp"
#include "tempadapt/tokenizer.hpp"

namespace py = pybind11;
using json = nlohmann::json;
using namespace tempadapt;

namespace {

eval::Alternative parse_alternative(const std::string& s) {
  if (s == "greater") return eval::Alternative::kGreater;
  if (s == "less") return eval::Alternative::kLess;
  throw ConfigError("alternative must be 'greater' or 'less'");
}

std::string generate(const std::string& spec_json, const std::string& out_dir, bool discriminative) {
  auto spec = synth::GeneratorSpec::from_json(json::parse(spec_json));
  if (discriminative) spec = synth::make_discriminative_variant(spec);
  const auto syn = synth::generate_corpus(spec);
  synth::write_synthetic(out_dir, syn);
  return syn.corpus.manifest.to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "tempadapt native core";

  // Library errors keep their category on the Python side.
  static py::exception<Error> base_exc(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_exc(m, "ConfigError", base_exc.ptr());
  static py::exception<DataError> data_exc(m, "DataError", base_exc.ptr());
  static py::exception<IoError> io_exc(m, "IoError", base_exc.ptr());
  static py::exception<IntegrityError> integrity_exc(m, "IntegrityError", base_exc.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::kConfig:
          py::set_error(config_exc, e.what());
          return;
        case ErrorKind::kData:
          py::set_error(data_exc, e.what());
          return;
        case ErrorKind::kIo:
          py::set_error(io_exc, e.what());
          return;
        case ErrorKind::kIntegrity:
          py::set_error(integrity_exc, e.what());
          return;
      }
    } catch (const json::exception& e) {
      py::set_error(config_exc, e.what());
    }
  });

  // Metrics and statistics.
  m.def("pseudo_perplexity", [](const std::vector<double>& losses) { return eval::pseudo_perplexity(losses); },
        py::arg("losses"));
  m.def(
      "macro_f1",
      [](const std::vector<int>& pred, const std::vector<int>& gold, int n_classes) {
        return eval::macro_f1(pred, gold, n_classes).macro_f1;
      },
      py::arg("predictions"), py::arg("golds"), py::arg("n_classes"));
  m.def("relative_difference", &eval::relative_difference, py::arg("value"), py::arg("control"));
  m.def(
      "jaccard_similarity",
      [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        return corpus::jaccard_similarity(corpus::WordSet(a.begin(), a.end()), corpus::WordSet(b.begin(), b.end()));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "_wilcoxon",
      [](const std::vector<double>& d, const std::string& alternative) {
        return eval::wilcoxon_signed_rank(d, parse_alternative(alternative)).to_json().dump();
      },
      py::arg("differences"), py::arg("alternative") = "greater");
  m.def(
      "spearman",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        const auto r = eval::spearman(x, y);
        return py::make_tuple(r.rho, r.p_less, r.p_greater);
      },
      py::arg("x"), py::arg("y"));

  // Tokenizer.
  py::class_<tok::Vocabulary>(m, "Vocabulary")
      .def_static("load", &tok::Vocabulary::load, py::arg("path"))
      .def("save", &tok::Vocabulary::save, py::arg("path"))
      .def("__len__", &tok::Vocabulary::size)
      .def("tokens", &tok::Vocabulary::tokens)
      .def("hash", &tok::Vocabulary::hash)
      .def(
          "encode",
          [](const tok::Vocabulary& v, const std::string& text, std::size_t max_len) {
            const auto seq = tok::encode(text, v, max_len);
            return py::make_tuple(seq.ids, seq.word_index);
          },
          py::arg("text"), py::arg("max_len") = tok::kDefaultMaxLen)
      .def(
          "decode",
          [](const tok::Vocabulary& v, const std::vector<tok::TokenId>& ids) {
            tok::TokenSequence seq;
            seq.ids = ids;
            seq.word_index.assign(ids.size(), 0);
            return tok::decode(seq, v);
          },
          py::arg("ids"));
  m.def(
      "train_vocabulary",
      [](const std::vector<std::string>& texts, std::size_t size) { return tok::train_vocabulary(texts, size); },
      py::arg("texts"), py::arg("size"));

  // Generator and experiments.
  m.def("_default_spec", [](std::uint64_t seed) { return synth::default_spec(seed).to_json().dump(); },
        py::arg("seed") = 1);
  m.def("_generate", &generate, py::arg("spec_json"), py::arg("out_dir"), py::arg("discriminative") = false);
  m.def(
      "_run_plan",
      [](const std::string& plan_json) {
        const auto plan = orch::ExperimentPlan::from_json(json::parse(plan_json));
        orch::RunRecord record;
        {
          py::gil_scoped_release release;
          record = orch::run_plan(plan);
        }
        return record.to_json().dump();
      },
      py::arg("plan_json"));
  m.def(
      "_plan_hash", [](const std::string& plan_json) { return orch::ExperimentPlan::from_json(json::parse(plan_json)).hash(); },
      py::arg("plan_json"));
  m.def("numerics_fingerprint", &model::numerics_fingerprint);
}
