#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "capsrep/checkpoint.hpp"
#include "capsrep/dataset.hpp"
#include "capsrep/embeddings.hpp"
#include "capsrep/errors.hpp"
#include "capsrep/metrics.hpp"
#include "capsrep/predictor.hpp"
#include "capsrep/train.hpp"

namespace py = pybind11;

using capsrep::data::DatasetArchive;
using capsrep::data::DatasetManifest;
using capsrep::nd::Tensor;
using capsrep::train::CheckpointState;
using capsrep::train::Model;

namespace {

Tensor tensor_from_numpy(const py::array& array) {
  const auto a = py::array_t<float, py::array::c_style | py::array::forcecast>::
      ensure(array);
  if (!a) throw capsrep::ParamError("expected a float-convertible array");
  capsrep::nd::Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) {
    shape.push_back(static_cast<std::int64_t>(a.shape(i)));
  }
  Tensor t(shape);
  std::memcpy(t.mutable_data(), a.data(),
              sizeof(float) * static_cast<std::size_t>(t.numel()));
  return t;
}

py::array numpy_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> dims(t.shape().begin(), t.shape().end());
  py::array_t<float> out(dims);
  std::memcpy(out.mutable_data(), t.data(),
              sizeof(float) * static_cast<std::size_t>(t.numel()));
  return out;
}

py::array quaternions_array(const std::vector<capsrep::rot::Quat>& quats) {
  py::array_t<float> out({static_cast<py::ssize_t>(quats.size()),
                          static_cast<py::ssize_t>(4)});
  auto view = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < view.shape(0); ++i) {
    const auto& q = quats[static_cast<std::size_t>(i)];
    view(i, 0) = q.w;
    view(i, 1) = q.x;
    view(i, 2) = q.y;
    view(i, 3) = q.z;
  }
  return out;
}

py::dict table_dict(const capsrep::eval::EmbeddingTable& table) {
  py::dict d;
  d["act"] = numpy_from_tensor(table.act);
  d["pose"] = numpy_from_tensor(table.pose);
  d["object_ids"] = table.object_ids;
  d["view_ids"] = table.view_ids;
  d["class_ids"] = table.class_ids;
  d["rotations"] = quaternions_array(table.rotations);
  d["floor_hues"] = table.floor_hues;
  d["light_hues"] = table.light_hues;
  return d;
}

py::dict retrieval_dict(const capsrep::eval::RetrievalReport& r) {
  py::dict d;
  d["mrr"] = r.mrr;
  d["h_at_1"] = r.h_at_1;
  d["h_at_5"] = r.h_at_5;
  d["pre"] = r.pre;
  d["n_pairs"] = r.n_pairs;
  d["skipped_objects"] = r.skipped_objects;
  d["source_split"] = r.source_split;
  d["retrieval_split"] = r.retrieval_split;
  return d;
}

py::dict eval_point_dict(const capsrep::train::EvalPoint& p) {
  py::dict d;
  d["epoch"] = p.epoch;
  d["classification_top1"] = p.classification_top1;
  if (p.has_rotation) {
    d["rotation_r2"] = p.rotation_r2;
  } else {
    d["rotation_r2"] = py::none();
  }
  return d;
}

capsrep::eval::RetrievalReport run_retrieval(const Model& model,
                                             const DatasetArchive& archive,
                                             const std::string& split,
                                             const std::string& predictor) {
  const auto table = model.embed(archive);
  const auto view_split = capsrep::train::split_archive_rows(archive);

  std::vector<std::int64_t> all_rows(table.size());
  for (std::int64_t i = 0; i < table.size(); ++i) all_rows[i] = i;

  std::vector<std::int64_t> sources, gallery;
  std::string src_name, gal_name;
  if (split == "all") {
    sources = gallery = all_rows;
    src_name = gal_name = "all";
  } else if (split == "train") {
    sources = gallery = view_split.train_rows;
    src_name = gal_name = "train";
  } else if (split == "val") {
    sources = gallery = view_split.val_rows;
    src_name = gal_name = "val";
  } else if (split == "val-all") {
    sources = view_split.val_rows;
    gallery = all_rows;
    src_name = "val";
    gal_name = "all";
  } else {
    throw capsrep::ConfigError("unknown split \"" + split +
                               "\" (use all, train, val, or val-all)");
  }

  capsrep::eval::PredictFn fn;
  if (predictor == "trained") {
    const auto& pred = model.predictor();
    fn = [&pred](const Tensor& poses, const Tensor& g) {
      return pred.predict(capsrep::nd::constant(poses),
                          capsrep::nd::constant(g))
          .value();
    };
  } else if (predictor == "identity") {
    fn = [](const Tensor& poses, const Tensor&) { return poses; };
  } else {
    throw capsrep::ConfigError("unknown predictor \"" + predictor +
                               "\" (use trained or identity)");
  }
  return capsrep::eval::retrieval_metrics(table, fn, sources, gallery,
                                          src_name, gal_name);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "capsule-routed invariant/equivariant representation learning core";

  py::register_exception<capsrep::ConfigError>(m, "ConfigError",
                                               PyExc_ValueError);
  py::register_exception<capsrep::ParamError>(m, "ParamError",
                                              PyExc_ValueError);
  py::register_exception<capsrep::DimError>(m, "DimError", PyExc_ValueError);
  py::register_exception<capsrep::NumericError>(m, "NumericError",
                                                PyExc_ArithmeticError);
  py::register_exception<capsrep::IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<capsrep::ContractError>(m, "ContractError",
                                                 PyExc_RuntimeError);

  py::class_<DatasetArchive>(m, "DatasetArchive")
      .def_property_readonly(
          "n_records",
          [](const DatasetArchive& a) { return a.records.size(); })
      .def_property_readonly(
          "classes",
          [](const DatasetArchive& a) { return a.manifest.classes; })
      .def_property_readonly(
          "views_per_object",
          [](const DatasetArchive& a) { return a.manifest.views_per_object; })
      .def_property_readonly(
          "seed", [](const DatasetArchive& a) { return a.manifest.seed; })
      .def("checksum",
           [](const DatasetArchive& a) {
             return capsrep::data::archive_checksum(a);
           })
      .def("image",
           [](const DatasetArchive& a, std::int64_t i) {
             if (i < 0 || i >= static_cast<std::int64_t>(a.records.size())) {
               throw capsrep::ParamError("record index out of range");
             }
             return numpy_from_tensor(
                 a.records[static_cast<std::size_t>(i)].image);
           },
           py::arg("index"))
      .def("save",
           [](const DatasetArchive& a, const std::string& path) {
             capsrep::data::save_archive(a, path);
           },
           py::arg("path"));

  m.def(
      "generate_dataset",
      [](std::int64_t classes, std::int64_t objects_per_class,
         std::int64_t views_per_object, std::int64_t image_size,
         std::uint64_t seed) {
        DatasetManifest mf;
        mf.classes = static_cast<std::uint32_t>(classes);
        mf.objects_per_class = static_cast<std::uint32_t>(objects_per_class);
        mf.views_per_object = static_cast<std::uint32_t>(views_per_object);
        mf.height = static_cast<std::uint32_t>(image_size);
        mf.width = static_cast<std::uint32_t>(image_size);
        mf.seed = seed;
        return capsrep::data::generate_dataset(mf);
      },
      py::arg("classes"), py::arg("objects_per_class"),
      py::arg("views_per_object"), py::arg("image_size"), py::arg("seed"),
      "Render a procedural multi-view dataset of rotated shapes.");

  m.def("load_archive", &capsrep::data::load_archive, py::arg("path"));

  py::class_<CheckpointState>(m, "Checkpoint")
      .def_property_readonly(
          "epoch", [](const CheckpointState& s) { return s.epoch; })
      .def_property_readonly("step",
                             [](const CheckpointState& s) { return s.step; })
      .def_property_readonly(
          "config_json",
          [](const CheckpointState& s) { return s.config_json; })
      .def_property_readonly(
          "config_hash",
          [](const CheckpointState& s) { return s.config_hash; })
      .def("to_bytes",
           [](const CheckpointState& s) {
             const auto bytes = capsrep::train::serialize_checkpoint(s);
             return py::bytes(reinterpret_cast<const char*>(bytes.data()),
                              bytes.size());
           })
      .def_static("from_bytes",
                  [](const py::bytes& raw) {
                    const std::string buf = raw;
                    std::vector<std::uint8_t> bytes(buf.begin(), buf.end());
                    return capsrep::train::deserialize_checkpoint(bytes);
                  },
                  py::arg("data"))
      .def("save",
           [](const CheckpointState& s, const std::string& path) {
             capsrep::train::save_checkpoint(s, path);
           },
           py::arg("path"));

  m.def("load_checkpoint", &capsrep::train::load_checkpoint, py::arg("path"));

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& config_json) {
             return Model(capsrep::train::parse_train_config(config_json));
           }),
           py::arg("config_json"))
      .def_static("from_checkpoint", &capsrep::train::model_from_checkpoint,
                  py::arg("checkpoint"))
      .def_property_readonly("act_dim", &Model::act_dim)
      .def_property_readonly("pose_dim", &Model::pose_dim)
      .def("parameter_checksum", &Model::parameter_checksum)
      .def("forward",
           [](const Model& model, const py::array& images) {
             const auto out =
                 model.forward(capsrep::nd::constant(tensor_from_numpy(images)));
             return py::make_tuple(numpy_from_tensor(out.z_act.value()),
                                   numpy_from_tensor(out.z_pose.value()));
           },
           py::arg("images"),
           "Image batch (B, C, H, W) -> (activations (B, K), poses (B, D)).")
      .def("embed",
           [](const Model& model, const DatasetArchive& archive) {
             return table_dict(model.embed(archive));
           },
           py::arg("archive"),
           "Frozen embeddings plus latent factors for every archive record.");

  const auto result_dict = [](const capsrep::train::TrainResult& result,
                              std::vector<CheckpointState> snapshots) {
    py::list evals;
    for (const auto& p : result.eval_series) {
      evals.append(eval_point_dict(p));
    }
    py::list snaps;
    for (auto& s : snapshots) snaps.append(std::move(s));
    py::dict out;
    out["checkpoint"] = result.state;
    out["log_lines"] = result.log_lines;
    out["eval_series"] = evals;
    out["checkpoints"] = snaps;  // periodic snapshots, when configured
    return out;
  };

  m.def(
      "pretrain",
      [result_dict](const std::string& config_json,
                    const DatasetArchive& archive) {
        const auto cfg = capsrep::train::parse_train_config(config_json);
        std::vector<CheckpointState> snapshots;
        const auto result = capsrep::train::pretrain(
            cfg, archive,
            [&snapshots](const CheckpointState& s) { snapshots.push_back(s); });
        return result_dict(result, std::move(snapshots));
      },
      py::arg("config_json"), py::arg("archive"),
      "Run the full training loop; returns checkpoint, log, eval series.");

  m.def(
      "resume_pretrain",
      [result_dict](const CheckpointState& state,
                    const DatasetArchive& archive) {
        std::vector<CheckpointState> snapshots;
        const auto result = capsrep::train::resume_pretrain(
            state, archive,
            [&snapshots](const CheckpointState& s) { snapshots.push_back(s); });
        return result_dict(result, std::move(snapshots));
      },
      py::arg("checkpoint"), py::arg("archive"));

  m.def(
      "r_squared",
      [](const py::array& y, const py::array& y_hat) {
        return capsrep::eval::r_squared(tensor_from_numpy(y),
                                        tensor_from_numpy(y_hat));
      },
      py::arg("y"), py::arg("y_hat"));

  m.def(
      "retrieval_metrics",
      [](const Model& model, const DatasetArchive& archive,
         const std::string& split, const std::string& predictor) {
        return retrieval_dict(run_retrieval(model, archive, split, predictor));
      },
      py::arg("model"), py::arg("archive"), py::arg("split") = "all",
      py::arg("predictor") = "trained",
      "Pose-space nearest-neighbour retrieval over same-object view pairs.");

  m.def(
      "online_eval_point",
      [](const Model& model, const DatasetArchive& archive, std::int64_t epoch,
         std::uint64_t probe_seed) {
        return eval_point_dict(capsrep::train::online_eval_point(
            model, archive, epoch, probe_seed));
      },
      py::arg("model"), py::arg("archive"), py::arg("epoch") = 0,
      py::arg("probe_seed") = 1,
      "Train throwaway probes on frozen embeddings; the model is untouched.");

  m.def("train_config_json",
        [](const std::string& config_json) {
          return capsrep::train::train_config_json(
              capsrep::train::parse_train_config(config_json));
        },
        py::arg("config_json"),
        "Canonicalize a training config (defaults filled, keys sorted).");
}
