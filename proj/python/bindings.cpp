#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "domgen/adaptive.hpp"
#include "domgen/benchgen.hpp"
#include "domgen/checkpoint.hpp"
#include "domgen/errors.hpp"
#include "domgen/evalharness.hpp"
#include "domgen/protoembed.hpp"

namespace py = pybind11;
using namespace domgen;

namespace {

Matrix matrix_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw shape_error("expected a 2-D float array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + m.data.size(), m.data.begin());
  return m;
}

py::array_t<double> array_from_matrix(const Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

std::vector<Matrix> matrices_from_list(const py::list& batches) {
  std::vector<Matrix> out;
  for (const auto& item : batches) {
    out.push_back(matrix_from_array(
        item.cast<py::array_t<double, py::array::c_style | py::array::forcecast>>()));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "adaptive domain generalization: prototypical domain embeddings, "
            "domain-aware training and the synthetic long-tailed benchmark generator";

  // translators run newest-first, so the base class goes first
  py::register_exception<error>(m, "DomgenError");
  py::register_exception<io_error>(m, "IoError");

  py::enum_<ShiftKind>(m, "ShiftKind")
      .value("ROTATION", ShiftKind::Rotation)
      .value("AFFINE_SHIFT", ShiftKind::AffineShift)
      .value("BOTH", ShiftKind::Both);

  py::enum_<EmbeddingVariant>(m, "EmbeddingVariant")
      .value("PROTOTYPE", EmbeddingVariant::Prototype)
      .value("MEAN_FEATURE", EmbeddingVariant::MeanFeature)
      .value("SOFTMAX_HEAD", EmbeddingVariant::SoftmaxHead)
      .value("RANDOM_AT_INFERENCE", EmbeddingVariant::RandomAtInference)
      .value("NONE", EmbeddingVariant::None);

  py::enum_<Penalty>(m, "Penalty")
      .value("NONE", Penalty::None)
      .value("MMD", Penalty::Mmd)
      .value("CORAL", Penalty::Coral);

  py::class_<MotherSpec>(m, "MotherSpec")
      .def_readonly("base_classes", &MotherSpec::base_classes)
      .def_readonly("input_dim", &MotherSpec::input_dim)
      .def_readonly("class_scale", &MotherSpec::class_scale)
      .def_readonly("shift_magnitude", &MotherSpec::shift_magnitude);

  m.def("make_mother_spec", &make_mother_spec, py::arg("base_classes"), py::arg("input_dim"),
        py::arg("class_scale"), py::arg("kind"), py::arg("shift_magnitude"), py::arg("seed"),
        py::arg("mean_sigma") = 0.0, py::arg("n_rotation_planes") = 0);

  py::class_<LtConfig>(m, "LtConfig")
      .def(py::init<>())
      .def_readwrite("train_domains", &LtConfig::train_domains)
      .def_readwrite("head_classes", &LtConfig::head_classes)
      .def_readwrite("head_count", &LtConfig::head_count)
      .def_readwrite("tail_fraction", &LtConfig::tail_fraction)
      .def_readwrite("val_domains", &LtConfig::val_domains)
      .def_readwrite("test_domains", &LtConfig::test_domains)
      .def_readwrite("val_per_class", &LtConfig::val_per_class)
      .def_readwrite("test_per_class", &LtConfig::test_per_class)
      .def_readwrite("eval_per_class", &LtConfig::eval_per_class);

  py::class_<DomainDataset>(m, "DomainDataset")
      .def_readonly("domain_id", &DomainDataset::domain_id)
      .def_property_readonly("n_fit", [](const DomainDataset& d) { return d.fit.size(); })
      .def_property_readonly("n_eval", [](const DomainDataset& d) { return d.eval.size(); })
      .def("fit_x", [](const DomainDataset& d) {
        return array_from_matrix(samples_to_matrix(d.fit, d.fit.empty() ? 0 : d.fit[0].x.size()));
      })
      .def("fit_y", [](const DomainDataset& d) { return samples_to_labels(d.fit); })
      .def("eval_x", [](const DomainDataset& d) {
        return array_from_matrix(
            samples_to_matrix(d.eval, d.eval.empty() ? 0 : d.eval[0].x.size()));
      })
      .def("eval_y", [](const DomainDataset& d) { return samples_to_labels(d.eval); });

  py::class_<BenchmarkSplit>(m, "BenchmarkSplit")
      .def_readonly("input_dim", &BenchmarkSplit::input_dim)
      .def_readonly("num_classes", &BenchmarkSplit::num_classes)
      .def_readonly("train_domains", &BenchmarkSplit::train_domains)
      .def_readonly("val_domains", &BenchmarkSplit::val_domains)
      .def_readonly("test_domains", &BenchmarkSplit::test_domains);

  m.def("generate_lt_benchmark", &generate_lt_benchmark, py::arg("mother"), py::arg("config"));
  m.def("save_benchmark", &save_benchmark, py::arg("split"), py::arg("path"));
  m.def("load_external_dataset", &load_external_dataset, py::arg("path"));

  py::class_<MlpParams>(m, "MlpParams")
      .def_property_readonly("input_dim", &MlpParams::input_dim)
      .def_property_readonly("output_dim", &MlpParams::output_dim);
  m.def("save_mlp", &save_mlp, py::arg("params"), py::arg("path"));
  m.def("load_mlp", &load_mlp, py::arg("path"));

  py::class_<ProtoConfig>(m, "ProtoConfig")
      .def(py::init<>())
      .def_readwrite("embed_dim", &ProtoConfig::embed_dim)
      .def_readwrite("hidden_dims", &ProtoConfig::hidden_dims)
      .def_readwrite("domains_per_round", &ProtoConfig::domains_per_round)
      .def_readwrite("support_per_domain", &ProtoConfig::support_per_domain)
      .def_readwrite("query_per_domain", &ProtoConfig::query_per_domain)
      .def_readwrite("rounds", &ProtoConfig::rounds)
      .def_readwrite("mixup_enabled", &ProtoConfig::mixup_enabled)
      .def_property(
          "learning_rate", [](const ProtoConfig& c) { return c.sgd.learning_rate; },
          [](ProtoConfig& c, double v) { c.sgd.learning_rate = v; })
      .def_property(
          "weight_decay", [](const ProtoConfig& c) { return c.sgd.weight_decay; },
          [](ProtoConfig& c, double v) { c.sgd.weight_decay = v; })
      .def_property(
          "seed", [](const ProtoConfig& c) { return c.sgd.rng_seed; },
          [](ProtoConfig& c, std::uint64_t v) { c.sgd.rng_seed = v; });

  py::class_<DomainPrototype>(m, "DomainPrototype")
      .def_readonly("domain_id", &DomainPrototype::domain_id)
      .def_readonly("mu", &DomainPrototype::mu)
      .def_readonly("n_points", &DomainPrototype::n_points);

  m.def(
      "proto_train",
      [](const BenchmarkSplit& split, const ProtoConfig& cfg) {
        auto result = proto_train(split.train_domains, cfg);
        return py::make_tuple(result.net, result.round_loss);
      },
      py::arg("split"), py::arg("config"), "returns (embedding_net, round_losses)");

  m.def(
      "compute_prototype",
      [](const MlpParams& net,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& points,
         const std::string& domain_id) {
        return compute_prototype(net, matrix_from_array(points), domain_id);
      },
      py::arg("net"), py::arg("points"), py::arg("domain_id") = "domain");

  m.def(
      "embed_rows",
      [](const MlpParams& net,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& points) {
        return array_from_matrix(embed_rows(net, matrix_from_array(points)));
      },
      py::arg("net"), py::arg("points"));

  m.def(
      "domain_membership_probs",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& queries,
         const std::vector<DomainPrototype>& prototypes) {
        return array_from_matrix(domain_membership_probs(matrix_from_array(queries), prototypes));
      },
      py::arg("query_embeddings"), py::arg("prototypes"));

  m.def(
      "mixup_domains",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b, double ratio) {
        return array_from_matrix(mixup_domains(matrix_from_array(a), matrix_from_array(b), ratio));
      },
      py::arg("batch_a"), py::arg("batch_b"), py::arg("ratio"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("rounds", &TrainConfig::rounds)
      .def_readwrite("batch_per_domain", &TrainConfig::batch_per_domain)
      .def_readwrite("penalty", &TrainConfig::penalty)
      .def_readwrite("penalty_weight", &TrainConfig::penalty_weight)
      .def_readwrite("feature_dim", &TrainConfig::feature_dim)
      .def_readwrite("ft_hidden_dims", &TrainConfig::ft_hidden_dims)
      .def_readwrite("mlp_hidden_dim", &TrainConfig::mlp_hidden_dim)
      .def_property(
          "learning_rate", [](const TrainConfig& c) { return c.sgd.learning_rate; },
          [](TrainConfig& c, double v) { c.sgd.learning_rate = v; })
      .def_property(
          "weight_decay", [](const TrainConfig& c) { return c.sgd.weight_decay; },
          [](TrainConfig& c, double v) { c.sgd.weight_decay = v; })
      .def_property(
          "seed", [](const TrainConfig& c) { return c.sgd.rng_seed; },
          [](TrainConfig& c, std::uint64_t v) { c.sgd.rng_seed = v; });

  py::class_<AdaptiveModel>(m, "AdaptiveModel")
      .def_readonly("embed_dim", &AdaptiveModel::embed_dim)
      .def_readonly("num_classes", &AdaptiveModel::num_classes)
      .def_readonly("f_ft", &AdaptiveModel::f_ft)
      .def_readonly("f_mlp", &AdaptiveModel::f_mlp);
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  py::class_<TrainedDomainAware>(m, "TrainedDomainAware")
      .def_readonly("model", &TrainedDomainAware::model)
      .def_readonly("variant", &TrainedDomainAware::variant)
      .def_readonly("embed_net", &TrainedDomainAware::embed_net)
      .def_readonly("train_prototypes", &TrainedDomainAware::train_prototypes);

  m.def("train_domain_aware", &train_domain_aware, py::arg("split"), py::arg("variant"),
        py::arg("proto_config"), py::arg("train_config"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());

  py::class_<EvalRow>(m, "EvalRow")
      .def_readonly("domain_id", &EvalRow::domain_id)
      .def_readonly("split", &EvalRow::split)
      .def_readonly("top1", &EvalRow::top1)
      .def_readonly("topk", &EvalRow::topk)
      .def_readonly("n_points", &EvalRow::n_points);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("per_domain", &EvalReport::per_domain)
      .def_readonly("train_top1", &EvalReport::train_top1)
      .def_readonly("train_topk", &EvalReport::train_topk)
      .def_readonly("test_top1", &EvalReport::test_top1)
      .def_readonly("test_topk", &EvalReport::test_topk);

  m.def(
      "evaluate_model",
      [](const TrainedDomainAware& trained, const BenchmarkSplit& split, std::size_t top_k,
         std::size_t prototype_points, std::uint64_t seed) {
        EvalOptions opts;
        opts.top_k = top_k;
        opts.prototype_points = prototype_points;
        opts.seed = seed;
        return evaluate_model(trained, split, opts);
      },
      py::arg("trained"), py::arg("split"), py::arg("top_k") = 5, py::arg("prototype_points") = 0,
      py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());

  m.def(
      "adaptive_infer",
      [](const AdaptiveModel& model, const DomainPrototype& prototype,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
        return adaptive_infer(model, prototype, matrix_from_array(x));
      },
      py::arg("model"), py::arg("prototype"), py::arg("x"));

  m.def(
      "mmd_penalty",
      [](const py::list& features_by_domain, double bandwidth) {
        PenaltyResult res;
        if (bandwidth > 0.0) {
          res = mmd_penalty(matrices_from_list(features_by_domain), BandwidthMode::Fixed,
                            bandwidth);
        } else {
          res = mmd_penalty(matrices_from_list(features_by_domain), BandwidthMode::Median);
        }
        py::list grads;
        for (const Matrix& g : res.feature_grads) grads.append(array_from_matrix(g));
        return py::make_tuple(res.value, grads, res.bandwidth);
      },
      py::arg("features_by_domain"), py::arg("bandwidth") = 0.0,
      "Gaussian-kernel MMD^2 penalty; bandwidth <= 0 selects the median heuristic. "
      "Returns (value, gradients, bandwidth).");

  m.def(
      "coral_penalty",
      [](const py::list& features_by_domain) {
        PenaltyResult res = coral_penalty(matrices_from_list(features_by_domain));
        py::list grads;
        for (const Matrix& g : res.feature_grads) grads.append(array_from_matrix(g));
        return py::make_tuple(res.value, grads);
      },
      py::arg("features_by_domain"));

  m.def(
      "accuracy",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
         const std::vector<int>& labels, std::size_t k) {
        return accuracy(matrix_from_array(logits), labels, k);
      },
      py::arg("logits"), py::arg("labels"), py::arg("k") = 1);

  py::class_<ConsistencyCurve>(m, "ConsistencyCurve")
      .def_readonly("points", &ConsistencyCurve::points)
      .def_readonly("slope", &ConsistencyCurve::slope)
      .def_readonly("intercept", &ConsistencyCurve::intercept)
      .def_readonly("valid_fit", &ConsistencyCurve::valid_fit);

  m.def("consistency_experiment", &consistency_experiment, py::arg("net"), py::arg("mother"),
        py::arg("n_grid"), py::arg("trials"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());
}
