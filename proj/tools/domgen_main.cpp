// domgen: generate benchmarks, train prototype/adaptive models, evaluate and
// run the ablation drivers, all from JSON configs with seeded determinism.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "domgen/adaptive.hpp"
#include "domgen/benchgen.hpp"
#include "domgen/checkpoint.hpp"
#include "domgen/errors.hpp"
#include "domgen/evalharness.hpp"
#include "domgen/protoembed.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace domgen;

namespace {

// ---------------------------------------------------------------------------
// strict config parsing

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!obj.is_object()) throw config_error(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw config_error(where + ": unknown key \"" + key + "\"");
    }
  }
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config: " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw parse_error("config " + path + ": " + e.what());
  }
}

template <typename T>
T field_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw config_error(std::string("field \"") + key + "\": " + e.what());
  }
}

MotherSpec parse_mother(const json& cfg, std::uint64_t seed) {
  reject_unknown_keys(cfg, {"classes", "dim", "class_scale", "shift_kind", "shift_magnitude",
                            "mean_sigma", "rotation_planes"},
                      "mother");
  return make_mother_spec(
      field_or<std::size_t>(cfg, "classes", 20), field_or<std::size_t>(cfg, "dim", 16),
      field_or<double>(cfg, "class_scale", 1.0),
      shift_kind_from_name(field_or<std::string>(cfg, "shift_kind", "rotation")),
      field_or<double>(cfg, "shift_magnitude", 2.0), seed,
      field_or<double>(cfg, "mean_sigma", 0.82), field_or<std::size_t>(cfg, "rotation_planes", 0));
}

LtConfig parse_lt(const json& cfg) {
  reject_unknown_keys(cfg, {"train_domains", "head_classes", "head_count", "tail_fraction",
                            "val_domains", "test_domains", "val_per_class", "test_per_class",
                            "eval_per_class"},
                      "lt");
  LtConfig lt;
  lt.train_domains = field_or<std::size_t>(cfg, "train_domains", lt.train_domains);
  lt.head_classes = field_or<std::size_t>(cfg, "head_classes", lt.head_classes);
  lt.head_count = field_or<std::size_t>(cfg, "head_count", lt.head_count);
  lt.tail_fraction = field_or<double>(cfg, "tail_fraction", lt.tail_fraction);
  lt.val_domains = field_or<std::size_t>(cfg, "val_domains", lt.val_domains);
  lt.test_domains = field_or<std::size_t>(cfg, "test_domains", lt.test_domains);
  lt.val_per_class = field_or<std::size_t>(cfg, "val_per_class", lt.val_per_class);
  lt.test_per_class = field_or<std::size_t>(cfg, "test_per_class", lt.test_per_class);
  lt.eval_per_class = field_or<std::size_t>(cfg, "eval_per_class", lt.eval_per_class);
  return lt;
}

ProtoConfig parse_proto(const json& cfg, std::size_t n_train_domains) {
  reject_unknown_keys(cfg, {"embed_dim", "hidden_dims", "domains_per_round", "support_per_domain",
                            "query_per_domain", "batch_per_domain", "rounds", "learning_rate",
                            "weight_decay", "mixup"},
                      "proto");
  ProtoConfig pc;
  pc.embed_dim = field_or<std::size_t>(cfg, "embed_dim", pc.embed_dim);
  pc.hidden_dims = field_or<std::vector<std::size_t>>(cfg, "hidden_dims", pc.hidden_dims);
  pc.domains_per_round = field_or<std::size_t>(cfg, "domains_per_round", pc.domains_per_round);
  if (cfg.contains("batch_per_domain")) {
    const auto batch = cfg.at("batch_per_domain").get<std::size_t>();
    const auto [n_s, n_q] = support_query_split(batch, n_train_domains);
    pc.support_per_domain = n_s;
    pc.query_per_domain = n_q;
  }
  pc.support_per_domain = field_or<std::size_t>(cfg, "support_per_domain", pc.support_per_domain);
  pc.query_per_domain = field_or<std::size_t>(cfg, "query_per_domain", pc.query_per_domain);
  pc.rounds = field_or<std::size_t>(cfg, "rounds", pc.rounds);
  pc.sgd.learning_rate = field_or<double>(cfg, "learning_rate", pc.sgd.learning_rate);
  pc.sgd.weight_decay = field_or<double>(cfg, "weight_decay", pc.sgd.weight_decay);
  if (cfg.contains("mixup")) {
    const json& m = cfg.at("mixup");
    reject_unknown_keys(m, {"enabled", "lo", "hi"}, "proto.mixup");
    pc.mixup_enabled = field_or<bool>(m, "enabled", pc.mixup_enabled);
    pc.mixup_lo = field_or<double>(m, "lo", pc.mixup_lo);
    pc.mixup_hi = field_or<double>(m, "hi", pc.mixup_hi);
  }
  return pc;
}

TrainConfig parse_train(const json& cfg) {
  reject_unknown_keys(cfg, {"rounds", "batch_per_domain", "learning_rate", "weight_decay",
                            "penalty", "penalty_weight", "mmd_bandwidth", "feature_dim",
                            "ft_hidden_dims", "mlp_hidden_dim"},
                      "train");
  TrainConfig tc;
  tc.rounds = field_or<std::size_t>(cfg, "rounds", tc.rounds);
  tc.batch_per_domain = field_or<std::size_t>(cfg, "batch_per_domain", tc.batch_per_domain);
  tc.sgd.learning_rate = field_or<double>(cfg, "learning_rate", tc.sgd.learning_rate);
  tc.sgd.weight_decay = field_or<double>(cfg, "weight_decay", tc.sgd.weight_decay);
  tc.penalty = penalty_from_name(field_or<std::string>(cfg, "penalty", "none"));
  tc.penalty_weight = field_or<double>(cfg, "penalty_weight", tc.penalty_weight);
  if (cfg.contains("mmd_bandwidth")) {
    const json& b = cfg.at("mmd_bandwidth");
    if (b.is_string() && b.get<std::string>() == "median") {
      tc.bandwidth_mode = BandwidthMode::Median;
    } else if (b.is_number()) {
      tc.bandwidth_mode = BandwidthMode::Fixed;
      tc.fixed_bandwidth = b.get<double>();
      if (tc.fixed_bandwidth <= 0.0) throw config_error("train.mmd_bandwidth must be > 0");
    } else {
      throw config_error("train.mmd_bandwidth must be \"median\" or a positive number");
    }
  }
  tc.feature_dim = field_or<std::size_t>(cfg, "feature_dim", tc.feature_dim);
  tc.ft_hidden_dims = field_or<std::vector<std::size_t>>(cfg, "ft_hidden_dims", tc.ft_hidden_dims);
  tc.mlp_hidden_dim = field_or<std::size_t>(cfg, "mlp_hidden_dim", tc.mlp_hidden_dim);
  if (tc.penalty_weight < 0.0) throw config_error("train.penalty_weight must be >= 0");
  return tc;
}

ExperimentConfig parse_experiment(const json& cfg) {
  reject_unknown_keys(cfg, {"mother", "lt", "proto", "train", "top_k"}, "experiment");
  ExperimentConfig ec;
  if (cfg.contains("mother")) {
    const json& m = cfg.at("mother");
    reject_unknown_keys(m, {"classes", "dim", "class_scale", "shift_kind", "shift_magnitude",
                            "mean_sigma", "rotation_planes"},
                        "experiment.mother");
    ec.classes = field_or<std::size_t>(m, "classes", ec.classes);
    ec.dim = field_or<std::size_t>(m, "dim", ec.dim);
    ec.class_scale = field_or<double>(m, "class_scale", ec.class_scale);
    ec.shift_kind = shift_kind_from_name(
        field_or<std::string>(m, "shift_kind", shift_kind_name(ec.shift_kind)));
    ec.shift_magnitude = field_or<double>(m, "shift_magnitude", ec.shift_magnitude);
    ec.mean_sigma = field_or<double>(m, "mean_sigma", ec.mean_sigma);
    ec.rotation_planes = field_or<std::size_t>(m, "rotation_planes", ec.rotation_planes);
  }
  if (cfg.contains("lt")) ec.lt = parse_lt(cfg.at("lt"));
  if (cfg.contains("proto")) ec.proto = parse_proto(cfg.at("proto"), ec.lt.train_domains);
  if (cfg.contains("train")) ec.train = parse_train(cfg.at("train"));
  ec.top_k = field_or<std::size_t>(cfg, "top_k", ec.top_k);
  return ec;
}

// ---------------------------------------------------------------------------
// outputs

struct OutputContext {
  fs::path out_dir;
  bool with_timestamp = true;
  std::vector<std::string> written;
};

void write_text(OutputContext& ctx, const std::string& name, const std::string& content) {
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  const fs::path path = ctx.out_dir / name;
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw io_error("write failed: " + path.string());
  ctx.written.push_back(name);
}

std::string timestamp_utc() {
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(OutputContext& ctx, const std::string& command, const json& resolved_config,
                    std::uint64_t seed, const json& inputs) {
  json manifest{{"format", "domgen-manifest-v1"},
                {"command", command},
                {"seed", seed},
                {"config", resolved_config},
                {"inputs", inputs},
                {"outputs", ctx.written}};
  if (ctx.with_timestamp) manifest["timestamp"] = timestamp_utc();
  write_text(ctx, "manifest.json", manifest.dump(2) + "\n");
}

std::string csv_of_losses(const std::vector<double>& losses) {
  std::ostringstream os;
  os << "round,loss\n";
  os.precision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) os << i << "," << losses[i] << "\n";
  return os.str();
}

std::uint64_t resolve_seed(const json& cfg, const std::optional<std::uint64_t>& override_seed) {
  if (override_seed) return *override_seed;
  return field_or<std::uint64_t>(cfg, "seed", 0);
}

std::vector<DomainPrototype> zero_prototypes(const BenchmarkSplit& split) {
  std::vector<DomainPrototype> nones;
  for (const DomainDataset& d : split.train_domains) {
    EmbedVariantContext vctx;
    vctx.embed_dim = 0;
    vctx.domain_id = d.domain_id;
    nones.push_back(embed_variant(EmbeddingVariant::None, vctx));
  }
  return nones;
}

// ---------------------------------------------------------------------------
// commands

int cmd_gen(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_flag, bool with_timestamp) {
  const json cfg = load_config(config_path);
  reject_unknown_keys(cfg, {"seed", "mother", "lt"}, "gen config");
  const std::uint64_t seed = resolve_seed(cfg, seed_flag);
  const MotherSpec mother = parse_mother(cfg.value("mother", json::object()), seed);
  const LtConfig lt = parse_lt(cfg.value("lt", json::object()));
  const BenchmarkSplit split = generate_lt_benchmark(mother, lt);

  OutputContext ctx{out_dir, with_timestamp};
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  save_benchmark(split, (ctx.out_dir / "dataset.jsonl").string());
  ctx.written.push_back("dataset.jsonl");

  json resolved = cfg;
  resolved["seed"] = seed;
  write_manifest(ctx, "gen", resolved, seed, json::object());
  return 0;
}

int cmd_train_proto(const std::string& config_path, const std::string& data_path,
                    const std::string& out_dir, std::optional<std::uint64_t> seed_flag,
                    bool with_timestamp) {
  const json cfg = load_config(config_path);
  reject_unknown_keys(cfg, {"seed", "proto"}, "train-proto config");
  const std::uint64_t seed = resolve_seed(cfg, seed_flag);
  const BenchmarkSplit split = load_external_dataset(data_path);
  ProtoConfig pc = parse_proto(cfg.value("proto", json::object()), split.train_domains.size());
  pc.sgd.rng_seed = seed;

  const ProtoTrainResult result = proto_train(split.train_domains, pc);
  std::vector<DomainPrototype> protos;
  for (const DomainDataset& d : split.train_domains) {
    protos.push_back(
        compute_prototype(result.net, samples_to_matrix(d.fit, split.input_dim), d.domain_id));
  }

  OutputContext ctx{out_dir, with_timestamp};
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  save_mlp(result.net, (ctx.out_dir / "embedding.json").string());
  ctx.written.push_back("embedding.json");
  save_prototypes(protos, pc.embed_dim, (ctx.out_dir / "prototypes.json").string());
  ctx.written.push_back("prototypes.json");
  write_text(ctx, "train_log.csv", csv_of_losses(result.round_loss));

  json resolved = cfg;
  resolved["seed"] = seed;
  write_manifest(ctx, "train-proto", resolved, seed, json{{"data", data_path}});
  return 0;
}

std::vector<DomainPrototype> prototypes_for_training(const BenchmarkSplit& split,
                                                     const std::string& proto_path) {
  if (proto_path.empty()) {
    throw config_error("this variant needs --proto (prototype archive or embedding checkpoint)");
  }
  const json j = load_config(proto_path);
  if (j.contains("prototypes")) {
    return load_prototypes(proto_path).prototypes;
  }
  // an embedding checkpoint: rebuild training prototypes from the fit pools
  const MlpParams net = mlp_from_json(j);
  std::vector<DomainPrototype> protos;
  for (const DomainDataset& d : split.train_domains) {
    protos.push_back(
        compute_prototype(net, samples_to_matrix(d.fit, split.input_dim), d.domain_id));
  }
  return protos;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& proto_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_flag, bool with_timestamp) {
  const json cfg = load_config(config_path);
  reject_unknown_keys(cfg, {"seed", "train", "proto", "variant"}, "train config");
  const std::uint64_t seed = resolve_seed(cfg, seed_flag);
  const EmbeddingVariant variant =
      variant_from_name(field_or<std::string>(cfg, "variant", "prototype"));
  const BenchmarkSplit split = load_external_dataset(data_path);
  TrainConfig tc = parse_train(cfg.value("train", json::object()));
  tc.sgd.rng_seed = seed;
  if (tc.num_classes == 0) tc.num_classes = split.num_classes;

  OutputContext ctx{out_dir, with_timestamp};
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);

  AdaptiveTrainResult result;
  switch (variant) {
    case EmbeddingVariant::None: {
      result = adaptive_train(build_augmented(split.train_domains, zero_prototypes(split)), tc);
      break;
    }
    case EmbeddingVariant::Prototype:
    case EmbeddingVariant::RandomAtInference: {
      // random-at-inference reuses prototype training; it differs only at eval
      result = adaptive_train(
          build_augmented(split.train_domains, prototypes_for_training(split, proto_path)), tc);
      break;
    }
    case EmbeddingVariant::MeanFeature: {
      TrainConfig erm_cfg = tc;
      erm_cfg.penalty = Penalty::None;
      erm_cfg.penalty_weight = 0.0;
      erm_cfg.sgd.rng_seed = derive_seed(seed, 0x65726d);
      const auto erm =
          adaptive_train(build_augmented(split.train_domains, zero_prototypes(split)), erm_cfg);
      std::vector<DomainPrototype> protos;
      for (const DomainDataset& d : split.train_domains) {
        EmbedVariantContext vctx;
        vctx.erm_feature_net = &erm.model.f_ft;
        const Matrix pts = samples_to_matrix(d.fit, split.input_dim);
        vctx.points = &pts;
        vctx.domain_id = d.domain_id;
        protos.push_back(embed_variant(EmbeddingVariant::MeanFeature, vctx));
      }
      result = adaptive_train(build_augmented(split.train_domains, protos), tc);
      break;
    }
    case EmbeddingVariant::SoftmaxHead: {
      ProtoConfig pc = parse_proto(cfg.value("proto", json::object()), split.train_domains.size());
      pc.sgd.rng_seed = derive_seed(seed, 0x736d6178);
      const SoftmaxHeadResult head = train_softmax_head(split.train_domains, pc);
      save_mlp(head.trunk, (ctx.out_dir / "softmax_trunk.json").string());
      ctx.written.push_back("softmax_trunk.json");
      std::vector<DomainPrototype> protos;
      for (const DomainDataset& d : split.train_domains) {
        protos.push_back(compute_prototype(head.trunk, samples_to_matrix(d.fit, split.input_dim),
                                           d.domain_id));
      }
      result = adaptive_train(build_augmented(split.train_domains, protos), tc);
      break;
    }
  }

  save_model(result.model, (ctx.out_dir / "model.json").string());
  ctx.written.push_back("model.json");
  write_text(ctx, "train_log.csv", csv_of_losses(result.round_loss));

  json resolved = cfg;
  resolved["seed"] = seed;
  resolved["variant"] = variant_name(variant);
  write_manifest(ctx, "train", resolved, seed, json{{"data", data_path}, {"proto", proto_path}});
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& proto_path, const std::string& variant_name_str,
             const std::string& proto_source, std::size_t proto_points, const std::string& out_dir,
             std::optional<std::uint64_t> seed_flag, bool with_timestamp) {
  const BenchmarkSplit split = load_external_dataset(data_path);
  if (split.test_domains.empty()) throw config_error("dataset has no test split");
  const std::uint64_t seed = seed_flag.value_or(0);

  TrainedDomainAware trained;
  trained.model = load_model(model_path);
  trained.variant = variant_from_name(variant_name_str);
  if (trained.model.embed_dim == 0) {
    trained.variant = EmbeddingVariant::None;
  } else if (trained.variant == EmbeddingVariant::MeanFeature) {
    trained.embed_net = trained.model.f_ft;
  } else if (trained.variant != EmbeddingVariant::None) {
    if (proto_path.empty()) {
      throw config_error("eval with variant \"" + variant_name_str +
                         "\" needs --proto (embedding checkpoint)");
    }
    trained.embed_net = load_mlp(proto_path);
  }
  if (trained.variant == EmbeddingVariant::None) {
    trained.train_prototypes = zero_prototypes(split);
  } else {
    for (const DomainDataset& d : split.train_domains) {
      trained.train_prototypes.push_back(compute_prototype(
          trained.embed_net, samples_to_matrix(d.fit, split.input_dim), d.domain_id));
    }
  }

  EvalOptions opts;
  opts.seed = seed;
  opts.prototype_points = proto_points;
  if (proto_source == "pool") {
    opts.source = ProtoSource::HeldOutPool;
  } else if (proto_source == "test-inputs") {
    opts.source = ProtoSource::TestInputs;
  } else {
    throw config_error("--proto-source must be pool or test-inputs");
  }
  const EvalReport report = evaluate_model(trained, split, opts);

  json config_echo{{"model", model_path},
                   {"data", data_path},
                   {"proto", proto_path},
                   {"variant", variant_name(trained.variant)},
                   {"proto_source", proto_source},
                   {"proto_points", proto_points}};
  const std::string hash = config_hash_hex(config_echo.dump());
  const std::string stem = "report_" + hash + "_" + std::to_string(seed);

  OutputContext ctx{out_dir, with_timestamp};
  write_text(ctx, stem + ".csv", report_to_csv(report));
  json jreport = report_to_json(report);
  jreport["config"] = config_echo;
  write_text(ctx, stem + ".json", jreport.dump(2) + "\n");
  write_manifest(ctx, "eval", config_echo, seed, json{{"model", model_path}, {"data", data_path}});
  return 0;
}

int cmd_ablate(const std::string& kind, const std::string& config_path, const std::string& out_dir,
               std::optional<std::uint64_t> seed_flag, std::size_t jobs, bool with_timestamp) {
  const std::set<std::string> kinds{"domain-count", "tail-index", "embedding-variant",
                                    "prototype-count", "adaptivity-gap"};
  if (!kinds.count(kind)) {
    std::string listing;
    for (const std::string& k : kinds) listing += (listing.empty() ? "" : ", ") + k;
    throw config_error("unknown ablation kind \"" + kind + "\" (valid: " + listing + ")");
  }
  const json cfg = load_config(config_path);
  reject_unknown_keys(cfg, {"seed", "seeds", "experiment", "domain_counts", "mode", "f_values",
                            "variants", "prototype_counts"},
                      "ablate config");
  const std::uint64_t seed = resolve_seed(cfg, seed_flag);
  const std::vector<std::uint64_t> seeds =
      field_or<std::vector<std::uint64_t>>(cfg, "seeds", {seed});
  if (seeds.empty()) throw config_error("ablate: seeds must be non-empty");
  const ExperimentConfig ec = parse_experiment(cfg.value("experiment", json::object()));

  std::vector<SweepRow> rows;
  json extra = json::object();
  if (kind == "domain-count") {
    const auto counts = field_or<std::vector<std::size_t>>(cfg, "domain_counts", {6, 12});
    const std::string mode = field_or<std::string>(cfg, "mode", "fixed-per-domain");
    if (mode != "fixed-per-domain" && mode != "fixed-total") {
      throw config_error("ablate mode must be fixed-per-domain or fixed-total");
    }
    rows = ablation_domain_count(ec, counts,
                                 mode == "fixed-total" ? DomainCountMode::FixedTotal
                                                       : DomainCountMode::FixedPerDomain,
                                 seeds, jobs);
  } else if (kind == "tail-index") {
    const auto f_values = field_or<std::vector<double>>(cfg, "f_values", {0.02, 0.2, 1.0});
    rows = ablation_tail_index(ec, f_values, seeds, jobs);
  } else if (kind == "embedding-variant") {
    std::vector<EmbeddingVariant> variants;
    for (const std::string& name : field_or<std::vector<std::string>>(
             cfg, "variants",
             {"none", "random-at-inference", "mean-feature", "softmax-head", "prototype"})) {
      variants.push_back(variant_from_name(name));
    }
    rows = ablation_embedding_variant(ec, variants, seeds, jobs);
  } else if (kind == "prototype-count") {
    const auto n_p =
        field_or<std::vector<std::size_t>>(cfg, "prototype_counts", {25, 50, 100, 200, 400});
    rows = ablation_prototype_count(ec, n_p, seeds, jobs);
  } else {  // adaptivity-gap
    double oracle = 0.0, universal = 0.0, adaptive = 0.0;
    for (const std::uint64_t s : seeds) {
      const AdaptivityGap gap = adaptivity_gap(ec, s);
      rows.push_back(SweepRow{"gap", "oracle", s, 0.0, gap.oracle_acc});
      rows.push_back(SweepRow{"gap", "universal", s, 0.0, gap.universal_acc});
      rows.push_back(SweepRow{"gap", "adaptive", s, 0.0, gap.adaptive_acc});
      oracle += gap.oracle_acc;
      universal += gap.universal_acc;
      adaptive += gap.adaptive_acc;
    }
    const double n = static_cast<double>(seeds.size());
    extra = json{{"oracle_acc", oracle / n},
                 {"universal_acc", universal / n},
                 {"adaptive_acc", adaptive / n}};
  }

  json resolved = cfg;
  resolved["seed"] = seed;
  resolved["kind"] = kind;
  const std::string hash = config_hash_hex(resolved.dump());
  const std::string stem = "ablation_" + kind + "_" + hash + "_" + std::to_string(seed);

  OutputContext ctx{out_dir, with_timestamp};
  write_text(ctx, stem + ".csv", sweep_to_csv(rows));
  json jout = sweep_to_json(rows);
  if (!extra.empty()) jout["summary"] = extra;
  write_text(ctx, stem + ".json", jout.dump(2) + "\n");
  write_manifest(ctx, "ablate", resolved, seed, json::object());
  return 0;
}

int cmd_consistency(const std::string& config_path, const std::string& out_dir,
                    std::optional<std::uint64_t> seed_flag, bool with_timestamp) {
  const json cfg = load_config(config_path);
  reject_unknown_keys(cfg, {"seed", "mother", "lt", "proto", "net", "n_grid", "trials"},
                      "consistency config");
  const std::uint64_t seed = resolve_seed(cfg, seed_flag);
  const MotherSpec mother = parse_mother(cfg.value("mother", json::object()), seed);
  const LtConfig lt = parse_lt(cfg.value("lt", json::object()));
  ProtoConfig pc = parse_proto(cfg.value("proto", json::object()), lt.train_domains);
  pc.sgd.rng_seed = derive_seed(seed, 0x636f6e73);
  const std::string net_mode = field_or<std::string>(cfg, "net", "trained");
  const auto n_grid = field_or<std::vector<std::size_t>>(cfg, "n_grid", {16, 64, 256, 1024, 4096});
  const std::size_t trials = field_or<std::size_t>(cfg, "trials", 20);

  MlpParams net;
  if (net_mode == "trained") {
    const BenchmarkSplit split = generate_lt_benchmark(mother, lt);
    net = proto_train(split.train_domains, pc).net;
  } else if (net_mode == "random") {
    std::vector<std::size_t> dims{mother.input_dim};
    dims.insert(dims.end(), pc.hidden_dims.begin(), pc.hidden_dims.end());
    dims.push_back(pc.embed_dim);
    net = init_mlp(dims, derive_seed(seed, 0x696e6974));
  } else {
    throw config_error("consistency net must be \"trained\" or \"random\"");
  }

  const ConsistencyCurve curve = consistency_experiment(net, mother, n_grid, trials, seed);

  json resolved = cfg;
  resolved["seed"] = seed;
  const std::string hash = config_hash_hex(resolved.dump());
  const std::string stem = "consistency_" + hash + "_" + std::to_string(seed);

  OutputContext ctx{out_dir, with_timestamp};
  write_text(ctx, stem + ".csv", consistency_to_csv(curve));
  write_text(ctx, stem + ".json", consistency_to_json(curve).dump(2) + "\n");
  write_manifest(ctx, "consistency", resolved, seed, json::object());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive domain generalization workbench"};
  app.require_subcommand(1);

  std::string config_path, data_path, proto_path, model_path, out_dir = ".";
  std::string ablate_kind, variant = "prototype", proto_source = "pool";
  std::size_t jobs = 1, proto_points = 0;
  bool no_timestamp = false;
  std::uint64_t seed_value = 0;
  bool seed_given = false;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed_value, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    cmd->add_flag("--no-timestamp", no_timestamp, "omit the manifest timestamp");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a benchmark dataset");
  gen->add_option("--config", config_path, "gen config JSON")->required();
  add_common(gen);

  CLI::App* tproto = app.add_subcommand("train-proto", "train the domain embedding net");
  tproto->add_option("--config", config_path, "proto config JSON")->required();
  tproto->add_option("--data", data_path, "dataset JSONL")->required();
  add_common(tproto);

  CLI::App* train = app.add_subcommand("train", "train the adaptive classifier");
  train->add_option("--config", config_path, "train config JSON")->required();
  train->add_option("--data", data_path, "dataset JSONL")->required();
  train->add_option("--proto", proto_path, "prototype archive or embedding checkpoint");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a model");
  eval->add_option("--model", model_path, "model checkpoint")->required();
  eval->add_option("--data", data_path, "dataset JSONL")->required();
  eval->add_option("--proto", proto_path, "embedding checkpoint for unseen domains");
  eval->add_option("--variant", variant, "embedding variant used at inference");
  eval->add_option("--proto-source", proto_source, "pool | test-inputs");
  eval->add_option("--proto-points", proto_points, "points per unseen-domain prototype (0 = all)");
  add_common(eval);

  CLI::App* ablate = app.add_subcommand("ablate", "run an ablation sweep");
  ablate->add_option("kind", ablate_kind, "sweep kind")->required();
  ablate->add_option("--config", config_path, "ablation config JSON")->required();
  ablate->add_option("--jobs", jobs, "parallel sweep cells");
  add_common(ablate);

  CLI::App* consistency = app.add_subcommand("consistency", "prototype consistency experiment");
  consistency->add_option("--config", config_path, "consistency config JSON")->required();
  add_common(consistency);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  std::optional<std::uint64_t> seed_flag;
  if (seed_given) seed_flag = seed_value;
  const bool with_timestamp = !no_timestamp;

  try {
    if (gen->parsed()) return cmd_gen(config_path, out_dir, seed_flag, with_timestamp);
    if (tproto->parsed()) {
      return cmd_train_proto(config_path, data_path, out_dir, seed_flag, with_timestamp);
    }
    if (train->parsed()) {
      return cmd_train(config_path, data_path, proto_path, out_dir, seed_flag, with_timestamp);
    }
    if (eval->parsed()) {
      return cmd_eval(model_path, data_path, proto_path, variant, proto_source, proto_points,
                      out_dir, seed_flag, with_timestamp);
    }
    if (ablate->parsed()) {
      return cmd_ablate(ablate_kind, config_path, out_dir, seed_flag, jobs, with_timestamp);
    }
    if (consistency->parsed()) {
      return cmd_consistency(config_path, out_dir, seed_flag, with_timestamp);
    }
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
