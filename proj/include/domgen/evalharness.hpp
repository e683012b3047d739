#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "domgen/adaptive.hpp"
#include "domgen/benchgen.hpp"
#include "domgen/dataset.hpp"
#include "domgen/protoembed.hpp"

namespace domgen {

// Fraction of rows whose true label is among the top-k logits; ties resolve
// toward lower class indices (k=1 then matches adaptive_infer).
double accuracy(const Matrix& logits, const std::vector<int>& labels, std::size_t k);

struct EvalRow {
  std::string domain_id;
  std::string split;  // train | val | test
  double top1 = 0.0;
  double topk = 0.0;
  std::size_t n_points = 0;
};

struct EvalReport {
  std::vector<EvalRow> per_domain;
  double train_top1 = 0.0;
  double train_topk = 0.0;
  double test_top1 = 0.0;
  double test_topk = 0.0;
  std::size_t top_k = 5;
  std::uint64_t seed = 0;
  std::string config_echo;
};

// ---------------------------------------------------------------------------
// leave-one-domain-out model selection

struct HyperGrid {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;  // one list per name
};

// Cartesian product in odometer order, first parameter slowest.
std::vector<std::vector<double>> enumerate_grid(const HyperGrid& grid);

// Returns validation accuracy over the training domains for one trial with
// the given grid point and held-out domain index.
using LodoTrialFn = std::function<double(const std::vector<double>& point, std::size_t heldout)>;

struct LodoResult {
  std::size_t best_index = 0;
  std::vector<double> best_point;
  std::vector<std::vector<double>> points;
  std::vector<double> mean_scores;  // per grid point, averaged over trials
};

LodoResult leave_one_domain_out(std::size_t n_domains, const HyperGrid& grid,
                                const LodoTrialFn& trial);

// ---------------------------------------------------------------------------
// consistency experiment

struct ConsistencyCurve {
  std::vector<std::pair<std::size_t, double>> points;  // (n, mean sup-norm error)
  double slope = 0.0;
  double intercept = 0.0;
  bool valid_fit = false;  // false when too few nonzero errors to fit
};

// Sup-norm distance between n-point prototypes and an oracle prototype from
// 64*max(n_grid) points of one fresh domain, averaged over trials per n;
// slope fit by least squares on (log n, log error), skipping errors < 1e-12.
ConsistencyCurve consistency_experiment(const MlpParams& net, const MotherSpec& spec,
                                        const std::vector<std::size_t>& n_grid,
                                        std::size_t trials, std::uint64_t seed);

// ---------------------------------------------------------------------------
// experiment pipeline shared by the ablation drivers and the CLI

// Defaults are the desk rotation benchmark: shift_magnitude tuned so the
// pooled ERM baseline lands mid-range on test domains.
struct ExperimentConfig {
  std::size_t classes = 20;
  std::size_t dim = 16;
  double class_scale = 1.0;
  ShiftKind shift_kind = ShiftKind::Rotation;
  double shift_magnitude = 2.0;
  double mean_sigma = 0.82;
  std::size_t rotation_planes = 0;  // 0 -> input_dim/2
  LtConfig lt;
  ProtoConfig proto;
  TrainConfig train;
  std::size_t top_k = 5;
};

BenchmarkSplit generate_for_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// A trained classifier plus everything needed to embed unseen domains.
struct TrainedDomainAware {
  AdaptiveModel model;
  EmbeddingVariant variant = EmbeddingVariant::None;
  MlpParams embed_net;  // proto net, softmax trunk or ERM extractor; unused for None
  std::vector<DomainPrototype> train_prototypes;
};

TrainedDomainAware train_domain_aware(const BenchmarkSplit& split, EmbeddingVariant variant,
                                      const ProtoConfig& proto_cfg, const TrainConfig& train_cfg,
                                      std::uint64_t seed);

enum class ProtoSource { HeldOutPool, TestInputs };

struct EvalOptions {
  ProtoSource source = ProtoSource::HeldOutPool;
  std::size_t prototype_points = 0;  // n_p; 0 = full pool
  std::size_t top_k = 5;
  std::uint64_t seed = 0;
};

EvalReport evaluate_model(const TrainedDomainAware& trained, const BenchmarkSplit& split,
                          const EvalOptions& opts);

// ---------------------------------------------------------------------------
// ablation drivers

struct SweepRow {
  std::string setting;
  std::string algorithm;
  std::uint64_t seed = 0;
  double train_top1 = 0.0;
  double test_top1 = 0.0;
};

enum class DomainCountMode { FixedPerDomain, FixedTotal };

std::vector<SweepRow> ablation_domain_count(const ExperimentConfig& cfg,
                                            const std::vector<std::size_t>& domain_counts,
                                            DomainCountMode mode,
                                            const std::vector<std::uint64_t>& seeds,
                                            std::size_t jobs = 1);

std::vector<SweepRow> ablation_tail_index(const ExperimentConfig& cfg,
                                          const std::vector<double>& f_values,
                                          const std::vector<std::uint64_t>& seeds,
                                          std::size_t jobs = 1);

std::vector<SweepRow> ablation_embedding_variant(const ExperimentConfig& cfg,
                                                 const std::vector<EmbeddingVariant>& variants,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 std::size_t jobs = 1);

std::vector<SweepRow> ablation_prototype_count(const ExperimentConfig& cfg,
                                               const std::vector<std::size_t>& n_p_values,
                                               const std::vector<std::uint64_t>& seeds,
                                               std::size_t jobs = 1);

struct AdaptivityGap {
  double oracle_acc = 0.0;     // per-test-domain supervised reference
  double universal_acc = 0.0;  // pooled ERM
  double adaptive_acc = 0.0;   // DA-ERM
};

AdaptivityGap adaptivity_gap(const ExperimentConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// reporting

std::string report_to_csv(const EvalReport& report);
nlohmann::json report_to_json(const EvalReport& report);

// One row per (setting, algorithm, seed) plus one "mean±std" aggregate row
// per (setting, algorithm) group, in first-seen order.
std::string sweep_to_csv(const std::vector<SweepRow>& rows);
nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);

std::string consistency_to_csv(const ConsistencyCurve& curve);
nlohmann::json consistency_to_json(const ConsistencyCurve& curve);

// FNV-1a of a canonical config string; embedded in report file names.
std::string config_hash_hex(const std::string& canonical);

}  // namespace domgen
