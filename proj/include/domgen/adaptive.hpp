#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "domgen/dataset.hpp"
#include "domgen/mlp.hpp"
#include "domgen/protoembed.hpp"

namespace domgen {

// One input with its domain's prototype appended.
struct AugmentedSample {
  std::vector<double> x;
  std::vector<double> mu;
  int y = 0;
};

struct AugmentedDomain {
  std::string domain_id;
  std::vector<AugmentedSample> samples;
};

// Feature extractor plus classifier head over the concatenated (feature, mu)
// input. embed_dim may be zero: the model then ignores prototypes entirely
// and is the plain ERM baseline.
struct AdaptiveModel {
  MlpParams f_ft;
  MlpParams f_mlp;
  std::size_t embed_dim = 0;  // d_D
  std::size_t num_classes = 0;
};

enum class Penalty { None, Mmd, Coral };

std::string penalty_name(Penalty p);
Penalty penalty_from_name(const std::string& name);

enum class BandwidthMode { Median, Fixed };

struct TrainConfig {
  std::size_t rounds = 1500;          // T
  std::size_t batch_per_domain = 16;
  SgdConfig sgd{0.1, 1e-5, 0};
  Penalty penalty = Penalty::None;
  double penalty_weight = 0.0;        // gamma
  BandwidthMode bandwidth_mode = BandwidthMode::Median;
  double fixed_bandwidth = 1.0;
  std::size_t feature_dim = 64;       // d_feat
  std::vector<std::size_t> ft_hidden_dims{64};
  std::size_t mlp_hidden_dim = 64;    // d_mlp
  std::size_t num_classes = 0;        // 0 -> inferred from labels
};

std::vector<AugmentedDomain> build_augmented(const std::vector<DomainDataset>& domains,
                                             const std::vector<DomainPrototype>& prototypes);

AdaptiveModel init_adaptive_model(std::size_t input_dim, std::size_t embed_dim,
                                  std::size_t num_classes, const TrainConfig& cfg,
                                  std::uint64_t seed);

// logits = F_mlp([F_ft(x) || mu])
Matrix adaptive_forward(const AdaptiveModel& model, const Matrix& x_batch, const Matrix& mu_batch);

struct PenaltyResult {
  double value = 0.0;
  std::vector<Matrix> feature_grads;  // one per domain batch
  double bandwidth = 0.0;             // MMD only
};

// Mean over unordered domain pairs of the Gaussian-kernel MMD^2 V-statistic
// (all ordered pairs including self-pairs). Median-heuristic bandwidth uses
// the median pairwise distance of the pooled batch; gradients treat the
// bandwidth as a constant.
PenaltyResult mmd_penalty(const std::vector<Matrix>& features_by_domain, BandwidthMode mode,
                          double fixed_bandwidth = 1.0);

// Mean over unordered pairs of ||C_s - C_t||_F^2 / (4 d_f^2) with sample
// covariances (m-1 denominator).
PenaltyResult coral_penalty(const std::vector<Matrix>& features_by_domain);

// Half-open row ranges (begin, count) grouping a stacked batch by domain.
using DomainRanges = std::vector<std::pair<std::size_t, std::size_t>>;

struct AdaptiveLossGrads {
  double total_loss = 0.0;
  double cross_entropy = 0.0;
  double penalty_value = 0.0;
  Gradients ft;
  Gradients mlp;
};

// Cross-entropy plus gamma * penalty applied to the d_mlp hidden layer of
// f_mlp; gradients flow into both nets with no stop-gradient.
AdaptiveLossGrads adaptive_loss_grads(const AdaptiveModel& model, const Matrix& x_batch,
                                      const Matrix& mu_batch, const std::vector<int>& labels,
                                      const DomainRanges& ranges, Penalty penalty, double gamma,
                                      BandwidthMode mode, double fixed_bandwidth);

// Loss value only, same objective; finite-difference oracle hook.
double adaptive_objective(const AdaptiveModel& model, const Matrix& x_batch,
                          const Matrix& mu_batch, const std::vector<int>& labels,
                          const DomainRanges& ranges, Penalty penalty, double gamma,
                          BandwidthMode mode, double fixed_bandwidth);

struct AdaptiveTrainResult {
  AdaptiveModel model;
  std::vector<double> round_loss;
};

AdaptiveTrainResult adaptive_train(const std::vector<AugmentedDomain>& augmented,
                                   const TrainConfig& cfg);

// Argmax per row; ties break toward the lowest class index.
std::vector<int> adaptive_infer(const AdaptiveModel& model, const DomainPrototype& prototype,
                                const Matrix& x_batch);

std::vector<int> argmax_rows(const Matrix& logits);

// {"format": "domgen-model-v1", "d_D", "num_classes", "f_ft", "f_mlp"}
void save_model(const AdaptiveModel& model, const std::string& path);
AdaptiveModel load_model(const std::string& path);

}  // namespace domgen
