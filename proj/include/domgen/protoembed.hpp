#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "domgen/dataset.hpp"
#include "domgen/mlp.hpp"

namespace domgen {

struct ProtoConfig {
  std::size_t embed_dim = 32;           // d_D
  std::vector<std::size_t> hidden_dims{64};
  std::size_t domains_per_round = 4;    // N_t
  std::size_t support_per_domain = 12;  // N_s
  std::size_t query_per_domain = 4;     // N_q
  std::size_t rounds = 1000;            // T
  SgdConfig sgd{0.1, 1e-5, 0};
  bool mixup_enabled = true;
  double mixup_lo = 0.2;
  double mixup_hi = 0.8;
};

// Support/query sizes for a per-domain batch: 50% support up to 10 training
// domains, 80% support beyond that.
std::pair<std::size_t, std::size_t> support_query_split(std::size_t batch_per_domain,
                                                        std::size_t n_domains);

struct DomainPrototype {
  std::string domain_id;
  std::vector<double> mu;
  std::size_t n_points = 0;
};

enum class EmbeddingVariant { Prototype, MeanFeature, SoftmaxHead, RandomAtInference, None };

std::string variant_name(EmbeddingVariant v);
EmbeddingVariant variant_from_name(const std::string& name);

struct FeatureVarianceReport {
  std::vector<std::pair<std::string, double>> per_domain_sigma2;
  double max_sigma2 = 0.0;
  double mean_sigma2 = 0.0;
};

// The domain feature map: network output with a trailing ReLU.
Matrix embed_rows(const MlpParams& net, const Matrix& points);

// Row i, col j = softmax_j(-||mu_j - q_i||^2); rows sum to 1 within 1e-12.
Matrix domain_membership_probs(const Matrix& query_embeddings,
                               const std::vector<DomainPrototype>& prototypes);

// Mean embedding over rows, accumulated in canonical (lexicographically
// sorted) row order so the result is bit-identical under row permutation.
DomainPrototype compute_prototype(const MlpParams& net, const Matrix& points,
                                  const std::string& domain_id);

// ratio*A + (1-ratio)*B rowwise; callers pair rows by index after their own
// independent shuffles.
Matrix mixup_domains(const Matrix& batch_a, const Matrix& batch_b, double ratio);

struct ProtoTrainResult {
  MlpParams net;
  std::vector<double> round_loss;  // J per round, length = rounds
};

ProtoTrainResult proto_train(const std::vector<DomainDataset>& domains, const ProtoConfig& cfg);

struct SoftmaxHeadResult {
  MlpParams full;   // trunk + linear head over domain ids
  MlpParams trunk;  // embedding layers only
  std::vector<double> round_loss;
};

// Same trunk topology as proto_train but optimized with cross-entropy on
// domain identity; the embedding is the penultimate activation.
SoftmaxHeadResult train_softmax_head(const std::vector<DomainDataset>& domains,
                                     const ProtoConfig& cfg);

struct EmbedVariantContext {
  const MlpParams* proto_net = nullptr;
  const MlpParams* erm_feature_net = nullptr;  // feature extractor of the ERM baseline
  const MlpParams* softmax_trunk = nullptr;
  const Matrix* points = nullptr;
  const DomainPrototype* donor = nullptr;  // prototype of a different domain
  std::size_t embed_dim = 0;
  std::string domain_id;
};

DomainPrototype embed_variant(EmbeddingVariant variant, const EmbedVariantContext& ctx);

// Per-domain mean of ||phi(x) - mu||^2 over the fit split.
FeatureVarianceReport feature_variance(const MlpParams& net,
                                       const std::vector<DomainDataset>& domains);

// {"d_D": int, "prototypes": [{"domain_id", "n_points", "mu": [...]}]}
void save_prototypes(const std::vector<DomainPrototype>& protos, std::size_t embed_dim,
                     const std::string& path);
struct PrototypeArchive {
  std::size_t embed_dim = 0;
  std::vector<DomainPrototype> prototypes;
};
PrototypeArchive load_prototypes(const std::string& path);

}  // namespace domgen
