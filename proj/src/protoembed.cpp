#include "domgen/protoembed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "domgen/errors.hpp"
#include "domgen/loss.hpp"

using nlohmann::json;

namespace domgen {

std::pair<std::size_t, std::size_t> support_query_split(std::size_t batch_per_domain,
                                                        std::size_t n_domains) {
  if (batch_per_domain < 2) throw config_error("per-domain batch must have at least 2 points");
  const double support_frac = n_domains <= 10 ? 0.5 : 0.8;
  std::size_t n_s = static_cast<std::size_t>(support_frac * static_cast<double>(batch_per_domain));
  n_s = std::clamp<std::size_t>(n_s, 1, batch_per_domain - 1);
  return {n_s, batch_per_domain - n_s};
}

std::string variant_name(EmbeddingVariant v) {
  switch (v) {
    case EmbeddingVariant::Prototype: return "prototype";
    case EmbeddingVariant::MeanFeature: return "mean-feature";
    case EmbeddingVariant::SoftmaxHead: return "softmax-head";
    case EmbeddingVariant::RandomAtInference: return "random-at-inference";
    case EmbeddingVariant::None: return "none";
  }
  throw config_error("unknown embedding variant");
}

EmbeddingVariant variant_from_name(const std::string& name) {
  for (EmbeddingVariant v : {EmbeddingVariant::Prototype, EmbeddingVariant::MeanFeature,
                             EmbeddingVariant::SoftmaxHead, EmbeddingVariant::RandomAtInference,
                             EmbeddingVariant::None}) {
    if (variant_name(v) == name) return v;
  }
  throw config_error("unknown embedding variant \"" + name +
                     "\" (expected prototype|mean-feature|softmax-head|"
                     "random-at-inference|none)");
}

Matrix embed_rows(const MlpParams& net, const Matrix& points) {
  Matrix e = mlp_forward(net, points);
  for (double& v : e.data) v = v > 0.0 ? v : 0.0;
  return e;
}

Matrix domain_membership_probs(const Matrix& query_embeddings,
                               const std::vector<DomainPrototype>& prototypes) {
  if (prototypes.empty()) throw config_error("domain_membership_probs: no prototypes");
  for (const DomainPrototype& p : prototypes) {
    if (p.mu.size() != query_embeddings.cols) {
      throw shape_error("domain_membership_probs: prototype \"" + p.domain_id + "\" has dim " +
                        std::to_string(p.mu.size()) + ", queries have dim " +
                        std::to_string(query_embeddings.cols));
    }
  }
  Matrix logits(query_embeddings.rows, prototypes.size());
  for (std::size_t i = 0; i < query_embeddings.rows; ++i) {
    const double* q = query_embeddings.row(i);
    for (std::size_t j = 0; j < prototypes.size(); ++j) {
      const std::vector<double>& mu = prototypes[j].mu;
      double d2 = 0.0;
      for (std::size_t k = 0; k < mu.size(); ++k) {
        const double t = mu[k] - q[k];
        d2 += t * t;
      }
      logits.at(i, j) = -d2;
    }
  }
  return softmax_rows(logits);
}

DomainPrototype compute_prototype(const MlpParams& net, const Matrix& points,
                                  const std::string& domain_id) {
  if (points.rows == 0) throw config_error("compute_prototype: empty point set");
  const Matrix e = embed_rows(net, points);
  std::vector<std::size_t> order(e.rows);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(e.row(a), e.row(a) + e.cols, e.row(b), e.row(b) + e.cols);
  });
  DomainPrototype proto;
  proto.domain_id = domain_id;
  proto.n_points = e.rows;
  proto.mu.assign(e.cols, 0.0);
  for (std::size_t r : order) {
    const double* row = e.row(r);
    for (std::size_t c = 0; c < e.cols; ++c) proto.mu[c] += row[c];
  }
  for (double& v : proto.mu) v /= static_cast<double>(e.rows);
  return proto;
}

Matrix mixup_domains(const Matrix& batch_a, const Matrix& batch_b, double ratio) {
  if (!batch_a.same_shape(batch_b)) {
    throw shape_error("mixup_domains: shapes " + std::to_string(batch_a.rows) + "x" +
                      std::to_string(batch_a.cols) + " vs " + std::to_string(batch_b.rows) + "x" +
                      std::to_string(batch_b.cols));
  }
  if (!(ratio > 0.0 && ratio < 1.0)) throw config_error("mixup_domains: ratio must be in (0,1)");
  Matrix c(batch_a.rows, batch_a.cols);
  for (std::size_t k = 0; k < c.data.size(); ++k) {
    c.data[k] = ratio * batch_a.data[k] + (1.0 - ratio) * batch_b.data[k];
  }
  return c;
}

namespace {

void validate_proto_config(const ProtoConfig& cfg) {
  if (cfg.domains_per_round < 1) throw config_error("proto: domains_per_round must be >= 1");
  if (cfg.support_per_domain < 1) throw config_error("proto: support_per_domain must be >= 1");
  if (cfg.query_per_domain < 1) throw config_error("proto: query_per_domain must be >= 1");
  if (cfg.embed_dim < 1) throw config_error("proto: embed_dim must be >= 1");
  if (!(cfg.sgd.learning_rate > 0.0)) throw config_error("proto: learning rate must be > 0");
  if (cfg.sgd.weight_decay < 0.0) throw config_error("proto: weight decay must be >= 0");
  if (cfg.mixup_enabled &&
      !(0.0 < cfg.mixup_lo && cfg.mixup_lo < cfg.mixup_hi && cfg.mixup_hi < 1.0)) {
    throw config_error("proto: mixup range must satisfy 0 < lo < hi < 1");
  }
}

void validate_domains_for_rounds(const std::vector<DomainDataset>& domains, const ProtoConfig& cfg,
                                 std::size_t per_domain_points) {
  if (domains.size() < 2) throw config_error("proto training needs at least 2 domains");
  const std::size_t n_real = std::min<std::size_t>(cfg.domains_per_round, domains.size());
  const std::size_t round_domains = cfg.mixup_enabled ? 2 * n_real : n_real;
  if (round_domains < cfg.domains_per_round) {
    throw config_error("proto: " + std::to_string(domains.size()) +
                       " domains cannot fill a round of " + std::to_string(cfg.domains_per_round) +
                       (cfg.mixup_enabled ? " even with mixup" : " (enable mixup or reduce N_t)"));
  }
  for (const DomainDataset& d : domains) {
    if (d.fit.size() < per_domain_points) {
      throw config_error("domain \"" + d.domain_id + "\" has " + std::to_string(d.fit.size()) +
                         " fit points, needs " + std::to_string(per_domain_points));
    }
  }
}

Matrix rows_from_fit(const DomainDataset& d, const std::vector<std::size_t>& idx,
                     std::size_t begin, std::size_t count, std::size_t dim) {
  Matrix m(count, dim);
  for (std::size_t i = 0; i < count; ++i) {
    const Sample& s = d.fit[idx[begin + i]];
    if (s.x.size() != dim) {
      throw shape_error("domain \"" + d.domain_id + "\": point dim " + std::to_string(s.x.size()) +
                        " != " + std::to_string(dim));
    }
    std::copy(s.x.begin(), s.x.end(), m.row(i));
  }
  return m;
}

Matrix shuffled_rows(const Matrix& m, SplitMix64& rng) {
  const std::vector<std::size_t> order = rng.sample_without_replacement(m.rows, m.rows);
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::copy(m.row(order[i]), m.row(order[i]) + m.cols, out.row(i));
  }
  return out;
}

struct RoundBatch {
  Matrix inputs;                     // stacked support+query rows, per domain
  std::vector<std::size_t> sup_off;  // support row offset per round domain
  std::vector<std::size_t> qry_off;  // query row offset per round domain
  std::size_t n_domains = 0;
};

// Samples the round's real domains, their support/query rows and (optionally)
// the mixup synthetics, stacked into a single forward batch.
RoundBatch assemble_round(const std::vector<DomainDataset>& domains, const ProtoConfig& cfg,
                          std::size_t input_dim, SplitMix64& rng) {
  const std::size_t n_s = cfg.support_per_domain;
  const std::size_t n_q = cfg.query_per_domain;
  const std::size_t n_real = std::min<std::size_t>(cfg.domains_per_round, domains.size());
  std::vector<std::size_t> picked = rng.sample_without_replacement(domains.size(), n_real);

  std::vector<Matrix> supports, queries;
  for (std::size_t di : picked) {
    const DomainDataset& d = domains[di];
    const std::vector<std::size_t> idx = rng.sample_without_replacement(d.fit.size(), n_s + n_q);
    supports.push_back(rows_from_fit(d, idx, 0, n_s, input_dim));
    queries.push_back(rows_from_fit(d, idx, n_s, n_q, input_dim));
  }

  if (cfg.mixup_enabled) {
    // One synthetic domain per pair of sampled real domains; pairs drawn
    // without replacement, pool refilled if it runs out.
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t a = 0; a < n_real; ++a) {
      for (std::size_t b = a + 1; b < n_real; ++b) pool.emplace_back(a, b);
    }
    std::vector<std::pair<std::size_t, std::size_t>> avail = pool;
    for (std::size_t s = 0; s < n_real; ++s) {
      if (avail.empty()) avail = pool;
      const std::size_t pick = static_cast<std::size_t>(rng.next_below(avail.size()));
      const auto [a, b] = avail[pick];
      avail.erase(avail.begin() + static_cast<std::ptrdiff_t>(pick));
      const double ratio = rng.uniform(cfg.mixup_lo, cfg.mixup_hi);
      supports.push_back(
          mixup_domains(shuffled_rows(supports[a], rng), shuffled_rows(supports[b], rng), ratio));
      queries.push_back(
          mixup_domains(shuffled_rows(queries[a], rng), shuffled_rows(queries[b], rng), ratio));
    }
  }

  RoundBatch batch;
  batch.n_domains = supports.size();
  batch.inputs = Matrix(batch.n_domains * (n_s + n_q), input_dim);
  std::size_t row = 0;
  for (std::size_t d = 0; d < batch.n_domains; ++d) {
    batch.sup_off.push_back(row);
    for (std::size_t i = 0; i < n_s; ++i, ++row) {
      std::copy(supports[d].row(i), supports[d].row(i) + input_dim, batch.inputs.row(row));
    }
    batch.qry_off.push_back(row);
    for (std::size_t i = 0; i < n_q; ++i, ++row) {
      std::copy(queries[d].row(i), queries[d].row(i) + input_dim, batch.inputs.row(row));
    }
  }
  return batch;
}

}  // namespace

ProtoTrainResult proto_train(const std::vector<DomainDataset>& domains, const ProtoConfig& cfg) {
  validate_proto_config(cfg);
  validate_domains_for_rounds(domains, cfg, cfg.support_per_domain + cfg.query_per_domain);
  const std::size_t input_dim = domains.front().fit.front().x.size();

  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.embed_dim);

  ProtoTrainResult result;
  result.net = init_mlp(dims, derive_seed(cfg.sgd.rng_seed, 0x70726f74));
  const std::size_t n_s = cfg.support_per_domain;
  const std::size_t n_q = cfg.query_per_domain;

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    SplitMix64 rng(derive_seed(cfg.sgd.rng_seed, 1, t));
    const RoundBatch batch = assemble_round(domains, cfg, input_dim, rng);
    const std::size_t m = batch.n_domains;

    ForwardCache cache;
    const Matrix out = mlp_forward(result.net, batch.inputs, &cache);
    Matrix emb = out;
    for (double& v : emb.data) v = v > 0.0 ? v : 0.0;

    Matrix protos(m, cfg.embed_dim);
    for (std::size_t d = 0; d < m; ++d) {
      for (std::size_t i = 0; i < n_s; ++i) {
        const double* row = emb.row(batch.sup_off[d] + i);
        for (std::size_t c = 0; c < cfg.embed_dim; ++c) protos.at(d, c) += row[c];
      }
      for (std::size_t c = 0; c < cfg.embed_dim; ++c) {
        protos.at(d, c) /= static_cast<double>(n_s);
      }
    }

    Matrix logits(m * n_q, m);
    std::vector<int> labels(m * n_q);
    std::vector<std::size_t> query_rows(m * n_q);
    std::size_t q = 0;
    for (std::size_t d = 0; d < m; ++d) {
      for (std::size_t i = 0; i < n_q; ++i, ++q) {
        const std::size_t row = batch.qry_off[d] + i;
        query_rows[q] = row;
        labels[q] = static_cast<int>(d);
        for (std::size_t j = 0; j < m; ++j) {
          logits.at(q, j) = -row_sqdist(emb, row, protos, j);
        }
      }
    }

    const CrossEntropyResult ce = cross_entropy_loss(logits, labels);
    result.round_loss.push_back(ce.loss);

    // d loss / d embeddings: query rows get sum_j G_qj * 2(mu_j - e_q); each
    // prototype's gradient sum_q G_qj * 2(e_q - mu_j) spreads evenly over its
    // support rows.
    Matrix demb(emb.rows, emb.cols);
    Matrix dproto(m, cfg.embed_dim);
    for (q = 0; q < m * n_q; ++q) {
      const std::size_t row = query_rows[q];
      const double* e = emb.row(row);
      double* de = demb.row(row);
      for (std::size_t j = 0; j < m; ++j) {
        const double g = ce.dlogits.at(q, j);
        if (g == 0.0) continue;
        const double* mu = protos.row(j);
        double* dmu = dproto.row(j);
        for (std::size_t c = 0; c < cfg.embed_dim; ++c) {
          const double diff = mu[c] - e[c];
          de[c] += 2.0 * g * diff;
          dmu[c] -= 2.0 * g * diff;
        }
      }
    }
    for (std::size_t d = 0; d < m; ++d) {
      const double inv = 1.0 / static_cast<double>(n_s);
      for (std::size_t i = 0; i < n_s; ++i) {
        double* de = demb.row(batch.sup_off[d] + i);
        const double* dmu = dproto.row(d);
        for (std::size_t c = 0; c < cfg.embed_dim; ++c) de[c] += dmu[c] * inv;
      }
    }
    for (std::size_t k = 0; k < demb.data.size(); ++k) {
      if (out.data[k] <= 0.0) demb.data[k] = 0.0;
    }

    const Gradients grads = mlp_backward(result.net, cache, demb);
    result.net = sgd_step(result.net, grads, cfg.sgd);
  }
  return result;
}

SoftmaxHeadResult train_softmax_head(const std::vector<DomainDataset>& domains,
                                     const ProtoConfig& cfg) {
  validate_proto_config(cfg);
  validate_domains_for_rounds(domains, cfg, cfg.support_per_domain + cfg.query_per_domain);
  const std::size_t input_dim = domains.front().fit.front().x.size();
  const std::size_t batch_per_domain = cfg.support_per_domain + cfg.query_per_domain;

  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.embed_dim);
  dims.push_back(domains.size());

  SoftmaxHeadResult result;
  result.full = init_mlp(dims, derive_seed(cfg.sgd.rng_seed, 0x736d6178));

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    SplitMix64 rng(derive_seed(cfg.sgd.rng_seed, 2, t));
    const std::size_t n_real = std::min<std::size_t>(cfg.domains_per_round, domains.size());
    const std::vector<std::size_t> picked = rng.sample_without_replacement(domains.size(), n_real);

    Matrix inputs(n_real * batch_per_domain, input_dim);
    std::vector<int> labels(n_real * batch_per_domain);
    std::size_t row = 0;
    for (std::size_t di : picked) {
      const DomainDataset& d = domains[di];
      const std::vector<std::size_t> idx =
          rng.sample_without_replacement(d.fit.size(), batch_per_domain);
      for (std::size_t i = 0; i < batch_per_domain; ++i, ++row) {
        const Sample& s = d.fit[idx[i]];
        std::copy(s.x.begin(), s.x.end(), inputs.row(row));
        labels[row] = static_cast<int>(di);
      }
    }

    ForwardCache cache;
    const Matrix logits = mlp_forward(result.full, inputs, &cache);
    const CrossEntropyResult ce = cross_entropy_loss(logits, labels);
    result.round_loss.push_back(ce.loss);
    const Gradients grads = mlp_backward(result.full, cache, ce.dlogits);
    result.full = sgd_step(result.full, grads, cfg.sgd);
  }

  result.trunk = result.full;
  result.trunk.layers.pop_back();
  return result;
}

DomainPrototype embed_variant(EmbeddingVariant variant, const EmbedVariantContext& ctx) {
  switch (variant) {
    case EmbeddingVariant::Prototype: {
      if (!ctx.proto_net || !ctx.points) {
        throw config_error("prototype variant needs a trained embedding net and points");
      }
      return compute_prototype(*ctx.proto_net, *ctx.points, ctx.domain_id);
    }
    case EmbeddingVariant::MeanFeature: {
      if (!ctx.erm_feature_net || !ctx.points) {
        throw config_error("mean-feature variant needs the ERM feature extractor and points");
      }
      const Matrix feats = embed_rows(*ctx.erm_feature_net, *ctx.points);
      DomainPrototype proto;
      proto.domain_id = ctx.domain_id;
      proto.n_points = feats.rows;
      proto.mu.assign(feats.cols, 0.0);
      for (std::size_t r = 0; r < feats.rows; ++r) {
        const double* row = feats.row(r);
        for (std::size_t c = 0; c < feats.cols; ++c) proto.mu[c] += row[c];
      }
      for (double& v : proto.mu) v /= static_cast<double>(feats.rows);
      return proto;
    }
    case EmbeddingVariant::SoftmaxHead: {
      if (!ctx.softmax_trunk || !ctx.points) {
        throw config_error("softmax-head variant needs the trained domain-id classifier trunk");
      }
      return compute_prototype(*ctx.softmax_trunk, *ctx.points, ctx.domain_id);
    }
    case EmbeddingVariant::RandomAtInference: {
      if (!ctx.donor) {
        throw config_error("random-at-inference variant needs a donor prototype");
      }
      DomainPrototype proto = *ctx.donor;
      proto.domain_id = ctx.domain_id;
      return proto;
    }
    case EmbeddingVariant::None: {
      // zero vector of length d_D; d_D = 0 drops the concatenation entirely
      DomainPrototype proto;
      proto.domain_id = ctx.domain_id;
      proto.n_points = 1;
      proto.mu.assign(ctx.embed_dim, 0.0);
      return proto;
    }
  }
  throw config_error("unknown embedding variant");
}

FeatureVarianceReport feature_variance(const MlpParams& net,
                                       const std::vector<DomainDataset>& domains) {
  FeatureVarianceReport report;
  for (const DomainDataset& d : domains) {
    if (d.fit.empty()) {
      throw config_error("feature_variance: domain \"" + d.domain_id + "\" is empty");
    }
    const Matrix x = samples_to_matrix(d.fit, d.fit.front().x.size());
    const Matrix e = embed_rows(net, x);
    const DomainPrototype proto = compute_prototype(net, x, d.domain_id);
    double sigma2 = 0.0;
    for (std::size_t r = 0; r < e.rows; ++r) {
      const double* row = e.row(r);
      for (std::size_t c = 0; c < e.cols; ++c) {
        const double t = row[c] - proto.mu[c];
        sigma2 += t * t;
      }
    }
    sigma2 /= static_cast<double>(e.rows);
    report.per_domain_sigma2.emplace_back(d.domain_id, sigma2);
  }
  double total = 0.0;
  for (const auto& [id, s2] : report.per_domain_sigma2) {
    report.max_sigma2 = std::max(report.max_sigma2, s2);
    total += s2;
  }
  report.mean_sigma2 = total / static_cast<double>(report.per_domain_sigma2.size());
  return report;
}

void save_prototypes(const std::vector<DomainPrototype>& protos, std::size_t embed_dim,
                     const std::string& path) {
  json arr = json::array();
  for (const DomainPrototype& p : protos) {
    if (p.mu.size() != embed_dim) {
      throw shape_error("prototype \"" + p.domain_id + "\" has dim " + std::to_string(p.mu.size()) +
                        ", archive expects " + std::to_string(embed_dim));
    }
    arr.push_back({{"domain_id", p.domain_id}, {"n_points", p.n_points}, {"mu", p.mu}});
  }
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << json{{"d_D", embed_dim}, {"prototypes", arr}}.dump(2) << "\n";
  if (!out) throw io_error("write failed: " + path);
}

PrototypeArchive load_prototypes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw parse_error("prototype archive " + path + ": " + e.what());
  }
  PrototypeArchive archive;
  archive.embed_dim = j.at("d_D").get<std::size_t>();
  for (const json& jp : j.at("prototypes")) {
    DomainPrototype p;
    p.domain_id = jp.at("domain_id").get<std::string>();
    p.n_points = jp.at("n_points").get<std::size_t>();
    p.mu = jp.at("mu").get<std::vector<double>>();
    if (p.mu.size() != archive.embed_dim) {
      throw config_error("prototype \"" + p.domain_id + "\" dim mismatch in " + path);
    }
    if (p.n_points < 1) throw config_error("prototype \"" + p.domain_id + "\" has n_points < 1");
    archive.prototypes.push_back(std::move(p));
  }
  return archive;
}

}  // namespace domgen
