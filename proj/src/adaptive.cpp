#include "domgen/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "domgen/checkpoint.hpp"
#include "domgen/errors.hpp"
#include "domgen/loss.hpp"

using nlohmann::json;

namespace domgen {

std::string penalty_name(Penalty p) {
  switch (p) {
    case Penalty::None: return "none";
    case Penalty::Mmd: return "mmd";
    case Penalty::Coral: return "coral";
  }
  throw config_error("unknown penalty");
}

Penalty penalty_from_name(const std::string& name) {
  if (name == "none") return Penalty::None;
  if (name == "mmd") return Penalty::Mmd;
  if (name == "coral") return Penalty::Coral;
  throw config_error("unknown penalty \"" + name + "\" (expected none|mmd|coral)");
}

std::vector<AugmentedDomain> build_augmented(const std::vector<DomainDataset>& domains,
                                             const std::vector<DomainPrototype>& prototypes) {
  std::vector<AugmentedDomain> out;
  for (const DomainDataset& d : domains) {
    const auto it = std::find_if(prototypes.begin(), prototypes.end(),
                                 [&](const DomainPrototype& p) { return p.domain_id == d.domain_id; });
    if (it == prototypes.end()) {
      throw config_error("build_augmented: no prototype for domain \"" + d.domain_id + "\"");
    }
    AugmentedDomain ad;
    ad.domain_id = d.domain_id;
    for (const Sample& s : d.fit) {
      ad.samples.push_back(AugmentedSample{s.x, it->mu, s.y});
    }
    out.push_back(std::move(ad));
  }
  return out;
}

AdaptiveModel init_adaptive_model(std::size_t input_dim, std::size_t embed_dim,
                                  std::size_t num_classes, const TrainConfig& cfg,
                                  std::uint64_t seed) {
  if (num_classes < 1) throw config_error("adaptive model needs at least 1 class");
  AdaptiveModel model;
  model.embed_dim = embed_dim;
  model.num_classes = num_classes;
  std::vector<std::size_t> ft_dims{input_dim};
  ft_dims.insert(ft_dims.end(), cfg.ft_hidden_dims.begin(), cfg.ft_hidden_dims.end());
  ft_dims.push_back(cfg.feature_dim);
  model.f_ft = init_mlp(ft_dims, derive_seed(seed, 0x6674));
  model.f_mlp = init_mlp({cfg.feature_dim + embed_dim, cfg.mlp_hidden_dim, num_classes},
                         derive_seed(seed, 0x6d6c70));
  return model;
}

Matrix adaptive_forward(const AdaptiveModel& model, const Matrix& x_batch, const Matrix& mu_batch) {
  if (mu_batch.rows != x_batch.rows) {
    throw shape_error("adaptive_forward: mu rows " + std::to_string(mu_batch.rows) +
                      " != x rows " + std::to_string(x_batch.rows));
  }
  if (mu_batch.cols != model.embed_dim) {
    throw shape_error("adaptive_forward: mu dim " + std::to_string(mu_batch.cols) + " != d_D " +
                      std::to_string(model.embed_dim));
  }
  const Matrix feats = mlp_forward(model.f_ft, x_batch);
  return mlp_forward(model.f_mlp, model.embed_dim == 0 ? feats : hconcat(feats, mu_batch));
}

namespace {

double median_pairwise_distance(const std::vector<Matrix>& features) {
  std::vector<const Matrix*> mats;
  std::size_t total = 0;
  for (const Matrix& m : features) {
    mats.push_back(&m);
    total += m.rows;
  }
  Matrix pooled(total, features.front().cols);
  std::size_t row = 0;
  for (const Matrix* m : mats) {
    for (std::size_t r = 0; r < m->rows; ++r, ++row) {
      std::copy(m->row(r), m->row(r) + m->cols, pooled.row(row));
    }
  }
  std::vector<double> dists;
  dists.reserve(total * (total - 1) / 2);
  for (std::size_t i = 0; i < total; ++i) {
    for (std::size_t j = i + 1; j < total; ++j) {
      dists.push_back(std::sqrt(row_sqdist(pooled, i, pooled, j)));
    }
  }
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  const double med = m % 2 == 1 ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
  return med > 0.0 ? med : 1.0;
}

void validate_penalty_input(const std::vector<Matrix>& features, std::size_t min_rows,
                            const char* who) {
  if (features.size() < 2) throw config_error(std::string(who) + ": needs >= 2 domain batches");
  const std::size_t dim = features.front().cols;
  for (std::size_t d = 0; d < features.size(); ++d) {
    if (features[d].rows < min_rows) {
      throw config_error(std::string(who) + ": domain batch " + std::to_string(d) + " has " +
                         std::to_string(features[d].rows) + " rows, needs >= " +
                         std::to_string(min_rows));
    }
    if (features[d].cols != dim) {
      throw shape_error(std::string(who) + ": inconsistent feature dims");
    }
  }
}

}  // namespace

PenaltyResult mmd_penalty(const std::vector<Matrix>& features_by_domain, BandwidthMode mode,
                          double fixed_bandwidth) {
  validate_penalty_input(features_by_domain, 1, "mmd_penalty");
  const double h =
      mode == BandwidthMode::Median ? median_pairwise_distance(features_by_domain) : fixed_bandwidth;
  if (!(h > 0.0)) throw config_error("mmd_penalty: bandwidth must be > 0");
  const double inv_2h2 = 1.0 / (2.0 * h * h);
  const double inv_h2 = 1.0 / (h * h);

  PenaltyResult res;
  res.bandwidth = h;
  for (const Matrix& m : features_by_domain) res.feature_grads.emplace_back(m.rows, m.cols);

  const std::size_t n_dom = features_by_domain.size();
  const std::size_t dim = features_by_domain.front().cols;
  const double pair_w = 2.0 / static_cast<double>(n_dom * (n_dom - 1));

  for (std::size_t s = 0; s < n_dom; ++s) {
    for (std::size_t t = s + 1; t < n_dom; ++t) {
      const Matrix& a = features_by_domain[s];
      const Matrix& b = features_by_domain[t];
      Matrix& ga = res.feature_grads[s];
      Matrix& gb = res.feature_grads[t];
      const double m = static_cast<double>(a.rows);
      const double p = static_cast<double>(b.rows);

      double term_aa = 0.0, term_bb = 0.0, term_ab = 0.0;
      // within-domain terms; gradients use k'(a_i,a_j) = -k (a_i-a_j)/h^2
      for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.rows; ++j) {
          const double k = std::exp(-row_sqdist(a, i, a, j) * inv_2h2);
          term_aa += k;
          if (i == j) continue;
          const double coef = pair_w * (2.0 / (m * m)) * k * inv_h2;
          for (std::size_t c = 0; c < dim; ++c) {
            ga.at(i, c) -= coef * (a.at(i, c) - a.at(j, c));
          }
        }
      }
      for (std::size_t i = 0; i < b.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) {
          const double k = std::exp(-row_sqdist(b, i, b, j) * inv_2h2);
          term_bb += k;
          if (i == j) continue;
          const double coef = pair_w * (2.0 / (p * p)) * k * inv_h2;
          for (std::size_t c = 0; c < dim; ++c) {
            gb.at(i, c) -= coef * (b.at(i, c) - b.at(j, c));
          }
        }
      }
      for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) {
          const double k = std::exp(-row_sqdist(a, i, b, j) * inv_2h2);
          term_ab += k;
          const double coef = pair_w * (2.0 / (m * p)) * k * inv_h2;
          for (std::size_t c = 0; c < dim; ++c) {
            const double diff = a.at(i, c) - b.at(j, c);
            ga.at(i, c) += coef * diff;
            gb.at(j, c) -= coef * diff;
          }
        }
      }
      res.value += pair_w * (term_aa / (m * m) + term_bb / (p * p) - 2.0 * term_ab / (m * p));
    }
  }
  return res;
}

PenaltyResult coral_penalty(const std::vector<Matrix>& features_by_domain) {
  validate_penalty_input(features_by_domain, 2, "coral_penalty");
  const std::size_t n_dom = features_by_domain.size();
  const std::size_t dim = features_by_domain.front().cols;
  const double pair_w = 2.0 / static_cast<double>(n_dom * (n_dom - 1));
  const double scale = 1.0 / (4.0 * static_cast<double>(dim) * static_cast<double>(dim));

  std::vector<Matrix> centered;
  std::vector<Matrix> covs;
  for (const Matrix& m : features_by_domain) {
    Matrix c = m;
    for (std::size_t col = 0; col < dim; ++col) {
      double mean = 0.0;
      for (std::size_t r = 0; r < m.rows; ++r) mean += m.at(r, col);
      mean /= static_cast<double>(m.rows);
      for (std::size_t r = 0; r < m.rows; ++r) c.at(r, col) -= mean;
    }
    Matrix cov = matmul_at_b(c, c);
    for (double& v : cov.data) v /= static_cast<double>(m.rows - 1);
    centered.push_back(std::move(c));
    covs.push_back(std::move(cov));
  }

  PenaltyResult res;
  for (const Matrix& m : features_by_domain) res.feature_grads.emplace_back(m.rows, m.cols);

  for (std::size_t s = 0; s < n_dom; ++s) {
    for (std::size_t t = s + 1; t < n_dom; ++t) {
      Matrix delta = covs[s];
      for (std::size_t k = 0; k < delta.data.size(); ++k) delta.data[k] -= covs[t].data[k];
      double fro2 = 0.0;
      for (double v : delta.data) fro2 += v * v;
      res.value += pair_w * scale * fro2;

      // dL/dX = 2 Xc G / (m-1) with G = pair_w * scale * 2 * delta (sym)
      Matrix g = delta;
      for (double& v : g.data) v *= pair_w * scale * 2.0;
      const Matrix da = matmul(centered[s], g);
      const Matrix db = matmul(centered[t], g);
      const double inv_ms = 1.0 / static_cast<double>(features_by_domain[s].rows - 1);
      const double inv_mt = 1.0 / static_cast<double>(features_by_domain[t].rows - 1);
      for (std::size_t k = 0; k < da.data.size(); ++k) {
        res.feature_grads[s].data[k] += 2.0 * da.data[k] * inv_ms;
      }
      for (std::size_t k = 0; k < db.data.size(); ++k) {
        res.feature_grads[t].data[k] -= 2.0 * db.data[k] * inv_mt;
      }
    }
  }
  return res;
}

namespace {

struct ForwardState {
  ForwardCache ft_cache;
  ForwardCache mlp_cache;
  Matrix concat;
  Matrix logits;
};

ForwardState adaptive_forward_cached(const AdaptiveModel& model, const Matrix& x_batch,
                                     const Matrix& mu_batch) {
  ForwardState st;
  const Matrix feats = mlp_forward(model.f_ft, x_batch, &st.ft_cache);
  st.concat = model.embed_dim == 0 ? feats : hconcat(feats, mu_batch);
  st.logits = mlp_forward(model.f_mlp, st.concat, &st.mlp_cache);
  return st;
}

PenaltyResult eval_penalty(const Matrix& hidden, const DomainRanges& ranges, Penalty penalty,
                           BandwidthMode mode, double fixed_bandwidth) {
  std::vector<Matrix> by_domain;
  for (const auto& [begin, count] : ranges) {
    Matrix m(count, hidden.cols);
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(hidden.row(begin + i), hidden.row(begin + i) + hidden.cols, m.row(i));
    }
    by_domain.push_back(std::move(m));
  }
  return penalty == Penalty::Mmd ? mmd_penalty(by_domain, mode, fixed_bandwidth)
                                 : coral_penalty(by_domain);
}

}  // namespace

AdaptiveLossGrads adaptive_loss_grads(const AdaptiveModel& model, const Matrix& x_batch,
                                      const Matrix& mu_batch, const std::vector<int>& labels,
                                      const DomainRanges& ranges, Penalty penalty, double gamma,
                                      BandwidthMode mode, double fixed_bandwidth) {
  ForwardState st = adaptive_forward_cached(model, x_batch, mu_batch);
  const CrossEntropyResult ce = cross_entropy_loss(st.logits, labels);

  AdaptiveLossGrads out;
  out.cross_entropy = ce.loss;

  Matrix dconcat;
  const bool with_penalty = penalty != Penalty::None && gamma != 0.0;
  if (with_penalty) {
    if (model.f_mlp.layers.size() < 2) {
      throw config_error("penalties need a hidden layer in f_mlp");
    }
    const std::size_t hidden_act = model.f_mlp.layers.size() - 1;  // activations[] index
    const Matrix& hidden = st.mlp_cache.activations[hidden_act];
    PenaltyResult pen = eval_penalty(hidden, ranges, penalty, mode, fixed_bandwidth);
    out.penalty_value = pen.value;
    Matrix dhidden(hidden.rows, hidden.cols);
    for (std::size_t d = 0; d < ranges.size(); ++d) {
      const auto& [begin, count] = ranges[d];
      for (std::size_t i = 0; i < count; ++i) {
        double* dst = dhidden.row(begin + i);
        const double* src = pen.feature_grads[d].row(i);
        for (std::size_t c = 0; c < hidden.cols; ++c) dst[c] += gamma * src[c];
      }
    }
    out.mlp = mlp_backward_inject(model.f_mlp, st.mlp_cache, ce.dlogits, hidden_act - 1, dhidden,
                                  &dconcat);
  } else {
    out.mlp = mlp_backward(model.f_mlp, st.mlp_cache, ce.dlogits, &dconcat);
  }
  out.total_loss = ce.loss + gamma * out.penalty_value;

  Matrix dfeat(dconcat.rows, model.f_ft.output_dim());
  for (std::size_t r = 0; r < dconcat.rows; ++r) {
    std::copy(dconcat.row(r), dconcat.row(r) + dfeat.cols, dfeat.row(r));
  }
  out.ft = mlp_backward(model.f_ft, st.ft_cache, dfeat);
  return out;
}

double adaptive_objective(const AdaptiveModel& model, const Matrix& x_batch,
                          const Matrix& mu_batch, const std::vector<int>& labels,
                          const DomainRanges& ranges, Penalty penalty, double gamma,
                          BandwidthMode mode, double fixed_bandwidth) {
  ForwardState st = adaptive_forward_cached(model, x_batch, mu_batch);
  const CrossEntropyResult ce = cross_entropy_loss(st.logits, labels);
  if (penalty == Penalty::None || gamma == 0.0) return ce.loss;
  const std::size_t hidden_act = model.f_mlp.layers.size() - 1;
  const PenaltyResult pen =
      eval_penalty(st.mlp_cache.activations[hidden_act], ranges, penalty, mode, fixed_bandwidth);
  return ce.loss + gamma * pen.value;
}

AdaptiveTrainResult adaptive_train(const std::vector<AugmentedDomain>& augmented,
                                   const TrainConfig& cfg) {
  if (augmented.empty()) throw config_error("adaptive_train: no domains");
  if (!(cfg.sgd.learning_rate > 0.0)) throw config_error("adaptive_train: learning rate must be > 0");
  if (cfg.penalty_weight < 0.0) throw config_error("adaptive_train: penalty weight must be >= 0");
  if (cfg.batch_per_domain < 1) throw config_error("adaptive_train: batch_per_domain must be >= 1");

  const std::size_t input_dim = augmented.front().samples.empty()
                                    ? 0
                                    : augmented.front().samples.front().x.size();
  std::size_t embed_dim = 0;
  int max_label = 0;
  for (const AugmentedDomain& d : augmented) {
    if (d.samples.empty()) {
      throw config_error("adaptive_train: domain \"" + d.domain_id + "\" has no samples");
    }
    for (const AugmentedSample& s : d.samples) {
      if (s.x.size() != input_dim) {
        throw shape_error("adaptive_train: inconsistent input dims in \"" + d.domain_id + "\"");
      }
      max_label = std::max(max_label, s.y);
    }
    const std::size_t mu_dim = d.samples.front().mu.size();
    if (&d == &augmented.front()) {
      embed_dim = mu_dim;
    } else if (mu_dim != embed_dim) {
      throw shape_error("adaptive_train: inconsistent prototype dims");
    }
  }
  const std::size_t num_classes =
      cfg.num_classes > 0 ? cfg.num_classes : static_cast<std::size_t>(max_label) + 1;

  // Prototypes are standardized across training domains (centered, scaled by
  // the pooled standard deviation) so the mu channel is conditioned like the
  // feature channel during optimization. The affine map is folded back into
  // f_mlp's first layer afterwards, so the returned model consumes raw
  // prototypes.
  std::vector<double> mu_mean(embed_dim, 0.0);
  double mu_scale = 1.0;
  if (embed_dim > 0) {
    for (const AugmentedDomain& d : augmented) {
      for (std::size_t j = 0; j < embed_dim; ++j) {
        mu_mean[j] += d.samples.front().mu[j] / static_cast<double>(augmented.size());
      }
    }
    double var = 0.0;
    for (const AugmentedDomain& d : augmented) {
      for (std::size_t j = 0; j < embed_dim; ++j) {
        const double c = d.samples.front().mu[j] - mu_mean[j];
        var += c * c / static_cast<double>(augmented.size() * embed_dim);
      }
    }
    if (var > 0.0) mu_scale = std::sqrt(var);
  }

  AdaptiveTrainResult result;
  result.model = init_adaptive_model(input_dim, embed_dim, num_classes, cfg,
                                     derive_seed(cfg.sgd.rng_seed, 0x61646170));

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    SplitMix64 rng(derive_seed(cfg.sgd.rng_seed, 3, t));

    std::size_t total_rows = 0;
    for (const AugmentedDomain& d : augmented) {
      total_rows += std::min<std::size_t>(cfg.batch_per_domain, d.samples.size());
    }
    Matrix x(total_rows, input_dim);
    Matrix mu(total_rows, embed_dim);
    std::vector<int> labels(total_rows);
    DomainRanges ranges;
    std::size_t row = 0;
    for (const AugmentedDomain& d : augmented) {
      const std::size_t take = std::min<std::size_t>(cfg.batch_per_domain, d.samples.size());
      const std::vector<std::size_t> idx = rng.sample_without_replacement(d.samples.size(), take);
      ranges.emplace_back(row, take);
      for (std::size_t i = 0; i < take; ++i, ++row) {
        const AugmentedSample& s = d.samples[idx[i]];
        std::copy(s.x.begin(), s.x.end(), x.row(row));
        for (std::size_t j = 0; j < embed_dim; ++j) {
          mu.at(row, j) = (s.mu[j] - mu_mean[j]) / mu_scale;
        }
        labels[row] = s.y;
      }
    }

    AdaptiveLossGrads lg;
    try {
      lg = adaptive_loss_grads(result.model, x, mu, labels, ranges, cfg.penalty,
                               cfg.penalty_weight, cfg.bandwidth_mode, cfg.fixed_bandwidth);
    } catch (const numeric_error& e) {
      throw numeric_error("adaptive_train round " + std::to_string(t) + ": " + e.what());
    }
    if (!std::isfinite(lg.total_loss)) {
      throw numeric_error("adaptive_train round " + std::to_string(t) + ": non-finite loss");
    }
    result.round_loss.push_back(lg.total_loss);
    result.model.f_ft = sgd_step(result.model.f_ft, lg.ft, cfg.sgd);
    result.model.f_mlp = sgd_step(result.model.f_mlp, lg.mlp, cfg.sgd);
  }

  // fold the standardization into the first f_mlp layer: raw mu in,
  // identical logits out
  if (embed_dim > 0) {
    MlpLayer& l0 = result.model.f_mlp.layers.front();
    const std::size_t feat_dim = result.model.f_ft.output_dim();
    for (std::size_t j = 0; j < embed_dim; ++j) {
      double* wrow = l0.w.row(feat_dim + j);
      const double shift = mu_mean[j] / mu_scale;
      for (std::size_t c = 0; c < l0.w.cols; ++c) {
        l0.b.at(0, c) -= shift * wrow[c];
        wrow[c] /= mu_scale;
      }
    }
  }
  return result;
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const double* row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols; ++c) {
      if (row[c] > row[best]) best = c;  // strict: ties keep the lowest index
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> adaptive_infer(const AdaptiveModel& model, const DomainPrototype& prototype,
                                const Matrix& x_batch) {
  if (prototype.mu.size() != model.embed_dim) {
    throw shape_error("adaptive_infer: prototype dim " + std::to_string(prototype.mu.size()) +
                      " != d_D " + std::to_string(model.embed_dim));
  }
  Matrix mu(x_batch.rows, model.embed_dim);
  for (std::size_t r = 0; r < x_batch.rows; ++r) {
    std::copy(prototype.mu.begin(), prototype.mu.end(), mu.row(r));
  }
  return argmax_rows(adaptive_forward(model, x_batch, mu));
}

void save_model(const AdaptiveModel& model, const std::string& path) {
  json j{{"format", "domgen-model-v1"},
         {"d_D", model.embed_dim},
         {"num_classes", model.num_classes},
         {"f_ft", mlp_to_json(model.f_ft)},
         {"f_mlp", mlp_to_json(model.f_mlp)}};
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw io_error("write failed: " + path);
}

AdaptiveModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw parse_error("model " + path + ": " + e.what());
  }
  if (j.value("format", "") != "domgen-model-v1") {
    throw config_error("model " + path + ": missing or unsupported format field");
  }
  AdaptiveModel model;
  model.embed_dim = j.at("d_D").get<std::size_t>();
  model.num_classes = j.at("num_classes").get<std::size_t>();
  model.f_ft = mlp_from_json(j.at("f_ft"));
  model.f_mlp = mlp_from_json(j.at("f_mlp"));
  if (model.f_ft.output_dim() + model.embed_dim != model.f_mlp.input_dim()) {
    throw config_error("model " + path + ": d_feat + d_D does not match f_mlp input dim");
  }
  return model;
}

}  // namespace domgen
