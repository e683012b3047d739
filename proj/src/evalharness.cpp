#include "domgen/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "domgen/errors.hpp"

using nlohmann::json;

namespace domgen {

double accuracy(const Matrix& logits, const std::vector<int>& labels, std::size_t k) {
  if (labels.size() != logits.rows) {
    throw shape_error("accuracy: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(logits.rows) + " rows");
  }
  if (k < 1) throw config_error("accuracy: k must be >= 1");
  if (logits.rows == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const double* row = logits.row(r);
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols) {
      throw index_error("accuracy: label " + std::to_string(y) + " out of range");
    }
    const double ly = row[static_cast<std::size_t>(y)];
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < logits.cols; ++c) {
      if (row[c] > ly || (row[c] == ly && c < static_cast<std::size_t>(y))) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> enumerate_grid(const HyperGrid& grid) {
  if (grid.names.empty() || grid.names.size() != grid.values.size()) {
    throw config_error("hyper grid: names and value lists must align and be non-empty");
  }
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    if (grid.values[i].empty()) {
      throw config_error("hyper grid: parameter \"" + grid.names[i] + "\" has no values");
    }
  }
  std::vector<std::vector<double>> points;
  std::vector<std::size_t> idx(grid.values.size(), 0);
  for (;;) {
    std::vector<double> point;
    for (std::size_t i = 0; i < idx.size(); ++i) point.push_back(grid.values[i][idx[i]]);
    points.push_back(std::move(point));
    std::size_t i = idx.size();
    while (i-- > 0) {
      if (++idx[i] < grid.values[i].size()) break;
      idx[i] = 0;
      if (i == 0) return points;
    }
  }
}

LodoResult leave_one_domain_out(std::size_t n_domains, const HyperGrid& grid,
                                const LodoTrialFn& trial) {
  if (n_domains < 2) throw config_error("leave_one_domain_out needs >= 2 domains");
  LodoResult res;
  res.points = enumerate_grid(grid);
  for (const std::vector<double>& point : res.points) {
    double total = 0.0;
    for (std::size_t heldout = 0; heldout < n_domains; ++heldout) {
      total += trial(point, heldout);
    }
    res.mean_scores.push_back(total / static_cast<double>(n_domains));
  }
  res.best_index = 0;
  for (std::size_t i = 1; i < res.mean_scores.size(); ++i) {
    if (res.mean_scores[i] > res.mean_scores[res.best_index]) res.best_index = i;
  }
  res.best_point = res.points[res.best_index];
  return res;
}

// ---------------------------------------------------------------------------

namespace {

// One fresh domain over all base classes, class drawn uniformly per point.
Matrix draw_domain_points(const MotherSpec& spec, const TransformParams& t, std::size_t n,
                          SplitMix64& rng) {
  Matrix out(n, spec.input_dim);
  std::vector<double> raw(spec.input_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = static_cast<std::size_t>(rng.next_below(spec.base_classes));
    for (std::size_t j = 0; j < spec.input_dim; ++j) {
      raw[j] = spec.class_means.at(cls, j) + spec.class_scale * rng.normal();
    }
    apply_transform(t, raw.data(), out.row(i), spec.input_dim);
  }
  return out;
}

}  // namespace

ConsistencyCurve consistency_experiment(const MlpParams& net, const MotherSpec& spec,
                                        const std::vector<std::size_t>& n_grid,
                                        std::size_t trials, std::uint64_t seed) {
  if (n_grid.empty()) throw config_error("consistency: n_grid is empty");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1]) throw config_error("consistency: n_grid must increase");
  }
  if (trials < 1) throw config_error("consistency: trials must be >= 1");

  SplitMix64 transform_rng(derive_seed(seed, 0x636f6e73));
  const TransformParams t = sample_transform(spec, transform_rng);

  const std::size_t n_oracle = 64 * n_grid.back();
  SplitMix64 oracle_rng(derive_seed(seed, 0x6f7261636c));
  const Matrix oracle_points = draw_domain_points(spec, t, n_oracle, oracle_rng);
  const DomainPrototype oracle = compute_prototype(net, oracle_points, "oracle");

  ConsistencyCurve curve;
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    const std::size_t n = n_grid[gi];
    double total = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
      SplitMix64 rng(derive_seed(seed, 0x7472 + gi, trial));
      const Matrix pts = draw_domain_points(spec, t, n, rng);
      const DomainPrototype proto = compute_prototype(net, pts, "trial");
      double err = 0.0;
      for (std::size_t c = 0; c < proto.mu.size(); ++c) {
        err = std::max(err, std::abs(proto.mu[c] - oracle.mu[c]));
      }
      total += err;
    }
    curve.points.emplace_back(n, total / static_cast<double>(trials));
  }

  // least squares on (log n, log err), excluding zero-ish errors
  std::vector<std::pair<double, double>> fit_pts;
  for (const auto& [n, err] : curve.points) {
    if (err >= 1e-12) fit_pts.emplace_back(std::log(static_cast<double>(n)), std::log(err));
  }
  if (fit_pts.size() < 2) {
    curve.valid_fit = false;
    curve.slope = std::numeric_limits<double>::quiet_NaN();
    curve.intercept = std::numeric_limits<double>::quiet_NaN();
    return curve;
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : fit_pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(fit_pts.size());
  const double denom = m * sxx - sx * sx;
  curve.slope = (m * sxy - sx * sy) / denom;
  curve.intercept = (sy - curve.slope * sx) / m;
  curve.valid_fit = true;
  return curve;
}

// ---------------------------------------------------------------------------

BenchmarkSplit generate_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const MotherSpec spec =
      make_mother_spec(cfg.classes, cfg.dim, cfg.class_scale, cfg.shift_kind, cfg.shift_magnitude,
                       seed, cfg.mean_sigma, cfg.rotation_planes);
  return generate_lt_benchmark(spec, cfg.lt);
}

namespace {

std::vector<DomainPrototype> none_prototypes(const std::vector<DomainDataset>& domains,
                                             std::size_t embed_dim) {
  std::vector<DomainPrototype> protos;
  for (const DomainDataset& d : domains) {
    EmbedVariantContext ctx;
    ctx.embed_dim = embed_dim;
    ctx.domain_id = d.domain_id;
    protos.push_back(embed_variant(EmbeddingVariant::None, ctx));
  }
  return protos;
}

std::vector<DomainPrototype> prototypes_from_net(const MlpParams& net,
                                                 const std::vector<DomainDataset>& domains,
                                                 std::size_t input_dim) {
  std::vector<DomainPrototype> protos;
  for (const DomainDataset& d : domains) {
    protos.push_back(compute_prototype(net, samples_to_matrix(d.fit, input_dim), d.domain_id));
  }
  return protos;
}

}  // namespace

TrainedDomainAware train_domain_aware(const BenchmarkSplit& split, EmbeddingVariant variant,
                                      const ProtoConfig& proto_cfg, const TrainConfig& train_cfg,
                                      std::uint64_t seed) {
  TrainedDomainAware out;
  out.variant = variant;
  const std::size_t dim = split.input_dim;

  TrainConfig tc = train_cfg;
  tc.sgd.rng_seed = derive_seed(seed, 0x747261696e);
  if (tc.num_classes == 0) tc.num_classes = split.num_classes;
  ProtoConfig pc = proto_cfg;
  pc.sgd.rng_seed = derive_seed(seed, 0x70726f746f);

  switch (variant) {
    case EmbeddingVariant::None: {
      out.train_prototypes = none_prototypes(split.train_domains, 0);
      break;
    }
    case EmbeddingVariant::Prototype:
    case EmbeddingVariant::RandomAtInference: {
      out.embed_net = proto_train(split.train_domains, pc).net;
      out.train_prototypes = prototypes_from_net(out.embed_net, split.train_domains, dim);
      break;
    }
    case EmbeddingVariant::SoftmaxHead: {
      out.embed_net = train_softmax_head(split.train_domains, pc).trunk;
      out.train_prototypes = prototypes_from_net(out.embed_net, split.train_domains, dim);
      break;
    }
    case EmbeddingVariant::MeanFeature: {
      // the ERM baseline's feature extractor provides the embedding
      TrainConfig erm_cfg = tc;
      erm_cfg.penalty = Penalty::None;
      erm_cfg.penalty_weight = 0.0;
      const auto erm = adaptive_train(
          build_augmented(split.train_domains, none_prototypes(split.train_domains, 0)), erm_cfg);
      out.embed_net = erm.model.f_ft;
      for (const DomainDataset& d : split.train_domains) {
        EmbedVariantContext ctx;
        ctx.erm_feature_net = &out.embed_net;
        const Matrix pts = samples_to_matrix(d.fit, dim);
        ctx.points = &pts;
        ctx.domain_id = d.domain_id;
        out.train_prototypes.push_back(embed_variant(EmbeddingVariant::MeanFeature, ctx));
      }
      break;
    }
  }

  out.model = adaptive_train(build_augmented(split.train_domains, out.train_prototypes), tc).model;
  return out;
}

namespace {

Matrix prototype_pool(const DomainDataset& d, const EvalOptions& opts, std::size_t dim) {
  const std::vector<Sample>& source =
      opts.source == ProtoSource::HeldOutPool ? d.fit : d.eval;
  if (source.empty()) {
    throw config_error("no points available to build a prototype for domain \"" + d.domain_id +
                       "\"");
  }
  Matrix all = samples_to_matrix(source, dim);
  if (opts.prototype_points == 0 || opts.prototype_points >= all.rows) return all;
  SplitMix64 rng(derive_seed(opts.seed, 0x706f6f6c, std::hash<std::string>{}(d.domain_id)));
  const std::vector<std::size_t> idx =
      rng.sample_without_replacement(all.rows, opts.prototype_points);
  Matrix out(opts.prototype_points, dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(all.row(idx[i]), all.row(idx[i]) + dim, out.row(i));
  }
  return out;
}

DomainPrototype unseen_prototype(const TrainedDomainAware& trained, const DomainDataset& d,
                                 const EvalOptions& opts, std::size_t dim) {
  if (trained.model.embed_dim == 0) {
    EmbedVariantContext ctx;
    ctx.embed_dim = 0;
    ctx.domain_id = d.domain_id;
    return embed_variant(EmbeddingVariant::None, ctx);
  }
  const Matrix pts = prototype_pool(d, opts, dim);
  return compute_prototype(trained.embed_net, pts, d.domain_id);
}

EvalRow eval_domain(const TrainedDomainAware& trained, const DomainDataset& d,
                    const DomainPrototype& proto, const EvalOptions& opts, std::size_t dim,
                    const char* split_name) {
  if (d.eval.empty()) {
    throw config_error("domain \"" + d.domain_id + "\" has no eval split");
  }
  const Matrix x = samples_to_matrix(d.eval, dim);
  const std::vector<int> labels = samples_to_labels(d.eval);
  Matrix mu(x.rows, trained.model.embed_dim);
  for (std::size_t r = 0; r < x.rows; ++r) {
    std::copy(proto.mu.begin(), proto.mu.end(), mu.row(r));
  }
  const Matrix logits = adaptive_forward(trained.model, x, mu);
  EvalRow row;
  row.domain_id = d.domain_id;
  row.split = split_name;
  row.n_points = x.rows;
  row.top1 = accuracy(logits, labels, 1);
  row.topk = accuracy(logits, labels, opts.top_k);
  return row;
}

}  // namespace

EvalReport evaluate_model(const TrainedDomainAware& trained, const BenchmarkSplit& split,
                          const EvalOptions& opts) {
  EvalReport report;
  report.top_k = opts.top_k;
  report.seed = opts.seed;
  const std::size_t dim = split.input_dim;

  // training domains keep the prototypes they were trained with
  for (const DomainDataset& d : split.train_domains) {
    const auto it = std::find_if(
        trained.train_prototypes.begin(), trained.train_prototypes.end(),
        [&](const DomainPrototype& p) { return p.domain_id == d.domain_id; });
    if (it == trained.train_prototypes.end()) {
      throw config_error("evaluate_model: no training prototype for \"" + d.domain_id + "\"");
    }
    report.per_domain.push_back(eval_domain(trained, d, *it, opts, dim, "train"));
  }

  // unseen domains build prototypes from their pools; the random-at-inference
  // variant rotates them within the split so every domain gets a donor
  const auto eval_unseen = [&](const std::vector<DomainDataset>& domains, const char* name) {
    std::vector<DomainPrototype> protos;
    for (const DomainDataset& d : domains) {
      protos.push_back(unseen_prototype(trained, d, opts, dim));
    }
    if (trained.variant == EmbeddingVariant::RandomAtInference && protos.size() > 1) {
      std::rotate(protos.begin(), protos.begin() + 1, protos.end());
      for (std::size_t i = 0; i < domains.size(); ++i) protos[i].domain_id = domains[i].domain_id;
    }
    for (std::size_t i = 0; i < domains.size(); ++i) {
      report.per_domain.push_back(eval_domain(trained, domains[i], protos[i], opts, dim, name));
    }
  };
  eval_unseen(split.val_domains, "val");
  eval_unseen(split.test_domains, "test");

  double train1 = 0.0, traink = 0.0, test1 = 0.0, testk = 0.0;
  std::size_t n_train = 0, n_test = 0;
  for (const EvalRow& row : report.per_domain) {
    if (row.split == "train") {
      train1 += row.top1;
      traink += row.topk;
      ++n_train;
    } else if (row.split == "test") {
      test1 += row.top1;
      testk += row.topk;
      ++n_test;
    }
  }
  if (n_train > 0) {
    report.train_top1 = train1 / static_cast<double>(n_train);
    report.train_topk = traink / static_cast<double>(n_train);
  }
  if (n_test > 0) {
    report.test_top1 = test1 / static_cast<double>(n_test);
    report.test_topk = testk / static_cast<double>(n_test);
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

void parallel_cells(std::size_t n_cells, std::size_t jobs,
                    const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n_cells <= 1) {
    for (std::size_t i = 0; i < n_cells; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::exception_ptr first_error;
  std::mutex mu;
  std::size_t next = 0;
  const std::size_t n_workers = std::min(jobs, n_cells);
  for (std::size_t w = 0; w < n_workers; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= n_cells || first_error) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

SweepRow make_row(const std::string& setting, const std::string& algorithm, std::uint64_t seed,
                  const EvalReport& report) {
  return SweepRow{setting, algorithm, seed, report.train_top1, report.test_top1};
}

// ERM and DA-ERM on one benchmark; shared by the dataset ablations.
std::pair<SweepRow, SweepRow> run_erm_and_da(const ExperimentConfig& cfg,
                                             const std::string& setting, std::uint64_t seed) {
  const BenchmarkSplit split = generate_for_seed(cfg, seed);
  EvalOptions opts;
  opts.top_k = cfg.top_k;
  opts.seed = seed;
  const auto erm =
      train_domain_aware(split, EmbeddingVariant::None, cfg.proto, cfg.train, derive_seed(seed, 1));
  const auto da = train_domain_aware(split, EmbeddingVariant::Prototype, cfg.proto, cfg.train,
                                     derive_seed(seed, 2));
  return {make_row(setting, "erm", seed, evaluate_model(erm, split, opts)),
          make_row(setting, "da-erm", seed, evaluate_model(da, split, opts))};
}

}  // namespace

std::vector<SweepRow> ablation_domain_count(const ExperimentConfig& cfg,
                                            const std::vector<std::size_t>& domain_counts,
                                            DomainCountMode mode,
                                            const std::vector<std::uint64_t>& seeds,
                                            std::size_t jobs) {
  if (domain_counts.size() < 2) throw config_error("domain-count ablation needs >= 2 N values");
  const std::size_t max_n = *std::max_element(domain_counts.begin(), domain_counts.end());
  const std::size_t total = cfg.lt.head_count * max_n;

  std::vector<std::vector<SweepRow>> cells(domain_counts.size() * seeds.size());
  parallel_cells(cells.size(), jobs, [&](std::size_t cell) {
    const std::size_t ni = cell / seeds.size();
    const std::size_t si = cell % seeds.size();
    ExperimentConfig c = cfg;
    c.lt.train_domains = domain_counts[ni];
    if (mode == DomainCountMode::FixedTotal) {
      c.lt.head_count = std::max<std::size_t>(1, total / domain_counts[ni]);
    }
    const auto [erm, da] =
        run_erm_and_da(c, "N=" + std::to_string(domain_counts[ni]), seeds[si]);
    cells[cell] = {erm, da};
  });

  std::vector<SweepRow> rows;
  for (const auto& cell : cells) rows.insert(rows.end(), cell.begin(), cell.end());
  return rows;
}

std::vector<SweepRow> ablation_tail_index(const ExperimentConfig& cfg,
                                          const std::vector<double>& f_values,
                                          const std::vector<std::uint64_t>& seeds,
                                          std::size_t jobs) {
  if (f_values.empty()) throw config_error("tail-index ablation needs f values");
  std::vector<std::vector<SweepRow>> cells(f_values.size() * seeds.size());
  parallel_cells(cells.size(), jobs, [&](std::size_t cell) {
    const std::size_t fi = cell / seeds.size();
    const std::size_t si = cell % seeds.size();
    ExperimentConfig c = cfg;
    c.lt.tail_fraction = f_values[fi];
    std::ostringstream setting;
    setting << "f=" << f_values[fi];
    const auto [erm, da] = run_erm_and_da(c, setting.str(), seeds[si]);
    cells[cell] = {erm, da};
  });
  std::vector<SweepRow> rows;
  for (const auto& cell : cells) rows.insert(rows.end(), cell.begin(), cell.end());
  return rows;
}

std::vector<SweepRow> ablation_embedding_variant(const ExperimentConfig& cfg,
                                                 const std::vector<EmbeddingVariant>& variants,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 std::size_t jobs) {
  if (variants.empty()) throw config_error("embedding-variant ablation needs variants");
  std::vector<std::vector<SweepRow>> cells(variants.size() * seeds.size());
  parallel_cells(cells.size(), jobs, [&](std::size_t cell) {
    const std::size_t vi = cell / seeds.size();
    const std::size_t si = cell % seeds.size();
    const std::uint64_t seed = seeds[si];
    const BenchmarkSplit split = generate_for_seed(cfg, seed);
    EvalOptions opts;
    opts.top_k = cfg.top_k;
    opts.seed = seed;
    // none shares the ERM stream, random-at-inference reuses the
    // prototype-trained model's stream; the rest get their own
    std::uint64_t train_seed = 0;
    switch (variants[vi]) {
      case EmbeddingVariant::None: train_seed = derive_seed(seed, 1); break;
      case EmbeddingVariant::Prototype:
      case EmbeddingVariant::RandomAtInference: train_seed = derive_seed(seed, 2); break;
      case EmbeddingVariant::MeanFeature: train_seed = derive_seed(seed, 3); break;
      case EmbeddingVariant::SoftmaxHead: train_seed = derive_seed(seed, 4); break;
    }
    const auto trained =
        train_domain_aware(split, variants[vi], cfg.proto, cfg.train, train_seed);
    cells[cell] = {make_row(variant_name(variants[vi]), "da-" + variant_name(variants[vi]), seed,
                            evaluate_model(trained, split, opts))};
  });
  std::vector<SweepRow> rows;
  for (const auto& cell : cells) rows.insert(rows.end(), cell.begin(), cell.end());
  return rows;
}

std::vector<SweepRow> ablation_prototype_count(const ExperimentConfig& cfg,
                                               const std::vector<std::size_t>& n_p_values,
                                               const std::vector<std::uint64_t>& seeds,
                                               std::size_t jobs) {
  for (std::size_t n_p : n_p_values) {
    if (n_p < 1) throw config_error("prototype-count ablation: n_p must be >= 1");
  }
  std::vector<std::vector<SweepRow>> cells(seeds.size());
  parallel_cells(cells.size(), jobs, [&](std::size_t si) {
    const std::uint64_t seed = seeds[si];
    const BenchmarkSplit split = generate_for_seed(cfg, seed);
    const auto trained = train_domain_aware(split, EmbeddingVariant::Prototype, cfg.proto,
                                            cfg.train, derive_seed(seed, 2));
    for (std::size_t n_p : n_p_values) {
      EvalOptions opts;
      opts.top_k = cfg.top_k;
      opts.seed = seed;
      opts.prototype_points = n_p;
      cells[si].push_back(make_row("n_p=" + std::to_string(n_p), "da-erm", seed,
                                   evaluate_model(trained, split, opts)));
    }
  });
  std::vector<SweepRow> rows;
  for (const auto& cell : cells) rows.insert(rows.end(), cell.begin(), cell.end());
  return rows;
}

AdaptivityGap adaptivity_gap(const ExperimentConfig& cfg, std::uint64_t seed) {
  const BenchmarkSplit split = generate_for_seed(cfg, seed);
  EvalOptions opts;
  opts.top_k = cfg.top_k;
  opts.seed = seed;

  AdaptivityGap gap;
  const auto universal =
      train_domain_aware(split, EmbeddingVariant::None, cfg.proto, cfg.train, derive_seed(seed, 1));
  gap.universal_acc = evaluate_model(universal, split, opts).test_top1;
  const auto adaptive = train_domain_aware(split, EmbeddingVariant::Prototype, cfg.proto,
                                           cfg.train, derive_seed(seed, 2));
  gap.adaptive_acc = evaluate_model(adaptive, split, opts).test_top1;

  // oracle: one supervised model per test domain, trained on that domain's
  // own labeled fit split
  double oracle_total = 0.0;
  for (std::size_t i = 0; i < split.test_domains.size(); ++i) {
    const DomainDataset& d = split.test_domains[i];
    BenchmarkSplit one;
    one.input_dim = split.input_dim;
    one.num_classes = split.num_classes;
    one.train_domains.push_back(d);
    const auto oracle = train_domain_aware(one, EmbeddingVariant::None, cfg.proto, cfg.train,
                                           derive_seed(seed, 100 + i));
    oracle_total += evaluate_model(oracle, one, opts).train_top1;
  }
  gap.oracle_acc = oracle_total / static_cast<double>(split.test_domains.size());
  return gap;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "domain,split,n_points,top1,top" << report.top_k << "\n";
  for (const EvalRow& row : report.per_domain) {
    os << row.domain_id << "," << row.split << "," << row.n_points << "," << fmt(row.top1) << ","
       << fmt(row.topk) << "\n";
  }
  os << "aggregate,train,," << fmt(report.train_top1) << "," << fmt(report.train_topk) << "\n";
  os << "aggregate,test,," << fmt(report.test_top1) << "," << fmt(report.test_topk) << "\n";
  return os.str();
}

json report_to_json(const EvalReport& report) {
  json rows = json::array();
  for (const EvalRow& row : report.per_domain) {
    rows.push_back({{"domain", row.domain_id},
                    {"split", row.split},
                    {"n_points", row.n_points},
                    {"top1", row.top1},
                    {"topk", row.topk}});
  }
  return json{{"per_domain", rows},
              {"train_top1", report.train_top1},
              {"train_topk", report.train_topk},
              {"test_top1", report.test_top1},
              {"test_topk", report.test_topk},
              {"top_k", report.top_k},
              {"seed", report.seed},
              {"config", report.config_echo}};
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "setting,algorithm,seed,train_top1,test_top1\n";
  std::vector<std::pair<std::string, std::string>> group_order;
  std::map<std::pair<std::string, std::string>, std::vector<const SweepRow*>> groups;
  for (const SweepRow& row : rows) {
    os << row.setting << "," << row.algorithm << "," << row.seed << "," << fmt(row.train_top1)
       << "," << fmt(row.test_top1) << "\n";
    const auto key = std::make_pair(row.setting, row.algorithm);
    if (!groups.count(key)) group_order.push_back(key);
    groups[key].push_back(&row);
  }
  const auto mean_std = [](const std::vector<const SweepRow*>& g, auto field) {
    double mean = 0.0;
    for (const SweepRow* r : g) mean += r->*field;
    mean /= static_cast<double>(g.size());
    double var = 0.0;
    for (const SweepRow* r : g) var += (r->*field - mean) * (r->*field - mean);
    const double sd = g.size() > 1 ? std::sqrt(var / static_cast<double>(g.size() - 1)) : 0.0;
    return std::make_pair(mean, sd);
  };
  for (const auto& key : group_order) {
    const auto& g = groups[key];
    const auto [tr_m, tr_s] = mean_std(g, &SweepRow::train_top1);
    const auto [te_m, te_s] = mean_std(g, &SweepRow::test_top1);
    os << key.first << "," << key.second << ",mean±std," << fmt(tr_m) << "±" << fmt(tr_s) << ","
       << fmt(te_m) << "±" << fmt(te_s) << "\n";
  }
  return os.str();
}

json sweep_to_json(const std::vector<SweepRow>& rows) {
  json arr = json::array();
  for (const SweepRow& row : rows) {
    arr.push_back({{"setting", row.setting},
                   {"algorithm", row.algorithm},
                   {"seed", row.seed},
                   {"train_top1", row.train_top1},
                   {"test_top1", row.test_top1}});
  }
  return json{{"rows", arr}};
}

std::string consistency_to_csv(const ConsistencyCurve& curve) {
  std::ostringstream os;
  os << "n,mean_sup_error\n";
  for (const auto& [n, err] : curve.points) {
    os << n << "," << fmt(err) << "\n";
  }
  return os.str();
}

json consistency_to_json(const ConsistencyCurve& curve) {
  json pts = json::array();
  for (const auto& [n, err] : curve.points) pts.push_back({{"n", n}, {"error", err}});
  json j{{"points", pts}, {"valid_fit", curve.valid_fit}};
  if (curve.valid_fit) {
    j["slope"] = curve.slope;
    j["intercept"] = curve.intercept;
  } else {
    j["slope"] = nullptr;
    j["intercept"] = nullptr;
  }
  return j;
}

std::string config_hash_hex(const std::string& canonical) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace domgen
