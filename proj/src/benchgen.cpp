#include "domgen/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "domgen/errors.hpp"

using nlohmann::json;

namespace domgen {

std::string shift_kind_name(ShiftKind k) {
  switch (k) {
    case ShiftKind::Rotation: return "rotation";
    case ShiftKind::AffineShift: return "affine-shift";
    case ShiftKind::Both: return "both";
  }
  throw config_error("unknown shift kind");
}

ShiftKind shift_kind_from_name(const std::string& name) {
  if (name == "rotation") return ShiftKind::Rotation;
  if (name == "affine-shift") return ShiftKind::AffineShift;
  if (name == "both") return ShiftKind::Both;
  throw config_error("unknown shift kind \"" + name + "\" (expected rotation|affine-shift|both)");
}

long round_half_even(double v) {
  const double floor_v = std::floor(v);
  const double frac = v - floor_v;
  if (frac > 0.5) return static_cast<long>(floor_v) + 1;
  if (frac < 0.5) return static_cast<long>(floor_v);
  const long lo = static_cast<long>(floor_v);
  return lo % 2 == 0 ? lo : lo + 1;
}

MotherSpec make_mother_spec(std::size_t base_classes, std::size_t input_dim, double class_scale,
                            ShiftKind kind, double shift_magnitude, std::uint64_t seed,
                            double mean_sigma, std::size_t n_rotation_planes) {
  if (base_classes < 2) throw config_error("mother: need at least 2 classes");
  if (input_dim < 2) throw config_error("mother: input_dim must be >= 2");
  if (class_scale <= 0.0) throw config_error("mother: class_scale must be > 0");
  if (shift_magnitude <= 0.0) throw config_error("mother: shift_magnitude must be > 0");
  if (mean_sigma <= 0.0) mean_sigma = 2.5 * class_scale;
  if (n_rotation_planes == 0) n_rotation_planes = input_dim / 2;
  if (n_rotation_planes > input_dim / 2) {
    throw config_error("mother: at most input_dim/2 disjoint rotation planes");
  }

  MotherSpec spec;
  spec.base_classes = base_classes;
  spec.input_dim = input_dim;
  spec.class_scale = class_scale;
  spec.shift_kind = kind;
  spec.shift_magnitude = shift_magnitude;
  spec.rng_seed = seed;
  spec.class_means = Matrix(base_classes, input_dim);

  SplitMix64 rng(derive_seed(seed, 0x6d65616e));
  const std::vector<std::size_t> perm = rng.sample_without_replacement(input_dim, input_dim);
  for (std::size_t p = 0; p + 1 < 2 * n_rotation_planes; p += 2) {
    spec.rotation_planes.emplace_back(perm[p], perm[p + 1]);
  }
  const double min_dist = 4.0 * class_scale;
  for (std::size_t c = 0; c < base_classes; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000) {
        throw config_error("mother: could not separate class means; increase mean_sigma or dim");
      }
      for (std::size_t j = 0; j < input_dim; ++j) {
        spec.class_means.at(c, j) = mean_sigma * rng.normal();
      }
      bool ok = true;
      for (std::size_t p = 0; p < c && ok; ++p) {
        if (std::sqrt(row_sqdist(spec.class_means, c, spec.class_means, p)) < min_dist) ok = false;
      }
      if (ok) break;
    }
  }
  return spec;
}

TransformParams sample_transform(const MotherSpec& spec, SplitMix64& rng) {
  TransformParams t;
  const std::size_t d = spec.input_dim;
  if (spec.shift_kind == ShiftKind::Rotation || spec.shift_kind == ShiftKind::Both) {
    // One angle drawn within shift_magnitude of the identity, applied as a
    // Givens composition over the mother's fixed disjoint coordinate pairs:
    // domains form a one-parameter rotation subgroup, so the family stays
    // smooth and low-dimensional while still mixing every paired coordinate.
    if (spec.rotation_planes.empty()) {
      throw config_error("sample_transform: mother has no rotation planes");
    }
    const double theta = rng.uniform(-spec.shift_magnitude, spec.shift_magnitude);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Matrix r(d, d);
    for (std::size_t i = 0; i < d; ++i) r.at(i, i) = 1.0;
    for (const auto& [i, j] : spec.rotation_planes) {
      for (std::size_t col = 0; col < d; ++col) {
        const double ri = r.at(i, col);
        const double rj = r.at(j, col);
        r.at(i, col) = c * ri - s * rj;
        r.at(j, col) = s * ri + c * rj;
      }
    }
    t.rotation = std::move(r);
  }
  if (spec.shift_kind == ShiftKind::AffineShift || spec.shift_kind == ShiftKind::Both) {
    std::vector<double> dir(d);
    double norm = 0.0;
    for (double& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    t.offset.resize(d);
    for (std::size_t i = 0; i < d; ++i) t.offset[i] = spec.shift_magnitude * dir[i] / norm;
  }
  return t;
}

void apply_transform(const TransformParams& t, const double* in, double* out, std::size_t dim) {
  if (t.rotation.rows == dim) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double* rrow = t.rotation.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += rrow[j] * in[j];
      out[i] = s;
    }
  } else {
    std::copy(in, in + dim, out);
  }
  if (!t.offset.empty()) {
    for (std::size_t i = 0; i < dim; ++i) out[i] += t.offset[i];
  }
}

namespace {

std::vector<Sample> sample_points(const MotherSpec& spec, const TransformParams& t,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& counts,
                                  SplitMix64& rng) {
  const std::size_t d = spec.input_dim;
  std::vector<Sample> samples;
  std::vector<double> raw(d);
  for (const auto& [cls, n] : counts) {
    if (cls >= spec.base_classes) {
      throw index_error("sample_domain: class " + std::to_string(cls) + " out of range for " +
                        std::to_string(spec.base_classes) + " base classes");
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        raw[j] = spec.class_means.at(cls, j) + spec.class_scale * rng.normal();
      }
      Sample s;
      s.x.resize(d);
      apply_transform(t, raw.data(), s.x.data(), d);
      s.y = static_cast<int>(cls);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

}  // namespace

DomainDataset sample_domain(const MotherSpec& spec,
                            const std::vector<std::pair<std::size_t, std::size_t>>& class_counts,
                            std::uint64_t domain_seed, const std::string& domain_id) {
  for (const auto& [cls, n] : class_counts) {
    if (n == 0) throw config_error("sample_domain: zero count for class " + std::to_string(cls));
  }
  SplitMix64 rng(domain_seed);
  DomainDataset d;
  d.domain_id = domain_id;
  d.transform_params = sample_transform(spec, rng);
  d.fit = sample_points(spec, d.transform_params, class_counts, rng);
  return d;
}

BenchmarkSplit generate_lt_benchmark(const MotherSpec& spec, const LtConfig& cfg) {
  if (cfg.head_classes > spec.base_classes) {
    throw config_error("lt: head_classes K exceeds base class count");
  }
  if (cfg.tail_fraction < 0.0 || cfg.tail_fraction > 1.0) {
    throw config_error("lt: tail_fraction must be in [0, 1]");
  }
  if (cfg.head_count < 1) throw config_error("lt: head_count A must be >= 1");
  if (cfg.train_domains < 1) throw config_error("lt: need at least one training domain");
  if (cfg.eval_per_class < 1) throw config_error("lt: eval_per_class must be >= 1");
  BenchmarkSplit split;
  split.input_dim = spec.input_dim;
  split.num_classes = spec.base_classes;

  // every domain follows the same long-tailed law: K head classes at the
  // domain's per-class budget, remaining eligible classes at round(budget*f);
  // the eval sub-split mirrors that composition at eval_per_class scale
  const auto lt_counts = [&](const std::vector<std::size_t>& heads,
                             const std::vector<std::size_t>& eligible, std::size_t budget) {
    const long tail = round_half_even(static_cast<double>(budget) * cfg.tail_fraction);
    std::vector<std::pair<std::size_t, std::size_t>> counts;
    for (std::size_t cls : eligible) {
      const bool is_head = std::find(heads.begin(), heads.end(), cls) != heads.end();
      const std::size_t n = is_head ? budget : static_cast<std::size_t>(tail);
      if (n == 0) continue;  // a zeroed tail count omits the class
      counts.emplace_back(cls, n);
    }
    return counts;
  };

  std::set<std::size_t> seen;
  std::vector<std::size_t> all_classes(spec.base_classes);
  for (std::size_t c = 0; c < spec.base_classes; ++c) all_classes[c] = c;

  for (std::size_t i = 0; i < cfg.train_domains; ++i) {
    SplitMix64 rng(derive_seed(spec.rng_seed, 0x747261696e, i));
    std::vector<std::size_t> heads =
        rng.sample_without_replacement(spec.base_classes, cfg.head_classes);
    std::sort(heads.begin(), heads.end());

    DomainDataset d;
    d.domain_id = "train_" + std::to_string(i);
    d.transform_params = sample_transform(spec, rng);
    d.fit = sample_points(spec, d.transform_params, lt_counts(heads, all_classes, cfg.head_count),
                          rng);
    d.eval = sample_points(spec, d.transform_params,
                           lt_counts(heads, all_classes, cfg.eval_per_class), rng);
    for (const Sample& s : d.fit) seen.insert(static_cast<std::size_t>(s.y));
    split.train_domains.push_back(std::move(d));
  }

  const std::vector<std::size_t> seen_list(seen.begin(), seen.end());
  if (seen_list.empty()) throw config_error("lt: no classes present in training domains");

  const auto make_unseen_domain = [&](const std::string& id, std::uint64_t seed,
                                      std::size_t per_class) {
    SplitMix64 rng(seed);
    const std::size_t k = std::min<std::size_t>(cfg.head_classes, seen_list.size());
    std::vector<std::size_t> pick = rng.sample_without_replacement(seen_list.size(), k);
    std::vector<std::size_t> heads;
    for (std::size_t p : pick) heads.push_back(seen_list[p]);
    std::sort(heads.begin(), heads.end());

    DomainDataset d;
    d.domain_id = id;
    d.transform_params = sample_transform(spec, rng);
    d.fit = sample_points(spec, d.transform_params, lt_counts(heads, seen_list, per_class), rng);
    d.eval = sample_points(spec, d.transform_params,
                           lt_counts(heads, seen_list, cfg.eval_per_class), rng);
    return d;
  };

  for (std::size_t i = 0; i < cfg.val_domains; ++i) {
    if (cfg.val_per_class < 1) throw config_error("lt: val_per_class must be >= 1");
    split.val_domains.push_back(make_unseen_domain(
        "val_" + std::to_string(i), derive_seed(spec.rng_seed, 0x76616c, i), cfg.val_per_class));
  }
  for (std::size_t i = 0; i < cfg.test_domains; ++i) {
    if (cfg.test_per_class < 1) throw config_error("lt: test_per_class must be >= 1");
    split.test_domains.push_back(make_unseen_domain(
        "test_" + std::to_string(i), derive_seed(spec.rng_seed, 0x74657374, i), cfg.test_per_class));
  }

  validate_benchmark(split);
  return split;
}

void validate_benchmark(const BenchmarkSplit& split) {
  if (split.train_domains.empty()) throw config_error("benchmark: empty training domain list");
  std::set<std::string> ids;
  std::set<int> train_classes;
  const auto check_domain = [&](const DomainDataset& d, const char* role) {
    if (!ids.insert(d.domain_id).second) {
      throw config_error("benchmark: duplicate domain id \"" + d.domain_id + "\"");
    }
    for (const Sample& s : d.fit) {
      if (s.x.size() != split.input_dim) {
        throw config_error("benchmark: domain \"" + d.domain_id + "\" has a point of dim " +
                           std::to_string(s.x.size()) + ", expected " +
                           std::to_string(split.input_dim));
      }
      if (s.y < 0 || static_cast<std::size_t>(s.y) >= split.num_classes) {
        throw config_error("benchmark: domain \"" + d.domain_id + "\" label " +
                           std::to_string(s.y) + " outside base class range");
      }
    }
    for (const Sample& s : d.eval) {
      if (s.x.size() != split.input_dim || s.y < 0 ||
          static_cast<std::size_t>(s.y) >= split.num_classes) {
        throw config_error("benchmark: invalid eval sample in " + std::string(role) +
                           " domain \"" + d.domain_id + "\"");
      }
    }
  };
  for (const DomainDataset& d : split.train_domains) {
    check_domain(d, "train");
    for (const Sample& s : d.fit) train_classes.insert(s.y);
  }
  for (const DomainDataset& d : split.val_domains) check_domain(d, "val");
  for (const DomainDataset& d : split.test_domains) check_domain(d, "test");

  const auto check_seen = [&](const DomainDataset& d, const char* role) {
    for (const Sample& s : d.fit) {
      if (!train_classes.count(s.y)) {
        throw config_error("benchmark: class " + std::to_string(s.y) + " in " + role +
                           " domain \"" + d.domain_id + "\" absent from all training domains");
      }
    }
    for (const Sample& s : d.eval) {
      if (!train_classes.count(s.y)) {
        throw config_error("benchmark: class " + std::to_string(s.y) + " in " + role +
                           " domain \"" + d.domain_id + "\" absent from all training domains");
      }
    }
  };
  for (const DomainDataset& d : split.val_domains) check_seen(d, "val");
  for (const DomainDataset& d : split.test_domains) check_seen(d, "test");
}

namespace {

void write_domain_lines(std::ofstream& out, const DomainDataset& d, const char* split_name) {
  const auto write = [&](const std::vector<Sample>& samples, const char* sub) {
    for (const Sample& s : samples) {
      json line{{"domain", d.domain_id}, {"split", split_name}, {"sub", sub}, {"x", s.x},
                {"y", s.y}};
      out << line.dump() << "\n";
    }
  };
  write(d.fit, "fit");
  write(d.eval, "eval");
}

}  // namespace

void save_benchmark(const BenchmarkSplit& split, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  json header{{"format", "domgen-data-v1"},
              {"dim", split.input_dim},
              {"classes", split.num_classes},
              {"splits",
               {{"train", split.train_domains.size()},
                {"val", split.val_domains.size()},
                {"test", split.test_domains.size()}}}};
  out << header.dump() << "\n";
  for (const DomainDataset& d : split.train_domains) write_domain_lines(out, d, "train");
  for (const DomainDataset& d : split.val_domains) write_domain_lines(out, d, "val");
  for (const DomainDataset& d : split.test_domains) write_domain_lines(out, d, "test");
  if (!out) throw io_error("write failed: " + path);
}

BenchmarkSplit load_external_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw parse_error(path + ": empty file, header expected");
  ++line_no;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw parse_error(path + " line 1: " + e.what());
  }
  if (!header.is_object() || header.value("format", "") != "domgen-data-v1") {
    throw parse_error(path + " line 1: expected header with format domgen-data-v1");
  }

  BenchmarkSplit split;
  split.input_dim = header.at("dim").get<std::size_t>();
  split.num_classes = header.at("classes").get<std::size_t>();

  // domains keep first-seen order within each split
  std::vector<DomainDataset>* const split_vecs[3] = {&split.train_domains, &split.val_domains,
                                                     &split.test_domains};
  const auto split_index = [&](const std::string& name, std::size_t ln) -> std::size_t {
    if (name == "train") return 0;
    if (name == "val") return 1;
    if (name == "test") return 2;
    throw parse_error(path + " line " + std::to_string(ln) + ": unknown split \"" + name + "\"");
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw parse_error(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    Sample s;
    std::string domain, split_name, sub;
    try {
      domain = rec.at("domain").get<std::string>();
      split_name = rec.at("split").get<std::string>();
      sub = rec.at("sub").get<std::string>();
      s.x = rec.at("x").get<std::vector<double>>();
      s.y = rec.at("y").get<int>();
    } catch (const json::exception& e) {
      throw parse_error(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (sub != "fit" && sub != "eval") {
      throw parse_error(path + " line " + std::to_string(line_no) + ": unknown sub \"" + sub +
                        "\"");
    }
    std::vector<DomainDataset>& vec = *split_vecs[split_index(split_name, line_no)];
    auto it = std::find_if(vec.begin(), vec.end(),
                           [&](const DomainDataset& d) { return d.domain_id == domain; });
    if (it == vec.end()) {
      DomainDataset d;
      d.domain_id = domain;
      vec.push_back(std::move(d));
      it = vec.end() - 1;
    }
    if (sub == "fit") {
      it->fit.push_back(std::move(s));
    } else {
      it->eval.push_back(std::move(s));
    }
  }

  validate_benchmark(split);
  return split;
}

bool benchmark_content_equal(const BenchmarkSplit& a, const BenchmarkSplit& b) {
  if (a.input_dim != b.input_dim || a.num_classes != b.num_classes) return false;
  const auto domains_equal = [](const std::vector<DomainDataset>& x,
                                const std::vector<DomainDataset>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].domain_id != y[i].domain_id) return false;
      const auto samples_equal = [](const std::vector<Sample>& p, const std::vector<Sample>& q) {
        if (p.size() != q.size()) return false;
        for (std::size_t k = 0; k < p.size(); ++k) {
          if (p[k].y != q[k].y || p[k].x != q[k].x) return false;
        }
        return true;
      };
      if (!samples_equal(x[i].fit, y[i].fit) || !samples_equal(x[i].eval, y[i].eval)) return false;
    }
    return true;
  };
  return domains_equal(a.train_domains, b.train_domains) &&
         domains_equal(a.val_domains, b.val_domains) &&
         domains_equal(a.test_domains, b.test_domains);
}

Matrix samples_to_matrix(const std::vector<Sample>& samples, std::size_t dim) {
  Matrix m(samples.size(), dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != dim) {
      throw shape_error("samples_to_matrix: point dim " + std::to_string(samples[i].x.size()) +
                        " != " + std::to_string(dim));
    }
    std::copy(samples[i].x.begin(), samples[i].x.end(), m.row(i));
  }
  return m;
}

std::vector<int> samples_to_labels(const std::vector<Sample>& samples) {
  std::vector<int> labels(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) labels[i] = samples[i].y;
  return labels;
}

}  // namespace domgen
