#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "domgen/adaptive.hpp"
#include "domgen/benchgen.hpp"
#include "domgen/rng.hpp"

using namespace domgen;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, SplitMix64& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

// brute-force V-statistic MMD^2 for one pair, plus the median bandwidth of
// the pooled batch, written independently of the implementation
double oracle_mmd_pair(const Matrix& a, const Matrix& b, double h) {
  const auto kern = [&](const double* x, const double* y, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::exp(-s / (2.0 * h * h));
  };
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.rows; ++j) aa += kern(a.row(i), a.row(j), a.cols);
  }
  for (std::size_t i = 0; i < b.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) bb += kern(b.row(i), b.row(j), b.cols);
  }
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) ab += kern(a.row(i), b.row(j), a.cols);
  }
  const double m = static_cast<double>(a.rows), p = static_cast<double>(b.rows);
  return aa / (m * m) + bb / (p * p) - 2.0 * ab / (m * p);
}

double oracle_median_distance(const std::vector<Matrix>& batches) {
  std::vector<std::vector<double>> rows;
  for (const Matrix& m : batches) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      rows.emplace_back(m.row(r), m.row(r) + m.cols);
    }
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < rows[i].size(); ++k) {
        s += (rows[i][k] - rows[j][k]) * (rows[i][k] - rows[j][k]);
      }
      d.push_back(std::sqrt(s));
    }
  }
  std::sort(d.begin(), d.end());
  return d.size() % 2 == 1 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
}

// brute-force covariance-alignment value for one pair
double oracle_coral_pair(const Matrix& a, const Matrix& b) {
  const auto cov = [](const Matrix& m) {
    const std::size_t d = m.cols;
    std::vector<double> mean(d, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < d; ++c) mean[c] += m.at(r, c);
    }
    for (double& v : mean) v /= static_cast<double>(m.rows);
    Matrix out(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < m.rows; ++r) {
          s += (m.at(r, i) - mean[i]) * (m.at(r, j) - mean[j]);
        }
        out.at(i, j) = s / static_cast<double>(m.rows - 1);
      }
    }
    return out;
  };
  const Matrix ca = cov(a), cb = cov(b);
  double fro2 = 0.0;
  for (std::size_t k = 0; k < ca.data.size(); ++k) {
    fro2 += (ca.data[k] - cb.data[k]) * (ca.data[k] - cb.data[k]);
  }
  const double d = static_cast<double>(a.cols);
  return fro2 / (4.0 * d * d);
}

std::vector<AugmentedDomain> toy_augmented(std::uint64_t seed, std::size_t n_domains = 3,
                                           std::size_t per_domain = 24, std::size_t dim = 4,
                                           std::size_t embed = 3, int classes = 3) {
  SplitMix64 rng(seed);
  std::vector<AugmentedDomain> out;
  for (std::size_t d = 0; d < n_domains; ++d) {
    AugmentedDomain dom;
    dom.domain_id = "d" + std::to_string(d);
    std::vector<double> mu(embed);
    for (double& v : mu) v = rng.normal();
    for (std::size_t i = 0; i < per_domain; ++i) {
      AugmentedSample s;
      s.x.resize(dim);
      const int y = static_cast<int>(rng.next_below(classes));
      for (std::size_t j = 0; j < dim; ++j) s.x[j] = rng.normal() + y;
      s.mu = mu;
      s.y = y;
      dom.samples.push_back(std::move(s));
    }
    out.push_back(std::move(dom));
  }
  return out;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_CASE("build_augmented pairs every sample with its domain prototype") {
  std::vector<DomainDataset> domains(2);
  domains[0].domain_id = "a";
  domains[0].fit = {{{1.0, 2.0}, 0}, {{3.0, 4.0}, 1}};
  domains[1].domain_id = "b";
  domains[1].fit = {{{5.0, 6.0}, 0}};
  DomainPrototype pa{"a", {1.0, 0.0}, 2};
  DomainPrototype pb{"b", {0.0, 1.0}, 1};

  auto augmented = build_augmented(domains, {pa, pb});
  REQUIRE(augmented.size() == 2);
  std::size_t total = 0;
  for (const AugmentedDomain& d : augmented) total += d.samples.size();
  CHECK(total == 3);
  for (const AugmentedSample& s : augmented[0].samples) CHECK(s.mu == pa.mu);
  for (const AugmentedSample& s : augmented[1].samples) CHECK(s.mu == pb.mu);

  SUBCASE("missing prototype names the domain") {
    try {
      build_augmented(domains, {pa});
      FAIL("expected config_error");
    } catch (const config_error& e) {
      CHECK(std::string(e.what()).find("\"b\"") != std::string::npos);
    }
  }
}

TEST_CASE("adaptive_forward zero f_mlp gives zero logits") {
  AdaptiveModel model;
  model.embed_dim = 2;
  model.num_classes = 3;
  model.f_ft = init_mlp({4, 5}, 3);
  model.f_mlp.layers.push_back({Matrix(7, 3), Matrix(1, 3)});  // zero weights
  SplitMix64 rng(5);
  Matrix x = random_matrix(6, 4, rng);
  Matrix mu = random_matrix(6, 2, rng);
  Matrix logits = adaptive_forward(model, x, mu);
  for (double v : logits.data) CHECK(v == 0.0);
}

TEST_CASE("adaptive_forward can read only the prototype coordinates") {
  // f_ft identity on 2 dims, f_mlp single layer reading only mu columns
  AdaptiveModel model;
  model.embed_dim = 2;
  model.num_classes = 2;
  Matrix w_ft(2, 2);
  w_ft.at(0, 0) = 1.0;
  w_ft.at(1, 1) = 1.0;
  model.f_ft.layers.push_back({w_ft, Matrix(1, 2)});
  Matrix w_mlp(4, 2);
  w_mlp.at(2, 0) = 1.0;  // logit 0 = mu[0]
  w_mlp.at(3, 1) = 1.0;  // logit 1 = mu[1]
  model.f_mlp.layers.push_back({w_mlp, Matrix(1, 2)});

  SplitMix64 rng(7);
  Matrix mu = random_matrix(4, 2, rng);
  Matrix xa = random_matrix(4, 2, rng);
  Matrix xb = random_matrix(4, 2, rng);
  CHECK(adaptive_forward(model, xa, mu) == adaptive_forward(model, xb, mu));
}

TEST_CASE("mmd_penalty matches the brute-force oracle within 1e-10") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Matrix> batches;
    const std::size_t n_dom = 2 + rng.next_below(2);
    for (std::size_t d = 0; d < n_dom; ++d) {
      batches.push_back(random_matrix(2 + rng.next_below(3), 2, rng));
    }
    const double h = oracle_median_distance(batches);
    PenaltyResult res = mmd_penalty(batches, BandwidthMode::Median);
    CHECK(res.bandwidth == doctest::Approx(h).epsilon(1e-12));

    double expect = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < n_dom; ++a) {
      for (std::size_t b = a + 1; b < n_dom; ++b, ++pairs) {
        expect += oracle_mmd_pair(batches[a], batches[b], h);
      }
    }
    expect /= static_cast<double>(pairs);
    CHECK(std::abs(res.value - expect) < 1e-10);
  }
}

TEST_CASE("mmd_penalty basic properties") {
  SplitMix64 rng(13);
  Matrix a = random_matrix(5, 3, rng);

  SUBCASE("identical batches give zero") {
    PenaltyResult res = mmd_penalty({a, a}, BandwidthMode::Fixed, 1.0);
    CHECK(std::abs(res.value) < 1e-12);
  }
  SUBCASE("symmetric in the two domains and numerically non-negative") {
    Matrix b = random_matrix(4, 3, rng);
    PenaltyResult ab = mmd_penalty({a, b}, BandwidthMode::Fixed, 0.8);
    PenaltyResult ba = mmd_penalty({b, a}, BandwidthMode::Fixed, 0.8);
    CHECK(ab.value == doctest::Approx(ba.value).epsilon(1e-14));
    CHECK(ab.value >= -1e-9);
  }
  SUBCASE("empty domain batch rejected") {
    CHECK_THROWS_AS(mmd_penalty({a, Matrix(0, 3)}, BandwidthMode::Fixed, 1.0), config_error);
    CHECK_THROWS_AS(mmd_penalty({a}, BandwidthMode::Fixed, 1.0), config_error);
  }
}

TEST_CASE("mmd_penalty gradient matches finite differences (fixed bandwidth)") {
  SplitMix64 rng(17);
  std::vector<Matrix> batches{random_matrix(3, 2, rng), random_matrix(4, 2, rng),
                              random_matrix(2, 2, rng)};
  const double h = 0.9;
  PenaltyResult res = mmd_penalty(batches, BandwidthMode::Fixed, h);
  const double eps = 1e-6;
  for (std::size_t d = 0; d < batches.size(); ++d) {
    for (std::size_t k = 0; k < batches[d].data.size(); ++k) {
      auto plus = batches, minus = batches;
      plus[d].data[k] += eps;
      minus[d].data[k] -= eps;
      const double fd = (mmd_penalty(plus, BandwidthMode::Fixed, h).value -
                         mmd_penalty(minus, BandwidthMode::Fixed, h).value) /
                        (2 * eps);
      CHECK(rel_err(fd, res.feature_grads[d].data[k]) < 1e-4);
    }
  }
}

TEST_CASE("coral_penalty matches the brute-force oracle within 1e-10") {
  SplitMix64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Matrix> batches;
    const std::size_t n_dom = 2 + rng.next_below(2);
    for (std::size_t d = 0; d < n_dom; ++d) {
      batches.push_back(random_matrix(3 + rng.next_below(4), 3, rng));
    }
    PenaltyResult res = coral_penalty(batches);
    double expect = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < n_dom; ++a) {
      for (std::size_t b = a + 1; b < n_dom; ++b, ++pairs) {
        expect += oracle_coral_pair(batches[a], batches[b]);
      }
    }
    expect /= static_cast<double>(pairs);
    CHECK(std::abs(res.value - expect) < 1e-10);
    CHECK(res.value >= 0.0);
  }
}

TEST_CASE("coral_penalty properties and gradient") {
  SplitMix64 rng(23);
  Matrix a = random_matrix(6, 3, rng);

  SUBCASE("identical batches give exactly zero") {
    CHECK(coral_penalty({a, a}).value == 0.0);
  }
  SUBCASE("constant shift between domains gives zero") {
    Matrix b = a;
    for (std::size_t r = 0; r < b.rows; ++r) {
      b.at(r, 0) += 3.0;
      b.at(r, 1) -= 1.5;
      b.at(r, 2) += 0.25;
    }
    CHECK(coral_penalty({a, b}).value < 1e-24);
  }
  SUBCASE("fewer than 2 points per domain rejected") {
    CHECK_THROWS_AS(coral_penalty({a, Matrix(1, 3)}), config_error);
  }
  SUBCASE("gradient matches finite differences") {
    std::vector<Matrix> batches{random_matrix(4, 2, rng), random_matrix(5, 2, rng)};
    PenaltyResult res = coral_penalty(batches);
    const double eps = 1e-6;
    for (std::size_t d = 0; d < batches.size(); ++d) {
      for (std::size_t k = 0; k < batches[d].data.size(); ++k) {
        auto plus = batches, minus = batches;
        plus[d].data[k] += eps;
        minus[d].data[k] -= eps;
        const double fd =
            (coral_penalty(plus).value - coral_penalty(minus).value) / (2 * eps);
        CHECK(rel_err(fd, res.feature_grads[d].data[k]) < 1e-4);
      }
    }
  }
}

TEST_CASE("adaptive loss gradients match finite differences for gamma in {0,1}") {
  SplitMix64 rng(29);
  for (const Penalty penalty : {Penalty::Mmd, Penalty::Coral}) {
    for (const double gamma : {0.0, 1.0}) {
      TrainConfig cfg;
      cfg.feature_dim = 4;
      cfg.ft_hidden_dims = {};
      cfg.mlp_hidden_dim = 5;
      AdaptiveModel model = init_adaptive_model(3, 2, 3, cfg, rng.next_u64());

      const std::size_t rows_per_domain = 3;
      Matrix x = random_matrix(2 * rows_per_domain, 3, rng);
      Matrix mu = random_matrix(2 * rows_per_domain, 2, rng);
      std::vector<int> labels;
      for (std::size_t i = 0; i < 2 * rows_per_domain; ++i) {
        labels.push_back(static_cast<int>(rng.next_below(3)));
      }
      DomainRanges ranges{{0, rows_per_domain}, {rows_per_domain, rows_per_domain}};

      const auto lg = adaptive_loss_grads(model, x, mu, labels, ranges, penalty, gamma,
                                          BandwidthMode::Fixed, 0.7);

      AdaptiveModel probe = model;
      const auto f_of_ft = [&](const MlpParams& q) {
        probe.f_ft = q;
        return adaptive_objective(probe, x, mu, labels, ranges, penalty, gamma,
                                  BandwidthMode::Fixed, 0.7);
      };
      Gradients fd_ft = finite_diff_grad(f_of_ft, model.f_ft, 1e-5);
      probe = model;
      const auto f_of_mlp = [&](const MlpParams& q) {
        probe.f_mlp = q;
        return adaptive_objective(probe, x, mu, labels, ranges, penalty, gamma,
                                  BandwidthMode::Fixed, 0.7);
      };
      Gradients fd_mlp = finite_diff_grad(f_of_mlp, model.f_mlp, 1e-5);

      double worst = 0.0;
      for (std::size_t i = 0; i < fd_ft.layers.size(); ++i) {
        for (std::size_t k = 0; k < fd_ft.layers[i].w.data.size(); ++k) {
          worst = std::max(worst, rel_err(fd_ft.layers[i].w.data[k], lg.ft.layers[i].w.data[k]));
        }
        for (std::size_t k = 0; k < fd_ft.layers[i].b.data.size(); ++k) {
          worst = std::max(worst, rel_err(fd_ft.layers[i].b.data[k], lg.ft.layers[i].b.data[k]));
        }
      }
      for (std::size_t i = 0; i < fd_mlp.layers.size(); ++i) {
        for (std::size_t k = 0; k < fd_mlp.layers[i].w.data.size(); ++k) {
          worst = std::max(worst, rel_err(fd_mlp.layers[i].w.data[k], lg.mlp.layers[i].w.data[k]));
        }
        for (std::size_t k = 0; k < fd_mlp.layers[i].b.data.size(); ++k) {
          worst = std::max(worst, rel_err(fd_mlp.layers[i].b.data[k], lg.mlp.layers[i].b.data[k]));
        }
      }
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("adaptive_train: gamma=0 with a penalty reproduces penalty-free training bit-exactly") {
  auto augmented = toy_augmented(31);
  TrainConfig plain;
  plain.rounds = 25;
  plain.batch_per_domain = 8;
  plain.sgd = {0.05, 1e-5, 77};
  plain.feature_dim = 6;
  plain.ft_hidden_dims = {8};
  plain.mlp_hidden_dim = 6;

  TrainConfig mmd0 = plain;
  mmd0.penalty = Penalty::Mmd;
  mmd0.penalty_weight = 0.0;

  auto a = adaptive_train(augmented, plain);
  auto b = adaptive_train(augmented, mmd0);
  CHECK(a.round_loss == b.round_loss);
  for (std::size_t i = 0; i < a.model.f_ft.layers.size(); ++i) {
    CHECK(a.model.f_ft.layers[i].w == b.model.f_ft.layers[i].w);
  }
  for (std::size_t i = 0; i < a.model.f_mlp.layers.size(); ++i) {
    CHECK(a.model.f_mlp.layers[i].w == b.model.f_mlp.layers[i].w);
  }
}

TEST_CASE("adaptive_train: T=0 returns the initialization") {
  auto augmented = toy_augmented(37);
  TrainConfig cfg;
  cfg.rounds = 0;
  cfg.sgd.rng_seed = 5;
  auto res = adaptive_train(augmented, cfg);
  AdaptiveModel init = init_adaptive_model(4, 3, 3, cfg, derive_seed(5, 0x61646170));
  for (std::size_t i = 0; i < init.f_ft.layers.size(); ++i) {
    CHECK(res.model.f_ft.layers[i].w == init.f_ft.layers[i].w);
  }
  CHECK(res.round_loss.empty());
}

TEST_CASE("adaptive_train: determinism and training progress") {
  auto augmented = toy_augmented(41);
  TrainConfig cfg;
  cfg.rounds = 60;
  cfg.batch_per_domain = 8;
  cfg.sgd = {0.05, 0.0, 13};
  cfg.feature_dim = 6;
  cfg.ft_hidden_dims = {8};
  cfg.mlp_hidden_dim = 6;
  auto a = adaptive_train(augmented, cfg);
  auto b = adaptive_train(augmented, cfg);
  CHECK(a.round_loss == b.round_loss);
  CHECK(a.round_loss.back() < a.round_loss.front());

  SUBCASE("penalized runs track the penalty in the loss") {
    cfg.penalty = Penalty::Coral;
    cfg.penalty_weight = 1.0;
    auto c = adaptive_train(augmented, cfg);
    CHECK(c.round_loss != a.round_loss);
  }
}

TEST_CASE("adaptive_infer tie and argmax rules") {
  AdaptiveModel model;
  model.embed_dim = 0;
  model.num_classes = 3;
  Matrix w(2, 3);  // all zero: identical logits per row
  model.f_ft.layers.push_back({Matrix(2, 2), Matrix(1, 2)});
  model.f_mlp.layers.push_back({w, Matrix(1, 3)});
  DomainPrototype none{"d", {}, 1};
  Matrix x(4, 2);
  const auto preds = adaptive_infer(model, none, x);
  for (int p : preds) CHECK(p == 0);  // identical logits -> class 0

  SUBCASE("argmax invariant to constant logit shifts") {
    SplitMix64 rng(43);
    Matrix logits = random_matrix(10, 4, rng);
    auto base = argmax_rows(logits);
    Matrix shifted = logits;
    for (double& v : shifted.data) v += 123.5;
    CHECK(argmax_rows(shifted) == base);
  }
  SUBCASE("1-class problem always predicts class 0") {
    AdaptiveModel one;
    one.embed_dim = 0;
    one.num_classes = 1;
    one.f_ft.layers.push_back({Matrix(2, 2), Matrix(1, 2)});
    one.f_mlp.layers.push_back({Matrix(2, 1), Matrix(1, 1)});
    const auto p = adaptive_infer(one, none, x);
    for (int v : p) CHECK(v == 0);
  }
}

TEST_CASE("model checkpoint round-trips through domgen-model-v1") {
  SplitMix64 rng(47);
  TrainConfig cfg;
  cfg.feature_dim = 5;
  cfg.ft_hidden_dims = {7};
  cfg.mlp_hidden_dim = 6;
  AdaptiveModel model = init_adaptive_model(4, 3, 8, cfg, rng.next_u64());
  const auto path = std::filesystem::temp_directory_path() / "domgen_model_rt.json";
  save_model(model, path.string());
  AdaptiveModel loaded = load_model(path.string());
  CHECK(loaded.embed_dim == 3);
  CHECK(loaded.num_classes == 8);
  for (std::size_t i = 0; i < model.f_ft.layers.size(); ++i) {
    CHECK(loaded.f_ft.layers[i].w == model.f_ft.layers[i].w);
    CHECK(loaded.f_ft.layers[i].b == model.f_ft.layers[i].b);
  }
  std::filesystem::remove(path);
}
