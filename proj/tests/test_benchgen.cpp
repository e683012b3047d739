#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "domgen/benchgen.hpp"

using namespace domgen;

namespace {

MotherSpec desk_spec(std::uint64_t seed, double magnitude = 0.8,
                     ShiftKind kind = ShiftKind::Rotation) {
  return make_mother_spec(20, 16, 1.0, kind, magnitude, seed);
}

LtConfig desk_lt() {
  LtConfig lt;
  lt.train_domains = 12;
  lt.head_classes = 6;
  lt.head_count = 60;
  lt.tail_fraction = 0.1;
  lt.val_domains = 3;
  lt.test_domains = 4;
  lt.val_per_class = 10;
  lt.test_per_class = 12;
  lt.eval_per_class = 5;
  return lt;
}

std::map<int, std::size_t> label_histogram(const DomainDataset& d) {
  std::map<int, std::size_t> h;
  for (const Sample& s : d.fit) ++h[s.y];
  return h;
}

std::vector<double> domain_input_mean(const DomainDataset& d) {
  std::vector<double> mean(d.fit.front().x.size(), 0.0);
  for (const Sample& s : d.fit) {
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += s.x[j];
  }
  for (double& v : mean) v /= static_cast<double>(d.fit.size());
  return mean;
}

}  // namespace

TEST_CASE("round_half_even matches banker's rounding") {
  CHECK(round_half_even(0.5) == 0);
  CHECK(round_half_even(1.5) == 2);
  CHECK(round_half_even(2.5) == 2);
  CHECK(round_half_even(6.0) == 6);
  CHECK(round_half_even(1.2) == 1);
  CHECK(round_half_even(1.8) == 2);
  CHECK(round_half_even(60.0 * 0.1) == 6);
  CHECK(round_half_even(60.0 * 0.02) == 1);
}

TEST_CASE("make_mother_spec separates class means") {
  MotherSpec spec = desk_spec(1);
  CHECK(spec.class_means.rows == 20);
  CHECK(spec.class_means.cols == 16);
  for (std::size_t a = 0; a < 20; ++a) {
    for (std::size_t b = a + 1; b < 20; ++b) {
      CHECK(std::sqrt(row_sqdist(spec.class_means, a, spec.class_means, b)) >= 4.0);
    }
  }
  SUBCASE("invalid parameters rejected") {
    CHECK_THROWS_AS(make_mother_spec(1, 16, 1.0, ShiftKind::Rotation, 0.5, 1), config_error);
    CHECK_THROWS_AS(make_mother_spec(20, 16, 1.0, ShiftKind::Rotation, 0.0, 1), config_error);
    CHECK_THROWS_AS(make_mother_spec(20, 16, -1.0, ShiftKind::Rotation, 0.5, 1), config_error);
  }
}

TEST_CASE("rotation transforms are orthogonal, shifts have exact norm") {
  MotherSpec spec = desk_spec(2, 0.7, ShiftKind::Both);
  SplitMix64 rng(11);
  TransformParams t = sample_transform(spec, rng);

  REQUIRE(t.rotation.rows == 16);
  // R^T R = I
  Matrix rtr = matmul_at_b(t.rotation, t.rotation);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 16; ++j) {
      CHECK(rtr.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }
  }
  double norm2 = 0.0;
  for (double v : t.offset) norm2 += v * v;
  CHECK(std::sqrt(norm2) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("near-zero shift magnitude leaves the identity transform") {
  MotherSpec spec = desk_spec(3, 1e-12, ShiftKind::Both);
  SplitMix64 rng(5);
  TransformParams t = sample_transform(spec, rng);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 16; ++j) {
      CHECK(t.rotation.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-11));
    }
  }
  for (double v : t.offset) CHECK(std::abs(v) <= 1e-12);
}

TEST_CASE("sample_domain produces exactly the requested counts and labels") {
  MotherSpec spec = desk_spec(4);
  DomainDataset d = sample_domain(spec, {{0, 5}}, 17, "solo");
  CHECK(d.fit.size() == 5);
  for (const Sample& s : d.fit) CHECK(s.y == 0);
  CHECK_THROWS_AS(sample_domain(spec, {{99, 5}}, 17, "bad"), index_error);
}

TEST_CASE("sample_domain law of large numbers: empirical mean near transformed mean") {
  MotherSpec spec = desk_spec(5, 0.9, ShiftKind::Both);
  DomainDataset d = sample_domain(spec, {{3, 10000}}, 23, "lln");
  std::vector<double> mean = domain_input_mean(d);
  std::vector<double> expected(16);
  apply_transform(d.transform_params, spec.class_means.row(3), expected.data(), 16);
  for (std::size_t j = 0; j < 16; ++j) {
    CHECK(std::abs(mean[j] - expected[j]) < 4.0 * spec.class_scale / 100.0 * 10.0);
  }
  // overall distance bound, 4*scale/100 per the sqrt(n) law with margin
  double err2 = 0.0;
  for (std::size_t j = 0; j < 16; ++j) {
    err2 += (mean[j] - expected[j]) * (mean[j] - expected[j]);
  }
  CHECK(std::sqrt(err2) < 4.0 * spec.class_scale * 16.0 / 100.0);
}

TEST_CASE("generate_lt_benchmark sizes follow the construction rule") {
  MotherSpec spec = desk_spec(6);
  LtConfig lt = desk_lt();
  BenchmarkSplit split = generate_lt_benchmark(spec, lt);

  CHECK(split.train_domains.size() == 12);
  CHECK(split.val_domains.size() == 3);
  CHECK(split.test_domains.size() == 4);

  // fit: K*A + (C-K)*round(A*f) = 6*60 + 14*6 = 444
  // eval mirrors the law at eval_per_class scale: 6*5 + 14*round(0.5) = 30
  for (const DomainDataset& d : split.train_domains) {
    CHECK(d.fit.size() == 444);
    CHECK(d.eval.size() == 30);
  }
  // val: 6*10 + 14*round(1.0) = 74; test: 6*12 + 14*round(1.2) = 86
  for (const DomainDataset& d : split.val_domains) {
    CHECK(d.fit.size() == 74);
    CHECK(d.eval.size() == 30);
  }
  for (const DomainDataset& d : split.test_domains) {
    CHECK(d.fit.size() == 86);
  }
}

TEST_CASE("paper-scale arithmetic: C=500 K=100 A=350 f=0.1 gives 49000 per domain") {
  const std::size_t C = 500, K = 100, A = 350;
  const long tail = round_half_even(350 * 0.1);
  CHECK(static_cast<std::size_t>(K * A + (C - K) * tail) == 49000);
}

TEST_CASE("tail fraction limits") {
  MotherSpec spec = desk_spec(7);
  LtConfig lt = desk_lt();

  SUBCASE("f=1 gives every class A points") {
    lt.tail_fraction = 1.0;
    BenchmarkSplit split = generate_lt_benchmark(spec, lt);
    for (const DomainDataset& d : split.train_domains) {
      CHECK(d.fit.size() == 20 * 60);
      auto h = label_histogram(d);
      CHECK(h.size() == 20);
      for (const auto& [cls, n] : h) CHECK(n == 60);
      CHECK(d.eval.size() == 20 * lt.eval_per_class);
    }
  }
  SUBCASE("f=0 gives head classes only") {
    lt.tail_fraction = 0.0;
    BenchmarkSplit split = generate_lt_benchmark(spec, lt);
    for (const DomainDataset& d : split.train_domains) {
      CHECK(d.fit.size() == 6 * 60);
      CHECK(label_histogram(d).size() == 6);
    }
  }
}

TEST_CASE("label shift: different head sets give different histograms") {
  MotherSpec spec = desk_spec(8);
  LtConfig lt = desk_lt();
  BenchmarkSplit split = generate_lt_benchmark(spec, lt);

  // find two domains with different head sets
  const auto heads_of = [](const DomainDataset& d) {
    std::set<int> heads;
    for (const auto& [cls, n] : label_histogram(d)) {
      if (n > 10) heads.insert(cls);
    }
    return heads;
  };
  bool found_pair = false;
  for (std::size_t a = 0; a < split.train_domains.size() && !found_pair; ++a) {
    for (std::size_t b = a + 1; b < split.train_domains.size() && !found_pair; ++b) {
      if (heads_of(split.train_domains[a]) != heads_of(split.train_domains[b])) {
        CHECK(label_histogram(split.train_domains[a]) != label_histogram(split.train_domains[b]));
        found_pair = true;
      }
    }
  }
  CHECK(found_pair);

  // per-domain histogram is non-uniform for f < 1
  auto h = label_histogram(split.train_domains[0]);
  std::set<std::size_t> counts;
  for (const auto& [cls, n] : h) counts.insert(n);
  CHECK(counts.size() > 1);
}

TEST_CASE("determinism: same seeds give identical benchmark bytes") {
  MotherSpec spec = desk_spec(9);
  LtConfig lt = desk_lt();
  const auto dir = std::filesystem::temp_directory_path();
  const auto p1 = dir / "domgen_bench_a.jsonl";
  const auto p2 = dir / "domgen_bench_b.jsonl";
  save_benchmark(generate_lt_benchmark(spec, lt), p1.string());
  save_benchmark(generate_lt_benchmark(desk_spec(9), lt), p2.string());

  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(!s1.empty());
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("domain distinguishability is monotone in shift magnitude") {
  // mean pairwise distance between per-domain input means over 10 seeds
  const auto mean_dist = [](double magnitude) {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      MotherSpec spec = make_mother_spec(6, 8, 1.0, ShiftKind::Both, magnitude, seed);
      std::vector<std::vector<double>> means;
      for (std::uint64_t d = 0; d < 4; ++d) {
        std::vector<std::pair<std::size_t, std::size_t>> counts;
        for (std::size_t c = 0; c < 6; ++c) counts.emplace_back(c, 30);
        means.push_back(domain_input_mean(
            sample_domain(spec, counts, derive_seed(seed, 77, d), "d" + std::to_string(d))));
      }
      double acc = 0.0;
      std::size_t pairs = 0;
      for (std::size_t a = 0; a < means.size(); ++a) {
        for (std::size_t b = a + 1; b < means.size(); ++b, ++pairs) {
          double d2 = 0.0;
          for (std::size_t j = 0; j < means[a].size(); ++j) {
            d2 += (means[a][j] - means[b][j]) * (means[a][j] - means[b][j]);
          }
          acc += std::sqrt(d2);
        }
      }
      total += acc / static_cast<double>(pairs);
    }
    return total / 10.0;
  };
  const double d_small = mean_dist(0.05);
  const double d_mid = mean_dist(0.5);
  const double d_large = mean_dist(1.2);
  CHECK(d_small <= d_mid);
  CHECK(d_mid <= d_large);
}

TEST_CASE("dataset file round-trip preserves content") {
  MotherSpec spec = desk_spec(10);
  LtConfig lt = desk_lt();
  lt.train_domains = 4;
  lt.val_domains = 1;
  lt.test_domains = 2;
  BenchmarkSplit split = generate_lt_benchmark(spec, lt);
  const auto path = std::filesystem::temp_directory_path() / "domgen_bench_rt.jsonl";
  save_benchmark(split, path.string());
  BenchmarkSplit loaded = load_external_dataset(path.string());
  CHECK(benchmark_content_equal(split, loaded));
  CHECK(loaded.input_dim == 16);
  CHECK(loaded.num_classes == 20);
  std::filesystem::remove(path);
}

TEST_CASE("load_external_dataset rejects malformed and invalid files") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "domgen_bad_data.jsonl";

  SUBCASE("missing file is an io error") {
    CHECK_THROWS_AS(load_external_dataset((dir / "domgen_nope.jsonl").string()), io_error);
  }
  SUBCASE("bad json reports the line") {
    std::ofstream out(path);
    out << R"({"format":"domgen-data-v1","dim":2,"classes":3,"splits":{}})" << "\n";
    out << R"({"domain":"a","split":"train","sub":"fit","x":[0.0,0.0],"y":0})" << "\n";
    out << "{not json\n";
    out.close();
    try {
      load_external_dataset(path.string());
      FAIL("expected parse_error");
    } catch (const parse_error& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("wrong header format rejected") {
    std::ofstream out(path);
    out << R"({"format":"other","dim":2,"classes":3})" << "\n";
    out.close();
    CHECK_THROWS_AS(load_external_dataset(path.string()), parse_error);
  }
  SUBCASE("empty domain list is a validation error") {
    std::ofstream out(path);
    out << R"({"format":"domgen-data-v1","dim":2,"classes":3,"splits":{}})" << "\n";
    out.close();
    CHECK_THROWS_AS(load_external_dataset(path.string()), config_error);
  }
  SUBCASE("test-domain class absent from training is a validation error") {
    std::ofstream out(path);
    out << R"({"format":"domgen-data-v1","dim":2,"classes":3,"splits":{}})" << "\n";
    out << R"({"domain":"tr","split":"train","sub":"fit","x":[0.0,0.0],"y":0})" << "\n";
    out << R"({"domain":"te","split":"test","sub":"fit","x":[0.0,0.0],"y":1})" << "\n";
    out.close();
    try {
      load_external_dataset(path.string());
      FAIL("expected config_error");
    } catch (const config_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("te") != std::string::npos);
      CHECK(msg.find("1") != std::string::npos);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("val and test domains only use training-seen classes") {
  MotherSpec spec = desk_spec(12);
  LtConfig lt = desk_lt();
  lt.tail_fraction = 0.0;  // only head classes are seen
  lt.train_domains = 3;    // 3 * 6 heads < 20, so unseen classes must exist
  BenchmarkSplit split = generate_lt_benchmark(spec, lt);
  std::set<int> seen;
  for (const DomainDataset& d : split.train_domains) {
    for (const Sample& s : d.fit) seen.insert(s.y);
  }
  CHECK(seen.size() < 20);
  for (const auto* domains : {&split.val_domains, &split.test_domains}) {
    for (const DomainDataset& d : *domains) {
      for (const Sample& s : d.fit) CHECK(seen.count(s.y) == 1);
      for (const Sample& s : d.eval) CHECK(seen.count(s.y) == 1);
    }
  }
}
