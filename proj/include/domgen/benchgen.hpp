#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "domgen/dataset.hpp"
#include "domgen/rng.hpp"

namespace domgen {

enum class ShiftKind { Rotation, AffineShift, Both };

std::string shift_kind_name(ShiftKind k);
ShiftKind shift_kind_from_name(const std::string& name);

// Generative recipe for sampling domains: Gaussian class clusters pushed
// through a per-domain transform (rotation within a given angle of the
// identity, a fixed-norm offset, or both). The Givens rotation planes are
// part of the mother distribution (drawn once from its seed); each domain
// draws only its angles, so domains form a smooth low-dimensional family.
struct MotherSpec {
  std::size_t base_classes = 20;
  std::size_t input_dim = 16;
  Matrix class_means;  // base_classes x input_dim
  double class_scale = 1.0;
  ShiftKind shift_kind = ShiftKind::Rotation;
  double shift_magnitude = 0.8;
  std::uint64_t rng_seed = 0;
  std::vector<std::pair<std::size_t, std::size_t>> rotation_planes;
};

// Draws class means from a seeded normal with pairwise distance at least
// 4*class_scale enforced by rejection.
MotherSpec make_mother_spec(std::size_t base_classes, std::size_t input_dim, double class_scale,
                            ShiftKind kind, double shift_magnitude, std::uint64_t seed,
                            double mean_sigma = 0.0 /* 0 -> 2.5*class_scale */,
                            std::size_t n_rotation_planes = 0 /* 0 -> input_dim/2 */);

struct LtConfig {
  std::size_t train_domains = 12;   // N
  std::size_t head_classes = 6;     // K
  std::size_t head_count = 60;      // A
  double tail_fraction = 0.1;       // f
  std::size_t val_domains = 3;
  std::size_t test_domains = 4;
  std::size_t val_per_class = 30;   // fit pool of each val domain
  std::size_t test_per_class = 70;  // fit pool of each test domain
  std::size_t eval_per_class = 15;  // eval sub-split, all domains
};

// Round-half-to-even, used for tail class counts round(A*f).
long round_half_even(double v);

TransformParams sample_transform(const MotherSpec& spec, SplitMix64& rng);
void apply_transform(const TransformParams& t, const double* in, double* out, std::size_t dim);

// Points per listed class: transform(class_mean + class_scale * standard
// normal). The returned dataset holds them in the fit split.
DomainDataset sample_domain(const MotherSpec& spec,
                            const std::vector<std::pair<std::size_t, std::size_t>>& class_counts,
                            std::uint64_t domain_seed, const std::string& domain_id);

BenchmarkSplit generate_lt_benchmark(const MotherSpec& spec, const LtConfig& cfg);

// JSON-lines dataset file; first line is the header record.
void save_benchmark(const BenchmarkSplit& split, const std::string& path);
BenchmarkSplit load_external_dataset(const std::string& path);

// Content equality; transform_params are diagnostics and excluded.
bool benchmark_content_equal(const BenchmarkSplit& a, const BenchmarkSplit& b);

void validate_benchmark(const BenchmarkSplit& split);

}  // namespace domgen
