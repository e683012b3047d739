#pragma once

#include <string>
#include <vector>

#include "domgen/matrix.hpp"

namespace domgen {

struct Sample {
  std::vector<double> x;
  int y = 0;
};

// The domain's sampled shift; oracle diagnostics only, never serialized into
// the model-facing dataset file.
struct TransformParams {
  Matrix rotation;              // d x d, empty when identity
  std::vector<double> offset;   // empty when zero
};

// Labeled points from one domain, with a fit/eval sub-split.
struct DomainDataset {
  std::string domain_id;
  std::vector<Sample> fit;
  std::vector<Sample> eval;
  TransformParams transform_params;
};

struct BenchmarkSplit {
  std::vector<DomainDataset> train_domains;
  std::vector<DomainDataset> val_domains;
  std::vector<DomainDataset> test_domains;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
};

Matrix samples_to_matrix(const std::vector<Sample>& samples, std::size_t dim);
std::vector<int> samples_to_labels(const std::vector<Sample>& samples);

}  // namespace domgen
