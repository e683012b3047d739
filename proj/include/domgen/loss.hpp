#pragma once

#include <vector>

#include "domgen/matrix.hpp"

namespace domgen {

// Row-wise softmax with max-subtraction; rows sum to 1 within 1e-12.
Matrix softmax_rows(const Matrix& logits);

struct CrossEntropyResult {
  double loss = 0.0;
  Matrix dlogits;  // (softmax - onehot) / rows
};

// Mean over rows of -log softmax(logits)[label].
CrossEntropyResult cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels);

}  // namespace domgen
