#include "domgen/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace domgen {

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const double* in = logits.row(r);
    double* out = p.row(r);
    const double m = *std::max_element(in, in + logits.cols);
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) {
      out[c] = std::exp(in[c] - m);
      z += out[c];
    }
    for (std::size_t c = 0; c < logits.cols; ++c) out[c] /= z;
  }
  return p;
}

CrossEntropyResult cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels) {
  if (labels.size() != logits.rows) {
    throw shape_error("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(logits.rows) + " rows");
  }
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= logits.cols) {
      throw index_error("cross_entropy_loss: label " + std::to_string(labels[r]) + " at row " +
                        std::to_string(r) + " out of range for " + std::to_string(logits.cols) +
                        " classes");
    }
  }
  CrossEntropyResult res;
  res.dlogits = softmax_rows(logits);
  const double inv_n = 1.0 / static_cast<double>(logits.rows);
  double loss = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const double* in = logits.row(r);
    const double m = *std::max_element(in, in + logits.cols);
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) z += std::exp(in[c] - m);
    const double log_p = in[labels[r]] - m - std::log(z);
    loss -= log_p;
    double* drow = res.dlogits.row(r);
    drow[labels[r]] -= 1.0;
    for (std::size_t c = 0; c < logits.cols; ++c) drow[c] *= inv_n;
  }
  res.loss = loss * inv_n;
  return res;
}

}  // namespace domgen
