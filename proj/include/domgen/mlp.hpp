#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "domgen/matrix.hpp"
#include "domgen/rng.hpp"

namespace domgen {

// Hidden layers use ReLU, the output layer is the identity. A single enum
// value exists so checkpoints carry an explicit "activation" field.
enum class Activation { Relu };

struct MlpLayer {
  Matrix w;  // in_dim x out_dim
  Matrix b;  // 1 x out_dim
};

struct MlpParams {
  std::vector<MlpLayer> layers;
  Activation activation = Activation::Relu;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().w.rows; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().w.cols; }
};

// Shape-congruent with the MlpParams it was computed for.
struct Gradients {
  std::vector<MlpLayer> layers;
};

struct SgdConfig {
  double learning_rate = 0.1;
  double weight_decay = 0.0;
  std::uint64_t rng_seed = 0;
};

// Pre/post activations kept from a forward pass; activations[0] is the input
// batch and activations[i] the post-activation output of layer i.
struct ForwardCache {
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> activations;
};

// Validates the layer dimension chain; throws shape_error naming the layer.
void validate_mlp(const MlpParams& params);

// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
MlpParams init_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed);

Matrix mlp_forward(const MlpParams& params, const Matrix& batch, ForwardCache* cache = nullptr);

Gradients mlp_backward(const MlpParams& params, const ForwardCache& cache,
                       const Matrix& dloss_doutput, Matrix* dloss_dinput = nullptr);

// Same as mlp_backward but adds `extra_dact` to the gradient flowing through
// the post-activation output of layer `act_layer` (0-based). Used for
// penalties attached to a hidden representation.
Gradients mlp_backward_inject(const MlpParams& params, const ForwardCache& cache,
                              const Matrix& dloss_doutput, std::size_t act_layer,
                              const Matrix& extra_dact, Matrix* dloss_dinput = nullptr);

// w <- w - lr * (g + weight_decay * w). lr = 0 is the identity.
MlpParams sgd_step(const MlpParams& params, const Gradients& grads, const SgdConfig& cfg);

Gradients zero_gradients(const MlpParams& params);
void accumulate(Gradients& acc, const Gradients& g, double scale);

// Central differences (f(w+h) - f(w-h)) / 2h per parameter; test oracle.
Gradients finite_diff_grad(const std::function<double(const MlpParams&)>& f,
                           const MlpParams& params, double h);

}  // namespace domgen
