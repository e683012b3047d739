#include "domgen/mlp.hpp"

#include <cmath>
#include <string>

namespace domgen {

void validate_mlp(const MlpParams& params) {
  if (params.layers.empty()) throw shape_error("mlp has no layers");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const MlpLayer& l = params.layers[i];
    if (l.b.rows != 1 || l.b.cols != l.w.cols) {
      throw shape_error("layer " + std::to_string(i) + ": bias shape " +
                        std::to_string(l.b.rows) + "x" + std::to_string(l.b.cols) +
                        " does not match weight out-dim " + std::to_string(l.w.cols));
    }
    if (i > 0 && params.layers[i - 1].w.cols != l.w.rows) {
      throw shape_error("layer " + std::to_string(i) + ": in-dim " + std::to_string(l.w.rows) +
                        " does not chain from previous out-dim " +
                        std::to_string(params.layers[i - 1].w.cols));
    }
  }
}

MlpParams init_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw config_error("init_mlp needs at least input and output dims");
  SplitMix64 rng(seed);
  MlpParams params;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t fan_in = dims[i];
    const std::size_t fan_out = dims[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    MlpLayer layer{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
    for (double& v : layer.w.data) v = rng.uniform(-limit, limit);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& batch, ForwardCache* cache) {
  validate_mlp(params);
  if (batch.cols != params.input_dim()) {
    throw shape_error("mlp_forward: batch cols " + std::to_string(batch.cols) +
                      " does not match layer 0 in-dim " + std::to_string(params.input_dim()));
  }
  if (cache) {
    cache->pre_activations.clear();
    cache->activations.clear();
    cache->activations.push_back(batch);
  }
  Matrix a = batch;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const MlpLayer& l = params.layers[i];
    Matrix z = matmul(a, l.w);
    for (std::size_t r = 0; r < z.rows; ++r) {
      double* zr = z.row(r);
      for (std::size_t c = 0; c < z.cols; ++c) zr[c] += l.b.at(0, c);
    }
    const bool hidden = i + 1 < params.layers.size();
    Matrix act = z;
    if (hidden) {
      for (double& v : act.data) v = v > 0.0 ? v : 0.0;
    }
    if (cache) {
      cache->pre_activations.push_back(std::move(z));
      cache->activations.push_back(act);
    }
    a = std::move(act);
  }
  ensure_finite(a, "mlp_forward output");
  return a;
}

Gradients mlp_backward(const MlpParams& params, const ForwardCache& cache,
                       const Matrix& dloss_doutput, Matrix* dloss_dinput) {
  return mlp_backward_inject(params, cache, dloss_doutput, params.layers.size(), Matrix(),
                             dloss_dinput);
}

Gradients mlp_backward_inject(const MlpParams& params, const ForwardCache& cache,
                              const Matrix& dloss_doutput, std::size_t act_layer,
                              const Matrix& extra_dact, Matrix* dloss_dinput) {
  const std::size_t n_layers = params.layers.size();
  if (cache.pre_activations.size() != n_layers || cache.activations.size() != n_layers + 1) {
    throw shape_error("mlp_backward: cache does not match params (" +
                      std::to_string(cache.pre_activations.size()) + " cached layers vs " +
                      std::to_string(n_layers) + ")");
  }
  if (!dloss_doutput.same_shape(cache.activations.back())) {
    throw shape_error("mlp_backward: upstream gradient shape mismatch");
  }
  Gradients grads = zero_gradients(params);
  Matrix da = dloss_doutput;
  for (std::size_t i = n_layers; i-- > 0;) {
    if (i == act_layer && extra_dact.rows > 0) {
      // da currently holds the gradient at layer i's post-activation output.
      if (!extra_dact.same_shape(da)) {
        throw shape_error("mlp_backward_inject: injected gradient shape mismatch at layer " +
                          std::to_string(act_layer));
      }
      for (std::size_t k = 0; k < da.data.size(); ++k) da.data[k] += extra_dact.data[k];
    }
    const bool hidden = i + 1 < n_layers;
    Matrix dz = std::move(da);
    if (hidden) {
      const Matrix& z = cache.pre_activations[i];
      for (std::size_t k = 0; k < dz.data.size(); ++k) {
        if (z.data[k] <= 0.0) dz.data[k] = 0.0;
      }
    }
    grads.layers[i].w = matmul_at_b(cache.activations[i], dz);
    Matrix& gb = grads.layers[i].b;
    for (std::size_t r = 0; r < dz.rows; ++r) {
      const double* row = dz.row(r);
      for (std::size_t c = 0; c < dz.cols; ++c) gb.at(0, c) += row[c];
    }
    if (i > 0 || dloss_dinput) da = matmul_a_bt(dz, params.layers[i].w);
  }
  if (dloss_dinput) *dloss_dinput = std::move(da);
  return grads;
}

MlpParams sgd_step(const MlpParams& params, const Gradients& grads, const SgdConfig& cfg) {
  if (cfg.learning_rate < 0.0 || !std::isfinite(cfg.learning_rate)) {
    throw config_error("sgd_step: learning rate must be finite and non-negative");
  }
  if (cfg.weight_decay < 0.0) throw config_error("sgd_step: weight decay must be non-negative");
  if (grads.layers.size() != params.layers.size()) {
    throw shape_error("sgd_step: gradient layer count mismatch");
  }
  MlpParams out = params;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    MlpLayer& l = out.layers[i];
    const MlpLayer& g = grads.layers[i];
    if (!g.w.same_shape(l.w) || !g.b.same_shape(l.b)) {
      throw shape_error("sgd_step: gradient shape mismatch at layer " + std::to_string(i));
    }
    for (std::size_t k = 0; k < l.w.data.size(); ++k) {
      if (!std::isfinite(g.w.data[k])) {
        throw numeric_error("sgd_step: non-finite weight gradient at layer " + std::to_string(i));
      }
      l.w.data[k] -= cfg.learning_rate * (g.w.data[k] + cfg.weight_decay * l.w.data[k]);
    }
    for (std::size_t k = 0; k < l.b.data.size(); ++k) {
      if (!std::isfinite(g.b.data[k])) {
        throw numeric_error("sgd_step: non-finite bias gradient at layer " + std::to_string(i));
      }
      l.b.data[k] -= cfg.learning_rate * (g.b.data[k] + cfg.weight_decay * l.b.data[k]);
    }
  }
  return out;
}

Gradients zero_gradients(const MlpParams& params) {
  Gradients g;
  for (const MlpLayer& l : params.layers) {
    g.layers.push_back({Matrix(l.w.rows, l.w.cols), Matrix(1, l.b.cols)});
  }
  return g;
}

void accumulate(Gradients& acc, const Gradients& g, double scale) {
  if (acc.layers.size() != g.layers.size()) throw shape_error("accumulate: layer count mismatch");
  for (std::size_t i = 0; i < acc.layers.size(); ++i) {
    for (std::size_t k = 0; k < acc.layers[i].w.data.size(); ++k) {
      acc.layers[i].w.data[k] += scale * g.layers[i].w.data[k];
    }
    for (std::size_t k = 0; k < acc.layers[i].b.data.size(); ++k) {
      acc.layers[i].b.data[k] += scale * g.layers[i].b.data[k];
    }
  }
}

Gradients finite_diff_grad(const std::function<double(const MlpParams&)>& f,
                           const MlpParams& params, double h) {
  if (h <= 0.0) throw config_error("finite_diff_grad: h must be positive");
  Gradients g = zero_gradients(params);
  MlpParams probe = params;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    for (std::size_t k = 0; k < params.layers[i].w.data.size(); ++k) {
      const double orig = probe.layers[i].w.data[k];
      probe.layers[i].w.data[k] = orig + h;
      const double fp = f(probe);
      probe.layers[i].w.data[k] = orig - h;
      const double fm = f(probe);
      probe.layers[i].w.data[k] = orig;
      g.layers[i].w.data[k] = (fp - fm) / (2.0 * h);
    }
    for (std::size_t k = 0; k < params.layers[i].b.data.size(); ++k) {
      const double orig = probe.layers[i].b.data[k];
      probe.layers[i].b.data[k] = orig + h;
      const double fp = f(probe);
      probe.layers[i].b.data[k] = orig - h;
      const double fm = f(probe);
      probe.layers[i].b.data[k] = orig;
      g.layers[i].b.data[k] = (fp - fm) / (2.0 * h);
    }
  }
  return g;
}

}  // namespace domgen
