#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "inout/lora.hpp"
#include "inout/rng.hpp"

// Minimal CPU building blocks with hand-written backward passes. Activations
// are channels x (height * width) matrices; column index = y * width + x.
// Convolution kernels are 3x3 "same" convolutions stored flattened as
// out x (9 * in), with the column index ordered (ky, kx, in_channel).
namespace inout::nn {

struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  Matrix data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w) : channels(c), height(h), width(w), data(Matrix::Zero(c, h * w)) {}
};

Matrix im2col(const FeatureMap& in, int dilation);
FeatureMap col2im(const Matrix& cols, int channels, int height, int width, int dilation);

struct ConvCache {
  Matrix cols;
};

FeatureMap conv_forward(const FeatureMap& in, const Matrix& weight, const Matrix& bias, int dilation, ConvCache& cache);
// Accumulates into grad_weight / grad_bias (scaled by `scale`); returns d(input) when wanted.
void conv_backward(const Matrix& grad_out, const ConvCache& cache, const Matrix& weight, int dilation,
                   const FeatureMap& input_shape, Matrix* grad_weight, Matrix* grad_bias, FeatureMap* grad_input);

void relu_inplace(Matrix& m);
// grad *= (pre_activation > 0)
void relu_backward(Matrix& grad, const Matrix& pre_activation);

struct PoolCache {
  std::vector<int> argmax;
  int in_height = 0;
  int in_width = 0;
};

// 2x2 max pool, stride 2 (odd trailing row/column dropped).
FeatureMap maxpool2_forward(const FeatureMap& in, PoolCache& cache);
FeatureMap maxpool2_backward(const FeatureMap& grad_out, const PoolCache& cache, int channels);

Matrix he_uniform(int rows, int cols, int fan_in, Rng& rng);

// Sparse helpers for training loops.
void add_scaled(WeightSet& into, const WeightSet& grads, float scale);
void zero_like(WeightSet& grads, const WeightSet& shape_of);

// Adam over an arbitrary WeightSet.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(WeightSet& params, const WeightSet& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  WeightSet m_, v_;
};

// SGD with optional classical momentum.
class Sgd {
 public:
  explicit Sgd(double lr, double momentum = 0.0) : lr_(lr), momentum_(momentum) {}
  void step(WeightSet& params, const WeightSet& grads);

 private:
  double lr_, momentum_;
  WeightSet velocity_;
};

}  // namespace inout::nn
