#include "inout/nn.hpp"

#include <cmath>
#include <limits>

namespace inout::nn {

Matrix im2col(const FeatureMap& in, int dilation) {
  const int c = in.channels, h = in.height, w = in.width;
  Matrix cols = Matrix::Zero(9 * c, static_cast<Eigen::Index>(h) * w);
  const float* src = in.data.data();
  float* dst = cols.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float* col = dst + (static_cast<std::size_t>(y) * w + x) * 9 * c;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + (ky - 1) * dilation;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = x + (kx - 1) * dilation;
          if (sx < 0 || sx >= w) continue;
          const float* pix = src + (static_cast<std::size_t>(sy) * w + sx) * c;
          float* out = col + (ky * 3 + kx) * c;
          for (int ch = 0; ch < c; ++ch) out[ch] = pix[ch];
        }
      }
    }
  }
  return cols;
}

FeatureMap col2im(const Matrix& cols, int channels, int height, int width, int dilation) {
  FeatureMap out(channels, height, width);
  const float* src = cols.data();
  float* dst = out.data.data();
  const int c = channels;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const float* col = src + (static_cast<std::size_t>(y) * width + x) * 9 * c;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + (ky - 1) * dilation;
        if (sy < 0 || sy >= height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = x + (kx - 1) * dilation;
          if (sx < 0 || sx >= width) continue;
          float* pix = dst + (static_cast<std::size_t>(sy) * width + sx) * c;
          const float* in = col + (ky * 3 + kx) * c;
          for (int ch = 0; ch < c; ++ch) pix[ch] += in[ch];
        }
      }
    }
  }
  return out;
}

FeatureMap conv_forward(const FeatureMap& in, const Matrix& weight, const Matrix& bias, int dilation, ConvCache& cache) {
  cache.cols = im2col(in, dilation);
  FeatureMap out;
  out.channels = static_cast<int>(weight.rows());
  out.height = in.height;
  out.width = in.width;
  out.data.noalias() = weight * cache.cols;
  out.data.colwise() += bias.col(0);
  return out;
}

void conv_backward(const Matrix& grad_out, const ConvCache& cache, const Matrix& weight, int dilation,
                   const FeatureMap& input_shape, Matrix* grad_weight, Matrix* grad_bias, FeatureMap* grad_input) {
  if (grad_weight) grad_weight->noalias() += grad_out * cache.cols.transpose();
  if (grad_bias) grad_bias->col(0) += grad_out.rowwise().sum();
  if (grad_input) {
    const Matrix dcols = weight.transpose() * grad_out;
    *grad_input = col2im(dcols, input_shape.channels, input_shape.height, input_shape.width, dilation);
  }
}

void relu_inplace(Matrix& m) { m = m.cwiseMax(0.0f); }

void relu_backward(Matrix& grad, const Matrix& pre_activation) {
  grad = (pre_activation.array() > 0.0f).select(grad, 0.0f);
}

FeatureMap maxpool2_forward(const FeatureMap& in, PoolCache& cache) {
  const int oh = in.height / 2, ow = in.width / 2, c = in.channels;
  FeatureMap out(c, oh, ow);
  cache.argmax.assign(static_cast<std::size_t>(c) * oh * ow, 0);
  cache.in_height = in.height;
  cache.in_width = in.width;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const int o = y * ow + x;
      for (int ch = 0; ch < c; ++ch) {
        float best = -std::numeric_limits<float>::infinity();
        int arg = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int i = (2 * y + dy) * in.width + (2 * x + dx);
            const float v = in.data(ch, i);
            if (v > best) {
              best = v;
              arg = i;
            }
          }
        out.data(ch, o) = best;
        cache.argmax[static_cast<std::size_t>(o) * c + ch] = arg;
      }
    }
  }
  return out;
}

FeatureMap maxpool2_backward(const FeatureMap& grad_out, const PoolCache& cache, int channels) {
  FeatureMap grad(channels, cache.in_height, cache.in_width);
  const int n = grad_out.height * grad_out.width;
  for (int o = 0; o < n; ++o)
    for (int ch = 0; ch < channels; ++ch) {
      grad.data(ch, cache.argmax[static_cast<std::size_t>(o) * channels + ch]) += grad_out.data(ch, o);
    }
  return grad;
}

Matrix he_uniform(int rows, int cols, int fan_in, Rng& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void add_scaled(WeightSet& into, const WeightSet& grads, float scale) {
  for (const auto& [name, g] : grads) into.at(name) += scale * g;
}

void zero_like(WeightSet& grads, const WeightSet& shape_of) {
  grads.clear();
  for (const auto& [name, w] : shape_of) grads.emplace(name, Matrix::Zero(w.rows(), w.cols()));
}

void Adam::step(WeightSet& params, const WeightSet& grads) {
  if (m_.empty()) {
    zero_like(m_, params);
    zero_like(v_, params);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Matrix& m = m_.at(name);
    Matrix& v = v_.at(name);
    m = static_cast<float>(beta1_) * m + static_cast<float>(1 - beta1_) * g;
    v = static_cast<float>(beta2_) * v + static_cast<float>(1 - beta2_) * g.cwiseProduct(g);
    const auto mhat = m.array() / static_cast<float>(c1);
    const auto vhat = v.array() / static_cast<float>(c2);
    params.at(name).array() -= static_cast<float>(lr_) * mhat / (vhat.sqrt() + static_cast<float>(eps_));
  }
}

void Sgd::step(WeightSet& params, const WeightSet& grads) {
  for (const auto& [name, g] : grads) {
    if (momentum_ == 0.0) {
      params.at(name) -= static_cast<float>(lr_) * g;
      continue;
    }
    auto [it, fresh] = velocity_.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
    it->second = static_cast<float>(momentum_) * it->second + g;
    params.at(name) -= static_cast<float>(lr_) * it->second;
  }
}

}  // namespace inout::nn
