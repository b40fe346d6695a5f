#include "mars/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mars/error.hpp"

namespace mars {

Tensor2 embed_lookup(std::span<const TokenIndex> indices, const Tensor2& embedding) {
  if (indices.empty()) throw InputError("embed_lookup: empty index sequence");
  const std::size_t dim = embedding.rows();
  const std::size_t vocab = embedding.cols();
  Tensor2 out(dim, indices.size());
  for (std::size_t t = 0; t < indices.size(); ++t) {
    const TokenIndex idx = indices[t];
    if (idx >= vocab) {
      throw InputError("embed_lookup: index " + std::to_string(idx) + " out of range for vocabulary of " +
                       std::to_string(vocab));
    }
    for (std::size_t r = 0; r < dim; ++r) out(r, t) = embedding(r, idx);
  }
  return out;
}

void embed_lookup_backward(std::span<const TokenIndex> indices, const Tensor2& d_pi,
                           Tensor2& d_embedding, bool freeze_pad) {
  if (d_pi.cols() != indices.size() || d_pi.rows() != d_embedding.rows()) {
    throw InputError("embed_lookup_backward: shape mismatch");
  }
  for (std::size_t t = 0; t < indices.size(); ++t) {
    const TokenIndex idx = indices[t];
    if (freeze_pad && idx == kPadIndex) continue;
    for (std::size_t r = 0; r < d_pi.rows(); ++r) d_embedding(r, idx) += d_pi(r, t);
  }
}

std::vector<double> conv1d_valid(const Tensor2& pi, std::span<const double> kernel,
                                 std::size_t window, double bias) {
  const std::size_t dim = pi.rows();
  const std::size_t n = pi.cols();
  if (window == 0 || kernel.size() != dim * window) {
    throw InputError("conv1d_valid: kernel shape does not match e x c");
  }
  if (n < window) {
    throw InputError("conv1d_valid: sequence length " + std::to_string(n) + " shorter than window " +
                     std::to_string(window));
  }
  std::vector<double> out(n - window + 1);
  for (std::size_t t = 0; t < out.size(); ++t) {
    double acc = bias;
    for (std::size_t r = 0; r < dim; ++r) {
      const double* p = &pi.data()[r * n + t];
      const double* k = &kernel[r * window];
      for (std::size_t j = 0; j < window; ++j) acc += p[j] * k[j];
    }
    out[t] = acc > 0.0 ? acc : 0.0;
  }
  return out;
}

std::vector<double> conv1d_valid(const Tensor2& pi, const Tensor2& kernel, double bias) {
  if (kernel.rows() != pi.rows()) throw InputError("conv1d_valid: kernel rows must equal e");
  return conv1d_valid(pi, kernel.data(), kernel.cols(), bias);
}

void conv1d_valid_backward(const Tensor2& pi, std::span<const double> kernel,
                           std::size_t window, std::span<const double> activated,
                           std::span<const double> d_out, Tensor2* d_pi,
                           std::span<double> d_kernel, double& d_bias) {
  const std::size_t dim = pi.rows();
  const std::size_t n = pi.cols();
  if (activated.size() != d_out.size() || n < window || activated.size() != n - window + 1 ||
      d_kernel.size() != kernel.size() || kernel.size() != dim * window) {
    throw InputError("conv1d_valid_backward: shape mismatch");
  }
  if (d_pi != nullptr && !d_pi->same_shape(pi)) throw InputError("conv1d_valid_backward: d_pi shape");
  for (std::size_t t = 0; t < d_out.size(); ++t) {
    const double g = d_out[t];
    if (g == 0.0 || activated[t] <= 0.0) continue;
    d_bias += g;
    for (std::size_t r = 0; r < dim; ++r) {
      for (std::size_t j = 0; j < window; ++j) {
        d_kernel[r * window + j] += g * pi(r, t + j);
        if (d_pi != nullptr) (*d_pi)(r, t + j) += g * kernel[r * window + j];
      }
    }
  }
}

MaxPoolResult maxpool(std::span<const double> z) {
  if (z.empty()) throw InputError("maxpool: empty vector");
  MaxPoolResult best{z[0], 0};
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (z[i] > best.value) best = {z[i], i};
  }
  return best;
}

std::vector<double> maxpool_backward(std::size_t length, std::size_t index, double d_out) {
  if (index >= length) throw InputError("maxpool_backward: index out of range");
  std::vector<double> grad(length, 0.0);
  grad[index] = d_out;
  return grad;
}

std::vector<double> dense_tanh(std::span<const double> s, const Tensor2& weight, double bias) {
  if (weight.cols() != s.size()) {
    throw InputError("dense_tanh: weight has " + std::to_string(weight.cols()) + " columns, input has " +
                     std::to_string(s.size()) + " entries");
  }
  std::vector<double> out(weight.rows());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::tanh(dot(weight.row(k), s) + bias);
  return out;
}

void dense_tanh_backward(std::span<const double> s, const Tensor2& weight,
                         std::span<const double> out, std::span<const double> d_out,
                         std::span<double> d_s, Tensor2& d_weight, double& d_bias) {
  if (out.size() != weight.rows() || d_out.size() != out.size() || weight.cols() != s.size() ||
      !d_weight.same_shape(weight) || (!d_s.empty() && d_s.size() != s.size())) {
    throw InputError("dense_tanh_backward: shape mismatch");
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double d_pre = d_out[k] * (1.0 - out[k] * out[k]);
    if (d_pre == 0.0) continue;
    d_bias += d_pre;
    axpy(d_pre, s, d_weight.row(k));
    if (!d_s.empty()) axpy(d_pre, weight.row(k), d_s);
  }
}

std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) throw InputError("softmax: empty vector");
  const double shift = *std::max_element(x.begin(), x.end());
  std::vector<double> y(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - shift);
    total += y[i];
  }
  for (double& v : y) v /= total;
  return y;
}

std::vector<double> softmax_backward(std::span<const double> y, std::span<const double> d_y) {
  if (y.size() != d_y.size()) throw InputError("softmax_backward: length mismatch");
  const double inner = dot(y, d_y);
  std::vector<double> d_x(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) d_x[i] = y[i] * (d_y[i] - inner);
  return d_x;
}

double log_sigmoid(double x) {
  // ln σ(x) = -softplus(-x) = min(x, 0) - ln(1 + e^{-|x|})
  return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace mars
