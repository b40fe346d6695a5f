#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mars/tensor.hpp"

// Forward and hand-written backward passes for every layer the model uses.
// Backward functions accumulate (+=) into the gradient buffers they are given.
namespace mars {

using TokenIndex = std::uint32_t;
inline constexpr TokenIndex kPadIndex = 0;

// Columns of `embedding` (e x |V|) selected by `indices`, giving e x n.
Tensor2 embed_lookup(std::span<const TokenIndex> indices, const Tensor2& embedding);

// Scatter-add d_pi columns into d_embedding. With freeze_pad the PAD column
// receives nothing, which keeps it pinned at its initial zero value.
void embed_lookup_backward(std::span<const TokenIndex> indices, const Tensor2& d_pi,
                           Tensor2& d_embedding, bool freeze_pad);

// ReLU of the "valid" cross-correlation of pi (e x n) with an e x c kernel,
// stored row-major in `kernel`. Output length n - c + 1.
std::vector<double> conv1d_valid(const Tensor2& pi, std::span<const double> kernel,
                                 std::size_t window, double bias);
std::vector<double> conv1d_valid(const Tensor2& pi, const Tensor2& kernel, double bias);

// `activated` is the forward output; positions where it is 0 pass no gradient.
void conv1d_valid_backward(const Tensor2& pi, std::span<const double> kernel,
                           std::size_t window, std::span<const double> activated,
                           std::span<const double> d_out, Tensor2* d_pi,
                           std::span<double> d_kernel, double& d_bias);

struct MaxPoolResult {
  double value = 0.0;
  std::size_t index = 0;  // first position attaining the max
};

MaxPoolResult maxpool(std::span<const double> z);
std::vector<double> maxpool_backward(std::size_t length, std::size_t index, double d_out);

// tanh(W s + b) with a single scalar bias shared by every output.
std::vector<double> dense_tanh(std::span<const double> s, const Tensor2& weight, double bias);

// `out` is the forward output. d_s may be empty when the input gradient is not needed.
void dense_tanh_backward(std::span<const double> s, const Tensor2& weight,
                         std::span<const double> out, std::span<const double> d_out,
                         std::span<double> d_s, Tensor2& d_weight, double& d_bias);

std::vector<double> softmax(std::span<const double> x);
std::vector<double> softmax_backward(std::span<const double> y, std::span<const double> d_y);

// ln(sigmoid(x)) without overflow or underflow for large |x|.
double log_sigmoid(double x);
double sigmoid(double x);

}  // namespace mars
