// SPDX-License-Identifier: Apache-2.0
//
// Fully connected tanh network over a flat parameter vector. The network
// object only describes the layout; weights live in caller-owned storage so
// that optimizers and checkpoints can treat them as one contiguous array.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace nmjd {

struct LayerLayout {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  // out x in, row-major
  std::size_t bias_offset = 0;    // out
};

/// Activations kept by forward() for the backward pass.
struct MlpTape {
  std::vector<std::vector<double>> values;  // values[0] is the input; last is the output
};

class Mlp {
 public:
  /// Hidden layers use tanh; the output layer is linear.
  Mlp(int input_width, std::vector<int> hidden_sizes, int output_width);

  int input_width() const { return input_width_; }
  int output_width() const { return output_width_; }
  const std::vector<int>& hidden_sizes() const { return hidden_; }
  const std::vector<LayerLayout>& layers() const { return layers_; }
  std::size_t parameter_count() const { return parameter_count_; }

  /// Glorot-uniform weights and zero biases. The output layer's weights are
  /// multiplied by `output_scale` (0 gives a zero-initialized final layer).
  std::vector<double> initialize(std::uint64_t seed, double output_scale = 1.0) const;

  /// Runs the network, recording activations into `tape`.
  void forward(std::span<const double> params, std::span<const double> input, MlpTape& tape) const;

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  /// When `d_input` is non-empty it receives d(loss)/d(input).
  void backward(std::span<const double> params, const MlpTape& tape,
                std::span<const double> d_output, std::span<double> grad,
                std::span<double> d_input = {}) const;

 private:
  int input_width_;
  int output_width_;
  std::vector<int> hidden_;
  std::vector<LayerLayout> layers_;
  std::size_t parameter_count_ = 0;
};

}  // namespace nmjd
