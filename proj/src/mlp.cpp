// SPDX-License-Identifier: Apache-2.0
#include "nmjd/mlp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "nmjd/rng.hpp"

namespace nmjd {

Mlp::Mlp(int input_width, std::vector<int> hidden_sizes, int output_width)
    : input_width_(input_width), output_width_(output_width), hidden_(std::move(hidden_sizes)) {
  if (input_width < 1 || output_width < 1) {
    throw std::invalid_argument("Mlp: input and output widths must be >= 1");
  }
  if (hidden_.empty()) throw std::invalid_argument("Mlp: hidden_sizes must be non-empty");
  int prev = input_width;
  std::size_t offset = 0;
  auto add = [&](int out) {
    if (out < 1) throw std::invalid_argument("Mlp: layer width must be >= 1, got " + std::to_string(out));
    LayerLayout l;
    l.in = prev;
    l.out = out;
    l.weight_offset = offset;
    offset += static_cast<std::size_t>(prev) * static_cast<std::size_t>(out);
    l.bias_offset = offset;
    offset += static_cast<std::size_t>(out);
    layers_.push_back(l);
    prev = out;
  };
  for (int h : hidden_) add(h);
  add(output_width);
  parameter_count_ = offset;
}

std::vector<double> Mlp::initialize(std::uint64_t seed, double output_scale) const {
  std::vector<double> params(parameter_count_, 0.0);
  RandomStream rng(seed);
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    const double scale = li + 1 == layers_.size() ? output_scale : 1.0;
    const std::size_t n = static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out);
    for (std::size_t i = 0; i < n; ++i) {
      params[l.weight_offset + i] = scale * limit * (2.0 * rng.uniform() - 1.0);
    }
  }
  return params;
}

void Mlp::forward(std::span<const double> params, std::span<const double> input,
                  MlpTape& tape) const {
  if (params.size() != parameter_count_) {
    throw std::invalid_argument("Mlp::forward: expected " + std::to_string(parameter_count_) +
                                " parameters, got " + std::to_string(params.size()));
  }
  if (input.size() != static_cast<std::size_t>(input_width_)) {
    throw std::invalid_argument("Mlp::forward: expected input width " +
                                std::to_string(input_width_) + ", got " +
                                std::to_string(input.size()));
  }
  tape.values.resize(layers_.size() + 1);
  tape.values[0].assign(input.begin(), input.end());
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const auto& x = tape.values[li];
    auto& y = tape.values[li + 1];
    y.resize(static_cast<std::size_t>(l.out));
    const bool hidden = li + 1 < layers_.size();
    for (int o = 0; o < l.out; ++o) {
      const double* w = params.data() + l.weight_offset + static_cast<std::size_t>(o) * l.in;
      double acc = params[l.bias_offset + static_cast<std::size_t>(o)];
      for (int i = 0; i < l.in; ++i) acc += w[i] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = hidden ? std::tanh(acc) : acc;
    }
  }
}

void Mlp::backward(std::span<const double> params, const MlpTape& tape,
                   std::span<const double> d_output, std::span<double> grad,
                   std::span<double> d_input) const {
  if (grad.size() != parameter_count_ || d_output.size() != static_cast<std::size_t>(output_width_)) {
    throw std::invalid_argument("Mlp::backward: shape mismatch");
  }
  std::vector<double> delta(d_output.begin(), d_output.end());
  std::vector<double> prev_delta;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& l = layers_[li];
    const auto& x = tape.values[li];
    if (li + 1 < layers_.size()) {
      // tanh'(a) = 1 - y^2
      const auto& y = tape.values[li + 1];
      for (std::size_t o = 0; o < delta.size(); ++o) delta[o] *= 1.0 - y[o] * y[o];
    }
    prev_delta.assign(static_cast<std::size_t>(l.in), 0.0);
    for (int o = 0; o < l.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      const std::size_t row = l.weight_offset + static_cast<std::size_t>(o) * l.in;
      grad[l.bias_offset + static_cast<std::size_t>(o)] += d;
      for (int i = 0; i < l.in; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        grad[row + ii] += d * x[ii];
        prev_delta[ii] += d * params[row + ii];
      }
    }
    delta.swap(prev_delta);
  }
  if (!d_input.empty()) {
    if (d_input.size() != delta.size()) throw std::invalid_argument("Mlp::backward: d_input size");
    for (std::size_t i = 0; i < delta.size(); ++i) d_input[i] = delta[i];
  }
}

}  // namespace nmjd
