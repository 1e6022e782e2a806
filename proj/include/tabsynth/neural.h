#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <utility>
#include <vector>

#include "tabsynth/codec.h"
#include "tabsynth/matrix.h"

namespace tabsynth {

enum class Activation { LeakyRelu, Relu, Tanh, Sigmoid, Identity };

constexpr double kLeakySlope = 0.2;

struct DenseLayer {
  Matrix weight;  // in x out
  RowVector bias;
  Activation activation = Activation::Identity;
  Matrix weight_grad;
  RowVector bias_grad;
};

// Gradient injected at the output of an intermediate layer during backward.
struct LayerTap {
  std::size_t layer = 0;
  Matrix grad;
};

class DenseNet {
 public:
  DenseNet() = default;
  // dims = {input, hidden..., output}; activations has dims.size() - 1 entries.
  DenseNet(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations, std::mt19937_64& rng);

  // Caches every layer's input and output for backward. Throws NumericError on a
  // non-finite output and InputError on a width mismatch.
  const Matrix& forward(const Matrix& x);
  Matrix infer(const Matrix& x) const;

  // Returns the gradient with respect to the last forward input. Parameter gradients
  // are accumulated unless `accumulate` is false.
  Matrix backward(const Matrix& grad_out, const std::vector<LayerTap>& taps = {}, bool accumulate = true);

  // Output of layer i from the last forward.
  const Matrix& layer_output(std::size_t i) const;
  void zero_grad();

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  void save(std::ostream& out) const;
  static DenseNet load(std::istream& in);
  void save(const std::string& path) const;
  static DenseNet load(const std::string& path);

 private:
  std::vector<DenseLayer> layers_;
  std::vector<Matrix> inputs_;
  std::vector<Matrix> outputs_;
};

Matrix activate(const Matrix& z, Activation a);
// Derivative expressed through the activation output y.
Matrix activation_grad(const Matrix& y, Activation a);

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;
};

// Bias-corrected update of one parameter block; `step` is the 1-based step count.
void adam_update(Eigen::Ref<Matrix> param, const Eigen::Ref<const Matrix>& grad, Matrix& m, Matrix& v,
                 std::size_t step, const AdamConfig& config);

class Adam {
 public:
  Adam() = default;
  Adam(const DenseNet& net, AdamConfig config);
  // Applies the net's accumulated gradients; throws NumericError on non-finite gradients.
  void step(DenseNet& net);
  std::size_t steps() const { return step_; }

 private:
  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<Matrix> m_w_, v_w_, m_b_, v_b_;
};

// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

// Soft one-hot sample: softmax((logits + g) / temperature) with Gumbel noise g.
RowVector gumbel_one_hot(const RowVector& logits, double temperature, std::mt19937_64& rng);

struct HeadSegment {
  std::size_t offset = 0;
  std::size_t width = 0;
  bool one_hot = false;
};

// Maps generator logits to the encoding: tanh on alpha slots, Gumbel softmax on
// every one-hot segment.
class OutputHead {
 public:
  OutputHead() = default;
  OutputHead(const EncodingLayout& layout, double temperature = 0.2);

  // Caches the soft output and the perturbed, temperature-scaled logits.
  const Matrix& forward(const Matrix& logits, std::mt19937_64& rng);
  // Gradient with respect to the logits of the last forward.
  Matrix backward(const Matrix& grad_out) const;

  // (logits + g) / temperature for one-hot segments from the last forward.
  const Matrix& scaled_logits() const { return scaled_; }
  const std::vector<HeadSegment>& segments() const { return segments_; }
  double temperature() const { return temperature_; }

 private:
  std::vector<HeadSegment> segments_;
  double temperature_ = 0.2;
  Matrix output_;
  Matrix scaled_;
};

}  // namespace tabsynth
