#include "tabsynth/neural.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "tabsynth/error.h"

namespace tabsynth {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw InputError("truncated network checkpoint");
  return v;
}

void put_values(std::ostream& out, const double* data, Eigen::Index n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_values(std::istream& in, double* data, Eigen::Index n) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw InputError("truncated network checkpoint");
  }
}

}  // namespace

Matrix activate(const Matrix& z, Activation a) {
  switch (a) {
    case Activation::LeakyRelu:
      return z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    case Activation::Relu:
      return z.cwiseMax(0.0);
    case Activation::Tanh:
      return z.array().tanh().matrix();
    case Activation::Sigmoid:
      return z.unaryExpr([](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
    case Activation::Identity:
      return z;
  }
  return z;
}

Matrix activation_grad(const Matrix& y, Activation a) {
  switch (a) {
    case Activation::LeakyRelu:
      return y.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
    case Activation::Relu:
      return y.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::Tanh:
      return (1.0 - y.array().square()).matrix();
    case Activation::Sigmoid:
      return (y.array() * (1.0 - y.array())).matrix();
    case Activation::Identity:
      return Matrix::Ones(y.rows(), y.cols());
  }
  return Matrix::Ones(y.rows(), y.cols());
}

DenseNet::DenseNet(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations,
                   std::mt19937_64& rng) {
  if (dims.size() < 2 || activations.size() + 1 != dims.size()) {
    throw InputError("network needs n + 1 dimensions for n activations");
  }
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(dims[i]);
    const auto out = static_cast<Eigen::Index>(dims[i + 1]);
    if (in == 0 || out == 0) throw InputError("network layer dimension is zero");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(in, out);
    for (Eigen::Index k = 0; k < layer.weight.size(); ++k) layer.weight.data()[k] = u(rng);
    layer.bias.resize(out);
    for (Eigen::Index k = 0; k < out; ++k) layer.bias[k] = u(rng);
    layer.activation = activations[i];
    layer.weight_grad = Matrix::Zero(in, out);
    layer.bias_grad = RowVector::Zero(out);
    layers_.push_back(std::move(layer));
  }
}

std::size_t DenseNet::input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.rows()); }

std::size_t DenseNet::output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.cols()); }

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

const Matrix& DenseNet::forward(const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != input_dim()) {
    throw InputError("network input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(input_dim()));
  }
  inputs_.resize(layers_.size());
  outputs_.resize(layers_.size());
  const Matrix* cur = &x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    inputs_[i] = *cur;
    Matrix z = *cur * l.weight;
    z.rowwise() += l.bias;
    outputs_[i] = activate(z, l.activation);
    cur = &outputs_[i];
  }
  if (!outputs_.back().allFinite()) throw NumericError("network produced a non-finite output");
  return outputs_.back();
}

Matrix DenseNet::infer(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim()) throw InputError("network input width mismatch");
  Matrix cur = x;
  for (const auto& l : layers_) {
    Matrix z = cur * l.weight;
    z.rowwise() += l.bias;
    cur = activate(z, l.activation);
  }
  if (!cur.allFinite()) throw NumericError("network produced a non-finite output");
  return cur;
}

Matrix DenseNet::backward(const Matrix& grad_out, const std::vector<LayerTap>& taps, bool accumulate) {
  if (outputs_.size() != layers_.size() || layers_.empty()) throw Error("backward called before forward");
  if (grad_out.rows() != outputs_.back().rows() || grad_out.cols() != outputs_.back().cols()) {
    throw InputError("upstream gradient shape does not match the network output");
  }
  Matrix g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    for (const auto& tap : taps) {
      if (tap.layer != i) continue;
      if (tap.grad.rows() != g.rows() || tap.grad.cols() != g.cols()) throw InputError("layer tap shape mismatch");
      g += tap.grad;
    }
    auto& l = layers_[i];
    const Matrix delta = g.cwiseProduct(activation_grad(outputs_[i], l.activation));
    if (accumulate) {
      l.weight_grad.noalias() += inputs_[i].transpose() * delta;
      l.bias_grad += delta.colwise().sum();
    }
    g.noalias() = delta * l.weight.transpose();
  }
  return g;
}

const Matrix& DenseNet::layer_output(std::size_t i) const {
  if (i >= outputs_.size()) throw Error("layer output requested before forward");
  return outputs_[i];
}

void DenseNet::zero_grad() {
  for (auto& l : layers_) {
    l.weight_grad.setZero();
    l.bias_grad.setZero();
  }
}

void DenseNet::save(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, layers_.size());
  for (const auto& l : layers_) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(l.weight.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(l.weight.cols()));
    put<std::int32_t>(out, static_cast<std::int32_t>(l.activation));
    put_values(out, l.weight.data(), l.weight.size());
    put_values(out, l.bias.data(), l.bias.size());
  }
  if (!out) throw Error("failed to write network checkpoint");
}

DenseNet DenseNet::load(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw InputError("not a network checkpoint");
  if (get<std::uint32_t>(in) != kVersion) throw InputError("unsupported network checkpoint version");
  const auto count = get<std::uint64_t>(in);
  DenseNet net;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto rows = static_cast<Eigen::Index>(get<std::uint64_t>(in));
    const auto cols = static_cast<Eigen::Index>(get<std::uint64_t>(in));
    const auto act = get<std::int32_t>(in);
    if (act < 0 || act > static_cast<std::int32_t>(Activation::Identity)) throw InputError("bad activation code");
    if (!net.layers_.empty() && net.layers_.back().weight.cols() != rows) throw InputError("layer shapes disagree");
    DenseLayer l;
    l.activation = static_cast<Activation>(act);
    l.weight.resize(rows, cols);
    get_values(in, l.weight.data(), l.weight.size());
    l.bias.resize(cols);
    get_values(in, l.bias.data(), l.bias.size());
    l.weight_grad = Matrix::Zero(rows, cols);
    l.bias_grad = RowVector::Zero(cols);
    net.layers_.push_back(std::move(l));
  }
  return net;
}

void DenseNet::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  save(out);
}

DenseNet DenseNet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  return load(in);
}

void adam_update(Eigen::Ref<Matrix> param, const Eigen::Ref<const Matrix>& grad, Matrix& m, Matrix& v,
                 std::size_t step, const AdamConfig& c) {
  if (!grad.allFinite()) throw NumericError("non-finite gradient");
  m = c.beta1 * m + (1.0 - c.beta1) * grad;
  v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseAbs2();
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  param.array() -= c.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + c.epsilon);
}

Adam::Adam(const DenseNet& net, AdamConfig config) : config_(config) {
  for (const auto& l : net.layers()) {
    m_w_.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    v_w_.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    m_b_.push_back(Matrix::Zero(1, l.bias.cols()));
    v_b_.push_back(Matrix::Zero(1, l.bias.cols()));
  }
}

void Adam::step(DenseNet& net) {
  auto& layers = net.layers();
  if (layers.size() != m_w_.size()) throw InputError("optimizer state does not match the network");
  ++step_;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    adam_update(layers[i].weight, layers[i].weight_grad, m_w_[i], v_w_[i], step_, config_);
    adam_update(layers[i].bias, layers[i].bias_grad, m_b_[i], v_b_[i], step_, config_);
  }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return out;
}

namespace {

double gumbel(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = std::max(u(rng), std::numeric_limits<double>::min());
  return -std::log(-std::log(x));
}

}  // namespace

RowVector gumbel_one_hot(const RowVector& logits, double temperature, std::mt19937_64& rng) {
  if (!(temperature > 0.0)) throw InputError("temperature must be positive");
  Matrix scaled(1, logits.size());
  for (Eigen::Index k = 0; k < logits.size(); ++k) scaled(0, k) = (logits[k] + gumbel(rng)) / temperature;
  return softmax_rows(scaled).row(0);
}

OutputHead::OutputHead(const EncodingLayout& layout, double temperature) : temperature_(temperature) {
  if (!(temperature > 0.0)) throw InputError("temperature must be positive");
  for (const auto& seg : layout.segments) {
    segments_.push_back({seg.offset, seg.width, seg.kind != SegmentKind::Alpha});
  }
}

const Matrix& OutputHead::forward(const Matrix& logits, std::mt19937_64& rng) {
  output_.resizeLike(logits);
  scaled_ = Matrix::Zero(logits.rows(), logits.cols());
  for (const auto& seg : segments_) {
    const auto off = static_cast<Eigen::Index>(seg.offset);
    const auto w = static_cast<Eigen::Index>(seg.width);
    if (!seg.one_hot) {
      output_.middleCols(off, w) = logits.middleCols(off, w).array().tanh().matrix();
      continue;
    }
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      for (Eigen::Index k = 0; k < w; ++k) scaled_(r, off + k) = (logits(r, off + k) + gumbel(rng)) / temperature_;
    }
    output_.middleCols(off, w) = softmax_rows(scaled_.middleCols(off, w));
  }
  return output_;
}

Matrix OutputHead::backward(const Matrix& grad_out) const {
  if (grad_out.rows() != output_.rows() || grad_out.cols() != output_.cols()) {
    throw InputError("head gradient shape mismatch");
  }
  Matrix g(grad_out.rows(), grad_out.cols());
  for (const auto& seg : segments_) {
    const auto off = static_cast<Eigen::Index>(seg.offset);
    const auto w = static_cast<Eigen::Index>(seg.width);
    const auto y = output_.middleCols(off, w);
    const auto up = grad_out.middleCols(off, w);
    if (!seg.one_hot) {
      g.middleCols(off, w) = up.cwiseProduct((1.0 - y.array().square()).matrix());
      continue;
    }
    // softmax Jacobian: s * (u - <u, s>), then the 1/temperature scale.
    const Eigen::VectorXd dot = up.cwiseProduct(y).rowwise().sum();
    g.middleCols(off, w) = (y.array() * (up.colwise() - dot).array()).matrix() / temperature_;
  }
  return g;
}

}  // namespace tabsynth
