#include "tabsynth/losses.h"

#include <algorithm>
#include <cmath>

#include "tabsynth/error.h"

namespace tabsynth {

namespace {

constexpr double kProbabilityClamp = 1e-7;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double finite_or_throw(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
  return v;
}

// log-sum-exp of a row segment.
template <typename Row>
double log_sum_exp(const Row& row) {
  const double m = row.maxCoeff();
  return m + std::log((row.array() - m).exp().sum());
}

}  // namespace

AdversarialLosses adversarial_losses(const Matrix& real_prob, const Matrix& fake_prob) {
  auto clamp = [](double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); };
  const Matrix r = real_prob.unaryExpr(clamp), f = fake_prob.unaryExpr(clamp);
  AdversarialLosses out;
  out.discriminator = -r.array().log().mean() - (1.0 - f.array()).log().mean();
  out.generator = -f.array().log().mean();
  finite_or_throw(out.discriminator, "discriminator loss");
  return out;
}

double discriminator_loss(const Matrix& real_logits, const Matrix& fake_logits, Matrix* real_grad,
                          Matrix* fake_grad) {
  const double nr = static_cast<double>(real_logits.size()), nf = static_cast<double>(fake_logits.size());
  const double loss = real_logits.unaryExpr([](double x) { return softplus(-x); }).sum() / nr +
                      fake_logits.unaryExpr([](double x) { return softplus(x); }).sum() / nf;
  if (real_grad) *real_grad = real_logits.unaryExpr([nr](double x) { return -sigmoid(-x) / nr; });
  if (fake_grad) *fake_grad = fake_logits.unaryExpr([nf](double x) { return sigmoid(x) / nf; });
  return finite_or_throw(loss, "discriminator loss");
}

double generator_adversarial_loss(const Matrix& fake_logits, Matrix* fake_grad) {
  const double n = static_cast<double>(fake_logits.size());
  const double loss = fake_logits.unaryExpr([](double x) { return softplus(-x); }).sum() / n;
  if (fake_grad) *fake_grad = fake_logits.unaryExpr([n](double x) { return -sigmoid(-x) / n; });
  return finite_or_throw(loss, "generator loss");
}

FeatureStats feature_stats(const Matrix& h) {
  if (h.rows() == 0) throw InputError("feature statistics of an empty batch");
  FeatureStats s;
  s.mean = h.colwise().mean();
  s.stddev = ((h.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(h.rows())).sqrt().matrix();
  return s;
}

double info_loss(const FeatureStats& real, const FeatureStats& fake) {
  if (real.mean.size() != fake.mean.size() || real.stddev.size() != fake.stddev.size()) {
    throw InputError("feature statistics width mismatch");
  }
  return finite_or_throw((real.mean - fake.mean).norm() + (real.stddev - fake.stddev).norm(), "information loss");
}

double info_loss(const FeatureStats& real, const Matrix& h, Matrix* grad) {
  const FeatureStats fake = feature_stats(h);
  const double loss = info_loss(real, fake);
  if (!grad) return loss;
  const double b = static_cast<double>(h.rows());
  const RowVector dm = fake.mean - real.mean;
  const RowVector ds = fake.stddev - real.stddev;
  const double nm = dm.norm(), ns = ds.norm();
  // d||dm||/dh_ij = dm_j / (||dm|| b);  d||ds||/dh_ij = ds_j (h_ij - mean_j) / (||ds|| sd_j b).
  // Zero norms and zero deviations take the zero subgradient.
  grad->setZero(h.rows(), h.cols());
  if (nm > 0.0) grad->rowwise() += dm / (nm * b);
  if (ns > 0.0) {
    RowVector scale(h.cols());
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      scale[j] = fake.stddev[j] > 0.0 ? ds[j] / (ns * fake.stddev[j] * b) : 0.0;
    }
    *grad += ((h.rowwise() - fake.mean).array().rowwise() * scale.array()).matrix();
  }
  return loss;
}

double cross_entropy(const Matrix& logits, const std::vector<std::size_t>& labels, Matrix* grad) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw InputError("label count mismatch");
  if (logits.rows() == 0) throw InputError("cross-entropy of an empty batch");
  const double n = static_cast<double>(labels.size());
  double loss = 0.0;
  if (grad) grad->resize(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto k = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)]);
    if (k >= logits.cols()) throw InputError("label out of range");
    const double lse = log_sum_exp(logits.row(r));
    loss += lse - logits(r, k);
    if (grad) {
      grad->row(r) = (logits.row(r).array() - lse).exp().matrix() / n;
      (*grad)(r, k) -= 1.0 / n;
    }
  }
  return finite_or_throw(loss / n, "cross-entropy");
}

double cross_entropy_probabilities(const Matrix& p, const std::vector<std::size_t>& labels) {
  if (static_cast<std::size_t>(p.rows()) != labels.size() || p.rows() == 0) throw InputError("label count mismatch");
  double loss = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    loss -= std::log(std::max(p(r, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)])), 1e-300));
  }
  return loss / static_cast<double>(p.rows());
}

double condition_loss(const Matrix& scaled, const ConditionLayout& layout,
                      const std::vector<ConditionalVector>& conditions, Matrix* grad) {
  if (static_cast<std::size_t>(scaled.rows()) != conditions.size()) throw InputError("condition count mismatch");
  const double n = static_cast<double>(conditions.size());
  if (grad) grad->setZero(scaled.rows(), scaled.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
    const auto& v = conditions[static_cast<std::size_t>(r)];
    const auto& col = layout.columns.at(v.column);
    const auto seg = scaled.row(r).segment(static_cast<Eigen::Index>(col.source_offset),
                                           static_cast<Eigen::Index>(col.width));
    const double lse = log_sum_exp(seg);
    loss += lse - seg[static_cast<Eigen::Index>(v.local)];
    if (grad) {
      auto g = grad->row(r).segment(static_cast<Eigen::Index>(col.source_offset), static_cast<Eigen::Index>(col.width));
      g = (seg.array() - lse).exp().matrix() / n;
      g[static_cast<Eigen::Index>(v.local)] -= 1.0 / n;
    }
  }
  return finite_or_throw(loss / n, "condition loss");
}

}  // namespace tabsynth
