#include "tabsynth/vgm.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/special_functions/digamma.hpp>

#include "tabsynth/error.h"

namespace tabsynth {

double normal_density(double x, double mean, double stddev) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  const double z = (x - mean) / stddev;
  return kInvSqrt2Pi / stddev * std::exp(-0.5 * z * z);
}

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

using boost::math::digamma;

struct Prior {
  double concentration;  // Dirichlet alpha_0
  double mean_precision = 1.0;  // beta_0
  double mean = 0.0;  // m_0 (data are standardized)
  double shape = 0.5;  // a_0
  double rate = 0.5;  // b_0
};

// Posterior over K components: Dirichlet(alpha) x Normal-Gamma(m, beta, a, b).
struct Posterior {
  std::vector<double> count, xbar, scatter;
  std::vector<double> alpha, beta, m, a, b;
  std::size_t size() const { return alpha.size(); }
};

// Responsibilities are row-major n x K.
struct Responsibilities {
  std::size_t n = 0, k = 0;
  std::vector<double> r;
  double& at(std::size_t i, std::size_t j) { return r[i * k + j]; }
  double at(std::size_t i, std::size_t j) const { return r[i * k + j]; }
};

Posterior m_step(std::span<const double> x, const Responsibilities& resp, const Prior& prior) {
  const std::size_t K = resp.k;
  Posterior p;
  p.count.assign(K, 0.0);
  p.xbar.assign(K, 0.0);
  p.scatter.assign(K, 0.0);
  for (std::size_t i = 0; i < resp.n; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      p.count[j] += resp.at(i, j);
      p.xbar[j] += resp.at(i, j) * x[i];
    }
  }
  for (std::size_t j = 0; j < K; ++j) {
    p.count[j] += 10.0 * std::numeric_limits<double>::epsilon();
    p.xbar[j] /= p.count[j];
  }
  for (std::size_t i = 0; i < resp.n; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      const double d = x[i] - p.xbar[j];
      p.scatter[j] += resp.at(i, j) * d * d;
    }
  }
  p.alpha.resize(K);
  p.beta.resize(K);
  p.m.resize(K);
  p.a.resize(K);
  p.b.resize(K);
  for (std::size_t j = 0; j < K; ++j) {
    const double nk = p.count[j];
    p.scatter[j] /= nk;
    p.alpha[j] = prior.concentration + nk;
    p.beta[j] = prior.mean_precision + nk;
    p.m[j] = (prior.mean_precision * prior.mean + nk * p.xbar[j]) / p.beta[j];
    p.a[j] = prior.shape + 0.5 * nk;
    const double dm = p.xbar[j] - prior.mean;
    p.b[j] = prior.rate +
             0.5 * (nk * p.scatter[j] + prior.mean_precision * nk * dm * dm / (prior.mean_precision + nk));
  }
  return p;
}

Responsibilities e_step(std::span<const double> x, const Posterior& p) {
  const std::size_t K = p.size();
  double alpha_sum = std::accumulate(p.alpha.begin(), p.alpha.end(), 0.0);
  std::vector<double> base(K), precision(K);
  for (std::size_t j = 0; j < K; ++j) {
    const double log_pi = digamma(p.alpha[j]) - digamma(alpha_sum);
    const double log_lambda = digamma(p.a[j]) - std::log(p.b[j]);
    base[j] = log_pi + 0.5 * log_lambda - 0.5 * kLog2Pi - 0.5 / p.beta[j];
    precision[j] = p.a[j] / p.b[j];
  }
  Responsibilities resp{x.size(), K, std::vector<double>(x.size() * K)};
  std::vector<double> row(K);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < K; ++j) {
      const double d = x[i] - p.m[j];
      row[j] = base[j] - 0.5 * precision[j] * d * d;
      top = std::max(top, row[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      row[j] = std::exp(row[j] - top);
      sum += row[j];
    }
    for (std::size_t j = 0; j < K; ++j) resp.at(i, j) = row[j] / sum;
  }
  return resp;
}

double lower_bound(const Responsibilities& resp, const Posterior& p, const Prior& prior) {
  const std::size_t K = p.size();
  const double alpha_sum = std::accumulate(p.alpha.begin(), p.alpha.end(), 0.0);
  const double a0 = prior.concentration, beta0 = prior.mean_precision, m0 = prior.mean;
  const double c0 = prior.shape, d0 = prior.rate;

  double expected = 0.0;  // E[ln p(X, Z, pi, mu, lambda)]
  double entropy = 0.0;  // -E[ln q]
  double sum_log_pi = 0.0;
  double q_pi = 0.0;
  for (std::size_t j = 0; j < K; ++j) {
    const double log_lambda = digamma(p.a[j]) - std::log(p.b[j]);
    const double e_lambda = p.a[j] / p.b[j];
    const double log_pi = digamma(p.alpha[j]) - digamma(alpha_sum);
    const double nk = p.count[j];
    const double dx = p.xbar[j] - p.m[j];
    const double dm = p.m[j] - m0;

    expected += 0.5 * nk * (log_lambda - 1.0 / p.beta[j] - e_lambda * (p.scatter[j] + dx * dx) - kLog2Pi);
    expected += nk * log_pi;
    expected += 0.5 * (std::log(beta0) - kLog2Pi + log_lambda - beta0 / p.beta[j] - beta0 * e_lambda * dm * dm);
    expected += c0 * std::log(d0) - std::lgamma(c0) + (c0 - 1.0) * log_lambda - d0 * e_lambda;
    sum_log_pi += log_pi;

    entropy -= 0.5 * (std::log(p.beta[j]) - kLog2Pi + log_lambda - 1.0);
    entropy -= p.a[j] * std::log(p.b[j]) - std::lgamma(p.a[j]) + (p.a[j] - 1.0) * log_lambda - p.a[j];
    q_pi += (p.alpha[j] - 1.0) * log_pi - std::lgamma(p.alpha[j]);
  }
  const double k = static_cast<double>(K);
  expected += std::lgamma(k * a0) - k * std::lgamma(a0) + (a0 - 1.0) * sum_log_pi;
  entropy -= std::lgamma(alpha_sum) + q_pi;
  for (double r : resp.r) {
    if (r > 0.0) entropy -= r * std::log(r);
  }
  return expected + entropy;
}

// k-means++ seeding followed by Lloyd refinement; returns hard labels.
std::vector<std::size_t> kmeans_labels(std::span<const double> x, std::size_t K, std::mt19937_64& rng) {
  std::vector<double> centers;
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  centers.push_back(x[pick(rng)]);
  std::vector<double> dist(x.size());
  while (centers.size() < K) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (x[i] - c) * (x[i] - c));
      dist[i] = best;
      total += best;
    }
    if (total <= 0.0) break;
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng), acc = 0.0;
    std::size_t chosen = x.size() - 1;
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc += dist[i];
      if (acc >= target) {
        chosen = i;
        break;
      }
    }
    centers.push_back(x[chosen]);
  }
  std::vector<std::size_t> labels(x.size(), 0);
  for (int iter = 0; iter < 20; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < centers.size(); ++j) {
        if (std::abs(x[i] - centers[j]) < std::abs(x[i] - centers[best])) best = j;
      }
      if (best != labels[i]) {
        labels[i] = best;
        changed = true;
      }
    }
    std::vector<double> sum(centers.size(), 0.0), cnt(centers.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      sum[labels[i]] += x[i];
      cnt[labels[i]] += 1.0;
    }
    for (std::size_t j = 0; j < centers.size(); ++j) {
      if (cnt[j] > 0.0) centers[j] = sum[j] / cnt[j];
    }
    if (!changed && iter > 0) break;
  }
  return labels;
}

Responsibilities drop_component(const Responsibilities& resp, std::size_t drop) {
  Responsibilities out{resp.n, resp.k - 1, std::vector<double>(resp.n * (resp.k - 1))};
  for (std::size_t i = 0; i < resp.n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0, c = 0; j < resp.k; ++j) {
      if (j == drop) continue;
      out.at(i, c) = resp.at(i, j);
      sum += resp.at(i, j);
      ++c;
    }
    for (std::size_t c = 0; c < out.k; ++c) {
      out.at(i, c) = sum > 0.0 ? out.at(i, c) / sum : 1.0 / static_cast<double>(out.k);
    }
  }
  return out;
}

struct State {
  Responsibilities resp;
  Posterior post;
  double bound;
  std::vector<std::size_t> ids;  // original component index of each column
};

constexpr std::size_t kDeletionRefineSteps = 5;
constexpr std::size_t kDeletionPeriod = 5;

// Tries deleting components, smallest first, accepting any deletion that raises the bound.
bool try_deletions(std::span<const double> x, const Prior& prior, State& state) {
  bool accepted_any = false;
  bool accepted = true;
  while (accepted && state.post.size() > 1) {
    accepted = false;
    std::vector<std::size_t> order(state.post.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return state.post.count[a] < state.post.count[b]; });
    for (std::size_t drop : order) {
      Responsibilities resp = drop_component(state.resp, drop);
      Posterior post = m_step(x, resp, prior);
      for (std::size_t s = 0; s < kDeletionRefineSteps; ++s) {
        resp = e_step(x, post);
        post = m_step(x, resp, prior);
      }
      const double bound = lower_bound(resp, post, prior);
      if (bound > state.bound) {
        state.ids.erase(state.ids.begin() + static_cast<std::ptrdiff_t>(drop));
        state.resp = std::move(resp);
        state.post = std::move(post);
        state.bound = bound;
        accepted = accepted_any = true;
        break;
      }
    }
  }
  return accepted_any;
}

}  // namespace

GaussianMixtureModel fit_vgm(std::span<const double> values, const VgmOptions& options, VgmTrace* trace) {
  if (values.empty()) throw InputError("fit_vgm: no values");
  if (options.max_modes < 1) throw InputError("fit_vgm: max_modes must be >= 1");
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("fit_vgm: non-finite value");
  }

  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  const double stddev = std::sqrt(var);

  std::vector<double> distinct(values.begin(), values.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() == 1 || stddev == 0.0) {
    const double floor = options.sigma_floor_ratio * std::max({stddev, std::abs(values[0]), 1.0});
    if (trace) *trace = VgmTrace{{}, 0, true};
    return GaussianMixtureModel{{GaussianMode{1.0, values[0], floor}}, {0}};
  }

  std::vector<double> x(values.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (values[i] - mean) / stddev;

  const std::size_t K = std::min(options.max_modes, distinct.size());
  Prior prior;
  prior.concentration = options.weight_concentration > 0.0 ? options.weight_concentration
                                                           : 1.0 / static_cast<double>(options.max_modes);

  std::mt19937_64 rng(options.seed);
  const auto labels = kmeans_labels(x, K, rng);
  State state;
  state.resp = Responsibilities{x.size(), K, std::vector<double>(x.size() * K, 0.0)};
  for (std::size_t i = 0; i < x.size(); ++i) state.resp.at(i, labels[i]) = 1.0;
  state.ids.resize(K);
  std::iota(state.ids.begin(), state.ids.end(), std::size_t{0});

  VgmTrace local;
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    state.post = m_step(x, state.resp, prior);
    state.bound = lower_bound(state.resp, state.post, prior);
    bool converged = std::isfinite(previous) &&
                     std::abs(state.bound - previous) < options.tolerance * std::abs(previous);
    if ((iter % kDeletionPeriod == kDeletionPeriod - 1 || converged) && state.post.size() > 1) {
      if (try_deletions(x, prior, state)) converged = false;
    }
    local.lower_bound.push_back(state.bound);
    local.iterations = iter + 1;
    if (converged) {
      local.converged = true;
      break;
    }
    previous = state.bound;
    state.resp = e_step(x, state.post);
  }

  const double alpha_sum = std::accumulate(state.post.alpha.begin(), state.post.alpha.end(), 0.0);
  const double sigma_floor = options.sigma_floor_ratio * stddev;
  struct Candidate {
    GaussianMode mode;
    std::size_t id;
  };
  std::vector<Candidate> kept;
  double kept_weight = 0.0;
  for (std::size_t j = 0; j < state.post.size(); ++j) {
    const double w = state.post.alpha[j] / alpha_sum;
    if (w < options.weight_threshold) continue;
    const double sigma = std::max(stddev * std::sqrt(state.post.b[j] / state.post.a[j]), sigma_floor);
    kept.push_back({GaussianMode{w, mean + stddev * state.post.m[j], sigma}, state.ids[j]});
    kept_weight += w;
  }
  if (kept.empty()) {
    // All components under threshold: keep the heaviest one.
    std::size_t best = 0;
    for (std::size_t j = 1; j < state.post.size(); ++j) {
      if (state.post.alpha[j] > state.post.alpha[best]) best = j;
    }
    const double sigma = std::max(stddev * std::sqrt(state.post.b[best] / state.post.a[best]), sigma_floor);
    kept.push_back({GaussianMode{1.0, mean + stddev * state.post.m[best], sigma}, state.ids[best]});
    kept_weight = 1.0;
  }
  std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) { return a.mode.mean < b.mode.mean; });

  GaussianMixtureModel model;
  for (auto& c : kept) {
    c.mode.weight /= kept_weight;
    model.modes.push_back(c.mode);
    model.retained.push_back(c.id);
  }
  if (trace) *trace = std::move(local);
  return model;
}

}  // namespace tabsynth
