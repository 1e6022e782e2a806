#include "tabsynth/similarity.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "tabsynth/error.h"

namespace tabsynth {

namespace {

const std::string kMissingToken = "\x1f<missing>";

std::string token_of(const Cell& c) { return c ? *c : kMissingToken; }

std::vector<double> present_numbers(const Column& c) {
  std::vector<double> out;
  for (std::size_t r = 0; r < c.size(); ++r) {
    if (const auto v = c.number(r)) out.push_back(*v);
  }
  return out;
}

double entropy(const std::unordered_map<std::string, double>& counts, double n) {
  double h = 0.0;
  for (const auto& [_, k] : counts) {
    if (k > 0) h -= (k / n) * std::log(k / n);
  }
  return h;
}

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.empty() || p.size() != q.size()) throw InputError("jsd needs two distributions over the same support");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    // Summing the two halves per index keeps jsd(p, q) == jsd(q, p) bit for bit.
    const double m = 0.5 * (p[i] + q[i]);
    const double a = p[i] > 0 ? 0.5 * p[i] * std::log2(p[i] / m) : 0.0;
    const double b = q[i] > 0 ? 0.5 * q[i] * std::log2(q[i] / m) : 0.0;
    d += a + b;
  }
  return std::clamp(d, 0.0, 1.0);
}

AlignedFrequencies aligned_frequencies(const Column& real, const Column& synthetic) {
  std::map<std::string, std::pair<double, double>> counts;
  for (const auto& c : real.cells()) counts[token_of(c)].first += 1;
  for (const auto& c : synthetic.cells()) counts[token_of(c)].second += 1;
  AlignedFrequencies out;
  const double nr = static_cast<double>(std::max<std::size_t>(real.size(), 1));
  const double ns = static_cast<double>(std::max<std::size_t>(synthetic.size(), 1));
  const auto missing = counts.find(kMissingToken);
  for (const auto& [token, k] : counts) {
    if (token == kMissingToken) continue;
    out.categories.push_back(token);
    out.real.push_back(k.first / nr);
    out.synthetic.push_back(k.second / ns);
  }
  // Missing is its own category, listed last.
  if (missing != counts.end()) {
    out.categories.push_back("");
    out.real.push_back(missing->second.first / nr);
    out.synthetic.push_back(missing->second.second / ns);
  }
  return out;
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InputError("wasserstein distance of an empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  // Integrate |F_x - F_y| between consecutive points of the merged support.
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(x[0], y[0]), total = 0.0;
  while (i < x.size() || j < y.size()) {
    const double next = (j >= y.size() || (i < x.size() && x[i] <= y[j])) ? x[i] : y[j];
    total += std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny) * (next - prev);
    while (i < x.size() && x[i] == next) ++i;
    while (j < y.size() && y[j] == next) ++j;
    prev = next;
  }
  return total;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("pearson needs two equal-length samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double theils_u(std::span<const std::string> x, std::span<const std::string> y) {
  if (x.size() != y.size() || x.empty()) throw InputError("theil's U needs two equal-length samples");
  const double n = static_cast<double>(x.size());
  std::unordered_map<std::string, double> cx, cy;
  std::map<std::pair<std::string, std::string>, double> cxy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cx[x[i]] += 1;
    cy[y[i]] += 1;
    cxy[{x[i], y[i]}] += 1;
  }
  const double hx = entropy(cx, n);
  if (hx == 0.0) return 1.0;
  // H(x | y) = -sum p(x, y) log(p(x, y) / p(y))
  double hxy = 0.0;
  for (const auto& [key, k] : cxy) hxy -= (k / n) * std::log(k / cy[key.second]);
  return std::clamp((hx - hxy) / hx, 0.0, 1.0);
}

double correlation_ratio(std::span<const std::string> categories, std::span<const double> values) {
  if (categories.size() != values.size() || values.empty()) throw InputError("correlation ratio needs paired samples");
  std::unordered_map<std::string, std::pair<double, double>> groups;  // sum, count
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& g = groups[categories[i]];
    g.first += values[i];
    g.second += 1;
    total += values[i];
  }
  const double mean = total / static_cast<double>(values.size());
  double between = 0.0, overall = 0.0;
  for (const auto& [_, g] : groups) between += g.second * std::pow(g.first / g.second - mean, 2);
  for (const double v : values) overall += (v - mean) * (v - mean);
  if (overall == 0.0) return 0.0;
  return std::clamp(std::sqrt(between / overall), 0.0, 1.0);
}

AssociationMatrix association_matrix(const Table& table, const Schema& schema) {
  AssociationMatrix m;
  for (const auto& spec : schema.included()) {
    m.columns.push_back(spec.name);
    m.categorical.push_back(std::holds_alternative<CategoricalKind>(spec.kind));
  }
  const std::size_t k = m.columns.size();
  if (k < 2) throw InputError("association matrix needs at least two columns");
  m.values = Matrix::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  std::vector<const Column*> cols;
  for (const auto& name : m.columns) cols.push_back(&table.column(name));

  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      if (!m.categorical[i] && !m.categorical[j] && j < i) continue;  // symmetric, filled below
      if (m.categorical[i] != m.categorical[j] && m.categorical[i]) continue;
      const Column& a = *cols[i];
      const Column& b = *cols[j];
      double v = 0.0;
      if (m.categorical[i] && m.categorical[j]) {
        std::vector<std::string> x, y;
        for (std::size_t r = 0; r < a.size(); ++r) {
          x.push_back(token_of(a.cells()[r]));
          y.push_back(token_of(b.cells()[r]));
        }
        v = theils_u(x, y);
      } else if (!m.categorical[i] && !m.categorical[j]) {
        std::vector<double> x, y;
        for (std::size_t r = 0; r < a.size(); ++r) {
          const auto xa = a.number(r), yb = b.number(r);
          if (xa && yb) {
            x.push_back(*xa);
            y.push_back(*yb);
          }
        }
        double sx = 0.0, sy = 0.0;
        if (x.size() >= 2) {
          const auto [xl, xh] = std::minmax_element(x.begin(), x.end());
          const auto [yl, yh] = std::minmax_element(y.begin(), y.end());
          sx = *xh - *xl;
          sy = *yh - *yl;
        }
        if (sx == 0.0 || sy == 0.0) {
          m.warnings.push_back("zero variance in pair (" + m.columns[i] + ", " + m.columns[j] + ")");
        } else {
          v = pearson(x, y);
        }
        m.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      } else {
        // i numeric, j categorical.
        std::vector<std::string> g;
        std::vector<double> x;
        for (std::size_t r = 0; r < a.size(); ++r) {
          if (const auto xa = a.number(r)) {
            x.push_back(*xa);
            g.push_back(token_of(b.cells()[r]));
          }
        }
        if (!x.empty()) v = correlation_ratio(g, x);
        m.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      }
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return m;
}

double diff_corr(const AssociationMatrix& real, const AssociationMatrix& synthetic) {
  if (real.columns != synthetic.columns || real.values.rows() != synthetic.values.rows()) {
    throw InputError("association matrices differ in shape or column order");
  }
  const auto k = real.values.rows();
  double s = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      s += std::pow(real.values(i, j) - synthetic.values(i, j), 2);
      if (real.categorical[static_cast<std::size_t>(i)] && real.categorical[static_cast<std::size_t>(j)]) {
        s += std::pow(real.values(j, i) - synthetic.values(j, i), 2);
      }
    }
  }
  return std::sqrt(s);
}

SimilarityReport similarity(const Table& real, const Table& synthetic, const Schema& schema) {
  check_schema_matches(schema, real);
  check_schema_matches(schema, synthetic);
  SimilarityReport rep;
  for (const auto& spec : schema.included()) {
    const Column& a = real.column(spec.name);
    const Column& b = synthetic.column(spec.name);
    if (std::holds_alternative<CategoricalKind>(spec.kind)) {
      const auto f = aligned_frequencies(a, b);
      rep.jsd[spec.name] = jsd(f.real, f.synthetic);
      continue;
    }
    const auto x = present_numbers(a), y = present_numbers(b);
    if (x.empty() || y.empty()) continue;  // all-missing numeric column
    const double w = wasserstein_1d(x, y);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    rep.wd[spec.name] = w;
    rep.wd_scaled[spec.name] = *hi > *lo ? w / (*hi - *lo) : w;
  }
  auto mean_of = [](const std::map<std::string, double>& m) {
    if (m.empty()) return 0.0;
    double s = 0.0;
    for (const auto& [_, v] : m) s += v;
    return s / static_cast<double>(m.size());
  };
  rep.avg_jsd = mean_of(rep.jsd);
  rep.avg_wd = mean_of(rep.wd);
  rep.avg_wd_scaled = mean_of(rep.wd_scaled);
  if (schema.included_count() >= 2) {
    rep.real_association = association_matrix(real, schema);
    rep.synthetic_association = association_matrix(synthetic, schema);
    rep.diff_corr = diff_corr(rep.real_association, rep.synthetic_association);
  }
  return rep;
}

}  // namespace tabsynth
