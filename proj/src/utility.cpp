#include "tabsynth/utility.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tabsynth/error.h"

namespace tabsynth {

namespace {

void check_fit_input(const Matrix& x, const std::vector<std::size_t>& y, std::size_t classes) {
  if (static_cast<std::size_t>(x.rows()) != y.size() || y.empty()) throw InputError("feature and label counts differ");
  if (std::any_of(y.begin(), y.end(), [&](std::size_t v) { return v >= classes; })) throw InputError("label out of range");
  if (std::adjacent_find(y.begin(), y.end(), std::not_equal_to<>()) == y.end()) {
    throw InputError("training labels contain a single class");
  }
}

Matrix with_bias(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  out << x, Matrix::Ones(x.rows(), 1);
  return out;
}

Matrix row_softmax(Matrix z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    z.row(r).array() -= z.row(r).maxCoeff();
    z.row(r) = z.row(r).array().exp().matrix();
    z.row(r) /= z.row(r).sum();
  }
  return z;
}

double gini(const std::vector<double>& counts, double n) {
  double s = 1.0;
  for (const double c : counts) s -= (c / n) * (c / n);
  return s;
}

}  // namespace

void LogisticRegression::fit(const Matrix& x_in, const std::vector<std::size_t>& y, std::size_t classes) {
  check_fit_input(x_in, y, classes);
  const Matrix x = with_bias(x_in);
  const double n = static_cast<double>(x.rows());
  Matrix target = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(classes));
  for (std::size_t i = 0; i < y.size(); ++i) target(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y[i])) = 1.0;
  // Step 1/L with L bounding the Hessian of the mean cross-entropy.
  const double lipschitz = 0.5 * x.rowwise().squaredNorm().maxCoeff();
  const double step = 1.0 / std::max(lipschitz, 1e-12);
  weights_ = Matrix::Zero(x.cols(), static_cast<Eigen::Index>(classes));
  for (iterations_ = 0; iterations_ < options_.max_iterations; ++iterations_) {
    const Matrix grad = x.transpose() * (row_softmax(x * weights_) - target) / n;
    if (grad.norm() < options_.gradient_tolerance) break;
    weights_ -= step * grad;
  }
}

Matrix LogisticRegression::predict_proba(const Matrix& x) const {
  if (weights_.size() == 0) throw Error("logistic regression used before fit");
  return row_softmax(with_bias(x) * weights_);
}

void DecisionTree::fit(const Matrix& x, const std::vector<std::size_t>& y, std::size_t classes) {
  check_fit_input(x, y, classes);
  classes_ = classes;
  nodes_.clear();
  std::vector<std::size_t> rows(y.size());
  std::iota(rows.begin(), rows.end(), 0);
  build(x, y, rows, 0);
}

std::size_t DecisionTree::build(const Matrix& x, const std::vector<std::size_t>& y, std::vector<std::size_t>& rows,
                                std::size_t depth) {
  const std::size_t id = nodes_.size();
  nodes_.emplace_back();
  std::vector<double> counts(classes_, 0.0);
  for (const auto r : rows) counts[y[r]] += 1.0;
  const double n = static_cast<double>(rows.size());
  nodes_[id].depth = depth;
  nodes_[id].proba = counts;
  for (double& p : nodes_[id].proba) p /= n;
  const double parent = gini(counts, n);
  if (depth >= options_.max_depth || rows.size() < options_.min_samples_split || parent == 0.0) return id;

  // Best split: lowest weighted child impurity; ties keep the first feature/threshold.
  double best = parent - 1e-12;
  int best_feature = -1;
  double best_threshold = 0.0;
  std::vector<std::pair<double, std::size_t>> order(rows.size());
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    for (std::size_t i = 0; i < rows.size(); ++i) order[i] = {x(static_cast<Eigen::Index>(rows[i]), f), y[rows[i]]};
    std::sort(order.begin(), order.end());
    std::vector<double> left(classes_, 0.0), right = counts;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      left[order[i].second] += 1.0;
      right[order[i].second] -= 1.0;
      if (order[i].first == order[i + 1].first) continue;
      const double nl = static_cast<double>(i + 1), nr = n - nl;
      const double impurity = (nl * gini(left, nl) + nr * gini(right, nr)) / n;
      if (impurity < best) {
        best = impurity;
        best_feature = static_cast<int>(f);
        best_threshold = 0.5 * (order[i].first + order[i + 1].first);
      }
    }
  }
  if (best_feature < 0) return id;
  std::vector<std::size_t> l, r;
  for (const auto row : rows) (x(static_cast<Eigen::Index>(row), best_feature) <= best_threshold ? l : r).push_back(row);
  rows.clear();
  rows.shrink_to_fit();
  nodes_[id].feature = best_feature;
  nodes_[id].threshold = best_threshold;
  const std::size_t li = build(x, y, l, depth + 1);
  const std::size_t ri = build(x, y, r, depth + 1);
  nodes_[id].left = li;
  nodes_[id].right = ri;
  return id;
}

Matrix DecisionTree::predict_proba(const Matrix& x) const {
  if (nodes_.empty()) throw Error("decision tree used before fit");
  Matrix out(x.rows(), static_cast<Eigen::Index>(classes_));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::size_t id = 0;
    while (nodes_[id].feature >= 0) id = x(r, nodes_[id].feature) <= nodes_[id].threshold ? nodes_[id].left : nodes_[id].right;
    for (std::size_t k = 0; k < classes_; ++k) out(r, static_cast<Eigen::Index>(k)) = nodes_[id].proba[k];
  }
  return out;
}

std::size_t DecisionTree::depth() const {
  std::size_t d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::vector<ClassifierFactory> builtin_classifiers() {
  return {[] { return std::make_unique<LogisticRegression>(); }, [] { return std::make_unique<DecisionTree>(); }};
}

UtilityFeatures::UtilityFeatures(const Table& real, const Schema& schema) {
  const ColumnSpec* target = schema.target();
  for (const auto& spec : schema.included()) {
    if (target && spec.name == target->name) continue;
    Part p;
    p.column = spec.name;
    p.categorical = std::holds_alternative<CategoricalKind>(spec.kind);
    const Column& c = real.column(spec.name);
    if (p.categorical) {
      std::set<std::string> cats;
      for (const auto& cell : c.cells()) cats.insert(cell ? *cell : "");
      p.categories.assign(cats.begin(), cats.end());
      width_ += p.categories.size();
    } else {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t r = 0; r < c.size(); ++r) {
        if (const auto v = c.number(r)) {
          lo = std::min(lo, *v);
          hi = std::max(hi, *v);
        }
      }
      if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
      p.lower = lo;
      p.upper = hi;
      p.missing_indicator = c.missing_count() > 0;
      width_ += 1 + (p.missing_indicator ? 1 : 0);
    }
    parts_.push_back(std::move(p));
  }
}

Matrix UtilityFeatures::transform(const Table& t) const {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(width_));
  Eigen::Index off = 0;
  for (const auto& p : parts_) {
    const Column& c = t.column(p.column);
    for (std::size_t r = 0; r < c.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      if (p.categorical) {
        const std::string tok = c.cells()[r] ? *c.cells()[r] : "";
        const auto it = std::lower_bound(p.categories.begin(), p.categories.end(), tok);
        if (it != p.categories.end() && *it == tok) out(row, off + (it - p.categories.begin())) = 1.0;
      } else if (const auto v = c.number(r)) {
        out(row, off) = p.upper > p.lower ? (*v - p.lower) / (p.upper - p.lower) : 0.0;
      } else if (p.missing_indicator) {
        out(row, off + 1) = 1.0;
      }
    }
    off += p.categorical ? static_cast<Eigen::Index>(p.categories.size()) : 1 + (p.missing_indicator ? 1 : 0);
  }
  return out;
}

double roc_auc(const std::vector<bool>& positive, const std::vector<double>& score) {
  // Mann-Whitney statistic with midranks for ties.
  const std::size_t n = score.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  double rank_sum = 0.0, pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && score[idx[j]] == score[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) {
      if (positive[idx[k]]) {
        rank_sum += mid;
        pos += 1.0;
      }
    }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nan("");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

Scores score(const std::vector<std::size_t>& truth, const Matrix& proba) {
  if (static_cast<std::size_t>(proba.rows()) != truth.size() || truth.empty()) throw InputError("score size mismatch");
  const auto k = static_cast<std::size_t>(proba.cols());
  std::vector<std::size_t> pred(truth.size());
  for (Eigen::Index r = 0; r < proba.rows(); ++r) {
    Eigen::Index best;
    proba.row(r).maxCoeff(&best);
    pred[static_cast<std::size_t>(r)] = static_cast<std::size_t>(best);
  }
  Scores s;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  s.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

  std::set<std::size_t> labels(truth.begin(), truth.end());
  labels.insert(pred.begin(), pred.end());
  double f1 = 0.0;
  for (const auto c : labels) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == c && pred[i] == c;
      fp += truth[i] != c && pred[i] == c;
      fn += truth[i] == c && pred[i] != c;
    }
    f1 += tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
  }
  s.f1 = f1 / static_cast<double>(labels.size());

  auto auc_for = [&](std::size_t c) {
    std::vector<bool> pos(truth.size());
    std::vector<double> sc(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      pos[i] = truth[i] == c;
      sc[i] = proba(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    }
    return roc_auc(pos, sc);
  };
  if (k == 2) {
    s.auc = auc_for(1);
  } else {
    double sum = 0.0;
    int used = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double a = auc_for(c);
      if (!std::isnan(a)) sum += a, ++used;
    }
    s.auc = used ? sum / used : std::nan("");
  }
  return s;
}

UtilityReport ml_utility(const Table& real_train, const Table& synthetic, const Table& real_test,
                         const Schema& schema, const std::vector<ClassifierFactory>& classifiers) {
  const ColumnSpec* target = schema.target();
  if (!target) throw InputError("ML utility needs a target column");
  for (const Table* t : {&real_train, &synthetic, &real_test}) {
    if (!t->find(target->name)) throw InputError("target column '" + target->name + "' missing from a table");
  }
  UtilityReport rep;
  if (synthetic.rows() != real_train.rows()) {
    rep.warnings.push_back("synthetic rows (" + std::to_string(synthetic.rows()) + ") differ from real training rows (" +
                           std::to_string(real_train.rows()) + ")");
  }
  std::set<std::string> classes;
  for (const Table* t : {&real_train, &synthetic, &real_test}) {
    for (const auto& c : t->column(target->name).cells()) classes.insert(c ? *c : "");
  }
  const std::vector<std::string> class_list(classes.begin(), classes.end());
  auto labels = [&](const Table& t) {
    std::vector<std::size_t> y;
    for (const auto& c : t.column(target->name).cells()) {
      y.push_back(static_cast<std::size_t>(std::lower_bound(class_list.begin(), class_list.end(), c ? *c : "") -
                                           class_list.begin()));
    }
    return y;
  };
  const UtilityFeatures features(real_train, schema);
  const Matrix x_real = features.transform(real_train), x_synth = features.transform(synthetic),
               x_test = features.transform(real_test);
  const auto y_real = labels(real_train), y_synth = labels(synthetic), y_test = labels(real_test);

  Scores sum;
  int complete = 0;
  for (const auto& factory : classifiers) {
    ModelUtility m;
    auto run = [&](const Matrix& x, const std::vector<std::size_t>& y) {
      auto clf = factory();
      m.model = clf->name();
      clf->fit(x, y, class_list.size());
      return score(y_test, clf->predict_proba(x_test));
    };
    try {
      m.real = run(x_real, y_real);
    } catch (const std::exception& e) {
      m.error = std::string("real: ") + e.what();
    }
    try {
      m.synthetic = run(x_synth, y_synth);
    } catch (const std::exception& e) {
      m.error += (m.error.empty() ? "" : "; ") + std::string("synthetic: ") + e.what();
    }
    if (m.real && m.synthetic) {
      m.difference = Scores{m.real->accuracy - m.synthetic->accuracy, m.real->f1 - m.synthetic->f1,
                            m.real->auc - m.synthetic->auc};
      sum.accuracy += m.difference->accuracy;
      sum.f1 += m.difference->f1;
      sum.auc += m.difference->auc;
      ++complete;
    }
    rep.models.push_back(std::move(m));
  }
  if (complete > 0) rep.average_difference = Scores{sum.accuracy / complete, sum.f1 / complete, sum.auc / complete};
  return rep;
}

}  // namespace tabsynth
