#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tabsynth/matrix.h"
#include "tabsynth/schema.h"
#include "tabsynth/table.h"

namespace tabsynth {

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string name() const = 0;
  // Throws InputError on single-class training data.
  virtual void fit(const Matrix& x, const std::vector<std::size_t>& y, std::size_t classes) = 0;
  // Rows sum to 1.
  virtual Matrix predict_proba(const Matrix& x) const = 0;
};

using ClassifierFactory = std::function<std::unique_ptr<Classifier>()>;

struct LogisticRegressionOptions {
  std::size_t max_iterations = 5000;
  double gradient_tolerance = 1e-5;
};

// Multinomial logistic regression by full-batch gradient descent from zero weights.
class LogisticRegression : public Classifier {
 public:
  explicit LogisticRegression(LogisticRegressionOptions options = {}) : options_(options) {}
  std::string name() const override { return "logistic_regression"; }
  void fit(const Matrix& x, const std::vector<std::size_t>& y, std::size_t classes) override;
  Matrix predict_proba(const Matrix& x) const override;
  std::size_t iterations() const { return iterations_; }

 private:
  LogisticRegressionOptions options_;
  Matrix weights_;  // (features + 1) x classes, bias last
  std::size_t iterations_ = 0;
};

struct DecisionTreeOptions {
  std::size_t max_depth = 12;
  std::size_t min_samples_split = 2;
};

// CART with Gini impurity; leaves predict their class frequencies.
class DecisionTree : public Classifier {
 public:
  explicit DecisionTree(DecisionTreeOptions options = {}) : options_(options) {}
  std::string name() const override { return "decision_tree"; }
  void fit(const Matrix& x, const std::vector<std::size_t>& y, std::size_t classes) override;
  Matrix predict_proba(const Matrix& x) const override;
  std::size_t depth() const;

 private:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    std::size_t left = 0, right = 0;
    std::vector<double> proba;
    std::size_t depth = 0;
  };
  DecisionTreeOptions options_;
  std::vector<Node> nodes_;
  std::size_t classes_ = 0;
  std::size_t build(const Matrix& x, const std::vector<std::size_t>& y, std::vector<std::size_t>& rows,
                    std::size_t depth);
};

std::vector<ClassifierFactory> builtin_classifiers();

// Features for utility models, fitted on the real training table: numeric columns
// min-max scaled by real-training bounds (missing -> 0 plus an indicator), categorical
// columns one-hot over real-training categories (unseen -> all zero). Target excluded.
class UtilityFeatures {
 public:
  UtilityFeatures(const Table& real_train, const Schema& schema);
  Matrix transform(const Table& table) const;

 private:
  struct Part {
    std::string column;
    bool categorical = false;
    double lower = 0.0, upper = 1.0;
    bool missing_indicator = false;
    std::vector<std::string> categories;
  };
  std::vector<Part> parts_;
  std::size_t width_ = 0;
};

struct Scores {
  double accuracy = 0.0;
  double f1 = 0.0;   // macro over labels present in truth or prediction
  double auc = 0.0;  // binary ROC AUC or macro one-vs-rest; NaN when undefined
};

Scores score(const std::vector<std::size_t>& truth, const Matrix& proba);
double roc_auc(const std::vector<bool>& positive, const std::vector<double>& score);

struct ModelUtility {
  std::string model;
  std::optional<Scores> real;
  std::optional<Scores> synthetic;
  std::optional<Scores> difference;  // real - synthetic
  std::string error;
};

struct UtilityReport {
  std::vector<ModelUtility> models;
  std::optional<Scores> average_difference;
  std::vector<std::string> warnings;
};

// Fits every classifier on real-train and on synthetic data and scores both on
// real-test. Per-model failures are recorded, not thrown.
UtilityReport ml_utility(const Table& real_train, const Table& synthetic, const Table& real_test,
                         const Schema& schema, const std::vector<ClassifierFactory>& classifiers);

}  // namespace tabsynth
