#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabsynth/codec.h"
#include "tabsynth/condvec.h"
#include "tabsynth/neural.h"
#include "tabsynth/schema.h"
#include "tabsynth/table.h"

namespace tabsynth {

struct Ablation {
  bool classifier_on = true;
  bool info_loss_on = true;
  bool vgm_on = true;
};

struct LossWeights {
  double info = 1.0;
  double classification = 1.0;
  double condition = 1.0;
};

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 500;
  std::size_t noise_dim = 100;
  std::uint64_t seed = 0;
  Ablation ablation;
  AdamConfig optimizer;
  LossWeights weights;
  std::size_t generator_width = 256;
  std::size_t generator_layers = 4;
  std::size_t discriminator_width = 256;
  std::size_t discriminator_layers = 2;
  std::size_t classifier_width = 256;
  std::size_t classifier_layers = 7;  // linear layers including the output
  // Discriminator layer whose activations feed the information loss; counted from
  // the output, 1 = penultimate.
  std::size_t info_layer_from_output = 1;
  double temperature = 0.2;
  ModeSelection selection = ModeSelection::WeightedDensity;
  VgmOptions vgm;
  double long_tail_epsilon = 1.0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Per-epoch means keyed by loss name. Keys for disabled components are absent.
struct LossHistory {
  std::map<std::string, std::vector<double>> series;
  bool has(const std::string& key) const { return series.count(key) > 0; }
};

namespace loss_key {
inline constexpr const char* kDiscriminator = "discriminator";
inline constexpr const char* kGeneratorAdversarial = "generator_adversarial";
inline constexpr const char* kInformation = "information";
inline constexpr const char* kClassification = "classification";
inline constexpr const char* kCondition = "condition";
inline constexpr const char* kClassifier = "classifier";
}  // namespace loss_key

// Classifier input built from an encoded (possibly soft) matrix: every non-target
// numeric column decoded softly and min-max scaled by training bounds, plus a missing
// indicator where the column has one; every non-target categorical column as its
// one-hot segment.
class ClassifierFeatures {
 public:
  ClassifierFeatures() = default;
  ClassifierFeatures(const CodecBundle& bundle, std::size_t target_codec, const Matrix& real_encoded);

  std::size_t width() const { return width_; }
  Matrix forward(const Matrix& encoded) const;
  // Gradient with respect to `encoded` given the gradient with respect to the features.
  Matrix backward(const Matrix& encoded, const Matrix& grad_features) const;
  // Hard labels from the target segment (argmax).
  std::vector<std::size_t> labels(const Matrix& encoded) const;

  nlohmann::json to_json() const;
  static ClassifierFeatures from_json(const nlohmann::json& j, const CodecBundle& bundle);

 private:
  struct NumericPart {
    std::size_t codec = 0;
    std::size_t alpha_offset = 0;
    std::optional<std::size_t> mode_offset;
    double lower = 0.0;
    double upper = 1.0;
    std::size_t feature = 0;
    std::optional<std::size_t> missing_feature;
  };
  struct CategoricalPart {
    std::size_t offset = 0;
    std::size_t width = 0;
    std::size_t feature = 0;
  };
  struct Term {
    ModeSlot::Kind kind = ModeSlot::Kind::Continuous;
    double value = 0.0;   // value slots, model domain
    double mean = 0.0;    // continuous slots
    double spread = 0.0;  // 4 sigma
  };
  std::size_t target_codec_ = 0;
  std::vector<NumericPart> numeric_;
  std::vector<std::vector<Term>> terms_;  // per numeric part, per mode slot
  std::vector<Term> base_;                // alpha-only columns
  std::vector<CategoricalPart> categorical_;
  std::size_t target_offset_ = 0;
  std::size_t target_width_ = 0;
  std::size_t width_ = 0;

  void build(const CodecBundle& bundle, std::size_t target_codec);
  // Expected model-domain value of numeric part i in row r.
  double soft_value(std::size_t part, const Matrix& enc, Eigen::Index r) const;
};

struct GanModel {
  TrainConfig config;  // effective configuration
  Schema schema;
  CodecBundle codecs;
  FrequencyTable frequencies;
  std::optional<std::size_t> target_codec;
  DenseNet generator;
  DenseNet discriminator;
  std::optional<DenseNet> classifier;
  std::optional<ClassifierFeatures> classifier_features;
  LossHistory history;

  const ConditionLayout& condition_layout() const { return frequencies.layout(); }
  bool trained() const { return !history.series.empty(); }
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  std::size_t epochs = 0;
  std::map<std::string, double> losses;
};

// Return false to stop training after the current epoch.
using EpochCallback = std::function<bool(const EpochReport&)>;

// Fits codecs on `train`, builds the networks and trains them. The classifier is
// disabled when the schema has no target.
GanModel fit_gan(const Table& train, const Schema& schema, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

// Builds untrained networks for an encoded training matrix.
GanModel prepare_gan(const CodecBundle& codecs, const Schema& schema, const Matrix& encoded,
                     const TrainConfig& config);

// Runs config.epochs epochs over `encoded`, appending to model.history. Throws
// TrainingError when a loss turns non-finite.
void train_gan(GanModel& model, const Matrix& encoded, const EpochCallback& on_epoch = {});

struct GeneratorObjective {
  double adversarial = 0.0;
  double information = 0.0;     // 0 when disabled
  double classification = 0.0;  // 0 when disabled
  double condition = 0.0;        // 0 without a conditional vector
  double total(const LossWeights& w) const {
    return adversarial + w.info * information + w.classification * classification + w.condition * condition;
  }
};

// Generator losses for one batch (real rows and fake rows share `condition`); with
// `accumulate`, adds the gradient of the weighted total to the generator's parameter
// gradients. Discriminator and classifier gradients are left untouched.
GeneratorObjective generator_objective(GanModel& model, const Matrix& real, const Matrix& condition,
                                       const std::vector<ConditionalVector>& conditions, const Matrix& noise,
                                       Rng& rng, bool accumulate);

// Conditions are drawn with raw category frequencies unless `condition` is fixed.
Table synthesize(const GanModel& model, std::size_t rows, std::uint64_t seed,
                 const std::optional<ConditionalVector>& condition = std::nullopt);
// Hardened encoded rows and the conditions used to produce them.
Matrix synthesize_encoded(const GanModel& model, std::size_t rows, std::uint64_t seed,
                          const std::optional<ConditionalVector>& condition = std::nullopt,
                          std::vector<ConditionalVector>* conditions = nullptr);

// Resolves a "column=value" condition against the model's conditional vector. Numeric
// columns take a mode index ("column=#k").
ConditionalVector parse_condition(const GanModel& model, std::string_view text);

void save_model(const GanModel& model, const std::filesystem::path& dir);
GanModel load_model(const std::filesystem::path& dir);

}  // namespace tabsynth
