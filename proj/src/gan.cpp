#include "tabsynth/gan.h"

#include <algorithm>
#include <cmath>

#include "tabsynth/error.h"
#include "tabsynth/losses.h"

namespace tabsynth {

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw InputError("invalid training configuration: " + what);
  };
  need(epochs >= 1, "epochs must be at least 1");
  need(batch_size >= 1, "batch size must be at least 1");
  need(noise_dim >= 1, "noise dimension must be at least 1");
  need(generator_width >= 1 && discriminator_width >= 1 && classifier_width >= 1, "layer widths must be positive");
  need(generator_layers >= 1 && discriminator_layers >= 1, "generator and discriminator need hidden layers");
  need(classifier_layers >= 1, "classifier needs at least one layer");
  need(info_layer_from_output >= 1 && info_layer_from_output <= discriminator_layers,
       "information-loss layer must be a hidden discriminator layer");
  need(temperature > 0.0, "temperature must be positive");
  need(optimizer.learning_rate > 0.0, "learning rate must be positive");
  need(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0,
       "adam betas must lie in [0, 1)");
  need(weights.info >= 0.0 && weights.classification >= 0.0 && weights.condition >= 0.0,
       "loss weights must be non-negative");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"noise_dim", c.noise_dim},
          {"seed", c.seed},
          {"ablation", {{"classifier_on", c.ablation.classifier_on},
                        {"info_loss_on", c.ablation.info_loss_on},
                        {"vgm_on", c.ablation.vgm_on}}},
          {"optimizer", {{"learning_rate", c.optimizer.learning_rate},
                         {"beta1", c.optimizer.beta1},
                         {"beta2", c.optimizer.beta2},
                         {"epsilon", c.optimizer.epsilon}}},
          {"weights", {{"info", c.weights.info},
                       {"classification", c.weights.classification},
                       {"condition", c.weights.condition}}},
          {"generator_width", c.generator_width},
          {"generator_layers", c.generator_layers},
          {"discriminator_width", c.discriminator_width},
          {"discriminator_layers", c.discriminator_layers},
          {"classifier_width", c.classifier_width},
          {"classifier_layers", c.classifier_layers},
          {"info_layer_from_output", c.info_layer_from_output},
          {"temperature", c.temperature},
          {"mode_selection", c.selection == ModeSelection::WeightedDensity ? "weighted" : "density"},
          {"vgm", {{"max_modes", c.vgm.max_modes},
                   {"weight_concentration", c.vgm.weight_concentration},
                   {"weight_threshold", c.vgm.weight_threshold},
                   {"max_iterations", c.vgm.max_iterations},
                   {"tolerance", c.vgm.tolerance},
                   {"seed", c.vgm.seed}}},
          {"long_tail_epsilon", c.long_tail_epsilon}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.noise_dim = j.value("noise_dim", c.noise_dim);
    c.seed = j.value("seed", c.seed);
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      c.ablation.classifier_on = a.value("classifier_on", true);
      c.ablation.info_loss_on = a.value("info_loss_on", true);
      c.ablation.vgm_on = a.value("vgm_on", true);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      c.weights.info = w.value("info", 1.0);
      c.weights.classification = w.value("classification", 1.0);
      c.weights.condition = w.value("condition", 1.0);
    }
    c.generator_width = j.value("generator_width", c.generator_width);
    c.generator_layers = j.value("generator_layers", c.generator_layers);
    c.discriminator_width = j.value("discriminator_width", c.discriminator_width);
    c.discriminator_layers = j.value("discriminator_layers", c.discriminator_layers);
    c.classifier_width = j.value("classifier_width", c.classifier_width);
    c.classifier_layers = j.value("classifier_layers", c.classifier_layers);
    c.info_layer_from_output = j.value("info_layer_from_output", c.info_layer_from_output);
    c.temperature = j.value("temperature", c.temperature);
    const std::string sel = j.value("mode_selection", std::string("weighted"));
    if (sel == "weighted") c.selection = ModeSelection::WeightedDensity;
    else if (sel == "density") c.selection = ModeSelection::Density;
    else throw InputError("unknown mode_selection '" + sel + "'");
    if (j.contains("vgm")) {
      const auto& v = j.at("vgm");
      c.vgm.max_modes = v.value("max_modes", c.vgm.max_modes);
      c.vgm.weight_concentration = v.value("weight_concentration", c.vgm.weight_concentration);
      c.vgm.weight_threshold = v.value("weight_threshold", c.vgm.weight_threshold);
      c.vgm.max_iterations = v.value("max_iterations", c.vgm.max_iterations);
      c.vgm.tolerance = v.value("tolerance", c.vgm.tolerance);
      c.vgm.seed = v.value("seed", c.vgm.seed);
    }
    c.long_tail_epsilon = j.value("long_tail_epsilon", c.long_tail_epsilon);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid training configuration: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Classifier features

namespace {

// Model-domain location of a categorical value: compressed when the column is long-tailed
// and the value lies in the compression domain.
double model_domain(double value, const NumericCodec& codec) {
  if (!codec.long_tail) return value;
  try {
    return log_compress(value, *codec.long_tail);
  } catch (const InputError&) {
    return value;
  }
}

template <typename Term>
std::vector<Term> slot_terms(const NumericCodec& codec) {
  std::vector<Term> out;
  for (const auto& slot : codec.slots) {
    Term t;
    t.kind = slot.kind;
    if (slot.kind == ModeSlot::Kind::Value) t.value = model_domain(codec.categorical_values[slot.index], codec);
    if (slot.kind == ModeSlot::Kind::Continuous) {
      t.mean = codec.gmm.modes[slot.index].mean;
      t.spread = 4.0 * codec.gmm.modes[slot.index].stddev;
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace

void ClassifierFeatures::build(const CodecBundle& bundle, std::size_t target_codec) {
  target_codec_ = target_codec;
  numeric_.clear();
  categorical_.clear();
  width_ = 0;
  const auto& layout = bundle.layout;
  for (std::size_t ci = 0; ci < bundle.codecs.size(); ++ci) {
    const auto& cc = bundle.codecs[ci];
    if (ci == target_codec) {
      const auto& seg = layout.segments.at(*layout.one_hot_segment(ci));
      target_offset_ = seg.offset;
      target_width_ = seg.width;
      continue;
    }
    if (cc.is_numeric()) {
      NumericPart p;
      p.codec = ci;
      p.alpha_offset = layout.segments.at(*layout.alpha_segment(ci)).offset;
      if (const auto s = layout.one_hot_segment(ci)) p.mode_offset = layout.segments.at(*s).offset;
      p.feature = width_++;
      if (p.mode_offset && cc.numeric().has_missing) p.missing_feature = width_++;
      numeric_.push_back(p);
    } else {
      const auto& seg = layout.segments.at(*layout.one_hot_segment(ci));
      categorical_.push_back({seg.offset, seg.width, width_});
      width_ += seg.width;
    }
  }
  terms_.clear();
  base_.clear();
  for (const auto& p : numeric_) {
    const auto& codec = bundle.codecs[p.codec].numeric();
    terms_.push_back(slot_terms<Term>(codec));
    Term base;
    if (!codec.gmm.modes.empty()) {
      base.mean = codec.gmm.modes[0].mean;
      base.spread = 4.0 * codec.gmm.modes[0].stddev;
    }
    base_.push_back(base);
  }
}

double ClassifierFeatures::soft_value(std::size_t part, const Matrix& enc, Eigen::Index r) const {
  const auto& p = numeric_[part];
  const double a = enc(r, static_cast<Eigen::Index>(p.alpha_offset));
  if (!p.mode_offset) return base_[part].mean + base_[part].spread * a;
  double v = 0.0;
  const auto& terms = terms_[part];
  for (std::size_t s = 0; s < terms.size(); ++s) {
    const double beta = enc(r, static_cast<Eigen::Index>(*p.mode_offset + s));
    if (terms[s].kind == ModeSlot::Kind::Value) v += beta * terms[s].value;
    else if (terms[s].kind == ModeSlot::Kind::Continuous) v += beta * (terms[s].mean + terms[s].spread * a);
  }
  return v;
}

ClassifierFeatures::ClassifierFeatures(const CodecBundle& bundle, std::size_t target_codec,
                                       const Matrix& real_encoded) {
  build(bundle, target_codec);
  for (std::size_t i = 0; i < numeric_.size(); ++i) {
    double lo = INFINITY, hi = -INFINITY;
    for (Eigen::Index r = 0; r < real_encoded.rows(); ++r) {
      const double v = soft_value(i, real_encoded, r);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(hi > lo)) hi = std::isfinite(lo) ? lo + 1.0 : (lo = 0.0, 1.0);
    numeric_[i].lower = lo;
    numeric_[i].upper = hi;
  }
}

Matrix ClassifierFeatures::forward(const Matrix& enc) const {
  Matrix f(enc.rows(), static_cast<Eigen::Index>(width_));
  for (std::size_t i = 0; i < numeric_.size(); ++i) {
    const auto& p = numeric_[i];
    const double range = p.upper - p.lower;
    for (Eigen::Index r = 0; r < enc.rows(); ++r) {
      f(r, static_cast<Eigen::Index>(p.feature)) = (soft_value(i, enc, r) - p.lower) / range;
    }
    if (p.missing_feature) {
      const auto missing_slot = *p.mode_offset + terms_[i].size() - 1;
      f.col(static_cast<Eigen::Index>(*p.missing_feature)) = enc.col(static_cast<Eigen::Index>(missing_slot));
    }
  }
  for (const auto& c : categorical_) {
    f.middleCols(static_cast<Eigen::Index>(c.feature), static_cast<Eigen::Index>(c.width)) =
        enc.middleCols(static_cast<Eigen::Index>(c.offset), static_cast<Eigen::Index>(c.width));
  }
  return f;
}

Matrix ClassifierFeatures::backward(const Matrix& enc, const Matrix& gf) const {
  Matrix g = Matrix::Zero(enc.rows(), enc.cols());
  for (std::size_t i = 0; i < numeric_.size(); ++i) {
    const auto& p = numeric_[i];
    const double range = p.upper - p.lower;
    const auto ao = static_cast<Eigen::Index>(p.alpha_offset);
    for (Eigen::Index r = 0; r < enc.rows(); ++r) {
      const double up = gf(r, static_cast<Eigen::Index>(p.feature)) / range;
      const double a = enc(r, ao);
      if (!p.mode_offset) {
        g(r, ao) += up * base_[i].spread;
        continue;
      }
      const auto& terms = terms_[i];
      for (std::size_t s = 0; s < terms.size(); ++s) {
        const auto col = static_cast<Eigen::Index>(*p.mode_offset + s);
        const double beta = enc(r, col);
        if (terms[s].kind == ModeSlot::Kind::Value) {
          g(r, col) += up * terms[s].value;
        } else if (terms[s].kind == ModeSlot::Kind::Continuous) {
          g(r, col) += up * (terms[s].mean + terms[s].spread * a);
          g(r, ao) += up * beta * terms[s].spread;
        }
      }
    }
    if (p.missing_feature) {
      const auto missing_slot = static_cast<Eigen::Index>(*p.mode_offset + terms_[i].size() - 1);
      g.col(missing_slot) += gf.col(static_cast<Eigen::Index>(*p.missing_feature));
    }
  }
  for (const auto& c : categorical_) {
    g.middleCols(static_cast<Eigen::Index>(c.offset), static_cast<Eigen::Index>(c.width)) +=
        gf.middleCols(static_cast<Eigen::Index>(c.feature), static_cast<Eigen::Index>(c.width));
  }
  return g;
}

std::vector<std::size_t> ClassifierFeatures::labels(const Matrix& enc) const {
  std::vector<std::size_t> out(static_cast<std::size_t>(enc.rows()));
  for (Eigen::Index r = 0; r < enc.rows(); ++r) {
    Eigen::Index k;
    enc.row(r).segment(static_cast<Eigen::Index>(target_offset_), static_cast<Eigen::Index>(target_width_)).maxCoeff(&k);
    out[static_cast<std::size_t>(r)] = static_cast<std::size_t>(k);
  }
  return out;
}

nlohmann::json ClassifierFeatures::to_json() const {
  auto bounds = nlohmann::json::array();
  for (const auto& p : numeric_) bounds.push_back({p.lower, p.upper});
  return {{"target_codec", target_codec_}, {"bounds", bounds}};
}

ClassifierFeatures ClassifierFeatures::from_json(const nlohmann::json& j, const CodecBundle& bundle) {
  ClassifierFeatures f;
  f.target_codec_ = j.at("target_codec").get<std::size_t>();
  f.build(bundle, f.target_codec_);
  const auto& bounds = j.at("bounds");
  if (bounds.size() != f.numeric_.size()) throw InputError("classifier feature bounds do not match the codecs");
  for (std::size_t i = 0; i < f.numeric_.size(); ++i) {
    f.numeric_[i].lower = bounds[i].at(0).get<double>();
    f.numeric_[i].upper = bounds[i].at(1).get<double>();
  }
  return f;
}

// ---------------------------------------------------------------------------
// Model construction and training

namespace {

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

DenseNet make_net(std::size_t in, std::size_t width, std::size_t hidden, std::size_t out, Rng& rng) {
  std::vector<std::size_t> dims{in};
  std::vector<Activation> acts;
  for (std::size_t i = 0; i < hidden; ++i) {
    dims.push_back(width);
    acts.push_back(Activation::LeakyRelu);
  }
  dims.push_back(out);
  acts.push_back(Activation::Identity);
  return DenseNet(dims, acts, rng);
}

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix vconcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

struct ConditionedBatch {
  std::vector<ConditionalVector> conditions;
  Matrix condition;  // dense, batch x |V|
  Matrix real;       // matching real rows
};

class BatchSampler {
 public:
  BatchSampler(const GanModel& model, const Matrix& encoded)
      : model_(model), encoded_(encoded), conditioned_(model.condition_layout().width > 0) {
    if (conditioned_) index_ = RowIndex(encoded, model.condition_layout());
  }

  ConditionedBatch draw(std::size_t batch, Rng& rng) const {
    ConditionedBatch b;
    std::vector<std::size_t> rows(batch);
    if (conditioned_) {
      b.conditions.reserve(batch);
      for (auto& r : rows) {
        b.conditions.push_back(sample_condition(model_.frequencies, rng));
        r = draw_real_batch(b.conditions.back(), index_, rng, 1).front();
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, static_cast<std::size_t>(encoded_.rows()) - 1);
      for (auto& r : rows) r = pick(rng);
    }
    b.condition = condition_matrix(b.conditions, model_.condition_layout());
    if (!conditioned_) b.condition.resize(static_cast<Eigen::Index>(batch), 0);
    b.real = rows_of(encoded_, rows);
    return b;
  }

 private:
  const GanModel& model_;
  const Matrix& encoded_;
  bool conditioned_;
  RowIndex index_;
};

}  // namespace

GanModel prepare_gan(const CodecBundle& codecs, const Schema& schema, const Matrix& encoded,
                     const TrainConfig& config) {
  config.validate();
  if (encoded.rows() == 0) throw InputError("training data is empty");
  if (static_cast<std::size_t>(encoded.cols()) != codecs.layout.width) {
    throw InputError("encoded matrix width does not match the codecs");
  }
  GanModel model;
  model.config = config;
  model.config.ablation.vgm_on = codecs.vgm_enabled;
  model.schema = schema;
  model.codecs = codecs;
  model.frequencies = build_frequency_table(encoded, codecs.layout);
  if (const auto* t = schema.target()) model.target_codec = codecs.codec_index(t->name);

  Rng rng(config.seed);
  const std::size_t w = codecs.layout.width, v = model.condition_layout().width;
  model.generator = make_net(config.noise_dim + v, config.generator_width, config.generator_layers, w, rng);
  model.discriminator = make_net(w + v, config.discriminator_width, config.discriminator_layers, 1, rng);

  if (model.config.ablation.classifier_on && model.target_codec) {
    ClassifierFeatures features(codecs, *model.target_codec, encoded);
    if (features.width() > 0) {
      const std::size_t classes = codecs.codecs[*model.target_codec].categorical().width();
      model.classifier = make_net(features.width(), config.classifier_width, config.classifier_layers - 1, classes, rng);
      model.classifier_features = std::move(features);
    }
  }
  // Without a target (or without non-target features) there is nothing to classify.
  if (!model.classifier) model.config.ablation.classifier_on = false;
  return model;
}

GeneratorObjective generator_objective(GanModel& model, const Matrix& real, const Matrix& condition,
                                       const std::vector<ConditionalVector>& conditions, const Matrix& noise,
                                       Rng& rng, bool accumulate) {
  const TrainConfig& cfg = model.config;
  const Eigen::Index b = noise.rows();
  const auto w = static_cast<Eigen::Index>(model.codecs.layout.width);
  if (real.rows() != b || condition.rows() != b) throw InputError("generator batch parts disagree in size");
  const std::size_t info_tap = model.discriminator.layers().size() - 1 - cfg.info_layer_from_output;
  const bool classify = cfg.ablation.classifier_on && model.classifier.has_value();

  OutputHead head(model.codecs.layout, cfg.temperature);
  GeneratorObjective obj;
  const Matrix& logits = model.generator.forward(hconcat(noise, condition));
  const Matrix fake = head.forward(logits, rng);
  const Matrix& out =
      model.discriminator.forward(vconcat(hconcat(real, condition), hconcat(fake, condition)));
  Matrix gf;
  obj.adversarial = generator_adversarial_loss(out.bottomRows(b), &gf);
  std::vector<LayerTap> taps;
  if (cfg.ablation.info_loss_on) {
    const Matrix& h = model.discriminator.layer_output(info_tap);
    Matrix gi;
    obj.information = info_loss(feature_stats(h.topRows(b)), h.bottomRows(b), &gi);
    taps.push_back({info_tap, vconcat(Matrix::Zero(b, h.cols()), cfg.weights.info * gi)});
  }
  const Matrix d_in_grad = model.discriminator.backward(vconcat(Matrix::Zero(b, 1), gf), taps, false);
  Matrix grad_fake = d_in_grad.bottomRows(b).leftCols(w);

  if (classify) {
    const Matrix feats = model.classifier_features->forward(fake);
    const Matrix& c_out = model.classifier->forward(feats);
    Matrix gc;
    obj.classification = cross_entropy(c_out, model.classifier_features->labels(fake), &gc);
    const Matrix gfeat = model.classifier->backward(cfg.weights.classification * gc, {}, false);
    grad_fake += model.classifier_features->backward(fake, gfeat);
  }

  Matrix grad_logits = head.backward(grad_fake);
  if (!conditions.empty()) {
    Matrix gs;
    obj.condition = condition_loss(head.scaled_logits(), model.condition_layout(), conditions, &gs);
    grad_logits += (cfg.weights.condition / cfg.temperature) * gs;
  }
  if (accumulate) model.generator.backward(grad_logits);
  return obj;
}

void train_gan(GanModel& model, const Matrix& encoded, const EpochCallback& on_epoch) {
  const TrainConfig& cfg = model.config;
  const auto b = static_cast<Eigen::Index>(cfg.batch_size);
  const std::size_t steps = std::max<std::size_t>(1, static_cast<std::size_t>(encoded.rows()) / cfg.batch_size);
  const bool classify = cfg.ablation.classifier_on && model.classifier.has_value();

  std::seed_seq seq{cfg.seed, std::uint64_t{0x5eed}, static_cast<std::uint64_t>(model.history.series.empty()
                                                                                     ? 0
                                                                                     : model.history.series.begin()->second.size())};
  Rng rng(seq);
  BatchSampler sampler(model, encoded);
  OutputHead head(model.codecs.layout, cfg.temperature);
  Adam opt_g(model.generator, cfg.optimizer), opt_d(model.discriminator, cfg.optimizer);
  Adam opt_c;
  if (classify) opt_c = Adam(*model.classifier, cfg.optimizer);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::map<std::string, double> sums;
    try {
      for (std::size_t step = 0; step < steps; ++step) {
        // Discriminator.
        {
          const auto batch = sampler.draw(cfg.batch_size, rng);
          const Matrix noise = standard_normal(b, static_cast<Eigen::Index>(cfg.noise_dim), rng);
          const Matrix fake = head.forward(model.generator.forward(hconcat(noise, batch.condition)), rng);
          model.discriminator.zero_grad();
          const Matrix& out = model.discriminator.forward(
              vconcat(hconcat(batch.real, batch.condition), hconcat(fake, batch.condition)));
          Matrix gr, gf;
          sums[loss_key::kDiscriminator] += discriminator_loss(out.topRows(b), out.bottomRows(b), &gr, &gf);
          model.discriminator.backward(vconcat(gr, gf));
          opt_d.step(model.discriminator);
        }
        // Generator.
        {
          const auto batch = sampler.draw(cfg.batch_size, rng);
          const Matrix noise = standard_normal(b, static_cast<Eigen::Index>(cfg.noise_dim), rng);
          model.generator.zero_grad();
          const auto obj = generator_objective(model, batch.real, batch.condition, batch.conditions, noise, rng, true);
          opt_g.step(model.generator);
          sums[loss_key::kGeneratorAdversarial] += obj.adversarial;
          if (cfg.ablation.info_loss_on) sums[loss_key::kInformation] += obj.information;
          if (classify) sums[loss_key::kClassification] += obj.classification;
          if (!batch.conditions.empty()) sums[loss_key::kCondition] += obj.condition;
        }
        // Classifier, on real rows only.
        if (classify) {
          std::uniform_int_distribution<std::size_t> pick(0, static_cast<std::size_t>(encoded.rows()) - 1);
          std::vector<std::size_t> rows(cfg.batch_size);
          for (auto& r : rows) r = pick(rng);
          const Matrix real = rows_of(encoded, rows);
          model.classifier->zero_grad();
          const Matrix& c_out = model.classifier->forward(model.classifier_features->forward(real));
          Matrix gc;
          sums[loss_key::kClassifier] += cross_entropy(c_out, model.classifier_features->labels(real), &gc);
          model.classifier->backward(gc);
          opt_c.step(*model.classifier);
        }
      }
    } catch (const NumericError& e) {
      throw TrainingError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
    EpochReport report{epoch, cfg.epochs, {}};
    for (const auto& [key, sum] : sums) {
      const double mean = sum / static_cast<double>(steps);
      if (!std::isfinite(mean)) throw TrainingError("non-finite " + key + " loss in epoch " + std::to_string(epoch));
      report.losses[key] = mean;
      model.history.series[key].push_back(mean);
    }
    if (on_epoch && !on_epoch(report)) break;
  }
}

GanModel fit_gan(const Table& train, const Schema& schema, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  check_schema_matches(schema, train);
  CodecOptions options;
  options.vgm = config.vgm;
  options.selection = config.selection;
  options.vgm_enabled = config.ablation.vgm_on;
  options.long_tail_epsilon = config.long_tail_epsilon;
  const CodecBundle codecs = fit_codecs(train, schema, options);
  const Matrix encoded = encode_table(train, codecs);
  GanModel model = prepare_gan(codecs, schema, encoded, config);
  train_gan(model, encoded, on_epoch);
  return model;
}

// ---------------------------------------------------------------------------
// Synthesis

Matrix synthesize_encoded(const GanModel& model, std::size_t rows, std::uint64_t seed,
                          const std::optional<ConditionalVector>& condition,
                          std::vector<ConditionalVector>* used) {
  if (rows == 0) throw InputError("number of rows to synthesize must be positive");
  const auto& cond_layout = model.condition_layout();
  if (condition) {
    if (condition->column >= cond_layout.columns.size() || condition->local >= cond_layout.columns[condition->column].width) {
      throw InputError("condition does not fit the model's conditional vector");
    }
  }
  Rng rng(seed);
  OutputHead head(model.codecs.layout, model.config.temperature);
  const std::size_t chunk = model.config.batch_size;
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(model.codecs.layout.width));
  if (used) used->clear();
  for (std::size_t start = 0; start < rows; start += chunk) {
    const std::size_t n = std::min(chunk, rows - start);
    std::vector<ConditionalVector> conds;
    if (cond_layout.width > 0) {
      for (std::size_t i = 0; i < n; ++i) {
        conds.push_back(condition ? *condition : sample_condition(model.frequencies, rng, SamplingMass::Frequency));
      }
    }
    Matrix cond = condition_matrix(conds, cond_layout);
    if (conds.empty()) cond.resize(static_cast<Eigen::Index>(n), 0);
    const Matrix noise = standard_normal(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.config.noise_dim), rng);
    const Matrix soft = head.forward(model.generator.infer(hconcat(noise, cond)), rng);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = harden(soft, model.codecs.layout);
    if (used) used->insert(used->end(), conds.begin(), conds.end());
  }
  return out;
}

Table synthesize(const GanModel& model, std::size_t rows, std::uint64_t seed,
                 const std::optional<ConditionalVector>& condition) {
  return decode_table(synthesize_encoded(model, rows, seed, condition), model.codecs);
}

ConditionalVector parse_condition(const GanModel& model, std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw InputError("condition must look like column=value");
  const std::string column = trim(text.substr(0, eq));
  const std::string value = trim(text.substr(eq + 1));
  std::size_t ci;
  try {
    ci = model.codecs.codec_index(column);
  } catch (const Error&) {
    throw InputError("unknown condition column '" + column + "'");
  }
  const auto& cond = model.condition_layout();
  std::optional<std::size_t> cc;
  for (std::size_t i = 0; i < cond.columns.size(); ++i) {
    if (model.codecs.layout.segments[cond.columns[i].segment].codec == ci) cc = i;
  }
  if (!cc) throw InputError("column '" + column + "' is not part of the conditional vector");
  const auto& codec = model.codecs.codecs[ci];
  if (!codec.is_numeric()) {
    const auto& classes = codec.categorical().classes;
    const auto it = std::find(classes.begin(), classes.end(), value);
    if (it == classes.end()) throw InputError("unknown class '" + value + "' for column '" + column + "'");
    return {*cc, static_cast<std::size_t>(it - classes.begin())};
  }
  const auto& n = codec.numeric();
  if (!value.empty() && value[0] == '#') {
    const auto k = parse_number(value.substr(1));
    if (!k || *k < 0 || *k != std::floor(*k) || *k >= static_cast<double>(n.mode_width())) {
      throw InputError("mode index out of range in condition '" + std::string(text) + "'");
    }
    return {*cc, static_cast<std::size_t>(*k)};
  }
  const auto v = parse_number(value);
  if (v) {
    const auto it = std::find(n.categorical_values.begin(), n.categorical_values.end(), *v);
    if (it != n.categorical_values.end()) {
      return {*cc, n.value_slot[static_cast<std::size_t>(it - n.categorical_values.begin())]};
    }
  }
  throw InputError("condition value '" + value + "' is neither a categorical value nor #mode for '" + column + "'");
}

}  // namespace tabsynth
