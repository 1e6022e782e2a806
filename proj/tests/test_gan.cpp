#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "gradcheck.h"
#include "planted.h"
#include "tabsynth/error.h"
#include "tabsynth/gan.h"
#include "tabsynth/losses.h"

using namespace tabsynth;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

// Worst relative error of an analytic gradient over all entries of x.
double check_all(Matrix& x, const Matrix& analytic, const std::function<double()>& f) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    worst = std::max(worst, gradcheck::relative_error(analytic.data()[k], gradcheck::central(x.data() + k, f)));
  }
  return worst;
}

TrainConfig small_config(std::size_t epochs = 2, std::uint64_t seed = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.seed = seed;
  c.batch_size = 100;
  c.noise_dim = 8;
  c.generator_width = c.discriminator_width = 24;
  c.classifier_width = 16;
  return c;
}

}  // namespace

TEST_CASE("adversarial losses in probability form") {
  const Matrix half = Matrix::Constant(10, 1, 0.5);
  const auto l = adversarial_losses(half, half);
  CHECK(l.discriminator == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
  CHECK(l.generator == doctest::Approx(std::log(2.0)));
  const auto perfect = adversarial_losses(Matrix::Ones(10, 1), Matrix::Zero(10, 1));
  CHECK(perfect.discriminator < 1e-6);
}

TEST_CASE("logit losses agree with the probability form") {
  Rng rng(1);
  const Matrix r = random_matrix(20, 1, rng, 2.0), f = random_matrix(20, 1, rng, 2.0);
  auto sig = [](const Matrix& m) { return m.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); }).eval(); };
  const auto p = adversarial_losses(sig(r), sig(f));
  CHECK(discriminator_loss(r, f) == doctest::Approx(p.discriminator).epsilon(1e-12));
  CHECK(generator_adversarial_loss(f) == doctest::Approx(p.generator).epsilon(1e-12));
  // Extreme logits stay finite.
  CHECK(std::isfinite(discriminator_loss(Matrix::Constant(3, 1, 800.0), Matrix::Constant(3, 1, -800.0))));
}

TEST_CASE("adversarial loss gradients") {
  Rng rng(2);
  Matrix r = random_matrix(16, 1, rng, 2.0), f = random_matrix(16, 1, rng, 2.0);
  Matrix gr, gf, gg;
  discriminator_loss(r, f, &gr, &gf);
  generator_adversarial_loss(f, &gg);
  CHECK(check_all(r, gr, [&] { return discriminator_loss(r, f); }) < gradcheck::kTolerance);
  CHECK(check_all(f, gf, [&] { return discriminator_loss(r, f); }) < gradcheck::kTolerance);
  CHECK(check_all(f, gg, [&] { return generator_adversarial_loss(f); }) < gradcheck::kTolerance);
}

TEST_CASE("information loss") {
  Rng rng(3);
  const Matrix h = random_matrix(30, 4, rng);
  CHECK(info_loss(feature_stats(h), feature_stats(h)) == 0.0);

  FeatureStats a{RowVector::Zero(2), RowVector::Ones(2)}, b{RowVector::Zero(2), RowVector::Ones(2)};
  b.mean << 3.0, 4.0;
  CHECK(info_loss(a, b) == 5.0);
  CHECK_THROWS_AS(info_loss(a, FeatureStats{RowVector::Zero(3), RowVector::Zero(3)}), InputError);

  SUBCASE("two-pass statistics oracle") {
    const Matrix real = random_matrix(25, 5, rng), fake = random_matrix(25, 5, rng, 2.0);
    auto two_pass = [](const Matrix& m, std::vector<double>& mean, std::vector<double>& sd) {
      const auto n = static_cast<std::size_t>(m.rows());
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += m(static_cast<Eigen::Index>(i), j);
        const double mu = s / static_cast<double>(n);
        double q = 0.0;
        for (std::size_t i = 0; i < n; ++i) q += (m(static_cast<Eigen::Index>(i), j) - mu) * (m(static_cast<Eigen::Index>(i), j) - mu);
        mean.push_back(mu);
        sd.push_back(std::sqrt(q / static_cast<double>(n)));
      }
    };
    std::vector<double> mr, sr, mf, sf;
    two_pass(real, mr, sr);
    two_pass(fake, mf, sf);
    double dm = 0.0, ds = 0.0;
    for (std::size_t j = 0; j < mr.size(); ++j) {
      dm += (mr[j] - mf[j]) * (mr[j] - mf[j]);
      ds += (sr[j] - sf[j]) * (sr[j] - sf[j]);
    }
    CHECK(std::abs(info_loss(feature_stats(real), feature_stats(fake)) - (std::sqrt(dm) + std::sqrt(ds))) <= 1e-12);
  }
  SUBCASE("gradient") {
    const FeatureStats real = feature_stats(random_matrix(25, 6, rng));
    Matrix fake = random_matrix(25, 6, rng, 1.5);
    Matrix g;
    info_loss(real, fake, &g);
    CHECK(check_all(fake, g, [&] { return info_loss(real, fake, nullptr); }) < gradcheck::kTolerance);
  }
}

TEST_CASE("cross-entropy") {
  Matrix certain = Matrix::Zero(2, 3);
  certain(0, 1) = certain(1, 2) = 1.0;
  CHECK(cross_entropy_probabilities(certain, {1, 2}) == 0.0);
  CHECK(cross_entropy_probabilities(Matrix::Constant(4, 2, 0.5), {0, 1, 1, 0}) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy(Matrix::Zero(3, 2), {0, 1, 0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  Rng rng(4);
  Matrix logits = random_matrix(12, 4, rng, 2.0);
  std::vector<std::size_t> labels(12);
  for (auto& l : labels) l = rng() % 4;
  Matrix g;
  cross_entropy(logits, labels, &g);
  CHECK(check_all(logits, g, [&] { return cross_entropy(logits, labels); }) < gradcheck::kTolerance);
  CHECK_THROWS_AS(cross_entropy(logits, {0}), InputError);
}

TEST_CASE("condition loss") {
  EncodingLayout layout;
  layout.segments = {{0, SegmentKind::Alpha, 0, 1, false}, {0, SegmentKind::Mode, 1, 4, true},
                     {1, SegmentKind::Class, 5, 2, true}};
  layout.width = 7;
  const auto cond = build_condition_layout(layout);
  // Soft segment equal to the condition costs nothing; uniform over 4 costs log 4.
  Matrix onehot = Matrix::Zero(1, 4);
  onehot(0, 2) = 1.0;
  CHECK(cross_entropy_probabilities(onehot, {2}) == 0.0);
  CHECK(condition_loss(Matrix::Zero(1, 7), cond, {{0, 2}}) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  Matrix sharp = Matrix::Zero(1, 7);
  sharp(0, 3) = 60.0;
  CHECK(condition_loss(sharp, cond, {{0, 2}}) < 1e-20);

  Rng rng(5);
  Matrix scaled = random_matrix(6, 7, rng, 3.0);
  const std::vector<ConditionalVector> conds{{0, 1}, {1, 0}, {0, 3}, {1, 1}, {0, 0}, {0, 2}};
  Matrix g;
  condition_loss(scaled, cond, conds, &g);
  CHECK(g.col(0).isZero());
  CHECK(check_all(scaled, g, [&] { return condition_loss(scaled, cond, conds); }) < gradcheck::kTolerance);
}

TEST_CASE("classifier features") {
  const Table t = planted::make_table(400, 10);
  const auto bundle = fit_codecs(t, planted::schema());
  const Matrix enc = encode_table(t, bundle);
  const std::size_t target = bundle.codec_index("y");
  const ClassifierFeatures features(bundle, target, enc);

  SUBCASE("hard rows decode to their training values, scaled into [0, 1]") {
    const Matrix f = features.forward(enc);
    // A (continuous) and C (mixed) one feature each; B's three classes.
    REQUIRE(features.width() == 5);
    CHECK(f.col(0).minCoeff() == doctest::Approx(0.0));
    CHECK(f.col(0).maxCoeff() == doctest::Approx(1.0));
    const auto& a = t.column("A");
    std::size_t lo = 0;
    for (std::size_t r = 1; r < a.size(); ++r) {
      if (*a.number(r) < *a.number(lo)) lo = r;
    }
    CHECK(f(static_cast<Eigen::Index>(lo), 0) == doctest::Approx(0.0).epsilon(1e-9));
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      CHECK(f.row(r).segment(2, 3).sum() == 1.0);
      if (*t.column("C").number(static_cast<std::size_t>(r)) == 0.0) CHECK(f(r, 1) == 0.0);
    }
    const auto labels = features.labels(enc);
    for (std::size_t r = 0; r < t.rows(); ++r) {
      CHECK(bundle.codecs[target].categorical().classes[labels[r]] == *t.column("y").cells()[r]);
    }
  }
  SUBCASE("backward matches finite differences on soft rows") {
    Rng rng(6);
    Matrix soft = enc.topRows(8) + 0.1 * random_matrix(8, enc.cols(), rng);
    const Matrix w = random_matrix(8, static_cast<Eigen::Index>(features.width()), rng);
    const Matrix g = features.backward(soft, w);
    CHECK(check_all(soft, g, [&] { return features.forward(soft).cwiseProduct(w).sum(); }) < gradcheck::kTolerance);
  }
  SUBCASE("json round trip") {
    const auto back = ClassifierFeatures::from_json(features.to_json(), bundle);
    CHECK(back.forward(enc) == features.forward(enc));
  }
}

TEST_CASE("generator objective gradients through the discriminator, classifier and head") {
  const Table t = planted::make_table(300, 11);
  TrainConfig cfg = small_config();
  cfg.generator_width = cfg.discriminator_width = 10;
  cfg.classifier_width = 8;
  cfg.classifier_layers = 3;
  cfg.generator_layers = 2;
  cfg.weights = {0.7, 1.3, 0.9};
  CodecOptions opt;
  const auto codecs = fit_codecs(t, planted::schema(), opt);
  const Matrix enc = encode_table(t, codecs);
  GanModel model = prepare_gan(codecs, planted::schema(), enc, cfg);
  REQUIRE(model.classifier.has_value());

  Rng rng(12);
  const std::size_t b = 16;
  std::vector<ConditionalVector> conds;
  std::vector<std::size_t> rows;
  const RowIndex index(enc, model.condition_layout());
  for (std::size_t i = 0; i < b; ++i) {
    conds.push_back(sample_condition(model.frequencies, rng));
    rows.push_back(draw_real_batch(conds.back(), index, rng, 1)[0]);
  }
  Matrix real(static_cast<Eigen::Index>(b), enc.cols());
  for (std::size_t i = 0; i < b; ++i) real.row(static_cast<Eigen::Index>(i)) = enc.row(static_cast<Eigen::Index>(rows[i]));
  const Matrix cond = condition_matrix(conds, model.condition_layout());
  const Matrix noise = random_matrix(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(cfg.noise_dim), rng);

  auto total = [&] {
    Rng fixed(77);
    return generator_objective(model, real, cond, conds, noise, fixed, false).total(cfg.weights);
  };
  Rng fixed(77);
  model.generator.zero_grad();
  const auto obj = generator_objective(model, real, cond, conds, noise, fixed, true);
  CHECK(obj.information > 0.0);
  CHECK(obj.classification > 0.0);
  CHECK(obj.condition > 0.0);

  Rng pick(13);
  double worst = 0.0;
  for (int probe = 0; probe < 64; ++probe) {
    auto& layer = model.generator.layers()[pick() % model.generator.layers().size()];
    const auto k = static_cast<Eigen::Index>(pick() % static_cast<std::uint64_t>(layer.weight.size()));
    worst = std::max(worst, gradcheck::relative_error(layer.weight_grad.data()[k],
                                                      gradcheck::central(layer.weight.data() + k, total)));
  }
  CHECK(worst < gradcheck::kTolerance);
  // Discriminator and classifier gradients are untouched by the generator objective.
  for (const auto& l : model.discriminator.layers()) CHECK(l.weight_grad.isZero());
  for (const auto& l : model.classifier->layers()) CHECK(l.weight_grad.isZero());
}

TEST_CASE("classification loss separates consistent and contradictory records") {
  // Classifier pre-trained on real data following the planted rule.
  const Table t = planted::make_table(3000, 12);
  const auto codecs = fit_codecs(t, planted::schema());
  const Matrix enc = encode_table(t, codecs);
  TrainConfig cfg = small_config();
  GanModel model = prepare_gan(codecs, planted::schema(), enc, cfg);
  auto& clf = *model.classifier;
  const auto& features = *model.classifier_features;
  const Matrix x = features.forward(enc);
  const auto y = features.labels(enc);
  AdamConfig fast;
  fast.learning_rate = 1e-3;
  Adam opt(clf, fast);
  for (int step = 0; step < 600; ++step) {
    clf.zero_grad();
    Matrix g;
    cross_entropy(clf.forward(x), y, &g);
    clf.backward(g);
    opt.step(clf);
  }
  const Matrix p = clf.infer(x);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index k;
    p.row(r).maxCoeff(&k);
    correct += static_cast<std::size_t>(k) == y[static_cast<std::size_t>(r)];
  }
  REQUIRE(correct >= 0.99 * static_cast<double>(p.rows()));

  // Flip the generated label of consistent records.
  const auto& target = model.codecs.layout.segments[*model.codecs.layout.one_hot_segment(*model.target_codec)];
  const Matrix consistent = enc.topRows(200);
  Matrix contradictory = consistent;
  contradictory.middleCols(static_cast<Eigen::Index>(target.offset), 2).rowwise().reverseInPlace();
  auto loss = [&](const Matrix& m) { return cross_entropy(clf.infer(features.forward(m)), features.labels(m)); };
  CHECK(loss(contradictory) > loss(consistent) + 1.0);
}

TEST_CASE("training records every enabled loss and respects ablations") {
  const Table t = planted::make_table(400, 13);
  const Schema s = planted::schema();

  const auto full = fit_gan(t, s, small_config());
  for (const char* key : {loss_key::kDiscriminator, loss_key::kGeneratorAdversarial, loss_key::kInformation,
                          loss_key::kClassification, loss_key::kCondition, loss_key::kClassifier}) {
    REQUIRE(full.history.has(key));
    CHECK(full.history.series.at(key).size() == 2);
  }

  TrainConfig no_clf = small_config();
  no_clf.ablation.classifier_on = false;
  const auto a = fit_gan(t, s, no_clf);
  CHECK_FALSE(a.history.has(loss_key::kClassification));
  CHECK_FALSE(a.history.has(loss_key::kClassifier));
  CHECK_FALSE(a.classifier.has_value());
  CHECK(a.history.has(loss_key::kInformation));

  TrainConfig no_info = small_config();
  no_info.ablation.info_loss_on = false;
  const auto b = fit_gan(t, s, no_info);
  CHECK_FALSE(b.history.has(loss_key::kInformation));
  CHECK(b.history.has(loss_key::kClassification));

  TrainConfig no_vgm = small_config();
  no_vgm.ablation.vgm_on = false;
  const auto c = fit_gan(t, s, no_vgm);
  CHECK_FALSE(c.codecs.vgm_enabled);
  // Only B, y and C's exact-zero/continuous indicator remain conditionable; A carries alpha alone.
  CHECK_FALSE(c.codecs.layout.one_hot_segment(c.codecs.codec_index("A")).has_value());
  CHECK(c.condition_layout().width < full.condition_layout().width);
  CHECK(synthesize(c, 50, 1).rows() == 50);

  const auto unlabeled = fit_gan(planted::make_table(400, 13, false), planted::schema(false), small_config());
  CHECK_FALSE(unlabeled.config.ablation.classifier_on);
  CHECK_FALSE(unlabeled.history.has(loss_key::kClassification));
}

TEST_CASE("training and synthesis are reproducible under a seed") {
  const Table t = planted::make_table(300, 14);
  const auto a = fit_gan(t, planted::schema(), small_config(2, 9));
  const auto b = fit_gan(t, planted::schema(), small_config(2, 9));
  CHECK(a.generator.layers()[0].weight == b.generator.layers()[0].weight);
  CHECK(a.history.series == b.history.series);
  CHECK(to_csv(synthesize(a, 200, 5)) == to_csv(synthesize(b, 200, 5)));
  const auto c = fit_gan(t, planted::schema(), small_config(2, 10));
  CHECK(a.generator.layers()[0].weight != c.generator.layers()[0].weight);
}

TEST_CASE("synthesize") {
  const Table t = planted::make_table(500, 15);
  const auto model = fit_gan(t, planted::schema(), small_config(3));
  const Table s = synthesize(model, 777, 1);
  CHECK(s.rows() == 777);
  CHECK(s.names() == t.names());
  std::size_t zeros = 0;
  for (std::size_t r = 0; r < s.rows(); ++r) zeros += s.column("C").token(r) == "0";
  CHECK(zeros > 0);  // exact categorical-mode values
  CHECK_THROWS_AS(synthesize(model, 0, 1), InputError);

  const auto v = parse_condition(model, "B=rare");
  const Table fixed = synthesize(model, 300, 2, v);
  std::vector<ConditionalVector> used;
  synthesize_encoded(model, 10, 2, v, &used);
  for (const auto& u : used) CHECK(u == v);
  CHECK(parse_condition(model, "C=0").local == model.codecs.codecs[model.codecs.codec_index("C")].numeric().value_slot[0]);
  CHECK(parse_condition(model, "A=#0").local == 0);
  CHECK_THROWS_AS(parse_condition(model, "B=nope"), InputError);
  CHECK_THROWS_AS(parse_condition(model, "Q=1"), InputError);
  CHECK_THROWS_AS(parse_condition(model, "A=#99"), InputError);
  CHECK_THROWS_AS(parse_condition(model, "A"), InputError);
}

TEST_CASE("conditioned synthesis honours the condition after training") {
  // A single 2-class column.
  std::vector<Cell> cells;
  Rng rng(16);
  for (int i = 0; i < 1000; ++i) cells.emplace_back(rng() % 10 < 7 ? "left" : "right");
  const Table t({Column("side", cells)});
  const Schema s({{"side", CategoricalKind{}, true, false}});
  TrainConfig cfg = small_config(100);
  const auto model = fit_gan(t, s, cfg);
  for (const char* side : {"left", "right"}) {
    const Table out = synthesize(model, 1000, 3, parse_condition(model, std::string("side=") + side));
    std::size_t hit = 0;
    for (const auto& c : out.column("side").cells()) hit += *c == side;
    CHECK(hit >= 950);
  }
}

TEST_CASE("divergence guard") {
  const Table t = planted::make_table(200, 17);
  const auto codecs = fit_codecs(t, planted::schema());
  const Matrix enc = encode_table(t, codecs);
  GanModel model = prepare_gan(codecs, planted::schema(), enc, small_config(1));
  model.generator.layers()[0].weight(0, 0) = std::nan("");
  CHECK_THROWS_AS(train_gan(model, enc), TrainingError);
}

TEST_CASE("configuration validation and json") {
  TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  TrainConfig d = small_config(7, 99);
  d.ablation.info_loss_on = false;
  d.selection = ModeSelection::Density;
  const auto back = train_config_from_json(to_json(d));
  CHECK(to_json(back) == to_json(d));
  CHECK_THROWS_AS(train_config_from_json({{"batch_size", 0}}), InputError);
  CHECK_THROWS_AS(train_config_from_json({{"epochs", "many"}}), InputError);
}

TEST_CASE("model bundle save and load") {
  const Table t = planted::make_table(300, 18);
  const auto model = fit_gan(t, planted::schema(), small_config(2));
  const auto dir = std::filesystem::temp_directory_path() / "tabsynth_model_test";
  std::filesystem::remove_all(dir);
  save_model(model, dir);
  CHECK(std::filesystem::exists(dir / "generator.bin"));
  CHECK(std::filesystem::exists(dir / "classifier.bin"));
  const auto back = load_model(dir);
  CHECK(back.history.series == model.history.series);
  CHECK(to_csv(synthesize(back, 300, 4)) == to_csv(synthesize(model, 300, 4)));
  std::filesystem::remove(dir / "generator.bin");
  CHECK_THROWS_AS(load_model(dir), InputError);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_model(dir), InputError);
}
