// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Tolerances and time limits are fixed here and never loosened to make a run pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "gradcheck.h"
#include "oracles.h"
#include "planted.h"
#include "tabsynth/codec.h"
#include "tabsynth/condvec.h"
#include "tabsynth/error.h"
#include "tabsynth/gan.h"
#include "tabsynth/long_tail.h"
#include "tabsynth/losses.h"
#include "tabsynth/neural.h"
#include "tabsynth/privacy.h"
#include "tabsynth/similarity.h"
#include "tabsynth/split.h"
#include "tabsynth/utility.h"
#include "tabsynth/vgm.h"

using namespace tabsynth;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

// ---------------------------------------------------------------- encoder round trip

Outcome encoder_round_trip() {
  const Table t = planted::make_table(10000, 101, false);
  const Schema s = planted::schema(false);
  const auto bundle = fit_codecs(t, s);
  const Matrix enc = encode_table(t, bundle);
  const Table back = decode_table(enc, bundle);

  double worst = 0.0;
  std::size_t checked = 0, clipped = 0, exact_mismatch = 0;
  for (const char* name : {"A", "C"}) {
    const auto& alpha = bundle.layout.segments[*bundle.layout.alpha_segment(bundle.codec_index(name))];
    const Column& a = t.column(name);
    const Column& b = back.column(name);
    const auto& codec = bundle.codecs[bundle.codec_index(name)].numeric();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      const double x = *a.number(r);
      if (codec.mixed && std::find(codec.categorical_values.begin(), codec.categorical_values.end(), x) !=
                             codec.categorical_values.end()) {
        exact_mismatch += a.token(r) != b.token(r);
        continue;
      }
      if (std::abs(enc(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(alpha.offset))) >= 1.0) {
        ++clipped;
        continue;
      }
      worst = std::max(worst, std::abs(*b.number(r) - x));
      ++checked;
    }
  }
  for (std::size_t r = 0; r < t.rows(); ++r) exact_mismatch += t.column("B").cells()[r] != back.column("B").cells()[r];
  Outcome o;
  o.pass = worst <= 1e-6 && exact_mismatch == 0 && checked > 0;
  o.detail = "max abs err " + fmt("%.2e", worst) + " over " + std::to_string(checked) + " continuous cells (" +
             std::to_string(clipped) + " clipped), " + std::to_string(exact_mismatch) + " categorical/mixed mismatches";
  return o;
}

// ---------------------------------------------------------------- vgm recovery

Outcome vgm_recovery() {
  const auto x = planted::mixture_samples(10000, 0.5, -4.0, 1.0, 3.0, 0.5, 102);
  const auto gmm = fit_vgm(x);
  Outcome o;
  o.detail = std::to_string(gmm.size()) + " modes:";
  for (const auto& m : gmm.modes) o.detail += " (w " + fmt("%.3f", m.weight) + ", mu " + fmt("%.3f", m.mean) + ")";
  o.pass = gmm.size() == 2 && std::abs(gmm.modes[0].mean + 4.0) <= 0.2 && std::abs(gmm.modes[1].mean - 3.0) <= 0.2 &&
           std::abs(gmm.modes[0].weight - 0.5) <= 0.05 && std::abs(gmm.modes[1].weight - 0.5) <= 0.05;
  return o;
}

// ---------------------------------------------------------------- long-tail identity

Outcome long_tail_identity() {
  Rng rng(103);
  std::uniform_real_distribution<double> exponent(-3.0, 3.0);
  // l > 0 uses log(x); l <= 0 uses log(x - l + eps).
  const std::vector<LongTailParams> params{{1e-3, 1.0}, {0.0, 1.0}, {-1e-3, 1e-3}, {-0.5, 1.0}};
  double worst = 0.0;
  std::size_t draws = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto& p = params[static_cast<std::size_t>(i) % params.size()];
    const double x = std::pow(10.0, exponent(rng));
    if (x < p.lower) continue;
    worst = std::max(worst, std::abs(log_expand(log_compress(x, p), p) - x) / x);
    ++draws;
  }
  return {worst <= 1e-9 && draws >= 9900, "max rel err " + fmt("%.2e", worst) + " over " + std::to_string(draws) + " draws"};
}

// ---------------------------------------------------------------- conditional sampler

Outcome conditional_sampler() {
  // Column 0: classes {900, 90, 10}. Column 1: two balanced classes.
  Matrix m = Matrix::Zero(1000, 5);
  for (Eigen::Index r = 0; r < 1000; ++r) {
    m(r, r < 900 ? 0 : (r < 990 ? 1 : 2)) = 1.0;
    m(r, 3 + (r % 2)) = 1.0;
  }
  EncodingLayout layout;
  layout.segments = {{0, SegmentKind::Class, 0, 3, true}, {1, SegmentKind::Class, 3, 2, true}};
  layout.width = 5;
  const auto freq = build_frequency_table(m, layout);

  const double total = std::log(901.0) + std::log(91.0) + std::log(11.0);
  const std::vector<std::vector<double>> expected{
      {std::log(901.0) / total, std::log(91.0) / total, std::log(11.0) / total}, {0.5, 0.5}};
  std::vector<std::vector<double>> hits{{0, 0, 0}, {0, 0}};
  Rng rng(104);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto v = sample_condition(freq, rng);
    hits[v.column][v.local] += 1;
  }
  double mass_err = 0.0;
  std::vector<double> column_share;
  for (std::size_t c = 0; c < 2; ++c) {
    const double k = std::accumulate(hits[c].begin(), hits[c].end(), 0.0);
    column_share.push_back(k / n);
    for (std::size_t j = 0; j < hits[c].size(); ++j) mass_err = std::max(mass_err, std::abs(hits[c][j] / k - expected[c][j]));
  }
  const double col_err = std::max(std::abs(column_share[0] - 0.5), std::abs(column_share[1] - 0.5));
  return {mass_err <= 0.02 && col_err <= 0.01,
          "max mass err " + fmt("%.4f", mass_err) + ", column choice err " + fmt("%.4f", col_err)};
}

// ---------------------------------------------------------------- gradient integrity

constexpr int kProbes = 64;

// Worst relative error over kProbes random coordinates of x.
template <typename Dense>
double probe(Dense& x, const Dense& analytic, const std::function<double()>& f, Rng& rng) {
  double worst = 0.0;
  for (int i = 0; i < kProbes; ++i) {
    const auto k = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(x.size()));
    worst = std::max(worst, gradcheck::relative_error(analytic.data()[k], gradcheck::central(x.data() + k, f)));
  }
  return worst;
}

Outcome gradient_integrity() {
  Rng rng(105);
  std::map<std::string, double> worst;

  const std::vector<std::pair<const char*, Activation>> activations{
      {"leaky_relu", Activation::LeakyRelu}, {"relu", Activation::Relu}, {"tanh", Activation::Tanh},
      {"sigmoid", Activation::Sigmoid}, {"identity", Activation::Identity}};
  for (const auto& [name, a] : activations) {
    DenseNet net({6, 9, 4}, {a, a}, rng);
    Matrix x = random_matrix(12, 6, rng);
    const Matrix w = random_matrix(12, 4, rng);
    net.zero_grad();
    net.forward(x);
    const Matrix gx = net.backward(w);
    auto loss = [&] { return net.infer(x).cwiseProduct(w).sum(); };
    double e = probe(x, gx, loss, rng);
    for (auto& l : net.layers()) {
      e = std::max(e, probe(l.weight, l.weight_grad, loss, rng));
      e = std::max(e, probe(l.bias, l.bias_grad, loss, rng));
    }
    worst[std::string("dense/") + name] = e;
  }

  {
    EncodingLayout layout;
    layout.segments = {{0, SegmentKind::Alpha, 0, 1, false}, {0, SegmentKind::Mode, 1, 3, true},
                       {1, SegmentKind::Class, 4, 2, true}};
    layout.width = 6;
    OutputHead head(layout, 0.2);
    Matrix logits = random_matrix(12, 6, rng);
    const Matrix w = random_matrix(12, 6, rng);
    auto loss = [&] {
      Rng fixed(7);
      return head.forward(logits, fixed).cwiseProduct(w).sum();
    };
    loss();
    const Matrix gh = head.backward(w);
    worst["output_head"] = probe(logits, gh, loss, rng);

    Matrix scaled = random_matrix(12, 6, rng, 3.0);
    std::vector<ConditionalVector> conds;
    for (int i = 0; i < 12; ++i) conds.push_back(i % 2 ? ConditionalVector{0, rng() % 3} : ConditionalVector{1, rng() % 2});
    const auto cl = build_condition_layout(layout);
    Matrix g;
    condition_loss(scaled, cl, conds, &g);
    worst["condition_loss"] = probe(scaled, g, [&] { return condition_loss(scaled, cl, conds); }, rng);
  }

  {
    Matrix r = random_matrix(16, 1, rng, 2.0), f = random_matrix(16, 1, rng, 2.0);
    Matrix gr, gf, gg;
    discriminator_loss(r, f, &gr, &gf);
    generator_adversarial_loss(f, &gg);
    worst["adversarial/discriminator"] = std::max(probe(r, gr, [&] { return discriminator_loss(r, f); }, rng),
                                                  probe(f, gf, [&] { return discriminator_loss(r, f); }, rng));
    worst["adversarial/generator"] = probe(f, gg, [&] { return generator_adversarial_loss(f); }, rng);
  }

  {
    const FeatureStats real = feature_stats(random_matrix(20, 8, rng));
    Matrix fake = random_matrix(20, 8, rng, 1.5);
    Matrix g;
    info_loss(real, fake, &g);
    worst["information"] = probe(fake, g, [&] { return info_loss(real, fake, nullptr); }, rng);
  }

  {
    Matrix logits = random_matrix(16, 4, rng, 2.0);
    std::vector<std::size_t> labels(16);
    for (auto& l : labels) l = rng() % 4;
    Matrix g;
    cross_entropy(logits, labels, &g);
    worst["classification"] = probe(logits, g, [&] { return cross_entropy(logits, labels); }, rng);
  }

  {
    // Full generator objective: head, discriminator, information, classifier and condition terms.
    const Table t = planted::make_table(300, 106);
    TrainConfig cfg;
    cfg.noise_dim = 8;
    cfg.generator_width = cfg.discriminator_width = 10;
    cfg.classifier_width = 8;
    cfg.classifier_layers = 3;
    cfg.generator_layers = 2;
    cfg.weights = {0.7, 1.3, 0.9};
    const auto codecs = fit_codecs(t, planted::schema());
    const Matrix enc = encode_table(t, codecs);
    GanModel model = prepare_gan(codecs, planted::schema(), enc, cfg);
    const RowIndex index(enc, model.condition_layout());
    std::vector<ConditionalVector> conds;
    Matrix real(16, enc.cols());
    for (Eigen::Index i = 0; i < 16; ++i) {
      conds.push_back(sample_condition(model.frequencies, rng));
      real.row(i) = enc.row(static_cast<Eigen::Index>(draw_real_batch(conds.back(), index, rng, 1)[0]));
    }
    const Matrix cond = condition_matrix(conds, model.condition_layout());
    const Matrix noise = random_matrix(16, static_cast<Eigen::Index>(cfg.noise_dim), rng);
    auto total = [&] {
      Rng fixed(77);
      return generator_objective(model, real, cond, conds, noise, fixed, false).total(cfg.weights);
    };
    Rng fixed(77);
    model.generator.zero_grad();
    generator_objective(model, real, cond, conds, noise, fixed, true);
    double e = 0.0;
    for (auto& l : model.generator.layers()) e = std::max(e, probe(l.weight, l.weight_grad, total, rng));
    worst["generator_objective"] = e;

    const auto& features = *model.classifier_features;
    Matrix soft = enc.topRows(8);
    soft.array() += 0.05;
    const Matrix w = random_matrix(8, static_cast<Eigen::Index>(features.width()), rng);
    const Matrix g = features.backward(soft, w);
    worst["classifier_features"] = probe(soft, g, [&] { return features.forward(soft).cwiseProduct(w).sum(); }, rng);
  }

  Outcome o{true, ""};
  double overall = 0.0;
  std::string failing;
  for (const auto& [name, e] : worst) {
    overall = std::max(overall, e);
    if (!(e < gradcheck::kTolerance)) {
      o.pass = false;
      failing += " " + name + "=" + fmt("%.2e", e);
    }
  }
  o.detail = std::to_string(worst.size()) + " components x >= " + std::to_string(kProbes) + " probes, worst rel err " +
             fmt("%.2e", overall) + (failing.empty() ? "" : ";" + failing);
  return o;
}

// ---------------------------------------------------------------- metric oracles

Outcome metric_oracles() {
  Rng rng(107);
  std::map<std::string, double> worst;
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = 2 + rng() % 8;
    const auto p = oracle::distribution(k, rng, true), q = oracle::distribution(k, rng, true);
    worst["jsd"] = std::max(worst["jsd"], std::abs(jsd(p, q) - oracle::jsd(p, q)));

    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<double> a(1 + rng() % 12), b(1 + rng() % 12);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = rng() % 3 == 0 && !a.empty() ? a[rng() % a.size()] : u(rng);
    worst["wasserstein_1d"] = std::max(worst["wasserstein_1d"], std::abs(wasserstein_1d(a, b) - oracle::wasserstein(a, b)));

    const bool same = i % 2 == 0;
    const Matrix x = oracle::points(3 + rng() % 30, 1 + rng() % 5, rng);
    const Matrix ref = same ? x : oracle::points(3 + rng() % 30, static_cast<std::size_t>(x.cols()), rng);
    const auto nn = nearest_neighbours(x, ref, same);
    const auto [dcr, nndr] = oracle::dcr_nndr(x, ref, same, 5.0);
    worst["dcr"] = std::max(worst["dcr"], std::abs(percentile(nn.first, 5.0) - dcr));
    worst["nndr"] = std::max(worst["nndr"], std::abs(percentile(distance_ratios(nn), 5.0) - nndr));

    const std::size_t n = 20 + rng() % 200;
    const auto ta = oracle::tokens(n, 1 + rng() % 5, rng), tb = oracle::tokens(n, 1 + rng() % 5, rng);
    worst["theils_u"] = std::max(worst["theils_u"], std::abs(theils_u(ta, tb) - oracle::theils_u(ta, tb)));

    std::vector<double> v(n);
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t r = 0; r < n; ++r) v[r] = z(rng) + static_cast<double>(ta[r].back() - '0');
    worst["correlation_ratio"] =
        std::max(worst["correlation_ratio"], std::abs(correlation_ratio(ta, v) - oracle::correlation_ratio(ta, v)));
  }
  Outcome o{true, "100 instances each;"};
  for (const auto& [name, e] : worst) {
    o.pass = o.pass && e <= 1e-6;
    o.detail += " " + name + " " + fmt("%.1e", e);
  }
  return o;
}

// ---------------------------------------------------------------- end to end

Outcome end_to_end() {
  const Table real = planted::make_table(5000, 108);
  const Schema schema = planted::schema();
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 500;
  cfg.seed = 108;
  const auto model = fit_gan(real, schema, cfg);
  const Table synth = synthesize(model, 5000, 109);
  const auto rep = similarity(real, synth, schema);

  bool pass = rep.avg_jsd <= 0.07;
  std::string detail = "avg JSD " + fmt("%.4f", rep.avg_jsd);
  for (const auto& [name, w] : rep.wd_scaled) {
    pass = pass && w <= 0.05;
    detail += ", WD(" + name + ") " + fmt("%.4f", w);
  }
  pass = pass && rep.wd_scaled.size() == 2;

  std::size_t zeros = 0, near_zero = 0;
  const Column& c = synth.column("C");
  for (std::size_t r = 0; r < c.size(); ++r) {
    const auto v = c.number(r);
    if (v && *v == 0.0) ++zeros;
    else if (v && std::abs(*v) < 0.5) ++near_zero;
  }
  const double zero_mass = static_cast<double>(zeros) / static_cast<double>(c.size());
  pass = pass && std::abs(zero_mass - planted::kZeroFraction) <= 0.10;
  detail += ", C exact zeros " + fmt("%.3f", zero_mass) + " (" + std::to_string(near_zero) + " near-zero non-zeros)";

  std::size_t low = 0;
  const Column& a = synth.column("A");
  for (std::size_t r = 0; r < a.size(); ++r) low += *a.number(r) < 0.5;
  const double low_mass = static_cast<double>(low) / static_cast<double>(a.size());
  pass = pass && low_mass >= 0.05 && 1.0 - low_mass >= 0.05;
  detail += ", A modes " + fmt("%.3f", low_mass) + "/" + fmt("%.3f", 1.0 - low_mass);
  return {pass, detail};
}

// ---------------------------------------------------------------- ablation

constexpr std::size_t kAblationEpochs = 100;
constexpr double kTieTolerance = 0.01;

Outcome ablation() {
  const Table base = planted::make_table(1200, 110);
  const Schema schema = planted::schema();
  TrainConfig quick;
  quick.epochs = 2;
  quick.batch_size = 200;

  // Wiring: history keys per flag; the vgm flag changes the encoding rather than the losses.
  const auto full = fit_gan(base, schema, quick);
  TrainConfig c = quick;
  c.ablation.classifier_on = false;
  const auto no_clf = fit_gan(base, schema, c);
  c = quick;
  c.ablation.info_loss_on = false;
  const auto no_info = fit_gan(base, schema, c);
  c = quick;
  c.ablation.vgm_on = false;
  const auto no_vgm = fit_gan(base, schema, c);
  const bool wiring =
      full.history.has(loss_key::kClassification) && full.history.has(loss_key::kClassifier) &&
      full.history.has(loss_key::kInformation) && !no_clf.history.has(loss_key::kClassification) &&
      !no_clf.history.has(loss_key::kClassifier) && no_clf.history.has(loss_key::kInformation) &&
      !no_info.history.has(loss_key::kInformation) && no_info.history.has(loss_key::kClassification) &&
      full.codecs.vgm_enabled && !no_vgm.codecs.vgm_enabled &&
      !no_vgm.codecs.layout.one_hot_segment(no_vgm.codecs.codec_index("A")).has_value() &&
      no_vgm.condition_layout().width < full.condition_layout().width;

  // Direction: utility difference (real - synthetic, macro F1 averaged over models).
  const Table data = planted::make_table(5000, 111);
  const auto split = stratified_split(data, resolve_target(schema, data), 0.2, 111);
  int wins = 0;
  std::string detail = std::string("wiring ") + (wiring ? "ok" : "BROKEN") + "; F1 diff full/no-classifier:";
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    double diff[2];
    for (int variant = 0; variant < 2; ++variant) {
      TrainConfig cfg;
      cfg.epochs = kAblationEpochs;
      cfg.seed = seed;
      cfg.ablation.classifier_on = variant == 0;
      const auto model = fit_gan(split.train, schema, cfg);
      const auto synth = synthesize(model, split.train.rows(), seed + 100);
      const auto u = ml_utility(split.train, synth, split.test, schema, builtin_classifiers());
      diff[variant] = u.average_difference ? u.average_difference->f1 : std::nan("");
    }
    const bool win = diff[0] <= diff[1] + kTieTolerance;
    wins += win;
    detail += " s" + std::to_string(seed) + " " + fmt("%.4f", diff[0]) + "/" + fmt("%.4f", diff[1]) + (win ? "" : "(x)");
  }
  return {wiring && wins >= 2, detail + "; " + std::to_string(wins) + "/3 seeds"};
}

// ---------------------------------------------------------------- ml utility null

Outcome utility_null() {
  const Table data = planted::make_table(3000, 112);
  const Schema schema = planted::schema();
  const auto split = stratified_split(data, resolve_target(schema, data), 0.2, 112);
  const auto u = ml_utility(split.train, split.train, split.test, schema, builtin_classifiers());
  bool pass = u.average_difference.has_value();
  std::size_t values = 0;
  for (const auto& m : u.models) {
    pass = pass && m.difference && m.error.empty();
    if (!m.difference) continue;
    pass = pass && m.difference->accuracy == 0.0 && m.difference->f1 == 0.0 && m.difference->auc == 0.0;
    values += 3;
  }
  if (u.average_difference) {
    pass = pass && u.average_difference->accuracy == 0.0 && u.average_difference->f1 == 0.0 &&
           u.average_difference->auc == 0.0;
  }
  return {pass, std::to_string(u.models.size()) + " models, " + std::to_string(values) + " per-model differences, " +
                    (pass ? "all exactly 0" : "non-zero difference or model error")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double limit_seconds;  // <= 0: no limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"encoder round trip", 5, encoder_round_trip},
      {"vgm recovery", 10, vgm_recovery},
      {"long-tail identity", 1, long_tail_identity},
      {"conditional sampler", 5, conditional_sampler},
      {"gradient integrity", 30, gradient_integrity},
      {"metric oracles", 30, metric_oracles},
      {"end-to-end synthesis", 900, end_to_end},
      {"ablation wiring and direction", 0, ablation},
      {"ml-utility null check", 0, utility_null},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.limit_seconds <= 0 || elapsed <= c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::string timing = fmt("%.2fs", elapsed);
    if (c.limit_seconds > 0) timing += " / " + fmt("%.0fs", c.limit_seconds);
    std::printf("%s %s: %s (%s)\n", pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
