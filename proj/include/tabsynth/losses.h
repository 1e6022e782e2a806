#pragma once

#include <cstddef>
#include <vector>

#include "tabsynth/condvec.h"
#include "tabsynth/matrix.h"

namespace tabsynth {

// Discriminator outputs below are raw logits; probabilities are sigmoid(logit).

struct AdversarialLosses {
  double discriminator = 0.0;  // -E[log D(real)] - E[log(1 - D(fake))]
  double generator = 0.0;      // -E[log D(fake)]
};

// Probability form, clamped to [1e-7, 1 - 1e-7].
AdversarialLosses adversarial_losses(const Matrix& real_prob, const Matrix& fake_prob);

// Logit form of the discriminator loss; optional gradients with respect to the logits.
double discriminator_loss(const Matrix& real_logits, const Matrix& fake_logits, Matrix* real_grad = nullptr,
                          Matrix* fake_grad = nullptr);
// Non-saturating generator loss.
double generator_adversarial_loss(const Matrix& fake_logits, Matrix* fake_grad = nullptr);

struct FeatureStats {
  RowVector mean;
  RowVector stddev;  // population
};

FeatureStats feature_stats(const Matrix& activations);

// ||mean_r - mean_f||_2 + ||sd_r - sd_f||_2
double info_loss(const FeatureStats& real, const FeatureStats& fake);
// Loss and its gradient with respect to the fake activations.
double info_loss(const FeatureStats& real, const Matrix& fake_activations, Matrix* fake_grad);

// Mean softmax cross-entropy of `logits` rows against `labels`.
double cross_entropy(const Matrix& logits, const std::vector<std::size_t>& labels, Matrix* grad = nullptr);

// Mean -log p[label] over rows of a probability matrix.
double cross_entropy_probabilities(const Matrix& probabilities, const std::vector<std::size_t>& labels);

// Cross-entropy between the generator's soft segment for each row's conditioned
// column and the condition. `scaled_logits` are the head's (logits + g) / temperature;
// `grad` receives the gradient with respect to those scaled logits.
double condition_loss(const Matrix& scaled_logits, const ConditionLayout& layout,
                      const std::vector<ConditionalVector>& conditions, Matrix* grad = nullptr);

}  // namespace tabsynth
