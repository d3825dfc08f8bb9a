#pragma once

#include "llnn/errors.hpp"
#include "llnn/weight_block.hpp"

namespace llnn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;

    /// Throws ConfigError when a field is out of range.
    void validate() const;
};

enum class ActivationKind { ReLU, Sigmoid, Identity };

/// Probability clamp used by bce_loss.
inline constexpr double kProbabilityClamp = 1e-7;

/// W·x + bias. `x` must have block.input_dim() entries.
Vector affine_forward(const Vector& x, const WeightBlock& block);

Vector activate(const Vector& z, ActivationKind kind);
void activate_inplace(Matrix& z, ActivationKind kind);

double sigmoid(double z);

/// Binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
double bce_loss(double p, double label);

/// Sum over non-frozen entries of b * (theta - target)^2.
double consolidation_penalty(const WeightBlock& block);

/// Gradient of consolidation_penalty; zero on frozen entries.
Matrix consolidation_gradient(const WeightBlock& block);

/// One Adam update with the consolidation penalty folded into the gradient.
/// Frozen entries (and their moments) are left bit-identical.
void adam_step(WeightBlock& block, const Matrix& task_grads, const AdamConfig& cfg);

}  // namespace llnn
