#include "llnn/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace llnn {

WeightBlock::WeightBlock(Eigen::Index out_dim, Eigen::Index in_dim, bool has_bias)
    : has_bias_(has_bias) {
    if (out_dim < 0 || in_dim < 0) {
        throw DimensionError("WeightBlock: negative dimension");
    }
    const Eigen::Index cols = in_dim + (has_bias ? 1 : 0);
    values_ = Matrix::Zero(out_dim, cols);
    consolidation_ = Matrix::Zero(out_dim, cols);
    targets_ = Matrix::Zero(out_dim, cols);
    moment1_ = Matrix::Zero(out_dim, cols);
    moment2_ = Matrix::Zero(out_dim, cols);
}

void WeightBlock::set_consolidation(double value) {
    if (!(value >= 0.0)) {
        throw ContractError("consolidation must be >= 0 or frozen");
    }
    consolidation_.setConstant(value);
    if (!is_frozen(value)) {
        targets_ = values_;
    }
    frozen_count_ = is_frozen(value) ? size() : 0;
}

void WeightBlock::set_consolidation(Eigen::Index r, Eigen::Index c, double value) {
    if (!(value >= 0.0)) {
        throw ContractError("consolidation must be >= 0 or frozen");
    }
    const bool was_frozen = is_frozen(consolidation_(r, c));
    consolidation_(r, c) = value;
    if (!is_frozen(value)) {
        targets_(r, c) = values_(r, c);
    }
    frozen_count_ += static_cast<Eigen::Index>(is_frozen(value)) - static_cast<Eigen::Index>(was_frozen);
}

void WeightBlock::set_target(Eigen::Index r, Eigen::Index c, double value) { targets_(r, c) = value; }

void WeightBlock::reset_optimizer() {
    for (Eigen::Index c = 0; c < cols(); ++c) {
        for (Eigen::Index r = 0; r < rows(); ++r) {
            if (!is_frozen(consolidation_(r, c))) {
                moment1_(r, c) = 0.0;
                moment2_(r, c) = 0.0;
            }
        }
    }
    step_ = 0;
}

void AdamConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("adam.learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam.beta1 must be in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam.beta2 must be in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam.epsilon must be > 0");
}

Vector affine_forward(const Vector& x, const WeightBlock& block) {
    if (x.size() != block.input_dim()) {
        throw DimensionError("affine_forward: expected input of length " + std::to_string(block.input_dim()) +
                             ", got " + std::to_string(x.size()));
    }
    Vector z = block.weights() * x;
    if (block.has_bias()) {
        z += block.values().col(block.cols() - 1);
    }
    return z;
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Vector activate(const Vector& z, ActivationKind kind) {
    Matrix m = z;
    activate_inplace(m, kind);
    return m;
}

void activate_inplace(Matrix& z, ActivationKind kind) {
    switch (kind) {
        case ActivationKind::ReLU:
            z = z.cwiseMax(0.0);
            break;
        case ActivationKind::Sigmoid:
            z = z.unaryExpr([](double v) { return sigmoid(v); });
            break;
        case ActivationKind::Identity:
            break;
    }
}

double bce_loss(double p, double label) {
    const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return -(label * std::log(q) + (1.0 - label) * std::log(1.0 - q));
}

double consolidation_penalty(const WeightBlock& block) {
    const Matrix& b = block.consolidation();
    double total = 0.0;
    for (Eigen::Index c = 0; c < block.cols(); ++c) {
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            const double bi = b(r, c);
            if (is_frozen(bi) || bi == 0.0) continue;
            const double d = block.values()(r, c) - block.targets()(r, c);
            total += bi * d * d;
        }
    }
    return total;
}

Matrix consolidation_gradient(const WeightBlock& block) {
    Matrix g = Matrix::Zero(block.rows(), block.cols());
    const Matrix& b = block.consolidation();
    for (Eigen::Index c = 0; c < block.cols(); ++c) {
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            const double bi = b(r, c);
            if (is_frozen(bi) || bi == 0.0) continue;
            g(r, c) = 2.0 * bi * (block.values()(r, c) - block.targets()(r, c));
        }
    }
    return g;
}

void adam_step(WeightBlock& block, const Matrix& task_grads, const AdamConfig& cfg) {
    if (task_grads.rows() != block.rows() || task_grads.cols() != block.cols()) {
        throw DimensionError("adam_step: gradient is " + std::to_string(task_grads.rows()) + "x" +
                             std::to_string(task_grads.cols()) + ", block is " + std::to_string(block.rows()) +
                             "x" + std::to_string(block.cols()));
    }
    block.step_ += 1;
    if (block.all_frozen()) return;

    const double t = static_cast<double>(block.step_);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const Eigen::Index n = block.size();
    double* theta = block.values_.data();
    double* m = block.moment1_.data();
    double* v = block.moment2_.data();
    const double* b = block.consolidation_.data();
    const double* target = block.targets_.data();
    const double* g_task = task_grads.data();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double bi = b[i];
        if (is_frozen(bi)) continue;
        double g = g_task[i];
        if (bi != 0.0) g += 2.0 * bi * (theta[i] - target[i]);
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        theta[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

}  // namespace llnn
