#pragma once

#include <cstdint>
#include <limits>

#include <Eigen/Dense>

namespace llnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Consolidation value marking an entry as frozen (b = infinity).
inline constexpr double kFrozen = std::numeric_limits<double>::infinity();

struct AdamConfig;

inline bool is_frozen(double consolidation) { return consolidation == kFrozen; }

/// A weight matrix together with its per-entry consolidation strength, the
/// anchor values the consolidation pulls towards, and Adam moments.
///
/// Layout is row-per-output-unit. Blocks created with a bias carry it as the
/// last column, so `input_dim() == cols() - 1` for those blocks.
///
/// Frozen entries (consolidation == kFrozen) are never touched by
/// `adam_step`; a cached frozen-entry count lets callers skip whole blocks.
class WeightBlock {
public:
    WeightBlock() = default;
    WeightBlock(Eigen::Index out_dim, Eigen::Index in_dim, bool has_bias);

    Eigen::Index rows() const { return values_.rows(); }
    Eigen::Index cols() const { return values_.cols(); }
    Eigen::Index input_dim() const { return has_bias_ ? cols() - 1 : cols(); }
    Eigen::Index output_dim() const { return rows(); }
    bool has_bias() const { return has_bias_; }
    Eigen::Index size() const { return values_.size(); }

    const Matrix& values() const { return values_; }
    Matrix& values() { return values_; }
    const Matrix& consolidation() const { return consolidation_; }
    const Matrix& targets() const { return targets_; }
    const Matrix& moment1() const { return moment1_; }
    const Matrix& moment2() const { return moment2_; }
    std::uint64_t step() const { return step_; }

    /// Weight part without the bias column.
    auto weights() const { return values_.leftCols(input_dim()); }
    auto weights() { return values_.leftCols(input_dim()); }

    /// Sets every entry's consolidation. Finite values re-anchor the targets
    /// at the current weights.
    void set_consolidation(double value);
    void set_consolidation(Eigen::Index r, Eigen::Index c, double value);
    void set_target(Eigen::Index r, Eigen::Index c, double value);

    bool all_frozen() const { return frozen_count_ == size(); }
    bool any_trainable() const { return frozen_count_ < size(); }
    Eigen::Index frozen_count() const { return frozen_count_; }

    /// Zeroes the moments of trainable entries and the step counter.
    void reset_optimizer();

private:
    friend void adam_step(WeightBlock&, const Matrix&, const AdamConfig&);

    Matrix values_;
    Matrix consolidation_;
    Matrix targets_;
    Matrix moment1_;
    Matrix moment2_;
    std::uint64_t step_ = 0;
    Eigen::Index frozen_count_ = 0;
    bool has_bias_ = false;
};

}  // namespace llnn
