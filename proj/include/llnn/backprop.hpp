#pragma once

#include <map>
#include <vector>

#include "llnn/network.hpp"

namespace llnn {

/// Binary labels for one head over a batch.
struct HeadLabels {
    TaskId task;
    Vector labels;
};

enum class GradientScope {
    /// Gradient of every block (zero for blocks no active head reaches).
    Exact,
    /// Skip work for blocks without trainable entries; they are absent from
    /// `Gradients::blocks`. Used by the training loop.
    TrainableOnly,
};

struct Gradients {
    std::map<BlockRef, Matrix> blocks;
    /// Mean over the batch of the summed per-head BCE.
    double loss = 0.0;

    const Matrix* find(const BlockRef& ref) const {
        auto it = blocks.find(ref);
        return it == blocks.end() ? nullptr : &it->second;
    }
};

/// Gradients of mean_batch sum_{h in heads} bce(p_h, y_h) w.r.t. every block.
/// `inputs` holds one sample per column.
Gradients backprop(const LifelongNetwork& net, const Matrix& inputs, const std::vector<HeadLabels>& heads,
                   GradientScope scope = GradientScope::Exact);

/// The loss backprop differentiates, evaluated directly.
double batch_loss(const LifelongNetwork& net, const Matrix& inputs, const std::vector<HeadLabels>& heads);

}  // namespace llnn
