#include "llnn/backprop.hpp"

#include <string>

namespace llnn {

namespace {

std::vector<TaskId> head_tasks(const LifelongNetwork& net, const Matrix& inputs, const std::vector<HeadLabels>& heads) {
    if (inputs.cols() == 0) throw ContractError("backprop: empty batch");
    if (heads.empty()) throw ContractError("backprop: no active heads");
    std::vector<TaskId> tasks;
    for (const auto& h : heads) {
        net.check_task(h.task, "backprop");
        if (h.labels.size() != inputs.cols()) {
            throw DimensionError("backprop: head " + std::to_string(h.task.index) + " has " +
                                 std::to_string(h.labels.size()) + " labels for a batch of " +
                                 std::to_string(inputs.cols()));
        }
        tasks.push_back(h.task);
    }
    return tasks;
}

Matrix with_bias_grad(const Matrix& delta, const Matrix& activations) {
    Matrix g(delta.rows(), activations.rows() + 1);
    g.leftCols(activations.rows()).noalias() = delta * activations.transpose();
    g.col(activations.rows()) = delta.rowwise().sum();
    return g;
}

}  // namespace

double batch_loss(const LifelongNetwork& net, const Matrix& inputs, const std::vector<HeadLabels>& heads) {
    const auto tasks = head_tasks(net, inputs, heads);
    const ForwardCache cache = net.forward_pass(inputs, tasks);
    double total = 0.0;
    for (const auto& h : heads) {
        const auto r = static_cast<Eigen::Index>(h.task.index);
        for (Eigen::Index b = 0; b < inputs.cols(); ++b) total += bce_loss(sigmoid(cache.logits(r, b)), h.labels(b));
    }
    return total / static_cast<double>(inputs.cols());
}

Gradients backprop(const LifelongNetwork& net, const Matrix& inputs, const std::vector<HeadLabels>& heads,
                   GradientScope scope) {
    const auto tasks = head_tasks(net, inputs, heads);
    const ForwardCache cache = net.forward_pass(inputs, tasks);
    const auto reach = net.reachable(tasks);
    const auto& columns = net.columns();
    const auto& links = net.link_groups();
    const std::size_t n_cols = columns.size();
    const Eigen::Index batch = inputs.cols();
    const double inv_batch = 1.0 / static_cast<double>(batch);

    auto wants = [&](const WeightBlock& w) { return scope == GradientScope::Exact || w.any_trainable(); };

    // Which activations need an incoming delta.
    std::vector<bool> need_l1(n_cols, false), need_l2(n_cols, false);
    for (std::size_t c = 0; c < n_cols; ++c) need_l1[c] = reach.layer1[c] && wants(columns[c].intra_blocks[0]);
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (!reach.layer2[c]) continue;
        bool need = wants(columns[c].intra_blocks[1]) || need_l1[c];
        for (std::size_t l : net.column_links(c)) need = need || wants(links[l].block) || need_l1[links[l].source_column];
        need_l2[c] = need;
    }

    Gradients out;
    for (const auto& ref : net.all_blocks()) {
        const WeightBlock& w = net.block(ref);
        if (wants(w)) out.blocks.emplace(ref, Matrix::Zero(w.rows(), w.cols()));
    }

    std::vector<Matrix> d_l1(n_cols), d_l2(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (need_l1[c] || need_l2[c]) d_l1[c] = Matrix::Zero(static_cast<Eigen::Index>(columns[c].units), batch);
        if (need_l2[c]) d_l2[c] = Matrix::Zero(static_cast<Eigen::Index>(columns[c].units), batch);
    }
    auto delta_for = [&](std::size_t column, std::size_t layer) -> Matrix* {
        if (layer == 0) return need_l1[column] ? &d_l1[column] : nullptr;
        return need_l2[column] ? &d_l2[column] : nullptr;
    };
    auto activation = [&](std::size_t column, std::size_t layer) -> const Matrix& {
        return layer == 0 ? cache.layer1[column] : cache.layer2[column];
    };

    double loss = 0.0;
    for (const auto& h : heads) {
        const auto r = static_cast<Eigen::Index>(h.task.index);
        Eigen::RowVectorXd dz(batch);
        for (Eigen::Index b = 0; b < batch; ++b) {
            const double p = sigmoid(cache.logits(r, b));
            loss += bce_loss(p, h.labels(b));
            dz(b) = (p - h.labels(b)) * inv_batch;
        }
        const Head& head = net.heads()[h.task.index];
        const BlockRef head_ref{BlockRef::Kind::Head, h.task.index};
        if (auto it = out.blocks.find(head_ref); it != out.blocks.end()) {
            it->second += with_bias_grad(dz, cache.layer2[head.column]);
        }
        if (Matrix* d = delta_for(head.column, 1)) d->noalias() += head.block.weights().transpose() * dz;
        for (std::size_t l : net.head_links(h.task)) {
            const auto& g = links[l];
            const Matrix& src = activation(g.source_column, g.source_layer);
            if (auto it = out.blocks.find({BlockRef::Kind::Link, l}); it != out.blocks.end()) {
                it->second.noalias() += dz * src.transpose();
            }
            if (Matrix* d = delta_for(g.source_column, g.source_layer)) d->noalias() += g.block.values().transpose() * dz;
        }
    }
    out.loss = loss * inv_batch;

    for (std::size_t c = 0; c < n_cols; ++c) {
        if (!need_l2[c]) continue;
        const Matrix dz = d_l2[c].cwiseProduct((cache.layer2[c].array() > 0.0).cast<double>().matrix());
        const WeightBlock& w = columns[c].intra_blocks[1];
        if (auto it = out.blocks.find({BlockRef::Kind::ColumnHidden, c}); it != out.blocks.end()) {
            it->second += with_bias_grad(dz, cache.layer1[c]);
        }
        if (Matrix* d = delta_for(c, 0)) d->noalias() += w.weights().transpose() * dz;
        for (std::size_t l : net.column_links(c)) {
            const auto& g = links[l];
            if (auto it = out.blocks.find({BlockRef::Kind::Link, l}); it != out.blocks.end()) {
                it->second.noalias() += dz * cache.layer1[g.source_column].transpose();
            }
            if (Matrix* d = delta_for(g.source_column, 0)) d->noalias() += g.block.values().transpose() * dz;
        }
    }

    for (std::size_t c = 0; c < n_cols; ++c) {
        if (!need_l1[c]) continue;
        const Matrix dz = d_l1[c].cwiseProduct((cache.layer1[c].array() > 0.0).cast<double>().matrix());
        if (auto it = out.blocks.find({BlockRef::Kind::ColumnInput, c}); it != out.blocks.end()) {
            it->second += with_bias_grad(dz, inputs);
        }
    }
    return out;
}

}  // namespace llnn
