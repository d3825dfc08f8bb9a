#include "llnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace llnn {

namespace {

std::vector<TaskId> all_tasks(std::size_t n) {
    std::vector<TaskId> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = TaskId{i};
    return out;
}

}  // namespace

double glorot_scale(std::size_t fan_in, std::size_t fan_out) {
    const auto total = static_cast<double>(fan_in + fan_out);
    return total > 0.0 ? std::sqrt(6.0 / total) : 0.0;
}

LifelongNetwork::LifelongNetwork(std::size_t input_dim, std::uint64_t seed) : input_dim_(input_dim), rng_(seed) {
    if (input_dim == 0) {
        throw ContractError("new_network: input_dim must be positive");
    }
}

void LifelongNetwork::check_task(TaskId t, const char* what) const {
    if (t.index >= heads_.size()) {
        throw ContractError(std::string(what) + ": unknown task " + std::to_string(t.index) + " (network has " +
                            std::to_string(heads_.size()) + " tasks)");
    }
}

const Head& LifelongNetwork::head(TaskId t) const {
    check_task(t, "head");
    return heads_[t.index];
}

Head& LifelongNetwork::head(TaskId t) {
    check_task(t, "head");
    return heads_[t.index];
}

const Column& LifelongNetwork::column(TaskId t) const { return columns_[head(t).column]; }

WeightBlock& LifelongNetwork::block(const BlockRef& ref) {
    return const_cast<WeightBlock&>(std::as_const(*this).block(ref));
}

const WeightBlock& LifelongNetwork::block(const BlockRef& ref) const {
    switch (ref.kind) {
        case BlockRef::Kind::ColumnInput:
            return columns_.at(ref.index).intra_blocks[0];
        case BlockRef::Kind::ColumnHidden:
            return columns_.at(ref.index).intra_blocks[1];
        case BlockRef::Kind::Link:
            return links_.at(ref.index).block;
        case BlockRef::Kind::Head:
            return heads_.at(ref.index).block;
    }
    throw ContractError("block: bad reference");
}

std::vector<BlockRef> LifelongNetwork::all_blocks() const {
    std::vector<BlockRef> out;
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        out.push_back({BlockRef::Kind::ColumnInput, c});
        out.push_back({BlockRef::Kind::ColumnHidden, c});
    }
    for (std::size_t l = 0; l < links_.size(); ++l) out.push_back({BlockRef::Kind::Link, l});
    for (std::size_t h = 0; h < heads_.size(); ++h) out.push_back({BlockRef::Kind::Head, h});
    return out;
}

void LifelongNetwork::for_each_block(const std::function<void(const BlockRef&, WeightBlock&)>& fn) {
    for (const auto& ref : all_blocks()) fn(ref, block(ref));
}

void LifelongNetwork::init_uniform(WeightBlock& block, double scale) {
    // Column-major fill order, fixed for reproducibility.
    Matrix& v = block.values();
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            v(r, c) = uniform(rng_, -scale, scale);
        }
    }
    block.set_consolidation(0.0);
}

TaskId LifelongNetwork::add_task(std::size_t n_units, const TransferDecision& decision) {
    const std::size_t task = heads_.size();
    for (std::size_t s : decision.enabled_sources) {
        if (s >= task) throw ContractError("add_task: transfer source " + std::to_string(s) + " is not a previous task");
    }
    if (decision.copy_source && *decision.copy_source >= task) {
        throw ContractError("add_task: copy source " + std::to_string(*decision.copy_source) +
                            " is not a previous task");
    }
    if (n_units == 0 && decision.enabled_sources.empty() && !decision.copy_source) {
        throw ContractError("add_task: a zero-unit column needs an enabled transfer source or a copy source");
    }

    // Source columns feeding the new task, in creation order.
    std::vector<std::size_t> sources;
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        if (decision.enabled_sources.count(columns_[c].task.index) && columns_[c].units > 0) sources.push_back(c);
    }
    std::vector<std::size_t> head_sources = sources;
    std::optional<std::size_t> copy_column;
    if (decision.copy_source) {
        copy_column = heads_[*decision.copy_source].column;
        if (!std::count(head_sources.begin(), head_sources.end(), *copy_column)) {
            head_sources.push_back(*copy_column);
            std::sort(head_sources.begin(), head_sources.end());
        }
    }

    const std::size_t col_index = columns_.size();
    Column col;
    col.task = TaskId{task};
    col.units = n_units;

    std::size_t layer2_fan_in = n_units;
    for (std::size_t c : sources) layer2_fan_in += columns_[c].units;
    std::size_t head_fan_in = n_units;
    for (std::size_t c : head_sources) head_fan_in += columns_[c].units;

    col.intra_blocks[0] = WeightBlock(static_cast<Eigen::Index>(n_units), static_cast<Eigen::Index>(input_dim_), true);
    init_uniform(col.intra_blocks[0], glorot_scale(input_dim_, n_units));
    col.intra_blocks[1] = WeightBlock(static_cast<Eigen::Index>(n_units), static_cast<Eigen::Index>(n_units), true);
    const double layer2_scale = glorot_scale(layer2_fan_in, n_units);
    init_uniform(col.intra_blocks[1], layer2_scale);
    columns_.push_back(std::move(col));

    if (n_units > 0) {
        for (std::size_t c : sources) {
            LinkGroup g;
            g.source_column = c;
            g.source_layer = 0;
            g.dest = LinkGroup::Dest::ColumnLayer2;
            g.dest_index = col_index;
            g.block = WeightBlock(static_cast<Eigen::Index>(n_units), static_cast<Eigen::Index>(columns_[c].units), false);
            init_uniform(g.block, layer2_scale);
            links_.push_back(std::move(g));
        }
    }

    Head h;
    h.task = TaskId{task};
    h.column = col_index;
    h.block = WeightBlock(1, static_cast<Eigen::Index>(n_units), true);
    const double head_scale = glorot_scale(head_fan_in, 1);
    init_uniform(h.block, head_scale);

    for (std::size_t c : head_sources) {
        LinkGroup g;
        g.source_column = c;
        g.source_layer = 1;
        g.dest = LinkGroup::Dest::Head;
        g.dest_index = task;
        g.block = WeightBlock(1, static_cast<Eigen::Index>(columns_[c].units), false);
        init_uniform(g.block, head_scale);
        if (copy_column && c == *copy_column) {
            const Head& src = heads_[*decision.copy_source];
            g.block.values() = src.block.weights();
            h.block.values()(0, h.block.cols() - 1) = src.block.values()(0, src.block.cols() - 1);
            g.block.set_consolidation(0.0);
            h.block.set_consolidation(0.0);
        }
        links_.push_back(std::move(g));
    }
    heads_.push_back(std::move(h));
    return TaskId{task};
}

std::size_t LifelongNetwork::add_backward_links(TaskId from, TaskId to) {
    check_task(from, "add_backward_links");
    check_task(to, "add_backward_links");
    if (from.index <= to.index) {
        throw ContractError("add_backward_links: source task must be newer than destination task");
    }
    const std::size_t src_col = heads_[from.index].column;
    for (const auto& g : links_) {
        if (g.dest == LinkGroup::Dest::Head && g.dest_index == to.index && g.source_column == src_col &&
            g.source_layer == 1) {
            throw ContractError("add_backward_links: link already present");
        }
    }
    if (columns_[src_col].units == 0) {
        throw ContractError("add_backward_links: source column has no units");
    }
    std::size_t fan_in = static_cast<std::size_t>(heads_[to.index].block.input_dim()) + columns_[src_col].units;
    for (std::size_t l : head_links(to)) fan_in += static_cast<std::size_t>(links_[l].block.input_dim());

    LinkGroup g;
    g.source_column = src_col;
    g.source_layer = 1;
    g.dest = LinkGroup::Dest::Head;
    g.dest_index = to.index;
    g.direction = LinkDirection::Backward;
    g.block = WeightBlock(1, static_cast<Eigen::Index>(columns_[src_col].units), false);
    init_uniform(g.block, glorot_scale(fan_in, 1));
    links_.push_back(std::move(g));
    return links_.size() - 1;
}

std::vector<BlockRef> LifelongNetwork::add_expansion(TaskId owner, std::size_t n_units,
                                                     const std::vector<TaskId>& feeds) {
    check_task(owner, "add_expansion");
    for (TaskId t : feeds) check_task(t, "add_expansion");
    std::vector<BlockRef> created;
    if (n_units == 0) return created;

    const std::size_t main_col = heads_[owner.index].column;
    const std::size_t col_index = columns_.size();
    const std::size_t main_units = columns_[main_col].units;

    Column col;
    col.task = owner;
    col.units = n_units;
    col.expansion = true;
    col.intra_blocks[0] = WeightBlock(static_cast<Eigen::Index>(n_units), static_cast<Eigen::Index>(input_dim_), true);
    init_uniform(col.intra_blocks[0], glorot_scale(input_dim_, n_units));
    col.intra_blocks[1] = WeightBlock(static_cast<Eigen::Index>(n_units), static_cast<Eigen::Index>(n_units), true);
    const double layer2_scale = glorot_scale(n_units + main_units, n_units);
    init_uniform(col.intra_blocks[1], layer2_scale);
    columns_.push_back(std::move(col));
    created.push_back({BlockRef::Kind::ColumnInput, col_index});
    created.push_back({BlockRef::Kind::ColumnHidden, col_index});

    if (main_units > 0) {
        LinkGroup g;
        g.source_column = main_col;
        g.source_layer = 0;
        g.dest = LinkGroup::Dest::ColumnLayer2;
        g.dest_index = col_index;
        g.block = WeightBlock(static_cast<Eigen::Index>(n_units), static_cast<Eigen::Index>(main_units), false);
        init_uniform(g.block, layer2_scale);
        links_.push_back(std::move(g));
        created.push_back({BlockRef::Kind::Link, links_.size() - 1});
    }

    for (TaskId t : feeds) {
        std::size_t fan_in = static_cast<std::size_t>(heads_[t.index].block.input_dim()) + n_units;
        for (std::size_t l : head_links(t)) fan_in += static_cast<std::size_t>(links_[l].block.input_dim());
        LinkGroup g;
        g.source_column = col_index;
        g.source_layer = 1;
        g.dest = LinkGroup::Dest::Head;
        g.dest_index = t.index;
        g.direction = t.index < owner.index ? LinkDirection::Backward : LinkDirection::Forward;
        g.block = WeightBlock(1, static_cast<Eigen::Index>(n_units), false);
        init_uniform(g.block, glorot_scale(fan_in, 1));
        links_.push_back(std::move(g));
        created.push_back({BlockRef::Kind::Link, links_.size() - 1});
    }
    return created;
}

std::vector<BlockRef> LifelongNetwork::select(const Selector& selector) const {
    if (selector.kind != Selector::Kind::All) check_task(selector.task, "set_consolidation");
    const std::size_t t = selector.task.index;
    std::vector<BlockRef> out;
    switch (selector.kind) {
        case Selector::Kind::All:
            return all_blocks();
        case Selector::Kind::Column:
            for (std::size_t c = 0; c < columns_.size(); ++c) {
                if (columns_[c].task.index == t) {
                    out.push_back({BlockRef::Kind::ColumnInput, c});
                    out.push_back({BlockRef::Kind::ColumnHidden, c});
                }
            }
            break;
        case Selector::Kind::Head:
            out.push_back({BlockRef::Kind::Head, t});
            for (std::size_t l = 0; l < links_.size(); ++l) {
                if (links_[l].dest == LinkGroup::Dest::Head && links_[l].dest_index == t) {
                    out.push_back({BlockRef::Kind::Link, l});
                }
            }
            break;
        case Selector::Kind::TransferInto:
            for (std::size_t l = 0; l < links_.size(); ++l) {
                const auto& g = links_[l];
                const std::size_t dest_task =
                    g.dest == LinkGroup::Dest::Head ? g.dest_index : columns_[g.dest_index].task.index;
                if (dest_task == t) out.push_back({BlockRef::Kind::Link, l});
            }
            break;
        case Selector::Kind::TransferOutOf:
            for (std::size_t l = 0; l < links_.size(); ++l) {
                if (columns_[links_[l].source_column].task.index == t) out.push_back({BlockRef::Kind::Link, l});
            }
            break;
    }
    return out;
}

void LifelongNetwork::set_consolidation(const Selector& selector, double value) {
    for (const auto& ref : select(selector)) block(ref).set_consolidation(value);
}

std::vector<std::size_t> LifelongNetwork::head_links(TaskId t) const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < links_.size(); ++l) {
        const auto& g = links_[l];
        if (g.enabled && g.dest == LinkGroup::Dest::Head && g.dest_index == t.index) out.push_back(l);
    }
    return out;
}

std::vector<std::size_t> LifelongNetwork::column_links(std::size_t c) const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < links_.size(); ++l) {
        const auto& g = links_[l];
        if (g.enabled && g.dest == LinkGroup::Dest::ColumnLayer2 && g.dest_index == c) out.push_back(l);
    }
    return out;
}

LifelongNetwork::Reach LifelongNetwork::reachable(const std::vector<TaskId>& tasks) const {
    Reach reach;
    reach.layer1.assign(columns_.size(), false);
    reach.layer2.assign(columns_.size(), false);
    for (TaskId t : tasks) {
        check_task(t, "reachable");
        reach.layer2[heads_[t.index].column] = true;
        for (std::size_t l : head_links(t)) {
            const auto& g = links_[l];
            (g.source_layer == 0 ? reach.layer1 : reach.layer2)[g.source_column] = true;
        }
    }
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        if (!reach.layer2[c]) continue;
        reach.layer1[c] = true;
        for (std::size_t l : column_links(c)) reach.layer1[links_[l].source_column] = true;
    }
    return reach;
}

ForwardCache LifelongNetwork::forward_pass(const Matrix& inputs, const std::vector<TaskId>& tasks) const {
    if (static_cast<std::size_t>(inputs.rows()) != input_dim_) {
        throw DimensionError("forward: expected inputs of length " + std::to_string(input_dim_) + ", got " +
                             std::to_string(inputs.rows()));
    }
    const Eigen::Index batch = inputs.cols();
    const Reach reach = reachable(tasks);
    ForwardCache cache;
    cache.layer1.resize(columns_.size());
    cache.layer2.resize(columns_.size());

    for (std::size_t c = 0; c < columns_.size(); ++c) {
        if (!reach.layer1[c]) continue;
        const WeightBlock& w = columns_[c].intra_blocks[0];
        Matrix z = w.weights() * inputs;
        z.colwise() += w.values().col(w.cols() - 1);
        cache.layer1[c] = z.cwiseMax(0.0);
    }
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        if (!reach.layer2[c]) continue;
        const WeightBlock& w = columns_[c].intra_blocks[1];
        Matrix z = w.weights() * cache.layer1[c];
        for (std::size_t l : column_links(c)) {
            z.noalias() += links_[l].block.values() * cache.layer1[links_[l].source_column];
        }
        z.colwise() += w.values().col(w.cols() - 1);
        cache.layer2[c] = z.cwiseMax(0.0);
    }

    // Heads accumulate bias, own segment, then link segments in a fixed
    // scalar order so that copied heads reproduce their source bit for bit.
    cache.logits = Matrix::Zero(static_cast<Eigen::Index>(heads_.size()), batch);
    for (TaskId t : tasks) {
        const Head& h = heads_[t.index];
        const WeightBlock& w = h.block;
        const double bias = w.values()(0, w.cols() - 1);
        const Matrix& own = cache.layer2[h.column];
        const auto links = head_links(t);
        for (Eigen::Index b = 0; b < batch; ++b) {
            double z = bias;
            for (Eigen::Index k = 0; k < w.input_dim(); ++k) z += w.values()(0, k) * own(k, b);
            for (std::size_t l : links) {
                const auto& g = links_[l];
                const Matrix& src = g.source_layer == 0 ? cache.layer1[g.source_column] : cache.layer2[g.source_column];
                for (Eigen::Index k = 0; k < g.block.cols(); ++k) z += g.block.values()(0, k) * src(k, b);
            }
            cache.logits(static_cast<Eigen::Index>(t.index), b) = z;
        }
    }
    return cache;
}

Matrix LifelongNetwork::forward_batch(const Matrix& inputs, const std::vector<TaskId>* only) const {
    const std::vector<TaskId> tasks = only ? *only : all_tasks(heads_.size());
    ForwardCache cache = forward_pass(inputs, tasks);
    Matrix probs = Matrix::Zero(cache.logits.rows(), cache.logits.cols());
    for (TaskId t : tasks) {
        const auto r = static_cast<Eigen::Index>(t.index);
        for (Eigen::Index b = 0; b < probs.cols(); ++b) probs(r, b) = sigmoid(cache.logits(r, b));
    }
    return probs;
}

std::vector<double> LifelongNetwork::forward_all(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != input_dim_) {
        throw DimensionError("forward_all: expected input of length " + std::to_string(input_dim_) + ", got " +
                             std::to_string(x.size()));
    }
    const Matrix probs = forward_batch(x);
    std::vector<double> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) out[static_cast<std::size_t>(r)] = probs(r, 0);
    return out;
}

}  // namespace llnn
