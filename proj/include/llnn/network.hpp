#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "llnn/nncore.hpp"
#include "llnn/random.hpp"

namespace llnn {

/// Index of a task in order of arrival.
struct TaskId {
    std::size_t index = 0;
    auto operator<=>(const TaskId&) const = default;
};

inline constexpr std::size_t kHiddenDepth = 2;

/// Hidden units recruited for one task. A task owns one main column plus any
/// expansion columns added later by confusion reduction.
struct Column {
    TaskId task;
    std::size_t units = 0;
    bool expansion = false;
    /// [0]: raw input -> layer 1, [1]: own layer 1 -> layer 2. Both with bias.
    std::array<WeightBlock, kHiddenDepth> intra_blocks;

    std::array<std::size_t, kHiddenDepth> layer_sizes() const { return {units, units}; }
};

enum class LinkDirection { Forward, Backward };

/// Weights from a hidden layer of one column into either layer 2 of a later
/// column or into a head. Disabled groups take no part in forward passes.
struct LinkGroup {
    enum class Dest { ColumnLayer2, Head };

    std::size_t source_column = 0;
    std::size_t source_layer = 0;  // 0 = layer 1, 1 = last hidden
    Dest dest = Dest::Head;
    std::size_t dest_index = 0;  // column index or task index, per `dest`
    LinkDirection direction = LinkDirection::Forward;
    bool enabled = true;
    WeightBlock block;  // no bias
};

/// Sigmoid output unit of one task. `block` covers the task's own main column
/// (plus bias); transfer segments live in LinkGroups with Dest::Head.
struct Head {
    TaskId task;
    std::size_t column = 0;
    WeightBlock block;
};

struct TransferDecision {
    std::set<std::size_t> enabled_sources;  // task indices
    std::optional<std::size_t> copy_source;
};

/// Which blocks set_consolidation touches.
struct Selector {
    enum class Kind { Column, Head, TransferInto, TransferOutOf, All };
    Kind kind = Kind::All;
    TaskId task;

    static Selector column(TaskId t) { return {Kind::Column, t}; }
    /// Head block plus every link group ending in that head.
    static Selector head(TaskId t) { return {Kind::Head, t}; }
    /// Link groups whose destination belongs to the task (its columns or head).
    static Selector transfer_into(TaskId t) { return {Kind::TransferInto, t}; }
    /// Link groups whose source column belongs to the task.
    static Selector transfer_out_of(TaskId t) { return {Kind::TransferOutOf, t}; }
    static Selector all() { return {Kind::All, TaskId{}}; }
};

/// Stable address of one WeightBlock inside a network.
struct BlockRef {
    enum class Kind { ColumnInput, ColumnHidden, Link, Head };
    Kind kind = Kind::Head;
    std::size_t index = 0;
    auto operator<=>(const BlockRef&) const = default;
};

/// Activations of one batched forward pass (inputs as columns). Entries for
/// columns outside the evaluated reach are empty matrices.
struct ForwardCache {
    std::vector<Matrix> layer1;
    std::vector<Matrix> layer2;
    Matrix logits;  // one row per task
};

/// Columnar network: per-task hidden columns of depth 2, transfer link
/// groups between them, and one sigmoid head per task.
class LifelongNetwork {
public:
    LifelongNetwork(std::size_t input_dim, std::uint64_t seed);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t num_tasks() const { return heads_.size(); }

    const std::vector<Column>& columns() const { return columns_; }
    const std::vector<LinkGroup>& link_groups() const { return links_; }
    const std::vector<Head>& heads() const { return heads_; }
    std::vector<LinkGroup>& link_groups() { return links_; }
    const Head& head(TaskId t) const;
    Head& head(TaskId t);
    /// Main column of a task.
    const Column& column(TaskId t) const;

    Rng& rng() { return rng_; }

    WeightBlock& block(const BlockRef& ref);
    const WeightBlock& block(const BlockRef& ref) const;
    std::vector<BlockRef> all_blocks() const;
    void for_each_block(const std::function<void(const BlockRef&, WeightBlock&)>& fn);

    /// Appends a column with `n_units` per hidden layer and a head, wired per
    /// `decision`. Returns the new task id.
    TaskId add_task(std::size_t n_units, const TransferDecision& decision);

    /// Link from `from`'s last hidden layer into `to`'s head (from > to).
    std::size_t add_backward_links(TaskId from, TaskId to);

    /// Adds an expansion column owned by `owner`: layer 1 from the raw input,
    /// layer 2 from its own layer 1 and the owner's main layer 1, last hidden
    /// feeding every head in `feeds`. Returns the refs of all new blocks.
    std::vector<BlockRef> add_expansion(TaskId owner, std::size_t n_units, const std::vector<TaskId>& feeds);

    void set_consolidation(const Selector& selector, double value);
    std::vector<BlockRef> select(const Selector& selector) const;

    /// Head probabilities for one input, one entry per task.
    std::vector<double> forward_all(const Vector& x) const;

    /// Head probabilities for a batch (inputs as columns); row t = task t.
    /// When `only` is given, rows of other tasks are left at zero and their
    /// exclusive columns are not evaluated.
    Matrix forward_batch(const Matrix& inputs, const std::vector<TaskId>* only = nullptr) const;

    ForwardCache forward_pass(const Matrix& inputs, const std::vector<TaskId>& tasks) const;

    /// Columns whose layer-1 / layer-2 activations heads in `tasks` depend on.
    struct Reach {
        std::vector<bool> layer1;
        std::vector<bool> layer2;
    };
    Reach reachable(const std::vector<TaskId>& tasks) const;

    /// Enabled link groups ending in the given head, in creation order.
    std::vector<std::size_t> head_links(TaskId t) const;
    /// Enabled link groups ending in layer 2 of column `c`, in creation order.
    std::vector<std::size_t> column_links(std::size_t c) const;

    void check_task(TaskId t, const char* what) const;

private:
    void init_uniform(WeightBlock& block, double scale);

    std::size_t input_dim_;
    Rng rng_;
    std::vector<Column> columns_;
    std::vector<LinkGroup> links_;
    std::vector<Head> heads_;
};

/// Glorot-uniform half-width for a consumer with the given fan-in/out.
double glorot_scale(std::size_t fan_in, std::size_t fan_out);

}  // namespace llnn
