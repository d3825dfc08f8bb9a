#include "llnn/procedures.hpp"

#include <algorithm>
#include <numeric>

namespace llnn {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    adam.validate();
}

TrainingSet task_training_set(const TaskDataset& data, TaskId task) {
    TrainingSet set;
    const Eigen::Index np = data.train_pos.cols(), nn = data.train_neg.cols();
    set.inputs.resize(data.train_pos.rows(), np + nn);
    set.inputs << data.train_pos, data.train_neg;
    Vector y = Vector::Zero(np + nn);
    y.head(np).setOnes();
    set.labels[task.index] = std::move(y);
    return set;
}

std::vector<EpochRecord> train(LifelongNetwork& net, const std::set<std::size_t>& active_tasks,
                               const TrainingSet& data, const TrainConfig& cfg, const std::string& phase,
                               const EpochHook& hook) {
    cfg.validate();
    if (active_tasks.empty()) throw ContractError("train: no active tasks");
    if (data.size() == 0) throw ContractError("train: empty data");
    for (std::size_t t : active_tasks) {
        net.check_task(TaskId{t}, "train");
        auto it = data.labels.find(t);
        if (it == data.labels.end()) throw ContractError("train: no labels for task " + std::to_string(t));
        if (static_cast<std::size_t>(it->second.size()) != data.size()) {
            throw DimensionError("train: label count for task " + std::to_string(t) + " does not match sample count");
        }
    }

    net.for_each_block([](const BlockRef&, WeightBlock& b) { b.reset_optimizer(); });

    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.shuffle_seed);

    std::vector<EpochRecord> records;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle(std::span<std::size_t>(order), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n - start);
            Matrix batch(data.inputs.rows(), static_cast<Eigen::Index>(len));
            std::vector<HeadLabels> heads;
            for (std::size_t t : active_tasks) heads.push_back({TaskId{t}, Vector(static_cast<Eigen::Index>(len))});
            for (std::size_t k = 0; k < len; ++k) {
                const auto src = static_cast<Eigen::Index>(order[start + k]);
                batch.col(static_cast<Eigen::Index>(k)) = data.inputs.col(src);
                for (auto& h : heads) h.labels(static_cast<Eigen::Index>(k)) = data.labels.at(h.task.index)(src);
            }
            const Gradients grads = backprop(net, batch, heads, GradientScope::TrainableOnly);
            for (const auto& [ref, g] : grads.blocks) adam_step(net.block(ref), g, cfg.adam);
            loss_sum += grads.loss * static_cast<double>(len);
        }
        EpochRecord rec;
        rec.epoch = static_cast<int>(epoch);
        rec.phase = phase;
        rec.loss = loss_sum / static_cast<double>(n);
        if (hook) hook(net, rec);
        records.push_back(std::move(rec));
    }
    return records;
}

LearnResult learn_new_task(LifelongNetwork& net, const TaskDataset& task_data, const TransferStrategy& strategy,
                           const ExpansionPolicy& policy, const TrainConfig& cfg, const LearnOptions& options,
                           const EpochHook& hook) {
    if (task_data.train_pos.cols() == 0 || task_data.train_neg.cols() == 0) {
        throw ContractError("learn_new_task: task needs training positives and negatives");
    }
    cfg.validate();
    LearnResult result;
    result.similarities = compute_similarities(net, task_data.train_pos);
    result.units = expansion_size(policy, result.similarities);
    result.decision = decide_transfer(strategy, result.similarities, net.rng());
    if (options.freeze_previous) net.set_consolidation(Selector::all(), kFrozen);
    result.task = net.add_task(result.units, result.decision);
    const TrainingSet set = task_training_set(task_data, result.task);
    result.records = train(net, {result.task.index}, set, cfg, options.phase, hook);
    return result;
}

double measure_confusion(const LifelongNetwork& net, TaskId i, TaskId j, const Matrix& pos_i, const Matrix& pos_j) {
    if (i == j) throw ContractError("measure_confusion: tasks must differ");
    net.check_task(i, "measure_confusion");
    net.check_task(j, "measure_confusion");
    if (pos_i.cols() == 0 || pos_j.cols() == 0) throw ContractError("measure_confusion: empty sample set");

    auto count_routed = [&](const Matrix& samples, TaskId to) {
        const Matrix probs = net.forward_batch(samples);
        std::size_t hits = 0;
        std::vector<double> column(static_cast<std::size_t>(probs.rows()));
        for (Eigen::Index b = 0; b < probs.cols(); ++b) {
            for (Eigen::Index r = 0; r < probs.rows(); ++r) column[static_cast<std::size_t>(r)] = probs(r, b);
            std::size_t best = 0;
            for (std::size_t k = 1; k < column.size(); ++k) {
                if (column[k] > column[best]) best = k;
            }
            hits += best == to.index ? 1 : 0;
        }
        return hits;
    };
    const std::size_t wrong = count_routed(pos_i, j) + count_routed(pos_j, i);
    return static_cast<double>(wrong) / static_cast<double>(pos_i.cols() + pos_j.cols());
}

namespace {

std::vector<Selector> confusion_selectors(TaskId i, TaskId j) {
    return {Selector::head(i), Selector::column(j), Selector::transfer_into(j), Selector::head(j)};
}

void apply(LifelongNetwork& net, const std::vector<Selector>& selectors, double value) {
    for (const auto& s : selectors) net.set_consolidation(s, value);
}

TrainingSet pair_training_set(const TaskDataset& a, TaskId ta, const TaskDataset& b, TaskId tb) {
    const Eigen::Index na = a.train_pos.cols(), nan = a.train_neg.cols();
    const Eigen::Index nb = b.train_pos.cols(), nbn = b.train_neg.cols();
    const Eigen::Index n = na + nan + nb + nbn;
    TrainingSet set;
    set.inputs.resize(a.train_pos.rows(), n);
    set.inputs << a.train_pos, a.train_neg, b.train_pos, b.train_neg;
    Vector ya = Vector::Zero(n), yb = Vector::Zero(n);
    ya.segment(0, na).setOnes();
    yb.segment(na + nan, nb).setOnes();
    set.labels[ta.index] = std::move(ya);
    set.labels[tb.index] = std::move(yb);
    return set;
}

}  // namespace

ConfusionReport reduce_confusion(LifelongNetwork& net, TaskId i, TaskId j, double gamma, std::size_t expansion_amount,
                                 const TaskDataset& data_i, const TaskDataset& data_j, const TrainConfig& cfg,
                                 const EpochHook& hook) {
    net.check_task(i, "reduce_confusion");
    net.check_task(j, "reduce_confusion");
    if (!(i.index < j.index)) throw ContractError("reduce_confusion: first task must be the older one");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("reduce_confusion: gamma must be in [0, 1]");
    cfg.validate();
    // Other tasks reading column j would see it change.
    for (const auto& g : net.link_groups()) {
        if (net.columns()[g.source_column].task != j) continue;
        const std::size_t dest_task =
            g.dest == LinkGroup::Dest::Head ? g.dest_index : net.columns()[g.dest_index].task.index;
        if (dest_task != i.index && dest_task != j.index) {
            throw ContractError("reduce_confusion: task " + std::to_string(dest_task) + " depends on column " +
                                std::to_string(j.index));
        }
    }

    ConfusionReport report;
    report.initial = measure_confusion(net, i, j, data_i.test_pos, data_j.test_pos);
    report.post_stage1 = report.initial;
    report.post_stage2 = report.initial;
    if (report.initial < gamma) return report;

    const TrainingSet set = pair_training_set(data_i, i, data_j, j);
    const std::set<std::size_t> active{i.index, j.index};
    const auto selectors = confusion_selectors(i, j);

    apply(net, selectors, 0.0);
    train(net, active, set, cfg, "confusion:stage1", hook);
    apply(net, selectors, kFrozen);
    report.stage1_ran = true;
    report.post_stage1 = measure_confusion(net, i, j, data_i.test_pos, data_j.test_pos);
    report.post_stage2 = report.post_stage1;
    if (report.post_stage1 < gamma) return report;

    // New blocks start trainable; everything else tunable is re-opened.
    net.add_expansion(j, expansion_amount, {i, j});
    apply(net, selectors, 0.0);
    train(net, active, set, cfg, "confusion:stage2", hook);
    apply(net, selectors, kFrozen);
    report.stage2_ran = true;
    report.post_stage2 = measure_confusion(net, i, j, data_i.test_pos, data_j.test_pos);
    return report;
}

void graceful_forget(LifelongNetwork& net, const std::set<std::size_t>& forget) {
    if (forget.empty()) throw ContractError("graceful_forget: empty task set");
    for (std::size_t t : forget) net.check_task(TaskId{t}, "graceful_forget");
    for (std::size_t t : forget) {
        net.set_consolidation(Selector::column(TaskId{t}), 0.0);
        net.set_consolidation(Selector::head(TaskId{t}), 0.0);
        net.set_consolidation(Selector::transfer_out_of(TaskId{t}), 0.0);
    }
}

std::vector<EpochRecord> backward_transfer(LifelongNetwork& net, TaskId older, TaskId newer,
                                           const TaskDataset& older_data, const TrainConfig& cfg,
                                           const BackwardOptions& options, const EpochHook& hook) {
    net.check_task(older, "backward_transfer");
    net.check_task(newer, "backward_transfer");
    if (!(newer.index > older.index)) throw ContractError("backward_transfer: newer task must come after older task");
    cfg.validate();

    net.set_consolidation(Selector::all(), kFrozen);
    if (options.add_links) net.add_backward_links(newer, older);
    net.set_consolidation(Selector::head(older), 0.0);

    const TrainingSet set = task_training_set(older_data, older);
    EpochRecord start;
    start.epoch = 0;
    start.phase = options.phase;
    start.loss = batch_loss(net, set.inputs, {{older, set.labels.at(older.index)}});
    if (hook) hook(net, start);

    std::vector<EpochRecord> records{std::move(start)};
    auto tuned = train(net, {older.index}, set, cfg, options.phase, hook);
    records.insert(records.end(), std::make_move_iterator(tuned.begin()), std::make_move_iterator(tuned.end()));
    net.set_consolidation(Selector::head(older), kFrozen);
    return records;
}

std::vector<EpochRecord> refine_all(LifelongNetwork& net, const std::map<std::size_t, const TaskDataset*>& all_data,
                                    const TrainConfig& cfg, const EpochHook& hook) {
    cfg.validate();
    if (net.num_tasks() == 0) throw ContractError("refine_all: no tasks learned");
    std::vector<char> positive(net.num_tasks());
    for (std::size_t t = 0; t < net.num_tasks(); ++t) {
        auto it = all_data.find(t);
        if (it == all_data.end() || it->second == nullptr) {
            throw ContractError("refine_all: missing data for task " + std::to_string(t));
        }
        positive[t] = it->second->spec.positive_char;
    }

    std::vector<const Matrix*> blocks;
    std::vector<char> chars;  // character of every pooled sample
    Eigen::Index total = 0;
    for (const auto& [t, ds] : all_data) {
        if (t >= net.num_tasks()) throw ContractError("refine_all: data for unknown task " + std::to_string(t));
        blocks.push_back(&ds->train_pos);
        blocks.push_back(&ds->train_neg);
        chars.insert(chars.end(), static_cast<std::size_t>(ds->train_pos.cols()), ds->spec.positive_char);
        for (char c : ds->spec.negative_chars) {
            chars.insert(chars.end(), ds->spec.n_neg_train_per_char, c);
        }
        total += ds->train_pos.cols() + ds->train_neg.cols();
    }
    TrainingSet set;
    set.inputs.resize(static_cast<Eigen::Index>(net.input_dim()), total);
    Eigen::Index at = 0;
    for (const Matrix* m : blocks) {
        set.inputs.middleCols(at, m->cols()) = *m;
        at += m->cols();
    }
    std::set<std::size_t> active;
    for (std::size_t t = 0; t < net.num_tasks(); ++t) {
        Vector y(total);
        for (Eigen::Index k = 0; k < total; ++k) y(k) = chars[static_cast<std::size_t>(k)] == positive[t] ? 1.0 : 0.0;
        set.labels[t] = std::move(y);
        active.insert(t);
    }
    net.set_consolidation(Selector::all(), 0.0);
    return train(net, active, set, cfg, "refine", hook);
}

}  // namespace llnn
