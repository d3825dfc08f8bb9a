#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "llnn/backprop.hpp"
#include "llnn/data.hpp"
#include "llnn/network.hpp"
#include "llnn/transfer.hpp"

namespace llnn {

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    AdamConfig adam;
    std::uint64_t shuffle_seed = 0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    std::string phase;
    std::map<std::size_t, double> per_task_auc;  // keyed by task index
    double loss = 0.0;                           // mean training loss over the epoch
};

/// Called after every epoch (and for epoch 0 where a procedure records a
/// pre-training state); typically fills `per_task_auc`.
using EpochHook = std::function<void(const LifelongNetwork&, EpochRecord&)>;

/// Samples (as columns) with one label vector per trained head.
struct TrainingSet {
    Matrix inputs;
    std::map<std::size_t, Vector> labels;  // task index -> labels

    std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};

/// Positives labelled 1 and negatives 0 for a single head.
TrainingSet task_training_set(const TaskDataset& data, TaskId task);

/// Mini-batch Adam on sum of active heads' BCE plus the consolidation
/// penalty. The optimizer state is reset at the start of each call.
std::vector<EpochRecord> train(LifelongNetwork& net, const std::set<std::size_t>& active_tasks,
                               const TrainingSet& data, const TrainConfig& cfg, const std::string& phase = "train",
                               const EpochHook& hook = {});

struct LearnOptions {
    bool freeze_previous = true;
    std::string phase = "learn";
};

struct LearnResult {
    TaskId task;
    std::vector<double> similarities;
    std::size_t units = 0;
    TransferDecision decision;
    std::vector<EpochRecord> records;
};

/// Similarity-driven expansion and transfer, freezing of earlier tasks, then
/// training of the new head on its own data only.
LearnResult learn_new_task(LifelongNetwork& net, const TaskDataset& task_data, const TransferStrategy& strategy,
                           const ExpansionPolicy& policy, const TrainConfig& cfg, const LearnOptions& options = {},
                           const EpochHook& hook = {});

/// Fraction of positives of either task routed to the other by single-head
/// prediction over all heads.
double measure_confusion(const LifelongNetwork& net, TaskId i, TaskId j, const Matrix& pos_i, const Matrix& pos_j);

struct ConfusionReport {
    double initial = 0.0;
    double post_stage1 = 0.0;
    double post_stage2 = 0.0;
    bool stage1_ran = false;
    bool stage2_ran = false;
};

/// Two-stage confusion reduction between an older task `i` and newer `j`.
ConfusionReport reduce_confusion(LifelongNetwork& net, TaskId i, TaskId j, double gamma, std::size_t expansion_amount,
                                 const TaskDataset& data_i, const TaskDataset& data_j, const TrainConfig& cfg,
                                 const EpochHook& hook = {});

/// Sets consolidation to 0 on the columns, heads and outgoing transfer links
/// of the given tasks.
void graceful_forget(LifelongNetwork& net, const std::set<std::size_t>& forget);

struct BackwardOptions {
    bool add_links = true;
    std::string phase = "backward";
};

/// Optionally links `newer`'s last hidden layer into `older`'s head, then
/// fine-tunes only that head on `older_data`. Returns records for epochs
/// 0..E, epoch 0 being the state right after link initialization.
std::vector<EpochRecord> backward_transfer(LifelongNetwork& net, TaskId older, TaskId newer,
                                           const TaskDataset& older_data, const TrainConfig& cfg,
                                           const BackwardOptions& options = {}, const EpochHook& hook = {});

/// Unfreezes everything and trains all heads jointly on the pooled data.
std::vector<EpochRecord> refine_all(LifelongNetwork& net, const std::map<std::size_t, const TaskDataset*>& all_data,
                                    const TrainConfig& cfg, const EpochHook& hook = {});

}  // namespace llnn
