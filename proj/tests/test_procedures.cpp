#include <doctest.h>

#include <cstring>

#include "llnn/errors.hpp"
#include "llnn/metrics.hpp"
#include "llnn/procedures.hpp"

using namespace llnn;

namespace {

const DataSource& source() {
    static const DataSource src = synthetic_source(60, 30, 4);
    return src;
}

TaskDataset task(char c, std::uint64_t seed = 1) {
    TaskSpec spec;
    spec.positive_char = c;
    spec.n_pos_train = 40;
    spec.n_neg_train_per_char = 20;
    return build_task(source(), spec, seed);
}

TrainConfig quick(std::size_t epochs = 3) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 32;
    return cfg;
}

double task_auc(const LifelongNetwork& net, TaskId t, const TaskDataset& d) {
    const std::vector<TaskId> only{t};
    const Matrix p = net.forward_batch(d.test_pos, &only);
    const Matrix n = net.forward_batch(d.test_neg, &only);
    const auto row = static_cast<Eigen::Index>(t.index);
    std::vector<double> ps(p.row(row).begin(), p.row(row).end());
    std::vector<double> ns(n.row(row).begin(), n.row(row).end());
    return auc(std::span<const double>(ps), std::span<const double>(ns));
}

std::vector<Matrix> snapshot(const LifelongNetwork& net) {
    std::vector<Matrix> out;
    for (const auto& ref : net.all_blocks()) out.push_back(net.block(ref).values());
    return out;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool all_frozen(const LifelongNetwork& net, const Selector& s) {
    for (const auto& ref : net.select(s)) {
        if (!net.block(ref).all_frozen()) return false;
    }
    return true;
}

bool all_zero(const LifelongNetwork& net, const Selector& s) {
    for (const auto& ref : net.select(s)) {
        if (net.block(ref).consolidation().cwiseAbs().maxCoeff() != 0.0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("train rejects bad input") {
    LifelongNetwork net(kImagePixels, 1);
    net.add_task(5, {});
    const TaskDataset d = task('0');
    const TrainingSet set = task_training_set(d, TaskId{0});
    CHECK(set.size() == 120);
    CHECK(set.labels.at(0).sum() == 40.0);

    TrainConfig zero = quick();
    zero.epochs = 0;
    CHECK_THROWS_AS(train(net, {0}, set, zero), ConfigError);
    zero = quick();
    zero.batch_size = 0;
    CHECK_THROWS_AS(train(net, {0}, set, zero), ConfigError);
    CHECK_THROWS_AS(train(net, {}, set, quick()), ContractError);
    CHECK_THROWS_AS(train(net, {1}, set, quick()), ContractError);
    TrainingSet short_labels = set;
    short_labels.labels[0] = Vector::Zero(3);
    CHECK_THROWS_AS(train(net, {0}, short_labels, quick()), DimensionError);
    TrainingSet empty;
    empty.inputs.resize(kImagePixels, 0);
    CHECK_THROWS_AS(train(net, {0}, empty, quick()), ContractError);
}

TEST_CASE("train lowers the loss and reports every epoch") {
    LifelongNetwork net(kImagePixels, 1);
    net.add_task(10, {});
    const TaskDataset d = task('0');
    int calls = 0;
    const auto records = train(net, {0}, task_training_set(d, TaskId{0}), quick(5), "fit",
                               [&](const LifelongNetwork&, EpochRecord& r) {
                                   ++calls;
                                   r.per_task_auc[0] = 1.0;
                               });
    REQUIRE(records.size() == 5);
    CHECK(calls == 5);
    CHECK(records.front().epoch == 1);
    CHECK(records.back().epoch == 5);
    CHECK(records.back().phase == "fit");
    CHECK(records.back().per_task_auc.at(0) == 1.0);
    CHECK(records.back().loss < records.front().loss);
}

TEST_CASE("training a fully frozen network changes nothing") {
    LifelongNetwork net(kImagePixels, 1);
    net.add_task(5, {});
    net.set_consolidation(Selector::all(), kFrozen);
    const auto before = snapshot(net);
    train(net, {0}, task_training_set(task('0'), TaskId{0}), quick(2));
    const auto after = snapshot(net);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(bit_equal(before[i], after[i]));
}

TEST_CASE("learn_new_task protects earlier tasks") {
    LifelongNetwork net(kImagePixels, 3);
    const TaskDataset d0 = task('0'), d1 = task('1');
    const auto r0 = learn_new_task(net, d0, strategy::AllRandomInit{}, expansion::Constant{10}, quick(10));
    CHECK(r0.task.index == 0);
    CHECK(r0.similarities.empty());
    CHECK(r0.units == 10);
    CHECK(task_auc(net, TaskId{0}, d0) > 0.9);

    const std::vector<TaskId> only{TaskId{0}};
    const Matrix before = net.forward_batch(d0.test_pos, &only).row(0);
    const auto r1 = learn_new_task(net, d1, strategy::AllRandomInit{}, expansion::SimilarityScaled{10}, quick(3));
    CHECK(r1.task.index == 1);
    CHECK(r1.similarities.size() == 1);
    CHECK(r1.decision.enabled_sources == std::set<std::size_t>{0});
    const Matrix after = net.forward_batch(d0.test_pos, &only).row(0);
    CHECK(bit_equal(before, after));
    CHECK(all_frozen(net, Selector::column(TaskId{0})));
    CHECK(all_frozen(net, Selector::head(TaskId{0})));
}

TEST_CASE("learn_new_task without freezing lets earlier weights move") {
    LifelongNetwork net(kImagePixels, 3);
    learn_new_task(net, task('0'), strategy::AllRandomInit{}, expansion::Constant{10}, quick(2));
    // Training data only touches the new head, but shared columns are open.
    net.set_consolidation(Selector::all(), 0.0);
    const Matrix col0 = net.column(TaskId{0}).intra_blocks[1].values();
    LearnOptions open;
    open.freeze_previous = false;
    learn_new_task(net, task('1'), strategy::AllRandomInit{}, expansion::Constant{10}, quick(2), open);
    CHECK_FALSE(bit_equal(col0, net.column(TaskId{0}).intra_blocks[1].values()));
}

TEST_CASE("learn_new_task errors") {
    LifelongNetwork net(kImagePixels, 3);
    TaskDataset d = task('0');
    d.train_neg.resize(kImagePixels, 0);
    CHECK_THROWS_AS(learn_new_task(net, d, strategy::AllRandomInit{}, expansion::Constant{5}, quick()), ContractError);
    CHECK(net.num_tasks() == 0);
}

TEST_CASE("measure_confusion") {
    LifelongNetwork net(kImagePixels, 2);
    net.add_task(4, {});
    net.add_task(4, {});
    for (std::size_t t = 0; t < 2; ++t) net.head(TaskId{t}).block.values().setZero();
    const TaskDataset a = task('0'), b = task('1');
    // Tied heads route everything to the lower index.
    CHECK(measure_confusion(net, TaskId{0}, TaskId{1}, a.test_pos, b.test_pos) == 0.5);
    CHECK(measure_confusion(net, TaskId{0}, TaskId{1}, a.test_pos, b.test_pos.leftCols(10)) == doctest::Approx(0.25));

    auto& h1 = net.head(TaskId{1}).block.values();
    h1(0, h1.cols() - 1) = 2.0;
    CHECK(measure_confusion(net, TaskId{0}, TaskId{1}, a.test_pos, b.test_pos) == 0.5);
    h1(0, h1.cols() - 1) = -2.0;
    CHECK(measure_confusion(net, TaskId{0}, TaskId{1}, a.test_pos, b.test_pos) == 0.5);

    CHECK_THROWS_AS(measure_confusion(net, TaskId{0}, TaskId{0}, a.test_pos, b.test_pos), ContractError);
    CHECK_THROWS_AS(measure_confusion(net, TaskId{0}, TaskId{2}, a.test_pos, b.test_pos), ContractError);
    CHECK_THROWS_AS(measure_confusion(net, TaskId{0}, TaskId{1}, Matrix(kImagePixels, 0), b.test_pos), ContractError);
}

TEST_CASE("reduce_confusion below the threshold leaves the network alone") {
    LifelongNetwork net(kImagePixels, 5);
    const TaskDataset a = task('0'), b = task('O');
    learn_new_task(net, a, strategy::AllRandomInit{}, expansion::Constant{8}, quick(2));
    learn_new_task(net, b, strategy::AllRandomInit{}, expansion::Constant{8}, quick(2));
    const auto before = snapshot(net);
    const std::size_t columns = net.columns().size();
    const auto report = reduce_confusion(net, TaskId{0}, TaskId{1}, 1.0, 5, a, b, quick(2));
    CHECK_FALSE(report.stage1_ran);
    CHECK_FALSE(report.stage2_ran);
    CHECK(report.post_stage2 == report.initial);
    CHECK(net.columns().size() == columns);
    const auto after = snapshot(net);
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(bit_equal(before[i], after[i]));
}

TEST_CASE("reduce_confusion runs both stages at gamma zero") {
    LifelongNetwork net(kImagePixels, 5);
    const TaskDataset a = task('0'), b = task('O');
    learn_new_task(net, a, strategy::AllRandomInit{}, expansion::Constant{8}, quick(2));
    learn_new_task(net, b, strategy::AllRandomInit{}, expansion::Constant{8}, quick(2));
    const std::size_t columns = net.columns().size();
    std::set<std::string> phases;
    const auto report = reduce_confusion(net, TaskId{0}, TaskId{1}, 0.0, 5, a, b, quick(2),
                                         [&](const LifelongNetwork&, EpochRecord& r) { phases.insert(r.phase); });
    CHECK(report.stage1_ran);
    CHECK(report.stage2_ran);
    CHECK(phases == std::set<std::string>{"confusion:stage1", "confusion:stage2"});
    CHECK(net.columns().size() == columns + 1);
    CHECK(net.columns().back().task.index == 1);
    CHECK(report.post_stage2 == measure_confusion(net, TaskId{0}, TaskId{1}, a.test_pos, b.test_pos));
    CHECK(all_frozen(net, Selector::head(TaskId{0})));
    CHECK(all_frozen(net, Selector::head(TaskId{1})));
    CHECK(all_frozen(net, Selector::column(TaskId{1})));
}

TEST_CASE("reduce_confusion preconditions") {
    LifelongNetwork net(kImagePixels, 5);
    const TaskDataset a = task('0'), b = task('1'), c = task('2');
    learn_new_task(net, a, strategy::AllRandomInit{}, expansion::Constant{4}, quick(1));
    learn_new_task(net, b, strategy::AllRandomInit{}, expansion::Constant{4}, quick(1));
    CHECK_THROWS_AS(reduce_confusion(net, TaskId{1}, TaskId{0}, 0.1, 5, b, a, quick(1)), ContractError);
    CHECK_THROWS_AS(reduce_confusion(net, TaskId{0}, TaskId{1}, 1.5, 5, a, b, quick(1)), ContractError);
    // Task 2 reads column 1, so column 1 may not be retrained.
    learn_new_task(net, c, strategy::AllRandomInit{}, expansion::Constant{4}, quick(1));
    CHECK_THROWS_AS(reduce_confusion(net, TaskId{0}, TaskId{1}, 0.0, 5, a, b, quick(1)), ContractError);
    CHECK_NOTHROW(reduce_confusion(net, TaskId{1}, TaskId{2}, 1.0, 5, b, c, quick(1)));
}

TEST_CASE("graceful_forget opens only the chosen tasks") {
    LifelongNetwork net(kImagePixels, 6);
    for (char ch : {'0', '1', '2'}) {
        learn_new_task(net, task(ch), strategy::AllRandomInit{}, expansion::Constant{4}, quick(1));
    }
    net.set_consolidation(Selector::all(), kFrozen);
    graceful_forget(net, {0});
    CHECK(all_zero(net, Selector::column(TaskId{0})));
    CHECK(all_zero(net, Selector::head(TaskId{0})));
    CHECK(all_zero(net, Selector::transfer_out_of(TaskId{0})));
    CHECK(all_frozen(net, Selector::column(TaskId{1})));
    CHECK(all_frozen(net, Selector::column(TaskId{2})));
    // Links from task 0 into head 2 are open; the head's own block is not.
    CHECK(net.head(TaskId{2}).block.all_frozen());

    net.set_consolidation(Selector::all(), kFrozen);
    graceful_forget(net, {0, 1, 2});
    CHECK(all_zero(net, Selector::all()));

    CHECK_THROWS_AS(graceful_forget(net, {}), ContractError);
    CHECK_THROWS_AS(graceful_forget(net, {3}), ContractError);
}

TEST_CASE("backward_transfer") {
    LifelongNetwork net(kImagePixels, 8);
    const TaskDataset a = task('0'), b = task('O');
    learn_new_task(net, a, strategy::AllRandomInit{}, expansion::Constant{6}, quick(2));
    learn_new_task(net, b, strategy::AllRandomInit{}, expansion::Constant{6}, quick(2));
    const std::size_t groups = net.link_groups().size();
    const Matrix col1 = net.column(TaskId{1}).intra_blocks[1].values();

    std::vector<int> epochs;
    BackwardOptions opt;
    opt.phase = "bw";
    const auto records = backward_transfer(net, TaskId{0}, TaskId{1}, a, quick(3), opt,
                                           [&](const LifelongNetwork&, EpochRecord& r) { epochs.push_back(r.epoch); });
    REQUIRE(records.size() == 4);
    CHECK(epochs == std::vector<int>{0, 1, 2, 3});
    CHECK(records[0].phase == "bw");
    CHECK(records[0].loss > 0.0);
    CHECK(net.link_groups().size() > groups);
    CHECK(net.head_links(TaskId{0}).size() == 1);
    CHECK(bit_equal(col1, net.column(TaskId{1}).intra_blocks[1].values()));
    CHECK(all_frozen(net, Selector::all()));

    opt.add_links = false;
    const std::size_t now = net.link_groups().size();
    CHECK(backward_transfer(net, TaskId{0}, TaskId{1}, a, quick(1), opt).size() == 2);
    CHECK(net.link_groups().size() == now);

    CHECK_THROWS_AS(backward_transfer(net, TaskId{1}, TaskId{0}, b, quick(1)), ContractError);
    CHECK_THROWS_AS(backward_transfer(net, TaskId{0}, TaskId{4}, a, quick(1)), ContractError);
}

TEST_CASE("refine_all") {
    LifelongNetwork net(kImagePixels, 9);
    CHECK_THROWS_AS(refine_all(net, {}, quick(1)), ContractError);
    const TaskDataset a = task('0'), b = task('1');
    learn_new_task(net, a, strategy::AllRandomInit{}, expansion::Constant{6}, quick(2));
    const auto single = refine_all(net, {{0, &a}}, quick(2));
    CHECK(single.size() == 2);
    CHECK(single.back().phase == "refine");
    CHECK(all_zero(net, Selector::all()));

    learn_new_task(net, b, strategy::AllRandomInit{}, expansion::Constant{6}, quick(2));
    CHECK_THROWS_AS(refine_all(net, {{0, &a}}, quick(1)), ContractError);
    CHECK_THROWS_AS(refine_all(net, {{0, &a}, {1, &b}, {5, &b}}, quick(1)), ContractError);
    const auto joint = refine_all(net, {{0, &a}, {1, &b}}, quick(6));
    CHECK(joint.back().loss < joint.front().loss * 1.5);
    CHECK(task_auc(net, TaskId{0}, a) > 0.8);
    CHECK(task_auc(net, TaskId{1}, b) > 0.8);
}
