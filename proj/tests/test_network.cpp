#include <doctest.h>

#include <cstring>

#include "llnn/backprop.hpp"
#include "llnn/errors.hpp"
#include "llnn/network.hpp"

using namespace llnn;

namespace {

Matrix random_inputs(std::size_t dim, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform01(rng);
    return x;
}

bool rows_bit_equal(const Matrix& a, Eigen::Index ra, const Matrix& b, Eigen::Index rb) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double x = a(ra, c), y = b(rb, c);
        if (std::memcmp(&x, &y, sizeof(double)) != 0) return false;
    }
    return true;
}

TransferDecision all_sources(std::size_t n) {
    TransferDecision d;
    for (std::size_t i = 0; i < n; ++i) d.enabled_sources.insert(i);
    return d;
}

}  // namespace

TEST_CASE("new network is empty") {
    LifelongNetwork net(784, 7);
    CHECK(net.num_tasks() == 0);
    CHECK(net.input_dim() == 784);
    CHECK(net.forward_all(Vector::Zero(784)).empty());
    CHECK_THROWS_AS(LifelongNetwork(0, 1), ContractError);
}

TEST_CASE("equal seeds give equal draws") {
    LifelongNetwork a(10, 42), b(10, 42);
    a.add_task(3, {});
    b.add_task(3, {});
    CHECK(a.column(TaskId{0}).intra_blocks[0].values() == b.column(TaskId{0}).intra_blocks[0].values());
    CHECK(a.rng()() == b.rng()());
}

TEST_CASE("first task structure") {
    LifelongNetwork net(784, 1);
    const TaskId t = net.add_task(25, {});
    CHECK(t.index == 0);
    const Column& c = net.column(t);
    CHECK(c.layer_sizes()[0] == 25);
    CHECK(c.layer_sizes()[1] == 25);
    CHECK(c.intra_blocks[0].rows() == 25);
    CHECK(c.intra_blocks[0].cols() == 785);
    CHECK(c.intra_blocks[1].cols() == 26);
    CHECK(net.head(t).block.cols() == 26);
    CHECK(net.link_groups().empty());
    // Glorot range and fresh state.
    const double s = glorot_scale(784, 25);
    CHECK(c.intra_blocks[0].values().cwiseAbs().maxCoeff() <= s);
    CHECK(c.intra_blocks[0].consolidation().isZero());
    CHECK(c.intra_blocks[0].targets() == c.intra_blocks[0].values());
    CHECK(c.intra_blocks[0].moment1().isZero());
}

TEST_CASE("second task with all sources gets one group per non-empty layer link") {
    LifelongNetwork net(20, 2);
    net.add_task(25, {});
    net.add_task(25, all_sources(1));
    REQUIRE(net.link_groups().size() == 2);
    const auto& l2 = net.link_groups()[0];
    CHECK(l2.source_layer == 0);
    CHECK(l2.dest == LinkGroup::Dest::ColumnLayer2);
    CHECK(l2.block.rows() == 25);
    CHECK(l2.block.cols() == 25);
    CHECK_FALSE(l2.block.has_bias());
    const auto& h = net.link_groups()[1];
    CHECK(h.source_layer == 1);
    CHECK(h.dest == LinkGroup::Dest::Head);
    CHECK(h.dest_index == 1);
    CHECK(h.block.cols() == 25);
    // Fan-in of the second column's layer 2 covers both segments.
    CHECK(l2.block.values().cwiseAbs().maxCoeff() <= glorot_scale(50, 25));
}

TEST_CASE("copy fidelity") {
    LifelongNetwork net(12, 3);
    net.add_task(4, {});
    net.add_task(5, all_sources(1));
    TransferDecision d;
    d.copy_source = 0;
    const TaskId t = net.add_task(0, d);
    const Matrix x = random_inputs(12, 50, 9);
    const Matrix p = net.forward_batch(x);
    CHECK(rows_bit_equal(p, 0, p, static_cast<Eigen::Index>(t.index)));
    CHECK(net.head(t).block.values()(0, 0) == net.head(TaskId{0}).block.values()(0, 4));

    // Copy from a task that itself has transfer segments: only its own segment
    // and bias are copied, so outputs generally differ.
    TransferDecision d1;
    d1.copy_source = 1;
    const TaskId u = net.add_task(0, d1);
    CHECK(net.head(u).block.values()(0, 0) == net.head(TaskId{1}).block.values()(0, 5));
}

TEST_CASE("all-zero network outputs one half") {
    LifelongNetwork net(8, 4);
    net.add_task(3, {});
    net.add_task(2, all_sources(1));
    net.for_each_block([](const BlockRef&, WeightBlock& b) { b.values().setZero(); });
    for (double p : net.forward_all(Vector::Ones(8))) CHECK(p == 0.5);
}

TEST_CASE("outputs lie in the open unit interval") {
    LifelongNetwork net(8, 5);
    net.add_task(6, {});
    const Matrix p = net.forward_batch(random_inputs(8, 30, 1));
    CHECK(p.minCoeff() > 0.0);
    CHECK(p.maxCoeff() < 1.0);
    CHECK_THROWS_AS(net.forward_all(Vector::Ones(7)), DimensionError);
}

TEST_CASE("disabled link nullity") {
    LifelongNetwork net(10, 6);
    net.add_task(4, {});
    net.add_task(3, all_sources(1));
    net.add_task(3, all_sources(2));
    const Matrix x = random_inputs(10, 40, 2);
    for (std::size_t k = 0; k < net.link_groups().size(); ++k) {
        net.link_groups()[k].enabled = false;
        const Matrix before = net.forward_batch(x);
        net.link_groups()[k].block.values().setRandom();
        const Matrix after = net.forward_batch(x);
        for (Eigen::Index r = 0; r < before.rows(); ++r) CHECK(rows_bit_equal(before, r, after, r));
        net.link_groups()[k].enabled = true;
    }
}

TEST_CASE("backward links") {
    LifelongNetwork net(10, 7);
    net.add_task(4, {});
    net.add_task(4, {});
    const Matrix x = random_inputs(10, 25, 3);
    const Matrix before = net.forward_batch(x);
    const std::size_t k = net.add_backward_links(TaskId{1}, TaskId{0});
    const auto& g = net.link_groups()[k];
    CHECK(g.direction == LinkDirection::Backward);
    CHECK(g.dest == LinkGroup::Dest::Head);
    CHECK(g.dest_index == 0);
    CHECK(net.forward_batch(x) != before);
    net.link_groups()[k].block.values().setZero();
    CHECK(rows_bit_equal(before, 0, net.forward_batch(x), 0));

    CHECK_THROWS_AS(net.add_backward_links(TaskId{1}, TaskId{0}), ContractError);
    CHECK_THROWS_AS(net.add_backward_links(TaskId{0}, TaskId{0}), ContractError);
    CHECK_THROWS_AS(net.add_backward_links(TaskId{0}, TaskId{1}), ContractError);
    CHECK_THROWS_AS(net.add_backward_links(TaskId{5}, TaskId{0}), ContractError);
}

TEST_CASE("add_task preconditions") {
    LifelongNetwork net(10, 8);
    CHECK_THROWS_AS(net.add_task(0, {}), ContractError);
    net.add_task(2, {});
    CHECK_THROWS_AS(net.add_task(0, {}), ContractError);
    CHECK_THROWS_AS(net.add_task(2, all_sources(3)), ContractError);
    TransferDecision d;
    d.copy_source = 4;
    CHECK_THROWS_AS(net.add_task(2, d), ContractError);
}

TEST_CASE("selectors") {
    LifelongNetwork net(10, 9);
    net.add_task(3, {});
    net.add_task(3, all_sources(1));
    net.add_task(3, all_sources(2));
    // column(1): two intra blocks
    CHECK(net.select(Selector::column(TaskId{1})).size() == 2);
    // head(2): head block and one link from each earlier column
    CHECK(net.select(Selector::head(TaskId{2})).size() == 3);
    // into 2: two layer-2 links and two head links
    CHECK(net.select(Selector::transfer_into(TaskId{2})).size() == 4);
    // out of 0: column 1 L2 + head 1, column 2 L2 + head 2
    CHECK(net.select(Selector::transfer_out_of(TaskId{0})).size() == 4);
    CHECK(net.select(Selector::all()).size() == net.all_blocks().size());
    CHECK_THROWS_AS(net.select(Selector::column(TaskId{3})), ContractError);

    net.set_consolidation(Selector::all(), kFrozen);
    net.set_consolidation(Selector::column(TaskId{0}), 0.0);
    CHECK(net.column(TaskId{0}).intra_blocks[0].frozen_count() == 0);
    CHECK(net.column(TaskId{1}).intra_blocks[0].all_frozen());
}

TEST_CASE("expansion column") {
    LifelongNetwork net(10, 10);
    net.add_task(3, {});
    net.add_task(3, {});
    const Matrix x = random_inputs(10, 20, 4);
    const auto refs = net.add_expansion(TaskId{1}, 2, {TaskId{0}, TaskId{1}});
    // two intra blocks, a link from the main layer 1, two head links
    CHECK(refs.size() == 5);
    CHECK(net.columns().size() == 3);
    CHECK(net.columns()[2].expansion);
    CHECK(net.columns()[2].task == TaskId{1});
    CHECK(net.select(Selector::column(TaskId{1})).size() == 4);
    CHECK(net.forward_batch(x).rows() == 2);
}

TEST_CASE("backprop gradients match finite differences") {
    LifelongNetwork net(6, 21);
    net.add_task(4, {});
    net.add_task(3, all_sources(1));
    TransferDecision d = all_sources(2);
    d.copy_source = 0;
    net.add_task(2, d);
    net.add_backward_links(TaskId{2}, TaskId{1});
    net.add_expansion(TaskId{2}, 2, {TaskId{1}, TaskId{2}});

    const Matrix x = random_inputs(6, 9, 5);
    Rng rng(8);
    std::vector<HeadLabels> heads;
    for (std::size_t t = 0; t < 3; ++t) {
        Vector y(9);
        for (Eigen::Index i = 0; i < 9; ++i) y(i) = uniform01(rng) < 0.5 ? 0.0 : 1.0;
        heads.push_back({TaskId{t}, y});
    }
    const Gradients g = backprop(net, x, heads);
    CHECK(g.loss == doctest::Approx(batch_loss(net, x, heads)).epsilon(1e-14));

    const double h = 1e-4;
    double worst = 0.0;
    for (const BlockRef& ref : net.all_blocks()) {
        const Matrix* grad = g.find(ref);
        REQUIRE(grad != nullptr);
        WeightBlock& b = net.block(ref);
        for (Eigen::Index i = 0; i < b.size(); ++i) {
            double& w = b.values().data()[i];
            const double keep = w;
            w = keep + h;
            const double up = batch_loss(net, x, heads);
            w = keep - h;
            const double down = batch_loss(net, x, heads);
            w = keep;
            const double fd = (up - down) / (2 * h);
            const double an = grad->data()[i];
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("zero head gives bias gradient mean(0.5 - y)") {
    LifelongNetwork net(5, 22);
    net.add_task(3, {});
    net.head(TaskId{0}).block.values().setZero();
    const Matrix x = random_inputs(5, 4, 6);
    Vector y(4);
    y << 1, 0, 1, 1;
    const Gradients g = backprop(net, x, {{TaskId{0}, y}});
    const Matrix& gh = *g.find({BlockRef::Kind::Head, 0});
    CHECK(gh(0, 3) == doctest::Approx((0.5 - 1 + 0.5 + 0.5 - 1 + 0.5 - 1) / 4.0));
}

TEST_CASE("blocks feeding no active head get zero gradient") {
    LifelongNetwork net(5, 23);
    net.add_task(3, {});
    net.add_task(3, {});
    const Matrix x = random_inputs(5, 4, 7);
    const Gradients g = backprop(net, x, {{TaskId{1}, Vector::Ones(4)}});
    CHECK(g.find({BlockRef::Kind::ColumnInput, 0})->isZero());
    CHECK(g.find({BlockRef::Kind::Head, 0})->isZero());
    CHECK_FALSE(g.find({BlockRef::Kind::Head, 1})->isZero());
    CHECK_THROWS_AS(backprop(net, Matrix(5, 0), {{TaskId{1}, Vector(0)}}), ContractError);
    CHECK_THROWS_AS(backprop(net, x, {}), ContractError);
    CHECK_THROWS_AS(backprop(net, x, {{TaskId{1}, Vector::Ones(3)}}), DimensionError);
}

TEST_CASE("trainable-only scope omits frozen blocks") {
    LifelongNetwork net(5, 24);
    net.add_task(3, {});
    net.set_consolidation(Selector::all(), kFrozen);
    net.add_task(3, all_sources(1));
    const Matrix x = random_inputs(5, 4, 8);
    const Gradients g = backprop(net, x, {{TaskId{1}, Vector::Ones(4)}}, GradientScope::TrainableOnly);
    CHECK(g.find({BlockRef::Kind::ColumnInput, 0}) == nullptr);
    CHECK(g.find({BlockRef::Kind::Head, 1}) != nullptr);
    const Gradients e = backprop(net, x, {{TaskId{1}, Vector::Ones(4)}});
    CHECK(*g.find({BlockRef::Kind::Head, 1}) == *e.find({BlockRef::Kind::Head, 1}));
}
