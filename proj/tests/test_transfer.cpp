#include <doctest.h>

#include "llnn/errors.hpp"
#include "llnn/transfer.hpp"

using namespace llnn;

TEST_CASE("similarity is the mean head probability") {
    LifelongNetwork net(3, 1);
    net.add_task(2, {});
    auto& head = net.head(TaskId{0}).block.values();
    head.setZero();
    const Matrix x = Matrix::Random(3, 5);
    CHECK(compute_similarity(net, TaskId{0}, x) == 0.5);

    // Bias-only head: outputs sigmoid(bias) on every sample.
    head(0, 2) = 1.3862943611198906;  // ln 4 -> 0.8
    CHECK(compute_similarity(net, TaskId{0}, x) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK_THROWS_AS(compute_similarity(net, TaskId{0}, Matrix(3, 0)), ContractError);
    CHECK_THROWS_AS(compute_similarity(net, TaskId{1}, x), ContractError);
    CHECK(compute_similarities(net, x).size() == 1);
}

TEST_CASE("expansion size") {
    const ExpansionPolicy scaled = expansion::SimilarityScaled{25};
    CHECK(expansion_size(scaled, {}) == 25);
    CHECK(expansion_size(scaled, {1.0}) == 0);
    CHECK(expansion_size(scaled, {0.4}) == 15);
    CHECK(expansion_size(scaled, {0.1, 0.4, 0.2}) == 15);
    CHECK(expansion_size(scaled, {0.0}) == 25);
    CHECK(expansion_size(scaled, {0.5}) == 13);  // 12.5 rounds up
    CHECK(expansion_size(expansion::Constant{7}, {0.9}) == 7);
    CHECK_THROWS_AS(expansion_size(scaled, {1.2}), ContractError);
    CHECK_THROWS_AS(expansion_size(scaled, {-0.1}), ContractError);

    std::size_t last = 25;
    for (int i = 0; i <= 100; ++i) {
        const std::size_t n = expansion_size(scaled, {i / 100.0});
        CHECK(n <= last);
        last = n;
    }
}

TEST_CASE("decide_transfer strategies") {
    Rng rng(1);
    auto d = decide_transfer(strategy::OneSimilar{0.5}, {0.9, 0.2}, rng);
    CHECK(d.enabled_sources == std::set<std::size_t>{0});
    CHECK(d.copy_source == 0);

    d = decide_transfer(strategy::OneSimilar{0.5}, {0.3, 0.2}, rng);
    CHECK(d.enabled_sources.empty());
    CHECK_FALSE(d.copy_source.has_value());

    d = decide_transfer(strategy::OneAlways{}, {0.1, 0.05}, rng);
    CHECK(d.enabled_sources.empty());
    CHECK(d.copy_source == 0);

    d = decide_transfer(strategy::OneWorst{}, {0.9, 0.2}, rng);
    CHECK(d.enabled_sources == std::set<std::size_t>{1});
    CHECK(d.copy_source == 1);

    d = decide_transfer(strategy::AllRandomInit{}, {0.9, 0.2, 0.4}, rng);
    CHECK(d.enabled_sources == std::set<std::size_t>{0, 1, 2});
    CHECK_FALSE(d.copy_source.has_value());

    d = decide_transfer(strategy::OneRandom{}, {0.9, 0.6, 0.1}, rng);
    CHECK(d.enabled_sources == std::set<std::size_t>{0, 1});
    REQUIRE(d.copy_source.has_value());
    CHECK(*d.copy_source < 3);

    d = decide_transfer(strategy::OneSimilar{0.5}, {0.7, 0.7}, rng);
    CHECK(d.copy_source == 0);
    d = decide_transfer(strategy::OneWorst{}, {0.1, 0.1}, rng);
    CHECK(d.copy_source == 0);

    d = decide_transfer(strategy::OneAlways{}, {}, rng);
    CHECK(d.enabled_sources.empty());
    CHECK_FALSE(d.copy_source.has_value());
}

TEST_CASE("decide_transfer is deterministic for a fixed rng state") {
    Rng a(99), b(99);
    for (int i = 0; i < 20; ++i) {
        const auto x = decide_transfer(strategy::OneRandom{}, {0.1, 0.2, 0.3, 0.4}, a);
        const auto y = decide_transfer(strategy::OneRandom{}, {0.1, 0.2, 0.3, 0.4}, b);
        CHECK(x.copy_source == y.copy_source);
    }
}

TEST_CASE("OneRandom covers every previous task") {
    Rng rng(4);
    std::set<std::size_t> seen;
    for (int i = 0; i < 200; ++i) seen.insert(*decide_transfer(strategy::OneRandom{}, {0, 0, 0}, rng).copy_source);
    CHECK(seen.size() == 3);
}

TEST_CASE("strategy names round-trip") {
    for (const char* name : {"AllRandomInit", "OneSimilar", "OneRandom", "OneWorst", "OneAlways", "OneSimilar(0.7)"}) {
        CHECK(strategy_name(parse_strategy(name)) == name);
    }
    CHECK(std::get<strategy::OneSimilar>(parse_strategy("OneSimilar(0.25)")).alpha == 0.25);
    CHECK_THROWS_AS(parse_strategy("OneBest"), ConfigError);
    CHECK_THROWS_AS(parse_strategy("OneSimilar(2)"), ConfigError);
    CHECK_THROWS_AS(parse_strategy("OneSimilar(x)"), ConfigError);
    CHECK(policy_name(expansion::Constant{25}) == "Constant(25)");
    CHECK(policy_name(expansion::SimilarityScaled{25}) == "SimilarityScaled(25)");
}
