#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "llnn/network.hpp"

namespace llnn {

namespace strategy {
/// Every previous task feeds the new column; nothing is copied.
struct AllRandomInit {};
/// Links from tasks with similarity > alpha; copy the head of the most
/// similar task when it clears alpha.
struct OneSimilar {
    double alpha = 0.5;
};
/// Links as OneSimilar(0.5); copy from a uniformly random previous task.
struct OneRandom {};
/// Links from and copy of the least similar task.
struct OneWorst {};
/// Links as OneSimilar(0.5); always copy from the most similar task.
struct OneAlways {};
}  // namespace strategy

using TransferStrategy = std::variant<strategy::AllRandomInit, strategy::OneSimilar, strategy::OneRandom,
                                      strategy::OneWorst, strategy::OneAlways>;

namespace expansion {
struct Constant {
    std::size_t units = 25;
};
/// round_half_up(max_units * (1 - max similarity)); max_units for the first task.
struct SimilarityScaled {
    std::size_t max_units = 25;
};
}  // namespace expansion

using ExpansionPolicy = std::variant<expansion::Constant, expansion::SimilarityScaled>;

/// Mean of head `prev`'s probabilities over `positives` (one sample per column).
double compute_similarity(const LifelongNetwork& net, TaskId prev, const Matrix& positives);

/// Similarities of every learned task to the given positives.
std::vector<double> compute_similarities(const LifelongNetwork& net, const Matrix& positives);

std::size_t expansion_size(const ExpansionPolicy& policy, const std::vector<double>& sims);

/// `sims[i]` is the similarity of previous task i. Ties go to the lowest index.
TransferDecision decide_transfer(const TransferStrategy& strategy, const std::vector<double>& sims, Rng& rng);

std::string strategy_name(const TransferStrategy& strategy);
/// Accepts AllRandomInit, OneSimilar, OneSimilar(0.7), OneRandom, OneWorst, OneAlways.
TransferStrategy parse_strategy(const std::string& text);

std::string policy_name(const ExpansionPolicy& policy);

}  // namespace llnn
