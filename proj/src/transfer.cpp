#include "llnn/transfer.hpp"

#include "llnn/detail/overloaded.hpp"

#include <cmath>
#include <sstream>

namespace llnn {

namespace {

using detail::overloaded;

std::size_t argmax(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

std::size_t argmin(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] < v[best]) best = i;
    }
    return best;
}

std::set<std::size_t> above(const std::vector<double>& sims, double alpha) {
    std::set<std::size_t> out;
    for (std::size_t i = 0; i < sims.size(); ++i) {
        if (sims[i] > alpha) out.insert(i);
    }
    return out;
}

}  // namespace

double compute_similarity(const LifelongNetwork& net, TaskId prev, const Matrix& positives) {
    net.check_task(prev, "compute_similarity");
    if (positives.cols() == 0) throw ContractError("compute_similarity: no positive samples");
    const std::vector<TaskId> only{prev};
    const Matrix probs = net.forward_batch(positives, &only);
    return probs.row(static_cast<Eigen::Index>(prev.index)).mean();
}

std::vector<double> compute_similarities(const LifelongNetwork& net, const Matrix& positives) {
    if (net.num_tasks() == 0) return {};
    if (positives.cols() == 0) throw ContractError("compute_similarity: no positive samples");
    const Matrix probs = net.forward_batch(positives);
    std::vector<double> out(net.num_tasks());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = probs.row(static_cast<Eigen::Index>(t)).mean();
    return out;
}

std::size_t expansion_size(const ExpansionPolicy& policy, const std::vector<double>& sims) {
    for (double s : sims) {
        if (!(s >= 0.0 && s <= 1.0)) throw ContractError("expansion_size: similarity outside [0, 1]");
    }
    return std::visit(overloaded{
                          [](const expansion::Constant& p) { return p.units; },
                          [&](const expansion::SimilarityScaled& p) -> std::size_t {
                              if (sims.empty()) return p.max_units;
                              const double best = sims[argmax(sims)];
                              const double raw = static_cast<double>(p.max_units) * (1.0 - best);
                              return static_cast<std::size_t>(std::floor(raw + 0.5));
                          },
                      },
                      policy);
}

TransferDecision decide_transfer(const TransferStrategy& strategy, const std::vector<double>& sims, Rng& rng) {
    TransferDecision d;
    if (sims.empty()) return d;
    std::visit(overloaded{
                   [&](const strategy::AllRandomInit&) {
                       for (std::size_t i = 0; i < sims.size(); ++i) d.enabled_sources.insert(i);
                   },
                   [&](const strategy::OneSimilar& s) {
                       d.enabled_sources = above(sims, s.alpha);
                       const std::size_t best = argmax(sims);
                       if (sims[best] > s.alpha) d.copy_source = best;
                   },
                   [&](const strategy::OneRandom&) {
                       d.enabled_sources = above(sims, 0.5);
                       d.copy_source = static_cast<std::size_t>(uniform_index(rng, sims.size()));
                   },
                   [&](const strategy::OneWorst&) {
                       const std::size_t worst = argmin(sims);
                       d.enabled_sources = {worst};
                       d.copy_source = worst;
                   },
                   [&](const strategy::OneAlways&) {
                       d.enabled_sources = above(sims, 0.5);
                       d.copy_source = argmax(sims);
                   },
               },
               strategy);
    return d;
}

std::string strategy_name(const TransferStrategy& strategy) {
    return std::visit(overloaded{
                          [](const strategy::AllRandomInit&) -> std::string { return "AllRandomInit"; },
                          [](const strategy::OneSimilar& s) -> std::string {
                              if (s.alpha == 0.5) return "OneSimilar";
                              std::ostringstream os;
                              os << "OneSimilar(" << s.alpha << ")";
                              return os.str();
                          },
                          [](const strategy::OneRandom&) -> std::string { return "OneRandom"; },
                          [](const strategy::OneWorst&) -> std::string { return "OneWorst"; },
                          [](const strategy::OneAlways&) -> std::string { return "OneAlways"; },
                      },
                      strategy);
}

TransferStrategy parse_strategy(const std::string& text) {
    if (text == "AllRandomInit") return strategy::AllRandomInit{};
    if (text == "OneSimilar") return strategy::OneSimilar{};
    if (text == "OneRandom") return strategy::OneRandom{};
    if (text == "OneWorst") return strategy::OneWorst{};
    if (text == "OneAlways") return strategy::OneAlways{};
    const std::string prefix = "OneSimilar(";
    if (text.rfind(prefix, 0) == 0 && text.back() == ')') {
        const std::string num = text.substr(prefix.size(), text.size() - prefix.size() - 1);
        std::size_t used = 0;
        double alpha = 0.0;
        try {
            alpha = std::stod(num, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != num.size() || !(alpha >= 0.0 && alpha <= 1.0)) {
            throw ConfigError("strategy: bad OneSimilar threshold '" + num + "'");
        }
        return strategy::OneSimilar{alpha};
    }
    throw ConfigError("strategy: unknown transfer strategy '" + text + "'");
}

std::string policy_name(const ExpansionPolicy& policy) {
    return std::visit(overloaded{
                          [](const expansion::Constant& p) { return "Constant(" + std::to_string(p.units) + ")"; },
                          [](const expansion::SimilarityScaled& p) {
                              return "SimilarityScaled(" + std::to_string(p.max_units) + ")";
                          },
                      },
                      policy);
}

}  // namespace llnn
