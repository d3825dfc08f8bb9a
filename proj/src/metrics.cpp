#include "llnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <tuple>

#include "llnn/errors.hpp"

namespace llnn {

double auc(std::span<const double> positive_scores, std::span<const double> negative_scores) {
    if (positive_scores.empty() || negative_scores.empty()) {
        throw ContractError("auc: need at least one positive and one negative sample");
    }
    std::vector<double> neg(negative_scores.begin(), negative_scores.end());
    std::sort(neg.begin(), neg.end());
    // Integer pair counts keep the result identical to brute-force counting.
    std::uint64_t greater = 0, ties = 0;
    for (double s : positive_scores) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), s);
        const auto hi = std::upper_bound(lo, neg.end(), s);
        greater += static_cast<std::uint64_t>(lo - neg.begin());
        ties += static_cast<std::uint64_t>(hi - lo);
    }
    const double pairs = static_cast<double>(positive_scores.size()) * static_cast<double>(negative_scores.size());
    return (static_cast<double>(greater) + 0.5 * static_cast<double>(ties)) / pairs;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw ContractError("auc: labels must be 0 or 1");
        (labels[i] == 1 ? pos : neg).push_back(scores[i]);
    }
    if (pos.empty() || neg.empty()) throw ContractError("auc: labels contain a single class");
    return auc(std::span<const double>(pos), std::span<const double>(neg));
}

TaskId argmax_task(std::span<const double> probs) {
    if (probs.empty()) throw ContractError("predict_task: network has no tasks");
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return TaskId{best};
}

TaskId predict_task(const LifelongNetwork& net, const Vector& x) {
    if (net.num_tasks() == 0) throw ContractError("predict_task: network has no tasks");
    const auto probs = net.forward_all(x);
    return argmax_task(probs);
}

std::string to_csv(const RunLog& log) {
    std::string out = kCsvHeader;
    out += '\n';
    char buf[64];
    for (const auto& r : log.rows) {
        std::snprintf(buf, sizeof(buf), "%.6f", r.value);
        out += std::to_string(log.seed) + ',' + r.phase + ',' + std::to_string(r.epoch) + ',' + r.task + ',' +
               r.metric + ',' + buf + '\n';
    }
    return out;
}

void export_csv(const RunLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("export_csv: cannot open " + path.string());
    const std::string text = to_csv(log);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("export_csv: write failed for " + path.string());
}

std::vector<SeriesPoint> aggregate(const std::vector<RunLog>& logs) {
    std::vector<const RunLog*> ordered;
    for (const auto& l : logs) ordered.push_back(&l);
    std::stable_sort(ordered.begin(), ordered.end(), [](const RunLog* a, const RunLog* b) { return a->seed < b->seed; });

    using Key = std::tuple<std::string, int, std::string, std::string>;
    std::map<Key, std::size_t> index;
    std::vector<SeriesPoint> series;
    std::vector<std::vector<double>> values;
    for (const RunLog* log : ordered) {
        for (const auto& r : log->rows) {
            Key k{r.phase, r.epoch, r.task, r.metric};
            auto [it, inserted] = index.emplace(k, series.size());
            if (inserted) {
                series.push_back({r.phase, r.epoch, r.task, r.metric, 0.0, 0.0, 0});
                values.emplace_back();
            }
            values[it->second].push_back(r.value);
        }
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& v = values[i];
        double sum = 0.0;
        for (double x : v) sum += x;
        const double mean = sum / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        series[i].mean = mean;
        series[i].stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        series[i].n = v.size();
    }
    return series;
}

nlohmann::json aggregate_json(const std::string& experiment, const std::vector<RunLog>& logs) {
    nlohmann::json j;
    j["experiment"] = experiment;
    j["n_seeds"] = logs.size();
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : aggregate(logs)) {
        arr.push_back({{"phase", p.phase},
                       {"epoch", p.epoch},
                       {"task", p.task},
                       {"metric", p.metric},
                       {"mean", p.mean},
                       {"stddev", p.stddev}});
    }
    j["series"] = std::move(arr);
    return j;
}

const SeriesPoint& find_point(const std::vector<SeriesPoint>& series, const std::string& phase, int epoch,
                              const std::string& task, const std::string& metric) {
    for (const auto& p : series) {
        if (p.phase == phase && p.epoch == epoch && p.task == task && p.metric == metric) return p;
    }
    throw ContractError("no series point for phase=" + phase + " epoch=" + std::to_string(epoch) + " task=" + task +
                        " metric=" + metric);
}

}  // namespace llnn
