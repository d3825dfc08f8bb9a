#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llnn/network.hpp"

namespace llnn {

/// Mann-Whitney AUC: mean over (positive, negative) pairs of
/// 1 / 0.5 / 0 for greater / equal / smaller positive score.
double auc(std::span<const double> scores, std::span<const int> labels);

/// AUC of positive scores against negative scores.
double auc(std::span<const double> positive_scores, std::span<const double> negative_scores);

/// Index of the largest probability, lowest index on ties.
TaskId argmax_task(std::span<const double> probs);

/// Single-head prediction over all learned tasks.
TaskId predict_task(const LifelongNetwork& net, const Vector& x);

/// One measurement. `task` is a task label, or "a/b" for pairwise metrics.
struct MetricRow {
    std::string phase;
    int epoch = 0;
    std::string task;
    std::string metric;  // auc | confusion | loss
    double value = 0.0;
};

struct RunLog {
    std::uint64_t seed = 0;
    std::vector<MetricRow> rows;

    void add(std::string phase, int epoch, std::string task, std::string metric, double value) {
        rows.push_back({std::move(phase), epoch, std::move(task), std::move(metric), value});
    }
};

inline constexpr const char* kCsvHeader = "seed,phase,epoch,task,metric,value";

/// CSV text with six fractional digits per value.
std::string to_csv(const RunLog& log);
void export_csv(const RunLog& log, const std::filesystem::path& path);

struct SeriesPoint {
    std::string phase;
    int epoch = 0;
    std::string task;
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

/// Mean and sample standard deviation over seeds of every
/// (phase, epoch, task, metric) key, in first-appearance order. Logs are
/// combined in ascending seed order so the result does not depend on the
/// order they are passed in.
std::vector<SeriesPoint> aggregate(const std::vector<RunLog>& logs);

nlohmann::json aggregate_json(const std::string& experiment, const std::vector<RunLog>& logs);

/// Looks up a series point; throws when absent.
const SeriesPoint& find_point(const std::vector<SeriesPoint>& series, const std::string& phase, int epoch,
                              const std::string& task, const std::string& metric);

}  // namespace llnn
